//! Core identifier pieces: object types, digests and the `(version, type, digest)` triple.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The only schema version understood by this crate.
pub const SCHEMA_VERSION: u32 = 1;

/// Kind of Merkle DAG node an identifier points to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectType {
    Content,
    Directory,
    Revision,
    Release,
    Snapshot,
}

impl ObjectType {
    pub const ALL: [ObjectType; 5] = [
        ObjectType::Content,
        ObjectType::Directory,
        ObjectType::Revision,
        ObjectType::Release,
        ObjectType::Snapshot,
    ];

    /// Three-letter tag used in the textual identifier.
    pub fn tag(self) -> &'static str {
        match self {
            ObjectType::Content => "cnt",
            ObjectType::Directory => "dir",
            ObjectType::Revision => "rev",
            ObjectType::Release => "rel",
            ObjectType::Snapshot => "snp",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.tag() == tag)
    }

    /// Long name, as used in snapshot manifests.
    pub fn name(self) -> &'static str {
        match self {
            ObjectType::Content => "content",
            ObjectType::Directory => "directory",
            ObjectType::Revision => "revision",
            ObjectType::Release => "release",
            ObjectType::Snapshot => "snapshot",
        }
    }

    /// Object type word used in git object framing and tag manifests.
    pub fn git_kind(self) -> &'static str {
        match self {
            ObjectType::Content => "blob",
            ObjectType::Directory => "tree",
            ObjectType::Revision => "commit",
            ObjectType::Release => "tag",
            ObjectType::Snapshot => "refs",
        }
    }
}

impl fmt::Display for ObjectType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// A 20-byte SHA-1 digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub [u8; 20]);

impl Digest {
    pub const LEN: usize = 20;

    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }

    /// Lowercase, 40 characters.
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Parses exactly 40 lowercase hex characters.
    pub fn from_hex(text: &str) -> Option<Self> {
        if text.len() != 40 || !text.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return None;
        }
        let mut out = [0u8; 20];
        hex::decode_to_slice(text, &mut out).ok()?;
        Some(Digest(out))
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        <[u8; 20]>::try_from(bytes).ok().map(Digest)
    }
}

impl From<[u8; 20]> for Digest {
    fn from(value: [u8; 20]) -> Self {
        Digest(value)
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({self})")
    }
}

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).ok_or_else(|| serde::de::Error::custom("expected 40 lowercase hex digits"))
    }
}

/// Qualifier-free identifier: `swh:1:<tag>:<hex>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CoreSwhid {
    version: u32,
    object_type: ObjectType,
    digest: Digest,
}

impl CoreSwhid {
    pub fn new(object_type: ObjectType, digest: Digest) -> Self {
        CoreSwhid { version: SCHEMA_VERSION, object_type, digest }
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn object_type(&self) -> ObjectType {
        self.object_type
    }

    pub fn digest(&self) -> Digest {
        self.digest
    }
}

impl fmt::Display for CoreSwhid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "swh:{}:{}:{}", self.version, self.object_type.tag(), self.digest)
    }
}

impl FromStr for CoreSwhid {
    type Err = crate::swhid::SwhidError;

    /// Accepts only the bare core form; qualifiers are rejected.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        crate::swhid::parse_core(s)
    }
}

impl Serialize for CoreSwhid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CoreSwhid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
