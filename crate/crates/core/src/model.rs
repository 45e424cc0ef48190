//! Merkle DAG node payloads and their git-compatible manifests.
//!
//! Every node kind is hashed as `SHA-1("<kind> <len>\0" ++ payload)`, where
//! the payload layout of blobs, trees, commits and tags is byte-identical to
//! git's, and snapshots use the same framing with the `snapshot` kind.

use std::fmt;

use sha1::{Digest as _, Sha1};
use thiserror::Error;

use crate::object::{CoreSwhid, Digest, ObjectType};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("duplicate directory entry name {0:?}")]
    DuplicateEntryName(String),
    #[error("duplicate snapshot branch name {0:?}")]
    DuplicateBranchName(String),
    #[error("invalid name {0:?}: {1}")]
    InvalidName(String, &'static str),
    #[error("invalid entry mode {0:o}")]
    InvalidMode(u32),
    #[error("person field contains a newline")]
    PersonHasNewline,
    #[error("invalid extra header key {0:?}")]
    InvalidHeaderKey(String),
    #[error("snapshot branch alias target must be a non-empty name")]
    EmptyAlias,
    #[error("malformed git object: {0}")]
    MalformedObject(String),
    #[error("content length mismatch: announced {expected} bytes, hashed {actual}")]
    LengthMismatch { expected: u64, actual: u64 },
}

fn lossy(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

/// Git object framing: `<kind> SP <decimal length> NUL`.
pub fn object_header(kind: &str, len: u64) -> Vec<u8> {
    format!("{kind} {len}\0").into_bytes()
}

/// SHA-1 over the framed object.
pub fn hash_git_object(kind: &str, payload: &[u8]) -> Digest {
    let mut hasher = Sha1::new();
    hasher.update(object_header(kind, payload.len() as u64));
    hasher.update(payload);
    Digest(hasher.finalize().into())
}

/// Incremental blob hasher for inputs whose size is known up front.
pub struct ContentHasher {
    inner: Sha1,
    expected: u64,
    seen: u64,
}

impl ContentHasher {
    pub fn new(len: u64) -> Self {
        let mut inner = Sha1::new();
        inner.update(object_header("blob", len));
        ContentHasher { inner, expected: len, seen: 0 }
    }

    pub fn update(&mut self, chunk: &[u8]) {
        self.seen += chunk.len() as u64;
        self.inner.update(chunk);
    }

    pub fn finish(self) -> Result<CoreSwhid, ModelError> {
        if self.seen != self.expected {
            return Err(ModelError::LengthMismatch { expected: self.expected, actual: self.seen });
        }
        Ok(CoreSwhid::new(ObjectType::Content, Digest(self.inner.finalize().into())))
    }
}

pub fn compute_content_id(data: &[u8]) -> CoreSwhid {
    CoreSwhid::new(ObjectType::Content, hash_git_object("blob", data))
}

// ---------------------------------------------------------------------------
// Directories

/// Tree entry mode. Each mode fixes the kind of object the entry points to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntryMode {
    Regular,
    Executable,
    Symlink,
    Directory,
    Submodule,
}

impl EntryMode {
    pub fn octal(self) -> u32 {
        match self {
            EntryMode::Regular => 0o100644,
            EntryMode::Executable => 0o100755,
            EntryMode::Symlink => 0o120000,
            EntryMode::Directory => 0o040000,
            EntryMode::Submodule => 0o160000,
        }
    }

    pub fn from_octal(mode: u32) -> Result<Self, ModelError> {
        Ok(match mode {
            0o100644 => EntryMode::Regular,
            0o100755 => EntryMode::Executable,
            0o120000 => EntryMode::Symlink,
            0o040000 => EntryMode::Directory,
            0o160000 => EntryMode::Submodule,
            other => return Err(ModelError::InvalidMode(other)),
        })
    }

    /// Collapses filesystem permission bits of a regular file: any
    /// executable bit yields 0o100755.
    pub fn for_file_permissions(unix_mode: u32) -> Self {
        if unix_mode & 0o111 != 0 {
            EntryMode::Executable
        } else {
            EntryMode::Regular
        }
    }

    pub fn target_kind(self) -> ObjectType {
        match self {
            EntryMode::Regular | EntryMode::Executable | EntryMode::Symlink => ObjectType::Content,
            EntryMode::Directory => ObjectType::Directory,
            EntryMode::Submodule => ObjectType::Revision,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DirectoryEntry {
    name: Vec<u8>,
    mode: EntryMode,
    target: Digest,
}

impl DirectoryEntry {
    pub fn new(name: impl Into<Vec<u8>>, mode: EntryMode, target: Digest) -> Result<Self, ModelError> {
        let name = name.into();
        if name.is_empty() {
            return Err(ModelError::InvalidName(String::new(), "empty"));
        }
        if name.contains(&b'/') {
            return Err(ModelError::InvalidName(lossy(&name), "contains '/'"));
        }
        if name.contains(&0) {
            return Err(ModelError::InvalidName(lossy(&name), "contains NUL"));
        }
        Ok(DirectoryEntry { name, mode, target })
    }

    pub fn name(&self) -> &[u8] {
        &self.name
    }

    pub fn mode(&self) -> EntryMode {
        self.mode
    }

    pub fn target(&self) -> Digest {
        self.target
    }

    pub fn target_kind(&self) -> ObjectType {
        self.mode.target_kind()
    }

    /// Git orders tree entries by name, with directories compared as if
    /// their name ended in '/'.
    pub fn sort_key(&self) -> Vec<u8> {
        let mut key = self.name.clone();
        if self.mode == EntryMode::Directory {
            key.push(b'/');
        }
        key
    }
}

pub fn directory_manifest(entries: &[DirectoryEntry]) -> Result<Vec<u8>, ModelError> {
    let mut keyed: Vec<(Vec<u8>, &DirectoryEntry)> = entries.iter().map(|e| (e.sort_key(), e)).collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    if let Some(w) = keyed.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(ModelError::DuplicateEntryName(lossy(w[0].1.name())));
    }
    let mut payload = Vec::new();
    for (_, entry) in keyed {
        payload.extend_from_slice(format!("{:o} ", entry.mode.octal()).as_bytes());
        payload.extend_from_slice(&entry.name);
        payload.push(0);
        payload.extend_from_slice(entry.target.as_bytes());
    }
    Ok(payload)
}

pub fn compute_directory_id(entries: &[DirectoryEntry]) -> Result<CoreSwhid, ModelError> {
    let payload = directory_manifest(entries)?;
    Ok(CoreSwhid::new(ObjectType::Directory, hash_git_object("tree", &payload)))
}

// ---------------------------------------------------------------------------
// Revisions and releases

/// UTC offset of a timestamp, in minutes. `negative_utc` distinguishes the
/// `-0000` spelling some tools emit from `+0000`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TzOffset {
    pub minutes: i32,
    pub negative_utc: bool,
}

impl TzOffset {
    pub fn minutes(minutes: i32) -> Self {
        TzOffset { minutes, negative_utc: false }
    }

    fn parse(text: &[u8]) -> Option<Self> {
        if text.len() != 5 || !text[1..].iter().all(u8::is_ascii_digit) {
            return None;
        }
        let negative = match text[0] {
            b'+' => false,
            b'-' => true,
            _ => return None,
        };
        let digits = std::str::from_utf8(&text[1..]).ok()?;
        let hours: i32 = digits[..2].parse().ok()?;
        let mins: i32 = digits[2..].parse().ok()?;
        if mins >= 60 {
            return None;
        }
        let total = hours * 60 + mins;
        Some(TzOffset {
            minutes: if negative { -total } else { total },
            negative_utc: negative && total == 0,
        })
    }
}

impl fmt::Display for TzOffset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.minutes < 0 || self.negative_utc { '-' } else { '+' };
        let abs = self.minutes.unsigned_abs();
        write!(f, "{sign}{:02}{:02}", abs / 60, abs % 60)
    }
}

/// An identity (`Name <email>`, opaque bytes) with a timestamp.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PersonTimestamp {
    person: Vec<u8>,
    pub seconds: i64,
    pub offset: TzOffset,
}

impl PersonTimestamp {
    pub fn new(person: impl Into<Vec<u8>>, seconds: i64, offset: TzOffset) -> Result<Self, ModelError> {
        let person = person.into();
        if person.contains(&b'\n') {
            return Err(ModelError::PersonHasNewline);
        }
        Ok(PersonTimestamp { person, seconds, offset })
    }

    pub fn person(&self) -> &[u8] {
        &self.person
    }

    fn render(&self) -> Vec<u8> {
        let mut out = self.person.clone();
        out.extend_from_slice(format!(" {} {}", self.seconds, self.offset).as_bytes());
        out
    }

    /// Parses `<person> <seconds> <offset>`, splitting from the right.
    fn parse(value: &[u8]) -> Result<Self, ModelError> {
        let bad = || ModelError::MalformedObject(format!("bad identity line {:?}", lossy(value)));
        let mut parts = value.rsplitn(3, |&b| b == b' ');
        let offset = parts.next().and_then(TzOffset::parse).ok_or_else(bad)?;
        let seconds = parts
            .next()
            .and_then(|s| std::str::from_utf8(s).ok())
            .and_then(|s| s.parse().ok())
            .ok_or_else(bad)?;
        let person = parts.next().ok_or_else(bad)?;
        PersonTimestamp::new(person, seconds, offset)
    }
}

/// A header line of a commit beyond the standard ones (`gpgsig`,
/// `encoding`, `mergetag`, ...). Values may span several lines.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExtraHeader {
    key: Vec<u8>,
    value: Vec<u8>,
}

impl ExtraHeader {
    pub fn new(key: impl Into<Vec<u8>>, value: impl Into<Vec<u8>>) -> Result<Self, ModelError> {
        let key = key.into();
        if key.is_empty() || key.iter().any(|b| matches!(b, b' ' | b'\n' | 0)) {
            return Err(ModelError::InvalidHeaderKey(lossy(&key)));
        }
        Ok(ExtraHeader { key, value: value.into() })
    }

    pub fn key(&self) -> &[u8] {
        &self.key
    }

    pub fn value(&self) -> &[u8] {
        &self.value
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RevisionRecord {
    pub tree: Digest,
    pub parents: Vec<Digest>,
    pub author: PersonTimestamp,
    pub committer: PersonTimestamp,
    pub message: Vec<u8>,
    pub extra_headers: Vec<ExtraHeader>,
}

/// Emits `key SP value LF`, continuation lines indented by one space.
fn push_header(out: &mut Vec<u8>, key: &[u8], value: &[u8]) {
    out.extend_from_slice(key);
    out.push(b' ');
    for (i, line) in value.split(|&b| b == b'\n').enumerate() {
        if i > 0 {
            out.extend_from_slice(b"\n ");
        }
        out.extend_from_slice(line);
    }
    out.push(b'\n');
}

impl RevisionRecord {
    pub fn manifest(&self) -> Vec<u8> {
        let mut out = Vec::new();
        push_header(&mut out, b"tree", self.tree.to_hex().as_bytes());
        for parent in &self.parents {
            push_header(&mut out, b"parent", parent.to_hex().as_bytes());
        }
        push_header(&mut out, b"author", &self.author.render());
        push_header(&mut out, b"committer", &self.committer.render());
        for h in &self.extra_headers {
            push_header(&mut out, &h.key, &h.value);
        }
        out.push(b'\n');
        out.extend_from_slice(&self.message);
        out
    }

    /// Rebuilds a record from the payload of a git commit object (without
    /// the `commit <len>\0` framing).
    pub fn from_git_payload(payload: &[u8]) -> Result<Self, ModelError> {
        let (headers, message) = split_headers(payload)?;
        let mut tree = None;
        let mut parents = Vec::new();
        let mut author = None;
        let mut committer = None;
        let mut extra_headers = Vec::new();
        for (key, value) in headers {
            match key.as_slice() {
                b"tree" if tree.is_none() && author.is_none() => tree = Some(parse_hex_digest(&value)?),
                b"parent" if author.is_none() => parents.push(parse_hex_digest(&value)?),
                b"author" if author.is_none() => author = Some(PersonTimestamp::parse(&value)?),
                b"committer" if committer.is_none() && author.is_some() => {
                    committer = Some(PersonTimestamp::parse(&value)?)
                }
                _ if committer.is_some() => extra_headers.push(ExtraHeader::new(key, value)?),
                other => return Err(ModelError::MalformedObject(format!("unexpected header {:?}", lossy(other)))),
            }
        }
        let missing = |what: &str| ModelError::MalformedObject(format!("missing {what}"));
        Ok(RevisionRecord {
            tree: tree.ok_or_else(|| missing("tree"))?,
            parents,
            author: author.ok_or_else(|| missing("author"))?,
            committer: committer.ok_or_else(|| missing("committer"))?,
            message: message.to_vec(),
            extra_headers,
        })
    }
}

fn parse_hex_digest(value: &[u8]) -> Result<Digest, ModelError> {
    std::str::from_utf8(value)
        .ok()
        .and_then(Digest::from_hex)
        .ok_or_else(|| ModelError::MalformedObject(format!("bad object id {:?}", lossy(value))))
}

type Headers = Vec<(Vec<u8>, Vec<u8>)>;

fn split_headers(payload: &[u8]) -> Result<(Headers, &[u8]), ModelError> {
    let mut headers: Headers = Vec::new();
    let mut rest = payload;
    loop {
        let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
            return Err(ModelError::MalformedObject("missing blank line before message".into()));
        };
        let line = &rest[..nl];
        rest = &rest[nl + 1..];
        if line.is_empty() {
            return Ok((headers, rest));
        }
        if let Some(cont) = line.strip_prefix(b" ") {
            let (_, value) = headers
                .last_mut()
                .ok_or_else(|| ModelError::MalformedObject("continuation before first header".into()))?;
            value.push(b'\n');
            value.extend_from_slice(cont);
            continue;
        }
        let sp = line
            .iter()
            .position(|&b| b == b' ')
            .ok_or_else(|| ModelError::MalformedObject(format!("header without value {:?}", lossy(line))))?;
        headers.push((line[..sp].to_vec(), line[sp + 1..].to_vec()));
    }
}

pub fn compute_revision_id(rev: &RevisionRecord) -> CoreSwhid {
    CoreSwhid::new(ObjectType::Revision, hash_git_object("commit", &rev.manifest()))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ReleaseRecord {
    target: Digest,
    target_kind: ObjectType,
    name: Vec<u8>,
    author: Option<PersonTimestamp>,
    message: Vec<u8>,
}

impl ReleaseRecord {
    pub fn new(
        target: Digest,
        target_kind: ObjectType,
        name: impl Into<Vec<u8>>,
        author: Option<PersonTimestamp>,
        message: impl Into<Vec<u8>>,
    ) -> Result<Self, ModelError> {
        let name = name.into();
        if name.is_empty() {
            return Err(ModelError::InvalidName(String::new(), "empty"));
        }
        if name.contains(&0) {
            return Err(ModelError::InvalidName(lossy(&name), "contains NUL"));
        }
        Ok(ReleaseRecord { target, target_kind, name, author, message: message.into() })
    }

    pub fn target(&self) -> Digest {
        self.target
    }

    pub fn target_kind(&self) -> ObjectType {
        self.target_kind
    }

    pub fn name(&self) -> &[u8] {
        &self.name
    }

    pub fn author(&self) -> Option<&PersonTimestamp> {
        self.author.as_ref()
    }

    pub fn message(&self) -> &[u8] {
        &self.message
    }

    pub fn manifest(&self) -> Vec<u8> {
        let mut out = Vec::new();
        push_header(&mut out, b"object", self.target.to_hex().as_bytes());
        push_header(&mut out, b"type", self.target_kind.git_kind().as_bytes());
        push_header(&mut out, b"tag", &self.name);
        if let Some(author) = &self.author {
            push_header(&mut out, b"tagger", &author.render());
        }
        out.push(b'\n');
        out.extend_from_slice(&self.message);
        out
    }
}

pub fn compute_release_id(rel: &ReleaseRecord) -> CoreSwhid {
    CoreSwhid::new(ObjectType::Release, hash_git_object("tag", &rel.manifest()))
}

// ---------------------------------------------------------------------------
// Snapshots

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BranchTarget {
    Object { kind: ObjectType, digest: Digest },
    /// Name of another branch of the same snapshot.
    Alias(Vec<u8>),
    Dangling,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SnapshotBranch {
    name: Vec<u8>,
    target: BranchTarget,
}

impl SnapshotBranch {
    pub fn new(name: impl Into<Vec<u8>>, target: BranchTarget) -> Result<Self, ModelError> {
        let name = name.into();
        if name.is_empty() {
            return Err(ModelError::InvalidName(String::new(), "empty"));
        }
        if name.contains(&0) {
            return Err(ModelError::InvalidName(lossy(&name), "contains NUL"));
        }
        if matches!(&target, BranchTarget::Alias(a) if a.is_empty()) {
            return Err(ModelError::EmptyAlias);
        }
        Ok(SnapshotBranch { name, target })
    }

    pub fn name(&self) -> &[u8] {
        &self.name
    }

    pub fn target(&self) -> &BranchTarget {
        &self.target
    }
}

pub fn snapshot_manifest(branches: &[SnapshotBranch]) -> Result<Vec<u8>, ModelError> {
    let mut sorted: Vec<&SnapshotBranch> = branches.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    if let Some(w) = sorted.windows(2).find(|w| w[0].name == w[1].name) {
        return Err(ModelError::DuplicateBranchName(lossy(&w[0].name)));
    }
    let mut out = Vec::new();
    for branch in sorted {
        let (kind, target): (&str, &[u8]) = match &branch.target {
            BranchTarget::Object { kind, digest } => (kind.name(), digest.as_bytes()),
            BranchTarget::Alias(name) => ("alias", name),
            BranchTarget::Dangling => ("dangling", &[]),
        };
        out.extend_from_slice(kind.as_bytes());
        out.push(b' ');
        out.extend_from_slice(&branch.name);
        out.push(0);
        out.extend_from_slice(format!("{}:", target.len()).as_bytes());
        out.extend_from_slice(target);
    }
    Ok(out)
}

pub fn compute_snapshot_id(branches: &[SnapshotBranch]) -> Result<CoreSwhid, ModelError> {
    let payload = snapshot_manifest(branches)?;
    Ok(CoreSwhid::new(ObjectType::Snapshot, hash_git_object("snapshot", &payload)))
}
