//! Textual identifier grammar: parsing, canonical formatting and semantic
//! checks of qualified identifiers.
//!
//! ```text
//! swhid      = core *( ";" qualifier )
//! core       = "swh" ":" "1" ":" tag ":" 40lowerhex
//! qualifier  = key "=" value          ; key in origin/visit/anchor/path/lines
//! lines      = line [ "-" line ]       ; 1-based, inclusive
//! ```

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::object::{CoreSwhid, Digest, ObjectType, SCHEMA_VERSION};
use crate::pct;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SwhidError {
    #[error("bad scheme {0:?}, expected \"swh\"")]
    BadScheme(String),
    #[error("unsupported version {0:?}, expected \"1\"")]
    BadVersion(String),
    #[error("unknown object type {0:?}")]
    BadType(String),
    #[error("bad hash {0:?}, expected 40 lowercase hex digits")]
    BadHash(String),
    #[error("bad qualifier {0:?}: {1}")]
    BadQualifier(String, String),
    #[error("unknown qualifier {0:?}")]
    UnknownQualifier(String),
    #[error("duplicate qualifier {0:?}")]
    DuplicateQualifier(String),
}

impl SwhidError {
    /// Stable short name of the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            SwhidError::BadScheme(_) => "BadScheme",
            SwhidError::BadVersion(_) => "BadVersion",
            SwhidError::BadType(_) => "BadType",
            SwhidError::BadHash(_) => "BadHash",
            SwhidError::BadQualifier(..) => "BadQualifier",
            SwhidError::UnknownQualifier(_) => "UnknownQualifier",
            SwhidError::DuplicateQualifier(_) => "DuplicateQualifier",
        }
    }
}

fn bad_qualifier(text: &str, why: impl Into<String>) -> SwhidError {
    SwhidError::BadQualifier(text.to_owned(), why.into())
}

/// Inclusive, 1-based range of lines within a content object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LineRange {
    start: u64,
    end: Option<u64>,
}

impl LineRange {
    pub fn single(line: u64) -> Option<Self> {
        Self::new(line, None)
    }

    pub fn new(start: u64, end: Option<u64>) -> Option<Self> {
        if start == 0 || end.is_some_and(|e| e < start) {
            return None;
        }
        Some(LineRange { start, end })
    }

    pub fn start(&self) -> u64 {
        self.start
    }

    pub fn end(&self) -> Option<u64> {
        self.end
    }

    pub fn last(&self) -> u64 {
        self.end.unwrap_or(self.start)
    }

    /// Number of lines denoted, both ends included.
    pub fn count(&self) -> u64 {
        self.last() - self.start + 1
    }

    pub fn contains(&self, line: u64) -> bool {
        (self.start..=self.last()).contains(&line)
    }

    /// The selected lines of `content`, terminators included. Lines past the
    /// end of the content are ignored.
    pub fn select<'a>(&self, content: &'a [u8]) -> &'a [u8] {
        let mut begin = None;
        let mut line = 1u64;
        let mut pos = 0usize;
        while pos < content.len() {
            if line == self.start {
                begin = Some(pos);
            }
            let next = content[pos..].iter().position(|&b| b == b'\n').map_or(content.len(), |i| pos + i + 1);
            if line == self.last() {
                return &content[begin.unwrap_or(pos)..next];
            }
            pos = next;
            line += 1;
        }
        begin.map_or(&content[content.len()..], |b| &content[b..])
    }

    fn parse(value: &str) -> Result<Self, SwhidError> {
        let number = |s: &str| -> Result<u64, SwhidError> {
            if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) || s.starts_with('0') {
                return Err(bad_qualifier(value, "lines must be positive decimal integers without leading zeros"));
            }
            s.parse().map_err(|_| bad_qualifier(value, "line number out of range"))
        };
        let (start, end) = match value.split_once('-') {
            Some((a, b)) => (number(a)?, Some(number(b)?)),
            None => (number(value)?, None),
        };
        LineRange::new(start, end).ok_or_else(|| bad_qualifier(value, "line range end precedes start"))
    }
}

impl fmt::Display for LineRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.end {
            Some(end) => write!(f, "{}-{}", self.start, end),
            None => write!(f, "{}", self.start),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParsePolicy {
    /// Reject unknown qualifiers and uppercase hex.
    #[default]
    Strict,
    /// Keep unknown qualifiers verbatim and downcase uppercase hex, reporting
    /// both as diagnostics.
    Lax,
}

/// A core identifier with its optional context qualifiers.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QualifiedSwhid {
    pub core: CoreSwhid,
    pub origin: Option<String>,
    pub visit: Option<CoreSwhid>,
    pub anchor: Option<CoreSwhid>,
    pub path: Option<Vec<u8>>,
    pub lines: Option<LineRange>,
    /// Unknown qualifiers kept by lax parsing, in input order. Values are
    /// stored as written.
    pub extra: Vec<(String, String)>,
}

impl QualifiedSwhid {
    pub fn new(core: CoreSwhid) -> Self {
        QualifiedSwhid { core, origin: None, visit: None, anchor: None, path: None, lines: None, extra: Vec::new() }
    }

    pub fn is_core_only(&self) -> bool {
        self.origin.is_none()
            && self.visit.is_none()
            && self.anchor.is_none()
            && self.path.is_none()
            && self.lines.is_none()
            && self.extra.is_empty()
    }
}

impl From<CoreSwhid> for QualifiedSwhid {
    fn from(core: CoreSwhid) -> Self {
        QualifiedSwhid::new(core)
    }
}

impl fmt::Display for QualifiedSwhid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.core)?;
        if let Some(origin) = &self.origin {
            write!(f, ";origin={}", pct::encode(origin.as_bytes()))?;
        }
        if let Some(visit) = &self.visit {
            write!(f, ";visit={visit}")?;
        }
        if let Some(anchor) = &self.anchor {
            write!(f, ";anchor={anchor}")?;
        }
        if let Some(path) = &self.path {
            write!(f, ";path={}", pct::encode(path))?;
        }
        if let Some(lines) = &self.lines {
            write!(f, ";lines={lines}")?;
        }
        for (key, value) in &self.extra {
            write!(f, ";{key}={value}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for QualifiedSwhid {
    type Err = SwhidError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_swhid(s, ParsePolicy::Strict)
    }
}

pub fn format_swhid(id: &QualifiedSwhid) -> String {
    id.to_string()
}

pub fn parse_swhid(text: &str, policy: ParsePolicy) -> Result<QualifiedSwhid, SwhidError> {
    parse_swhid_with_diagnostics(text, policy).map(|(id, _)| id)
}

/// Parses the bare core form.
pub fn parse_core(text: &str) -> Result<CoreSwhid, SwhidError> {
    parse_core_inner(text, ParsePolicy::Strict, &mut Vec::new())
}

fn parse_core_inner(text: &str, policy: ParsePolicy, diags: &mut Vec<Diagnostic>) -> Result<CoreSwhid, SwhidError> {
    let mut parts = text.splitn(4, ':');
    let scheme = parts.next().unwrap_or_default();
    if scheme != "swh" {
        return Err(SwhidError::BadScheme(scheme.to_owned()));
    }
    let version = parts.next().ok_or_else(|| SwhidError::BadVersion(String::new()))?;
    if version != SCHEMA_VERSION.to_string() {
        return Err(SwhidError::BadVersion(version.to_owned()));
    }
    let tag = parts.next().ok_or_else(|| SwhidError::BadType(String::new()))?;
    let object_type = ObjectType::from_tag(tag).ok_or_else(|| SwhidError::BadType(tag.to_owned()))?;
    let hash = parts.next().ok_or_else(|| SwhidError::BadHash(String::new()))?;
    let digest = match Digest::from_hex(hash) {
        Some(d) => d,
        None if policy == ParsePolicy::Lax && hash.len() == 40 && hash.bytes().all(|b| b.is_ascii_hexdigit()) => {
            diags.push(Diagnostic::warning(DiagnosticCode::UppercaseHex, "uppercase hex digest downcased"));
            Digest::from_hex(&hash.to_ascii_lowercase()).expect("validated hex")
        }
        None => return Err(SwhidError::BadHash(hash.to_owned())),
    };
    Ok(CoreSwhid::new(object_type, digest))
}

/// Like [`parse_swhid`], also returning the diagnostics raised by lax-mode
/// repairs (downcased hex, preserved unknown qualifiers).
pub fn parse_swhid_with_diagnostics(
    text: &str,
    policy: ParsePolicy,
) -> Result<(QualifiedSwhid, Vec<Diagnostic>), SwhidError> {
    let mut diags = Vec::new();
    let mut segments = text.split(';');
    let core = parse_core_inner(segments.next().unwrap_or_default(), policy, &mut diags)?;
    let mut id = QualifiedSwhid::new(core);
    let mut seen: Vec<&str> = Vec::new();

    for segment in segments {
        let (key, value) = segment
            .split_once('=')
            .ok_or_else(|| bad_qualifier(segment, "expected key=value"))?;
        if key.is_empty() || !key.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-') {
            return Err(bad_qualifier(segment, "qualifier keys are lowercase words"));
        }
        if value.is_empty() {
            return Err(bad_qualifier(segment, "empty value"));
        }
        if value.bytes().any(|b| b.is_ascii_control() || b == b' ' || !b.is_ascii()) {
            return Err(bad_qualifier(segment, "value contains whitespace, control or non-ASCII characters"));
        }
        if seen.contains(&key) {
            return Err(SwhidError::DuplicateQualifier(key.to_owned()));
        }
        seen.push(key);

        match key {
            "origin" => {
                let bytes = pct::decode(value).ok_or_else(|| bad_qualifier(segment, "invalid percent-escape"))?;
                let origin = String::from_utf8(bytes).map_err(|_| bad_qualifier(segment, "origin is not UTF-8"))?;
                id.origin = Some(origin);
            }
            "visit" => {
                let visit = parse_core_inner(value, ParsePolicy::Strict, &mut diags)
                    .map_err(|e| bad_qualifier(segment, e.to_string()))?;
                if visit.object_type() != ObjectType::Snapshot {
                    return Err(bad_qualifier(segment, "visit must be a snapshot identifier"));
                }
                id.visit = Some(visit);
            }
            "anchor" => {
                let anchor = parse_core_inner(value, ParsePolicy::Strict, &mut diags)
                    .map_err(|e| bad_qualifier(segment, e.to_string()))?;
                id.anchor = Some(anchor);
            }
            "path" => {
                let path = pct::decode(value).ok_or_else(|| bad_qualifier(segment, "invalid percent-escape"))?;
                if !path.starts_with(b"/") {
                    return Err(bad_qualifier(segment, "path must be absolute"));
                }
                id.path = Some(path);
            }
            "lines" => id.lines = Some(LineRange::parse(value)?),
            other => match policy {
                ParsePolicy::Strict => return Err(SwhidError::UnknownQualifier(other.to_owned())),
                ParsePolicy::Lax => {
                    diags.push(Diagnostic::warning(
                        DiagnosticCode::UnknownQualifier,
                        format!("unknown qualifier {other:?} preserved"),
                    ));
                    id.extra.push((other.to_owned(), value.to_owned()));
                }
            },
        }
    }
    Ok((id, diags))
}

// ---------------------------------------------------------------------------
// Semantic checks

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticCode {
    LinesRequiresContent,
    AnchorIsContent,
    AnchorIsSnapshot,
    PathWithoutAnchor,
    UppercaseHex,
    UnknownQualifier,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: DiagnosticCode,
    pub message: String,
}

impl Diagnostic {
    fn warning(code: DiagnosticCode, message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Warning, code, message: message.into() }
    }

    fn error(code: DiagnosticCode, message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Error, code, message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{sev}: {}", self.message)
    }
}

/// Flags well-formed but dubious qualifier combinations.
pub fn validate_semantics(id: &QualifiedSwhid) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let is_content = id.core.object_type() == ObjectType::Content;
    if id.lines.is_some() && !is_content {
        out.push(Diagnostic::error(DiagnosticCode::LinesRequiresContent, "lines requires content"));
    }
    match id.anchor.map(|a| a.object_type()) {
        Some(ObjectType::Snapshot) => out.push(Diagnostic::error(
            DiagnosticCode::AnchorIsSnapshot,
            "anchor must be a revision, release, directory or content",
        )),
        Some(ObjectType::Content) => out.push(Diagnostic::warning(
            DiagnosticCode::AnchorIsContent,
            "anchor is a content object, which has no paths beneath it",
        )),
        _ => {}
    }
    if is_content && id.path.is_some() && id.anchor.is_none() {
        out.push(Diagnostic::warning(
            DiagnosticCode::PathWithoutAnchor,
            "path on a content identifier has no anchor to resolve it from",
        ));
    }
    out
}
