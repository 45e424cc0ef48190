//! Mapping between identifiers and browsable archive URLs.

use thiserror::Error;

use crate::swhid::{format_swhid, parse_swhid, ParsePolicy, QualifiedSwhid, SwhidError};

pub const DEFAULT_ARCHIVE_BASE: &str = "https://archive.softwareheritage.org/";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("bad base URL {0:?}: {1}")]
    BadBase(String, &'static str),
    #[error("no identifier found in {0:?}")]
    NoIdentifierFound(String),
    #[error(transparent)]
    Parse(#[from] SwhidError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedUrl {
    pub url: String,
    pub base: String,
}

/// Checks that `base` is an absolute http(s) URL ending in '/'.
pub fn check_base(base: &str) -> Result<(), ResolveError> {
    let parsed = url::Url::parse(base).map_err(|_| ResolveError::BadBase(base.to_owned(), "not an absolute URL"))?;
    if !matches!(parsed.scheme(), "http" | "https") {
        return Err(ResolveError::BadBase(base.to_owned(), "scheme must be http or https"));
    }
    if !base.ends_with('/') {
        return Err(ResolveError::BadBase(base.to_owned(), "must end with '/'"));
    }
    Ok(())
}

pub fn resolve_to_url(id: &QualifiedSwhid, base: &str) -> Result<ResolvedUrl, ResolveError> {
    check_base(base)?;
    Ok(ResolvedUrl { url: format!("{base}{}", format_swhid(id)), base: base.to_owned() })
}

/// Parses the identifier that follows the first `/swh:` path segment.
pub fn extract_swhid_from_url(url: &str) -> Result<QualifiedSwhid, ResolveError> {
    let start = url.find("/swh:").ok_or_else(|| ResolveError::NoIdentifierFound(url.to_owned()))?;
    Ok(parse_swhid(&url[start + 1..], ParsePolicy::Strict)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swhid::parse_core;

    #[test]
    fn bases() {
        assert!(check_base("https://example.org/").is_ok());
        assert!(check_base("http://localhost:8080/archive/").is_ok());
        assert!(matches!(check_base("https://example.org"), Err(ResolveError::BadBase(..))));
        assert!(matches!(check_base("ftp://example.org/"), Err(ResolveError::BadBase(..))));
        assert!(matches!(check_base("example.org/"), Err(ResolveError::BadBase(..))));
    }

    #[test]
    fn concatenation() {
        let id = QualifiedSwhid::new(parse_core("swh:1:cnt:e69de29bb2d1d6434b8b29ae775ad8c2e48c5391").unwrap());
        let r = resolve_to_url(&id, "https://example.org/").unwrap();
        assert_eq!(r.url, "https://example.org/swh:1:cnt:e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
        assert_eq!(extract_swhid_from_url(&r.url).unwrap(), id);
    }

    #[test]
    fn missing_or_bad_identifier() {
        assert!(matches!(
            extract_swhid_from_url("https://example.org/no-id-here"),
            Err(ResolveError::NoIdentifierFound(_))
        ));
        assert!(matches!(
            extract_swhid_from_url("https://example.org/swh:2:cnt:e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"),
            Err(ResolveError::Parse(SwhidError::BadVersion(_)))
        ));
    }
}
