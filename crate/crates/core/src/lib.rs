//! Software Heritage intrinsic identifiers (SWHIDs).
//!
//! - [`model`]: the five Merkle DAG node kinds and their git-compatible
//!   identifiers.
//! - [`swhid`]: the textual grammar, with the `origin`, `visit`, `anchor`,
//!   `path` and `lines` qualifiers.
//! - [`walker`]: identifiers of files, directory trees and git checkouts.
//! - [`resolver`]: identifiers to archive URLs and back.
//! - [`client`]: save-code-now requests and lookups against the archive API.

pub mod client;
pub mod model;
pub mod object;
mod pct;
pub mod resolver;
pub mod swhid;
pub mod walker;

pub use model::{
    compute_content_id, compute_directory_id, compute_release_id, compute_revision_id, compute_snapshot_id,
    BranchTarget, DirectoryEntry, EntryMode, ExtraHeader, ModelError, PersonTimestamp, ReleaseRecord, RevisionRecord,
    SnapshotBranch, TzOffset,
};
pub use object::{CoreSwhid, Digest, ObjectType};
pub use resolver::{extract_swhid_from_url, resolve_to_url, ResolveError, ResolvedUrl, DEFAULT_ARCHIVE_BASE};
pub use swhid::{
    format_swhid, parse_swhid, parse_swhid_with_diagnostics, validate_semantics, Diagnostic, LineRange, ParsePolicy,
    QualifiedSwhid, SwhidError,
};
pub use walker::{identify_git_head, identify_path, verify_git_head, IdentifyReport, WalkOptions};
