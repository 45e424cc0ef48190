//! Identifiers for on-disk artifacts: files, directory trees and git
//! checkouts.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, Read};
use std::os::unix::ffi::OsStrExt;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};

use flate2::read::ZlibDecoder;
use globset::{Glob, GlobSet, GlobSetBuilder};
use serde::Serialize;
use thiserror::Error;

use crate::model::{
    compute_content_id, compute_directory_id, compute_revision_id, ContentHasher, DirectoryEntry, EntryMode,
    ModelError, RevisionRecord,
};
use crate::object::{CoreSwhid, Digest, ObjectType};
use crate::swhid::QualifiedSwhid;

const READ_BUFFER: usize = 64 * 1024;

#[derive(Debug, Error)]
pub enum WalkError {
    #[error("{0}: not found")]
    NotFound(PathBuf),
    #[error("{0}: permission denied")]
    PermissionDenied(PathBuf),
    #[error("{path}: file is {size} bytes, above the {limit} byte limit")]
    FileTooLarge { path: PathBuf, size: u64, limit: u64 },
    #[error("{0}: broken symbolic link")]
    BrokenSymlink(PathBuf),
    #[error("{0}: symbolic link cycle")]
    SymlinkCycle(PathBuf),
    #[error("{0}: unsupported file type")]
    UnsupportedFileType(PathBuf),
    #[error("invalid walk options: {0}")]
    InvalidOptions(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Model { path: PathBuf, source: ModelError },
}

impl WalkError {
    fn io(path: &Path, err: io::Error) -> Self {
        match err.kind() {
            io::ErrorKind::NotFound => WalkError::NotFound(path.to_owned()),
            io::ErrorKind::PermissionDenied => WalkError::PermissionDenied(path.to_owned()),
            _ => WalkError::Io { path: path.to_owned(), source: err },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkOptions {
    /// Globs matched against each entry's name and its path relative to
    /// the walk root.
    pub exclude_patterns: Vec<String>,
    pub follow_symlinks: bool,
    pub max_file_size: Option<u64>,
}

impl Default for WalkOptions {
    fn default() -> Self {
        WalkOptions {
            exclude_patterns: vec![".git".into(), ".svn".into(), ".hg".into()],
            follow_symlinks: false,
            max_file_size: None,
        }
    }
}

impl WalkOptions {
    fn compile(&self) -> Result<GlobSet, WalkError> {
        if self.max_file_size == Some(0) {
            return Err(WalkError::InvalidOptions("max_file_size must be positive".into()));
        }
        let mut builder = GlobSetBuilder::new();
        for pattern in &self.exclude_patterns {
            let glob = Glob::new(pattern).map_err(|e| WalkError::InvalidOptions(e.to_string()))?;
            builder.add(glob);
        }
        builder.build().map_err(|e| WalkError::InvalidOptions(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WalkedEntry {
    pub swhid: CoreSwhid,
    /// Mode under which the entry appears in its parent; `None` for the root.
    #[serde(skip)]
    pub mode: Option<EntryMode>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct WalkStats {
    pub files: u64,
    pub dirs: u64,
    pub symlinks: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentifyReport {
    pub root_id: QualifiedSwhid,
    /// Every visited node keyed by its path relative to the root (the root
    /// itself is the empty path).
    pub per_entry: BTreeMap<PathBuf, WalkedEntry>,
    pub stats: WalkStats,
}

impl IdentifyReport {
    /// Reconstructs the tree entries of the directory at `dir` (relative).
    pub fn children_of(&self, dir: &Path) -> Vec<DirectoryEntry> {
        self.per_entry
            .iter()
            .filter(|(p, _)| p.parent() == Some(dir) && !p.as_os_str().is_empty())
            .filter_map(|(p, e)| {
                let name = p.file_name()?.as_bytes().to_vec();
                DirectoryEntry::new(name, e.mode?, e.swhid.digest()).ok()
            })
            .collect()
    }
}

struct Walker<'a> {
    opts: &'a WalkOptions,
    excludes: GlobSet,
    per_entry: BTreeMap<PathBuf, WalkedEntry>,
    stats: WalkStats,
    // canonical directories currently being walked, for cycle detection
    stack: Vec<PathBuf>,
}

pub fn identify_path(path: &Path, opts: &WalkOptions) -> Result<IdentifyReport, WalkError> {
    let mut walker = Walker {
        opts,
        excludes: opts.compile()?,
        per_entry: BTreeMap::new(),
        stats: WalkStats::default(),
        stack: Vec::new(),
    };
    let (id, _) = walker.visit(path, Path::new(""))?;
    walker.per_entry.insert(PathBuf::new(), WalkedEntry { swhid: id, mode: None });
    Ok(IdentifyReport { root_id: id.into(), per_entry: walker.per_entry, stats: walker.stats })
}

/// Content id of a file, read in constant memory.
pub fn hash_file(path: &Path, max_size: Option<u64>) -> Result<CoreSwhid, WalkError> {
    let mut file = File::open(path).map_err(|e| WalkError::io(path, e))?;
    let size = file.metadata().map_err(|e| WalkError::io(path, e))?.len();
    if let Some(limit) = max_size {
        if size > limit {
            return Err(WalkError::FileTooLarge { path: path.to_owned(), size, limit });
        }
    }
    let mut hasher = ContentHasher::new(size);
    let mut buf = vec![0u8; READ_BUFFER];
    loop {
        let n = match file.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(WalkError::io(path, e)),
        };
        hasher.update(&buf[..n]);
    }
    hasher.finish().map_err(|source| WalkError::Model { path: path.to_owned(), source })
}

impl Walker<'_> {
    fn visit(&mut self, path: &Path, rel: &Path) -> Result<(CoreSwhid, EntryMode), WalkError> {
        let meta = fs::symlink_metadata(path).map_err(|e| WalkError::io(path, e))?;
        let ft = meta.file_type();
        if ft.is_symlink() {
            if !self.opts.follow_symlinks {
                let target = fs::read_link(path).map_err(|e| WalkError::io(path, e))?;
                self.stats.symlinks += 1;
                return Ok((compute_content_id(target.as_os_str().as_bytes()), EntryMode::Symlink));
            }
            let followed = fs::metadata(path).map_err(|e| match e.kind() {
                io::ErrorKind::NotFound => WalkError::BrokenSymlink(path.to_owned()),
                _ => WalkError::io(path, e),
            })?;
            return self.visit_resolved(path, rel, &followed);
        }
        self.visit_resolved(path, rel, &meta)
    }

    fn visit_resolved(&mut self, path: &Path, rel: &Path, meta: &fs::Metadata) -> Result<(CoreSwhid, EntryMode), WalkError> {
        if meta.is_file() {
            let id = hash_file(path, self.opts.max_file_size)?;
            self.stats.files += 1;
            self.stats.bytes += meta.len();
            return Ok((id, EntryMode::for_file_permissions(meta.permissions().mode())));
        }
        if !meta.is_dir() {
            return Err(WalkError::UnsupportedFileType(path.to_owned()));
        }

        let canonical = fs::canonicalize(path).map_err(|e| WalkError::io(path, e))?;
        if self.stack.contains(&canonical) {
            return Err(WalkError::SymlinkCycle(path.to_owned()));
        }
        self.stack.push(canonical);

        let mut entries = Vec::new();
        let listing = fs::read_dir(path).map_err(|e| WalkError::io(path, e))?;
        for child in listing {
            let child = child.map_err(|e| WalkError::io(path, e))?;
            let name = child.file_name();
            let child_rel = rel.join(&name);
            if self.excludes.is_match(Path::new(&name)) || self.excludes.is_match(&child_rel) {
                continue;
            }
            let (id, mode) = self.visit(&child.path(), &child_rel)?;
            let entry = DirectoryEntry::new(name.as_bytes(), mode, id.digest())
                .map_err(|source| WalkError::Model { path: child.path(), source })?;
            entries.push(entry);
            self.per_entry.insert(child_rel, WalkedEntry { swhid: id, mode: Some(mode) });
        }
        self.stack.pop();
        self.stats.dirs += 1;
        let id = compute_directory_id(&entries).map_err(|source| WalkError::Model { path: path.to_owned(), source })?;
        Ok((id, EntryMode::Directory))
    }
}

// ---------------------------------------------------------------------------
// git checkouts

#[derive(Debug, Error)]
pub enum GitError {
    #[error("{0}: not a git repository")]
    NotARepository(PathBuf),
    #[error("{0}: HEAD does not point to any commit yet")]
    UnbornHead(PathBuf),
    #[error("{0}: {1}")]
    Malformed(PathBuf, String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Walk(#[from] WalkError),
}

struct GitDirs {
    git_dir: PathBuf,
    common_dir: PathBuf,
    worktree: Option<PathBuf>,
}

fn read_text(path: &Path) -> Result<Option<String>, GitError> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(GitError::Io { path: path.to_owned(), source: e }),
    }
}

fn locate_git_dirs(repo: &Path) -> Result<GitDirs, GitError> {
    let dot_git = repo.join(".git");
    let (git_dir, worktree) = if dot_git.is_dir() {
        (dot_git, Some(repo.to_owned()))
    } else if dot_git.is_file() {
        let text = read_text(&dot_git)?.unwrap_or_default();
        let target = text
            .trim()
            .strip_prefix("gitdir:")
            .ok_or_else(|| GitError::Malformed(dot_git.clone(), "expected \"gitdir: <path>\"".into()))?
            .trim();
        (repo.join(target), Some(repo.to_owned()))
    } else if repo.join("HEAD").is_file() && repo.join("objects").is_dir() {
        (repo.to_owned(), None)
    } else {
        return Err(GitError::NotARepository(repo.to_owned()));
    };
    if !git_dir.join("HEAD").is_file() {
        return Err(GitError::NotARepository(repo.to_owned()));
    }
    let common_dir = match read_text(&git_dir.join("commondir"))? {
        Some(rel) => git_dir.join(rel.trim()),
        None => git_dir.clone(),
    };
    Ok(GitDirs { git_dir, common_dir, worktree })
}

fn parse_object_id(path: &Path, text: &str) -> Result<Digest, GitError> {
    Digest::from_hex(text.trim()).ok_or_else(|| GitError::Malformed(path.to_owned(), format!("bad object id {text:?}")))
}

fn resolve_ref(dirs: &GitDirs, name: &str, repo: &Path) -> Result<Digest, GitError> {
    let mut name = name.to_owned();
    for _ in 0..8 {
        let mut content = None;
        for base in [&dirs.git_dir, &dirs.common_dir] {
            if let Some(text) = read_text(&base.join(&name))? {
                content = Some((base.join(&name), text));
                break;
            }
        }
        let (path, text) = match content {
            Some(found) => found,
            None => {
                let packed = dirs.common_dir.join("packed-refs");
                let text = read_text(&packed)?.unwrap_or_default();
                let hit = text
                    .lines()
                    .filter(|l| !l.starts_with('#') && !l.starts_with('^'))
                    .filter_map(|l| l.split_once(' '))
                    .find(|(_, r)| *r == name);
                return match hit {
                    Some((hex, _)) => parse_object_id(&packed, hex),
                    None => Err(GitError::UnbornHead(repo.to_owned())),
                };
            }
        };
        match text.trim().strip_prefix("ref:") {
            Some(next) => name = next.trim().to_owned(),
            None => return parse_object_id(&path, &text),
        }
    }
    Err(GitError::Malformed(repo.to_owned(), "symbolic reference chain too long".into()))
}

fn head_commit(dirs: &GitDirs, repo: &Path) -> Result<Digest, GitError> {
    let head_path = dirs.git_dir.join("HEAD");
    let head = read_text(&head_path)?.ok_or_else(|| GitError::NotARepository(repo.to_owned()))?;
    match head.trim().strip_prefix("ref:") {
        Some(name) => resolve_ref(dirs, name.trim(), repo),
        None => parse_object_id(&head_path, &head),
    }
}

/// `swh:1:rev:` followed by the commit HEAD points to. Reads refs
/// textually; the object store is not consulted.
pub fn identify_git_head(repo: &Path) -> Result<QualifiedSwhid, GitError> {
    let dirs = locate_git_dirs(repo)?;
    let commit = head_commit(&dirs, repo)?;
    Ok(CoreSwhid::new(ObjectType::Revision, commit).into())
}

/// Reads a loose object, returning its kind and payload, or `None` when
/// the object is not stored loose (e.g. it lives in a packfile).
pub fn read_loose_object(git_dir: &Path, id: Digest) -> Result<Option<(String, Vec<u8>)>, GitError> {
    let hex = id.to_hex();
    let path = git_dir.join("objects").join(&hex[..2]).join(&hex[2..]);
    let file = match File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(GitError::Io { path, source: e }),
    };
    let mut raw = Vec::new();
    ZlibDecoder::new(file).read_to_end(&mut raw).map_err(|e| GitError::Io { path: path.clone(), source: e })?;
    let malformed = |why: &str| GitError::Malformed(path.clone(), why.to_owned());
    let nul = raw.iter().position(|&b| b == 0).ok_or_else(|| malformed("missing object header"))?;
    let header = std::str::from_utf8(&raw[..nul]).map_err(|_| malformed("non-ASCII object header"))?;
    let (kind, len) = header.split_once(' ').ok_or_else(|| malformed("bad object header"))?;
    let payload = raw[nul + 1..].to_vec();
    if len.parse::<usize>().ok() != Some(payload.len()) {
        return Err(malformed("object length does not match header"));
    }
    Ok(Some((kind.to_owned(), payload)))
}

/// Outcome of cross-checking HEAD against the repository contents.
#[derive(Debug, Clone)]
pub struct HeadVerification {
    pub head: CoreSwhid,
    /// The HEAD commit, when stored as a loose object.
    pub revision: Option<RevisionRecord>,
    /// Id recomputed from the parsed commit manifest.
    pub recomputed: Option<CoreSwhid>,
    /// Directory id of the checked-out working tree (default excludes).
    pub worktree_tree: Option<CoreSwhid>,
}

impl HeadVerification {
    /// False only when a check that could run disagreed.
    pub fn is_consistent(&self) -> bool {
        self.recomputed.is_none_or(|r| r == self.head)
    }

    /// Whether the working tree matches the commit's root directory.
    pub fn tree_matches(&self) -> Option<bool> {
        let rev = self.revision.as_ref()?;
        Some(self.worktree_tree?.digest() == rev.tree)
    }
}

pub fn verify_git_head(repo: &Path) -> Result<HeadVerification, GitError> {
    let dirs = locate_git_dirs(repo)?;
    let commit = head_commit(&dirs, repo)?;
    let head = CoreSwhid::new(ObjectType::Revision, commit);
    let revision = match read_loose_object(&dirs.common_dir, commit)? {
        Some((kind, payload)) if kind == "commit" => Some(
            RevisionRecord::from_git_payload(&payload)
                .map_err(|e| GitError::Malformed(dirs.common_dir.clone(), e.to_string()))?,
        ),
        Some((kind, _)) => {
            return Err(GitError::Malformed(repo.to_owned(), format!("HEAD points to a {kind}, not a commit")))
        }
        None => None,
    };
    let recomputed = revision.as_ref().map(compute_revision_id);
    let worktree_tree = match &dirs.worktree {
        Some(dir) => Some(identify_path(dir, &WalkOptions::default())?.root_id.core),
        None => None,
    };
    Ok(HeadVerification { head, revision, recomputed, worktree_tree })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::os::unix::fs::symlink;

    const EMPTY_TREE: &str = "swh:1:dir:4b825dc642cb6eb9a060e54bf8d69288fbee4904";

    #[test]
    fn empty_directory() {
        let tmp = tempfile::tempdir().unwrap();
        let report = identify_path(tmp.path(), &WalkOptions::default()).unwrap();
        assert_eq!(report.root_id.to_string(), EMPTY_TREE);
        assert_eq!(report.stats, WalkStats { dirs: 1, ..Default::default() });
    }

    #[test]
    fn vcs_metadata_is_excluded() {
        let tmp = tempfile::tempdir().unwrap();
        fs::create_dir_all(tmp.path().join(".git/objects")).unwrap();
        fs::write(tmp.path().join(".git/HEAD"), "ref: refs/heads/master\n").unwrap();
        fs::create_dir(tmp.path().join(".hg")).unwrap();
        let report = identify_path(tmp.path(), &WalkOptions::default()).unwrap();
        assert_eq!(report.root_id.to_string(), EMPTY_TREE);

        let keep_all = WalkOptions { exclude_patterns: vec![], ..Default::default() };
        assert_ne!(identify_path(tmp.path(), &keep_all).unwrap().root_id.to_string(), EMPTY_TREE);
    }

    #[test]
    fn file_equals_content_id() {
        let tmp = tempfile::tempdir().unwrap();
        let f = tmp.path().join("f");
        fs::write(&f, b"hello world\n").unwrap();
        let report = identify_path(&f, &WalkOptions::default()).unwrap();
        assert_eq!(report.root_id.core, compute_content_id(b"hello world\n"));
        assert_eq!(report.stats.bytes, 12);
    }

    #[test]
    fn size_limit() {
        let tmp = tempfile::tempdir().unwrap();
        fs::write(tmp.path().join("big"), vec![0u8; 100]).unwrap();
        let opts = WalkOptions { max_file_size: Some(99), ..Default::default() };
        assert!(matches!(identify_path(tmp.path(), &opts), Err(WalkError::FileTooLarge { size: 100, limit: 99, .. })));
        let opts = WalkOptions { max_file_size: Some(100), ..Default::default() };
        assert!(identify_path(tmp.path(), &opts).is_ok());
        let opts = WalkOptions { max_file_size: Some(0), ..Default::default() };
        assert!(matches!(identify_path(tmp.path(), &opts), Err(WalkError::InvalidOptions(_))));
    }

    #[test]
    fn bad_glob() {
        let opts = WalkOptions { exclude_patterns: vec!["[".into()], ..Default::default() };
        assert!(matches!(identify_path(Path::new("."), &opts), Err(WalkError::InvalidOptions(_))));
    }

    #[test]
    fn missing_path() {
        assert!(matches!(
            identify_path(Path::new("/definitely/not/here"), &WalkOptions::default()),
            Err(WalkError::NotFound(_))
        ));
    }

    #[test]
    fn symlinks() {
        let tmp = tempfile::tempdir().unwrap();
        symlink("nowhere", tmp.path().join("dangling")).unwrap();
        let report = identify_path(tmp.path(), &WalkOptions::default()).unwrap();
        let entry = report.per_entry[Path::new("dangling")];
        assert_eq!(entry.swhid, compute_content_id(b"nowhere"));
        assert_eq!(entry.mode, Some(EntryMode::Symlink));

        let follow = WalkOptions { follow_symlinks: true, ..Default::default() };
        assert!(matches!(identify_path(tmp.path(), &follow), Err(WalkError::BrokenSymlink(_))));

        fs::remove_file(tmp.path().join("dangling")).unwrap();
        fs::create_dir(tmp.path().join("d")).unwrap();
        symlink("..", tmp.path().join("d/up")).unwrap();
        assert!(matches!(identify_path(tmp.path(), &follow), Err(WalkError::SymlinkCycle(_))));
    }

    #[test]
    fn unreadable_child_aborts() {
        let tmp = tempfile::tempdir().unwrap();
        let f = tmp.path().join("secret");
        fs::write(&f, b"x").unwrap();
        fs::set_permissions(&f, fs::Permissions::from_mode(0o000)).unwrap();
        // root ignores permission bits; only assert when the denial is real
        if File::open(&f).is_err() {
            assert!(matches!(
                identify_path(tmp.path(), &WalkOptions::default()),
                Err(WalkError::PermissionDenied(_))
            ));
        }
    }

    #[test]
    fn git_head_resolution() {
        let tmp = tempfile::tempdir().unwrap();
        let repo = tmp.path();
        assert!(matches!(identify_git_head(repo), Err(GitError::NotARepository(_))));

        let git = repo.join(".git");
        fs::create_dir_all(git.join("refs/heads")).unwrap();
        fs::create_dir_all(git.join("objects")).unwrap();
        fs::write(git.join("HEAD"), "ref: refs/heads/main\n").unwrap();
        assert!(matches!(identify_git_head(repo), Err(GitError::UnbornHead(_))));

        let hash = "0064fbd0ad69de205ea6ec6999f3d3895e9442c2";
        fs::write(git.join("packed-refs"), format!("# pack-refs with: peeled\n{hash} refs/heads/main\n")).unwrap();
        assert_eq!(identify_git_head(repo).unwrap().to_string(), format!("swh:1:rev:{hash}"));

        let other = "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391";
        fs::write(git.join("refs/heads/main"), format!("{other}\n")).unwrap();
        assert_eq!(identify_git_head(repo).unwrap().to_string(), format!("swh:1:rev:{other}"));

        fs::write(git.join("HEAD"), format!("{hash}\n")).unwrap();
        assert_eq!(identify_git_head(repo).unwrap().to_string(), format!("swh:1:rev:{hash}"));
    }
}
