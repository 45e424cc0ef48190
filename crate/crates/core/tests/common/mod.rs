//! Shared helpers for integration tests: the `git` binary as an independent
//! hashing oracle, fixture builders and proptest generators.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::os::unix::fs::{symlink, PermissionsExt};
use std::path::Path;
use std::process::{Command, Stdio};
use std::io::Write;

use proptest::prelude::*;
use swhid_core::{CoreSwhid, Digest, LineRange, ObjectType, QualifiedSwhid};

pub fn git(dir: &Path, args: &[&str]) -> String {
    git_env(dir, args, &[], None)
}

pub fn git_env(dir: &Path, args: &[&str], env: &[(&str, &str)], stdin: Option<&[u8]>) -> String {
    let mut cmd = Command::new("git");
    cmd.current_dir(dir)
        .args(args)
        .env("GIT_CONFIG_NOSYSTEM", "1")
        .env("GIT_CONFIG_GLOBAL", "/dev/null")
        .env("GIT_AUTHOR_NAME", "Jane Doe")
        .env("GIT_AUTHOR_EMAIL", "jane@example.org")
        .env("GIT_COMMITTER_NAME", "Jane Doe")
        .env("GIT_COMMITTER_EMAIL", "jane@example.org")
        .env("GIT_AUTHOR_DATE", "1500000000 +0200")
        .env("GIT_COMMITTER_DATE", "1500000000 +0200")
        .stdin(if stdin.is_some() { Stdio::piped() } else { Stdio::null() })
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    for (k, v) in env {
        cmd.env(k, v);
    }
    let mut child = cmd.spawn().expect("git must be installed to run the oracle tests");
    if let Some(input) = stdin {
        child.stdin.take().unwrap().write_all(input).unwrap();
    }
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success(), "git {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap().trim().to_owned()
}

/// Blob hashes computed by `git hash-object`, one per input, in one process.
pub fn git_blob_hashes(inputs: &[Vec<u8>]) -> Vec<String> {
    let tmp = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for (i, data) in inputs.iter().enumerate() {
        let p = tmp.path().join(format!("b{i}"));
        fs::write(&p, data).unwrap();
        paths.push(p.to_string_lossy().into_owned());
    }
    let list = paths.join("\n") + "\n";
    let out = git_env(tmp.path(), &["hash-object", "--no-filters", "--stdin-paths"], &[], Some(list.as_bytes()));
    out.lines().map(str::to_owned).collect()
}

/// Tree hash of `dir` as `git add -A && git write-tree` computes it, using
/// a throwaway repository outside the tree.
pub fn git_tree_hash(dir: &Path) -> String {
    let repo = tempfile::tempdir().unwrap();
    let gd = repo.path().join("g");
    let gd_s = gd.to_string_lossy().into_owned();
    let wt = dir.to_string_lossy().into_owned();
    let env = [("GIT_DIR", gd_s.as_str()), ("GIT_WORK_TREE", wt.as_str())];
    git_env(repo.path(), &["init", "-q"], &env, None);
    git_env(repo.path(), &["config", "core.fileMode", "true"], &env, None);
    git_env(repo.path(), &["config", "core.symlinks", "true"], &env, None);
    git_env(repo.path(), &["add", "-A", "."], &env, None);
    git_env(repo.path(), &["write-tree"], &env, None)
}

// ---------------------------------------------------------------------------
// Random file trees

#[derive(Debug, Clone)]
pub enum Node {
    File { data: Vec<u8>, exec: bool },
    Link(String),
    Dir(BTreeMap<String, Node>),
}

impl Node {
    pub fn count(&self) -> usize {
        match self {
            Node::Dir(children) => children.values().map(|c| 1 + c.count()).sum(),
            _ => 0,
        }
    }

    pub fn write(&self, path: &Path) {
        match self {
            Node::File { data, exec } => {
                fs::write(path, data).unwrap();
                let mode = if *exec { 0o755 } else { 0o644 };
                fs::set_permissions(path, fs::Permissions::from_mode(mode)).unwrap();
            }
            Node::Link(target) => symlink(target, path).unwrap(),
            Node::Dir(children) => {
                fs::create_dir_all(path).unwrap();
                for (name, child) in children {
                    child.write(&path.join(name));
                }
            }
        }
    }
}

fn entry_name() -> impl Strategy<Value = String> {
    // '-', '.', '_' and digits straddle '/' in byte order, which exercises
    // git's directory sort key.
    "[a-c.\\-_0-9]{1,4}".prop_filter("reserved names", |n| n != "." && n != ".." && n != ".git")
}

fn leaf() -> impl Strategy<Value = Node> {
    prop_oneof![
        4 => (proptest::collection::vec(any::<u8>(), 0..64), any::<bool>())
            .prop_map(|(data, exec)| Node::File { data, exec }),
        1 => "[a-z/.]{1,12}".prop_map(Node::Link),
    ]
}

/// Trees of depth at most 4 with at most 20 entries and no empty
/// directories (git cannot record those).
pub fn tree_strategy() -> impl Strategy<Value = Node> {
    let node = leaf().prop_recursive(3, 20, 5, |inner| {
        proptest::collection::btree_map(entry_name(), inner, 1..5).prop_map(Node::Dir)
    });
    proptest::collection::btree_map(entry_name(), node, 0..6)
        .prop_map(Node::Dir)
        .prop_filter("at most 20 entries, no empty dirs", |n| n.count() <= 20 && !has_empty_subdir(n, true))
}

fn has_empty_subdir(node: &Node, is_root: bool) -> bool {
    match node {
        Node::Dir(c) if c.is_empty() => !is_root,
        Node::Dir(c) => c.values().any(|n| has_empty_subdir(n, false)),
        _ => false,
    }
}

// ---------------------------------------------------------------------------
// Qualified identifiers

pub fn digest() -> impl Strategy<Value = Digest> {
    any::<[u8; 20]>().prop_map(Digest)
}

pub fn object_type() -> impl Strategy<Value = ObjectType> {
    prop::sample::select(ObjectType::ALL.to_vec())
}

pub fn core() -> impl Strategy<Value = CoreSwhid> {
    (object_type(), digest()).prop_map(|(t, d)| CoreSwhid::new(t, d))
}

fn origin() -> impl Strategy<Value = String> {
    prop_oneof![
        "https://[a-z]{1,10}\\.(org|com)/[a-z0-9/._-]{0,20}",
        // separators, escapes, spaces and non-ASCII must survive encoding
        "https?://[a-z]{1,6}/[a-z;=%?&# :/~é\u{1F600}]{0,20}",
        any::<String>().prop_filter("non-empty", |s| !s.is_empty()),
    ]
}

fn path() -> impl Strategy<Value = Vec<u8>> {
    proptest::collection::vec(any::<u8>(), 0..24).prop_map(|mut p| {
        p.insert(0, b'/');
        p
    })
}

fn lines() -> impl Strategy<Value = LineRange> {
    (1u64..100_000, proptest::option::of(0u64..1000))
        .prop_map(|(start, len)| LineRange::new(start, len.map(|l| start + l)).unwrap())
}

pub fn qualified() -> impl Strategy<Value = QualifiedSwhid> {
    (
        core(),
        proptest::option::of(origin()),
        proptest::option::of(digest()),
        proptest::option::of(core()),
        proptest::option::of(path()),
        proptest::option::of(lines()),
    )
        .prop_map(|(core, origin, visit, anchor, path, lines)| QualifiedSwhid {
            core,
            origin,
            visit: visit.map(|d| CoreSwhid::new(ObjectType::Snapshot, d)),
            anchor,
            path,
            lines,
            extra: Vec::new(),
        })
}

/// Mutations of a canonical identifier string that always yield an
/// invalid identifier, paired with the error kind they must produce.
#[derive(Debug, Clone)]
pub enum Mutation {
    FlipHexCase,
    TruncateDigest(usize),
    ExtendDigest,
    TrailingSeparator,
    DoubleSeparator,
    BadVersion(u32),
    BadTag(String),
    BadScheme,
    EmptyValue,
    DuplicateOrigin,
    UnknownKey,
    ZeroLine,
    SpaceInValue,
}

pub fn mutation() -> impl Strategy<Value = Mutation> {
    prop_oneof![
        Just(Mutation::FlipHexCase),
        (1usize..40).prop_map(Mutation::TruncateDigest),
        Just(Mutation::ExtendDigest),
        Just(Mutation::TrailingSeparator),
        Just(Mutation::DoubleSeparator),
        (2u32..100).prop_map(Mutation::BadVersion),
        "[a-z]{3}".prop_filter("not a tag", |t| ObjectType::from_tag(t).is_none()).prop_map(Mutation::BadTag),
        Just(Mutation::BadScheme),
        Just(Mutation::EmptyValue),
        Just(Mutation::DuplicateOrigin),
        Just(Mutation::UnknownKey),
        Just(Mutation::ZeroLine),
        Just(Mutation::SpaceInValue),
    ]
}

impl Mutation {
    /// Applies the mutation, returning the text and the expected error kind.
    pub fn apply(&self, id: &QualifiedSwhid) -> (String, &'static str) {
        let core = id.core.to_string();
        let hex = id.core.digest().to_hex();
        let rest = id.to_string()[core.len()..].to_owned();
        let tag = id.core.object_type().tag();
        match self {
            Mutation::FlipHexCase => {
                // guarantee at least one letter to flip
                let mut h: Vec<u8> = hex.clone().into_bytes();
                h[0] = b'a';
                let upper: String = h.iter().map(|b| b.to_ascii_uppercase() as char).collect();
                (format!("swh:1:{tag}:{upper}{rest}"), "BadHash")
            }
            Mutation::TruncateDigest(n) => (format!("swh:1:{tag}:{}{rest}", &hex[..*n]), "BadHash"),
            Mutation::ExtendDigest => (format!("swh:1:{tag}:{hex}0{rest}"), "BadHash"),
            Mutation::TrailingSeparator => (format!("{id};"), "BadQualifier"),
            Mutation::DoubleSeparator => (format!("{core};{rest}"), "BadQualifier"),
            Mutation::BadVersion(v) => (format!("swh:{v}:{tag}:{hex}{rest}"), "BadVersion"),
            Mutation::BadTag(t) => (format!("swh:1:{t}:{hex}{rest}"), "BadType"),
            Mutation::BadScheme => (format!("swx:1:{tag}:{hex}{rest}"), "BadScheme"),
            Mutation::EmptyValue => (format!("{core};path={rest}"), "BadQualifier"),
            Mutation::DuplicateOrigin => {
                let mut twice = id.clone();
                twice.origin = Some(twice.origin.unwrap_or_else(|| "https://x.org/".into()));
                let text = twice.to_string();
                let origin = text.split(';').find(|s| s.starts_with("origin=")).unwrap().to_owned();
                (format!("{text};{origin}"), "DuplicateQualifier")
            }
            Mutation::UnknownKey => (format!("{id};frob=1"), "UnknownQualifier"),
            Mutation::ZeroLine => {
                let mut no_lines = id.clone();
                no_lines.lines = None;
                (format!("{no_lines};lines=0"), "BadQualifier")
            }
            Mutation::SpaceInValue => (format!("{core};origin=a b{rest}"), "BadQualifier"),
        }
    }
}

// ---------------------------------------------------------------------------
// Fixture repositories

pub struct FixtureRepo {
    pub name: &'static str,
    pub dir: tempfile::TempDir,
    /// HEAD as reported by `git rev-parse HEAD`.
    pub head: String,
    /// Whether the working tree matches HEAD's tree (no empty directories,
    /// no uncommitted files).
    pub clean: bool,
}

fn commit_all(dir: &Path, msg: &str, date: &str) {
    let env = [("GIT_AUTHOR_DATE", date), ("GIT_COMMITTER_DATE", date)];
    git_env(dir, &["add", "-A"], &env, None);
    git_env(dir, &["commit", "-q", "--allow-empty", "--allow-empty-message", "-m", msg], &env, None);
}

fn init(dir: &Path) {
    git(dir, &["init", "-q", "-b", "main"]);
    git(dir, &["config", "commit.gpgsign", "false"]);
}

/// Writes a raw commit object and points the current branch at it.
fn raw_commit(dir: &Path, body: &[u8]) {
    let id = git_env(dir, &["hash-object", "-t", "commit", "-w", "--stdin"], &[], Some(body));
    git(dir, &["update-ref", "HEAD", &id]);
}

fn head_tree(dir: &Path) -> String {
    git(dir, &["rev-parse", "HEAD^{tree}"])
}

/// Repositories with pinned dates covering merges, empty messages, extra
/// headers and unusual time zones.
pub fn fixture_repos() -> Vec<FixtureRepo> {
    type Build = fn(&Path) -> bool;
    let builders: Vec<(&'static str, Build)> = vec![
        ("single", |d| {
            fs::write(d.join("a"), "hello world\n").unwrap();
            commit_all(d, "Initial commit", "1500000000 +0200");
            true
        }),
        ("linear", |d| {
            fs::write(d.join("a"), "one\n").unwrap();
            commit_all(d, "one", "1500000000 +0200");
            fs::write(d.join("a"), "two\n").unwrap();
            commit_all(d, "two", "1500000100 +0200");
            true
        }),
        ("merge", |d| {
            fs::write(d.join("a"), "base\n").unwrap();
            commit_all(d, "base", "1500000000 +0000");
            git(d, &["checkout", "-q", "-b", "side"]);
            fs::write(d.join("b"), "side\n").unwrap();
            commit_all(d, "side", "1500000100 +0000");
            git(d, &["checkout", "-q", "main"]);
            fs::write(d.join("c"), "main\n").unwrap();
            commit_all(d, "main", "1500000200 +0000");
            let env = [("GIT_AUTHOR_DATE", "1500000300 +0000"), ("GIT_COMMITTER_DATE", "1500000300 +0000")];
            git_env(d, &["merge", "-q", "--no-ff", "-m", "merge side", "side"], &env, None);
            true
        }),
        ("octopus", |d| {
            fs::write(d.join("a"), "base\n").unwrap();
            commit_all(d, "base", "1500000000 +0000");
            for b in ["x", "y"] {
                git(d, &["checkout", "-q", "-b", b, "main"]);
                fs::write(d.join(b), b).unwrap();
                commit_all(d, b, "1500000100 +0000");
            }
            git(d, &["checkout", "-q", "main"]);
            let env = [("GIT_AUTHOR_DATE", "1500000300 +0000"), ("GIT_COMMITTER_DATE", "1500000300 +0000")];
            git_env(d, &["merge", "-q", "--no-ff", "-m", "octopus", "x", "y"], &env, None);
            true
        }),
        ("empty-message", |d| {
            fs::write(d.join("a"), "x").unwrap();
            commit_all(d, "", "1500000000 -0700");
            true
        }),
        ("encoding-header", |d| {
            fs::write(d.join("a"), "x").unwrap();
            git(d, &["config", "i18n.commitEncoding", "ISO-8859-1"]);
            commit_all(d, "latin", "1500000000 +0100");
            true
        }),
        ("gpgsig-header", |d| {
            fs::write(d.join("a"), "signed\n").unwrap();
            commit_all(d, "base", "1500000000 +0000");
            let tree = head_tree(d);
            let body = format!(
                "tree {tree}\nauthor Jane Doe <jane@example.org> 1500000000 +0000\ncommitter Jane Doe <jane@example.org> 1500000000 +0000\ngpgsig -----BEGIN PGP SIGNATURE-----\n \n iQEzBAABCAAdFiEE\n =abcd\n -----END PGP SIGNATURE-----\n\nsigned commit\n"
            );
            raw_commit(d, body.as_bytes());
            true
        }),
        ("negative-utc", |d| {
            fs::write(d.join("a"), "utc\n").unwrap();
            commit_all(d, "base", "1500000000 +0000");
            let tree = head_tree(d);
            let body = format!(
                "tree {tree}\nauthor Jane Doe <jane@example.org> 1500000000 -0000\ncommitter Jane Doe <jane@example.org> 1500000000 -0000\n\nmessage without newline"
            );
            raw_commit(d, body.as_bytes());
            true
        }),
        ("half-hour-zone", |d| {
            fs::write(d.join("a"), "india\n").unwrap();
            commit_all(d, "multi\nline\n\nmessage", "1500000000 +0530");
            true
        }),
        ("detached", |d| {
            fs::write(d.join("a"), "1\n").unwrap();
            commit_all(d, "one", "1500000000 +0000");
            fs::write(d.join("a"), "2\n").unwrap();
            commit_all(d, "two", "1500000100 +0000");
            git(d, &["checkout", "-q", "HEAD~1"]);
            true
        }),
        ("packed-refs", |d| {
            fs::write(d.join("a"), "packed\n").unwrap();
            commit_all(d, "packed", "1500000000 +0000");
            git(d, &["pack-refs", "--all"]);
            true
        }),
        ("modes-and-links", |d| {
            fs::write(d.join("run.sh"), "#!/bin/sh\n").unwrap();
            fs::set_permissions(d.join("run.sh"), fs::Permissions::from_mode(0o755)).unwrap();
            symlink("run.sh", d.join("link")).unwrap();
            fs::create_dir(d.join("sub")).unwrap();
            fs::write(d.join("sub/x"), "x\n").unwrap();
            commit_all(d, "modes", "1500000000 -1200");
            true
        }),
        ("dirty-tree", |d| {
            fs::write(d.join("a"), "committed\n").unwrap();
            commit_all(d, "committed", "1500000000 +0000");
            fs::write(d.join("a"), "edited\n").unwrap();
            false
        }),
    ];
    builders
        .into_iter()
        .map(|(name, build)| {
            let dir = tempfile::tempdir().unwrap();
            init(dir.path());
            let clean = build(dir.path());
            let head = git(dir.path(), &["rev-parse", "HEAD"]);
            FixtureRepo { name, dir, head, clean }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Archive client over recorded transcripts

use std::sync::{Arc, Mutex};
use std::time::Duration;

use swhid_core::client::{ArchiveClient, ClientConfig, ReplayTransport, Sleeper};

#[derive(Default)]
pub struct RecordingSleeper(pub Mutex<Vec<Duration>>);

impl Sleeper for RecordingSleeper {
    fn sleep(&self, d: Duration) {
        self.0.lock().unwrap().push(d);
    }
}

impl RecordingSleeper {
    pub fn delays(&self) -> Vec<Duration> {
        self.0.lock().unwrap().clone()
    }
}

pub struct Replay {
    pub client: ArchiveClient,
    pub transport: Arc<ReplayTransport>,
    pub sleeper: Arc<RecordingSleeper>,
}

pub fn transcript_path(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/transcripts").join(format!("{name}.json"))
}

pub fn replay(name: &str) -> Replay {
    replay_with(name, ClientConfig::default())
}

pub fn replay_with(name: &str, config: ClientConfig) -> Replay {
    let text = fs::read_to_string(transcript_path(name)).unwrap();
    let transport = Arc::new(ReplayTransport::from_json(&text).unwrap());
    let sleeper = Arc::new(RecordingSleeper::default());
    let client = ArchiveClient::with_transport(config, transport.clone(), sleeper.clone()).unwrap();
    Replay { client, transport, sleeper }
}
