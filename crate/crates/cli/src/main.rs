//! `swhid`: compute, parse, resolve and check Software Heritage identifiers.
//!
//! Exit codes: 0 success, 1 local failure, 2 usage or parse error, 3 remote
//! failure.

mod config;

use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use swhid_core::client::{ArchiveClient, ClientError, SaveRequest, SaveStatus, VisitType};
use swhid_core::walker::{identify_git_head, verify_git_head};
use swhid_core::{
    extract_swhid_from_url, format_swhid, identify_path, parse_swhid_with_diagnostics, resolve_to_url,
    validate_semantics, ObjectType, ParsePolicy, QualifiedSwhid, WalkOptions,
};

use config::FileConfig;

const EXIT_OK: u8 = 0;
const EXIT_LOCAL: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_REMOTE: u8 = 3;

#[derive(Parser)]
#[command(name = "swhid", version, about = "Software Heritage identifiers: compute, parse, resolve, archive")]
struct Cli {
    /// Config file (TOML). Defaults to $XDG_CONFIG_HOME/swhid/config.toml when present.
    #[arg(long, global = true, env = "SWHID_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Plain,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum IdentifyType {
    Auto,
    Cnt,
    Dir,
    Rev,
}

#[derive(Args)]
struct RemoteArgs {
    /// Base URL of the archive API.
    #[arg(long, env = "SWH_API_BASE")]
    api: Option<String>,
    /// API token (raises rate limits).
    #[arg(long, env = "SWH_TOKEN", hide_env_values = true)]
    token: Option<String>,
    #[arg(long, value_enum, default_value = "plain")]
    format: OutputFormat,
}

#[derive(Subcommand)]
enum Command {
    /// Compute identifiers of files, directories or git checkouts.
    Identify {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long = "type", value_enum, default_value = "auto")]
        object_type: IdentifyType,
        /// Exclude entries matching this glob (repeatable; adds to the defaults).
        #[arg(long)]
        exclude: Vec<String>,
        /// Do not exclude .git, .svn and .hg.
        #[arg(long)]
        no_default_excludes: bool,
        #[arg(long)]
        follow_symlinks: bool,
        #[arg(long)]
        max_file_size: Option<u64>,
        /// List every entry of directories, not just the root.
        #[arg(long)]
        all: bool,
        /// With --type rev, recompute the HEAD commit id from its object.
        #[arg(long)]
        verify: bool,
        #[arg(long, value_enum, default_value = "plain")]
        format: OutputFormat,
    },
    /// Parse identifiers and print their canonical form ("-" reads stdin).
    Parse {
        #[arg(required = true)]
        ids: Vec<String>,
        /// Keep unknown qualifiers and accept uppercase hex.
        #[arg(long)]
        lax: bool,
        /// Only set the exit code.
        #[arg(long)]
        check: bool,
        #[arg(long, value_enum, default_value = "plain")]
        format: OutputFormat,
    },
    /// Turn an identifier into an archive URL, or an archive URL back into an identifier.
    Resolve {
        id: String,
        #[arg(long, env = "SWH_ARCHIVE_BASE")]
        base: Option<String>,
        #[arg(long, value_enum, default_value = "plain")]
        format: OutputFormat,
    },
    /// Ask the archive to save a repository.
    Save {
        visit_type: String,
        origin: String,
        #[command(flatten)]
        remote: RemoteArgs,
    },
    /// Show the state of the latest save request for a repository.
    Status {
        visit_type: String,
        origin: String,
        #[command(flatten)]
        remote: RemoteArgs,
    },
    /// Check whether the archive knows an identifier.
    Known {
        id: String,
        #[command(flatten)]
        remote: RemoteArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let file = match FileConfig::load(cli.config.as_deref()) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let code = match cli.command {
        Command::Identify {
            paths,
            object_type,
            exclude,
            no_default_excludes,
            follow_symlinks,
            max_file_size,
            all,
            verify,
            format,
        } => {
            let mut opts = WalkOptions { follow_symlinks, max_file_size, ..Default::default() };
            if no_default_excludes {
                opts.exclude_patterns.clear();
            }
            opts.exclude_patterns.extend(exclude);
            cmd_identify(&paths, object_type, &opts, all, verify, format)
        }
        Command::Parse { ids, lax, check, format } => {
            let policy = if lax { ParsePolicy::Lax } else { ParsePolicy::Strict };
            cmd_parse(&ids, policy, check, format)
        }
        Command::Resolve { id, base, format } => cmd_resolve(&id, &file.archive_base(base), format),
        Command::Save { visit_type, origin, remote } => {
            cmd_save_or_status(&file, &visit_type, &origin, remote, true)
        }
        Command::Status { visit_type, origin, remote } => {
            cmd_save_or_status(&file, &visit_type, &origin, remote, false)
        }
        Command::Known { id, remote } => cmd_known(&file, &id, remote),
    };
    ExitCode::from(code)
}

fn print_json(value: &Value) {
    let mut out = io::stdout().lock();
    let _ = writeln!(out, "{value}");
}

fn cmd_identify(
    paths: &[PathBuf],
    object_type: IdentifyType,
    opts: &WalkOptions,
    all: bool,
    verify: bool,
    format: OutputFormat,
) -> u8 {
    let mut code = EXIT_OK;
    for path in paths {
        if let Err(msg) = identify_one(path, object_type, opts, all, verify, format) {
            eprintln!("error: {}: {msg}", path.display());
            code = EXIT_LOCAL;
        }
    }
    code
}

fn identify_one(
    path: &Path,
    object_type: IdentifyType,
    opts: &WalkOptions,
    all: bool,
    verify: bool,
    format: OutputFormat,
) -> Result<(), String> {
    let shown = path.display().to_string();
    if object_type == IdentifyType::Rev {
        let (id, check) = if verify {
            let v = verify_git_head(path).map_err(|e| e.to_string())?;
            if !v.is_consistent() {
                return Err(format!(
                    "HEAD is {} but its commit object hashes to {}",
                    v.head,
                    v.recomputed.map(|r| r.to_string()).unwrap_or_default()
                ));
            }
            let check = json!({
                "recomputed": v.recomputed.map(|r| r.to_string()),
                "worktree_matches_head": v.tree_matches(),
            });
            (QualifiedSwhid::from(v.head), Some(check))
        } else {
            (identify_git_head(path).map_err(|e| e.to_string())?, None)
        };
        match format {
            OutputFormat::Plain => println!("{id}\t{shown}"),
            OutputFormat::Json => {
                let mut obj = json!({"path": shown, "swhid": id.to_string()});
                if let Some(check) = check {
                    obj["verification"] = check;
                }
                print_json(&obj);
            }
        }
        return Ok(());
    }

    let report = identify_path(path, opts).map_err(|e| e.to_string())?;
    let actual = report.root_id.core.object_type();
    let wanted = match object_type {
        IdentifyType::Cnt => Some(ObjectType::Content),
        IdentifyType::Dir => Some(ObjectType::Directory),
        _ => None,
    };
    if let Some(wanted) = wanted {
        if wanted != actual {
            return Err(format!("is a {}, not a {}", actual.name(), wanted.name()));
        }
    }
    match format {
        OutputFormat::Plain => {
            println!("{}\t{shown}", report.root_id);
            if all {
                for (rel, entry) in report.per_entry.iter().filter(|(p, _)| !p.as_os_str().is_empty()) {
                    println!("{}\t{}", entry.swhid, path.join(rel).display());
                }
            }
        }
        OutputFormat::Json => {
            let mut obj = json!({
                "path": shown,
                "swhid": report.root_id.to_string(),
                "stats": report.stats,
            });
            if all {
                let entries: serde_json::Map<String, Value> = report
                    .per_entry
                    .iter()
                    .filter(|(p, _)| !p.as_os_str().is_empty())
                    .map(|(p, e)| (p.display().to_string(), Value::String(e.swhid.to_string())))
                    .collect();
                obj["entries"] = Value::Object(entries);
            }
            print_json(&obj);
        }
    }
    Ok(())
}

fn parse_json(id: &QualifiedSwhid, input: &str, diagnostics: &[swhid_core::Diagnostic]) -> Value {
    json!({
        "input": input,
        "swhid": format_swhid(id),
        "core": id.core.to_string(),
        "object_type": id.core.object_type().name(),
        "origin": id.origin,
        "visit": id.visit.map(|v| v.to_string()),
        "anchor": id.anchor.map(|a| a.to_string()),
        "path": id.path.as_ref().map(|p| String::from_utf8_lossy(p).into_owned()),
        "lines": id.lines.map(|l| json!({"start": l.start(), "end": l.last(), "count": l.count()})),
        "diagnostics": diagnostics,
    })
}

fn cmd_parse(ids: &[String], policy: ParsePolicy, check: bool, format: OutputFormat) -> u8 {
    let mut inputs: Vec<String> = Vec::new();
    for id in ids {
        if id == "-" {
            for line in io::stdin().lock().lines() {
                match line {
                    Ok(l) if l.trim().is_empty() => {}
                    Ok(l) => inputs.push(l.trim().to_owned()),
                    Err(e) => {
                        eprintln!("error: reading stdin: {e}");
                        return EXIT_LOCAL;
                    }
                }
            }
        } else {
            inputs.push(id.clone());
        }
    }

    let mut code = EXIT_OK;
    for input in &inputs {
        match parse_swhid_with_diagnostics(input, policy) {
            Ok((id, mut diags)) => {
                diags.extend(validate_semantics(&id));
                if !check {
                    for d in &diags {
                        eprintln!("{input}: {d}");
                    }
                    match format {
                        OutputFormat::Plain => println!("{}", format_swhid(&id)),
                        OutputFormat::Json => print_json(&parse_json(&id, input, &diags)),
                    }
                }
            }
            Err(e) => {
                if !check {
                    eprintln!("error: {input}: {}: {e}", e.kind());
                }
                code = EXIT_USAGE;
            }
        }
    }
    code
}

fn cmd_resolve(text: &str, base: &str, format: OutputFormat) -> u8 {
    // an archive URL goes the other way
    if text.starts_with("http://") || text.starts_with("https://") {
        return match extract_swhid_from_url(text) {
            Ok(id) => {
                match format {
                    OutputFormat::Plain => println!("{id}"),
                    OutputFormat::Json => print_json(&json!({"url": text, "swhid": id.to_string()})),
                }
                EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_USAGE
            }
        };
    }
    let id = match text.parse::<QualifiedSwhid>() {
        Ok(id) => id,
        Err(e) => {
            eprintln!("error: {text}: {}: {e}", e.kind());
            return EXIT_USAGE;
        }
    };
    match resolve_to_url(&id, base) {
        Ok(r) => {
            match format {
                OutputFormat::Plain => println!("{}", r.url),
                OutputFormat::Json => print_json(&json!({"swhid": id.to_string(), "url": r.url, "base": r.base})),
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn client_error_code(e: &ClientError) -> u8 {
    match e {
        ClientError::InvalidRequest(_) => EXIT_USAGE,
        _ => EXIT_REMOTE,
    }
}

fn make_client(file: &FileConfig, remote: &RemoteArgs) -> Result<ArchiveClient, u8> {
    ArchiveClient::new(file.client(remote.api.clone(), remote.token.clone())).map_err(|e| {
        eprintln!("error: {e}");
        client_error_code(&e)
    })
}

fn print_status(status: &SaveStatus, req: &SaveRequest, format: OutputFormat) {
    match format {
        OutputFormat::Plain => {
            let task = status.task_state.as_deref().unwrap_or("-");
            println!("{}\t{}\t{}\t{}", status.request_state, task, req.visit_type, req.origin_url);
        }
        OutputFormat::Json => {
            let raw: Value = serde_json::from_str(&status.raw).unwrap_or(Value::String(status.raw.clone()));
            print_json(&json!({
                "visit_type": req.visit_type,
                "origin_url": req.origin_url,
                "request_state": status.request_state.to_string(),
                "task_state": status.task_state,
                "request_id": status.request_id,
                "request_date": status.request_date,
                "raw": raw,
            }));
        }
    }
}

fn cmd_save_or_status(file: &FileConfig, visit_type: &str, origin: &str, remote: RemoteArgs, submit: bool) -> u8 {
    let req = match visit_type.parse::<VisitType>().and_then(|vt| SaveRequest::new(vt, origin)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let client = match make_client(file, &remote) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let result = if submit { client.submit_save(&req) } else { client.poll_save(&req) };
    match result {
        Ok(status) => {
            print_status(&status, &req, remote.format);
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            client_error_code(&e)
        }
    }
}

fn cmd_known(file: &FileConfig, text: &str, remote: RemoteArgs) -> u8 {
    let id = match text.parse::<QualifiedSwhid>() {
        Ok(id) => id,
        Err(e) => {
            eprintln!("error: {text}: {}: {e}", e.kind());
            return EXIT_USAGE;
        }
    };
    let client = match make_client(file, &remote) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match client.check_known(&id) {
        Ok(k) => {
            match remote.format {
                OutputFormat::Plain => match &k.resolved_url {
                    Some(url) => println!("known: {}\t{url}", k.known),
                    None => println!("known: {}", k.known),
                },
                OutputFormat::Json => print_json(&json!({"swhid": id.to_string(), "known": k.known, "resolved_url": k.resolved_url})),
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            client_error_code(&e)
        }
    }
}
