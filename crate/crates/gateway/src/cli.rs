//! The `pg` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use pgzone_core::ruledsl::Value;
use serde_json::Value as Json;

use crate::client::{Client, ClientError};
use crate::config::Config;

#[derive(Parser, Debug)]
#[command(name = "pg", version, about = "Client and server for a pgzone data management zone")]
pub struct Cli {
    /// Gateway base URL.
    #[arg(long, global = true, env = "PG_URL", default_value = "http://127.0.0.1:1247")]
    url: String,
    /// Session token; overrides the token file.
    #[arg(long, global = true, env = "PG_TOKEN", hide_env_values = true)]
    token: Option<String>,
    /// Where `pg login` stores the session token.
    #[arg(long, global = true, env = "PG_TOKEN_FILE")]
    token_file: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run the gateway server.
    Serve {
        #[arg(long, env = "PG_CONFIG")]
        config: Option<PathBuf>,
    },
    /// Authenticate and store a session token.
    Login {
        user: String,
        /// Secret; read from PG_SECRET or the first line of stdin if absent.
        #[arg(long, env = "PG_SECRET", hide_env_values = true)]
        secret: Option<String>,
    },
    /// Upload a local file ("-" for stdin).
    Put {
        path: String,
        local: PathBuf,
        #[arg(long)]
        resc: Option<String>,
    },
    /// Download an object to a file or stdout.
    Get {
        path: String,
        local: Option<PathBuf>,
        /// Print the catalog record and metadata instead of the bytes.
        #[arg(long)]
        json: bool,
    },
    Rm {
        path: String,
    },
    Mkdir {
        path: String,
        #[arg(long, default_value = "plain")]
        kind: String,
        #[arg(long)]
        owner: Option<String>,
    },
    Replicate {
        path: String,
        resource: String,
    },
    /// Grant (or with "none", revoke) access to a path.
    Acl {
        path: String,
        principal: String,
        perm: String,
    },
    #[command(subcommand)]
    Meta(MetaCmd),
    #[command(subcommand)]
    Rule(RuleCmd),
    #[command(subcommand)]
    Wf(WfCmd),
    #[command(subcommand)]
    Stream(StreamCmd),
    #[command(subcommand)]
    Admin(AdminCmd),
}

#[derive(Subcommand, Debug)]
enum MetaCmd {
    Add {
        path: String,
        name: String,
        value: String,
        #[arg(default_value = "")]
        comment: String,
    },
    /// Paths matching a predicate such as `name = "site" and value like "a*"`.
    Query {
        predicate: String,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand, Debug)]
enum RuleCmd {
    /// Add every rule in a file ("-" for stdin).
    Add {
        file: PathBuf,
    },
    Rm {
        name: String,
    },
    List {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand, Debug)]
enum WfCmd {
    /// Attach the procedure in a file to a workflow collection.
    Attach { collection: String, file: PathBuf },
    /// Run a workflow with `name=value` bindings.
    Run {
        workflow_id: String,
        bindings: Vec<String>,
        #[arg(long)]
        json: bool,
    },
    Rerun {
        run_id: String,
        overrides: Vec<String>,
        #[arg(long)]
        json: bool,
    },
    Show {
        run_id: String,
        #[arg(long)]
        json: bool,
    },
    Diff {
        a: String,
        b: String,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand, Debug)]
enum StreamCmd {
    /// Ingest one framed segment from a file ("-" for stdin).
    Ingest { collection: String, file: PathBuf },
    /// Write the framed records with from <= t < to.
    Read {
        collection: String,
        #[arg(long)]
        from: Option<u64>,
        #[arg(long)]
        to: Option<u64>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    Stat {
        collection: String,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand, Debug)]
enum AdminCmd {
    Adduser {
        name: String,
        #[arg(long, default_value = "user")]
        role: String,
        #[arg(long, env = "PG_NEW_SECRET", hide_env_values = true)]
        secret: String,
    },
    Mkresc {
        name: String,
        driver: String,
        root: String,
        #[arg(long, default_value = "cache")]
        kind: String,
        /// Make this the default resource for uploads.
        #[arg(long)]
        default: bool,
    },
    Adddriver {
        name: String,
        kind: String,
    },
    Audit {
        #[arg(long)]
        event: Option<String>,
        #[arg(long)]
        actor: Option<String>,
        #[arg(long)]
        json: bool,
    },
}

fn default_token_file() -> PathBuf {
    std::env::var_os("HOME").map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")).join(".pg_token")
}

fn read_input(p: &Path, stdin: &mut dyn Read) -> Result<Vec<u8>, ClientError> {
    if p == Path::new("-") {
        let mut buf = Vec::new();
        stdin.read_to_end(&mut buf).map_err(|e| ClientError::Usage(e.to_string()))?;
        Ok(buf)
    } else {
        std::fs::read(p).map_err(|e| ClientError::Usage(format!("{}: {e}", p.display())))
    }
}

fn write_output(p: Option<&Path>, bytes: &[u8], out: &mut dyn Write) -> Result<(), ClientError> {
    match p {
        Some(p) if p != Path::new("-") => {
            std::fs::write(p, bytes).map_err(|e| ClientError::Usage(format!("{}: {e}", p.display())))
        }
        _ => out.write_all(bytes).map_err(|e| ClientError::Usage(e.to_string())),
    }
}

/// `name=value` pairs; values are JSON literals when they parse as one.
fn parse_bindings(pairs: &[String]) -> Result<BTreeMap<String, Value>, ClientError> {
    pairs
        .iter()
        .map(|p| {
            let (k, v) =
                p.split_once('=').ok_or_else(|| ClientError::Usage(format!("expected name=value, got {p:?}")))?;
            let value = serde_json::from_str::<Value>(v).unwrap_or_else(|_| Value::Str(v.to_string()));
            Ok((k.trim_start_matches('$').to_string(), value))
        })
        .collect()
}

fn pretty(v: &Json) -> String {
    serde_json::to_string_pretty(v).unwrap_or_default()
}

fn print_run(run: &Json, json: bool, out: &mut dyn Write) -> std::io::Result<()> {
    if json {
        return writeln!(out, "{}", pretty(run));
    }
    let state = run["status"]["state"].as_str().unwrap_or("?");
    writeln!(out, "run {} {state}", run["run_id"].as_str().unwrap_or("?"))?;
    if let Some(d) = run["status"]["detail"].as_str() {
        writeln!(out, "  detail: {d}")?;
    }
    if let Some(outputs) = run["outputs"].as_object() {
        for (p, sum) in outputs {
            writeln!(out, "  out {p} {}", sum.as_str().unwrap_or(""))?;
        }
    }
    Ok(())
}

/// Runs the command line and returns the process exit code.
pub fn run(
    args: impl IntoIterator<Item = OsString>,
    stdin: &mut dyn Read,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    match execute(cli, stdin, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "pg: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli, stdin: &mut dyn Read, out: &mut dyn Write) -> Result<(), ClientError> {
    let token_file = cli.token_file.clone().unwrap_or_else(default_token_file);
    let io = |e: std::io::Error| ClientError::Usage(e.to_string());
    if let Cmd::Serve { config } = &cli.cmd {
        let cfg = Config::load(config.as_deref(), std::env::vars()).map_err(|e| ClientError::Usage(e.to_string()))?;
        return crate::serve(&cfg).map_err(|e| ClientError::Transport(e.to_string()));
    }
    let mut client = Client::new(&cli.url)?;
    let token = cli.token.clone().or_else(|| std::fs::read_to_string(&token_file).ok().map(|s| s.trim().to_string()));
    if let Some(t) = token {
        client = client.with_token(t);
    }
    match cli.cmd {
        Cmd::Serve { .. } => unreachable!("handled above"),
        Cmd::Login { user, secret } => {
            let secret = match secret {
                Some(s) => s,
                None => {
                    let mut line = String::new();
                    let mut buf = [0u8; 1];
                    while stdin.read(&mut buf).map_err(io)? == 1 && buf[0] != b'\n' {
                        line.push(buf[0] as char);
                    }
                    line.trim_end_matches('\r').to_string()
                }
            };
            let r = client.login(&user, &secret)?;
            std::fs::write(&token_file, &r.token)
                .map_err(|e| ClientError::Usage(format!("{}: {e}", token_file.display())))?;
            #[cfg(unix)]
            {
                use std::os::unix::fs::PermissionsExt;
                let _ = std::fs::set_permissions(&token_file, std::fs::Permissions::from_mode(0o600));
            }
            writeln!(out, "logged in as {}", r.user).map_err(io)?;
        }
        Cmd::Put { path, local, resc } => {
            let bytes = read_input(&local, stdin)?;
            let obj = client.put(&path, bytes, resc.as_deref())?;
            writeln!(out, "{path} v{}", obj["version"]).map_err(io)?;
        }
        Cmd::Get { path, local, json } => {
            if json {
                writeln!(out, "{}", pretty(&client.info(&path)?)).map_err(io)?;
            } else {
                let bytes = client.get(&path)?;
                write_output(local.as_deref(), &bytes, out)?;
            }
        }
        Cmd::Rm { path } => client.remove(&path)?,
        Cmd::Mkdir { path, kind, owner } => client.mkdir(&path, &kind, owner.as_deref())?,
        Cmd::Replicate { path, resource } => {
            let rep = client.replicate(&path, &resource)?;
            writeln!(out, "{path} -> {} {}", resource, rep["checksum"].as_str().unwrap_or("")).map_err(io)?;
        }
        Cmd::Acl { path, principal, perm } => {
            let perm = (perm != "none").then_some(perm);
            client.set_acl(&path, &principal, perm.as_deref())?;
        }
        Cmd::Meta(MetaCmd::Add { path, name, value, comment }) => client.meta_add(&path, &name, &value, &comment)?,
        Cmd::Meta(MetaCmd::Query { predicate, json }) => {
            let paths = client.meta_query(&predicate)?;
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&paths).unwrap_or_default()).map_err(io)?;
            } else {
                for p in paths {
                    writeln!(out, "{p}").map_err(io)?;
                }
            }
        }
        Cmd::Rule(RuleCmd::Add { file }) => {
            let text = String::from_utf8(read_input(&file, stdin)?)
                .map_err(|_| ClientError::Usage("rule file is not UTF-8".into()))?;
            let r = client.rule_add(&text)?;
            writeln!(out, "added {} (rule base v{})", r.added.join(", "), r.version).map_err(io)?;
        }
        Cmd::Rule(RuleCmd::Rm { name }) => client.rule_remove(&name)?,
        Cmd::Rule(RuleCmd::List { json }) => {
            let v = client.rule_list()?;
            if json {
                writeln!(out, "{}", pretty(&v)).map_err(io)?;
            } else {
                writeln!(out, "# rule base v{}", v["version"]).map_err(io)?;
                for r in v["rules"].as_array().into_iter().flatten() {
                    writeln!(out, "{}", r["source"].as_str().unwrap_or("")).map_err(io)?;
                }
            }
        }
        Cmd::Wf(WfCmd::Attach { collection, file }) => {
            let src = String::from_utf8(read_input(&file, stdin)?)
                .map_err(|_| ClientError::Usage("procedure file is not UTF-8".into()))?;
            let wf = client.wf_attach(&collection, &src)?;
            writeln!(out, "{}", wf["workflow_id"].as_str().unwrap_or("")).map_err(io)?;
        }
        Cmd::Wf(WfCmd::Run { workflow_id, bindings, json }) => {
            let run = client.wf_run(&workflow_id, parse_bindings(&bindings)?)?;
            print_run(&run, json, out).map_err(io)?;
        }
        Cmd::Wf(WfCmd::Rerun { run_id, overrides, json }) => {
            let run = client.wf_rerun(&run_id, parse_bindings(&overrides)?)?;
            print_run(&run, json, out).map_err(io)?;
        }
        Cmd::Wf(WfCmd::Show { run_id, json }) => print_run(&client.run(&run_id)?, json, out).map_err(io)?,
        Cmd::Wf(WfCmd::Diff { a, b, json }) => {
            let d = client.diff(&a, &b)?;
            if json {
                writeln!(out, "{}", pretty(&d)).map_err(io)?;
            } else {
                if d["workflow_mismatch"].as_bool() == Some(true) {
                    writeln!(out, "workflow differs").map_err(io)?;
                }
                for section in ["inputs", "outputs"] {
                    for (p, v) in d[section].as_object().into_iter().flatten() {
                        let state = v["state"].as_str().unwrap_or("?");
                        if state != "identical" {
                            writeln!(out, "{section} {p} {state}").map_err(io)?;
                        }
                    }
                }
                for (k, _) in d["bindings"].as_object().into_iter().flatten() {
                    writeln!(out, "binding {k} differs").map_err(io)?;
                }
            }
        }
        Cmd::Stream(StreamCmd::Ingest { collection, file }) => {
            let seg = client.stream_ingest(&collection, read_input(&file, stdin)?)?;
            writeln!(
                out,
                "segment {} [{}, {}] {} records",
                seg["segment_id"], seg["t_min"], seg["t_max"], seg["record_count"]
            )
            .map_err(io)?;
        }
        Cmd::Stream(StreamCmd::Read { collection, from, to, output }) => {
            let bytes = client.stream_read(&collection, from, to)?;
            write_output(output.as_deref(), &bytes, out)?;
        }
        Cmd::Stream(StreamCmd::Stat { collection, json }) => {
            let s = client.stream_stat(&collection)?;
            if json {
                writeln!(out, "{}", pretty(&s)).map_err(io)?;
            } else {
                writeln!(
                    out,
                    "{} records in {} segments, t in [{}, {}]",
                    s["record_count"], s["segment_count"], s["t_min"], s["t_max"]
                )
                .map_err(io)?;
            }
        }
        Cmd::Admin(AdminCmd::Adduser { name, role, secret }) => client.add_user(&name, &role, &secret)?,
        Cmd::Admin(AdminCmd::Mkresc { name, driver, root, kind, default }) => {
            client.add_resource(&name, &driver, &root, &kind, default)?
        }
        Cmd::Admin(AdminCmd::Adddriver { name, kind }) => client.add_driver(&name, &kind)?,
        Cmd::Admin(AdminCmd::Audit { event, actor, json }) => {
            let entries = client.audit(event.as_deref(), actor.as_deref())?;
            if json {
                writeln!(out, "{}", pretty(&entries)).map_err(io)?;
            } else {
                for e in entries.as_array().into_iter().flatten() {
                    writeln!(
                        out,
                        "{} {} {} {} {}",
                        e["seq"],
                        e["when"],
                        e["actor"].as_str().unwrap_or(""),
                        e["event"].as_str().unwrap_or(""),
                        e["detail"].as_str().unwrap_or("")
                    )
                    .map_err(io)?;
                }
            }
        }
    }
    Ok(())
}
