//! `cft` — the CFT security-testing workbench binary.
//!
//! Subcommands: run a reference server with a chosen flaw set, perform
//! honest transfers, fire individual exploration attacks, run the full
//! differential suite, decode traffic traces, and list the attack
//! catalog.
//!
//! Exit status contract: 0 on success / suite PASS / attack found the
//! target SECURE; 1 on suite FAIL, a confirmed-vulnerable one-shot
//! attack, or an operational failure; 2 on usage or configuration errors.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use cft::client::{Session, TransferStatus};
use cft::harness::{
    builtin_cases, host_pair, run_case, run_suite, SelfHostOptions, SuiteReport, TargetSpec,
    Verdict,
};
use cft::server::{secret_path_for_root, serve, FlawSet, ServerConfig};
use cft::trace::{decode_trace, render_listing, TraceSink};

#[derive(Parser)]
#[command(
    name = "cft",
    version,
    about = "Security-testing workbench for the CFT file transfer protocol"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a CFT server over a sandboxed file root.
    Serve(ServeArgs),
    /// Honest upload of a local file.
    Put(PutArgs),
    /// Honest download to a local file.
    Get(GetArgs),
    /// Fire one attack case at a target and report the verdict.
    Attack(AttackArgs),
    /// Run the differential attack suite (flawed vs hardened target).
    Suite(SuiteArgs),
    /// Decode and annotate a captured traffic trace.
    Decode(DecodeArgs),
    /// List the built-in attack cases.
    ListCases,
}

#[derive(Args)]
struct ServeArgs {
    /// Plain-text config file (`key = value`: listen, root, flaws,
    /// canary, max_file_size, timeout_ms). Flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sandbox root directory (must exist).
    #[arg(long)]
    root: Option<PathBuf>,
    /// Listen address, e.g. 127.0.0.1:4150.
    #[arg(long)]
    listen: Option<SocketAddr>,
    /// Listen port on 127.0.0.1 (shorthand for --listen).
    #[arg(long, conflicts_with = "listen")]
    port: Option<u16>,
    /// Flaw set: "all", "none", or a comma list like "F1,F4".
    #[arg(long)]
    flaws: Option<String>,
    /// Canary secret (CFT_CANARY env var also works).
    #[arg(long)]
    canary: Option<String>,
    /// Maximum accepted file / frame size in bytes.
    #[arg(long)]
    max_file_size: Option<u32>,
    /// Per-frame read timeout in milliseconds.
    #[arg(long)]
    timeout_ms: Option<u64>,
}

#[derive(Args)]
struct PutArgs {
    /// Target host:port.
    #[arg(long)]
    target: SocketAddr,
    /// Local file to upload.
    #[arg(long)]
    file: PathBuf,
    /// Remote filename (defaults to the local basename).
    #[arg(long)]
    name: Option<String>,
    #[arg(long, default_value_t = 512)]
    block_size: u16,
    /// Capture wire traffic to this trace file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct GetArgs {
    #[arg(long)]
    target: SocketAddr,
    /// Remote filename.
    #[arg(long)]
    name: String,
    /// Local output path (defaults to the remote basename).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    target: SocketAddr,
    /// Case id (see `cft list-cases`).
    #[arg(long = "case")]
    case_id: String,
    /// Capture wire traffic to this trace file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// The target's sandbox root, if known; lets layout-dependent cases
    /// (absolute-path traversal) name their target file.
    #[arg(long)]
    root: Option<PathBuf>,
    /// Canary to scan replies for (CFT_CANARY env var also works).
    #[arg(long)]
    canary: Option<String>,
    /// Receive timeout in milliseconds.
    #[arg(long)]
    timeout_ms: Option<u64>,
}

#[derive(Args)]
struct SuiteArgs {
    /// Launch both targets in-process on loopback ephemeral ports.
    #[arg(long, conflicts_with_all = ["flawed", "hardened"])]
    self_hosted: bool,
    /// Address of the flawed target.
    #[arg(long, requires = "hardened")]
    flawed: Option<SocketAddr>,
    /// Address of the hardened target.
    #[arg(long, requires = "flawed")]
    hardened: Option<SocketAddr>,
    /// Sandbox root of the flawed target (layout hint for remote runs).
    #[arg(long)]
    flawed_root: Option<PathBuf>,
    /// Sandbox root of the hardened target.
    #[arg(long)]
    hardened_root: Option<PathBuf>,
    /// Write the machine-readable line-delimited report here.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    canary: Option<String>,
    /// Self-hosted servers' per-frame read timeout in milliseconds.
    #[arg(long)]
    timeout_ms: Option<u64>,
}

#[derive(Args)]
struct DecodeArgs {
    /// Trace file to decode.
    trace: PathBuf,
}

fn main() -> ExitCode {
    // Die quietly when the consumer of our stdout goes away (e.g. `| head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::init();
    let cli = Cli::parse();
    match cli.command {
        Command::Serve(args) => cmd_serve(args),
        Command::Put(args) => cmd_put(args),
        Command::Get(args) => cmd_get(args),
        Command::Attack(args) => cmd_attack(args),
        Command::Suite(args) => cmd_suite(args),
        Command::Decode(args) => cmd_decode(args),
        Command::ListCases => cmd_list_cases(),
    }
}

fn usage_error(message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(2)
}

fn env_canary() -> Option<String> {
    std::env::var("CFT_CANARY").ok().filter(|s| !s.is_empty())
}

fn cmd_serve(args: ServeArgs) -> ExitCode {
    let mut config = match &args.config {
        Some(path) => match ServerConfig::from_config_file(path) {
            Ok(c) => c,
            Err(e) => return usage_error(e),
        },
        None => {
            let root = match &args.root {
                Some(r) => r.clone(),
                None => return usage_error("--root (or --config) is required"),
            };
            ServerConfig::new(root)
        }
    };
    if let Some(root) = args.root {
        config.sandbox_root = root;
    }
    if let Some(listen) = args.listen {
        config.listen = listen;
    }
    if let Some(port) = args.port {
        config.listen = SocketAddr::from(([127, 0, 0, 1], port));
    }
    if let Some(flaws) = args.flaws {
        config.flaws = match FlawSet::parse(&flaws) {
            Ok(f) => f,
            Err(e) => return usage_error(e),
        };
    }
    if let Some(canary) = args.canary.or_else(env_canary) {
        config.canary_secret = canary;
    }
    if let Some(max) = args.max_file_size {
        config.max_file_size = max;
    }
    if let Some(ms) = args.timeout_ms {
        config.read_timeout = Duration::from_millis(ms);
    }
    let handle = match serve(config) {
        Ok(h) => h,
        Err(e) => return usage_error(format!("cannot start server: {e}")),
    };
    println!("listening on {}", handle.local_addr());
    println!("sandbox root: {}", handle.config().sandbox_root.display());
    println!("flaws: {}", handle.config().flaws);
    println!(
        "traversal target planted at {}",
        handle.secret_path().display()
    );
    // Serve until interrupted.
    loop {
        std::thread::park();
    }
}

fn open_trace(path: &Option<PathBuf>) -> Result<Option<Arc<TraceSink>>, ExitCode> {
    match path {
        None => Ok(None),
        Some(p) => match TraceSink::create(p) {
            Ok(sink) => Ok(Some(Arc::new(sink))),
            Err(e) => Err(usage_error(format!(
                "cannot create trace {}: {e}",
                p.display()
            ))),
        },
    }
}

fn cmd_put(args: PutArgs) -> ExitCode {
    let content = match std::fs::read(&args.file) {
        Ok(c) => c,
        Err(e) => return usage_error(format!("cannot read {}: {e}", args.file.display())),
    };
    let name = args.name.clone().unwrap_or_else(|| {
        args.file
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "upload.bin".into())
    });
    let trace = match open_trace(&args.trace) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let mut session = match Session::connect(args.target, trace) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = session.hello("cft-cli") {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match session.put_file(&name, &content, args.block_size) {
        Ok(report) => match report.status {
            TransferStatus::Completed => {
                let _ = session.bye();
                println!(
                    "put {name}: {} bytes in {} data frames",
                    content.len(),
                    report.data_frames_sent
                );
                ExitCode::SUCCESS
            }
            TransferStatus::Refused { code, at_frame } => {
                eprintln!("put refused: error code {code:#04X} at frame {at_frame}");
                ExitCode::from(1)
            }
            TransferStatus::Aborted { reason } => {
                eprintln!("put aborted: {reason}");
                ExitCode::from(1)
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn cmd_get(args: GetArgs) -> ExitCode {
    let trace = match open_trace(&args.trace) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let mut session = match Session::connect(args.target, trace) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = session.hello("cft-cli") {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let out_path = args.out.clone().unwrap_or_else(|| {
        PathBuf::from(
            Path::new(&args.name)
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "download.bin".into()),
        )
    });
    match session.get_file(&args.name) {
        Ok(outcome) => match outcome.status {
            cft::client::GetStatus::Completed { data } => {
                let _ = session.bye();
                if let Err(e) = std::fs::write(&out_path, &data) {
                    eprintln!("cannot write {}: {e}", out_path.display());
                    return ExitCode::from(1);
                }
                println!(
                    "get {}: {} bytes -> {}",
                    args.name,
                    data.len(),
                    out_path.display()
                );
                ExitCode::SUCCESS
            }
            cft::client::GetStatus::Refused { code } => {
                eprintln!("get refused: error code {code:#04X}");
                ExitCode::from(1)
            }
            cft::client::GetStatus::Aborted { reason } => {
                eprintln!("get aborted: {reason}");
                ExitCode::from(1)
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn cmd_attack(args: AttackArgs) -> ExitCode {
    let cases = builtin_cases();
    let Some(case) = cases.iter().find(|c| c.id == args.case_id) else {
        return usage_error(format!(
            "unknown case {:?}; run `cft list-cases`",
            args.case_id
        ));
    };
    let trace = match open_trace(&args.trace) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let mut target = TargetSpec::new(args.target, args.target.to_string());
    if let Some(canary) = args.canary.clone().or_else(env_canary) {
        target.canary = canary;
    }
    if let Some(root) = &args.root {
        target.secret_path = Some(secret_path_for_root(root));
    }
    if let Some(ms) = args.timeout_ms {
        target.recv_timeout = Duration::from_millis(ms);
    }

    println!("case {}: {}", case.id, case.description);
    let outcome = run_case(case, &target, trace);
    for line in &outcome.evidence {
        println!("  {line}");
    }
    println!("{}", outcome.verdict);
    match outcome.verdict {
        Verdict::Secure => ExitCode::SUCCESS,
        Verdict::VulnerableConfirmed | Verdict::Inconclusive(_) => ExitCode::from(1),
    }
}

fn print_suite(report: &SuiteReport) {
    for record in &report.cases {
        println!(
            "{:<22} {:<17} {:<4} flawed={:<21} hardened={:<9} {}",
            record.id,
            record.category,
            record.targets_flaw.as_deref().unwrap_or("-"),
            record.flawed.verdict.to_string(),
            record.hardened.verdict.to_string(),
            if record.pass { "ok" } else { "FAIL" }
        );
    }
    println!("{}", report.summary_line());
}

fn cmd_suite(args: SuiteArgs) -> ExitCode {
    let cases = builtin_cases();
    let report = if args.self_hosted {
        let mut opts = SelfHostOptions::default();
        if let Some(canary) = args.canary.clone().or_else(env_canary) {
            opts.canary = canary;
        }
        if let Some(ms) = args.timeout_ms {
            opts.read_timeout = Duration::from_millis(ms);
        }
        let (flawed, hardened) = match host_pair(&opts) {
            Ok(pair) => pair,
            Err(e) => return usage_error(format!("cannot self-host targets: {e}")),
        };
        println!(
            "self-hosted targets: flawed={} hardened={}",
            flawed.handle.local_addr(),
            hardened.handle.local_addr()
        );
        run_suite(&flawed.spec, &hardened.spec, &cases)
    } else {
        let (Some(flawed_addr), Some(hardened_addr)) = (args.flawed, args.hardened) else {
            return usage_error("need --self-hosted, or both --flawed and --hardened");
        };
        let canary = args.canary.clone().or_else(env_canary);
        let mut flawed = TargetSpec::new(flawed_addr, "flawed");
        let mut hardened = TargetSpec::new(hardened_addr, "hardened");
        if let Some(c) = &canary {
            flawed.canary = c.clone();
            hardened.canary = c.clone();
        }
        if let Some(root) = &args.flawed_root {
            flawed.secret_path = Some(secret_path_for_root(root));
        }
        if let Some(root) = &args.hardened_root {
            hardened.secret_path = Some(secret_path_for_root(root));
        }
        run_suite(&flawed, &hardened, &cases)
    };

    print_suite(&report);
    if let Some(path) = &args.report {
        if let Err(e) = cft::harness::write_report(path, &report) {
            eprintln!("cannot write report {}: {e}", path.display());
            return ExitCode::from(1);
        }
        println!("report written to {}", path.display());
    }
    if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn cmd_decode(args: DecodeArgs) -> ExitCode {
    match decode_trace(&args.trace) {
        Ok(listing) => {
            print!("{}", render_listing(&listing));
            ExitCode::SUCCESS
        }
        Err(e) => usage_error(format!("cannot read trace {}: {e}", args.trace.display())),
    }
}

fn cmd_list_cases() -> ExitCode {
    let cases = builtin_cases();
    for case in &cases {
        println!(
            "{:<22} {:<17} {:<4} {}",
            case.id,
            case.category.name(),
            case.targets_flaw.map(|f| f.label()).unwrap_or("-"),
            case.description
        );
    }
    println!("{} cases", cases.len());
    ExitCode::SUCCESS
}
