//! The CFT reference server.
//!
//! Accepts connections and runs the session state machine over a
//! sandboxed file root. Six seeded flaws (F1–F6) are individually
//! toggleable; see [`flaws::Flaw`] for the catalog. At startup a
//! `secret.txt` holding the canary is planted in the *parent* of the
//! sandbox root as the directory-traversal target, and the same canary
//! fills the simulated adjacent-memory region that buffer overruns leak
//! from — one substring scan detects every exfiltration.

mod flaws;
mod paths;
mod session;

pub use flaws::{Flaw, FlawSet, ALL_FLAWS};
pub use paths::{resolve_path, PathResolution};
pub use session::{
    handle_frame, Disposition, HandleOutcome, Phase, SessionEvent, SessionState, Transfer,
    CRASH_OVERRUN_THRESHOLD, GET_CHUNK, LEAK_WINDOW, STALE_POOL_CAP,
};

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use crate::protocol::{self, StreamDecoder, ERR_FRAME_TOO_LARGE};

/// Default canary planted in the traversal target file and the simulated
/// adjacent-memory region.
pub const DEFAULT_CANARY: &str = "CFT-CANARY-7f3a9d";
/// Default cap on file sizes and declared frame lengths: 16 MiB.
pub const DEFAULT_MAX_FILE_SIZE: u32 = 16 * 1024 * 1024;
/// Default per-frame read timeout.
pub const DEFAULT_READ_TIMEOUT: Duration = Duration::from_millis(2000);
/// Name of the canary file planted next to the sandbox root.
pub const SECRET_FILENAME: &str = "secret.txt";

/// Socket poll granularity; bounds how quickly sessions notice shutdown.
const READ_POLL: Duration = Duration::from_millis(25);

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub listen: SocketAddr,
    pub sandbox_root: PathBuf,
    pub flaws: FlawSet,
    pub canary_secret: String,
    pub max_file_size: u32,
    pub read_timeout: Duration,
}

impl ServerConfig {
    pub fn new(sandbox_root: impl Into<PathBuf>) -> ServerConfig {
        ServerConfig {
            listen: "127.0.0.1:0".parse().expect("literal addr"),
            sandbox_root: sandbox_root.into(),
            flaws: FlawSet::HARDENED,
            canary_secret: DEFAULT_CANARY.to_string(),
            max_file_size: DEFAULT_MAX_FILE_SIZE,
            read_timeout: DEFAULT_READ_TIMEOUT,
        }
    }

    pub fn with_flaws(mut self, flaws: FlawSet) -> Self {
        self.flaws = flaws;
        self
    }

    pub fn with_canary(mut self, canary: impl Into<String>) -> Self {
        self.canary_secret = canary.into();
        self
    }

    pub fn with_read_timeout(mut self, timeout: Duration) -> Self {
        self.read_timeout = timeout;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.canary_secret.is_empty() {
            return Err("canary_secret must be nonempty".into());
        }
        if !self.sandbox_root.is_dir() {
            return Err(format!(
                "sandbox root {} does not exist or is not a directory",
                self.sandbox_root.display()
            ));
        }
        Ok(())
    }

    /// Parse a plain-text config file of `key = value` lines. Keys:
    /// `listen`, `root`, `flaws`, `canary`, `max_file_size`, `timeout_ms`.
    /// Lines starting with `#` are comments.
    pub fn from_config_file(path: &Path) -> Result<ServerConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let mut listen: SocketAddr = "127.0.0.1:0".parse().unwrap();
        let mut root: Option<PathBuf> = None;
        let mut flaws = FlawSet::HARDENED;
        let mut canary = DEFAULT_CANARY.to_string();
        let mut max_file_size = DEFAULT_MAX_FILE_SIZE;
        let mut timeout = DEFAULT_READ_TIMEOUT;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", idx + 1))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "listen" => {
                    listen = value
                        .parse()
                        .map_err(|e| format!("line {}: bad listen address: {e}", idx + 1))?;
                }
                "root" => root = Some(PathBuf::from(value)),
                "flaws" => {
                    flaws = FlawSet::parse(value).map_err(|e| format!("line {}: {e}", idx + 1))?
                }
                "canary" => canary = value.to_string(),
                "max_file_size" => {
                    max_file_size = value
                        .parse()
                        .map_err(|e| format!("line {}: bad max_file_size: {e}", idx + 1))?;
                }
                "timeout_ms" => {
                    let ms: u64 = value
                        .parse()
                        .map_err(|e| format!("line {}: bad timeout_ms: {e}", idx + 1))?;
                    timeout = Duration::from_millis(ms);
                }
                other => return Err(format!("line {}: unknown key {other:?}", idx + 1)),
            }
        }
        let sandbox_root = root.ok_or("config file must set root")?;
        Ok(ServerConfig {
            listen,
            sandbox_root,
            flaws,
            canary_secret: canary,
            max_file_size,
            read_timeout: timeout,
        })
    }
}

/// State shared by the accept loop and all sessions. Sessions only share
/// the read-only config, the F5 stale pool, and aggregate counters.
pub struct Shared {
    pub config: ServerConfig,
    pub(crate) shutdown: AtomicBool,
    pub(crate) crash_count: AtomicU64,
    pub(crate) accepted: AtomicU64,
    pub(crate) live: AtomicU64,
    pub(crate) stale_pool: Mutex<Vec<u8>>,
    pub(crate) table: Mutex<BTreeMap<u64, &'static str>>,
}

impl Shared {
    pub fn new(config: ServerConfig) -> Shared {
        Shared {
            config,
            shutdown: AtomicBool::new(false),
            crash_count: AtomicU64::new(0),
            accepted: AtomicU64::new(0),
            live: AtomicU64::new(0),
            stale_pool: Mutex::new(Vec::new()),
            table: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn crash_count(&self) -> u64 {
        self.crash_count.load(Ordering::SeqCst)
    }

    pub(crate) fn session_table_snapshot(&self) -> String {
        let table = self.table.lock().expect("session table poisoned");
        table
            .iter()
            .map(|(serial, phase)| format!("{serial}:{phase}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Handle to a running server. Dropping it shuts the server down.
pub struct ServerHandle {
    local_addr: SocketAddr,
    shared: Arc<Shared>,
    acceptor: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    /// Sessions terminated by a simulated crash since startup.
    pub fn crash_count(&self) -> u64 {
        self.shared.crash_count()
    }

    pub fn live_sessions(&self) -> u64 {
        self.shared.live.load(Ordering::SeqCst)
    }

    pub fn sessions_accepted(&self) -> u64 {
        self.shared.accepted.load(Ordering::SeqCst)
    }

    /// Location of the planted canary file (parent of the sandbox root).
    pub fn secret_path(&self) -> PathBuf {
        secret_path_for_root(&self.shared.config.sandbox_root)
    }

    pub fn config(&self) -> &ServerConfig {
        &self.shared.config
    }

    /// Closure reading the crash counter; hands the harness its crash
    /// probe without keeping the whole handle alive.
    pub fn crash_probe(&self) -> impl Fn() -> u64 + Send + Sync + 'static {
        let shared = Arc::clone(&self.shared);
        move || shared.crash_count()
    }

    /// Stop accepting, wake the accept loop, and wait for it to exit.
    /// Live sessions notice the flag within the read poll interval.
    pub fn shutdown(&mut self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        // Unblock the accept call.
        let _ = TcpStream::connect(self.local_addr);
        if let Some(handle) = self.acceptor.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

pub fn secret_path_for_root(root: &Path) -> PathBuf {
    root.parent()
        .map(|p| p.join(SECRET_FILENAME))
        .unwrap_or_else(|| PathBuf::from(SECRET_FILENAME))
}

/// Start a server. Plants the canary file in the parent of the sandbox
/// root, binds the listener, and serves until [`ServerHandle::shutdown`].
/// Per-session failures never take down the accept loop.
pub fn serve(config: ServerConfig) -> io::Result<ServerHandle> {
    config
        .validate()
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    let mut config = config;
    // Canonical root so flawed lexical joins and debug dumps are stable.
    config.sandbox_root = config.sandbox_root.canonicalize()?;
    let secret = secret_path_for_root(&config.sandbox_root);
    std::fs::write(&secret, config.canary_secret.as_bytes())?;

    let listener = TcpListener::bind(config.listen)?;
    let local_addr = listener.local_addr()?;
    let shared = Arc::new(Shared::new(config));

    let accept_shared = Arc::clone(&shared);
    let acceptor = std::thread::Builder::new()
        .name("cft-accept".into())
        .spawn(move || accept_loop(listener, accept_shared))?;

    log::info!("serving on {local_addr}");
    Ok(ServerHandle {
        local_addr,
        shared,
        acceptor: Some(acceptor),
    })
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    loop {
        match listener.accept() {
            Ok((stream, peer)) => {
                if shared.shutdown.load(Ordering::SeqCst) {
                    break;
                }
                let serial = shared.accepted.fetch_add(1, Ordering::SeqCst);
                let session_shared = Arc::clone(&shared);
                let spawned = std::thread::Builder::new()
                    .name(format!("cft-session-{serial}"))
                    .spawn(move || run_session(stream, peer, serial, session_shared));
                if let Err(e) = spawned {
                    log::warn!("session spawn failed: {e}");
                }
            }
            Err(e) => {
                if shared.shutdown.load(Ordering::SeqCst) {
                    break;
                }
                log::warn!("accept failed: {e}");
            }
        }
    }
}

struct SessionGuard<'a> {
    shared: &'a Shared,
    serial: u64,
}

impl Drop for SessionGuard<'_> {
    fn drop(&mut self) {
        self.shared.live.fetch_sub(1, Ordering::SeqCst);
        self.shared
            .table
            .lock()
            .expect("session table poisoned")
            .remove(&self.serial);
    }
}

fn run_session(stream: TcpStream, peer: SocketAddr, serial: u64, shared: Arc<Shared>) {
    shared.live.fetch_add(1, Ordering::SeqCst);
    shared
        .table
        .lock()
        .expect("session table poisoned")
        .insert(serial, Phase::Start.name());
    let guard = SessionGuard {
        shared: &shared,
        serial,
    };
    match session_io(&stream, peer, serial, &shared) {
        Ok(SessionEnd::Drain) => graceful_close(&stream, &shared),
        Ok(SessionEnd::Abrupt) => {}
        Err(e) => log::debug!("session {serial}: {e}"),
    }
    drop(guard);
}

enum SessionEnd {
    /// Let the peer read our final replies: half-close, then discard
    /// whatever input is still in flight so the kernel does not reset the
    /// connection and clobber them.
    Drain,
    /// Simulated crash or shutdown: drop the socket as-is.
    Abrupt,
}

fn graceful_close(stream: &TcpStream, shared: &Shared) {
    let _ = stream.shutdown(std::net::Shutdown::Write);
    let deadline = std::time::Instant::now() + Duration::from_millis(500);
    let mut sink = [0u8; 4096];
    let mut reader = stream;
    while std::time::Instant::now() < deadline {
        if shared.shutdown.load(Ordering::SeqCst) {
            break;
        }
        match std::io::Read::read(&mut reader, &mut sink) {
            Ok(0) => break,
            Ok(_) => continue,
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                ) =>
            {
                continue
            }
            Err(_) => break,
        }
    }
}

fn session_io(
    stream: &TcpStream,
    peer: SocketAddr,
    serial: u64,
    shared: &Shared,
) -> io::Result<SessionEnd> {
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(READ_POLL))?;
    let mut state = SessionState::new(serial, peer.to_string());
    let timeout = shared.config.read_timeout;
    let mut reader = stream;
    let mut writer = stream;

    loop {
        if shared.shutdown.load(Ordering::SeqCst) {
            return Ok(SessionEnd::Abrupt);
        }
        let mut cancel = || shared.shutdown.load(Ordering::SeqCst);
        let mut decoder = StreamDecoder::new(&mut reader, timeout).with_cancel(&mut cancel);

        let report = match decoder.read_header() {
            protocol::HeaderOutcome::Closed => return Ok(SessionEnd::Drain),
            protocol::HeaderOutcome::Idle => continue,
            protocol::HeaderOutcome::Truncated { consumed } => protocol::DecodeReport {
                violations: vec![protocol::Violation::Truncated { consumed }],
                outcome: protocol::DecodeOutcome::Truncated {
                    consumed,
                    partial: None,
                },
            },
            protocol::HeaderOutcome::Header(header) => {
                // Bound the declared length before attempting the read.
                // Under F4 the comparison happens on the reinterpreted
                // signed value, so "negative" lengths sail through and the
                // read below runs until data stops coming.
                if !session::size_within_limit(
                    header.declared_length,
                    shared.config.max_file_size,
                    shared.config.flaws.f4_signed_confusion,
                ) {
                    let reply = crate::protocol::OpPayload::Err {
                        code: ERR_FRAME_TOO_LARGE,
                        message: format!(
                            "declared length {} exceeds limit {}",
                            header.declared_length, shared.config.max_file_size
                        ),
                    }
                    .to_frame_bytes();
                    let _ = writer.write_all(&reply);
                    return Ok(SessionEnd::Drain);
                }
                decoder.read_body(&header)
            }
        };

        let outcome = handle_frame(&mut state, &report, shared);
        shared
            .table
            .lock()
            .expect("session table poisoned")
            .insert(serial, state.phase.name());

        match outcome.disposition {
            Disposition::Abort => {
                // Simulated crash: no reply, tear the connection down and
                // count it.
                shared.crash_count.fetch_add(1, Ordering::SeqCst);
                log::debug!("session {serial}: simulated crash");
                return Ok(SessionEnd::Abrupt);
            }
            _ => {
                for reply in &outcome.replies {
                    writer.write_all(reply)?;
                }
            }
        }
        for event in &outcome.events {
            if let SessionEvent::Leak(bytes) = event {
                log::debug!("session {serial}: leaked {} bytes", bytes.len());
            }
        }
        if outcome.disposition == Disposition::Close {
            return Ok(SessionEnd::Drain);
        }
    }
}
