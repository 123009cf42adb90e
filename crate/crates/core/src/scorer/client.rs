//! Client handle to an external scorer over a child process's standard
//! streams or a TCP connection.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{Shutdown, TcpStream};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::protocol::{hello_line, parse_hello, parse_response, validate_reply, Capability, Query, Reply, PROTOCOL_VERSION};
use crate::ngram::LogProb;
use crate::providers::{Classifier, ConditionalScorer, ProviderError, SentenceScorer};

pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

fn default_timeout_ms() -> u64 {
    DEFAULT_TIMEOUT_MS
}

/// Where the scorer lives and which operations to route to it. Exactly one
/// of `command` and `tcp` must be set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerConfig {
    /// Program and arguments, spoken to over stdin and stdout.
    #[serde(default)]
    pub command: Option<Vec<String>>,
    /// `host:port`.
    #[serde(default)]
    pub tcp: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Operations to take from the scorer. `None` takes every declared one.
    #[serde(default)]
    pub ops: Option<BTreeSet<Capability>>,
}

impl ScorerConfig {
    pub fn command(argv: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self { command: Some(argv.into_iter().map(Into::into).collect()), tcp: None, timeout_ms: DEFAULT_TIMEOUT_MS, ops: None }
    }

    pub fn tcp(addr: impl Into<String>) -> Self {
        Self { command: None, tcp: Some(addr.into()), timeout_ms: DEFAULT_TIMEOUT_MS, ops: None }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transport {
    SubprocessStdio,
    Tcp,
}

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("scorer config must set exactly one of `command` and `tcp`")]
    BadConfig,
    #[error("cannot start scorer `{program}`: {source}")]
    Spawn { program: String, source: io::Error },
    #[error("cannot connect to scorer at {addr}: {source}")]
    Connect { addr: String, source: io::Error },
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("protocol version mismatch: we speak {ours}, scorer speaks {theirs}")]
    VersionMismatch { ours: u32, theirs: u32 },
    #[error("scorer did not declare capability {0}")]
    Capability(Capability),
    #[error("no response to request {id} after one retry")]
    Timeout { id: u64 },
    #[error("malformed response ({reason}): {line}")]
    Malformed { line: String, reason: String },
    #[error("scorer closed the connection")]
    Closed,
    #[error("scorer I/O: {0}")]
    Io(#[from] io::Error),
    #[error("scorer connection is unusable after an earlier failure: {0}")]
    Poisoned(String),
    #[error("scorer rejected the request: {0}")]
    Rejected(String),
}

impl From<ScorerError> for ProviderError {
    fn from(e: ScorerError) -> Self {
        match e {
            ScorerError::Rejected(m) => ProviderError::Data(format!("scorer rejected the request: {m}")),
            other => ProviderError::Protocol(other.to_string()),
        }
    }
}

struct Conn {
    writer: Box<dyn Write + Send>,
    lines: Receiver<io::Result<String>>,
    next_id: u64,
    /// Ids whose answers no longer matter because they were re-sent.
    abandoned: HashSet<u64>,
    broken: Option<String>,
}

/// An open, handshaken connection to a scorer. Requests on one handle are
/// serialized; open several handles for parallel workers.
pub struct ScorerHandle {
    conn: Mutex<Conn>,
    child: Mutex<Option<Child>>,
    tcp: Option<TcpStream>,
    transport: Transport,
    version: u32,
    capabilities: BTreeSet<Capability>,
    timeout: Duration,
}

fn spawn_reader(source: impl Read + Send + 'static) -> Receiver<io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let mut reader = BufReader::new(source);
        loop {
            let mut line = String::new();
            let msg = match reader.read_line(&mut line) {
                Ok(0) => Err(io::Error::new(io::ErrorKind::UnexpectedEof, "end of stream")),
                Ok(_) => Ok(line.trim_end_matches(['\r', '\n']).to_string()),
                Err(e) => Err(e),
            };
            let last = msg.is_err();
            if tx.send(msg).is_err() || last {
                break;
            }
        }
    });
    rx
}

impl ScorerHandle {
    /// Connects or spawns, then performs the handshake.
    pub fn open(cfg: &ScorerConfig) -> Result<Self, ScorerError> {
        let timeout = cfg.timeout();
        let handle = match (&cfg.command, &cfg.tcp) {
            (Some(argv), None) if !argv.is_empty() => {
                let mut child = Command::new(&argv[0])
                    .args(&argv[1..])
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|source| ScorerError::Spawn { program: argv[0].clone(), source })?;
                let stdin = child.stdin.take().expect("stdin is piped");
                let stdout = child.stdout.take().expect("stdout is piped");
                Self::handshake(Box::new(stdin), spawn_reader(stdout), Some(child), None, Transport::SubprocessStdio, timeout)?
            }
            (None, Some(addr)) => {
                let stream = TcpStream::connect(addr).map_err(|source| ScorerError::Connect { addr: addr.clone(), source })?;
                stream.set_nodelay(true)?;
                let reader = stream.try_clone()?;
                let writer = stream.try_clone()?;
                Self::handshake(Box::new(writer), spawn_reader(reader), None, Some(stream), Transport::Tcp, timeout)?
            }
            _ => return Err(ScorerError::BadConfig),
        };
        Ok(handle)
    }

    fn handshake(
        mut writer: Box<dyn Write + Send>,
        lines: Receiver<io::Result<String>>,
        child: Option<Child>,
        tcp: Option<TcpStream>,
        transport: Transport,
        timeout: Duration,
    ) -> Result<Self, ScorerError> {
        let mut cleanup = Cleanup { child, tcp };
        writeln!(writer, "{}", hello_line()).and_then(|_| writer.flush()).map_err(|e| ScorerError::Handshake(e.to_string()))?;
        let line = match lines.recv_timeout(timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(ScorerError::Handshake(format!("no reply: {e}"))),
            Err(RecvTimeoutError::Timeout) => return Err(ScorerError::Handshake("no reply before the timeout".into())),
            Err(RecvTimeoutError::Disconnected) => return Err(ScorerError::Handshake("no reply".into())),
        };
        let hello = parse_hello(&line).map_err(ScorerError::Handshake)?;
        if hello.version != PROTOCOL_VERSION {
            return Err(ScorerError::VersionMismatch { ours: PROTOCOL_VERSION, theirs: hello.version });
        }
        Ok(Self {
            conn: Mutex::new(Conn { writer, lines, next_id: 1, abandoned: HashSet::new(), broken: None }),
            child: Mutex::new(cleanup.child.take()),
            tcp: cleanup.tcp.take(),
            transport,
            version: hello.version,
            capabilities: hello.capabilities,
            timeout,
        })
    }

    pub fn transport(&self) -> Transport {
        self.transport
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn capabilities(&self) -> &BTreeSet<Capability> {
        &self.capabilities
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    /// Sends every query before reading any answer and matches answers by
    /// id, in whatever order they arrive. An answer that does not arrive
    /// within the timeout causes its request to be re-sent once under a new
    /// id; a second silence fails the batch. A malformed line fails the
    /// batch and leaves the handle unusable. A scorer-side error line fails
    /// only its own request.
    pub fn score_batch(&self, queries: &[Query]) -> Result<Vec<Result<Reply, ScorerError>>, ScorerError> {
        for q in queries {
            if !self.capabilities.contains(&q.capability()) {
                return Err(ScorerError::Capability(q.capability()));
            }
        }
        let mut conn = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(why) = &conn.broken {
            return Err(ScorerError::Poisoned(why.clone()));
        }
        let result = Self::run_batch(&mut conn, queries, self.timeout);
        if let Err(e) = &result {
            conn.broken = Some(e.to_string());
        }
        result
    }

    fn send(conn: &mut Conn, query: &Query) -> Result<u64, ScorerError> {
        let id = conn.next_id;
        conn.next_id += 1;
        let line = serde_json::to_string(&query.with_id(id)).expect("requests serialize");
        writeln!(conn.writer, "{line}").map_err(|e| match e.kind() {
            io::ErrorKind::BrokenPipe | io::ErrorKind::ConnectionReset => ScorerError::Closed,
            _ => ScorerError::Io(e),
        })?;
        Ok(id)
    }

    fn run_batch(conn: &mut Conn, queries: &[Query], timeout: Duration) -> Result<Vec<Result<Reply, ScorerError>>, ScorerError> {
        let mut pending: HashMap<u64, usize> = HashMap::with_capacity(queries.len());
        for (i, q) in queries.iter().enumerate() {
            let id = Self::send(conn, q)?;
            pending.insert(id, i);
        }
        conn.writer.flush()?;
        let mut out: Vec<Option<Result<Reply, ScorerError>>> = (0..queries.len()).map(|_| None).collect();
        let mut retried = vec![false; queries.len()];
        while !pending.is_empty() {
            match conn.lines.recv_timeout(timeout) {
                Ok(Ok(line)) => {
                    let malformed = |reason: String| ScorerError::Malformed { line: line.clone(), reason };
                    let (id, reply) = parse_response(&line).map_err(malformed)?;
                    if conn.abandoned.remove(&id) {
                        continue;
                    }
                    let i = pending.remove(&id).ok_or_else(|| malformed(format!("id {id} matches no pending request")))?;
                    validate_reply(&queries[i], &reply).map_err(malformed)?;
                    out[i] = Some(match reply {
                        Reply::Error(msg) => Err(ScorerError::Rejected(msg)),
                        r => Ok(r),
                    });
                }
                Ok(Err(e)) if e.kind() == io::ErrorKind::UnexpectedEof => return Err(ScorerError::Closed),
                Ok(Err(e)) => return Err(ScorerError::Io(e)),
                Err(RecvTimeoutError::Disconnected) => return Err(ScorerError::Closed),
                Err(RecvTimeoutError::Timeout) => {
                    let mut stale: Vec<(u64, usize)> = pending.drain().collect();
                    stale.sort_unstable();
                    if let Some(&(id, _)) = stale.iter().find(|(_, i)| retried[*i]) {
                        conn.abandoned.extend(stale.iter().map(|(id, _)| *id));
                        return Err(ScorerError::Timeout { id });
                    }
                    for (old, i) in stale {
                        conn.abandoned.insert(old);
                        retried[i] = true;
                        let id = Self::send(conn, &queries[i])?;
                        pending.insert(id, i);
                    }
                    conn.writer.flush()?;
                }
            }
        }
        Ok(out.into_iter().map(|r| r.expect("every request answered")).collect())
    }

    fn one(&self, query: Query) -> Result<Reply, ScorerError> {
        self.score_batch(std::slice::from_ref(&query))?.pop().expect("one reply per query")
    }
}

/// Releases the child process or socket if the handshake fails.
struct Cleanup {
    child: Option<Child>,
    tcp: Option<TcpStream>,
}

impl Drop for Cleanup {
    fn drop(&mut self) {
        if let Some(mut c) = self.child.take() {
            let _ = c.kill();
            let _ = c.wait();
        }
        if let Some(s) = self.tcp.take() {
            let _ = s.shutdown(Shutdown::Both);
        }
    }
}

impl Drop for ScorerHandle {
    fn drop(&mut self) {
        let mut slot = self.child.lock().unwrap_or_else(|p| p.into_inner());
        let _ = Cleanup { child: slot.take(), tcp: self.tcp.take() };
    }
}

fn logp(reply: Reply) -> Result<LogProb, ProviderError> {
    match reply {
        Reply::Logp2(v) => LogProb::new(v).ok_or_else(|| ProviderError::Protocol(format!("invalid log probability {v}"))),
        other => Err(ProviderError::Protocol(format!("expected a log probability, got {other:?}"))),
    }
}

impl SentenceScorer for ScorerHandle {
    fn logp_sentence(&self, tokens: &[String]) -> Result<LogProb, ProviderError> {
        logp(self.one(Query::LogpSentence { tokens: tokens.to_vec() })?)
    }
}

impl ConditionalScorer for ScorerHandle {
    fn logp_cond(&self, target: &[String], condition: &[String]) -> Result<LogProb, ProviderError> {
        logp(self.one(Query::LogpCond { target: target.to_vec(), condition: condition.to_vec() })?)
    }
}

impl Classifier for ScorerHandle {
    fn classify(&self, tokens: &[String], labels: &[String]) -> Result<String, ProviderError> {
        match self.one(Query::Classify { tokens: tokens.to_vec(), labels: labels.to_vec() })? {
            Reply::Label(l) => Ok(l),
            other => Err(ProviderError::Protocol(format!("expected a label, got {other:?}"))),
        }
    }
}
