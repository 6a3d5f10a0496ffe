//! Coordinator/worker execution of level batches over TCP.
//!
//! Frames are a 4-byte big-endian length followed by a JSON object whose
//! `type` field names the message. Workers load the dataset from their own
//! copy of the file; the coordinator checks it by digest before sending
//! any work. A batch lost to a disconnect or a timeout goes back on the
//! queue, and the first result per batch wins.

use std::collections::{HashMap, VecDeque};
use std::io::{self, Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::mpsc;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::dataset::load_dataset;
use crate::engine::{AuditCounts, EngineConfig, LevelExecutor, LocalExecutor, Miner};
use crate::error::{Error, Result};
use crate::itemsets::Itemset;
use crate::rule::{Precision, RuleLine, RuleStore, StoredRule};

const MAX_FRAME: u32 = 1 << 30;

pub const DEFAULT_TASK_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Message {
    Hello {
        digest: String,
    },
    HelloAck {
        digest: String,
    },
    LevelBegin {
        k: usize,
        config: EngineConfig,
        snapshot: Vec<RuleLine>,
    },
    Task {
        batch_id: usize,
        itemsets: Vec<Vec<String>>,
    },
    Result {
        batch_id: usize,
        rules: Vec<RuleLine>,
        #[serde(default)]
        audit: AuditCounts,
    },
    LevelEnd {
        k: usize,
    },
    Bye,
    Err {
        message: String,
    },
}

const KNOWN_TYPES: [&str; 8] = [
    "HELLO",
    "HELLO_ACK",
    "LEVEL_BEGIN",
    "TASK",
    "RESULT",
    "LEVEL_END",
    "BYE",
    "ERR",
];

pub fn write_frame<W: Write>(out: &mut W, msg: &Message) -> Result<()> {
    let payload = serde_json::to_vec(msg)?;
    let len = u32::try_from(payload.len())
        .ok()
        .filter(|&l| l <= MAX_FRAME)
        .ok_or_else(|| Error::Protocol(format!("frame of {} bytes is too large", payload.len())))?;
    out.write_all(&len.to_be_bytes())?;
    out.write_all(&payload)?;
    out.flush()?;
    Ok(())
}

/// What came off the wire: a message, or a frame that parsed as JSON but
/// could not be understood.
#[derive(Debug)]
pub enum Incoming {
    Message(Message),
    Unknown(String),
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(source: &mut R) -> Result<Option<Incoming>> {
    let mut len = [0u8; 4];
    match source.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len);
    if len > MAX_FRAME {
        return Err(Error::Protocol(format!("frame length {len} exceeds limit")));
    }
    let mut payload = vec![0u8; len as usize];
    source.read_exact(&mut payload)?;
    let value: Value = serde_json::from_slice(&payload)?;
    let kind = value.get("type").and_then(Value::as_str).unwrap_or("").to_owned();
    if !KNOWN_TYPES.contains(&kind.as_str()) {
        return Ok(Some(Incoming::Unknown(format!("unknown message type `{kind}`"))));
    }
    Ok(Some(match serde_json::from_value(value) {
        Ok(m) => Incoming::Message(m),
        Err(e) => Incoming::Unknown(format!("malformed {kind}: {e}")),
    }))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Clone, Debug, Default)]
pub struct WorkerOptions {
    /// Threads for the worker's local pool; the coordinator's count is used
    /// when unset.
    pub threads: Option<usize>,
    /// Drops the connection instead of answering the task after this many
    /// completed tasks. Fault injection for tests.
    pub fail_after_tasks: Option<usize>,
}

/// Serves coordinators on `listener` until one sends BYE.
pub fn serve_worker(listener: TcpListener, data: &Path, options: WorkerOptions) -> Result<()> {
    let digest = file_digest(data)?;
    let bytes = std::fs::read(data)?;
    let mut state = WorkerState {
        digest,
        bytes,
        options,
        miner: None,
        snapshot: None,
        tasks_done: 0,
    };
    for stream in listener.incoming() {
        let stream = stream?;
        log::info!("coordinator connected from {:?}", stream.peer_addr().ok());
        match state.session(stream) {
            Ok(SessionEnd::Bye) => return Ok(()),
            Ok(SessionEnd::Crashed) => return Ok(()),
            Ok(SessionEnd::Closed) => {}
            Err(e) => log::warn!("session ended: {e}"),
        }
    }
    Ok(())
}

enum SessionEnd {
    Bye,
    Closed,
    Crashed,
}

struct WorkerState {
    digest: String,
    bytes: Vec<u8>,
    options: WorkerOptions,
    miner: Option<Miner>,
    snapshot: Option<RuleStore>,
    tasks_done: usize,
}

impl WorkerState {
    fn session(&mut self, mut stream: TcpStream) -> Result<SessionEnd> {
        self.snapshot = None;
        let mut greeted = false;
        loop {
            let msg = match read_frame(&mut stream) {
                Ok(Some(Incoming::Message(m))) => m,
                Ok(Some(Incoming::Unknown(why))) => {
                    write_frame(&mut stream, &Message::Err { message: why })?;
                    continue;
                }
                Ok(None) => return Ok(SessionEnd::Closed),
                Err(Error::Json(e)) => {
                    write_frame(
                        &mut stream,
                        &Message::Err {
                            message: format!("malformed frame: {e}"),
                        },
                    )?;
                    continue;
                }
                Err(e) => return Err(e),
            };
            match msg {
                Message::Hello { digest } => {
                    if digest != self.digest {
                        let message = format!("dataset digest mismatch: worker has {}", self.digest);
                        write_frame(&mut stream, &Message::Err { message })?;
                        let _ = stream.shutdown(Shutdown::Both);
                        return Ok(SessionEnd::Closed);
                    }
                    greeted = true;
                    write_frame(
                        &mut stream,
                        &Message::HelloAck {
                            digest: self.digest.clone(),
                        },
                    )?;
                }
                _ if !greeted => {
                    let message = "expected HELLO first".to_owned();
                    write_frame(&mut stream, &Message::Err { message })?;
                }
                Message::LevelBegin { k, config, snapshot } => match self.begin_level(config, &snapshot) {
                    Ok(()) => log::debug!("level {k} begins with {} snapshot rules", snapshot.len()),
                    Err(e) => write_frame(&mut stream, &Message::Err { message: e.to_string() })?,
                },
                Message::Task { batch_id, itemsets } => {
                    if self.options.fail_after_tasks.is_some_and(|n| self.tasks_done >= n) {
                        log::warn!("fault injection: dropping connection at batch {batch_id}");
                        let _ = stream.shutdown(Shutdown::Both);
                        return Ok(SessionEnd::Crashed);
                    }
                    let reply = match self.run_task(batch_id, &itemsets) {
                        Ok(m) => m,
                        Err(e) => Message::Err { message: e.to_string() },
                    };
                    write_frame(&mut stream, &reply)?;
                    self.tasks_done += 1;
                }
                Message::LevelEnd { .. } => self.snapshot = None,
                Message::Bye => return Ok(SessionEnd::Bye),
                other => {
                    let message = format!("unexpected message {other:?}");
                    write_frame(&mut stream, &Message::Err { message })?;
                }
            }
        }
    }

    fn begin_level(&mut self, mut config: EngineConfig, snapshot: &[RuleLine]) -> Result<()> {
        if let Some(t) = self.options.threads {
            config.workers = t;
        }
        let reuse = self.miner.as_ref().is_some_and(|m| m.config == config);
        if !reuse {
            let ds = load_dataset(self.bytes.as_slice(), &config.shared_attr)?;
            self.miner = Some(Miner::new(ds, config)?);
        }
        let miner = self.miner.as_ref().expect("miner just built");
        let mut store = RuleStore::new();
        for line in snapshot {
            let s = recompute(miner, line)?;
            store.insert_if_undominated(s.rule, s.metrics, &miner.dominance);
        }
        self.snapshot = Some(store);
        Ok(())
    }

    fn run_task(&mut self, batch_id: usize, itemsets: &[Vec<String>]) -> Result<Message> {
        let (Some(miner), Some(snapshot)) = (&self.miner, &self.snapshot) else {
            return Err(Error::Protocol("TASK before LEVEL_BEGIN".into()));
        };
        let catalog = &miner.dataset.catalog;
        let sets = itemsets
            .iter()
            .map(|names| {
                let mut set = names
                    .iter()
                    .map(|n| catalog.item_id(n).ok_or_else(|| Error::UnknownItem(n.clone())))
                    .collect::<Result<Itemset>>()?;
                miner.ord.sort_items(&mut set);
                Ok(set)
            })
            .collect::<Result<Vec<_>>>()?;
        let (rules, audit) = miner.process_batch(&sets, snapshot);
        Ok(Message::Result {
            batch_id,
            rules: to_lines(miner, &rules),
            audit,
        })
    }
}

fn to_lines(miner: &Miner, rules: &[StoredRule]) -> Vec<RuleLine> {
    rules
        .iter()
        .map(|s| RuleLine::from_rule(&s.rule, &s.metrics, &miner.dataset.catalog, Precision::Full))
        .collect()
}

/// Parses a rule line and replaces its metrics with exact ones from the
/// local index.
fn recompute(miner: &Miner, line: &RuleLine) -> Result<StoredRule> {
    let s = line.to_rule(&miner.dataset.catalog, miner.shared_attr())?;
    let metrics = miner.index.metrics(&s.rule)?;
    Ok(StoredRule::new(s.rule, metrics))
}

/// Per-level bookkeeping: the first result for each batch is kept, later
/// ones are counted and dropped.
#[derive(Debug)]
pub struct BatchLedger {
    results: Vec<Option<Vec<StoredRule>>>,
    pub duplicates: usize,
}

impl BatchLedger {
    pub fn new(batches: usize) -> Self {
        BatchLedger {
            results: vec![None; batches],
            duplicates: 0,
        }
    }

    /// Returns whether the result was accepted.
    pub fn accept(&mut self, batch_id: usize, rules: Vec<StoredRule>) -> bool {
        match self.results.get_mut(batch_id) {
            Some(slot @ None) => {
                *slot = Some(rules);
                true
            }
            _ => {
                self.duplicates += 1;
                false
            }
        }
    }

    pub fn accepted(&self) -> usize {
        self.results.iter().filter(|r| r.is_some()).count()
    }

    pub fn missing(&self) -> Vec<usize> {
        (0..self.results.len()).filter(|&i| self.results[i].is_none()).collect()
    }

    pub fn into_results(self) -> Option<Vec<Vec<StoredRule>>> {
        self.results.into_iter().collect()
    }
}

struct Session {
    endpoint: String,
    stream: TcpStream,
}

impl Session {
    fn connect(endpoint: &str, digest: &str, timeout: Duration) -> Result<Session> {
        let addr = endpoint
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| Error::Protocol(format!("cannot resolve `{endpoint}`")))?;
        let mut stream = TcpStream::connect_timeout(&addr, timeout)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(timeout))?;
        write_frame(
            &mut stream,
            &Message::Hello {
                digest: digest.to_owned(),
            },
        )?;
        match read_frame(&mut stream)? {
            Some(Incoming::Message(Message::HelloAck { digest: theirs })) if theirs == digest => Ok(Session {
                endpoint: endpoint.to_owned(),
                stream,
            }),
            Some(Incoming::Message(Message::Err { message })) => Err(Error::Protocol(message)),
            other => Err(Error::Protocol(format!("unexpected handshake reply {other:?}"))),
        }
    }

    fn send(&mut self, msg: &Message) -> Result<()> {
        write_frame(&mut self.stream, msg)
    }

    fn run_task(&mut self, batch_id: usize, itemsets: Vec<Vec<String>>) -> Result<(Vec<RuleLine>, AuditCounts)> {
        self.send(&Message::Task { batch_id, itemsets })?;
        loop {
            match read_frame(&mut self.stream)? {
                Some(Incoming::Message(Message::Result {
                    batch_id: id,
                    rules,
                    audit,
                })) if id == batch_id => return Ok((rules, audit)),
                Some(Incoming::Message(Message::Result { batch_id: id, .. })) => {
                    log::debug!("{}: stale result for batch {id}", self.endpoint);
                }
                Some(Incoming::Message(Message::Err { message })) => return Err(Error::Protocol(message)),
                Some(other) => return Err(Error::Protocol(format!("unexpected reply {other:?}"))),
                None => return Err(Error::Protocol("worker closed the connection".into())),
            }
        }
    }
}

enum Event {
    Done {
        batch_id: usize,
        rules: Vec<RuleLine>,
        audit: AuditCounts,
    },
    Lost {
        endpoint: String,
        batch_id: usize,
        reason: String,
    },
}

/// Runs levels on remote workers, reconnecting missing ones at every level
/// boundary and falling back to in-process execution when none respond.
pub struct RemoteExecutor {
    endpoints: Vec<String>,
    digest: String,
    sessions: HashMap<String, Session>,
    timeout: Duration,
    local: LocalExecutor,
    audit: AuditCounts,
    pub duplicates: usize,
    pub redispatched: usize,
}

impl RemoteExecutor {
    pub fn new(endpoints: Vec<String>, data: &Path) -> Result<Self> {
        Ok(RemoteExecutor {
            endpoints,
            digest: file_digest(data)?,
            sessions: HashMap::new(),
            timeout: DEFAULT_TASK_TIMEOUT,
            local: LocalExecutor::default(),
            audit: AuditCounts::default(),
            duplicates: 0,
            redispatched: 0,
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn audit(&self) -> AuditCounts {
        let mut a = self.audit;
        a += self.local.audit();
        a
    }

    /// Sends BYE to every connected worker.
    pub fn shutdown(&mut self) {
        for (_, mut s) in self.sessions.drain() {
            let _ = s.send(&Message::Bye);
        }
    }

    fn join_missing(&mut self) {
        for ep in &self.endpoints {
            if self.sessions.contains_key(ep) {
                continue;
            }
            match Session::connect(ep, &self.digest, self.timeout) {
                Ok(s) => {
                    log::info!("worker {ep} joined");
                    self.sessions.insert(ep.clone(), s);
                }
                Err(e) => log::warn!("worker {ep} unavailable: {e}"),
            }
        }
    }

    fn round(
        &mut self,
        miner: &Miner,
        batches: &[Vec<Itemset>],
        pending: Vec<usize>,
        ledger: &mut BatchLedger,
    ) -> Result<()> {
        let queue = Mutex::new(VecDeque::from(pending));
        let (tx, rx) = mpsc::channel();
        let catalog = &miner.dataset.catalog;
        let named = |id: usize| -> Vec<Vec<String>> {
            batches[id]
                .iter()
                .map(|set| set.iter().map(|&i| catalog.item_name(i).to_owned()).collect())
                .collect()
        };
        std::thread::scope(|scope| {
            for session in self.sessions.values_mut() {
                let tx = tx.clone();
                let queue = &queue;
                let named = &named;
                scope.spawn(move || loop {
                    let Some(id) = queue.lock().expect("queue lock").pop_front() else {
                        break;
                    };
                    match session.run_task(id, named(id)) {
                        Ok((rules, audit)) => {
                            let _ = tx.send(Event::Done {
                                batch_id: id,
                                rules,
                                audit,
                            });
                        }
                        Err(e) => {
                            queue.lock().expect("queue lock").push_back(id);
                            let _ = tx.send(Event::Lost {
                                endpoint: session.endpoint.clone(),
                                batch_id: id,
                                reason: e.to_string(),
                            });
                            let _ = session.stream.shutdown(Shutdown::Both);
                            break;
                        }
                    }
                });
            }
        });
        drop(tx);
        for event in rx {
            match event {
                Event::Done { batch_id, rules, audit } => {
                    let parsed: Result<Vec<StoredRule>> = rules.iter().map(|l| recompute(miner, l)).collect();
                    match parsed {
                        Ok(rules) => {
                            if ledger.accept(batch_id, rules) {
                                self.audit += audit;
                            }
                        }
                        Err(e) => log::warn!("discarding unreadable result for batch {batch_id}: {e}"),
                    }
                }
                Event::Lost {
                    endpoint,
                    batch_id,
                    reason,
                } => {
                    log::warn!("worker {endpoint} lost batch {batch_id}: {reason}");
                    self.redispatched += 1;
                    self.sessions.remove(&endpoint);
                }
            }
        }
        Ok(())
    }
}

impl LevelExecutor for RemoteExecutor {
    fn run_level(
        &mut self,
        miner: &Miner,
        k: usize,
        batches: &[Vec<Itemset>],
        snapshot: &RuleStore,
    ) -> Result<Vec<Vec<StoredRule>>> {
        self.join_missing();
        let mut snap: Vec<StoredRule> = snapshot.iter().cloned().collect();
        crate::rule::sort_canonical(&mut snap);
        let begin = Message::LevelBegin {
            k,
            config: miner.config.clone(),
            snapshot: to_lines(miner, &snap),
        };
        let mut dead = Vec::new();
        for (ep, s) in self.sessions.iter_mut() {
            if let Err(e) = s.send(&begin) {
                log::warn!("worker {ep} dropped at level {k}: {e}");
                dead.push(ep.clone());
            }
        }
        for ep in dead {
            self.sessions.remove(&ep);
        }

        let mut ledger = BatchLedger::new(batches.len());
        loop {
            let missing = ledger.missing();
            if missing.is_empty() {
                break;
            }
            if self.sessions.is_empty() {
                log::info!("level {k}: running {} batches in-process", missing.len());
                let subset: Vec<Vec<Itemset>> = missing.iter().map(|&i| batches[i].clone()).collect();
                let results = self.local.run_level(miner, k, &subset, snapshot)?;
                for (id, rules) in missing.into_iter().zip(results) {
                    ledger.accept(id, rules);
                }
                break;
            }
            let before = ledger.accepted();
            let alive = self.sessions.len();
            self.round(miner, batches, missing, &mut ledger)?;
            if ledger.accepted() == before && self.sessions.len() == alive {
                return Err(Error::Protocol(format!("level {k} made no progress")));
            }
        }
        for s in self.sessions.values_mut() {
            let _ = s.send(&Message::LevelEnd { k });
        }
        self.duplicates += ledger.duplicates;
        Ok(ledger.into_results().expect("every batch accounted for"))
    }
}

impl Drop for RemoteExecutor {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Mines with remote workers, then releases them.
pub fn mine_distributed(
    miner: &Miner,
    endpoints: Vec<String>,
    data: &Path,
    timeout: Duration,
) -> Result<crate::engine::MineOutput> {
    let mut exec = RemoteExecutor::new(endpoints, data)?.with_timeout(timeout);
    let mut out = miner.mine_with(&mut exec)?;
    out.report.audit = exec.audit();
    exec.shutdown();
    Ok(out)
}
