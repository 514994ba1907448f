//! Label sources with budget enforcement and an append-only label log.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::{Dataset, GroundTruth, PairKey, RecordPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "M")]
    Match,
    #[serde(rename = "N")]
    NonMatch,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Match => "M",
            Label::NonMatch => "N",
        })
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "M" | "m" => Ok(Label::Match),
            "N" | "n" => Ok(Label::NonMatch),
            other => Err(format!("label must be M or N, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("label budget of {0} exhausted")]
    BudgetExhausted(usize),
    #[error("labeling session was aborted")]
    Aborted,
    #[error("replay diverged at label {seq}: log has ({expected_left}, {expected_right}), learner asked for ({left}, {right})")]
    ReplayDivergence {
        seq: u64,
        expected_left: String,
        expected_right: String,
        left: String,
        right: String,
    },
    #[error("replay log has no entry for label {0}")]
    ReplayExhausted(u64),
    #[error("malformed label log at line {line}: {message}")]
    MalformedLog { line: usize, message: String },
    #[error("label log i/o: {0}")]
    Io(String),
}

/// Anything that can answer a label request.
pub trait LabelSource: Send {
    fn label(&mut self, seq: u64, pair: &RecordPair, key: PairKey) -> Result<Label, OracleError>;
}

/// Answers from stored ground truth.
pub struct GroundTruthSource {
    truth: Arc<GroundTruth>,
}

impl GroundTruthSource {
    pub fn new(truth: Arc<GroundTruth>) -> Self {
        Self { truth }
    }
}

impl LabelSource for GroundTruthSource {
    fn label(&mut self, _seq: u64, _pair: &RecordPair, key: PairKey) -> Result<Label, OracleError> {
        Ok(if self.truth.contains(&key) {
            Label::Match
        } else {
            Label::NonMatch
        })
    }
}

/// Answers exactly the logged labels in order.
pub struct ReplaySource {
    entries: Vec<LogEntry>,
    next: usize,
}

impl ReplaySource {
    pub fn new(entries: Vec<LogEntry>) -> Self {
        Self { entries, next: 0 }
    }
}

impl LabelSource for ReplaySource {
    fn label(&mut self, seq: u64, pair: &RecordPair, _key: PairKey) -> Result<Label, OracleError> {
        let e = self
            .entries
            .get(self.next)
            .ok_or(OracleError::ReplayExhausted(seq))?;
        if e.left != pair.left || e.right != pair.right {
            return Err(OracleError::ReplayDivergence {
                seq,
                expected_left: e.left.clone(),
                expected_right: e.right.clone(),
                left: pair.left.clone(),
                right: pair.right.clone(),
            });
        }
        self.next += 1;
        Ok(e.label)
    }
}

/// Answers through a [`LabelExchange`], blocking until someone responds.
pub struct InteractiveSource {
    exchange: Arc<LabelExchange>,
}

impl InteractiveSource {
    pub fn new(exchange: Arc<LabelExchange>) -> Self {
        Self { exchange }
    }
}

impl LabelSource for InteractiveSource {
    fn label(&mut self, _seq: u64, pair: &RecordPair, key: PairKey) -> Result<Label, OracleError> {
        self.exchange.request(pair.clone(), key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingRequest {
    pub id: u64,
    pub pair: RecordPair,
    pub key: PairKey,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnswerOutcome {
    Accepted,
    /// Same answer already recorded for this request.
    Duplicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum AnswerError {
    #[error("request {0} was never issued")]
    Unknown(u64),
    #[error("request {0} is no longer pending")]
    Stale(u64),
    #[error("request {0} was already answered differently")]
    Conflict(u64),
}

#[derive(Default)]
struct ExchangeState {
    next_id: u64,
    pending: Option<PendingRequest>,
    answered: HashMap<u64, Label>,
    closed: bool,
}

type Listener = Box<dyn Fn() + Send + Sync>;

/// Rendezvous between a learner waiting for labels and a labeler answering
/// them. One request is pending at a time; answers are idempotent per id.
#[derive(Default)]
pub struct LabelExchange {
    state: Mutex<ExchangeState>,
    cond: Condvar,
    listener: Mutex<Option<Listener>>,
}

impl LabelExchange {
    pub fn new() -> Self {
        Self::default()
    }

    /// Called after every state change (new request, answer, close).
    pub fn set_listener(&self, f: impl Fn() + Send + Sync + 'static) {
        *self.listener.lock().expect("listener lock") = Some(Box::new(f));
    }

    fn notify(&self) {
        if let Some(f) = self.listener.lock().expect("listener lock").as_ref() {
            f();
        }
    }

    /// Publishes a request and blocks until it is answered or the exchange
    /// is closed.
    pub fn request(&self, pair: RecordPair, key: PairKey) -> Result<Label, OracleError> {
        let id = {
            let mut st = self.state.lock().expect("exchange lock");
            if st.closed {
                return Err(OracleError::Aborted);
            }
            st.next_id += 1;
            let id = st.next_id;
            st.pending = Some(PendingRequest { id, pair, key });
            id
        };
        self.notify();
        let mut st = self.state.lock().expect("exchange lock");
        loop {
            if let Some(label) = st.answered.get(&id) {
                return Ok(*label);
            }
            if st.closed {
                st.pending = None;
                return Err(OracleError::Aborted);
            }
            st = self.cond.wait(st).expect("exchange lock");
        }
    }

    pub fn pending(&self) -> Option<PendingRequest> {
        self.state.lock().expect("exchange lock").pending.clone()
    }

    pub fn answer(&self, id: u64, label: Label) -> Result<AnswerOutcome, AnswerError> {
        let outcome = {
            let mut st = self.state.lock().expect("exchange lock");
            if let Some(prev) = st.answered.get(&id) {
                return if *prev == label {
                    Ok(AnswerOutcome::Duplicate)
                } else {
                    Err(AnswerError::Conflict(id))
                };
            }
            if id == 0 || id > st.next_id {
                return Err(AnswerError::Unknown(id));
            }
            if st.closed || st.pending.as_ref().map(|p| p.id) != Some(id) {
                return Err(AnswerError::Stale(id));
            }
            st.answered.insert(id, label);
            st.pending = None;
            AnswerOutcome::Accepted
        };
        self.cond.notify_all();
        self.notify();
        Ok(outcome)
    }

    /// Wakes the learner with an abort and rejects further answers.
    pub fn close(&self) {
        {
            let mut st = self.state.lock().expect("exchange lock");
            st.closed = true;
            st.pending = None;
        }
        self.cond.notify_all();
        self.notify();
    }

    pub fn is_closed(&self) -> bool {
        self.state.lock().expect("exchange lock").closed
    }
}

/// One answered label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub left: String,
    pub right: String,
    pub label: Label,
}

/// Budgeted access to a label source. Every answered label is logged.
pub struct OracleSession {
    budget: usize,
    log: Vec<LogEntry>,
    source: Box<dyn LabelSource>,
}

impl fmt::Debug for OracleSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OracleSession")
            .field("budget", &self.budget)
            .field("used", &self.log.len())
            .finish()
    }
}

impl OracleSession {
    pub fn new(source: Box<dyn LabelSource>, budget: usize) -> Self {
        Self {
            budget,
            log: Vec::new(),
            source,
        }
    }

    pub fn ground_truth(truth: Arc<GroundTruth>, budget: usize) -> Self {
        Self::new(Box::new(GroundTruthSource::new(truth)), budget)
    }

    pub fn interactive(exchange: Arc<LabelExchange>, budget: usize) -> Self {
        Self::new(Box::new(InteractiveSource::new(exchange)), budget)
    }

    /// A session answering the logged labels in order, with the budget set
    /// to the log length.
    pub fn replay(path: &Path) -> Result<Self, OracleError> {
        let entries = load_log(path)?;
        let budget = entries.len();
        Ok(Self::new(Box::new(ReplaySource::new(entries)), budget))
    }

    /// Like [`OracleSession::replay`] but keeping the original run's budget,
    /// which decides how the learner truncates its final round.
    pub fn replay_with_budget(path: &Path, budget: usize) -> Result<Self, OracleError> {
        let entries = load_log(path)?;
        Ok(Self::new(Box::new(ReplaySource::new(entries)), budget))
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn used(&self) -> usize {
        self.log.len()
    }

    pub fn remaining(&self) -> usize {
        self.budget - self.log.len()
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn label(&mut self, dataset: &Dataset, key: PairKey) -> Result<Label, OracleError> {
        if self.log.len() >= self.budget {
            return Err(OracleError::BudgetExhausted(self.budget));
        }
        let pair = dataset.pair_ids(key);
        let seq = self.log.len() as u64 + 1;
        let label = self.source.label(seq, &pair, key)?;
        self.log.push(LogEntry {
            seq,
            left: pair.left,
            right: pair.right,
            label,
        });
        debug_assert!(self.log.len() <= self.budget);
        Ok(label)
    }

    pub fn write_log<W: Write>(&self, out: W) -> Result<(), OracleError> {
        write_log(&self.log, out)
    }
}

pub fn write_log<W: Write>(entries: &[LogEntry], out: W) -> Result<(), OracleError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| OracleError::Io(e.to_string());
    w.write_record(["seq", "left", "right", "label"]).map_err(io)?;
    for e in entries {
        w.write_record([
            e.seq.to_string(),
            e.left.clone(),
            e.right.clone(),
            e.label.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| OracleError::Io(e.to_string()))
}

pub fn read_log<R: Read>(input: R) -> Result<Vec<LogEntry>, OracleError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let line = i + 2;
        let bad = |message: String| OracleError::MalformedLog { line, message };
        let row = row.map_err(|e| bad(e.to_string()))?;
        if row.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", row.len())));
        }
        let seq: u64 = row[0].parse().map_err(|_| bad(format!("bad sequence number {:?}", &row[0])))?;
        if seq != out.len() as u64 + 1 {
            return Err(bad(format!("expected sequence {}, found {seq}", out.len() + 1)));
        }
        let label = row[3].parse().map_err(bad)?;
        out.push(LogEntry {
            seq,
            left: row[1].to_string(),
            right: row[2].to_string(),
            label,
        });
    }
    Ok(out)
}

pub fn load_log(path: &Path) -> Result<Vec<LogEntry>, OracleError> {
    let f = std::fs::File::open(path).map_err(|e| OracleError::Io(format!("{}: {e}", path.display())))?;
    read_log(std::io::BufReader::new(f))
}
