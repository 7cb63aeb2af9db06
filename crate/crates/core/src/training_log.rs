//! Per-step training records consumed by policy selection.
//!
//! States are interned: repeated observations (every GridWorld cell is
//! visited thousands of times) share one stored copy.
//!
//! Text format, one header line then one whitespace-separated record per line:
//!
//! ```text
//! # seerl-training-log version=1 state_dim=4 action=discrete:2
//! <step> <cycle_index> <state_1> .. <state_d> <action_1> .. <action_k> <|L'|>
//! ```
//!
//! States are kept and written with six decimals; `|L'|` with a round-trip
//! exact representation.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::env::Action;

pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("record {index}: {reason}")]
    InvalidRecord { index: usize, reason: String },
    #[error("bad log header: {0}")]
    BadHeader(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionKind {
    Discrete(usize),
    Continuous(usize),
}

impl ActionKind {
    fn width(self) -> usize {
        match self {
            ActionKind::Discrete(_) => 1,
            ActionKind::Continuous(k) => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub step: u64,
    pub cycle_index: u32,
    pub state_id: u32,
    pub action: Action,
    pub abs_error: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingLog {
    state_dim: usize,
    action_kind: ActionKind,
    states: Vec<f64>,
    interned: HashMap<Vec<u64>, u32>,
    records: Vec<LogRecord>,
}

impl PartialEq for TrainingLog {
    fn eq(&self, other: &Self) -> bool {
        self.state_dim == other.state_dim
            && self.action_kind == other.action_kind
            && self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.step == b.step
                    && a.cycle_index == b.cycle_index
                    && a.action == b.action
                    && a.abs_error.to_bits() == b.abs_error.to_bits()
                    && self.state(a.state_id) == other.state(b.state_id)
            })
    }
}

impl TrainingLog {
    pub fn new(state_dim: usize, action_kind: ActionKind) -> Self {
        TrainingLog {
            state_dim,
            action_kind,
            states: Vec::new(),
            interned: HashMap::new(),
            records: Vec::new(),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_kind(&self) -> ActionKind {
        self.action_kind
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn state(&self, id: u32) -> &[f64] {
        let start = id as usize * self.state_dim;
        &self.states[start..start + self.state_dim]
    }

    pub fn distinct_states(&self) -> usize {
        self.interned.len()
    }

    fn intern(&mut self, state: &[f64]) -> u32 {
        let state: Vec<f64> = state.iter().map(|&x| round_six(x)).collect();
        let key: Vec<u64> = state.iter().map(|x| x.to_bits()).collect();
        if let Some(&id) = self.interned.get(&key) {
            return id;
        }
        let id = self.interned.len() as u32;
        self.states.extend_from_slice(&state);
        self.interned.insert(key, id);
        id
    }

    pub fn push(
        &mut self,
        step: u64,
        cycle_index: u32,
        state: &[f64],
        action: Action,
        abs_error: f64,
    ) -> Result<(), LogError> {
        let index = self.records.len();
        let invalid = |reason: String| LogError::InvalidRecord { index, reason };
        if state.len() != self.state_dim {
            return Err(invalid(format!("state has {} entries, expected {}", state.len(), self.state_dim)));
        }
        if !(abs_error.is_finite() && abs_error >= 0.0) {
            return Err(invalid(format!("|L'| = {abs_error} is not finite and non-negative")));
        }
        let ok = match (&action, self.action_kind) {
            (Action::Discrete(a), ActionKind::Discrete(n)) => *a < n,
            (Action::Continuous(v), ActionKind::Continuous(k)) => v.len() == k,
            _ => false,
        };
        if !ok {
            return Err(invalid(format!("action {action} does not match {:?}", self.action_kind)));
        }
        let state_id = self.intern(state);
        self.records.push(LogRecord { step, cycle_index, state_id, action, abs_error });
        Ok(())
    }

    /// Appends all records of `other`, re-interning its states.
    pub fn extend_from(&mut self, other: &TrainingLog) -> Result<(), LogError> {
        for r in &other.records {
            self.push(r.step, r.cycle_index, other.state(r.state_id), r.action.clone(), r.abs_error)?;
        }
        Ok(())
    }

    fn header(&self) -> String {
        let action = match self.action_kind {
            ActionKind::Discrete(n) => format!("discrete:{n}"),
            ActionKind::Continuous(k) => format!("continuous:{k}"),
        };
        format!(
            "# seerl-training-log version={LOG_VERSION} state_dim={} action={action}",
            self.state_dim
        )
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", self.header())?;
        let mut line = String::new();
        for r in &self.records {
            use std::fmt::Write as _;
            line.clear();
            let _ = write!(line, "{} {}", r.step, r.cycle_index);
            for x in self.state(r.state_id) {
                let _ = write!(line, " {:.6}", x);
            }
            match &r.action {
                Action::Discrete(a) => {
                    let _ = write!(line, " {a}");
                }
                Action::Continuous(v) => {
                    for x in v {
                        let _ = write!(line, " {x}");
                    }
                }
            }
            let _ = write!(line, " {}", r.abs_error);
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, LogError> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| LogError::BadHeader("empty file".into()))??;
        let mut log = parse_header(&header)?;
        let width = 2 + log.state_dim + log.action_kind.width() + 1;
        for (n, line) in lines.enumerate() {
            let line = line?;
            let lineno = n + 2;
            if line.trim().is_empty() {
                continue;
            }
            let err = |reason: &str| LogError::Parse { line: lineno, reason: reason.to_string() };
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != width {
                return Err(err(&format!("expected {width} fields, found {}", tokens.len())));
            }
            let step: u64 = tokens[0].parse().map_err(|_| err("bad step"))?;
            let cycle: u32 = tokens[1].parse().map_err(|_| err("bad cycle index"))?;
            let floats = |s: &[&str]| -> Result<Vec<f64>, LogError> {
                s.iter().map(|t| t.parse::<f64>().map_err(|_| err("bad real"))).collect()
            };
            let d = log.state_dim;
            let state = floats(&tokens[2..2 + d])?;
            let action = match log.action_kind {
                ActionKind::Discrete(_) => {
                    Action::Discrete(tokens[2 + d].parse().map_err(|_| err("bad action"))?)
                }
                ActionKind::Continuous(k) => Action::Continuous(floats(&tokens[2 + d..2 + d + k])?),
            };
            let abs_error: f64 = tokens[width - 1].parse().map_err(|_| err("bad |L'|"))?;
            log.push(step, cycle, &state, action, abs_error)
                .map_err(|e| LogError::Parse { line: lineno, reason: e.to_string() })?;
        }
        Ok(log)
    }
}

/// The value a state coordinate has after a write and read of the text
/// form, so a log in memory and its file copy select identically.
fn round_six(x: f64) -> f64 {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        return x;
    }
    format!("{x:.6}").parse().expect("formatted float parses")
}

fn parse_header(line: &str) -> Result<TrainingLog, LogError> {
    let bad = || LogError::BadHeader(line.to_string());
    let rest = line.strip_prefix("# seerl-training-log ").ok_or_else(bad)?;
    let mut version = None;
    let mut state_dim = None;
    let mut action = None;
    for field in rest.split_whitespace() {
        let (k, v) = field.split_once('=').ok_or_else(bad)?;
        match k {
            "version" => version = v.parse::<u32>().ok(),
            "state_dim" => state_dim = v.parse::<usize>().ok(),
            "action" => {
                let (kind, n) = v.split_once(':').ok_or_else(bad)?;
                let n: usize = n.parse().map_err(|_| bad())?;
                action = match kind {
                    "discrete" => Some(ActionKind::Discrete(n)),
                    "continuous" => Some(ActionKind::Continuous(n)),
                    _ => None,
                };
            }
            _ => return Err(bad()),
        }
    }
    match (version, state_dim, action) {
        (Some(LOG_VERSION), Some(d), Some(a)) => Ok(TrainingLog::new(d, a)),
        (Some(v), _, _) if v != LOG_VERSION => {
            Err(LogError::BadHeader(format!("unsupported version {v}")))
        }
        _ => Err(bad()),
    }
}
