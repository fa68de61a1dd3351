//! Scenario description and its `key = value` file format.
//!
//! ```text
//! # 4 nodes, one colluding shuffler
//! n = 4
//! byzantine_count = 1
//! byzantine_behavior = shuffle
//! commands_per_proposer = 1000
//! latency = 1..5
//! seed = 7
//! strategy = anchor
//! ```
//!
//! `byzantine = 3:shuffle+skew(5), 2:silent` names nodes explicitly;
//! `byzantine_count` assigns `byzantine_behavior` to the highest ids.
//! Latency ranges are `min..max` in milliseconds, a single number, or the
//! profiles `lan` (1..5) and `wan` (40..150). `latency` and
//! `proposer_latency` are sampled per message; `proposer_link_latency` is
//! sampled once per proposer-to-node link and added on top.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::node::Behavior;
use crate::types::{Cluster, NodeId, Strategy};

pub const LAN: (u64, u64) = (1, 5);
pub const WAN: (u64, u64) = (40, 150);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuthScheme {
    Mac,
    Ed25519,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub n: usize,
    pub f: usize,
    pub byzantine: BTreeMap<NodeId, Behavior>,
    pub proposers: usize,
    pub commands_per_proposer: u64,
    /// Requests carried by each command payload.
    pub batch_size: usize,
    /// Ordering interval in ms.
    pub delta_o: u64,
    /// Gap between consecutive commands of one proposer; 0 sends all at once.
    pub proposer_interval: u64,
    /// Node-to-node one-way latency range.
    pub latency: (u64, u64),
    /// Proposer-to-node one-way latency range.
    pub proposer_latency: (u64, u64),
    /// Fixed extra delay of each proposer-to-node link, drawn once per link
    /// from this range. Models nodes at different distances from a proposer.
    pub proposer_link_latency: (u64, u64),
    pub seed: u64,
    pub strategy: Strategy,
    /// Simulated ms after which the run stops even if work is pending.
    pub max_duration: u64,
    /// Re-broadcast of an unanswered pre-order; `None` derives it from the
    /// latency range.
    pub resend_interval: Option<u64>,
    pub auth: AuthScheme,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

impl Scenario {
    /// Defaults for an `n`-node cluster with no faults.
    pub fn new(n: usize) -> Self {
        Scenario {
            n,
            f: n.saturating_sub(1) / 3,
            byzantine: BTreeMap::new(),
            proposers: 1,
            commands_per_proposer: 100,
            batch_size: 1,
            delta_o: 5,
            proposer_interval: 1,
            latency: LAN,
            proposer_latency: LAN,
            proposer_link_latency: (0, 0),
            seed: 0,
            strategy: Strategy::Anchor,
            max_duration: 600_000,
            resend_interval: None,
            auth: AuthScheme::Mac,
        }
    }

    /// Replaces the Byzantine set with the `count` highest ids.
    pub fn with_byzantine(mut self, count: usize, behavior: Behavior) -> Self {
        self.byzantine = (self.n.saturating_sub(count)..self.n)
            .map(|i| (NodeId(i as u16), behavior))
            .collect();
        self
    }

    pub fn cluster(&self) -> Cluster {
        Cluster { n: self.n, f: self.f }
    }

    pub fn behavior(&self, node: NodeId) -> Behavior {
        self.byzantine.get(&node).copied().unwrap_or(Behavior::HONEST)
    }

    pub fn is_honest(&self, node: NodeId) -> bool {
        !self.byzantine.contains_key(&node)
    }

    pub fn total_commands(&self) -> u64 {
        self.proposers as u64 * self.commands_per_proposer
    }

    pub fn effective_resend_interval(&self) -> u64 {
        self.resend_interval
            .unwrap_or(4 * self.latency.1.max(self.proposer_latency.1) + self.delta_o)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if Cluster::new(self.n) != Some(self.cluster()) {
            return bad(format!("n = {} and f = {} violate n = 3f + 1", self.n, self.f));
        }
        if self.n < 4 {
            return bad("at least 4 nodes are required".into());
        }
        if self.n > u16::MAX as usize {
            return bad("too many nodes".into());
        }
        if let Some(id) = self.byzantine.keys().find(|id| id.index() >= self.n) {
            return bad(format!("byzantine node {id} out of range"));
        }
        if self.proposers == 0 || self.proposers > u16::MAX as usize {
            return bad("proposers must be in 1..=65535".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.delta_o == 0 {
            return bad("delta_o must be positive".into());
        }
        for (name, (lo, hi)) in [("latency", self.latency), ("proposer_latency", self.proposer_latency)] {
            if lo == 0 || lo > hi {
                return bad(format!("{name} must satisfy 1 <= min <= max"));
            }
        }
        if self.proposer_link_latency.0 > self.proposer_link_latency.1 {
            return bad("proposer_link_latency must satisfy min <= max".into());
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut kv = parse_pairs(text)?;
        let take = |kv: &mut BTreeMap<String, (usize, String)>, k: &str| kv.remove(k);
        let (nl, n) = take(&mut kv, "n").ok_or_else(|| ScenarioError::Parse {
            line: 0,
            msg: "missing key `n`".into(),
        })?;
        let mut s = Scenario::new(num(nl, &n)?);
        if let Some((l, v)) = take(&mut kv, "f") {
            s.f = num(l, &v)?;
        }
        let explicit = take(&mut kv, "byzantine");
        let count = take(&mut kv, "byzantine_count");
        let behavior = take(&mut kv, "byzantine_behavior");
        match (explicit, count) {
            (Some((l, _)), Some(_)) => return perr(l, "`byzantine` and `byzantine_count` are exclusive"),
            (Some((l, v)), None) => {
                if let Some((bl, _)) = behavior {
                    return perr(bl, "`byzantine_behavior` needs `byzantine_count`");
                }
                s.byzantine = parse_byzantine(l, &v)?;
            }
            (None, Some((l, v))) => {
                let b = match behavior {
                    Some((bl, bv)) => bv.parse().map_err(|m| ScenarioError::Parse { line: bl, msg: m })?,
                    None => "shuffle".parse().expect("valid"),
                };
                let count: usize = num(l, &v)?;
                if count > s.n {
                    return perr(l, "byzantine_count exceeds n");
                }
                s = s.with_byzantine(count, b);
            }
            (None, None) => {
                if let Some((bl, _)) = behavior {
                    return perr(bl, "`byzantine_behavior` needs `byzantine_count`");
                }
            }
        }
        for (key, (line, v)) in kv {
            match key.as_str() {
                "proposers" => s.proposers = num(line, &v)?,
                "commands_per_proposer" => s.commands_per_proposer = num(line, &v)?,
                "batch_size" => s.batch_size = num(line, &v)?,
                "delta_o" => s.delta_o = num(line, &v)?,
                "proposer_interval" => s.proposer_interval = num(line, &v)?,
                "latency" => s.latency = range(line, &v)?,
                "proposer_latency" => s.proposer_latency = range(line, &v)?,
                "proposer_link_latency" => s.proposer_link_latency = range(line, &v)?,
                "seed" => s.seed = num(line, &v)?,
                "strategy" => s.strategy = v.parse().map_err(|m| ScenarioError::Parse { line, msg: m })?,
                "max_duration" => s.max_duration = num(line, &v)?,
                "resend_interval" => s.resend_interval = Some(num(line, &v)?),
                "auth" => {
                    s.auth = match v.as_str() {
                        "mac" => AuthScheme::Mac,
                        "ed25519" => AuthScheme::Ed25519,
                        _ => return perr(line, &format!("unknown auth scheme `{v}`")),
                    }
                }
                _ => return perr(line, &format!("unknown key `{key}`")),
            }
        }
        s.validate()?;
        Ok(s)
    }

    /// Canonical file rendering; [`Scenario::parse`] reads it back.
    pub fn render(&self) -> String {
        let mut t = String::new();
        let mut kv = |k: &str, v: String| writeln!(t, "{k} = {v}").unwrap();
        kv("n", self.n.to_string());
        kv("f", self.f.to_string());
        if !self.byzantine.is_empty() {
            let list: Vec<String> = self.byzantine.iter().map(|(id, b)| format!("{}:{b}", id.0)).collect();
            kv("byzantine", list.join(", "));
        }
        kv("proposers", self.proposers.to_string());
        kv("commands_per_proposer", self.commands_per_proposer.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("delta_o", self.delta_o.to_string());
        kv("proposer_interval", self.proposer_interval.to_string());
        kv("latency", format!("{}..{}", self.latency.0, self.latency.1));
        kv("proposer_latency", format!("{}..{}", self.proposer_latency.0, self.proposer_latency.1));
        let (a, b) = self.proposer_link_latency;
        kv("proposer_link_latency", format!("{a}..{b}"));
        kv("seed", self.seed.to_string());
        kv("strategy", self.strategy.to_string());
        kv("max_duration", self.max_duration.to_string());
        if let Some(r) = self.resend_interval {
            kv("resend_interval", r.to_string());
        }
        let auth = match self.auth {
            AuthScheme::Mac => "mac",
            AuthScheme::Ed25519 => "ed25519",
        };
        kv("auth", auth.to_string());
        t
    }
}

fn perr<T>(line: usize, msg: &str) -> Result<T, ScenarioError> {
    Err(ScenarioError::Parse {
        line,
        msg: msg.to_string(),
    })
}

/// `key -> (line, value)`, rejecting duplicates and malformed lines.
pub(crate) fn parse_pairs(text: &str) -> Result<BTreeMap<String, (usize, String)>, ScenarioError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return perr(line, "expected `key = value`");
        };
        let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_string());
        if k.is_empty() || v.is_empty() {
            return perr(line, "empty key or value");
        }
        if out.insert(k.clone(), (line, v)).is_some() {
            return perr(line, &format!("duplicate key `{k}`"));
        }
    }
    Ok(out)
}

pub(crate) fn num<T: std::str::FromStr>(line: usize, v: &str) -> Result<T, ScenarioError> {
    v.replace('_', "")
        .parse()
        .map_err(|_| ScenarioError::Parse {
            line,
            msg: format!("bad number `{v}`"),
        })
}

fn range(line: usize, v: &str) -> Result<(u64, u64), ScenarioError> {
    match v.to_ascii_lowercase().as_str() {
        "lan" => return Ok(LAN),
        "wan" => return Ok(WAN),
        _ => {}
    }
    match v.split_once("..") {
        Some((a, b)) => Ok((num(line, a.trim())?, num(line, b.trim())?)),
        None => {
            let x = num(line, v)?;
            Ok((x, x))
        }
    }
}

fn parse_byzantine(line: usize, v: &str) -> Result<BTreeMap<NodeId, Behavior>, ScenarioError> {
    let mut out = BTreeMap::new();
    let mut seen = HashSet::new();
    for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (id, b) = item.split_once(':').unwrap_or((item, "shuffle"));
        let id: u16 = num(line, id.trim())?;
        if !seen.insert(id) {
            return perr(line, &format!("node {id} listed twice"));
        }
        let b: Behavior = b.parse().map_err(|m| ScenarioError::Parse { line, msg: m })?;
        out.insert(NodeId(id), b);
    }
    Ok(out)
}
