//! Committed-order trace files.
//!
//! ```text
//! # phalanx-trace v1 strategy=anchor node=N0
//! 0 0 1 5b55c3...c322 12 NORMAL
//! 1 0 2 0e1a07...9f41 15 ALTER
//! # end count=2
//! ```
//!
//! Each entry is `index proposer seq digest trusted_timestamp path`; the
//! path is `N/A` outside the anchor executor. The trailer guards against
//! truncated files.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::executor::{AnchorPath, Committed};
use crate::types::{Digest, NodeId, ProposerId, Strategy, Timestamp};

pub const TRACE_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub proposer: ProposerId,
    pub seq: u64,
    pub digest: Digest,
    pub trusted_timestamp: Timestamp,
    pub path: Option<AnchorPath>,
}

impl From<&Committed> for TraceEntry {
    fn from(c: &Committed) -> Self {
        TraceEntry {
            proposer: c.command.proposer,
            seq: c.command.seq,
            digest: c.command.digest,
            trusted_timestamp: c.trusted_timestamp,
            path: c.path,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub strategy: Strategy,
    pub node: NodeId,
    pub entries: Vec<TraceEntry>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("trace is truncated (no trailer)")]
    Truncated,
}

impl Trace {
    pub fn new(strategy: Strategy, node: NodeId, committed: &[Committed]) -> Self {
        Trace {
            strategy,
            node,
            entries: committed.iter().map(TraceEntry::from).collect(),
        }
    }

    pub fn render(&self) -> String {
        let mut s = format!("# phalanx-trace {TRACE_VERSION} strategy={} node={}\n", self.strategy, self.node);
        for (i, e) in self.entries.iter().enumerate() {
            let tag = e.path.map_or("N/A", AnchorPath::tag);
            writeln!(s, "{i} {} {} {} {} {tag}", e.proposer.0, e.seq, e.digest, e.trusted_timestamp).unwrap();
        }
        writeln!(s, "# end count={}", self.entries.len()).unwrap();
        s
    }

    pub fn parse(text: &str) -> Result<Self, TraceError> {
        let err = |line: usize, msg: &str| TraceError::Parse {
            line: line + 1,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(TraceError::Truncated)?;
        let mut h = header.split_whitespace();
        if (h.next(), h.next(), h.next()) != (Some("#"), Some("phalanx-trace"), Some(TRACE_VERSION)) {
            return Err(err(0, "bad header"));
        }
        let mut strategy = None;
        let mut node = None;
        for kv in h {
            match kv.split_once('=') {
                Some(("strategy", v)) => strategy = Some(v.parse::<Strategy>().map_err(|m| err(0, &m))?),
                Some(("node", v)) => {
                    let id = v.strip_prefix('N').and_then(|x| x.parse().ok()).ok_or_else(|| err(0, "bad node"))?;
                    node = Some(NodeId(id));
                }
                _ => return Err(err(0, "bad header field")),
            }
        }
        let (Some(strategy), Some(node)) = (strategy, node) else {
            return Err(err(0, "incomplete header"));
        };

        let mut entries = Vec::new();
        for (ln, line) in lines {
            if let Some(rest) = line.strip_prefix("# end count=") {
                let count: usize = rest.trim().parse().map_err(|_| err(ln, "bad trailer"))?;
                if count != entries.len() {
                    return Err(err(ln, "entry count mismatch"));
                }
                return Ok(Trace { strategy, node, entries });
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 6 {
                return Err(err(ln, "expected 6 fields"));
            }
            if f[0].parse::<usize>().ok() != Some(entries.len()) {
                return Err(err(ln, "index out of sequence"));
            }
            let num = |s: &str| s.parse::<u64>().map_err(|_| err(ln, "bad number"));
            let path = match f[5] {
                "NORMAL" => Some(AnchorPath::Normal),
                "ALTER" => Some(AnchorPath::Alter),
                "N/A" => None,
                _ => return Err(err(ln, "bad path tag")),
            };
            entries.push(TraceEntry {
                proposer: ProposerId(f[1].parse().map_err(|_| err(ln, "bad proposer"))?),
                seq: num(f[2])?,
                digest: Digest::from_hex(f[3]).ok_or_else(|| err(ln, "bad digest"))?,
                trusted_timestamp: num(f[4])?,
                path,
            });
        }
        Err(TraceError::Truncated)
    }

    pub fn write(&self, path: &Path) -> Result<(), TraceError> {
        std::fs::write(path, self.render())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, TraceError> {
        Trace::parse(&std::fs::read_to_string(path)?)
    }

    pub fn commands(&self) -> impl Iterator<Item = (ProposerId, u64, Digest)> + '_ {
        self.entries.iter().map(|e| (e.proposer, e.seq, e.digest))
    }
}

/// First index at which the committed command sequences differ, or `None`
/// when they are identical. Timestamps and path tags are not compared.
pub fn first_divergence(a: &Trace, b: &Trace) -> Option<usize> {
    let mut i = 0;
    let mut ia = a.commands();
    let mut ib = b.commands();
    loop {
        match (ia.next(), ib.next()) {
            (None, None) => return None,
            (x, y) if x != y => return Some(i),
            _ => i += 1,
        }
    }
}
