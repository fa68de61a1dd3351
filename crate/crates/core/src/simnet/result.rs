use serde::{Deserialize, Serialize};

use super::Simulation;
use crate::encoding::sha256;
use crate::metrics::reordering;
use crate::node::Ordering;
use crate::trace::Trace;
use crate::types::Strategy;

pub const RESULT_SCHEMA_VERSION: u32 = 1;

/// Per-node digest of a committed trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub node: u16,
    pub honest: bool,
    pub length: usize,
    /// SHA-256 over the committed command digests, in order.
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub schema_version: u32,
    pub strategy: Strategy,
    pub n: usize,
    pub f: usize,
    pub byzantine: usize,
    pub seed: u64,
    pub reordered_ratio: f64,
    pub inverted_pairs: u64,
    pub same_proposer_pairs: u64,
    pub alter_path_ratio: f64,
    /// Every honest trace is a prefix of the longest one; at quiescence the
    /// traces are identical.
    pub consistency: bool,
    pub committed: usize,
    pub uncommitted: u64,
    pub quiescent: bool,
    pub end_time: u64,
    pub messages: u64,
    pub traces: Vec<TraceSummary>,
    #[serde(skip)]
    pub full_traces: Vec<Trace>,
}

impl ExperimentResult {
    pub(super) fn collect(sim: &Simulation) -> Self {
        let s = sim.scenario();
        let full_traces: Vec<Trace> = sim
            .nodes()
            .iter()
            .map(|n| Trace::new(s.strategy, n.id(), n.committed_order()))
            .collect();
        let traces: Vec<TraceSummary> = full_traces
            .iter()
            .map(|t| {
                let bytes: Vec<u8> = t.entries.iter().flat_map(|e| e.digest.0).collect();
                TraceSummary {
                    node: t.node.0,
                    honest: s.is_honest(t.node),
                    length: t.entries.len(),
                    hash: sha256(&bytes).to_hex(),
                }
            })
            .collect();

        let honest: Vec<usize> = (0..s.n).filter(|&i| traces[i].honest).collect();
        let longest = honest.iter().copied().max_by_key(|&i| (traces[i].length, std::cmp::Reverse(i)));
        let consistency = longest.is_none_or(|l| {
            honest.iter().all(|&i| {
                let (a, b) = (&full_traces[i], &full_traces[l]);
                a.commands().zip(b.commands()).all(|(x, y)| x == y)
            })
        });
        let reference = honest.first().copied();

        let (reorder, committed, alter_path_ratio) = match reference {
            Some(i) => {
                let order: Vec<_> = full_traces[i].entries.iter().map(|e| (e.proposer, e.seq)).collect();
                let alter = match sim.nodes()[i].ordering() {
                    Ordering::Anchor(ex) => {
                        let (normal, alter) = ex.path_counts();
                        if normal + alter == 0 {
                            0.0
                        } else {
                            alter as f64 / (normal + alter) as f64
                        }
                    }
                    _ => 0.0,
                };
                (reordering(&order), order.len(), alter)
            }
            None => (Default::default(), 0, 0.0),
        };

        ExperimentResult {
            schema_version: RESULT_SCHEMA_VERSION,
            strategy: s.strategy,
            n: s.n,
            f: s.f,
            byzantine: s.byzantine.len(),
            seed: s.seed,
            reordered_ratio: reorder.ratio(),
            inverted_pairs: reorder.inverted,
            same_proposer_pairs: reorder.pairs,
            alter_path_ratio,
            consistency,
            committed,
            uncommitted: s.total_commands().saturating_sub(committed as u64),
            quiescent: sim.is_quiescent(),
            end_time: sim.now(),
            messages: sim.delivered(),
            traces,
            full_traces,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result is serializable")
    }

    /// `|byzantine| <= f` but honest traces diverge.
    pub fn consistency_violated(&self) -> bool {
        self.byzantine <= self.f && !self.consistency
    }
}
