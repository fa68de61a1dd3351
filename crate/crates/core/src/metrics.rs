//! Reordered-command ratio.

use std::collections::BTreeMap;

use crate::types::ProposerId;

/// Inversions among same-proposer pairs of a committed trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Reordering {
    pub inverted: u64,
    pub pairs: u64,
}

impl Reordering {
    /// `inverted / pairs`, or `0.0` when no pair exists.
    pub fn ratio(&self) -> f64 {
        if self.pairs == 0 {
            0.0
        } else {
            self.inverted as f64 / self.pairs as f64
        }
    }
}

/// Counts, over all pairs of commands from the same proposer, those committed
/// in the opposite order of their sequence numbers. `trace` lists
/// `(proposer, seq)` in commit order.
pub fn reordering(trace: &[(ProposerId, u64)]) -> Reordering {
    let mut per: BTreeMap<ProposerId, Vec<u64>> = BTreeMap::new();
    for &(p, s) in trace {
        per.entry(p).or_default().push(s);
    }
    let mut out = Reordering::default();
    for mut seqs in per.into_values() {
        let k = seqs.len() as u64;
        out.pairs += k * k.saturating_sub(1) / 2;
        out.inverted += count_inversions(&mut seqs);
    }
    out
}

pub fn reordered_ratio(trace: &[(ProposerId, u64)]) -> f64 {
    reordering(trace).ratio()
}

/// Merge-sort inversion count; leaves `v` sorted.
fn count_inversions(v: &mut [u64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = count_inversions(&mut v[..mid]) + count_inversions(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            inv += (mid - i) as u64;
            merged.push(v[j]);
            j += 1;
        } else {
            merged.push(v[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..]);
    v.copy_from_slice(&merged);
    inv
}
