//! Parameter sweeps.
//!
//! A sweep file is a scenario file plus:
//!
//! ```text
//! sweep = byzantine_count      # field to vary
//! values = 0..5                # inclusive range or comma list
//! strategies = anchor, timestamp
//! reps = 10                    # repetition r runs with seed + r
//! ```

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::{num, parse_pairs};
use super::{run, ExperimentResult, Scenario, ScenarioError};
use crate::node::Behavior;
use crate::types::Strategy;

/// A strategy resists manipulation below this reordered ratio.
pub const RESISTED_THRESHOLD: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepField {
    ByzantineCount,
    N,
    DeltaO,
    BatchSize,
    Proposers,
    CommandsPerProposer,
    ProposerInterval,
}

impl SweepField {
    pub fn name(self) -> &'static str {
        match self {
            SweepField::ByzantineCount => "byzantine_count",
            SweepField::N => "n",
            SweepField::DeltaO => "delta_o",
            SweepField::BatchSize => "batch_size",
            SweepField::Proposers => "proposers",
            SweepField::CommandsPerProposer => "commands_per_proposer",
            SweepField::ProposerInterval => "proposer_interval",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            SweepField::ByzantineCount,
            SweepField::N,
            SweepField::DeltaO,
            SweepField::BatchSize,
            SweepField::Proposers,
            SweepField::CommandsPerProposer,
            SweepField::ProposerInterval,
        ]
        .into_iter()
        .find(|f| f.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepSpec {
    pub base: Scenario,
    pub field: SweepField,
    pub values: Vec<u64>,
    pub strategies: Vec<Strategy>,
    pub reps: u64,
    /// Behavior assigned to the highest ids when sweeping the fault count.
    pub behavior: Behavior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: u64,
    pub strategy: Strategy,
    pub rep: u64,
    pub seed: u64,
    pub reordered_ratio: f64,
    pub alter_path_ratio: f64,
    pub consistency: bool,
    pub uncommitted: u64,
    pub quiescent: bool,
    pub resisted: bool,
}

impl SweepRow {
    fn new(value: u64, rep: u64, r: &ExperimentResult) -> Self {
        SweepRow {
            value,
            strategy: r.strategy,
            rep,
            seed: r.seed,
            reordered_ratio: r.reordered_ratio,
            alter_path_ratio: r.alter_path_ratio,
            consistency: r.consistency,
            uncommitted: r.uncommitted,
            quiescent: r.quiescent,
            resisted: r.reordered_ratio < RESISTED_THRESHOLD,
        }
    }
}

const SWEEP_KEYS: [&str; 4] = ["sweep", "values", "strategies", "reps"];

impl SweepSpec {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let pairs = parse_pairs(text)?;
        let get = |k: &str| pairs.get(k).cloned();
        let perr = |line: usize, msg: String| ScenarioError::Parse { line, msg };

        let (fl, fv) = get("sweep").ok_or_else(|| perr(0, "missing key `sweep`".into()))?;
        let field = SweepField::parse(&fv).ok_or_else(|| perr(fl, format!("cannot sweep `{fv}`")))?;
        let (vl, vv) = get("values").ok_or_else(|| perr(0, "missing key `values`".into()))?;
        let values: Vec<u64> = match vv.split_once("..") {
            Some((a, b)) => (num(vl, a.trim())?..=num(vl, b.trim())?).collect(),
            None => vv.split(',').map(|x| num(vl, x.trim())).collect::<Result<_, _>>()?,
        };
        if values.is_empty() {
            return Err(perr(vl, "empty value list".into()));
        }
        let strategies = match get("strategies") {
            Some((l, v)) => v
                .split(',')
                .map(|x| x.parse().map_err(|m| perr(l, m)))
                .collect::<Result<Vec<Strategy>, _>>()?,
            None => vec![],
        };
        let reps = match get("reps") {
            Some((l, v)) => num(l, &v)?,
            None => 1,
        };
        if reps == 0 {
            return Err(perr(get("reps").unwrap().0, "reps must be positive".into()));
        }

        let mut drop: Vec<&str> = SWEEP_KEYS.to_vec();
        let mut behavior = "shuffle".parse().expect("valid");
        if field == SweepField::ByzantineCount {
            if let Some((l, v)) = get("byzantine_behavior") {
                behavior = v.parse().map_err(|m| perr(l, m))?;
            }
            drop.extend(["byzantine_behavior", "byzantine_count", "byzantine"]);
        }
        let base_text: String = text
            .lines()
            .map(|l| {
                let key = l.split('#').next().unwrap_or("").split('=').next().unwrap_or("").trim();
                if drop.contains(&key.to_ascii_lowercase().as_str()) {
                    ""
                } else {
                    l
                }
            })
            .collect::<Vec<_>>()
            .join("\n");
        let base = Scenario::parse(&base_text)?;
        let strategies = if strategies.is_empty() { vec![base.strategy] } else { strategies };
        let spec = SweepSpec {
            base,
            field,
            values,
            strategies,
            reps,
            behavior,
        };
        for &v in &spec.values {
            spec.scenario(v, spec.strategies[0], 0)?;
        }
        Ok(spec)
    }

    /// The scenario of one sweep point.
    pub fn scenario(&self, value: u64, strategy: Strategy, rep: u64) -> Result<Scenario, ScenarioError> {
        let mut s = self.base.clone();
        s.strategy = strategy;
        s.seed = self.base.seed.wrapping_add(rep);
        let v = value as usize;
        match self.field {
            SweepField::ByzantineCount => {
                if v > s.n {
                    return Err(ScenarioError::Invalid(format!("byzantine_count {v} exceeds n")));
                }
                s = s.with_byzantine(v, self.behavior);
            }
            SweepField::N => {
                s.n = v;
                s.f = v.saturating_sub(1) / 3;
                s.byzantine.retain(|id, _| id.index() < v);
            }
            SweepField::DeltaO => s.delta_o = value,
            SweepField::BatchSize => s.batch_size = v,
            SweepField::Proposers => s.proposers = v,
            SweepField::CommandsPerProposer => s.commands_per_proposer = value,
            SweepField::ProposerInterval => s.proposer_interval = value,
        }
        s.validate()?;
        Ok(s)
    }

    /// Runs every point in parallel. Rows are ordered by value, strategy
    /// (as listed) and repetition regardless of scheduling.
    pub fn run(&self) -> Result<Vec<SweepRow>, ScenarioError> {
        let mut points = Vec::new();
        for &v in &self.values {
            for &st in &self.strategies {
                for rep in 0..self.reps {
                    points.push((v, st, rep, self.scenario(v, st, rep)?));
                }
            }
        }
        let rows = points
            .par_iter()
            .map(|(v, _, rep, s)| run(s).map(|r| SweepRow::new(*v, *rep, &r)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(rows)
    }
}

/// Mean reordered ratio per `(value, strategy)`.
pub fn mean_ratio(rows: &[SweepRow]) -> BTreeMap<(u64, String), f64> {
    let mut acc: BTreeMap<(u64, String), (f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry((r.value, r.strategy.to_string())).or_default();
        e.0 += r.reordered_ratio;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect()
}
