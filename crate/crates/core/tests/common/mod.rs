//! Shared oracles and generators for the integration tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use phalanx::executor::Executor;
use phalanx::node::{Behavior, Ordering};
use phalanx::simnet::{Scenario, Simulation};
use phalanx::{Digest, NodeId, ProposerId, Strategy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Same-proposer pairs committed against proposer order, by pairwise
/// comparison.
pub fn brute_force_inversions(order: &[(ProposerId, u64)]) -> (u64, u64) {
    let (mut inverted, mut pairs) = (0, 0);
    for i in 0..order.len() {
        for j in i + 1..order.len() {
            if order[i].0 == order[j].0 {
                pairs += 1;
                if order[i].1 > order[j].1 {
                    inverted += 1;
                }
            }
        }
    }
    (inverted, pairs)
}

/// A random trace of `k` commands from up to `proposers` proposers.
pub fn random_trace(rng: &mut ChaCha8Rng, k: usize, proposers: u16) -> Vec<(ProposerId, u64)> {
    let mut next = vec![1u64; proposers as usize];
    let mut order: Vec<(ProposerId, u64)> = (0..k)
        .map(|_| {
            let p = rng.gen_range(0..proposers);
            next[p as usize] += 1;
            (ProposerId(p), next[p as usize] - 1)
        })
        .collect();
    for i in 0..order.len() {
        if rng.gen_bool(0.3) {
            let j = rng.gen_range(0..order.len());
            order.swap(i, j);
        }
    }
    order
}

fn random_behavior(rng: &mut ChaCha8Rng) -> Behavior {
    // Negative skew can saturate at zero and tie a node's timestamps, which
    // the free-will property assumes away.
    match rng.gen_range(0..6) {
        0 => Behavior { shuffle: true, ..Behavior::HONEST },
        1 => Behavior { reverse: true, ..Behavior::HONEST },
        2 => Behavior { skew: rng.gen_range(1..50), ..Behavior::HONEST },
        3 => Behavior { silent: true, ..Behavior::HONEST },
        4 => Behavior { shuffle: true, skew: rng.gen_range(1..50), ..Behavior::HONEST },
        _ => Behavior { reverse: true, skew: rng.gen_range(1..50), ..Behavior::HONEST },
    }
}

/// A random anchor-strategy scenario with at most `f` faulty nodes.
pub fn random_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
    let n = [4, 7, 10][rng.gen_range(0..3)];
    let mut s = Scenario::new(n);
    let byz = rng.gen_range(0..=s.f);
    let mut ids: Vec<usize> = (0..n).collect();
    for _ in 0..byz {
        let id = ids.swap_remove(rng.gen_range(0..ids.len()));
        s.byzantine.insert(NodeId(id as u16), random_behavior(&mut rng));
    }
    s.proposers = rng.gen_range(1..=3);
    s.commands_per_proposer = rng.gen_range(5..=30);
    s.batch_size = rng.gen_range(1..=3);
    s.delta_o = rng.gen_range(2..=8);
    s.proposer_interval = rng.gen_range(0..=3);
    let lo = rng.gen_range(1..=10);
    s.latency = (lo, lo + rng.gen_range(0..=20));
    s.proposer_latency = (1, rng.gen_range(1..=10));
    s.proposer_link_latency = (0, rng.gen_range(0..=30));
    s.seed = seed;
    s.strategy = Strategy::Anchor;
    s.validate().expect("generated scenarios are valid");
    s
}

/// Per-author `digest -> seq` tables rebuilt from an executor's final logs.
fn log_tables(ex: &Executor, n: usize) -> Vec<HashMap<Digest, u64>> {
    let mut tables = vec![HashMap::new(); n];
    for info in ex.infos() {
        for log in info.logs.iter().flatten() {
            tables[log.node.index()].insert(log.command_digest, log.seq);
        }
    }
    tables
}

/// Invariant violations of a finished anchor-strategy simulation, one
/// message each, grouped under the property letter.
pub fn violations(sim: &Simulation) -> BTreeMap<char, Vec<String>> {
    let scenario = sim.scenario();
    let (n, f) = (scenario.n, scenario.f);
    let mut out: BTreeMap<char, Vec<String>> = ['a', 'b', 'c', 'd', 'e'].into_iter().map(|k| (k, vec![])).collect();
    let honest: Vec<_> = sim.nodes().iter().filter(|nd| scenario.is_honest(nd.id())).collect();
    let reference = honest[0];

    if !sim.is_quiescent() {
        out.get_mut(&'a').unwrap().push("run did not reach quiescence".into());
    }
    let total = scenario.total_commands() as usize;
    for nd in &honest {
        if nd.committed_order() != reference.committed_order() {
            out.get_mut(&'a').unwrap().push(format!("{} diverges from {}", nd.id(), reference.id()));
        }
        if nd.committed_order().len() != total {
            out.get_mut(&'a')
                .unwrap()
                .push(format!("{} committed {} of {total}", nd.id(), nd.committed_order().len()));
        }
    }

    let mut seen: HashMap<(NodeId, u64), Digest> = HashMap::new();
    for nd in &honest {
        if !nd.mempool().evidence().is_empty() {
            out.get_mut(&'b').unwrap().push(format!("{} recorded a chain break", nd.id()));
        }
        for log in nd.mempool().logs() {
            if !nd.mempool().certificate_valid(log) {
                continue;
            }
            if let Some(prev) = seen.insert(log.key(), log.cur_digest) {
                if prev != log.cur_digest {
                    out.get_mut(&'b').unwrap().push(format!("conflicting logs at {:?}", log.key()));
                }
            }
        }
    }

    for nd in &honest {
        let Ordering::Anchor(ex) = nd.ordering() else {
            panic!("property scenarios use the anchor strategy");
        };
        let tables = log_tables(ex, n);
        let support = |d: &Digest| tables.iter().filter(|t| t.contains_key(d)).count();
        let precedes = |a: &Digest, b: &Digest| {
            tables
                .iter()
                .filter(|t| matches!((t.get(a), t.get(b)), (Some(x), Some(y)) if x < y))
                .count()
        };

        for c in nd.committed_order() {
            let s = support(&c.command.digest);
            if s < 2 * f + 1 || c.support < 2 * f + 1 {
                out.get_mut(&'c')
                    .unwrap()
                    .push(format!("{} committed {} with support {s}", nd.id(), c.command.digest));
            }
        }

        for w in ex.anchor_sets().windows(2) {
            for (a, _) in w[0] {
                for (b, _) in w[1] {
                    if precedes(a, b) < f + 1 {
                        out.get_mut(&'d').unwrap().push(format!("{}: anchor {a} not reliably before {b}", nd.id()));
                    }
                }
            }
        }

        let position: HashMap<Digest, usize> =
            nd.committed_order().iter().enumerate().map(|(i, c)| (c.command.digest, i)).collect();
        let digests: Vec<Digest> = position.keys().copied().collect();
        for a in &digests {
            for b in &digests {
                let both = tables.iter().filter(|t| t.contains_key(a) && t.contains_key(b)).count();
                if a != b && both > 2 * f && precedes(a, b) == both && position[a] > position[b] {
                    out.get_mut(&'e')
                        .unwrap()
                        .push(format!("{}: unanimous {a} before {b} inverted", nd.id()));
                }
            }
        }
    }
    out
}

/// Runs `scenario` to completion and returns the finished simulation.
pub fn simulate(scenario: &Scenario) -> Simulation {
    let mut sim = Simulation::new(scenario.clone()).expect("valid scenario");
    sim.run();
    sim
}
