//! Shared fixtures for the benchmarks.

use phalanx::node::Behavior;
use phalanx::simnet::Scenario;
use phalanx::{ProposerId, Strategy};

/// A burst scenario with one shuffler per `f`.
pub fn scenario(n: usize, commands: u64, strategy: Strategy) -> Scenario {
    let mut s = Scenario::new(n);
    let f = s.f;
    s = s.with_byzantine(f, Behavior { shuffle: true, ..Behavior::HONEST });
    s.commands_per_proposer = commands;
    s.proposer_interval = 0;
    s.strategy = strategy;
    s.seed = 1;
    s
}

/// `k` commands of four proposers in a fixed scrambled order.
pub fn scrambled_trace(k: u64) -> Vec<(ProposerId, u64)> {
    (0..k).map(|i| (i * 7919) % k).map(|x| (ProposerId((x % 4) as u16), x / 4)).collect()
}
