//! Deterministic discrete-event simulation of a cluster.
//!
//! Time is an integer count of simulated milliseconds. Every random choice
//! comes from one generator seeded by the scenario, and simultaneous events
//! are ordered by `(class, sender, send sequence)`, so a scenario fully
//! determines the run. Each directed link is FIFO: a message never arrives
//! before one sent earlier on the same link.

mod result;
mod scenario;
mod sweep;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::auth::{Authenticator, Ed25519Scheme, MacScheme};
use crate::consensus::Sequencer;
use crate::encoding::sha256;
use crate::node::{Dest, Endpoint, Node, NodeConfig};
use crate::types::{Command, NodeId, ProposerId, Strategy, Timestamp};
use crate::wire::Message;

pub use result::{ExperimentResult, TraceSummary, RESULT_SCHEMA_VERSION};
pub use scenario::{AuthScheme, Scenario, ScenarioError, LAN, WAN};
pub use sweep::{mean_ratio, SweepField, SweepRow, SweepSpec, RESISTED_THRESHOLD};

#[derive(Debug)]
enum EventKind {
    Deliver { from: Endpoint, to: NodeId, msg: Box<Message> },
    Tick(NodeId),
    Sequencer,
    Emit(ProposerId),
}

impl EventKind {
    fn class(&self) -> u8 {
        match self {
            EventKind::Deliver { .. } => 0,
            EventKind::Emit(_) => 1,
            EventKind::Tick(_) => 2,
            EventKind::Sequencer => 3,
        }
    }
}

#[derive(Debug)]
struct Event {
    key: (Timestamp, u8, Endpoint, u64),
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key.cmp(&other.key)
    }
}

/// A cluster, its proposers and the sequencer, advanced event by event.
pub struct Simulation {
    scenario: Scenario,
    nodes: Vec<Node>,
    sequencer: Sequencer,
    queue: BinaryHeap<Reverse<Event>>,
    rng: ChaCha8Rng,
    now: Timestamp,
    send_seq: u64,
    link_clock: HashMap<(Endpoint, NodeId), Timestamp>,
    /// `[proposer][node]` fixed link delay.
    proposer_offsets: Vec<Vec<u64>>,
    in_flight: u64,
    delivered: u64,
    emitted: Vec<u64>,
    quiescent: bool,
    finished: bool,
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let cluster = scenario.cluster();
        let auth: Arc<dyn Authenticator> = match scenario.auth {
            AuthScheme::Mac => Arc::new(MacScheme::new(cluster, scenario.seed)),
            AuthScheme::Ed25519 => Arc::new(Ed25519Scheme::new(cluster, scenario.seed)),
        };
        let adversary_key = u64::from_be_bytes(sha256(&scenario.seed.to_be_bytes()).0[..8].try_into().unwrap());
        let followed = scenario
            .byzantine
            .keys()
            .next()
            .copied()
            .unwrap_or(NodeId(scenario.n as u16 - 1));
        let nodes = cluster
            .nodes()
            .map(|id| {
                let cfg = NodeConfig {
                    id,
                    strategy: scenario.strategy,
                    behavior: scenario.behavior(id),
                    adversary_key,
                    resend_interval: scenario.effective_resend_interval(),
                    followed,
                };
                Node::new(cfg, auth.clone())
            })
            .collect();
        let mut sim = Simulation {
            sequencer: Sequencer::new(cluster.n),
            nodes,
            queue: BinaryHeap::new(),
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
            now: 0,
            send_seq: 0,
            link_clock: HashMap::new(),
            proposer_offsets: Vec::new(),
            in_flight: 0,
            delivered: 0,
            emitted: vec![0; scenario.proposers],
            quiescent: false,
            finished: false,
            scenario,
        };
        let (lo, hi) = sim.scenario.proposer_link_latency;
        sim.proposer_offsets = (0..sim.scenario.proposers)
            .map(|_| (0..cluster.n).map(|_| sim.rng.gen_range(lo..=hi)).collect())
            .collect();
        for id in cluster.nodes() {
            let phase = sim.rng.gen_range(0..sim.scenario.delta_o);
            sim.schedule(phase, Endpoint::Node(id), EventKind::Tick(id));
        }
        sim.schedule(0, Endpoint::Node(NodeId(0)), EventKind::Sequencer);
        for p in 0..sim.scenario.proposers as u16 {
            sim.schedule(0, Endpoint::Proposer(ProposerId(p)), EventKind::Emit(ProposerId(p)));
        }
        Ok(sim)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn now(&self) -> Timestamp {
        self.now
    }

    /// Messages delivered so far.
    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn is_quiescent(&self) -> bool {
        self.quiescent
    }

    fn schedule(&mut self, at: Timestamp, sender: Endpoint, kind: EventKind) {
        self.send_seq += 1;
        let key = (at, kind.class(), sender, self.send_seq);
        self.queue.push(Reverse(Event { key, kind }));
    }

    fn send(&mut self, from: Endpoint, to: NodeId, msg: Message) {
        let range = match from {
            Endpoint::Node(n) if n == to => (0, 0),
            Endpoint::Node(_) => self.scenario.latency,
            Endpoint::Proposer(_) => self.scenario.proposer_latency,
        };
        let mut latency = self.rng.gen_range(range.0..=range.1);
        if let Endpoint::Proposer(p) = from {
            latency += self.proposer_offsets[p.0 as usize][to.index()];
        }
        let clock = self.link_clock.entry((from, to)).or_insert(0);
        let at = (self.now + latency).max(*clock);
        *clock = at;
        self.in_flight += 1;
        self.schedule(at, from, EventKind::Deliver { from, to, msg: Box::new(msg) });
    }

    fn dispatch(&mut self, from: NodeId, out: Vec<(Dest, Message)>) {
        for (dest, msg) in out {
            match dest {
                Dest::To(to) => self.send(Endpoint::Node(from), to, msg),
                Dest::All => {
                    for to in 0..self.scenario.n as u16 {
                        self.send(Endpoint::Node(from), NodeId(to), msg.clone());
                    }
                }
            }
        }
    }

    fn command(&self, p: ProposerId, seq: u64) -> Command {
        let mut payload = Vec::with_capacity(self.scenario.batch_size * 14);
        for i in 0..self.scenario.batch_size as u32 {
            payload.extend_from_slice(&p.0.to_be_bytes());
            payload.extend_from_slice(&seq.to_be_bytes());
            payload.extend_from_slice(&i.to_be_bytes());
        }
        Command::new(p, seq, payload)
    }

    fn all_emitted(&self) -> bool {
        self.emitted.iter().all(|&e| e == self.scenario.commands_per_proposer)
    }

    fn check_quiescent(&self) -> bool {
        self.in_flight == 0
            && self.all_emitted()
            && self.nodes.iter().all(Node::is_idle)
            && !self.sequencer.has_progress(self.nodes[0].mempool().latest())
    }

    /// Processes one event. Returns `false` once the run is over.
    pub fn step(&mut self) -> bool {
        if self.finished {
            return false;
        }
        let Some(Reverse(ev)) = self.queue.pop() else {
            self.finish(true);
            return false;
        };
        if ev.key.0 > self.scenario.max_duration {
            log::warn!("duration guard hit at {} ms", self.scenario.max_duration);
            self.finish(false);
            return false;
        }
        self.now = ev.key.0;
        let delta_o = self.scenario.delta_o;
        match ev.kind {
            EventKind::Deliver { from, to, msg } => {
                self.in_flight -= 1;
                self.delivered += 1;
                let out = self.nodes[to.index()].handle(from, *msg);
                self.dispatch(to, out);
            }
            EventKind::Tick(id) => {
                let out = self.nodes[id.index()].tick(self.now);
                self.dispatch(id, out);
                self.schedule(self.now + delta_o, Endpoint::Node(id), EventKind::Tick(id));
            }
            EventKind::Sequencer => {
                let leader = NodeId(0);
                if let Some((index, batch)) = self.sequencer.propose(self.nodes[0].mempool().latest()) {
                    for to in 0..self.scenario.n as u16 {
                        let msg = Message::Batch {
                            index,
                            batch: batch.clone(),
                        };
                        self.send(Endpoint::Node(leader), NodeId(to), msg);
                    }
                } else if self.check_quiescent() {
                    self.finish(true);
                    return false;
                }
                self.schedule(self.now + delta_o, Endpoint::Node(leader), EventKind::Sequencer);
            }
            EventKind::Emit(p) => {
                let total = self.scenario.commands_per_proposer;
                loop {
                    let k = self.emitted[p.0 as usize] + 1;
                    if k > total {
                        break;
                    }
                    self.emitted[p.0 as usize] = k;
                    let cmd = self.command(p, k);
                    for to in 0..self.scenario.n as u16 {
                        self.send(Endpoint::Proposer(p), NodeId(to), Message::Command(cmd.clone()));
                    }
                    if self.scenario.proposer_interval > 0 {
                        if k < total {
                            let at = self.now + self.scenario.proposer_interval;
                            self.schedule(at, Endpoint::Proposer(p), EventKind::Emit(p));
                        }
                        break;
                    }
                }
            }
        }
        true
    }

    fn finish(&mut self, quiescent: bool) {
        self.finished = true;
        self.quiescent = quiescent;
        for n in &mut self.nodes {
            n.flush();
        }
    }

    /// Runs to quiescence or the duration guard.
    pub fn run(&mut self) -> ExperimentResult {
        while self.step() {}
        ExperimentResult::collect(self)
    }
}

/// Runs `scenario` to completion.
pub fn run(scenario: &Scenario) -> Result<ExperimentResult, ScenarioError> {
    Ok(Simulation::new(scenario.clone())?.run())
}

/// The strategies compared by the adversary experiments.
pub const COMPARED: [Strategy; 2] = [Strategy::Anchor, Strategy::Timestamp];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::node::Behavior;

    fn small(seed: u64) -> Scenario {
        let mut s = Scenario::new(4);
        s.commands_per_proposer = 30;
        s.seed = seed;
        s
    }

    #[test]
    fn honest_run_commits_everything_in_order() {
        let r = run(&small(1)).unwrap();
        assert!(r.quiescent);
        assert!(r.consistency);
        assert_eq!(r.uncommitted, 0);
        assert_eq!(r.committed, 30);
        assert_eq!(r.reordered_ratio, 0.0);
        assert!(r.traces.iter().all(|t| t.length == 30));
    }

    #[test]
    fn link_fifo_clamps_delivery() {
        let mut sim = Simulation::new(small(2)).unwrap();
        sim.now = 100;
        let from = Endpoint::Node(NodeId(0));
        sim.link_clock.insert((from, NodeId(1)), 120);
        sim.send(from, NodeId(1), Message::FetchLog { author: NodeId(0), seq: 1 });
        let Reverse(ev) = sim.queue.iter().max_by_key(|e| e.0.key.3).unwrap();
        assert_eq!(ev.key.0, 120);
    }

    #[test]
    fn same_seed_same_result() {
        let s = small(3).with_byzantine(1, "shuffle".parse().unwrap());
        let a = run(&s).unwrap();
        let b = run(&s).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn silent_node_does_not_block() {
        let s = small(4).with_byzantine(1, Behavior { silent: true, ..Behavior::HONEST });
        let r = run(&s).unwrap();
        assert!(r.quiescent && r.consistency);
        assert_eq!(r.uncommitted, 0);
    }

    #[test]
    fn multiple_proposers_and_batches() {
        let mut s = small(5);
        s.proposers = 3;
        s.commands_per_proposer = 10;
        s.batch_size = 4;
        s.proposer_interval = 0;
        let r = run(&s).unwrap();
        assert!(r.quiescent && r.consistency);
        assert_eq!(r.committed, 30);
    }

    #[test]
    fn duration_guard_reports_non_quiescent() {
        let mut s = small(6);
        s.max_duration = 10;
        let r = run(&s).unwrap();
        assert!(!r.quiescent);
        assert!(r.uncommitted > 0);
    }

    #[test]
    fn aggressive_resend_produces_stale_votes() {
        let mut s = small(7);
        s.resend_interval = Some(1);
        s.latency = (5, 20);
        let mut sim = Simulation::new(s).unwrap();
        let r = sim.run();
        assert!(r.quiescent && r.consistency);
        assert!(sim.nodes().iter().map(|n| n.stats().stale_votes).sum::<u64>() > 0);
    }
}
