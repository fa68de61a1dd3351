//! Scripted micro-scenarios with known outcomes.
//!
//! Both run real mempools, certificates, consensus expansion and executors
//! over a 4-node cluster; only the network is replaced by inline delivery.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use crate::auth::{Authenticator, MacScheme};
use crate::consensus::{ConsensusState, OrderBatch};
use crate::executor::{AnchorPath, Committed, Executor};
use crate::mempool::Mempool;
use crate::trace::Trace;
use crate::ts_order::TsExecutor;
use crate::types::{Cluster, Command, Digest, NodeId, PartialOrderLog, ProposerId, Strategy, Timestamp};

/// Four mempools that certify scripted partial orders.
pub struct ScriptedCluster {
    pub cluster: Cluster,
    pub auth: Arc<dyn Authenticator>,
    pub pools: Vec<Mempool>,
}

impl ScriptedCluster {
    pub fn new(seed: u64) -> Self {
        let cluster = Cluster::new(4).expect("4 = 3f+1");
        let auth: Arc<dyn Authenticator> = Arc::new(MacScheme::new(cluster, seed));
        let pools = cluster.nodes().map(|id| Mempool::new(id, auth.clone())).collect();
        ScriptedCluster { cluster, auth, pools }
    }

    /// Makes every node aware of `cmd` without queueing it for ordering.
    pub fn publish(&mut self, cmd: &Command) {
        for p in &mut self.pools {
            p.store_command(cmd.clone());
        }
    }

    /// `author` logs `cmd` at `timestamp`; all nodes vote and receive the
    /// certified log.
    pub fn log(&mut self, author: usize, cmd: &Command, timestamp: Timestamp) -> PartialOrderLog {
        let from = NodeId(author as u16);
        self.pools[author].enqueue_command(cmd.clone()).expect("scripted commands are distinct");
        let pre = self.pools[author].try_pre_order(timestamp).expect("no outstanding pre-order");
        let mut certified = None;
        for v in 0..self.pools.len() {
            if certified.is_some() {
                break;
            }
            let vote = self.pools[v].handle_pre_order(&pre, from).expect("scripted pre-order is valid");
            if let Some(c) = self.pools[author].handle_vote(&vote, NodeId(v as u16)).expect("valid vote") {
                certified = Some(c);
            }
        }
        let certified = certified.expect("a quorum certifies");
        for p in &mut self.pools {
            p.handle_order(&certified, from).expect("certified log is accepted");
        }
        certified
    }

    pub fn batch(&self, slots: &[Option<(usize, u64)>]) -> OrderBatch {
        OrderBatch {
            slots: slots
                .iter()
                .map(|s| s.map(|(a, seq)| self.pools[0].fetch_log(NodeId(a as u16), seq).expect("scripted").clone()))
                .collect(),
        }
    }
}

fn named(name: &str) -> Command {
    Command::new(ProposerId(0), 1, name.as_bytes().to_vec())
}

/// Outcome of the walk-through on one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkthroughOutcome {
    /// Command names committed after each of the three batches.
    pub steps: Vec<Vec<(String, AnchorPath)>>,
    pub committed: Vec<Committed>,
    pub uncommitted: Vec<String>,
}

pub const WALKTHROUGH_COMMANDS: [&str; 4] = ["red", "yellow", "green", "blue"];

/// The walk-through: red commits on the normal path, yellow on the
/// alter path, green on the normal path; blue stays pending. Returns the
/// outcome on each of the four nodes.
pub fn walkthrough() -> Vec<WalkthroughOutcome> {
    let cmds: HashMap<&str, Command> = WALKTHROUGH_COMMANDS.iter().map(|n| (*n, named(n))).collect();
    let names: HashMap<Digest, &str> = cmds.iter().map(|(n, c)| (c.digest, *n)).collect();
    let mut sc = ScriptedCluster::new(4);
    for c in cmds.values() {
        sc.publish(c);
    }
    let script: [&[(&str, Timestamp)]; 4] = [
        &[("red", 10), ("yellow", 20), ("green", 30)],
        &[("blue", 10), ("red", 20), ("yellow", 30)],
        &[("red", 15), ("green", 25), ("yellow", 35)],
        &[("red", 40), ("green", 50)],
    ];
    for (node, order) in script.iter().enumerate() {
        for (name, ts) in order.iter() {
            sc.log(node, &cmds[name], *ts);
        }
    }
    let batches = [
        sc.batch(&[Some((0, 1)), Some((1, 1)), None, None]),
        sc.batch(&[Some((0, 2)), Some((1, 3)), Some((2, 3)), None]),
        sc.batch(&[Some((0, 3)), Some((1, 3)), Some((2, 3)), Some((3, 2))]),
    ];

    sc.pools
        .iter()
        .map(|pool| {
            let mut cons = ConsensusState::new(4);
            let mut ex = Executor::new(sc.cluster);
            let mut steps = Vec::new();
            for b in &batches {
                cons.commit_order_batch(b, pool, sc.auth.as_ref()).expect("batches are valid");
                let start = ex.committed_order().len();
                ex.drain(cons.outbound_mut(), pool).expect("commands are published");
                steps.push(
                    ex.committed_order()[start..]
                        .iter()
                        .map(|c| (names[&c.command.digest].to_string(), c.path.expect("anchor executor")))
                        .collect(),
                );
            }
            let uncommitted = WALKTHROUGH_COMMANDS
                .iter()
                .filter(|n| !ex.is_committed(&cmds[*n].digest))
                .map(|n| n.to_string())
                .collect();
            WalkthroughOutcome {
                steps,
                committed: ex.committed_order().to_vec(),
                uncommitted,
            }
        })
        .collect()
}

/// Outcome of the timestamp manipulation scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManipulationOutcome {
    /// Trusted timestamps of c1 and c2.
    pub trusted: (Timestamp, Timestamp),
    pub timestamp_order: Vec<String>,
    pub anchor_order: Vec<String>,
    pub timestamp_trace: Trace,
    pub anchor_trace: Trace,
}

/// N1 and N2 see c1 first, N3 (malicious) reports c2 first with
/// a low timestamp. The timestamp baseline commits c2 first; the anchor
/// executor keeps c1 first.
pub fn manipulation() -> ManipulationOutcome {
    let c1 = named("c1");
    let c2 = named("c2");
    let mut sc = ScriptedCluster::new(7);
    sc.publish(&c1);
    sc.publish(&c2);
    sc.log(0, &c1, 0);
    sc.log(0, &c2, 1);
    sc.log(1, &c1, 3);
    sc.log(1, &c2, 4);
    sc.log(2, &c2, 2);
    sc.log(2, &c1, 3);
    let batch = sc.batch(&[Some((0, 2)), Some((1, 2)), Some((2, 2)), None]);

    let pool = &sc.pools[0];
    let mut cons = ConsensusState::new(4);
    cons.commit_order_batch(&batch, pool, sc.auth.as_ref()).expect("valid batch");
    let set = cons.pop_log_set().expect("one log set");

    let mut ts = TsExecutor::new(sc.cluster);
    ts.ingest(&set);
    ts.commit_ready(pool);
    let trusted = (
        ts.info(&c1.digest).and_then(|i| i.trusted_timestamp(sc.cluster)).expect("quorum"),
        ts.info(&c2.digest).and_then(|i| i.trusted_timestamp(sc.cluster)).expect("quorum"),
    );

    let mut ex = Executor::new(sc.cluster);
    ex.drain(&mut VecDeque::from(vec![set]), pool).expect("commands published");

    let name = |c: &Committed| String::from_utf8_lossy(&c.command.payload).into_owned();
    ManipulationOutcome {
        trusted,
        timestamp_order: ts.committed_order().iter().map(name).collect(),
        anchor_order: ex.committed_order().iter().map(name).collect(),
        timestamp_trace: Trace::new(Strategy::Timestamp, NodeId(0), ts.committed_order()),
        anchor_trace: Trace::new(Strategy::Anchor, NodeId(0), ex.committed_order()),
    }
}
