//! A consensus node as a message-driven state machine.
//!
//! The node performs no I/O. Every entry point returns the messages to send;
//! the host delivers them and calls back with responses.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::auth::Authenticator;
use crate::consensus::{CommitError, ConsensusState, LogSet, OrderBatch};
use crate::encoding::sha256;
use crate::executor::{Committed, ExecError, Executor};
use crate::mempool::{CommandSource, Mempool};
use crate::ts_order::TsExecutor;
use crate::types::{Cluster, Command, Digest, NodeId, PartialOrderLog, ProposerId, Strategy, Timestamp};
use crate::wire::Message;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    Node(NodeId),
    Proposer(ProposerId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dest {
    To(NodeId),
    /// Every node, the sender included.
    All,
}

pub type Outbox = Vec<(Dest, Message)>;

/// Fault injection for a Byzantine node. Behaviors combine.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Behavior {
    /// Pre-order the queued command with the smallest adversary key first.
    /// The key is shared by all Byzantine nodes, so they collude on one
    /// permutation.
    pub shuffle: bool,
    /// Pre-order the most recently received command first.
    pub reverse: bool,
    /// Added to every reported timestamp.
    pub skew: i64,
    /// Never pre-orders, votes or answers.
    pub silent: bool,
}

impl Behavior {
    pub const HONEST: Behavior = Behavior {
        shuffle: false,
        reverse: false,
        skew: 0,
        silent: false,
    };

    pub fn is_honest(&self) -> bool {
        *self == Self::HONEST
    }
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.shuffle {
            parts.push("shuffle".to_string());
        }
        if self.reverse {
            parts.push("reverse".to_string());
        }
        if self.skew != 0 {
            parts.push(format!("skew({})", self.skew));
        }
        if self.silent {
            parts.push("silent".to_string());
        }
        if parts.is_empty() {
            parts.push("honest".to_string());
        }
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for Behavior {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut b = Behavior::HONEST;
        for part in s.split('+').map(str::trim) {
            match part.to_ascii_lowercase().as_str() {
                "honest" => {}
                "shuffle" => b.shuffle = true,
                "reverse" => b.reverse = true,
                "silent" => b.silent = true,
                p => {
                    let delta = p
                        .strip_prefix("skew(")
                        .and_then(|r| r.strip_suffix(')'))
                        .ok_or_else(|| format!("unknown behavior `{part}`"))?;
                    b.skew = delta.trim().parse().map_err(|_| format!("bad skew `{delta}`"))?;
                }
            }
        }
        if b.shuffle && b.reverse {
            return Err("shuffle and reverse are exclusive".into());
        }
        Ok(b)
    }
}

#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub id: NodeId,
    pub strategy: Strategy,
    pub behavior: Behavior,
    /// Key of the colluding shuffle permutation.
    pub adversary_key: u64,
    /// Re-broadcast a pending pre-order after this long; 0 disables.
    pub resend_interval: u64,
    /// Node whose partial order [`Strategy::Follow`] adopts.
    pub followed: NodeId,
}

/// Commits one author's partial order verbatim.
#[derive(Debug, Clone)]
pub struct FollowExecutor {
    target: NodeId,
    queue: VecDeque<PartialOrderLog>,
    committed: HashSet<Digest>,
    order: Vec<Committed>,
}

impl FollowExecutor {
    pub fn new(target: NodeId) -> Self {
        FollowExecutor {
            target,
            queue: VecDeque::new(),
            committed: HashSet::new(),
            order: Vec::new(),
        }
    }

    pub fn ingest(&mut self, set: &LogSet) {
        self.queue
            .extend(set.logs().iter().filter(|o| o.node == self.target).cloned());
    }

    pub fn drain(&mut self, store: &impl CommandSource) -> Result<(), ExecError> {
        while let Some(o) = self.queue.front() {
            if !self.committed.contains(&o.command_digest) {
                let cmd = store
                    .command(&o.command_digest)
                    .ok_or_else(|| ExecError::CommandUnavailable(vec![o.command_digest]))?;
                self.committed.insert(o.command_digest);
                self.order.push(Committed {
                    command: cmd.clone(),
                    trusted_timestamp: o.timestamp,
                    support: 1,
                    path: None,
                    anchor: false,
                });
            }
            self.queue.pop_front();
        }
        Ok(())
    }

    pub fn committed_order(&self) -> &[Committed] {
        &self.order
    }
}

#[derive(Debug, Clone)]
pub enum Ordering {
    Anchor(Executor),
    Timestamp(TsExecutor),
    Follow(FollowExecutor),
}

impl Ordering {
    pub fn committed_order(&self) -> &[Committed] {
        match self {
            Ordering::Anchor(e) => e.committed_order(),
            Ordering::Timestamp(e) => e.committed_order(),
            Ordering::Follow(e) => e.committed_order(),
        }
    }
}

/// Per-node counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeStats {
    pub pre_orders: u64,
    pub rejected_pre_orders: u64,
    pub stale_votes: u64,
    pub log_fetches: u64,
    pub command_fetches: u64,
    pub discarded_batches: u64,
}

pub struct Node {
    cfg: NodeConfig,
    auth: Arc<dyn Authenticator>,
    mempool: Mempool,
    consensus: ConsensusState,
    ordering: Ordering,
    batches: BTreeMap<u64, (NodeId, OrderBatch)>,
    next_batch: u64,
    missing_logs: HashSet<(NodeId, u64)>,
    missing_cmds: HashSet<Digest>,
    adversary_keys: HashMap<Digest, Digest>,
    stats: NodeStats,
}

impl Node {
    pub fn new(cfg: NodeConfig, auth: Arc<dyn Authenticator>) -> Self {
        let cluster = auth.cluster();
        let ordering = match cfg.strategy {
            Strategy::Anchor => Ordering::Anchor(Executor::new(cluster)),
            Strategy::Timestamp => Ordering::Timestamp(TsExecutor::new(cluster)),
            Strategy::Follow => Ordering::Follow(FollowExecutor::new(cfg.followed)),
        };
        Node {
            mempool: Mempool::new(cfg.id, auth.clone()),
            consensus: ConsensusState::new(cluster.n),
            ordering,
            cfg,
            auth,
            batches: BTreeMap::new(),
            next_batch: 0,
            missing_logs: HashSet::new(),
            missing_cmds: HashSet::new(),
            adversary_keys: HashMap::new(),
            stats: NodeStats::default(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.cfg.id
    }

    pub fn cluster(&self) -> Cluster {
        self.mempool.cluster()
    }

    pub fn behavior(&self) -> Behavior {
        self.cfg.behavior
    }

    pub fn mempool(&self) -> &Mempool {
        &self.mempool
    }

    pub fn consensus(&self) -> &ConsensusState {
        &self.consensus
    }

    pub fn ordering(&self) -> &Ordering {
        &self.ordering
    }

    pub fn committed_order(&self) -> &[Committed] {
        self.ordering.committed_order()
    }

    pub fn stats(&self) -> NodeStats {
        self.stats
    }

    /// Nothing queued, pending, buffered or blocked.
    pub fn is_idle(&self) -> bool {
        self.mempool.inbound().is_empty()
            && self.mempool.pending().is_none()
            && self.batches.is_empty()
            && self.consensus.outbound().is_empty()
            && self.missing_logs.is_empty()
            && self.missing_cmds.is_empty()
    }

    /// Ordering-interval timer: pre-order the next command, or re-send the
    /// outstanding one.
    pub fn tick(&mut self, now: Timestamp) -> Outbox {
        let mut out = Outbox::new();
        if self.cfg.behavior.silent {
            return out;
        }
        if self.mempool.pending().is_none() {
            self.apply_queue_behavior();
            let ts = now.saturating_add_signed(self.cfg.behavior.skew);
            if let Some(log) = self.mempool.try_pre_order_at(now, ts) {
                self.stats.pre_orders += 1;
                out.push((Dest::All, Message::PreOrder(log)));
            }
        } else if self.cfg.resend_interval > 0 {
            if let Some(log) = self.mempool.resend_pending(now, self.cfg.resend_interval) {
                out.push((Dest::All, Message::PreOrder(log)));
            }
        }
        out
    }

    fn apply_queue_behavior(&mut self) {
        let b = self.cfg.behavior;
        if !(b.shuffle || b.reverse) {
            return;
        }
        let q = self.mempool.inbound_mut();
        if q.len() < 2 {
            return;
        }
        let pick = if b.reverse {
            q.len() - 1
        } else {
            let key = self.cfg.adversary_key;
            let keys = &mut self.adversary_keys;
            let mut best = 0;
            let mut best_key = None;
            for (i, c) in q.iter().enumerate() {
                let k = *keys.entry(c.digest).or_insert_with(|| {
                    let mut buf = key.to_be_bytes().to_vec();
                    buf.extend_from_slice(&c.digest.0);
                    sha256(&buf)
                });
                if best_key.is_none_or(|b| k < b) {
                    best = i;
                    best_key = Some(k);
                }
            }
            best
        };
        let c = q.remove(pick).expect("index in range");
        q.push_front(c);
    }

    pub fn handle(&mut self, from: Endpoint, msg: Message) -> Outbox {
        let mut out = Outbox::new();
        match (from, msg) {
            (_, Message::Command(c)) | (_, Message::CommandResp(c)) if !self.cfg.behavior.silent => {
                self.on_command(c, from, &mut out)
            }
            (_, Message::Command(c)) | (_, Message::CommandResp(c)) => self.mempool.store_command(c),
            (Endpoint::Node(j), Message::PreOrder(o)) => {
                if self.cfg.behavior.silent {
                    return out;
                }
                match self.mempool.handle_pre_order(&o, j) {
                    Ok(v) => out.push((Dest::To(j), Message::Vote(v))),
                    Err(e) => {
                        self.stats.rejected_pre_orders += 1;
                        log::debug!("{}: rejected pre-order ({}, {}): {e}", self.id(), o.node, o.seq);
                    }
                }
            }
            (Endpoint::Node(j), Message::Vote(v)) => match self.mempool.handle_vote(&v, j) {
                Ok(Some(certified)) => out.push((Dest::All, Message::Order(certified))),
                Ok(None) => {}
                Err(_) => self.stats.stale_votes += 1,
            },
            (Endpoint::Node(j), Message::Order(o)) => {
                if let Err(e) = self.mempool.handle_order(&o, j) {
                    log::debug!("{}: rejected order ({}, {}): {e}", self.id(), o.node, o.seq);
                }
                self.on_log_stored(o.key(), &mut out);
            }
            (Endpoint::Node(j), Message::Batch { index, batch }) => {
                if index >= self.next_batch {
                    self.batches.insert(index, (j, batch));
                }
                self.process_batches(&mut out);
            }
            (Endpoint::Node(j), Message::FetchLog { author, seq }) => {
                if let Some(o) = self.mempool.fetch_log(author, seq) {
                    if !self.cfg.behavior.silent {
                        out.push((Dest::To(j), Message::FetchResp(o.clone())));
                    }
                }
            }
            (Endpoint::Node(_), Message::FetchResp(o)) => {
                if let Err(e) = self.mempool.insert_certified(&o) {
                    log::debug!("{}: rejected fetched log: {e}", self.id());
                }
                self.on_log_stored(o.key(), &mut out);
            }
            (Endpoint::Node(j), Message::FetchCommand(d)) => {
                if let Some(c) = self.mempool.fetch_command(&d) {
                    if !self.cfg.behavior.silent {
                        out.push((Dest::To(j), Message::CommandResp(c.clone())));
                    }
                }
            }
            (from, msg) => log::debug!("{}: unexpected {} from {from:?}", self.id(), msg.kind()),
        }
        out
    }

    fn on_command(&mut self, c: Command, from: Endpoint, out: &mut Outbox) {
        let d = c.digest;
        match from {
            Endpoint::Proposer(_) => {
                let _ = self.mempool.enqueue_command(c);
            }
            Endpoint::Node(_) => self.mempool.store_command(c),
        }
        if self.missing_cmds.remove(&d) && self.missing_cmds.is_empty() {
            self.run_ordering(out);
        }
    }

    fn on_log_stored(&mut self, key: (NodeId, u64), out: &mut Outbox) {
        if self.missing_logs.remove(&key) && self.missing_logs.is_empty() {
            self.process_batches(out);
        }
    }

    fn process_batches(&mut self, out: &mut Outbox) {
        if !self.missing_logs.is_empty() {
            return;
        }
        while let Some((sender, batch)) = self.batches.get(&self.next_batch) {
            let sender = *sender;
            for o in batch.slots.iter().flatten() {
                let _ = self.mempool.insert_certified(o);
            }
            match self.consensus.commit_order_batch(batch, &self.mempool, self.auth.as_ref()) {
                Ok(_) => {}
                Err(CommitError::Missing(keys)) => {
                    for k in keys {
                        self.missing_logs.insert(k);
                        self.stats.log_fetches += 1;
                        out.push((Dest::To(sender), Message::FetchLog { author: k.0, seq: k.1 }));
                    }
                    return;
                }
                Err(e) => {
                    log::warn!("{}: discarding batch {}: {e}", self.id(), self.next_batch);
                    self.stats.discarded_batches += 1;
                }
            }
            self.batches.remove(&self.next_batch);
            self.next_batch += 1;
        }
        self.run_ordering(out);
    }

    fn run_ordering(&mut self, out: &mut Outbox) {
        if !self.missing_cmds.is_empty() {
            return;
        }
        let res = match &mut self.ordering {
            Ordering::Anchor(ex) => ex.drain(self.consensus.outbound_mut(), &self.mempool).map(|_| ()),
            Ordering::Timestamp(ts) => {
                while let Some(s) = self.consensus.pop_log_set() {
                    ts.ingest(&s);
                }
                Ok(())
            }
            Ordering::Follow(fe) => {
                while let Some(s) = self.consensus.pop_log_set() {
                    fe.ingest(&s);
                }
                fe.drain(&self.mempool)
            }
        };
        if let Err(ExecError::CommandUnavailable(ds)) = res {
            for d in ds {
                let holder = self.holder_of(&d);
                self.missing_cmds.insert(d);
                self.stats.command_fetches += 1;
                out.push((Dest::To(holder), Message::FetchCommand(d)));
            }
        }
    }

    /// A node that logged `d`, preferring others.
    fn holder_of(&self, d: &Digest) -> NodeId {
        let me = self.id();
        let from_info = match &self.ordering {
            Ordering::Anchor(ex) => ex
                .info(d)
                .and_then(|i| i.logs.iter().flatten().map(|o| o.node).find(|&n| n != me)),
            _ => None,
        };
        from_info.unwrap_or(match &self.ordering {
            Ordering::Follow(fe) => fe.target,
            _ => NodeId(((me.0 as usize + 1) % self.cluster().n) as u16),
        })
    }

    /// Epoch flush for the timestamp baseline: commits whatever is stable.
    pub fn flush(&mut self) {
        if let Ordering::Timestamp(ts) = &mut self.ordering {
            ts.commit_ready(&self.mempool);
        }
    }
}
