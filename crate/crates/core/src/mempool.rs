//! Per-node mempool: FIFO command intake and the pre-order / vote / order
//! protocol that turns a node's local reception order into certified,
//! hash-chained logs.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::sync::Arc;

use thiserror::Error;

use crate::auth::{Authenticator, PartialSignature};
use crate::types::{Cluster, Command, Digest, NodeId, PartialOrderLog, Timestamp};

/// A node's vote for a pre-ordered log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vote {
    pub digest: Digest,
    pub partial: PartialSignature,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MempoolError {
    #[error("command {0:?} already enqueued")]
    DuplicateCommand(Digest),
}

/// Why a pre-order was not voted for.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum PreOrderReject {
    #[error("log digest does not match its fields")]
    BadDigest,
    #[error("pre-order for {log} relayed by {from}")]
    WrongAuthor { log: NodeId, from: NodeId },
    #[error("seq {got} is not the successor of {latest}")]
    Gap { latest: u64, got: u64 },
    #[error("already voted for a different log at seq {0}")]
    Equivocation(u64),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VoteError {
    #[error("vote does not match the pending log")]
    Stale,
    #[error("invalid partial signature from {0}")]
    InvalidPartial(NodeId),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OrderError {
    #[error("certificate does not verify for {0:?}")]
    InvalidCert((NodeId, u64)),
    #[error("log {0:?} conflicts with the stored chain")]
    ChainBreak((NodeId, u64)),
    #[error("order for {log} relayed by {from}")]
    WrongAuthor { log: NodeId, from: NodeId },
}

/// Two certified logs that cannot both belong to one author's chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainBreak {
    pub stored: PartialOrderLog,
    pub offending: PartialOrderLog,
}

/// Read access to certified logs by `(author, seq)`.
pub trait LogSource {
    fn log(&self, author: NodeId, seq: u64) -> Option<&PartialOrderLog>;
}

/// Read access to commands by digest.
pub trait CommandSource {
    fn command(&self, digest: &Digest) -> Option<&Command>;
}

#[derive(Debug, Clone)]
struct Pending {
    log: PartialOrderLog,
    votes: BTreeMap<NodeId, PartialSignature>,
    last_sent: Timestamp,
}

pub struct Mempool {
    node: NodeId,
    cluster: Cluster,
    auth: Arc<dyn Authenticator>,
    seq: u64,
    pending: Option<Pending>,
    latest: Vec<Option<PartialOrderLog>>,
    inbound: VecDeque<Command>,
    enqueued: HashSet<Digest>,
    voted: HashMap<NodeId, (u64, Digest)>,
    commands: HashMap<Digest, Command>,
    logs: HashMap<(NodeId, u64), PartialOrderLog>,
    evidence: Vec<ChainBreak>,
}

impl Mempool {
    pub fn new(node: NodeId, auth: Arc<dyn Authenticator>) -> Self {
        let cluster = auth.cluster();
        Mempool {
            node,
            cluster,
            auth,
            seq: 0,
            pending: None,
            latest: vec![None; cluster.n],
            inbound: VecDeque::new(),
            enqueued: HashSet::new(),
            voted: HashMap::new(),
            commands: HashMap::new(),
            logs: HashMap::new(),
            evidence: Vec::new(),
        }
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn cluster(&self) -> Cluster {
        self.cluster
    }

    /// Local logical clock: seq of the last log this node pre-ordered.
    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn pending(&self) -> Option<&PartialOrderLog> {
        self.pending.as_ref().map(|p| &p.log)
    }

    /// Latest certified log per author.
    pub fn latest(&self) -> &[Option<PartialOrderLog>] {
        &self.latest
    }

    pub fn inbound(&self) -> &VecDeque<Command> {
        &self.inbound
    }

    /// Direct access to the intake queue, used for fault injection.
    pub fn inbound_mut(&mut self) -> &mut VecDeque<Command> {
        &mut self.inbound
    }

    pub fn evidence(&self) -> &[ChainBreak] {
        &self.evidence
    }

    pub fn logs(&self) -> impl Iterator<Item = &PartialOrderLog> {
        self.logs.values()
    }

    pub fn enqueue_command(&mut self, cmd: Command) -> Result<(), MempoolError> {
        if !self.enqueued.insert(cmd.digest) {
            return Err(MempoolError::DuplicateCommand(cmd.digest));
        }
        self.commands.entry(cmd.digest).or_insert_with(|| cmd.clone());
        self.inbound.push_back(cmd);
        Ok(())
    }

    /// Stores a command for later retrieval without queueing it for ordering.
    pub fn store_command(&mut self, cmd: Command) {
        self.commands.entry(cmd.digest).or_insert(cmd);
    }

    /// If there is queued work and no outstanding pre-order, logs the
    /// front command at the next logical clock value.
    pub fn try_pre_order(&mut self, now: Timestamp) -> Option<PartialOrderLog> {
        self.try_pre_order_at(now, now)
    }

    /// As [`Mempool::try_pre_order`], reporting `timestamp` in the log while
    /// measuring resend intervals from `now`.
    pub fn try_pre_order_at(&mut self, now: Timestamp, timestamp: Timestamp) -> Option<PartialOrderLog> {
        if self.pending.is_some() {
            return None;
        }
        let cmd = self.inbound.pop_front()?;
        self.seq += 1;
        let prev = self.latest[self.node.index()]
            .as_ref()
            .map_or(Digest::EMPTY, |o| o.cur_digest);
        let log = PartialOrderLog::new(self.node, self.seq, timestamp, cmd.digest, prev)
            .expect("seq and predecessor are kept consistent");
        self.pending = Some(Pending {
            log: log.clone(),
            votes: BTreeMap::new(),
            last_sent: now,
        });
        Some(log)
    }

    /// The pending log, if it has waited at least `interval` since it was
    /// last broadcast.
    pub fn resend_pending(&mut self, now: Timestamp, interval: u64) -> Option<PartialOrderLog> {
        let p = self.pending.as_mut()?;
        if now.saturating_sub(p.last_sent) < interval {
            return None;
        }
        p.last_sent = now;
        Some(p.log.clone())
    }

    /// Validates a pre-order from `from` and votes for it.
    pub fn handle_pre_order(&mut self, log: &PartialOrderLog, from: NodeId) -> Result<Vote, PreOrderReject> {
        if log.node != from {
            return Err(PreOrderReject::WrongAuthor { log: log.node, from });
        }
        if !log.digest_is_valid() {
            return Err(PreOrderReject::BadDigest);
        }
        if let Some(&(seq, digest)) = self.voted.get(&from) {
            if seq == log.seq && digest != log.cur_digest {
                return Err(PreOrderReject::Equivocation(seq));
            }
        }
        let latest = self.latest[from.index()].as_ref();
        let ok = match latest {
            None => log.seq == 1,
            Some(h) => log.seq == h.seq + 1 && log.prev_digest == h.cur_digest,
        };
        if !ok {
            return Err(PreOrderReject::Gap {
                latest: latest.map_or(0, |h| h.seq),
                got: log.seq,
            });
        }
        self.voted.insert(from, (log.seq, log.cur_digest));
        Ok(Vote {
            digest: log.cur_digest,
            partial: self.auth.partial_sign(self.node, &log.cur_digest),
        })
    }

    /// Collects a vote. Returns the certified log once `2f+1`
    /// distinct signers have voted.
    pub fn handle_vote(&mut self, vote: &Vote, from: NodeId) -> Result<Option<PartialOrderLog>, VoteError> {
        let Some(pending) = self.pending.as_mut() else {
            return Err(VoteError::Stale);
        };
        if vote.digest != pending.log.cur_digest || vote.partial.event_digest != vote.digest {
            return Err(VoteError::Stale);
        }
        if vote.partial.signer != from || !self.auth.verify_partial(&vote.partial) {
            return Err(VoteError::InvalidPartial(from));
        }
        pending.votes.entry(from).or_insert_with(|| vote.partial.clone());
        if pending.votes.len() < self.cluster.quorum() {
            return Ok(None);
        }
        let pending = self.pending.take().expect("checked above");
        let partials: Vec<PartialSignature> = pending.votes.into_values().collect();
        let cert = self
            .auth
            .aggregate(&pending.log.cur_digest, &partials)
            .expect("partials were verified on arrival");
        let mut log = pending.log;
        log.certificate = Some(cert);
        self.logs.insert(log.key(), log.clone());
        self.latest[self.node.index()] = Some(log.clone());
        Ok(Some(log))
    }

    /// Accepts an author's certified log.
    pub fn handle_order(&mut self, log: &PartialOrderLog, from: NodeId) -> Result<(), OrderError> {
        if log.node != from {
            return Err(OrderError::WrongAuthor { log: log.node, from });
        }
        self.insert_certified(log)
    }

    /// Accepts a certified log from any source (order broadcast or retrieval).
    pub fn insert_certified(&mut self, log: &PartialOrderLog) -> Result<(), OrderError> {
        let key = log.key();
        if log.node.index() >= self.cluster.n {
            return Err(OrderError::InvalidCert(key));
        }
        if self.logs.get(&key).is_some_and(|s| s.cur_digest == log.cur_digest) {
            return Ok(());
        }
        if !self.certificate_valid(log) {
            return Err(OrderError::InvalidCert(key));
        }
        if let Some(stored) = self.logs.get(&key) {
            return Err(self.chain_break(stored.clone(), log));
        }
        if log.seq > 1 {
            if let Some(prev) = self.logs.get(&(log.node, log.seq - 1)) {
                if prev.cur_digest != log.prev_digest {
                    return Err(self.chain_break(prev.clone(), log));
                }
            }
        }
        if let Some(next) = self.logs.get(&(log.node, log.seq + 1)) {
            if next.prev_digest != log.cur_digest {
                return Err(self.chain_break(next.clone(), log));
            }
        }
        self.logs.insert(key, log.clone());
        let slot = &mut self.latest[log.node.index()];
        if slot.as_ref().is_none_or(|h| log.seq > h.seq) {
            *slot = Some(log.clone());
        }
        Ok(())
    }

    fn chain_break(&mut self, stored: PartialOrderLog, offending: &PartialOrderLog) -> OrderError {
        log::warn!("{}: chain break from {} at seq {}", self.node, offending.node, offending.seq);
        self.evidence.push(ChainBreak {
            stored,
            offending: offending.clone(),
        });
        OrderError::ChainBreak(offending.key())
    }

    /// Full check of a certified log: digest recomputation and a
    /// certificate over `cur_digest`.
    pub fn certificate_valid(&self, log: &PartialOrderLog) -> bool {
        log.digest_is_valid()
            && log
                .certificate
                .as_ref()
                .is_some_and(|c| c.event_digest == log.cur_digest && self.auth.verify_certificate(c))
    }

    pub fn fetch_log(&self, author: NodeId, seq: u64) -> Option<&PartialOrderLog> {
        self.logs.get(&(author, seq))
    }

    pub fn fetch_command(&self, digest: &Digest) -> Option<&Command> {
        self.commands.get(digest)
    }
}

impl LogSource for Mempool {
    fn log(&self, author: NodeId, seq: u64) -> Option<&PartialOrderLog> {
        self.fetch_log(author, seq)
    }
}

impl CommandSource for Mempool {
    fn command(&self, digest: &Digest) -> Option<&Command> {
        self.fetch_command(digest)
    }
}

impl LogSource for HashMap<(NodeId, u64), PartialOrderLog> {
    fn log(&self, author: NodeId, seq: u64) -> Option<&PartialOrderLog> {
        self.get(&(author, seq))
    }
}

impl CommandSource for HashMap<Digest, Command> {
    fn command(&self, digest: &Digest) -> Option<&Command> {
        self.get(digest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auth::MacScheme;
    use crate::types::ProposerId;

    fn cluster4() -> Vec<Mempool> {
        let auth: Arc<dyn Authenticator> = Arc::new(MacScheme::new(Cluster::new(4).unwrap(), 1));
        (0..4).map(|i| Mempool::new(NodeId(i), auth.clone())).collect()
    }

    fn cmd(seq: u64) -> Command {
        Command::new(ProposerId(0), seq, format!("req-{seq}"))
    }

    /// Runs one full pre-order round for `author` with votes from `voters`.
    fn certify(pools: &mut [Mempool], author: usize, voters: &[usize], now: u64) -> PartialOrderLog {
        let log = pools[author].try_pre_order(now).expect("work queued");
        let from = NodeId(author as u16);
        let mut out = None;
        for &v in voters {
            let vote = pools[v].handle_pre_order(&log, from).unwrap();
            if let Some(done) = pools[author].handle_vote(&vote, NodeId(v as u16)).unwrap() {
                out = Some(done);
            }
        }
        let done = out.expect("quorum reached");
        for (i, p) in pools.iter_mut().enumerate() {
            if i != author {
                p.handle_order(&done, from).unwrap();
            }
        }
        done
    }

    #[test]
    fn enqueue_is_fifo_and_dedups() {
        let mut pools = cluster4();
        let m = &mut pools[0];
        m.enqueue_command(cmd(1)).unwrap();
        m.enqueue_command(cmd(2)).unwrap();
        assert_eq!(m.inbound().front(), Some(&cmd(1)));
        assert_eq!(m.enqueue_command(cmd(1)), Err(MempoolError::DuplicateCommand(cmd(1).digest)));
        assert_eq!(m.inbound().len(), 2);
    }

    #[test]
    fn stored_command_can_still_be_enqueued() {
        let mut pools = cluster4();
        pools[0].store_command(cmd(1));
        assert!(pools[0].enqueue_command(cmd(1)).is_ok());
        assert_eq!(pools[0].inbound().len(), 1);
    }

    #[test]
    fn first_pre_order_then_single_outstanding() {
        let mut pools = cluster4();
        pools[0].enqueue_command(cmd(1)).unwrap();
        pools[0].enqueue_command(cmd(2)).unwrap();
        let log = pools[0].try_pre_order(5).unwrap();
        assert_eq!((log.seq, log.prev_digest, log.timestamp), (1, Digest::EMPTY, 5));
        assert_eq!(log.command_digest, cmd(1).digest);
        assert!(log.certificate.is_none());
        assert_eq!(pools[0].try_pre_order(6), None);
        assert_eq!(pools[0].pending(), Some(&log));
    }

    #[test]
    fn empty_queue_does_not_pre_order() {
        let mut pools = cluster4();
        assert_eq!(pools[0].try_pre_order(0), None);
        assert_eq!(pools[0].seq(), 0);
    }

    #[test]
    fn chain_continues_after_certification() {
        let mut pools = cluster4();
        pools[0].enqueue_command(cmd(1)).unwrap();
        pools[0].enqueue_command(cmd(2)).unwrap();
        let first = certify(&mut pools, 0, &[0, 1, 2], 1);
        assert!(pools[0].certificate_valid(&first));
        let second = pools[0].try_pre_order(2).unwrap();
        assert_eq!(second.seq, 2);
        assert_eq!(second.prev_digest, first.cur_digest);
        let expected = crate::encoding::digest_log(NodeId(0), 2, 2, &cmd(2).digest, &first.cur_digest).unwrap();
        assert_eq!(second.cur_digest, expected);
    }

    #[test]
    fn vote_rejections() {
        let mut pools = cluster4();
        pools[0].enqueue_command(cmd(1)).unwrap();
        let log = pools[0].try_pre_order(1).unwrap();
        let vote = pools[1].handle_pre_order(&log, NodeId(0)).unwrap();
        assert!(pools[0].auth.verify_partial(&vote.partial));

        // same seq, different content
        let other = PartialOrderLog::new(NodeId(0), 1, 1, cmd(9).digest, Digest::EMPTY).unwrap();
        assert_eq!(pools[1].handle_pre_order(&other, NodeId(0)), Err(PreOrderReject::Equivocation(1)));
        // re-sent identical pre-order is voted again
        assert!(pools[1].handle_pre_order(&log, NodeId(0)).is_ok());

        let gap = PartialOrderLog::new(NodeId(0), 3, 1, cmd(9).digest, log.cur_digest).unwrap();
        assert_eq!(
            pools[2].handle_pre_order(&gap, NodeId(0)),
            Err(PreOrderReject::Gap { latest: 0, got: 3 })
        );

        let mut bad = log.clone();
        bad.timestamp += 1;
        assert_eq!(pools[2].handle_pre_order(&bad, NodeId(0)), Err(PreOrderReject::BadDigest));
        assert!(matches!(
            pools[2].handle_pre_order(&log, NodeId(3)),
            Err(PreOrderReject::WrongAuthor { .. })
        ));
    }

    #[test]
    fn votes_are_counted_once_per_signer() {
        let mut pools = cluster4();
        pools[0].enqueue_command(cmd(1)).unwrap();
        let log = pools[0].try_pre_order(1).unwrap();
        let v0 = pools[0].handle_pre_order(&log, NodeId(0)).unwrap();
        let v1 = pools[1].handle_pre_order(&log, NodeId(0)).unwrap();
        assert_eq!(pools[0].handle_vote(&v0, NodeId(0)), Ok(None));
        assert_eq!(pools[0].handle_vote(&v1, NodeId(1)), Ok(None));
        assert_eq!(pools[0].handle_vote(&v1, NodeId(1)), Ok(None));
        // signer mismatch
        assert_eq!(pools[0].handle_vote(&v1, NodeId(2)), Err(VoteError::InvalidPartial(NodeId(2))));
        let v2 = pools[2].handle_pre_order(&log, NodeId(0)).unwrap();
        let done = pools[0].handle_vote(&v2, NodeId(2)).unwrap().unwrap();
        assert!(pools[0].certificate_valid(&done));
        assert_eq!(pools[0].latest()[0].as_ref(), Some(&done));
        assert!(pools[0].pending().is_none());
        // a late vote for the certified log is stale
        let v3 = pools[3].handle_pre_order(&log, NodeId(0)).unwrap();
        assert_eq!(pools[0].handle_vote(&v3, NodeId(3)), Err(VoteError::Stale));
    }

    #[test]
    fn order_handling() {
        let mut pools = cluster4();
        pools[1].enqueue_command(cmd(1)).unwrap();
        let log = certify(&mut pools, 1, &[1, 2, 3], 1);
        assert_eq!(pools[0].latest()[1].as_ref(), Some(&log));
        assert_eq!(pools[0].fetch_log(NodeId(1), 1), Some(&log));
        assert_eq!(pools[0].fetch_log(NodeId(1), 2), None);

        let mut wrong = log.clone();
        wrong.certificate.as_mut().unwrap().event_digest = cmd(1).digest;
        let mut fresh = cluster4();
        assert_eq!(fresh[0].handle_order(&wrong, NodeId(1)), Err(OrderError::InvalidCert((NodeId(1), 1))));
        assert!(fresh[0].latest()[1].is_none());
    }

    #[test]
    fn conflicting_certified_logs_are_flagged() {
        // With f+1 colluding voters two logs for the same (author, seq) can be
        // certified; the receiving node must flag the second.
        let auth: Arc<dyn Authenticator> = Arc::new(MacScheme::new(Cluster::new(4).unwrap(), 1));
        let mk = |c: &Command| {
            let mut o = PartialOrderLog::new(NodeId(1), 1, 0, c.digest, Digest::EMPTY).unwrap();
            let parts: Vec<_> = [0, 1, 2].iter().map(|&i| auth.partial_sign(NodeId(i), &o.cur_digest)).collect();
            o.certificate = Some(auth.aggregate(&o.cur_digest, &parts).unwrap());
            o
        };
        let mut m = Mempool::new(NodeId(3), auth.clone());
        let a = mk(&cmd(1));
        let b = mk(&cmd(2));
        m.handle_order(&a, NodeId(1)).unwrap();
        assert_eq!(m.handle_order(&b, NodeId(1)), Err(OrderError::ChainBreak((NodeId(1), 1))));
        assert_eq!(m.evidence().len(), 1);
        assert_eq!(m.fetch_log(NodeId(1), 1), Some(&a));
    }

    #[test]
    fn resend_waits_for_interval() {
        let mut pools = cluster4();
        pools[0].enqueue_command(cmd(1)).unwrap();
        let log = pools[0].try_pre_order(10).unwrap();
        assert_eq!(pools[0].resend_pending(50, 100), None);
        assert_eq!(pools[0].resend_pending(110, 100), Some(log));
        assert_eq!(pools[0].resend_pending(150, 100), None);
    }
}
