//! Anchor-based total ordering.
//!
//! The executor replays every author's partial order from the common
//! log-set stream into per-author FIFO queues. Each step picks an
//! anchor-set:
//!
//! * normal path: every command that at least `f+1` queue fronts point to;
//! * alter path: the uncommitted command with the lowest trusted timestamp,
//!   together with the commands it is not reliably ordered before.
//!
//! Members with weak support are dropped; if any member has between `f+1`
//! and `2f` supporting logs the step waits for more logs. Surviving members
//! are committed in trusted-timestamp order, ties broken by digest.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::LogSet;
use crate::mempool::CommandSource;
use crate::types::{Cluster, Command, Digest, PartialOrderLog, Timestamp};

/// Everything known about one command's position in the partial orders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandInfo {
    pub digest: Digest,
    /// `logs[j]` is the log from node `j` that points to this command.
    pub logs: Vec<Option<PartialOrderLog>>,
    /// Reported timestamps, ascending.
    pub timestamps: Vec<Timestamp>,
}

impl CommandInfo {
    pub fn new(digest: Digest, n: usize) -> Self {
        CommandInfo {
            digest,
            logs: vec![None; n],
            timestamps: Vec::new(),
        }
    }

    /// Number of nodes whose log points to this command.
    pub fn support(&self) -> usize {
        self.timestamps.len()
    }

    /// Records `log`, returning `false` if its author already has one here.
    pub fn add(&mut self, log: &PartialOrderLog) -> bool {
        let slot = &mut self.logs[log.node.index()];
        if slot.is_some() {
            return false;
        }
        *slot = Some(log.clone());
        let at = self.timestamps.partition_point(|&t| t <= log.timestamp);
        self.timestamps.insert(at, log.timestamp);
        true
    }

    pub fn trusted_timestamp(&self, cluster: Cluster) -> Option<Timestamp> {
        trusted_timestamp(&self.timestamps, cluster)
    }
}

/// The `(f+1)`-th smallest of at least `2f+1` ascending timestamps. With at
/// most `f` faulty reporters it lies within the range of honest reports.
pub fn trusted_timestamp(sorted: &[Timestamp], cluster: Cluster) -> Option<Timestamp> {
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
    (sorted.len() >= cluster.quorum()).then(|| sorted[cluster.f])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnchorPath {
    Normal,
    Alter,
}

impl AnchorPath {
    pub fn tag(self) -> &'static str {
        match self {
            AnchorPath::Normal => "NORMAL",
            AnchorPath::Alter => "ALTER",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorSet {
    pub path: AnchorPath,
    /// Commands that triggered the set: the `f+1`-front digests on the
    /// normal path, the single lowest-timestamp command on the alter path.
    pub anchors: Vec<Digest>,
    pub members: Vec<Digest>,
}

/// One entry of the total order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Committed {
    pub command: Command,
    pub trusted_timestamp: Timestamp,
    pub support: usize,
    /// Path of the anchor-set it was committed in; `None` outside the
    /// anchor executor.
    pub path: Option<AnchorPath>,
    pub anchor: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExecError {
    /// Commands of a selected anchor-set are not stored locally. Nothing was
    /// committed from the set; retry once they are retrieved.
    #[error("{} commands unavailable", .0.len())]
    CommandUnavailable(Vec<Digest>),
}

#[derive(Debug, Clone)]
pub struct Executor {
    cluster: Cluster,
    committed: HashSet<Digest>,
    infos: HashMap<Digest, CommandInfo>,
    uncommitted: HashSet<Digest>,
    queues: Vec<VecDeque<Digest>>,
    order: Vec<Committed>,
    anchors: Vec<(Digest, AnchorPath)>,
    anchor_set_starts: Vec<usize>,
    normal_sets: usize,
    alter_sets: usize,
}

impl Executor {
    pub fn new(cluster: Cluster) -> Self {
        Executor {
            cluster,
            committed: HashSet::new(),
            infos: HashMap::new(),
            uncommitted: HashSet::new(),
            queues: vec![VecDeque::new(); cluster.n],
            order: Vec::new(),
            anchors: Vec::new(),
            anchor_set_starts: Vec::new(),
            normal_sets: 0,
            alter_sets: 0,
        }
    }

    pub fn cluster(&self) -> Cluster {
        self.cluster
    }

    pub fn info(&self, digest: &Digest) -> Option<&CommandInfo> {
        self.infos.get(digest)
    }

    pub fn infos(&self) -> impl Iterator<Item = &CommandInfo> {
        self.infos.values()
    }

    pub fn is_committed(&self, digest: &Digest) -> bool {
        self.committed.contains(digest)
    }

    /// The total order so far.
    pub fn committed_order(&self) -> &[Committed] {
        &self.order
    }

    /// Anchor commands in commit order, with the path that selected them.
    pub fn anchors(&self) -> &[(Digest, AnchorPath)] {
        &self.anchors
    }

    /// Anchors grouped by the anchor-set that committed them, in commit order.
    pub fn anchor_sets(&self) -> Vec<&[(Digest, AnchorPath)]> {
        let mut bounds = self.anchor_set_starts.clone();
        bounds.push(self.anchors.len());
        bounds.windows(2).map(|w| &self.anchors[w[0]..w[1]]).collect()
    }

    /// `(normal, alter)` counts of committed anchor-sets.
    pub fn path_counts(&self) -> (usize, usize) {
        (self.normal_sets, self.alter_sets)
    }

    pub fn queue_len(&self, node: usize) -> usize {
        self.queues[node].len()
    }

    /// Adds every log of `set`, in order, to its command info and to its
    /// author's queue.
    pub fn ingest_log_set(&mut self, set: &LogSet) {
        for o in set.logs() {
            let info = self
                .infos
                .entry(o.command_digest)
                .or_insert_with(|| CommandInfo::new(o.command_digest, self.cluster.n));
            let fresh = info.add(o);
            assert!(fresh, "log ({}, {}) delivered twice", o.node, o.seq);
            if !self.committed.contains(&o.command_digest) {
                self.uncommitted.insert(o.command_digest);
            }
            self.queues[o.node.index()].push_back(o.command_digest);
        }
    }

    /// Drops committed commands from the head of every queue and reports the
    /// remaining fronts.
    pub fn front_vector(&mut self) -> Vec<Option<&PartialOrderLog>> {
        for q in &mut self.queues {
            while q.front().is_some_and(|d| self.committed.contains(d)) {
                q.pop_front();
            }
        }
        self.queues
            .iter()
            .enumerate()
            .map(|(j, q)| q.front().and_then(|d| self.infos[d].logs[j].as_ref()))
            .collect()
    }

    /// At least `f+1` nodes have logs for both commands with `first` at a
    /// smaller position than `second`.
    pub fn reliable_precedes(&self, first: &Digest, second: &Digest) -> bool {
        let (Some(a), Some(b)) = (self.infos.get(first), self.infos.get(second)) else {
            return false;
        };
        precedes_count(a, b) >= self.cluster.weak_quorum()
    }

    pub fn select_anchor_set(&mut self) -> Option<AnchorSet> {
        let cluster = self.cluster;
        let mut fronts: BTreeMap<Digest, usize> = BTreeMap::new();
        for o in self.front_vector().into_iter().flatten() {
            *fronts.entry(o.command_digest).or_default() += 1;
        }
        let normal: Vec<Digest> = fronts
            .into_iter()
            .filter(|&(_, count)| count >= cluster.weak_quorum())
            .map(|(d, _)| d)
            .collect();

        let (path, anchors, mut members) = if !normal.is_empty() {
            (AnchorPath::Normal, normal.clone(), normal)
        } else {
            let anchor = self.alter_anchor()?;
            let members = self.alter_closure(&anchor);
            (AnchorPath::Alter, vec![anchor], members)
        };

        members.retain(|d| self.infos[d].support() >= cluster.weak_quorum());
        if members.iter().any(|d| self.infos[d].support() < cluster.quorum()) {
            return None;
        }
        Some(AnchorSet { path, anchors, members })
    }

    /// Lowest `(trusted timestamp, digest)` among uncommitted commands with a
    /// defined trusted timestamp.
    fn alter_anchor(&self) -> Option<Digest> {
        self.uncommitted
            .iter()
            .filter_map(|d| Some((self.infos[d].trusted_timestamp(self.cluster)?, *d)))
            .min()
            .map(|(_, d)| d)
    }

    /// The anchor followed by the uncommitted commands it is not reliably
    /// ordered before, strongest support first. Expansion stops after the
    /// first member with less than `2f+1` support; the result then takes in
    /// every command that all logs place before a member.
    fn alter_closure(&self, anchor: &Digest) -> Vec<Digest> {
        let quorum = self.cluster.quorum();
        let mut rest: Vec<(std::cmp::Reverse<usize>, Timestamp, Digest)> = self
            .uncommitted
            .iter()
            .filter(|d| *d != anchor && !self.reliable_precedes(anchor, d))
            .map(|d| {
                let info = &self.infos[d];
                let ts = info.trusted_timestamp(self.cluster).unwrap_or(Timestamp::MAX);
                (std::cmp::Reverse(info.support()), ts, *d)
            })
            .collect();
        rest.sort_unstable();

        let mut members = vec![*anchor];
        for (std::cmp::Reverse(support), _, d) in rest {
            members.push(d);
            if support < quorum {
                break;
            }
        }
        self.close_under_predecessors(&mut members);
        members
    }

    /// Adds every uncommitted command that precedes a member in each log
    /// holding that member, until no more are found.
    fn close_under_predecessors(&self, members: &mut Vec<Digest>) {
        let mut included: HashSet<Digest> = members.iter().copied().collect();
        let mut i = 0;
        while i < members.len() {
            let m = &self.infos[&members[i]];
            i += 1;
            let Some(j) = m.logs.iter().position(Option::is_some) else {
                continue;
            };
            let mut found = Vec::new();
            for d in &self.queues[j] {
                if *d == m.digest {
                    break;
                }
                if self.committed.contains(d) || included.contains(d) {
                    continue;
                }
                let c = &self.infos[d];
                let everywhere = m.logs.iter().zip(&c.logs).all(|pair| match pair {
                    (Some(ml), Some(cl)) => cl.seq < ml.seq,
                    (Some(_), None) => false,
                    (None, _) => true,
                });
                if everywhere {
                    found.push(*d);
                }
            }
            for d in found {
                included.insert(d);
                members.push(d);
            }
        }
    }

    /// Commits the members of `set` in `(trusted timestamp, digest)` order.
    pub fn commit_anchor_set(
        &mut self,
        set: &AnchorSet,
        store: &impl CommandSource,
    ) -> Result<&[Committed], ExecError> {
        let missing: Vec<Digest> = set.members.iter().filter(|d| store.command(d).is_none()).copied().collect();
        if !missing.is_empty() {
            return Err(ExecError::CommandUnavailable(missing));
        }
        let mut members: Vec<(Timestamp, Digest)> = set
            .members
            .iter()
            .map(|d| {
                let ts = self.infos[d]
                    .trusted_timestamp(self.cluster)
                    .expect("members passed the front-set check");
                (ts, *d)
            })
            .collect();
        members.sort_unstable();

        let start = self.order.len();
        self.anchor_set_starts.push(self.anchors.len());
        for (ts, d) in members {
            let is_anchor = set.anchors.contains(&d);
            if is_anchor {
                self.anchors.push((d, set.path));
            }
            self.committed.insert(d);
            self.uncommitted.remove(&d);
            self.order.push(Committed {
                command: store.command(&d).expect("checked above").clone(),
                trusted_timestamp: ts,
                support: self.infos[&d].support(),
                path: Some(set.path),
                anchor: is_anchor,
            });
        }
        match set.path {
            AnchorPath::Normal => self.normal_sets += 1,
            AnchorPath::Alter => self.alter_sets += 1,
        }
        Ok(&self.order[start..])
    }

    /// Commits until no anchor-set is available, then ingests the next queued
    /// log set and repeats. Returns the number of commands committed.
    ///
    /// On [`ExecError::CommandUnavailable`] the executor stops before the
    /// blocked set; calling `drain` again resumes at the same point.
    pub fn drain(&mut self, queue: &mut VecDeque<LogSet>, store: &impl CommandSource) -> Result<usize, ExecError> {
        let start = self.order.len();
        loop {
            while let Some(set) = self.select_anchor_set() {
                self.commit_anchor_set(&set, store)?;
            }
            match queue.pop_front() {
                Some(s) => self.ingest_log_set(&s),
                None => break,
            }
        }
        Ok(self.order.len() - start)
    }
}

/// Nodes whose logs place `a` before `b`.
pub fn precedes_count(a: &CommandInfo, b: &CommandInfo) -> usize {
    a.logs
        .iter()
        .zip(&b.logs)
        .filter(|(x, y)| matches!((x, y), (Some(x), Some(y)) if x.seq < y.seq))
        .count()
}
