//! Timestamp-ordering baseline over the same agreed log stream.
//!
//! Commands are committed in ascending trusted-timestamp order as soon as no
//! command still short of a quorum could slot in before them.

use std::collections::{HashMap, HashSet};

use crate::consensus::LogSet;
use crate::executor::{CommandInfo, Committed};
use crate::mempool::CommandSource;
use crate::types::{Cluster, Digest, Timestamp};

#[derive(Debug, Clone)]
pub struct TsExecutor {
    cluster: Cluster,
    infos: HashMap<Digest, CommandInfo>,
    committed: HashSet<Digest>,
    order: Vec<Committed>,
    low_watermark: Option<Timestamp>,
}

impl TsExecutor {
    pub fn new(cluster: Cluster) -> Self {
        TsExecutor {
            cluster,
            infos: HashMap::new(),
            committed: HashSet::new(),
            order: Vec::new(),
            low_watermark: None,
        }
    }

    pub fn info(&self, digest: &Digest) -> Option<&CommandInfo> {
        self.infos.get(digest)
    }

    pub fn committed_order(&self) -> &[Committed] {
        &self.order
    }

    /// Highest trusted timestamp committed so far.
    pub fn low_watermark(&self) -> Option<Timestamp> {
        self.low_watermark
    }

    pub fn ingest(&mut self, set: &LogSet) {
        for o in set.logs() {
            let info = self
                .infos
                .entry(o.command_digest)
                .or_insert_with(|| CommandInfo::new(o.command_digest, self.cluster.n));
            let fresh = info.add(o);
            assert!(fresh, "log ({}, {}) delivered twice", o.node, o.seq);
        }
    }

    /// Smallest timestamp reported for any uncommitted command that has not
    /// reached a quorum yet. Such a command may still end up below every
    /// timestamp above this bound.
    fn pending_bound(&self) -> Timestamp {
        self.infos
            .values()
            .filter(|i| i.support() < self.cluster.quorum() && !self.committed.contains(&i.digest))
            .filter_map(|i| i.timestamps.first().copied())
            .min()
            .unwrap_or(Timestamp::MAX)
    }

    /// Commits every quorum-supported command whose trusted timestamp is at
    /// most the pending bound. Commands whose payload is not in `store` stay
    /// uncommitted, as does everything ordered after them.
    pub fn commit_ready(&mut self, store: &impl CommandSource) -> &[Committed] {
        let bound = self.pending_bound();
        let mut ready: Vec<(Timestamp, Digest)> = self
            .infos
            .values()
            .filter(|i| !self.committed.contains(&i.digest))
            .filter_map(|i| Some((i.trusted_timestamp(self.cluster)?, i.digest)))
            .filter(|&(ts, _)| ts <= bound)
            .collect();
        ready.sort_unstable();

        let start = self.order.len();
        for (ts, d) in ready {
            let Some(cmd) = store.command(&d) else { break };
            self.committed.insert(d);
            self.low_watermark = Some(self.low_watermark.map_or(ts, |w| w.max(ts)));
            self.order.push(Committed {
                command: cmd.clone(),
                trusted_timestamp: ts,
                support: self.infos[&d].support(),
                path: None,
                anchor: false,
            });
        }
        &self.order[start..]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Command, NodeId, PartialOrderLog, ProposerId};

    fn log(node: u16, seq: u64, ts: Timestamp, c: &Command, prev: Digest) -> PartialOrderLog {
        PartialOrderLog::new(NodeId(node), seq, ts, c.digest, prev).unwrap()
    }

    fn setup() -> (Cluster, Vec<Command>, HashMap<Digest, Command>) {
        let cs: Vec<Command> = (1..=2).map(|s| Command::new(ProposerId(0), s, vec![s as u8])).collect();
        let store = cs.iter().map(|c| (c.digest, c.clone())).collect();
        (Cluster::new(4).unwrap(), cs, store)
    }

    #[test]
    fn one_log_is_not_committable() {
        let (cl, cs, store) = setup();
        let mut ts = TsExecutor::new(cl);
        ts.ingest(&LogSet::new(vec![log(0, 1, 5, &cs[0], Digest::EMPTY)]));
        assert_eq!(ts.info(&cs[0].digest).unwrap().support(), 1);
        assert!(ts.commit_ready(&store).is_empty());
    }

    #[test]
    fn quorum_commits_single_command() {
        let (cl, cs, store) = setup();
        let mut ts = TsExecutor::new(cl);
        let logs = (0..3).map(|n| log(n, 1, 7 + n as u64, &cs[0], Digest::EMPTY)).collect();
        ts.ingest(&LogSet::new(logs));
        assert_eq!(ts.info(&cs[0].digest).unwrap().trusted_timestamp(cl), Some(8));
        let got = ts.commit_ready(&store);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].trusted_timestamp, 8);
        assert_eq!(ts.low_watermark(), Some(8));
    }

    #[test]
    fn equal_timestamps_break_ties_by_digest() {
        let (cl, cs, store) = setup();
        let mut ts = TsExecutor::new(cl);
        let mut logs = Vec::new();
        for n in 0..3 {
            let a = log(n, 1, 4, &cs[0], Digest::EMPTY);
            let b = log(n, 2, 4, &cs[1], a.cur_digest);
            logs.extend([a, b]);
        }
        ts.ingest(&LogSet::new(logs));
        let got: Vec<Digest> = ts.commit_ready(&store).iter().map(|c| c.command.digest).collect();
        let mut want = vec![cs[0].digest, cs[1].digest];
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn pending_command_holds_back_later_timestamps() {
        let (cl, cs, store) = setup();
        let mut ts = TsExecutor::new(cl);
        // cs[1] is reported at 1 by a single node; cs[0] has trusted ts 5
        let mut logs: Vec<_> = (0..3).map(|n| log(n, 1, 5, &cs[0], Digest::EMPTY)).collect();
        logs.push(log(3, 1, 1, &cs[1], Digest::EMPTY));
        ts.ingest(&LogSet::new(logs));
        assert!(ts.commit_ready(&store).is_empty());
    }
}
