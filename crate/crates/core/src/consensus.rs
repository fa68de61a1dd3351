//! Order-batch generation and expansion of the delivered batch stream into
//! a FIFO queue of sorted log sets.
//!
//! The underlying total-order broadcast is a black box. [`Sequencer`] is
//! the in-process stand-in: one designated leader assigns batch indices and
//! delivery order equals index order.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auth::Authenticator;
use crate::encoding::{EncodingError, Reader, Writer};
use crate::mempool::LogSource;
use crate::types::{NodeId, PartialOrderLog};

/// Snapshot of the latest certified log per author.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderBatch {
    pub slots: Vec<Option<PartialOrderLog>>,
}

impl OrderBatch {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.u16(self.slots.len() as u16);
        for slot in &self.slots {
            match slot {
                Some(o) => {
                    w.u8(1);
                    w.log(o);
                }
                None => w.u8(0),
            }
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, EncodingError> {
        let mut r = Reader::new(bytes);
        let batch = Self::read(&mut r)?;
        r.finish()?;
        Ok(batch)
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, EncodingError> {
        let n = r.u16()? as usize;
        let mut slots = Vec::with_capacity(n);
        for _ in 0..n {
            slots.push(match r.u8()? {
                0 => None,
                1 => Some(r.log()?),
                t => return Err(EncodingError::UnknownTag(t)),
            });
        }
        Ok(OrderBatch { slots })
    }

    /// One line of a batch-stream dump: the canonical encoding in hex.
    pub fn trace_line(&self) -> String {
        hex::encode(self.encode())
    }
}

/// Logs committed by one order-batch, sorted by `(seq, author)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogSet {
    logs: Vec<PartialOrderLog>,
}

impl LogSet {
    pub fn new(mut logs: Vec<PartialOrderLog>) -> Self {
        logs.sort_by_key(|o| (o.seq, o.node));
        LogSet { logs }
    }

    pub fn logs(&self) -> &[PartialOrderLog] {
        &self.logs
    }

    pub fn is_empty(&self) -> bool {
        self.logs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.logs.len()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CommitError {
    /// A slot fails verification. A real deployment changes leader; the
    /// harness discards the batch.
    #[error("batch slot {0} is invalid")]
    BatchInvalid(NodeId),
    /// Logs below a batch entry are not yet stored locally. No state was
    /// changed; retry after retrieving them.
    #[error("missing {} logs", .0.len())]
    Missing(Vec<(NodeId, u64)>),
    #[error("stored log {0:?} does not chain to the batch entry")]
    ChainBreak((NodeId, u64)),
}

/// If some author's latest log is beyond `watermark`, a batch over `latest`.
pub fn batch_if_progress(latest: &[Option<PartialOrderLog>], watermark: &[u64]) -> Option<OrderBatch> {
    let progress = latest
        .iter()
        .zip(watermark)
        .any(|(slot, &w)| slot.as_ref().is_some_and(|o| o.seq > w));
    progress.then(|| OrderBatch {
        slots: latest.to_vec(),
    })
}

/// Per-node consensus state: committed vector clock and the log-set queue.
#[derive(Debug, Clone)]
pub struct ConsensusState {
    committed: Vec<u64>,
    outbound: VecDeque<LogSet>,
}

impl ConsensusState {
    pub fn new(n: usize) -> Self {
        ConsensusState {
            committed: vec![0; n],
            outbound: VecDeque::new(),
        }
    }

    /// Highest committed log seq per author.
    pub fn committed(&self) -> &[u64] {
        &self.committed
    }

    pub fn make_order_batch(&self, latest: &[Option<PartialOrderLog>]) -> Option<OrderBatch> {
        batch_if_progress(latest, &self.committed)
    }

    /// Expands a delivered batch into a log set and appends it to the
    /// outbound queue. On error the state is unchanged.
    ///
    /// Slots that advance are verified here; gap logs taken from `store`
    /// are trusted to have been verified when they were stored.
    pub fn commit_order_batch(
        &mut self,
        batch: &OrderBatch,
        store: &impl LogSource,
        auth: &dyn Authenticator,
    ) -> Result<&LogSet, CommitError> {
        let n = self.committed.len();
        if batch.slots.len() != n {
            return Err(CommitError::BatchInvalid(NodeId(batch.slots.len().min(n) as u16)));
        }
        for (j, slot) in batch.slots.iter().enumerate() {
            if let Some(o) = slot {
                if o.node.index() != j || (o.seq > self.committed[j] && !log_is_certified(o, auth)) {
                    return Err(CommitError::BatchInvalid(NodeId(j as u16)));
                }
            }
        }

        let mut missing = Vec::new();
        let mut set = Vec::new();
        let mut advanced = Vec::new();
        for (j, slot) in batch.slots.iter().enumerate() {
            let Some(top) = slot else { continue };
            let committed = self.committed[j];
            if top.seq <= committed {
                continue;
            }
            let author = NodeId(j as u16);
            let mut chain = Vec::with_capacity((top.seq - committed) as usize);
            for seq in committed + 1..top.seq {
                match store.log(author, seq) {
                    Some(o) => chain.push(o.clone()),
                    None => missing.push((author, seq)),
                }
            }
            chain.push(top.clone());
            advanced.push((j, top.seq));
            set.push(chain);
        }
        if !missing.is_empty() {
            return Err(CommitError::Missing(missing));
        }
        for chain in &set {
            for pair in chain.windows(2) {
                if pair[1].prev_digest != pair[0].cur_digest {
                    return Err(CommitError::ChainBreak(pair[0].key()));
                }
            }
        }

        for (j, seq) in advanced {
            self.committed[j] = seq;
        }
        self.outbound.push_back(LogSet::new(set.into_iter().flatten().collect()));
        Ok(self.outbound.back().expect("just pushed"))
    }

    pub fn outbound(&self) -> &VecDeque<LogSet> {
        &self.outbound
    }

    pub fn outbound_mut(&mut self) -> &mut VecDeque<LogSet> {
        &mut self.outbound
    }

    pub fn pop_log_set(&mut self) -> Option<LogSet> {
        self.outbound.pop_front()
    }
}

fn log_is_certified(o: &PartialOrderLog, auth: &dyn Authenticator) -> bool {
    o.digest_is_valid()
        && o
            .certificate
            .as_ref()
            .is_some_and(|c| c.event_digest == o.cur_digest && auth.verify_certificate(c))
}

/// A total-order broadcast delivering identical batch streams to every
/// honest node.
pub trait TotalOrderBroadcast {
    /// Submits a batch and returns its position in the delivered stream.
    fn submit(&mut self, batch: OrderBatch) -> u64;
    /// All batches delivered so far, in delivery order.
    fn delivered(&self) -> &[OrderBatch];
}

/// Leader-driven sequencer. Tracks the highest seq it has already batched
/// per author so that consecutive proposals make progress.
#[derive(Debug, Clone)]
pub struct Sequencer {
    watermark: Vec<u64>,
    stream: Vec<OrderBatch>,
}

impl Sequencer {
    pub fn new(n: usize) -> Self {
        Sequencer {
            watermark: vec![0; n],
            stream: Vec::new(),
        }
    }

    /// Builds and submits a batch from the leader's latest-log view if any
    /// author advanced since the previous batch.
    pub fn propose(&mut self, latest: &[Option<PartialOrderLog>]) -> Option<(u64, OrderBatch)> {
        let batch = batch_if_progress(latest, &self.watermark)?;
        let index = self.submit(batch.clone());
        Some((index, batch))
    }

    pub fn has_progress(&self, latest: &[Option<PartialOrderLog>]) -> bool {
        batch_if_progress(latest, &self.watermark).is_some()
    }
}

impl TotalOrderBroadcast for Sequencer {
    fn submit(&mut self, batch: OrderBatch) -> u64 {
        for (w, slot) in self.watermark.iter_mut().zip(&batch.slots) {
            if let Some(o) = slot {
                *w = (*w).max(o.seq);
            }
        }
        self.stream.push(batch);
        (self.stream.len() - 1) as u64
    }

    fn delivered(&self) -> &[OrderBatch] {
        &self.stream
    }
}
