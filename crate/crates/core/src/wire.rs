//! Protocol messages and their byte encoding.

use crate::auth::PartialSignature;
use crate::consensus::OrderBatch;
use crate::encoding::{EncodingError, Reader, Writer};
use crate::mempool::Vote;
use crate::types::{Command, Digest, NodeId, PartialOrderLog};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    /// Proposer to node.
    Command(Command),
    PreOrder(PartialOrderLog),
    Vote(Vote),
    /// A certified log, broadcast by its author.
    Order(PartialOrderLog),
    /// Sequencer delivery of the `index`-th order-batch.
    Batch { index: u64, batch: OrderBatch },
    FetchLog { author: NodeId, seq: u64 },
    FetchResp(PartialOrderLog),
    FetchCommand(Digest),
    CommandResp(Command),
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Command(_) => "COMMAND",
            Message::PreOrder(_) => "PRE_ORDER",
            Message::Vote(_) => "VOTE",
            Message::Order(_) => "ORDER",
            Message::Batch { .. } => "BATCH",
            Message::FetchLog { .. } => "FETCH_LOG",
            Message::FetchResp(_) => "FETCH_RESP",
            Message::FetchCommand(_) => "FETCH_CMD",
            Message::CommandResp(_) => "CMD_RESP",
        }
    }

    fn tag(&self) -> u8 {
        match self {
            Message::Command(_) => 1,
            Message::PreOrder(_) => 2,
            Message::Vote(_) => 3,
            Message::Order(_) => 4,
            Message::Batch { .. } => 5,
            Message::FetchLog { .. } => 6,
            Message::FetchResp(_) => 7,
            Message::FetchCommand(_) => 8,
            Message::CommandResp(_) => 9,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.u8(self.tag());
        match self {
            Message::Command(c) | Message::CommandResp(c) => w.command(c),
            Message::PreOrder(o) | Message::Order(o) | Message::FetchResp(o) => w.log(o),
            Message::Vote(v) => {
                w.digest(&v.digest);
                w.u16(v.partial.signer.0);
                w.digest(&v.partial.event_digest);
                w.bytes(&v.partial.sig);
            }
            Message::Batch { index, batch } => {
                w.u64(*index);
                w.bytes(&batch.encode());
            }
            Message::FetchLog { author, seq } => {
                w.u16(author.0);
                w.u64(*seq);
            }
            Message::FetchCommand(d) => w.digest(d),
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, EncodingError> {
        let mut r = Reader::new(bytes);
        let msg = match r.u8()? {
            1 => Message::Command(r.command()?),
            2 => Message::PreOrder(r.log()?),
            3 => {
                let digest = r.digest()?;
                let partial = PartialSignature {
                    signer: NodeId(r.u16()?),
                    event_digest: r.digest()?,
                    sig: r.bytes()?,
                };
                Message::Vote(Vote { digest, partial })
            }
            4 => Message::Order(r.log()?),
            5 => {
                let index = r.u64()?;
                let batch = OrderBatch::decode(&r.bytes()?)?;
                Message::Batch { index, batch }
            }
            6 => Message::FetchLog {
                author: NodeId(r.u16()?),
                seq: r.u64()?,
            },
            7 => Message::FetchResp(r.log()?),
            8 => Message::FetchCommand(r.digest()?),
            9 => Message::CommandResp(r.command()?),
            t => return Err(EncodingError::UnknownTag(t)),
        };
        r.finish()?;
        Ok(msg)
    }
}
