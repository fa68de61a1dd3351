//! Identities, digests, commands and partial-order logs.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::auth::Certificate;
use crate::encoding;

/// Logical or simulated clock reading in milliseconds.
pub type Timestamp = u64;

/// Identity of a consensus node. Node ids are dense: `0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u16);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N{}", self.0)
    }
}

/// Identity of a proposer (client).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProposerId(pub u16);

impl fmt::Display for ProposerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

/// A 32-byte SHA-256 digest.
///
/// The derived `Ord` is byte-lexicographic, which coincides with the
/// lexicographic order of the lowercase hex rendering.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    /// The empty predecessor of the first log in a chain.
    pub const EMPTY: Digest = Digest([0u8; 32]);

    pub fn is_empty(&self) -> bool {
        *self == Self::EMPTY
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; 32] = bytes.try_into().ok()?;
        Some(Digest(arr))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({}..)", &self.to_hex()[..12])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Cluster size parameters, `n = 3f + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub n: usize,
    pub f: usize,
}

impl Cluster {
    /// Builds the cluster for `n` nodes. Returns `None` unless `n = 3f + 1` for some `f`.
    pub fn new(n: usize) -> Option<Self> {
        if n == 0 || !(n - 1).is_multiple_of(3) {
            return None;
        }
        Some(Cluster { n, f: (n - 1) / 3 })
    }

    pub fn with_faults(f: usize) -> Self {
        Cluster { n: 3 * f + 1, f }
    }

    /// `2f + 1`: certificate threshold and trusted-timestamp support.
    pub fn quorum(&self) -> usize {
        2 * self.f + 1
    }

    /// `f + 1`: at least one honest participant.
    pub fn weak_quorum(&self) -> usize {
        self.f + 1
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.n as u16).map(NodeId)
    }
}

/// A proposer's atomic ordering unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Command {
    pub proposer: ProposerId,
    pub seq: u64,
    pub payload: Vec<u8>,
    pub digest: Digest,
}

impl Command {
    /// Builds a command and computes its digest. `seq` must be at least 1.
    pub fn new(proposer: ProposerId, seq: u64, payload: impl Into<Vec<u8>>) -> Self {
        let payload = payload.into();
        let digest = encoding::digest_command(proposer, seq, &payload);
        Command {
            proposer,
            seq,
            payload,
            digest,
        }
    }

    /// Checks that the stored digest matches the content.
    pub fn verify_digest(&self) -> bool {
        self.seq >= 1 && encoding::digest_command(self.proposer, self.seq, &self.payload) == self.digest
    }
}

/// A node's declaration that a command occupies position `seq` in its local order.
///
/// Logs of one author form a hash chain through `prev_digest`. The
/// certificate is absent only while the log is being pre-ordered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialOrderLog {
    pub node: NodeId,
    pub seq: u64,
    pub timestamp: Timestamp,
    pub command_digest: Digest,
    pub prev_digest: Digest,
    pub cur_digest: Digest,
    pub certificate: Option<Certificate>,
}

impl PartialOrderLog {
    /// Builds an uncertified log, computing `cur_digest` from the other fields.
    pub fn new(
        node: NodeId,
        seq: u64,
        timestamp: Timestamp,
        command_digest: Digest,
        prev_digest: Digest,
    ) -> Result<Self, encoding::EncodingError> {
        let cur_digest = encoding::digest_log(node, seq, timestamp, &command_digest, &prev_digest)?;
        Ok(PartialOrderLog {
            node,
            seq,
            timestamp,
            command_digest,
            prev_digest,
            cur_digest,
            certificate: None,
        })
    }

    /// Recomputes `cur_digest` and compares it with the stored value.
    pub fn digest_is_valid(&self) -> bool {
        matches!(
            encoding::digest_log(self.node, self.seq, self.timestamp, &self.command_digest, &self.prev_digest),
            Ok(d) if d == self.cur_digest
        )
    }

    /// `(author, seq)`, the retrieval key of a log.
    pub fn key(&self) -> (NodeId, u64) {
        (self.node, self.seq)
    }
}

/// How honest nodes derive the total order from the agreed log stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// The anchor executor.
    Anchor,
    /// Order by trusted timestamp alone.
    Timestamp,
    /// Adopt the partial order of the lowest-id Byzantine node as is.
    Follow,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Anchor, Strategy::Timestamp, Strategy::Follow];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Anchor => "anchor",
            Strategy::Timestamp => "timestamp",
            Strategy::Follow => "follow",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}
