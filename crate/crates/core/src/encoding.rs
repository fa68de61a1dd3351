//! Canonical byte encoding and digests.
//!
//! All integers are big-endian. Variable-length fields carry a `u32`
//! length prefix. The layouts are fixed so digests are reproducible
//! bit-for-bit across implementations:
//!
//! ```text
//! command     = u16 proposer || u64 seq || u32 len || payload
//! log preimage = u16 node || u64 seq || u64 timestamp || command_digest[32] || prev_digest[32]
//! ```

use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::auth::Certificate;
use crate::types::{Command, Digest, NodeId, PartialOrderLog, ProposerId, Timestamp};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncodingError {
    #[error("log seq {seq} disagrees with prev digest (empty: {prev_empty})")]
    PreconditionViolation { seq: u64, prev_empty: bool },
    #[error("unexpected end of input")]
    Truncated,
    #[error("unknown tag {0:#04x}")]
    UnknownTag(u8),
    #[error("trailing bytes after message")]
    Trailing,
    #[error("invalid field: {0}")]
    Invalid(&'static str),
}

pub fn sha256(bytes: &[u8]) -> Digest {
    Digest(Sha256::digest(bytes).into())
}

pub fn command_preimage(proposer: ProposerId, seq: u64, payload: &[u8]) -> Vec<u8> {
    let mut w = Writer::with_capacity(14 + payload.len());
    w.u16(proposer.0);
    w.u64(seq);
    w.bytes(payload);
    w.finish()
}

pub fn digest_command(proposer: ProposerId, seq: u64, payload: &[u8]) -> Digest {
    sha256(&command_preimage(proposer, seq, payload))
}

pub fn log_preimage(
    node: NodeId,
    seq: u64,
    timestamp: Timestamp,
    command_digest: &Digest,
    prev_digest: &Digest,
) -> [u8; 82] {
    let mut out = [0u8; 82];
    out[0..2].copy_from_slice(&node.0.to_be_bytes());
    out[2..10].copy_from_slice(&seq.to_be_bytes());
    out[10..18].copy_from_slice(&timestamp.to_be_bytes());
    out[18..50].copy_from_slice(&command_digest.0);
    out[50..82].copy_from_slice(&prev_digest.0);
    out
}

/// Digest of a log's five identifying fields. The first log of a chain
/// (and only the first) has an empty predecessor.
pub fn digest_log(
    node: NodeId,
    seq: u64,
    timestamp: Timestamp,
    command_digest: &Digest,
    prev_digest: &Digest,
) -> Result<Digest, EncodingError> {
    if seq == 0 || (seq == 1) != prev_digest.is_empty() {
        return Err(EncodingError::PreconditionViolation {
            seq,
            prev_empty: prev_digest.is_empty(),
        });
    }
    Ok(sha256(&log_preimage(node, seq, timestamp, command_digest, prev_digest)))
}

#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn with_capacity(cap: usize) -> Self {
        Writer {
            buf: Vec::with_capacity(cap),
        }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn digest(&mut self, d: &Digest) {
        self.buf.extend_from_slice(&d.0);
    }

    /// Length-prefixed byte string.
    pub fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.buf.extend_from_slice(b);
    }

    pub fn command(&mut self, c: &Command) {
        self.u16(c.proposer.0);
        self.u64(c.seq);
        self.bytes(&c.payload);
    }

    pub fn certificate(&mut self, c: &Certificate) {
        self.digest(&c.event_digest);
        self.u16(c.signers.len() as u16);
        for s in &c.signers {
            self.u16(s.0);
        }
        self.bytes(&c.aggregate);
    }

    /// Log preimage fields, then `cur_digest`, then a presence byte and the certificate.
    pub fn log(&mut self, o: &PartialOrderLog) {
        self.buf
            .extend_from_slice(&log_preimage(o.node, o.seq, o.timestamp, &o.command_digest, &o.prev_digest));
        self.digest(&o.cur_digest);
        match &o.certificate {
            Some(c) => {
                self.u8(1);
                self.certificate(c);
            }
            None => self.u8(0),
        }
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug)]
pub struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], EncodingError> {
        if self.buf.len() < n {
            return Err(EncodingError::Truncated);
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    pub fn u8(&mut self) -> Result<u8, EncodingError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, EncodingError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32, EncodingError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, EncodingError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn digest(&mut self) -> Result<Digest, EncodingError> {
        Ok(Digest(self.take(32)?.try_into().unwrap()))
    }

    pub fn bytes(&mut self) -> Result<Vec<u8>, EncodingError> {
        let len = self.u32()? as usize;
        Ok(self.take(len)?.to_vec())
    }

    pub fn command(&mut self) -> Result<Command, EncodingError> {
        let proposer = ProposerId(self.u16()?);
        let seq = self.u64()?;
        if seq == 0 {
            return Err(EncodingError::Invalid("command seq must be positive"));
        }
        let payload = self.bytes()?;
        Ok(Command::new(proposer, seq, payload))
    }

    pub fn certificate(&mut self) -> Result<Certificate, EncodingError> {
        let event_digest = self.digest()?;
        let count = self.u16()? as usize;
        let mut signers = Vec::with_capacity(count);
        for _ in 0..count {
            signers.push(NodeId(self.u16()?));
        }
        let aggregate = self.bytes()?;
        Ok(Certificate {
            event_digest,
            signers,
            aggregate,
        })
    }

    pub fn log(&mut self) -> Result<PartialOrderLog, EncodingError> {
        let node = NodeId(self.u16()?);
        let seq = self.u64()?;
        let timestamp = self.u64()?;
        let command_digest = self.digest()?;
        let prev_digest = self.digest()?;
        let cur_digest = self.digest()?;
        let certificate = match self.u8()? {
            0 => None,
            1 => Some(self.certificate()?),
            t => return Err(EncodingError::UnknownTag(t)),
        };
        Ok(PartialOrderLog {
            node,
            seq,
            timestamp,
            command_digest,
            prev_digest,
            cur_digest,
            certificate,
        })
    }

    pub fn finish(self) -> Result<(), EncodingError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(EncodingError::Trailing)
        }
    }
}

pub fn encode_log(o: &PartialOrderLog) -> Vec<u8> {
    let mut w = Writer::default();
    w.log(o);
    w.finish()
}

pub fn decode_log(bytes: &[u8]) -> Result<PartialOrderLog, EncodingError> {
    let mut r = Reader::new(bytes);
    let o = r.log()?;
    r.finish()?;
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_preimage_layout() {
        let pre = command_preimage(ProposerId(1), 1, b"hello");
        assert_eq!(
            hex::encode(&pre),
            concat!("0001", "0000000000000001", "00000005", "68656c6c6f")
        );
    }

    #[test]
    fn digest_command_is_deterministic_and_binds_seq() {
        let a = digest_command(ProposerId(1), 1, b"a");
        assert_eq!(a, digest_command(ProposerId(1), 1, b"a"));
        assert_ne!(a, digest_command(ProposerId(1), 2, b"a"));
    }

    // Golden vectors were produced once by hashing the documented preimage
    // layouts with an independent SHA-256 implementation (Python hashlib).
    #[test]
    fn digest_command_golden() {
        assert_eq!(
            digest_command(ProposerId(1), 1, b"hello").to_hex(),
            "5b55c37b3289415cb01856eba47dbe428e3cd8f70e823db641b5a16e08bec322"
        );
    }

    #[test]
    fn digest_log_golden() {
        let d_r = digest_command(ProposerId(1), 1, b"x");
        let d = digest_log(NodeId(1), 1, 0, &d_r, &Digest::EMPTY).unwrap();
        assert_eq!(d.to_hex(), "9986172a21b57ce82193f52b4de92b38b76d8c4eae9469077e7cb084fa2818e0");
    }

    #[test]
    fn digest_log_rejects_inconsistent_chain_head() {
        let d_r = digest_command(ProposerId(1), 1, b"x");
        assert!(matches!(
            digest_log(NodeId(1), 1, 0, &d_r, &d_r),
            Err(EncodingError::PreconditionViolation { .. })
        ));
        assert!(matches!(
            digest_log(NodeId(1), 2, 0, &d_r, &Digest::EMPTY),
            Err(EncodingError::PreconditionViolation { .. })
        ));
        assert!(digest_log(NodeId(1), 0, 0, &d_r, &Digest::EMPTY).is_err());
    }

    #[test]
    fn digest_log_binds_prev_digest() {
        let d_r = digest_command(ProposerId(1), 1, b"x");
        let p1 = sha256(b"p1");
        let p2 = sha256(b"p2");
        assert_ne!(
            digest_log(NodeId(1), 2, 5, &d_r, &p1).unwrap(),
            digest_log(NodeId(1), 2, 5, &d_r, &p2).unwrap()
        );
    }

    #[test]
    fn truncated_log_is_rejected() {
        let d_r = digest_command(ProposerId(1), 1, b"x");
        let o = PartialOrderLog::new(NodeId(2), 1, 7, d_r, Digest::EMPTY).unwrap();
        let bytes = encode_log(&o);
        assert_eq!(decode_log(&bytes).unwrap(), o);
        assert_eq!(decode_log(&bytes[..bytes.len() - 1]), Err(EncodingError::Truncated));
    }
}
