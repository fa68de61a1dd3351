//! Quorum authenticators: partial signatures and `2f+1` certificates.
//!
//! The ordering protocol only depends on the quorum semantics, so the
//! scheme sits behind [`Authenticator`]. [`MacScheme`] is a fast keyed-hash
//! scheme with explicit signer accounting, used by the simulator.
//! [`Ed25519Scheme`] issues real signatures and certifies with a
//! multi-signature over the same event digest.

mod ed25519;
mod mac;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Cluster, Digest, NodeId};

pub use ed25519::Ed25519Scheme;
pub use mac::MacScheme;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialSignature {
    pub signer: NodeId,
    pub event_digest: Digest,
    pub sig: Vec<u8>,
}

/// Aggregate of exactly `2f+1` partial signatures over one event digest.
///
/// `signers` is kept in strictly ascending order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub event_digest: Digest,
    pub signers: Vec<NodeId>,
    pub aggregate: Vec<u8>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AuthError {
    #[error("need exactly {needed} partial signatures, got {got}")]
    WrongCount { needed: usize, got: usize },
    #[error("duplicate partial signature from {0}")]
    DuplicateSigner(NodeId),
    #[error("partial signature from {0} is over a different digest")]
    MixedDigest(NodeId),
    #[error("partial signature from {0} does not verify")]
    InvalidPartial(NodeId),
}

pub trait Authenticator: Send + Sync {
    fn cluster(&self) -> Cluster;

    fn partial_sign(&self, signer: NodeId, event_digest: &Digest) -> PartialSignature;

    fn verify_partial(&self, ps: &PartialSignature) -> bool;

    /// Combines `2f+1` valid partials from distinct signers over `event_digest`.
    fn aggregate(&self, event_digest: &Digest, partials: &[PartialSignature]) -> Result<Certificate, AuthError>;

    fn verify_certificate(&self, cert: &Certificate) -> bool;
}

/// Shared admission checks for [`Authenticator::aggregate`]. Returns the
/// partials sorted by signer.
fn check_partials<'a, A: Authenticator + ?Sized>(
    scheme: &A,
    event_digest: &Digest,
    partials: &'a [PartialSignature],
) -> Result<Vec<&'a PartialSignature>, AuthError> {
    let needed = scheme.cluster().quorum();
    if partials.len() != needed {
        return Err(AuthError::WrongCount {
            needed,
            got: partials.len(),
        });
    }
    let mut sorted: Vec<&PartialSignature> = partials.iter().collect();
    sorted.sort_by_key(|p| p.signer);
    for w in sorted.windows(2) {
        if w[0].signer == w[1].signer {
            return Err(AuthError::DuplicateSigner(w[0].signer));
        }
    }
    for p in &sorted {
        if p.event_digest != *event_digest {
            return Err(AuthError::MixedDigest(p.signer));
        }
        if !scheme.verify_partial(p) {
            return Err(AuthError::InvalidPartial(p.signer));
        }
    }
    Ok(sorted)
}

/// Structural certificate checks common to every scheme.
fn signer_set_is_wellformed(cluster: Cluster, cert: &Certificate) -> bool {
    cert.signers.len() == cluster.quorum()
        && cert.signers.windows(2).all(|w| w[0] < w[1])
        && cert.signers.iter().all(|s| s.index() < cluster.n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::sha256;

    fn schemes() -> Vec<Box<dyn Authenticator>> {
        let c = Cluster::new(4).unwrap();
        vec![Box::new(MacScheme::new(c, 7)), Box::new(Ed25519Scheme::new(c, 7))]
    }

    #[test]
    fn quorum_of_partials_certifies() {
        let d = sha256(b"event");
        for s in schemes() {
            let parts: Vec<_> = [1, 2, 3].iter().map(|&i| s.partial_sign(NodeId(i), &d)).collect();
            assert!(parts.iter().all(|p| s.verify_partial(p)));
            let cert = s.aggregate(&d, &parts).unwrap();
            assert_eq!(cert.signers, vec![NodeId(1), NodeId(2), NodeId(3)]);
            assert!(s.verify_certificate(&cert));
        }
    }

    #[test]
    fn aggregation_failures() {
        let d = sha256(b"event");
        let other = sha256(b"other");
        for s in schemes() {
            let p = |i: u16, d: &Digest| s.partial_sign(NodeId(i), d);
            assert_eq!(
                s.aggregate(&d, &[p(1, &d), p(2, &d)]),
                Err(AuthError::WrongCount { needed: 3, got: 2 })
            );
            assert_eq!(
                s.aggregate(&d, &[p(1, &d), p(2, &d), p(2, &d)]),
                Err(AuthError::DuplicateSigner(NodeId(2)))
            );
            assert_eq!(
                s.aggregate(&d, &[p(1, &d), p(2, &d), p(3, &other)]),
                Err(AuthError::MixedDigest(NodeId(3)))
            );
            let mut forged = p(3, &d);
            forged.sig[0] ^= 1;
            assert!(!s.verify_partial(&forged));
            assert_eq!(
                s.aggregate(&d, &[p(1, &d), p(2, &d), forged]),
                Err(AuthError::InvalidPartial(NodeId(3)))
            );
        }
    }

    #[test]
    fn tampered_certificates_fail() {
        let d = sha256(b"event");
        for s in schemes() {
            let parts: Vec<_> = [0, 1, 3].iter().map(|&i| s.partial_sign(NodeId(i), &d)).collect();
            let cert = s.aggregate(&d, &parts).unwrap();

            for byte in 0..cert.aggregate.len() {
                let mut bad = cert.clone();
                bad.aggregate[byte] ^= 0x01;
                assert!(!s.verify_certificate(&bad), "flipped aggregate byte {byte}");
            }
            let mut bad = cert.clone();
            bad.event_digest = sha256(b"other");
            assert!(!s.verify_certificate(&bad));

            let mut bad = cert.clone();
            bad.signers[2] = NodeId(2);
            assert!(!s.verify_certificate(&bad));

            let mut short = cert.clone();
            short.signers.pop();
            assert!(!s.verify_certificate(&short));
        }
    }

    #[test]
    fn keys_differ_per_node_and_seed() {
        let c = Cluster::new(4).unwrap();
        let d = sha256(b"e");
        let a = MacScheme::new(c, 1);
        let b = MacScheme::new(c, 2);
        assert_ne!(a.partial_sign(NodeId(0), &d).sig, a.partial_sign(NodeId(1), &d).sig);
        assert_ne!(a.partial_sign(NodeId(0), &d).sig, b.partial_sign(NodeId(0), &d).sig);
        assert!(!b.verify_partial(&a.partial_sign(NodeId(0), &d)));
    }
}
