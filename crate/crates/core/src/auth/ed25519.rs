use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use sha2::{Digest as _, Sha256};

use super::{check_partials, signer_set_is_wellformed, AuthError, Authenticator, Certificate, PartialSignature};
use crate::types::{Cluster, Digest, NodeId};

const SIG_LEN: usize = 64;

/// Ed25519 signatures per node; a certificate is the concatenation of the
/// `2f+1` signatures in signer order.
///
/// Keys are derived deterministically from `seed`, which is only suitable
/// for simulation and tests.
#[derive(Debug, Clone)]
pub struct Ed25519Scheme {
    cluster: Cluster,
    signing: Vec<SigningKey>,
    verifying: Vec<VerifyingKey>,
}

impl Ed25519Scheme {
    pub fn new(cluster: Cluster, seed: u64) -> Self {
        let signing: Vec<SigningKey> = (0..cluster.n as u16)
            .map(|i| {
                let mut h = Sha256::new();
                h.update(b"phalanx/ed25519-key");
                h.update(seed.to_be_bytes());
                h.update(i.to_be_bytes());
                SigningKey::from_bytes(&h.finalize().into())
            })
            .collect();
        let verifying = signing.iter().map(SigningKey::verifying_key).collect();
        Ed25519Scheme {
            cluster,
            signing,
            verifying,
        }
    }

    fn verify_raw(&self, signer: NodeId, event: &Digest, sig: &[u8]) -> bool {
        let Some(vk) = self.verifying.get(signer.index()) else {
            return false;
        };
        let Ok(sig) = Signature::from_slice(sig) else {
            return false;
        };
        vk.verify(&event.0, &sig).is_ok()
    }
}

impl Authenticator for Ed25519Scheme {
    fn cluster(&self) -> Cluster {
        self.cluster
    }

    fn partial_sign(&self, signer: NodeId, event_digest: &Digest) -> PartialSignature {
        let sig = self
            .signing
            .get(signer.index())
            .map(|k| k.sign(&event_digest.0).to_bytes().to_vec())
            .unwrap_or_default();
        PartialSignature {
            signer,
            event_digest: *event_digest,
            sig,
        }
    }

    fn verify_partial(&self, ps: &PartialSignature) -> bool {
        self.verify_raw(ps.signer, &ps.event_digest, &ps.sig)
    }

    fn aggregate(&self, event_digest: &Digest, partials: &[PartialSignature]) -> Result<Certificate, AuthError> {
        let sorted = check_partials(self, event_digest, partials)?;
        let aggregate = sorted.iter().flat_map(|p| p.sig.iter().copied()).collect();
        Ok(Certificate {
            event_digest: *event_digest,
            signers: sorted.iter().map(|p| p.signer).collect(),
            aggregate,
        })
    }

    fn verify_certificate(&self, cert: &Certificate) -> bool {
        signer_set_is_wellformed(self.cluster, cert)
            && cert.aggregate.len() == SIG_LEN * cert.signers.len()
            && cert
                .signers
                .iter()
                .zip(cert.aggregate.chunks_exact(SIG_LEN))
                .all(|(s, sig)| self.verify_raw(*s, &cert.event_digest, sig))
    }
}
