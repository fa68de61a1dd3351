use sha2::{Digest as _, Sha256};

use super::{check_partials, signer_set_is_wellformed, AuthError, Authenticator, Certificate, PartialSignature};
use crate::types::{Cluster, Digest, NodeId};

/// Keyed SHA-256 per node. The certificate aggregate binds the event digest
/// and every signer's tag, so verification recomputes each signer's tag.
#[derive(Debug, Clone)]
pub struct MacScheme {
    cluster: Cluster,
    keys: Vec<[u8; 32]>,
}

impl MacScheme {
    pub fn new(cluster: Cluster, seed: u64) -> Self {
        let keys = (0..cluster.n as u16)
            .map(|i| {
                let mut h = Sha256::new();
                h.update(b"phalanx/mac-key");
                h.update(seed.to_be_bytes());
                h.update(i.to_be_bytes());
                h.finalize().into()
            })
            .collect();
        MacScheme { cluster, keys }
    }

    fn tag(&self, signer: NodeId, event: &Digest) -> Option<[u8; 32]> {
        let key = self.keys.get(signer.index())?;
        let mut h = Sha256::new();
        h.update(key);
        h.update(event.0);
        Some(h.finalize().into())
    }

    fn combine<'a>(&self, event: &Digest, tags: impl Iterator<Item = (NodeId, &'a [u8])>) -> Vec<u8> {
        let mut h = Sha256::new();
        h.update(b"phalanx/mac-agg");
        h.update(event.0);
        for (signer, tag) in tags {
            h.update(signer.0.to_be_bytes());
            h.update(tag);
        }
        h.finalize().to_vec()
    }
}

impl Authenticator for MacScheme {
    fn cluster(&self) -> Cluster {
        self.cluster
    }

    fn partial_sign(&self, signer: NodeId, event_digest: &Digest) -> PartialSignature {
        let sig = self
            .tag(signer, event_digest)
            .map(|t| t.to_vec())
            .unwrap_or_default();
        PartialSignature {
            signer,
            event_digest: *event_digest,
            sig,
        }
    }

    fn verify_partial(&self, ps: &PartialSignature) -> bool {
        matches!(self.tag(ps.signer, &ps.event_digest), Some(t) if t[..] == ps.sig[..])
    }

    fn aggregate(&self, event_digest: &Digest, partials: &[PartialSignature]) -> Result<Certificate, AuthError> {
        let sorted = check_partials(self, event_digest, partials)?;
        let aggregate = self.combine(event_digest, sorted.iter().map(|p| (p.signer, p.sig.as_slice())));
        Ok(Certificate {
            event_digest: *event_digest,
            signers: sorted.iter().map(|p| p.signer).collect(),
            aggregate,
        })
    }

    fn verify_certificate(&self, cert: &Certificate) -> bool {
        if !signer_set_is_wellformed(self.cluster, cert) {
            return false;
        }
        let tags: Option<Vec<[u8; 32]>> = cert
            .signers
            .iter()
            .map(|s| self.tag(*s, &cert.event_digest))
            .collect();
        let Some(tags) = tags else { return false };
        let expected = self.combine(
            &cert.event_digest,
            cert.signers.iter().copied().zip(tags.iter().map(|t| t.as_slice())),
        );
        expected == cert.aggregate
    }
}
