//! Schnorr-family signatures (Ed25519) for device assertions and token
//! signing. Small keys and cheap verification keep the load harness honest.

use ed25519_dalek::{Signer, Verifier};
use serde::{Deserialize, Serialize};

use crate::rng::SimRng;

/// A signing key handle. Intentionally not serializable: private keys must
/// never appear in emitted messages or state exports.
#[derive(Clone)]
pub struct SigningHandle {
    key: ed25519_dalek::SigningKey,
}

impl std::fmt::Debug for SigningHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SigningHandle(..)")
    }
}

/// Public verification key, base64 on the wire.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VerifyingKey(pub String);

/// Detached signature, base64 on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Signature(pub String);

impl SigningHandle {
    pub fn generate(rng: &mut SimRng) -> SigningHandle {
        SigningHandle {
            key: ed25519_dalek::SigningKey::from_bytes(&rng.bytes32()),
        }
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        VerifyingKey(crate::util::b64(self.key.verifying_key().as_bytes()))
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(crate::util::b64(&self.key.sign(message).to_bytes()))
    }

    /// Raw secret bytes, exposed only for leak scans and the hardware-attack
    /// adversary tier.
    pub fn secret_bytes(&self) -> [u8; 32] {
        self.key.to_bytes()
    }

    pub fn from_secret_bytes(bytes: [u8; 32]) -> SigningHandle {
        SigningHandle {
            key: ed25519_dalek::SigningKey::from_bytes(&bytes),
        }
    }
}

impl VerifyingKey {
    pub fn verify(&self, message: &[u8], signature: &Signature) -> bool {
        let Some(key_bytes) = crate::util::b64_decode(&self.0) else {
            return false;
        };
        let Ok(key_arr): Result<[u8; 32], _> = key_bytes.try_into() else {
            return false;
        };
        let Ok(key) = ed25519_dalek::VerifyingKey::from_bytes(&key_arr) else {
            return false;
        };
        let Some(sig_bytes) = crate::util::b64_decode(&signature.0) else {
            return false;
        };
        let Ok(sig_arr): Result<[u8; 64], _> = sig_bytes.try_into() else {
            return false;
        };
        key.verify(message, &ed25519_dalek::Signature::from_bytes(&sig_arr))
            .is_ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_verify_roundtrip() {
        let mut rng = SimRng::from_seed_u64(1);
        let sk = SigningHandle::generate(&mut rng);
        let vk = sk.verifying_key();
        let sig = sk.sign(b"challenge|origin|1");
        assert!(vk.verify(b"challenge|origin|1", &sig));
        assert!(!vk.verify(b"challenge|origin|2", &sig));
    }

    #[test]
    fn deterministic_keys_from_seed() {
        let mut a = SimRng::from_seed_u64(5);
        let mut b = SimRng::from_seed_u64(5);
        assert_eq!(
            SigningHandle::generate(&mut a).verifying_key(),
            SigningHandle::generate(&mut b).verifying_key()
        );
    }

    #[test]
    fn tampered_signature_rejected() {
        let mut rng = SimRng::from_seed_u64(2);
        let sk = SigningHandle::generate(&mut rng);
        let vk = sk.verifying_key();
        let sig = sk.sign(b"msg");
        let mut raw = crate::util::b64_decode(&sig.0).unwrap();
        raw[3] ^= 0x40;
        let bad = Signature(crate::util::b64(&raw));
        assert!(!vk.verify(b"msg", &bad));
    }
}
