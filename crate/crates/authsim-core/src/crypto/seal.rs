//! Sealed credential storage modeling the TEE: authenticated encryption with
//! a device-local key that never leaves the store object. Tampered blobs fail
//! decryption; adversaries read the contents only with the hardware-attack
//! capability, which hands them the seal key outright.

use chacha20poly1305::aead::Aead;
use chacha20poly1305::{ChaCha20Poly1305, KeyInit, Nonce};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::rng::SimRng;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SealError {
    #[error("no sealed entry with id {0:?}")]
    NotFound(String),
    #[error("authenticated decryption failed (tampered or foreign blob)")]
    IntegrityError,
}

/// One encrypted entry. Only ciphertext and nonce are serializable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedBlob {
    pub nonce: String,
    pub ciphertext: String,
}

/// Keyed blob store. The seal key is generated at device creation and is not
/// part of any serialized export.
pub struct SealedStore {
    key: [u8; 32],
    nonce_counter: u64,
    entries: BTreeMap<String, SealedBlob>,
}

impl std::fmt::Debug for SealedStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SealedStore")
            .field("entries", &self.entries.len())
            .finish()
    }
}

impl SealedStore {
    pub fn new(rng: &mut SimRng) -> SealedStore {
        SealedStore {
            key: rng.bytes32(),
            nonce_counter: 0,
            entries: BTreeMap::new(),
        }
    }

    pub fn seal(&mut self, id: &str, plaintext: &[u8]) {
        let cipher = ChaCha20Poly1305::new((&self.key).into());
        let mut nonce_bytes = [0u8; 12];
        nonce_bytes[..8].copy_from_slice(&self.nonce_counter.to_le_bytes());
        self.nonce_counter += 1;
        let nonce = Nonce::from_slice(&nonce_bytes);
        let ciphertext = cipher.encrypt(nonce, plaintext).expect("aead encrypt");
        self.entries.insert(
            id.to_string(),
            SealedBlob {
                nonce: crate::util::b64(&nonce_bytes),
                ciphertext: crate::util::b64(&ciphertext),
            },
        );
    }

    pub fn unseal(&self, id: &str) -> Result<Vec<u8>, SealError> {
        let blob = self
            .entries
            .get(id)
            .ok_or_else(|| SealError::NotFound(id.to_string()))?;
        self.open_blob(blob)
    }

    pub fn open_blob(&self, blob: &SealedBlob) -> Result<Vec<u8>, SealError> {
        let cipher = ChaCha20Poly1305::new((&self.key).into());
        let nonce_bytes =
            crate::util::b64_decode(&blob.nonce).ok_or(SealError::IntegrityError)?;
        let ciphertext =
            crate::util::b64_decode(&blob.ciphertext).ok_or(SealError::IntegrityError)?;
        if nonce_bytes.len() != 12 {
            return Err(SealError::IntegrityError);
        }
        cipher
            .decrypt(Nonce::from_slice(&nonce_bytes), ciphertext.as_ref())
            .map_err(|_| SealError::IntegrityError)
    }

    pub fn remove(&mut self, id: &str) -> Option<SealedBlob> {
        self.entries.remove(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    /// The ciphertext view an attacker without the seal key gets.
    pub fn export_blobs(&self) -> BTreeMap<String, SealedBlob> {
        self.entries.clone()
    }

    /// Hardware-attack tier: reads everything including the seal key.
    pub fn hardware_extract_key(&self) -> [u8; 32] {
        self.key
    }

    /// Seal/unseal against an externally supplied key (credential backups,
    /// where the key derives from the user's backup password).
    pub fn seal_with_key(key: &[u8; 32], nonce_seed: u64, plaintext: &[u8]) -> SealedBlob {
        let cipher = ChaCha20Poly1305::new(key.into());
        let mut nonce_bytes = [0u8; 12];
        nonce_bytes[..8].copy_from_slice(&nonce_seed.to_le_bytes());
        nonce_bytes[8..].copy_from_slice(b"bkup");
        let ciphertext = cipher
            .encrypt(Nonce::from_slice(&nonce_bytes), plaintext)
            .expect("aead encrypt");
        SealedBlob {
            nonce: crate::util::b64(&nonce_bytes),
            ciphertext: crate::util::b64(&ciphertext),
        }
    }

    pub fn open_with_key(key: &[u8; 32], blob: &SealedBlob) -> Result<Vec<u8>, SealError> {
        let cipher = ChaCha20Poly1305::new(key.into());
        let nonce_bytes =
            crate::util::b64_decode(&blob.nonce).ok_or(SealError::IntegrityError)?;
        let ciphertext =
            crate::util::b64_decode(&blob.ciphertext).ok_or(SealError::IntegrityError)?;
        if nonce_bytes.len() != 12 {
            return Err(SealError::IntegrityError);
        }
        cipher
            .decrypt(Nonce::from_slice(&nonce_bytes), ciphertext.as_ref())
            .map_err(|_| SealError::IntegrityError)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seal_unseal_roundtrip() {
        let mut rng = SimRng::from_seed_u64(1);
        let mut store = SealedStore::new(&mut rng);
        store.seal("cred-1", b"private key material");
        assert_eq!(store.unseal("cred-1").unwrap(), b"private key material");
    }

    #[test]
    fn unknown_id_not_found() {
        let mut rng = SimRng::from_seed_u64(1);
        let store = SealedStore::new(&mut rng);
        assert_eq!(
            store.unseal("missing"),
            Err(SealError::NotFound("missing".into()))
        );
    }

    #[test]
    fn bit_flip_fails_integrity() {
        let mut rng = SimRng::from_seed_u64(1);
        let mut store = SealedStore::new(&mut rng);
        store.seal("x", b"payload");
        let mut blobs = store.export_blobs();
        let blob = blobs.get_mut("x").unwrap();
        let mut ct = crate::util::b64_decode(&blob.ciphertext).unwrap();
        ct[0] ^= 0x01;
        blob.ciphertext = crate::util::b64(&ct);
        assert_eq!(store.open_blob(blob), Err(SealError::IntegrityError));
    }

    #[test]
    fn ciphertext_hides_plaintext() {
        let mut rng = SimRng::from_seed_u64(1);
        let mut store = SealedStore::new(&mut rng);
        let secret = b"very-secret-credential-bytes";
        store.seal("x", secret);
        let exported = serde_json::to_vec(&store.export_blobs()).unwrap();
        assert!(!crate::util::contains_encoding(&exported, secret));
    }

    #[test]
    fn external_key_roundtrip_and_wrong_key() {
        let mut rng = SimRng::from_seed_u64(2);
        let key = rng.bytes32();
        let other = rng.bytes32();
        let blob = SealedStore::seal_with_key(&key, 0, b"backup body");
        assert_eq!(
            SealedStore::open_with_key(&key, &blob).unwrap(),
            b"backup body"
        );
        assert_eq!(
            SealedStore::open_with_key(&other, &blob),
            Err(SealError::IntegrityError)
        );
    }
}
