//! Seeded cryptographic primitives. All key material is generated from
//! [`crate::rng::SimRng`] streams so a scenario seed pins every key in the
//! simulation. Secret types deliberately do not implement `Serialize`; the
//! key-isolation checks byte-scan serialized traffic for them.

pub mod blind;
pub mod commit;
pub mod password;
pub mod seal;
pub mod sign;

pub use blind::{BlindIssuerKey, BlindVerifierKey, BlindedRequest};
pub use commit::{commitment_root, leaf_commitment, Opening};
pub use password::{hash_password, verify_password, PasswordHash, PasswordParams};
pub use seal::{SealError, SealedBlob, SealedStore};
pub use sign::{Signature, SigningHandle, VerifyingKey};
