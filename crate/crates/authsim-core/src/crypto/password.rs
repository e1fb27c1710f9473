//! Memory-hard password hashing (scrypt). Cost parameters are per-context:
//! backup passwords at the IDC use a heavier setting than the benchmark's
//! plain-password baseline, which is tuned to desk scale.

use serde::{Deserialize, Serialize};

use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PasswordParams {
    pub log_n: u8,
    pub r: u32,
    pub p: u32,
}

impl PasswordParams {
    /// Backup-password storage at the IDC.
    pub const STORAGE: PasswordParams = PasswordParams { log_n: 10, r: 8, p: 1 };
    /// The vanilla-password benchmark baseline; deliberately light so the
    /// baseline stays the cheapest flow.
    pub const BASELINE: PasswordParams = PasswordParams { log_n: 4, r: 4, p: 1 };

    fn scrypt_params(&self) -> scrypt::Params {
        scrypt::Params::new(self.log_n, self.r, self.p, 32).expect("valid scrypt params")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PasswordHash {
    pub salt: String,
    pub hash: String,
    pub params: PasswordParams,
}

pub fn hash_password(password: &str, params: PasswordParams, rng: &mut SimRng) -> PasswordHash {
    let salt = rng.bytes32();
    let mut out = [0u8; 32];
    scrypt::scrypt(
        password.as_bytes(),
        &salt,
        &params.scrypt_params(),
        &mut out,
    )
    .expect("scrypt");
    PasswordHash {
        salt: crate::util::b64(&salt),
        hash: crate::util::b64(&out),
        params,
    }
}

pub fn verify_password(password: &str, stored: &PasswordHash) -> bool {
    let Some(salt) = crate::util::b64_decode(&stored.salt) else {
        return false;
    };
    let mut out = [0u8; 32];
    if scrypt::scrypt(
        password.as_bytes(),
        &salt,
        &stored.params.scrypt_params(),
        &mut out,
    )
    .is_err()
    {
        return false;
    }
    crate::util::b64(&out) == stored.hash
}

/// Derive a 32-byte sealing key from a password (credential backups).
pub fn derive_key(password: &str, context: &str) -> [u8; 32] {
    let mut out = [0u8; 32];
    scrypt::scrypt(
        password.as_bytes(),
        format!("authsim.kdf.{context}").as_bytes(),
        &PasswordParams::STORAGE.scrypt_params(),
        &mut out,
    )
    .expect("scrypt");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verify_accepts_correct_rejects_wrong() {
        let mut rng = SimRng::from_seed_u64(1);
        let stored = hash_password("correct horse battery", PasswordParams::STORAGE, &mut rng);
        assert!(verify_password("correct horse battery", &stored));
        assert!(!verify_password("wrong", &stored));
    }

    #[test]
    fn distinct_salts_distinct_hashes() {
        let mut rng = SimRng::from_seed_u64(1);
        let a = hash_password("pw", PasswordParams::BASELINE, &mut rng);
        let b = hash_password("pw", PasswordParams::BASELINE, &mut rng);
        assert_ne!(a.hash, b.hash);
    }

    #[test]
    fn derived_keys_depend_on_context() {
        assert_ne!(derive_key("pw", "a"), derive_key("pw", "b"));
        assert_eq!(derive_key("pw", "a"), derive_key("pw", "a"));
    }
}
