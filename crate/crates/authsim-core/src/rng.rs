//! Seeded randomness. Every random value in the harness — keys, nonces,
//! pseudonyms, behavioral samples — comes from a [`SimRng`] derived from the
//! scenario seed, which is what makes runs reproducible across machines.

use rand::{CryptoRng, Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Deterministic RNG handle. Forking with a label yields an independent
/// stream, so concurrent flows can each own a generator whose output does not
/// depend on scheduling order.
#[derive(Debug, Clone)]
pub struct SimRng {
    inner: ChaCha20Rng,
    seed: [u8; 32],
}

impl SimRng {
    pub fn from_seed_u64(seed: u64) -> SimRng {
        let mut h = Sha256::new();
        h.update(b"authsim.rng.root");
        h.update(seed.to_le_bytes());
        Self::from_seed_bytes(h.finalize().into())
    }

    pub fn from_seed_bytes(seed: [u8; 32]) -> SimRng {
        SimRng {
            inner: ChaCha20Rng::from_seed(seed),
            seed,
        }
    }

    /// Derive an independent stream keyed by `label`. The child depends only
    /// on the parent's original seed and the label, not on how much the
    /// parent has been consumed.
    pub fn fork(&self, label: &str) -> SimRng {
        let mut h = Sha256::new();
        h.update(b"authsim.rng.fork");
        h.update(self.seed);
        h.update(label.as_bytes());
        Self::from_seed_bytes(h.finalize().into())
    }

    /// Derive an independent stream keyed by an index (per-flow, per-trial).
    pub fn fork_indexed(&self, label: &str, index: u64) -> SimRng {
        self.fork(&format!("{label}#{index}"))
    }

    /// 128-bit random identifier, lowercase hex.
    pub fn id128(&mut self) -> String {
        let mut bytes = [0u8; 16];
        self.inner.fill_bytes(&mut bytes);
        hex::encode(bytes)
    }

    /// Fresh 32-byte value (key seeds and the like).
    pub fn bytes32(&mut self) -> [u8; 32] {
        let mut bytes = [0u8; 32];
        self.inner.fill_bytes(&mut bytes);
        bytes
    }

    /// `digits`-digit numeric code, zero-padded (SMS OTPs).
    pub fn numeric_code(&mut self, digits: u32) -> String {
        let modulus = 10u64.pow(digits);
        format!("{:0width$}", self.inner.gen_range(0..modulus), width = digits as usize)
    }
}

impl RngCore for SimRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

impl CryptoRng for SimRng {}
