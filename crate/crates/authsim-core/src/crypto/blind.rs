//! RSA blind signatures for credential issuance.
//!
//! The issuer signs a full-domain hash of the credential body without seeing
//! it: the requester multiplies the digest by `r^e`, the issuer exponentiates
//! with `d` (CRT form, issuance happens in bulk), and the requester strips
//! `r`. The issuer's transcript therefore contains only blinded group
//! elements, which is what the untraceability experiment checks.

use num_bigint_dig::traits::ModInverse;
use rsa::traits::{PrivateKeyParts, PublicKeyParts};
use rsa::{BigUint, RsaPrivateKey};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha512};

use crate::rng::SimRng;

/// Issuer-side key. Not serializable; the private exponent stays inside the
/// issuer actor.
#[derive(Clone)]
pub struct BlindIssuerKey {
    n: BigUint,
    e: BigUint,
    p: BigUint,
    q: BigUint,
    dp: BigUint,
    dq: BigUint,
    qinv: BigUint,
}

impl std::fmt::Debug for BlindIssuerKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("BlindIssuerKey(..)")
    }
}

/// Public half, serializable for distribution to verifiers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlindVerifierKey {
    pub n: String,
    pub e: String,
}

/// What the issuer sees during issuance: an opaque group element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlindedRequest(pub String);

/// Requester-side state needed to unblind the issuer's response.
pub struct Unblinder {
    r_inv: BigUint,
}

impl BlindIssuerKey {
    pub fn generate(rng: &mut SimRng, bits: usize) -> BlindIssuerKey {
        let key = RsaPrivateKey::new(rng, bits).expect("rsa keygen");
        let n = key.n().clone();
        let e = key.e().clone();
        let d = key.d().clone();
        let primes = key.primes();
        let (p, q) = (primes[0].clone(), primes[1].clone());
        let one = BigUint::from(1u32);
        let dp = &d % (&p - &one);
        let dq = &d % (&q - &one);
        let qinv = q
            .clone()
            .mod_inverse(&p)
            .and_then(|i| i.to_biguint())
            .expect("q invertible mod p");
        BlindIssuerKey { n, e, p, q, dp, dq, qinv }
    }

    pub fn verifier_key(&self) -> BlindVerifierKey {
        BlindVerifierKey {
            n: crate::util::b64(&self.n.to_bytes_be()),
            e: crate::util::b64(&self.e.to_bytes_be()),
        }
    }

    /// Sign a blinded element. CRT keeps bulk issuance affordable.
    pub fn sign_blinded(&self, request: &BlindedRequest) -> Option<String> {
        let m = decode_uint(&request.0)?;
        if m >= self.n {
            return None;
        }
        let m1 = m.modpow(&self.dp, &self.p);
        let m2 = m.modpow(&self.dq, &self.q);
        let h = ((&m1 + &self.p - (&m2 % &self.p)) * &self.qinv) % &self.p;
        let s = &m2 + &self.q * h;
        Some(crate::util::b64(&s.to_bytes_be()))
    }
}

impl BlindVerifierKey {
    fn parts(&self) -> Option<(BigUint, BigUint)> {
        Some((decode_uint(&self.n)?, decode_uint(&self.e)?))
    }

    /// Blind `message` for issuance. Returns the element to send to the
    /// issuer plus the unblinder kept by the requester.
    pub fn blind(&self, message: &[u8], rng: &mut SimRng) -> Option<(BlindedRequest, Unblinder)> {
        let (n, e) = self.parts()?;
        let digest = full_domain_hash(message, &n);
        loop {
            let r = random_below(rng, &n);
            if r <= BigUint::from(1u32) {
                continue;
            }
            let Some(r_inv) = r.clone().mod_inverse(&n).and_then(|i| i.to_biguint()) else {
                continue;
            };
            let blinded = (&digest * r.modpow(&e, &n)) % &n;
            return Some((
                BlindedRequest(crate::util::b64(&blinded.to_bytes_be())),
                Unblinder { r_inv },
            ));
        }
    }

    pub fn unblind(&self, blind_signature: &str, unblinder: &Unblinder) -> Option<String> {
        let (n, _) = self.parts()?;
        let s = decode_uint(blind_signature)?;
        let sig = (s * &unblinder.r_inv) % &n;
        Some(crate::util::b64(&sig.to_bytes_be()))
    }

    pub fn verify(&self, message: &[u8], signature: &str) -> bool {
        let Some((n, e)) = self.parts() else {
            return false;
        };
        let Some(sig) = decode_uint(signature) else {
            return false;
        };
        if sig >= n {
            return false;
        }
        sig.modpow(&e, &n) == full_domain_hash(message, &n)
    }
}

fn decode_uint(b64: &str) -> Option<BigUint> {
    crate::util::b64_decode(b64).map(|b| BigUint::from_bytes_be(&b))
}

/// Deterministic full-domain hash into Z_n: SHA-512 counter expansion to the
/// modulus width, retried until the value lands below n.
fn full_domain_hash(message: &[u8], n: &BigUint) -> BigUint {
    let byte_len = (n.bits() + 7) / 8;
    for attempt in 0u32.. {
        let mut out = Vec::with_capacity(byte_len);
        let mut counter = 0u32;
        while out.len() < byte_len {
            let mut h = Sha512::new();
            h.update(b"authsim.fdh");
            h.update(attempt.to_be_bytes());
            h.update(counter.to_be_bytes());
            h.update(message);
            out.extend_from_slice(&h.finalize());
            counter += 1;
        }
        out.truncate(byte_len);
        out[0] &= 0x7F; // keep below the modulus width
        let candidate = BigUint::from_bytes_be(&out);
        if &candidate < n && candidate > BigUint::from(0u32) {
            return candidate;
        }
    }
    unreachable!("fdh retries exhausted")
}

fn random_below(rng: &mut SimRng, n: &BigUint) -> BigUint {
    let byte_len = (n.bits() + 7) / 8;
    let mut bytes = vec![0u8; byte_len];
    loop {
        rand::RngCore::fill_bytes(rng, &mut bytes);
        bytes[0] &= 0x7F;
        let candidate = BigUint::from_bytes_be(&bytes);
        if &candidate < n {
            return candidate;
        }
    }
}
