//! Salted binding commitments for selective disclosure. Each attribute gets
//! its own leaf commitment; the credential signs the root over all leaves.
//! Disclosing an attribute means revealing its (value, salt) opening, which
//! the verifier checks against the signed leaf.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::rng::SimRng;

/// Opening for one disclosed attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Opening {
    pub name: String,
    pub value: String,
    pub salt: String,
}

/// Leaf commitment: H(name, value, salt) with domain separation.
pub fn leaf_commitment(name: &str, value: &str, salt: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(b"authsim.commit.leaf");
    h.update((name.len() as u64).to_be_bytes());
    h.update(name.as_bytes());
    h.update((value.len() as u64).to_be_bytes());
    h.update(value.as_bytes());
    h.update(salt);
    crate::util::b64(&h.finalize())
}

/// Root commitment over leaves sorted by attribute name.
pub fn commitment_root(leaves: &[(String, String)]) -> String {
    let mut sorted: Vec<&(String, String)> = leaves.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut h = Sha256::new();
    h.update(b"authsim.commit.root");
    for (name, leaf) in sorted {
        h.update((name.len() as u64).to_be_bytes());
        h.update(name.as_bytes());
        h.update(leaf.as_bytes());
    }
    crate::util::b64(&h.finalize())
}

pub fn fresh_salt(rng: &mut SimRng) -> Vec<u8> {
    rng.bytes32().to_vec()
}

impl Opening {
    pub fn matches_leaf(&self, leaf: &str) -> bool {
        match crate::util::b64_decode(&self.salt) {
            Some(salt) => leaf_commitment(&self.name, &self.value, &salt) == leaf,
            None => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn opening_matches_its_leaf() {
        let mut rng = SimRng::from_seed_u64(1);
        let salt = fresh_salt(&mut rng);
        let leaf = leaf_commitment("age", "33", &salt);
        let opening = Opening {
            name: "age".into(),
            value: "33".into(),
            salt: crate::util::b64(&salt),
        };
        assert!(opening.matches_leaf(&leaf));
    }

    #[test]
    fn flipped_value_fails() {
        let mut rng = SimRng::from_seed_u64(1);
        let salt = fresh_salt(&mut rng);
        let leaf = leaf_commitment("age", "33", &salt);
        let opening = Opening {
            name: "age".into(),
            value: "34".into(),
            salt: crate::util::b64(&salt),
        };
        assert!(!opening.matches_leaf(&leaf));
    }

    #[test]
    fn root_is_order_independent() {
        let a = commitment_root(&[("b".into(), "leafb".into()), ("a".into(), "leafa".into())]);
        let b = commitment_root(&[("a".into(), "leafa".into()), ("b".into(), "leafb".into())]);
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_salts_hide_equal_values() {
        let mut rng = SimRng::from_seed_u64(2);
        let l1 = leaf_commitment("over18", "true", &fresh_salt(&mut rng));
        let l2 = leaf_commitment("over18", "true", &fresh_salt(&mut rng));
        assert_ne!(l1, l2);
    }
}
