//! The simulated user device: biometric-gated FIDO-style authenticator with
//! sealed credential storage, multi-key support, and behavioral signal
//! emission. Private keys live only inside the sealed store; every signing
//! operation unseals on demand, and nothing secret is part of any serialized
//! export or outbound message.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::crypto::{SealedBlob, SealedStore, Signature, SigningHandle, VerifyingKey};
use crate::identity::PrincipalId;
use crate::rng::SimRng;
use crate::time::SimTime;

pub type DeviceId = String;

pub const GATE_UNLOCK_WINDOW_SECS: u64 = 60;
pub const GATE_LOCKOUT_THRESHOLD: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeeGrade {
    Software,
    Tee,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateState {
    Locked,
    Unlocked { until: SimTime },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiometricSample {
    Match,
    NoMatch,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DeviceError {
    #[error("biometric gate is locked")]
    GateLocked,
    #[error("gate locked out after {GATE_LOCKOUT_THRESHOLD} consecutive biometric failures")]
    GateLockout,
    #[error("no credential for relying party {rp:?} account {account:?}")]
    NoCredential { rp: String, account: String },
    #[error("sealed store: {0}")]
    Seal(#[from] crate::crypto::SealError),
}

/// Registration message sent to the relying party when a key is enrolled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyRegistration {
    pub credential_id: String,
    pub relying_party: PrincipalId,
    pub account: PrincipalId,
    pub public_key: VerifyingKey,
    pub challenge: String,
    pub signature: Signature,
    pub tee_grade: TeeGrade,
}

/// A signed authentication assertion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assertion {
    pub credential_id: String,
    pub relying_party: PrincipalId,
    pub challenge: String,
    /// Origin of the session the assertion answers (channel binding).
    pub channel_binding: String,
    pub counter: u64,
    pub signature: Signature,
}

/// Bytes covered by registration and assertion signatures.
#[derive(Serialize)]
struct AssertionPayload<'a> {
    credential_id: &'a str,
    relying_party: &'a str,
    challenge: &'a str,
    channel_binding: &'a str,
    counter: u64,
}

pub fn assertion_signing_bytes(
    credential_id: &str,
    relying_party: &str,
    challenge: &str,
    channel_binding: &str,
    counter: u64,
) -> Vec<u8> {
    crate::util::canonical_json(&AssertionPayload {
        credential_id,
        relying_party,
        challenge,
        channel_binding,
        counter,
    })
}

/// Public bookkeeping for one enrolled key; the private half sits in the
/// sealed store under the credential id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeyEntry {
    pub credential_id: String,
    pub public_key: VerifyingKey,
    pub counter: u64,
}

/// One behavioral measurement vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehavioralRecord {
    pub device_id: DeviceId,
    pub captured_at: SimTime,
    pub features: Vec<f64>,
}

/// Per-feature Gaussian generator declared in the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorGenerator {
    pub means: Vec<f64>,
    pub std_devs: Vec<f64>,
}

impl BehaviorGenerator {
    pub fn dimension(&self) -> usize {
        self.means.len()
    }

    /// The scenario fixture: owner profile, or an impostor shifted by
    /// `shift_sigmas` standard deviations on every feature.
    pub fn fixture(dimension: usize, shift_sigmas: f64) -> BehaviorGenerator {
        BehaviorGenerator {
            means: (0..dimension)
                .map(|i| 10.0 + i as f64 + shift_sigmas * 2.0)
                .collect(),
            std_devs: vec![2.0; dimension],
        }
    }

    pub fn sample(&self, rng: &mut SimRng) -> Vec<f64> {
        use rand::Rng;
        self.means
            .iter()
            .zip(&self.std_devs)
            .map(|(&m, &sd)| {
                let dist = rand_distr::Normal::new(m, sd).expect("valid normal");
                rng.sample(dist)
            })
            .collect()
    }
}

/// The device actor's state.
pub struct DeviceState {
    pub device_id: DeviceId,
    pub owner: PrincipalId,
    pub gate: GateState,
    pub tee_grade: TeeGrade,
    /// Harness flag set by the steal-device adversary action.
    pub stolen: bool,
    sealed_store: SealedStore,
    keys: BTreeMap<(PrincipalId, PrincipalId), KeyEntry>,
    consecutive_gate_failures: u32,
    gate_locked_out: bool,
}

impl std::fmt::Debug for DeviceState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DeviceState")
            .field("device_id", &self.device_id)
            .field("owner", &self.owner)
            .field("gate", &self.gate)
            .field("keys", &self.keys.len())
            .finish()
    }
}

/// Everything a device will ever serialize (checkpoints, adversary reads of
/// the normal world). Secrets are structurally absent.
#[derive(Debug, Clone, Serialize)]
pub struct DeviceExport {
    pub device_id: DeviceId,
    pub owner: PrincipalId,
    pub gate: GateState,
    pub tee_grade: TeeGrade,
    pub keys: Vec<KeyEntry>,
    pub sealed_entries: BTreeMap<String, SealedBlob>,
}

impl DeviceState {
    pub fn new(
        device_id: impl Into<String>,
        owner: impl Into<String>,
        tee_grade: TeeGrade,
        rng: &mut SimRng,
    ) -> DeviceState {
        DeviceState {
            device_id: device_id.into(),
            owner: owner.into(),
            gate: GateState::Locked,
            tee_grade,
            stolen: false,
            sealed_store: SealedStore::new(rng),
            keys: BTreeMap::new(),
            consecutive_gate_failures: 0,
            gate_locked_out: false,
        }
    }

    pub fn gate_unlocked(&self, now: SimTime) -> bool {
        matches!(self.gate, GateState::Unlocked { until } if now < until)
    }

    /// Present a biometric sample to the gate.
    pub fn unlock_gate(
        &mut self,
        sample: BiometricSample,
        now: SimTime,
    ) -> Result<GateState, DeviceError> {
        if self.gate_locked_out {
            return Err(DeviceError::GateLockout);
        }
        match sample {
            BiometricSample::Match => {
                self.consecutive_gate_failures = 0;
                self.gate = GateState::Unlocked {
                    until: now.plus_secs(GATE_UNLOCK_WINDOW_SECS),
                };
                Ok(self.gate)
            }
            BiometricSample::NoMatch => {
                self.consecutive_gate_failures += 1;
                if self.consecutive_gate_failures >= GATE_LOCKOUT_THRESHOLD {
                    self.gate_locked_out = true;
                    self.gate = GateState::Locked;
                    return Err(DeviceError::GateLockout);
                }
                Ok(GateState::Locked)
            }
        }
    }

    /// Recovery path: clear a biometric lockout (new device / full access).
    pub fn reset_gate_lockout(&mut self) {
        self.gate_locked_out = false;
        self.consecutive_gate_failures = 0;
    }

    /// Generate and store a fresh keypair for (relying party, account).
    pub fn enroll_key(
        &mut self,
        relying_party: &str,
        account: &str,
        challenge: &str,
        now: SimTime,
        rng: &mut SimRng,
    ) -> Result<KeyRegistration, DeviceError> {
        if !self.gate_unlocked(now) {
            return Err(DeviceError::GateLocked);
        }
        let handle = SigningHandle::generate(rng);
        let credential_id = rng.id128();
        let public_key = handle.verifying_key();
        self.sealed_store
            .seal(&seal_id(&credential_id), &handle.secret_bytes());
        self.keys.insert(
            (relying_party.to_string(), account.to_string()),
            KeyEntry {
                credential_id: credential_id.clone(),
                public_key: public_key.clone(),
                counter: 0,
            },
        );
        let signature = handle.sign(&assertion_signing_bytes(
            &credential_id,
            relying_party,
            challenge,
            "registration",
            0,
        ));
        Ok(KeyRegistration {
            credential_id,
            relying_party: relying_party.to_string(),
            account: account.to_string(),
            public_key,
            challenge: challenge.to_string(),
            signature,
            tee_grade: self.tee_grade,
        })
    }

    /// Sign a challenge under the key enrolled for (relying party, account).
    pub fn sign_assertion(
        &mut self,
        relying_party: &str,
        account: &str,
        challenge: &str,
        channel_binding: &str,
        now: SimTime,
    ) -> Result<Assertion, DeviceError> {
        if !self.gate_unlocked(now) {
            return Err(DeviceError::GateLocked);
        }
        let entry = self
            .keys
            .get_mut(&(relying_party.to_string(), account.to_string()))
            .ok_or_else(|| DeviceError::NoCredential {
                rp: relying_party.to_string(),
                account: account.to_string(),
            })?;
        entry.counter += 1;
        let secret = self.sealed_store.unseal(&seal_id(&entry.credential_id))?;
        let secret: [u8; 32] = secret.try_into().expect("32-byte key");
        let handle = SigningHandle::from_secret_bytes(secret);
        let signature = handle.sign(&assertion_signing_bytes(
            &entry.credential_id,
            relying_party,
            challenge,
            channel_binding,
            entry.counter,
        ));
        Ok(Assertion {
            credential_id: entry.credential_id.clone(),
            relying_party: relying_party.to_string(),
            challenge: challenge.to_string(),
            channel_binding: channel_binding.to_string(),
            counter: entry.counter,
            signature,
        })
    }

    pub fn key_entry(&self, relying_party: &str, account: &str) -> Option<&KeyEntry> {
        self.keys
            .get(&(relying_party.to_string(), account.to_string()))
    }

    /// Sample `count` behavioral records. Records are returned for immediate
    /// transmission and never retained on the device.
    pub fn emit_behavior(
        &self,
        generator: &BehaviorGenerator,
        count: usize,
        start: SimTime,
        interval_ms: u64,
        rng: &mut SimRng,
    ) -> Vec<BehavioralRecord> {
        (0..count)
            .map(|i| BehavioralRecord {
                device_id: self.device_id.clone(),
                captured_at: start.plus_millis(interval_ms * i as u64),
                features: generator.sample(rng),
            })
            .collect()
    }

    pub fn sealed_store(&mut self) -> &mut SealedStore {
        &mut self.sealed_store
    }

    pub fn sealed_store_ref(&self) -> &SealedStore {
        &self.sealed_store
    }

    pub fn export(&self) -> DeviceExport {
        DeviceExport {
            device_id: self.device_id.clone(),
            owner: self.owner.clone(),
            gate: self.gate,
            tee_grade: self.tee_grade,
            keys: self.keys.values().cloned().collect(),
            sealed_entries: self.sealed_store.export_blobs(),
        }
    }

    /// Hardware-attack tier: extract all private keys by reading the seal key.
    pub fn hardware_extract_secrets(&self) -> Vec<(String, [u8; 32])> {
        let key = self.sealed_store.hardware_extract_key();
        self.sealed_store
            .export_blobs()
            .iter()
            .filter_map(|(id, blob)| {
                let opened = SealedStore::open_with_key(&key, blob).ok()?;
                let secret: [u8; 32] = opened.try_into().ok()?;
                Some((id.clone(), secret))
            })
            .collect()
    }
}

fn seal_id(credential_id: &str) -> String {
    format!("key:{credential_id}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unlocked_device(rng: &mut SimRng) -> DeviceState {
        let mut dev = DeviceState::new("dev1", "alice", TeeGrade::Tee, rng);
        dev.unlock_gate(BiometricSample::Match, SimTime::ZERO).unwrap();
        dev
    }

    #[test]
    fn gate_match_unlocks_for_window() {
        let mut rng = SimRng::from_seed_u64(1);
        let mut dev = DeviceState::new("dev1", "alice", TeeGrade::Software, &mut rng);
        let state = dev.unlock_gate(BiometricSample::Match, SimTime::ZERO).unwrap();
        assert_eq!(
            state,
            GateState::Unlocked {
                until: SimTime::from_secs(GATE_UNLOCK_WINDOW_SECS)
            }
        );
        assert!(dev.gate_unlocked(SimTime::from_secs(59)));
        assert!(!dev.gate_unlocked(SimTime::from_secs(60)));
    }

    #[test]
    fn gate_no_match_stays_locked() {
        let mut rng = SimRng::from_seed_u64(1);
        let mut dev = DeviceState::new("dev1", "alice", TeeGrade::Software, &mut rng);
        let state = dev.unlock_gate(BiometricSample::NoMatch, SimTime::ZERO).unwrap();
        assert_eq!(state, GateState::Locked);
    }

    #[test]
    fn five_consecutive_failures_lock_out() {
        let mut rng = SimRng::from_seed_u64(1);
        let mut dev = DeviceState::new("dev1", "alice", TeeGrade::Software, &mut rng);
        for i in 0..GATE_LOCKOUT_THRESHOLD {
            let res = dev.unlock_gate(BiometricSample::NoMatch, SimTime(i as u64));
            if i + 1 == GATE_LOCKOUT_THRESHOLD {
                assert_eq!(res, Err(DeviceError::GateLockout));
            } else {
                assert_eq!(res, Ok(GateState::Locked));
            }
        }
        // Even a matching sample is refused until recovery resets the gate.
        assert_eq!(
            dev.unlock_gate(BiometricSample::Match, SimTime(10)),
            Err(DeviceError::GateLockout)
        );
        dev.reset_gate_lockout();
        assert!(dev.unlock_gate(BiometricSample::Match, SimTime(11)).is_ok());
    }

    #[test]
    fn failure_counter_resets_on_match() {
        let mut rng = SimRng::from_seed_u64(1);
        let mut dev = DeviceState::new("dev1", "alice", TeeGrade::Software, &mut rng);
        for _ in 0..GATE_LOCKOUT_THRESHOLD - 1 {
            dev.unlock_gate(BiometricSample::NoMatch, SimTime::ZERO).unwrap();
        }
        dev.unlock_gate(BiometricSample::Match, SimTime::ZERO).unwrap();
        // A fresh run of failures is needed to lock out again.
        for _ in 0..GATE_LOCKOUT_THRESHOLD - 1 {
            assert_eq!(
                dev.unlock_gate(BiometricSample::NoMatch, SimTime::ZERO),
                Ok(GateState::Locked)
            );
        }
    }

    #[test]
    fn enroll_requires_unlocked_gate() {
        let mut rng = SimRng::from_seed_u64(2);
        let mut dev = DeviceState::new("dev1", "alice", TeeGrade::Software, &mut rng);
        assert_eq!(
            dev.enroll_key("idp1", "alice", "chal", SimTime::ZERO, &mut rng)
                .unwrap_err(),
            DeviceError::GateLocked
        );
    }

    #[test]
    fn enrollment_self_signature_verifies() {
        let mut rng = SimRng::from_seed_u64(2);
        let mut dev = unlocked_device(&mut rng);
        let reg = dev
            .enroll_key("idp1", "alice", "chal-1", SimTime::ZERO, &mut rng)
            .unwrap();
        let bytes =
            assertion_signing_bytes(&reg.credential_id, "idp1", "chal-1", "registration", 0);
        assert!(reg.public_key.verify(&bytes, &reg.signature));
    }

    #[test]
    fn assertion_counter_is_exactly_one_to_n() {
        let mut rng = SimRng::from_seed_u64(3);
        let mut dev = unlocked_device(&mut rng);
        let reg = dev
            .enroll_key("idp1", "alice", "chal", SimTime::ZERO, &mut rng)
            .unwrap();
        for expect in 1..=20u64 {
            let assertion = dev
                .sign_assertion("idp1", "alice", "c", "origin", SimTime::ZERO)
                .unwrap();
            assert_eq!(assertion.counter, expect);
            let bytes = assertion_signing_bytes(
                &assertion.credential_id,
                "idp1",
                "c",
                "origin",
                assertion.counter,
            );
            assert!(reg.public_key.verify(&bytes, &assertion.signature));
        }
    }

    #[test]
    fn unknown_key_is_no_credential() {
        let mut rng = SimRng::from_seed_u64(3);
        let mut dev = unlocked_device(&mut rng);
        assert!(matches!(
            dev.sign_assertion("idp1", "alice", "c", "o", SimTime::ZERO),
            Err(DeviceError::NoCredential { .. })
        ));
    }

    #[test]
    fn second_device_same_account_distinct_key() {
        let mut rng = SimRng::from_seed_u64(4);
        let mut dev1 = unlocked_device(&mut rng);
        let mut dev2 = DeviceState::new("dev2", "alice", TeeGrade::Software, &mut rng);
        dev2.unlock_gate(BiometricSample::Match, SimTime::ZERO).unwrap();
        let r1 = dev1.enroll_key("idp1", "alice", "c1", SimTime::ZERO, &mut rng).unwrap();
        let r2 = dev2.enroll_key("idp1", "alice", "c2", SimTime::ZERO, &mut rng).unwrap();
        assert_ne!(r1.public_key, r2.public_key);
        assert_ne!(r1.credential_id, r2.credential_id);
    }

    #[test]
    fn exports_and_messages_never_contain_private_keys() {
        let mut rng = SimRng::from_seed_u64(5);
        let mut dev = unlocked_device(&mut rng);
        let reg = dev
            .enroll_key("idp1", "alice", "chal", SimTime::ZERO, &mut rng)
            .unwrap();
        let assertion = dev
            .sign_assertion("idp1", "alice", "c", "o", SimTime::ZERO)
            .unwrap();
        let secrets = dev.hardware_extract_secrets();
        assert_eq!(secrets.len(), 1);
        let mut outbound = crate::util::canonical_json(&reg);
        outbound.extend(crate::util::canonical_json(&assertion));
        outbound.extend(crate::util::canonical_json(&dev.export()));
        for (_, secret) in &secrets {
            assert!(!crate::util::contains_encoding(&outbound, secret));
        }
    }

    #[test]
    fn behavior_records_not_retained_and_match_dimension() {
        let mut rng = SimRng::from_seed_u64(6);
        let dev = {
            let mut d = DeviceState::new("dev1", "alice", TeeGrade::Software, &mut rng);
            d.unlock_gate(BiometricSample::Match, SimTime::ZERO).unwrap();
            d
        };
        let gen = BehaviorGenerator::fixture(8, 0.0);
        let records = dev.emit_behavior(&gen, 10, SimTime::ZERO, 1000, &mut rng);
        assert_eq!(records.len(), 10);
        assert!(records.iter().all(|r| r.features.len() == 8));
        assert_eq!(records[1].captured_at, SimTime::from_secs(1));
        // Nothing retained: the export carries no behavioral payload.
        let export = crate::util::canonical_json(&dev.export());
        let first_feature = format!("{}", records[0].features[0]);
        assert!(!crate::util::contains_encoding(&export, first_feature.as_bytes()));
    }
}
