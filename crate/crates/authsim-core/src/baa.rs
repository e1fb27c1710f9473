//! Behavioral Authentication Authority: per-user Gaussian profiles over
//! behavioral feature vectors, windowed verdicts, tentative access during
//! recovery, and the deliberately weak BAA backup password whose only job is
//! rate-limiting.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

use crate::crypto::{hash_password, verify_password, PasswordHash, PasswordParams};
use crate::device::{BehavioralRecord, DeviceId};
use crate::identity::PrincipalId;
use crate::rng::SimRng;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaaConfig {
    pub feature_dimension: usize,
    /// Per-feature tolerance in standard deviations.
    pub z_tolerance: f64,
    /// Fraction of window records that must conform for a match.
    pub match_fraction: f64,
    /// Minimum post-boundary records before a verdict exists.
    pub min_window: usize,
    /// Records required before the profile counts as trained.
    pub training_minimum: usize,
    /// Login attempts allowed per user per minute.
    pub login_rate_per_minute: u32,
}

impl Default for BaaConfig {
    fn default() -> Self {
        BaaConfig {
            feature_dimension: 8,
            z_tolerance: 3.0,
            match_fraction: 0.8,
            min_window: 20,
            training_minimum: 50,
            login_rate_per_minute: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    Tentative,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Match,
    NoMatch,
    InsufficientData,
}

#[derive(Debug, Error, PartialEq)]
pub enum BaaError {
    #[error("record has {got} features, authority expects {expected}")]
    FeatureDimensionError { expected: usize, got: usize },
    #[error("profile for {0:?} is not trained yet")]
    ProfileNotTrained(PrincipalId),
    #[error("access denied")]
    AccessDenied,
    #[error("rate limited")]
    RateLimited,
    #[error("verdict pending: insufficient post-login records")]
    VerdictPending,
    #[error("tentative access denied for this operation")]
    TentativeAccessDenied,
}

/// Running per-feature mean/variance (Welford).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehavioralProfile {
    pub user: PrincipalId,
    pub count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    pub trained: bool,
}

impl BehavioralProfile {
    fn new(user: &str, dimension: usize) -> BehavioralProfile {
        BehavioralProfile {
            user: user.to_string(),
            count: 0,
            mean: vec![0.0; dimension],
            m2: vec![0.0; dimension],
            trained: false,
        }
    }

    fn update(&mut self, features: &[f64], training_minimum: usize) {
        self.count += 1;
        for (i, &x) in features.iter().enumerate() {
            let delta = x - self.mean[i];
            self.mean[i] += delta / self.count as f64;
            self.m2[i] += delta * (x - self.mean[i]);
        }
        if self.count as usize >= training_minimum {
            self.trained = true;
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.mean.len()];
        }
        self.m2.iter().map(|m| m / (self.count - 1) as f64).collect()
    }

    fn conforms(&self, features: &[f64], z: f64) -> bool {
        let var = self.variance();
        features.iter().enumerate().all(|(i, &x)| {
            let sd = var[i].sqrt();
            (x - self.mean[i]).abs() <= z * sd
        })
    }
}

/// A verdict request scoped to the records captured after a login boundary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRequest {
    pub requester: PrincipalId,
    pub user: PrincipalId,
    /// Records captured before this are excluded from the verdict.
    pub login_boundary: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaaAccess {
    pub user: PrincipalId,
    pub mode: SessionMode,
}

/// The authority actor's state.
#[derive(Debug)]
pub struct BaaState {
    pub id: PrincipalId,
    pub config: BaaConfig,
    profiles: BTreeMap<PrincipalId, BehavioralProfile>,
    windows: BTreeMap<PrincipalId, Vec<BehavioralRecord>>,
    passwords: BTreeMap<PrincipalId, PasswordHash>,
    login_attempts: BTreeMap<PrincipalId, Vec<SimTime>>,
    /// Devices locked out of this authority's IdP after a no-match verdict.
    pub locked_devices: BTreeSet<DeviceId>,
}

impl BaaState {
    pub fn new(id: impl Into<String>, config: BaaConfig) -> BaaState {
        BaaState {
            id: id.into(),
            config,
            profiles: BTreeMap::new(),
            windows: BTreeMap::new(),
            passwords: BTreeMap::new(),
            login_attempts: BTreeMap::new(),
            locked_devices: BTreeSet::new(),
        }
    }

    pub fn register_user(&mut self, user: &str, backup_password: &str, rng: &mut SimRng) {
        // BAA passwords may be weak; they only gate denial-of-service.
        self.passwords.insert(
            user.to_string(),
            hash_password(backup_password, PasswordParams::BASELINE, rng),
        );
    }

    /// Ingest one record. Tentative-mode records are scored against the
    /// profile later but never learned into it.
    pub fn ingest_record(
        &mut self,
        user: &str,
        record: BehavioralRecord,
        mode: SessionMode,
    ) -> Result<(), BaaError> {
        if record.features.len() != self.config.feature_dimension {
            return Err(BaaError::FeatureDimensionError {
                expected: self.config.feature_dimension,
                got: record.features.len(),
            });
        }
        if mode == SessionMode::Full {
            let dim = self.config.feature_dimension;
            let training_minimum = self.config.training_minimum;
            self.profiles
                .entry(user.to_string())
                .or_insert_with(|| BehavioralProfile::new(user, dim))
                .update(&record.features, training_minimum);
        }
        self.windows.entry(user.to_string()).or_default().push(record);
        Ok(())
    }

    pub fn profile(&self, user: &str) -> Option<&BehavioralProfile> {
        self.profiles.get(user)
    }

    /// Verdict over the post-boundary window.
    pub fn compute_verdict(&self, request: &VerdictRequest) -> Result<Verdict, BaaError> {
        let profile = self
            .profiles
            .get(&request.user)
            .filter(|p| p.trained)
            .ok_or_else(|| BaaError::ProfileNotTrained(request.user.clone()))?;
        let window: Vec<&BehavioralRecord> = self
            .windows
            .get(&request.user)
            .map(|w| {
                w.iter()
                    .filter(|r| r.captured_at >= request.login_boundary)
                    .collect()
            })
            .unwrap_or_default();
        if window.len() < self.config.min_window {
            return Ok(Verdict::InsufficientData);
        }
        let conforming = window
            .iter()
            .filter(|r| profile.conforms(&r.features, self.config.z_tolerance))
            .count();
        let fraction = conforming as f64 / window.len() as f64;
        Ok(if fraction >= self.config.match_fraction {
            Verdict::Match
        } else {
            Verdict::NoMatch
        })
    }

    /// Password-gated login. Grants tentative access only; the rate limit is
    /// the password's whole purpose.
    pub fn login(
        &mut self,
        user: &str,
        password: &str,
        now: SimTime,
    ) -> Result<BaaAccess, BaaError> {
        let attempts = self.login_attempts.entry(user.to_string()).or_default();
        attempts.retain(|t| now.since(*t) < 60_000);
        if attempts.len() >= self.config.login_rate_per_minute as usize {
            return Err(BaaError::RateLimited);
        }
        attempts.push(now);
        let stored = self.passwords.get(user).ok_or(BaaError::AccessDenied)?;
        if !verify_password(password, stored) {
            return Err(BaaError::AccessDenied);
        }
        Ok(BaaAccess {
            user: user.to_string(),
            mode: SessionMode::Tentative,
        })
    }

    pub fn lock_device(&mut self, device: &str) {
        self.locked_devices.insert(device.to_string());
    }

    pub fn device_locked(&self, device: &str) -> bool {
        self.locked_devices.contains(device)
    }

    /// Snapshot for the event-log checkpoint.
    pub fn profile_snapshot(&self) -> BTreeMap<PrincipalId, BehavioralProfile> {
        self.profiles.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::BehaviorGenerator;

    fn trained_baa(rng: &mut SimRng) -> (BaaState, BehaviorGenerator) {
        let mut baa = BaaState::new("baa1", BaaConfig::default());
        baa.register_user("alice", "weak", rng);
        let gen = BehaviorGenerator::fixture(8, 0.0);
        for i in 0..50 {
            baa.ingest_record(
                "alice",
                BehavioralRecord {
                    device_id: "dev1".into(),
                    captured_at: SimTime(i),
                    features: gen.sample(rng),
                },
                SessionMode::Full,
            )
            .unwrap();
        }
        (baa, gen)
    }

    fn window(
        baa: &mut BaaState,
        gen: &BehaviorGenerator,
        rng: &mut SimRng,
        start: u64,
        count: usize,
        mode: SessionMode,
    ) {
        for i in 0..count {
            baa.ingest_record(
                "alice",
                BehavioralRecord {
                    device_id: "dev2".into(),
                    captured_at: SimTime(start + i as u64),
                    features: gen.sample(rng),
                },
                mode,
            )
            .unwrap();
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut baa = BaaState::new("baa1", BaaConfig::default());
        let rec = BehavioralRecord {
            device_id: "dev1".into(),
            captured_at: SimTime::ZERO,
            features: vec![1.0; 3],
        };
        assert_eq!(
            baa.ingest_record("alice", rec, SessionMode::Full),
            Err(BaaError::FeatureDimensionError { expected: 8, got: 3 })
        );
    }

    #[test]
    fn owner_window_matches_impostor_does_not() {
        let mut rng = SimRng::from_seed_u64(42);
        let (mut baa, owner_gen) = trained_baa(&mut rng);
        window(&mut baa, &owner_gen, &mut rng, 1000, 20, SessionMode::Tentative);
        let verdict = baa
            .compute_verdict(&VerdictRequest {
                requester: "idc".into(),
                user: "alice".into(),
                login_boundary: SimTime(1000),
            })
            .unwrap();
        assert_eq!(verdict, Verdict::Match);

        // Fresh window from a 5-sigma-shifted impostor after a later login.
        let impostor = BehaviorGenerator::fixture(8, 5.0);
        window(&mut baa, &impostor, &mut rng, 2000, 20, SessionMode::Tentative);
        let verdict = baa
            .compute_verdict(&VerdictRequest {
                requester: "idc".into(),
                user: "alice".into(),
                login_boundary: SimTime(2000),
            })
            .unwrap();
        assert_eq!(verdict, Verdict::NoMatch);
    }

    #[test]
    fn short_window_is_insufficient_data() {
        let mut rng = SimRng::from_seed_u64(42);
        let (mut baa, gen) = trained_baa(&mut rng);
        window(&mut baa, &gen, &mut rng, 1000, 5, SessionMode::Tentative);
        let verdict = baa
            .compute_verdict(&VerdictRequest {
                requester: "idc".into(),
                user: "alice".into(),
                login_boundary: SimTime(1000),
            })
            .unwrap();
        assert_eq!(verdict, Verdict::InsufficientData);
    }

    #[test]
    fn untrained_profile_errors() {
        let baa = BaaState::new("baa1", BaaConfig::default());
        assert_eq!(
            baa.compute_verdict(&VerdictRequest {
                requester: "idc".into(),
                user: "alice".into(),
                login_boundary: SimTime::ZERO,
            }),
            Err(BaaError::ProfileNotTrained("alice".into()))
        );
    }

    #[test]
    fn pre_boundary_records_excluded() {
        let mut rng = SimRng::from_seed_u64(7);
        let (mut baa, gen) = trained_baa(&mut rng);
        // Adversarial impostor records BEFORE the boundary must not count.
        let impostor = BehaviorGenerator::fixture(8, 5.0);
        window(&mut baa, &impostor, &mut rng, 500, 50, SessionMode::Tentative);
        window(&mut baa, &gen, &mut rng, 1000, 20, SessionMode::Tentative);
        let verdict = baa
            .compute_verdict(&VerdictRequest {
                requester: "idc".into(),
                user: "alice".into(),
                login_boundary: SimTime(1000),
            })
            .unwrap();
        assert_eq!(verdict, Verdict::Match);
    }

    #[test]
    fn tentative_records_scored_not_learned() {
        let mut rng = SimRng::from_seed_u64(9);
        let (mut baa, gen) = trained_baa(&mut rng);
        let before = crate::util::canonical_json(&baa.profile_snapshot());
        window(&mut baa, &gen, &mut rng, 1000, 30, SessionMode::Tentative);
        let after = crate::util::canonical_json(&baa.profile_snapshot());
        assert_eq!(before, after, "tentative session altered profile statistics");
        // Full-mode ingestion does move the count.
        let count_before = baa.profile("alice").unwrap().count;
        window(&mut baa, &gen, &mut rng, 3000, 1, SessionMode::Full);
        assert_eq!(baa.profile("alice").unwrap().count, count_before + 1);
    }

    #[test]
    fn verdict_deterministic() {
        let mut rng = SimRng::from_seed_u64(11);
        let (mut baa, gen) = trained_baa(&mut rng);
        window(&mut baa, &gen, &mut rng, 1000, 25, SessionMode::Tentative);
        let req = VerdictRequest {
            requester: "idc".into(),
            user: "alice".into(),
            login_boundary: SimTime(1000),
        };
        let v1 = baa.compute_verdict(&req).unwrap();
        let v2 = baa.compute_verdict(&req).unwrap();
        assert_eq!(v1, v2);
    }

    #[test]
    fn login_password_gate() {
        let mut rng = SimRng::from_seed_u64(13);
        let mut baa = BaaState::new("baa1", BaaConfig::default());
        baa.register_user("alice", "easy-pw", &mut rng);
        let access = baa.login("alice", "easy-pw", SimTime::ZERO).unwrap();
        assert_eq!(access.mode, SessionMode::Tentative);
        assert_eq!(
            baa.login("alice", "nope", SimTime(1)),
            Err(BaaError::AccessDenied)
        );
    }

    #[test]
    fn rapid_attempts_rate_limited() {
        let mut rng = SimRng::from_seed_u64(13);
        let mut baa = BaaState::new("baa1", BaaConfig::default());
        baa.register_user("alice", "easy-pw", &mut rng);
        let mut limited = 0;
        for i in 0..10 {
            if baa.login("alice", "wrong", SimTime(i * 100)) == Err(BaaError::RateLimited) {
                limited += 1;
            }
        }
        // Default allows 5 per minute; the rest of the burst is limited.
        assert_eq!(limited, 5);
        // After the window slides, attempts are accepted again.
        assert_eq!(
            baa.login("alice", "wrong", SimTime::from_secs(120)),
            Err(BaaError::AccessDenied)
        );
    }
}
