//! The Identity Consolidator: entity registry and BAA discovery, account
//! locking, Mobile-Connect proxying, identity acquisition from simulated
//! documents, consent/profile surfaces, and the failure-recovery ladder.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

use crate::baa::Verdict;
use crate::crypto::{hash_password, verify_password, PasswordHash, PasswordParams, Signature, SigningHandle, VerifyingKey};
use crate::identity::{
    evaluate_consent, fuse_attributes, normalize_attribute, Aal, ConsentDecision, ConsentGrant,
    ConsentPolicy, IdentityAttribute, PrincipalId, PrincipalRole, SchemaSet, TrustConfig,
};
use crate::pabac::CredentialBackup;
use crate::rng::SimRng;
use crate::time::SimTime;

pub const MIN_BACKUP_PASSWORD_LEN: usize = 12;
pub const AUTO_LOCK_FAILURE_THRESHOLD: usize = 10;
pub const AUTO_LOCK_WINDOW_MS: u64 = 5 * 60 * 1000;
pub const OTP_DIGITS: u32 = 6;
pub const OTP_TTL_MS: u64 = 120_000;
pub const OTP_MAX_ATTEMPTS: u32 = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdcError {
    #[error("no behavioral authority registered for the user")]
    NoBaaRegistered,
    #[error("operation not permitted in tentative access")]
    TentativeAccessDenied,
    #[error("authentication failed: {0}")]
    AuthenticationFailed(String),
    #[error("no registered verifier can attest the requested attributes")]
    NoVerifier,
    #[error("document rejected: {0}")]
    DocumentParseError(String),
    #[error("recovery denied: neither backup password nor document matched")]
    RecoveryDenied,
    #[error("illegal recovery transition: {event} in state {state}")]
    IllegalTransition { state: String, event: String },
    #[error("MNO has no lost-device report with a reissued SIM for this user")]
    McCheckFailed,
    #[error("backup password must have at least {MIN_BACKUP_PASSWORD_LEN} characters")]
    WeakPassword,
    #[error("unknown user {0:?}")]
    UnknownUser(PrincipalId),
    #[error("account is locked")]
    AccountLocked,
    #[error("identity error: {0}")]
    Identity(#[from] crate::identity::IdentityError),
}

// ---------------------------------------------------------------------------
// Entity registry (account-management surface)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: PrincipalId,
    pub kind: PrincipalRole,
    pub max_aal: Aal,
    /// Registration order, used as the discovery tie-break.
    pub seq: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserEntities {
    pub sps: Vec<PrincipalId>,
    pub idps: Vec<PrincipalId>,
    pub baas: Vec<PrincipalId>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EntityRegistry {
    pub catalog: BTreeMap<PrincipalId, EntityRecord>,
    pub per_user: BTreeMap<PrincipalId, UserEntities>,
    seq: u64,
}

impl EntityRegistry {
    pub fn register_entity(&mut self, id: &str, kind: PrincipalRole, max_aal: Aal) {
        self.seq += 1;
        self.catalog.insert(
            id.to_string(),
            EntityRecord {
                id: id.to_string(),
                kind,
                max_aal,
                seq: self.seq,
            },
        );
    }

    pub fn register_for_user(&mut self, user: &str, entity: &str) {
        let Some(record) = self.catalog.get(entity) else {
            return;
        };
        let entry = self.per_user.entry(user.to_string()).or_default();
        let list = match record.kind {
            PrincipalRole::Sp => &mut entry.sps,
            PrincipalRole::Baa => &mut entry.baas,
            _ => &mut entry.idps,
        };
        if !list.contains(&record.id) {
            list.push(record.id.clone());
        }
    }

    /// BAA discovery: highest max-AAL authority registered for the user,
    /// ties broken by registration order.
    pub fn discover_baa(&self, user: &str) -> Result<PrincipalId, IdcError> {
        let entities = self.per_user.get(user).ok_or(IdcError::NoBaaRegistered)?;
        entities
            .baas
            .iter()
            .filter_map(|id| self.catalog.get(id))
            .max_by(|a, b| a.max_aal.cmp(&b.max_aal).then(b.seq.cmp(&a.seq)))
            .map(|r| r.id.clone())
            .ok_or(IdcError::NoBaaRegistered)
    }

    pub fn trusted_idps(&self, user: &str) -> Vec<(PrincipalId, Aal)> {
        self.per_user
            .get(user)
            .map(|e| {
                e.idps
                    .iter()
                    .filter_map(|id| self.catalog.get(id))
                    .map(|r| (r.id.clone(), r.max_aal))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn entities_of(&self, user: &str) -> Vec<PrincipalId> {
        self.per_user
            .get(user)
            .map(|e| {
                e.sps
                    .iter()
                    .chain(e.idps.iter())
                    .chain(e.baas.iter())
                    .cloned()
                    .collect()
            })
            .unwrap_or_default()
    }
}

// ---------------------------------------------------------------------------
// Account locking
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LockScope {
    All,
    Entities(BTreeSet<PrincipalId>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LockReason {
    UserInitiated,
    RiskAutoLock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockState {
    pub user: PrincipalId,
    pub scope: LockScope,
    pub reason: LockReason,
    pub set_at: SimTime,
}

impl LockState {
    pub fn covers(&self, entity: &str) -> bool {
        match &self.scope {
            LockScope::All => true,
            LockScope::Entities(set) => set.contains(entity),
        }
    }
}

// ---------------------------------------------------------------------------
// Simulated MNO (Mobile Connect counterparty)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct OtpSession {
    user: PrincipalId,
    code: String,
    attempts_left: u32,
    issued_at: SimTime,
}

/// Mobile network operator actor: subscriber base, the in-simulation OTP
/// channel, and lost-device reports.
#[derive(Debug, Default)]
pub struct MnoState {
    pub id: PrincipalId,
    subscribers: BTreeMap<PrincipalId, String>,
    otp_sessions: BTreeMap<String, OtpSession>,
    lost_reports: BTreeSet<PrincipalId>,
    /// Attributes this MNO can attest (msisdn and friends).
    pub attested: BTreeMap<PrincipalId, BTreeMap<String, String>>,
}

impl MnoState {
    pub fn new(id: impl Into<String>) -> MnoState {
        MnoState {
            id: id.into(),
            ..Default::default()
        }
    }

    pub fn add_subscriber(&mut self, user: &str, msisdn: &str) {
        self.subscribers.insert(user.to_string(), msisdn.to_string());
        self.attested
            .entry(user.to_string())
            .or_default()
            .insert("msisdn".into(), msisdn.to_string());
    }

    /// Begin an SMS-OTP challenge; the code travels over the simulated SMS
    /// channel to the subscriber's device.
    pub fn start_otp(
        &mut self,
        user: &str,
        now: SimTime,
        rng: &mut SimRng,
    ) -> Result<(String, String), IdcError> {
        if !self.subscribers.contains_key(user) {
            return Err(IdcError::UnknownUser(user.to_string()));
        }
        let session_id = rng.id128();
        let code = rng.numeric_code(OTP_DIGITS);
        self.otp_sessions.insert(
            session_id.clone(),
            OtpSession {
                user: user.to_string(),
                code: code.clone(),
                attempts_left: OTP_MAX_ATTEMPTS,
                issued_at: now,
            },
        );
        Ok((session_id, code))
    }

    pub fn verify_otp(
        &mut self,
        session_id: &str,
        code: &str,
        now: SimTime,
    ) -> Result<PrincipalId, IdcError> {
        let session = self
            .otp_sessions
            .get_mut(session_id)
            .ok_or_else(|| IdcError::AuthenticationFailed("unknown otp session".into()))?;
        if now.since(session.issued_at) > OTP_TTL_MS {
            self.otp_sessions.remove(session_id);
            return Err(IdcError::AuthenticationFailed("otp expired".into()));
        }
        if session.attempts_left == 0 {
            return Err(IdcError::AuthenticationFailed("otp attempts exhausted".into()));
        }
        session.attempts_left -= 1;
        if session.code != code {
            return Err(IdcError::AuthenticationFailed("otp mismatch".into()));
        }
        let user = session.user.clone();
        self.otp_sessions.remove(session_id);
        Ok(user)
    }

    pub fn report_lost_with_new_sim(&mut self, user: &str) {
        self.lost_reports.insert(user.to_string());
    }

    pub fn lost_report_confirmed(&self, user: &str) -> bool {
        self.lost_reports.contains(user)
    }
}

/// Which attributes can only be verified by an MNO, and at what AAL. This
/// mapping is knowledge held only by the consolidator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McProxyBinding {
    pub attribute: String,
    pub mno: PrincipalId,
    pub aal: Aal,
}

// ---------------------------------------------------------------------------
// Simulated identity documents
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub document_id: String,
    pub name: String,
    pub birthdate: String,
    pub country: String,
    pub signature: Signature,
}

#[derive(Serialize)]
struct DocumentBody<'a> {
    document_id: &'a str,
    name: &'a str,
    birthdate: &'a str,
    country: &'a str,
}

fn document_signing_bytes(document_id: &str, name: &str, birthdate: &str, country: &str) -> Vec<u8> {
    crate::util::canonical_json(&DocumentBody {
        document_id,
        name,
        birthdate,
        country,
    })
}

/// Fixture document authority (the issuing state, in the real world).
pub fn sign_document(
    authority: &SigningHandle,
    document_id: &str,
    name: &str,
    birthdate: &str,
    country: &str,
) -> DocumentRecord {
    DocumentRecord {
        document_id: document_id.to_string(),
        name: name.to_string(),
        birthdate: birthdate.to_string(),
        country: country.to_string(),
        signature: authority.sign(&document_signing_bytes(document_id, name, birthdate, country)),
    }
}

// ---------------------------------------------------------------------------
// Failure-recovery state machine
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryState {
    Start,
    TentativeIdc,
    McVerified,
    BaaTentative,
    CollectingRecords,
    VerdictReceived,
    FullAccess,
    Failed,
}

impl std::fmt::Display for RecoveryState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "event")]
pub enum RecoveryEvent {
    /// Backup password verified at the consolidator.
    PasswordVerified,
    /// Acquired document identity matched the stored one.
    DocumentMatched,
    /// SMS-OTP round completed; `lost_report_confirmed` reflects the MNO's
    /// answer about a lost-device report with a reissued SIM.
    McOtpVerified { lost_report_confirmed: bool },
    /// BAA granted tentative access after its backup password.
    BaaLoginOk,
    /// Enough post-login records streamed to the BAA.
    RecordsCollected,
    /// Behavioral verdict delivered over the federated channel.
    VerdictMatch,
    VerdictNoMatch,
    /// Step 16: the consolidator finalizes full access.
    GrantFullAccess,
}

impl RecoveryEvent {
    /// The full event alphabet, for exhaustive path enumeration.
    pub fn alphabet() -> &'static [RecoveryEvent] {
        &[
            RecoveryEvent::PasswordVerified,
            RecoveryEvent::DocumentMatched,
            RecoveryEvent::McOtpVerified { lost_report_confirmed: true },
            RecoveryEvent::McOtpVerified { lost_report_confirmed: false },
            RecoveryEvent::BaaLoginOk,
            RecoveryEvent::RecordsCollected,
            RecoveryEvent::VerdictMatch,
            RecoveryEvent::VerdictNoMatch,
            RecoveryEvent::GrantFullAccess,
        ]
    }
}

/// Recovery ladder session. States advance only along the prescribed order;
/// AAL1 throughout the tentative stretch, AAL3 only at full access.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoverySession {
    pub user: PrincipalId,
    pub state: RecoveryState,
    pub granted_aal: Aal,
    pub verdict: Option<Verdict>,
    /// Completed-step log.
    pub evidence: Vec<String>,
}

impl RecoverySession {
    pub fn new(user: &str) -> RecoverySession {
        RecoverySession {
            user: user.to_string(),
            state: RecoveryState::Start,
            granted_aal: Aal::None,
            verdict: None,
            evidence: Vec::new(),
        }
    }

    /// Pure transition function; errors leave the session unchanged.
    pub fn advance(&mut self, event: RecoveryEvent) -> Result<RecoveryState, IdcError> {
        use RecoveryEvent as E;
        use RecoveryState as S;
        let illegal = |state: RecoveryState| IdcError::IllegalTransition {
            state: state.to_string(),
            event: format!("{event:?}"),
        };
        let next = match (self.state, event) {
            (S::Start, E::PasswordVerified) | (S::Start, E::DocumentMatched) => S::TentativeIdc,
            (S::TentativeIdc, E::McOtpVerified { lost_report_confirmed }) => {
                if lost_report_confirmed {
                    S::McVerified
                } else {
                    return Err(IdcError::McCheckFailed);
                }
            }
            (S::McVerified, E::BaaLoginOk) => S::BaaTentative,
            (S::BaaTentative, E::RecordsCollected) => S::CollectingRecords,
            (S::CollectingRecords, E::VerdictMatch) => {
                self.verdict = Some(Verdict::Match);
                S::VerdictReceived
            }
            (S::CollectingRecords, E::VerdictNoMatch) => {
                self.verdict = Some(Verdict::NoMatch);
                S::Failed
            }
            (S::VerdictReceived, E::GrantFullAccess) => {
                if self.verdict == Some(Verdict::Match) {
                    S::FullAccess
                } else {
                    return Err(illegal(self.state));
                }
            }
            (state, _) => return Err(illegal(state)),
        };
        self.evidence.push(format!("{:?} -> {:?} via {:?}", self.state, next, event));
        self.state = next;
        self.granted_aal = match next {
            S::FullAccess => Aal::Aal3,
            S::TentativeIdc | S::McVerified | S::BaaTentative | S::CollectingRecords
            | S::VerdictReceived => Aal::Aal1,
            S::Start | S::Failed => Aal::None,
        };
        Ok(next)
    }

    pub fn tentative(&self) -> bool {
        self.granted_aal <= Aal::Aal1 && self.state != RecoveryState::Start
    }
}

// ---------------------------------------------------------------------------
// The consolidator actor
// ---------------------------------------------------------------------------

/// Stored AAL1/BAA backup passwords, viewable in tentative mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredBaaPassword {
    pub authority: PrincipalId,
    pub password: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TentativeView {
    pub trusted_idps: Vec<(PrincipalId, Aal)>,
    pub baa_backup_passwords: Vec<StoredBaaPassword>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileView {
    pub attributes_by_sp: BTreeMap<PrincipalId, Vec<(String, String)>>,
    pub risk_indicators: Vec<crate::risk::RiskIndicator>,
}

pub struct IdcState {
    pub id: PrincipalId,
    pub registry: EntityRegistry,
    pub locks: BTreeMap<PrincipalId, LockState>,
    pub recovery: BTreeMap<PrincipalId, RecoverySession>,
    pub ledger: crate::risk::DisclosureLedger,
    pub mc_bindings: Vec<McProxyBinding>,
    pub schemas: SchemaSet,
    pub trust: TrustConfig,
    backup_passwords: BTreeMap<PrincipalId, PasswordHash>,
    baa_password_store: BTreeMap<PrincipalId, Vec<StoredBaaPassword>>,
    credential_backups: BTreeMap<PrincipalId, CredentialBackup>,
    repository: BTreeMap<PrincipalId, Vec<IdentityAttribute>>,
    consent_policies: BTreeMap<PrincipalId, ConsentPolicy>,
    failed_auth_events: BTreeMap<PrincipalId, Vec<SimTime>>,
    document_authority: VerifyingKey,
}

impl std::fmt::Debug for IdcState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IdcState").field("id", &self.id).finish()
    }
}

impl IdcState {
    pub fn new(id: impl Into<String>, document_authority: VerifyingKey) -> IdcState {
        IdcState {
            id: id.into(),
            registry: EntityRegistry::default(),
            locks: BTreeMap::new(),
            recovery: BTreeMap::new(),
            ledger: crate::risk::DisclosureLedger::default(),
            mc_bindings: Vec::new(),
            schemas: SchemaSet::standard(),
            trust: TrustConfig::default(),
            backup_passwords: BTreeMap::new(),
            baa_password_store: BTreeMap::new(),
            credential_backups: BTreeMap::new(),
            repository: BTreeMap::new(),
            consent_policies: BTreeMap::new(),
            failed_auth_events: BTreeMap::new(),
            document_authority,
        }
    }

    // -- backup passwords ---------------------------------------------------

    /// Strength policy applies to the single secure IDC backup password.
    pub fn enroll_backup_password(
        &mut self,
        user: &str,
        password: &str,
        rng: &mut SimRng,
    ) -> Result<(), IdcError> {
        if password.chars().count() < MIN_BACKUP_PASSWORD_LEN {
            return Err(IdcError::WeakPassword);
        }
        self.backup_passwords.insert(
            user.to_string(),
            hash_password(password, PasswordParams::STORAGE, rng),
        );
        Ok(())
    }

    pub fn verify_backup_password(&self, user: &str, password: &str) -> bool {
        self.backup_passwords
            .get(user)
            .is_some_and(|h| verify_password(password, h))
    }

    // -- locking --------------------------------------------------------------

    /// Lock or unlock accounts. Locking is allowed even from tentative
    /// sessions (the device-loss path); unlocking needs AAL2 or better.
    pub fn set_lock(
        &mut self,
        user: &str,
        scope: LockScope,
        reason: LockReason,
        lock: bool,
        session_aal: Aal,
        now: SimTime,
    ) -> Result<Option<LockState>, IdcError> {
        if lock {
            let state = LockState {
                user: user.to_string(),
                scope,
                reason,
                set_at: now,
            };
            self.locks.insert(user.to_string(), state.clone());
            Ok(Some(state))
        } else {
            if session_aal < Aal::Aal2 {
                return Err(IdcError::TentativeAccessDenied);
            }
            self.locks.remove(user);
            Ok(None)
        }
    }

    pub fn lock_covering(&self, user: &str, entity: &str) -> Option<&LockState> {
        self.locks.get(user).filter(|l| l.covers(entity))
    }

    /// Risk heuristic: auto-lock after enough failed authentications inside
    /// the sliding window. Returns the lock if it fired.
    pub fn record_failed_auth(&mut self, user: &str, now: SimTime) -> Option<LockState> {
        let events = self.failed_auth_events.entry(user.to_string()).or_default();
        events.push(now);
        events.retain(|t| now.since(*t) <= AUTO_LOCK_WINDOW_MS);
        if events.len() >= AUTO_LOCK_FAILURE_THRESHOLD && !self.locks.contains_key(user) {
            let state = LockState {
                user: user.to_string(),
                scope: LockScope::All,
                reason: LockReason::RiskAutoLock,
                set_at: now,
            };
            self.locks.insert(user.to_string(), state.clone());
            return Some(state);
        }
        None
    }

    // -- identity acquisition -------------------------------------------------

    /// Verify and ingest a simulated e-document; attributes normalize and
    /// fuse into the consolidated repository under the document source.
    pub fn acquire_identity_document(
        &mut self,
        user: &str,
        document: &DocumentRecord,
        now: SimTime,
    ) -> Result<Vec<IdentityAttribute>, IdcError> {
        let bytes = document_signing_bytes(
            &document.document_id,
            &document.name,
            &document.birthdate,
            &document.country,
        );
        if !self.document_authority.verify(&bytes, &document.signature) {
            return Err(IdcError::DocumentParseError(
                "document authority signature invalid".into(),
            ));
        }
        let source = "document-authority";
        let mut acquired = Vec::new();
        for (name, raw) in [
            ("name", document.name.as_str()),
            ("birthdate", document.birthdate.as_str()),
            ("country", document.country.as_str()),
        ] {
            let attr = normalize_attribute(&self.schemas, name, raw, source, now)
                .map_err(|e| IdcError::DocumentParseError(e.to_string()))?;
            acquired.push(attr);
        }
        let mut current = self.repository.remove(user).unwrap_or_default();
        for attr in &acquired {
            current = fuse_attributes(&current, attr.clone(), &self.trust);
        }
        self.repository.insert(user.to_string(), current);
        Ok(acquired)
    }

    /// Does a freshly acquired document match the identity proved before?
    pub fn document_matches_stored(&self, user: &str, document: &DocumentRecord) -> bool {
        let Some(stored) = self.repository.get(user) else {
            return false;
        };
        let get = |name: &str| {
            stored
                .iter()
                .find(|a| a.name == name)
                .map(|a| a.value.canonical())
        };
        let matches = |name: &str, raw: &str| {
            normalize_attribute(&self.schemas, name, raw, "check", SimTime::ZERO)
                .ok()
                .map(|a| a.value.canonical())
                == get(name)
        };
        matches("name", &document.name)
            && matches("birthdate", &document.birthdate)
            && matches("country", &document.country)
    }

    pub fn verify_document_signature(&self, document: &DocumentRecord) -> bool {
        let bytes = document_signing_bytes(
            &document.document_id,
            &document.name,
            &document.birthdate,
            &document.country,
        );
        self.document_authority.verify(&bytes, &document.signature)
    }

    pub fn repository_of(&self, user: &str) -> &[IdentityAttribute] {
        self.repository.get(user).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn store_attribute(&mut self, user: &str, attribute: IdentityAttribute) {
        let current = self.repository.remove(user).unwrap_or_default();
        self.repository
            .insert(user.to_string(), fuse_attributes(&current, attribute, &self.trust));
    }

    // -- consent ---------------------------------------------------------------

    pub fn consent_policy_mut(&mut self, user: &str) -> &mut ConsentPolicy {
        self.consent_policies
            .entry(user.to_string())
            .or_insert_with(|| ConsentPolicy::new(user))
    }

    pub fn consent_decision(
        &self,
        user: &str,
        attribute: &str,
        audience: &str,
        now: SimTime,
    ) -> Result<ConsentDecision, IdcError> {
        match self.consent_policies.get(user) {
            Some(policy) => Ok(evaluate_consent(policy, &self.schemas, attribute, audience, now)?),
            None => {
                // Deny-by-default even without a stored policy.
                self.schemas
                    .get(attribute)
                    .map(|_| ConsentDecision::Deny)
                    .ok_or_else(|| {
                        IdcError::Identity(crate::identity::IdentityError::SchemaError(
                            attribute.to_string(),
                        ))
                    })
            }
        }
    }

    /// Consent edits need a non-tentative session.
    pub fn edit_consent(
        &mut self,
        user: &str,
        grant: ConsentGrant,
        session_aal: Aal,
    ) -> Result<(), IdcError> {
        if session_aal < Aal::Aal2 {
            return Err(IdcError::TentativeAccessDenied);
        }
        self.consent_policy_mut(user).set_grant(grant);
        Ok(())
    }

    // -- recovery ----------------------------------------------------------------

    /// Lost-device entry point: a correct backup password or a matching
    /// document grants tentative access and starts the ladder.
    pub fn start_recovery(
        &mut self,
        user: &str,
        password: Option<&str>,
        document: Option<&DocumentRecord>,
    ) -> Result<&RecoverySession, IdcError> {
        let password_ok = password.is_some_and(|p| self.verify_backup_password(user, p));
        let document_ok = document.is_some_and(|d| {
            self.verify_document_signature(d) && self.document_matches_stored(user, d)
        });
        if !password_ok && !document_ok {
            return Err(IdcError::RecoveryDenied);
        }
        let mut session = RecoverySession::new(user);
        session
            .advance(if password_ok {
                RecoveryEvent::PasswordVerified
            } else {
                RecoveryEvent::DocumentMatched
            })
            .expect("entry transition is legal from Start");
        self.recovery.insert(user.to_string(), session);
        Ok(self.recovery.get(user).expect("inserted"))
    }

    pub fn advance_recovery(
        &mut self,
        user: &str,
        event: RecoveryEvent,
    ) -> Result<RecoveryState, IdcError> {
        let session = self
            .recovery
            .get_mut(user)
            .ok_or_else(|| IdcError::UnknownUser(user.to_string()))?;
        session.advance(event)
    }

    pub fn recovery_session(&self, user: &str) -> Option<&RecoverySession> {
        self.recovery.get(user)
    }

    /// Session AAL for a user: full recovery grants AAL3, the tentative
    /// stretch AAL1.
    pub fn session_aal(&self, user: &str) -> Aal {
        self.recovery
            .get(user)
            .map(|s| s.granted_aal)
            .unwrap_or(Aal::None)
    }

    /// What tentative access exposes: trusted IdPs with their AALs, plus the
    /// stored BAA/AAL1 backup passwords.
    pub fn tentative_view(&self, user: &str) -> TentativeView {
        TentativeView {
            trusted_idps: self.registry.trusted_idps(user),
            baa_backup_passwords: self
                .baa_password_store
                .get(user)
                .cloned()
                .unwrap_or_default(),
        }
    }

    // -- BAA password store -----------------------------------------------------

    /// Writing the store needs a non-tentative session; reading is exactly
    /// what tentative mode is for.
    pub fn store_baa_passwords(
        &mut self,
        user: &str,
        passwords: Vec<StoredBaaPassword>,
        session_aal: Aal,
    ) -> Result<(), IdcError> {
        if session_aal < Aal::Aal2 {
            return Err(IdcError::TentativeAccessDenied);
        }
        self.baa_password_store.insert(user.to_string(), passwords);
        Ok(())
    }

    pub fn read_baa_passwords(&self, user: &str, session_aal: Aal) -> Result<Vec<StoredBaaPassword>, IdcError> {
        if session_aal < Aal::Aal1 {
            return Err(IdcError::TentativeAccessDenied);
        }
        Ok(self
            .baa_password_store
            .get(user)
            .cloned()
            .unwrap_or_default())
    }

    // -- credential backups -------------------------------------------------------

    pub fn store_credential_backup(
        &mut self,
        user: &str,
        backup: CredentialBackup,
        session_aal: Aal,
    ) -> Result<(), IdcError> {
        if session_aal < Aal::Aal2 {
            return Err(IdcError::TentativeAccessDenied);
        }
        self.credential_backups.insert(user.to_string(), backup);
        Ok(())
    }

    /// Restore requires completed recovery (or an equivalent AAL3 session).
    pub fn fetch_credential_backup(
        &self,
        user: &str,
        session_aal: Aal,
    ) -> Result<&CredentialBackup, IdcError> {
        if session_aal < Aal::Aal3 {
            return Err(IdcError::TentativeAccessDenied);
        }
        self.credential_backups
            .get(user)
            .ok_or_else(|| IdcError::UnknownUser(user.to_string()))
    }

    /// Tentative sessions may not even view the PABAC surface.
    pub fn view_credential_backup_meta(
        &self,
        user: &str,
        session_aal: Aal,
    ) -> Result<Option<u64>, IdcError> {
        if session_aal < Aal::Aal2 {
            return Err(IdcError::TentativeAccessDenied);
        }
        Ok(self.credential_backups.get(user).map(|b| b.version))
    }

    // -- MC proxy ----------------------------------------------------------------

    pub fn bind_mc_attribute(&mut self, attribute: &str, mno: &str, aal: Aal) {
        self.mc_bindings.push(McProxyBinding {
            attribute: attribute.to_string(),
            mno: mno.to_string(),
            aal,
        });
    }

    /// Find an MNO able to verify every requested attribute.
    pub fn find_mc_verifier(&self, attributes: &[String]) -> Result<&McProxyBinding, IdcError> {
        self.mc_bindings
            .iter()
            .find(|b| attributes.iter().all(|a| *a == b.attribute))
            .ok_or(IdcError::NoVerifier)
    }

    // -- profile view ---------------------------------------------------------------

    /// The identity-management surface: what each SP knows plus risk
    /// indicators, computed against the configured population.
    pub fn consent_and_profile_view(
        &self,
        user: &str,
        session_aal: Aal,
        population: Option<&crate::risk::PopulationTable>,
        mode: crate::par::ExecMode,
    ) -> Result<ProfileView, IdcError> {
        if session_aal < Aal::Aal1 {
            return Err(IdcError::TentativeAccessDenied);
        }
        let attributes_by_sp = self.ledger.known_by_sp(user);
        let mut risk_indicators = Vec::new();
        if let Some(table) = population {
            for (_sp, attrs) in &attributes_by_sp {
                let known: Vec<(String, String)> = attrs
                    .iter()
                    .filter(|(name, _)| table.schema.contains(name))
                    .cloned()
                    .collect();
                if known.is_empty() {
                    continue;
                }
                if let Ok(indicator) =
                    crate::risk::pabac_combination_risk(&known, table, mode)
                {
                    risk_indicators.push(indicator);
                }
            }
        }
        Ok(ProfileView {
            attributes_by_sp,
            risk_indicators,
        })
    }
}
