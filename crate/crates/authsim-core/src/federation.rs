//! OIDC-style federation with FIDO enhancement: authorization-code flow,
//! audience- and scope-restricted tokens carrying one-time pseudonyms,
//! nonce/CSRF/replay defenses, and the QR desktop bridge. The state machine
//! here is transport-free; the simulation layer wraps it in bus messages.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

use crate::crypto::{hash_password, verify_password, PasswordHash, PasswordParams, Signature, SigningHandle, VerifyingKey};
use crate::device::{assertion_signing_bytes, Assertion, KeyRegistration, TeeGrade};
use crate::identity::{aal_for_factors, Aal, AuthFactor, FactorKind, IdentityAttribute, PrincipalId};
use crate::rng::SimRng;
use crate::time::SimTime;

pub const DEFAULT_TTL_MS: u64 = 120_000;
pub const DEFAULT_TOKEN_TTL_MS: u64 = 600_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FederationError {
    #[error("client {0:?} is not registered with this provider")]
    UnknownClient(PrincipalId),
    #[error("replay detected: single-use value presented twice")]
    ReplayDetected,
    #[error("consent denied for attribute {0:?}")]
    ConsentDenied(String),
    #[error("authentication failed: {0}")]
    AuthenticationFailed(String),
    #[error("audience mismatch")]
    AudienceMismatch,
    #[error("csrf token rejected")]
    CsrfRejected,
    #[error("value expired")]
    Expired,
    #[error("qr session already claimed")]
    AlreadyClaimed,
    #[error("account is locked")]
    AccountLocked,
    #[error("attribute {0:?} not in this provider's repository for the user")]
    AttributeUnavailable(String),
    #[error("no enrolled credential for this account")]
    NoCredential,
}

/// Authorization request routed to the user's device (Fig-style step 2/3).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorizationRequest {
    pub idp: PrincipalId,
    pub sp: PrincipalId,
    pub user: PrincipalId,
    pub requested_attributes: Vec<String>,
    /// SP session the flow redirects back to.
    pub redirect_session: String,
    pub nonce: String,
    pub csrf_token: String,
    /// Channel binding value for the session.
    pub origin: String,
}

/// One-time subject identifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pseudonym {
    pub value: String,
    pub session: String,
}

/// Audience- and scope-restricted bearer token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessToken {
    pub subject: String,
    pub audience: PrincipalId,
    pub scope: BTreeMap<String, String>,
    pub issued_at: SimTime,
    pub expires_at: SimTime,
    pub aal: Aal,
    pub issuer: PrincipalId,
    pub signature: Signature,
}

#[derive(Serialize)]
struct TokenPayload<'a> {
    subject: &'a str,
    audience: &'a str,
    scope: &'a BTreeMap<String, String>,
    issued_at: SimTime,
    expires_at: SimTime,
    aal: Aal,
    issuer: &'a str,
}

fn token_signing_bytes(token: &AccessToken) -> Vec<u8> {
    crate::util::canonical_json(&TokenPayload {
        subject: &token.subject,
        audience: &token.audience,
        scope: &token.scope,
        issued_at: token.issued_at,
        expires_at: token.expires_at,
        aal: token.aal,
        issuer: &token.issuer,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenValidity {
    Valid {
        scope: BTreeMap<String, String>,
        aal: Aal,
    },
    Invalid {
        reason: InvalidReason,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidReason {
    BadSignature,
    AudienceMismatch,
    Expired,
}

/// Verify a token against the issuer key for a presenting audience.
pub fn validate_token(
    token: &AccessToken,
    presenting_audience: &str,
    issuer_key: &VerifyingKey,
    now: SimTime,
) -> TokenValidity {
    if !issuer_key.verify(&token_signing_bytes(token), &token.signature) {
        return TokenValidity::Invalid {
            reason: InvalidReason::BadSignature,
        };
    }
    if token.audience != presenting_audience {
        return TokenValidity::Invalid {
            reason: InvalidReason::AudienceMismatch,
        };
    }
    if now >= token.expires_at {
        return TokenValidity::Invalid {
            reason: InvalidReason::Expired,
        };
    }
    TokenValidity::Valid {
        scope: token.scope.clone(),
        aal: token.aal,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QrState {
    Pending,
    Claimed,
    Completed,
    Expired,
}

/// Desktop-bridge session: the QR payload carries the IdP endpoint, the
/// session id, and the underlying flow's challenge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QrSession {
    pub qr_id: String,
    pub idp: PrincipalId,
    pub nonce: String,
    pub desktop_session: String,
    pub state: QrState,
    pub created_at: SimTime,
}

#[derive(Debug, Clone)]
struct RegistrationRecord {
    public_key: VerifyingKey,
    tee_grade: TeeGrade,
    last_counter: u64,
}

#[derive(Debug, Clone)]
struct PendingAuth {
    sp: PrincipalId,
    user: PrincipalId,
    requested: Vec<String>,
    redirect_session: String,
    csrf_token: String,
    origin: String,
    issued_at: SimTime,
}

#[derive(Debug, Clone)]
struct CodeEntry {
    sp: PrincipalId,
    user: PrincipalId,
    scope: BTreeMap<String, String>,
    aal: Aal,
    csrf_token: String,
    session: String,
    issued_at: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdpConfig {
    pub nonce_ttl_ms: u64,
    pub code_ttl_ms: u64,
    pub qr_ttl_ms: u64,
    pub token_ttl_ms: u64,
    pub max_aal: Aal,
}

impl Default for IdpConfig {
    fn default() -> Self {
        IdpConfig {
            nonce_ttl_ms: DEFAULT_TTL_MS,
            code_ttl_ms: DEFAULT_TTL_MS,
            qr_ttl_ms: DEFAULT_TTL_MS,
            token_ttl_ms: DEFAULT_TOKEN_TTL_MS,
            max_aal: Aal::Aal2,
        }
    }
}

/// Identity-provider actor state. Nonce, code, and pseudonym caches are
/// actor-local; the mailbox wrapper serializes access.
pub struct IdpState {
    pub id: PrincipalId,
    pub config: IdpConfig,
    token_key: SigningHandle,
    registered_sps: BTreeSet<PrincipalId>,
    registrations: BTreeMap<PrincipalId, BTreeMap<String, RegistrationRecord>>,
    repository: BTreeMap<PrincipalId, BTreeMap<String, IdentityAttribute>>,
    passwords: BTreeMap<PrincipalId, PasswordHash>,
    pending: BTreeMap<String, PendingAuth>,
    consumed_nonces: BTreeSet<String>,
    codes: BTreeMap<String, CodeEntry>,
    consumed_codes: BTreeSet<String>,
    pseudonyms_issued: BTreeSet<String>,
    qr_sessions: BTreeMap<String, QrSession>,
    pub locked_users: BTreeSet<PrincipalId>,
}

impl std::fmt::Debug for IdpState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IdpState")
            .field("id", &self.id)
            .field("registered_sps", &self.registered_sps.len())
            .field("pending", &self.pending.len())
            .finish()
    }
}

impl IdpState {
    pub fn new(id: impl Into<String>, config: IdpConfig, rng: &mut SimRng) -> IdpState {
        IdpState {
            id: id.into(),
            config,
            token_key: SigningHandle::generate(rng),
            registered_sps: BTreeSet::new(),
            registrations: BTreeMap::new(),
            repository: BTreeMap::new(),
            passwords: BTreeMap::new(),
            pending: BTreeMap::new(),
            consumed_nonces: BTreeSet::new(),
            codes: BTreeMap::new(),
            consumed_codes: BTreeSet::new(),
            pseudonyms_issued: BTreeSet::new(),
            qr_sessions: BTreeMap::new(),
            locked_users: BTreeSet::new(),
        }
    }

    pub fn token_verifying_key(&self) -> VerifyingKey {
        self.token_key.verifying_key()
    }

    pub fn register_sp(&mut self, sp: &str) {
        self.registered_sps.insert(sp.to_string());
    }

    pub fn sp_registered(&self, sp: &str) -> bool {
        self.registered_sps.contains(sp)
    }

    pub fn store_attribute(&mut self, user: &str, attribute: IdentityAttribute) {
        self.repository
            .entry(user.to_string())
            .or_default()
            .insert(attribute.name.clone(), attribute);
    }

    pub fn attribute_value(&self, user: &str, name: &str) -> Option<String> {
        self.repository
            .get(user)
            .and_then(|m| m.get(name))
            .map(|a| a.value.canonical())
    }

    pub fn has_verified_attribute(&self, user: &str, name: &str) -> bool {
        self.repository.get(user).is_some_and(|m| m.contains_key(name))
    }

    pub fn register_password(&mut self, user: &str, password: &str, params: PasswordParams, rng: &mut SimRng) {
        self.passwords
            .insert(user.to_string(), hash_password(password, params, rng));
    }

    /// Fig-style step 2: the SP delegates authentication, minting fresh
    /// nonce and CSRF values.
    pub fn begin_authorization(
        &mut self,
        sp: &str,
        user: &str,
        requested: &[String],
        redirect_session: &str,
        origin: &str,
        now: SimTime,
        rng: &mut SimRng,
    ) -> Result<AuthorizationRequest, FederationError> {
        if !self.registered_sps.contains(sp) {
            return Err(FederationError::UnknownClient(sp.to_string()));
        }
        if self.locked_users.contains(user) {
            return Err(FederationError::AccountLocked);
        }
        let nonce = rng.id128();
        let csrf_token = rng.id128();
        self.pending.insert(
            nonce.clone(),
            PendingAuth {
                sp: sp.to_string(),
                user: user.to_string(),
                requested: requested.to_vec(),
                redirect_session: redirect_session.to_string(),
                csrf_token: csrf_token.clone(),
                origin: origin.to_string(),
                issued_at: now,
            },
        );
        Ok(AuthorizationRequest {
            idp: self.id.clone(),
            sp: sp.to_string(),
            user: user.to_string(),
            requested_attributes: requested.to_vec(),
            redirect_session: redirect_session.to_string(),
            nonce,
            csrf_token,
            origin: origin.to_string(),
        })
    }

    /// FIDO registration phase: mint an enrollment challenge and accept the
    /// device's registration message.
    pub fn enrollment_challenge(&mut self, rng: &mut SimRng) -> String {
        rng.id128()
    }

    pub fn complete_registration(
        &mut self,
        account: &str,
        registration: &KeyRegistration,
    ) -> Result<(), FederationError> {
        let bytes = assertion_signing_bytes(
            &registration.credential_id,
            &registration.relying_party,
            &registration.challenge,
            "registration",
            0,
        );
        if !registration.public_key.verify(&bytes, &registration.signature) {
            return Err(FederationError::AuthenticationFailed(
                "registration self-signature invalid".into(),
            ));
        }
        self.registrations
            .entry(account.to_string())
            .or_default()
            .insert(
                registration.credential_id.clone(),
                RegistrationRecord {
                    public_key: registration.public_key.clone(),
                    tee_grade: registration.tee_grade,
                    last_counter: 0,
                },
            );
        Ok(())
    }

    pub fn revoke_credential(&mut self, account: &str, credential_id: &str) {
        if let Some(creds) = self.registrations.get_mut(account) {
            creds.remove(credential_id);
        }
    }

    pub fn credential_count(&self, account: &str) -> usize {
        self.registrations.get(account).map_or(0, |m| m.len())
    }

    fn verify_assertion(
        &mut self,
        account: &str,
        assertion: &Assertion,
        expect_challenge: &str,
        expect_origin: &str,
    ) -> Result<TeeGrade, FederationError> {
        if assertion.challenge != expect_challenge {
            return Err(FederationError::AuthenticationFailed(
                "challenge mismatch".into(),
            ));
        }
        if assertion.channel_binding != expect_origin {
            return Err(FederationError::AuthenticationFailed(
                "channel binding does not match session origin".into(),
            ));
        }
        let record = self
            .registrations
            .get_mut(account)
            .and_then(|m| m.get_mut(&assertion.credential_id))
            .ok_or(FederationError::NoCredential)?;
        if assertion.counter <= record.last_counter {
            return Err(FederationError::AuthenticationFailed(
                "signature counter did not increase".into(),
            ));
        }
        let bytes = assertion_signing_bytes(
            &assertion.credential_id,
            &assertion.relying_party,
            &assertion.challenge,
            &assertion.channel_binding,
            assertion.counter,
        );
        if !record.public_key.verify(&bytes, &assertion.signature) {
            return Err(FederationError::AuthenticationFailed(
                "assertion signature invalid".into(),
            ));
        }
        record.last_counter = assertion.counter;
        Ok(record.tee_grade)
    }

    /// Fig-style steps 3-5: verify the FIDO assertion against the pending
    /// nonce, require consent on every requested attribute, and mint a
    /// single-use authorization code.
    pub fn complete_fido_authentication(
        &mut self,
        nonce: &str,
        assertion: &Assertion,
        consent: &[(String, crate::identity::ConsentDecision)],
        now: SimTime,
        rng: &mut SimRng,
    ) -> Result<String, FederationError> {
        if self.consumed_nonces.contains(nonce) {
            return Err(FederationError::ReplayDetected);
        }
        let pending = self
            .pending
            .get(nonce)
            .ok_or(FederationError::ReplayDetected)?
            .clone();
        if now.since(pending.issued_at) > self.config.nonce_ttl_ms {
            return Err(FederationError::Expired);
        }
        if self.locked_users.contains(&pending.user) {
            return Err(FederationError::AccountLocked);
        }
        for name in &pending.requested {
            let decision = consent
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, d)| *d)
                .unwrap_or(crate::identity::ConsentDecision::Deny);
            if decision == crate::identity::ConsentDecision::Deny {
                return Err(FederationError::ConsentDenied(name.clone()));
            }
        }
        let tee_grade = self.verify_assertion(&pending.user, assertion, nonce, &pending.origin)?;
        // Attribute values released at step 5 come from the verified repository.
        let mut scope = BTreeMap::new();
        for name in &pending.requested {
            let value = self
                .attribute_value(&pending.user, name)
                .ok_or_else(|| FederationError::AttributeUnavailable(name.clone()))?;
            scope.insert(name.clone(), value);
        }
        let factor = AuthFactor::new(match tee_grade {
            TeeGrade::Tee => FactorKind::FidoTee,
            TeeGrade::Software => FactorKind::FidoSoftware,
        });
        let aal = aal_for_factors(&BTreeSet::from([factor])).min(self.config.max_aal);
        self.consumed_nonces.insert(nonce.to_string());
        self.pending.remove(nonce);
        let code = rng.id128();
        self.codes.insert(
            code.clone(),
            CodeEntry {
                sp: pending.sp,
                user: pending.user,
                scope,
                aal,
                csrf_token: pending.csrf_token,
                session: pending.redirect_session,
                issued_at: now,
            },
        );
        Ok(code)
    }

    /// Baseline flow: a memory-hard password verification replaces the FIDO
    /// assertion; everything else is identical.
    pub fn complete_password_authentication(
        &mut self,
        nonce: &str,
        password: &str,
        now: SimTime,
        rng: &mut SimRng,
    ) -> Result<String, FederationError> {
        if self.consumed_nonces.contains(nonce) {
            return Err(FederationError::ReplayDetected);
        }
        let pending = self
            .pending
            .get(nonce)
            .ok_or(FederationError::ReplayDetected)?
            .clone();
        if now.since(pending.issued_at) > self.config.nonce_ttl_ms {
            return Err(FederationError::Expired);
        }
        if self.locked_users.contains(&pending.user) {
            return Err(FederationError::AccountLocked);
        }
        let stored = self
            .passwords
            .get(&pending.user)
            .ok_or_else(|| FederationError::AuthenticationFailed("no password enrolled".into()))?;
        if !verify_password(password, stored) {
            return Err(FederationError::AuthenticationFailed("wrong password".into()));
        }
        let mut scope = BTreeMap::new();
        for name in &pending.requested {
            let value = self
                .attribute_value(&pending.user, name)
                .ok_or_else(|| FederationError::AttributeUnavailable(name.clone()))?;
            scope.insert(name.clone(), value);
        }
        let aal = aal_for_factors(&BTreeSet::from([AuthFactor::new(FactorKind::BackupPassword)]))
            .min(self.config.max_aal);
        self.consumed_nonces.insert(nonce.to_string());
        self.pending.remove(nonce);
        let code = rng.id128();
        self.codes.insert(
            code.clone(),
            CodeEntry {
                sp: pending.sp,
                user: pending.user,
                scope,
                aal,
                csrf_token: pending.csrf_token,
                session: pending.redirect_session,
                issued_at: now,
            },
        );
        Ok(code)
    }

    /// Mint a code outside the assertion path (verdict tokens, the MC proxy,
    /// credential-based logins). The caller has already authenticated the
    /// user by other means.
    pub fn issue_direct_code(
        &mut self,
        sp: &str,
        user: &str,
        scope: BTreeMap<String, String>,
        aal: Aal,
        session: &str,
        csrf_token: &str,
        now: SimTime,
        rng: &mut SimRng,
    ) -> Result<String, FederationError> {
        if !self.registered_sps.contains(sp) {
            return Err(FederationError::UnknownClient(sp.to_string()));
        }
        let code = rng.id128();
        self.codes.insert(
            code.clone(),
            CodeEntry {
                sp: sp.to_string(),
                user: user.to_string(),
                scope,
                aal: aal.min(self.config.max_aal),
                csrf_token: csrf_token.to_string(),
                session: session.to_string(),
                issued_at: now,
            },
        );
        Ok(code)
    }

    /// Back-channel code exchange: only the bound SP with the flow's CSRF
    /// token gets the token; codes are single-use. Returns the token plus
    /// the authenticated user, which the caller needs for the disclosure
    /// ledger (the token itself carries only the pseudonym).
    pub fn exchange_code_for_token(
        &mut self,
        code: &str,
        sp: &str,
        csrf_token: &str,
        now: SimTime,
        rng: &mut SimRng,
    ) -> Result<(AccessToken, PrincipalId), FederationError> {
        if self.consumed_codes.contains(code) {
            return Err(FederationError::ReplayDetected);
        }
        let entry = self
            .codes
            .get(code)
            .ok_or(FederationError::ReplayDetected)?;
        if entry.sp != sp {
            return Err(FederationError::AudienceMismatch);
        }
        if entry.csrf_token != csrf_token {
            return Err(FederationError::CsrfRejected);
        }
        if now.since(entry.issued_at) > self.config.code_ttl_ms {
            return Err(FederationError::Expired);
        }
        let entry = self.codes.remove(code).expect("checked above");
        self.consumed_codes.insert(code.to_string());
        let pseudonym = self.issue_pseudonym(&entry.session, rng);
        Ok(self.sign_token(
            &pseudonym.value,
            &entry.sp,
            entry.scope,
            entry.aal,
            now,
        ))
    }

    fn sign_token(
        &mut self,
        subject: &str,
        audience: &str,
        scope: BTreeMap<String, String>,
        aal: Aal,
        now: SimTime,
    ) -> AccessToken {
        let mut token = AccessToken {
            subject: subject.to_string(),
            audience: audience.to_string(),
            scope,
            issued_at: now,
            expires_at: now.plus_millis(self.config.token_ttl_ms),
            aal,
            issuer: self.id.clone(),
            signature: Signature(String::new()),
        };
        token.signature = self.token_key.sign(&token_signing_bytes(&token));
        token
    }

    /// Fresh one-time pseudonym; uniqueness is enforced across this
    /// provider's lifetime.
    pub fn issue_pseudonym(&mut self, session: &str, rng: &mut SimRng) -> Pseudonym {
        loop {
            let value = rng.id128();
            if self.pseudonyms_issued.insert(value.clone()) {
                return Pseudonym {
                    value,
                    session: session.to_string(),
                };
            }
        }
    }

    pub fn pseudonyms_issued(&self) -> usize {
        self.pseudonyms_issued.len()
    }

    /// Wrap a pending authorization into a QR session for a desktop.
    pub fn qr_bridge(&mut self, nonce: &str, desktop_session: &str, now: SimTime, rng: &mut SimRng) -> QrSession {
        let qr = QrSession {
            qr_id: rng.id128(),
            idp: self.id.clone(),
            nonce: nonce.to_string(),
            desktop_session: desktop_session.to_string(),
            state: QrState::Pending,
            created_at: now,
        };
        self.qr_sessions.insert(qr.qr_id.clone(), qr.clone());
        qr
    }

    /// Device-side claim of a QR session: a valid assertion against the
    /// wrapped flow completes the desktop session with an authorization code.
    pub fn claim_qr(
        &mut self,
        qr_id: &str,
        assertion: &Assertion,
        consent: &[(String, crate::identity::ConsentDecision)],
        now: SimTime,
        rng: &mut SimRng,
    ) -> Result<String, FederationError> {
        let session = self
            .qr_sessions
            .get(qr_id)
            .ok_or(FederationError::AuthenticationFailed("unknown qr session".into()))?
            .clone();
        match session.state {
            QrState::Pending => {}
            QrState::Claimed | QrState::Completed => return Err(FederationError::AlreadyClaimed),
            QrState::Expired => return Err(FederationError::Expired),
        }
        if now.since(session.created_at) > self.config.qr_ttl_ms {
            self.qr_sessions.get_mut(qr_id).expect("present").state = QrState::Expired;
            return Err(FederationError::Expired);
        }
        self.qr_sessions.get_mut(qr_id).expect("present").state = QrState::Claimed;
        let code = self.complete_fido_authentication(&session.nonce, assertion, consent, now, rng);
        if code.is_ok() {
            self.qr_sessions.get_mut(qr_id).expect("present").state = QrState::Completed;
        }
        code
    }

    pub fn qr_state(&self, qr_id: &str) -> Option<QrState> {
        self.qr_sessions.get(qr_id).map(|s| s.state)
    }

    /// Pending flow metadata needed by the simulation wrapper.
    pub fn pending_flow(&self, nonce: &str) -> Option<(PrincipalId, PrincipalId, String)> {
        self.pending
            .get(nonce)
            .map(|p| (p.sp.clone(), p.user.clone(), p.csrf_token.clone()))
    }
}
