//! Privacy-preserving attribute-based access control: blind issuance of
//! single-show selective-disclosure tokens, presentation and verification,
//! and sealed credential backups.
//!
//! Construction: each attribute is bound by a salted leaf commitment; the
//! leaves aggregate into a root; the issuer blind-signs (serial, root). A
//! presentation reveals openings for the disclosed subset plus the bare
//! leaves for the rest, so the verifier can recompute the root without ever
//! seeing an undisclosed value. Unlinkability across sessions comes from
//! spending a distinct token per session; batch issuance keeps a supply.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

use crate::crypto::{commitment_root, leaf_commitment, Opening};
use crate::crypto::{BlindIssuerKey, BlindVerifierKey, BlindedRequest};
use crate::crypto::{SealedBlob, SealedStore};
use crate::identity::PrincipalId;
use crate::rng::SimRng;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PabacError {
    #[error("attribute {0:?} is not verified at this issuer for the user")]
    AttributeNotVerified(String),
    #[error("token already spent")]
    TokenSpent,
    #[error("credential has no attribute {0:?}")]
    NoSuchAttribute(String),
    #[error("no fresh token covers the required attributes")]
    NoCoveringToken,
    #[error("issuance response malformed: {0}")]
    IssuanceFailed(String),
    #[error("backup cannot be opened (wrong key or tampered blob)")]
    BackupIntegrity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShowState {
    Fresh,
    Spent,
}

/// A single-show selective-disclosure token held by the user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeCredential {
    /// Random serial chosen by the user, unknown to the issuer at issuance.
    pub serial: String,
    pub attributes: BTreeMap<String, String>,
    /// Per-attribute commitment salts (user-held opening material).
    pub salts: BTreeMap<String, String>,
    pub issuer: PrincipalId,
    /// Blind RSA signature over (serial, commitment root).
    pub signature: String,
    pub state: ShowState,
}

#[derive(Serialize)]
struct CredentialBody<'a> {
    serial: &'a str,
    root: &'a str,
}

fn credential_signing_bytes(serial: &str, root: &str) -> Vec<u8> {
    crate::util::canonical_json(&CredentialBody { serial, root })
}

impl AttributeCredential {
    fn leaves(&self) -> Vec<(String, String)> {
        self.attributes
            .iter()
            .map(|(name, value)| {
                let salt = crate::util::b64_decode(&self.salts[name]).expect("salt");
                (name.clone(), leaf_commitment(name, value, &salt))
            })
            .collect()
    }

    pub fn root(&self) -> String {
        commitment_root(&self.leaves())
    }

    pub fn covers(&self, required: &[String]) -> bool {
        required.iter().all(|r| self.attributes.contains_key(r))
    }
}

/// Serialized presentation: openings for the disclosed subset, bare leaves
/// for everything else. Undisclosed values are structurally absent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Presentation {
    pub issuer: PrincipalId,
    pub serial: String,
    pub signature: String,
    pub openings: Vec<Opening>,
    pub undisclosed_leaves: BTreeMap<String, String>,
    pub session_pseudonym: String,
}

/// Spend one token, disclosing exactly `disclose`.
pub fn present_credential(
    token: &mut AttributeCredential,
    disclose: &BTreeSet<String>,
    session_pseudonym: &str,
) -> Result<Presentation, PabacError> {
    if token.state == ShowState::Spent {
        return Err(PabacError::TokenSpent);
    }
    for name in disclose {
        if !token.attributes.contains_key(name) {
            return Err(PabacError::NoSuchAttribute(name.clone()));
        }
    }
    let mut openings = Vec::new();
    let mut undisclosed_leaves = BTreeMap::new();
    for (name, value) in &token.attributes {
        if disclose.contains(name) {
            openings.push(Opening {
                name: name.clone(),
                value: value.clone(),
                salt: token.salts[name].clone(),
            });
        } else {
            let salt = crate::util::b64_decode(&token.salts[name]).expect("salt");
            undisclosed_leaves.insert(name.clone(), leaf_commitment(name, value, &salt));
        }
    }
    token.state = ShowState::Spent;
    Ok(Presentation {
        issuer: token.issuer.clone(),
        serial: token.serial.clone(),
        signature: token.signature.clone(),
        openings,
        undisclosed_leaves,
        session_pseudonym: session_pseudonym.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    UntrustedIssuer,
    BadSignature,
    OpeningMismatch,
    DoubleSpend,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerifyOutcome {
    Accept { disclosed: BTreeMap<String, String> },
    Reject(RejectReason),
}

/// Verifier-side state: trusted issuer keys plus the local double-spend set.
#[derive(Debug, Default)]
pub struct VerifierState {
    trusted_issuers: BTreeMap<PrincipalId, BlindVerifierKey>,
    seen_serials: BTreeSet<String>,
}

impl VerifierState {
    pub fn trust_issuer(&mut self, issuer: &str, key: BlindVerifierKey) {
        self.trusted_issuers.insert(issuer.to_string(), key);
    }

    /// Accept iff the signature is valid, every opening matches its leaf,
    /// and the serial has not been seen before. Serials are recorded only on
    /// accept.
    pub fn verify_presentation(&mut self, presentation: &Presentation) -> VerifyOutcome {
        let Some(key) = self.trusted_issuers.get(&presentation.issuer) else {
            return VerifyOutcome::Reject(RejectReason::UntrustedIssuer);
        };
        let mut leaves: Vec<(String, String)> = presentation
            .undisclosed_leaves
            .iter()
            .map(|(n, l)| (n.clone(), l.clone()))
            .collect();
        for opening in &presentation.openings {
            let Some(salt) = crate::util::b64_decode(&opening.salt) else {
                return VerifyOutcome::Reject(RejectReason::OpeningMismatch);
            };
            leaves.push((
                opening.name.clone(),
                leaf_commitment(&opening.name, &opening.value, &salt),
            ));
        }
        let root = commitment_root(&leaves);
        let bytes = credential_signing_bytes(&presentation.serial, &root);
        if !key.verify(&bytes, &presentation.signature) {
            // Distinguish a flipped disclosed value from a bad signature by
            // recomputing with openings dropped: if the signature binds a
            // different root, the openings are the mismatch.
            return VerifyOutcome::Reject(if presentation.openings.is_empty() {
                RejectReason::BadSignature
            } else {
                RejectReason::OpeningMismatch
            });
        }
        if self.seen_serials.contains(&presentation.serial) {
            return VerifyOutcome::Reject(RejectReason::DoubleSpend);
        }
        self.seen_serials.insert(presentation.serial.clone());
        let disclosed = presentation
            .openings
            .iter()
            .map(|o| (o.name.clone(), o.value.clone()))
            .collect();
        VerifyOutcome::Accept { disclosed }
    }

    pub fn seen_serials(&self) -> &BTreeSet<String> {
        &self.seen_serials
    }
}

// ---------------------------------------------------------------------------
// Issuance
// ---------------------------------------------------------------------------

/// What the requester sends: the attribute claim (checked against the
/// issuer's repository) plus one blinded element per token.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IssuanceRequest {
    pub user: PrincipalId,
    pub attributes: BTreeMap<String, String>,
    pub blinded: Vec<BlindedRequest>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IssuanceResponse {
    pub blind_signatures: Vec<String>,
}

/// Issuance transcript entry, one per batch: everything the issuer saw.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IssuanceTranscript {
    pub user: PrincipalId,
    pub blinded: Vec<String>,
    pub blind_signatures: Vec<String>,
}

/// Issuer actor state for credential issuance.
pub struct IssuerState {
    pub id: PrincipalId,
    key: BlindIssuerKey,
    pub transcript: Vec<IssuanceTranscript>,
}

impl std::fmt::Debug for IssuerState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IssuerState")
            .field("id", &self.id)
            .field("batches", &self.transcript.len())
            .finish()
    }
}

impl IssuerState {
    pub fn new(id: impl Into<String>, rng: &mut SimRng, rsa_bits: usize) -> IssuerState {
        IssuerState {
            id: id.into(),
            key: BlindIssuerKey::generate(rng, rsa_bits),
            transcript: Vec::new(),
        }
    }

    pub fn verifier_key(&self) -> BlindVerifierKey {
        self.key.verifier_key()
    }

    /// Blind-sign a batch after checking the claimed attributes against the
    /// caller-supplied repository view.
    pub fn handle_issuance(
        &mut self,
        request: &IssuanceRequest,
        verified: &BTreeMap<String, String>,
    ) -> Result<IssuanceResponse, PabacError> {
        for (name, value) in &request.attributes {
            match verified.get(name) {
                Some(v) if v == value => {}
                _ => return Err(PabacError::AttributeNotVerified(name.clone())),
            }
        }
        let mut blind_signatures = Vec::with_capacity(request.blinded.len());
        for blinded in &request.blinded {
            let sig = self
                .key
                .sign_blinded(blinded)
                .ok_or_else(|| PabacError::IssuanceFailed("malformed blinded element".into()))?;
            blind_signatures.push(sig);
        }
        self.transcript.push(IssuanceTranscript {
            user: request.user.clone(),
            blinded: request.blinded.iter().map(|b| b.0.clone()).collect(),
            blind_signatures: blind_signatures.clone(),
        });
        Ok(IssuanceResponse { blind_signatures })
    }
}

/// Requester-side pending state for one token in a batch.
pub struct PendingToken {
    serial: String,
    salts: BTreeMap<String, String>,
    root: String,
    unblinder: crate::crypto::blind::Unblinder,
}

/// Build a batch issuance request for `batch` tokens over `attributes`.
pub fn build_issuance(
    user: &str,
    attributes: &BTreeMap<String, String>,
    batch: usize,
    issuer_key: &BlindVerifierKey,
    rng: &mut SimRng,
) -> (IssuanceRequest, Vec<PendingToken>) {
    let mut blinded = Vec::with_capacity(batch);
    let mut pending = Vec::with_capacity(batch);
    for _ in 0..batch {
        let serial = rng.id128();
        let mut salts = BTreeMap::new();
        let mut leaves = Vec::new();
        for (name, value) in attributes {
            let salt = crate::crypto::commit::fresh_salt(rng);
            leaves.push((name.clone(), leaf_commitment(name, value, &salt)));
            salts.insert(name.clone(), crate::util::b64(&salt));
        }
        let root = commitment_root(&leaves);
        let bytes = credential_signing_bytes(&serial, &root);
        let (blind_req, unblinder) = issuer_key.blind(&bytes, rng).expect("blinding");
        blinded.push(blind_req);
        pending.push(PendingToken {
            serial,
            salts,
            root,
            unblinder,
        });
    }
    (
        IssuanceRequest {
            user: user.to_string(),
            attributes: attributes.clone(),
            blinded,
        },
        pending,
    )
}

/// Unblind and verify the issuer's response into usable tokens.
pub fn finalize_issuance(
    pending: Vec<PendingToken>,
    response: &IssuanceResponse,
    issuer: &str,
    issuer_key: &BlindVerifierKey,
    attributes: &BTreeMap<String, String>,
) -> Result<Vec<AttributeCredential>, PabacError> {
    if response.blind_signatures.len() != pending.len() {
        return Err(PabacError::IssuanceFailed("batch size mismatch".into()));
    }
    let mut tokens = Vec::with_capacity(pending.len());
    for (p, blind_sig) in pending.into_iter().zip(&response.blind_signatures) {
        let signature = issuer_key
            .unblind(blind_sig, &p.unblinder)
            .ok_or_else(|| PabacError::IssuanceFailed("unblinding failed".into()))?;
        let bytes = credential_signing_bytes(&p.serial, &p.root);
        if !issuer_key.verify(&bytes, &signature) {
            return Err(PabacError::IssuanceFailed("issuer signature invalid".into()));
        }
        tokens.push(AttributeCredential {
            serial: p.serial,
            attributes: attributes.clone(),
            salts: p.salts,
            issuer: issuer.to_string(),
            signature,
            state: ShowState::Fresh,
        });
    }
    Ok(tokens)
}

// ---------------------------------------------------------------------------
// Wallet and backups
// ---------------------------------------------------------------------------

/// User-side token store.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
pub struct Wallet {
    pub tokens: Vec<AttributeCredential>,
}

impl Wallet {
    pub fn add(&mut self, tokens: Vec<AttributeCredential>) {
        self.tokens.extend(tokens);
    }

    pub fn fresh_count(&self) -> usize {
        self.tokens
            .iter()
            .filter(|t| t.state == ShowState::Fresh)
            .count()
    }

    /// First fresh token covering the required attribute names.
    pub fn find_covering(&mut self, required: &[String]) -> Result<&mut AttributeCredential, PabacError> {
        self.tokens
            .iter_mut()
            .find(|t| t.state == ShowState::Fresh && t.covers(required))
            .ok_or(PabacError::NoCoveringToken)
    }
}

/// Sealed credential backup held at the consolidator; opaque without the
/// user's backup password.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialBackup {
    pub owner: PrincipalId,
    pub blob: SealedBlob,
    pub version: u64,
}

pub fn backup_tokens(
    owner: &str,
    wallet: &Wallet,
    backup_password: &str,
    version: u64,
) -> CredentialBackup {
    let fresh: Vec<&AttributeCredential> = wallet
        .tokens
        .iter()
        .filter(|t| t.state == ShowState::Fresh)
        .collect();
    let body = crate::util::canonical_json(&fresh);
    let key = crate::crypto::password::derive_key(backup_password, "credential-backup");
    CredentialBackup {
        owner: owner.to_string(),
        blob: SealedStore::seal_with_key(&key, version, &body),
        version,
    }
}

pub fn restore_tokens(
    backup: &CredentialBackup,
    backup_password: &str,
) -> Result<Vec<AttributeCredential>, PabacError> {
    let key = crate::crypto::password::derive_key(backup_password, "credential-backup");
    let body = SealedStore::open_with_key(&key, &backup.blob)
        .map_err(|_| PabacError::BackupIntegrity)?;
    serde_json::from_slice(&body).map_err(|_| PabacError::BackupIntegrity)
}
