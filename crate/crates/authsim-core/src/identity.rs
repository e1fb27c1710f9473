//! Shared identity vocabulary: principals, attributes, assurance levels,
//! consent policies, and the attribute normalization/fusion logic that the
//! identity-integration surface runs on every acquired attribute.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;
use thiserror::Error;

use crate::time::SimTime;

pub type PrincipalId = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrincipalRole {
    User,
    Sp,
    Idp,
    Idc,
    Baa,
    Mno,
}

/// An actor in the simulation. Role is fixed at creation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Principal {
    pub id: PrincipalId,
    pub role: PrincipalRole,
    pub display_name: String,
}

impl Principal {
    pub fn new(id: impl Into<String>, role: PrincipalRole, display_name: impl Into<String>) -> Self {
        Principal {
            id: id.into(),
            role,
            display_name: display_name.into(),
        }
    }
}

/// Authenticator Assurance Levels, totally ordered.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Aal {
    #[default]
    None,
    Aal1,
    Aal2,
    Aal3,
}

impl std::fmt::Display for Aal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Aal::None => "none",
            Aal::Aal1 => "AAL1",
            Aal::Aal2 => "AAL2",
            Aal::Aal3 => "AAL3",
        };
        f.write_str(s)
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    BackupPassword,
    Behavioral,
    FidoSoftware,
    FidoTee,
    MobileConnectSms,
    DocumentMatch,
}

/// One satisfied authentication modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AuthFactor {
    pub kind: FactorKind,
    pub hardware_backed: bool,
}

impl AuthFactor {
    pub fn new(kind: FactorKind) -> AuthFactor {
        AuthFactor {
            kind,
            // FidoTee implies hardware backing.
            hardware_backed: matches!(kind, FactorKind::FidoTee),
        }
    }
}

/// Decision table mapping a factor set to the highest satisfied AAL.
///
/// AAL3 needs the TEE-backed FIDO authenticator plus a second distinct
/// factor; any FIDO authenticator alone reaches AAL2; a backup password or a
/// matched identity document reaches AAL1. Behavioral authentication never
/// grants a level by itself.
pub fn aal_for_factors(factors: &BTreeSet<AuthFactor>) -> Aal {
    let kinds: BTreeSet<FactorKind> = factors.iter().map(|f| f.kind).collect();
    let has = |k: FactorKind| kinds.contains(&k);
    if has(FactorKind::FidoTee) && kinds.len() >= 2 {
        Aal::Aal3
    } else if has(FactorKind::FidoSoftware) || has(FactorKind::FidoTee) {
        Aal::Aal2
    } else if has(FactorKind::BackupPassword) || has(FactorKind::DocumentMatch) {
        Aal::Aal1
    } else {
        Aal::None
    }
}

// ---------------------------------------------------------------------------
// Attributes and schemas
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueType {
    Text,
    Integer,
    Date,
    Boolean,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum AttributeValue {
    Text(String),
    Integer(i64),
    /// ISO-8601 calendar date.
    Date(String),
    Boolean(bool),
}

impl AttributeValue {
    pub fn value_type(&self) -> ValueType {
        match self {
            AttributeValue::Text(_) => ValueType::Text,
            AttributeValue::Integer(_) => ValueType::Integer,
            AttributeValue::Date(_) => ValueType::Date,
            AttributeValue::Boolean(_) => ValueType::Boolean,
        }
    }

    /// Canonical string form used in commitments, token scopes, and the
    /// population table.
    pub fn canonical(&self) -> String {
        match self {
            AttributeValue::Text(s) => s.clone(),
            AttributeValue::Integer(i) => i.to_string(),
            AttributeValue::Date(d) => d.clone(),
            AttributeValue::Boolean(b) => b.to_string(),
        }
    }
}

/// Normalization rules the integration surface applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationRule {
    /// Trim and case-fold text.
    #[default]
    CaseFold,
    /// Parse to an ISO-8601 date. `day_first` disambiguates `01/02/1990`.
    Date {
        day_first: bool,
    },
    /// Country names to ISO-3166 alpha-2 codes.
    CountryCode,
    /// Parse decimal integer.
    Integer,
    /// Parse boolean (`true`/`false`/`yes`/`no`/`1`/`0`).
    Boolean,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub name: String,
    pub value_type: ValueType,
    #[serde(default)]
    pub rule: NormalizationRule,
}

/// One schema entry per attribute name.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SchemaSet {
    entries: BTreeMap<String, AttributeSchema>,
}

impl SchemaSet {
    pub fn new(schemas: impl IntoIterator<Item = AttributeSchema>) -> SchemaSet {
        let mut entries = BTreeMap::new();
        for s in schemas {
            entries.insert(s.name.clone(), s);
        }
        SchemaSet { entries }
    }

    pub fn get(&self, name: &str) -> Option<&AttributeSchema> {
        self.entries.get(name)
    }

    pub fn insert(&mut self, schema: AttributeSchema) {
        self.entries.insert(schema.name.clone(), schema);
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    /// The default vocabulary scenarios start from.
    pub fn standard() -> SchemaSet {
        SchemaSet::new([
            AttributeSchema {
                name: "name".into(),
                value_type: ValueType::Text,
                rule: NormalizationRule::CaseFold,
            },
            AttributeSchema {
                name: "age".into(),
                value_type: ValueType::Integer,
                rule: NormalizationRule::Integer,
            },
            AttributeSchema {
                name: "birthdate".into(),
                value_type: ValueType::Date,
                rule: NormalizationRule::Date { day_first: true },
            },
            AttributeSchema {
                name: "country".into(),
                value_type: ValueType::Text,
                rule: NormalizationRule::CountryCode,
            },
            AttributeSchema {
                name: "over18".into(),
                value_type: ValueType::Boolean,
                rule: NormalizationRule::Boolean,
            },
            AttributeSchema {
                name: "msisdn".into(),
                value_type: ValueType::Text,
                rule: NormalizationRule::CaseFold,
            },
            AttributeSchema {
                name: "email".into(),
                value_type: ValueType::Text,
                rule: NormalizationRule::CaseFold,
            },
        ])
    }
}

/// An attested identity attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityAttribute {
    pub name: String,
    pub value: AttributeValue,
    /// Attesting IdP (or the consolidator's document intake).
    pub source: PrincipalId,
    pub verified_at: SimTime,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdentityError {
    #[error("attribute {0:?} has no schema entry")]
    SchemaError(String),
    #[error("cannot normalize {name:?} value {raw:?}: {reason}")]
    NormalizationError {
        name: String,
        raw: String,
        reason: String,
    },
}

static COUNTRY_TABLE: OnceLock<BTreeMap<String, String>> = OnceLock::new();

fn country_table() -> &'static BTreeMap<String, String> {
    COUNTRY_TABLE.get_or_init(|| {
        let mut map = BTreeMap::new();
        for line in include_str!("../fixtures/iso3166.csv").lines().skip(1) {
            if let Some((name, code)) = line.rsplit_once(',') {
                map.insert(name.trim().to_lowercase(), code.trim().to_string());
            }
        }
        map
    })
}

/// Canonicalize a raw value per the schema rule for `name`.
pub fn normalize_attribute(
    schemas: &SchemaSet,
    name: &str,
    raw: &str,
    source: &str,
    verified_at: SimTime,
) -> Result<IdentityAttribute, IdentityError> {
    let schema = schemas
        .get(name)
        .ok_or_else(|| IdentityError::SchemaError(name.to_string()))?;
    let value = normalize_value(schema, raw)?;
    Ok(IdentityAttribute {
        name: name.to_string(),
        value,
        source: source.to_string(),
        verified_at,
    })
}

pub fn normalize_value(
    schema: &AttributeSchema,
    raw: &str,
) -> Result<AttributeValue, IdentityError> {
    let fail = |reason: &str| IdentityError::NormalizationError {
        name: schema.name.clone(),
        raw: raw.to_string(),
        reason: reason.to_string(),
    };
    let trimmed = raw.trim();
    match schema.rule {
        NormalizationRule::CaseFold => Ok(AttributeValue::Text(trimmed.to_lowercase())),
        NormalizationRule::None => Ok(AttributeValue::Text(trimmed.to_string())),
        NormalizationRule::Integer => trimmed
            .parse::<i64>()
            .map(AttributeValue::Integer)
            .map_err(|_| fail("not a decimal integer")),
        NormalizationRule::Boolean => match trimmed.to_lowercase().as_str() {
            "true" | "yes" | "1" => Ok(AttributeValue::Boolean(true)),
            "false" | "no" | "0" => Ok(AttributeValue::Boolean(false)),
            _ => Err(fail("not a boolean")),
        },
        NormalizationRule::CountryCode => {
            if trimmed.len() == 2 && trimmed.chars().all(|c| c.is_ascii_alphabetic()) {
                let code = trimmed.to_uppercase();
                if country_table().values().any(|v| *v == code) {
                    return Ok(AttributeValue::Text(code));
                }
            }
            country_table()
                .get(&trimmed.to_lowercase())
                .map(|code| AttributeValue::Text(code.clone()))
                .ok_or_else(|| fail("unknown country name"))
        }
        NormalizationRule::Date { day_first } => {
            parse_date(trimmed, day_first).map(AttributeValue::Date).ok_or_else(|| fail("unparseable date"))
        }
    }
}

fn parse_date(raw: &str, day_first: bool) -> Option<String> {
    let to_iso = |y: i64, m: i64, d: i64| -> Option<String> {
        let days_in_month = match m {
            1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
            4 | 6 | 9 | 11 => 30,
            2 => {
                if y % 4 == 0 && (y % 100 != 0 || y % 400 == 0) {
                    29
                } else {
                    28
                }
            }
            _ => return None,
        };
        if !(1..=9999).contains(&y) || !(1..=days_in_month).contains(&d) {
            return None;
        }
        Some(format!("{y:04}-{m:02}-{d:02}"))
    };
    if let Some((a, rest)) = raw.split_once('-') {
        // Already ISO-shaped: YYYY-MM-DD.
        let (b, c) = rest.split_once('-')?;
        return to_iso(a.parse().ok()?, b.parse().ok()?, c.parse().ok()?);
    }
    let parts: Vec<&str> = raw.split('/').collect();
    if parts.len() != 3 {
        return None;
    }
    let x: i64 = parts[0].parse().ok()?;
    let y: i64 = parts[1].parse().ok()?;
    let year: i64 = parts[2].parse().ok()?;
    let (day, month) = if day_first { (x, y) } else { (y, x) };
    to_iso(year, month, day)
}

/// Per-IdP trust scores used during fusion, configured by the scenario.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrustConfig {
    pub scores: BTreeMap<PrincipalId, i64>,
}

impl TrustConfig {
    pub fn score(&self, source: &str) -> i64 {
        self.scores.get(source).copied().unwrap_or(0)
    }

    pub fn set(&mut self, source: impl Into<String>, score: i64) {
        self.scores.insert(source.into(), score);
    }
}

/// Per-name conflict resolution: higher-trust source wins, ties broken by
/// newer `verified_at`; re-fusing an identical attribute is a no-op.
pub fn fuse_attributes(
    existing: &[IdentityAttribute],
    incoming: IdentityAttribute,
    trust: &TrustConfig,
) -> Vec<IdentityAttribute> {
    let mut by_name: BTreeMap<String, IdentityAttribute> = existing
        .iter()
        .map(|a| (a.name.clone(), a.clone()))
        .collect();
    match by_name.get(&incoming.name) {
        Some(current) => {
            let cur_key = (trust.score(&current.source), current.verified_at);
            let inc_key = (trust.score(&incoming.source), incoming.verified_at);
            if inc_key > cur_key {
                by_name.insert(incoming.name.clone(), incoming);
            }
        }
        None => {
            by_name.insert(incoming.name.clone(), incoming);
        }
    }
    by_name.into_values().collect()
}

// ---------------------------------------------------------------------------
// Consent
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsentDecision {
    Allow,
    Deny,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentGrant {
    pub attribute: String,
    pub audience: PrincipalId,
    pub decision: ConsentDecision,
    /// `None` means no expiry.
    pub expires_at: Option<SimTime>,
}

/// A user's consent policy: deny by default, at most one active grant per
/// (attribute, audience) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentPolicy {
    pub owner: PrincipalId,
    grants: Vec<ConsentGrant>,
}

impl ConsentPolicy {
    pub fn new(owner: impl Into<String>) -> ConsentPolicy {
        ConsentPolicy {
            owner: owner.into(),
            grants: Vec::new(),
        }
    }

    /// Insert or replace the grant for (attribute, audience).
    pub fn set_grant(&mut self, grant: ConsentGrant) {
        self.grants
            .retain(|g| !(g.attribute == grant.attribute && g.audience == grant.audience));
        self.grants.push(grant);
    }

    pub fn revoke(&mut self, attribute: &str, audience: &str) {
        self.grants
            .retain(|g| !(g.attribute == attribute && g.audience == audience));
    }

    pub fn grants(&self) -> &[ConsentGrant] {
        &self.grants
    }
}

/// Deny-by-default consent check. Unknown attribute names are schema errors.
pub fn evaluate_consent(
    policy: &ConsentPolicy,
    schemas: &SchemaSet,
    attribute: &str,
    audience: &str,
    now: SimTime,
) -> Result<ConsentDecision, IdentityError> {
    if schemas.get(attribute).is_none() {
        return Err(IdentityError::SchemaError(attribute.to_string()));
    }
    let decision = policy
        .grants
        .iter()
        .find(|g| {
            g.attribute == attribute
                && g.audience == audience
                && g.expires_at.map_or(true, |exp| now < exp)
        })
        .map(|g| g.decision)
        .unwrap_or(ConsentDecision::Deny);
    Ok(decision)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factors(kinds: &[FactorKind]) -> BTreeSet<AuthFactor> {
        kinds.iter().map(|&k| AuthFactor::new(k)).collect()
    }

    #[test]
    fn aal_anchor_examples() {
        use FactorKind::*;
        assert_eq!(aal_for_factors(&factors(&[BackupPassword, Behavioral])), Aal::Aal1);
        assert_eq!(aal_for_factors(&factors(&[FidoSoftware])), Aal::Aal2);
        assert_eq!(aal_for_factors(&factors(&[FidoTee, MobileConnectSms])), Aal::Aal3);
        assert_eq!(aal_for_factors(&factors(&[])), Aal::None);
    }

    #[test]
    fn behavioral_alone_grants_nothing() {
        assert_eq!(aal_for_factors(&factors(&[FactorKind::Behavioral])), Aal::None);
    }

    #[test]
    fn tee_alone_is_aal2() {
        assert_eq!(aal_for_factors(&factors(&[FactorKind::FidoTee])), Aal::Aal2);
    }

    #[test]
    fn aal_monotone_under_factor_addition() {
        use FactorKind::*;
        let all = [BackupPassword, Behavioral, FidoSoftware, FidoTee, MobileConnectSms, DocumentMatch];
        // Exhaustive over all 64 subsets: adding any factor never lowers.
        for mask in 0u32..64 {
            let base: Vec<FactorKind> = all
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, k)| *k)
                .collect();
            let base_aal = aal_for_factors(&factors(&base));
            for extra in all {
                let mut bigger = base.clone();
                bigger.push(extra);
                assert!(
                    aal_for_factors(&factors(&bigger)) >= base_aal,
                    "adding {extra:?} to {base:?} lowered the AAL"
                );
            }
        }
    }

    #[test]
    fn consent_direct_match_and_default_deny() {
        let schemas = SchemaSet::standard();
        let mut policy = ConsentPolicy::new("alice");
        policy.set_grant(ConsentGrant {
            attribute: "age".into(),
            audience: "sp1".into(),
            decision: ConsentDecision::Allow,
            expires_at: None,
        });
        let now = SimTime::from_secs(100);
        assert_eq!(
            evaluate_consent(&policy, &schemas, "age", "sp1", now).unwrap(),
            ConsentDecision::Allow
        );
        // No grant for this audience: deny by default.
        assert_eq!(
            evaluate_consent(&policy, &schemas, "age", "sp2", now).unwrap(),
            ConsentDecision::Deny
        );
        // Fresh policy denies everything.
        let fresh = ConsentPolicy::new("bob");
        for name in schemas.names() {
            assert_eq!(
                evaluate_consent(&fresh, &schemas, name, "sp1", now).unwrap(),
                ConsentDecision::Deny
            );
        }
    }

    #[test]
    fn consent_expiry_means_deny() {
        let schemas = SchemaSet::standard();
        let mut policy = ConsentPolicy::new("alice");
        policy.set_grant(ConsentGrant {
            attribute: "age".into(),
            audience: "sp1".into(),
            decision: ConsentDecision::Allow,
            expires_at: Some(SimTime::from_secs(50)),
        });
        assert_eq!(
            evaluate_consent(&policy, &schemas, "age", "sp1", SimTime::from_secs(49)).unwrap(),
            ConsentDecision::Allow
        );
        // Expired yesterday, queried today.
        assert_eq!(
            evaluate_consent(&policy, &schemas, "age", "sp1", SimTime::from_secs(51)).unwrap(),
            ConsentDecision::Deny
        );
    }

    #[test]
    fn consent_unknown_attribute_is_schema_error() {
        let schemas = SchemaSet::standard();
        let policy = ConsentPolicy::new("alice");
        assert_eq!(
            evaluate_consent(&policy, &schemas, "shoe_size", "sp1", SimTime::ZERO),
            Err(IdentityError::SchemaError("shoe_size".into()))
        );
    }

    #[test]
    fn single_active_grant_per_pair() {
        let mut policy = ConsentPolicy::new("alice");
        for decision in [ConsentDecision::Allow, ConsentDecision::Deny] {
            policy.set_grant(ConsentGrant {
                attribute: "age".into(),
                audience: "sp1".into(),
                decision,
                expires_at: None,
            });
        }
        assert_eq!(policy.grants().len(), 1);
        assert_eq!(policy.grants()[0].decision, ConsentDecision::Deny);
    }

    #[test]
    fn normalize_country_via_fixture_table() {
        // Expected codes come from the shipped ISO-3166 fixture itself.
        let schemas = SchemaSet::standard();
        for (name, code) in [("Cyprus", "CY"), ("Germany", "DE"), ("  greece ", "GR")] {
            let attr = normalize_attribute(&schemas, "country", name, "idp1", SimTime::ZERO).unwrap();
            assert_eq!(attr.value, AttributeValue::Text(code.into()));
        }
        // Alpha-2 codes pass through.
        let attr = normalize_attribute(&schemas, "country", "cy", "idp1", SimTime::ZERO).unwrap();
        assert_eq!(attr.value, AttributeValue::Text("CY".into()));
        assert!(normalize_attribute(&schemas, "country", "Atlantis", "idp1", SimTime::ZERO).is_err());
    }

    #[test]
    fn normalize_date_day_first() {
        let schemas = SchemaSet::standard();
        // Day-first rule: 01/02/1990 is the 1st of February.
        let attr =
            normalize_attribute(&schemas, "birthdate", "01/02/1990", "idp1", SimTime::ZERO).unwrap();
        assert_eq!(attr.value, AttributeValue::Date("1990-02-01".into()));
        // Month-first variant of the same raw string.
        let schema = AttributeSchema {
            name: "birthdate".into(),
            value_type: ValueType::Date,
            rule: NormalizationRule::Date { day_first: false },
        };
        assert_eq!(
            normalize_value(&schema, "01/02/1990").unwrap(),
            AttributeValue::Date("1990-01-02".into())
        );
        // ISO input passes through; nonsense fails.
        assert_eq!(
            normalize_value(&schema, "1990-02-01").unwrap(),
            AttributeValue::Date("1990-02-01".into())
        );
        assert!(normalize_value(&schema, "31/02/1990").is_err());
    }

    #[test]
    fn normalize_unparseable_integer_fails() {
        let schemas = SchemaSet::standard();
        let err = normalize_attribute(&schemas, "age", "abc", "idp1", SimTime::ZERO).unwrap_err();
        assert!(matches!(err, IdentityError::NormalizationError { .. }));
    }

    #[test]
    fn normalize_unknown_name_fails() {
        let schemas = SchemaSet::standard();
        assert_eq!(
            normalize_attribute(&schemas, "nope", "x", "idp1", SimTime::ZERO),
            Err(IdentityError::SchemaError("nope".into()))
        );
    }

    #[test]
    fn normalize_idempotent_on_own_output() {
        let schemas = SchemaSet::standard();
        for (name, raw) in [
            ("country", "Cyprus"),
            ("birthdate", "01/02/1990"),
            ("name", "  Alice Liddell "),
            ("age", "33"),
            ("over18", "YES"),
        ] {
            let once = normalize_attribute(&schemas, name, raw, "idp1", SimTime::ZERO).unwrap();
            let twice =
                normalize_attribute(&schemas, name, &once.value.canonical(), "idp1", SimTime::ZERO)
                    .unwrap();
            assert_eq!(once.value, twice.value, "{name} not idempotent");
        }
    }

    fn attr(name: &str, value: i64, source: &str, at: u64) -> IdentityAttribute {
        IdentityAttribute {
            name: name.into(),
            value: AttributeValue::Integer(value),
            source: source.into(),
            verified_at: SimTime(at),
        }
    }

    #[test]
    fn fusion_trust_order_checked_both_ways() {
        let mut trust = TrustConfig::default();
        trust.set("idp_low", 1);
        trust.set("idp_high", 2);
        // Enumerate both arrival orders; the higher-trust source wins both times.
        let low = attr("age", 33, "idp_low", 10);
        let high = attr("age", 34, "idp_high", 5);
        let fused_a = fuse_attributes(&[low.clone()], high.clone(), &trust);
        let fused_b = fuse_attributes(&[high.clone()], low.clone(), &trust);
        assert_eq!(fused_a, vec![high.clone()]);
        assert_eq!(fused_b, vec![high]);
    }

    #[test]
    fn fusion_identity_case() {
        let trust = TrustConfig::default();
        let incoming = attr("age", 33, "idp1", 1);
        assert_eq!(fuse_attributes(&[], incoming.clone(), &trust), vec![incoming]);
    }

    #[test]
    fn fusion_equal_trust_newer_wins() {
        let trust = TrustConfig::default();
        let old = attr("age", 33, "idp1", 10);
        let new = attr("age", 34, "idp2", 20);
        assert_eq!(fuse_attributes(&[old], new.clone(), &trust), vec![new]);
    }

    #[test]
    fn fusion_idempotent() {
        let mut trust = TrustConfig::default();
        trust.set("idp2", 3);
        let existing = vec![attr("age", 33, "idp1", 10), attr("height", 180, "idp1", 10)];
        let incoming = attr("age", 34, "idp2", 20);
        let once = fuse_attributes(&existing, incoming.clone(), &trust);
        let twice = fuse_attributes(&once, incoming, &trust);
        assert_eq!(once, twice);
        // No duplicate names.
        let names: Vec<&String> = once.iter().map(|a| &a.name).collect();
        let unique: BTreeSet<&&String> = names.iter().collect();
        assert_eq!(names.len(), unique.len());
    }
}
