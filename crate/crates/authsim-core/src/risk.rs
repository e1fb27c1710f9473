//! De-anonymization risk indicators: a disclosure-history ledger plus two
//! population-grounded scores. Federated sessions are linkable by the SP, so
//! the indicator is the best inference probability over the revealed set;
//! credential sessions are unlinkable, so the indicator is the reciprocal of
//! the anonymity-set size for the combination about to be disclosed.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

use crate::identity::PrincipalId;
use crate::par::{count_indexed, ExecMode};
use crate::rng::SimRng;
use crate::time::SimTime;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RiskError {
    #[error("no population rows match the conditioning set; score undefined")]
    Undefined,
    #[error("attribute {0:?} not in the population schema")]
    UnknownAttribute(String),
    #[error("population table: {0}")]
    Table(String),
}

/// Immutable population dataset the indicators condition on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationTable {
    pub schema: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl PopulationTable {
    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn column(&self, name: &str) -> Result<usize, RiskError> {
        self.schema
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| RiskError::UnknownAttribute(name.to_string()))
    }

    /// Count rows satisfying every (attribute, value) constraint. Column
    /// indices are resolved once; the scan itself parallelizes.
    pub fn match_count(
        &self,
        constraints: &[(String, String)],
        mode: ExecMode,
    ) -> Result<usize, RiskError> {
        let resolved: Vec<(usize, &str)> = constraints
            .iter()
            .map(|(name, value)| Ok((self.column(name)?, value.as_str())))
            .collect::<Result<_, RiskError>>()?;
        Ok(count_indexed(mode, self.rows.len(), |i| {
            let row = &self.rows[i];
            resolved.iter().all(|&(col, value)| row[col] == value)
        }))
    }

    /// Distinct values of `attribute`, for the inference maximization.
    pub fn values_of(&self, attribute: &str) -> Result<Vec<String>, RiskError> {
        let col = self.column(attribute)?;
        let mut values: Vec<String> = self.rows.iter().map(|r| r[col].clone()).collect();
        values.sort();
        values.dedup();
        Ok(values)
    }

    pub fn load_csv(path: &Path) -> Result<PopulationTable, RiskError> {
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| RiskError::Table(format!("{}: {e}", path.display())))?;
        let schema: Vec<String> = reader
            .headers()
            .map_err(|e| RiskError::Table(e.to_string()))?
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| RiskError::Table(e.to_string()))?;
            if record.len() != schema.len() {
                return Err(RiskError::Table(format!(
                    "row width {} != schema width {}",
                    record.len(),
                    schema.len()
                )));
            }
            rows.push(record.iter().map(|s| s.to_string()).collect());
        }
        if rows.is_empty() {
            return Err(RiskError::Table("population table must be non-empty".into()));
        }
        Ok(PopulationTable { schema, rows })
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{}", self.schema.join(","))?;
        for row in &self.rows {
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()
    }
}

/// Deterministic synthetic population used as the shipped fixture.
pub fn synthetic_population(seed: u64, n: usize) -> PopulationTable {
    let mut rng = SimRng::from_seed_u64(seed).fork("population");
    let schema = vec![
        "gender".to_string(),
        "age_bracket".to_string(),
        "country".to_string(),
        "city".to_string(),
        "occupation".to_string(),
        "marital_status".to_string(),
    ];
    let genders = [("F", 60u32), ("M", 40)];
    let age_brackets = [("18-25", 20u32), ("26-35", 30), ("36-50", 30), ("51-65", 15), ("66+", 5)];
    let countries = [("CY", 35u32), ("GR", 25), ("DE", 15), ("IT", 10), ("FR", 8), ("RO", 7)];
    let cities = [
        ("nicosia", 20u32),
        ("limassol", 15),
        ("athens", 20),
        ("berlin", 12),
        ("rome", 10),
        ("paris", 8),
        ("bucharest", 8),
        ("larnaca", 7),
    ];
    let occupations = [
        ("student", 15u32),
        ("engineer", 20),
        ("teacher", 15),
        ("clerk", 20),
        ("nurse", 15),
        ("retired", 15),
    ];
    let marital = [("single", 40u32), ("married", 45), ("divorced", 15)];
    fn pick<'a>(rng: &mut SimRng, table: &[(&'a str, u32)]) -> &'a str {
        use rand::Rng as _;
        let total: u32 = table.iter().map(|(_, w)| w).sum();
        let mut roll = rng.gen_range(0..total);
        for (value, weight) in table {
            if roll < *weight {
                return value;
            }
            roll -= weight;
        }
        table[table.len() - 1].0
    }
    let rows = (0..n)
        .map(|_| {
            vec![
                pick(&mut rng, &genders).to_string(),
                pick(&mut rng, &age_brackets).to_string(),
                pick(&mut rng, &countries).to_string(),
                pick(&mut rng, &cities).to_string(),
                pick(&mut rng, &occupations).to_string(),
                pick(&mut rng, &marital).to_string(),
            ]
        })
        .collect();
    PopulationTable { schema, rows }
}

// ---------------------------------------------------------------------------
// Disclosure ledger
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisclosureProtocol {
    Federated,
    Pabac,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisclosureEntry {
    pub user: PrincipalId,
    pub sp: PrincipalId,
    pub attribute: String,
    pub value: String,
    pub session_id: String,
    pub protocol: DisclosureProtocol,
    pub at: SimTime,
}

/// Append-only history of attribute releases.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisclosureLedger {
    entries: Vec<DisclosureEntry>,
}

impl DisclosureLedger {
    pub fn record(&mut self, entry: DisclosureEntry) {
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[DisclosureEntry] {
        &self.entries
    }

    /// What the SP could accumulate by linking this user's federated
    /// sessions: latest value per attribute. Credential-based entries are
    /// unlinkable and never join this set.
    pub fn linkable_revealed(&self, user: &str, sp: &str) -> Vec<(String, String)> {
        let mut latest: BTreeMap<String, String> = BTreeMap::new();
        for e in &self.entries {
            if e.user == user && e.sp == sp && e.protocol == DisclosureProtocol::Federated {
                latest.insert(e.attribute.clone(), e.value.clone());
            }
        }
        latest.into_iter().collect()
    }

    /// Attributes known per SP for the profile-management view.
    pub fn known_by_sp(&self, user: &str) -> BTreeMap<PrincipalId, Vec<(String, String)>> {
        let mut out: BTreeMap<PrincipalId, BTreeMap<String, String>> = BTreeMap::new();
        for e in &self.entries {
            if e.user == user && e.protocol == DisclosureProtocol::Federated {
                out.entry(e.sp.clone())
                    .or_default()
                    .insert(e.attribute.clone(), e.value.clone());
            }
        }
        out.into_iter()
            .map(|(sp, attrs)| (sp, attrs.into_iter().collect()))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Indicators
// ---------------------------------------------------------------------------

/// A risk score plus the counts it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskIndicator {
    pub target: String,
    pub score: f64,
    pub explanation: RiskExplanation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskExplanation {
    /// Numerator count.
    pub numerator: usize,
    /// Denominator count.
    pub denominator: usize,
    /// For inference: the most likely hidden value.
    pub best_value: Option<String>,
    /// Population size, for context. The table is assumed fully known to
    /// the SP/IdP; partial knowledge is out of model.
    pub population: usize,
}

/// Probability that an SP which linked this user's federated sessions can
/// infer the value of hidden attribute `hidden`: the conditional mode over
/// rows matching the revealed set.
pub fn federated_inference_risk(
    revealed: &[(String, String)],
    hidden: &str,
    table: &PopulationTable,
    mode: ExecMode,
) -> Result<RiskIndicator, RiskError> {
    if revealed.iter().any(|(name, _)| name == hidden) {
        return Err(RiskError::UnknownAttribute(format!(
            "{hidden} is already revealed"
        )));
    }
    let base = table.match_count(revealed, mode)?;
    if base == 0 {
        return Err(RiskError::Undefined);
    }
    let mut best_count = 0usize;
    let mut best_value = None;
    for value in table.values_of(hidden)? {
        let mut constraints = revealed.to_vec();
        constraints.push((hidden.to_string(), value.clone()));
        let count = table.match_count(&constraints, mode)?;
        if count > best_count {
            best_count = count;
            best_value = Some(value);
        }
    }
    Ok(RiskIndicator {
        target: hidden.to_string(),
        score: best_count as f64 / base as f64,
        explanation: RiskExplanation {
            numerator: best_count,
            denominator: base,
            best_value,
            population: table.size(),
        },
    })
}

/// Rarity risk for a combination about to be disclosed over an unlinkable
/// credential session: 1/k where k is the anonymity-set size. Independent of
/// the ledger by construction.
pub fn pabac_combination_risk(
    disclosed: &[(String, String)],
    table: &PopulationTable,
    mode: ExecMode,
) -> Result<RiskIndicator, RiskError> {
    if disclosed.is_empty() {
        return Err(RiskError::Table("disclosure set must be non-empty".into()));
    }
    let k = table.match_count(disclosed, mode)?;
    if k == 0 {
        return Err(RiskError::Undefined);
    }
    let names: Vec<&str> = disclosed.iter().map(|(n, _)| n.as_str()).collect();
    Ok(RiskIndicator {
        target: names.join("+"),
        score: 1.0 / k as f64,
        explanation: RiskExplanation {
            numerator: 1,
            denominator: k,
            best_value: None,
            population: table.size(),
        },
    })
}
