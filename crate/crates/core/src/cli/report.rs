//! Machine-readable verdict report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analysis::{Convention, DecayFit, GronwallCheck, IdentityAuditResult, IdentityId, StabilityVerdict};
use crate::dynamics::IntegrationPath;
use crate::model::{AssumptionReport, MemoryType, Regime};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: String,
    pub config: String,
    pub t_end: f64,
    pub h: f64,
    pub n_steps: usize,
    pub path: IntegrationPath,
    pub n_modes: usize,
    pub memory_type: MemoryType,
    pub regime: Regime,
    pub gamma: f64,
    pub k: f64,
    pub lambda: f64,
    pub forced: bool,
}

/// A decay fit, or the reason it could not be made (e.g. underflow to zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitEntry {
    pub fit: Option<DecayFit>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub identity_id: IdentityId,
    pub winner: Convention,
    /// Both conventions at the run's step, with refinement orders when
    /// coarser levels were run.
    pub results: Vec<IdentityAuditResult>,
    /// Steps of the refinement study, coarse to fine.
    pub steps: Vec<f64>,
    /// `[printed, sign_corrected]` normalized residual per step.
    pub level_residuals: Vec<[f64; 2]>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationEntry {
    pub functional: String,
    pub drift: f64,
    pub threshold: f64,
    pub conserved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GronwallEntry {
    pub functional: String,
    pub check: GronwallCheck,
}

/// `C1 ≤ F/E ≤ C2` over the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceEntry {
    pub energy: String,
    pub standard: String,
    pub c1: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub status: String,
    pub exit_code: i32,
    pub metadata: RunMetadata,
    pub assumptions: Vec<AssumptionReport>,
    /// `"<assumption>:<clause>"` for every failing clause.
    pub violated: Vec<String>,
    pub decay_fits: BTreeMap<String, FitEntry>,
    pub audits: Vec<AuditEntry>,
    pub stability: Vec<StabilityVerdict>,
    pub conservation: Option<ConservationEntry>,
    pub gronwall: Option<GronwallEntry>,
    pub equivalence: Vec<EquivalenceEntry>,
}

impl VerdictReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// Serde adapter for a single `f64` with the same non-finite encoding as
/// [`float_map`].
pub mod float {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::float_map::{decode, encode, Repr};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        encode(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        decode(Repr::deserialize(d)?)
    }
}

/// Serde adapter for `BTreeMap<String, f64>` that writes non-finite values as
/// the strings `"inf"`, `"-inf"` and `"nan"` so JSON stays lossless.
pub mod float_map {
    use std::collections::BTreeMap;

    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    pub(super) enum Repr {
        Num(f64),
        Text(String),
    }

    pub(super) fn encode(v: f64) -> Repr {
        if v.is_finite() {
            Repr::Num(v)
        } else if v.is_nan() {
            Repr::Text("nan".into())
        } else if v > 0.0 {
            Repr::Text("inf".into())
        } else {
            Repr::Text("-inf".into())
        }
    }

    pub(super) fn decode<E: Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(v) => Ok(v),
            Repr::Text(s) => match s.as_str() {
                "nan" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(E::custom(format!("expected a number, got {other:?}"))),
            },
        }
    }

    pub fn serialize<S: Serializer>(map: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
        let enc: BTreeMap<&String, Repr> = map.iter().map(|(k, v)| (k, encode(*v))).collect();
        enc.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
        let raw = BTreeMap::<String, Repr>::deserialize(d)?;
        raw.into_iter().map(|(k, v)| decode(v).map(|x| (k, x))).collect()
    }
}
