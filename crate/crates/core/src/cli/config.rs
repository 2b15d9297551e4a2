//! Experiment configuration: strict TOML, one table per section.
//!
//! ```toml
//! [model]
//! tau = 1.0
//! alpha = 2.0
//! b = 1.0
//! c2 = 1.0
//! memory_type = "type1"     # none | type1 | type2 | type3
//! lambda = 0.0              # type3 only
//! # k = 1.5                 # optional multiplier weight
//!
//! [kernel]
//! kind = "prony"            # zero | prony | sampled
//! weights = [0.2]
//! rates = [2.0]
//! # csv = "kernel.csv"      # sampled: t,g columns, relative to this file
//!
//! [operator]
//! kind = "dirichlet_1d"     # or "eigenvalues" with `eigenvalues = [...]`
//! length = 3.141592653589793
//! modes = 8
//!
//! [initial]
//! preset = "random_seeded"  # explicit | first_mode_bump | random_seeded
//! seed = 7
//!
//! [time]
//! t_end = 50.0
//! h = 0.001
//! path = "prony_aux"        # or "quadrature"
//!
//! [analysis]
//! window_fraction = 0.5
//! audit = true
//! refinement_levels = 3
//! ```
//!
//! An optional `[stability]` table lists `tau`, `alpha`, `b`, `c2` and `mu`
//! grids for `stability-map`.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{InitialData, IntegrationPath, TimeGrid};
use crate::error::{MgtError, Result};
use crate::kernels::MemoryKernel;
use crate::model::{MemoryType, MgtParameters};
use crate::spectrum::{ModalVector, OperatorSpectrum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub kernel: KernelSection,
    pub operator: OperatorSection,
    pub initial: InitialSection,
    pub time: TimeSection,
    pub analysis: AnalysisSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilitySection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub tau: f64,
    pub alpha: f64,
    pub b: f64,
    pub c2: f64,
    pub memory_type: MemoryType,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKindName {
    Zero,
    Prony,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub kind: KernelKindName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    #[serde(rename = "dirichlet_1d")]
    Dirichlet1d,
    Eigenvalues,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSection {
    pub kind: OperatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Explicit,
    FirstModeBump,
    RandomSeeded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub preset: Preset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u2: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
}

fn default_path() -> IntegrationPath {
    IntegrationPath::PronyAux
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub t_end: f64,
    pub h: f64,
    #[serde(default = "default_path")]
    pub path: IntegrationPath,
}

fn default_window() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}
fn default_levels() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default = "default_window")]
    pub window_fraction: f64,
    #[serde(default = "default_true")]
    pub audit: bool,
    #[serde(default = "default_levels")]
    pub refinement_levels: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            window_fraction: default_window(),
            audit: true,
            refinement_levels: default_levels(),
        }
    }
}

/// Parameter grids for `stability-map`; missing lists default to the model's
/// value (and `mu` to the operator's eigenvalues).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
}

/// Fully validated inputs of one simulation.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub params: MgtParameters,
    pub kernel: MemoryKernel,
    pub spectrum: OperatorSpectrum,
    pub initial: InitialData,
    pub grid: TimeGrid,
    pub path: IntegrationPath,
    pub analysis: AnalysisSection,
}

/// Rename a bare parameter error to a dotted config key.
fn in_section(section: &str, e: MgtError) -> MgtError {
    match e {
        MgtError::InvalidParameter { name, reason } => MgtError::config(format!("{section}.{name}"), reason),
        MgtError::KernelData(m) => MgtError::config(section, m),
        MgtError::DimensionMismatch { expected, got } => {
            MgtError::config(section, format!("expected {expected} entries, got {got}"))
        }
        other => other,
    }
}

/// The first backticked word in a deserializer message, e.g. the field in
/// "unknown field `foo`".
fn key_from_message(msg: &str) -> Option<&str> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(&msg[start..start + len])
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let key = key_from_message(&msg).unwrap_or("<document>").to_string();
            MgtError::config(key, msg.trim().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| MgtError::config("<file>", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn params(&self) -> Result<MgtParameters> {
        let m = &self.model;
        MgtParameters::new(m.tau, m.alpha, m.b, m.c2, m.memory_type, m.lambda, m.k).map_err(|e| in_section("model", e))
    }

    /// `base` resolves a relative kernel CSV path.
    pub fn kernel(&self, base: &Path) -> Result<MemoryKernel> {
        let k = &self.kernel;
        let forbid = |set: bool, key: &str| {
            if set {
                Err(MgtError::config(format!("kernel.{key}"), format!("not used by kind {:?}", k.kind)))
            } else {
                Ok(())
            }
        };
        match k.kind {
            KernelKindName::Zero => {
                forbid(k.weights.is_some(), "weights")?;
                forbid(k.rates.is_some(), "rates")?;
                forbid(k.csv.is_some(), "csv")?;
                Ok(MemoryKernel::zero())
            }
            KernelKindName::Prony => {
                forbid(k.csv.is_some(), "csv")?;
                let w = k.weights.clone().ok_or_else(|| MgtError::config("kernel.weights", "required for prony"))?;
                let r = k.rates.clone().ok_or_else(|| MgtError::config("kernel.rates", "required for prony"))?;
                MemoryKernel::prony(w, r).map_err(|e| in_section("kernel", e))
            }
            KernelKindName::Sampled => {
                forbid(k.weights.is_some(), "weights")?;
                forbid(k.rates.is_some(), "rates")?;
                let rel = k.csv.as_ref().ok_or_else(|| MgtError::config("kernel.csv", "required for sampled"))?;
                let path: PathBuf = base.join(rel);
                MemoryKernel::from_csv(&path).map_err(|e| match e {
                    MgtError::Io(io) => MgtError::config("kernel.csv", format!("{}: {io}", path.display())),
                    other => MgtError::config("kernel.csv", other.to_string()),
                })
            }
        }
    }

    pub fn spectrum(&self) -> Result<OperatorSpectrum> {
        let o = &self.operator;
        match o.kind {
            OperatorKind::Dirichlet1d => {
                if o.eigenvalues.is_some() {
                    return Err(MgtError::config("operator.eigenvalues", "not used by dirichlet_1d"));
                }
                let length = o.length.ok_or_else(|| MgtError::config("operator.length", "required for dirichlet_1d"))?;
                let modes = o.modes.ok_or_else(|| MgtError::config("operator.modes", "required for dirichlet_1d"))?;
                OperatorSpectrum::dirichlet(length, modes).map_err(|e| in_section("operator", e))
            }
            OperatorKind::Eigenvalues => {
                if o.length.is_some() || o.modes.is_some() {
                    return Err(MgtError::config("operator.length", "not used with an explicit eigenvalue list"));
                }
                let eig = o
                    .eigenvalues
                    .clone()
                    .ok_or_else(|| MgtError::config("operator.eigenvalues", "required for kind eigenvalues"))?;
                OperatorSpectrum::new(eig).map_err(|e| in_section("operator", e))
            }
        }
    }

    pub fn initial(&self, n_modes: usize) -> Result<InitialData> {
        let i = &self.initial;
        let amp = i.amplitude.unwrap_or(1.0);
        if !amp.is_finite() {
            return Err(MgtError::config("initial.amplitude", "must be finite"));
        }
        let lists = i.u0.is_some() || i.u1.is_some() || i.u2.is_some();
        match i.preset {
            Preset::Explicit => {
                let get = |v: &Option<Vec<f64>>, key: &str| -> Result<ModalVector> {
                    let v = v.clone().ok_or_else(|| MgtError::config(format!("initial.{key}"), "required for explicit"))?;
                    if v.len() != n_modes {
                        return Err(MgtError::config(
                            format!("initial.{key}"),
                            format!("expected {n_modes} entries, got {}", v.len()),
                        ));
                    }
                    Ok(ModalVector(v.iter().map(|x| amp * x).collect()))
                };
                Ok(InitialData::new(get(&i.u0, "u0")?, get(&i.u1, "u1")?, get(&i.u2, "u2")?))
            }
            _ if lists => Err(MgtError::config("initial.u0", "mode lists require preset = \"explicit\"")),
            Preset::FirstModeBump => {
                let mut d = InitialData::zeros(n_modes);
                d.u0[0] = amp;
                Ok(d)
            }
            Preset::RandomSeeded => {
                let seed = i.seed.ok_or_else(|| MgtError::config("initial.seed", "required for random_seeded"))?;
                Ok(random_initial_data(n_modes, seed, amp))
            }
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.time.t_end, self.time.h).map_err(|e| in_section("time", e))
    }

    pub fn build(&self, base: &Path) -> Result<Experiment> {
        let a = &self.analysis;
        if !(a.window_fraction > 0.0 && a.window_fraction <= 1.0) {
            return Err(MgtError::config("analysis.window_fraction", "must lie in (0, 1]"));
        }
        if a.refinement_levels == 0 {
            return Err(MgtError::config("analysis.refinement_levels", "must be >= 1"));
        }
        let params = self.params()?;
        let kernel = self.kernel(base)?;
        if params.memory_type() == MemoryType::None && !kernel.is_zero() {
            return Err(MgtError::config("kernel.kind", "memory_type = \"none\" requires kind = \"zero\""));
        }
        if self.time.path == IntegrationPath::PronyAux && self.kernel.kind == KernelKindName::Sampled {
            return Err(MgtError::config("time.path", "sampled kernels need path = \"quadrature\""));
        }
        let spectrum = self.spectrum()?;
        let initial = self.initial(spectrum.len())?;
        Ok(Experiment {
            params,
            kernel,
            spectrum,
            initial,
            grid: self.grid()?,
            path: self.time.path,
            analysis: self.analysis.clone(),
        })
    }
}

/// Coefficients `U(−1, 1)·amp/i²` for mode `i = 1..=n`, drawn in the order
/// `(u0, u1, u2)` per mode from a ChaCha8 stream.
pub fn random_initial_data(n_modes: usize, seed: u64, amp: f64) -> InitialData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = InitialData::zeros(n_modes);
    for i in 0..n_modes {
        let w = amp / ((i + 1) * (i + 1)) as f64;
        d.u0[i] = w * rng.gen_range(-1.0..1.0);
        d.u1[i] = w * rng.gen_range(-1.0..1.0);
        d.u2[i] = w * rng.gen_range(-1.0..1.0);
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[model]
tau = 1.0
alpha = 2.0
b = 1.0
c2 = 1.0
memory_type = "type1"

[kernel]
kind = "prony"
weights = [0.2]
rates = [2.0]

[operator]
kind = "dirichlet_1d"
length = 3.141592653589793
modes = 4

[initial]
preset = "random_seeded"
seed = 3

[time]
t_end = 1.0
h = 0.01

[analysis]
"#;

    fn key_of(e: MgtError) -> String {
        match e {
            MgtError::Config { key, .. } => key,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn parses_and_builds() {
        let cfg = ExperimentConfig::parse(BASE).unwrap();
        assert_eq!(cfg.time.path, IntegrationPath::PronyAux);
        assert_eq!(cfg.analysis, AnalysisSection::default());
        let exp = cfg.build(Path::new(".")).unwrap();
        assert_eq!(exp.spectrum.len(), 4);
        assert_eq!(exp.grid.n_steps(), 100);
        assert_eq!(exp.initial, random_initial_data(4, 3, 1.0));
    }

    #[test]
    fn unknown_and_missing_keys_are_named() {
        let e = ExperimentConfig::parse(&BASE.replace("b = 1.0", "b = 1.0\nbee = 2.0")).unwrap_err();
        assert_eq!(key_of(e), "bee");
        let e = ExperimentConfig::parse(&BASE.replace("alpha = 2.0\n", "")).unwrap_err();
        assert_eq!(key_of(e), "alpha");
        let e = ExperimentConfig::parse(&BASE.replace("[analysis]\n", "")).unwrap_err();
        assert_eq!(key_of(e), "analysis");
    }

    #[test]
    fn semantic_errors_are_named() {
        let bad = |from: &str, to: &str| {
            let cfg = ExperimentConfig::parse(&BASE.replace(from, to)).unwrap();
            key_of(cfg.build(Path::new(".")).unwrap_err())
        };
        assert_eq!(bad("h = 0.01", "h = 0.0"), "time.h");
        assert_eq!(bad("tau = 1.0", "tau = -1.0"), "model.tau");
        assert_eq!(bad("modes = 4", "modes = 0"), "operator.modes");
        assert_eq!(bad("rates = [2.0]", "rates = [2.0, 3.0]"), "kernel");
        assert_eq!(bad("seed = 3", "amplitude = 2.0"), "initial.seed");
        assert_eq!(bad("memory_type = \"type1\"", "memory_type = \"none\""), "kernel.kind");
    }

    #[test]
    fn round_trip_is_lossless() {
        let cfg = ExperimentConfig::parse(BASE).unwrap();
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        let mut cfg = cfg;
        cfg.stability = Some(StabilitySection {
            tau: None,
            alpha: Some(vec![1.0, 2.0]),
            b: None,
            c2: None,
            mu: Some(vec![0.01, 1.0, 100.0]),
        });
        cfg.model.k = Some(1.25);
        cfg.initial.preset = Preset::Explicit;
        cfg.initial.seed = None;
        cfg.initial.u0 = Some(vec![0.1, 1e-300, -3.5, 1.0 / 3.0]);
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn presets() {
        let cfg = ExperimentConfig::parse(&BASE.replace("preset = \"random_seeded\"\nseed = 3", "preset = \"first_mode_bump\"")).unwrap();
        let d = cfg.initial(3).unwrap();
        assert_eq!(d.u0.0, vec![1.0, 0.0, 0.0]);
        let a = random_initial_data(8, 11, 1.0);
        assert_eq!(a, random_initial_data(8, 11, 1.0));
        assert_ne!(a, random_initial_data(8, 12, 1.0));
        assert!(a.u0.iter().enumerate().all(|(i, x)| x.abs() <= 1.0 / ((i + 1) * (i + 1)) as f64));
    }
}
