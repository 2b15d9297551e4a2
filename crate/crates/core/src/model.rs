//! Physical parameters, regime classification and the kernel-strength
//! hypotheses that exponential decay rests on.
//!
//! The critical parameter is `γ = α − c²τ/b`. Some printed notation lists write
//! `α − c²b/τ` instead; every energy identity in this crate (and every place
//! the decay results are actually used) needs the `c²τ/b` form, so that is the
//! one implemented.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{MgtError, Result};
use crate::kernels::MemoryKernel;

/// Relative tolerance used to decide `γ = 0`.
pub const CRITICAL_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryType {
    None,
    Type1,
    Type2,
    Type3,
}

impl MemoryType {
    pub fn name(self) -> &'static str {
        match self {
            MemoryType::None => "none",
            MemoryType::Type1 => "type1",
            MemoryType::Type2 => "type2",
            MemoryType::Type3 => "type3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// γ > 0: frictional damping is present.
    NonCritical,
    /// γ = 0 (to relative tolerance): conservative core.
    Critical,
    /// γ < 0: no admissible multiplier weight exists.
    Unstable,
}

/// Parameters of the MGT equation with memory.
///
/// Construction enforces positivity of `τ, α, b, c²`, `λ = 0` unless the memory
/// is of type 3, and `k = c²/b` in the critical regime. Whether `λ` sits in the
/// interval required by the type-3 results is a hypothesis, checked through
/// [`check_assumption`] rather than at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MgtParameters {
    tau: f64,
    alpha: f64,
    b: f64,
    c2: f64,
    memory_type: MemoryType,
    lambda: f64,
    k: f64,
    gamma: f64,
}

impl MgtParameters {
    /// `k = None` selects the default multiplier weight (midpoint of the
    /// admissible interval, or `c²/b` when the interval is empty).
    pub fn new(
        tau: f64,
        alpha: f64,
        b: f64,
        c2: f64,
        memory_type: MemoryType,
        lambda: f64,
        k: Option<f64>,
    ) -> Result<Self> {
        for (name, v) in [("tau", tau), ("alpha", alpha), ("b", b), ("c2", c2)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(MgtError::param(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(MgtError::param("lambda", format!("must be finite and >= 0, got {lambda}")));
        }
        if memory_type != MemoryType::Type3 && lambda != 0.0 {
            return Err(MgtError::param("lambda", "only type-3 memory uses lambda; must be 0"));
        }
        let gamma = gamma_of(tau, alpha, b, c2);
        let mut p = MgtParameters {
            tau,
            alpha,
            b,
            c2,
            memory_type,
            lambda,
            k: 0.0,
            gamma,
        };
        let ratio = c2 / b;
        p.k = match k {
            Some(k) => {
                if !(k.is_finite() && k > 0.0) {
                    return Err(MgtError::param("k", format!("must be finite and > 0, got {k}")));
                }
                if p.regime() == Regime::Critical && !rel_eq(k, ratio, CRITICAL_REL_TOL) {
                    return Err(MgtError::param(
                        "k",
                        format!("critical regime forces k = c2/b = {ratio}, got {k}"),
                    ));
                }
                k
            }
            None => p.admissible_k_interval().map_or(ratio, |(lo, hi)| 0.5 * (lo + hi)),
        };
        Ok(p)
    }

    /// Memoryless parameters with the default `k`.
    pub fn memoryless(tau: f64, alpha: f64, b: f64, c2: f64) -> Result<Self> {
        Self::new(tau, alpha, b, c2, MemoryType::None, 0.0, None)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn c2(&self) -> f64 {
        self.c2
    }
    pub fn memory_type(&self) -> MemoryType {
        self.memory_type
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    /// Multiplier weight used in the natural energies.
    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn regime(&self) -> Regime {
        let scale = self.alpha.max(self.c2 * self.tau / self.b);
        if self.gamma.abs() <= CRITICAL_REL_TOL * scale {
            Regime::Critical
        } else if self.gamma > 0.0 {
            Regime::NonCritical
        } else {
            Regime::Unstable
        }
    }

    /// Open interval `(c²/b, α/τ)`; `None` when `γ ≤ 0`.
    pub fn admissible_k_interval(&self) -> Option<(f64, f64)> {
        match self.regime() {
            Regime::NonCritical => Some((self.c2 / self.b, self.alpha / self.tau)),
            _ => None,
        }
    }

    /// Whether `k` lies in the closed range `[c²/b, α/τ]` (relative slack
    /// [`CRITICAL_REL_TOL`] at the endpoints).
    pub fn k_in_closed_range(&self, k: f64) -> bool {
        let lo = self.c2 / self.b;
        let hi = self.alpha / self.tau;
        let slack = CRITICAL_REL_TOL * lo.max(hi);
        k >= lo - slack && k <= hi + slack
    }

    /// Copy with a different memory type and `λ`, keeping the other constants.
    pub fn with_memory(&self, memory_type: MemoryType, lambda: f64) -> Result<Self> {
        let k = (self.regime() == Regime::NonCritical).then_some(self.k);
        Self::new(self.tau, self.alpha, self.b, self.c2, memory_type, lambda, k)
    }
}

fn gamma_of(tau: f64, alpha: f64, b: f64, c2: f64) -> f64 {
    alpha - c2 * tau / b
}

/// `γ = α − c²τ/b`.
pub fn gamma(params: &MgtParameters) -> f64 {
    gamma_of(params.tau, params.alpha, params.b, params.c2)
}

pub fn admissible_k_interval(params: &MgtParameters) -> Option<(f64, f64)> {
    params.admissible_k_interval()
}

pub(crate) fn rel_eq(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AssumptionId {
    /// Standing kernel hypotheses: g ≥ 0, g′ ≤ 0, g″ ≥ 0, g′ ≤ −c₀g.
    #[serde(rename = "A0_kernel")]
    A0Kernel,
    /// Type-1: γ > 0 and G(∞) < c².
    #[serde(rename = "A1_type1")]
    A1Type1,
    /// Type-2: γ > 0 and a feasible pair (k, θ).
    #[serde(rename = "A2_type2")]
    A2Type2,
    /// Type-3 non-critical.
    #[serde(rename = "A31_type3")]
    A31Type3,
    /// Type-3 critical.
    #[serde(rename = "A32_type3cr")]
    A32Type3Cr,
}

impl AssumptionId {
    /// Assumptions that gate a run with the given memory type and regime.
    pub fn required_for(memory_type: MemoryType, regime: Regime) -> Vec<AssumptionId> {
        let mut ids = vec![AssumptionId::A0Kernel];
        match memory_type {
            MemoryType::None => {}
            MemoryType::Type1 => ids.push(AssumptionId::A1Type1),
            MemoryType::Type2 => ids.push(AssumptionId::A2Type2),
            MemoryType::Type3 => ids.push(if regime == Regime::Critical {
                AssumptionId::A32Type3Cr
            } else {
                AssumptionId::A31Type3
            }),
        }
        ids
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub assumption_id: AssumptionId,
    pub satisfied: bool,
    #[serde(with = "crate::cli::report::float_map")]
    pub witnesses: BTreeMap<String, f64>,
    pub violations: Vec<String>,
}

impl AssumptionReport {
    pub(crate) fn new(assumption_id: AssumptionId) -> Self {
        AssumptionReport {
            assumption_id,
            satisfied: true,
            witnesses: BTreeMap::new(),
            violations: Vec::new(),
        }
    }

    pub(crate) fn witness(&mut self, name: &str, value: f64) {
        self.witnesses.insert(name.to_string(), value);
    }

    /// Record a clause; a failing clause lands in `violations`.
    pub(crate) fn clause(&mut self, id: &str, holds: bool) {
        if !holds {
            self.violations.push(id.to_string());
        }
        self.satisfied = self.violations.is_empty();
    }

    /// Re-substitute the quoted witnesses into the inequalities they certify.
    /// Only meaningful for satisfied reports.
    pub fn witnesses_hold(&self, params: &MgtParameters) -> bool {
        let w = |name: &str| self.witnesses.get(name).copied();
        let c2 = params.c2();
        let b = params.b();
        match self.assumption_id {
            AssumptionId::A0Kernel => w("c0").is_some_and(|c0| c0 > 0.0),
            AssumptionId::A1Type1 => match (w("gamma"), w("G_infinity")) {
                (Some(g), Some(gi)) => g > 0.0 && gi < c2,
                _ => false,
            },
            AssumptionId::A2Type2 => match (w("k"), w("theta"), w("c0"), w("G_infinity")) {
                (Some(k), Some(theta), Some(c0), Some(gi)) => {
                    let lo = c2 / b;
                    let hi = params.alpha() / params.tau();
                    k > lo
                        && k < hi
                        && theta > 0.0
                        && k / theta < c0
                        && gi <= a2_bound(params, k, theta)
                }
                _ => false,
            },
            AssumptionId::A31Type3 => match (w("lambda"), w("G_infinity")) {
                (Some(l), Some(gi)) => {
                    l > c2 / b && l < params.alpha() / params.tau() && gi < c2 / l
                }
                _ => false,
            },
            AssumptionId::A32Type3Cr => match (w("lambda"), w("G_infinity")) {
                (Some(l), Some(gi)) => {
                    params.regime() == Regime::Critical
                        && rel_eq(l, params.alpha() / params.tau(), CRITICAL_REL_TOL)
                        && gi < c2 / l
                }
                _ => false,
            },
        }
    }
}

/// `min{2(bk − c²)/(2 + θ), b − c²/k}`.
fn a2_bound(params: &MgtParameters, k: f64, theta: f64) -> f64 {
    let b = params.b();
    let c2 = params.c2();
    (2.0 * (b * k - c2) / (2.0 + theta)).min(b - c2 / k)
}

/// Grid size along each axis of the (k, θ) feasibility search.
pub const A2_GRID_POINTS: usize = 64;
/// θ ranges over `(k/c₀, A2_THETA_SPAN · k/c₀)`.
pub const A2_THETA_SPAN: f64 = 1e3;

/// First feasible `(k, θ)` pair for the type-2 kernel-strength hypothesis.
///
/// `k` runs over the 64 interior points of `(c²/b, α/τ)` and `θ` over 64
/// logarithmically spaced interior points of `(k/c₀, 10³·k/c₀)`; both ranges
/// are open, so endpoints are never tried. A zero kernel (`c₀ = ∞`) uses the
/// base `k` in place of `k/c₀`.
pub fn a2_feasibility_search(
    params: &MgtParameters,
    c0: f64,
    g_infinity: f64,
    points: usize,
) -> Option<(f64, f64)> {
    let (lo, hi) = params.admissible_k_interval()?;
    for i in 0..points {
        let k = lo + (hi - lo) * (i + 1) as f64 / (points + 1) as f64;
        let base = if c0.is_finite() { k / c0 } else { k };
        for j in 0..points {
            let theta = base * A2_THETA_SPAN.powf((j + 1) as f64 / (points + 1) as f64);
            if k / theta < c0 && g_infinity <= a2_bound(params, k, theta) {
                return Some((k, theta));
            }
        }
    }
    None
}

/// Decide one of the hypotheses for the given parameters and kernel.
///
/// Infeasibility is reported through `violations`, never as an error.
pub fn check_assumption(
    params: &MgtParameters,
    kernel: &MemoryKernel,
    id: AssumptionId,
) -> Result<AssumptionReport> {
    if id == AssumptionId::A0Kernel {
        return Ok(kernel.validate_assumption_a0());
    }
    let g_inf = kernel.g_infinity();
    let c2 = params.c2();
    let b = params.b();
    let mut rep = AssumptionReport::new(id);
    rep.witness("gamma", params.gamma());
    rep.witness("G_infinity", g_inf);
    match id {
        AssumptionId::A0Kernel => unreachable!(),
        AssumptionId::A1Type1 => {
            rep.clause("gamma_positive", params.regime() == Regime::NonCritical);
            rep.clause("G_infinity_lt_c2", g_inf < c2);
        }
        AssumptionId::A2Type2 => {
            let c0 = kernel.c0();
            rep.witness("c0", c0);
            rep.clause("gamma_positive", params.regime() == Regime::NonCritical);
            match a2_feasibility_search(params, c0, g_inf, A2_GRID_POINTS) {
                Some((k, theta)) => {
                    rep.witness("k", k);
                    rep.witness("theta", theta);
                    rep.witness("c1", g_inf);
                }
                None => rep.clause("k_theta_feasible", false),
            }
        }
        AssumptionId::A31Type3 => {
            let l = params.lambda();
            rep.witness("lambda", l);
            rep.clause("gamma_positive", params.regime() == Regime::NonCritical);
            rep.clause("lambda_in_interval", l > c2 / b && l < params.alpha() / params.tau());
            rep.clause("G_infinity_lt_c2_over_lambda", l > 0.0 && g_inf < c2 / l);
        }
        AssumptionId::A32Type3Cr => {
            let l = params.lambda();
            rep.witness("lambda", l);
            rep.clause("gamma_zero", params.regime() == Regime::Critical);
            rep.clause(
                "lambda_eq_alpha_over_tau",
                rel_eq(l, params.alpha() / params.tau(), CRITICAL_REL_TOL),
            );
            rep.clause("G_infinity_lt_c2_over_lambda", l > 0.0 && g_inf < c2 / l);
        }
    }
    Ok(rep)
}
