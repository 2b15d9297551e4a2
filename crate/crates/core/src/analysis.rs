//! Verdicts from trajectories and ledgers: identity residuals, decay fits,
//! equivalence constants, Gronwall-type integral checks and the stability of
//! the modal characteristic cubic.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate, InitialData, IntegrationPath, TimeGrid, Trajectory};
use crate::energy::{evaluate_ledger, memory_identity_pieces, EnergyLedger, Functional};
use crate::error::{MgtError, Result};
use crate::kernels::MemoryKernel;
use crate::model::{MemoryType, MgtParameters, Regime};
use crate::spectrum::OperatorSpectrum;

/// Fourth-order central difference `(−f₊₂ + 8f₊₁ − 8f₋₁ + f₋₂)/(12h)` at
/// interior indices `2..n−2`; element `j` belongs to grid index `j + 2`.
pub fn central_difference4(series: &[f64], h: f64) -> Vec<f64> {
    if series.len() < 5 {
        return Vec::new();
    }
    series
        .windows(5)
        .map(|w| (-w[4] + 8.0 * w[3] - 8.0 * w[1] + w[0]) / (12.0 * h))
        .collect()
}

// ---------------------------------------------------------------------------
// decay fits

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub omega: f64,
    /// Prefactor of the bound form `C·series(0)·e^{−ωt}`.
    #[serde(rename = "C")]
    pub c: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
}

/// Least-squares line through `(t, ln series)` over the last
/// `window_fraction` of the grid.
pub fn fit_decay_rate(times: &[f64], series: &[f64], window_fraction: f64) -> Result<DecayFit> {
    if times.len() != series.len() {
        return Err(MgtError::DimensionMismatch {
            expected: times.len(),
            got: series.len(),
        });
    }
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(MgtError::Fit(format!("window fraction must lie in (0, 1], got {window_fraction}")));
    }
    let n = series.len();
    let start = ((1.0 - window_fraction) * (n.saturating_sub(1)) as f64).floor() as usize;
    let (t, y) = (&times[start..], &series[start..]);
    if t.len() < 2 {
        return Err(MgtError::Fit("fit window holds fewer than 2 points".into()));
    }
    if let Some(bad) = y.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(MgtError::Fit(format!("nonpositive or non-finite value {bad} in fit window")));
    }
    if !(series[0] > 0.0) {
        return Err(MgtError::Fit("series(0) must be positive".into()));
    }
    let window = (t[0], t[t.len() - 1]);
    if y.iter().all(|v| *v == y[0]) {
        return Ok(DecayFit {
            omega: 0.0,
            c: y[0] / series[0],
            r_squared: 1.0,
            window,
        });
    }
    let logs: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = t.len() as f64;
    let tm = t.iter().sum::<f64>() / m;
    let ym = logs.iter().sum::<f64>() / m;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (ti, yi) in t.iter().zip(&logs) {
        let (dx, dy) = (ti - tm, yi - ym);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let ss_res: f64 = t
        .iter()
        .zip(&logs)
        .map(|(ti, yi)| (yi - intercept - slope * ti).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(DecayFit {
        omega: -slope,
        c: intercept.exp() / series[0],
        r_squared,
        window,
    })
}

/// Longest run of consecutive steps on which the series grows by more than
/// `rel_noise` relative to its current value.
pub fn longest_growth_run(series: &[f64], rel_noise: f64) -> usize {
    let mut best = 0;
    let mut run = 0;
    for w in series.windows(2) {
        if w[1] - w[0] > rel_noise * w[0].abs() {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best
}

/// `max |E(t) − E(0)| / E(0)`.
pub fn conservation_drift(series: &[f64]) -> Result<f64> {
    let e0 = *series.first().ok_or_else(|| MgtError::Precondition("empty series".into()))?;
    if !(e0 > 0.0) {
        return Err(MgtError::Precondition("drift needs a positive initial value".into()));
    }
    Ok(series.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0)
}

// ---------------------------------------------------------------------------
// equivalence and integral checks

/// Empirical `(min a/b, max a/b)`.
pub fn equivalence_constants(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(MgtError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Err(MgtError::Precondition("empty series".into()));
    }
    if a.iter().chain(b).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(MgtError::Precondition("equivalence constants need positive series".into()));
    }
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let r = x / y;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok((lo, hi))
}

/// `C₁ = min{1 − 1/(1 + C₀/2), C₀/2}`, the constant in
/// `C₁(‖f‖² + ‖g‖²) ≤ ‖f + g‖² + C₀‖g‖²`.
pub fn lemma_constant(c0: f64) -> f64 {
    (1.0 - 1.0 / (1.0 + c0 / 2.0)).min(c0 / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GronwallCheck {
    /// `sup_{t ≤ T/2} ∫_t^T F / F(t)` at `T = t_end`.
    #[serde(with = "crate::cli::report::float")]
    pub c_est: f64,
    /// The same supremum with `T = t_end/2`.
    #[serde(with = "crate::cli::report::float")]
    pub c_est_half: f64,
    pub satisfied: bool,
}

fn gronwall_sup(times: &[f64], series: &[f64]) -> f64 {
    let n = series.len();
    let end = times[n - 1];
    let mut tail = vec![0.0; n];
    for j in (0..n - 1).rev() {
        tail[j] = tail[j + 1] + 0.5 * (times[j + 1] - times[j]) * (series[j] + series[j + 1]);
    }
    let mut sup = 0.0f64;
    for j in 0..n {
        if times[j] - times[0] > 0.5 * (end - times[0]) {
            break;
        }
        let r = if series[j] > 0.0 {
            tail[j] / series[j]
        } else if tail[j] > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        sup = sup.max(r);
    }
    sup
}

/// Stability of `sup_t ∫_t^T F / F(t)` when the horizon doubles from
/// `t_end/2` to `t_end`; satisfied when both are finite and differ by < 10%.
pub fn gronwall_integral_check(times: &[f64], series: &[f64]) -> Result<GronwallCheck> {
    if times.len() != series.len() {
        return Err(MgtError::DimensionMismatch {
            expected: times.len(),
            got: series.len(),
        });
    }
    if series.len() < 5 {
        return Err(MgtError::Precondition("need at least 5 grid points".into()));
    }
    if series.iter().any(|v| !(*v >= 0.0)) {
        return Err(MgtError::Precondition("Gronwall check needs a nonnegative series".into()));
    }
    let half = (series.len() - 1) / 2 + 1;
    let c_est = gronwall_sup(times, series);
    let c_est_half = gronwall_sup(&times[..half], &series[..half]);
    let satisfied = c_est.is_finite() && c_est_half.is_finite() && (c_est - c_est_half).abs() < 0.1 * c_est;
    Ok(GronwallCheck {
        c_est,
        c_est_half,
        satisfied,
    })
}

// ---------------------------------------------------------------------------
// identity audits

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IdentityId {
    E0R0,
    E1R1,
    E2R2,
    E3R3,
    E3crR3cr,
    #[serde(rename = "E11m_id")]
    E11mId,
    #[serde(rename = "E12m_id")]
    E12mId,
}

impl IdentityId {
    pub fn name(self) -> &'static str {
        match self {
            IdentityId::E0R0 => "E0R0",
            IdentityId::E1R1 => "E1R1",
            IdentityId::E2R2 => "E2R2",
            IdentityId::E3R3 => "E3R3",
            IdentityId::E3crR3cr => "E3crR3cr",
            IdentityId::E11mId => "E11m_id",
            IdentityId::E12mId => "E12m_id",
        }
    }

    /// Identities that close for these parameters (memory-free `E₀` only
    /// without memory; `E₃^cr` only in the critical regime).
    pub fn applicable(params: &MgtParameters, ledger: &EnergyLedger) -> Vec<IdentityId> {
        let mut out = Vec::new();
        let has = |f| ledger.contains(f);
        match params.memory_type() {
            MemoryType::None if has(Functional::E0) => out.push(IdentityId::E0R0),
            MemoryType::Type1 => {
                if has(Functional::E1) {
                    out.push(IdentityId::E1R1);
                }
                out.extend([IdentityId::E11mId, IdentityId::E12mId]);
            }
            MemoryType::Type2 if has(Functional::E2) => out.push(IdentityId::E2R2),
            MemoryType::Type3 => {
                if has(Functional::E3) {
                    out.push(IdentityId::E3R3);
                }
                if has(Functional::E3cr) {
                    out.push(IdentityId::E3crR3cr);
                }
            }
            _ => {}
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    Printed,
    SignCorrected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityAuditResult {
    pub identity_id: IdentityId,
    pub convention: Convention,
    /// `dE/dt + R − source` on interior grid points.
    #[serde(skip)]
    pub residual_series: Vec<f64>,
    /// `max |r| / max(|dE/dt|, |R|)` over the interior.
    pub max_abs_residual: f64,
    pub absolute_residual: f64,
    /// `max |E|`, for conservative identities where `R ≡ 0`.
    pub energy_scale: f64,
    pub refinement_order: Option<f64>,
}

impl IdentityAuditResult {
    /// Residual relative to the energy level (meaningful when `R ≡ 0`).
    pub fn relative_to_energy(&self) -> f64 {
        self.absolute_residual / self.energy_scale.max(1e-300)
    }
}

/// `(E, R, source)` for one identity under one convention.
/// `(dE/dt, R, source)` for one identity.
type IdentityTerms = (Vec<f64>, Vec<f64>, Option<Vec<f64>>);

fn identity_terms(
    traj: &Trajectory,
    ledger: &EnergyLedger,
    id: IdentityId,
    conv: Convention,
) -> Result<IdentityTerms> {
    use Functional as F;
    let need = |f| ledger.require(f).map(<[f64]>::to_vec);
    let mt = traj.params.memory_type();
    let expect = |want: MemoryType| {
        if mt != want {
            Err(MgtError::Precondition(format!(
                "{} needs {} memory, trajectory has {}",
                id.name(),
                want.name(),
                mt.name()
            )))
        } else {
            Ok(())
        }
    };
    Ok(match id {
        IdentityId::E0R0 => {
            expect(MemoryType::None)?;
            (need(F::E0)?, need(F::R0)?, None)
        }
        IdentityId::E1R1 => {
            expect(MemoryType::Type1)?;
            let r = match conv {
                Convention::SignCorrected => need(F::R1)?,
                // R₁ assembled from the printed pieces: R₀ + R₁₁m + kR₁₂m
                Convention::Printed => {
                    let k = traj.params.k();
                    let (r0, r11, r12) = (need(F::R0)?, need(F::R11m)?, need(F::R12m)?);
                    (0..r0.len()).map(|j| r0[j] + r11[j] + k * r12[j]).collect()
                }
            };
            (need(F::E1)?, r, None)
        }
        IdentityId::E2R2 => {
            expect(MemoryType::Type2)?;
            (need(F::E2)?, need(F::R2)?, None)
        }
        IdentityId::E3R3 => {
            expect(MemoryType::Type3)?;
            (need(F::E3)?, need(F::R3)?, None)
        }
        IdentityId::E3crR3cr => {
            expect(MemoryType::Type3)?;
            (need(F::E3cr)?, need(F::R3cr)?, None)
        }
        IdentityId::E11mId | IdentityId::E12mId => {
            expect(MemoryType::Type1)?;
            let pc = memory_identity_pieces(traj)?;
            let (e, r, s) = if id == IdentityId::E11mId {
                (pc.e11m, pc.r11m, pc.s11)
            } else {
                (pc.e12m, pc.r12m, pc.s12)
            };
            let r = match conv {
                Convention::Printed => r,
                Convention::SignCorrected => r.iter().map(|x| -x).collect(),
            };
            (e, r, Some(s))
        }
    })
}

/// Residual of `dE/dt + R = source` under both sign conventions (printed
/// first). Conventions coincide except for the type-1 memory identities.
pub fn identity_audit(traj: &Trajectory, ledger: &EnergyLedger, id: IdentityId) -> Result<Vec<IdentityAuditResult>> {
    if traj.len() < 5 {
        return Err(MgtError::Precondition("identity audit needs at least 5 grid points".into()));
    }
    let h = traj.grid.h();
    [Convention::Printed, Convention::SignCorrected]
        .into_iter()
        .map(|conv| {
            let (e, r, source) = identity_terms(traj, ledger, id, conv)?;
            let de = central_difference4(&e, h);
            let mut scale = 1e-300f64;
            let mut residual = Vec::with_capacity(de.len());
            for (j, d) in de.iter().enumerate() {
                let n = j + 2;
                let s = source.as_ref().map_or(0.0, |s| s[n]);
                scale = scale.max(d.abs()).max(r[n].abs());
                residual.push(d + r[n] - s);
            }
            let absolute = residual.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            Ok(IdentityAuditResult {
                identity_id: id,
                convention: conv,
                residual_series: residual,
                max_abs_residual: absolute / scale,
                absolute_residual: absolute,
                energy_scale: e.iter().fold(0.0f64, |m, x| m.max(x.abs())),
                refinement_order: None,
            })
        })
        .collect()
}

/// The convention with the smaller normalized residual (printed on ties).
pub fn winning_convention(results: &[IdentityAuditResult]) -> Option<&IdentityAuditResult> {
    results.iter().fold(None, |best: Option<&IdentityAuditResult>, r| match best {
        Some(b) if b.max_abs_residual <= r.max_abs_residual => Some(b),
        _ => Some(r),
    })
}

/// Slope of `ln y` against `ln x` by least squares.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite())) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let (xm, ym) = (lx.iter().sum::<f64>() / m, ly.iter().sum::<f64>() / m);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - xm) * (b - ym)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - xm).powi(2)).sum();
    Some(sxy / sxx)
}

/// Everything a step-refinement study needs to rerun a simulation.
#[derive(Debug, Clone)]
pub struct RefinementSetup<'a> {
    pub params: &'a MgtParameters,
    pub spectrum: &'a OperatorSpectrum,
    pub kernel: &'a MemoryKernel,
    pub initial: &'a InitialData,
    pub t_end: f64,
    pub path: IntegrationPath,
}

/// Finest-level results plus `[printed, sign_corrected]` residuals per level.
pub type LevelAudit = (Vec<IdentityAuditResult>, Vec<[f64; 2]>);

/// Audit at each step in `steps` (coarse to fine). Returns the finest-level
/// results per convention with `refinement_order` set from a log-log fit
/// of the normalized residual against `h`, plus the per-level residuals.
pub fn refinement_audit(
    setup: &RefinementSetup,
    steps: &[f64],
    ids: &[IdentityId],
) -> Result<Vec<LevelAudit>> {
    if steps.len() < 3 {
        return Err(MgtError::Precondition("refinement needs at least 3 step sizes".into()));
    }
    // per identity, per level, per convention
    let mut levels: Vec<Vec<Vec<IdentityAuditResult>>> = vec![Vec::new(); ids.len()];
    for &h in steps {
        let grid = TimeGrid::new(setup.t_end, h)?;
        let traj = simulate(setup.params, setup.spectrum, setup.kernel, setup.initial, grid, setup.path)?;
        let ledger = evaluate_ledger(&traj);
        for (slot, id) in ids.iter().enumerate() {
            levels[slot].push(identity_audit(&traj, &ledger, *id)?);
        }
    }
    Ok(levels
        .into_iter()
        .map(|per_level| {
            let history: Vec<[f64; 2]> = per_level
                .iter()
                .map(|r| [r[0].max_abs_residual, r[1].max_abs_residual])
                .collect();
            let mut finest = per_level.last().cloned().unwrap_or_default();
            for (c, res) in finest.iter_mut().enumerate() {
                let ys: Vec<f64> = history.iter().map(|h| h[c]).collect();
                res.refinement_order = loglog_slope(steps, &ys);
            }
            (finest, history)
        })
        .collect())
}

// ---------------------------------------------------------------------------
// characteristic cubic

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub mu: f64,
    pub roots: [Complex64; 3],
    pub max_real_part: f64,
    /// All roots strictly in the left half plane.
    pub hurwitz: bool,
    /// Routh–Hurwitz predicate on the coefficients.
    pub routh_hurwitz: bool,
    pub gamma: f64,
    /// Largest real part of the sign-flipped cubic `τr³ + αr² − bμr − c²μ`,
    /// reported for reference only.
    pub printed_cubic_max_real_part: f64,
}

fn horner(c: &[f64; 4], x: Complex64) -> Complex64 {
    ((x + c[2]) * x + c[1]) * x + c[0]
}

fn horner_d(c: &[f64; 4], x: Complex64) -> Complex64 {
    (x * 3.0 + 2.0 * c[2]) * x + c[1]
}

/// Roots of `a3·x³ + a2·x² + a1·x + a0` (`a3 ≠ 0`): the real root by
/// bracketing plus Newton, the other two from the deflated quadratic, then
/// each polished by Newton on the full cubic.
pub fn cubic_roots(a3: f64, a2: f64, a1: f64, a0: f64) -> [Complex64; 3] {
    // monic: x³ + c[2]x² + c[1]x + c[0]
    let c = [a0 / a3, a1 / a3, a2 / a3, 1.0];
    let f = |x: f64| ((x + c[2]) * x + c[1]) * x + c[0];
    let bound = 1.0 + c[0].abs().max(c[1].abs()).max(c[2].abs());
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut r = 0.5 * (lo + hi);
    for _ in 0..3 {
        let d = (3.0 * r + 2.0 * c[2]) * r + c[1];
        if d == 0.0 {
            break;
        }
        let next = r - f(r) / d;
        if f(next).abs() < f(r).abs() {
            r = next;
        } else {
            break;
        }
    }
    let q1 = c[2] + r;
    let q0 = c[1] + r * q1;
    let disc = q1 * q1 - 4.0 * q0;
    let (z1, z2) = if disc >= 0.0 {
        let s = disc.sqrt();
        let t = -0.5 * (q1 + q1.signum() * s);
        let t = if t == 0.0 { -0.5 * s } else { t };
        let x1 = t;
        let x2 = if x1 != 0.0 { q0 / x1 } else { 0.0 };
        (Complex64::new(x1, 0.0), Complex64::new(x2, 0.0))
    } else {
        let im = 0.5 * (-disc).sqrt();
        (Complex64::new(-0.5 * q1, im), Complex64::new(-0.5 * q1, -im))
    };
    let polish = |mut z: Complex64| {
        for _ in 0..4 {
            let d = horner_d(&c, z);
            if d.norm() == 0.0 {
                break;
            }
            let next = z - horner(&c, z) / d;
            if horner(&c, next).norm() < horner(&c, z).norm() {
                z = next;
            } else {
                break;
            }
        }
        z
    };
    let mut roots = [Complex64::new(r, 0.0), polish(z1), polish(z2)];
    if disc < 0.0 {
        // keep the pair exactly conjugate
        roots[2] = roots[1].conj();
    }
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(b.im.total_cmp(&a.im)));
    roots
}

/// Roots of `τr³ + αr² + bμr + c²μ`, the characteristic equation of a single
/// mode, with root-based and coefficient-based stability verdicts.
pub fn characteristic_roots(params: &MgtParameters, mu: f64) -> Result<StabilityVerdict> {
    characteristic_roots_raw(params.tau(), params.alpha(), params.b(), params.c2(), mu)
}

/// [`characteristic_roots`] from bare coefficients.
pub fn characteristic_roots_raw(tau: f64, alpha: f64, b: f64, c2: f64, mu: f64) -> Result<StabilityVerdict> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(MgtError::param("mu", format!("must be finite and > 0, got {mu}")));
    }
    for (name, v) in [("tau", tau), ("alpha", alpha), ("b", b), ("c2", c2)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(MgtError::param(name, format!("must be finite and > 0, got {v}")));
        }
    }
    let roots = cubic_roots(tau, alpha, b * mu, c2 * mu);
    let max_real_part = roots.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let size = roots.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let hurwitz = max_real_part < -1e-10 * size;
    let routh_hurwitz = alpha * b * mu - tau * c2 * mu > 0.0;
    let printed = cubic_roots(tau, alpha, -b * mu, -c2 * mu);
    Ok(StabilityVerdict {
        mu,
        roots,
        max_real_part,
        hurwitz,
        routh_hurwitz,
        gamma: alpha - c2 * tau / b,
        printed_cubic_max_real_part: printed.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Whether the parameters lie in the exponentially stable regime.
pub fn is_noncritical(params: &MgtParameters) -> bool {
    params.regime() == Regime::NonCritical
}
