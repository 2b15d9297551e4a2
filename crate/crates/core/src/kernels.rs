//! Memory kernels `g`, their derivatives, the cumulative strength
//! `G(t) = ∫₀ᵗ g`, and the history quadratures built on them.
//!
//! Every history integral in the crate uses the trapezoid rule on the uniform
//! simulation grid. For Prony kernels the same trapezoid sums are produced by
//! an exact O(1)-per-step recursion; sampled kernels use the direct O(n²) sum.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MgtError, Result};
use crate::model::{AssumptionId, AssumptionReport};
use crate::spectrum::OperatorSpectrum;

/// Samples at or below this value are treated as zero when deriving `c₀`.
pub const SAMPLE_ZERO: f64 = 1e-14;
/// Convexity / monotonicity slack for sampled kernels, relative to `g(0)`.
pub const SAMPLE_SHAPE_TOL: f64 = 1e-10;
/// Relative tolerance on uniform spacing of CSV kernel samples.
pub const SPACING_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Zero,
    Prony,
    Sampled,
}

/// Which function of the kernel a quadrature weights the history with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFn {
    /// `g`
    G,
    /// `−g′` (nonnegative under the standing hypotheses)
    NegDg,
    /// `g″`
    D2g,
}

/// `(g, g′, g″, G)` at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub g: f64,
    pub dg: f64,
    pub d2g: f64,
    pub cumulative: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Zero,
    Prony { weights: Vec<f64>, rates: Vec<f64> },
    Sampled(Sampled),
}

#[derive(Debug, Clone, PartialEq)]
struct Sampled {
    step: f64,
    g: Vec<f64>,
    dg: Vec<f64>,
    d2g: Vec<f64>,
    cumulative: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryKernel {
    repr: Repr,
    c0: f64,
    g_infinity: f64,
}

impl MemoryKernel {
    /// `g ≡ 0`: the memoryless baseline.
    pub fn zero() -> Self {
        MemoryKernel {
            repr: Repr::Zero,
            c0: f64::INFINITY,
            g_infinity: 0.0,
        }
    }

    /// `g(t) = Σᵢ gᵢ e^{−βᵢt}` with positive weights and rates.
    pub fn prony(weights: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if weights.len() != rates.len() {
            return Err(MgtError::KernelData(format!(
                "{} weights but {} rates",
                weights.len(),
                rates.len()
            )));
        }
        if weights.is_empty() {
            return Ok(Self::zero());
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(MgtError::KernelData(format!("prony weight must be > 0, got {w}")));
        }
        if let Some(r) = rates.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(MgtError::KernelData(format!("prony rate must be > 0, got {r}")));
        }
        let c0 = rates.iter().copied().fold(f64::INFINITY, f64::min);
        let g_infinity = weights.iter().zip(&rates).map(|(w, r)| w / r).sum();
        Ok(MemoryKernel {
            repr: Repr::Prony { weights, rates },
            c0,
            g_infinity,
        })
    }

    /// Kernel given by samples `g(j·step)`, `j = 0, 1, …`.
    pub fn sampled(step: f64, values: Vec<f64>) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(MgtError::KernelData(format!("sample spacing must be > 0, got {step}")));
        }
        if values.len() < 3 {
            return Err(MgtError::KernelData("need at least 3 kernel samples".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MgtError::KernelData("non-finite kernel sample".into()));
        }
        let n = values.len();
        let h = step;
        let g = values;
        let mut dg = vec![0.0; n];
        for i in 1..n - 1 {
            dg[i] = (g[i + 1] - g[i - 1]) / (2.0 * h);
        }
        dg[0] = (-3.0 * g[0] + 4.0 * g[1] - g[2]) / (2.0 * h);
        dg[n - 1] = (3.0 * g[n - 1] - 4.0 * g[n - 2] + g[n - 3]) / (2.0 * h);
        let mut d2g = vec![0.0; n];
        for i in 1..n - 1 {
            d2g[i] = (g[i + 1] - 2.0 * g[i] + g[i - 1]) / (h * h);
        }
        if n >= 4 {
            d2g[0] = (2.0 * g[0] - 5.0 * g[1] + 4.0 * g[2] - g[3]) / (h * h);
            d2g[n - 1] = (2.0 * g[n - 1] - 5.0 * g[n - 2] + 4.0 * g[n - 3] - g[n - 4]) / (h * h);
        } else {
            d2g[0] = d2g[1];
            d2g[n - 1] = d2g[n - 2];
        }
        let mut cumulative = vec![0.0; n];
        for i in 1..n {
            cumulative[i] = cumulative[i - 1] + 0.5 * h * (g[i - 1] + g[i]);
        }

        let last = n - 1;
        let g_infinity = if g[last] <= 0.0 {
            cumulative[last]
        } else if dg[last] < 0.0 {
            cumulative[last] + g[last] * g[last] / -dg[last]
        } else {
            f64::INFINITY
        };
        let c0 = g
            .iter()
            .zip(&dg)
            .filter(|(gv, _)| **gv > SAMPLE_ZERO)
            .map(|(gv, d)| -d / gv)
            .fold(f64::INFINITY, f64::min);

        Ok(MemoryKernel {
            repr: Repr::Sampled(Sampled {
                step,
                g,
                dg,
                d2g,
                cumulative,
            }),
            c0,
            g_infinity,
        })
    }

    /// Two-column CSV `(t, g)` with a header row; `t` must start at 0 and be
    /// uniformly spaced.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let mut ts = Vec::new();
        let mut gs = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| MgtError::KernelData(e.to_string()))?;
            if rec.len() != 2 {
                return Err(MgtError::KernelData(format!(
                    "row {}: expected 2 columns, got {}",
                    line + 1,
                    rec.len()
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| MgtError::KernelData(format!("row {}: {e}: `{s}`", line + 1)))
            };
            ts.push(parse(&rec[0])?);
            gs.push(parse(&rec[1])?);
        }
        if ts.len() < 3 {
            return Err(MgtError::KernelData("need at least 3 kernel samples".into()));
        }
        let step = ts[1] - ts[0];
        if !(step > 0.0) {
            return Err(MgtError::KernelData("time column must increase".into()));
        }
        if ts[0].abs() > SPACING_REL_TOL * step {
            return Err(MgtError::KernelData(format!("samples must start at t=0, got {}", ts[0])));
        }
        for (j, w) in ts.windows(2).enumerate() {
            if ((w[1] - w[0]) - step).abs() > SPACING_REL_TOL * step {
                return Err(MgtError::KernelData(format!(
                    "non-uniform spacing between rows {} and {}",
                    j + 1,
                    j + 2
                )));
            }
        }
        Self::sampled(step, gs)
    }

    pub fn kind(&self) -> KernelKind {
        match self.repr {
            Repr::Zero => KernelKind::Zero,
            Repr::Prony { .. } => KernelKind::Prony,
            Repr::Sampled(_) => KernelKind::Sampled,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.repr, Repr::Zero)
    }

    /// Prony weights and rates, if this is a Prony kernel.
    pub fn prony_terms(&self) -> Option<(&[f64], &[f64])> {
        match &self.repr {
            Repr::Prony { weights, rates } => Some((weights, rates)),
            _ => None,
        }
    }

    /// Number of auxiliary memory variables per mode on the Prony path.
    pub fn n_terms(&self) -> usize {
        self.prony_terms().map_or(0, |(w, _)| w.len())
    }

    /// Domination constant: the largest `c₀` with `g′ ≤ −c₀g` (∞ for `g ≡ 0`).
    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn g_infinity(&self) -> f64 {
        self.g_infinity
    }

    /// Same shape, strength multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(MgtError::KernelData(format!("scale must be > 0, got {factor}")));
        }
        match &self.repr {
            Repr::Zero => Ok(Self::zero()),
            Repr::Prony { weights, rates } => {
                Self::prony(weights.iter().map(|w| w * factor).collect(), rates.clone())
            }
            Repr::Sampled(s) => Self::sampled(s.step, s.g.iter().map(|v| v * factor).collect()),
        }
    }

    pub fn eval(&self, t: f64) -> Result<KernelValue> {
        if !(t >= 0.0) {
            return Err(MgtError::Domain(format!("kernel evaluated at t = {t} < 0")));
        }
        Ok(self.eval_unchecked(t))
    }

    fn eval_unchecked(&self, t: f64) -> KernelValue {
        match &self.repr {
            Repr::Zero => KernelValue {
                g: 0.0,
                dg: 0.0,
                d2g: 0.0,
                cumulative: 0.0,
            },
            Repr::Prony { weights, rates } => {
                let mut v = KernelValue {
                    g: 0.0,
                    dg: 0.0,
                    d2g: 0.0,
                    cumulative: 0.0,
                };
                for (w, r) in weights.iter().zip(rates) {
                    let e = (-r * t).exp();
                    v.g += w * e;
                    v.dg -= w * r * e;
                    v.d2g += w * r * r * e;
                    v.cumulative += w / r * (-(-r * t).exp_m1());
                }
                v
            }
            Repr::Sampled(s) => s.eval(t),
        }
    }

    /// Value of `g`, `−g′` or `g″` at `t ≥ 0`.
    pub fn value(&self, which: KernelFn, t: f64) -> f64 {
        let v = self.eval_unchecked(t);
        match which {
            KernelFn::G => v.g,
            KernelFn::NegDg => -v.dg,
            KernelFn::D2g => v.d2g,
        }
    }

    /// `K(j·h)` for `j = 0..=n`.
    pub fn lag_table(&self, which: KernelFn, h: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|j| self.value(which, j as f64 * h)).collect()
    }

    /// Exponential-sum form `Σ cⱼ e^{−βⱼt}` of `g`, `−g′` or `g″` (Prony and
    /// zero kernels only).
    pub fn exp_terms(&self, which: KernelFn) -> Option<Vec<(f64, f64)>> {
        match &self.repr {
            Repr::Zero => Some(Vec::new()),
            Repr::Prony { weights, rates } => Some(
                weights
                    .iter()
                    .zip(rates)
                    .map(|(&w, &r)| {
                        let c = match which {
                            KernelFn::G => w,
                            KernelFn::NegDg => w * r,
                            KernelFn::D2g => w * r * r,
                        };
                        (c, r)
                    })
                    .collect(),
            ),
            Repr::Sampled(_) => None,
        }
    }

    /// Standing hypotheses `g ≥ 0`, `g′ ≤ 0`, `g″ ≥ 0`, `g′ ≤ −c₀g`.
    pub fn validate_assumption_a0(&self) -> AssumptionReport {
        let mut rep = AssumptionReport::new(AssumptionId::A0Kernel);
        rep.witness("c0", self.c0);
        rep.witness("G_infinity", self.g_infinity);
        match &self.repr {
            // Prony structure gives all four clauses with c₀ = min βᵢ.
            Repr::Zero | Repr::Prony { .. } => {}
            Repr::Sampled(s) => {
                let g0 = s.g[0].abs();
                let tol = SAMPLE_SHAPE_TOL * g0;
                rep.clause("g_nonnegative", s.g.iter().all(|&v| v >= 0.0));
                rep.clause("g_prime_nonpositive", s.g.windows(2).all(|w| w[1] - w[0] <= tol));
                rep.clause(
                    "g_double_prime_nonnegative",
                    s.g.windows(3).all(|w| w[2] - 2.0 * w[1] + w[0] >= -tol),
                );
                let all_positive = s.g.iter().all(|&v| v > SAMPLE_ZERO);
                rep.clause(
                    "g_prime_le_minus_c0_g",
                    all_positive && self.c0 > 0.0 && self.c0.is_finite(),
                );
            }
        }
        rep
    }
}

impl Sampled {
    fn eval(&self, t: f64) -> KernelValue {
        let n = self.g.len();
        let end = (n - 1) as f64 * self.step;
        if t <= end {
            let x = t / self.step;
            let i = (x.floor() as usize).min(n - 2);
            let frac = x - i as f64;
            let lerp = |v: &[f64]| v[i] + frac * (v[i + 1] - v[i]);
            let g = lerp(&self.g);
            let partial = (t - i as f64 * self.step) * 0.5 * (self.g[i] + g);
            return KernelValue {
                g,
                dg: lerp(&self.dg),
                d2g: lerp(&self.d2g),
                cumulative: self.cumulative[i] + partial,
            };
        }
        // exponential tail matched to the last sample's value and slope
        let gl = self.g[n - 1];
        let dl = self.dg[n - 1];
        let cl = self.cumulative[n - 1];
        let dt = t - end;
        if gl <= 0.0 {
            KernelValue {
                g: 0.0,
                dg: 0.0,
                d2g: 0.0,
                cumulative: cl,
            }
        } else if dl < 0.0 {
            let r = -dl / gl;
            let e = (-r * dt).exp();
            KernelValue {
                g: gl * e,
                dg: -r * gl * e,
                d2g: r * r * gl * e,
                cumulative: cl + gl / r * (-(-r * dt).exp_m1()),
            }
        } else {
            KernelValue {
                g: gl,
                dg: 0.0,
                d2g: 0.0,
                cumulative: cl + gl * dt,
            }
        }
    }
}

/// Trapezoid history integrals of a scalar series `f` sampled on a uniform
/// grid, for every grid time `tₙ`:
///
/// * `conv[n] = ∫₀^{tₙ} K(tₙ−s) f(s) ds`
/// * `diff[n] = ∫₀^{tₙ} K(tₙ−s) (f(tₙ) − f(s)) ds`
/// * `circ[n] = ∫₀^{tₙ} K(tₙ−s) (f(tₙ) − f(s))² ds`
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryIntegrals {
    pub conv: Vec<f64>,
    pub diff: Vec<f64>,
    pub circ: Vec<f64>,
}

impl HistoryIntegrals {
    fn zeros(n: usize) -> Self {
        HistoryIntegrals {
            conv: vec![0.0; n],
            diff: vec![0.0; n],
            circ: vec![0.0; n],
        }
    }
}

/// History integrals of `f` against `g`, `−g′` or `g″`.
pub fn history_integrals(kernel: &MemoryKernel, which: KernelFn, h: f64, f: &[f64]) -> HistoryIntegrals {
    match kernel.exp_terms(which) {
        Some(terms) => history_integrals_exp(&terms, h, f),
        None => {
            let lags = kernel.lag_table(which, h, f.len().saturating_sub(1));
            history_integrals_direct(&lags, h, f)
        }
    }
}

/// Recursive evaluation for `K(t) = Σ cⱼ e^{−βⱼt}`. Produces the same
/// trapezoid sums as [`history_integrals_direct`] up to roundoff.
pub fn history_integrals_exp(terms: &[(f64, f64)], h: f64, f: &[f64]) -> HistoryIntegrals {
    let n = f.len();
    let mut out = HistoryIntegrals::zeros(n);
    for &(c, beta) in terms {
        let e = (-beta * h).exp();
        let half = 0.5 * h;
        // running trapezoid sums of e^{−β(tₙ−s)}·{1, f_n − f, (f_n − f)², f}
        let (mut p, mut q, mut s, mut cv) = (0.0, 0.0, 0.0, 0.0);
        for i in 1..n {
            let d = f[i] - f[i - 1];
            s = e * (s + 2.0 * d * q + d * d * p) + half * e * d * d;
            q = e * (q + d * p) + half * e * d;
            p = e * p + half * (e + 1.0);
            cv = e * cv + half * (e * f[i - 1] + f[i]);
            out.conv[i] += c * cv;
            out.diff[i] += c * q;
            out.circ[i] += c * s.max(0.0);
        }
    }
    out
}

/// Direct O(n²) trapezoid sums given `lags[j] = K(j·h)`.
pub fn history_integrals_direct(lags: &[f64], h: f64, f: &[f64]) -> HistoryIntegrals {
    let n = f.len();
    assert!(lags.len() >= n, "lag table shorter than history");
    let mut out = HistoryIntegrals::zeros(n);
    for i in 1..n {
        let fi = f[i];
        let w_end = 0.5 * lags[i];
        let d0 = fi - f[0];
        let mut conv = w_end * f[0] + 0.5 * lags[0] * fi;
        let mut diff = w_end * d0;
        let mut circ = w_end * d0 * d0;
        for k in 1..i {
            let l = lags[i - k];
            let d = fi - f[k];
            conv += l * f[k];
            diff += l * d;
            circ += l * d * d;
        }
        out.conv[i] = h * conv;
        out.diff[i] = h * diff;
        out.circ[i] = h * circ;
    }
    out
}

/// `g∘v(tₙ) = ∫₀^{tₙ} g(tₙ−s) ‖v(tₙ) − v(s)‖² ds` at a single grid index by
/// direct trapezoid quadrature.
///
/// `history[i][j]` is the coefficient of mode `i` at grid time `j·h`. With a
/// spectrum the `A^{1/2}` norm is used (weights `μᵢ`); without one, the `H`
/// norm.
pub fn g_circ(
    kernel: &MemoryKernel,
    history: &[Vec<f64>],
    spectrum: Option<&OperatorSpectrum>,
    h: f64,
    n: usize,
) -> Result<f64> {
    if let Some(sp) = spectrum {
        if sp.len() != history.len() {
            return Err(MgtError::DimensionMismatch {
                expected: sp.len(),
                got: history.len(),
            });
        }
    }
    if let Some(short) = history.iter().position(|m| m.len() <= n) {
        return Err(MgtError::Precondition(format!(
            "history of mode {short} does not reach grid index {n}"
        )));
    }
    if kernel.is_zero() || n == 0 {
        return Ok(0.0);
    }
    let lags = kernel.lag_table(KernelFn::G, h, n);
    let mut total = 0.0;
    for (i, f) in history.iter().enumerate() {
        let weight = spectrum.map_or(1.0, |sp| sp.eigenvalues()[i]);
        let fi = f[n];
        let mut acc = 0.5 * lags[n] * (fi - f[0]).powi(2);
        for k in 1..n {
            acc += lags[n - k] * (fi - f[k]).powi(2);
        }
        total += weight * h * acc;
    }
    Ok(total)
}
