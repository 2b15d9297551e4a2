//! Time integration of the modal MGT equations with memory.
//!
//! Each mode `i` with eigenvalue `μᵢ` obeys
//!
//! ```text
//! τ u‴ + α u″ + c²μ u + bμ u′ − μ ∫₀ᵗ g(t−s) w(s) ds = 0
//! ```
//!
//! and is reduced to the first-order system in `(u, u′, u″)`. Two independent
//! routes evaluate the memory integral:
//!
//! * [`IntegrationPath::PronyAux`]: for `g = Σ gⱼe^{−βⱼt}` the convolution is
//!   `Σⱼ zⱼ` with `zⱼ′ = −βⱼzⱼ + gⱼw`, `zⱼ(0) = 0`; the enlarged system is
//!   advanced by classical RK4.
//! * [`IntegrationPath::Quadrature`]: trapezoid convolution over the stored
//!   history inside a Heun predictor–corrector (one correction per step).
//!
//! The history starts at `t = 0` with no prehistory. Storage is dense:
//! `n_modes · (n_steps + 1) · (4 + n_terms)` reals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::central_difference4;
use crate::error::{MgtError, Result};
use crate::kernels::{KernelFn, MemoryKernel};
use crate::model::{rel_eq, MemoryType, MgtParameters, Regime, CRITICAL_REL_TOL};
use crate::spectrum::{ModalVector, OperatorSpectrum};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_end: f64,
    h: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(MgtError::param("h", format!("step must be finite and > 0, got {h}")));
        }
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(MgtError::param("t_end", format!("must be finite and > 0, got {t_end}")));
        }
        let n_steps = (t_end / h).round() as usize;
        if n_steps == 0 || ((n_steps as f64 * h) - t_end).abs() > 1e-12 * t_end {
            return Err(MgtError::param(
                "h",
                format!("t_end = {t_end} is not an integer multiple of h = {h}"),
            ));
        }
        Ok(TimeGrid { t_end, h, n_steps })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    /// Number of grid points, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.h
    }
    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|n| self.time(n)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationPath {
    PronyAux,
    Quadrature,
}

/// `(u(0), u′(0), u″(0))`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub u0: ModalVector,
    pub u1: ModalVector,
    pub u2: ModalVector,
}

impl InitialData {
    pub fn new(u0: ModalVector, u1: ModalVector, u2: ModalVector) -> Self {
        InitialData { u0, u1, u2 }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(ModalVector::zeros(n), ModalVector::zeros(n), ModalVector::zeros(n))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::new(self.u0.scaled(c), self.u1.scaled(c), self.u2.scaled(c))
    }

    /// Keep only the listed modes, in order.
    pub fn select(&self, modes: &[usize]) -> Self {
        let pick = |v: &ModalVector| ModalVector(modes.iter().map(|&i| v[i]).collect());
        Self::new(pick(&self.u0), pick(&self.u1), pick(&self.u2))
    }

    fn check(&self, n: usize) -> Result<()> {
        for v in [&self.u0, &self.u1, &self.u2] {
            if v.len() != n {
                return Err(MgtError::DimensionMismatch {
                    expected: n,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(MgtError::Precondition("initial data must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Full time history of one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeHistory {
    pub u: Vec<f64>,
    pub ut: Vec<f64>,
    pub utt: Vec<f64>,
    /// `∫₀ᵗ g(t−s) w(s) ds` as realized by the integration path.
    pub conv: Vec<f64>,
    /// Auxiliary memory variables `zⱼ(t)`, one series per Prony term
    /// (empty on the quadrature path).
    pub aux: Vec<Vec<f64>>,
}

impl ModeHistory {
    fn with_capacity(n: usize, terms: usize) -> Self {
        ModeHistory {
            u: Vec::with_capacity(n),
            ut: Vec::with_capacity(n),
            utt: Vec::with_capacity(n),
            conv: Vec::with_capacity(n),
            aux: (0..terms).map(|_| Vec::with_capacity(n)).collect(),
        }
    }

    /// `w(t)` for the given memory weights.
    pub fn w(&self, weights: MemoryWeights) -> Vec<f64> {
        self.u.iter().zip(&self.ut).map(|(u, v)| weights.apply(*u, *v)).collect()
    }
}

/// `w = wu·u + wv·u′`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryWeights {
    pub wu: f64,
    pub wv: f64,
}

impl MemoryWeights {
    pub fn of(params: &MgtParameters) -> Self {
        let (wu, wv) = match params.memory_type() {
            MemoryType::None => (0.0, 0.0),
            MemoryType::Type1 => (1.0, 0.0),
            MemoryType::Type2 => (0.0, 1.0),
            MemoryType::Type3 => (params.lambda(), 1.0),
        };
        MemoryWeights { wu, wv }
    }

    #[inline]
    pub fn apply(&self, u: f64, v: f64) -> f64 {
        self.wu * u + self.wv * v
    }
}

/// Per-mode values at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalState {
    pub u: ModalVector,
    pub ut: ModalVector,
    pub utt: ModalVector,
    /// `aux[i][j]`: auxiliary variable of Prony term `j` in mode `i`.
    pub aux: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub params: MgtParameters,
    pub spectrum: OperatorSpectrum,
    pub kernel: MemoryKernel,
    pub path: IntegrationPath,
    pub modes: Vec<ModeHistory>,
}

impl Trajectory {
    /// Assemble a trajectory from externally produced histories (synthetic
    /// data, tests). Lengths must match the grid.
    pub fn from_histories(
        params: MgtParameters,
        spectrum: OperatorSpectrum,
        kernel: MemoryKernel,
        grid: TimeGrid,
        path: IntegrationPath,
        modes: Vec<ModeHistory>,
    ) -> Result<Self> {
        if modes.len() != spectrum.len() {
            return Err(MgtError::DimensionMismatch {
                expected: spectrum.len(),
                got: modes.len(),
            });
        }
        for m in &modes {
            for s in [&m.u, &m.ut, &m.utt, &m.conv] {
                if s.len() != grid.len() {
                    return Err(MgtError::DimensionMismatch {
                        expected: grid.len(),
                        got: s.len(),
                    });
                }
            }
        }
        Ok(Trajectory {
            grid,
            params,
            spectrum,
            kernel,
            path,
            modes,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn weights(&self) -> MemoryWeights {
        MemoryWeights::of(&self.params)
    }

    /// Memory is active: a memory type is set and the kernel is nonzero.
    pub fn has_memory(&self) -> bool {
        self.params.memory_type() != MemoryType::None && !self.kernel.is_zero()
    }

    pub fn state(&self, n: usize) -> ModalState {
        let col = |f: fn(&ModeHistory) -> &Vec<f64>| ModalVector(self.modes.iter().map(|m| f(m)[n]).collect());
        ModalState {
            u: col(|m| &m.u),
            ut: col(|m| &m.ut),
            utt: col(|m| &m.utt),
            aux: self.modes.iter().map(|m| m.aux.iter().map(|z| z[n]).collect()).collect(),
        }
    }

    /// `u‴` per mode at grid index `n`, eliminated through the equation.
    pub fn uttt(&self, mode: usize, n: usize) -> f64 {
        let p = &self.params;
        let mu = self.spectrum.eigenvalues()[mode];
        let m = &self.modes[mode];
        third_derivative(p, mu, m.u[n], m.ut[n], m.utt[n], m.conv[n])
    }
}

#[inline]
fn third_derivative(p: &MgtParameters, mu: f64, u: f64, v: f64, a: f64, conv: f64) -> f64 {
    (-p.alpha() * a - p.c2() * mu * u - p.b() * mu * v + mu * conv) / p.tau()
}

/// Integrate the modal equations on `grid` along the chosen path.
///
/// Modes are integrated independently (in parallel) and merged in ascending
/// mode order, so results do not depend on the thread count.
pub fn simulate(
    params: &MgtParameters,
    spectrum: &OperatorSpectrum,
    kernel: &MemoryKernel,
    initial: &InitialData,
    grid: TimeGrid,
    path: IntegrationPath,
) -> Result<Trajectory> {
    initial.check(spectrum.len())?;
    if params.memory_type() == MemoryType::None && !kernel.is_zero() {
        return Err(MgtError::config(
            "kernel.kind",
            "memoryless parameters require the zero kernel",
        ));
    }
    if path == IntegrationPath::PronyAux && kernel.prony_terms().is_none() && !kernel.is_zero() {
        return Err(MgtError::config(
            "time.path",
            "prony_aux path needs a prony or zero kernel",
        ));
    }
    let weights = MemoryWeights::of(params);
    let lags = match path {
        IntegrationPath::Quadrature if params.memory_type() != MemoryType::None => {
            Some(kernel.lag_table(KernelFn::G, grid.h(), grid.n_steps()))
        }
        _ => None,
    };

    let results: Vec<std::result::Result<ModeHistory, usize>> = spectrum
        .eigenvalues()
        .par_iter()
        .enumerate()
        .map(|(i, &mu)| {
            let init = [initial.u0[i], initial.u1[i], initial.u2[i]];
            match path {
                IntegrationPath::PronyAux => simulate_mode_rk4(params, mu, kernel, weights, init, grid),
                IntegrationPath::Quadrature => {
                    simulate_mode_quadrature(params, mu, lags.as_deref(), weights, init, grid)
                }
            }
        })
        .collect();

    let mut modes = Vec::with_capacity(results.len());
    for (mode, r) in results.into_iter().enumerate() {
        match r {
            Ok(m) => modes.push(m),
            Err(step) => return Err(MgtError::NumericalFailure { step, mode }),
        }
    }
    Ok(Trajectory {
        grid,
        params: params.clone(),
        spectrum: spectrum.clone(),
        kernel: kernel.clone(),
        path,
        modes,
    })
}

fn simulate_mode_rk4(
    p: &MgtParameters,
    mu: f64,
    kernel: &MemoryKernel,
    weights: MemoryWeights,
    init: [f64; 3],
    grid: TimeGrid,
) -> std::result::Result<ModeHistory, usize> {
    let (gw, beta): (Vec<f64>, Vec<f64>) = match (p.memory_type(), kernel.prony_terms()) {
        (MemoryType::None, _) | (_, None) => (Vec::new(), Vec::new()),
        (_, Some((w, r))) => (w.to_vec(), r.to_vec()),
    };
    let m = gw.len();
    let dim = 3 + m;
    let (tau, alpha, b, c2) = (p.tau(), p.alpha(), p.b(), p.c2());
    let rhs = |y: &[f64], out: &mut [f64]| {
        let conv: f64 = y[3..].iter().sum();
        out[0] = y[1];
        out[1] = y[2];
        out[2] = (-alpha * y[2] - c2 * mu * y[0] - b * mu * y[1] + mu * conv) / tau;
        let w = weights.apply(y[0], y[1]);
        for j in 0..m {
            out[3 + j] = -beta[j] * y[3 + j] + gw[j] * w;
        }
    };

    let n = grid.len();
    let h = grid.h();
    let mut hist = ModeHistory::with_capacity(n, m);
    let mut y = vec![0.0; dim];
    y[..3].copy_from_slice(&init);
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);

    let record = |hist: &mut ModeHistory, y: &[f64]| {
        hist.u.push(y[0]);
        hist.ut.push(y[1]);
        hist.utt.push(y[2]);
        hist.conv.push(y[3..].iter().sum());
        for j in 0..m {
            hist.aux[j].push(y[3 + j]);
        }
    };
    record(&mut hist, &y);
    for step in 1..n {
        rhs(&y, &mut k1);
        for d in 0..dim {
            tmp[d] = y[d] + 0.5 * h * k1[d];
        }
        rhs(&tmp, &mut k2);
        for d in 0..dim {
            tmp[d] = y[d] + 0.5 * h * k2[d];
        }
        rhs(&tmp, &mut k3);
        for d in 0..dim {
            tmp[d] = y[d] + h * k3[d];
        }
        rhs(&tmp, &mut k4);
        for d in 0..dim {
            y[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
        }
        if y.iter().any(|x| !x.is_finite()) {
            return Err(step);
        }
        record(&mut hist, &y);
    }
    Ok(hist)
}

fn simulate_mode_quadrature(
    p: &MgtParameters,
    mu: f64,
    lags: Option<&[f64]>,
    weights: MemoryWeights,
    init: [f64; 3],
    grid: TimeGrid,
) -> std::result::Result<ModeHistory, usize> {
    let n = grid.len();
    let h = grid.h();
    let f = |y: [f64; 3], conv: f64| [y[1], y[2], third_derivative(p, mu, y[0], y[1], y[2], conv)];

    let mut hist = ModeHistory::with_capacity(n, 0);
    let mut w_hist: Vec<f64> = Vec::with_capacity(n);
    let mut y = init;
    let mut conv = 0.0;
    hist.u.push(y[0]);
    hist.ut.push(y[1]);
    hist.utt.push(y[2]);
    hist.conv.push(conv);
    w_hist.push(weights.apply(y[0], y[1]));

    for step in 1..n {
        let k1 = f(y, conv);
        let pred = [y[0] + h * k1[0], y[1] + h * k1[1], y[2] + h * k1[2]];
        // trapezoid weights at t_step, without the endpoint
        let partial = match lags {
            Some(l) => {
                let mut s = 0.5 * l[step] * w_hist[0];
                for k in 1..step {
                    s += l[step - k] * w_hist[k];
                }
                h * s
            }
            None => 0.0,
        };
        let l0 = lags.map_or(0.0, |l| 0.5 * h * l[0]);
        let conv_pred = partial + l0 * weights.apply(pred[0], pred[1]);
        let k2 = f(pred, conv_pred);
        for d in 0..3 {
            y[d] += 0.5 * h * (k1[d] + k2[d]);
        }
        if y.iter().any(|x| !x.is_finite()) {
            return Err(step);
        }
        let w = weights.apply(y[0], y[1]);
        conv = partial + l0 * w;
        w_hist.push(w);
        hist.u.push(y[0]);
        hist.ut.push(y[1]);
        hist.utt.push(y[2]);
        hist.conv.push(conv);
    }
    Ok(hist)
}

/// Residual of a structural identity along a trajectory: per grid point the
/// largest absolute residual over modes.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub max_abs: f64,
    /// Largest magnitude of any individual term in the identity.
    pub scale: f64,
}

impl ResidualSeries {
    fn from_values(times: Vec<f64>, values: Vec<f64>, scale: f64) -> Self {
        let max_abs = values.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        ResidualSeries {
            times,
            values,
            max_abs,
            scale,
        }
    }

    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.max_abs / self.scale
        } else {
            self.max_abs
        }
    }
}

/// `τz″ + bAz + γz′ − (γc²/b)u′` with `z = u′ + (c²/b)u` on a memoryless
/// trajectory; `z″` uses `u‴` from the equation, so this vanishes to roundoff.
pub fn z_substitution_residual(traj: &Trajectory) -> Result<ResidualSeries> {
    if traj.params.memory_type() != MemoryType::None {
        return Err(MgtError::Precondition(
            "z-substitution applies to memoryless trajectories only".into(),
        ));
    }
    let p = &traj.params;
    let (tau, b, c2, gamma) = (p.tau(), p.b(), p.c2(), p.gamma());
    let r = c2 / b;
    let mut values = vec![0.0f64; traj.len()];
    let mut scale = 0.0f64;
    for (i, m) in traj.modes.iter().enumerate() {
        let mu = traj.spectrum.eigenvalues()[i];
        for (n, slot) in values.iter_mut().enumerate() {
            let (u, v, a) = (m.u[n], m.ut[n], m.utt[n]);
            let z = v + r * u;
            let zt = a + r * v;
            let ztt = traj.uttt(i, n) + r * a;
            let terms = [tau * ztt, b * mu * z, gamma * zt, -gamma * r * v];
            let res: f64 = terms.iter().sum();
            scale = terms.iter().fold(scale, |s, t| s.max(t.abs()));
            *slot = slot.max(res.abs());
        }
    }
    Ok(ResidualSeries::from_values(traj.grid.times(), values, scale))
}

/// `τw″ + bAw − g∗Aw` with `w = λu + u′` on a critical type-3 trajectory.
///
/// `w″` is a fourth-order central difference of the stored `w′ = λu′ + u″`
/// and the convolution is the one produced by the trajectory's own memory
/// path, so the residual measures integration error: O(h⁴) on the Prony path,
/// O(h²) on the quadrature path. Reported on interior points only.
pub fn critical_w_equation_residual(traj: &Trajectory) -> Result<ResidualSeries> {
    let p = &traj.params;
    if p.memory_type() != MemoryType::Type3 {
        return Err(MgtError::Precondition("w-equation needs type-3 memory".into()));
    }
    if p.regime() != Regime::Critical || !rel_eq(p.lambda(), p.alpha() / p.tau(), CRITICAL_REL_TOL) {
        return Err(MgtError::Precondition(
            "w-equation needs the critical regime with lambda = alpha/tau".into(),
        ));
    }
    if traj.len() < 5 {
        return Err(MgtError::Precondition("need at least 5 grid points".into()));
    }
    let h = traj.grid.h();
    let lam = p.lambda();
    let interior = 2..traj.len() - 2;
    let mut values = vec![0.0f64; interior.len()];
    let mut scale = 0.0f64;
    for (i, m) in traj.modes.iter().enumerate() {
        let mu = traj.spectrum.eigenvalues()[i];
        let wt: Vec<f64> = m.ut.iter().zip(&m.utt).map(|(v, a)| lam * v + a).collect();
        let wtt = central_difference4(&wt, h);
        for (slot, n) in interior.clone().enumerate() {
            let w = lam * m.u[n] + m.ut[n];
            let terms = [p.tau() * wtt[slot], p.b() * mu * w, -mu * m.conv[n]];
            scale = terms.iter().fold(scale, |s, t| s.max(t.abs()));
            values[slot] = values[slot].max(terms.iter().sum::<f64>().abs());
        }
    }
    let times = interior.map(|n| traj.grid.time(n)).collect();
    Ok(ResidualSeries::from_values(times, values, scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::history_integrals_direct;

    fn params(mt: MemoryType, tau: f64, alpha: f64, b: f64, c2: f64, lambda: f64) -> MgtParameters {
        MgtParameters::new(tau, alpha, b, c2, mt, lambda, None).unwrap()
    }

    fn single(mu: f64) -> OperatorSpectrum {
        OperatorSpectrum::new(vec![mu]).unwrap()
    }

    fn init1(u: f64, v: f64, a: f64) -> InitialData {
        InitialData::new(ModalVector(vec![u]), ModalVector(vec![v]), ModalVector(vec![a]))
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(1.0, 0.0).is_err());
        assert!(TimeGrid::new(1.0, 0.3).is_err());
        let g = TimeGrid::new(50.0, 1e-3).unwrap();
        assert_eq!(g.n_steps(), 50_000);
        assert_eq!(g.len(), 50_001);
    }

    #[test]
    fn critical_memoryless_conserves_ehat1() {
        let p = params(MemoryType::None, 1.0, 1.0, 1.0, 1.0, 0.0);
        let grid = TimeGrid::new(50.0, 1e-3).unwrap();
        let traj = simulate(&p, &single(1.0), &MemoryKernel::zero(), &init1(1.0, 0.0, 0.0), grid, IntegrationPath::PronyAux)
            .unwrap();
        let m = &traj.modes[0];
        // E0cr = b μ (u′ + k u)² + τ (u″ + k u′)², k = 1
        let e: Vec<f64> = (0..traj.len())
            .map(|n| (m.ut[n] + m.u[n]).powi(2) + (m.utt[n] + m.ut[n]).powi(2))
            .collect();
        assert!((e[0] - 1.0).abs() < 1e-15);
        let drift = e.iter().map(|x| (x - e[0]).abs()).fold(0.0, f64::max) / e[0];
        assert!(drift < 1e-8, "drift {drift}");
    }

    #[test]
    fn zero_data_gives_zero_trajectory() {
        let p = params(MemoryType::Type1, 1.0, 2.0, 1.0, 1.0, 0.0);
        let k = MemoryKernel::prony(vec![0.5], vec![2.0]).unwrap();
        let sp = OperatorSpectrum::dirichlet(1.0, 3).unwrap();
        let grid = TimeGrid::new(1.0, 0.01).unwrap();
        for path in [IntegrationPath::PronyAux, IntegrationPath::Quadrature] {
            let t = simulate(&p, &sp, &k, &InitialData::zeros(3), grid, path).unwrap();
            for m in &t.modes {
                assert!(m.u.iter().chain(&m.ut).chain(&m.utt).chain(&m.conv).all(|x| *x == 0.0));
            }
        }
    }

    #[test]
    fn incompatible_kernel_and_path() {
        let p = params(MemoryType::Type1, 1.0, 2.0, 1.0, 1.0, 0.0);
        let vals = (0..100).map(|j| (-(j as f64) * 0.1).exp()).collect();
        let sk = MemoryKernel::sampled(0.1, vals).unwrap();
        let grid = TimeGrid::new(1.0, 0.01).unwrap();
        let r = simulate(&p, &single(1.0), &sk, &init1(1.0, 0.0, 0.0), grid, IntegrationPath::PronyAux);
        assert!(matches!(r, Err(MgtError::Config { .. })));
        assert!(simulate(&p, &single(1.0), &sk, &init1(1.0, 0.0, 0.0), grid, IntegrationPath::Quadrature).is_ok());
    }

    #[test]
    fn blow_up_reports_step() {
        // γ < 0 with a huge step: explicit RK4 overflows
        let p = params(MemoryType::None, 1.0, 0.1, 1.0, 50.0, 0.0);
        let grid = TimeGrid::new(400.0, 0.5).unwrap();
        let r = simulate(&p, &single(1e6), &MemoryKernel::zero(), &init1(1.0, 0.0, 0.0), grid, IntegrationPath::PronyAux);
        assert!(matches!(r, Err(MgtError::NumericalFailure { mode: 0, .. })), "{r:?}");
    }

    #[test]
    fn cross_path_agreement_is_second_order() {
        let p = params(MemoryType::Type1, 1.0, 2.0, 1.0, 1.0, 0.0);
        let k = MemoryKernel::prony(vec![0.5], vec![2.0]).unwrap();
        let diff = |h: f64| {
            let grid = TimeGrid::new(4.0, h).unwrap();
            let a = simulate(&p, &single(1.0), &k, &init1(1.0, 0.0, 0.0), grid, IntegrationPath::PronyAux).unwrap();
            let b = simulate(&p, &single(1.0), &k, &init1(1.0, 0.0, 0.0), grid, IntegrationPath::Quadrature).unwrap();
            a.modes[0].u.iter().zip(&b.modes[0].u).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        };
        let (d1, d2, d3) = (diff(0.02), diff(0.01), diff(0.005));
        let o1 = (d1 / d2).log2();
        let o2 = (d2 / d3).log2();
        assert!(o1 > 1.8 && o2 > 1.8, "orders {o1} {o2}");
    }

    fn max_err(a: &Trajectory, reference: &Trajectory) -> f64 {
        let stride = (a.grid.h() / reference.grid.h()).round() as usize;
        a.modes[0]
            .u
            .iter()
            .enumerate()
            .map(|(n, x)| (x - reference.modes[0].u[n * stride]).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn refinement_orders_against_fine_reference() {
        let p = params(MemoryType::Type3, 1.0, 2.0, 1.0, 1.0, 1.5);
        let k = MemoryKernel::prony(vec![0.2], vec![2.0]).unwrap();
        let sp = single(4.0);
        let init = init1(1.0, -0.5, 0.2);
        let run = |h: f64, path| simulate(&p, &sp, &k, &init, TimeGrid::new(1.0, h).unwrap(), path).unwrap();
        let reference = run(1e-5, IntegrationPath::PronyAux);
        let e: Vec<f64> = [0.04, 0.02, 0.01]
            .iter()
            .map(|&h| max_err(&run(h, IntegrationPath::PronyAux), &reference))
            .collect();
        assert!((e[0] / e[1]).log2() > 3.7 && (e[1] / e[2]).log2() > 3.7, "rk4 {e:?}");
        let q: Vec<f64> = [0.02, 0.01, 0.005]
            .iter()
            .map(|&h| max_err(&run(h, IntegrationPath::Quadrature), &reference))
            .collect();
        assert!((q[0] / q[1]).log2() > 1.8 && (q[1] / q[2]).log2() > 1.8, "quadrature {q:?}");
    }

    #[test]
    fn modes_decouple_and_scale_linearly() {
        let p = params(MemoryType::Type2, 1.0, 2.0, 1.0, 1.0, 0.0);
        let k = MemoryKernel::prony(vec![0.05, 0.02], vec![4.0, 6.0]).unwrap();
        let sp = OperatorSpectrum::dirichlet(1.0, 3).unwrap();
        let init = InitialData::new(
            ModalVector(vec![1.0, -0.3, 0.2]),
            ModalVector(vec![0.1, 0.4, -0.2]),
            ModalVector(vec![0.0, 0.5, 1.0]),
        );
        let grid = TimeGrid::new(2.0, 1e-3).unwrap();
        let joint = simulate(&p, &sp, &k, &init, grid, IntegrationPath::PronyAux).unwrap();
        for i in 0..3 {
            let sp_i = OperatorSpectrum::new(vec![sp.eigenvalues()[i]]).unwrap();
            let alone = simulate(&p, &sp_i, &k, &init.select(&[i]), grid, IntegrationPath::PronyAux).unwrap();
            assert_eq!(alone.modes[0], joint.modes[i]);
        }
        let c = -2.75;
        let scaled = simulate(&p, &sp, &k, &init.scaled(c), grid, IntegrationPath::PronyAux).unwrap();
        for (a, b) in scaled.modes.iter().zip(&joint.modes) {
            let size = b.u.iter().fold(0.0f64, |m, y| m.max(y.abs()));
            for (x, y) in a.u.iter().zip(&b.u) {
                assert!((x - c * y).abs() <= 1e-12 * c.abs() * size);
            }
        }
    }

    #[test]
    fn auxiliaries_match_trapezoid_convolution() {
        let p = params(MemoryType::Type1, 1.0, 2.0, 1.0, 1.0, 0.0);
        let k = MemoryKernel::prony(vec![0.5], vec![2.0]).unwrap();
        let sp = single(2.0);
        let gap = |h: f64| {
            let t = simulate(&p, &sp, &k, &init1(1.0, 0.3, -0.1), TimeGrid::new(2.0, h).unwrap(), IntegrationPath::PronyAux)
                .unwrap();
            let m = &t.modes[0];
            assert_eq!(m.aux[0][0], 0.0);
            let lags = k.lag_table(KernelFn::G, h, t.grid.n_steps());
            let direct = history_integrals_direct(&lags, h, &m.u);
            m.aux[0].iter().zip(&direct.conv).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let (a, b) = (gap(0.02), gap(0.01));
        assert!(a < 1e-3 && (a / b).log2() > 1.8, "{a} {b}");
    }

    #[test]
    fn z_substitution_vanishes() {
        for (alpha, label) in [(2.0, "gamma>0"), (1.0, "gamma=0")] {
            let p = params(MemoryType::None, 1.0, alpha, 1.0, 1.0, 0.0);
            let sp = OperatorSpectrum::dirichlet(1.0, 4).unwrap();
            let init = InitialData::new(
                ModalVector(vec![1.0, 0.5, -0.2, 0.1]),
                ModalVector(vec![0.0, 1.0, 0.3, 0.0]),
                ModalVector(vec![0.2, 0.0, 0.0, -1.0]),
            );
            let t = simulate(&p, &sp, &MemoryKernel::zero(), &init, TimeGrid::new(2.0, 1e-3).unwrap(), IntegrationPath::PronyAux)
                .unwrap();
            let r = z_substitution_residual(&t).unwrap();
            assert!(r.max_abs < 1e-10 * r.scale, "{label}: {} vs {}", r.max_abs, r.scale);
        }
        let p = params(MemoryType::Type1, 1.0, 2.0, 1.0, 1.0, 0.0);
        let k = MemoryKernel::prony(vec![0.5], vec![2.0]).unwrap();
        let t = simulate(&p, &single(1.0), &k, &init1(1.0, 0.0, 0.0), TimeGrid::new(0.1, 0.01).unwrap(), IntegrationPath::PronyAux)
            .unwrap();
        assert!(matches!(z_substitution_residual(&t), Err(MgtError::Precondition(_))));
    }

    #[test]
    fn critical_w_equation_refines_at_path_order() {
        let p = params(MemoryType::Type3, 1.0, 1.0, 1.0, 1.0, 1.0);
        let k = MemoryKernel::prony(vec![0.2], vec![2.0]).unwrap();
        let sp = single(1.0);
        let init = init1(1.0, 0.0, 0.0);
        let res = |h: f64, path| {
            let t = simulate(&p, &sp, &k, &init, TimeGrid::new(2.0, h).unwrap(), path).unwrap();
            critical_w_equation_residual(&t).unwrap().max_abs
        };
        let hs = [1e-2, 5e-3, 2.5e-3];
        let rk: Vec<f64> = hs.iter().map(|&h| res(h, IntegrationPath::PronyAux)).collect();
        let qd: Vec<f64> = hs.iter().map(|&h| res(h, IntegrationPath::Quadrature)).collect();
        assert!((rk[0] / rk[1]).log2() > 3.5 && (rk[1] / rk[2]).log2() > 3.5, "prony {rk:?}");
        assert!((qd[0] / qd[1]).log2() > 1.8 && (qd[1] / qd[2]).log2() > 1.8, "quadrature {qd:?}");

        let zero = simulate(&p, &sp, &k, &InitialData::zeros(1), TimeGrid::new(1.0, 0.01).unwrap(), IntegrationPath::PronyAux)
            .unwrap();
        assert_eq!(critical_w_equation_residual(&zero).unwrap().max_abs, 0.0);

        let nc = params(MemoryType::Type3, 1.0, 2.0, 1.0, 1.0, 1.5);
        let t = simulate(&nc, &sp, &k, &init, TimeGrid::new(0.1, 0.01).unwrap(), IntegrationPath::PronyAux).unwrap();
        assert!(matches!(critical_w_equation_residual(&t), Err(MgtError::Precondition(_))));
    }
}
