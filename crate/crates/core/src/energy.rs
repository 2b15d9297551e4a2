//! Energy functionals, dampers and memory-identity pieces along a trajectory.
//!
//! Notation (all sums over modes, `A`-weighted norms use the eigenvalues):
//! `a = u″`, `v = u′`, `r = c²/b`, and for a memory variable `x` (`u`, `u′`
//! or `w = λu + u′`) the history functional
//! `K∘x(t) = ∫₀ᵗ K(t−s) ‖A^{1/2}(x(t) − x(s))‖² ds`, evaluated by the
//! trapezoid rule on the simulation grid.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{MemoryWeights, Trajectory};
use crate::error::{MgtError, Result};
use crate::kernels::{history_integrals, KernelFn};
use crate::model::{rel_eq, MemoryType, MgtParameters, Regime, CRITICAL_REL_TOL};

/// Ledger fields, in the fixed column order used for output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Functional {
    F0,
    F1,
    F2,
    F3,
    F3cr,
    E0,
    E0cr,
    E01,
    E02,
    E1,
    E2,
    E3,
    E3cr,
    Ehat1,
    Ehat2,
    Ehat,
    R0,
    R1,
    R2,
    R3,
    R3cr,
    E11m,
    R11m,
    E12m,
    R12m,
    #[serde(rename = "g_circ_u")]
    GCircU,
    #[serde(rename = "g_circ_ut")]
    GCircUt,
    #[serde(rename = "g_circ_w")]
    GCircW,
}

impl Functional {
    pub const ALL: [Functional; 28] = [
        Functional::F0,
        Functional::F1,
        Functional::F2,
        Functional::F3,
        Functional::F3cr,
        Functional::E0,
        Functional::E0cr,
        Functional::E01,
        Functional::E02,
        Functional::E1,
        Functional::E2,
        Functional::E3,
        Functional::E3cr,
        Functional::Ehat1,
        Functional::Ehat2,
        Functional::Ehat,
        Functional::R0,
        Functional::R1,
        Functional::R2,
        Functional::R3,
        Functional::R3cr,
        Functional::E11m,
        Functional::R11m,
        Functional::E12m,
        Functional::R12m,
        Functional::GCircU,
        Functional::GCircUt,
        Functional::GCircW,
    ];

    pub fn name(self) -> &'static str {
        use Functional::*;
        match self {
            F0 => "F0",
            F1 => "F1",
            F2 => "F2",
            F3 => "F3",
            F3cr => "F3cr",
            E0 => "E0",
            E0cr => "E0cr",
            E01 => "E01",
            E02 => "E02",
            E1 => "E1",
            E2 => "E2",
            E3 => "E3",
            E3cr => "E3cr",
            Ehat1 => "Ehat1",
            Ehat2 => "Ehat2",
            Ehat => "Ehat",
            R0 => "R0",
            R1 => "R1",
            R2 => "R2",
            R3 => "R3",
            R3cr => "R3cr",
            E11m => "E11m",
            R11m => "R11m",
            E12m => "E12m",
            R12m => "R12m",
            GCircU => "g_circ_u",
            GCircUt => "g_circ_ut",
            GCircW => "g_circ_w",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|f| f.name() == s)
    }

    /// Standard (F-family) energies, the ones expected to decay exponentially.
    pub fn is_standard(self) -> bool {
        use Functional::*;
        matches!(self, F0 | F1 | F2 | F3 | F3cr)
    }
}

/// Fields populated for a given parameter set. Natural energies and dampers
/// appear only where the multiplier weight (`k`, or `λ` for type 3) lies in
/// the closed range `[c²/b, α/τ]`.
pub fn populated_set(params: &MgtParameters) -> Vec<Functional> {
    use Functional::*;
    let regime = params.regime();
    let critical = regime == Regime::Critical;
    let k_ok = params.k_in_closed_range(params.k());
    let mut out = vec![F0];
    match params.memory_type() {
        MemoryType::None => {
            out.extend([F1, F2, F3]);
            if k_ok {
                out.extend([E0, R0]);
            }
            if critical {
                out.push(E0cr);
            }
            out.extend([E01, E02, Ehat1, Ehat2, Ehat]);
        }
        MemoryType::Type1 => {
            out.push(F1);
            if k_ok {
                out.extend([E0, R0, E1, R1]);
            }
            out.extend([E01, E02, E11m, R11m, E12m, R12m, GCircU]);
        }
        MemoryType::Type2 => {
            out.push(F2);
            if k_ok {
                out.extend([E0, R0, E2, R2]);
            }
            out.push(GCircUt);
        }
        MemoryType::Type3 => {
            out.push(F3);
            if critical {
                out.push(F3cr);
            }
            if k_ok {
                out.extend([E0, R0]);
            }
            if params.k_in_closed_range(params.lambda()) {
                out.extend([E3, R3]);
                if critical {
                    out.extend([E3cr, R3cr]);
                }
            }
            out.push(GCircW);
        }
    }
    out.sort();
    out
}

/// Time series of every populated functional on the trajectory's grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub times: Vec<f64>,
    series: BTreeMap<Functional, Vec<f64>>,
}

impl EnergyLedger {
    pub fn new(times: Vec<f64>) -> Self {
        EnergyLedger {
            times,
            series: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, f: Functional, values: Vec<f64>) -> Result<()> {
        if values.len() != self.times.len() {
            return Err(MgtError::DimensionMismatch {
                expected: self.times.len(),
                got: values.len(),
            });
        }
        self.series.insert(f, values);
        Ok(())
    }

    pub fn get(&self, f: Functional) -> Option<&[f64]> {
        self.series.get(&f).map(Vec::as_slice)
    }

    pub fn require(&self, f: Functional) -> Result<&[f64]> {
        self.get(f)
            .ok_or_else(|| MgtError::Precondition(format!("ledger has no {} series", f.name())))
    }

    pub fn contains(&self, f: Functional) -> bool {
        self.series.contains_key(&f)
    }

    /// Populated fields in column order.
    pub fn functionals(&self) -> Vec<Functional> {
        self.series.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn merge(&mut self, other: EnergyLedger) {
        self.series.extend(other.series);
    }
}

/// Modal sums at every grid point.
#[derive(Debug, Clone)]
struct Sums {
    au2: Vec<f64>,
    av2: Vec<f64>,
    aw2: Vec<f64>,
    ha2: Vec<f64>,
    hv2: Vec<f64>,
    hwt2: Vec<f64>,
    auv: Vec<f64>,
    hav: Vec<f64>,
    /// `g∘x`, `(−g′)∘x`, `g″∘x`
    circ_g: Vec<f64>,
    circ_ndg: Vec<f64>,
    circ_d2g: Vec<f64>,
    /// `Σμ vᵢ(t)(g∗xᵢ)(t)`, `Σμ aᵢ(t)(g∗xᵢ)(t)`
    conv_v: Vec<f64>,
    conv_a: Vec<f64>,
    /// `Σμ vᵢ(t)∫g(t−s)(xᵢ(t) − xᵢ(s))ds`
    diff_v: Vec<f64>,
}

impl Sums {
    fn zeros(n: usize) -> Self {
        let z = || vec![0.0; n];
        Sums {
            au2: z(),
            av2: z(),
            aw2: z(),
            ha2: z(),
            hv2: z(),
            hwt2: z(),
            auv: z(),
            hav: z(),
            circ_g: z(),
            circ_ndg: z(),
            circ_d2g: z(),
            conv_v: z(),
            conv_a: z(),
            diff_v: z(),
        }
    }

    fn add(&mut self, o: &Sums) {
        let pairs: [(&mut Vec<f64>, &Vec<f64>); 14] = [
            (&mut self.au2, &o.au2),
            (&mut self.av2, &o.av2),
            (&mut self.aw2, &o.aw2),
            (&mut self.ha2, &o.ha2),
            (&mut self.hv2, &o.hv2),
            (&mut self.hwt2, &o.hwt2),
            (&mut self.auv, &o.auv),
            (&mut self.hav, &o.hav),
            (&mut self.circ_g, &o.circ_g),
            (&mut self.circ_ndg, &o.circ_ndg),
            (&mut self.circ_d2g, &o.circ_d2g),
            (&mut self.conv_v, &o.conv_v),
            (&mut self.conv_a, &o.conv_a),
            (&mut self.diff_v, &o.diff_v),
        ];
        for (acc, x) in pairs {
            for (a, b) in acc.iter_mut().zip(x) {
                *a += b;
            }
        }
    }
}

/// Memory variable `x` whose history enters the functionals.
fn memory_variable(mt: MemoryType, weights: MemoryWeights) -> MemoryWeights {
    match mt {
        MemoryType::None => MemoryWeights { wu: 0.0, wv: 0.0 },
        _ => weights,
    }
}

fn mode_sums(traj: &Trajectory, i: usize) -> Sums {
    let m = &traj.modes[i];
    let mu = traj.spectrum.eigenvalues()[i];
    let n = traj.len();
    let h = traj.grid.h();
    let p = &traj.params;
    let lam = p.lambda();
    let x = memory_variable(p.memory_type(), traj.weights());
    let mut s = Sums::zeros(n);
    for j in 0..n {
        let (u, v, a) = (m.u[j], m.ut[j], m.utt[j]);
        let w = lam * u + v;
        let wt = lam * v + a;
        s.au2[j] = mu * u * u;
        s.av2[j] = mu * v * v;
        s.aw2[j] = mu * w * w;
        s.ha2[j] = a * a;
        s.hv2[j] = v * v;
        s.hwt2[j] = wt * wt;
        s.auv[j] = mu * u * v;
        s.hav[j] = a * v;
    }
    if traj.has_memory() {
        let xs = m.w(x);
        let hg = history_integrals(&traj.kernel, KernelFn::G, h, &xs);
        let hn = history_integrals(&traj.kernel, KernelFn::NegDg, h, &xs);
        for j in 0..n {
            s.circ_g[j] = mu * hg.circ[j];
            s.circ_ndg[j] = mu * hn.circ[j];
            s.conv_v[j] = mu * m.ut[j] * hg.conv[j];
            s.conv_a[j] = mu * m.utt[j] * hg.conv[j];
            s.diff_v[j] = mu * m.ut[j] * hg.diff[j];
        }
        if p.memory_type() == MemoryType::Type1 {
            let hd = history_integrals(&traj.kernel, KernelFn::D2g, h, &xs);
            for j in 0..n {
                s.circ_d2g[j] = mu * hd.circ[j];
            }
        }
    }
    s
}

/// Per-mode sums reduced in ascending mode order (parallel within batches).
fn sums(traj: &Trajectory) -> Sums {
    let batch = rayon::current_num_threads().max(1);
    let mut total = Sums::zeros(traj.len());
    let idx: Vec<usize> = (0..traj.n_modes()).collect();
    for chunk in idx.chunks(batch) {
        let parts: Vec<Sums> = chunk.par_iter().map(|&i| mode_sums(traj, i)).collect();
        for part in &parts {
            total.add(part);
        }
    }
    total
}

/// `g(tₙ)`, `g′(tₙ)`, `G(tₙ)` on the grid.
struct KernelSeries {
    g: Vec<f64>,
    dg: Vec<f64>,
    cum: Vec<f64>,
}

fn kernel_series(traj: &Trajectory) -> KernelSeries {
    let n = traj.len();
    let mut ks = KernelSeries {
        g: vec![0.0; n],
        dg: vec![0.0; n],
        cum: vec![0.0; n],
    };
    if traj.has_memory() {
        for j in 0..n {
            let kv = traj.kernel.eval(traj.grid.time(j)).expect("grid times are nonnegative");
            ks.g[j] = kv.g;
            ks.dg[j] = kv.dg;
            ks.cum[j] = kv.cumulative;
        }
    }
    ks
}

fn map_n(n: usize, f: impl Fn(usize) -> f64) -> Vec<f64> {
    (0..n).map(f).collect()
}

/// Pointwise pieces shared by several formulas.
struct Ctx<'a> {
    p: &'a MgtParameters,
    s: Sums,
    ks: KernelSeries,
    n: usize,
}

impl<'a> Ctx<'a> {
    fn new(traj: &'a Trajectory) -> Self {
        Ctx {
            p: &traj.params,
            s: sums(traj),
            ks: kernel_series(traj),
            n: traj.len(),
        }
    }

    fn f0(&self) -> Vec<f64> {
        let s = &self.s;
        map_n(self.n, |j| s.ha2[j] + s.av2[j] + s.au2[j])
    }

    /// `b‖A^{1/2}(v + ρu)‖² + τ‖a + κv‖²`
    fn two_squares(&self, rho: f64, kappa: f64) -> Vec<f64> {
        let (s, p) = (&self.s, self.p);
        map_n(self.n, |j| {
            p.b() * (s.av2[j] + 2.0 * rho * s.auv[j] + rho * rho * s.au2[j])
                + p.tau() * (s.ha2[j] + 2.0 * kappa * s.hav[j] + kappa * kappa * s.hv2[j])
        })
    }

    fn e0(&self, k: f64) -> Vec<f64> {
        let (s, p) = (&self.s, self.p);
        let r = p.c2() / p.b();
        let base = self.two_squares(r, k);
        map_n(self.n, |j| {
            base[j] + k * p.tau() * (p.alpha() / p.tau() - k) * s.hv2[j] + p.c2() * (k - r) * s.au2[j]
        })
    }

    fn r0(&self, k: f64) -> Vec<f64> {
        let (s, p) = (&self.s, self.p);
        let r = p.c2() / p.b();
        map_n(self.n, |j| {
            2.0 * p.tau() * (p.alpha() / p.tau() - k) * s.ha2[j] + 2.0 * p.b() * (k - r) * s.av2[j]
        })
    }

    /// `τ‖a + kv‖² + kτ(α/τ − k)‖v‖²`, the part shared by E₀, E₂ and E₃.
    fn tail(&self, k: f64) -> Vec<f64> {
        let (s, p) = (&self.s, self.p);
        map_n(self.n, |j| {
            p.tau() * (s.ha2[j] + 2.0 * k * s.hav[j] + k * k * s.hv2[j])
                + k * p.tau() * (p.alpha() / p.tau() - k) * s.hv2[j]
        })
    }
}

fn check_k(p: &MgtParameters, k: f64) -> Result<()> {
    if !p.k_in_closed_range(k) {
        return Err(MgtError::Precondition(format!(
            "k = {k} outside the closed range [c2/b, alpha/tau] = [{}, {}]",
            p.c2() / p.b(),
            p.alpha() / p.tau()
        )));
    }
    Ok(())
}

/// F-family and the `g∘` series applicable to the trajectory's memory type.
pub fn standard_energies(traj: &Trajectory) -> EnergyLedger {
    standard_from(traj, &Ctx::new(traj))
}

fn standard_from(traj: &Trajectory, c: &Ctx) -> EnergyLedger {
    use Functional::*;
    let mut led = EnergyLedger::new(traj.grid.times());
    let f0 = c.f0();
    let s = &c.s;
    let plus = |extra: &[f64]| map_n(c.n, |j| f0[j] + extra[j]);
    let mut put = |f, v| led.insert(f, v).expect("series sized to grid");
    match traj.params.memory_type() {
        MemoryType::None => {
            put(F1, f0.clone());
            put(F2, f0.clone());
            put(F3, f0.clone());
        }
        MemoryType::Type1 => {
            put(F1, plus(&s.circ_ndg));
            put(GCircU, s.circ_g.clone());
        }
        MemoryType::Type2 => {
            put(F2, plus(&s.circ_g));
            put(GCircUt, s.circ_g.clone());
        }
        MemoryType::Type3 => {
            put(F3, plus(&s.circ_g));
            put(GCircW, s.circ_g.clone());
            if traj.params.regime() == Regime::Critical {
                put(F3cr, map_n(c.n, |j| s.aw2[j] + s.hwt2[j] + s.circ_g[j]));
            }
        }
    }
    put(F0, f0);
    led
}

/// Natural energy `E₀` with multiplier weight `k`. In the critical regime the
/// only admissible weight is `k = c²/b`, where this equals `E₀^cr`.
pub fn natural_energy_e0(traj: &Trajectory, k: f64) -> Result<Vec<f64>> {
    check_k(&traj.params, k)?;
    Ok(Ctx::new(traj).e0(k))
}

/// Damper `R₀`; identically zero in the critical regime.
pub fn damper_r0(traj: &Trajectory, k: f64) -> Result<Vec<f64>> {
    check_k(&traj.params, k)?;
    Ok(Ctx::new(traj).r0(k))
}

/// `E₀^cr = b‖A^{1/2}(u′ + ku)‖² + τ‖(u′ + ku)′‖²` with `k = c²/b`.
pub fn critical_energy_e0cr(traj: &Trajectory) -> Result<Vec<f64>> {
    if traj.params.regime() != Regime::Critical {
        return Err(MgtError::Precondition("E0cr needs the critical regime".into()));
    }
    let k = traj.params.c2() / traj.params.b();
    Ok(Ctx::new(traj).two_squares(k, k))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HatEnergies {
    pub ehat1: Vec<f64>,
    pub ehat2: Vec<f64>,
    pub ehat: Vec<f64>,
}

/// `Ê₁ = b‖A^{1/2}(u′ + ru)‖² + τ‖u″ + ru′‖² + rγ‖u′‖²`, `Ê₂ = α‖u′‖² + c²‖A^{1/2}u‖²`
/// and `Ê = Ê₁ + Ê₂`, with `r = c²/b`.
pub fn hat_energies(traj: &Trajectory) -> HatEnergies {
    hat_from(&Ctx::new(traj))
}

fn hat_from(c: &Ctx) -> HatEnergies {
    let (s, p) = (&c.s, c.p);
    let r = p.c2() / p.b();
    let sq = c.two_squares(r, r);
    let ehat1 = map_n(c.n, |j| sq[j] + r * p.gamma() * s.hv2[j]);
    let ehat2 = map_n(c.n, |j| p.alpha() * s.hv2[j] + p.c2() * s.au2[j]);
    let ehat = map_n(c.n, |j| ehat1[j] + ehat2[j]);
    HatEnergies { ehat1, ehat2, ehat }
}

/// Type-1 memory pieces, with the right-hand sides of their identities.
///
/// `r11m` and `r12m` are the printed forms. The identities that close are
/// `d/dt E11m − R11m = s11` and `d/dt E12m − R12m = s12`, i.e. with the
/// dampers sign-flipped (see [`MemoryIdentityPieces::sign_corrected`]).
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryIdentityPieces {
    pub e11m: Vec<f64>,
    pub r11m: Vec<f64>,
    pub e12m: Vec<f64>,
    pub r12m: Vec<f64>,
    /// `−2 Σμ u″ᵢ(t)(g∗uᵢ)(t)`
    pub s11: Vec<f64>,
    /// `−2 Σμ u′ᵢ(t)(g∗uᵢ)(t)`
    pub s12: Vec<f64>,
}

impl MemoryIdentityPieces {
    /// `(−R11m, −R12m)`.
    pub fn sign_corrected(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.r11m.iter().map(|x| -x).collect(),
            self.r12m.iter().map(|x| -x).collect(),
        )
    }
}

/// `E11m = −g′∘u + g‖A^{1/2}u‖² − 2∫g(t−s)(Au(s), u′(t))ds`,
/// `R11m = −g″∘u + g′‖A^{1/2}u‖²`, `E12m = g∘u − G‖A^{1/2}u‖²`,
/// `R12m = g′∘u − g‖A^{1/2}u‖²`, as printed.
pub fn memory_identity_pieces(traj: &Trajectory) -> Result<MemoryIdentityPieces> {
    if traj.params.memory_type() != MemoryType::Type1 {
        return Err(MgtError::Precondition("memory identity pieces need type-1 memory".into()));
    }
    Ok(pieces_from(&Ctx::new(traj)))
}

fn pieces_from(c: &Ctx) -> MemoryIdentityPieces {
    let (s, ks) = (&c.s, &c.ks);
    MemoryIdentityPieces {
        e11m: map_n(c.n, |j| s.circ_ndg[j] + ks.g[j] * s.au2[j] - 2.0 * s.conv_v[j]),
        r11m: map_n(c.n, |j| -s.circ_d2g[j] + ks.dg[j] * s.au2[j]),
        e12m: map_n(c.n, |j| s.circ_g[j] - ks.cum[j] * s.au2[j]),
        r12m: map_n(c.n, |j| -s.circ_ndg[j] - ks.g[j] * s.au2[j]),
        s11: map_n(c.n, |j| -2.0 * s.conv_a[j]),
        s12: map_n(c.n, |j| -2.0 * s.conv_v[j]),
    }
}

/// Natural energy/damper pairs of the trajectory's memory type: `(E₁, R₁)`,
/// `(E₂, R₂)`, `(E₃, R₃)` and, for critical type 3, also `(E₃^cr, R₃^cr)`.
/// Type 3 requires `k = λ`.
pub fn composite_energies(traj: &Trajectory, k: f64) -> Result<Vec<(Functional, Vec<f64>)>> {
    let p = &traj.params;
    if p.memory_type() == MemoryType::None {
        return Err(MgtError::Precondition("composite energies need a memory type".into()));
    }
    if p.memory_type() == MemoryType::Type3 && !rel_eq(k, p.lambda(), CRITICAL_REL_TOL) {
        return Err(MgtError::Precondition(format!(
            "type-3 energies use k = lambda = {}, got {k}",
            p.lambda()
        )));
    }
    check_k(p, k)?;
    Ok(composite_from(&Ctx::new(traj), k))
}

fn composite_from(c: &Ctx, k: f64) -> Vec<(Functional, Vec<f64>)> {
    use Functional::*;
    let (s, ks, p) = (&c.s, &c.ks, c.p);
    let n = c.n;
    let (b, c2, tau, alpha) = (p.b(), p.c2(), p.tau(), p.alpha());
    match p.memory_type() {
        MemoryType::None => Vec::new(),
        MemoryType::Type1 => {
            let e0 = c.e0(k);
            let r0 = c.r0(k);
            let pc = pieces_from(c);
            let e1 = map_n(n, |j| e0[j] + pc.e11m[j] + k * pc.e12m[j]);
            let r1 = map_n(n, |j| {
                r0[j] + s.circ_d2g[j] + k * s.circ_ndg[j] + (k * ks.g[j] - ks.dg[j]) * s.au2[j]
            });
            vec![(E1, e1), (R1, r1)]
        }
        MemoryType::Type2 => {
            let tail = c.tail(k);
            let r0 = c.r0(k);
            let e2 = map_n(n, |j| {
                (b - ks.cum[j]) * s.av2[j] + 2.0 * c2 * s.auv[j] + c2 * k * s.au2[j] + tail[j] + s.circ_g[j]
            });
            let r2 = map_n(n, |j| {
                r0[j] + s.circ_ndg[j] + ks.g[j] * s.av2[j] - 2.0 * k * ks.cum[j] * s.av2[j]
                    + 2.0 * k * s.diff_v[j]
            });
            vec![(E2, e2), (R2, r2)]
        }
        MemoryType::Type3 => {
            let tail = c.tail(k);
            let e3 = map_n(n, |j| {
                (c2 / k - ks.cum[j]) * s.aw2[j] + (b - c2 / k) * s.av2[j] + tail[j] + s.circ_g[j]
            });
            let r3 = map_n(n, |j| {
                2.0 * (alpha - k * tau) * s.ha2[j]
                    + 2.0 * (b * k - c2) * s.av2[j]
                    + ks.g[j] * s.aw2[j]
                    + s.circ_ndg[j]
            });
            let mut out = vec![(E3, e3), (R3, r3)];
            if p.regime() == Regime::Critical {
                out.push((
                    E3cr,
                    map_n(n, |j| (c2 / k - ks.cum[j]) * s.aw2[j] + tau * s.hwt2[j] + s.circ_g[j]),
                ));
                out.push((R3cr, map_n(n, |j| ks.g[j] * s.aw2[j] + s.circ_ndg[j])));
            }
            out
        }
    }
}

/// Every field of [`populated_set`] for the trajectory's parameters.
pub fn evaluate_ledger(traj: &Trajectory) -> EnergyLedger {
    use Functional::*;
    let p = &traj.params;
    let c = Ctx::new(traj);
    let mut led = standard_from(traj, &c);
    let wanted = populated_set(p);
    let mut extra = EnergyLedger::new(traj.grid.times());
    let mut put = |f: Functional, v: Vec<f64>| {
        if wanted.contains(&f) {
            extra.insert(f, v).expect("series sized to grid");
        }
    };
    let k = p.k();
    if p.k_in_closed_range(k) {
        put(E0, c.e0(k));
        put(R0, c.r0(k));
    }
    let s = &c.s;
    match p.memory_type() {
        MemoryType::None => {
            if p.regime() == Regime::Critical {
                let r = p.c2() / p.b();
                put(E0cr, c.two_squares(r, r));
            }
            let hat = hat_from(&c);
            put(Ehat1, hat.ehat1);
            put(Ehat2, hat.ehat2);
            put(Ehat, hat.ehat);
        }
        MemoryType::Type1 => {
            let pc = pieces_from(&c);
            put(E11m, pc.e11m);
            put(R11m, pc.r11m);
            put(E12m, pc.e12m);
            put(R12m, pc.r12m);
        }
        _ => {}
    }
    if matches!(p.memory_type(), MemoryType::None | MemoryType::Type1) {
        put(E01, map_n(c.n, |j| p.tau() * s.ha2[j] + p.b() * s.av2[j] + 2.0 * p.c2() * s.auv[j]));
        put(E02, map_n(c.n, |j| p.c2() * s.au2[j] + p.alpha() * s.hv2[j] + 2.0 * p.tau() * s.hav[j]));
    }
    let composite_k = if p.memory_type() == MemoryType::Type3 { p.lambda() } else { k };
    if p.memory_type() != MemoryType::None && p.k_in_closed_range(composite_k) {
        for (f, v) in composite_from(&c, composite_k) {
            put(f, v);
        }
    }
    led.merge(extra);
    led
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, InitialData, IntegrationPath, ModeHistory, TimeGrid};
    use crate::kernels::MemoryKernel;
    use crate::spectrum::{ModalVector, OperatorSpectrum};

    fn params(mt: MemoryType, tau: f64, alpha: f64, b: f64, c2: f64, lambda: f64) -> MgtParameters {
        MgtParameters::new(tau, alpha, b, c2, mt, lambda, None).unwrap()
    }

    /// Single mode μ = 1 with u(s) = s, u′ ≡ 1, u″ ≡ 0 on [0, 1].
    fn ramp(mt: MemoryType, kernel: MemoryKernel, h: f64) -> Trajectory {
        let grid = TimeGrid::new(1.0, h).unwrap();
        let n = grid.len();
        let u: Vec<f64> = grid.times();
        let hist = ModeHistory {
            u,
            ut: vec![1.0; n],
            utt: vec![0.0; n],
            conv: vec![0.0; n],
            aux: Vec::new(),
        };
        Trajectory::from_histories(
            params(mt, 1.0, 2.0, 1.0, 1.0, 0.0),
            OperatorSpectrum::new(vec![1.0]).unwrap(),
            kernel,
            grid,
            IntegrationPath::Quadrature,
            vec![hist],
        )
        .unwrap()
    }

    fn snapshot(p: MgtParameters, kernel: MemoryKernel, state: [f64; 3]) -> Trajectory {
        let hist = ModeHistory {
            u: vec![state[0]],
            ut: vec![state[1]],
            utt: vec![state[2]],
            conv: vec![0.0],
            aux: Vec::new(),
        };
        // one-point histories: use a grid of a single step and repeat the state
        let grid = TimeGrid::new(1.0, 1.0).unwrap();
        let dup = |v: &Vec<f64>| vec![v[0]; 2];
        let hist = ModeHistory {
            u: dup(&hist.u),
            ut: dup(&hist.ut),
            utt: dup(&hist.utt),
            conv: vec![0.0; 2],
            aux: Vec::new(),
        };
        Trajectory::from_histories(
            p,
            OperatorSpectrum::new(vec![1.0]).unwrap(),
            kernel,
            grid,
            IntegrationPath::Quadrature,
            vec![hist],
        )
        .unwrap()
    }

    fn unit_exp() -> MemoryKernel {
        MemoryKernel::prony(vec![1.0], vec![1.0]).unwrap()
    }

    #[test]
    fn f1_on_synthetic_ramp() {
        let t = ramp(MemoryType::Type1, unit_exp(), 1e-4);
        let led = standard_energies(&t);
        let f1 = led.get(Functional::F1).unwrap();
        let expected = 2.0 + (2.0 - 5.0 * (-1.0f64).exp());
        assert!((f1[f1.len() - 1] - expected).abs() < 1e-6, "{}", f1[f1.len() - 1]);
    }

    #[test]
    fn e12m_on_synthetic_ramp() {
        let t = ramp(MemoryType::Type1, unit_exp(), 1e-4);
        let pc = memory_identity_pieces(&t).unwrap();
        let e = 1.0f64.exp().recip();
        let expected = (2.0 - 5.0 * e) - (1.0 - e);
        assert!((pc.e12m.last().unwrap() - expected).abs() < 1e-6);
        assert!((expected + 0.471518).abs() < 1e-6);
    }

    #[test]
    fn memory_pieces_at_time_zero() {
        let k = MemoryKernel::prony(vec![0.3, 0.2], vec![1.0, 3.0]).unwrap();
        let g0 = 0.5;
        let dg0 = -(0.3 + 0.6);
        let p = params(MemoryType::Type1, 1.0, 2.0, 1.0, 1.0, 0.0);
        let t = snapshot(p, k, [2.0, 0.7, -0.4]);
        let pc = memory_identity_pieces(&t).unwrap();
        let a = 4.0;
        assert!((pc.e11m[0] - g0 * a).abs() < 1e-15);
        assert!((pc.r11m[0] - dg0 * a).abs() < 1e-15);
        assert_eq!(pc.e12m[0], 0.0);
        assert!((pc.r12m[0] + g0 * a).abs() < 1e-15);
    }

    #[test]
    fn zero_kernel_pieces_vanish() {
        let p = params(MemoryType::Type1, 1.0, 2.0, 1.0, 1.0, 0.0);
        let t = ramp(MemoryType::Type1, MemoryKernel::zero(), 0.01);
        assert_eq!(t.params.memory_type(), p.memory_type());
        let pc = memory_identity_pieces(&t).unwrap();
        for v in [&pc.e11m, &pc.r11m, &pc.e12m, &pc.r12m] {
            assert!(v.iter().all(|x| *x == 0.0));
        }
    }

    #[test]
    fn substitution_examples() {
        let crit = params(MemoryType::None, 1.0, 1.0, 1.0, 1.0, 0.0);
        let t = snapshot(crit.clone(), MemoryKernel::zero(), [1.0, 0.0, 0.0]);
        assert_eq!(critical_energy_e0cr(&t).unwrap()[0], 1.0);
        assert_eq!(natural_energy_e0(&t, 1.0).unwrap()[0], 1.0);
        assert_eq!(damper_r0(&t, 1.0).unwrap()[0], 0.0);

        let t = snapshot(crit, MemoryKernel::zero(), [0.0, 1.0, 0.0]);
        let hat = hat_energies(&t);
        assert_eq!((hat.ehat1[0], hat.ehat2[0], hat.ehat[0]), (2.0, 1.0, 3.0));

        let p3 = params(MemoryType::Type3, 1.0, 1.0, 1.0, 1.0, 1.0);
        let k = MemoryKernel::prony(vec![0.2], vec![2.0]).unwrap();
        // w = u + u′ with ‖A^{1/2}w‖² = 1
        let t = snapshot(p3, k, [0.25, 0.75, 0.0]);
        let pairs = composite_energies(&t, 1.0).unwrap();
        let r3cr = &pairs.iter().find(|(f, _)| *f == Functional::R3cr).unwrap().1;
        assert!((r3cr[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn k_contract() {
        let p = params(MemoryType::None, 1.0, 2.0, 1.0, 1.0, 0.0);
        let t = snapshot(p, MemoryKernel::zero(), [1.0, 0.0, 0.0]);
        assert!(natural_energy_e0(&t, 1.5).is_ok());
        assert!(natural_energy_e0(&t, 2.0).is_ok());
        assert!(matches!(natural_energy_e0(&t, 2.5), Err(MgtError::Precondition(_))));
        assert!(matches!(damper_r0(&t, 0.5), Err(MgtError::Precondition(_))));
        let p3 = params(MemoryType::Type3, 1.0, 2.0, 1.0, 1.0, 1.5);
        let t = snapshot(p3, unit_exp(), [1.0, 0.0, 0.0]);
        assert!(composite_energies(&t, 1.2).is_err());
        assert!(composite_energies(&t, 1.5).is_ok());
    }

    fn eight_modes() -> (OperatorSpectrum, InitialData) {
        let sp = OperatorSpectrum::dirichlet(std::f64::consts::PI, 8).unwrap();
        let f = |s: f64| ModalVector((1..=8).map(|i| s * ((i * 7 % 5) as f64 - 2.0) / (i * i) as f64).collect());
        (sp, InitialData::new(f(1.0), f(0.5), f(-0.3)))
    }

    fn run(p: &MgtParameters, k: &MemoryKernel, t_end: f64) -> Trajectory {
        let (sp, init) = eight_modes();
        simulate(p, &sp, k, &init, TimeGrid::new(t_end, 1e-3).unwrap(), IntegrationPath::PronyAux).unwrap()
    }

    #[test]
    fn zero_trajectory_gives_zero_ledger() {
        let p = params(MemoryType::Type2, 1.0, 2.0, 1.0, 1.0, 0.0);
        let (sp, _) = eight_modes();
        let t = simulate(&p, &sp, &unit_exp(), &InitialData::zeros(8), TimeGrid::new(0.5, 1e-2).unwrap(), IntegrationPath::PronyAux)
            .unwrap();
        let led = evaluate_ledger(&t);
        for f in led.functionals() {
            assert!(led.get(f).unwrap().iter().all(|x| *x == 0.0), "{}", f.name());
        }
    }

    #[test]
    fn populated_sets_match_ledger() {
        let k = MemoryKernel::prony(vec![0.2], vec![2.0]).unwrap();
        let cases = [
            (params(MemoryType::None, 1.0, 2.0, 1.0, 1.0, 0.0), MemoryKernel::zero()),
            (params(MemoryType::None, 1.0, 1.0, 1.0, 1.0, 0.0), MemoryKernel::zero()),
            (params(MemoryType::None, 1.0, 0.5, 1.0, 1.0, 0.0), MemoryKernel::zero()),
            (params(MemoryType::Type1, 1.0, 2.0, 1.0, 1.0, 0.0), k.clone()),
            (params(MemoryType::Type2, 1.0, 2.0, 1.0, 1.0, 0.0), k.clone()),
            (params(MemoryType::Type3, 1.0, 2.0, 1.0, 1.0, 1.5), k.clone()),
            (params(MemoryType::Type3, 1.0, 1.0, 1.0, 1.0, 1.0), k),
        ];
        for (p, k) in cases {
            let t = run(&p, &k, 0.05);
            let led = evaluate_ledger(&t);
            assert_eq!(led.functionals(), populated_set(&p), "{:?} {:?}", p.memory_type(), p.regime());
        }
        let unstable = populated_set(&params(MemoryType::None, 1.0, 0.5, 1.0, 1.0, 0.0));
        assert!(!unstable.contains(&Functional::E0));
        let crit3 = populated_set(&params(MemoryType::Type3, 1.0, 1.0, 1.0, 1.0, 1.0));
        assert!(crit3.contains(&Functional::F3cr) && crit3.contains(&Functional::R3cr));
    }

    #[test]
    fn f_family_dominates_f0_and_history_nonnegative() {
        let k = MemoryKernel::prony(vec![0.15, 0.05], vec![2.0, 0.5]).unwrap();
        for (mt, lam, f) in [
            (MemoryType::Type1, 0.0, Functional::F1),
            (MemoryType::Type2, 0.0, Functional::F2),
            (MemoryType::Type3, 1.5, Functional::F3),
        ] {
            let p = params(mt, 1.0, 2.0, 1.0, 1.0, lam);
            let led = evaluate_ledger(&run(&p, &k, 3.0));
            let f0 = led.get(Functional::F0).unwrap();
            for (x, y) in led.get(f).unwrap().iter().zip(f0) {
                assert!(*x >= *y && *y >= 0.0);
            }
            for g in [Functional::GCircU, Functional::GCircUt, Functional::GCircW] {
                if let Some(s) = led.get(g) {
                    assert!(s.iter().all(|x| *x >= 0.0));
                }
            }
        }
    }

    #[test]
    fn memoryless_f_family_equals_f0() {
        let p = params(MemoryType::None, 1.0, 2.0, 1.0, 1.0, 0.0);
        let led = evaluate_ledger(&run(&p, &MemoryKernel::zero(), 1.0));
        let f0 = led.get(Functional::F0).unwrap();
        for f in [Functional::F1, Functional::F2, Functional::F3] {
            assert_eq!(led.get(f).unwrap(), f0);
        }
    }

    #[test]
    fn critical_e0cr_equals_ehat1() {
        let p = params(MemoryType::None, 1.0, 1.0, 1.0, 1.0, 0.0);
        let led = evaluate_ledger(&run(&p, &MemoryKernel::zero(), 2.0));
        let a = led.get(Functional::E0cr).unwrap();
        let b = led.get(Functional::Ehat1).unwrap();
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(y.abs()));
        }
    }

    #[test]
    fn dampers_nonnegative() {
        let k = MemoryKernel::prony(vec![0.2], vec![2.0]).unwrap();
        let cases = [
            (params(MemoryType::None, 1.0, 2.0, 1.0, 1.0, 0.0), MemoryKernel::zero(), vec![Functional::R0]),
            (params(MemoryType::Type1, 1.0, 2.0, 1.0, 1.0, 0.0), k.clone(), vec![Functional::R1]),
            (params(MemoryType::Type2, 1.0, 2.0, 1.0, 1.0, 0.0), k.clone(), vec![Functional::R0]),
            (params(MemoryType::Type3, 1.0, 2.0, 1.0, 1.0, 1.5), k.clone(), vec![Functional::R3]),
            (params(MemoryType::Type3, 1.0, 1.0, 1.0, 1.0, 1.0), k, vec![Functional::R3, Functional::R3cr]),
        ];
        for (p, k, fs) in cases {
            let led = evaluate_ledger(&run(&p, &k, 3.0));
            for f in fs {
                let s = led.get(f).unwrap();
                let scale = s.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                assert!(s.iter().all(|x| *x >= -1e-10 * scale), "{}", f.name());
            }
        }
    }

    /// Lower and upper a-priori bounds for E₀/F₀ from the completing-square
    /// construction.
    fn a_priori_bounds(p: &MgtParameters, k: f64, lambda0: f64) -> (f64, f64) {
        let c1 = |c0: f64| (1.0 - 1.0 / (1.0 + c0 / 2.0)).min(c0 / 2.0);
        let (tau, alpha, b, c2) = (p.tau(), p.alpha(), p.b(), p.c2());
        let c0a = (k - c2 / b) * b / c2;
        let c0b = (alpha / tau - k) / k;
        let lower = (b * c1(c0a)).min(c1(c0a) * c2 * c2 / b).min(tau * c1(c0b));
        // ‖f + g‖² ≤ 2‖f‖² + 2‖g‖²
        let l2 = lambda0 * lambda0;
        let cu = 2.0 * c2 * c2 / b + c2 * (k - c2 / b);
        let cv = 2.0 * b + (2.0 * tau * k * k + k * tau * (alpha / tau - k)) * l2;
        let ca = 2.0 * tau;
        (lower, cu.max(cv).max(ca))
    }

    #[test]
    fn e0_over_f0_within_a_priori_bounds() {
        let p = MgtParameters::new(1.0, 2.0, 1.0, 1.0, MemoryType::None, 0.0, Some(1.5)).unwrap();
        let (sp, _) = eight_modes();
        let (lo, hi) = a_priori_bounds(&p, 1.5, sp.lambda0());
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let mut f = || ModalVector((0..8).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let init = InitialData::new(f(), f(), f());
            let t = simulate(&p, &sp, &MemoryKernel::zero(), &init, TimeGrid::new(5.0, 1e-2).unwrap(), IntegrationPath::PronyAux)
                .unwrap();
            let led = evaluate_ledger(&t);
            let e0 = led.get(Functional::E0).unwrap();
            let f0 = led.get(Functional::F0).unwrap();
            for (e, f) in e0.iter().zip(f0) {
                let r = e / f;
                assert!(r >= lo * (1.0 - 1e-12) && r <= hi * (1.0 + 1e-12), "{r} not in [{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn functional_names_round_trip() {
        for f in Functional::ALL {
            assert_eq!(Functional::from_name(f.name()), Some(f));
            let json = serde_json::to_string(&f).unwrap();
            assert_eq!(json, format!("\"{}\"", f.name()));
        }
        let mut sorted = Functional::ALL.to_vec();
        sorted.sort();
        assert_eq!(sorted, Functional::ALL.to_vec());
    }
}
