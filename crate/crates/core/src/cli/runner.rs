//! Command implementations. Each returns the process exit code on success
//! paths and a [`CliError`] carrying the code otherwise.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use crate::analysis::{
    characteristic_roots, characteristic_roots_raw, conservation_drift, equivalence_constants, fit_decay_rate,
    gronwall_integral_check, identity_audit, loglog_slope, winning_convention, IdentityAuditResult, IdentityId,
};
use crate::cli::config::{Experiment, ExperimentConfig};
use crate::cli::report::{
    AuditEntry, ConservationEntry, EquivalenceEntry, FitEntry, GronwallEntry, RunMetadata, VerdictReport,
};
use crate::dynamics::{simulate, TimeGrid, Trajectory};
use crate::energy::{evaluate_ledger, EnergyLedger, Functional};
use crate::error::MgtError;
use crate::model::{check_assumption, AssumptionId, AssumptionReport, MemoryType, Regime};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ASSUMPTION: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Relative drift below which a conservative run counts as conserved.
pub const CONSERVATION_THRESHOLD: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub force: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            out: PathBuf::from("out"),
            force: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<MgtError> for CliError {
    fn from(e: MgtError) -> Self {
        let code = match &e {
            MgtError::Config { .. }
            | MgtError::InvalidParameter { .. }
            | MgtError::KernelData(_)
            | MgtError::DimensionMismatch { .. } => EXIT_CONFIG,
            MgtError::NumericalFailure { .. } => EXIT_NUMERICAL,
            _ => EXIT_IO,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError {
        code: EXIT_IO,
        message: format!("cannot write {}: {e}", path.display()),
    }
}

fn config_err(key: &str, message: impl Into<String>) -> CliError {
    MgtError::config(key, message).into()
}

fn load(config: &Path) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let cfg = ExperimentConfig::load(config)?;
    let base = config.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

fn prepare_out(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn assumption_reports(exp: &Experiment) -> Result<Vec<AssumptionReport>, CliError> {
    let p = &exp.params;
    AssumptionId::required_for(p.memory_type(), p.regime())
        .into_iter()
        .map(|id| check_assumption(p, &exp.kernel, id).map_err(CliError::from))
        .collect()
}

fn violated_clauses(reports: &[AssumptionReport]) -> Vec<String> {
    reports
        .iter()
        .flat_map(|r| {
            let id = serde_json::to_value(r.assumption_id).expect("id serializes");
            let id = id.as_str().unwrap_or_default().to_string();
            r.violations.iter().map(move |c| format!("{id}:{c}"))
        })
        .collect()
}

/// Functionals whose decay is fitted.
fn fitted(f: Functional) -> bool {
    use Functional::*;
    f.is_standard() || matches!(f, E0 | E0cr | E1 | E2 | E3 | E3cr | Ehat1 | Ehat2 | Ehat)
}

/// The standard energy the decay statements are about.
fn primary_standard(exp: &Experiment) -> Functional {
    match exp.params.memory_type() {
        MemoryType::None => Functional::F0,
        MemoryType::Type1 => Functional::F1,
        MemoryType::Type2 => Functional::F2,
        MemoryType::Type3 if exp.params.regime() == Regime::Critical => Functional::F3cr,
        MemoryType::Type3 => Functional::F3,
    }
}

/// The series that should stay constant, if the run is conservative.
fn conserved_functional(exp: &Experiment) -> Option<Functional> {
    if exp.params.regime() != Regime::Critical {
        return None;
    }
    match exp.params.memory_type() {
        MemoryType::None => Some(Functional::Ehat1),
        MemoryType::Type3 if exp.kernel.is_zero() => Some(Functional::E3cr),
        _ => None,
    }
}

/// Everything computed for one experiment.
pub struct Evaluation {
    pub report: VerdictReport,
    pub trajectory: Option<Trajectory>,
    pub ledger: Option<EnergyLedger>,
}

fn metadata(exp: &Experiment, config: &Path, forced: bool) -> RunMetadata {
    let p = &exp.params;
    RunMetadata {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.display().to_string(),
        t_end: exp.grid.t_end(),
        h: exp.grid.h(),
        n_steps: exp.grid.n_steps(),
        path: exp.path,
        n_modes: exp.spectrum.len(),
        memory_type: p.memory_type(),
        regime: p.regime(),
        gamma: p.gamma(),
        k: p.k(),
        lambda: p.lambda(),
        forced,
    }
}

fn audits(exp: &Experiment, traj: &Trajectory, ledger: &EnergyLedger) -> Result<Vec<AuditEntry>, CliError> {
    let ids = IdentityId::applicable(&exp.params, ledger);
    if ids.is_empty() || traj.len() < 5 {
        return Ok(Vec::new());
    }
    let h = exp.grid.h();
    let levels = exp.analysis.refinement_levels;
    // coarser steps h·2^j, coarse to fine, then the run itself
    let mut steps: Vec<f64> = (1..levels).rev().map(|j| h * (1u64 << j) as f64).collect();
    let mut note = None;
    let mut coarse: Vec<(Trajectory, EnergyLedger)> = Vec::new();
    for &hc in &steps {
        let grid = match TimeGrid::new(exp.grid.t_end(), hc) {
            Ok(g) if g.len() >= 5 => g,
            _ => {
                note = Some(format!("refinement skipped: t_end is not a multiple of {hc} or grid too short"));
                coarse.clear();
                break;
            }
        };
        let t = simulate(&exp.params, &exp.spectrum, &exp.kernel, &exp.initial, grid, exp.path)?;
        let l = evaluate_ledger(&t);
        coarse.push((t, l));
    }
    if note.is_some() {
        steps.clear();
    }
    steps.push(h);
    let mut out = Vec::new();
    for id in ids {
        let mut per_level: Vec<Vec<IdentityAuditResult>> = Vec::new();
        for (t, l) in &coarse {
            per_level.push(identity_audit(t, l, id)?);
        }
        let mut finest = identity_audit(traj, ledger, id)?;
        per_level.push(finest.clone());
        let level_residuals: Vec<[f64; 2]> =
            per_level.iter().map(|r| [r[0].max_abs_residual, r[1].max_abs_residual]).collect();
        if steps.len() >= 2 {
            for (c, res) in finest.iter_mut().enumerate() {
                let ys: Vec<f64> = level_residuals.iter().map(|r| r[c]).collect();
                res.refinement_order = loglog_slope(&steps, &ys);
            }
        }
        for r in &mut finest {
            r.residual_series.clear();
        }
        let winner = winning_convention(&finest).expect("two conventions").convention;
        out.push(AuditEntry {
            identity_id: id,
            winner,
            results: finest,
            steps: steps.clone(),
            level_residuals,
            note: note.clone(),
        });
    }
    Ok(out)
}

/// Simulate and analyse one experiment. Assumption violations without
/// `force` stop before simulating and yield a report with exit code 3.
pub fn evaluate(exp: &Experiment, config: &Path, force: bool, with_audit: bool) -> Result<Evaluation, CliError> {
    let assumptions = assumption_reports(exp)?;
    let violated = violated_clauses(&assumptions);
    let mut report = VerdictReport {
        status: "ok".into(),
        exit_code: EXIT_OK,
        metadata: metadata(exp, config, force),
        assumptions,
        violated,
        decay_fits: BTreeMap::new(),
        audits: Vec::new(),
        stability: Vec::new(),
        conservation: None,
        gronwall: None,
        equivalence: Vec::new(),
    };
    for &mu in exp.spectrum.eigenvalues() {
        report.stability.push(characteristic_roots(&exp.params, mu)?);
    }
    if !report.violated.is_empty() && !force {
        report.status = "assumption_violated".into();
        report.exit_code = EXIT_ASSUMPTION;
        return Ok(Evaluation {
            report,
            trajectory: None,
            ledger: None,
        });
    }
    let traj = simulate(&exp.params, &exp.spectrum, &exp.kernel, &exp.initial, exp.grid, exp.path)?;
    let ledger = evaluate_ledger(&traj);
    let times = &ledger.times;

    for f in ledger.functionals().into_iter().filter(|f| fitted(*f)) {
        let series = ledger.get(f).expect("listed");
        let entry = match fit_decay_rate(times, series, exp.analysis.window_fraction) {
            Ok(fit) => FitEntry {
                fit: Some(fit),
                error: None,
            },
            Err(e) => FitEntry {
                fit: None,
                error: Some(e.to_string()),
            },
        };
        report.decay_fits.insert(f.name().to_string(), entry);
    }

    if let Some(f) = conserved_functional(exp) {
        if let Ok(drift) = conservation_drift(ledger.get(f).expect("populated")) {
            report.conservation = Some(ConservationEntry {
                functional: f.name().into(),
                drift,
                threshold: CONSERVATION_THRESHOLD,
                conserved: drift < CONSERVATION_THRESHOLD,
            });
        }
    }

    let primary = primary_standard(exp);
    if let Some(series) = ledger.get(primary) {
        if let Ok(check) = gronwall_integral_check(times, series) {
            report.gronwall = Some(GronwallEntry {
                functional: primary.name().into(),
                check,
            });
        }
    }

    use Functional as F;
    let pairs = [(F::E0, F::F0), (F::E1, F::F1), (F::E2, F::F2), (F::E3, F::F3), (F::E3cr, F::F3cr)];
    for (e, s) in pairs {
        if e == F::E0 && exp.params.memory_type() != MemoryType::None {
            continue;
        }
        if let (Some(es), Some(ss)) = (ledger.get(e), ledger.get(s)) {
            if let Ok((c1, c2)) = equivalence_constants(ss, es) {
                report.equivalence.push(EquivalenceEntry {
                    energy: e.name().into(),
                    standard: s.name().into(),
                    c1,
                    c2,
                });
            }
        }
    }

    if with_audit && exp.analysis.audit {
        report.audits = audits(exp, &traj, &ledger)?;
    }
    if force && !report.violated.is_empty() {
        report.status = "forced".into();
    }
    Ok(Evaluation {
        report,
        trajectory: Some(traj),
        ledger: Some(ledger),
    })
}

/// `series.csv`: header `t,<functional>...` in ledger column order, values
/// in shortest round-trip scientific notation.
pub fn write_series_csv(path: &Path, ledger: &EnergyLedger) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let cols = ledger.functionals();
    let mut header = vec!["t".to_string()];
    header.extend(cols.iter().map(|f| f.name().to_string()));
    w.write_record(&header).map_err(|e| io_err(path, e))?;
    let series: Vec<&[f64]> = cols.iter().map(|f| ledger.get(*f).expect("listed")).collect();
    let mut row = Vec::with_capacity(cols.len() + 1);
    for (n, t) in ledger.times.iter().enumerate() {
        row.clear();
        row.push(format!("{t:e}"));
        row.extend(series.iter().map(|s| format!("{:e}", s[n])));
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// `run <config>`: writes `series.csv` and `report.json` into the output
/// directory. An assumption violation still writes the report.
pub fn run_experiment(config: &Path, opts: &RunOptions) -> Result<VerdictReport, CliError> {
    let (cfg, base) = load(config)?;
    let exp = cfg.build(&base)?;
    let eval = evaluate(&exp, config, opts.force, true)?;
    prepare_out(&opts.out)?;
    write_file(&opts.out.join("report.json"), &eval.report.to_json())?;
    if eval.report.exit_code == EXIT_ASSUMPTION {
        return Err(CliError {
            code: EXIT_ASSUMPTION,
            message: format!(
                "assumption violated: {} (rerun with --force to simulate anyway)",
                eval.report.violated.join(", ")
            ),
        });
    }
    if let Some(ledger) = &eval.ledger {
        write_series_csv(&opts.out.join("series.csv"), ledger)?;
    }
    Ok(eval.report)
}

/// `check <config>`: assumption reports only, written to `assumptions.json`.
pub fn check(config: &Path, opts: &RunOptions) -> Result<Vec<AssumptionReport>, CliError> {
    let (cfg, base) = load(config)?;
    let exp = cfg.build(&base)?;
    let reports = assumption_reports(&exp)?;
    prepare_out(&opts.out)?;
    let json = serde_json::to_string_pretty(&reports).expect("reports serialize");
    write_file(&opts.out.join("assumptions.json"), &json)?;
    let violated = violated_clauses(&reports);
    if !violated.is_empty() {
        return Err(CliError {
            code: EXIT_ASSUMPTION,
            message: format!("assumption violated: {}", violated.join(", ")),
        });
    }
    Ok(reports)
}

pub const SWEEP_PARAMS: [&str; 6] = ["alpha", "b", "c2", "tau", "kernel_scale", "lambda"];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub gamma: Option<f64>,
    pub exit_code: i32,
    pub status: String,
    pub omegas: BTreeMap<String, f64>,
    pub max_audit_residual: Option<f64>,
    pub message: String,
}

fn sweep_row(cfg: &ExperimentConfig, base: &Path, config: &Path, param: &str, value: f64, force: bool) -> SweepRow {
    let mut row = SweepRow {
        value,
        gamma: None,
        exit_code: EXIT_OK,
        status: "ok".into(),
        omegas: BTreeMap::new(),
        max_audit_residual: None,
        message: String::new(),
    };
    let mut cfg = cfg.clone();
    match param {
        "alpha" => cfg.model.alpha = value,
        "b" => cfg.model.b = value,
        "c2" => cfg.model.c2 = value,
        "tau" => cfg.model.tau = value,
        "lambda" => cfg.model.lambda = value,
        _ => {}
    }
    // single-level audit: the sweep reports residuals, not orders
    cfg.analysis.refinement_levels = 1;
    let result = cfg.build(base).and_then(|mut exp| {
        if param == "kernel_scale" {
            exp.kernel = exp.kernel.scaled(value).map_err(|e| MgtError::config("kernel_scale", e.to_string()))?;
        }
        Ok(exp)
    });
    let exp = match result {
        Ok(exp) => exp,
        Err(e) => {
            let e = CliError::from(e);
            row.exit_code = e.code;
            row.status = "config_error".into();
            row.message = e.message;
            return row;
        }
    };
    row.gamma = Some(exp.params.gamma());
    match evaluate(&exp, config, force, true) {
        Ok(eval) => {
            let r = eval.report;
            row.exit_code = r.exit_code;
            row.status = r.status.clone();
            row.message = r.violated.join(" ");
            for (name, entry) in &r.decay_fits {
                if let Some(fit) = &entry.fit {
                    if Functional::from_name(name).is_some_and(Functional::is_standard) {
                        row.omegas.insert(name.clone(), fit.omega);
                    }
                }
            }
            row.max_audit_residual = r
                .audits
                .iter()
                .filter_map(|a| a.results.iter().find(|x| x.convention == a.winner))
                .map(|x| x.max_abs_residual)
                .reduce(f64::max);
        }
        Err(e) => {
            row.exit_code = e.code;
            row.status = if e.code == EXIT_NUMERICAL { "numerical_failure" } else { "error" }.into();
            row.message = e.message;
        }
    }
    row
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// `sweep <config> --param <name> --values <list>`: one summary row per
/// value in `sweep.csv`. Failed rows are recorded and the sweep continues.
pub fn sweep(config: &Path, param: &str, values: &[f64], opts: &RunOptions) -> Result<Vec<SweepRow>, CliError> {
    if !SWEEP_PARAMS.contains(&param) {
        return Err(config_err("--param", format!("unknown parameter {param:?}; expected one of {SWEEP_PARAMS:?}")));
    }
    if values.is_empty() {
        return Err(config_err("--values", "empty value list"));
    }
    let (cfg, base) = load(config)?;
    let rows: Vec<SweepRow> = values
        .iter()
        .map(|&v| sweep_row(&cfg, &base, config, param, v, opts.force))
        .collect();

    let names: BTreeSet<Functional> = rows
        .iter()
        .flat_map(|r| r.omegas.keys().filter_map(|n| Functional::from_name(n)))
        .collect();
    prepare_out(&opts.out)?;
    let path = opts.out.join("sweep.csv");
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&path)
        .map_err(|e| io_err(&path, e))?;
    let mut header = vec![param.to_string(), "gamma".into(), "exit_code".into(), "status".into()];
    header.extend(names.iter().map(|f| format!("omega_{}", f.name())));
    header.extend(["max_audit_residual".to_string(), "message".to_string()]);
    w.write_record(&header).map_err(|e| io_err(&path, e))?;
    for r in &rows {
        let mut rec = vec![format!("{:e}", r.value), opt(r.gamma), r.exit_code.to_string(), r.status.clone()];
        rec.extend(names.iter().map(|f| opt(r.omegas.get(f.name()).copied())));
        rec.push(opt(r.max_audit_residual));
        rec.push(r.message.clone());
        w.write_record(&rec).map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    Ok(rows)
}

fn grid_or(list: &Option<Vec<f64>>, default: f64, key: &str) -> Result<Vec<f64>, CliError> {
    let v = list.clone().unwrap_or_else(|| vec![default]);
    if v.is_empty() {
        return Err(config_err(key, "empty list"));
    }
    if let Some(bad) = v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(config_err(key, format!("values must be finite and > 0, got {bad}")));
    }
    Ok(v)
}

/// `stability-map <config>`: characteristic roots over the `[stability]`
/// grids, one row per `(τ, α, b, c², μ)` in `stability_map.csv`.
pub fn stability_map(config: &Path, opts: &RunOptions) -> Result<usize, CliError> {
    let (cfg, _) = load(config)?;
    let st = cfg.stability.clone().unwrap_or(crate::cli::config::StabilitySection {
        tau: None,
        alpha: None,
        b: None,
        c2: None,
        mu: None,
    });
    let m = &cfg.model;
    let taus = grid_or(&st.tau, m.tau, "stability.tau")?;
    let alphas = grid_or(&st.alpha, m.alpha, "stability.alpha")?;
    let bs = grid_or(&st.b, m.b, "stability.b")?;
    let c2s = grid_or(&st.c2, m.c2, "stability.c2")?;
    let mus = match &st.mu {
        Some(_) => grid_or(&st.mu, 0.0, "stability.mu")?,
        None => cfg.spectrum()?.eigenvalues().to_vec(),
    };
    prepare_out(&opts.out)?;
    let path = opts.out.join("stability_map.csv");
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&path)
        .map_err(|e| io_err(&path, e))?;
    w.write_record([
        "tau", "alpha", "b", "c2", "gamma", "mu", "root1_re", "root1_im", "root2_re", "root2_im", "root3_re",
        "root3_im", "max_real_part", "hurwitz", "routh_hurwitz",
    ])
    .map_err(|e| io_err(&path, e))?;
    let mut rows = 0;
    for &tau in &taus {
        for &alpha in &alphas {
            for &b in &bs {
                for &c2 in &c2s {
                    for &mu in &mus {
                        let v = characteristic_roots_raw(tau, alpha, b, c2, mu)?;
                        let mut rec: Vec<String> =
                            [tau, alpha, b, c2, v.gamma, mu].iter().map(|x| format!("{x:e}")).collect();
                        for z in &v.roots {
                            rec.push(format!("{:e}", z.re));
                            rec.push(format!("{:e}", z.im));
                        }
                        rec.push(format!("{:e}", v.max_real_part));
                        rec.push(v.hurwitz.to_string());
                        rec.push(v.routh_hurwitz.to_string());
                        w.write_record(&rec).map_err(|e| io_err(&path, e))?;
                        rows += 1;
                    }
                }
            }
        }
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    Ok(rows)
}
