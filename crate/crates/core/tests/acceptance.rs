//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::f64::consts::PI;
use std::process::ExitCode;

use mgt_core::analysis::{
    characteristic_roots_raw, conservation_drift, fit_decay_rate, gronwall_integral_check, lemma_constant,
    longest_growth_run, refinement_audit, winning_convention, IdentityId, RefinementSetup,
};
use mgt_core::cli::config::random_initial_data;
use mgt_core::dynamics::{simulate, InitialData, IntegrationPath, TimeGrid, Trajectory};
use mgt_core::energy::{evaluate_ledger, EnergyLedger, Functional};
use mgt_core::kernels::{g_circ, MemoryKernel};
use mgt_core::model::{a2_feasibility_search, check_assumption, AssumptionId, MemoryType, MgtParameters};
use mgt_core::spectrum::{ModalVector, OperatorSpectrum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn spectrum8() -> OperatorSpectrum {
    OperatorSpectrum::dirichlet(PI, 8).unwrap()
}

fn kernel_02() -> MemoryKernel {
    MemoryKernel::prony(vec![0.2], vec![2.0]).unwrap()
}

fn params(alpha: f64, memory_type: MemoryType, lambda: f64) -> MgtParameters {
    MgtParameters::new(1.0, alpha, 1.0, 1.0, memory_type, lambda, None).unwrap()
}

fn run(p: &MgtParameters, kernel: &MemoryKernel, t_end: f64, h: f64) -> Result<(Trajectory, EnergyLedger), String> {
    let sp = spectrum8();
    let init = random_initial_data(sp.len(), 7, 1.0);
    let traj = simulate(p, &sp, kernel, &init, TimeGrid::new(t_end, h).map_err(err)?, IntegrationPath::PronyAux)
        .map_err(err)?;
    let ledger = evaluate_ledger(&traj);
    Ok((traj, ledger))
}

fn hypotheses_hold(p: &MgtParameters, kernel: &MemoryKernel) -> Result<(), String> {
    for id in AssumptionId::required_for(p.memory_type(), p.regime()) {
        let rep = check_assumption(p, kernel, id).map_err(err)?;
        if !rep.satisfied {
            return Err(format!("{id:?} violated: {:?}", rep.violations));
        }
    }
    Ok(())
}

fn ac1() -> Outcome {
    let (_, ledger) = run(&params(1.0, MemoryType::None, 0.0), &MemoryKernel::zero(), 50.0, 1e-3)?;
    let drift = conservation_drift(ledger.require(Functional::Ehat1).map_err(err)?).map_err(err)?;
    ensure(drift < 1e-7, format!("drift(Ehat1) = {drift:.3e} (< 1e-7)"))
}

fn gamma1_f0() -> Result<(Vec<f64>, Vec<f64>), String> {
    let (_, ledger) = run(&params(2.0, MemoryType::None, 0.0), &MemoryKernel::zero(), 60.0, 1e-3)?;
    Ok((ledger.times.clone(), ledger.require(Functional::F0).map_err(err)?.to_vec()))
}

fn ac2() -> Outcome {
    let (t, f0) = gamma1_f0()?;
    let fit = fit_decay_rate(&t, &f0, 0.5).map_err(err)?;
    let ratio = f0[f0.len() - 1] / f0[0];
    ensure(
        fit.omega > 0.0 && fit.r_squared > 0.95 && ratio < 1e-3,
        format!("omega = {:.4}, r2 = {:.4}, F0(T)/F0(0) = {ratio:.2e}", fit.omega, fit.r_squared),
    )
}

fn ac3() -> Outcome {
    let p = params(2.0, MemoryType::Type1, 0.0);
    let k = kernel_02();
    hypotheses_hold(&p, &k)?;
    let (traj, ledger) = run(&p, &k, 60.0, 1e-3)?;
    let f1 = ledger.require(Functional::F1).map_err(err)?;
    let fit = fit_decay_rate(&ledger.times, f1, 0.5).map_err(err)?;
    let growth = longest_growth_run(f1, 1e-10);
    let limit = traj.len() / 20;
    ensure(
        fit.omega > 0.0 && fit.r_squared > 0.9 && growth <= limit,
        format!(
            "omega = {:.4}, r2 = {:.4}, longest growth run {growth} <= {limit} steps",
            fit.omega, fit.r_squared
        ),
    )
}

fn ac4() -> Outcome {
    let p = params(2.0, MemoryType::Type2, 0.0);
    let k = kernel_02();
    let pair = a2_feasibility_search(&p, k.c0(), k.g_infinity(), 64).ok_or("no feasible (k, theta)")?;
    hypotheses_hold(&p, &k)?;
    let (_, ledger) = run(&p, &k, 60.0, 1e-3)?;
    let fit = fit_decay_rate(&ledger.times, ledger.require(Functional::F2).map_err(err)?, 0.5).map_err(err)?;
    ensure(
        fit.omega > 0.0 && fit.r_squared > 0.9,
        format!(
            "(k, theta) = ({:.3}, {:.3}), omega = {:.4}, r2 = {:.4}",
            pair.0, pair.1, fit.omega, fit.r_squared
        ),
    )
}

fn ac5() -> Outcome {
    let p = params(1.0, MemoryType::Type3, 1.0);
    let k = kernel_02();
    hypotheses_hold(&p, &k)?;
    let (_, ledger) = run(&p, &k, 100.0, 1e-3)?;
    let fit = fit_decay_rate(&ledger.times, ledger.require(Functional::F3cr).map_err(err)?, 0.5).map_err(err)?;
    let (_, bare) = run(&p, &MemoryKernel::zero(), 100.0, 1e-3)?;
    let drift = conservation_drift(bare.require(Functional::E3cr).map_err(err)?).map_err(err)?;
    ensure(
        fit.omega > 0.0 && fit.r_squared > 0.9 && drift < 1e-7,
        format!("omega = {:.4}, r2 = {:.4}, drift without memory = {drift:.2e}", fit.omega, fit.r_squared),
    )
}

fn ac6() -> Outcome {
    let k = kernel_02();
    let zero = MemoryKernel::zero();
    let cases = [
        (IdentityId::E0R0, params(2.0, MemoryType::None, 0.0), &zero),
        (IdentityId::E1R1, params(2.0, MemoryType::Type1, 0.0), &k),
        (IdentityId::E2R2, params(2.0, MemoryType::Type2, 0.0), &k),
        (IdentityId::E3R3, params(2.0, MemoryType::Type3, 1.5), &k),
        (IdentityId::E3crR3cr, params(1.0, MemoryType::Type3, 1.0), &k),
    ];
    let sp = spectrum8();
    let init = random_initial_data(sp.len(), 7, 1.0);
    let mut lines = Vec::new();
    let mut ok = true;
    for (id, p, kernel) in &cases {
        let setup = RefinementSetup {
            params: p,
            spectrum: &sp,
            kernel,
            initial: &init,
            t_end: 5.0,
            path: IntegrationPath::PronyAux,
        };
        let (results, _) = refinement_audit(&setup, &[4e-3, 2e-3, 1e-3], &[*id])
            .map_err(err)?
            .remove(0);
        let win = winning_convention(&results).ok_or("no audit result")?;
        let order = win.refinement_order.unwrap_or(f64::NAN);
        ok &= order >= 1.8 && win.max_abs_residual < 1e-4;
        lines.push(format!(
            "{} {:?}: {:.2e}, order {order:.2}",
            id.name(),
            win.convention,
            win.max_abs_residual
        ));
    }
    ensure(ok, lines.join("; "))
}

fn ac7() -> Outcome {
    let p = params(2.0, MemoryType::Type1, 0.0);
    let k = kernel_02();
    let sp = OperatorSpectrum::new(vec![1.0]).unwrap();
    let one = |x: f64| ModalVector(vec![x]);
    let init = InitialData::new(one(1.0), one(-0.5), one(0.25));
    let h = 1e-3;
    let grid = TimeGrid::new(10.0, h).map_err(err)?;
    let a = simulate(&p, &sp, &k, &init, grid, IntegrationPath::PronyAux).map_err(err)?;
    let b = simulate(&p, &sp, &k, &init, grid, IntegrationPath::Quadrature).map_err(err)?;
    let (ma, mb) = (&a.modes[0], &b.modes[0]);
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for (xa, xb) in [(&ma.u, &mb.u), (&ma.ut, &mb.ut), (&ma.utt, &mb.utt)] {
        for (x, y) in xa.iter().zip(xb) {
            diff = diff.max((x - y).abs());
            scale = scale.max(x.abs());
        }
    }
    let bound = 5.0 * h * h * scale;
    ensure(diff < bound, format!("max diff = {diff:.3e} (< {bound:.3e})"))
}

fn ac8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut disagreements = 0;
    let mut worst_pair = 0.0f64;
    for _ in 0..1000 {
        let (tau, alpha, b, c2) = (
            rng.gen_range(0.1..10.0),
            rng.gen_range(0.1..10.0),
            rng.gen_range(0.1..10.0),
            rng.gen_range(0.1..10.0),
        );
        let critical_alpha = c2 * tau / b;
        for mu in [0.01, 1.0, 100.0] {
            let v = characteristic_roots_raw(tau, alpha, b, c2, mu).map_err(err)?;
            if v.hurwitz != (v.gamma > 0.0) {
                disagreements += 1;
            }
            let v = characteristic_roots_raw(tau, critical_alpha, b, c2, mu).map_err(err)?;
            let im = (b * mu / tau).sqrt();
            let dev = v
                .roots
                .iter()
                .filter(|r| r.im > 0.0)
                .map(|r| r.re.abs().max((r.im - im).abs()))
                .fold(f64::INFINITY, f64::min);
            worst_pair = worst_pair.max(dev);
        }
    }
    ensure(
        disagreements == 0 && worst_pair < 1e-8,
        format!("{disagreements} disagreements in 3000; worst critical pair deviation {worst_pair:.2e}"),
    )
}

fn ac9() -> Outcome {
    let h = 1e-4;
    let n = 10_000;
    let u: Vec<f64> = (0..=n).map(|j| j as f64 * h).collect();
    let k = MemoryKernel::prony(vec![1.0], vec![1.0]).map_err(err)?;
    let got = g_circ(&k, &[u], None, h, n).map_err(err)?;
    let exact = 2.0 - 5.0 / std::f64::consts::E;
    let diff = (got - exact).abs();
    ensure(diff < 1e-6, format!("g_circ = {got:.10}, closed form {exact:.10}, diff {diff:.2e}"))
}

fn ac10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut violations = 0;
    let mut min_slack = f64::INFINITY;
    for c0 in [0.1, 1.0, 10.0] {
        let c1 = lemma_constant(c0);
        for _ in 0..10_000 {
            let dim = rng.gen_range(1..=8);
            let f: Vec<f64> = (0..dim).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let g: Vec<f64> = (0..dim).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let n2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
            let sum: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a + b).collect();
            let lhs = c1 * (n2(&f) + n2(&g));
            let rhs = n2(&sum) + c0 * n2(&g);
            // rounding slack only
            if lhs > rhs + 1e-12 * rhs.max(lhs) {
                violations += 1;
            }
            min_slack = min_slack.min((rhs - lhs) / rhs.max(1e-300));
        }
    }
    ensure(
        violations == 0,
        format!("{violations} violations in 30000; min relative slack {min_slack:.3e}"),
    )
}

fn ac11() -> Outcome {
    let (t, f0) = gamma1_f0()?;
    let check = gronwall_integral_check(&t, &f0).map_err(err)?;
    let ts: Vec<f64> = (0..=100_000).map(|j| j as f64 * 1e-3).collect();
    let slow: Vec<f64> = ts.iter().map(|t| 1.0 / (1.0 + t)).collect();
    let contrast = gronwall_integral_check(&ts, &slow).map_err(err)?;
    ensure(
        check.satisfied && check.c_est.is_finite() && !contrast.satisfied,
        format!(
            "F0: C_est {:.3} vs {:.3} at half horizon; 1/(1+t): {:.3} vs {:.3}, satisfied = {}",
            check.c_est, check.c_est_half, contrast.c_est, contrast.c_est_half, contrast.satisfied
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("AC1 critical conservation", ac1),
        ("AC2 memoryless decay", ac2),
        ("AC3 type-1 decay", ac3),
        ("AC4 type-2 decay", ac4),
        ("AC5 type-3 critical decay", ac5),
        ("AC6 identity audits", ac6),
        ("AC7 cross-path agreement", ac7),
        ("AC8 Routh-Hurwitz equivalence", ac8),
        ("AC9 g_circ closed form", ac9),
        ("AC10 splitting inequality", ac10),
        ("AC11 Gronwall integral check", ac11),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} of {} criteria failed", criteria.len());
        ExitCode::FAILURE
    }
}
