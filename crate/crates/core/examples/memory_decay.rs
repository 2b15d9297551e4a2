//! Critical type-3 memory: the kernel alone turns a conservative system
//! into a decaying one.
//!
//! `cargo run --release --example memory_decay`

use mgt_core::analysis::{conservation_drift, fit_decay_rate, DecayFit};
use mgt_core::cli::config::random_initial_data;
use mgt_core::dynamics::{simulate, IntegrationPath, TimeGrid};
use mgt_core::energy::{evaluate_ledger, Functional};
use mgt_core::kernels::MemoryKernel;
use mgt_core::model::{MemoryType, MgtParameters};
use mgt_core::spectrum::OperatorSpectrum;

/// Decay fit with memory, and energy drift without it.
pub fn run_example() -> mgt_core::Result<(DecayFit, f64)> {
    let params = MgtParameters::new(1.0, 1.0, 1.0, 1.0, MemoryType::Type3, 1.0, None)?;
    let spectrum = OperatorSpectrum::dirichlet(std::f64::consts::PI, 4)?;
    let initial = random_initial_data(spectrum.len(), 3, 1.0);
    let grid = TimeGrid::new(60.0, 2e-3)?;

    let with = MemoryKernel::prony(vec![0.2], vec![2.0])?;
    let traj = simulate(&params, &spectrum, &with, &initial, grid, IntegrationPath::PronyAux)?;
    let ledger = evaluate_ledger(&traj);
    let fit = fit_decay_rate(&ledger.times, ledger.require(Functional::F3cr)?, 0.5)?;
    println!("g = 0.2 e^(-2t): F3cr ~ {:.3} e^(-{:.4} t), r2 = {:.4}", fit.c, fit.omega, fit.r_squared);

    let bare = simulate(&params, &spectrum, &MemoryKernel::zero(), &initial, grid, IntegrationPath::PronyAux)?;
    let drift = conservation_drift(evaluate_ledger(&bare).require(Functional::E3cr)?)?;
    println!("g = 0: E3cr drift = {drift:.3e}");
    Ok((fit, drift))
}

fn main() -> mgt_core::Result<()> {
    run_example().map(|_| ())
}
