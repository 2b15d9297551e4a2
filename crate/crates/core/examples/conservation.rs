//! Critical memoryless run: the natural energy stays constant.
//!
//! `cargo run --release --example conservation`

use mgt_core::analysis::conservation_drift;
use mgt_core::cli::config::random_initial_data;
use mgt_core::dynamics::{simulate, IntegrationPath, TimeGrid};
use mgt_core::energy::{evaluate_ledger, Functional};
use mgt_core::model::MgtParameters;
use mgt_core::kernels::MemoryKernel;
use mgt_core::spectrum::OperatorSpectrum;

/// Drift of `Ehat1` over the run.
pub fn run_example() -> mgt_core::Result<f64> {
    let params = MgtParameters::memoryless(1.0, 1.0, 1.0, 1.0)?;
    let spectrum = OperatorSpectrum::dirichlet(std::f64::consts::PI, 4)?;
    let initial = random_initial_data(spectrum.len(), 1, 1.0);
    let grid = TimeGrid::new(10.0, 1e-3)?;
    let traj = simulate(&params, &spectrum, &MemoryKernel::zero(), &initial, grid, IntegrationPath::PronyAux)?;
    let ledger = evaluate_ledger(&traj);

    let ehat1 = ledger.require(Functional::Ehat1)?;
    let drift = conservation_drift(ehat1)?;
    println!("gamma = {}, regime = {:?}", params.gamma(), params.regime());
    println!("Ehat1(0) = {:.6}, Ehat1(T) = {:.6}", ehat1[0], ehat1[ehat1.len() - 1]);
    println!("relative drift = {drift:.3e}");
    Ok(drift)
}

fn main() -> mgt_core::Result<()> {
    run_example().map(|_| ())
}
