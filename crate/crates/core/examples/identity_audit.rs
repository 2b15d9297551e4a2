//! Type-1 energy identity under step refinement, in both sign conventions.
//!
//! `cargo run --release --example identity_audit`

use mgt_core::analysis::{refinement_audit, winning_convention, IdentityAuditResult, IdentityId, RefinementSetup};
use mgt_core::cli::config::random_initial_data;
use mgt_core::dynamics::IntegrationPath;
use mgt_core::kernels::MemoryKernel;
use mgt_core::model::{MemoryType, MgtParameters};
use mgt_core::spectrum::OperatorSpectrum;

/// Finest-level results for E1R1, printed convention first.
pub fn run_example() -> mgt_core::Result<Vec<IdentityAuditResult>> {
    let params = MgtParameters::new(1.0, 2.0, 1.0, 1.0, MemoryType::Type1, 0.0, None)?;
    let spectrum = OperatorSpectrum::dirichlet(std::f64::consts::PI, 4)?;
    let kernel = MemoryKernel::prony(vec![0.2], vec![2.0])?;
    let initial = random_initial_data(spectrum.len(), 5, 1.0);
    let setup = RefinementSetup {
        params: &params,
        spectrum: &spectrum,
        kernel: &kernel,
        initial: &initial,
        t_end: 2.0,
        path: IntegrationPath::PronyAux,
    };
    let steps = [4e-3, 2e-3, 1e-3];
    let (results, levels) = refinement_audit(&setup, &steps, &[IdentityId::E1R1])?.remove(0);

    println!("{:>8}  {:>12}  {:>12}", "h", "printed", "sign_corr");
    for (h, r) in steps.iter().zip(&levels) {
        println!("{h:>8.0e}  {:>12.3e}  {:>12.3e}", r[0], r[1]);
    }
    for r in &results {
        println!("{:?}: order {:.2}", r.convention, r.refinement_order.unwrap_or(f64::NAN));
    }
    if let Some(w) = winning_convention(&results) {
        println!("winner: {:?}", w.convention);
    }
    Ok(results)
}

fn main() -> mgt_core::Result<()> {
    run_example().map(|_| ())
}
