//! Exact Prony auxiliaries against direct convolution quadrature.
//!
//! `cargo run --release --example cross_path`

use mgt_core::dynamics::{simulate, InitialData, IntegrationPath, TimeGrid};
use mgt_core::kernels::MemoryKernel;
use mgt_core::model::{MemoryType, MgtParameters};
use mgt_core::spectrum::{ModalVector, OperatorSpectrum};

/// `(h, max |u_aux − u_quad|)` per step size.
pub fn run_example() -> mgt_core::Result<Vec<(f64, f64)>> {
    let params = MgtParameters::new(1.0, 2.0, 1.0, 1.0, MemoryType::Type1, 0.0, None)?;
    let spectrum = OperatorSpectrum::new(vec![1.0])?;
    let kernel = MemoryKernel::prony(vec![0.2], vec![2.0])?;
    let initial = InitialData::new(ModalVector(vec![1.0]), ModalVector(vec![0.0]), ModalVector(vec![-1.0]));

    let mut out = Vec::new();
    for h in [4e-3, 2e-3, 1e-3] {
        let grid = TimeGrid::new(5.0, h)?;
        let a = simulate(&params, &spectrum, &kernel, &initial, grid, IntegrationPath::PronyAux)?;
        let b = simulate(&params, &spectrum, &kernel, &initial, grid, IntegrationPath::Quadrature)?;
        let diff = a.modes[0].u.iter().zip(&b.modes[0].u).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        println!("h = {h:.0e}: max |du| = {diff:.3e}, /h^2 = {:.3}", diff / (h * h));
        out.push((h, diff));
    }
    Ok(out)
}

fn main() -> mgt_core::Result<()> {
    run_example().map(|_| ())
}
