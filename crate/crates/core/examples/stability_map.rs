//! Characteristic roots across the critical line γ = α − c²τ/b = 0.
//!
//! `cargo run --release --example stability_map`

use mgt_core::analysis::{characteristic_roots_raw, StabilityVerdict};

/// One verdict per (α, μ) pair with τ = b = c² = 1.
pub fn run_example() -> mgt_core::Result<Vec<StabilityVerdict>> {
    let mut out = Vec::new();
    println!("{:>5} {:>6} {:>7} {:>12}  hurwitz", "alpha", "mu", "gamma", "max Re");
    for alpha in [0.5, 1.0, 2.0] {
        for mu in [0.01, 1.0, 100.0] {
            let v = characteristic_roots_raw(1.0, alpha, 1.0, 1.0, mu)?;
            println!("{alpha:>5} {mu:>6} {:>7.2} {:>12.4e}  {}", v.gamma, v.max_real_part, v.hurwitz);
            out.push(v);
        }
    }
    Ok(out)
}

fn main() -> mgt_core::Result<()> {
    run_example().map(|_| ())
}
