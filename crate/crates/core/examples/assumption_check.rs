//! Kernel and parameter hypotheses, including the type-2 feasibility search.
//!
//! `cargo run --example assumption_check`

use mgt_core::kernels::MemoryKernel;
use mgt_core::model::{check_assumption, AssumptionId, AssumptionReport, MemoryType, MgtParameters};

/// Reports for a weak and a strong type-1 kernel, then a type-2 kernel.
pub fn run_example() -> mgt_core::Result<Vec<AssumptionReport>> {
    let type1 = MgtParameters::new(1.0, 2.0, 1.0, 1.0, MemoryType::Type1, 0.0, None)?;
    let type2 = type1.with_memory(MemoryType::Type2, 0.0)?;
    let cases = [
        (&type1, MemoryKernel::prony(vec![0.2], vec![2.0])?, AssumptionId::A1Type1),
        (&type1, MemoryKernel::prony(vec![2.0], vec![1.0])?, AssumptionId::A1Type1),
        (&type2, MemoryKernel::prony(vec![0.2, 0.1], vec![2.0, 5.0])?, AssumptionId::A2Type2),
    ];
    let mut out = Vec::new();
    for (params, kernel, id) in cases {
        for rep in [check_assumption(params, &kernel, AssumptionId::A0Kernel)?, check_assumption(params, &kernel, id)?] {
            println!("{:?}: satisfied = {}, violations = {:?}", rep.assumption_id, rep.satisfied, rep.violations);
            for (name, value) in &rep.witnesses {
                println!("    {name} = {value}");
            }
            out.push(rep);
        }
    }
    Ok(out)
}

fn main() -> mgt_core::Result<()> {
    run_example().map(|_| ())
}
