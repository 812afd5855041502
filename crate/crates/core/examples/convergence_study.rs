//! L² convergence against a manufactured solution with a planar interface.

use xdgmg::prelude::*;

fn main() -> Result<()> {
    for k in [1, 2, 3] {
        let mut previous: Option<f64> = None;
        for cells in [2, 4, 8] {
            let mut case = BenchCase::benchmark(cells, k);
            case.set("exact", "plane-sine")?;
            case.solver = SolverKind::Direct;
            let result = run_case(&case)?;
            let err = result.l2_error.expect("exact solution set");
            let order = previous.map_or(String::new(), |p| format!("{:.2}", (p / err).log2()));
            println!(
                "k={k} {cells}^3: {:>6} DOFs  error {err:.3e}  order {order}",
                result.dofs
            );
            previous = Some(err);
        }
    }
    Ok(())
}
