//! Orthonormalization multigrid on the benchmark, with the residual
//! minimization steps counted per level.

use xdgmg::prelude::*;

fn main() -> Result<()> {
    let cells = std::env::args()
        .nth(1)
        .map_or(Ok(4), |s| s.parse())
        .unwrap_or(4);
    let disc = Discretization::build(&BenchCase::benchmark(cells, 2))?;
    let h = &disc.hierarchy;
    let omg = OrthoMultigrid::new(h, &disc.case.solver_config())?;
    let mut steps = vec![0usize; h.num_levels()];
    let (_, report) = omg.solve_observed(disc.rhs(), None, &mut |l, _, _| steps[l] += 1)?;

    for (i, r) in report.residual_history.iter().enumerate().step_by(20) {
        println!("{i:>5}  {r:.3e}");
    }
    println!(
        "converged: {} after {} iterations, true residual {:.2e}",
        report.converged, report.iterations, report.final_residual
    );
    for (l, n) in steps.iter().enumerate() {
        println!(
            "level {}: {} DOFs, {n} minimization steps",
            l + 1,
            h.level(l).len()
        );
    }
    Ok(())
}
