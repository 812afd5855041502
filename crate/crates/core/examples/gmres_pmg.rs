//! GMRES with the p-multigrid preconditioner at several restart lengths.

use xdgmg::prelude::*;

fn main() -> Result<()> {
    let disc = Discretization::build(&BenchCase::benchmark(4, 2))?;
    let map = &disc.hierarchy.level(0).index_map;
    for restart in [10, 30, 100] {
        let config = SolverConfig {
            gmres_restart: restart,
            ..disc.case.solver_config()
        };
        let (_, report) = gmres_pmg_solve(disc.matrix(), map, disc.rhs(), &config)?;
        println!(
            "restart {restart:>3}: {:>4} iterations, converged {}, residual {:.2e}, {:.0} ms",
            report.iterations, report.converged, report.final_residual, report.solve_ms
        );
    }
    Ok(())
}
