//! Small-cell agglomeration and the multigrid hierarchy built on top of it.

use xdgmg::prelude::*;

fn main() -> Result<()> {
    let mut case = BenchCase::benchmark(8, 2);
    case.levels = 4;
    let disc = Discretization::build(&case)?;
    let cutmesh = &disc.cutmesh;
    let small = (0..cutmesh.num_cells())
        .flat_map(|j| Species::ALL.map(|s| (j, s)))
        .filter(|&(j, s)| cutmesh.cell(j).has(s) && cutmesh.volume_fraction(j, s) <= case.alpha())
        .count();
    println!(
        "{} cut cells, {small} at or below alpha = {}, {} agglomeration edges",
        cutmesh.num_cut_cells(),
        case.alpha(),
        disc.agglomeration.edges().len()
    );
    println!(
        "{} DOFs before, {} after agglomeration",
        disc.dofs(),
        disc.dofs_agglomerated()
    );
    disc.hierarchy.write_summary(std::io::stdout())?;
    Ok(())
}
