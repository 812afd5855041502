//! Assembles the SIP system for the jump-coefficient benchmark by hand.

use xdgmg::multigrid::small_cell_agglomeration_map;
use xdgmg::prelude::*;
use xdgmg::sip::{assemble_rhs_raw, assemble_sip_raw, constant_field};

fn main() -> Result<()> {
    let mesh = BackgroundMesh::build_cartesian(3, &[-1.0; 3], &[1.0; 3], &[4; 3])?;
    let cutmesh = CutCellMesh::classify_and_build(
        &mesh,
        NamedLevelSet::Benchmark.into_shared(),
        GeometryConfig::new(2, 6),
    )?;
    let agglomeration = small_cell_agglomeration_map(&cutmesh, 0.1)?;
    let scales = PenaltyScales::new(&cutmesh, &agglomeration.aggregates(&cutmesh)?)?;
    let map = XdgIndexMap::build(&cutmesh, &[2])?;
    let problem = PoissonProblem::new(3, 1.0, 1e-3)?.with_source(constant_field(1.0));
    let penalty = PenaltyConfig::default();

    let m = assemble_sip_raw(&cutmesh, &map, &problem, &penalty, &scales)?;
    let b = assemble_rhs_raw(&cutmesh, &map, &problem, &penalty, &scales)?;
    println!(
        "{} DOFs, {} stored blocks, {} nonzeros",
        m.nrows(),
        m.num_stored_blocks(),
        m.nnz()
    );
    println!(
        "relative asymmetry {:.2e}, max entry {:.3e}, |b| {:.3e}",
        m.asymmetry() / m.max_abs(),
        m.max_abs(),
        xdgmg::linalg::norm(&b)
    );
    Ok(())
}
