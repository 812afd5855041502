//! DOF layout of the XDG space on the benchmark geometry and the mass matrix
//! of the smallest cut cell.

use xdgmg::basis::ReferenceBasis;
use xdgmg::prelude::*;
use xdgmg::xdg::{orthonormalizer, species_mass};

fn main() -> Result<()> {
    let case = BenchCase::benchmark(4, 2);
    let mesh = BackgroundMesh::build_cartesian(3, &[-1.0; 3], &[1.0; 3], &[4; 3])?;
    let cutmesh = CutCellMesh::classify_and_build(
        &mesh,
        case.levelset.clone().into_shared(),
        case.geometry(),
    )?;
    for k in [1, 2, 3, 5] {
        let map = XdgIndexMap::build(&cutmesh, &[k])?;
        println!(
            "k={k}: {} blocks of {} modes, {} DOFs",
            map.num_blocks(),
            map.block_size(),
            map.len()
        );
    }

    let (j, s) = (0..cutmesh.num_cells())
        .filter(|&j| cutmesh.cell(j).is_cut())
        .flat_map(|j| Species::ALL.map(|s| (j, s)))
        .min_by(|a, b| {
            cutmesh
                .volume_fraction(a.0, a.1)
                .total_cmp(&cutmesh.volume_fraction(b.0, b.1))
        })
        .expect("the benchmark interface cuts the mesh");
    let basis = ReferenceBasis::new(2, 3);
    let mass = species_mass(&cutmesh, &basis, j, s)?;
    let eig = mass.clone().symmetric_eigenvalues();
    println!(
        "smallest cut cell: cell {j} species {s:?}, fraction {:.2e}, mass condition {:.2e}, orthonormalizable: {}",
        cutmesh.volume_fraction(j, s),
        eig.max() / eig.min(),
        orthonormalizer(&mass).is_some()
    );
    Ok(())
}
