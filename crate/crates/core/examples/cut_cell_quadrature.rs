//! Cut-cell quadrature of a disk: area and perimeter against the exact values
//! as the subdivision depth grows.

use std::f64::consts::PI;

use xdgmg::prelude::*;

fn main() -> Result<()> {
    let r = 0.7;
    let mesh = BackgroundMesh::build_cartesian(2, &[-1.0, -1.0], &[1.0, 1.0], &[16, 16])?;
    let phi = NamedLevelSet::Sphere(Sphere {
        center: [0.0; 3],
        radius: r,
    });
    println!("depth  area error   perimeter error  cut cells");
    for depth in 1..=5 {
        let cutmesh = CutCellMesh::classify_and_build(
            &mesh,
            phi.clone().into_shared(),
            GeometryConfig::new(depth, 6),
        )?;
        let area: f64 = (0..cutmesh.num_cells())
            .map(|j| cutmesh.volume(j, Species::A))
            .sum();
        let perimeter: f64 = cutmesh.cells().iter().map(|c| c.interface_measure()).sum();
        println!(
            "{depth:>5}  {:>10.3e}   {:>15.3e}  {:>9}",
            (area - PI * r * r).abs(),
            (perimeter - 2.0 * PI * r).abs(),
            cutmesh.num_cut_cells()
        );
    }
    Ok(())
}
