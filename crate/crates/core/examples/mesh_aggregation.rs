//! Nested aggregation maps on a Cartesian background mesh.

use xdgmg::mesh::multigrid_aggregation_sequence;
use xdgmg::prelude::*;

fn main() -> Result<()> {
    let mesh = BackgroundMesh::build_cartesian(2, &[0.0, 0.0], &[1.0, 1.0], &[9, 9])?;
    let graph = mesh.graph();
    println!(
        "{} cells, {} face-graph edges",
        mesh.num_cells(),
        graph.edges().len()
    );
    let maps = multigrid_aggregation_sequence(&mesh, 4)?;
    for (l, map) in maps.iter().enumerate() {
        let aggregates = map.connected_components(&graph)?;
        let largest = aggregates.iter().map(|a| a.cells.len()).max().unwrap_or(0);
        println!(
            "level {}: {} edges, {} aggregates, largest has {} cells",
            l + 1,
            map.edges().len(),
            aggregates.len(),
            largest
        );
        if l > 0 {
            assert!(maps[l - 1].is_subset_of(map));
        }
    }
    Ok(())
}
