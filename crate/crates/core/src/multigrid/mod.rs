//! Small-cell agglomeration and the aggregation multigrid hierarchy.

pub mod agglomeration;

pub use agglomeration::{
    lift_aggregation_to_cutcells, small_cell_agglomeration_map, CutAggregate, CutAggregationMap,
    CutCellId,
};
pub mod hierarchy;

pub use hierarchy::{galerkin_restrict, Hierarchy, HierarchyConfig, HierarchyTimings, Level};
