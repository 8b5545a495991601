//! Space-time grid, overlapping decomposition and the restriction /
//! extension operators with their overlap weights.

mod decomposition;
mod field;
mod grid;
mod operators;

pub use decomposition::{
    build_decomposition, Decomposition, DecompositionSpec, IndexRange, Subdomain,
};
pub use field::{LocalField, SpaceTimeField};
pub use grid::{SpaceTimeGrid, NVARS};
pub use operators::{extend, overlap_region, reconstruct, restrict, OverlapRegion, RestrictMode};
