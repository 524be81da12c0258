//! Synthetic datasets and external matrix ingestion.

mod calcium;
mod ingest;
mod place;
mod sine;
mod vorticity;

pub use calcium::{generate_cell_scene, CalciumParams, CellScene};
pub use ingest::ingest_matrix;
pub use place::{place_cell_manifold, PlaceCellSpec};
pub use sine::{sine_manifold, sine_manifold_matrix, uniform_times, SineManifoldSpec};
pub use vorticity::{
    enstrophy, forcing_field, forcing_value, phase_grid, spatial_mean, solve_vorticity, two_vortex, Grid, InitialCondition, VorticityField,
    VorticityParams,
};
