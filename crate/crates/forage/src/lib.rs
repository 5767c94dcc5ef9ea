//! Simulator and analysis toolkit for food-driven compression and spiraling
//! particle systems on a triangular torus.

pub mod analysis;
pub mod comb_oracle;
pub mod compression_algo;
pub mod engine;
pub mod interface;
pub mod lattice;
pub mod spiral_algo;
