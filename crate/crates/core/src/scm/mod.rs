//! Structural causal models: linear models with independent noise and
//! general finite-noise models with arbitrary mechanisms.

mod general;
mod linear;
mod noise;

pub use general::{FiniteNoise, GeneralScm, Mechanism, NodeSpec, DEFAULT_UNIT_CAP};
pub use linear::{solve_structure, LinearScm, StructureSolution, STRUCTURE_TOL};
pub use noise::{binomial_pmf, NoiseSpec};
