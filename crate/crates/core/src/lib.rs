//! Plaquette random-cluster model on finite boxes of `Z^d`.

pub mod homology;
pub mod lattice;
pub mod measure;
pub mod sampler;
pub mod zq_linalg;

pub use homology::{ClusterEvaluator, CubicalComplex, EulerPoincare, HomologyError};
pub use lattice::{Cell, CellIndex, Chain, Configuration, Convention, DualPairing, LatticeBox, LatticeError};
pub use measure::{BoundaryCondition, Context, MeasureError, MeasureTable, Model};
pub use sampler::{Observable, RunConfig, SampleStats, SamplerError, SpinConfig};
pub use zq_linalg::{HowellForm, IntMatrix, LinalgError};
