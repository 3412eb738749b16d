//! Trust-ratio Muon laboratory: dense matrix kernels, the OrScale family of
//! optimizers, toy objectives, diagnostics and a seeded experiment harness.

pub mod diagnostics;
pub mod harness;
pub mod matrixcore;
pub mod models;
pub mod optim;
pub mod rng;

pub use diagnostics::{KappaStats, RunTrace};
pub use harness::{run, HarnessError, Method, ModelSpec, RunConfig};
pub use matrixcore::{Matrix, MatrixError};
pub use models::{NoiseModel, ToyModel};
pub use optim::{HyperParams, LayerState, OptimError, StepRecord, Variant, VariantConfig};
