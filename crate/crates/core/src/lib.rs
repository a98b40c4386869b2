//! Simulation and synchronization analysis for networks of diffusive
//! Hindmarsh–Rose neurons with a memristive flux term.

pub mod analysis;
pub mod grid;
pub mod harness;
pub mod integrator;
pub mod model;

pub use analysis::{compute_constants, AnalysisError, DecayFit, DerivedConstants, SyncReport, Verdict};
pub use grid::{Field, Grid, GridError, GridSpec};
pub use integrator::{integrate, IntegrateError, IntegratorConfig, Scheme, Stepper};
pub use model::{Component, ModelError, NetworkState, NeuronState, Parameters};
pub use harness::{ExperimentReport, ExperimentSpec, HarnessError, SweepReport, SweepSpec};
