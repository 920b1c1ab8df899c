//! Fixed-radius near-neighbor particle simulation on a linear BVH, with
//! adaptive rebuild/refit scheduling and a benchmark harness.

pub mod bench;
pub mod bvh;
pub mod config;
pub mod distributions;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod physics;
pub mod policy;
pub mod reference;
pub mod validate;

pub use bench::{
    run_experiment, run_matrix, speedup, ExperimentMatrix, RunStatus, RunSummary, Simulation,
    StepRecord,
};
pub use bvh::{Bvh, TraversalStats};
pub use config::{EngineKind, ModeKind, SimConfig};
pub use distributions::{generate_particles, DistributionSpec, ParticleDist, RadiusDist};
pub use engine::{FrnnEngine, QueryMode, Reduction};
pub use error::{Error, Result};
pub use geometry::{Aabb, BoundaryKind, Domain, ParticleSystem, Vec3};
pub use physics::{ForceForm, LjParams};
pub use policy::{k_u_opt, total_cost, CostModelParams, GradientConfig, PolicyKind, PolicyState};
