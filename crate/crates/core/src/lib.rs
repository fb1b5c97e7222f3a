//! Policy calculus for incubating new content creators: pass frontiers,
//! creator equilibrium and first best, discovery bounties, testing schedules,
//! continuation engines, budget allocation and a synthetic telemetry lab.

pub mod budget;
pub mod continuation;
pub mod equilibrium;
pub mod error;
pub mod pass_frontier;
pub mod scheduling;
pub mod special;
pub mod telemetry;

pub use error::{Error, ErrorCode, Result};
pub use budget::{BudgetState, Budgets, LoopConfig, Segment};
pub use continuation::{ContinuationEstimate, EngineConfig, RelaxationParams};
pub use equilibrium::{
    ContinuationLandscape, Corner, CreatorPrimitives, EquilibriumReport, Policy, Scenario, DEFAULT_TOL,
};
pub use pass_frontier::{BinomialBar, FrontierPoint, LinkFn, PassModel, SlotProbabilities};
pub use scheduling::Schedule;
pub use telemetry::{CohortSpec, TelemetryRecord};
