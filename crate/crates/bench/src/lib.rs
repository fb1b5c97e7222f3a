//! Shared fixtures for the criterion benches.

use discovery_core::telemetry::{simulate_cohort, ProxyModel, QualityPrior};
use discovery_core::{CohortSpec, EngineConfig, PassModel, Scenario, TelemetryRecord};

pub fn baseline() -> Scenario {
    Scenario::baseline()
}

/// Replay engine with fewer replications so one iteration stays under a second.
pub fn replay_engine(replications: usize) -> EngineConfig {
    EngineConfig { replications, ..EngineConfig::thompson_20() }
}

pub fn cohort(n: usize, seed: u64) -> Vec<TelemetryRecord> {
    let spec = CohortSpec {
        n,
        prior: QualityPrior::Uniform { lo: 0.1, hi: 0.6 },
        proxy: ProxyModel::default(),
        pass_model: None,
        seed,
    };
    simulate_cohort(&spec, &PassModel::binomial(10, 3)).expect("valid cohort")
}
