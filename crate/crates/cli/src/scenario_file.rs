//! The scenario document shared by the CLI and the service, plus the named presets.

use discovery_core::telemetry::{ProxyModel, QualityPrior};
use discovery_core::{
    Budgets, CohortSpec, ContinuationLandscape, CreatorPrimitives, EngineConfig, LoopConfig, PassModel, Policy, Scenario,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_path_to_error::Segment;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub policy: Policy,
    pub creator: CreatorPrimitives,
    pub continuation: ContinuationLandscape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budgets: Option<Budgets>,
    #[serde(default, rename = "loop", skip_serializing_if = "Option::is_none")]
    pub loop_config: Option<LoopConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine: Option<EngineConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cohort: Option<CohortSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ScenarioFile {
    pub fn from_scenario(s: Scenario) -> Self {
        ScenarioFile {
            policy: s.policy,
            creator: s.creator,
            continuation: s.continuation,
            budgets: None,
            loop_config: None,
            engine: None,
            cohort: None,
            seed: None,
        }
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            policy: self.policy.clone(),
            creator: self.creator.clone(),
            continuation: self.continuation.clone(),
        }
    }

    /// Range checks for every section, reported under `prefix`.
    pub fn validate(&self, prefix: &str) -> CliResult<()> {
        let p = |s: &str| format!("{prefix}{s}");
        self.policy.validate(&p("/policy"))?;
        self.creator.validate(&p("/creator"))?;
        self.continuation.validate(&p("/continuation"))?;
        if let Some(b) = &self.budgets {
            b.validate(&p("/budgets"))?;
        }
        if let Some(l) = &self.loop_config {
            l.validate(&p("/loop"))?;
        }
        if let Some(e) = &self.engine {
            e.validate(&p("/engine"))?;
        }
        if let Some(c) = &self.cohort {
            c.validate(&p("/cohort"))?;
        }
        Ok(())
    }
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    out
}

/// Deserializes `text`, reporting the JSON pointer, line and column of the first violation.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> CliResult<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let pointer = pointer_of(e.path());
        let inner = e.into_inner();
        CliError::Parse {
            pointer,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })?;
    de.end().map_err(|e| CliError::Parse {
        pointer: String::new(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Ok(value)
}

pub const PRESETS: [&str; 3] = ["baseline", "noise", "thompson-20"];

/// Named scenarios built from the reference primitives.
pub fn preset(name: &str) -> Option<ScenarioFile> {
    let mut base = ScenarioFile::from_scenario(Scenario::baseline());
    base.budgets = Some(Budgets { r: 12.0, m: 50.0 });
    base.cohort = Some(default_cohort());
    base.loop_config = Some(LoopConfig { eta_q: 0.1, eta_b: 0.1, rho: 0.1, ..LoopConfig::default() });
    match name {
        "baseline" => Some(base),
        "noise" => {
            base.policy.pass_model = PassModel::noisy(PassModel::binomial(10, 3), 0.1, 0.05);
            Some(base)
        }
        "thompson-20" => {
            base.engine = Some(EngineConfig::thompson_20());
            Some(base)
        }
        _ => None,
    }
}

pub fn default_cohort() -> CohortSpec {
    CohortSpec {
        n: 10_000,
        prior: QualityPrior::Uniform { lo: 0.1, hi: 0.6 },
        proxy: ProxyModel::default(),
        pass_model: None,
        seed: 0,
    }
}
