//! Command implementations. Each takes a request document and returns a
//! serializable result; the CLI builds requests from flags, the service
//! parses them from request bodies.

use discovery_core::budget::{
    evaluate, initial_state, is_converged, loop_step, run_balanced_loop, run_from_state, sweep_bounty, sweep_window,
    LoopResult, SweepRow, TrajectoryRow, SWEEP_COLUMNS, TRAJECTORY_COLUMNS,
};
use discovery_core::continuation::thompson_replay;
use discovery_core::equilibrium::{
    implement_bounty, solve_best_response, solve_first_best, targeting_compare, BountyReport, FirstBest,
    TargetingComparison,
};
use discovery_core::telemetry::{
    bootstrap_plugin, corridor_for, default_deltas, fit_pass_curve, influence_slope, leverage_corridor_advice,
    simulate_cohort, stress_bar, stress_from_records, BootstrapConfig, BootstrapReport, Corridor, CorridorAdvice,
    FitConfig, InfluenceEstimate, PassCurveFit, StressDelta, StressRow, STRESS_COLUMNS,
};
use discovery_core::{
    BudgetState, Budgets, CohortSpec, ContinuationEstimate, Corner, EngineConfig, EquilibriumReport, ErrorCode,
    LoopConfig, PassModel, TelemetryRecord, DEFAULT_TOL,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::output::{num, opt, render_csv};
use crate::scenario_file::{default_cohort, ScenarioFile};

fn tol_or_default(t: Option<f64>) -> CliResult<f64> {
    match t {
        None => Ok(DEFAULT_TOL),
        Some(t) if t > 0.0 && t.is_finite() => Ok(t),
        Some(_) => Err(CliError::input("/tol", "tol must be positive")),
    }
}

// ---- solve / first best / bounty ----

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveOptions {
    #[serde(default)]
    pub first_best: bool,
    /// Private-marginal increment for the hit-based vs flat cost comparison.
    #[serde(default)]
    pub targeting_eps: Option<f64>,
    #[serde(default)]
    pub tol: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveOutput {
    pub equilibrium: EquilibriumReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_best: Option<FirstBest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounty: Option<BountyReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub targeting: Option<TargetingComparison>,
}

pub fn solve(file: &ScenarioFile, opts: &SolveOptions) -> CliResult<SolveOutput> {
    file.validate("")?;
    let tol = tol_or_default(opts.tol)?;
    let scen = file.scenario();
    let equilibrium = solve_best_response(&scen, tol)?;
    let (first_best, bounty) = if opts.first_best {
        let out = bounty(file, opts.tol)?;
        (Some(out.first_best), Some(out.bounty))
    } else {
        (None, None)
    };
    let targeting = match opts.targeting_eps {
        Some(eps) if eps >= 0.0 => Some(targeting_compare(eps, &scen, equilibrium.mu_star)?),
        Some(_) => return Err(CliError::input("/targeting_eps", "targeting_eps must be nonnegative")),
        None => None,
    };
    Ok(SolveOutput {
        equilibrium,
        first_best,
        bounty,
        targeting,
    })
}

pub fn first_best(file: &ScenarioFile, tol: Option<f64>) -> CliResult<FirstBest> {
    file.validate("")?;
    Ok(solve_first_best(&file.scenario(), tol_or_default(tol)?)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct BountyOutput {
    pub first_best: FirstBest,
    pub bounty: BountyReport,
}

pub fn bounty(file: &ScenarioFile, tol: Option<f64>) -> CliResult<BountyOutput> {
    file.validate("")?;
    let tol = tol_or_default(tol)?;
    let scen = file.scenario();
    let fb = solve_first_best(&scen, tol)?;
    let b = implement_bounty(&scen, fb.mu_fb, tol)?;
    Ok(BountyOutput { first_best: fb, bounty: b })
}

// ---- frontier ----

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridSpec {
    /// Inclusive grid; values rounded to 12 decimals so `0.01·k` prints cleanly.
    pub fn points(&self, ptr: &str) -> CliResult<Vec<f64>> {
        if !(self.step > 0.0) || !self.start.is_finite() || !self.stop.is_finite() {
            return Err(CliError::input(ptr, "grid needs finite bounds and a positive step"));
        }
        if self.stop < self.start {
            return Ok(vec![]);
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        if n > 1_000_000 {
            return Err(CliError::input(ptr, "grid has more than 10^6 points"));
        }
        Ok((0..n)
            .map(|i| ((self.start + i as f64 * self.step) * 1e12).round() / 1e12)
            .collect())
    }
}

pub const DEFAULT_MU_GRID: GridSpec = GridSpec { start: 0.01, stop: 0.99, step: 0.01 };

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontierRequest {
    pub scenario: ScenarioFile,
    #[serde(default)]
    pub mu: Option<Vec<f64>>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FrontierRow {
    pub mu: f64,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "Pprime")]
    pub p_prime: f64,
    #[serde(rename = "Lambda")]
    pub leverage: f64,
}

pub fn frontier(req: &FrontierRequest) -> CliResult<Vec<FrontierRow>> {
    req.scenario.validate("/scenario")?;
    let mus = match (&req.mu, &req.grid) {
        (Some(_), Some(_)) => return Err(CliError::input("/grid", "give either mu or grid, not both")),
        (Some(m), None) => m.clone(),
        (None, Some(g)) => g.points("/grid")?,
        (None, None) => DEFAULT_MU_GRID.points("/grid")?,
    };
    let model = &req.scenario.policy.pass_model;
    mus.iter()
        .enumerate()
        .map(|(i, &mu)| {
            if !(0.0..=1.0).contains(&mu) {
                return Err(CliError::input(format!("/mu/{i}"), "mu must lie in [0,1]"));
            }
            let pt = model.eval(mu)?;
            Ok(FrontierRow {
                mu,
                p: pt.p,
                p_prime: pt.dp,
                leverage: if pt.p > 0.0 { pt.dp / pt.p } else { f64::NAN },
            })
        })
        .collect()
}

pub fn frontier_csv(rows: &[FrontierRow]) -> String {
    render_csv(
        &["mu", "P", "Pprime", "Lambda"],
        rows.iter().map(|r| [num(r.mu), num(r.p), num(r.p_prime), num(r.leverage)]),
    )
}

// ---- budget loop ----

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetRunRequest {
    pub scenario: ScenarioFile,
    #[serde(default)]
    pub budgets: Option<Budgets>,
    #[serde(default, rename = "loop")]
    pub loop_config: Option<LoopConfig>,
}

fn budgets_of(file: &ScenarioFile, explicit: Option<Budgets>) -> CliResult<Budgets> {
    let b = explicit
        .or(file.budgets)
        .ok_or_else(|| CliError::input("/budgets", "budgets {R, M} are required"))?;
    b.validate("/budgets")?;
    Ok(b)
}

fn loop_of(file: &ScenarioFile, explicit: &Option<LoopConfig>) -> CliResult<LoopConfig> {
    let cfg = explicit.clone().or_else(|| file.loop_config.clone()).unwrap_or_default();
    cfg.validate("/loop")?;
    Ok(cfg)
}

pub fn budget_run(req: &BudgetRunRequest) -> CliResult<LoopResult> {
    req.scenario.validate("/scenario")?;
    let budgets = budgets_of(&req.scenario, req.budgets)?;
    let cfg = loop_of(&req.scenario, &req.loop_config)?;
    Ok(run_balanced_loop(&req.scenario.scenario(), &budgets, &cfg)?)
}

pub fn trajectory_csv(rows: &[TrajectoryRow]) -> String {
    render_csv(
        &TRAJECTORY_COLUMNS,
        rows.iter().map(|r| {
            [
                r.iter.to_string(),
                num(r.q),
                num(r.b),
                num(r.mu_star),
                num(r.p),
                num(r.p_prime),
                num(r.mb_q),
                num(r.mb_dollar),
                num(r.lambda_imp),
                num(r.lambda_dollar),
                num(r.rq),
                num(r.rdollar),
                num(r.welfare),
            ]
        }),
    )
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetStepRequest {
    pub scenario: ScenarioFile,
    #[serde(default)]
    pub budgets: Option<Budgets>,
    #[serde(default, rename = "loop")]
    pub loop_config: Option<LoopConfig>,
    /// Previous state; absent on the first call.
    #[serde(default)]
    pub state: Option<BudgetState>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StepOutput {
    pub state: BudgetState,
    pub row: TrajectoryRow,
    pub converged: bool,
    pub events: Vec<String>,
}

/// First call returns the evaluated starting state. Later calls take one loop
/// step from the supplied state; its cached equilibrium is discarded, so a
/// client may overwrite q or B between steps.
pub fn budget_step(req: &BudgetStepRequest) -> CliResult<StepOutput> {
    req.scenario.validate("/scenario")?;
    let cfg = loop_of(&req.scenario, &req.loop_config)?;
    let scen = req.scenario.scenario();
    let (state, events) = match &req.state {
        None => {
            let budgets = budgets_of(&req.scenario, req.budgets)?;
            let init = initial_state(&scen, &budgets, &cfg);
            (evaluate(&init, &scen, cfg.solver_tol, cfg.tol)?, vec![])
        }
        Some(prev) => {
            prev.validate("/state")?;
            let mut prev = prev.clone();
            if let Some(b) = req.budgets {
                b.validate("/budgets")?;
                prev.budgets = b;
            }
            prev.equilibrium = None;
            prev.marginals = None;
            prev.residuals = None;
            loop_step(&prev, &scen, &cfg)?
        }
    };
    Ok(StepOutput {
        row: TrajectoryRow::from_state(&state, &scen),
        converged: is_converged(&state, cfg.tol),
        state,
        events,
    })
}

/// Continues a saved state to convergence (CLI `budget loop --state`).
pub fn budget_resume(file: &ScenarioFile, state: BudgetState, cfg: &Option<LoopConfig>) -> CliResult<LoopResult> {
    file.validate("/scenario")?;
    state.validate("/state")?;
    let cfg = loop_of(file, cfg)?;
    Ok(run_from_state(state, &file.scenario(), &cfg)?)
}

/// A sweep point, or the domain error that stopped it (for example an
/// ambiguous equilibrium when the gap crosses zero several times).
#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum SweepEntry {
    Ok(SweepRow),
    Failed {
        q: f64,
        s: u32,
        #[serde(rename = "B")]
        b: f64,
        error: ErrorCode,
    },
}

fn sweep_each<F>(points: &[(f64, u32, f64)], f: F) -> CliResult<Vec<SweepEntry>>
where
    F: Fn(usize) -> discovery_core::Result<Vec<SweepRow>>,
{
    points
        .iter()
        .enumerate()
        .map(|(i, &(q, s, b))| match f(i) {
            Ok(mut rows) => Ok(SweepEntry::Ok(rows.remove(0))),
            Err(discovery_core::Error::Domain { code, .. }) => Ok(SweepEntry::Failed { q, s, b, error: code }),
            Err(e) => Err(e.into()),
        })
        .collect()
}

pub fn sweep_b(file: &ScenarioFile, grid: &GridSpec) -> CliResult<Vec<SweepEntry>> {
    file.validate("")?;
    let bs = grid.points("/grid")?;
    if bs.iter().any(|&b| b < 0.0) {
        return Err(CliError::input("/grid", "bounties must be nonnegative"));
    }
    let scen = file.scenario();
    let s = scen.policy.pass_model.threshold();
    let points: Vec<_> = bs.iter().map(|&b| (scen.policy.q, s, b)).collect();
    sweep_each(&points, |i| sweep_bounty(&scen, &bs[i..=i], DEFAULT_TOL))
}

pub fn sweep_q(file: &ScenarioFile, q_lo: u32, q_hi: u32, bar: f64) -> CliResult<Vec<SweepEntry>> {
    file.validate("")?;
    if q_lo == 0 || q_hi < q_lo {
        return Err(CliError::input("/q_range", "need 1 <= lo <= hi"));
    }
    if !(bar > 0.0 && bar < 1.0) {
        return Err(CliError::input("/bar", "bar must lie in (0,1)"));
    }
    let scen = file.scenario();
    let qs: Vec<u32> = (q_lo..=q_hi).collect();
    let points: Vec<_> = qs
        .iter()
        .map(|&q| (q as f64, discovery_core::pass_frontier::threshold_from_bar(q, bar), scen.policy.b))
        .collect();
    sweep_each(&points, |i| sweep_window(&scen, &qs[i..=i], bar, DEFAULT_TOL))
}

pub fn sweep_csv(rows: &[SweepEntry]) -> String {
    render_csv(
        &SWEEP_COLUMNS,
        rows.iter().map(|e| match e {
            SweepEntry::Ok(r) => [
                num(r.q),
                r.s.to_string(),
                num(r.b),
                num(r.mu_star),
                corner_str(r.corner).to_string(),
                num(r.p),
                num(r.p_prime),
                num(r.mb_q),
                num(r.mb_dollar),
                num(r.welfare),
            ],
            SweepEntry::Failed { q, s, b, error } => {
                let nan = || num(f64::NAN);
                [num(*q), s.to_string(), num(*b), nan(), error.as_str().to_string(), nan(), nan(), nan(), nan(), nan()]
            }
        }),
    )
}

fn corner_str(c: Corner) -> &'static str {
    match c {
        Corner::Interior => "interior",
        Corner::Low => "low",
        Corner::High => "high",
    }
}

// ---- replay ----

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayRequest {
    pub scenario: ScenarioFile,
    /// Entrant quality; the scenario's equilibrium μ* when absent.
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub engine: Option<EngineConfig>,
    #[serde(default)]
    pub seed: Option<u64>,
}

pub fn replay(req: &ReplayRequest) -> CliResult<ContinuationEstimate> {
    req.scenario.validate("/scenario")?;
    let PassModel::Binomial(bar) = &req.scenario.policy.pass_model else {
        return Err(CliError::input(
            "/scenario/policy/pass_model",
            "replay needs a binomial pass model",
        ));
    };
    let mut engine = req
        .engine
        .clone()
        .or_else(|| req.scenario.engine.clone())
        .unwrap_or_else(EngineConfig::thompson_20);
    engine.validate("/engine")?;
    if let Some(seed) = req.seed.or(req.scenario.seed) {
        engine.seed = seed;
    }
    let mu = match req.mu {
        Some(m) if m > 0.0 && m < 1.0 => m,
        Some(_) => return Err(CliError::input("/mu", "mu must lie in (0,1)")),
        None => solve_best_response(&req.scenario.scenario(), DEFAULT_TOL)?.mu_star,
    };
    Ok(thompson_replay(mu, bar, &engine)?)
}

// ---- heatmap ----

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatmapRequest {
    pub scenario: ScenarioFile,
    #[serde(default = "default_q_range")]
    pub q_range: [u32; 2],
    #[serde(default = "default_s_range")]
    pub s_range: [u32; 2],
}

pub fn default_q_range() -> [u32; 2] {
    [2, 20]
}

pub fn default_s_range() -> [u32; 2] {
    [1, 10]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeatmapCell {
    pub q: u32,
    pub s: u32,
    pub mu_star: f64,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "Pprime")]
    pub p_prime: f64,
    #[serde(rename = "Lambda")]
    pub leverage: f64,
    /// `interior`, `corner_low`, `corner_high`, `s_exceeds_q` or an error code.
    pub flag: String,
}

/// Λ(μ*) over (q, s) cells. Each cell uses q both as the window and as the
/// discounted impression level, and re-solves μ*.
pub fn heatmap(req: &HeatmapRequest) -> CliResult<Vec<HeatmapCell>> {
    req.scenario.validate("/scenario")?;
    let ([q_lo, q_hi], [s_lo, s_hi]) = (req.q_range, req.s_range);
    if q_lo == 0 || q_hi < q_lo {
        return Err(CliError::input("/q_range", "need 1 <= lo <= hi"));
    }
    if s_lo == 0 || s_hi < s_lo {
        return Err(CliError::input("/s_range", "need 1 <= lo <= hi"));
    }
    if (q_hi - q_lo + 1) as u64 * (s_hi - s_lo + 1) as u64 > 10_000 {
        return Err(CliError::input("/q_range", "more than 10^4 cells"));
    }
    let base = req.scenario.scenario();
    let nan_cell = |q, s, mu_star, flag: &str| HeatmapCell {
        q,
        s,
        mu_star,
        p: f64::NAN,
        p_prime: f64::NAN,
        leverage: f64::NAN,
        flag: flag.to_string(),
    };
    let mut out = Vec::new();
    for q in q_lo..=q_hi {
        for s in s_lo..=s_hi {
            if s > q {
                out.push(nan_cell(q, s, f64::NAN, "s_exceeds_q"));
                continue;
            }
            let mut scen = base.with_q(q as f64);
            scen.policy.pass_model = base.policy.pass_model.rebar(q, s)?;
            match solve_best_response(&scen, DEFAULT_TOL) {
                Ok(eq) if eq.corner == Corner::Interior => out.push(HeatmapCell {
                    q,
                    s,
                    mu_star: eq.mu_star,
                    p: eq.p,
                    p_prime: eq.p_prime,
                    leverage: eq.leverage.unwrap_or(f64::NAN),
                    flag: "interior".into(),
                }),
                Ok(eq) => {
                    let flag = if eq.corner == Corner::Low { "corner_low" } else { "corner_high" };
                    out.push(nan_cell(q, s, eq.mu_star, flag));
                }
                Err(discovery_core::Error::Domain { code, .. }) => out.push(nan_cell(q, s, f64::NAN, code.as_str())),
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(out)
}

pub fn heatmap_csv(cells: &[HeatmapCell]) -> String {
    render_csv(
        &["q", "s", "mu_star", "P", "Pprime", "Lambda", "flag"],
        cells.iter().map(|c| {
            [
                c.q.to_string(),
                c.s.to_string(),
                num(c.mu_star),
                num(c.p),
                num(c.p_prime),
                num(c.leverage),
                c.flag.clone(),
            ]
        }),
    )
}

// ---- telemetry ----

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateRequest {
    pub scenario: ScenarioFile,
    #[serde(default)]
    pub cohort: Option<CohortSpec>,
    #[serde(default)]
    pub seed: Option<u64>,
}

pub fn simulate(req: &SimulateRequest) -> CliResult<Vec<TelemetryRecord>> {
    req.scenario.validate("/scenario")?;
    let mut spec = req
        .cohort
        .clone()
        .or_else(|| req.scenario.cohort.clone())
        .unwrap_or_else(default_cohort);
    if let Some(seed) = req.seed.or(req.scenario.seed) {
        spec.seed = seed;
    }
    spec.validate("/cohort")?;
    let model = spec.pass_model.clone().unwrap_or_else(|| req.scenario.policy.pass_model.clone());
    Ok(simulate_cohort(&spec, &model)?)
}

pub fn records_csv(records: &[TelemetryRecord]) -> String {
    let q = records.first().map(|r| r.outcomes.len()).unwrap_or(0);
    let mut header: Vec<String> = ["id", "proxy", "S", "pass"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=q).map(|t| format!("y_{t}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    render_csv(
        &header_refs,
        records.iter().map(|r| {
            let mut row = vec![
                r.id.to_string(),
                num(r.proxy),
                r.successes.to_string(),
                u8::from(r.pass).to_string(),
            ];
            row.extend(r.outcomes.iter().map(|y| y.to_string()));
            row
        }),
    )
}

pub fn records_jsonl(records: &[TelemetryRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("serializable record"));
        out.push('\n');
    }
    out
}

/// A cohort record as supplied by a client; the hidden quality is optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordIn {
    pub id: usize,
    #[serde(default)]
    pub mu_hidden: Option<f64>,
    pub proxy: f64,
    #[serde(default)]
    pub outcomes: Vec<u8>,
    #[serde(rename = "S")]
    pub successes: u32,
    pub pass: bool,
}

impl RecordIn {
    fn into_record(self, i: usize) -> CliResult<TelemetryRecord> {
        if !self.proxy.is_finite() {
            return Err(CliError::input(format!("/records/{i}/proxy"), "proxy must be finite"));
        }
        if !self.outcomes.is_empty() {
            if self.outcomes.iter().any(|&y| y > 1) {
                return Err(CliError::input(format!("/records/{i}/outcomes"), "outcomes must be 0 or 1"));
            }
            let s: u32 = self.outcomes.iter().map(|&y| y as u32).sum();
            if s != self.successes {
                return Err(CliError::input(format!("/records/{i}/S"), "S must equal the sum of outcomes"));
            }
        }
        Ok(TelemetryRecord {
            id: self.id,
            mu_hidden: self.mu_hidden.unwrap_or(f64::NAN),
            proxy: self.proxy,
            outcomes: self.outcomes,
            successes: self.successes,
            pass: self.pass,
        })
    }
}

pub fn to_records(input: &[RecordIn]) -> CliResult<Vec<TelemetryRecord>> {
    input.iter().cloned().enumerate().map(|(i, r)| r.into_record(i)).collect()
}

/// Reads records from cohort CSV (`id, proxy, S, pass, y_1..y_q`).
pub fn parse_records_csv(text: &str) -> CliResult<Vec<RecordIn>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| CliError::input("/records", e.to_string()))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(ci), Some(cp), Some(cs), Some(cpass)) = (col("id"), col("proxy"), col("S"), col("pass")) else {
        return Err(CliError::input("/records", "CSV needs columns id, proxy, S, pass"));
    };
    let ys: Vec<usize> = (1..).map_while(|t| col(&format!("y_{t}"))).collect();
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| CliError::input(format!("/records/{i}"), e.to_string()))?;
        let bad = |field: &str| CliError::input(format!("/records/{i}/{field}"), format!("line {}: bad {field}", i + 2));
        let field = |c: usize| row.get(c).unwrap_or("");
        let pass = match field(cpass) {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => return Err(bad("pass")),
        };
        let outcomes = ys
            .iter()
            .map(|&c| field(c).parse::<u8>().map_err(|_| bad("outcomes")))
            .collect::<CliResult<Vec<u8>>>()?;
        out.push(RecordIn {
            id: field(ci).parse().map_err(|_| bad("id"))?,
            mu_hidden: None,
            proxy: field(cp).parse().map_err(|_| bad("proxy"))?,
            outcomes,
            successes: field(cs).parse().map_err(|_| bad("S"))?,
            pass,
        });
    }
    Ok(out)
}

/// Reads records from JSON lines, one record per line.
pub fn parse_records_jsonl(text: &str) -> CliResult<Vec<RecordIn>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            crate::scenario_file::parse_json::<RecordIn>(l).map_err(|e| match e {
                CliError::Parse { pointer, column, message, .. } => CliError::Parse {
                    pointer: format!("/records/{i}{pointer}"),
                    line: i + 1,
                    column,
                    message,
                },
                other => other,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfluenceRequest {
    /// Known per-slot nudge dp_t.
    pub dp: Vec<f64>,
    /// Threshold; the scenario's when absent.
    #[serde(default)]
    pub s: Option<u32>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRequest {
    pub records: Vec<RecordIn>,
    #[serde(default)]
    pub fit: FitConfig,
    /// Skeleton scenario for the plug-in bounty and the default threshold.
    #[serde(default)]
    pub scenario: Option<ScenarioFile>,
    #[serde(default)]
    pub bootstrap: Option<BootstrapConfig>,
    #[serde(default)]
    pub influence: Option<InfluenceRequest>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FitOutput {
    pub fit: PassCurveFit,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub influence: Option<InfluenceEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapReport>,
}

pub fn fit(req: &FitRequest) -> CliResult<FitOutput> {
    if let Some(s) = &req.scenario {
        s.validate("/scenario")?;
    }
    let records = to_records(&req.records)?;
    let fit = fit_pass_curve(&records, &req.fit)?;
    let influence = match &req.influence {
        None => None,
        Some(inf) => {
            let s = inf
                .s
                .or_else(|| req.scenario.as_ref().map(|f| f.policy.pass_model.threshold()))
                .ok_or_else(|| CliError::input("/influence/s", "threshold s is required without a scenario"))?;
            Some(influence_slope(&records, &inf.dp, s)?)
        }
    };
    let bootstrap = match &req.bootstrap {
        None => None,
        Some(cfg) => {
            let skel = req
                .scenario
                .as_ref()
                .ok_or_else(|| CliError::input("/scenario", "bootstrap needs a skeleton scenario"))?;
            let mut cfg = cfg.clone();
            if let Some(seed) = req.seed {
                cfg.seed = seed;
            }
            Some(bootstrap_plugin(&records, &skel.scenario(), &cfg)?)
        }
    };
    Ok(FitOutput { fit, influence, bootstrap })
}

// ---- stress ----

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StressRequest {
    pub scenario: ScenarioFile,
    /// Quality at which model rows are evaluated; μ* when absent.
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub deltas: Option<Vec<StressDelta>>,
    /// When present, rows are re-derived from these logs instead of the model.
    #[serde(default)]
    pub records: Option<Vec<RecordIn>>,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub corridor: Option<Corridor>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StressOutput {
    pub source: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    pub rows: Vec<StressRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub advice: Option<CorridorAdvice>,
}

pub fn stress(req: &StressRequest) -> CliResult<StressOutput> {
    req.scenario.validate("/scenario")?;
    let deltas = req.deltas.clone().unwrap_or_else(default_deltas);
    let scen = req.scenario.scenario();
    let corridor = |floor_from_model: bool| -> CliResult<Corridor> {
        match (&req.corridor, floor_from_model) {
            (Some(c), _) => Ok(*c),
            (None, true) => Ok(corridor_for(&scen, 0.25, 0.70).unwrap_or_default()),
            (None, false) => Ok(Corridor::default()),
        }
    };
    let (source, mu, rows, corridor) = match &req.records {
        Some(recs) => {
            let records = to_records(recs)?;
            let s = scen.policy.pass_model.threshold();
            ("records", None, stress_from_records(&records, s, &deltas, &req.fit)?, corridor(false)?)
        }
        None => {
            let mu = match req.mu {
                Some(m) if (0.0..=1.0).contains(&m) => m,
                Some(_) => return Err(CliError::input("/mu", "mu must lie in [0,1]")),
                None => solve_best_response(&scen, DEFAULT_TOL)?.mu_star,
            };
            ("model", Some(mu), stress_bar(&scen.policy.pass_model, mu, &deltas)?, corridor(true)?)
        }
    };
    let advice = rows
        .iter()
        .find(|r| r.dq == 0 && r.ds == 0 && r.valid)
        .map(|r| leverage_corridor_advice(r.leverage.unwrap_or(0.0), r.p, &corridor))
        .transpose()?;
    Ok(StressOutput { source, mu, rows, advice })
}

pub fn stress_csv(rows: &[StressRow]) -> String {
    render_csv(
        &STRESS_COLUMNS,
        rows.iter().map(|r| {
            [
                r.dq.to_string(),
                r.ds.to_string(),
                r.q.to_string(),
                r.s.to_string(),
                num(r.p),
                num(r.p_prime),
                opt(r.leverage),
                r.valid.to_string(),
            ]
        }),
    )
}

// ---- service dispatch ----

pub const ENDPOINTS: [&str; 11] = [
    "solve",
    "first-best",
    "bounty",
    "frontier",
    "budget/run",
    "budget/step",
    "replay",
    "heatmap",
    "telemetry/simulate",
    "telemetry/fit",
    "stress",
];

/// Query options accepted by `/v1/solve`, `/v1/first-best` and `/v1/bounty`.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveQuery {
    #[serde(default)]
    pub first_best: Option<bool>,
    #[serde(default)]
    pub targeting_eps: Option<f64>,
    #[serde(default)]
    pub tol: Option<f64>,
}

/// Runs one endpoint on a JSON body and renders the JSON response.
pub fn dispatch(endpoint: &str, body: &str, query: &SolveQuery) -> CliResult<String> {
    use crate::output::render_json;
    use crate::scenario_file::parse_json;
    let opts = SolveOptions {
        first_best: query.first_best.unwrap_or(false),
        targeting_eps: query.targeting_eps,
        tol: query.tol,
    };
    match endpoint {
        "solve" => Ok(render_json(&solve(&parse_json(body)?, &opts)?)),
        "first-best" => Ok(render_json(&first_best(&parse_json(body)?, query.tol)?)),
        "bounty" => Ok(render_json(&bounty(&parse_json(body)?, query.tol)?)),
        "frontier" => Ok(render_json(&frontier(&parse_json(body)?)?)),
        "budget/run" => Ok(render_json(&budget_run(&parse_json(body)?)?)),
        "budget/step" => Ok(render_json(&budget_step(&parse_json(body)?)?)),
        "replay" => Ok(render_json(&replay(&parse_json(body)?)?)),
        "heatmap" => Ok(render_json(&heatmap(&parse_json(body)?)?)),
        "telemetry/simulate" => Ok(render_json(&simulate(&parse_json(body)?)?)),
        "telemetry/fit" => Ok(render_json(&fit(&parse_json(body)?)?)),
        "stress" => Ok(render_json(&stress(&parse_json(body)?)?)),
        other => Err(CliError::Core(discovery_core::Error::domain(
            ErrorCode::InvalidInput,
            format!("unknown endpoint {other}"),
        ))),
    }
}
