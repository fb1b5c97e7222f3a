//! Budget-constrained allocation of testing impressions and bounty dollars.
//!
//! Marginal values MB_q (per discounted impression) and MB_$ (per expected
//! payout dollar) are equated to shadow prices λ_imp and λ_$ by a projected
//! primal-dual loop.

use serde::{Deserialize, Serialize};

use crate::equilibrium::{
    frontier_suprema, implement_bounty, solve_best_response, solve_best_response_with, solve_first_best, ContinuationLandscape, Corner, CreatorPrimitives,
    EquilibriumReport, FrontierSuprema, Policy, Scenario, DEFAULT_TOL,
};
use crate::error::{Error, ErrorCode, Result};
use crate::pass_frontier::{threshold_from_bar, PassModel};

/// Below this pass rate the per-dollar normalization is unusable.
pub const MIN_PASS_RATE: f64 = 1e-9;
const MOVE_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    /// Discounted impressions per entrant.
    #[serde(rename = "R")]
    pub r: f64,
    /// Expected cash per entrant.
    #[serde(rename = "M")]
    pub m: f64,
}

impl Budgets {
    pub fn validate(&self, ptr: &str) -> Result<()> {
        if !(self.r > 0.0) {
            return Err(Error::input(format!("{ptr}/R"), "R must be positive"));
        }
        if !(self.m > 0.0) {
            return Err(Error::input(format!("{ptr}/M"), "M must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalValues {
    pub mb_q: f64,
    pub mb_dollar: f64,
    /// K(μ*) = q + H₀ + ΔH·P + μΔH·P′ − B·P′.
    pub bracket: f64,
    pub warnings: Vec<String>,
}

/// MB_q = μ* + (α/D)·K. At a corner μ* does not move and MB_q = μ*.
pub fn mb_q(scenario: &Scenario, eq: &EquilibriumReport) -> (f64, Option<String>) {
    let k = scenario.bracket(eq.mu_star, eq.frontier());
    if eq.corner != Corner::Interior {
        return (eq.mu_star, Some("corner equilibrium: MB_q is the one-sided value mu*".into()));
    }
    (eq.mu_star + scenario.creator.alpha / eq.d * k, None)
}

/// MB_$ = [−P + (P′/D)·K] / [P + B·P′²/D].
pub fn mb_dollar(scenario: &Scenario, eq: &EquilibriumReport) -> Result<(f64, Option<String>)> {
    let (p, dp) = (eq.p, eq.p_prime);
    if p <= MIN_PASS_RATE {
        return Err(Error::domain(
            ErrorCode::UnstableNormalization,
            format!("pass rate {p:.3e} is too small for a per-dollar normalization"),
        ));
    }
    if eq.corner != Corner::Interior {
        return Ok((-1.0, Some("corner equilibrium: bounty dollars are a pure transfer".into())));
    }
    let k = scenario.bracket(eq.mu_star, eq.frontier());
    let b = scenario.policy.b;
    Ok(((-p + dp / eq.d * k) / (p + b * dp * dp / eq.d), None))
}

pub fn marginal_values(scenario: &Scenario, eq: &EquilibriumReport) -> Result<MarginalValues> {
    let (mq, w1) = mb_q(scenario, eq);
    let (md, w2) = mb_dollar(scenario, eq)?;
    Ok(MarginalValues {
        mb_q: mq,
        mb_dollar: md,
        bracket: scenario.bracket(eq.mu_star, eq.frontier()),
        warnings: w1.into_iter().chain(w2).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub r_q: f64,
    pub r_dollar: f64,
    /// Slack impression budget with a positive price.
    pub dual_infeasible_imp: bool,
    pub dual_infeasible_dollar: bool,
    pub impression_usage: f64,
    pub cash_usage: f64,
}

impl KktResiduals {
    pub fn max_abs(&self) -> f64 {
        self.r_q.abs().max(self.r_dollar.abs())
    }
}

/// Stationarity residuals with corner adjustments: at q = 0 only MB_q > λ_imp
/// is a violation; at B = B̄ only MB_$ < λ_$ is.
pub fn kkt_residuals(
    q: f64,
    b: f64,
    lambda_imp: f64,
    lambda_dollar: f64,
    b_cap: f64,
    budgets: &Budgets,
    mv: &MarginalValues,
    p: f64,
    tol: f64,
) -> KktResiduals {
    let raw_q = mv.mb_q - lambda_imp;
    let r_q = if q <= 0.0 { raw_q.max(0.0) } else { raw_q };
    let raw_d = mv.mb_dollar - lambda_dollar;
    let r_dollar = if b <= 0.0 {
        raw_d.max(0.0)
    } else if b >= b_cap {
        raw_d.min(0.0)
    } else {
        raw_d
    };
    let cash = b * p;
    KktResiduals {
        r_q,
        r_dollar,
        dual_infeasible_imp: lambda_imp > tol && q < budgets.r - tol,
        dual_infeasible_dollar: lambda_dollar > tol && cash < budgets.m - tol * budgets.m.max(1.0),
        impression_usage: q,
        cash_usage: cash,
    }
}

fn default_eta() -> f64 {
    0.05
}

fn default_smoothing() -> f64 {
    0.5
}

fn default_max_iter() -> usize {
    2000
}

fn default_loop_tol() -> f64 {
    1e-3
}

fn default_solver_tol() -> f64 {
    DEFAULT_TOL
}

fn default_flip_limit() -> usize {
    20
}

fn default_flip_window() -> usize {
    40
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopConfig {
    #[serde(default = "default_eta")]
    pub eta_q: f64,
    #[serde(default = "default_eta", rename = "eta_B")]
    pub eta_b: f64,
    #[serde(default = "default_eta")]
    pub rho: f64,
    /// Weight on the new projected proposal; 1 disables smoothing.
    #[serde(default = "default_smoothing")]
    pub smoothing: f64,
    /// Bounty cap B̄; defaults to twice the implementability bounty, else 100.
    #[serde(default, rename = "B_cap")]
    pub b_cap: Option<f64>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_loop_tol")]
    pub tol: f64,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    #[serde(default = "default_flip_limit")]
    pub flip_limit: usize,
    #[serde(default = "default_flip_window")]
    pub flip_window: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            eta_q: default_eta(),
            eta_b: default_eta(),
            rho: default_eta(),
            smoothing: default_smoothing(),
            b_cap: None,
            max_iter: default_max_iter(),
            tol: default_loop_tol(),
            solver_tol: DEFAULT_TOL,
            flip_limit: default_flip_limit(),
            flip_window: default_flip_window(),
            seed: None,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self, ptr: &str) -> Result<()> {
        for (name, v) in [("eta_q", self.eta_q), ("eta_B", self.eta_b), ("rho", self.rho)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::input(format!("{ptr}/{name}"), "step sizes must lie in [0,1]"));
            }
        }
        if !(self.smoothing > 0.0 && self.smoothing <= 1.0) {
            return Err(Error::input(format!("{ptr}/smoothing"), "smoothing must lie in (0,1]"));
        }
        if let Some(c) = self.b_cap {
            if !(c >= 0.0) {
                return Err(Error::input(format!("{ptr}/B_cap"), "B_cap must be nonnegative"));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::input(format!("{ptr}/max_iter"), "max_iter must be at least 1"));
        }
        if !(self.tol > 0.0 && self.solver_tol > 0.0) {
            return Err(Error::input(format!("{ptr}/tol"), "tolerances must be positive"));
        }
        Ok(())
    }
}

/// Everything needed to take the next loop step; round-trips through clients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetState {
    pub q: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(default)]
    pub lambda_imp: f64,
    #[serde(default)]
    pub lambda_dollar: f64,
    pub eta_q: f64,
    #[serde(rename = "eta_B")]
    pub eta_b: f64,
    pub rho: f64,
    #[serde(default = "default_smoothing")]
    pub smoothing: f64,
    #[serde(rename = "B_cap")]
    pub b_cap: f64,
    pub budgets: Budgets,
    #[serde(default)]
    pub iter: usize,
    /// Iterations at which an instrument reversed direction, within the detection window.
    #[serde(default)]
    pub flips: Vec<usize>,
    #[serde(default)]
    pub last_dq: f64,
    #[serde(default, rename = "last_dB")]
    pub last_db: f64,
    #[serde(default)]
    pub equilibrium: Option<EquilibriumReport>,
    #[serde(default)]
    pub marginals: Option<MarginalValues>,
    #[serde(default)]
    pub residuals: Option<KktResiduals>,
}

impl BudgetState {
    pub fn validate(&self, ptr: &str) -> Result<()> {
        self.budgets.validate(&format!("{ptr}/budgets"))?;
        if !(self.q >= 0.0 && self.b >= 0.0) {
            return Err(Error::input(ptr, "instruments must be nonnegative"));
        }
        if !(self.b_cap >= 0.0) {
            return Err(Error::input(format!("{ptr}/B_cap"), "B_cap must be nonnegative"));
        }
        if !(self.lambda_imp >= 0.0 && self.lambda_dollar >= 0.0) {
            return Err(Error::input(ptr, "shadow prices must be nonnegative"));
        }
        for (name, v) in [("eta_q", self.eta_q), ("eta_B", self.eta_b), ("rho", self.rho)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::input(format!("{ptr}/{name}"), "step sizes must lie in [0,1]"));
            }
        }
        if !(self.smoothing > 0.0 && self.smoothing <= 1.0) {
            return Err(Error::input(format!("{ptr}/smoothing"), "smoothing must lie in (0,1]"));
        }
        Ok(())
    }
}

/// Default B̄: twice the implementability bounty when it exists, else 100.
pub fn default_b_cap(scenario: &Scenario) -> f64 {
    solve_first_best(scenario, DEFAULT_TOL)
        .and_then(|fb| implement_bounty(scenario, fb.mu_fb, DEFAULT_TOL))
        .map(|b| b.b_star)
        .ok()
        .filter(|&b| b > 0.0 && b.is_finite())
        .map(|b| 2.0 * b)
        .unwrap_or(100.0)
}

/// Starting state at the scenario's (q, B), projected onto the feasible box.
pub fn initial_state(scenario: &Scenario, budgets: &Budgets, cfg: &LoopConfig) -> BudgetState {
    let b_cap = cfg.b_cap.unwrap_or_else(|| default_b_cap(scenario));
    BudgetState {
        q: scenario.policy.q.clamp(0.0, budgets.r),
        b: scenario.policy.b.clamp(0.0, b_cap),
        lambda_imp: 0.0,
        lambda_dollar: 0.0,
        eta_q: cfg.eta_q,
        eta_b: cfg.eta_b,
        rho: cfg.rho,
        smoothing: cfg.smoothing,
        b_cap,
        budgets: *budgets,
        iter: 0,
        flips: vec![],
        last_dq: 0.0,
        last_db: 0.0,
        equilibrium: None,
        marginals: None,
        residuals: None,
    }
}

fn at_instruments(scenario: &Scenario, q: f64, b: f64) -> Scenario {
    let mut s = scenario.clone();
    s.policy.q = q;
    s.policy.b = b;
    s
}

/// Equilibrium, marginal values and residuals at the state's instruments.
pub fn evaluate(state: &BudgetState, scenario: &Scenario, solver_tol: f64, tol: f64) -> Result<BudgetState> {
    evaluate_with(state, scenario, solver_tol, tol, suprema(scenario).as_ref())
}

fn suprema(scenario: &Scenario) -> Option<FrontierSuprema> {
    frontier_suprema(&scenario.policy.pass_model, &scenario.creator).ok()
}

fn evaluate_with(
    state: &BudgetState,
    scenario: &Scenario,
    solver_tol: f64,
    tol: f64,
    sup: Option<&FrontierSuprema>,
) -> Result<BudgetState> {
    let scen = at_instruments(scenario, state.q, state.b);
    let eq = solve_best_response_with(&scen, solver_tol, sup)?;
    let mv = marginal_values(&scen, &eq)?;
    let res = kkt_residuals(
        state.q,
        state.b,
        state.lambda_imp,
        state.lambda_dollar,
        state.b_cap,
        &state.budgets,
        &mv,
        eq.p,
        tol,
    );
    let mut out = state.clone();
    out.equilibrium = Some(eq);
    out.marginals = Some(mv);
    out.residuals = Some(res);
    Ok(out)
}

/// The plain projected update:
/// q⁺ = Π[0,R](q + η_q(MB_q − λ_imp)), B⁺ = Π[0,B̄](B + η_B(MB_$ − λ_$)),
/// λ_imp⁺ = [λ_imp + ρ(q⁺ − R)]₊, λ_$⁺ = [λ_$ + ρ(B⁺·P(μ*(q⁺,B⁺)) − M)]₊.
pub fn primal_dual_step(state: &BudgetState, scenario: &Scenario, solver_tol: f64) -> Result<BudgetState> {
    let cur = evaluate(state, scenario, solver_tol, default_loop_tol())?;
    let mv = cur.marginals.as_ref().unwrap();
    let q_new = (state.q + state.eta_q * (mv.mb_q - state.lambda_imp)).clamp(0.0, state.budgets.r);
    let b_new = (state.b + state.eta_b * (mv.mb_dollar - state.lambda_dollar)).clamp(0.0, state.b_cap);
    let eq_new = solve_best_response(&at_instruments(scenario, q_new, b_new), solver_tol)?;
    let mut next = state.clone();
    next.q = q_new;
    next.b = b_new;
    next.lambda_imp = (state.lambda_imp + state.rho * (q_new - state.budgets.r)).max(0.0);
    next.lambda_dollar = (state.lambda_dollar + state.rho * (b_new * eq_new.p - state.budgets.m)).max(0.0);
    next.iter = state.iter + 1;
    evaluate(&next, scenario, solver_tol, default_loop_tol())
}

fn sign(x: f64) -> f64 {
    if x.abs() < MOVE_EPS {
        0.0
    } else {
        x.signum()
    }
}

/// One safeguarded iteration of the balanced loop: smoothing, change caps,
/// dual update on the smoothed impression proposal, oscillation damping.
/// Returns the new state and any event messages.
pub fn loop_step(state: &BudgetState, scenario: &Scenario, cfg: &LoopConfig) -> Result<(BudgetState, Vec<String>)> {
    loop_step_with(state, scenario, cfg, suprema(scenario).as_ref())
}

fn loop_step_with(
    state: &BudgetState,
    scenario: &Scenario,
    cfg: &LoopConfig,
    sup: Option<&FrontierSuprema>,
) -> Result<(BudgetState, Vec<String>)> {
    let cur = if state.marginals.is_some() && state.equilibrium.is_some() {
        state.clone()
    } else {
        evaluate_with(state, scenario, cfg.solver_tol, cfg.tol, sup)?
    };
    let mv = cur.marginals.as_ref().unwrap();
    let w = state.smoothing;

    let prop_q = state.q + state.eta_q * (mv.mb_q - state.lambda_imp);
    let prop_b = state.b + state.eta_b * (mv.mb_dollar - state.lambda_dollar);
    let target_q = state.q + w * (prop_q.clamp(0.0, state.budgets.r) - state.q);
    let target_b = state.b + w * (prop_b.clamp(0.0, state.b_cap) - state.b);
    let dq = (target_q - state.q).clamp(-1.0, 1.0);
    let cap_b = if state.b < 1.0 { 1.0 } else { 0.1 * state.b };
    let db = (target_b - state.b).clamp(-cap_b, cap_b);
    let q_new = (state.q + dq).clamp(0.0, state.budgets.r);
    let b_new = (state.b + db).clamp(0.0, state.b_cap);

    let eq_new = solve_best_response_with(&at_instruments(scenario, q_new, b_new), cfg.solver_tol, sup)?;
    // Usage is the smoothed proposal before projection, so the price can rise
    // while q sits at R.
    let usage_q = state.q + w * (prop_q - state.q);
    let mut next = state.clone();
    next.q = q_new;
    next.b = b_new;
    next.lambda_imp = (state.lambda_imp + state.rho * (usage_q - state.budgets.r)).max(0.0);
    next.lambda_dollar = (state.lambda_dollar + state.rho * (b_new * eq_new.p - state.budgets.m)).max(0.0);
    next.iter = state.iter + 1;
    next.equilibrium = None;
    next.marginals = None;

    let mut events = Vec::new();
    let (sq, sb) = (sign(dq), sign(db));
    for (s, last) in [(sq, sign(state.last_dq)), (sb, sign(state.last_db))] {
        if s != 0.0 && last != 0.0 && s != last {
            next.flips.push(next.iter);
        }
    }
    if sq != 0.0 {
        next.last_dq = dq;
    }
    if sb != 0.0 {
        next.last_db = db;
    }
    let window_start = next.iter.saturating_sub(cfg.flip_window);
    next.flips.retain(|&i| i > window_start);
    if next.flips.len() > cfg.flip_limit {
        next.eta_q *= 0.5;
        next.eta_b *= 0.5;
        next.rho *= 0.5;
        next.flips.clear();
        events.push(format!(
            "iteration {}: oscillation detected, step sizes halved to eta_q={:.4}, eta_B={:.4}, rho={:.4}",
            next.iter, next.eta_q, next.eta_b, next.rho
        ));
    }
    let next = evaluate_with(&next, scenario, cfg.solver_tol, cfg.tol, sup)?;
    Ok((next, events))
}

/// Stationarity, primal feasibility and complementary slackness all within tol.
pub fn is_converged(state: &BudgetState, tol: f64) -> bool {
    let Some(r) = &state.residuals else { return false };
    let bud = &state.budgets;
    let cash_tol = tol * bud.m.max(1.0);
    r.max_abs() < tol
        && state.q <= bud.r + tol
        && r.cash_usage <= bud.m + cash_tol
        && state.lambda_imp * (bud.r - state.q).max(0.0) < tol
        && state.lambda_dollar * (bud.m - r.cash_usage).max(0.0) < cash_tol
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub iter: usize,
    pub q: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub mu_star: f64,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "Pprime")]
    pub p_prime: f64,
    #[serde(rename = "MBq")]
    pub mb_q: f64,
    #[serde(rename = "MBdollar")]
    pub mb_dollar: f64,
    pub lambda_imp: f64,
    pub lambda_dollar: f64,
    pub rq: f64,
    pub rdollar: f64,
    pub welfare: f64,
}

impl TrajectoryRow {
    pub fn from_state(state: &BudgetState, scenario: &Scenario) -> Self {
        let eq = state.equilibrium.as_ref().expect("evaluated state");
        let mv = state.marginals.as_ref().expect("evaluated state");
        let r = state.residuals.as_ref().expect("evaluated state");
        let scen = at_instruments(scenario, state.q, state.b);
        TrajectoryRow {
            iter: state.iter,
            q: state.q,
            b: state.b,
            mu_star: eq.mu_star,
            p: eq.p,
            p_prime: eq.p_prime,
            mb_q: mv.mb_q,
            mb_dollar: mv.mb_dollar,
            lambda_imp: state.lambda_imp,
            lambda_dollar: state.lambda_dollar,
            rq: r.r_q,
            rdollar: r.r_dollar,
            welfare: scen.welfare(eq.mu_star, eq.frontier()),
        }
    }
}

pub const TRAJECTORY_COLUMNS: [&str; 13] = [
    "iter", "q", "B", "mu_star", "P", "Pprime", "MBq", "MBdollar", "lambda_imp", "lambda_dollar", "rq", "rdollar",
    "welfare",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopResult {
    pub converged: bool,
    pub iterations: usize,
    pub state: BudgetState,
    pub welfare: f64,
    pub events: Vec<String>,
    pub trajectory: Vec<TrajectoryRow>,
}

pub fn run_balanced_loop(scenario: &Scenario, budgets: &Budgets, cfg: &LoopConfig) -> Result<LoopResult> {
    scenario.validate()?;
    budgets.validate("/budgets")?;
    cfg.validate("/loop")?;
    let state = evaluate(&initial_state(scenario, budgets, cfg), scenario, cfg.solver_tol, cfg.tol)?;
    run_from_state(state, scenario, cfg)
}

/// Continues the loop from an arbitrary state (e.g. a warm start).
pub fn run_from_state(state: BudgetState, scenario: &Scenario, cfg: &LoopConfig) -> Result<LoopResult> {
    let sup = suprema(scenario);
    let mut state = if state.residuals.is_some() {
        state
    } else {
        evaluate_with(&state, scenario, cfg.solver_tol, cfg.tol, sup.as_ref())?
    };
    let mut trajectory = vec![TrajectoryRow::from_state(&state, scenario)];
    let mut events = Vec::new();
    let mut converged = is_converged(&state, cfg.tol);
    let start_iter = state.iter;
    while !converged && state.iter - start_iter < cfg.max_iter {
        let (next, mut ev) = loop_step_with(&state, scenario, cfg, sup.as_ref())?;
        state = next;
        events.append(&mut ev);
        trajectory.push(TrajectoryRow::from_state(&state, scenario));
        converged = is_converged(&state, cfg.tol);
    }
    let welfare = trajectory.last().map(|r| r.welfare).unwrap_or(f64::NAN);
    Ok(LoopResult {
        converged,
        iterations: state.iter - start_iter,
        state,
        welfare,
        events,
        trajectory,
    })
}

/// One row of a marginal-value sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub q: f64,
    pub s: u32,
    #[serde(rename = "B")]
    pub b: f64,
    pub mu_star: f64,
    pub corner: Corner,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "Pprime")]
    pub p_prime: f64,
    #[serde(rename = "MBq")]
    pub mb_q: f64,
    #[serde(rename = "MBdollar")]
    pub mb_dollar: f64,
    pub welfare: f64,
}

pub const SWEEP_COLUMNS: [&str; 10] = ["q", "s", "B", "mu_star", "corner", "P", "Pprime", "MBq", "MBdollar", "welfare"];

fn sweep_row(scen: &Scenario, tol: f64) -> Result<SweepRow> {
    let eq = solve_best_response(scen, tol)?;
    let (mq, _) = mb_q(scen, &eq);
    let md = mb_dollar(scen, &eq).map(|(v, _)| v).unwrap_or(f64::NAN);
    Ok(SweepRow {
        q: scen.policy.q,
        s: scen.policy.pass_model.threshold(),
        b: scen.policy.b,
        mu_star: eq.mu_star,
        corner: eq.corner,
        p: eq.p,
        p_prime: eq.p_prime,
        mb_q: mq,
        mb_dollar: md,
        welfare: scen.welfare(eq.mu_star, eq.frontier()),
    })
}

/// MB curves over bounty levels at the scenario's q.
pub fn sweep_bounty(scenario: &Scenario, bs: &[f64], tol: f64) -> Result<Vec<SweepRow>> {
    bs.iter().map(|&b| sweep_row(&scenario.with_b(b), tol)).collect()
}

/// MB curves over integer windows q with the bar held at μ̄, so s = ⌈μ̄q⌉
/// moves in steps; both the level term and the window are set to q.
pub fn sweep_window(scenario: &Scenario, qs: &[u32], bar: f64, tol: f64) -> Result<Vec<SweepRow>> {
    qs.iter()
        .map(|&q| {
            let s = threshold_from_bar(q, bar);
            let mut scen = scenario.with_q(q as f64);
            scen.policy.pass_model = scenario.policy.pass_model.rebar(q, s)?;
            sweep_row(&scen, tol)
        })
        .collect()
}

/// A creator segment with its own primitives and instruments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub share: f64,
    pub creator: CreatorPrimitives,
    pub continuation: ContinuationLandscape,
    pub pass_model: PassModel,
    #[serde(default)]
    pub q: f64,
    #[serde(rename = "B", default)]
    pub b: f64,
}

impl Segment {
    fn scenario(&self) -> Scenario {
        Scenario {
            policy: Policy {
                q: self.q,
                b: self.b,
                pass_model: self.pass_model.clone(),
            },
            creator: self.creator.clone(),
            continuation: self.continuation.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaterfillResult {
    pub segments: Vec<Segment>,
    pub lambda_imp: f64,
    pub lambda_dollar: f64,
    pub impression_slack: f64,
    pub cash_slack: f64,
    pub impression_grants: usize,
    pub cash_grants: usize,
    pub warnings: Vec<String>,
}

struct SegEval {
    mb_q: f64,
    mb_dollar: f64,
    /// d(B·P)/dB = P + B·P′²/D.
    spend_rate: f64,
    p: f64,
}

fn seg_eval(seg: &Segment, tol: f64) -> Result<SegEval> {
    let scen = seg.scenario();
    let eq = solve_best_response(&scen, tol)?;
    let (mq, _) = mb_q(&scen, &eq);
    let md = mb_dollar(&scen, &eq).map(|(v, _)| v).unwrap_or(-1.0);
    let spend_rate = if eq.corner == Corner::Interior {
        eq.p + seg.b * eq.p_prime * eq.p_prime / eq.d
    } else {
        eq.p
    };
    Ok(SegEval {
        mb_q: mq,
        mb_dollar: md,
        spend_rate,
        p: eq.p,
    })
}

/// Greedy cross-segment allocation: impressions in steps of δ_q to the
/// segment with the largest MB_q until Σπ_s·q_s reaches R, then expected
/// payout in steps of δ_$ to the largest MB_$ until Σπ_s·B_s·P_s reaches M.
pub fn segment_waterfill(
    segments: &[Segment],
    budgets: &Budgets,
    delta_q: f64,
    delta_dollar: f64,
    tol: f64,
) -> Result<WaterfillResult> {
    if segments.is_empty() {
        return Err(Error::input("/segments", "need at least one segment"));
    }
    if !(delta_q > 0.0 && delta_dollar > 0.0) {
        return Err(Error::input("/delta", "grant steps must be positive"));
    }
    budgets.validate("/budgets")?;
    let total: f64 = segments.iter().map(|s| s.share).sum();
    if (total - 1.0).abs() > 1e-12 || segments.iter().any(|s| !(s.share > 0.0 && s.share <= 1.0)) {
        return Err(Error::input("/segments", "segment shares must lie in (0,1] and sum to 1"));
    }
    let mut segs = segments.to_vec();
    let mut evals = segs.iter().map(|s| seg_eval(s, tol)).collect::<Result<Vec<_>>>()?;
    let mut warnings = Vec::new();

    let mut used_q: f64 = segs.iter().map(|s| s.share * s.q).sum();
    let mut lambda_imp = 0.0;
    let mut grants_q = 0;
    while used_q < budgets.r - 1e-12 {
        let (i, best) = argmax(evals.iter().map(|e| e.mb_q));
        if best <= 0.0 {
            warnings.push("all MB_q are nonpositive; impression budget left slack".into());
            break;
        }
        let step = delta_q.min((budgets.r - used_q) / segs[i].share);
        segs[i].q += step;
        used_q += segs[i].share * step;
        lambda_imp = best;
        grants_q += 1;
        evals[i] = seg_eval(&segs[i], tol)?;
    }

    let mut used_m: f64 = segs.iter().zip(&evals).map(|(s, e)| s.share * s.b * e.p).sum();
    let mut lambda_dollar = 0.0;
    let mut grants_m = 0;
    while used_m < budgets.m - 1e-12 {
        let (i, best) = argmax(evals.iter().map(|e| e.mb_dollar));
        if best <= 0.0 {
            warnings.push("all MB_$ are nonpositive; cash budget left slack".into());
            break;
        }
        let dollars = delta_dollar.min((budgets.m - used_m) / segs[i].share);
        let rate = evals[i].spend_rate.max(MIN_PASS_RATE);
        segs[i].b += dollars / rate;
        lambda_dollar = best;
        grants_m += 1;
        evals[i] = seg_eval(&segs[i], tol)?;
        used_m = segs.iter().zip(&evals).map(|(s, e)| s.share * s.b * e.p).sum();
    }

    Ok(WaterfillResult {
        segments: segs,
        lambda_imp,
        lambda_dollar,
        impression_slack: (budgets.r - used_q).max(0.0),
        cash_slack: (budgets.m - used_m).max(0.0),
        impression_grants: grants_q,
        cash_grants: grants_m,
        warnings,
    })
}

fn argmax(it: impl Iterator<Item = f64>) -> (usize, f64) {
    it.enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExchangeRate {
    pub rate: f64,
    pub delta_m: f64,
}

/// λ_imp/λ_$ and the first-order cash compensation ΔM = −rate·ΔR.
pub fn exchange_rate(lambda_imp: f64, lambda_dollar: f64, delta_r: f64) -> Result<ExchangeRate> {
    if !(lambda_dollar > 0.0) {
        return Err(Error::domain(
            ErrorCode::InvalidInput,
            "undefined exchange rate: cash shadow price is zero",
        ));
    }
    let rate = lambda_imp / lambda_dollar;
    Ok(ExchangeRate {
        rate,
        delta_m: if delta_r == 0.0 { 0.0 } else { -rate * delta_r },
    })
}
