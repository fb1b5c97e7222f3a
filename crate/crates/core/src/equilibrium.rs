//! Creator best response, planner first best, implementability bounty.
//!
//! The creator picks quality μ to balance marginal cost c′(μ) = κ(μ−μ₀)
//! against the private marginal benefit
//! α[q+H₀+ΔH·P] + αμΔH·P′ + B·P′.
//! The gap Δ(μ) is the difference; its root is the best response μ*.

use serde::{Deserialize, Serialize};

use crate::error::{Error, ErrorCode, Result};
use crate::pass_frontier::{leverage_of, FrontierPoint, PassModel};

/// Default solver tolerance; the root satisfies |Δ(μ*)| ≤ tol·κ.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Grid spacing for suprema and sign-change scans.
pub const GRID_STEP: f64 = 1e-3;
const BISECT_WIDTH: f64 = 1e-6;
const SECANT_STEPS: usize = 5;
/// Below this slope no finite bounty moves the creator.
pub const FLAT_SLOPE_TOL: f64 = 1e-9;

fn default_mu_low() -> f64 {
    1e-4
}

fn default_mu_high() -> f64 {
    0.999
}

/// Revenue share and quadratic cost c(μ) = κ/2·(μ−μ₀)² on [μ_low, μ_high].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreatorPrimitives {
    pub alpha: f64,
    pub kappa: f64,
    #[serde(default)]
    pub mu0: f64,
    #[serde(default = "default_mu_low")]
    pub mu_low: f64,
    #[serde(default = "default_mu_high")]
    pub mu_high: f64,
}

impl CreatorPrimitives {
    pub fn new(alpha: f64, kappa: f64, mu0: f64) -> Self {
        CreatorPrimitives {
            alpha,
            kappa,
            mu0,
            mu_low: default_mu_low(),
            mu_high: default_mu_high(),
        }
    }

    pub fn cost(&self, mu: f64) -> f64 {
        0.5 * self.kappa * (mu - self.mu0).powi(2)
    }

    pub fn marginal_cost(&self, mu: f64) -> f64 {
        self.kappa * (mu - self.mu0)
    }

    pub fn validate(&self, ptr: &str) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::input(format!("{ptr}/alpha"), "alpha must lie in (0,1]"));
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::input(format!("{ptr}/kappa"), "kappa must be positive"));
        }
        if !(self.mu_low > 0.0 && self.mu_low < self.mu_high && self.mu_high < 1.0) {
            return Err(Error::input(ptr, "need 0 < mu_low < mu_high < 1"));
        }
        if !(self.mu0 <= self.mu_low) {
            return Err(Error::input(format!("{ptr}/mu0"), "mu0 must not exceed mu_low"));
        }
        Ok(())
    }
}

/// Expected discounted continuation exposure after fail (H₀) and the pass premium ΔH.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuationLandscape {
    #[serde(default)]
    pub h0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dh: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

impl ContinuationLandscape {
    pub fn new(h0: f64, dh: f64) -> Self {
        ContinuationLandscape {
            h0,
            dh: Some(dh),
            h1: None,
            gamma: None,
        }
    }

    /// Block model: H₀ = 0, ΔH = H.
    pub fn block(h: f64) -> Self {
        Self::new(0.0, h)
    }

    pub fn dh(&self) -> f64 {
        match (self.dh, self.h1) {
            (Some(d), _) => d,
            (None, Some(h1)) => h1 - self.h0,
            (None, None) => 0.0,
        }
    }

    pub fn h1(&self) -> f64 {
        self.h0 + self.dh()
    }

    pub fn validate(&self, ptr: &str) -> Result<()> {
        if !(self.h0 >= 0.0) || !self.h0.is_finite() {
            return Err(Error::input(format!("{ptr}/h0"), "h0 must be nonnegative"));
        }
        if let (Some(d), Some(h1)) = (self.dh, self.h1) {
            if ((h1 - self.h0) - d).abs() > 1e-12 * (1.0 + h1.abs()) {
                return Err(Error::input(format!("{ptr}/dh"), "dh must equal h1 - h0"));
            }
        }
        let dh = self.dh();
        if !(dh >= 0.0) || !dh.is_finite() {
            return Err(Error::input(format!("{ptr}/dh"), "dh must be nonnegative"));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g < 1.0) {
                return Err(Error::input(format!("{ptr}/gamma"), "gamma must lie in (0,1)"));
            }
        }
        Ok(())
    }
}

/// Discounted guaranteed impressions q, the pass model and the bounty B.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Policy {
    pub q: f64,
    #[serde(rename = "B", default)]
    pub b: f64,
    pub pass_model: PassModel,
}

impl Policy {
    pub fn validate(&self, ptr: &str) -> Result<()> {
        if !(self.q >= 0.0) || !self.q.is_finite() {
            return Err(Error::input(format!("{ptr}/q"), "q must be finite and nonnegative"));
        }
        if !(self.b >= 0.0) || !self.b.is_finite() {
            return Err(Error::input(format!("{ptr}/B"), "B must be finite and nonnegative"));
        }
        self.pass_model.validate(&format!("{ptr}/pass_model"))
    }
}

/// Policy, creator and continuation primitives bundled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub policy: Policy,
    pub creator: CreatorPrimitives,
    pub continuation: ContinuationLandscape,
}

impl Scenario {
    /// q = 10, s = 3, α = 0.5, H₀ = 0, ΔH = 20, κ = 60, μ₀ = 0, B = 0.
    pub fn baseline() -> Self {
        Scenario {
            policy: Policy {
                q: 10.0,
                b: 0.0,
                pass_model: PassModel::binomial(10, 3),
            },
            creator: CreatorPrimitives::new(0.5, 60.0, 0.0),
            continuation: ContinuationLandscape::block(20.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.policy.validate("/policy")?;
        self.creator.validate("/creator")?;
        self.continuation.validate("/continuation")
    }

    pub fn with_b(&self, b: f64) -> Self {
        let mut s = self.clone();
        s.policy.b = b;
        s
    }

    pub fn with_q(&self, q: f64) -> Self {
        let mut s = self.clone();
        s.policy.q = q;
        s
    }

    /// Level term q + H₀ + ΔH·P.
    pub fn exposure(&self, pt: FrontierPoint) -> f64 {
        self.policy.q + self.continuation.h0 + self.continuation.dh() * pt.p
    }

    /// Planner marginal benefit q + H₀ + ΔH·P + μ·ΔH·P′.
    pub fn planner_marginal(&self, mu: f64, pt: FrontierPoint) -> f64 {
        self.exposure(pt) + mu * self.continuation.dh() * pt.dp
    }

    /// Creator marginal benefit α[q+H₀+ΔH·P] + αμΔH·P′ + B·P′.
    pub fn private_marginal(&self, mu: f64, pt: FrontierPoint) -> f64 {
        self.creator.alpha * self.planner_marginal(mu, pt) + self.policy.b * pt.dp
    }

    /// Bracket K(μ) = q + H₀ + ΔH·P + μΔH·P′ − B·P′.
    pub fn bracket(&self, mu: f64, pt: FrontierPoint) -> f64 {
        self.planner_marginal(mu, pt) - self.policy.b * pt.dp
    }

    /// Platform objective μ[q+H₀+ΔH·P] − B·P.
    pub fn welfare(&self, mu: f64, pt: FrontierPoint) -> f64 {
        mu * self.exposure(pt) - self.policy.b * pt.p
    }
}

/// Δ(μ) = c′(μ) − private marginal benefit.
pub fn gap(mu: f64, scenario: &Scenario) -> Result<f64> {
    let pt = scenario.policy.pass_model.eval(mu)?;
    Ok(scenario.creator.marginal_cost(mu) - scenario.private_marginal(mu, pt))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corner {
    Interior,
    Low,
    High,
}

/// Single-crossing check: κ must exceed αΔH(2 sup P′ + sup μ|P″|) + B sup|P″|.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regularity {
    pub satisfied: bool,
    pub kappa_min_required: f64,
    pub sup_slope: f64,
    pub sup_abs_curvature: f64,
    pub sup_mu_abs_curvature: f64,
}

/// Grid suprema of P′, |P″| and μ|P″| over the creator domain. They depend
/// only on the pass model and the domain, so sweeps can compute them once.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierSuprema {
    pub slope: f64,
    pub abs_curvature: f64,
    pub mu_abs_curvature: f64,
}

pub fn frontier_suprema(model: &PassModel, creator: &CreatorPrimitives) -> Result<FrontierSuprema> {
    if !model.supports_curvature() {
        return Err(Error::NotImplemented(format!(
            "regularity check needs curvature, unavailable for the {} variant",
            model.kind()
        )));
    }
    let (mut sp, mut sc, mut smc) = (0.0f64, 0.0f64, 0.0f64);
    for mu in grid(creator.mu_low, creator.mu_high, GRID_STEP) {
        let d = model.slope(mu)?;
        let d2 = model.curvature(mu)?.abs();
        sp = sp.max(d);
        sc = sc.max(d2);
        smc = smc.max(mu * d2);
    }
    Ok(FrontierSuprema {
        slope: sp,
        abs_curvature: sc,
        mu_abs_curvature: smc,
    })
}

pub fn check_regularity(scenario: &Scenario) -> Result<Regularity> {
    let sup = frontier_suprema(&scenario.policy.pass_model, &scenario.creator)?;
    Ok(regularity_from(scenario, &sup))
}

pub fn regularity_from(scenario: &Scenario, sup: &FrontierSuprema) -> Regularity {
    let c = &scenario.creator;
    let dh = scenario.continuation.dh();
    let rhs = c.alpha * dh * (2.0 * sup.slope + sup.mu_abs_curvature) + scenario.policy.b * sup.abs_curvature;
    Regularity {
        satisfied: c.kappa > rhs,
        kappa_min_required: rhs,
        sup_slope: sup.slope,
        sup_abs_curvature: sup.abs_curvature,
        sup_mu_abs_curvature: sup.mu_abs_curvature,
    }
}

/// Evenly spaced points from lo to hi inclusive.
pub(crate) fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).floor() as usize;
    let mut v: Vec<f64> = (0..=n).map(|i| lo + i as f64 * step).collect();
    if *v.last().unwrap() < hi {
        v.push(hi);
    }
    v
}

/// Implicit-function derivatives of μ* with respect to q, B, ΔH and α.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct Sensitivities {
    pub mu_q: f64,
    #[serde(rename = "mu_B")]
    pub mu_b: f64,
    #[serde(rename = "mu_H")]
    pub mu_h: f64,
    pub mu_alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub mu_star: f64,
    pub corner: Corner,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "Pprime")]
    pub p_prime: f64,
    /// `None` when the pass rate is saturated.
    pub leverage: Option<f64>,
    pub gap: f64,
    /// Gap curvature D(μ*).
    #[serde(rename = "D")]
    pub d: f64,
    /// True when P″ was unavailable and replaced by 0 inside D.
    pub curvature_approximated: bool,
    pub sensitivities: Sensitivities,
    pub regularity: Option<Regularity>,
    pub warnings: Vec<String>,
}

impl EquilibriumReport {
    pub fn frontier(&self) -> FrontierPoint {
        FrontierPoint {
            p: self.p,
            dp: self.p_prime,
        }
    }
}

/// D(μ) = c″ − αΔH(2P′ + μP″) − B·P″. Returns (D, P″ approximated?).
pub fn gap_curvature(scenario: &Scenario, mu: f64) -> Result<(f64, bool)> {
    let model = &scenario.policy.pass_model;
    let dp = model.slope(mu)?;
    let (d2, approx) = if model.supports_curvature() {
        (model.curvature(mu)?, false)
    } else {
        (0.0, true)
    };
    let c = &scenario.creator;
    let dh = scenario.continuation.dh();
    Ok((
        c.kappa - c.alpha * dh * (2.0 * dp + mu * d2) - scenario.policy.b * d2,
        approx,
    ))
}

/// Equilibrium quantities at a known μ* (sensitivities vanish at corners).
pub fn report_at(scenario: &Scenario, mu: f64, corner: Corner) -> Result<EquilibriumReport> {
    let pt = scenario.policy.pass_model.eval(mu)?;
    let (d, approx) = gap_curvature(scenario, mu)?;
    let c = &scenario.creator;
    let mut warnings = Vec::new();
    let sensitivities = if corner == Corner::Interior {
        if d <= 0.0 {
            warnings.push(format!("gap curvature D = {d:.4e} is not positive; sensitivities are unreliable"));
        }
        Sensitivities {
            mu_q: c.alpha / d,
            mu_b: pt.dp / d,
            mu_h: c.alpha * (pt.p + mu * pt.dp) / d,
            mu_alpha: scenario.planner_marginal(mu, pt) / d,
        }
    } else {
        Sensitivities::default()
    };
    if approx {
        warnings.push("P'' unavailable for this pass model; D uses P'' = 0".to_string());
    }
    let leverage = leverage_of(pt).ok();
    if leverage.is_none() {
        warnings.push("pass rate is saturated at mu*; leverage undefined".to_string());
    }
    Ok(EquilibriumReport {
        mu_star: mu,
        corner,
        p: pt.p,
        p_prime: pt.dp,
        leverage,
        gap: c.marginal_cost(mu) - scenario.private_marginal(mu, pt),
        d,
        curvature_approximated: approx,
        sensitivities,
        regularity: None,
        warnings,
    })
}

/// Root of an increasing-at-the-root function on [lo, hi] with f(lo) ≤ 0 ≤ f(hi):
/// bisection to a 1e-6 bracket, a few secant steps, then bisection until
/// |f| ≤ abs_tol.
pub(crate) fn bracketed_root<F>(f: &F, mut lo: f64, mut hi: f64, abs_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut f_lo = f(lo)?;
    let mut f_hi = f(hi)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    while hi - lo > BISECT_WIDTH {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm < 0.0 {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
            f_hi = fm;
        }
    }
    let (mut x0, mut f0, mut x1, mut f1) = (lo, f_lo, hi, f_hi);
    let mut best = if f_lo.abs() < f_hi.abs() { (lo, f_lo) } else { (hi, f_hi) };
    for _ in 0..SECANT_STEPS {
        if f1 == f0 {
            break;
        }
        let mut x = x1 - f1 * (x1 - x0) / (f1 - f0);
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        let fx = f(x)?;
        if fx.abs() < best.1.abs() {
            best = (x, fx);
        }
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        x0 = x1;
        f0 = f1;
        x1 = x;
        f1 = fx;
    }
    while best.1.abs() > abs_tol && hi - lo > 4.0 * f64::EPSILON * hi.abs().max(1.0) {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm.abs() < best.1.abs() {
            best = (mid, fm);
        }
        if fm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best.0)
}

/// Solves Δ(μ) = 0 on the creator domain with corner handling and the
/// non-uniqueness scan. Returns (μ, corner, warnings).
fn solve_gap<F>(
    f: F,
    creator: &CreatorPrimitives,
    regular: Option<bool>,
    tol: f64,
) -> Result<(f64, Corner, Vec<String>)>
where
    F: Fn(f64) -> Result<f64>,
{
    let (lo, hi) = (creator.mu_low, creator.mu_high);
    let mut warnings = Vec::new();
    let mut bracket = (lo, hi);
    if regular != Some(true) {
        let pts = grid(lo, hi, GRID_STEP);
        let vals = pts.iter().map(|&m| f(m)).collect::<Result<Vec<_>>>()?;
        let mut brackets = Vec::new();
        for i in 1..pts.len() {
            if (vals[i - 1] <= 0.0) != (vals[i] <= 0.0) {
                brackets.push((pts[i - 1], pts[i]));
            }
        }
        if brackets.len() > 1 {
            let detail = serde_json::json!({
                "brackets": brackets.iter().map(|(a, b)| [*a, *b]).collect::<Vec<_>>()
            });
            return Err(Error::domain_with(
                ErrorCode::AmbiguousEquilibrium,
                format!("gap changes sign {} times; best response is not unique", brackets.len()),
                detail,
            ));
        }
        if regular == Some(false) {
            warnings.push("regularity condition fails; returned the unique grid crossing".to_string());
        }
        if let Some(&b) = brackets.first() {
            if vals[0] <= 0.0 {
                bracket = b;
            }
        }
    }
    let f_lo = f(lo)?;
    if f_lo > 0.0 {
        return Ok((lo, Corner::Low, warnings));
    }
    if f(hi)? < 0.0 {
        return Ok((hi, Corner::High, warnings));
    }
    let mu = bracketed_root(&f, bracket.0, bracket.1, tol * creator.kappa)?;
    Ok((mu, Corner::Interior, warnings))
}

/// Creator best response μ* and its report.
pub fn solve_best_response(scenario: &Scenario, tol: f64) -> Result<EquilibriumReport> {
    let sup = frontier_suprema(&scenario.policy.pass_model, &scenario.creator).ok();
    solve_best_response_with(scenario, tol, sup.as_ref())
}

/// As [`solve_best_response`] with precomputed suprema (`None` when the model
/// has no curvature).
pub fn solve_best_response_with(
    scenario: &Scenario,
    tol: f64,
    sup: Option<&FrontierSuprema>,
) -> Result<EquilibriumReport> {
    let regularity = sup.map(|s| regularity_from(scenario, s));
    let (mu, corner, mut warnings) = solve_gap(
        |m| gap(m, scenario),
        &scenario.creator,
        regularity.map(|r| r.satisfied),
        tol,
    )?;
    let mut report = report_at(scenario, mu, corner)?;
    warnings.append(&mut report.warnings);
    report.warnings = warnings;
    report.regularity = regularity;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstBest {
    pub mu_fb: f64,
    pub corner: Corner,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "Pprime")]
    pub p_prime: f64,
    pub warnings: Vec<String>,
}

/// Planner optimum: root of q + H₀ + ΔH·P + μΔH·P′ − c′(μ). α and B play no role.
pub fn solve_first_best(scenario: &Scenario, tol: f64) -> Result<FirstBest> {
    let mut planner = scenario.clone();
    planner.creator.alpha = 1.0;
    planner.policy.b = 0.0;
    let regularity = check_regularity(&planner).ok();
    let (mu, corner, warnings) = solve_gap(
        |m| gap(m, &planner),
        &planner.creator,
        regularity.map(|r| r.satisfied),
        tol,
    )?;
    let pt = scenario.policy.pass_model.eval(mu)?;
    Ok(FirstBest {
        mu_fb: mu,
        corner,
        p: pt.p,
        p_prime: pt.dp,
        warnings,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BountyReport {
    #[serde(rename = "b_star")]
    pub b_star: f64,
    pub mu_fb: f64,
    pub expected_payout: f64,
    /// Best response re-solved with B = B*.
    pub mu_star_at_b_star: f64,
    pub verified: bool,
}

/// B* = [q+H₀+ΔH·P(μ^FB)+μ^FB·ΔH·P′(μ^FB)]·(1−α)/P′(μ^FB), closed-loop verified.
pub fn implement_bounty(scenario: &Scenario, mu_fb: f64, tol: f64) -> Result<BountyReport> {
    let pt = scenario.policy.pass_model.eval(mu_fb)?;
    if pt.dp <= FLAT_SLOPE_TOL {
        return Err(Error::domain(
            ErrorCode::FlatFrontier,
            format!(
                "slope {:.3e} at the first best is flat; no finite bounty can implement it, reposition the bar",
                pt.dp
            ),
        ));
    }
    let b_star = scenario.planner_marginal(mu_fb, pt) * (1.0 - scenario.creator.alpha) / pt.dp;
    let check = solve_best_response(&scenario.with_b(b_star), tol)?;
    Ok(BountyReport {
        b_star,
        mu_fb,
        expected_payout: expected_payout(b_star, pt.p),
        mu_star_at_b_star: check.mu_star,
        verified: (check.mu_star - mu_fb).abs() <= (10.0 * tol).max(1e-8),
    })
}

/// Expected bounty spend B·P.
pub fn expected_payout(b: f64, p: f64) -> f64 {
    b * p
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetingComparison {
    pub leverage: f64,
    pub cost_bounty: f64,
    pub cost_flat: f64,
    pub hit_dominates: bool,
}

/// Cost of raising the private marginal by ε through a hit-based bounty (ε/Λ)
/// versus a flat testing subsidy (ε·μ*).
pub fn targeting_compare(eps: f64, scenario: &Scenario, mu_star: f64) -> Result<TargetingComparison> {
    if !(scenario.policy.q > 0.0) {
        return Err(Error::domain(ErrorCode::InvalidInput, "targeting comparison needs q > 0"));
    }
    let pt = scenario.policy.pass_model.eval(mu_star)?;
    if pt.dp <= 0.0 {
        return Err(Error::domain(ErrorCode::FlatFrontier, "slope is zero at mu*"));
    }
    let lev = leverage_of(pt)?;
    Ok(targeting_from_leverage(eps, lev, mu_star))
}

pub fn targeting_from_leverage(eps: f64, leverage: f64, mu_star: f64) -> TargetingComparison {
    TargetingComparison {
        leverage,
        cost_bounty: eps / leverage,
        cost_flat: eps * mu_star,
        hit_dominates: leverage >= 1.0 / mu_star,
    }
}

/// One row of the marginal-benefit crossing data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalRow {
    pub mu: f64,
    pub marginal_cost: f64,
    pub private_marginal: f64,
    pub private_marginal_at_b_star: Option<f64>,
    pub planner_marginal: f64,
}

/// c′, private and planner marginal benefits over a grid of μ.
pub fn marginal_curves(scenario: &Scenario, mus: &[f64], b_star: Option<f64>) -> Result<Vec<MarginalRow>> {
    mus.iter()
        .map(|&mu| {
            let pt = scenario.policy.pass_model.eval(mu)?;
            Ok(MarginalRow {
                mu,
                marginal_cost: scenario.creator.marginal_cost(mu),
                private_marginal: scenario.private_marginal(mu, pt),
                private_marginal_at_b_star: b_star.map(|b| scenario.with_b(b).private_marginal(mu, pt)),
                planner_marginal: scenario.planner_marginal(mu, pt),
            })
        })
        .collect()
}
