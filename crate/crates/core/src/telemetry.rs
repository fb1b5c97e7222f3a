//! Synthetic telemetry lab: cohort simulation, monotone pass-curve fitting,
//! the influence-weight slope estimator, bootstrap plug-in bounties, bar
//! stress tests and the leverage-corridor advisor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{solve_best_response, solve_first_best, Scenario, DEFAULT_TOL};
use crate::error::{Error, ErrorCode, Result};
use crate::pass_frontier::{leverage_of, PassModel};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QualityPrior {
    Beta { a: f64, b: f64 },
    Uniform { lo: f64, hi: f64 },
    Point { mu: f64 },
}

impl QualityPrior {
    fn validate(&self, ptr: &str) -> Result<()> {
        let ok = match *self {
            QualityPrior::Beta { a, b } => a > 0.0 && b > 0.0,
            QualityPrior::Uniform { lo, hi } => lo > 0.0 && lo < hi && hi < 1.0,
            QualityPrior::Point { mu } => mu > 0.0 && mu < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::input(format!("{ptr}/prior"), "invalid quality prior"))
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let m = match *self {
            QualityPrior::Beta { a, b } => Beta::new(a, b).map(|d| d.sample(rng)).unwrap_or(a / (a + b)),
            QualityPrior::Uniform { lo, hi } => rng.random_range(lo..hi),
            QualityPrior::Point { mu } => mu,
        };
        m.clamp(1e-9, 1.0 - 1e-9)
    }
}

/// proxy = a·μ + b + σ·N(0,1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProxyModel {
    #[serde(default = "unit")]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub sigma: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for ProxyModel {
    fn default() -> Self {
        ProxyModel { a: 1.0, b: 0.0, sigma: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSpec {
    pub n: usize,
    pub prior: QualityPrior,
    #[serde(default)]
    pub proxy: ProxyModel,
    /// Pass model used to draw outcomes; the window may differ from the
    /// scenario's when the cohort section overrides it.
    #[serde(default)]
    pub pass_model: Option<PassModel>,
    #[serde(default)]
    pub seed: u64,
}

impl CohortSpec {
    pub fn validate(&self, ptr: &str) -> Result<()> {
        if self.n == 0 {
            return Err(Error::input(format!("{ptr}/n"), "n must be at least 1"));
        }
        self.prior.validate(ptr)?;
        if !(self.proxy.sigma >= 0.0) {
            return Err(Error::input(format!("{ptr}/proxy/sigma"), "sigma must be nonnegative"));
        }
        if let Some(m) = &self.pass_model {
            m.validate(&format!("{ptr}/pass_model"))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub id: usize,
    /// True quality; kept for oracle checks, never used by the estimators.
    pub mu_hidden: f64,
    pub proxy: f64,
    /// Per-slot outcomes Y_t.
    pub outcomes: Vec<u8>,
    #[serde(rename = "S")]
    pub successes: u32,
    pub pass: bool,
}

/// Draws n entrants, their proxies and per-slot outcomes. Entrant i uses RNG
/// stream i of the seed, so records do not depend on thread scheduling.
pub fn simulate_cohort(spec: &CohortSpec, model: &PassModel) -> Result<Vec<TelemetryRecord>> {
    spec.validate("/cohort")?;
    model.validate("/pass_model")?;
    let s = model.threshold();
    (0..spec.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64);
            let mu = spec.prior.sample(&mut rng);
            let noise: f64 = if spec.proxy.sigma > 0.0 {
                rng.sample(StandardNormal)
            } else {
                0.0
            };
            let proxy = spec.proxy.a * mu + spec.proxy.b + spec.proxy.sigma * noise;
            let probs = model.trial_probabilities(mu, &mut rng)?;
            let outcomes: Vec<u8> = probs.iter().map(|&p| u8::from(rng.random::<f64>() < p)).collect();
            let successes = outcomes.iter().map(|&y| y as u32).sum();
            Ok(TelemetryRecord {
                id: i,
                mu_hidden: mu,
                proxy,
                outcomes,
                successes,
                pass: successes >= s,
            })
        })
        .collect()
}

fn default_grid_points() -> usize {
    101
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Kernel bandwidth; default 1.06·sd(proxy)·n^{−1/5}.
    #[serde(default)]
    pub bandwidth: Option<f64>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            bandwidth: None,
            grid_points: default_grid_points(),
        }
    }
}

/// Monotone pass curve: a pool-adjacent-violators step function smoothed by
/// a triangular kernel. Smoothing a nondecreasing step function with a
/// positive kernel keeps it nondecreasing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassCurveFit {
    pub grid: Vec<f64>,
    pub fitted: Vec<f64>,
    pub median_proxy: f64,
    pub p_at_median: f64,
    pub slope_at_median: f64,
    /// Slope per local standard deviation of the proxy (±0.5 SD window).
    pub slope_local_z: f64,
    pub bandwidth: f64,
    /// Number of pooled PAV blocks.
    pub bins: usize,
    pub n: usize,
    pub unreliable: bool,
    pub warnings: Vec<String>,
    #[serde(skip)]
    base: f64,
    /// (location, jump size) of each PAV step.
    #[serde(skip)]
    jumps: Vec<(f64, f64)>,
}

fn tri_cdf(u: f64) -> f64 {
    if u <= -1.0 {
        0.0
    } else if u < 0.0 {
        0.5 * (1.0 + u) * (1.0 + u)
    } else if u < 1.0 {
        1.0 - 0.5 * (1.0 - u) * (1.0 - u)
    } else {
        1.0
    }
}

impl PassCurveFit {
    pub fn eval(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let v = self.base
            + self
                .jumps
                .iter()
                .map(|&(c, j)| {
                    if h > 0.0 {
                        j * tri_cdf((x - c) / h)
                    } else if x >= c {
                        j
                    } else {
                        0.0
                    }
                })
                .sum::<f64>();
        v.clamp(0.0, 1.0)
    }

    /// Central difference with step h/4 (zero without smoothing).
    pub fn slope(&self, x: f64) -> f64 {
        let d = 0.25 * self.bandwidth;
        if d <= 0.0 {
            return 0.0;
        }
        (self.eval(x + d) - self.eval(x - d)) / (2.0 * d)
    }
}

/// Pool-adjacent-violators on (x, y) sorted by x, with ties pooled first.
/// Returns blocks as (first x, last x, mean, weight).
pub fn pav(points: &[(f64, f64)]) -> Vec<(f64, f64, f64, f64)> {
    let mut blocks: Vec<(f64, f64, f64, f64)> = Vec::new();
    for &(x, y) in points {
        match blocks.last_mut() {
            Some(last) if last.1 == x => {
                last.2 = (last.2 * last.3 + y) / (last.3 + 1.0);
                last.3 += 1.0;
            }
            _ => blocks.push((x, x, y, 1.0)),
        }
        while blocks.len() > 1 {
            let n = blocks.len();
            if blocks[n - 2].2 <= blocks[n - 1].2 {
                break;
            }
            let b = blocks.pop().unwrap();
            let a = blocks.last_mut().unwrap();
            a.2 = (a.2 * a.3 + b.2 * b.3) / (a.3 + b.3);
            a.3 += b.3;
            a.1 = b.1;
        }
    }
    blocks
}

fn sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn median_sorted(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

pub fn fit_pass_curve(records: &[TelemetryRecord], cfg: &FitConfig) -> Result<PassCurveFit> {
    if records.is_empty() {
        return Err(Error::input("/records", "no records"));
    }
    let n_pass = records.iter().filter(|r| r.pass).count();
    if n_pass == 0 || n_pass == records.len() {
        return Err(Error::domain(
            ErrorCode::DegeneratePassRate,
            "degenerate cohort: every entrant passed or every entrant failed",
        ));
    }
    let mut warnings = Vec::new();
    if records.len() < 50 {
        warnings.push(format!("only {} records; the fit is noisy", records.len()));
    }
    let mut pts: Vec<(f64, f64)> = records.iter().map(|r| (r.proxy, if r.pass { 1.0 } else { 0.0 })).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let spread = sd(&xs);
    let n = records.len();
    let bandwidth = cfg
        .bandwidth
        .unwrap_or(1.06 * spread * (n as f64).powf(-0.2));
    let unreliable = xs[n - 1] == xs[0] || spread <= 0.0 || bandwidth <= 0.0;
    if unreliable {
        warnings.push("proxy has no spread; slope estimate is unreliable".into());
    }

    let blocks = pav(&pts);
    let base = blocks[0].2;
    let jumps: Vec<(f64, f64)> = blocks
        .windows(2)
        .map(|w| (0.5 * (w[0].1 + w[1].0), w[1].2 - w[0].2))
        .filter(|&(_, j)| j > 0.0)
        .collect();

    let median_proxy = median_sorted(&xs);
    let (lo, hi) = (xs[0], xs[n - 1]);
    let gp = cfg.grid_points.max(2);
    let grid: Vec<f64> = if hi > lo {
        (0..gp).map(|i| lo + (hi - lo) * i as f64 / (gp - 1) as f64).collect()
    } else {
        vec![lo]
    };
    let mut fit = PassCurveFit {
        grid,
        fitted: vec![],
        median_proxy,
        p_at_median: 0.0,
        slope_at_median: 0.0,
        slope_local_z: 0.0,
        bandwidth: if unreliable { 0.0 } else { bandwidth },
        bins: blocks.len(),
        n,
        unreliable,
        warnings,
        base,
        jumps,
    };
    fit.fitted = fit.grid.iter().map(|&x| fit.eval(x)).collect();
    fit.p_at_median = fit.eval(median_proxy);
    fit.slope_at_median = fit.slope(median_proxy);
    let local: Vec<f64> = xs
        .iter()
        .copied()
        .filter(|&x| (x - median_proxy).abs() <= 0.5 * spread)
        .collect();
    fit.slope_local_z = fit.slope_at_median * sd(&local);
    Ok(fit)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfluenceEstimate {
    pub estimate: f64,
    pub se: f64,
    pub n: usize,
}

/// P̂′_IF = Σ_t dp_t · freq(S_{−t} = s−1), with a per-record standard error.
pub fn influence_slope(records: &[TelemetryRecord], dp: &[f64], s: u32) -> Result<InfluenceEstimate> {
    if records.is_empty() {
        return Err(Error::input("/records", "no records"));
    }
    if s == 0 {
        return Ok(InfluenceEstimate { estimate: 0.0, se: 0.0, n: records.len() });
    }
    let per: Vec<f64> = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if r.outcomes.len() != dp.len() {
                return Err(Error::input(
                    format!("/records/{i}/outcomes"),
                    "insufficient telemetry: per-slot outcomes missing or of the wrong length",
                ));
            }
            Ok(r
                .outcomes
                .iter()
                .zip(dp)
                .filter(|(&y, _)| r.successes - y as u32 == s - 1)
                .map(|(_, &d)| d)
                .sum())
        })
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    let mean = per.iter().sum::<f64>() / n;
    Ok(InfluenceEstimate {
        estimate: mean,
        se: sd(&per) / n.sqrt(),
        n: per.len(),
    })
}

/// B̂* = [q + H₀ + ΔH·P̂ + μ̂^FB·ΔH·P̂′](1−α)/P̂′.
pub fn plugin_bounty(skeleton: &Scenario, p_hat: f64, dp_hat: f64, mu_fb: f64) -> f64 {
    let c = &skeleton.continuation;
    let num = skeleton.policy.q + c.h0 + c.dh() * p_hat + mu_fb * c.dh() * dp_hat;
    num * (1.0 - skeleton.creator.alpha) / dp_hat
}

fn default_boot() -> usize {
    500
}

fn default_attenuation() -> f64 {
    0.8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    #[serde(default = "default_boot")]
    pub n_boot: usize,
    #[serde(default)]
    pub seed: u64,
    /// First-best quality; taken from the skeleton scenario when absent.
    #[serde(default)]
    pub mu_fb: Option<f64>,
    /// Slope attenuation factor for the conservative bounty readout.
    #[serde(default = "default_attenuation")]
    pub attenuation: f64,
    #[serde(default)]
    pub fit: FitConfig,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            n_boot: default_boot(),
            seed: 0,
            mu_fb: None,
            attenuation: default_attenuation(),
            fit: FitConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PluginPoint {
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "Pprime")]
    pub p_prime: f64,
    pub b_star: f64,
    pub expected_spend: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub point: PluginPoint,
    /// B̂* with the slope in the denominator scaled by the attenuation factor.
    pub attenuated_b_star: f64,
    pub mu_fb: f64,
    pub ci_p: Interval,
    pub ci_p_prime: Interval,
    pub ci_b_star: Interval,
    pub ci_expected_spend: Interval,
    pub n_boot: usize,
    pub n_skipped: usize,
}

fn plugin_point(records: &[TelemetryRecord], skeleton: &Scenario, mu_fb: f64, fit: &FitConfig) -> Result<PluginPoint> {
    let f = fit_pass_curve(records, fit)?;
    if !(f.slope_at_median > 0.0) {
        return Err(Error::domain(ErrorCode::FlatFrontier, "fitted slope is zero at the median"));
    }
    let b = plugin_bounty(skeleton, f.p_at_median, f.slope_at_median, mu_fb);
    Ok(PluginPoint {
        p: f.p_at_median,
        p_prime: f.slope_at_median,
        b_star: b,
        expected_spend: b * f.p_at_median,
    })
}

/// Percentile (2.5%, 97.5%) by linear interpolation between order statistics.
pub fn percentile_interval(mut xs: Vec<f64>) -> Interval {
    if xs.is_empty() {
        return Interval { lo: f64::NAN, hi: f64::NAN };
    }
    xs.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (xs.len() - 1) as f64;
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        if i + 1 < xs.len() {
            xs[i] + frac * (xs[i + 1] - xs[i])
        } else {
            xs[i]
        }
    };
    Interval { lo: q(0.025), hi: q(0.975) }
}

/// Nonparametric bootstrap over entrants of (P̂, P̂′, B̂*, expected spend).
pub fn bootstrap_plugin(records: &[TelemetryRecord], skeleton: &Scenario, cfg: &BootstrapConfig) -> Result<BootstrapReport> {
    if cfg.n_boot == 0 {
        return Err(Error::input("/bootstrap/n_boot", "n_boot must be at least 1"));
    }
    if !(cfg.attenuation > 0.0) {
        return Err(Error::input("/bootstrap/attenuation", "attenuation must be positive"));
    }
    let mu_fb = match cfg.mu_fb {
        Some(m) => m,
        None => solve_first_best(skeleton, DEFAULT_TOL)?.mu_fb,
    };
    let point = plugin_point(records, skeleton, mu_fb, &cfg.fit)?;
    let n = records.len();
    let reps: Vec<Option<PluginPoint>> = (0..cfg.n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(b as u64);
            let sample: Vec<TelemetryRecord> = (0..n).map(|_| records[rng.random_range(0..n)].clone()).collect();
            plugin_point(&sample, skeleton, mu_fb, &cfg.fit).ok()
        })
        .collect();
    let ok: Vec<PluginPoint> = reps.iter().flatten().copied().collect();
    let pick = |f: fn(&PluginPoint) -> f64| percentile_interval(ok.iter().map(f).collect());
    Ok(BootstrapReport {
        point,
        attenuated_b_star: point.b_star / cfg.attenuation,
        mu_fb,
        ci_p: pick(|p| p.p),
        ci_p_prime: pick(|p| p.p_prime),
        ci_b_star: pick(|p| p.b_star),
        ci_expected_spend: pick(|p| p.expected_spend),
        n_boot: cfg.n_boot,
        n_skipped: cfg.n_boot - ok.len(),
    })
}

/// Neighbor policy (q + dq, s + ds).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StressDelta {
    #[serde(default)]
    pub dq: i32,
    #[serde(default)]
    pub ds: i32,
}

pub fn default_deltas() -> Vec<StressDelta> {
    vec![
        StressDelta { dq: 0, ds: 0 },
        StressDelta { dq: 0, ds: 1 },
        StressDelta { dq: 0, ds: -1 },
        StressDelta { dq: 1, ds: 0 },
        StressDelta { dq: -1, ds: 0 },
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StressRow {
    pub dq: i32,
    pub ds: i32,
    pub q: i64,
    pub s: i64,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "Pprime")]
    pub p_prime: f64,
    /// `None` when the pass rate is saturated.
    pub leverage: Option<f64>,
    pub valid: bool,
    pub note: Option<String>,
}

pub const STRESS_COLUMNS: [&str; 8] = ["dq", "ds", "q", "s", "P", "Pprime", "leverage", "valid"];

fn invalid_row(d: StressDelta, q: i64, s: i64, note: String) -> StressRow {
    StressRow {
        dq: d.dq,
        ds: d.ds,
        q,
        s,
        p: f64::NAN,
        p_prime: f64::NAN,
        leverage: None,
        valid: false,
        note: Some(note),
    }
}

/// Frontier quantities at μ under each neighbor (q, s), computed from the model.
pub fn stress_bar(model: &PassModel, mu: f64, deltas: &[StressDelta]) -> Result<Vec<StressRow>> {
    let (q0, s0) = (model.trials() as i64, model.threshold() as i64);
    deltas
        .iter()
        .map(|&d| {
            let (q, s) = (q0 + d.dq as i64, s0 + d.ds as i64);
            if q < 1 || s < 1 || s > q {
                return Ok(invalid_row(d, q, s, "threshold outside 1..q".into()));
            }
            let m = match model.rebar(q as u32, s as u32) {
                Ok(m) => m,
                Err(e) => return Ok(invalid_row(d, q, s, e.to_string())),
            };
            let pt = m.eval(mu)?;
            Ok(StressRow {
                dq: d.dq,
                ds: d.ds,
                q,
                s,
                p: pt.p,
                p_prime: pt.dp,
                leverage: leverage_of(pt).ok(),
                valid: true,
                note: None,
            })
        })
        .collect()
}

/// Telemetry-only stress: re-derive pass flags for s + ds from the first
/// q + dq slot outcomes, refit, and read P̂ and P̂′ at the median proxy.
/// Longer windows cannot be recovered from logs, so dq > 0 rows are invalid.
pub fn stress_from_records(
    records: &[TelemetryRecord],
    s: u32,
    deltas: &[StressDelta],
    fit: &FitConfig,
) -> Result<Vec<StressRow>> {
    let q0 = records.first().map(|r| r.outcomes.len()).unwrap_or(0) as i64;
    if q0 == 0 {
        return Err(Error::input("/records", "records carry no slot outcomes"));
    }
    deltas
        .iter()
        .map(|&d| {
            let (q, s) = (q0 + d.dq as i64, s as i64 + d.ds as i64);
            if d.dq > 0 {
                return Ok(invalid_row(d, q, s, "longer windows need a model".into()));
            }
            if q < 1 || s < 1 || s > q {
                return Ok(invalid_row(d, q, s, "threshold outside 1..q".into()));
            }
            let re: Vec<TelemetryRecord> = records
                .iter()
                .map(|r| {
                    let outcomes: Vec<u8> = r.outcomes[..q as usize].to_vec();
                    let succ: u32 = outcomes.iter().map(|&y| y as u32).sum();
                    TelemetryRecord {
                        outcomes,
                        successes: succ,
                        pass: succ as i64 >= s,
                        ..r.clone()
                    }
                })
                .collect();
            match fit_pass_curve(&re, fit) {
                Ok(f) => Ok(StressRow {
                    dq: d.dq,
                    ds: d.ds,
                    q,
                    s,
                    p: f.p_at_median,
                    p_prime: f.slope_at_median,
                    leverage: (f.p_at_median > 0.0).then(|| f.slope_at_median / f.p_at_median),
                    valid: true,
                    note: None,
                }),
                Err(e) => Ok(invalid_row(d, q, s, e.to_string())),
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarAdvice {
    Hold,
    RaiseS,
    LowerS,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corridor {
    pub lo: f64,
    pub hi: f64,
    /// Minimum acceptable leverage; defaults to 1/μ* when μ* is known.
    #[serde(default)]
    pub leverage_floor: Option<f64>,
}

impl Default for Corridor {
    fn default() -> Self {
        Corridor { lo: 0.25, hi: 0.70, leverage_floor: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorridorAdvice {
    pub action: BarAdvice,
    /// Move in s, never more than one unit.
    pub delta_s: i32,
    pub reason: String,
}

pub fn leverage_corridor_advice(leverage: f64, pass_rate: f64, corridor: &Corridor) -> Result<CorridorAdvice> {
    if !(corridor.lo > 0.0 && corridor.lo < corridor.hi && corridor.hi < 1.0) {
        return Err(Error::input("/corridor", "need 0 < lo < hi < 1"));
    }
    let advice = |action, delta_s, reason: String| Ok(CorridorAdvice { action, delta_s, reason });
    if pass_rate > corridor.hi {
        return advice(BarAdvice::RaiseS, 1, format!("pass rate {pass_rate:.3} above {:.2}", corridor.hi));
    }
    if pass_rate < corridor.lo {
        return advice(BarAdvice::LowerS, -1, format!("pass rate {pass_rate:.3} below {:.2}", corridor.lo));
    }
    if let Some(floor) = corridor.leverage_floor {
        if leverage < floor {
            let mid = 0.5 * (corridor.lo + corridor.hi);
            return if pass_rate >= mid {
                advice(BarAdvice::RaiseS, 1, format!("leverage {leverage:.3} below floor {floor:.3} with a high pass rate"))
            } else {
                advice(BarAdvice::LowerS, -1, format!("leverage {leverage:.3} below floor {floor:.3} with a low pass rate"))
            };
        }
    }
    advice(BarAdvice::Hold, 0, "inside the corridor".into())
}

/// Corridor with the floor set to 1/μ* of the scenario's equilibrium.
pub fn corridor_for(scenario: &Scenario, lo: f64, hi: f64) -> Result<Corridor> {
    let eq = solve_best_response(scenario, DEFAULT_TOL)?;
    Ok(Corridor { lo, hi, leverage_floor: Some(1.0 / eq.mu_star) })
}
