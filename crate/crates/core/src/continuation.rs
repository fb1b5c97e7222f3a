//! Continuation values (H₀, H₁, ΔH) after the testing window.
//!
//! Closed forms for the two-band and relaxation benchmarks, a UCB surrogate
//! built on the relaxation form, a Monte-Carlo Thompson-sampling replay, and
//! the multi-winner threshold calibration.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, ErrorCode, Result};
use crate::pass_frontier::{binomial_tail_beta, BinomialBar};
use crate::special::logistic;

const Z95: f64 = 1.96;
const CHUNK: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    McThompson,
    TwoBand,
    Relaxation,
    UcbSurrogate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationEstimate {
    pub h0: f64,
    pub h1: f64,
    pub dh: f64,
    /// 95% half-widths.
    pub ci_h0: f64,
    pub ci_h1: f64,
    pub ci_dh: f64,
    pub method: EstimateMethod,
    pub n_reps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replay: Option<ReplayDiagnostics>,
}

/// Extra replay output used by the iterated-expectations check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayDiagnostics {
    pub n_pass: usize,
    pub n_fail: usize,
    pub pass_share: f64,
    pub mean_pulls: f64,
    pub se_mean_pulls: f64,
    pub se_h0: f64,
    pub se_h1: f64,
    pub horizon: u32,
    pub truncated: bool,
}

fn closed_form(h0: f64, h1: f64, method: EstimateMethod) -> ContinuationEstimate {
    ContinuationEstimate {
        h0,
        h1,
        dh: h1 - h0,
        ci_h0: 0.0,
        ci_h1: 0.0,
        ci_dh: 0.0,
        method,
        n_reps: 0,
        seed: None,
        replay: None,
    }
}

/// H₁ = π_H/(1−γ), H₀ = π_L/(1−γ).
pub fn two_band_h(pi_h: f64, pi_l: f64, gamma: f64) -> Result<ContinuationEstimate> {
    for (name, v) in [("pi_h", pi_h), ("pi_l", pi_l)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::input(format!("/{name}"), "inclusion rate must lie in (0,1)"));
        }
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::input("/gamma", "gamma must lie in (0,1)"));
    }
    if pi_l > pi_h {
        return Err(Error::domain(ErrorCode::InvalidInput, "invalid bands: pi_l exceeds pi_h"));
    }
    Ok(closed_form(pi_l / (1.0 - gamma), pi_h / (1.0 - gamma), EstimateMethod::TwoBand))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxationParams {
    pub pi0_pass: f64,
    pub pi0_fail: f64,
    pub pi_inf: f64,
    pub lambda: f64,
    #[serde(default = "one")]
    pub omega: f64,
    pub gamma: f64,
}

fn one() -> f64 {
    1.0
}

impl RelaxationParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("pi0_pass", self.pi0_pass), ("pi0_fail", self.pi0_fail), ("pi_inf", self.pi_inf)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::input(format!("/{name}"), "probability must lie in (0,1)"));
            }
        }
        if !(self.lambda > 0.0) {
            return Err(Error::input("/lambda", "lambda must be positive"));
        }
        if !(self.omega > 0.0) {
            return Err(Error::input("/omega", "omega must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::input("/gamma", "gamma must lie in (0,1)"));
        }
        Ok(())
    }

    /// ω[π_∞/(1−γ) − (π_∞−π₀)/(1−γe^{−λ})].
    pub fn h_at(&self, pi0: f64) -> f64 {
        let g = self.gamma;
        self.omega * (self.pi_inf / (1.0 - g) - (self.pi_inf - pi0) / (1.0 - g * (-self.lambda).exp()))
    }
}

pub fn relaxation_h(params: &RelaxationParams) -> Result<ContinuationEstimate> {
    params.validate()?;
    let h1 = params.h_at(params.pi0_pass);
    let h0 = params.h_at(params.pi0_fail);
    let mut est = closed_form(h0, h1, EstimateMethod::Relaxation);
    // the spread in closed form, rather than the difference of two large numbers
    est.dh = params.omega * (params.pi0_pass - params.pi0_fail) / (1.0 - params.gamma * (-params.lambda).exp());
    Ok(est)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UcbParams {
    pub theta_pass: f64,
    pub theta_fail: f64,
    pub theta_bar: f64,
    pub kappa: f64,
    pub pi_inf: f64,
    pub lambda: f64,
    #[serde(default = "one")]
    pub omega: f64,
    pub gamma: f64,
}

/// Initial inclusion π₀ = σ(κ(θ − θ̄)) for pass and fail, then the relaxation form.
pub fn ucb_surrogate(p: &UcbParams) -> Result<ContinuationEstimate> {
    if !(p.kappa > 0.0) {
        return Err(Error::input("/kappa", "kappa must be positive"));
    }
    let relax = RelaxationParams {
        pi0_pass: logistic(p.kappa * (p.theta_pass - p.theta_bar)),
        pi0_fail: logistic(p.kappa * (p.theta_fail - p.theta_bar)),
        pi_inf: p.pi_inf,
        lambda: p.lambda,
        omega: p.omega,
        gamma: p.gamma,
    };
    let mut est = relaxation_h(&relax)?;
    est.method = EstimateMethod::UcbSurrogate;
    Ok(est)
}

/// A rival arm: a fixed quality, or a frozen Beta posterior sampled each period.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Competitor {
    Fixed(f64),
    Posterior { a: f64, b: f64 },
}

/// Posterior-independent inclusion: shown with probability π_H after pass, π_L after fail.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedBands {
    pub pi_h: f64,
    pub pi_l: f64,
}

fn default_prior() -> f64 {
    1.0
}

fn default_seats() -> u32 {
    1
}

fn default_reps() -> usize {
    10_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    #[serde(default = "default_prior")]
    pub a0: f64,
    #[serde(default = "default_prior")]
    pub b0: f64,
    #[serde(default)]
    pub competitors: Vec<Competitor>,
    #[serde(default = "default_seats")]
    pub seats: u32,
    /// Position weights w_1..w_K; all ones when absent.
    #[serde(default)]
    pub position_weights: Option<Vec<f64>>,
    /// Post-test periods T; defaults to the smallest T with γ^T < 1e-4.
    #[serde(default)]
    pub horizon: Option<u32>,
    pub gamma: f64,
    #[serde(default = "default_reps")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub fixed_bands: Option<FixedBands>,
    #[serde(default)]
    pub wall_clock_ms: Option<u64>,
}

impl EngineConfig {
    /// One seat, 20 fixed competitors at 0.15, 0.16, ..., 0.34, γ = 0.9.
    pub fn thompson_20() -> Self {
        EngineConfig {
            a0: 1.0,
            b0: 1.0,
            competitors: (0..20).map(|i| Competitor::Fixed(0.15 + 0.01 * i as f64)).collect(),
            seats: 1,
            position_weights: None,
            horizon: None,
            gamma: 0.9,
            replications: 10_000,
            seed: 7,
            fixed_bands: None,
            wall_clock_ms: None,
        }
    }

    pub fn validate(&self, ptr: &str) -> Result<()> {
        if !(self.a0 > 0.0 && self.b0 > 0.0) {
            return Err(Error::input(format!("{ptr}/a0"), "prior parameters must be positive"));
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(Error::input(format!("{ptr}/gamma"), "gamma must lie in [0,1)"));
        }
        if self.seats == 0 {
            return Err(Error::input(format!("{ptr}/seats"), "seats must be at least 1"));
        }
        if self.replications == 0 {
            return Err(Error::input(format!("{ptr}/replications"), "replications must be at least 1"));
        }
        if self.horizon == Some(0) {
            return Err(Error::input(format!("{ptr}/horizon"), "horizon must be at least 1"));
        }
        if let Some(w) = &self.position_weights {
            if w.len() != self.seats as usize || w.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::input(
                    format!("{ptr}/position_weights"),
                    "need one positive weight per seat",
                ));
            }
        }
        for (i, c) in self.competitors.iter().enumerate() {
            let ok = match *c {
                Competitor::Fixed(m) => (0.0..=1.0).contains(&m),
                Competitor::Posterior { a, b } => a > 0.0 && b > 0.0,
            };
            if !ok {
                return Err(Error::input(format!("{ptr}/competitors/{i}"), "invalid competitor"));
            }
        }
        if let Some(fb) = self.fixed_bands {
            if !(0.0..=1.0).contains(&fb.pi_h) || !(0.0..=1.0).contains(&fb.pi_l) {
                return Err(Error::input(format!("{ptr}/fixed_bands"), "bands must lie in [0,1]"));
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> u32 {
        self.horizon.unwrap_or_else(|| default_horizon(self.gamma))
    }

    fn weight(&self, rank: usize) -> f64 {
        match &self.position_weights {
            Some(w) => w[rank],
            None => 1.0,
        }
    }
}

/// Smallest T with γ^T < 1e-4 (1 when γ = 0).
pub fn default_horizon(gamma: f64) -> u32 {
    if gamma <= 0.0 {
        1
    } else {
        ((1e-4f64).ln() / gamma.ln()).ceil().max(1.0) as u32
    }
}

struct Rep {
    passed: bool,
    pulls: f64,
}

fn replicate(mu: f64, q: u32, s: u32, cfg: &EngineConfig, fixed_sorted: &[f64], rng: &mut ChaCha8Rng) -> Rep {
    let succ = Binomial::new(q as u64, mu).map(|b| b.sample(rng) as u32).unwrap_or(0);
    let passed = succ >= s;
    let (mut a, mut b) = (cfg.a0 + succ as f64, cfg.b0 + (q - succ) as f64);
    let horizon = cfg.horizon();
    let mut disc = cfg.gamma.powi(q as i32);
    let mut pulls = 0.0;
    let rivals: Vec<(f64, f64)> = cfg
        .competitors
        .iter()
        .filter_map(|c| match *c {
            Competitor::Posterior { a, b } => Some((a, b)),
            Competitor::Fixed(_) => None,
        })
        .collect();
    for _ in 0..horizon {
        let credit = if let Some(fb) = cfg.fixed_bands {
            let pi = if passed { fb.pi_h } else { fb.pi_l };
            if rng.random::<f64>() < pi {
                1.0
            } else {
                0.0
            }
        } else {
            let draw = Beta::new(a, b).map(|d| d.sample(rng)).unwrap_or(a / (a + b));
            // fixed rivals are sorted ascending; count those strictly above the draw
            let mut above = fixed_sorted.len() - fixed_sorted.partition_point(|&x| x <= draw);
            for &(ra, rb) in &rivals {
                let x = Beta::new(ra, rb).map(|d| d.sample(rng)).unwrap_or(ra / (ra + rb));
                if x > draw {
                    above += 1;
                }
            }
            if above < cfg.seats as usize {
                let w = cfg.weight(above);
                if rng.random::<f64>() < mu {
                    a += 1.0;
                } else {
                    b += 1.0;
                }
                w
            } else {
                0.0
            }
        };
        pulls += disc * credit;
        disc *= cfg.gamma;
    }
    Rep { passed, pulls }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte-Carlo replay of a Thompson-sampling engine after the testing window.
///
/// Discounting runs on the absolute clock: period t = q+1, ..., q+T carries γ^{t−1}.
pub fn thompson_replay(mu: f64, bar: &BinomialBar, cfg: &EngineConfig) -> Result<ContinuationEstimate> {
    bar.validate("/policy/pass_model")?;
    cfg.validate("/engine")?;
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::input("/mu", "entrant quality must lie in (0,1)"));
    }
    let (q, s) = (bar.q, bar.threshold());
    let mut fixed_sorted: Vec<f64> = cfg
        .competitors
        .iter()
        .filter_map(|c| match *c {
            Competitor::Fixed(m) => Some(m),
            _ => None,
        })
        .collect();
    fixed_sorted.sort_by(f64::total_cmp);

    let start = Instant::now();
    let mut reps: Vec<Rep> = Vec::with_capacity(cfg.replications);
    let mut truncated = false;
    let mut next = 0usize;
    while next < cfg.replications {
        if let Some(ms) = cfg.wall_clock_ms {
            if start.elapsed().as_millis() as u64 >= ms {
                truncated = true;
                break;
            }
        }
        let end = (next + CHUNK).min(cfg.replications);
        let chunk: Vec<Rep> = (next..end)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(i as u64);
                replicate(mu, q, s, cfg, &fixed_sorted, &mut rng)
            })
            .collect();
        reps.extend(chunk);
        next = end;
    }

    let pass: Vec<f64> = reps.iter().filter(|r| r.passed).map(|r| r.pulls).collect();
    let fail: Vec<f64> = reps.iter().filter(|r| !r.passed).map(|r| r.pulls).collect();
    if pass.len() < 2 || fail.len() < 2 {
        return Err(Error::domain_with(
            ErrorCode::InsufficientClassSamples,
            "a pass/fail class has fewer than 2 replications; sample conditionally on the class or move the bar",
            serde_json::json!({"n_pass": pass.len(), "n_fail": fail.len()}),
        ));
    }
    let (h1, se1) = mean_se(&pass);
    let (h0, se0) = mean_se(&fail);
    let all: Vec<f64> = reps.iter().map(|r| r.pulls).collect();
    let (mean_pulls, se_all) = mean_se(&all);
    let se_dh = (se1 * se1 + se0 * se0).sqrt();
    Ok(ContinuationEstimate {
        h0,
        h1,
        dh: h1 - h0,
        ci_h0: Z95 * se0,
        ci_h1: Z95 * se1,
        ci_dh: Z95 * se_dh,
        method: EstimateMethod::McThompson,
        n_reps: reps.len(),
        seed: Some(cfg.seed),
        replay: Some(ReplayDiagnostics {
            n_pass: pass.len(),
            n_fail: fail.len(),
            pass_share: pass.len() as f64 / reps.len() as f64,
            mean_pulls,
            se_mean_pulls: se_all,
            se_h0: se0,
            se_h1: se1,
            horizon: cfg.horizon(),
            truncated,
        }),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortThreshold {
    pub s_k: u32,
    pub expected_fill: f64,
    /// Expected fill one step looser (s_K − 1), when that threshold exists.
    pub expected_fill_looser: Option<f64>,
    pub warnings: Vec<String>,
}

/// Smallest s with n·mean_i Pr[Bin(q, μ_i) ≥ s] ≤ K (under-fill convention).
pub fn calibrate_cohort_threshold(
    peers: &[f64],
    q: u32,
    seats: f64,
    pool: f64,
    allow_zero_s: bool,
) -> Result<CohortThreshold> {
    if peers.is_empty() {
        return Err(Error::input("/peers", "peer sample is empty"));
    }
    if peers.iter().any(|&m| !(m > 0.0 && m < 1.0)) {
        return Err(Error::input("/peers", "peer qualities must lie in (0,1)"));
    }
    if q == 0 {
        return Err(Error::input("/q", "q must be positive"));
    }
    if !(seats >= 1.0 && seats <= pool) {
        return Err(Error::input("/K", "need 1 <= K <= n"));
    }
    let fill = |s: u32| -> f64 {
        if s == 0 {
            return pool;
        }
        let mean = peers.iter().map(|&m| binomial_tail_beta(q, s, m)).sum::<f64>() / peers.len() as f64;
        pool * mean
    };
    let start = if allow_zero_s { 0 } else { 1 };
    let mut warnings = Vec::new();
    for s in start..=q {
        let f = fill(s);
        if f <= seats {
            if s == start && f < seats {
                warnings.push(format!(
                    "under capacity: expected fill {f:.3} is below K even at the loosest threshold"
                ));
            }
            return Ok(CohortThreshold {
                s_k: s,
                expected_fill: f,
                expected_fill_looser: (s > start).then(|| fill(s - 1)),
                warnings,
            });
        }
    }
    warnings.push("no threshold within the window fills at most K; returned s = q".to_string());
    Ok(CohortThreshold {
        s_k: q,
        expected_fill: fill(q),
        expected_fill_looser: (q > start).then(|| fill(q - 1)),
        warnings,
    })
}
