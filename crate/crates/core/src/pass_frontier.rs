//! Pass probability P(μ), slope P′(μ), curvature P″(μ) and leverage Λ = P′/P.
//!
//! Every signal structure is a [`PassModel`] variant. All variants share one
//! evaluation path: map quality to per-trial success chances, apply the
//! optional misclassification transform p̃ = (1−η₀−η₁)p + η₁, then take the
//! tail of the success count at threshold `s`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, ErrorCode, Result};
use crate::special;

/// Pass rates within this distance of 0 or 1 make the leverage ratio meaningless.
pub const DEGENERATE_TOL: f64 = 1e-12;

fn is_false(b: &bool) -> bool {
    !*b
}

/// s = ⌈q·μ̄⌉ with a small downward nudge so that products like 10 × 0.3 do not
/// round up past an exact integer.
pub fn threshold_from_bar(q: u32, bar: f64) -> u32 {
    let raw = (q as f64 * bar - 1e-12).ceil();
    if raw <= 0.0 {
        0
    } else {
        raw as u32
    }
}

/// Testing window size `q` and integer threshold `s` (or the bar μ̄ it derives from).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinomialBar {
    pub q: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bar: Option<f64>,
    /// Permits s = 0 (tail ≡ 1, slope ≡ 0), used by calibration sweeps.
    #[serde(default, skip_serializing_if = "is_false")]
    pub allow_zero_s: bool,
}

impl BinomialBar {
    pub fn new(q: u32, s: u32) -> Self {
        BinomialBar {
            q,
            s: Some(s),
            bar: None,
            allow_zero_s: false,
        }
    }

    pub fn from_bar(q: u32, bar: f64) -> Self {
        BinomialBar {
            q,
            s: None,
            bar: Some(bar),
            allow_zero_s: false,
        }
    }

    pub fn threshold(&self) -> u32 {
        match (self.s, self.bar) {
            (Some(s), _) => s,
            (None, Some(b)) => threshold_from_bar(self.q, b),
            (None, None) => 0,
        }
    }

    pub fn validate(&self, ptr: &str) -> Result<()> {
        if self.q == 0 {
            return Err(Error::input(format!("{ptr}/q"), "q must be a positive integer"));
        }
        if let Some(b) = self.bar {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::input(format!("{ptr}/bar"), "bar must lie in (0,1)"));
            }
        }
        let s = match (self.s, self.bar) {
            (None, None) => {
                return Err(Error::input(ptr.to_string(), "either s or bar is required"));
            }
            (Some(s), Some(b)) => {
                let derived = threshold_from_bar(self.q, b);
                if s != derived {
                    return Err(Error::input(
                        format!("{ptr}/s"),
                        format!("s = {s} disagrees with ceil(q*bar) = {derived}"),
                    ));
                }
                s
            }
            (Some(s), None) => s,
            (None, Some(b)) => threshold_from_bar(self.q, b),
        };
        check_threshold(s, self.q, self.allow_zero_s, &format!("{ptr}/s"))
    }
}

fn check_threshold(s: u32, q: u32, allow_zero: bool, ptr: &str) -> Result<()> {
    if s == 0 && !allow_zero {
        return Err(Error::input(ptr, "s = 0 requires allow_zero_s"));
    }
    if s > q {
        return Err(Error::input(ptr, format!("s = {s} exceeds q = {q}")));
    }
    Ok(())
}

/// Increasing map from quality to per-trial success chance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LinkFn {
    #[default]
    Identity,
    /// clamp(intercept + slope·μ, lo, hi)
    AffineClipped {
        intercept: f64,
        slope: f64,
        lo: f64,
        hi: f64,
    },
    /// 1 / (1 + exp(−scale·(μ − center)))
    Logistic { scale: f64, center: f64 },
}

impl LinkFn {
    pub fn value(&self, mu: f64) -> f64 {
        match *self {
            LinkFn::Identity => mu,
            LinkFn::AffineClipped {
                intercept,
                slope,
                lo,
                hi,
            } => (intercept + slope * mu).clamp(lo, hi),
            LinkFn::Logistic { scale, center } => special::logistic(scale * (mu - center)),
        }
    }

    pub fn deriv(&self, mu: f64) -> f64 {
        match *self {
            LinkFn::Identity => 1.0,
            LinkFn::AffineClipped {
                intercept,
                slope,
                lo,
                hi,
            } => {
                let raw = intercept + slope * mu;
                if raw < lo || raw > hi {
                    0.0
                } else {
                    slope
                }
            }
            LinkFn::Logistic { scale, center } => {
                let p = special::logistic(scale * (mu - center));
                scale * p * (1.0 - p)
            }
        }
    }

    pub fn deriv2(&self, mu: f64) -> f64 {
        match *self {
            LinkFn::Identity | LinkFn::AffineClipped { .. } => 0.0,
            LinkFn::Logistic { scale, center } => {
                let p = special::logistic(scale * (mu - center));
                scale * scale * p * (1.0 - p) * (1.0 - 2.0 * p)
            }
        }
    }

    pub fn validate(&self, ptr: &str) -> Result<()> {
        match *self {
            LinkFn::Identity => Ok(()),
            LinkFn::AffineClipped { slope, lo, hi, .. } => {
                if !(slope > 0.0) {
                    return Err(Error::input(format!("{ptr}/slope"), "slope must be positive"));
                }
                if !(lo > 0.0 && lo < hi && hi < 1.0) {
                    return Err(Error::input(ptr, "need 0 < lo < hi < 1"));
                }
                Ok(())
            }
            LinkFn::Logistic { scale, center } => {
                if !(scale > 0.0) || !center.is_finite() {
                    return Err(Error::input(format!("{ptr}/scale"), "scale must be positive"));
                }
                Ok(())
            }
        }
    }
}

/// Per-slot success chances. Either a fixed vector `p` (already evaluated at the
/// quality of interest, with sensitivities `dp`) or drift weights `theta` with a
/// link, giving p_t(μ) = θ_t·ψ(μ).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotProbabilities {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dp: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<LinkFn>,
}

impl SlotProbabilities {
    pub fn fixed(p: Vec<f64>, dp: Option<Vec<f64>>) -> Self {
        SlotProbabilities {
            p: Some(p),
            dp,
            theta: None,
            link: None,
        }
    }

    pub fn drift(theta: Vec<f64>, link: LinkFn) -> Self {
        SlotProbabilities {
            p: None,
            dp: None,
            theta: Some(theta),
            link: Some(link),
        }
    }

    pub fn len(&self) -> usize {
        self.p
            .as_ref()
            .or(self.theta.as_ref())
            .map(|v| v.len())
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-slot chances and sensitivities at μ. `dp` is `None` only for a fixed
    /// vector supplied without sensitivities.
    pub fn at(&self, mu: f64) -> (Vec<f64>, Option<Vec<f64>>) {
        if let Some(p) = &self.p {
            return (p.clone(), self.dp.clone());
        }
        let theta = self.theta.as_deref().unwrap_or(&[]);
        let link = self.link.clone().unwrap_or_default();
        let (v, d) = (link.value(mu), link.deriv(mu));
        (
            theta.iter().map(|t| t * v).collect(),
            Some(theta.iter().map(|t| t * d).collect()),
        )
    }

    pub fn validate(&self, ptr: &str) -> Result<()> {
        match (&self.p, &self.theta) {
            (Some(_), Some(_)) => Err(Error::input(ptr, "supply either p or theta, not both")),
            (None, None) => Err(Error::input(ptr, "one of p or theta is required")),
            (Some(p), None) => {
                if p.is_empty() {
                    return Err(Error::input(format!("{ptr}/p"), "slot vector is empty"));
                }
                for (i, v) in p.iter().enumerate() {
                    if !(*v > 0.0 && *v < 1.0) {
                        return Err(Error::input(format!("{ptr}/p/{i}"), "slot chance must lie in (0,1)"));
                    }
                }
                if let Some(dp) = &self.dp {
                    if dp.len() != p.len() {
                        return Err(Error::input(format!("{ptr}/dp"), "dp length must match p"));
                    }
                    for (i, v) in dp.iter().enumerate() {
                        if !(*v >= 0.0) || !v.is_finite() {
                            return Err(Error::input(format!("{ptr}/dp/{i}"), "dp entries must be nonnegative"));
                        }
                    }
                }
                if self.link.is_some() {
                    return Err(Error::input(format!("{ptr}/link"), "link applies only to drift weights"));
                }
                Ok(())
            }
            (None, Some(theta)) => {
                if theta.is_empty() {
                    return Err(Error::input(format!("{ptr}/theta"), "drift vector is empty"));
                }
                for (i, v) in theta.iter().enumerate() {
                    if !(*v > 0.0 && *v <= 1.0) {
                        return Err(Error::input(format!("{ptr}/theta/{i}"), "drift weight must lie in (0,1]"));
                    }
                }
                if self.dp.is_some() {
                    return Err(Error::input(format!("{ptr}/dp"), "dp is implied by theta and link"));
                }
                if let Some(l) = &self.link {
                    l.validate(&format!("{ptr}/link"))?;
                }
                Ok(())
            }
        }
    }
}

/// How the latent factor ε enters ψ(μ, ε).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MixtureForm {
    /// ψ(μ,ε) = logistic(logit(link(μ)) + ε)
    #[default]
    LogitShift,
    /// ψ(μ,ε) = ε·link(μ)
    Scale,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSample {
    pub eps: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkedModel {
    pub q: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bar: Option<f64>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub allow_zero_s: bool,
    pub link: LinkFn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonBinomialModel {
    pub s: u32,
    #[serde(default, skip_serializing_if = "is_false")]
    pub allow_zero_s: bool,
    pub slots: SlotProbabilities,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoisyModel {
    pub inner: Box<PassModel>,
    pub eta0: f64,
    pub eta1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureModel {
    pub q: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bar: Option<f64>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub allow_zero_s: bool,
    #[serde(default)]
    pub link: LinkFn,
    #[serde(default)]
    pub form: MixtureForm,
    pub samples: Vec<MixtureSample>,
}

/// Normal approximation either over explicit slots (needs `s`) or over a
/// homogeneous window (`q` with `s` or `bar`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalApproxModel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bar: Option<f64>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub allow_zero_s: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slots: Option<SlotProbabilities>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PassModel {
    Binomial(BinomialBar),
    Linked(LinkedModel),
    PoissonBinomial(PoissonBinomialModel),
    Noisy(NoisyModel),
    Mixture(MixtureModel),
    NormalApprox(NormalApproxModel),
}

/// Affine map applied to every per-trial chance: x ↦ scale·x + shift.
#[derive(Clone, Copy, Debug)]
struct Noise {
    scale: f64,
    shift: f64,
}

const CLEAN: Noise = Noise {
    scale: 1.0,
    shift: 0.0,
};

impl Noise {
    fn apply(&self, p: f64) -> f64 {
        self.scale * p + self.shift
    }
}

/// Level and slope of the pass probability at one quality.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub p: f64,
    pub dp: f64,
}

impl PassModel {
    pub fn binomial(q: u32, s: u32) -> Self {
        PassModel::Binomial(BinomialBar::new(q, s))
    }

    pub fn linked(q: u32, s: u32, link: LinkFn) -> Self {
        PassModel::Linked(LinkedModel {
            q,
            s: Some(s),
            bar: None,
            allow_zero_s: false,
            link,
        })
    }

    pub fn noisy(inner: PassModel, eta0: f64, eta1: f64) -> Self {
        PassModel::Noisy(NoisyModel {
            inner: Box::new(inner),
            eta0,
            eta1,
        })
    }

    pub fn poisson_binomial(slots: SlotProbabilities, s: u32) -> Self {
        PassModel::PoissonBinomial(PoissonBinomialModel {
            s,
            allow_zero_s: false,
            slots,
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PassModel::Binomial(_) => "binomial",
            PassModel::Linked(_) => "linked",
            PassModel::PoissonBinomial(_) => "poisson_binomial",
            PassModel::Noisy(_) => "noisy",
            PassModel::Mixture(_) => "mixture",
            PassModel::NormalApprox(_) => "normal_approx",
        }
    }

    /// Number of testing trials.
    pub fn trials(&self) -> u32 {
        match self {
            PassModel::Binomial(b) => b.q,
            PassModel::Linked(m) => m.q,
            PassModel::PoissonBinomial(m) => m.slots.len() as u32,
            PassModel::Noisy(m) => m.inner.trials(),
            PassModel::Mixture(m) => m.q,
            PassModel::NormalApprox(m) => match &m.slots {
                Some(sl) => sl.len() as u32,
                None => m.q.unwrap_or(0),
            },
        }
    }

    /// Integer threshold s.
    pub fn threshold(&self) -> u32 {
        match self {
            PassModel::Binomial(b) => b.threshold(),
            PassModel::Linked(m) => bar_of(m.q, m.s, m.bar, m.allow_zero_s).threshold(),
            PassModel::PoissonBinomial(m) => m.s,
            PassModel::Noisy(m) => m.inner.threshold(),
            PassModel::Mixture(m) => bar_of(m.q, m.s, m.bar, m.allow_zero_s).threshold(),
            PassModel::NormalApprox(m) => match (m.s, m.q, m.bar) {
                (Some(s), _, _) => s,
                (None, Some(q), Some(b)) => threshold_from_bar(q, b),
                _ => 0,
            },
        }
    }

    pub fn validate(&self, ptr: &str) -> Result<()> {
        match self {
            PassModel::Binomial(b) => b.validate(ptr),
            PassModel::Linked(m) => {
                bar_of(m.q, m.s, m.bar, m.allow_zero_s).validate(ptr)?;
                m.link.validate(&format!("{ptr}/link"))
            }
            PassModel::PoissonBinomial(m) => {
                m.slots.validate(&format!("{ptr}/slots"))?;
                check_threshold(m.s, m.slots.len() as u32, m.allow_zero_s, &format!("{ptr}/s"))
            }
            PassModel::Noisy(m) => {
                if matches!(*m.inner, PassModel::Noisy(_) | PassModel::NormalApprox(_)) {
                    return Err(Error::input(
                        format!("{ptr}/inner"),
                        "noisy models cannot wrap noisy or normal_approx models",
                    ));
                }
                if !(m.eta0 >= 0.0 && m.eta0 < 1.0) {
                    return Err(Error::input(format!("{ptr}/eta0"), "eta0 must lie in [0,1)"));
                }
                if !(m.eta1 >= 0.0 && m.eta1 < 1.0) {
                    return Err(Error::input(format!("{ptr}/eta1"), "eta1 must lie in [0,1)"));
                }
                if m.eta0 + m.eta1 >= 1.0 {
                    return Err(Error::input(ptr, "eta0 + eta1 must be below 1"));
                }
                m.inner.validate(&format!("{ptr}/inner"))
            }
            PassModel::Mixture(m) => {
                bar_of(m.q, m.s, m.bar, m.allow_zero_s).validate(ptr)?;
                m.link.validate(&format!("{ptr}/link"))?;
                if m.samples.is_empty() {
                    return Err(Error::input(format!("{ptr}/samples"), "at least one epsilon sample is required"));
                }
                let mut total = 0.0;
                for (i, smp) in m.samples.iter().enumerate() {
                    if !(smp.weight >= 0.0) || !smp.eps.is_finite() {
                        return Err(Error::input(
                            format!("{ptr}/samples/{i}"),
                            "weights must be nonnegative and eps finite",
                        ));
                    }
                    if m.form == MixtureForm::Scale && !(smp.eps > 0.0) {
                        return Err(Error::input(format!("{ptr}/samples/{i}/eps"), "scale factors must be positive"));
                    }
                    total += smp.weight;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::input(format!("{ptr}/samples"), "weights must sum to 1"));
                }
                Ok(())
            }
            PassModel::NormalApprox(m) => match &m.slots {
                Some(sl) => {
                    sl.validate(&format!("{ptr}/slots"))?;
                    if m.q.is_some() || m.bar.is_some() {
                        return Err(Error::input(ptr, "with slots supply s only"));
                    }
                    let s = m
                        .s
                        .ok_or_else(|| Error::input(format!("{ptr}/s"), "s is required"))?;
                    check_threshold(s, sl.len() as u32, m.allow_zero_s, &format!("{ptr}/s"))
                }
                None => {
                    let q = m
                        .q
                        .ok_or_else(|| Error::input(format!("{ptr}/q"), "q or slots is required"))?;
                    bar_of(q, m.s, m.bar, m.allow_zero_s).validate(ptr)
                }
            },
        }
    }

    fn check_mu(mu: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&mu) {
            return Err(Error::domain(
                ErrorCode::InvalidInput,
                format!("quality {mu} outside [0,1]"),
            ));
        }
        Ok(())
    }

    /// P(μ).
    pub fn tail(&self, mu: f64) -> Result<f64> {
        Self::check_mu(mu)?;
        Ok(self.eval_with(mu, CLEAN, false)?.p)
    }

    /// P′(μ).
    pub fn slope(&self, mu: f64) -> Result<f64> {
        Ok(self.eval(mu)?.dp)
    }

    /// P(μ) and P′(μ) together.
    pub fn eval(&self, mu: f64) -> Result<FrontierPoint> {
        Self::check_mu(mu)?;
        self.eval_with(mu, CLEAN, true)
    }

    fn eval_with(&self, mu: f64, noise: Noise, need_slope: bool) -> Result<FrontierPoint> {
        match self {
            PassModel::Binomial(b) => Ok(binomial_point(b.q, b.threshold(), mu, 1.0, noise)),
            PassModel::Linked(m) => {
                let s = self.threshold();
                Ok(binomial_point(m.q, s, m.link.value(mu), m.link.deriv(mu), noise))
            }
            PassModel::PoissonBinomial(m) => {
                let (p, dp) = m.slots.at(mu);
                let dp = match dp {
                    Some(dp) => dp,
                    None if !need_slope => vec![0.0; p.len()],
                    None => {
                        return Err(Error::input(
                            "/slots/dp",
                            "poisson_binomial slope needs per-slot sensitivities dp",
                        ))
                    }
                };
                Ok(pb_point(&p, &dp, m.s, noise))
            }
            PassModel::Noisy(m) => {
                let c = 1.0 - m.eta0 - m.eta1;
                let composed = Noise {
                    scale: noise.scale * c,
                    shift: noise.scale * m.eta1 + noise.shift,
                };
                m.inner.eval_with(mu, composed, need_slope)
            }
            PassModel::Mixture(m) => {
                let s = self.threshold();
                let mut acc = FrontierPoint { p: 0.0, dp: 0.0 };
                for smp in &m.samples {
                    if smp.weight == 0.0 {
                        continue;
                    }
                    let (v, d) = mixture_link(m, mu, smp.eps)?;
                    let pt = binomial_point(m.q, s, v, d, noise);
                    acc.p += smp.weight * pt.p;
                    acc.dp += smp.weight * pt.dp;
                }
                Ok(acc)
            }
            PassModel::NormalApprox(m) => {
                let s = self.threshold();
                let (p, dp) = match &m.slots {
                    Some(sl) => {
                        let (p, dp) = sl.at(mu);
                        let n = p.len();
                        (p, dp.unwrap_or_else(|| vec![0.0; n]))
                    }
                    None => {
                        let q = m.q.unwrap_or(0) as usize;
                        (vec![mu; q], vec![1.0; q])
                    }
                };
                Ok(clt_point(&p, &dp, s, noise))
            }
        }
    }

    /// P″(μ); available for binomial and linked models.
    pub fn curvature(&self, mu: f64) -> Result<f64> {
        Self::check_mu(mu)?;
        let (q, s, v, d, d2) = match self {
            PassModel::Binomial(b) => (b.q, b.threshold(), mu, 1.0, 0.0),
            PassModel::Linked(m) => (
                m.q,
                self.threshold(),
                m.link.value(mu),
                m.link.deriv(mu),
                m.link.deriv2(mu),
            ),
            other => {
                return Err(Error::NotImplemented(format!(
                    "curvature is not available for the {} variant",
                    other.kind()
                )))
            }
        };
        if s == 0 {
            return Ok(0.0);
        }
        let dens = binomial_density(q, s, v);
        Ok(d2 * dens + d * d * binomial_density_deriv(q, s, v))
    }

    pub fn supports_curvature(&self) -> bool {
        matches!(self, PassModel::Binomial(_) | PassModel::Linked(_))
    }

    /// Λ(μ) = P′(μ)/P(μ); errors when the pass rate is saturated.
    pub fn leverage(&self, mu: f64) -> Result<f64> {
        let pt = self.eval(mu)?;
        leverage_of(pt)
    }

    /// Observed per-trial chance p̃ for a noisy model wrapping a binomial or linked model.
    pub fn noisy_transformed_point(&self, mu: f64) -> Option<f64> {
        if let PassModel::Noisy(m) = self {
            let inner = match &*m.inner {
                PassModel::Binomial(_) => mu,
                PassModel::Linked(l) => l.link.value(mu),
                _ => return None,
            };
            Some((1.0 - m.eta0 - m.eta1) * inner + m.eta1)
        } else {
            None
        }
    }

    /// Same model family with window q and threshold s. Not defined for
    /// explicit slot vectors.
    pub fn rebar(&self, q: u32, s: u32) -> Result<PassModel> {
        let out = match self {
            PassModel::Binomial(b) => PassModel::Binomial(BinomialBar {
                q,
                s: Some(s),
                bar: None,
                allow_zero_s: b.allow_zero_s,
            }),
            PassModel::Linked(m) => PassModel::Linked(LinkedModel {
                q,
                s: Some(s),
                bar: None,
                ..m.clone()
            }),
            PassModel::Mixture(m) => PassModel::Mixture(MixtureModel {
                q,
                s: Some(s),
                bar: None,
                ..m.clone()
            }),
            PassModel::Noisy(m) => PassModel::Noisy(NoisyModel {
                inner: Box::new(m.inner.rebar(q, s)?),
                ..m.clone()
            }),
            PassModel::NormalApprox(m) if m.slots.is_none() => PassModel::NormalApprox(NormalApproxModel {
                q: Some(q),
                s: Some(s),
                bar: None,
                ..m.clone()
            }),
            other => {
                return Err(Error::domain(
                    ErrorCode::InvalidInput,
                    format!("cannot change the window of a {} model", other.kind()),
                ))
            }
        };
        out.validate("")?;
        Ok(out)
    }

    /// Per-trial success chances at μ for simulation. Mixture models draw ε by weight.
    pub fn trial_probabilities<R: Rng + ?Sized>(&self, mu: f64, rng: &mut R) -> Result<Vec<f64>> {
        Self::check_mu(mu)?;
        self.trial_probabilities_with(mu, CLEAN, rng)
    }

    fn trial_probabilities_with<R: Rng + ?Sized>(&self, mu: f64, noise: Noise, rng: &mut R) -> Result<Vec<f64>> {
        let raw = match self {
            PassModel::Binomial(b) => vec![mu; b.q as usize],
            PassModel::Linked(m) => vec![m.link.value(mu); m.q as usize],
            PassModel::PoissonBinomial(m) => m.slots.at(mu).0,
            PassModel::Noisy(m) => {
                let c = 1.0 - m.eta0 - m.eta1;
                let composed = Noise {
                    scale: noise.scale * c,
                    shift: noise.scale * m.eta1 + noise.shift,
                };
                return m.inner.trial_probabilities_with(mu, composed, rng);
            }
            PassModel::Mixture(m) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = m.samples.len() - 1;
                for (i, smp) in m.samples.iter().enumerate() {
                    acc += smp.weight;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                let (v, _) = mixture_link(m, mu, m.samples[pick].eps)?;
                vec![v; m.q as usize]
            }
            PassModel::NormalApprox(m) => match &m.slots {
                Some(sl) => sl.at(mu).0,
                None => vec![mu; m.q.unwrap_or(0) as usize],
            },
        };
        Ok(raw.into_iter().map(|p| noise.apply(p)).collect())
    }
}

fn bar_of(q: u32, s: Option<u32>, bar: Option<f64>, allow_zero_s: bool) -> BinomialBar {
    BinomialBar {
        q,
        s,
        bar,
        allow_zero_s,
    }
}

pub(crate) fn leverage_of(pt: FrontierPoint) -> Result<f64> {
    if pt.p <= DEGENERATE_TOL || pt.p >= 1.0 - DEGENERATE_TOL {
        return Err(Error::domain(
            ErrorCode::DegeneratePassRate,
            format!("pass probability {:.3e} is saturated; the bar is mistuned", pt.p),
        ));
    }
    Ok(pt.dp / pt.p)
}

fn mixture_link(m: &MixtureModel, mu: f64, eps: f64) -> Result<(f64, f64)> {
    let base = m.link.value(mu);
    let dbase = m.link.deriv(mu);
    let (v, d) = match m.form {
        MixtureForm::Scale => (eps * base, eps * dbase),
        MixtureForm::LogitShift => {
            if base <= 0.0 || base >= 1.0 {
                // logit is undefined at the boundary; the shift leaves it fixed
                (base, 0.0)
            } else {
                let v = special::logistic(special::logit(base) + eps);
                (v, v * (1.0 - v) * dbase / (base * (1.0 - base)))
            }
        }
    };
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::domain(
            ErrorCode::InvalidInput,
            format!("mixture propensity {v} left [0,1] at eps = {eps}"),
        ));
    }
    Ok((v, d))
}

// ---------------------------------------------------------------------------
// Binomial kernel

/// Pr[Bin(q, x) ≥ s] through the regularized incomplete Beta I_x(s, q−s+1).
pub fn binomial_tail_beta(q: u32, s: u32, x: f64) -> f64 {
    if s == 0 {
        return 1.0;
    }
    special::betainc(s as f64, (q - s + 1) as f64, x)
}

/// Pr[Bin(q, x) ≥ s] by direct summation of pmf terms k = s..q.
pub fn binomial_tail_sum(q: u32, s: u32, x: f64) -> f64 {
    if s == 0 {
        return 1.0;
    }
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let (lx, l1x) = (x.ln(), (1.0 - x).ln());
    (s..=q)
        .map(|k| (special::ln_choose(q, k) + k as f64 * lx + (q - k) as f64 * l1x).exp())
        .sum::<f64>()
        .min(1.0)
}

/// Beta(s, q−s+1) density at x, i.e. d/dx Pr[Bin(q,x) ≥ s].
pub fn binomial_density(q: u32, s: u32, x: f64) -> f64 {
    if s == 0 {
        return 0.0;
    }
    special::beta_pdf(s as f64, (q - s + 1) as f64, x)
}

/// Derivative in x of the Beta(s, q−s+1) density.
pub fn binomial_density_deriv(q: u32, s: u32, x: f64) -> f64 {
    if s == 0 {
        return 0.0;
    }
    let (a, b) = ((s - 1) as f64, (q - s) as f64);
    if x > 0.0 && x < 1.0 {
        return binomial_density(q, s, x) * (a / x - b / (1.0 - x));
    }
    // Boundary: only the lowest-order term survives.
    let norm = (-special::ln_beta(s as f64, (q - s + 1) as f64)).exp();
    if x <= 0.0 {
        match s {
            1 => -norm * b,
            2 => norm,
            _ => 0.0,
        }
    } else {
        match q - s {
            0 => norm * a,
            1 => -norm,
            _ => 0.0,
        }
    }
}

fn binomial_point(q: u32, s: u32, p: f64, dp: f64, noise: Noise) -> FrontierPoint {
    let x = noise.apply(p);
    FrontierPoint {
        p: binomial_tail_beta(q, s, x),
        dp: noise.scale * dp * binomial_density(q, s, x),
    }
}

/// Mode of the slope, (s−1)/(q−1), for 1 < s < q.
pub fn mode_location(bar: &BinomialBar) -> Result<f64> {
    let (q, s) = (bar.q, bar.threshold());
    if s <= 1 || s >= q {
        return Err(Error::domain(
            ErrorCode::InvalidInput,
            format!("no interior mode for s = {s}, q = {q}; need 1 < s < q"),
        ));
    }
    Ok((s - 1) as f64 / (q - 1) as f64)
}

// ---------------------------------------------------------------------------
// Poisson-Binomial kernel

/// pmf of S = Σ Bernoulli(p_t), by O(q²) convolution.
pub fn poisson_binomial_pmf(p: &[f64]) -> Vec<f64> {
    let mut f = vec![0.0; p.len() + 1];
    f[0] = 1.0;
    for (n, &pt) in p.iter().enumerate() {
        for k in (1..=n + 1).rev() {
            f[k] = f[k] * (1.0 - pt) + f[k - 1] * pt;
        }
        f[0] *= 1.0 - pt;
    }
    f
}

/// Pr[S₋ₜ = k] where S₋ₜ drops a Bernoulli(p_t) from the count with pmf `pmf`.
///
/// Deconvolution runs upward when p_t ≤ ½ and downward otherwise so the
/// recursion never amplifies rounding error.
pub fn leave_one_out(pmf: &[f64], p_t: f64, k: usize) -> f64 {
    let n = pmf.len() - 1;
    if k >= n {
        return 0.0;
    }
    let r = if p_t <= 0.5 {
        let mut r = pmf[0] / (1.0 - p_t);
        for j in 1..=k {
            r = (pmf[j] - p_t * r) / (1.0 - p_t);
        }
        r
    } else {
        let mut r = pmf[n] / p_t;
        for j in (k + 1..n).rev() {
            r = (pmf[j] - (1.0 - p_t) * r) / p_t;
        }
        r
    };
    r.max(0.0)
}

fn pb_point(p: &[f64], dp: &[f64], s: u32, noise: Noise) -> FrontierPoint {
    if s == 0 {
        return FrontierPoint { p: 1.0, dp: 0.0 };
    }
    let x: Vec<f64> = p.iter().map(|&v| noise.apply(v)).collect();
    let pmf = poisson_binomial_pmf(&x);
    let tail: f64 = pmf[s as usize..].iter().sum();
    let slope: f64 = x
        .iter()
        .zip(dp)
        .map(|(&xt, &d)| noise.scale * d * leave_one_out(&pmf, xt, s as usize - 1))
        .sum();
    FrontierPoint {
        p: tail.min(1.0),
        dp: slope,
    }
}

/// Exact Poisson-Binomial tail Pr[S ≥ s].
pub fn poisson_binomial_tail(p: &[f64], s: u32) -> f64 {
    if s == 0 {
        return 1.0;
    }
    let pmf = poisson_binomial_pmf(p);
    pmf.get(s as usize..).map(|t| t.iter().sum::<f64>()).unwrap_or(0.0).min(1.0)
}

// ---------------------------------------------------------------------------
// Normal approximation

fn clt_point(p: &[f64], dp: &[f64], s: u32, noise: Noise) -> FrontierPoint {
    if s == 0 {
        return FrontierPoint { p: 1.0, dp: 0.0 };
    }
    let (mut m, mut v, mut mp, mut vp) = (0.0, 0.0, 0.0, 0.0);
    for (&pt, &d) in p.iter().zip(dp) {
        let x = noise.apply(pt);
        let dx = noise.scale * d;
        m += x;
        v += x * (1.0 - x);
        mp += dx;
        vp += dx * (1.0 - 2.0 * x);
    }
    let s = s as f64;
    if v <= 0.0 {
        return FrontierPoint {
            p: if m >= s { 1.0 } else { 0.0 },
            dp: 0.0,
        };
    }
    let sd = v.sqrt();
    let z = (s - m) / sd;
    FrontierPoint {
        p: 1.0 - special::norm_cdf(z - 0.5 / sd),
        dp: special::norm_pdf(z) * (mp / sd + (s - m) * vp / (2.0 * v * sd)),
    }
}

/// |exact − normal approximation| for the tail at quality μ.
pub fn normal_surrogate_error(slots: &SlotProbabilities, s: u32, mu: f64) -> Result<f64> {
    slots.validate("/slots")?;
    check_threshold(s, slots.len() as u32, false, "/s")?;
    PassModel::check_mu(mu)?;
    let (p, dp) = slots.at(mu);
    let dp = dp.unwrap_or_else(|| vec![0.0; p.len()]);
    let exact = poisson_binomial_tail(&p, s);
    let approx = clt_point(&p, &dp, s, CLEAN).p;
    Ok((exact - approx).abs())
}
