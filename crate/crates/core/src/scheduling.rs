//! Testing schedules and their discounted mass q(τ) = Σ_j γ^{t_j−1}.
//!
//! Several impressions may share a period when a per-period cap allows it;
//! slots are then a multiset of period indices, listed in nondecreasing order.

use serde::{Deserialize, Serialize};

use crate::equilibrium::{solve_best_response, Scenario};
use crate::error::{Error, ErrorCode, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    #[serde(rename = "Q")]
    pub count: u32,
    pub slots: Vec<u32>,
    pub gamma: f64,
    #[serde(default)]
    pub cap: Option<u32>,
    /// Decreasing weights w_t for t = 1, 2, ...; replaces γ^{t−1} when present.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
}

impl Schedule {
    pub fn geometric(slots: Vec<u32>, gamma: f64) -> Self {
        Schedule {
            count: slots.len() as u32,
            slots,
            gamma,
            cap: None,
            weights: None,
            theta: None,
        }
    }

    pub fn validate(&self, ptr: &str) -> Result<()> {
        if self.count == 0 {
            return Err(Error::input(format!("{ptr}/Q"), "Q must be positive"));
        }
        if self.slots.len() != self.count as usize {
            return Err(Error::input(format!("{ptr}/slots"), "slot count must equal Q"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::input(format!("{ptr}/gamma"), "gamma must lie in (0,1)"));
        }
        if self.slots.iter().any(|&t| t == 0) {
            return Err(Error::input(format!("{ptr}/slots"), "periods start at 1"));
        }
        let cap = self.cap.unwrap_or(1);
        if cap == 0 {
            return Err(Error::input(format!("{ptr}/cap"), "cap must be positive"));
        }
        let mut run = 1u32;
        for w in self.slots.windows(2) {
            if w[1] < w[0] {
                return Err(Error::input(format!("{ptr}/slots"), "slots must be sorted"));
            }
            run = if w[1] == w[0] { run + 1 } else { 1 };
            if run > cap {
                let msg = if self.cap.is_none() {
                    "slots must be strictly increasing without a cap"
                } else {
                    "slots exceed the per-period cap"
                };
                return Err(Error::input(format!("{ptr}/slots"), msg));
            }
        }
        if let Some(w) = &self.weights {
            if w.windows(2).any(|p| p[1] >= p[0]) || w.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::input(format!("{ptr}/weights"), "weights must be positive and strictly decreasing"));
            }
            let last = *self.slots.last().unwrap() as usize;
            if w.len() < last {
                return Err(Error::input(format!("{ptr}/weights"), "weights do not cover the last slot"));
            }
        }
        Ok(())
    }

    fn weight(&self, t: u32) -> f64 {
        match &self.weights {
            Some(w) => w[(t - 1) as usize],
            None => self.gamma.powi(t as i32 - 1),
        }
    }
}

/// q(τ): each impression weighted by its period's discount factor.
pub fn discounted_mass(schedule: &Schedule) -> f64 {
    schedule.slots.iter().map(|&t| schedule.weight(t)).sum()
}

/// Fills periods from t = 1 with at most `cap` impressions each (`None` = unlimited).
pub fn earliest_schedule(count: u32, cap: Option<u32>, gamma: f64) -> Result<Schedule> {
    if count == 0 {
        return Err(Error::input("/Q", "Q must be positive"));
    }
    let per = cap.unwrap_or(count).max(1);
    let slots = (0..count).map(|j| j / per + 1).collect();
    Ok(Schedule {
        count,
        slots,
        gamma,
        cap: Some(per),
        weights: None,
        theta: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleOutcome {
    pub index: usize,
    pub q_tau: f64,
    pub mu_star: f64,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "Pprime")]
    pub p_prime: f64,
    pub welfare: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleComparison {
    /// Sorted by decreasing q(τ).
    pub rows: Vec<ScheduleOutcome>,
    /// Index (into the input) of the earliest-pacing schedule for this Q and cap.
    pub earliest_index: Option<usize>,
    pub earliest_maximizes_mu: bool,
    pub earliest_maximizes_welfare: bool,
}

/// Solves the equilibrium with q = q(τ) for each schedule. The pass model is
/// the template's and is shared by every schedule.
pub fn compare_schedules(schedules: &[Schedule], template: &Scenario, tol: f64) -> Result<ScheduleComparison> {
    let Some(first) = schedules.first() else {
        return Ok(ScheduleComparison {
            rows: vec![],
            earliest_index: None,
            earliest_maximizes_mu: true,
            earliest_maximizes_welfare: true,
        });
    };
    for (i, s) in schedules.iter().enumerate() {
        s.validate(&format!("/schedules/{i}"))?;
        if s.count != first.count {
            return Err(Error::domain(
                ErrorCode::InvalidInput,
                "invalid comparison: schedules must share Q",
            ));
        }
    }
    let mut rows = Vec::with_capacity(schedules.len());
    for (i, s) in schedules.iter().enumerate() {
        let q_tau = discounted_mass(s);
        let scen = template.with_q(q_tau);
        let eq = solve_best_response(&scen, tol)?;
        let pt = eq.frontier();
        rows.push(ScheduleOutcome {
            index: i,
            q_tau,
            mu_star: eq.mu_star,
            p: pt.p,
            p_prime: pt.dp,
            welfare: scen.welfare(eq.mu_star, pt),
        });
    }
    let earliest_index = schedules.iter().position(|s| {
        let cap = s.cap.unwrap_or(1);
        earliest_schedule(s.count, Some(cap), s.gamma)
            .map(|e| e.slots == s.slots)
            .unwrap_or(false)
    });
    let (mut max_mu, mut max_w) = (true, true);
    if let Some(e) = earliest_index {
        let r = &rows[e];
        max_mu = rows.iter().all(|o| r.mu_star >= o.mu_star - 1e-12);
        max_w = rows.iter().all(|o| r.welfare >= o.welfare - 1e-9);
    }
    rows.sort_by(|a, b| b.q_tau.total_cmp(&a.q_tau));
    Ok(ScheduleComparison {
        rows,
        earliest_index,
        earliest_maximizes_mu: max_mu,
        earliest_maximizes_welfare: max_w,
    })
}

/// The `count` periods with the largest drift weights θ_t (1-based, ties to the earlier period).
pub fn drift_adjusted_slots(theta: &[f64], count: usize) -> Result<Vec<u32>> {
    if theta.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::domain(
            ErrorCode::InvalidInput,
            "invalid drift: theta must be nonincreasing",
        ));
    }
    if theta.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
        return Err(Error::input("/theta", "theta entries must lie in (0,1]"));
    }
    if count > theta.len() {
        return Err(Error::input("/Q", "Q exceeds the number of periods"));
    }
    let mut idx: Vec<usize> = (0..theta.len()).collect();
    idx.sort_by(|&a, &b| theta[b].total_cmp(&theta[a]).then(a.cmp(&b)));
    let mut chosen: Vec<u32> = idx[..count].iter().map(|&i| i as u32 + 1).collect();
    chosen.sort_unstable();
    Ok(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mass_examples() {
        let m = |s: Vec<u32>| discounted_mass(&Schedule::geometric(s, 0.9));
        assert!((m(vec![1, 2, 3]) - 2.71).abs() < 1e-12);
        assert!((m(vec![1, 3, 5]) - 2.4661).abs() < 1e-12);
        assert_eq!(m(vec![1]), 1.0);
    }

    #[test]
    fn earliest_respects_cap() {
        assert_eq!(earliest_schedule(3, Some(1), 0.9).unwrap().slots, vec![1, 2, 3]);
        assert_eq!(earliest_schedule(4, Some(2), 0.9).unwrap().slots, vec![1, 1, 2, 2]);
        assert_eq!(earliest_schedule(3, None, 0.9).unwrap().slots, vec![1, 1, 1]);
    }

    #[test]
    fn cap_violation_rejected() {
        let mut s = Schedule::geometric(vec![1, 1, 2], 0.9);
        assert!(s.validate("").is_err());
        s.cap = Some(2);
        assert!(s.validate("").is_ok());
    }

    #[test]
    fn drift_selection() {
        assert_eq!(drift_adjusted_slots(&[1.0, 0.8, 0.6, 0.4], 2).unwrap(), vec![1, 2]);
        assert_eq!(drift_adjusted_slots(&[0.5; 5], 3).unwrap(), vec![1, 2, 3]);
        assert_eq!(drift_adjusted_slots(&[0.9, 0.7], 2).unwrap(), vec![1, 2]);
        assert!(drift_adjusted_slots(&[0.4, 0.8], 1).is_err());
    }

    #[test]
    fn mismatched_counts_rejected() {
        let a = Schedule::geometric(vec![1, 2], 0.9);
        let b = Schedule::geometric(vec![1, 2, 3], 0.9);
        let err = compare_schedules(&[a, b], &Scenario::baseline(), 1e-10).unwrap_err();
        assert!(err.to_string().contains("invalid comparison"));
    }
}
