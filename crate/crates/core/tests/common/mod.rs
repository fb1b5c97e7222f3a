//! Independent reference computations shared by the integration tests.
//! Tails come from direct pmf summation and roots from plain bisection, so
//! nothing here reuses library numerics.
#![allow(dead_code)]

pub fn choose(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

pub fn pmf(q: u32, k: u32, mu: f64) -> f64 {
    choose(q, k) * mu.powi(k as i32) * (1.0 - mu).powi((q - k) as i32)
}

pub fn tail(q: u32, s: u32, mu: f64) -> f64 {
    (s..=q).map(|k| pmf(q, k, mu)).sum()
}

/// q·Pr[Bin(q−1, μ) = s−1].
pub fn slope(q: u32, s: u32, mu: f64) -> f64 {
    q as f64 * pmf(q - 1, s - 1, mu)
}

#[derive(Clone, Copy, Debug)]
pub struct Prim {
    pub q_win: u32,
    pub s: u32,
    pub q: f64,
    pub b: f64,
    pub alpha: f64,
    pub kappa: f64,
    pub h0: f64,
    pub dh: f64,
}

impl Prim {
    pub fn baseline() -> Self {
        Prim { q_win: 10, s: 3, q: 10.0, b: 0.0, alpha: 0.5, kappa: 60.0, h0: 0.0, dh: 20.0 }
    }

    pub fn gap(&self, mu: f64) -> f64 {
        let p = tail(self.q_win, self.s, mu);
        let dp = slope(self.q_win, self.s, mu);
        self.kappa * mu - (self.alpha * (self.q + self.h0 + self.dh * p) + self.alpha * mu * self.dh * dp + self.b * dp)
    }

    pub fn planner_gap(&self, mu: f64) -> f64 {
        let p = tail(self.q_win, self.s, mu);
        let dp = slope(self.q_win, self.s, mu);
        self.kappa * mu - (self.q + self.h0 + self.dh * p + mu * self.dh * dp)
    }

    /// Bisection on [1e-4, 0.999] with corner rules.
    pub fn mu_star(&self) -> f64 {
        bisect(|m| self.gap(m))
    }

    pub fn mu_fb(&self) -> f64 {
        bisect(|m| self.planner_gap(m))
    }

    pub fn welfare(&self) -> f64 {
        let m = self.mu_star();
        let p = tail(self.q_win, self.s, m);
        m * (self.q + self.h0 + self.dh * p) - self.b * p
    }

    pub fn spend(&self) -> f64 {
        self.b * tail(self.q_win, self.s, self.mu_star())
    }
}

pub fn bisect(f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (1e-4, 0.999);
    if f(lo) > 0.0 {
        return lo;
    }
    if f(hi) < 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Best constrained welfare on q ∈ [0,R] step dq, B ∈ [0,b_max] step db with B·P ≤ M.
pub fn grid_max(base: Prim, r: f64, m: f64, dq: f64, b_max: f64, db: f64) -> (f64, f64, f64) {
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    let nq = (r / dq).round() as usize;
    let nb = (b_max / db).round() as usize;
    for i in 0..=nq {
        for j in 0..=nb {
            let p = Prim { q: (i as f64 * dq).min(r), b: j as f64 * db, ..base };
            if p.spend() > m {
                continue;
            }
            let w = p.welfare();
            if w > best.0 {
                best = (w, p.q, p.b);
            }
        }
    }
    best
}
