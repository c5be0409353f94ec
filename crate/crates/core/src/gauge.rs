//! The smooth gauge family that plays the role of `|x - a|^{2m}` on path space.
//!
//! For two time/path pairs `(s, x)` and `(t, y)` align the earlier one by a
//! shift and set
//!
//! ```text
//! n = |x_{(s-t) v 0} - y_{(t-s) v 0}|_C,   e = |x(0) - y(0)|,
//! S_m = (n^{2m} - e^{2m})^3 / n^{4m}       (0 when n = 0),
//! Upsilon^{m,M} = S_m + M e^{2m},
//! UpsilonBar    = Upsilon^{m,M} + (s - t)^2   (m = 3, M >= 3).
//! ```
//!
//! `S_m` is constant in the endpoint wherever the endpoint gap dominates the
//! strict sup (`e >= |x - a|_{C-}`), which is what makes the family pathwise
//! twice differentiable even though `| . |_C` itself is not.
//!
//! Vertical derivatives in `x` at a frozen anchor `(t_hat, a)`, valid on the
//! branch `e < |x - a_{t - t_hat}|_{C-}` (elsewhere they vanish), with
//! `w = x(0) - a(0)`, `A = n^{2m} - e^{2m}` and the convention `e^0 = 1`:
//!
//! ```text
//! d_{x_i} S_m  = -6m A^2 e^{2m-2} w_i / n^{4m}
//! d_{x_i x_j} S_m = [24 m^2 A e^{4m-4} - 12 m (m-1) A^2 e^{2m-4}] w_i w_j / n^{4m}
//!                   - 6m A^2 e^{2m-2} delta_ij / n^{4m}
//! d_t S_m = 0   (the alignment shift freezes the sup exactly)
//! ```

use thiserror::Error;

use crate::calculus::{identity_matrix, zero_matrix, FunctionalWithDerivatives, Matrix};
use crate::path::{diff_norms, euclid_norm, HistoryPath, HistoryView, TimedPath};

#[derive(Debug, Error)]
pub enum GaugeError {
    #[error("m must be >= 1, got {0}")]
    BadM(u32),
    #[error("M must be >= 3 for the sandwich bounds, got {0}")]
    BadBigM(f64),
    #[error("probe time {0} must be >= anchor time {1}")]
    TimeOrder(f64, f64),
}

#[derive(Debug, Clone, Copy)]
pub struct GaugeSpec {
    pub m: u32,
    pub big_m: f64,
}

impl GaugeSpec {
    pub fn new(m: u32, big_m: f64) -> Result<Self, GaugeError> {
        if m < 1 {
            return Err(GaugeError::BadM(m));
        }
        if !(big_m >= 3.0) {
            return Err(GaugeError::BadBigM(big_m));
        }
        Ok(GaugeSpec { m, big_m })
    }

    /// The sextic member used by the doubling argument: `m = 3`, `M = 3`.
    pub fn sextic() -> Self {
        GaugeSpec { m: 3, big_m: 3.0 }
    }
}

/// `e^k` with the convention `0^0 = 1` (the formulas contain `e^{2m-2}` etc.
/// whose coefficient already vanishes when it must).
fn pow_conv(e: f64, k: i64) -> f64 {
    if k == 0 {
        1.0
    } else {
        e.powi(k as i32)
    }
}

fn s_from_norms(m: u32, n: f64, e: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    let n2m = n.powi(2 * m as i32);
    let e2m = e.powi(2 * m as i32);
    let a = n2m - e2m;
    a * a * a / (n2m * n2m)
}

/// Alignment of two time/path pairs: shift the earlier one across the time
/// gap, then measure the sup and endpoint distances.
pub struct AlignedNorms {
    pub n: f64,
    pub c_minus: f64,
    pub e: f64,
    /// `x(0) - y(0)`
    pub w: Vec<f64>,
}

pub fn align(p: &TimedPath, q: &TimedPath) -> AlignedNorms {
    let xs;
    let ys;
    let (x, y): (&HistoryPath, &HistoryPath) = if p.time <= q.time {
        xs = p.path.shift(q.time - p.time);
        (&xs, &q.path)
    } else {
        ys = q.path.shift(p.time - q.time);
        (&p.path, &ys)
    };
    let d = diff_norms(x, y);
    let w: Vec<f64> = p
        .path
        .endpoint()
        .iter()
        .zip(q.path.endpoint())
        .map(|(a, b)| a - b)
        .collect();
    AlignedNorms {
        n: d.c,
        c_minus: d.c_minus,
        e: d.endpoint,
        w,
    }
}

pub fn s_m(spec: &GaugeSpec, p: &TimedPath, q: &TimedPath) -> f64 {
    let a = align(p, q);
    s_from_norms(spec.m, a.n, a.e)
}

pub fn upsilon(spec: &GaugeSpec, p: &TimedPath, q: &TimedPath) -> f64 {
    let a = align(p, q);
    s_from_norms(spec.m, a.n, a.e) + spec.big_m * a.e.powi(2 * spec.m as i32)
}

pub fn upsilon_bar(spec: &GaugeSpec, p: &TimedPath, q: &TimedPath) -> f64 {
    upsilon(spec, p, q) + (p.time - q.time) * (p.time - q.time)
}

/// Equal-time convenience: `Upsilon^{m,M}(x - y)` for plain histories.
pub fn upsilon_pair(spec: &GaugeSpec, x: &HistoryPath, y: &HistoryPath) -> f64 {
    let d = diff_norms(x, y);
    s_from_norms(spec.m, d.c, d.endpoint) + spec.big_m * d.endpoint.powi(2 * spec.m as i32)
}

pub fn upsilon_path(spec: &GaugeSpec, x: &HistoryPath) -> f64 {
    let n = x.sup_norm();
    let e = euclid_norm(x.endpoint());
    s_from_norms(spec.m, n, e) + spec.big_m * e.powi(2 * spec.m as i32)
}

// ---------------------------------------------------------------------------
// Anchored gauge: the test-function building block phi(t, x) = UpsilonBar
// against a frozen anchor, with analytic pathwise derivatives.
// ---------------------------------------------------------------------------

#[derive(Clone)]
pub struct AnchoredGauge {
    pub spec: GaugeSpec,
    pub anchor: TimedPath,
    /// Include the `(t - t_hat)^2` term (UpsilonBar vs Upsilon).
    pub with_time_term: bool,
    anchor_is_zero: bool,
}

struct ProbeNorms {
    n: f64,
    c_minus: f64,
    e: f64,
    w: Vec<f64>,
}

impl AnchoredGauge {
    pub fn new(spec: GaugeSpec, anchor: TimedPath, with_time_term: bool) -> Self {
        let anchor_is_zero = anchor.path.sup_norm() == 0.0;
        AnchoredGauge {
            spec,
            anchor,
            with_time_term,
            anchor_is_zero,
        }
    }

    /// Zero anchor at time 0: evaluation along simulator views is O(1).
    pub fn at_zero(spec: GaugeSpec, dim: usize, with_time_term: bool) -> Self {
        Self::new(
            spec,
            TimedPath::new(0.0, HistoryPath::zero(dim, 1.0)),
            with_time_term,
        )
    }

    fn norms(&self, t: f64, x: &dyn HistoryView) -> ProbeNorms {
        if self.anchor_is_zero {
            ProbeNorms {
                n: x.sup_norm(),
                c_minus: x.sup_norm_strict(),
                e: euclid_norm(x.endpoint()),
                w: x.endpoint().to_vec(),
            }
        } else {
            let h = t - self.anchor.time;
            assert!(h >= -1e-12, "probe earlier than anchor");
            let shifted = self.anchor.path.shift(h.max(0.0));
            let d = diff_norms(&x.to_path(), &shifted);
            let w = x
                .endpoint()
                .iter()
                .zip(shifted.endpoint())
                .map(|(a, b)| a - b)
                .collect();
            ProbeNorms {
                n: d.c,
                c_minus: d.c_minus,
                e: d.endpoint,
                w,
            }
        }
    }

    pub fn value(&self, t: f64, x: &dyn HistoryView) -> f64 {
        let p = self.norms(t, x);
        let m = self.spec.m as i32;
        let mut v = s_from_norms(self.spec.m, p.n, p.e) + self.spec.big_m * p.e.powi(2 * m);
        if self.with_time_term {
            let dt = t - self.anchor.time;
            v += dt * dt;
        }
        v
    }

    /// `d_t` of the anchored gauge. `S_m` and the power term are exactly
    /// horizontally flat (the alignment shift freezes both sups), so only the
    /// time term contributes.
    pub fn dt(&self, t: f64, _x: &dyn HistoryView) -> f64 {
        if self.with_time_term {
            2.0 * (t - self.anchor.time)
        } else {
            0.0
        }
    }

    /// Analytic vertical gradient of `S_m` alone.
    pub fn grad_s_m(&self, t: f64, x: &dyn HistoryView) -> Vec<f64> {
        let p = self.norms(t, x);
        let d = x.dim();
        if p.n == 0.0 || p.e >= p.c_minus {
            return vec![0.0; d];
        }
        let m = self.spec.m as i64;
        let n2m = p.n.powi(2 * m as i32);
        let a = n2m - p.e.powi(2 * m as i32);
        let coef = -6.0 * m as f64 * a * a * pow_conv(p.e, 2 * m - 2) / (n2m * n2m);
        p.w.iter().map(|wi| coef * wi).collect()
    }

    /// Analytic vertical Hessian of `S_m` alone.
    pub fn hess_s_m(&self, t: f64, x: &dyn HistoryView) -> Matrix {
        let p = self.norms(t, x);
        let d = x.dim();
        if p.n == 0.0 || p.e >= p.c_minus {
            return zero_matrix(d);
        }
        let m = self.spec.m as i64;
        let mf = m as f64;
        let n2m = p.n.powi(2 * m as i32);
        let denom = n2m * n2m;
        let a = n2m - p.e.powi(2 * m as i32);
        let mut rank1 = 24.0 * mf * mf * a * pow_conv(p.e, 4 * m - 4) / denom;
        if m > 1 {
            rank1 -= 12.0 * mf * (mf - 1.0) * a * a * pow_conv(p.e, 2 * m - 4) / denom;
        }
        let diag = -6.0 * mf * a * a * pow_conv(p.e, 2 * m - 2) / denom;
        let mut h = zero_matrix(d);
        for i in 0..d {
            for j in 0..d {
                h[i][j] = rank1 * p.w[i] * p.w[j];
            }
            h[i][i] += diag;
        }
        h
    }

    /// Full vertical gradient of the anchored gauge (`S_m` plus power term).
    pub fn grad(&self, t: f64, x: &dyn HistoryView) -> Vec<f64> {
        let p = self.norms(t, x);
        let mut g = self.grad_s_m(t, x);
        let (pg, _) = power_term_derivs_from(self.spec.m, p.e, &p.w);
        for i in 0..g.len() {
            g[i] += self.spec.big_m * pg[i];
        }
        g
    }

    /// Full vertical Hessian of the anchored gauge.
    pub fn hess(&self, t: f64, x: &dyn HistoryView) -> Matrix {
        let p = self.norms(t, x);
        let mut h = self.hess_s_m(t, x);
        let (_, ph) = power_term_derivs_from(self.spec.m, p.e, &p.w);
        for i in 0..h.len() {
            for j in 0..h.len() {
                h[i][j] += self.spec.big_m * ph[i][j];
            }
        }
        h
    }

    /// Relative distance of the probe to the derivative branch boundary
    /// `e = |x - a|_{C-}`; finite-difference checks stay away from small
    /// values of this.
    pub fn kink_distance(&self, t: f64, x: &dyn HistoryView) -> f64 {
        let p = self.norms(t, x);
        (p.c_minus - p.e).abs() / p.n.max(1.0)
    }

    /// Package the anchored gauge as a functional with all three analytic
    /// derivatives (for Ito checks and HJB test functions).
    pub fn functional(&self) -> FunctionalWithDerivatives {
        let g0 = self.clone();
        let g1 = self.clone();
        let g2 = self.clone();
        let g3 = self.clone();
        FunctionalWithDerivatives {
            eval: Box::new(move |t, x| g0.value(t, x)),
            dt: Some(Box::new(move |t, x| g1.dt(t, x))),
            dx: Some(Box::new(move |t, x| g2.grad(t, x))),
            dxx: Some(Box::new(move |t, x| g3.hess(t, x))),
        }
    }
}

/// Derivatives of the smooth power term `e^{2m} = |x(0) - a(0)|^{2m}` with
/// respect to the endpoint (an ordinary function of `x(0)`):
///
/// ```text
/// grad = 2m e^{2m-2} w,    hess = 2m e^{2m-2} I + 4m(m-1) e^{2m-4} w w^T
/// ```
pub fn power_term_derivs_from(m: u32, e: f64, w: &[f64]) -> (Vec<f64>, Matrix) {
    let d = w.len();
    let m = m as i64;
    let mf = m as f64;
    let c1 = 2.0 * mf * pow_conv(e, 2 * m - 2);
    let grad: Vec<f64> = w.iter().map(|wi| c1 * wi).collect();
    let mut hess = identity_matrix(d);
    for i in 0..d {
        hess[i][i] = c1;
    }
    if m > 1 {
        let c2 = 4.0 * mf * (mf - 1.0) * pow_conv(e, 2 * m - 4);
        for i in 0..d {
            for j in 0..d {
                hess[i][j] += c2 * w[i] * w[j];
            }
        }
    }
    (grad, hess)
}

// ---------------------------------------------------------------------------
// Inequality slacks (each >= 0 when the corresponding bound holds).
// ---------------------------------------------------------------------------

/// Sandwich `|x|_C^{2m} <= Upsilon^{m,M}(x) <= M |x|_C^{2m}` (needs `M >= 3`).
/// Returns `(Upsilon - lower, upper - Upsilon)`.
pub fn sandwich_slack(spec: &GaugeSpec, x: &HistoryPath) -> (f64, f64) {
    let u = upsilon_path(spec, x);
    let pow = x.sup_norm().powi(2 * spec.m as i32);
    (u - pow, spec.big_m * pow - u)
}

/// Doubling bound `Upsilon(x + y) <= 2^{2m-1} (Upsilon(x) + Upsilon(y))`.
/// Returns the slack (right minus left).
pub fn doubling_slack(spec: &GaugeSpec, x: &HistoryPath, y: &HistoryPath) -> f64 {
    let lhs = upsilon_path(spec, &x.add(y));
    let rhs = (2f64).powi(2 * spec.m as i32 - 1) * (upsilon_path(spec, x) + upsilon_path(spec, y));
    rhs - lhs
}

/// Coercivity of the sextic member:
/// `UpsilonBar((s,x),(t,y)) >= n^6 + (s - t)^2` with the aligned sup `n`.
/// Returns the slack.
pub fn coercivity_slack(spec: &GaugeSpec, p: &TimedPath, q: &TimedPath) -> f64 {
    let a = align(p, q);
    let gap = p.time - q.time;
    upsilon_bar(spec, p, q) - (a.n.powi(2 * spec.m as i32) + gap * gap)
}

/// Gauge property of the sextic member: `UpsilonBar <= delta` forces
/// `d_inf <= delta^{1/6} + delta^{1/2}`. Returns `Some(slack)` when the
/// premise holds, `None` otherwise.
pub fn gauge_property_slack(
    spec: &GaugeSpec,
    p: &TimedPath,
    q: &TimedPath,
    delta: f64,
) -> Option<f64> {
    let ub = upsilon_bar(spec, p, q);
    if ub > delta {
        return None;
    }
    let d = crate::path::d_infinity(p, q);
    let exp = 1.0 / (2.0 * spec.m as f64);
    Some(delta.powf(exp) + delta.sqrt() - d)
}

/// The spike/plateau pair showing that no gauge with these bounds can exist
/// under the unshifted distance `|t - s| + |x - y|_C`: the pair is far in
/// that distance (close to 1) while `UpsilonBar -> 0`.
///
/// `x_n` ramps from 0 to 1 on `[-1/n, 0]`; `y_n` holds the plateau one step
/// longer, starting the ramp at `-2/n`. Then `x_n = (y_n)_{1/n}` shifted, so
/// the pair `((s, x_n), (s + 1/n, y_n))`... (note the roles) has
/// `d_inf = 1/n` while the unshifted sup distance is the full plateau height.
pub fn counterexample_pair(n: u32) -> (TimedPath, TimedPath) {
    let n = n as f64;
    let x = HistoryPath::continuous(vec![-1.0 / n, 0.0], vec![vec![0.0], vec![1.0]]).unwrap();
    let y = HistoryPath::continuous(
        vec![-2.0 / n, -1.0 / n, 0.0],
        vec![vec![0.0], vec![1.0], vec![1.0]],
    )
    .unwrap();
    (TimedPath::new(0.0, x), TimedPath::new(1.0 / n, y))
}
