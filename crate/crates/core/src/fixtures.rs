//! Named dynamics fixtures and the closed-form linear-quadratic oracle.

use crate::calculus::FunctionalWithDerivatives;
use crate::path::HistoryView;
use crate::sde::Dynamics;

/// `b = -x(0)`, `sigma = 1`, `q = 0`, `L = 1`: the workhorse for moment and
/// Ito checks (stationary variance 1/2, transition variance
/// `(1 - e^{-2s})/2` from a zero start).
pub struct OrnsteinUhlenbeck;

impl Dynamics for OrnsteinUhlenbeck {
    fn dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn lipschitz_constant(&self) -> f64 {
        1.0
    }
    fn drift(&self, x: &dyn HistoryView, _u: f64, out: &mut [f64]) {
        out[0] = -x.endpoint()[0];
    }
    fn diffusion(&self, _x: &dyn HistoryView, _u: f64, out: &mut [f64]) {
        out[0] = 1.0;
    }
    fn running_cost(&self, _x: &dyn HistoryView, _u: f64) -> f64 {
        0.0
    }
}

/// `b = 0`, `sigma = 1`, `q = 0`, `L = 1`.
pub struct BrownianMotion;

impl Dynamics for BrownianMotion {
    fn dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn lipschitz_constant(&self) -> f64 {
        1.0
    }
    fn drift(&self, _x: &dyn HistoryView, _u: f64, out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn diffusion(&self, _x: &dyn HistoryView, _u: f64, out: &mut [f64]) {
        out[0] = 1.0;
    }
    fn running_cost(&self, _x: &dyn HistoryView, _u: f64) -> f64 {
        0.0
    }
}

/// Mean-reverting dynamics with a capped quadratic cost `q = x(0)^2 ^ 10`
/// and declared `L = 4`: exercises the coefficient probe with a nonzero,
/// non-smooth running cost that still satisfies both bounds on the standard
/// probe distribution.
pub struct CappedQuadOu;

impl Dynamics for CappedQuadOu {
    fn dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn lipschitz_constant(&self) -> f64 {
        4.0
    }
    fn drift(&self, x: &dyn HistoryView, _u: f64, out: &mut [f64]) {
        out[0] = -x.endpoint()[0];
    }
    fn diffusion(&self, _x: &dyn HistoryView, _u: f64, out: &mut [f64]) {
        out[0] = 1.0;
    }
    fn running_cost(&self, x: &dyn HistoryView, _u: f64) -> f64 {
        let z = x.endpoint()[0];
        (z * z).min(10.0)
    }
}

/// The no-delay linear-quadratic fixture: `b = u`, `sigma = sigma0` constant,
/// `q = x(0)^2 + u^2`. Coefficients depend on the history only through its
/// endpoint, so the problem reduces to a one-dimensional HJB equation with
/// the closed form in [`riccati_a`] / [`lq_value`].
///
/// The declared `L = 4` covers the quadratic cost on the standard probe
/// region (`|x(0)| <= 2`, `|u| <= 1`); the cost is not globally Lipschitz,
/// so the constant is only valid there.
pub struct NoDelayLq {
    pub sigma0: f64,
}

impl Dynamics for NoDelayLq {
    fn dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn lipschitz_constant(&self) -> f64 {
        4.0
    }
    fn drift(&self, _x: &dyn HistoryView, u: f64, out: &mut [f64]) {
        out[0] = u;
    }
    fn diffusion(&self, _x: &dyn HistoryView, _u: f64, out: &mut [f64]) {
        out[0] = self.sigma0;
    }
    fn running_cost(&self, x: &dyn HistoryView, u: f64) -> f64 {
        let z = x.endpoint()[0];
        z * z + u * u
    }
}

/// A genuinely delayed variant: `b = u + kappa * integral_{-H}^0 e^theta
/// x(theta) dtheta` (trapezoid over the view's grid), same diffusion and
/// cost as the LQ fixture. The memory kernel is bounded by `|x|_C`, so the
/// drift stays Lipschitz with constant `max(1, kappa)` in the history.
pub struct ExpMemoryLinear {
    pub sigma0: f64,
    pub kappa: f64,
}

impl ExpMemoryLinear {
    /// Exact for the piecewise-linear representation: on a segment from
    /// `(t0, v0)` to `(t1, v1)` with slope `beta`,
    /// `int e^theta x(theta) dtheta = e^{t1}(v1 - beta) - e^{t0}(v0 - beta)`.
    pub fn memory_integral(x: &dyn HistoryView) -> f64 {
        let mut acc = 0.0;
        let mut prev: Option<(f64, f64)> = None;
        x.for_each_node(&mut |theta, v| {
            if let Some((t0, v0)) = prev {
                let beta = (v[0] - v0) / (theta - t0);
                acc += theta.exp() * (v[0] - beta) - t0.exp() * (v0 - beta);
            }
            prev = Some((theta, v[0]));
        });
        acc
    }
}

impl Dynamics for ExpMemoryLinear {
    fn dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn lipschitz_constant(&self) -> f64 {
        4.0
    }
    fn drift(&self, x: &dyn HistoryView, u: f64, out: &mut [f64]) {
        out[0] = u + self.kappa * Self::memory_integral(x);
    }
    fn diffusion(&self, _x: &dyn HistoryView, _u: f64, out: &mut [f64]) {
        out[0] = self.sigma0;
    }
    fn running_cost(&self, x: &dyn HistoryView, u: f64) -> f64 {
        let z = x.endpoint()[0];
        z * z + u * u
    }
}

// ---------------------------------------------------------------------------
// Closed-form LQ oracle
// ---------------------------------------------------------------------------

/// Positive root of `a^2 + lambda a - 1 = 0`.
pub fn riccati_a(lambda: f64) -> f64 {
    (-lambda + (lambda * lambda + 4.0).sqrt()) / 2.0
}

/// Stationary discounted value `V(z) = a z^2 + sigma0^2 a / lambda` of the
/// no-delay LQ problem; optimal feedback `u* = -a z`.
pub fn lq_value(z: f64, lambda: f64, sigma0: f64) -> f64 {
    let a = riccati_a(lambda);
    a * z * z + sigma0 * sigma0 * a / lambda
}

pub fn lq_optimal_gain(lambda: f64) -> f64 {
    riccati_a(lambda)
}

/// Residual of the LQ value in its one-dimensional stationary equation
/// `-lambda V + inf_u [V'(z) u + 1/2 sigma0^2 V''(z) + z^2 + u^2] = 0`
/// with the exact minimizer `u = -V'(z)/2`. Zero (to roundoff) for all `z`;
/// kept as an executable derivation of the oracle.
pub fn lq_equation_residual(z: f64, lambda: f64, sigma0: f64) -> f64 {
    let a = riccati_a(lambda);
    let v = lq_value(z, lambda, sigma0);
    let vp = 2.0 * a * z;
    let vpp = 2.0 * a;
    let u = -vp / 2.0;
    -lambda * v + vp * u + 0.5 * sigma0 * sigma0 * vpp + z * z + u * u
}

/// The LQ value embedded as a path functional `v(t, x) = V(x(0))` with
/// analytic derivatives (constant in `t`, ordinary derivatives in the
/// endpoint).
pub fn lq_value_functional(lambda: f64, sigma0: f64) -> FunctionalWithDerivatives {
    let a = riccati_a(lambda);
    let offset = sigma0 * sigma0 * a / lambda;
    FunctionalWithDerivatives {
        eval: Box::new(move |_t, x| {
            let z = x.endpoint()[0];
            a * z * z + offset
        }),
        dt: Some(Box::new(|_t, _x| 0.0)),
        dx: Some(Box::new(move |_t, x| vec![2.0 * a * x.endpoint()[0]])),
        dxx: Some(Box::new(move |_t, _x| vec![vec![2.0 * a]])),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::HistoryPath;
    use crate::sde::lipschitz_probe;

    #[test]
    fn riccati_frozen_values() {
        // lambda = 3: a = (-3 + sqrt(13))/2, V(1) = a + a/3 = 4a/3
        let a = riccati_a(3.0);
        assert!((a - 0.302775637731995).abs() < 1e-12);
        assert!((a * a + 3.0 * a - 1.0).abs() < 1e-14);
        assert!((lq_value(1.0, 3.0, 1.0) - 4.0 * a / 3.0).abs() < 1e-15);
        assert!((lq_value(1.0, 3.0, 1.0) - 0.403700850309327).abs() < 1e-12);
    }

    #[test]
    fn lq_oracle_solves_its_equation() {
        for z in [-2.0, -0.5, 0.0, 0.3, 1.0, 2.0] {
            for lambda in [1.0, 3.0, 5.0] {
                for sigma0 in [0.5, 1.0] {
                    assert!(
                        lq_equation_residual(z, lambda, sigma0).abs() < 1e-13,
                        "z {} lambda {}",
                        z,
                        lambda
                    );
                }
            }
        }
    }

    #[test]
    fn capped_quad_probe_passes_with_l4() {
        let rep = lipschitz_probe(&CappedQuadOu, 300, 17, &[0.0]);
        assert!(rep.violation.is_none(), "{:?}", rep.violation);
    }

    #[test]
    fn lq_and_exp_memory_probes_pass() {
        let controls = [-1.0, -0.5, 0.0, 0.5, 1.0];
        let rep = lipschitz_probe(&NoDelayLq { sigma0: 1.0 }, 300, 17, &controls);
        assert!(rep.violation.is_none(), "{:?}", rep.violation);
        let fix = ExpMemoryLinear {
            sigma0: 1.0,
            kappa: 0.5,
        };
        let rep = lipschitz_probe(&fix, 300, 17, &controls);
        assert!(rep.violation.is_none(), "{:?}", rep.violation);
    }

    #[test]
    fn memory_integral_of_constant_path() {
        // x = c on [-H, 0] (ramping from 0 at the horizon): integral close to
        // c (1 - e^{-H}) up to the single ramp segment
        let h = 4.0;
        let c = 1.5;
        let x = HistoryPath::continuous(
            vec![-h, -h + 0.1, 0.0],
            vec![vec![0.0], vec![c], vec![c]],
        )
        .unwrap();
        let got = ExpMemoryLinear::memory_integral(&x);
        let want = c * (1.0 - (-(h - 0.1f64)).exp());
        assert!((got - want).abs() < 0.01 * c, "got {} want {}", got, want);
    }
}
