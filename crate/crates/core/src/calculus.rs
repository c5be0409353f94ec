//! Numeric Dupire derivatives and the functional Ito residual.
//!
//! The horizontal derivative extends time while freezing the path endpoint,
//!
//! ```text
//! d_t f(s, x) = lim_{h -> 0+} [f(s + h, x_h) - f(s, x)] / h
//! ```
//!
//! and the vertical derivatives bump the endpoint value only,
//!
//! ```text
//! d_{x_i} f(s, x) = lim_{h -> 0} [f(s, x + h e_i 1_{{0}}) - f(s, x)] / h
//! ```
//!
//! The bump exits the continuous paths: it always produces a cadlag path with
//! a jump at 0, which is why the derivative domain is the cadlag space.

use thiserror::Error;

use crate::path::{HistoryView, TimedPath};
use crate::sde::Trajectory;

pub type Matrix = Vec<Vec<f64>>;

pub fn zero_matrix(d: usize) -> Matrix {
    vec![vec![0.0; d]; d]
}

pub fn identity_matrix(d: usize) -> Matrix {
    let mut m = zero_matrix(d);
    for i in 0..d {
        m[i][i] = 1.0;
    }
    m
}

#[derive(Debug, Error)]
pub enum CalcError {
    #[error("functional is missing the {0} derivative")]
    MissingDerivative(&'static str),
    #[error("record length {got} does not match trajectory grid {expected}")]
    GridMismatch { expected: usize, got: usize },
}

pub type EvalFn = dyn Fn(f64, &dyn HistoryView) -> f64 + Send + Sync;
pub type GradFn = dyn Fn(f64, &dyn HistoryView) -> Vec<f64> + Send + Sync;
pub type HessFn = dyn Fn(f64, &dyn HistoryView) -> Matrix + Send + Sync;
pub type EvalBox = Box<EvalFn>;

/// A path functional together with (optional) analytic pathwise derivatives.
///
/// Evaluators take `(time, history)` so they run on borrowed simulator views
/// as well as on materialized [`TimedPath`]s.
pub struct FunctionalWithDerivatives {
    pub eval: Box<EvalFn>,
    pub dt: Option<Box<EvalFn>>,
    pub dx: Option<Box<GradFn>>,
    pub dxx: Option<Box<HessFn>>,
}

impl FunctionalWithDerivatives {
    pub fn from_eval(eval: impl Fn(f64, &dyn HistoryView) -> f64 + Send + Sync + 'static) -> Self {
        FunctionalWithDerivatives {
            eval: Box::new(eval),
            dt: None,
            dx: None,
            dxx: None,
        }
    }

    pub fn eval_at(&self, p: &TimedPath) -> f64 {
        (self.eval)(p.time, &p.path)
    }

    pub fn dt_at(&self, p: &TimedPath) -> Result<f64, CalcError> {
        let f = self.dt.as_ref().ok_or(CalcError::MissingDerivative("horizontal"))?;
        Ok(f(p.time, &p.path))
    }

    pub fn dx_at(&self, p: &TimedPath) -> Result<Vec<f64>, CalcError> {
        let f = self.dx.as_ref().ok_or(CalcError::MissingDerivative("vertical gradient"))?;
        Ok(f(p.time, &p.path))
    }

    pub fn dxx_at(&self, p: &TimedPath) -> Result<Matrix, CalcError> {
        let f = self.dxx.as_ref().ok_or(CalcError::MissingDerivative("vertical Hessian"))?;
        Ok(f(p.time, &p.path))
    }
}

/// One-sided forward quotient for the horizontal derivative.
pub fn horizontal_fd(f: &EvalFn, p: &TimedPath, h: f64) -> f64 {
    assert!(h > 0.0);
    let shifted = p.path.shift(h);
    (f(p.time + h, &shifted) - f(p.time, &p.path)) / h
}

/// Richardson-extrapolated forward quotient (first-order one-sided stencil:
/// `2 D(h/2) - D(h)` cancels the `O(h)` term).
pub fn horizontal_fd_richardson(f: &EvalFn, p: &TimedPath, h: f64) -> f64 {
    2.0 * horizontal_fd(f, p, h / 2.0) - horizontal_fd(f, p, h)
}

/// Central difference per coordinate using the vertical bump.
pub fn vertical_grad_fd(f: &EvalFn, p: &TimedPath, h: f64) -> Vec<f64> {
    assert!(h > 0.0);
    let d = p.path.dim();
    (0..d)
        .map(|i| {
            let up = p.path.bump(i, h);
            let dn = p.path.bump(i, -h);
            (f(p.time, &up) - f(p.time, &dn)) / (2.0 * h)
        })
        .collect()
}

/// `(4 D(h/2) - D(h)) / 3`: cancels the `O(h^2)` term of the central stencil.
pub fn vertical_grad_fd_richardson(f: &EvalFn, p: &TimedPath, h: f64) -> Vec<f64> {
    let coarse = vertical_grad_fd(f, p, h);
    let fine = vertical_grad_fd(f, p, h / 2.0);
    fine.iter().zip(&coarse).map(|(a, b)| (4.0 * a - b) / 3.0).collect()
}

/// Symmetric second-difference stencil from nested vertical bumps.
///
/// Returns the symmetrized matrix together with the worst absolute asymmetry
/// of the raw stencil (a diagnostic; the symmetric part is what gets used).
pub fn vertical_hess_fd(f: &EvalFn, p: &TimedPath, h: f64) -> (Matrix, f64) {
    assert!(h > 0.0);
    let d = p.path.dim();
    let f0 = f(p.time, &p.path);
    let mut raw = zero_matrix(d);
    for i in 0..d {
        let up = p.path.bump(i, h);
        let dn = p.path.bump(i, -h);
        raw[i][i] = (f(p.time, &up) - 2.0 * f0 + f(p.time, &dn)) / (h * h);
        for j in (i + 1)..d {
            let pp = p.path.bump(i, h).bump(j, h);
            let pm = p.path.bump(i, h).bump(j, -h);
            let mp = p.path.bump(i, -h).bump(j, h);
            let mm = p.path.bump(i, -h).bump(j, -h);
            let v = (f(p.time, &pp) - f(p.time, &pm) - f(p.time, &mp) + f(p.time, &mm))
                / (4.0 * h * h);
            raw[i][j] = v;
            raw[j][i] = v;
        }
    }
    // the 4-point cross stencil is symmetric by construction; asymmetry can
    // only come from composing two gradient stencils, which we also support
    let mut asym: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            asym = asym.max((raw[i][j] - raw[j][i]).abs());
        }
    }
    let mut sym = zero_matrix(d);
    for i in 0..d {
        for j in 0..d {
            sym[i][j] = 0.5 * (raw[i][j] + raw[j][i]);
        }
    }
    (sym, asym)
}

pub fn vertical_hess_fd_richardson(f: &EvalFn, p: &TimedPath, h: f64) -> Matrix {
    let (coarse, _) = vertical_hess_fd(f, p, h);
    let (fine, _) = vertical_hess_fd(f, p, h / 2.0);
    let d = coarse.len();
    let mut out = zero_matrix(d);
    for i in 0..d {
        for j in 0..d {
            out[i][j] = (4.0 * fine[i][j] - coarse[i][j]) / 3.0;
        }
    }
    out
}

/// Default step sizes: balance truncation against cancellation for
/// O(1)-scaled functionals.
pub fn default_vertical_step(x: &dyn HistoryView) -> f64 {
    1e-4 * x.sup_norm().max(1.0)
}

pub fn default_horizontal_step(t: f64) -> f64 {
    1e-4 * t.max(1.0)
}

/// Per-path residual of the functional Ito formula along a simulated
/// trajectory with drift record `v`, diffusion record `w` and Brownian
/// increments `dW`:
///
/// ```text
/// r = f(s, X_s) - f(t, X_t)
///     - sum_k [d_t f + <d_x f, v_k> + 1/2 tr(d_xx f w_k w_k^T)] dt
///     - sum_k <d_x f, w_k dW_k>
/// ```
///
/// All integrals are left-point Euler sums on the trajectory grid; the caller
/// aggregates mean/std over many paths.
pub fn ito_residual(f: &FunctionalWithDerivatives, traj: &Trajectory) -> Result<f64, CalcError> {
    let dt_f = f.dt.as_ref().ok_or(CalcError::MissingDerivative("horizontal"))?;
    let dx_f = f.dx.as_ref().ok_or(CalcError::MissingDerivative("vertical gradient"))?;
    let dxx_f = f.dxx.as_ref().ok_or(CalcError::MissingDerivative("vertical Hessian"))?;
    let steps = traj.steps();
    if traj.drift_rec.len() != steps || traj.vol_rec.len() != steps || traj.dw_rec.len() != steps {
        return Err(CalcError::GridMismatch {
            expected: steps,
            got: traj.drift_rec.len(),
        });
    }
    let d = traj.dim();
    let n = traj.noise_dim();
    let dt = traj.dt;
    let mut drift_int = 0.0;
    let mut mart_int = 0.0;
    for k in 0..steps {
        let time = traj.time(k);
        let view = traj.view_at(k);
        let dtf = dt_f(time, &view);
        let grad = dx_f(time, &view);
        let hess = dxx_f(time, &view);
        let b = &traj.drift_rec[k];
        let sig = &traj.vol_rec[k]; // row-major d x n
        let dw = &traj.dw_rec[k];
        let mut drift_term = dtf;
        for i in 0..d {
            drift_term += grad[i] * b[i];
        }
        // 1/2 tr(H sigma sigma^T) = 1/2 sum_{i,j,l} H_ij sigma_jl sigma_il
        let mut tr = 0.0;
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for l in 0..n {
                    s += sig[j * n + l] * sig[i * n + l];
                }
                tr += hess[i][j] * s;
            }
        }
        drift_term += 0.5 * tr;
        drift_int += drift_term * dt;
        for i in 0..d {
            let mut s = 0.0;
            for l in 0..n {
                s += sig[i * n + l] * dw[l];
            }
            mart_int += grad[i] * s;
        }
    }
    let t0 = traj.start_time;
    let s_end = traj.time(steps);
    let f_end = (f.eval)(s_end, &traj.view_at(steps));
    let f_start = (f.eval)(t0, &traj.view_at(0));
    Ok(f_end - f_start - drift_int - mart_int)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::{HistoryPath, TimedPath};

    fn probe() -> TimedPath {
        let p = HistoryPath::continuous(
            vec![-2.0, -1.0, 0.0],
            vec![vec![0.0, 0.0], vec![1.0, -0.5], vec![0.5, 1.5]],
        )
        .unwrap();
        TimedPath::new(1.0, p)
    }

    #[test]
    fn horizontal_of_time_is_one() {
        let f: Box<EvalFn> = Box::new(|t, _x| t);
        for h in [1e-2, 1e-4] {
            assert!((horizontal_fd(&f, &probe(), h) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn horizontal_of_endpoint_square_is_zero() {
        // the shift freezes x(0), so |x(0)|^2 has zero horizontal derivative
        let f: Box<EvalFn> = Box::new(|_t, x| {
            x.endpoint().iter().map(|a| a * a).sum::<f64>()
        });
        assert_eq!(horizontal_fd(&f, &probe(), 1e-3), 0.0);
    }

    #[test]
    fn vertical_grad_of_endpoint_square() {
        let f: Box<EvalFn> = Box::new(|_t, x| {
            x.endpoint().iter().map(|a| a * a).sum::<f64>()
        });
        let p = probe();
        let g = vertical_grad_fd(&f, &p, 1e-5);
        let v = p.path.endpoint();
        for i in 0..2 {
            assert!((g[i] - 2.0 * v[i]).abs() < 1e-8, "{:?}", g);
        }
        let c: Box<EvalFn> = Box::new(|_t, _x| 42.0);
        assert_eq!(vertical_grad_fd(&c, &p, 1e-5), vec![0.0, 0.0]);
    }

    #[test]
    fn vertical_grad_stationary_point() {
        let a0 = [0.5, 1.5];
        let f: Box<EvalFn> = Box::new(move |_t, x| {
            x.endpoint()
                .iter()
                .zip(&a0)
                .map(|(v, a)| (v - a) * (v - a))
                .sum::<f64>()
        });
        let g = vertical_grad_fd(&f, &probe(), 1e-5);
        assert!(g.iter().all(|a| a.abs() < 1e-9));
    }

    #[test]
    fn vertical_hess_of_endpoint_square_is_2i() {
        let f: Box<EvalFn> = Box::new(|_t, x| {
            x.endpoint().iter().map(|a| a * a).sum::<f64>()
        });
        let (h, asym) = vertical_hess_fd(&f, &probe(), 1e-4);
        assert!(asym < 1e-12);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 2.0 } else { 0.0 };
                assert!((h[i][j] - want).abs() < 1e-5, "{:?}", h);
            }
        }
    }

    #[test]
    fn vertical_hess_of_quartic_power_term() {
        // f = |x(0) - a0|^4 at x(0) - a0 = (1, 0): Hessian 4 I + 8 e1 e1^T
        let p = probe();
        let v = p.path.endpoint().to_vec();
        let a0 = [v[0] - 1.0, v[1]];
        let f: Box<EvalFn> = Box::new(move |_t, x| {
            let e2: f64 = x
                .endpoint()
                .iter()
                .zip(&a0)
                .map(|(v, a)| (v - a) * (v - a))
                .sum();
            e2 * e2
        });
        let h = vertical_hess_fd_richardson(&f, &p, 1e-3);
        let want = [[12.0, 0.0], [0.0, 4.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((h[i][j] - want[i][j]).abs() < 1e-6, "{:?}", h);
            }
        }
    }
}
