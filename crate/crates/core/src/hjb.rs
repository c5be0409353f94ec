//! The Hamiltonian, the path-dependent generator, and residual machinery for
//! the stationary discounted equation
//!
//! ```text
//! lambda V(x) = d_t V(x) + inf_u [ <d_x V, b(x,u)> + 1/2 tr(d_xx V s s^T) + q(x,u) ]
//! ```
//!
//! on the cadlag history space, plus a sampled viscosity-membership probe, a
//! no-delay reduction detector, and coefficient-perturbation stability runs.

use std::sync::Arc;

use rayon::prelude::*;

use crate::calculus::{CalcError, FunctionalWithDerivatives, Matrix};
use crate::path::{HistoryPath, HistoryView, TimedPath};
use crate::sde::{mean_se, Dynamics, SimConfig, SimError};
use crate::value::{value_v, ControlLaw, ControlProblem};

/// `1/2 tr(H s s^T)` for a row-major `d x n` diffusion block.
fn half_trace(hess: &Matrix, sigma: &[f64], d: usize, n: usize) -> f64 {
    let mut tr = 0.0;
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for l in 0..n {
                s += sigma[j * n + l] * sigma[i * n + l];
            }
            tr += hess[i][j] * s;
        }
    }
    0.5 * tr
}

/// Pointwise Hamiltonian
/// `H(x, p, L) = inf_u [ <p, b(x,u)> + 1/2 tr(s s^T L) + q(x,u) ]`
/// over the finite action set; ties resolve to the first action in order.
pub fn hamiltonian(
    x: &dyn HistoryView,
    p: &[f64],
    l_mat: &Matrix,
    dynamics: &dyn Dynamics,
    control_set: &[f64],
) -> (f64, f64) {
    assert!(!control_set.is_empty(), "empty control set");
    let d = dynamics.dim();
    let n = dynamics.noise_dim();
    let mut b = vec![0.0; d];
    let mut sig = vec![0.0; d * n];
    let mut best = f64::INFINITY;
    let mut arg = control_set[0];
    for &u in control_set {
        dynamics.drift(x, u, &mut b);
        dynamics.diffusion(x, u, &mut sig);
        let mut val = dynamics.running_cost(x, u);
        for i in 0..d {
            val += p[i] * b[i];
        }
        val += half_trace(l_mat, &sig, d, n);
        if val < best {
            best = val;
            arg = u;
        }
    }
    (best, arg)
}

/// Path-dependent generator applied to a smooth functional at `(s, x)` with
/// a frozen control:
/// `L^u phi = d_t phi + <d_x phi, b(x,u)> + 1/2 tr(d_xx phi s s^T)`.
pub fn generator(
    phi: &FunctionalWithDerivatives,
    s: f64,
    x: &HistoryPath,
    u: f64,
    dynamics: &dyn Dynamics,
) -> Result<f64, CalcError> {
    let probe = TimedPath::new(s, x.clone());
    let dt = phi.dt_at(&probe)?;
    let grad = phi.dx_at(&probe)?;
    let hess = phi.dxx_at(&probe)?;
    let d = dynamics.dim();
    let n = dynamics.noise_dim();
    let mut b = vec![0.0; d];
    let mut sig = vec![0.0; d * n];
    dynamics.drift(x, u, &mut b);
    dynamics.diffusion(x, u, &mut sig);
    let mut out = dt;
    for i in 0..d {
        out += grad[i] * b[i];
    }
    out += half_trace(&hess, &sig, d, n);
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct HjbResidualReport {
    pub time: f64,
    /// `lambda phi - d_t phi - H(x, d_x phi, d_xx phi)`; zero for a classical
    /// solution.
    pub residual: f64,
    pub lambda_term: f64,
    pub dt_term: f64,
    pub hamiltonian: f64,
    pub minimizer: f64,
}

/// Residual of the stationary equation at one probe, for a candidate with
/// analytic derivatives. The report's components recompose to the residual
/// exactly (`residual = lambda_term - dt_term - hamiltonian`).
pub fn classical_residual(
    phi: &FunctionalWithDerivatives,
    probe: &TimedPath,
    problem: &ControlProblem,
) -> Result<HjbResidualReport, CalcError> {
    let grad = phi.dx_at(probe)?;
    let hess = phi.dxx_at(probe)?;
    let dt_term = phi.dt_at(probe)?;
    let (ham, arg) = hamiltonian(
        &probe.path,
        &grad,
        &hess,
        problem.dynamics.as_ref(),
        &problem.control_set,
    );
    let lambda_term = problem.lambda * phi.eval_at(probe);
    Ok(HjbResidualReport {
        time: probe.time,
        residual: lambda_term - dt_term - ham,
        lambda_term,
        dt_term,
        hamiltonian: ham,
        minimizer: arg,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Semijet {
    Sub,
    Super,
}

#[derive(Debug, Clone)]
pub struct ViscosityReport {
    pub side: Semijet,
    /// Worst sampled extremality gap of `v - phi` at the probe: `>= 0` means
    /// no sampled point beats the probe.
    pub membership_margin: f64,
    /// Slack in the differential inequality at the probe (`>= 0` means it
    /// holds).
    pub inequality_slack: f64,
    pub holds: bool,
    /// Always set: this is a sampled membership check, not a proof.
    pub note: &'static str,
}

/// Sampled viscosity-inequality probe. For the sub side it checks that
/// `v - phi` is maximal at the probe among the supplied sample points and
/// that `lambda v <= d_t phi + H(x, d_x phi, d_xx phi)` there; the super side
/// flips both. The membership part only inspects the given samples.
pub fn viscosity_probe(
    value: &(dyn Fn(&TimedPath) -> f64 + Sync),
    phi: &FunctionalWithDerivatives,
    probe: &TimedPath,
    samples: &[TimedPath],
    problem: &ControlProblem,
    side: Semijet,
) -> Result<ViscosityReport, CalcError> {
    let gap_at = |p: &TimedPath| value(p) - phi.eval_at(p);
    let at_probe = gap_at(probe);
    let mut margin = f64::INFINITY;
    for s in samples {
        let g = gap_at(s);
        let m = match side {
            Semijet::Sub => at_probe - g,
            Semijet::Super => g - at_probe,
        };
        margin = margin.min(m);
    }
    if samples.is_empty() {
        margin = 0.0;
    }
    let grad = phi.dx_at(probe)?;
    let hess = phi.dxx_at(probe)?;
    let dt_term = phi.dt_at(probe)?;
    let (ham, _) = hamiltonian(
        &probe.path,
        &grad,
        &hess,
        problem.dynamics.as_ref(),
        &problem.control_set,
    );
    let lhs = problem.lambda * value(probe);
    let slack = match side {
        Semijet::Sub => dt_term + ham - lhs,
        Semijet::Super => lhs - dt_term - ham,
    };
    Ok(ViscosityReport {
        side,
        membership_margin: margin,
        inequality_slack: slack,
        holds: margin >= -1e-12 && slack >= -1e-12,
        note: "sampled membership check over the supplied points; not a proof",
    })
}

// ---------------------------------------------------------------------------
// No-delay reduction
// ---------------------------------------------------------------------------

/// Canonical history with endpoint `z`: `gamma(theta) = e^theta z` sampled on
/// a uniform grid over `[-horizon, 0]`.
pub fn canonical_embedding(z: &[f64], horizon: f64, nodes: usize) -> HistoryPath {
    let nodes = nodes.max(3);
    let mut ts = Vec::with_capacity(nodes);
    let mut vs = Vec::with_capacity(nodes);
    // truncated histories vanish at the left boundary: the first node pins 0
    // and the exponential profile starts at the second
    ts.push(-horizon);
    vs.push(vec![0.0; z.len()]);
    let inner = nodes - 1;
    for k in 0..inner {
        let theta = -horizon * (1.0 - (k as f64 + 1.0) / inner as f64);
        ts.push(theta);
        vs.push(z.iter().map(|&a| theta.exp() * a).collect());
    }
    let last = ts.len() - 1;
    ts[last] = 0.0;
    HistoryPath::continuous(ts, vs).expect("embedding grid is sorted")
}

#[derive(Debug, Clone)]
pub struct NoDelayTable {
    /// One row per `(endpoint, control)` probe: `(z, u, b, sigma, q)` with the
    /// coefficients evaluated on the canonical embedding of `z`.
    pub rows: Vec<(Vec<f64>, f64, Vec<f64>, Vec<f64>, f64)>,
}

#[derive(Debug, Clone)]
pub enum ReduceOutcome {
    /// Coefficients depend on the history only through its endpoint (to the
    /// stated tolerance over the probe set); the finite-dimensional
    /// coefficient table is returned.
    Reduced { max_gap: f64, table: NoDelayTable },
    /// A pair of histories with equal endpoints produced different
    /// coefficients; the worst gap and the probe index are reported.
    DelayDetected { max_gap: f64, probe: usize },
}

/// Detects whether the dynamics are memoryless: every probe history is
/// compared against body-perturbed variants sharing its endpoint. On success
/// the classical coefficient table on canonical embeddings is emitted.
pub fn reduce_no_delay(
    dynamics: &dyn Dynamics,
    control_set: &[f64],
    probes: &[HistoryPath],
    tol: f64,
) -> ReduceOutcome {
    let d = dynamics.dim();
    let n = dynamics.noise_dim();
    let mut max_gap: f64 = 0.0;
    let mut worst = 0usize;
    let mut b0 = vec![0.0; d];
    let mut s0 = vec![0.0; d * n];
    let mut b1 = vec![0.0; d];
    let mut s1 = vec![0.0; d * n];
    for (pi, x) in probes.iter().enumerate() {
        let z = x.endpoint().to_vec();
        // body perturbations keeping x(0): rescale / negate the interior
        // (restoring the endpoint) and a flat history at the endpoint value
        let variants = [
            x.zip_with(x, |a, _| 0.5 * a).with_endpoint(z.clone()),
            x.zip_with(x, |a, _| -a).with_endpoint(z.clone()),
            flat_history(&z, 1.0),
        ];
        for v in &variants {
            for &u in control_set {
                dynamics.drift(x, u, &mut b0);
                dynamics.drift(v, u, &mut b1);
                dynamics.diffusion(x, u, &mut s0);
                dynamics.diffusion(v, u, &mut s1);
                let q0 = dynamics.running_cost(x, u);
                let q1 = dynamics.running_cost(v, u);
                let mut gap = (q0 - q1).abs();
                for i in 0..d {
                    gap = gap.max((b0[i] - b1[i]).abs());
                }
                for i in 0..d * n {
                    gap = gap.max((s0[i] - s1[i]).abs());
                }
                if gap > max_gap {
                    max_gap = gap;
                    worst = pi;
                }
            }
        }
    }
    if max_gap > tol {
        return ReduceOutcome::DelayDetected {
            max_gap,
            probe: worst,
        };
    }
    let mut rows = Vec::new();
    for x in probes {
        let z = x.endpoint().to_vec();
        let gamma = canonical_embedding(&z, 2.0, 33);
        for &u in control_set {
            let mut b = vec![0.0; d];
            let mut s = vec![0.0; d * n];
            dynamics.drift(&gamma, u, &mut b);
            dynamics.diffusion(&gamma, u, &mut s);
            let q = dynamics.running_cost(&gamma, u);
            rows.push((z.clone(), u, b, s, q));
        }
    }
    ReduceOutcome::Reduced {
        max_gap,
        table: NoDelayTable { rows },
    }
}

fn flat_history(z: &[f64], horizon: f64) -> HistoryPath {
    HistoryPath::continuous(
        vec![-horizon, -0.9 * horizon, 0.0],
        vec![vec![0.0; z.len()], z.to_vec(), z.to_vec()],
    )
    .expect("sorted nodes")
}

// ---------------------------------------------------------------------------
// Coefficient-perturbation stability
// ---------------------------------------------------------------------------

/// Wrapper shifting the drift and/or the running cost by a constant.
pub struct Perturbed {
    pub inner: Arc<dyn Dynamics>,
    pub eps_b: f64,
    pub eps_q: f64,
}

impl Dynamics for Perturbed {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn noise_dim(&self) -> usize {
        self.inner.noise_dim()
    }
    fn lipschitz_constant(&self) -> f64 {
        // |b + eps| <= L(1 + |x|) + eps <= (L + eps)(1 + |x|), likewise for q
        self.inner.lipschitz_constant() + self.eps_b.abs() + self.eps_q.abs()
    }
    fn drift(&self, x: &dyn HistoryView, u: f64, out: &mut [f64]) {
        self.inner.drift(x, u, out);
        for o in out.iter_mut() {
            *o += self.eps_b;
        }
    }
    fn diffusion(&self, x: &dyn HistoryView, u: f64, out: &mut [f64]) {
        self.inner.diffusion(x, u, out);
    }
    fn running_cost(&self, x: &dyn HistoryView, u: f64) -> f64 {
        self.inner.running_cost(x, u) + self.eps_q
    }
}

#[derive(Debug, Clone)]
pub struct StabilityRow {
    pub eps: f64,
    /// Sup over sampled `(x, u)` of the coefficient distance.
    pub coeff_gap: f64,
    pub value: f64,
    pub value_se: f64,
    /// `|V_eps - V|` under common random numbers.
    pub value_gap: f64,
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub base_value: f64,
    pub base_se: f64,
    pub rows: Vec<StabilityRow>,
}

/// Value stability under constant coefficient perturbations: for each
/// `eps`, estimates the value of the perturbed problem with common random
/// numbers and records the coefficient gap alongside the value gap. For a
/// pure cost shift the exact answer is `value_gap = eps / lambda`.
pub fn stability_experiment(
    problem: &ControlProblem,
    x: &HistoryPath,
    cfg: &SimConfig,
    family: &[ControlLaw],
    epsilons: &[f64],
    perturb_b: bool,
    perturb_q: bool,
    coeff_probes: &[HistoryPath],
) -> Result<StabilityReport, SimError> {
    let (base, _) = value_v(x, problem, cfg, family, false)?;
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let pert = Perturbed {
            inner: Arc::clone(&problem.dynamics),
            eps_b: if perturb_b { eps } else { 0.0 },
            eps_q: if perturb_q { eps } else { 0.0 },
        };
        let d = pert.dim();
        let n = pert.noise_dim();
        let mut coeff_gap: f64 = 0.0;
        let mut b0 = vec![0.0; d];
        let mut b1 = vec![0.0; d];
        let mut s0 = vec![0.0; d * n];
        let mut s1 = vec![0.0; d * n];
        for probe in coeff_probes {
            for &u in &problem.control_set {
                problem.dynamics.drift(probe, u, &mut b0);
                pert.drift(probe, u, &mut b1);
                problem.dynamics.diffusion(probe, u, &mut s0);
                pert.diffusion(probe, u, &mut s1);
                let dq = (problem.dynamics.running_cost(probe, u) - pert.running_cost(probe, u))
                    .abs();
                let db = b0
                    .iter()
                    .zip(&b1)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                let ds = s0
                    .iter()
                    .zip(&s1)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                coeff_gap = coeff_gap.max(dq).max(db).max(ds);
            }
        }
        let pert_problem = ControlProblem {
            dynamics: Arc::new(pert),
            lambda: problem.lambda,
            control_set: problem.control_set.clone(),
            switch_times: problem.switch_times.clone(),
        };
        let (est, _) = value_v(x, &pert_problem, cfg, family, false)?;
        rows.push(StabilityRow {
            eps,
            coeff_gap,
            value: est.value,
            value_se: est.std_error,
            value_gap: (est.value - base.value).abs(),
        });
    }
    Ok(StabilityReport {
        base_value: base.value,
        base_se: base.std_error,
        rows,
    })
}

/// Per-probe residual rows for a candidate functional, evaluated in
/// parallel (probe order preserved).
pub fn residual_sweep(
    phi: &FunctionalWithDerivatives,
    probes: &[TimedPath],
    problem: &ControlProblem,
) -> Result<Vec<HjbResidualReport>, CalcError> {
    probes
        .par_iter()
        .map(|p| classical_residual(phi, p, problem))
        .collect()
}

/// Mean/max absolute residual of a sweep.
pub fn residual_summary(rows: &[HjbResidualReport]) -> (f64, f64) {
    let abs: Vec<f64> = rows.iter().map(|r| r.residual.abs()).collect();
    let max = abs.iter().fold(0.0f64, |a, &b| a.max(b));
    let (mean, _) = mean_se(&abs);
    (mean, max)
}
