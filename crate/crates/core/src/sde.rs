//! Euler--Maruyama simulation of controlled SDEs with infinite delay,
//!
//! ```text
//! dX(s) = b(X_s, u(s)) ds + sigma(X_s, u(s)) dW(s),   s >= t,
//! X_t = xi,
//! ```
//!
//! where `X_s` is the full history up to `s` (the initial datum glued to the
//! simulated trajectory), plus empirical verification of the moment estimates
//! that make the infinite-horizon discounted problem well posed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::path::{euclid_norm, HistoryPath, HistoryView, PathError, Regularity};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("beta = {beta} is not admissible; the moment estimate needs beta < {threshold}")]
    BetaNotAdmissible { beta: f64, threshold: f64 },
    #[error(transparent)]
    Path(#[from] PathError),
}

/// Coefficient triple `(b, sigma, q)` of a control problem, with the declared
/// growth/Lipschitz constant `L`:
///
/// ```text
/// |b|^2 v |sigma|_2^2 v |q|^2 <= L^2 (1 + |x|_C^2),
/// |b(x,u)-b(y,u)| v |sigma(x,u)-sigma(y,u)|_2 v |q(x,u)-q(y,u)| <= L |x-y|_C.
/// ```
///
/// Implementations write into caller buffers so the hot loop never allocates.
pub trait Dynamics: Send + Sync {
    fn dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    /// Declared constant for the growth and Lipschitz bounds above (validated
    /// statistically by [`lipschitz_probe`], not proven).
    fn lipschitz_constant(&self) -> f64;
    fn drift(&self, x: &dyn HistoryView, u: f64, out: &mut [f64]);
    /// Row-major `dim x noise_dim`.
    fn diffusion(&self, x: &dyn HistoryView, u: f64, out: &mut [f64]);
    fn running_cost(&self, x: &dyn HistoryView, u: f64) -> f64;
}

/// Discount threshold `Theta(L) = 5/2 L^2 + L`: the moment estimates hold for
/// every decay rate `beta < -Theta`, and the discounted problem is well posed
/// for `lambda > Theta`.
pub fn theta(l: f64) -> f64 {
    2.5 * l * l + l
}

/// Larger discount threshold `(12 + 15 L) L` under which uniqueness of the
/// viscosity solution is proved.
pub fn lambda_uniqueness(l: f64) -> f64 {
    (12.0 + 15.0 * l) * l
}

pub type ControlFn = dyn Fn(f64, &dyn HistoryView) -> f64 + Send + Sync;

#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Simulation start time `t` (histories are indexed relative to it).
    pub start_time: f64,
    /// Duration simulated: the trajectory covers `[t, t + horizon]`.
    pub horizon: f64,
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(horizon: f64, dt: f64, paths: usize, seed: u64) -> Self {
        SimConfig {
            start_time: 0.0,
            horizon,
            dt,
            paths,
            seed,
        }
    }

    pub fn steps(&self) -> Result<usize, SimError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(SimError::InvalidConfig(format!("dt = {}", self.dt)));
        }
        if !(self.horizon >= self.dt) {
            return Err(SimError::InvalidConfig(format!(
                "horizon {} must be >= dt {}",
                self.horizon, self.dt
            )));
        }
        if self.paths < 1 {
            return Err(SimError::InvalidConfig("paths must be >= 1".into()));
        }
        Ok((self.horizon / self.dt - 1e-9).ceil() as usize)
    }
}

/// Per-path substream: one counter-based generator per path id, so parallel
/// and serial runs draw identical noise.
pub fn substream(seed: u64, path_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_id);
    rng
}

/// A simulated path: the initial datum glued to the state grid on
/// `[t, t + steps * dt]`, with enough records to replay and to serve as a
/// history view at any grid point.
pub struct Trajectory {
    pub start_time: f64,
    pub dt: f64,
    pub initial: HistoryPath,
    /// `states[k] = X(t + k dt)`; `states[0] = xi(0)`.
    pub states: Vec<Vec<f64>>,
    pub control_rec: Vec<f64>,
    /// Running cost `q(X_{s_k}, u_k)` at each left grid point.
    pub cost_rec: Vec<f64>,
    /// Only populated when records are kept.
    pub drift_rec: Vec<Vec<f64>>,
    /// Row-major `dim x noise_dim` per step; only when records are kept.
    pub vol_rec: Vec<Vec<f64>>,
    pub dw_rec: Vec<Vec<f64>>,
    /// `prefix_max[k] = max_{j <= k} |states[j]|`.
    prefix_max: Vec<f64>,
    initial_sup: f64,
    dim: usize,
    noise_dim: usize,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn time(&self, k: usize) -> f64 {
        self.start_time + k as f64 * self.dt
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.steps())
    }

    /// The history `X_{s_k}` as a borrowed O(1) view.
    pub fn view_at(&self, k: usize) -> TrajectoryView<'_> {
        assert!(k < self.states.len());
        TrajectoryView {
            initial: &self.initial,
            initial_sup: self.initial_sup,
            states: &self.states[..=k],
            prefix_max: &self.prefix_max[..=k],
            dt: self.dt,
        }
    }

    /// Materialize the history `X_s` for any `s` in `[t, end]`; grid values
    /// are reused exactly, off-grid endpoints are linearly interpolated.
    pub fn history_at(&self, s: f64) -> Result<HistoryPath, SimError> {
        let tau = s - self.start_time;
        let end = self.steps() as f64 * self.dt;
        if !(tau >= -1e-12) || tau > end + 1e-12 {
            return Err(SimError::InvalidConfig(format!(
                "time {} outside simulated range [{}, {}]",
                s,
                self.start_time,
                self.start_time + end
            )));
        }
        let tau = tau.clamp(0.0, end);
        let kf = tau / self.dt;
        let k0 = (kf + 1e-9).floor() as usize;
        let k0 = k0.min(self.steps());
        if (tau - k0 as f64 * self.dt).abs() < 1e-9 * self.dt.max(1.0) {
            return Ok(self.view_at(k0).to_path());
        }
        let base = self.view_at(k0).to_path();
        let extra = tau - k0 as f64 * self.dt;
        let w = extra / self.dt;
        let endpoint: Vec<f64> = self.states[k0]
            .iter()
            .zip(&self.states[k0 + 1])
            .map(|(a, b)| a + w * (b - a))
            .collect();
        let (mut nodes, mut values, mut ll) = base.continuous_parts();
        for n in nodes.iter_mut() {
            *n -= extra;
        }
        nodes.push(0.0);
        values.push(endpoint);
        ll.push(None);
        Ok(HistoryPath::from_parts(
            nodes,
            values,
            ll,
            Regularity::Continuous,
            self.dim,
        ))
    }
}

/// Borrowed history view at a grid point of a (possibly still growing)
/// trajectory; all norm queries are O(1) thanks to the prefix-max record.
pub struct TrajectoryView<'a> {
    initial: &'a HistoryPath,
    initial_sup: f64,
    /// `states[0..=k]`
    states: &'a [Vec<f64>],
    prefix_max: &'a [f64],
    dt: f64,
}

impl<'a> TrajectoryView<'a> {
    fn k(&self) -> usize {
        self.states.len() - 1
    }
}

impl<'a> HistoryView for TrajectoryView<'a> {
    fn dim(&self) -> usize {
        self.initial.dim()
    }

    fn endpoint(&self) -> &[f64] {
        self.states.last().unwrap()
    }

    fn value_at_into(&self, theta: f64, out: &mut [f64]) {
        let k = self.k();
        let tau = k as f64 * self.dt + theta;
        if tau < 0.0 {
            self.initial.value_at_into(tau, out);
            return;
        }
        let j = ((tau / self.dt).floor() as usize).min(k.saturating_sub(1));
        if k == 0 {
            out.copy_from_slice(&self.states[0]);
            return;
        }
        let w = (tau - j as f64 * self.dt) / self.dt;
        let (a, b) = (&self.states[j], &self.states[j + 1]);
        for i in 0..out.len() {
            out[i] = a[i] + w * (b[i] - a[i]);
        }
    }

    fn sup_norm(&self) -> f64 {
        self.initial_sup.max(*self.prefix_max.last().unwrap())
    }

    fn sup_norm_strict(&self) -> f64 {
        // for k >= 1 the simulated part is continuous up to theta = 0, so the
        // strict sup (which keeps the left limit) equals the full sup
        if self.k() == 0 {
            self.initial.sup_norm_strict()
        } else {
            self.sup_norm()
        }
    }

    fn left_horizon(&self) -> f64 {
        self.initial.left_horizon() + self.k() as f64 * self.dt
    }

    fn for_each_node(&self, f: &mut dyn FnMut(f64, &[f64])) {
        let k = self.k();
        let offset = k as f64 * self.dt;
        for (t, v) in self.initial.nodes().iter().zip(self.initial.node_values()) {
            f(t - offset, v);
        }
        for j in 1..=k {
            f((j as f64 - k as f64) * self.dt, &self.states[j]);
        }
    }

    fn to_path(&self) -> HistoryPath {
        let k = self.k();
        if k == 0 {
            return self.initial.clone();
        }
        let offset = k as f64 * self.dt;
        let (inodes, ivalues, ill) = self.initial.continuous_parts();
        let n = inodes.len() + k;
        let mut nodes = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        let mut ll = Vec::with_capacity(n);
        for ((t, v), l) in inodes.into_iter().zip(ivalues).zip(ill) {
            nodes.push(t - offset);
            values.push(v);
            ll.push(l);
        }
        for j in 1..=k {
            nodes.push((j as f64 - k as f64) * self.dt);
            values.push(self.states[j].clone());
            ll.push(None);
        }
        HistoryPath::from_parts(nodes, values, ll, Regularity::Continuous, self.initial.dim())
    }
}

/// Euler--Maruyama on `[t, t + horizon]` with a per-path noise substream.
/// With `keep_records` the drift/diffusion/increment records needed by the
/// Ito-residual machinery (and for exact replay) are retained.
pub fn euler_simulate<C>(
    dynamics: &dyn Dynamics,
    xi: &HistoryPath,
    control: &C,
    cfg: &SimConfig,
    path_id: u64,
    keep_records: bool,
) -> Result<Trajectory, SimError>
where
    C: Fn(f64, &dyn HistoryView) -> f64 + Send + Sync + ?Sized,
{
    let steps = cfg.steps()?;
    let d = dynamics.dim();
    let n = dynamics.noise_dim();
    if xi.dim() != d {
        return Err(SimError::DimMismatch {
            expected: d,
            got: xi.dim(),
        });
    }
    let mut rng = substream(cfg.seed, path_id);
    let sqrt_dt = cfg.dt.sqrt();
    let initial_sup = xi.sup_norm();

    let mut states = Vec::with_capacity(steps + 1);
    let mut prefix_max = Vec::with_capacity(steps + 1);
    states.push(xi.endpoint().to_vec());
    prefix_max.push(euclid_norm(xi.endpoint()));
    let mut control_rec = Vec::with_capacity(steps);
    let mut cost_rec = Vec::with_capacity(steps);
    let mut drift_rec = Vec::new();
    let mut vol_rec = Vec::new();
    let mut dw_rec = Vec::new();

    let mut b = vec![0.0; d];
    let mut sig = vec![0.0; d * n];
    let mut dw = vec![0.0; n];
    for k in 0..steps {
        let time = cfg.start_time + k as f64 * cfg.dt;
        let (u, q) = {
            let view = TrajectoryView {
                initial: xi,
                initial_sup,
                states: &states,
                prefix_max: &prefix_max,
                dt: cfg.dt,
            };
            let u = control(time, &view);
            dynamics.drift(&view, u, &mut b);
            dynamics.diffusion(&view, u, &mut sig);
            (u, dynamics.running_cost(&view, u))
        };
        for l in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            dw[l] = z * sqrt_dt;
        }
        let prev = states.last().unwrap().clone();
        let mut next = prev;
        for i in 0..d {
            next[i] += b[i] * cfg.dt;
            for l in 0..n {
                next[i] += sig[i * n + l] * dw[l];
            }
            if !next[i].is_finite() {
                return Err(SimError::NonFinite { step: k + 1 });
            }
        }
        let norm = euclid_norm(&next);
        prefix_max.push(prefix_max.last().unwrap().max(norm));
        states.push(next);
        control_rec.push(u);
        cost_rec.push(q);
        if keep_records {
            drift_rec.push(b.clone());
            vol_rec.push(sig.clone());
            dw_rec.push(dw.clone());
        }
    }

    Ok(Trajectory {
        start_time: cfg.start_time,
        dt: cfg.dt,
        initial: xi.clone(),
        states,
        control_rec,
        cost_rec,
        drift_rec,
        vol_rec,
        dw_rec,
        prefix_max,
        initial_sup,
        dim: d,
        noise_dim: n,
    })
}

/// Mean and standard error of a sample.
pub fn mean_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

// ---------------------------------------------------------------------------
// Moment estimates
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct MomentRow {
    /// Time since start.
    pub s: f64,
    pub mean_sup_sq: f64,
    pub se_sup_sq: f64,
    /// `E |X_s - xi_{s-t}|_C^2`
    pub mean_diff_sq: f64,
    pub se_diff_sq: f64,
}

#[derive(Debug, Clone)]
pub struct MomentReport {
    pub beta: f64,
    pub theta: f64,
    pub rows: Vec<MomentRow>,
    /// Fitted constant for `sup_s e^{2 beta s} E|X_s|_C^2 <= C (1 + |xi|_C^2)`.
    pub c_hat: f64,
    /// Fitted constant for
    /// `E|X_s - xi_{s-t}|_C^2 <= C0 (1 + |xi|_C^2) e^{-2 beta s} (s + 1) s`.
    pub c0_hat: f64,
}

/// Empirical check of the decay/growth moment bounds. Requires the
/// theorem's admissibility condition `beta < -Theta(L)`.
pub fn moment_estimates<C>(
    dynamics: &dyn Dynamics,
    xi: &HistoryPath,
    control: &C,
    beta: f64,
    cfg: &SimConfig,
    checkpoints: usize,
) -> Result<MomentReport, SimError>
where
    C: Fn(f64, &dyn HistoryView) -> f64 + Send + Sync + ?Sized,
{
    let th = theta(dynamics.lipschitz_constant());
    if !(beta < -th) {
        return Err(SimError::BetaNotAdmissible {
            beta,
            threshold: -th,
        });
    }
    let steps = cfg.steps()?;
    let checkpoints = checkpoints.max(1).min(steps);
    let idx: Vec<usize> = (1..=checkpoints)
        .map(|i| (i * steps / checkpoints).max(1))
        .collect();

    let per_path: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|pid| {
            let traj = euler_simulate(dynamics, xi, control, cfg, pid, false)?;
            let x0 = xi.endpoint();
            let mut sup_sq = Vec::with_capacity(idx.len());
            let mut diff_sq = Vec::with_capacity(idx.len());
            let mut diff_max: f64 = 0.0;
            let mut next = 0;
            for (k, st) in traj.states.iter().enumerate() {
                let dn = st
                    .iter()
                    .zip(x0)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                diff_max = diff_max.max(dn);
                if next < idx.len() && k == idx[next] {
                    let sup = traj.view_at(k).sup_norm();
                    sup_sq.push(sup * sup);
                    diff_sq.push(diff_max * diff_max);
                    next += 1;
                }
            }
            Ok((sup_sq, diff_sq))
        })
        .collect::<Result<_, SimError>>()?;

    let xi_sq = xi.sup_norm() * xi.sup_norm();
    let mut rows = Vec::with_capacity(idx.len());
    let mut c_hat: f64 = 0.0;
    let mut c0_hat: f64 = 0.0;
    for (j, &k) in idx.iter().enumerate() {
        let s = k as f64 * cfg.dt;
        let sup_samples: Vec<f64> = per_path.iter().map(|p| p.0[j]).collect();
        let diff_samples: Vec<f64> = per_path.iter().map(|p| p.1[j]).collect();
        let (ms, ses) = mean_se(&sup_samples);
        let (md, sed) = mean_se(&diff_samples);
        c_hat = c_hat.max((2.0 * beta * s).exp() * ms / (1.0 + xi_sq));
        if s > 0.0 {
            c0_hat = c0_hat.max(md / ((1.0 + xi_sq) * (-2.0 * beta * s).exp() * (s + 1.0) * s));
        }
        rows.push(MomentRow {
            s,
            mean_sup_sq: ms,
            se_sup_sq: ses,
            mean_diff_sq: md,
            se_diff_sq: sed,
        });
    }
    Ok(MomentReport {
        beta,
        theta: th,
        rows,
        c_hat,
        c0_hat,
    })
}

/// Common-random-numbers coupling of two initial data: returns
/// `(mean sup_{s <= T} |X^xi(s) - X^eta(s)|^2, std error)`; dividing by
/// `|xi - eta|_C^2` gives the fitted coupling constant.
pub fn coupled_sup_distance_sq<C>(
    dynamics: &dyn Dynamics,
    xi: &HistoryPath,
    eta: &HistoryPath,
    control: &C,
    cfg: &SimConfig,
) -> Result<(f64, f64), SimError>
where
    C: Fn(f64, &dyn HistoryView) -> f64 + Send + Sync + ?Sized,
{
    let samples: Vec<f64> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|pid| {
            let a = euler_simulate(dynamics, xi, control, cfg, pid, false)?;
            let b = euler_simulate(dynamics, eta, control, cfg, pid, false)?;
            let mut m: f64 = 0.0;
            for (x, y) in a.states.iter().zip(&b.states) {
                let d = x
                    .iter()
                    .zip(y)
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum::<f64>();
                m = m.max(d);
            }
            Ok(m)
        })
        .collect::<Result<_, SimError>>()?;
    Ok(mean_se(&samples))
}

// ---------------------------------------------------------------------------
// Coefficient probe (growth and Lipschitz ratios)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CoeffProbeReport {
    pub max_growth_ratio: f64,
    pub max_lipschitz_ratio: f64,
    pub violation: Option<String>,
}

fn frobenius(m: &[f64]) -> f64 {
    m.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Sample random path pairs and controls, and compare each ratio against the
/// declared constant; a ratio above `1 + 1e-9` is flagged.
pub fn lipschitz_probe(
    dynamics: &dyn Dynamics,
    num_pairs: usize,
    seed: u64,
    controls: &[f64],
) -> CoeffProbeReport {
    let d = dynamics.dim();
    let n = dynamics.noise_dim();
    let l = dynamics.lipschitz_constant();
    let paths = crate::sampling::sample_paths(seed, 2 * num_pairs, d);
    let mut max_growth: f64 = 0.0;
    let mut max_lip: f64 = 0.0;
    let mut violation = None;
    let mut bx = vec![0.0; d];
    let mut by = vec![0.0; d];
    let mut sx = vec![0.0; d * n];
    let mut sy = vec![0.0; d * n];
    for (i, pair) in paths.chunks_exact(2).enumerate() {
        let (x, y) = (&pair[0], &pair[1]);
        let u = controls[i % controls.len()];
        dynamics.drift(x, u, &mut bx);
        dynamics.drift(y, u, &mut by);
        dynamics.diffusion(x, u, &mut sx);
        dynamics.diffusion(y, u, &mut sy);
        let qx = dynamics.running_cost(x, u);
        let qy = dynamics.running_cost(y, u);
        let growth_num = (euclid_norm(&bx).powi(2))
            .max(frobenius(&sx).powi(2))
            .max(qx * qx);
        let growth = growth_num / (l * l * (1.0 + x.sup_norm().powi(2)));
        max_growth = max_growth.max(growth);
        let dxy = crate::path::diff_norms(x, y).c;
        if dxy > 0.0 {
            let db = euclid_norm(
                &bx.iter().zip(&by).map(|(a, b)| a - b).collect::<Vec<_>>(),
            );
            let ds = frobenius(
                &sx.iter().zip(&sy).map(|(a, b)| a - b).collect::<Vec<_>>(),
            );
            let lip = db.max(ds).max((qx - qy).abs()) / (l * dxy);
            max_lip = max_lip.max(lip);
            if lip > 1.0 + 1e-9 && violation.is_none() {
                violation = Some(format!("Lipschitz ratio {:.6} at pair {}", lip, i));
            }
        }
        if growth > 1.0 + 1e-9 && violation.is_none() {
            violation = Some(format!("growth ratio {:.6} at pair {}", growth, i));
        }
    }
    CoeffProbeReport {
        max_growth_ratio: max_growth,
        max_lipschitz_ratio: max_lip,
        violation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{BrownianMotion, OrnsteinUhlenbeck};

    fn zero_control(_t: f64, _x: &dyn HistoryView) -> f64 {
        0.0
    }

    struct Frozen;
    impl Dynamics for Frozen {
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
            out.fill(0.0);
        }
        fn diffusion(&self, _x: &dyn HistoryView, _u: f64, out: &mut [f64]) {
            out.fill(0.0);
        }
        fn running_cost(&self, _x: &dyn HistoryView, _u: f64) -> f64 {
            0.0
        }
    }

    fn ramp_xi() -> HistoryPath {
        HistoryPath::continuous(
            vec![-2.0, -1.0, 0.0],
            vec![vec![0.0], vec![1.5], vec![0.5]],
        )
        .unwrap()
    }

    #[test]
    fn zero_coefficients_freeze_the_path() {
        let cfg = SimConfig::new(1.0, 0.125, 1, 3);
        let xi = ramp_xi();
        let traj = euler_simulate(&Frozen, &xi, &zero_control, &cfg, 0, true).unwrap();
        assert_eq!(traj.steps(), 8);
        for st in &traj.states {
            assert_eq!(st, &vec![0.5]);
        }
        // history_at(s) equals the shifted initial datum
        for s in [0.25, 0.5, 1.0] {
            let h = traj.history_at(s).unwrap();
            assert!(h.eq_as_function(&xi.shift(s)), "s = {}", s);
        }
        // and at the start time it is xi itself
        assert!(traj.history_at(0.0).unwrap().eq_as_function(&xi));
    }

    #[test]
    fn view_matches_materialized_history() {
        let ou = OrnsteinUhlenbeck;
        let cfg = SimConfig::new(0.5, 0.05, 1, 11);
        let xi = ramp_xi();
        let traj = euler_simulate(&ou, &xi, &zero_control, &cfg, 0, false).unwrap();
        for k in [0, 3, 10] {
            let view = traj.view_at(k);
            let path = view.to_path();
            assert_eq!(view.endpoint(), path.endpoint());
            assert!((view.sup_norm() - path.sup_norm()).abs() < 1e-12);
            assert!((view.sup_norm_strict() - path.sup_norm_strict()).abs() < 1e-12);
            let mut a = [0.0];
            let mut b = [0.0];
            for theta in [-0.01, -0.2, -0.55, -1.7, -3.0] {
                view.value_at_into(theta, &mut a);
                path.value_at_into(theta, &mut b);
                assert!((a[0] - b[0]).abs() < 1e-12, "theta {}", theta);
            }
        }
        // off-grid history interpolates the endpoint
        let h = traj.history_at(0.125).unwrap();
        let want = 0.5 * (traj.states[2][0] + traj.states[3][0]);
        assert!((h.endpoint()[0] - want).abs() < 1e-12);
    }

    #[test]
    fn determinism_and_replay() {
        let ou = OrnsteinUhlenbeck;
        let cfg = SimConfig::new(1.0, 0.01, 1, 42);
        let xi = HistoryPath::zero(1, 1.0);
        let a = euler_simulate(&ou, &xi, &zero_control, &cfg, 5, true).unwrap();
        let b = euler_simulate(&ou, &xi, &zero_control, &cfg, 5, true).unwrap();
        assert_eq!(a.states, b.states);
        let c = euler_simulate(&ou, &xi, &zero_control, &cfg, 6, true).unwrap();
        assert_ne!(a.states, c.states);
        // replay from records
        for k in 0..a.steps() {
            let mut next = a.states[k].clone();
            // same summation order as the simulator, for bitwise replay
            next[0] += a.drift_rec[k][0] * cfg.dt;
            next[0] += a.vol_rec[k][0] * a.dw_rec[k][0];
            assert_eq!(next, a.states[k + 1]);
        }
    }

    #[test]
    fn ou_moments_match_closed_form() {
        // X(s) ~ N(0, (1 - e^{-2s})/2) from a zero start
        let ou = OrnsteinUhlenbeck;
        let cfg = SimConfig::new(2.0, 1e-3, 20_000, 2024);
        let xi = HistoryPath::zero(1, 1.0);
        let checks = [0.5, 1.0, 2.0];
        let vals: Vec<Vec<f64>> = (0..cfg.paths as u64)
            .into_par_iter()
            .map(|pid| {
                let t = euler_simulate(&ou, &xi, &zero_control, &cfg, pid, false).unwrap();
                checks
                    .iter()
                    .map(|&s| t.states[(s / cfg.dt).round() as usize][0])
                    .collect()
            })
            .collect();
        for (j, &s) in checks.iter().enumerate() {
            let xs: Vec<f64> = vals.iter().map(|v| v[j]).collect();
            let (mean, se) = mean_se(&xs);
            assert!(mean.abs() <= 3.0 * se, "mean {} se {} at s {}", mean, se, s);
            let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
            let (var, var_se) = mean_se(&sq);
            let want = (1.0 - (-2.0 * s).exp()) / 2.0;
            // allow the O(dt) Euler bias on top of the 3-se band
            assert!(
                (var - want).abs() <= 3.0 * var_se + 5.0 * cfg.dt,
                "var {} want {} se {} at s {}",
                var,
                want,
                var_se,
                s
            );
        }
    }

    #[test]
    fn strong_error_improves_under_refinement() {
        // reference: the same Brownian path at dt/16; coarse runs consume the
        // refined increments by block sums
        let xi = HistoryPath::zero(1, 1.0);
        let t_end = 1.0;
        let fine_dt = 1e-3 / 4.0;
        let n_paths = 400u64;
        let mut errs = [Vec::new(), Vec::new()]; // dt = 64 fine, dt = 16 fine
        for pid in 0..n_paths {
            let fine_cfg = SimConfig::new(t_end, fine_dt, 1, 99);
            let ou = OrnsteinUhlenbeck;
            let fine = euler_simulate(&ou, &xi, &zero_control, &fine_cfg, pid, true).unwrap();
            for (which, factor) in [(0usize, 64usize), (1usize, 16usize)] {
                let dt = fine_dt * factor as f64;
                let steps = fine.steps() / factor;
                let mut x = 0.0f64;
                for k in 0..steps {
                    let dw: f64 = fine.dw_rec[k * factor..(k + 1) * factor]
                        .iter()
                        .map(|v| v[0])
                        .sum();
                    x += -x * dt + dw;
                }
                let err = x - fine.states[steps * factor][0];
                errs[which].push(err * err);
            }
        }
        let rms_coarse = (errs[0].iter().sum::<f64>() / n_paths as f64).sqrt();
        let rms_fine = (errs[1].iter().sum::<f64>() / n_paths as f64).sqrt();
        // quartering dt must shrink the strong error by at least ~2x
        assert!(
            rms_coarse / rms_fine >= 1.6,
            "coarse {} fine {}",
            rms_coarse,
            rms_fine
        );
    }

    #[test]
    fn moment_estimates_on_zero_dynamics() {
        let cfg = SimConfig::new(1.0, 0.05, 16, 7);
        let xi = ramp_xi();
        let rep = moment_estimates(&Frozen, &xi, &zero_control, -4.0, &cfg, 4).unwrap();
        for row in &rep.rows {
            // frozen path: |X_s - xi_{s-t}|_C = 0 exactly
            assert_eq!(row.mean_diff_sq, 0.0);
        }
        assert_eq!(rep.c0_hat, 0.0);
        assert!(rep.c_hat > 0.0);
    }

    #[test]
    fn moment_estimates_rejects_bad_beta() {
        let cfg = SimConfig::new(1.0, 0.05, 4, 7);
        let xi = HistoryPath::zero(1, 1.0);
        let err = moment_estimates(&OrnsteinUhlenbeck, &xi, &zero_control, -3.0, &cfg, 4);
        assert!(matches!(err, Err(SimError::BetaNotAdmissible { .. })));
    }

    #[test]
    fn coupling_constant_is_modest_on_brownian() {
        // b = 0: X^xi - X^eta is constant, so the ratio is exactly
        // |xi(0)-eta(0)|^2 / |xi-eta|_C^2 <= 1
        let bm = BrownianMotion;
        let xi = ramp_xi();
        let eta = HistoryPath::zero(1, 1.0);
        let cfg = SimConfig::new(0.5, 0.01, 32, 3);
        let (mean, _) = coupled_sup_distance_sq(&bm, &xi, &eta, &zero_control, &cfg).unwrap();
        let denom = crate::path::diff_norms(&xi, &eta).c.powi(2);
        assert!((mean / denom - (0.5f64 / 1.5).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn lipschitz_probe_passes_and_catches() {
        let rep = lipschitz_probe(&OrnsteinUhlenbeck, 200, 5, &[0.0]);
        assert!(rep.violation.is_none(), "{:?}", rep.violation);
        assert!(rep.max_growth_ratio <= 1.0);

        struct Quadratic;
        impl Dynamics for Quadratic {
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
                out[0] = x.endpoint()[0] * x.endpoint()[0];
            }
            fn diffusion(&self, _x: &dyn HistoryView, _u: f64, out: &mut [f64]) {
                out.fill(0.0);
            }
            fn running_cost(&self, _x: &dyn HistoryView, _u: f64) -> f64 {
                0.0
            }
        }
        let rep = lipschitz_probe(&Quadratic, 200, 5, &[0.0]);
        assert!(rep.violation.is_some());
    }

    #[test]
    fn thresholds() {
        assert_eq!(theta(1.0), 3.5);
        assert_eq!(lambda_uniqueness(1.0), 27.0);
        assert!((theta(0.2) - 0.3).abs() < 1e-12);
        assert!((lambda_uniqueness(0.2) - 3.0).abs() < 1e-12);
    }
}
