//! Constructive perturbed maximization on finite domains.
//!
//! Given `f` bounded above, an `epsilon`-maximal start `x^0`, a gauge penalty
//! `rho >= 0` vanishing on the diagonal, and positive weights `{delta_i}`,
//! the principle produces centers `x^0, x^1, ...` converging to `x_hat` with
//!
//! ```text
//! (i)   rho(x_hat, x^i) <= epsilon / (2^i delta_0)
//! (ii)  f(x_hat) - sum_i delta_i rho(x_hat, x^i) >= f(x^0)
//! (iii) the perturbed function attains a strict global maximum at x_hat.
//! ```
//!
//! On a finite domain the construction terminates: each new center maximizes
//! the current perturbed objective, and penalizing around a maximizer keeps
//! it maximal, so at most one center is ever added after the start. The
//! centers stabilize at `x_hat` and the remaining weights accumulate in a
//! tail penalty `(sum_{i>k} delta_i) rho(., x_hat)` that enforces (iii)
//! strictly.

use thiserror::Error;

use crate::path::TimedPath;

#[derive(Debug, Error)]
pub enum VariationalError {
    #[error("search domain is empty")]
    EmptyDomain,
    #[error("start index {0} out of bounds")]
    BadStart(usize),
    #[error("deltas must be a non-empty positive sequence")]
    BadDeltas,
    #[error(
        "start is not epsilon-maximal: f(start) = {f_start} but sup f = {sup_f} with epsilon = {epsilon}"
    )]
    StartNotEpsMaximal {
        f_start: f64,
        sup_f: f64,
        epsilon: f64,
    },
}

/// A finite candidate set with deterministic iteration order (ties in every
/// argmax go to the earliest index).
pub struct SearchDomain {
    pub candidates: Vec<TimedPath>,
}

impl SearchDomain {
    pub fn new(candidates: Vec<TimedPath>) -> Result<Self, VariationalError> {
        if candidates.is_empty() {
            return Err(VariationalError::EmptyDomain);
        }
        Ok(SearchDomain { candidates })
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

pub struct VariationalResult {
    /// Index of `x_hat` in the domain.
    pub maximizer: usize,
    /// Realized centers `(domain index, weight delta_i)`; centers[0] is the
    /// start.
    pub centers: Vec<(usize, f64)>,
    /// Unspent weight `sum_{i > k} delta_i`, attached to `x_hat` (the
    /// stabilized tail of the center sequence).
    pub tail_weight: f64,
    /// Value of the perturbed objective at `x_hat`.
    pub perturbed_value: f64,
    pub iterations: usize,
    /// False only if `max_iters` ran out before the centers stabilized.
    pub stabilized: bool,
}

pub type Objective<'a> = &'a dyn Fn(&TimedPath) -> f64;
pub type Penalty<'a> = &'a dyn Fn(&TimedPath, &TimedPath) -> f64;

const IMPROVEMENT_TOL: f64 = 1e-12;

pub fn borwein_preiss(
    f: Objective,
    rho: Penalty,
    deltas: &[f64],
    epsilon: f64,
    start: usize,
    domain: &SearchDomain,
    max_iters: usize,
) -> Result<VariationalResult, VariationalError> {
    if domain.is_empty() {
        return Err(VariationalError::EmptyDomain);
    }
    if start >= domain.len() {
        return Err(VariationalError::BadStart(start));
    }
    if deltas.is_empty() || deltas.iter().any(|&d| !(d > 0.0)) {
        return Err(VariationalError::BadDeltas);
    }
    let f_vals: Vec<f64> = domain.candidates.iter().map(|p| f(p)).collect();
    let sup_f = f_vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if f_vals[start] < sup_f - epsilon {
        return Err(VariationalError::StartNotEpsMaximal {
            f_start: f_vals[start],
            sup_f,
            epsilon,
        });
    }

    // perturbed[j] = f(y_j) - sum over accepted centers of delta_i rho(y_j, c_i)
    let mut perturbed = f_vals;
    let mut centers: Vec<(usize, f64)> = Vec::new();
    let mut current = start;
    let mut stabilized = false;
    let mut iterations = 0;
    for k in 0..max_iters.min(deltas.len()) {
        let delta = deltas[k];
        let center = &domain.candidates[current];
        for (j, p) in domain.candidates.iter().enumerate() {
            perturbed[j] -= delta * rho(p, center);
        }
        centers.push((current, delta));
        iterations = k + 1;
        let best = argmax_first(&perturbed);
        if perturbed[best] > perturbed[current] + IMPROVEMENT_TOL {
            current = best;
        } else {
            stabilized = true;
            break;
        }
    }
    let tail_weight: f64 = deltas[centers.len()..].iter().sum();
    let maximizer = current;
    let x_hat = &domain.candidates[maximizer];
    let perturbed_value = perturbed[maximizer] - tail_weight * rho(x_hat, x_hat);
    Ok(VariationalResult {
        maximizer,
        centers,
        tail_weight,
        perturbed_value,
        iterations,
        stabilized,
    })
}

fn argmax_first(vals: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in vals.iter().enumerate() {
        if v > vals[best] {
            best = j;
        }
    }
    best
}

/// The perturbed objective of a finished run (realized centers plus the
/// stabilized tail penalty around `x_hat`).
pub fn perturbed_objective(
    f: Objective,
    rho: Penalty,
    result: &VariationalResult,
    domain: &SearchDomain,
    p: &TimedPath,
) -> f64 {
    let mut v = f(p);
    for &(ci, w) in &result.centers {
        v -= w * rho(p, &domain.candidates[ci]);
    }
    v - result.tail_weight * rho(p, &domain.candidates[result.maximizer])
}

/// Exhaustive verification of conclusions (i)-(iii) over the domain.
/// Returns a human-readable description of the first failure, if any.
pub fn verify_conclusions(
    f: Objective,
    rho: Penalty,
    epsilon: f64,
    result: &VariationalResult,
    domain: &SearchDomain,
) -> Result<(), String> {
    let x_hat = &domain.candidates[result.maximizer];
    let delta0 = result.centers[0].1;
    // (i): rho(x_hat, x^i) <= epsilon / (2^i delta_0)
    for (i, &(ci, _)) in result.centers.iter().enumerate() {
        let bound = epsilon / (delta0 * (2f64).powi(i as i32));
        let r = rho(x_hat, &domain.candidates[ci]);
        if r > bound + 1e-12 {
            return Err(format!(
                "(i) fails at center {}: rho = {} > bound {}",
                i, r, bound
            ));
        }
    }
    // (ii): f(x_hat) - sum delta_i rho(x_hat, x^i) >= f(x^0)
    let g_hat = perturbed_objective(f, rho, result, domain, x_hat);
    let f0 = f(&domain.candidates[result.centers[0].0]);
    if g_hat < f0 - 1e-12 {
        return Err(format!("(ii) fails: perturbed {} < f(start) {}", g_hat, f0));
    }
    // (iii): strict global maximality of the perturbed objective
    for (j, p) in domain.candidates.iter().enumerate() {
        if j == result.maximizer {
            continue;
        }
        let g = perturbed_objective(f, rho, result, domain, p);
        if g >= g_hat {
            return Err(format!(
                "(iii) fails at candidate {}: perturbed {} >= maximum {}",
                j, g, g_hat
            ));
        }
    }
    Ok(())
}

/// Default weight sequence `delta_i = delta0 * 2^{-i}`.
pub fn geometric_deltas(delta0: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| delta0 * (2f64).powi(-(i as i32))).collect()
}
