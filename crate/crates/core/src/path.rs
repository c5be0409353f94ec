//! Histories on `(-infty, 0]` and the operations every other module consumes.
//!
//! A history is a past trajectory `x` with `x(theta) -> 0` as `theta -> -infty`,
//! carrying the sup norm `|x|_C = sup_theta |x(theta)|`. We represent it on a
//! finite grid with truncated support: the path is identically zero left of
//! `-left_horizon`. Two base interpolations are supported: piecewise-linear
//! (continuous) and piecewise-constant right-continuous (cadlag). On top of the
//! base interpolation a node may carry an explicit left limit, which is how
//! vertical bumps (a jump at `theta = 0`) and shifted jumps stay exact.
//!
//! The shift `x_h` freezes the endpoint on `[-h, 0]` and translates the rest
//! left by `h`:
//!
//! ```text
//! x_h(theta) = x(0)          for theta in [-h, 0]
//!            = x(theta + h)  for theta < -h
//! ```
//!
//! The metric on time/path pairs is, for `s <= l`,
//!
//! ```text
//! d_inf((s, x), (l, y)) = |l - s| + |x_{l-s} - y|_C
//! ```

use std::fmt;
use std::io::{self, BufRead, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PathError {
    #[error("a history needs at least one node")]
    Empty,
    #[error("node times must be strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("last node must sit exactly at theta = 0, got {0}")]
    LastNotZero(f64),
    #[error("value at the left horizon must be the zero vector")]
    NonzeroLeftBoundary,
    #[error("non-finite value at node {0}")]
    NonFinite(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("time {0} outside the simulated range [{1}, {2}]")]
    OutOfRange(f64, f64, f64),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("parse error in path csv: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularity {
    /// Piecewise-linear interpolation between nodes; continuous by construction.
    Continuous,
    /// Piecewise-constant, right-continuous; takes the node value on `[theta_j, theta_{j+1})`.
    Cadlag,
}

impl fmt::Display for Regularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regularity::Continuous => write!(f, "continuous"),
            Regularity::Cadlag => write!(f, "cadlag"),
        }
    }
}

pub fn euclid_norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A discretized element of the history space.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryPath {
    nodes: Vec<f64>,
    values: Vec<Vec<f64>>,
    /// Explicit left limit at a node when it differs from the base
    /// interpolation (only ever `Some` for continuous-base paths that
    /// acquired a jump through a vertical bump or a shift of one).
    left_limits: Vec<Option<Vec<f64>>>,
    regularity: Regularity,
    dim: usize,
}

impl HistoryPath {
    pub fn continuous(nodes: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, PathError> {
        Self::new(nodes, values, Regularity::Continuous)
    }

    pub fn cadlag(nodes: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, PathError> {
        Self::new(nodes, values, Regularity::Cadlag)
    }

    pub fn new(
        nodes: Vec<f64>,
        values: Vec<Vec<f64>>,
        regularity: Regularity,
    ) -> Result<Self, PathError> {
        if nodes.is_empty() || nodes.len() != values.len() {
            return Err(PathError::Empty);
        }
        let last = *nodes.last().unwrap();
        if last != 0.0 {
            return Err(PathError::LastNotZero(last));
        }
        for i in 1..nodes.len() {
            if !(nodes[i] > nodes[i - 1]) {
                return Err(PathError::NotIncreasing(i));
            }
        }
        let dim = values[0].len();
        for (i, v) in values.iter().enumerate() {
            if v.len() != dim {
                return Err(PathError::DimMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            if v.iter().any(|a| !a.is_finite()) {
                return Err(PathError::NonFinite(i));
            }
        }
        if nodes.len() > 1 && values[0].iter().any(|&a| a != 0.0) {
            return Err(PathError::NonzeroLeftBoundary);
        }
        if nodes.len() == 1 && values[0].iter().any(|&a| a != 0.0) {
            // single node at 0 with nonzero value: embed with a zero anchor just left of it
            return Err(PathError::NonzeroLeftBoundary);
        }
        let n = nodes.len();
        Ok(HistoryPath {
            nodes,
            values,
            left_limits: vec![None; n],
            regularity,
            dim,
        })
    }

    /// The identically-zero path with the given support truncation.
    pub fn zero(dim: usize, left_horizon: f64) -> Self {
        HistoryPath {
            nodes: vec![-left_horizon.abs().max(1e-12), 0.0],
            values: vec![vec![0.0; dim]; 2],
            left_limits: vec![None; 2],
            regularity: Regularity::Continuous,
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn regularity(&self) -> Regularity {
        self.regularity
    }

    pub fn left_horizon(&self) -> f64 {
        -self.nodes[0]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node_values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// `x(0)`.
    pub fn endpoint(&self) -> &[f64] {
        self.values.last().unwrap()
    }

    pub fn has_jump_at_zero(&self) -> bool {
        self.left_limits.last().unwrap().is_some()
            || (self.regularity == Regularity::Cadlag
                && self.nodes.len() > 1
                && self.values[self.values.len() - 1] != self.values[self.values.len() - 2])
    }

    fn segment_end(&self, j: usize) -> &[f64] {
        // value the interpolant approaches as theta -> nodes[j] from the left
        match self.regularity {
            Regularity::Continuous => match &self.left_limits[j] {
                Some(l) => l,
                None => &self.values[j],
            },
            Regularity::Cadlag => {
                if j == 0 {
                    &self.values[0]
                } else {
                    &self.values[j - 1]
                }
            }
        }
    }

    /// `x(theta)` for `theta <= 0`; zero left of the support.
    pub fn value_at(&self, theta: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.value_at_into(theta, &mut out);
        out
    }

    pub fn value_at_into(&self, theta: f64, out: &mut [f64]) {
        debug_assert!(theta <= 0.0);
        if theta < self.nodes[0] {
            out.fill(0.0);
            return;
        }
        // index of the last node <= theta
        let j = match self
            .nodes
            .binary_search_by(|n| n.partial_cmp(&theta).unwrap())
        {
            Ok(j) => {
                out.copy_from_slice(&self.values[j]);
                return;
            }
            Err(ins) => ins - 1,
        };
        match self.regularity {
            Regularity::Cadlag => out.copy_from_slice(&self.values[j]),
            Regularity::Continuous => {
                let (a, b) = (self.nodes[j], self.nodes[j + 1]);
                let w = (theta - a) / (b - a);
                let start = &self.values[j];
                let end = self.segment_end(j + 1);
                for i in 0..self.dim {
                    out[i] = start[i] + w * (end[i] - start[i]);
                }
            }
        }
    }

    /// Left limit `x(theta-)` at a node index.
    pub fn left_limit(&self, j: usize) -> &[f64] {
        self.segment_end(j)
    }

    /// `|x|_C = sup_{theta <= 0} |x(theta)|`.
    ///
    /// The Euclidean norm is convex along each affine segment, so the sup is
    /// attained at segment endpoints; it suffices to scan node values and
    /// left limits.
    pub fn sup_norm(&self) -> f64 {
        let mut m: f64 = 0.0;
        for j in 0..self.nodes.len() {
            m = m.max(euclid_norm(&self.values[j]));
            m = m.max(euclid_norm(self.segment_end(j)));
        }
        m
    }

    /// `|x|_{C-} = sup_{theta < 0} |x(theta)|`: excludes the point value at 0
    /// but keeps the left limit there.
    pub fn sup_norm_strict(&self) -> f64 {
        let k = self.nodes.len() - 1;
        let mut m = euclid_norm(self.segment_end(k));
        for j in 0..k {
            m = m.max(euclid_norm(&self.values[j]));
            m = m.max(euclid_norm(self.segment_end(j)));
        }
        m
    }

    /// The Dupire shift `x_h`: freeze `x(0)` on `[-h, 0]`, translate the rest.
    pub fn shift(&self, h: f64) -> HistoryPath {
        assert!(h >= 0.0, "shift requires h >= 0");
        if h == 0.0 {
            return self.clone();
        }
        let k = self.nodes.len();
        let mut nodes = Vec::with_capacity(k + 1);
        let mut values = Vec::with_capacity(k + 1);
        let mut left_limits = Vec::with_capacity(k + 1);
        for j in 0..k {
            nodes.push(self.nodes[j] - h);
            values.push(self.values[j].clone());
            left_limits.push(self.left_limits[j].clone());
        }
        nodes.push(0.0);
        values.push(self.endpoint().to_vec());
        left_limits.push(None);
        // the jump that used to sit at 0 now sits at -h; for cadlag base it is
        // implicit, for continuous base it rides along in left_limits[k-1]
        if self.regularity == Regularity::Cadlag {
            // segment [-h, 0) must be constant x(0); piecewise-constant base
            // gives exactly that since values[k-1] is now the endpoint value
        }
        HistoryPath {
            nodes,
            values,
            left_limits,
            regularity: self.regularity,
            dim: self.dim,
        }
    }

    /// Vertical bump `x + h e_i 1_{{0}}`: changes the value at `theta = 0`
    /// only, producing a cadlag path (a jump at 0) from any input.
    pub fn bump(&self, coord: usize, h: f64) -> HistoryPath {
        let mut out = self.clone();
        let k = out.nodes.len() - 1;
        if out.regularity == Regularity::Continuous && out.left_limits[k].is_none() && k > 0 {
            out.left_limits[k] = Some(out.values[k].clone());
        }
        out.values[k][coord] += h;
        out
    }

    /// Replace the endpoint value (used when re-rooting simulated histories).
    pub fn with_endpoint(&self, v: Vec<f64>) -> HistoryPath {
        let mut out = self.clone();
        let k = out.nodes.len() - 1;
        if out.regularity == Regularity::Continuous && out.left_limits[k].is_none() && k > 0 {
            out.left_limits[k] = Some(out.values[k].clone());
        }
        out.values[k] = v;
        out
    }

    /// Pointwise combination on the union grid. Exact for piecewise-linear /
    /// piecewise-constant inputs because both are affine between union nodes.
    pub fn zip_with(&self, other: &HistoryPath, f: impl Fn(f64, f64) -> f64) -> HistoryPath {
        assert_eq!(self.dim, other.dim);
        let nodes = union_nodes(&self.nodes, &other.nodes);
        let n = nodes.len();
        let mut values = Vec::with_capacity(n);
        let mut left_limits: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
        let mut buf_a = vec![0.0; self.dim];
        let mut buf_b = vec![0.0; self.dim];
        for &theta in &nodes {
            self.value_at_into(theta, &mut buf_a);
            other.value_at_into(theta, &mut buf_b);
            let right: Vec<f64> = buf_a.iter().zip(&buf_b).map(|(&a, &b)| f(a, b)).collect();
            let la = self.left_limit_at_theta(theta);
            let lb = other.left_limit_at_theta(theta);
            let left: Vec<f64> = la.iter().zip(&lb).map(|(&a, &b)| f(a, b)).collect();
            left_limits.push(if left == right { None } else { Some(left) });
            values.push(right);
        }
        let regularity = if self.regularity == Regularity::Cadlag
            && other.regularity == Regularity::Cadlag
        {
            Regularity::Cadlag
        } else {
            Regularity::Continuous
        };
        let mut out = HistoryPath {
            nodes,
            values,
            left_limits,
            regularity,
            dim: self.dim,
        };
        if out.regularity == Regularity::Cadlag {
            // jumps are implicit in the base interpolation
            out.left_limits.iter_mut().for_each(|l| *l = None);
        }
        out
    }

    pub fn add(&self, other: &HistoryPath) -> HistoryPath {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &HistoryPath) -> HistoryPath {
        self.zip_with(other, |a, b| a - b)
    }

    fn left_limit_at_theta(&self, theta: f64) -> Vec<f64> {
        if theta < self.nodes[0] {
            return vec![0.0; self.dim];
        }
        match self
            .nodes
            .binary_search_by(|n| n.partial_cmp(&theta).unwrap())
        {
            Ok(j) => self.segment_end(j).to_vec(),
            Err(_) => self.value_at(theta),
        }
    }

    /// Equality as functions on `(-infty, 0]` (up to exact arithmetic on the
    /// union grid).
    pub fn eq_as_function(&self, other: &HistoryPath) -> bool {
        diff_norms(self, other).c == 0.0
    }

    /// Construct from raw parts without re-validating (trajectory views build
    /// grids that are correct by construction).
    pub(crate) fn from_parts(
        nodes: Vec<f64>,
        values: Vec<Vec<f64>>,
        left_limits: Vec<Option<Vec<f64>>>,
        regularity: Regularity,
        dim: usize,
    ) -> Self {
        debug_assert_eq!(nodes.len(), values.len());
        debug_assert_eq!(nodes.len(), left_limits.len());
        debug_assert_eq!(*nodes.last().unwrap(), 0.0);
        HistoryPath {
            nodes,
            values,
            left_limits,
            regularity,
            dim,
        }
    }

    /// Re-express the path over a continuous (piecewise-linear) base with
    /// explicit left limits carrying any jumps. Exact: a cadlag segment that
    /// is constant on `[theta_j, theta_{j+1})` becomes a linear segment from
    /// `values[j]` to a left limit equal to `values[j]`.
    pub(crate) fn continuous_parts(&self) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Option<Vec<f64>>>) {
        match self.regularity {
            Regularity::Continuous => {
                (self.nodes.clone(), self.values.clone(), self.left_limits.clone())
            }
            Regularity::Cadlag => {
                let mut ll: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
                for j in 1..self.nodes.len() {
                    if self.values[j] != self.values[j - 1] {
                        ll[j] = Some(self.values[j - 1].clone());
                    }
                }
                (self.nodes.clone(), self.values.clone(), ll)
            }
        }
    }
}

fn union_nodes(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let t = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => {
                if x < y {
                    i += 1;
                    x
                } else if y < x {
                    j += 1;
                    y
                } else {
                    i += 1;
                    j += 1;
                    x
                }
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        out.push(t);
    }
    out
}

/// Sup norms of the difference `x - y`, computed exactly on the union grid.
#[derive(Debug, Clone, Copy)]
pub struct DiffNorms {
    /// `|x - y|_C`
    pub c: f64,
    /// `|x - y|_{C-}` (sup over `theta < 0`)
    pub c_minus: f64,
    /// `|x(0) - y(0)|`
    pub endpoint: f64,
}

pub fn diff_norms(x: &HistoryPath, y: &HistoryPath) -> DiffNorms {
    assert_eq!(x.dim(), y.dim());
    let nodes = union_nodes(&x.nodes, &y.nodes);
    let d = x.dim();
    let mut bx = vec![0.0; d];
    let mut by = vec![0.0; d];
    let mut c: f64 = 0.0;
    let mut c_minus: f64 = 0.0;
    let mut endpoint = 0.0;
    for &theta in &nodes {
        x.value_at_into(theta, &mut bx);
        y.value_at_into(theta, &mut by);
        let dr = bx.iter().zip(&by).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let lx = x.left_limit_at_theta(theta);
        let ly = y.left_limit_at_theta(theta);
        let dl = lx.iter().zip(&ly).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        c = c.max(dr).max(dl);
        if theta < 0.0 {
            c_minus = c_minus.max(dr).max(dl);
        } else {
            c_minus = c_minus.max(dl);
            endpoint = dr;
        }
    }
    DiffNorms { c, c_minus, endpoint }
}

/// `|x|_C` via `diff_norms` against zero; identical to `HistoryPath::sup_norm`.
pub fn sup_norm(x: &HistoryPath) -> f64 {
    x.sup_norm()
}

/// A pair `(t, x)`, the domain of all functionals.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedPath {
    pub time: f64,
    pub path: HistoryPath,
}

impl TimedPath {
    pub fn new(time: f64, path: HistoryPath) -> Self {
        assert!(time >= 0.0, "time must be non-negative");
        TimedPath { time, path }
    }
}

/// `d_inf((s, x), (l, y)) = |l - s| + |x_{l-s} - y|_C` for `s <= l`; symmetric.
pub fn d_infinity(a: &TimedPath, b: &TimedPath) -> f64 {
    let (early, late) = if a.time <= b.time { (a, b) } else { (b, a) };
    let gap = late.time - early.time;
    let shifted = early.path.shift(gap);
    gap + diff_norms(&shifted, &late.path).c
}

/// `|t - s| + |x - y|_C` with no shift. Not a gauge-compatible distance; kept
/// for the counterexample check.
pub fn norm1_distance(a: &TimedPath, b: &TimedPath) -> f64 {
    (a.time - b.time).abs() + diff_norms(&a.path, &b.path).c
}

// ---------------------------------------------------------------------------
// A read-only view of a history.  `HistoryPath` implements it; the simulator
// exposes in-place views over growing trajectories so coefficients never copy.
// ---------------------------------------------------------------------------

pub trait HistoryView: Sync {
    fn dim(&self) -> usize;
    fn endpoint(&self) -> &[f64];
    fn value_at_into(&self, theta: f64, out: &mut [f64]);
    fn sup_norm(&self) -> f64;
    fn sup_norm_strict(&self) -> f64;
    fn left_horizon(&self) -> f64;
    /// Visit the grid nodes in increasing theta over the truncated support.
    fn for_each_node(&self, f: &mut dyn FnMut(f64, &[f64]));
    fn to_path(&self) -> HistoryPath;
}

impl HistoryView for HistoryPath {
    fn dim(&self) -> usize {
        self.dim
    }
    fn endpoint(&self) -> &[f64] {
        HistoryPath::endpoint(self)
    }
    fn value_at_into(&self, theta: f64, out: &mut [f64]) {
        HistoryPath::value_at_into(self, theta, out)
    }
    fn sup_norm(&self) -> f64 {
        HistoryPath::sup_norm(self)
    }
    fn sup_norm_strict(&self) -> f64 {
        HistoryPath::sup_norm_strict(self)
    }
    fn left_horizon(&self) -> f64 {
        HistoryPath::left_horizon(self)
    }
    fn for_each_node(&self, f: &mut dyn FnMut(f64, &[f64])) {
        for (t, v) in self.nodes.iter().zip(&self.values) {
            f(*t, v);
        }
    }
    fn to_path(&self) -> HistoryPath {
        self.clone()
    }
}

// ---------------------------------------------------------------------------
// CSV serialization: rows (theta, v_1, ..., v_d); regularity and left_horizon
// live in a sidecar key-value block.
// ---------------------------------------------------------------------------

pub fn write_csv<W: Write>(p: &HistoryPath, w: &mut W) -> io::Result<()> {
    write!(w, "theta")?;
    for i in 0..p.dim {
        write!(w, ",v_{}", i + 1)?;
    }
    writeln!(w)?;
    for (t, v) in p.nodes.iter().zip(&p.values) {
        write!(w, "{}", fmt_f64(*t))?;
        for a in v {
            write!(w, ",{}", fmt_f64(*a))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_metadata<W: Write>(p: &HistoryPath, w: &mut W) -> io::Result<()> {
    writeln!(w, "regularity={}", p.regularity)?;
    writeln!(w, "left_horizon={}", fmt_f64(p.left_horizon()))?;
    writeln!(w, "dim={}", p.dim)
}

pub fn read_csv<R: BufRead>(r: &mut R, regularity: Regularity) -> Result<HistoryPath, PathError> {
    let mut nodes = Vec::new();
    let mut values = Vec::new();
    for (ln, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (ln == 0 && line.starts_with("theta")) {
            continue;
        }
        let mut fields = line.split(',');
        let theta: f64 = fields
            .next()
            .ok_or_else(|| PathError::Parse(format!("line {}: empty", ln + 1)))?
            .trim()
            .parse()
            .map_err(|e| PathError::Parse(format!("line {}: {}", ln + 1, e)))?;
        let v: Result<Vec<f64>, _> = fields.map(|f| f.trim().parse::<f64>()).collect();
        let v = v.map_err(|e| PathError::Parse(format!("line {}: {}", ln + 1, e)))?;
        nodes.push(theta);
        values.push(v);
    }
    HistoryPath::new(nodes, values, regularity)
}

/// Deterministic float formatting used by every CSV emitter (byte-reproducible).
pub fn fmt_f64(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{:.1}", x)
    } else {
        format!("{:.17e}", x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lin(nodes: Vec<f64>, vals: Vec<f64>) -> HistoryPath {
        HistoryPath::continuous(nodes, vals.into_iter().map(|v| vec![v]).collect()).unwrap()
    }

    #[test]
    fn sup_norm_zero_path() {
        assert_eq!(HistoryPath::zero(3, 2.0).sup_norm(), 0.0);
    }

    #[test]
    fn sup_norm_single_peak_cadlag() {
        let p = HistoryPath::cadlag(
            vec![-1.0, -0.5, 0.0],
            vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 2.0]],
        )
        .unwrap();
        assert_eq!(p.sup_norm(), 2.0);
        // the peak sits only at theta = 0
        assert_eq!(p.sup_norm_strict(), 0.0);
    }

    #[test]
    fn sup_norm_linear_segment_endpoints() {
        // through (-1, -3) and (0, 1): |.| maximized at an endpoint
        let p = HistoryPath::continuous(
            vec![-2.0, -1.0, 0.0],
            vec![vec![0.0], vec![-3.0], vec![1.0]],
        )
        .unwrap();
        assert_eq!(p.sup_norm(), 3.0);
    }

    #[test]
    fn shift_zero_path_and_identity() {
        let z = HistoryPath::zero(2, 1.0);
        assert!(z.shift(3.0).eq_as_function(&z));
        let p = lin(vec![-1.0, 0.0], vec![0.0, 1.0]);
        assert!(p.shift(0.0).eq_as_function(&p));
    }

    #[test]
    fn shift_freezes_endpoint() {
        let p = lin(vec![-1.0, 0.0], vec![0.0, 2.0]);
        let s = p.shift(0.5);
        assert_eq!(s.left_horizon(), 1.5);
        assert_eq!(s.value_at(0.0), vec![2.0]);
        assert_eq!(s.value_at(-0.25), vec![2.0]);
        assert_eq!(s.value_at(-0.5), vec![2.0]);
        assert_eq!(s.value_at(-1.0), vec![1.0]); // p(-0.5)
        assert_eq!(s.value_at(-1.5), vec![0.0]);
    }

    #[test]
    fn shift_composes() {
        let p = lin(vec![-2.0, -1.0, 0.0], vec![0.0, -1.5, 0.75]);
        let a = p.shift(0.3).shift(0.7);
        let b = p.shift(1.0);
        assert!(a.eq_as_function(&b));
    }

    #[test]
    fn shift_never_raises_sup_norm() {
        let p = lin(vec![-2.0, -1.0, 0.0], vec![0.0, 3.0, -1.0]);
        assert!(p.shift(0.9).sup_norm() <= p.sup_norm());
        assert_eq!(p.shift(0.9).sup_norm(), p.sup_norm());
    }

    #[test]
    fn d_infinity_basics() {
        let z = HistoryPath::zero(1, 1.0);
        let a = TimedPath::new(0.0, z.clone());
        let b = TimedPath::new(1.0, z.clone());
        assert_eq!(d_infinity(&a, &a), 0.0);
        assert_eq!(d_infinity(&a, &b), 1.0);
        assert_eq!(d_infinity(&b, &a), 1.0);

        let x = lin(vec![-1.0, 0.0], vec![0.0, 1.0]);
        let y = lin(vec![-1.0, 0.0], vec![0.0, -1.0]);
        let tx = TimedPath::new(2.0, x.clone());
        let ty = TimedPath::new(2.0, y.clone());
        assert_eq!(d_infinity(&tx, &ty), diff_norms(&x, &y).c);
        assert_eq!(diff_norms(&x, &y).c, 2.0);
    }

    #[test]
    fn d_infinity_of_shifted_self_is_time_gap() {
        let x = lin(vec![-2.0, -1.0, 0.0], vec![0.0, 1.0, -0.5]);
        for delta in [0.1, 0.5, 1.3] {
            let a = TimedPath::new(1.0, x.clone());
            let b = TimedPath::new(1.0 + delta, x.shift(delta));
            assert!((d_infinity(&a, &b) - delta).abs() < 1e-12);
        }
    }

    #[test]
    fn bump_creates_jump_and_keeps_interior() {
        let p = lin(vec![-1.0, 0.0], vec![0.0, 1.0]);
        let b = p.bump(0, 0.25);
        assert!(b.has_jump_at_zero());
        assert_eq!(b.value_at(0.0), vec![1.25]);
        assert_eq!(b.value_at(-0.5), vec![0.5]);
        assert_eq!(b.left_limit(1), &[1.0]);
        // shifting a bumped path keeps the jump, now interior
        let s = b.shift(0.5);
        assert_eq!(s.value_at(0.0), vec![1.25]);
        assert_eq!(s.value_at(-0.25), vec![1.25]);
        assert_eq!(s.value_at(-0.75), vec![0.75]);
        let dn = diff_norms(&s, &p.shift(0.5));
        assert!(dn.c <= 0.25 + 1e-15);
    }

    #[test]
    fn cadlag_interpolation_is_right_continuous() {
        let p = HistoryPath::cadlag(
            vec![-1.0, -0.5, 0.0],
            vec![vec![0.0], vec![2.0], vec![3.0]],
        )
        .unwrap();
        assert_eq!(p.value_at(-0.5), vec![2.0]);
        assert_eq!(p.value_at(-0.25), vec![2.0]);
        assert_eq!(p.value_at(-0.75), vec![0.0]);
        assert_eq!(p.value_at(0.0), vec![3.0]);
        assert_eq!(p.sup_norm_strict(), 2.0);
    }

    #[test]
    fn invariants_rejected() {
        assert!(HistoryPath::continuous(vec![-1.0, 0.5], vec![vec![0.0], vec![1.0]]).is_err());
        assert!(HistoryPath::continuous(vec![-1.0, 0.0], vec![vec![0.5], vec![1.0]]).is_err());
        assert!(
            HistoryPath::continuous(vec![0.0, -1.0], vec![vec![0.0], vec![1.0]]).is_err()
        );
        assert!(
            HistoryPath::continuous(vec![-1.0, 0.0], vec![vec![0.0], vec![f64::NAN]]).is_err()
        );
    }

    #[test]
    fn csv_roundtrip() {
        let p = lin(vec![-1.0, -0.25, 0.0], vec![0.0, 0.5, -1.0]);
        let mut buf = Vec::new();
        write_csv(&p, &mut buf).unwrap();
        let q = read_csv(&mut &buf[..], Regularity::Continuous).unwrap();
        assert!(p.eq_as_function(&q));
    }
}
