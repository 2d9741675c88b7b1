//! Optimal quadratic quantizers of N(0,1).
//!
//! Newton iteration on the distortion gradient with the closed-form cell
//! masses and partial means of the Gaussian density. The Hessian is
//! symmetric tridiagonal, so each step is a Thomas solve.

use crate::gaussian;
use crate::{Error, Result};
use std::collections::BTreeMap;

/// Gradient sup-norm target when the caller has no stronger requirement.
pub const DEFAULT_GRADIENT_TOL: f64 = 1e-12;

/// Stationary quantizer of the standard normal.
#[derive(Debug, Clone)]
pub struct Quantizer1D {
    pub n: usize,
    /// Codebook, ascending.
    pub points: Vec<f64>,
    /// Voronoi midpoints, length `n - 1`.
    pub boundaries: Vec<f64>,
    /// Cell masses, length `n`, summing to one.
    pub cell_probs: Vec<f64>,
    /// E min_i (Z - x_i)^2.
    pub distortion: f64,
    /// False when Newton stalled and the Lloyd fallback produced the result.
    pub newton_converged: bool,
}

fn cell_bound(bounds: &[f64], i: usize, n: usize) -> (f64, f64) {
    let lo = if i == 0 { f64::NEG_INFINITY } else { bounds[i - 1] };
    let hi = if i == n - 1 { f64::INFINITY } else { bounds[i] };
    (lo, hi)
}

/// Midpoint boundaries, cell masses `p_i` and partial means
/// `m_i = E[Z 1_cell] = pdf(lo) - pdf(hi)`.
fn cell_data(points: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = points.len();
    let bounds: Vec<f64> = (0..n.saturating_sub(1))
        .map(|i| 0.5 * (points[i] + points[i + 1]))
        .collect();
    let mut probs = Vec::with_capacity(n);
    let mut means = Vec::with_capacity(n);
    for i in 0..n {
        let (lo, hi) = cell_bound(&bounds, i, n);
        probs.push(gaussian::interval_mass(lo, hi));
        means.push(gaussian::pdf(lo) - gaussian::pdf(hi));
    }
    (bounds, probs, means)
}

/// E min_i (Z - x_i)^2 for the Voronoi partition of an ascending codebook.
/// Valid away from stationarity, which the finite-difference gradient
/// check relies on.
pub fn distortion(points: &[f64]) -> f64 {
    let n = points.len();
    let (bounds, probs, means) = cell_data(points);
    let mut total = 0.0;
    for i in 0..n {
        let (lo, hi) = cell_bound(&bounds, i, n);
        // E[Z^2 1_cell] = p + lo pdf(lo) - hi pdf(hi); the infinite
        // endpoints contribute nothing.
        let lo_term = if lo.is_finite() { lo * gaussian::pdf(lo) } else { 0.0 };
        let hi_term = if hi.is_finite() { hi * gaussian::pdf(hi) } else { 0.0 };
        let sq = probs[i] + lo_term - hi_term;
        total += sq - 2.0 * points[i] * means[i] + points[i] * points[i] * probs[i];
    }
    total
}

/// Solve the symmetric tridiagonal system (diag, off) s = rhs in place.
fn thomas_solve(diag: &[f64], off: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut factor = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot.abs() < 1e-300 {
        return Err(Error::numeric("thomas_solve", "zero pivot"));
    }
    if n > 1 {
        factor[0] = off[0] / pivot;
    }
    x[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - off[i - 1] * factor[i - 1];
        if pivot.abs() < 1e-300 {
            return Err(Error::numeric("thomas_solve", "zero pivot"));
        }
        if i < n - 1 {
            factor[i] = off[i] / pivot;
        }
        x[i] = (rhs[i] - off[i - 1] * x[i - 1]) / pivot;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        x[i] -= factor[i] * x[i + 1];
    }
    Ok(x)
}

/// Optimal N-point quantizer of N(0,1): Newton on the gradient
/// `g_i = 2 (x_i p_i - m_i)`, initialized at the uniform quantiles
/// `quantile((i - 1/2)/N)`, driven to sup-norm `tol`.
pub fn gauss1d(n: usize, tol: f64) -> Result<Quantizer1D> {
    if n == 0 {
        return Err(Error::invalid("N", "need at least one point"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", format!("{tol} must be positive")));
    }
    let mut points: Vec<f64> =
        (0..n).map(|i| gaussian::quantile((i as f64 + 0.5) / n as f64)).collect();
    let mut newton_converged = false;
    for _ in 0..200 {
        let (bounds, probs, means) = cell_data(&points);
        let grad: Vec<f64> = (0..n).map(|i| 2.0 * (points[i] * probs[i] - means[i])).collect();
        let sup = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if sup <= tol {
            newton_converged = true;
            break;
        }
        // Tridiagonal Hessian: off_i = -pdf(b_i) (x_{i+1} - x_i) / 2,
        // diag_i = 2 p_i + off_{i-1} + off_i.
        let off: Vec<f64> = (0..n - 1)
            .map(|i| -0.5 * gaussian::pdf(bounds[i]) * (points[i + 1] - points[i]))
            .collect();
        let diag: Vec<f64> = (0..n)
            .map(|i| {
                let left = if i > 0 { off[i - 1] } else { 0.0 };
                let right = if i < n - 1 { off[i] } else { 0.0 };
                2.0 * probs[i] + left + right
            })
            .collect();
        let step = thomas_solve(&diag, &off, &grad)?;
        // Halve the step until the codebook stays strictly ascending.
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> =
                (0..n).map(|i| points[i] - scale * step[i]).collect();
            let ascending = trial.windows(2).all(|w| w[0] < w[1]);
            if ascending && trial.iter().all(|x| x.is_finite()) {
                points = trial;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(Error::numeric(
                "gauss1d",
                format!("Newton step collapses the codebook at N = {n}"),
            ));
        }
    }
    if !newton_converged {
        // Lloyd fixed point x_i <- m_i / p_i; linear but unconditionally
        // stable. The result is flagged.
        for _ in 0..500 {
            let (_, probs, means) = cell_data(&points);
            let mut delta = 0.0f64;
            for i in 0..n {
                let next = means[i] / probs[i];
                delta = delta.max((next - points[i]).abs());
                points[i] = next;
            }
            if delta <= 1e-12 {
                break;
            }
        }
    }
    let (boundaries, cell_probs, _) = cell_data(&points);
    let total = distortion(&points);
    Ok(Quantizer1D {
        n,
        points,
        boundaries,
        cell_probs,
        distortion: total,
        newton_converged,
    })
}

/// Distortions of the optimal quantizers for every size `1..=max_size`.
#[derive(Debug, Clone)]
pub struct DistortionTable {
    entries: BTreeMap<usize, f64>,
}

impl DistortionTable {
    pub fn build(max_size: usize, tol: f64) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for n in 1..=max_size {
            entries.insert(n, gauss1d(n, tol)?.distortion);
        }
        Ok(DistortionTable { entries })
    }

    pub fn get(&self, size: usize) -> Result<f64> {
        self.entries.get(&size).copied().ok_or(Error::MissingDistortion(size))
    }

    pub fn max_size(&self) -> usize {
        self.entries.keys().next_back().copied().unwrap_or(0)
    }
}
