//! Product decompositions of a quantization budget across K-L modes.
//!
//! A decomposition assigns `N_k` quantizer points to mode `k`; the
//! criterion is the resulting squared L^2 quantization error
//! `sum_k lambda_k D(N_k) + (trace - sum_k lambda_k)`, the second term
//! being the untouched tail of the expansion.

use super::gauss::DistortionTable;
use crate::{Error, Result};

/// A size vector together with its criterion value.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductDecomposition {
    /// Points per mode, non-increasing.
    pub sizes: Vec<usize>,
    /// Squared quantization error of the product quantizer.
    pub criterion: f64,
}

fn validate_spectrum(eigenvalues: &[f64], trace: f64) -> Result<()> {
    for w in eigenvalues.windows(2) {
        if w[1] > w[0] {
            return Err(Error::invalid(
                "eigenvalues",
                "must be sorted in non-increasing order",
            ));
        }
    }
    if eigenvalues.iter().any(|&l| l < 0.0) {
        return Err(Error::invalid("eigenvalues", "must be non-negative"));
    }
    let partial: f64 = eigenvalues.iter().sum();
    if partial > trace + 1e-9 * trace.abs().max(1.0) {
        return Err(Error::invalid(
            "trace",
            format!("partial eigenvalue sum {partial} exceeds the trace {trace}"),
        ));
    }
    Ok(())
}

/// Squared quantization error of the product quantizer with the given
/// per-mode sizes. Modes beyond `sizes.len()` contribute their full
/// eigenvalue (a one-point quantizer).
pub fn decomposition_criterion(
    sizes: &[usize],
    eigenvalues: &[f64],
    trace: f64,
    table: &DistortionTable,
) -> Result<f64> {
    validate_spectrum(eigenvalues, trace)?;
    if sizes.len() > eigenvalues.len() {
        return Err(Error::ModeShortfall {
            needed: sizes.len(),
            available: eigenvalues.len(),
        });
    }
    if sizes.iter().any(|&n| n == 0) {
        return Err(Error::invalid("sizes", "every factor must be at least one"));
    }
    let mut value = trace;
    for (k, &n) in sizes.iter().enumerate() {
        value += eigenvalues[k] * (table.get(n)? - 1.0);
    }
    Ok(value)
}

/// Enumerate every non-increasing factor list with entries >= 2 and product
/// <= budget, invoking `visit` on each (the empty list included).
fn enumerate_factors(
    budget: usize,
    max_first: usize,
    prefix: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    visit(prefix);
    let mut f = max_first.min(budget);
    while f >= 2 {
        prefix.push(f);
        enumerate_factors(budget / f, f, prefix, visit);
        prefix.pop();
        f -= 1;
    }
}

/// Minimize the criterion over all product decompositions with total size
/// at most `n_total`. Ties go to fewer factors, then to the
/// lexicographically larger size vector.
pub fn blind_decomposition(
    n_total: usize,
    eigenvalues: &[f64],
    trace: f64,
    table: &DistortionTable,
) -> Result<ProductDecomposition> {
    validate_spectrum(eigenvalues, trace)?;
    if n_total == 0 {
        return Err(Error::invalid("N", "budget must be at least one"));
    }
    if table.max_size() < n_total {
        return Err(Error::MissingDistortion(n_total));
    }
    // Deepest possible decomposition is all twos.
    let mut d_max = 0usize;
    while (1usize << (d_max + 1)) <= n_total {
        d_max += 1;
    }
    let d_max = d_max.max(1);
    if eigenvalues.len() < d_max {
        return Err(Error::ModeShortfall { needed: d_max, available: eigenvalues.len() });
    }
    let mut best_sizes: Option<Vec<usize>> = None;
    let mut best_value = f64::INFINITY;
    let mut prefix = Vec::new();
    let mut consider = |sizes: &[usize]| {
        let mut value = trace;
        for (k, &n) in sizes.iter().enumerate() {
            value += eigenvalues[k] * (table.get(n).expect("size within table") - 1.0);
        }
        let better = match &best_sizes {
            None => true,
            Some(current) => {
                if value < best_value - 1e-15 {
                    true
                } else if value > best_value + 1e-15 {
                    false
                } else {
                    // Numerical tie: prefer fewer factors, then the
                    // lexicographically larger vector.
                    sizes.len() < current.len()
                        || (sizes.len() == current.len() && sizes > current.as_slice())
                }
            }
        };
        if better {
            best_value = value;
            best_sizes = Some(sizes.to_vec());
        }
    };
    enumerate_factors(n_total, n_total, &mut prefix, &mut consider);
    let mut sizes = best_sizes.expect("enumeration visits the empty prefix");
    if sizes.is_empty() {
        // The trivial quantizer: one point on the first mode.
        sizes.push(1);
    }
    Ok(ProductDecomposition { sizes, criterion: best_value })
}
