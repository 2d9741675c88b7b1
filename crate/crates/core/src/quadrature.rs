//! Quadrature rules for the Nystrom discretization.

use crate::error::{Error, Result};

/// A positive quadrature rule on `[0, T]`: abscissas with matching weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub abscissas: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.abscissas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.abscissas.is_empty()
    }

    /// Total mass `sum of weights`, compensated so that the mass invariant
    /// reflects the stored weights rather than summation order.
    pub fn mass(&self) -> f64 {
        let mut sum = 0.0;
        let mut carry = 0.0;
        for &w in &self.weights {
            let y = w - carry;
            let t = sum + y;
            carry = (t - sum) - y;
            sum = t;
        }
        sum
    }

    /// Apply the rule to samples of an integrand taken at the abscissas.
    pub fn integrate_samples(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.weights.len());
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Apply the rule to a function.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.abscissas.iter().zip(&self.weights).map(|(&s, &w)| w * f(s)).sum()
    }
}

/// Composite trapezoidal rule with `n` equal panels on `[0, T]`:
/// abscissas `j T / n` and weights `(h/2, h, ..., h, h/2)` with `h = T/n`.
pub fn trapezoidal_rule(t_max: f64, n: usize) -> Result<QuadratureRule> {
    if n < 2 {
        return Err(Error::invalid("n", format!("need at least 2 panels, got {n}")));
    }
    if !(t_max > 0.0) {
        return Err(Error::invalid("T", format!("horizon must be positive, got {t_max}")));
    }
    let h = t_max / n as f64;
    let abscissas: Vec<f64> = (0..=n).map(|j| j as f64 * t_max / n as f64).collect();
    let mut weights = vec![h; n + 1];
    weights[0] = 0.5 * h;
    weights[n] = 0.5 * h;
    Ok(QuadratureRule { abscissas, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_panel_rule() {
        let r = trapezoidal_rule(1.0, 2).unwrap();
        assert_eq!(r.abscissas, vec![0.0, 0.5, 1.0]);
        assert_eq!(r.weights, vec![0.25, 0.5, 0.25]);
    }

    #[test]
    fn mass_is_horizon() {
        for &(t, n) in &[(1.0, 4), (1.0, 100), (1.5, 11), (2.0, 513)] {
            let r = trapezoidal_rule(t, n).unwrap();
            assert_abs_diff_eq!(r.mass(), t, epsilon = 1e-14);
        }
    }

    #[test]
    fn quadratic_integrand_error_scale() {
        // int_0^1 t^2 dt = 1/3; trapezoid error h^2/12 * int f'' = h^2/6.
        let r = trapezoidal_rule(1.0, 100).unwrap();
        let v = r.integrate(|t| t * t);
        assert_abs_diff_eq!(v, 0.333_350, epsilon = 1e-6);
        assert_abs_diff_eq!(v - 1.0 / 3.0, 1e-4 / 6.0, epsilon = 1e-9);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(trapezoidal_rule(1.0, 1).is_err());
        assert!(trapezoidal_rule(0.0, 4).is_err());
        assert!(trapezoidal_rule(-1.0, 4).is_err());
    }
}
