//! One handle over the two K-L backends.
//!
//! Closed-form systems exist for Brownian motion, the bridge and both OU
//! variants; fractional Brownian motion goes through the extrapolated
//! Nystrom pipeline. Downstream consumers (quantizers, stratification,
//! pricing) only need eigenvalues, the operator trace and pointwise
//! eigenfunction evaluation, so they never branch on the backend.

use crate::fbm::fbm_kl;
use crate::kernels::{closed_form_kl, ClosedFormKl, CovarianceKernel, ProcessFamily};
use crate::nystrom::{kl_approx, KlApproximation};
use crate::{Error, Result};

#[derive(Debug, Clone)]
enum Source {
    Closed(ClosedFormKl),
    Nystrom(KlApproximation),
}

/// Truncated K-L decomposition of a centered Gaussian process on `[0, T]`.
#[derive(Debug, Clone)]
pub struct KlExpansion {
    kernel: CovarianceKernel,
    trace: f64,
    source: Source,
}

impl KlExpansion {
    /// Exact decomposition, for the families that have one.
    pub fn closed_form(kernel: CovarianceKernel, modes: usize) -> Result<Self> {
        let closed = closed_form_kl(&kernel, modes)?;
        Ok(KlExpansion { kernel, trace: kernel.trace(), source: Source::Closed(closed) })
    }

    /// Extrapolated Nystrom decomposition at three trapezoidal resolutions.
    /// Fractional Brownian motion dispatches to the dedicated assembly,
    /// which switches to the transformed rule below H = 1/2.
    pub fn nystrom(
        kernel: CovarianceKernel,
        modes: usize,
        resolutions: (usize, usize, usize),
    ) -> Result<Self> {
        let approx = match kernel.family {
            ProcessFamily::FractionalBrownianMotion { hurst } => {
                fbm_kl(hurst, kernel.t_max, modes, resolutions)?
            }
            _ => kl_approx(&kernel, modes, resolutions)?,
        };
        Ok(KlExpansion { kernel, trace: kernel.trace(), source: Source::Nystrom(approx) })
    }

    pub fn kernel(&self) -> &CovarianceKernel {
        &self.kernel
    }

    /// Trace of the covariance operator; strictly larger than the sum of
    /// the retained eigenvalues.
    pub fn trace(&self) -> f64 {
        self.trace
    }

    pub fn modes(&self) -> usize {
        match &self.source {
            Source::Closed(c) => c.modes(),
            Source::Nystrom(a) => a.modes,
        }
    }

    /// Retained eigenvalues, descending. Extrapolated values for the
    /// Nystrom backend.
    pub fn eigenvalues(&self) -> &[f64] {
        match &self.source {
            Source::Closed(c) => &c.eigenvalues,
            Source::Nystrom(a) => &a.eigenvalues,
        }
    }

    /// `e_k(t)`, `mode` zero-based.
    pub fn eigenfunction(&self, mode: usize, t: f64) -> Result<f64> {
        if mode >= self.modes() {
            return Err(Error::ModeShortfall { needed: mode + 1, available: self.modes() });
        }
        match &self.source {
            Source::Closed(c) => Ok(c.eigenfunction(mode, t)),
            Source::Nystrom(a) => a.eigenfunction(mode, t),
        }
    }

    /// Every retained eigenfunction sampled on `grid`, one row per mode.
    pub fn sample_modes(&self, grid: &[f64]) -> Result<Vec<Vec<f64>>> {
        (0..self.modes())
            .map(|k| grid.iter().map(|&t| self.eigenfunction(k, t)).collect())
            .collect()
    }

    /// Raw (non-extrapolated) eigenvalues of the finest discrete system;
    /// `None` for the closed-form backend.
    pub fn finest_eigenvalues(&self) -> Option<&[f64]> {
        match &self.source {
            Source::Closed(_) => None,
            Source::Nystrom(a) => Some(&a.systems[2].eigenvalues),
        }
    }

    /// Panel counts of the three Nystrom resolutions; `None` for closed form.
    pub fn resolutions(&self) -> Option<(usize, usize, usize)> {
        match &self.source {
            Source::Closed(_) => None,
            Source::Nystrom(a) => Some((
                a.systems[0].resolution,
                a.systems[1].resolution,
                a.systems[2].resolution,
            )),
        }
    }

    pub fn is_closed_form(&self) -> bool {
        matches!(self.source, Source::Closed(_))
    }

    /// Full three-resolution approximation, when that backend is active.
    pub fn approximation(&self) -> Option<&KlApproximation> {
        match &self.source {
            Source::Closed(_) => None,
            Source::Nystrom(a) => Some(a),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bm(t_max: f64) -> CovarianceKernel {
        CovarianceKernel::new(ProcessFamily::BrownianMotion, t_max).unwrap()
    }

    #[test]
    fn closed_form_backend_matches_formulas() {
        let kl = KlExpansion::closed_form(bm(1.0), 4).unwrap();
        assert_eq!(kl.modes(), 4);
        assert!(kl.is_closed_form());
        let pi = std::f64::consts::PI;
        assert_abs_diff_eq!(kl.eigenvalues()[0], (1.0 / (pi * 0.5)).powi(2), epsilon = 1e-15);
        let e1 = kl.eigenfunction(0, 0.5).unwrap();
        assert_abs_diff_eq!(e1, 2f64.sqrt() * (pi * 0.25).sin(), epsilon = 1e-14);
        assert_abs_diff_eq!(kl.trace(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn nystrom_backend_matches_closed_form() {
        let kl = KlExpansion::nystrom(bm(1.0), 3, (25, 50, 100)).unwrap();
        let closed = KlExpansion::closed_form(bm(1.0), 3).unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(kl.eigenvalues()[k], closed.eigenvalues()[k], epsilon = 1e-9);
            // Interpolated eigenfunctions at these coarse resolutions carry
            // O(1e-3) error; this only checks the backend wiring.
            let t = 0.37;
            assert_abs_diff_eq!(
                kl.eigenfunction(k, t).unwrap(),
                closed.eigenfunction(k, t).unwrap(),
                epsilon = 1e-2
            );
        }
        assert_eq!(kl.resolutions(), Some((25, 50, 100)));
        assert!(kl.finest_eigenvalues().unwrap().len() >= 3);
    }

    #[test]
    fn fbm_dispatches_to_dedicated_assembly() {
        let kernel =
            CovarianceKernel::new(ProcessFamily::FractionalBrownianMotion { hurst: 0.25 }, 1.0)
                .unwrap();
        let kl = KlExpansion::nystrom(kernel, 3, (16, 32, 64)).unwrap();
        assert!(!kl.is_closed_form());
        assert!(kl.eigenvalues()[0] > 0.0);
        assert_abs_diff_eq!(kl.trace(), 1.0 / 1.5, epsilon = 1e-15);
        // fBm pins the origin.
        assert_abs_diff_eq!(kl.eigenfunction(0, 0.0).unwrap(), 0.0, epsilon = 1e-12);
        assert!(KlExpansion::closed_form(kernel, 3).is_err());
    }

    #[test]
    fn mode_shortfall_is_reported() {
        let kl = KlExpansion::closed_form(bm(1.0), 2).unwrap();
        assert!(matches!(
            kl.eigenfunction(2, 0.5),
            Err(Error::ModeShortfall { needed: 3, available: 2 })
        ));
    }

    #[test]
    fn sample_modes_shape() {
        let kl = KlExpansion::closed_form(bm(2.0), 3).unwrap();
        let grid: Vec<f64> = (0..11).map(|i| i as f64 * 0.2).collect();
        let rows = kl.sample_modes(&grid).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.len() == 11));
    }
}
