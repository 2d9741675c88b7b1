//! Covariance kernels of the supported Gaussian processes and their
//! closed-form Karhunen-Loeve systems where those exist.

use crate::error::{Error, Result};

/// Process family together with its shape parameters.
///
/// Horizons are carried by [`CovarianceKernel`]; the Ornstein-Uhlenbeck
/// families are the centered ones matching the closed-form eigenfunctions
/// (the SDE drift constant plays no role there). The stationary family
/// starts from its invariant law `N(0, sigma^2 / (2 theta))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProcessFamily {
    BrownianMotion,
    BrownianBridge,
    OrnsteinUhlenbeckZero { theta: f64, sigma: f64 },
    OrnsteinUhlenbeckStationary { theta: f64, sigma: f64 },
    FractionalBrownianMotion { hurst: f64 },
}

impl ProcessFamily {
    fn validate(&self) -> Result<()> {
        match *self {
            ProcessFamily::BrownianMotion | ProcessFamily::BrownianBridge => Ok(()),
            ProcessFamily::OrnsteinUhlenbeckZero { theta, sigma }
            | ProcessFamily::OrnsteinUhlenbeckStationary { theta, sigma } => {
                if !(theta > 0.0) {
                    return Err(Error::invalid("theta", format!("must be positive, got {theta}")));
                }
                if !(sigma > 0.0) {
                    return Err(Error::invalid("sigma", format!("must be positive, got {sigma}")));
                }
                Ok(())
            }
            ProcessFamily::FractionalBrownianMotion { hurst } => {
                if !(hurst > 0.0 && hurst < 1.0) {
                    return Err(Error::invalid("H", format!("must lie in (0,1), got {hurst}")));
                }
                Ok(())
            }
        }
    }

    /// Stationary variance `sigma^2 / (2 theta)` of the OU families.
    pub fn ou_stationary_variance(&self) -> Option<f64> {
        match *self {
            ProcessFamily::OrnsteinUhlenbeckZero { theta, sigma }
            | ProcessFamily::OrnsteinUhlenbeckStationary { theta, sigma } => {
                Some(sigma * sigma / (2.0 * theta))
            }
            _ => None,
        }
    }
}

/// `|x|^p` with an explicit zero branch; `exp(p ln x)` is NaN at 0.
/// `p = 1` short-circuits so that `H = 1/2` kernels reduce exactly.
#[inline]
pub(crate) fn abs_pow(x: f64, p: f64) -> f64 {
    let a = x.abs();
    if a == 0.0 {
        0.0
    } else if p == 1.0 {
        a
    } else {
        (p * a.ln()).exp()
    }
}

/// A covariance function `Gamma(s,t)` on `[0,T]^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceKernel {
    pub family: ProcessFamily,
    pub t_max: f64,
}

impl CovarianceKernel {
    pub fn new(family: ProcessFamily, t_max: f64) -> Result<Self> {
        family.validate()?;
        if !(t_max > 0.0) {
            return Err(Error::invalid("T", format!("horizon must be positive, got {t_max}")));
        }
        Ok(CovarianceKernel { family, t_max })
    }

    /// Kernel value `Gamma(s,t)`; symmetric in its arguments by construction.
    pub fn eval(&self, s: f64, t: f64) -> f64 {
        match self.family {
            ProcessFamily::BrownianMotion => s.min(t),
            ProcessFamily::BrownianBridge => s.min(t) - s * t / self.t_max,
            ProcessFamily::OrnsteinUhlenbeckZero { theta, sigma } => {
                let v = sigma * sigma / (2.0 * theta);
                v * ((-theta * (s - t).abs()).exp() - (-theta * (s + t)).exp())
            }
            ProcessFamily::OrnsteinUhlenbeckStationary { theta, sigma } => {
                let v = sigma * sigma / (2.0 * theta);
                v * (-theta * (s - t).abs()).exp()
            }
            ProcessFamily::FractionalBrownianMotion { hurst } => {
                let two_h = 2.0 * hurst;
                0.5 * (abs_pow(s, two_h) + abs_pow(t, two_h) - abs_pow(s - t, two_h))
            }
        }
    }

    /// Domain-checked kernel evaluation for external callers.
    pub fn eval_checked(&self, s: f64, t: f64) -> Result<f64> {
        for (name, x) in [("s", s), ("t", t)] {
            if !(0.0..=self.t_max).contains(&x) {
                return Err(Error::invalid(
                    name,
                    format!("{x} outside the kernel domain [0, {}]", self.t_max),
                ));
            }
        }
        Ok(self.eval(s, t))
    }

    /// Exact `int_0^T Gamma(t,t) dt` per family.
    pub fn trace(&self) -> f64 {
        let t = self.t_max;
        match self.family {
            ProcessFamily::BrownianMotion => t * t / 2.0,
            ProcessFamily::BrownianBridge => t * t / 6.0,
            ProcessFamily::OrnsteinUhlenbeckZero { theta, sigma } => {
                let v = sigma * sigma / (2.0 * theta);
                v * (t - (1.0 - (-2.0 * theta * t).exp()) / (2.0 * theta))
            }
            ProcessFamily::OrnsteinUhlenbeckStationary { theta, sigma } => {
                sigma * sigma / (2.0 * theta) * t
            }
            ProcessFamily::FractionalBrownianMotion { hurst } => {
                let a = 2.0 * hurst + 1.0;
                abs_pow(t, a) / a
            }
        }
    }
}

/// Closed-form K-L system: eigenvalues, eigenfunction evaluators and, for
/// the OU families, the transcendental frequencies.
#[derive(Debug, Clone)]
pub struct ClosedFormKl {
    pub family: ProcessFamily,
    pub t_max: f64,
    /// Descending eigenvalues, `k_max` of them.
    pub eigenvalues: Vec<f64>,
    /// OU frequencies (rad/time), ascending, when the family has them.
    pub omegas: Option<Vec<f64>>,
}

impl ClosedFormKl {
    /// Number of modes available.
    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// L2-normalized eigenfunction `e_k(t)`; `mode` is zero-based.
    pub fn eigenfunction(&self, mode: usize, t: f64) -> f64 {
        let t_max = self.t_max;
        match self.family {
            ProcessFamily::BrownianMotion => {
                let freq = std::f64::consts::PI * (mode as f64 + 0.5) / t_max;
                (2.0 / t_max).sqrt() * (freq * t).sin()
            }
            ProcessFamily::BrownianBridge => {
                let freq = std::f64::consts::PI * (mode as f64 + 1.0) / t_max;
                (2.0 / t_max).sqrt() * (freq * t).sin()
            }
            ProcessFamily::OrnsteinUhlenbeckZero { .. } => {
                let omega = self.omegas.as_ref().unwrap()[mode];
                let norm = t_max / 2.0 - (2.0 * omega * t_max).sin() / (4.0 * omega);
                (omega * t).sin() / norm.sqrt()
            }
            ProcessFamily::OrnsteinUhlenbeckStationary { theta, .. } => {
                let omega = self.omegas.as_ref().unwrap()[mode];
                let s2 = (2.0 * omega * t_max).sin() / (2.0 * omega);
                // The omega^2/2 coefficient is forced by ||e_k|| = 1
                // (expand int (omega cos + theta sin)^2).
                let inv_c2 = 0.5 * omega * omega * (t_max + s2)
                    + 0.5 * theta * (1.0 - (2.0 * omega * t_max).cos())
                    + 0.5 * theta * theta * (t_max - s2);
                ((omega * t).cos() * omega + (omega * t).sin() * theta) / inv_c2.sqrt()
            }
            ProcessFamily::FractionalBrownianMotion { .. } => {
                unreachable!("constructor rejects fBm")
            }
        }
    }
}

/// Closed-form K-L system of the first `k_max` modes.
///
/// Errors on fractional Brownian motion, which has no known closed form;
/// use the Nystrom pipeline there.
pub fn closed_form_kl(kernel: &CovarianceKernel, k_max: usize) -> Result<ClosedFormKl> {
    if k_max == 0 {
        return Err(Error::invalid("k_max", "need at least one mode"));
    }
    let t_max = kernel.t_max;
    let (eigenvalues, omegas) = match kernel.family {
        ProcessFamily::BrownianMotion => {
            let lam = (0..k_max)
                .map(|k| {
                    let f = t_max / (std::f64::consts::PI * (k as f64 + 0.5));
                    f * f
                })
                .collect();
            (lam, None)
        }
        ProcessFamily::BrownianBridge => {
            let lam = (0..k_max)
                .map(|k| {
                    let f = t_max / (std::f64::consts::PI * (k as f64 + 1.0));
                    f * f
                })
                .collect();
            (lam, None)
        }
        ProcessFamily::OrnsteinUhlenbeckZero { theta, sigma } => {
            let g = |w: f64| theta * (w * t_max).sin() + w * (w * t_max).cos();
            let dg = |w: f64| {
                (theta * t_max + 1.0) * (w * t_max).cos() - w * t_max * (w * t_max).sin()
            };
            let omegas = ou_frequencies(g, dg, t_max, k_max)?;
            let lam = omegas.iter().map(|&w| sigma * sigma / (w * w + theta * theta)).collect();
            (lam, Some(omegas))
        }
        ProcessFamily::OrnsteinUhlenbeckStationary { theta, sigma } => {
            let g = |w: f64| {
                2.0 * theta * w * (w * t_max).cos() + (theta * theta - w * w) * (w * t_max).sin()
            };
            let dg = |w: f64| {
                2.0 * theta * (w * t_max).cos() - 2.0 * theta * w * t_max * (w * t_max).sin()
                    - 2.0 * w * (w * t_max).sin()
                    + (theta * theta - w * w) * t_max * (w * t_max).cos()
            };
            let omegas = ou_frequencies(g, dg, t_max, k_max)?;
            let lam = omegas.iter().map(|&w| sigma * sigma / (w * w + theta * theta)).collect();
            (lam, Some(omegas))
        }
        ProcessFamily::FractionalBrownianMotion { .. } => {
            return Err(Error::invalid(
                "family",
                "fractional Brownian motion has no closed-form K-L decomposition",
            ));
        }
    };
    Ok(ClosedFormKl { family: kernel.family, t_max, eigenvalues, omegas })
}

/// Strictly positive solutions of `g(omega) = 0`, one per interval
/// `((k-1) pi / T, k pi / T)`: bracketed bisection plus Newton polish.
fn ou_frequencies<G, DG>(g: G, dg: DG, t_max: f64, k_max: usize) -> Result<Vec<f64>>
where
    G: Fn(f64) -> f64,
    DG: Fn(f64) -> f64,
{
    let pi_t = std::f64::consts::PI / t_max;
    let mut omegas = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let mut lo = (k - 1) as f64 * pi_t;
        let mut hi = k as f64 * pi_t;
        // Stay off the interval ends where g vanishes trivially (omega = 0)
        // or touches the next bracket.
        let pad = 1e-9 * pi_t;
        lo += pad;
        hi -= pad;
        let (mut glo, ghi) = (g(lo), g(hi));
        if glo == 0.0 {
            omegas.push(lo);
            continue;
        }
        if glo * ghi > 0.0 {
            return Err(Error::numeric(
                "ou_frequencies",
                format!("no sign change in bracket {k} ({lo}, {hi})"),
            ));
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            let gm = g(mid);
            if gm == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if glo * gm < 0.0 {
                hi = mid;
            } else {
                lo = mid;
                glo = gm;
            }
        }
        let mut w = 0.5 * (lo + hi);
        // Newton polish; the bisection estimate is already inside the basin.
        for _ in 0..8 {
            let gw = g(w);
            if gw.abs() <= 1e-13 * (1.0 + w) {
                break;
            }
            let d = dg(w);
            if d == 0.0 {
                break;
            }
            let step = gw / d;
            let wn = w - step;
            if wn <= (k - 1) as f64 * pi_t || wn >= k as f64 * pi_t {
                break;
            }
            w = wn;
        }
        if g(w).abs() > 1e-13 * (1.0 + w.abs()).max(10.0) {
            return Err(Error::numeric(
                "ou_frequencies",
                format!("frequency {k} residual {} above tolerance", g(w).abs()),
            ));
        }
        omegas.push(w);
    }
    Ok(omegas)
}
