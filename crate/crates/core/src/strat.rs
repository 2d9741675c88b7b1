//! Stratified simulation on the cells of a product functional quantizer.
//!
//! The strata are the Cartesian products of the 1-d Voronoi cells in
//! coefficient space. Conditionally on the cell, the first d K-L
//! coordinates are independent truncated normals and the remainder of the
//! path is Gaussian with a covariance that does not depend on the cell,
//! so each stratum is sampled exactly: truncated coordinates by inverse
//! CDF, the remainder through one Cholesky factor shared by all strata.

use crate::expansion::KlExpansion;
use crate::gaussian;
use crate::kernels::CovarianceKernel;
use crate::quantizer::functional::multi_index;
use crate::quantizer::{FunctionalQuantizer, QuantizerStructure};
use crate::stats::{ci95_halfwidth, OnlineMoments};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;

/// Product strata of the coefficient space, with exact weights and local
/// inertias from truncated-normal moments.
#[derive(Debug, Clone)]
pub struct Stratification {
    /// Cells per dimension; empty for the single-stratum (plain) layout.
    pub sizes: Vec<usize>,
    /// Per dimension, the N_k - 1 interior cell boundaries.
    pub boundaries: Vec<Vec<f64>>,
    /// Per dimension, the N_k cell masses.
    pub dim_cell_probs: Vec<Vec<f64>>,
    /// Stratum weights p_i, flat over multi-indices (last dim fastest).
    pub probabilities: Vec<f64>,
    /// Local inertias sigma_i^2: conditional variance of the process
    /// inside the stratum, tail included.
    pub local_inertia: Vec<f64>,
    /// lambda_1..lambda_d of the underlying expansion.
    pub eigenvalues: Vec<f64>,
    pub trace: f64,
}

impl Stratification {
    /// One stratum covering everything: plain Monte-Carlo.
    pub fn single(trace: f64) -> Self {
        Stratification {
            sizes: Vec::new(),
            boundaries: Vec::new(),
            dim_cell_probs: Vec::new(),
            probabilities: vec![1.0],
            local_inertia: vec![trace],
            eigenvalues: Vec::new(),
            trace,
        }
    }

    pub fn strata(&self) -> usize {
        self.probabilities.len()
    }

    pub fn truncation(&self) -> usize {
        self.sizes.len()
    }

    /// Cell bounds of dimension `dim` at cell index `idx`.
    pub fn cell_bounds(&self, dim: usize, idx: usize) -> (f64, f64) {
        let bounds = &self.boundaries[dim];
        let lo = if idx == 0 { f64::NEG_INFINITY } else { bounds[idx - 1] };
        let hi = if idx == bounds.len() { f64::INFINITY } else { bounds[idx] };
        (lo, hi)
    }
}

/// Strata from a product functional quantizer. The local inertia of a
/// stratum is sum_k lambda_k Var(Z | cell_{i_k}) plus the untouched tail
/// trace - sum_k lambda_k.
pub fn build_stratification(fq: &FunctionalQuantizer) -> Result<Stratification> {
    let (decomposition, quantizers) = match &fq.structure {
        QuantizerStructure::Product { decomposition, quantizers } => {
            (decomposition, quantizers)
        }
        QuantizerStructure::Optimal { .. } => return Err(Error::NonProductStructure),
    };
    let sizes = decomposition.sizes.clone();
    let d = sizes.len();
    let lambda: Vec<f64> = fq.expansion.eigenvalues()[..d].to_vec();
    let trace = fq.expansion.trace();
    let tail = trace - lambda.iter().sum::<f64>();
    let boundaries: Vec<Vec<f64>> =
        quantizers.iter().map(|q| q.boundaries.clone()).collect();
    let dim_cell_probs: Vec<Vec<f64>> =
        quantizers.iter().map(|q| q.cell_probs.clone()).collect();
    // Per-dimension truncated variances.
    let mut dim_vars: Vec<Vec<f64>> = Vec::with_capacity(d);
    for k in 0..d {
        let mut vars = Vec::with_capacity(sizes[k]);
        for i in 0..sizes[k] {
            let lo = if i == 0 { f64::NEG_INFINITY } else { boundaries[k][i - 1] };
            let hi = if i == sizes[k] - 1 { f64::INFINITY } else { boundaries[k][i] };
            let (_, var) = gaussian::truncated_moments(lo, hi, dim_cell_probs[k][i]);
            vars.push(var);
        }
        dim_vars.push(vars);
    }
    let total: usize = sizes.iter().product();
    let mut probabilities = Vec::with_capacity(total);
    let mut local_inertia = Vec::with_capacity(total);
    for code in 0..total {
        let idx = multi_index(code, &sizes);
        let mut p = 1.0;
        let mut inertia = tail;
        for k in 0..d {
            p *= dim_cell_probs[k][idx[k]];
            inertia += lambda[k] * dim_vars[k][idx[k]];
        }
        probabilities.push(p);
        local_inertia.push(inertia);
    }
    Ok(Stratification {
        sizes,
        boundaries,
        dim_cell_probs,
        probabilities,
        local_inertia,
        eigenvalues: lambda,
        trace,
    })
}

/// Draw the first-d K-L coordinates conditioned on the stratum:
/// independent truncated normals per cell, scaled by sqrt(lambda_k).
pub fn sample_stratum_coords<R: Rng>(
    strat: &Stratification,
    stratum: usize,
    rng: &mut R,
) -> Vec<f64> {
    let idx = multi_index(stratum, &strat.sizes);
    let mut coords = Vec::with_capacity(strat.sizes.len());
    for k in 0..strat.sizes.len() {
        let (lo, hi) = strat.cell_bounds(k, idx[k]);
        let u: f64 = rng.gen();
        let z = gaussian::sample_truncated(lo, hi, u);
        coords.push(strat.eigenvalues[k].sqrt() * z);
    }
    coords
}

/// Cholesky factor of a positive semidefinite matrix: pivots within
/// `tol` of zero produce a zero column instead of failing. Returns None
/// when a pivot is negative beyond the tolerance.
fn semidef_cholesky(matrix: &[f64], n: usize, tol: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0f64; n * n];
    for j in 0..n {
        let mut d = matrix[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d > tol {
            let root = d.sqrt();
            l[j * n + j] = root;
            for i in j + 1..n {
                let mut s = matrix[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / root;
            }
        } else if d < -tol {
            return None;
        }
        // Zero pivot: column stays zero, the coordinate is deterministic.
    }
    Some(l)
}

/// Exact sampler of the path law on a fixed schedule given the first-d
/// K-L coordinates.
#[derive(Debug, Clone)]
pub struct ConditionalSampler {
    pub schedule: Vec<f64>,
    pub truncation: usize,
    /// e_k(t_i), one row per mode.
    mode_samples: Vec<Vec<f64>>,
    cond_cov: Vec<f64>,
    chol: Vec<f64>,
    /// Diagonal jitter that was needed to factor the conditional
    /// covariance; zero in the clean case.
    pub jitter: f64,
}

/// Precompute the conditional mean operator and the Cholesky factor of
/// the conditional covariance C = Gamma - sum_{k<=d} lambda_k e_k e_k^T
/// on the schedule. If C fails to factor at tolerance, diagonal jitter
/// escalates from 1e-14 to 1e-10 (times the largest diagonal) before
/// giving up.
pub fn conditional_path_sampler(
    kl: &KlExpansion,
    schedule: &[f64],
    d: usize,
) -> Result<ConditionalSampler> {
    if schedule.is_empty() {
        return Err(Error::invalid("schedule", "must not be empty"));
    }
    let t_max = kl.kernel().t_max;
    for w in schedule.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::invalid("schedule", "must be strictly ascending"));
        }
    }
    if schedule[0] < 0.0 || *schedule.last().unwrap() > t_max + 1e-12 * t_max {
        return Err(Error::invalid(
            "schedule",
            format!("must lie within [0, {t_max}]"),
        ));
    }
    if d > kl.modes() {
        return Err(Error::ModeShortfall { needed: d, available: kl.modes() });
    }
    let n = schedule.len();
    let all_modes = kl.sample_modes(schedule)?;
    let mode_samples: Vec<Vec<f64>> = all_modes.into_iter().take(d).collect();
    let eigenvalues = &kl.eigenvalues()[..d];
    let mut cond_cov = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            let gamma = kl.kernel().eval(schedule[i], schedule[j]);
            let mut s = 0.0;
            for k in 0..d {
                s += eigenvalues[k] * mode_samples[k][i] * mode_samples[k][j];
            }
            cond_cov[i * n + j] = gamma - s;
        }
    }
    let max_diag = (0..n).map(|i| cond_cov[i * n + i]).fold(0.0f64, f64::max).max(0.0);
    let tol = 1e-12 * max_diag.max(f64::MIN_POSITIVE);
    let mut jitter = 0.0;
    let mut chol = semidef_cholesky(&cond_cov, n, tol);
    if chol.is_none() {
        let mut scale = 1e-14;
        while scale <= 1e-10 {
            let j = scale * max_diag.max(1.0);
            let mut bumped = cond_cov.clone();
            for i in 0..n {
                bumped[i * n + i] += j;
            }
            if let Some(l) = semidef_cholesky(&bumped, n, tol) {
                jitter = j;
                chol = Some(l);
                break;
            }
            scale *= 10.0;
        }
    }
    let chol = chol.ok_or_else(|| {
        Error::numeric(
            "conditional_path_sampler",
            "conditional covariance is indefinite beyond the jitter cap".to_string(),
        )
    })?;
    Ok(ConditionalSampler {
        schedule: schedule.to_vec(),
        truncation: d,
        mode_samples,
        cond_cov,
        chol,
        jitter,
    })
}

impl ConditionalSampler {
    /// Conditional covariance on the schedule, row-major.
    pub fn cond_cov(&self) -> &[f64] {
        &self.cond_cov
    }

    /// E[X_{t_i} | xi] = sum_k xi_k e_k(t_i).
    pub fn mean_path(&self, xi: &[f64]) -> Vec<f64> {
        let n = self.schedule.len();
        let mut mean = vec![0.0f64; n];
        for k in 0..self.truncation {
            let e = &self.mode_samples[k];
            for i in 0..n {
                mean[i] += xi[k] * e[i];
            }
        }
        mean
    }

    /// One exact draw of (X_{t_0},...,X_{t_n}) given the coordinates.
    pub fn sample_path<R: Rng>(&self, xi: &[f64], rng: &mut R) -> Vec<f64> {
        let n = self.schedule.len();
        let mut path = self.mean_path(xi);
        let g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for i in 0..n {
            let row = &self.chol[i * n..i * n + i + 1];
            let mut s = 0.0;
            for (k, &l) in row.iter().enumerate() {
                s += l * g[k];
            }
            path[i] += s;
        }
        path
    }
}

/// How the simulation budget is split across strata.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocationRule {
    /// q_i = p_i: never worse than plain Monte-Carlo.
    Proportional,
    /// q_i = p_i sigma_i / sum_j p_j sigma_j: uniformly efficient over
    /// Lipschitz functionals.
    LipschitzOptimal,
    /// q_i = sigma_i / sum_j sigma_j: the display as literally printed in
    /// some treatments. Exposed for comparison only; nothing is claimed
    /// or asserted about it.
    LipschitzRawSigma,
    /// q_i proportional to p_i sigma_{F,i} with sigma_{F,i} estimated by
    /// a pilot run of the target functional.
    Optimal,
}

impl AllocationRule {
    pub fn label(self) -> &'static str {
        match self {
            AllocationRule::Proportional => "prop",
            AllocationRule::LipschitzOptimal => "lip",
            AllocationRule::LipschitzRawSigma => "lip-raw",
            AllocationRule::Optimal => "opt",
        }
    }
}

/// Allocation fractions q_i for a rule. `pilot_sigma` is required by the
/// Optimal rule and ignored by the others; an all-zero pilot falls back
/// to proportional.
pub fn allocation_fractions(
    rule: AllocationRule,
    strat: &Stratification,
    pilot_sigma: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let p = &strat.probabilities;
    let q = match rule {
        AllocationRule::Proportional => p.clone(),
        AllocationRule::LipschitzOptimal => {
            let u: Vec<f64> =
                p.iter().zip(&strat.local_inertia).map(|(&p, &v)| p * v.sqrt()).collect();
            let total: f64 = u.iter().sum();
            u.iter().map(|x| x / total).collect()
        }
        AllocationRule::LipschitzRawSigma => {
            let u: Vec<f64> = strat.local_inertia.iter().map(|&v| v.sqrt()).collect();
            let total: f64 = u.iter().sum();
            u.iter().map(|x| x / total).collect()
        }
        AllocationRule::Optimal => {
            let sigma = pilot_sigma.ok_or_else(|| {
                Error::invalid("pilot", "the Optimal rule needs a pilot estimate")
            })?;
            if sigma.len() != p.len() {
                return Err(Error::DimensionMismatch(format!(
                    "pilot sigma has {} entries for {} strata",
                    sigma.len(),
                    p.len()
                )));
            }
            let u: Vec<f64> = p.iter().zip(sigma).map(|(&p, &s)| p * s).collect();
            let total: f64 = u.iter().sum();
            if total <= 0.0 {
                p.clone()
            } else {
                u.iter().map(|x| x / total).collect()
            }
        }
    };
    Ok(q)
}

/// Largest-remainder rounding of q*m with a per-entry floor: every entry
/// gets max(floor(q_i m), floor_min) and the deficit is settled on the
/// largest fractional parts (surplus on the smallest, skipping entries
/// already at the floor).
fn largest_remainder(q: &[f64], m: usize, floor_min: usize) -> Vec<usize> {
    let n = q.len();
    let raw: Vec<f64> = q.iter().map(|&qi| qi * m as f64).collect();
    let mut out: Vec<usize> =
        raw.iter().map(|&r| (r.floor() as usize).max(floor_min)).collect();
    let frac: Vec<f64> = raw.iter().map(|&r| r - r.floor()).collect();
    let mut assigned: isize = out.iter().map(|&c| c as isize).sum();
    let target = m as isize;
    if assigned < target {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| frac[b].partial_cmp(&frac[a]).unwrap().then(a.cmp(&b)));
        let mut cursor = 0usize;
        while assigned < target {
            out[order[cursor % n]] += 1;
            assigned += 1;
            cursor += 1;
        }
    } else if assigned > target {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| frac[a].partial_cmp(&frac[b]).unwrap().then(a.cmp(&b)));
        let mut cursor = 0usize;
        let mut stuck = 0usize;
        while assigned > target && stuck < n {
            let i = order[cursor % n];
            if out[i] > floor_min {
                out[i] -= 1;
                assigned -= 1;
                stuck = 0;
            } else {
                stuck += 1;
            }
            cursor += 1;
        }
    }
    out
}

/// Integer budgets per stratum: M_i >= 1, sum M_i = M.
pub fn integer_budgets(q: &[f64], m: usize) -> Result<Vec<usize>> {
    if m < q.len() {
        return Err(Error::invalid(
            "M",
            format!("budget {m} is below the stratum count {}", q.len()),
        ));
    }
    Ok(largest_remainder(q, m, 1))
}

/// Budgets for a rule that needs no pilot.
pub fn allocate(
    rule: AllocationRule,
    strat: &Stratification,
    m: usize,
    pilot_sigma: Option<&[f64]>,
) -> Result<Vec<usize>> {
    let q = allocation_fractions(rule, strat, pilot_sigma)?;
    integer_budgets(&q, m)
}

/// Per-stratum output of a stratified run.
#[derive(Debug, Clone)]
pub struct StratumStats {
    pub budget: usize,
    pub mean: f64,
    /// Sample variance of F inside the stratum.
    pub variance: f64,
}

/// Stratified estimator with its variance and diagnostics.
#[derive(Debug, Clone)]
pub struct StratifiedEstimate {
    pub estimate: f64,
    /// Variance of the estimator: sum_i p_i^2 s_i^2 / M_i.
    pub variance: f64,
    /// Standard error of that variance estimate.
    pub variance_se: f64,
    /// 95% confidence interval for the estimate.
    pub ci: (f64, f64),
    pub rule: AllocationRule,
    pub seed: u64,
    pub total_budget: usize,
    /// Extra samples spent on the pilot (Optimal rule only).
    pub pilot_budget: usize,
    pub per_stratum: Vec<StratumStats>,
}

impl StratifiedEstimate {
    /// M times the estimator variance: the per-sample variance used to
    /// compare methods at different budgets.
    pub fn per_sample_variance(&self) -> f64 {
        self.variance * self.total_budget as f64
    }
}

fn check_pairing(strat: &Stratification, sampler: &ConditionalSampler) -> Result<()> {
    if sampler.truncation != strat.truncation() {
        return Err(Error::DimensionMismatch(format!(
            "sampler conditions on {} modes, stratification on {}",
            sampler.truncation,
            strat.truncation()
        )));
    }
    Ok(())
}

/// One stratum's moments: `count` conditional draws on stream `stream`.
fn run_stratum<F>(
    f: &F,
    strat: &Stratification,
    sampler: &ConditionalSampler,
    stratum: usize,
    count: usize,
    seed: u64,
    stream: u64,
) -> OnlineMoments
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut moments = OnlineMoments::new();
    for _ in 0..count {
        let xi = sample_stratum_coords(strat, stratum, &mut rng);
        let path = sampler.sample_path(&xi, &mut rng);
        moments.push(f(&path));
    }
    moments
}

/// Stratified Monte-Carlo estimate of E F(X_{t_0},...,X_{t_n}).
///
/// Streams: stratum i draws on stream i; the Optimal pilot runs on
/// streams |I|+i so rules with and without a pilot see identical main
/// samples. Strata run in parallel and reduce in index order, so the
/// result is a deterministic function of (inputs, seed) at any thread
/// count.
pub fn stratified_estimate<F>(
    f: &F,
    strat: &Stratification,
    sampler: &ConditionalSampler,
    m: usize,
    rule: AllocationRule,
    seed: u64,
) -> Result<StratifiedEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_pairing(strat, sampler)?;
    let n_strata = strat.strata();
    if m < n_strata {
        return Err(Error::invalid(
            "M",
            format!("budget {m} is below the stratum count {n_strata}"),
        ));
    }
    let mut pilot_budget = 0usize;
    let q = if rule == AllocationRule::Optimal {
        // Pilot: proportional split of max(5% of M, 20 per stratum),
        // floor 20, on dedicated streams.
        let pilot_total =
            ((0.05 * m as f64).ceil() as usize).max(20 * n_strata);
        let pilot_counts = largest_remainder(&strat.probabilities, pilot_total, 20);
        pilot_budget = pilot_counts.iter().sum();
        let pilot: Vec<OnlineMoments> = (0..n_strata)
            .into_par_iter()
            .map(|i| {
                run_stratum(f, strat, sampler, i, pilot_counts[i], seed, (n_strata + i) as u64)
            })
            .collect();
        let sigma: Vec<f64> = pilot.iter().map(|mo| mo.variance().max(0.0).sqrt()).collect();
        allocation_fractions(rule, strat, Some(&sigma))?
    } else {
        allocation_fractions(rule, strat, None)?
    };
    let budgets = integer_budgets(&q, m)?;
    let results: Vec<OnlineMoments> = (0..n_strata)
        .into_par_iter()
        .map(|i| run_stratum(f, strat, sampler, i, budgets[i], seed, i as u64))
        .collect();
    let mut estimate = 0.0;
    let mut variance = 0.0;
    let mut var_var = 0.0;
    let mut per_stratum = Vec::with_capacity(n_strata);
    for (i, mo) in results.iter().enumerate() {
        let p = strat.probabilities[i];
        let mi = budgets[i] as f64;
        let s2 = mo.variance();
        estimate += p * mo.mean();
        variance += p * p * s2 / mi;
        let w = p * p / mi;
        var_var += w * w * mo.variance_of_variance();
        per_stratum.push(StratumStats { budget: budgets[i], mean: mo.mean(), variance: s2 });
    }
    let half = ci95_halfwidth(variance);
    Ok(StratifiedEstimate {
        estimate,
        variance,
        variance_se: var_var.sqrt(),
        ci: (estimate - half, estimate + half),
        rule,
        seed,
        total_budget: m,
        pilot_budget,
        per_stratum,
    })
}

/// Empirical covariance of the reconstructed process with entrywise
/// confidence intervals.
#[derive(Debug, Clone)]
pub struct CovarianceReconstruction {
    pub schedule: Vec<f64>,
    /// Row-major (n+1)x(n+1) matrices.
    pub theoretical: Vec<f64>,
    pub estimated: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub paths: usize,
}

impl CovarianceReconstruction {
    pub fn dim(&self) -> usize {
        self.schedule.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> (f64, f64, f64, f64) {
        let n = self.dim();
        let k = i * n + j;
        (self.theoretical[k], self.estimated[k], self.ci_lo[k], self.ci_hi[k])
    }
}

/// Multinomial stratum counts via a chain of conditional binomials on
/// stream 2|I|; together with per-stratum conditional draws this
/// reproduces the unconditional law of the process exactly.
fn multinomial_counts(p: &[f64], m: usize, seed: u64) -> Vec<usize> {
    let n = p.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * n as u64);
    let mut counts = vec![0usize; n];
    let mut remaining = m as u64;
    let mut mass = 1.0f64;
    for i in 0..n {
        if i == n - 1 || remaining == 0 {
            counts[i] = remaining as usize;
            break;
        }
        let cond = (p[i] / mass).clamp(0.0, 1.0);
        let draw = Binomial::new(remaining, cond)
            .expect("conditional probability in [0,1]")
            .sample(&mut rng);
        counts[i] = draw as usize;
        remaining -= draw;
        mass = (mass - p[i]).max(f64::MIN_POSITIVE);
    }
    counts
}

/// Rebuild the process from the stratification: sample the stratum index
/// from (p_i), then the conditional path, and estimate E[X_{t_i} X_{t_j}]
/// with a 95% interval per entry.
pub fn reconstruct_process(
    strat: &Stratification,
    sampler: &ConditionalSampler,
    kernel: &CovarianceKernel,
    m: usize,
    seed: u64,
) -> Result<CovarianceReconstruction> {
    check_pairing(strat, sampler)?;
    if m < strat.strata() {
        return Err(Error::invalid(
            "M",
            format!("need at least one path per stratum, got {m}"),
        ));
    }
    let n = sampler.schedule.len();
    let n_pairs = n * (n + 1) / 2;
    let counts = multinomial_counts(&strat.probabilities, m, seed);
    let per_stratum: Vec<Vec<OnlineMoments>> = (0..strat.strata())
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut acc = vec![OnlineMoments::new(); n_pairs];
            for _ in 0..counts[i] {
                let xi = sample_stratum_coords(strat, i, &mut rng);
                let path = sampler.sample_path(&xi, &mut rng);
                let mut k = 0;
                for a in 0..n {
                    for b in a..n {
                        acc[k].push(path[a] * path[b]);
                        k += 1;
                    }
                }
            }
            acc
        })
        .collect();
    let mut pooled = vec![OnlineMoments::new(); n_pairs];
    for acc in &per_stratum {
        for (dst, src) in pooled.iter_mut().zip(acc) {
            dst.merge(src);
        }
    }
    let mut theoretical = vec![0.0f64; n * n];
    let mut estimated = vec![0.0f64; n * n];
    let mut ci_lo = vec![0.0f64; n * n];
    let mut ci_hi = vec![0.0f64; n * n];
    let mut k = 0;
    for a in 0..n {
        for b in a..n {
            let mo = &pooled[k];
            let est = mo.mean();
            let half = ci95_halfwidth(mo.variance() / mo.count() as f64);
            let theo = kernel.eval(sampler.schedule[a], sampler.schedule[b]);
            for &(i, j) in &[(a, b), (b, a)] {
                theoretical[i * n + j] = theo;
                estimated[i * n + j] = est;
                ci_lo[i * n + j] = est - half;
                ci_hi[i * n + j] = est + half;
            }
            k += 1;
        }
    }
    Ok(CovarianceReconstruction {
        schedule: sampler.schedule.clone(),
        theoretical,
        estimated,
        ci_lo,
        ci_hi,
        paths: m,
    })
}
