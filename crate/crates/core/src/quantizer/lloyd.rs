//! Fixed-pool Lloyd quantization of a Gaussian vector with independent
//! coordinates N(0, lambda_j).
//!
//! The sample pool is drawn once from a seeded generator and reused by
//! every iteration, so the result is a deterministic function of
//! (eigenvalues, N, budget, seed). The assignment step runs in parallel;
//! the accumulation that follows is sequential so the floating-point
//! result does not depend on the thread count.

use super::gauss::DistortionTable;
use crate::stats::OnlineMoments;
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Quantizer of a d-dimensional centered Gaussian with diagonal covariance.
/// Codebook coordinates carry the sqrt(lambda_j) scale of the process
/// coefficients, not unit variance.
#[derive(Debug, Clone)]
pub struct MultiQuantizer {
    pub dim: usize,
    /// N x dim, row-major.
    pub codebook: Vec<f64>,
    /// Empirical cell masses, summing to one.
    pub weights: Vec<f64>,
    /// Pool estimate of E min_i |Y - x_i|^2.
    pub distortion: f64,
    pub distortion_se: f64,
    /// Exact distortion of the product quantizer used as the initializer.
    pub product_distortion: f64,
    pub iterations: usize,
    /// Times a dead codeword had to be reseeded; nonzero values are worth
    /// a closer look.
    pub reseeds: usize,
}

impl MultiQuantizer {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn codeword(&self, i: usize) -> &[f64] {
        &self.codebook[i * self.dim..(i + 1) * self.dim]
    }
}

/// Sample pool in row-major layout: sample index major, coordinate minor,
/// each entry sqrt(lambda_j) times a standard normal drawn in that order.
fn sample_pool(eigenvalues: &[f64], budget: usize, seed: u64) -> Vec<f64> {
    let scales: Vec<f64> = eigenvalues.iter().map(|l| l.sqrt()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = Vec::with_capacity(budget * scales.len());
    for _ in 0..budget {
        for &s in &scales {
            let z: f64 = StandardNormal.sample(&mut rng);
            pool.push(s * z);
        }
    }
    pool
}

/// Best product decomposition with exactly `dim` factors (each >= 1,
/// non-increasing, product <= n): minimizes sum_j lambda_j D(N_j).
fn best_product_sizes(
    eigenvalues: &[f64],
    n: usize,
    table: &DistortionTable,
) -> Result<(Vec<usize>, f64)> {
    let dim = eigenvalues.len();
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut prefix = vec![1usize; dim];
    fn recurse(
        eigenvalues: &[f64],
        table: &DistortionTable,
        level: usize,
        budget: usize,
        cap: usize,
        prefix: &mut Vec<usize>,
        best: &mut Option<(Vec<usize>, f64)>,
    ) -> Result<()> {
        if level == eigenvalues.len() {
            let mut value = 0.0;
            for (j, &s) in prefix.iter().enumerate() {
                value += eigenvalues[j] * table.get(s)?;
            }
            let take = match best {
                None => true,
                Some((_, v)) => value < *v,
            };
            if take {
                *best = Some((prefix.clone(), value));
            }
            return Ok(());
        }
        let mut f = cap.min(budget);
        while f >= 1 {
            prefix[level] = f;
            recurse(eigenvalues, table, level + 1, budget / f, f, prefix, best)?;
            f -= 1;
        }
        Ok(())
    }
    recurse(eigenvalues, table, 0, n, n, &mut prefix, &mut best)?;
    best.ok_or_else(|| Error::numeric("lloyd", "no admissible product initializer"))
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest codeword index and squared distance.
fn nearest(sample: &[f64], codebook: &[f64], dim: usize, n: usize) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for i in 0..n {
        let d = squared_distance(sample, &codebook[i * dim..(i + 1) * dim]);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    (best, best_d)
}

/// Quadratic quantizer of ⊗_j N(0, lambda_j) by Lloyd iteration on a fixed
/// seeded sample pool, initialized from the best product quantizer of
/// total size at most `n`, padded with pool samples if the product leaves
/// budget unused. Stops when the assignment is an exact fixed point, the
/// relative distortion improvement drops below 1e-6, or after 500 rounds.
pub fn lloyd_multivariate(
    eigenvalues: &[f64],
    n: usize,
    budget: usize,
    seed: u64,
) -> Result<MultiQuantizer> {
    let dim = eigenvalues.len();
    if dim == 0 {
        return Err(Error::invalid("eigenvalues", "need at least one mode"));
    }
    if n == 0 {
        return Err(Error::invalid("N", "need at least one codeword"));
    }
    if budget < 100_000 {
        return Err(Error::invalid("budget", format!("{budget} is below the 1e5 floor")));
    }
    for w in eigenvalues.windows(2) {
        if w[1] > w[0] {
            return Err(Error::invalid(
                "eigenvalues",
                "must be sorted in non-increasing order",
            ));
        }
    }
    if eigenvalues.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
        return Err(Error::invalid("eigenvalues", "must be finite and non-negative"));
    }

    let pool = sample_pool(eigenvalues, budget, seed);
    let table = DistortionTable::build(n, 1e-14)?;
    let (sizes, product_distortion) = best_product_sizes(eigenvalues, n, &table)?;

    // Product codebook, last factor fastest.
    let per_dim: Vec<Vec<f64>> = sizes
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let q = super::gauss::gauss1d(s, 1e-14)?;
            Ok(q.points.iter().map(|x| x * eigenvalues[j].sqrt()).collect())
        })
        .collect::<Result<_>>()?;
    let product_count: usize = sizes.iter().product();
    let mut codebook = Vec::with_capacity(n * dim);
    for flat in 0..product_count {
        let mut rem = flat;
        let mut idx = vec![0usize; dim];
        for j in (0..dim).rev() {
            idx[j] = rem % sizes[j];
            rem /= sizes[j];
        }
        for j in 0..dim {
            codebook.push(per_dim[j][idx[j]]);
        }
    }
    // Pad the unused budget with the pool samples farthest from the
    // current codebook (greedy max-min squared distance).
    let mut count = product_count;
    while count < n {
        let (far, _) = (0..budget)
            .map(|s| nearest(&pool[s * dim..(s + 1) * dim], &codebook, dim, count))
            .enumerate()
            .fold((0usize, -1.0f64), |acc, (s, (_, d))| if d > acc.1 { (s, d) } else { acc });
        codebook.extend_from_slice(&pool[far * dim..(far + 1) * dim]);
        count += 1;
    }

    let assign = |codebook: &[f64]| -> Vec<(u32, f64)> {
        (0..budget)
            .into_par_iter()
            .map(|s| {
                let (i, d) = nearest(&pool[s * dim..(s + 1) * dim], codebook, dim, n);
                (i as u32, d)
            })
            .collect()
    };

    let mut iterations = 0usize;
    let mut reseeds = 0usize;
    let mut prev_distortion = f64::INFINITY;
    let mut prev_assignment: Vec<u32> = Vec::new();
    for _ in 0..500 {
        iterations += 1;
        let assigned = assign(&codebook);
        let mut counts = vec![0usize; n];
        for &(i, _) in &assigned {
            counts[i as usize] += 1;
        }
        if counts.iter().any(|&c| c == 0) {
            // Move each dead codeword onto a sample of maximal local
            // distortion, one sample per codeword, then retry the round.
            let mut order: Vec<usize> = (0..budget).collect();
            order.sort_by(|&a, &b| {
                assigned[b].1.partial_cmp(&assigned[a].1).expect("finite distances")
            });
            let mut next = order.into_iter();
            for i in 0..n {
                if counts[i] == 0 {
                    let s = next.next().expect("budget exceeds codebook size");
                    codebook[i * dim..(i + 1) * dim]
                        .copy_from_slice(&pool[s * dim..(s + 1) * dim]);
                    reseeds += 1;
                }
            }
            continue;
        }
        let distortion =
            assigned.iter().map(|&(_, d)| d).sum::<f64>() / budget as f64;
        // Update to the cell means.
        let mut sums = vec![0.0f64; n * dim];
        for (s, &(i, _)) in assigned.iter().enumerate() {
            let row = &pool[s * dim..(s + 1) * dim];
            let acc = &mut sums[i as usize * dim..(i as usize + 1) * dim];
            for j in 0..dim {
                acc[j] += row[j];
            }
        }
        for i in 0..n {
            for j in 0..dim {
                codebook[i * dim + j] = sums[i * dim + j] / counts[i] as f64;
            }
        }
        let stable =
            !prev_assignment.is_empty() && assigned.iter().map(|&(i, _)| i).eq(prev_assignment.iter().copied());
        prev_assignment = assigned.iter().map(|&(i, _)| i).collect();
        let rel = (prev_distortion - distortion) / distortion.max(f64::MIN_POSITIVE);
        prev_distortion = distortion;
        if stable || (rel >= 0.0 && rel < 1e-6) {
            break;
        }
    }

    // Consistent final pass against the returned codebook.
    let assigned = assign(&codebook);
    let mut counts = vec![0usize; n];
    let mut moments = OnlineMoments::new();
    for &(i, d) in &assigned {
        counts[i as usize] += 1;
        moments.push(d);
    }
    let weights: Vec<f64> = counts.iter().map(|&c| c as f64 / budget as f64).collect();
    let distortion = moments.mean();
    let distortion_se = (moments.variance() / budget as f64).sqrt();

    Ok(MultiQuantizer {
        dim,
        codebook,
        weights,
        distortion,
        distortion_se,
        product_distortion,
        iterations,
        reseeds,
    })
}
