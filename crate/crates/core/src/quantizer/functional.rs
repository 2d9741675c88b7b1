//! Functional quantizers on the K-L basis, and their on-disk format.
//!
//! A functional quantizer pairs a K-L expansion with a codebook in
//! coefficient space. Product structures keep one stationary 1-d
//! quantizer per mode; optimal structures carry a free d-dimensional
//! codebook from the Lloyd pass. Either way each codeword indexes a path
//! chi_i(t) = sum_n c_{i,n} e_n(t) with the sqrt(lambda_n) scale folded
//! into the coefficient.

use super::decomp::ProductDecomposition;
use super::gauss::{gauss1d, Quantizer1D};
use super::lloyd::MultiQuantizer;
use crate::expansion::KlExpansion;
use crate::kernels::{CovarianceKernel, ProcessFamily};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Codebook layout in coefficient space.
#[derive(Debug, Clone)]
pub enum QuantizerStructure {
    /// Tensor product of per-mode quantizers; codeword order is row-major
    /// with the last mode fastest.
    Product { decomposition: ProductDecomposition, quantizers: Vec<Quantizer1D> },
    /// Free codebook, row-major N x dim, sqrt(lambda)-scaled coordinates.
    Optimal { dim: usize, codebook: Vec<f64> },
}

impl QuantizerStructure {
    /// Number of K-L modes the codebook lives on.
    pub fn truncation(&self) -> usize {
        match self {
            QuantizerStructure::Product { decomposition, .. } => decomposition.sizes.len(),
            QuantizerStructure::Optimal { dim, .. } => *dim,
        }
    }

    pub fn codebook_len(&self) -> usize {
        match self {
            QuantizerStructure::Product { decomposition, .. } => {
                decomposition.sizes.iter().product()
            }
            QuantizerStructure::Optimal { dim, codebook } => codebook.len() / dim,
        }
    }
}

/// Specification handed to `build_functional_quantizer`.
#[derive(Debug, Clone)]
pub enum StructureSpec {
    /// Per-mode sizes of a product quantizer.
    Product(Vec<usize>),
    /// A finished multivariate quantizer in sqrt(lambda) scale.
    Optimal(MultiQuantizer),
}

/// Quantized process: finitely many paths with probabilities.
#[derive(Debug, Clone)]
pub struct FunctionalQuantizer {
    pub expansion: KlExpansion,
    pub structure: QuantizerStructure,
    /// One mass per codeword, summing to one.
    pub probabilities: Vec<f64>,
}

/// Multi-index of a flat codeword id, last mode fastest.
pub(crate) fn multi_index(code: usize, sizes: &[usize]) -> Vec<usize> {
    let mut idx = vec![0usize; sizes.len()];
    let mut rem = code;
    for j in (0..sizes.len()).rev() {
        idx[j] = rem % sizes[j];
        rem /= sizes[j];
    }
    idx
}

/// Assemble a functional quantizer on the leading modes of `expansion`.
pub fn build_functional_quantizer(
    expansion: KlExpansion,
    spec: StructureSpec,
) -> Result<FunctionalQuantizer> {
    let (structure, probabilities) = match spec {
        StructureSpec::Product(sizes) => {
            if sizes.is_empty() {
                return Err(Error::invalid("sizes", "need at least one factor"));
            }
            if sizes.iter().any(|&n| n == 0) {
                return Err(Error::invalid("sizes", "every factor must be at least one"));
            }
            if sizes.len() > expansion.modes() {
                return Err(Error::ModeShortfall {
                    needed: sizes.len(),
                    available: expansion.modes(),
                });
            }
            let quantizers: Vec<Quantizer1D> =
                sizes.iter().map(|&n| gauss1d(n, 1e-14)).collect::<Result<_>>()?;
            // Same accumulation order as decomposition_criterion so the
            // squared-error identity holds bit for bit.
            let lambda = expansion.eigenvalues();
            let mut criterion = expansion.trace();
            for (k, q) in quantizers.iter().enumerate() {
                criterion += lambda[k] * (q.distortion - 1.0);
            }
            let total: usize = sizes.iter().product();
            let probabilities: Vec<f64> = (0..total)
                .map(|code| {
                    multi_index(code, &sizes)
                        .iter()
                        .enumerate()
                        .map(|(j, &i)| quantizers[j].cell_probs[i])
                        .product()
                })
                .collect();
            let decomposition = ProductDecomposition { sizes, criterion };
            (QuantizerStructure::Product { decomposition, quantizers }, probabilities)
        }
        StructureSpec::Optimal(mq) => {
            if mq.dim > expansion.modes() {
                return Err(Error::ModeShortfall {
                    needed: mq.dim,
                    available: expansion.modes(),
                });
            }
            (
                QuantizerStructure::Optimal { dim: mq.dim, codebook: mq.codebook },
                mq.weights,
            )
        }
    };
    Ok(FunctionalQuantizer { expansion, structure, probabilities })
}

impl FunctionalQuantizer {
    pub fn codebook_len(&self) -> usize {
        self.structure.codebook_len()
    }

    pub fn truncation(&self) -> usize {
        self.structure.truncation()
    }

    /// Squared quantization error for product structures.
    pub fn criterion(&self) -> Option<f64> {
        match &self.structure {
            QuantizerStructure::Product { decomposition, .. } => Some(decomposition.criterion),
            QuantizerStructure::Optimal { .. } => None,
        }
    }

    /// Codeword coefficient on mode `mode`, sqrt(lambda)-scaled.
    pub fn coefficient(&self, code: usize, mode: usize) -> f64 {
        match &self.structure {
            QuantizerStructure::Product { decomposition, quantizers } => {
                let idx = multi_index(code, &decomposition.sizes);
                let lambda = self.expansion.eigenvalues()[mode];
                lambda.sqrt() * quantizers[mode].points[idx[mode]]
            }
            QuantizerStructure::Optimal { dim, codebook } => codebook[code * dim + mode],
        }
    }

    /// chi_code(t).
    pub fn path_value(&self, code: usize, t: f64) -> Result<f64> {
        let d = self.truncation();
        let mut value = 0.0;
        for mode in 0..d {
            value += self.coefficient(code, mode) * self.expansion.eigenfunction(mode, t)?;
        }
        Ok(value)
    }

    pub fn path_on_grid(&self, code: usize, grid: &[f64]) -> Result<Vec<f64>> {
        grid.iter().map(|&t| self.path_value(code, t)).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct ParamsFile {
    t_max: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    hurst: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    sigma: Option<f64>,
    source: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    resolutions: Option<[usize; 3]>,
    modes: usize,
}

#[derive(Serialize, Deserialize)]
struct ModeFile {
    k: usize,
    lambda: f64,
    grid_t: Vec<f64>,
    e_k: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum StructureFile {
    Product { sizes: Vec<usize> },
    Optimal { dim: usize, codebook: Vec<f64> },
}

#[derive(Serialize, Deserialize)]
struct QuantizerFile {
    process: String,
    params: ParamsFile,
    modes: Vec<ModeFile>,
    structure: StructureFile,
    probabilities: Vec<f64>,
}

fn family_tag(family: ProcessFamily) -> (&'static str, Option<f64>, Option<f64>, Option<f64>) {
    match family {
        ProcessFamily::BrownianMotion => ("bm", None, None, None),
        ProcessFamily::BrownianBridge => ("bridge", None, None, None),
        ProcessFamily::OrnsteinUhlenbeckZero { theta, sigma } => {
            ("ou", None, Some(theta), Some(sigma))
        }
        ProcessFamily::OrnsteinUhlenbeckStationary { theta, sigma } => {
            ("ou-stat", None, Some(theta), Some(sigma))
        }
        ProcessFamily::FractionalBrownianMotion { hurst } => ("fbm", Some(hurst), None, None),
    }
}

fn tag_family(params: &ParamsFile, tag: &str) -> Result<ProcessFamily> {
    let need = |value: Option<f64>, name: &str| {
        value.ok_or_else(|| Error::Format(format!("process {tag:?} needs params.{name}")))
    };
    match tag {
        "bm" => Ok(ProcessFamily::BrownianMotion),
        "bridge" => Ok(ProcessFamily::BrownianBridge),
        "ou" => Ok(ProcessFamily::OrnsteinUhlenbeckZero {
            theta: need(params.theta, "theta")?,
            sigma: need(params.sigma, "sigma")?,
        }),
        "ou-stat" => Ok(ProcessFamily::OrnsteinUhlenbeckStationary {
            theta: need(params.theta, "theta")?,
            sigma: need(params.sigma, "sigma")?,
        }),
        "fbm" => Ok(ProcessFamily::FractionalBrownianMotion {
            hurst: need(params.hurst, "hurst")?,
        }),
        other => Err(Error::Format(format!("unknown process tag {other:?}"))),
    }
}

fn to_file(fq: &FunctionalQuantizer, grid_points: usize) -> Result<QuantizerFile> {
    if grid_points < 2 {
        return Err(Error::invalid("grid", "need at least two grid points"));
    }
    let kernel = fq.expansion.kernel();
    let (tag, hurst, theta, sigma) = family_tag(kernel.family);
    let t_max = kernel.t_max;
    let grid: Vec<f64> = (0..grid_points)
        .map(|i| t_max * i as f64 / (grid_points - 1) as f64)
        .collect();
    let d = fq.truncation();
    let mut modes = Vec::with_capacity(d);
    for mode in 0..d {
        let e_k: Vec<f64> =
            grid.iter().map(|&t| fq.expansion.eigenfunction(mode, t)).collect::<Result<_>>()?;
        modes.push(ModeFile {
            k: mode + 1,
            lambda: fq.expansion.eigenvalues()[mode],
            grid_t: grid.clone(),
            e_k,
        });
    }
    let structure = match &fq.structure {
        QuantizerStructure::Product { decomposition, .. } => {
            StructureFile::Product { sizes: decomposition.sizes.clone() }
        }
        QuantizerStructure::Optimal { dim, codebook } => {
            StructureFile::Optimal { dim: *dim, codebook: codebook.clone() }
        }
    };
    Ok(QuantizerFile {
        process: tag.to_string(),
        params: ParamsFile {
            t_max,
            hurst,
            theta,
            sigma,
            source: if fq.expansion.is_closed_form() { "closed" } else { "nystrom" }.to_string(),
            resolutions: fq.expansion.resolutions().map(|(a, b, c)| [a, b, c]),
            modes: fq.expansion.modes(),
        },
        modes,
        structure,
        probabilities: fq.probabilities.clone(),
    })
}

/// Serialize to the JSON interchange format, sampling each eigenfunction
/// on a uniform grid of `grid_points` points.
pub fn quantizer_to_json(fq: &FunctionalQuantizer, grid_points: usize) -> Result<String> {
    let file = to_file(fq, grid_points)?;
    let mut text = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn save_quantizer(
    fq: &FunctionalQuantizer,
    grid_points: usize,
    path: &Path,
) -> Result<()> {
    let text = quantizer_to_json(fq, grid_points)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Load a quantizer file, rebuilding the expansion from its parameters.
/// The stored eigenvalues must agree with the rebuilt ones; a mismatch
/// means the file was produced by a different pipeline and is rejected.
pub fn load_quantizer(path: &Path) -> Result<FunctionalQuantizer> {
    let text = std::fs::read_to_string(path)?;
    let file: QuantizerFile =
        serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
    let family = tag_family(&file.params, &file.process)?;
    let kernel = CovarianceKernel::new(family, file.params.t_max)?;
    let expansion = match file.params.source.as_str() {
        "closed" => KlExpansion::closed_form(kernel, file.params.modes)?,
        "nystrom" => {
            let [a, b, c] = file.params.resolutions.ok_or_else(|| {
                Error::Format("nystrom source needs params.resolutions".into())
            })?;
            KlExpansion::nystrom(kernel, file.params.modes, (a, b, c))?
        }
        other => return Err(Error::Format(format!("unknown source {other:?}"))),
    };
    for m in &file.modes {
        if m.k == 0 || m.k > expansion.modes() {
            return Err(Error::Format(format!("mode index {} out of range", m.k)));
        }
        let rebuilt = expansion.eigenvalues()[m.k - 1];
        let scale = expansion.eigenvalues()[0].abs().max(1e-300);
        if (m.lambda - rebuilt).abs() > 1e-9 * scale {
            return Err(Error::Format(format!(
                "stored lambda_{} = {} disagrees with the rebuilt value {}",
                m.k, m.lambda, rebuilt
            )));
        }
    }
    let spec = match file.structure {
        StructureFile::Product { sizes } => StructureSpec::Product(sizes),
        StructureFile::Optimal { dim, codebook } => {
            if dim == 0 || codebook.len() % dim != 0 {
                return Err(Error::Format("codebook length is not a multiple of dim".into()));
            }
            if codebook.len() / dim != file.probabilities.len() {
                return Err(Error::Format(
                    "probabilities disagree with the codebook size".into(),
                ));
            }
            StructureSpec::Optimal(MultiQuantizer {
                dim,
                codebook,
                weights: file.probabilities.clone(),
                distortion: f64::NAN,
                distortion_se: f64::NAN,
                product_distortion: f64::NAN,
                iterations: 0,
                reseeds: 0,
            })
        }
    };
    let fq = build_functional_quantizer(expansion, spec)?;
    let mass: f64 = fq.probabilities.iter().sum();
    if (mass - 1.0).abs() > 1e-12 {
        return Err(Error::Format(format!("probabilities sum to {mass}, not 1")));
    }
    Ok(fq)
}
