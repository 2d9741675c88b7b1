//! Quantization layer: 1-d Gaussian codebooks, product-decomposition
//! search, multivariate Lloyd, and functional quantizers on the K-L basis.

pub mod decomp;
pub mod functional;
pub mod gauss;
pub mod lloyd;

pub use decomp::{blind_decomposition, decomposition_criterion, ProductDecomposition};
pub use functional::{
    build_functional_quantizer, load_quantizer, quantizer_to_json, save_quantizer,
    FunctionalQuantizer, QuantizerStructure, StructureSpec,
};
pub use gauss::{gauss1d, DistortionTable, Quantizer1D, DEFAULT_GRADIENT_TOL};
pub use lloyd::{lloyd_multivariate, MultiQuantizer};
