//! Box and Hausdorff dimensions of self-affine sponges: closed-form Moran
//! equations, the entropy variational principle, the method of types and
//! exact symbolic box counting.

pub mod boxcount;
pub mod error;
pub mod gallery;
pub mod hausdorff;
pub mod model;
pub mod moran;
pub mod number;
pub mod tree;
pub mod type_counting;
pub mod variational;

/// Slack used when comparing floating logarithms against thresholds.
pub const LOG_TOLERANCE: f64 = 1e-12;

pub use boxcount::{
    count_cubes, dominant_class_report, empirical_dimension, for_each_cube, sigma_order,
    CountOptions, CountReport, CubeRecord, SymbolicSystem,
};
pub use error::{Error, Result};
pub use hausdorff::{column_marginal, hausdorff_dim_2d, uniform_fibre_check, FibreReport};
pub use model::{
    emit_spec, parse_spec, validate, BaranskiSpec, GlMap, GlSpec, SelfSimilarSpec, SpongeSpec,
    ValidationReport, Violation,
};
pub use moran::{
    baranski_dimension, dimension_profile, gl_profile, similarity_dimension, DimensionProfile,
    PermutationBudget,
};
pub use number::{Fraction, Lattice, Scalar};
pub use tree::LevelTree;
pub use type_counting::{
    cube_type, delta_stopping, enumerate_types, type_class_size, type_of, LevelType,
};
pub use variational::{
    dominant_type, entropy, lyapunov, maximize_objective, objective, stopping_constants,
    OptimizeOptions, ProbVector, TypeProfile,
};
