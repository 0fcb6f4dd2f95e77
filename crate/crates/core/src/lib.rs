//! Random walks on finitely generated virtually abelian groups.
//!
//! The crate models a group as an extension of a finite group by `Z^m`,
//! computes the drift and covariance of a finitely supported random walk from
//! harmonic 1-forms on the quotient diagram, and evolves walk distributions
//! exactly to measure total-variation distances against Gaussian limits and
//! against independent couplings.

pub mod diagram;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod group;
pub mod harmonic;
pub mod matrix;
pub mod measure;
pub mod quadrature;
pub mod scalar;
pub mod spectral;

pub use diagram::{OneForm, WeightedDiagram};
pub use engine::{EngineConfig, LatticeDistribution, Mode, Tv};
pub use experiments::{CurvePoint, ExperimentConfig};
pub use error::{Error, Result};
pub use group::{Element, GroupSpec};
pub use harmonic::{HarmonicDecomposition, VertexFunction};
pub use matrix::Matrix;
pub use measure::{FiniteMeasure, PeriodReport, Prob};
pub use scalar::{Scalar, Q};
pub use spectral::{CltReport, GaussianOnGroup};

