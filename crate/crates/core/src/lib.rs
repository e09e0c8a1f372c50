//! Semi-Markovian random partition models for local clustering of curves
//! and time series: priors, Gibbs samplers, and posterior summaries.

pub mod bspline;
pub mod data;
pub mod error;
pub mod inference;
pub mod models;
pub mod partition;
pub mod postproc;
pub mod prior;
pub mod sim;

pub use bspline::{BasisSpec, DesignMatrix};
pub use error::{Error, Result};
pub use partition::{ClusterMatrix, Crp, Eppf, LabelVector};
pub use prior::{AlphaPrior, AlphaState, GammaMatrix, SmrpmConfig};
