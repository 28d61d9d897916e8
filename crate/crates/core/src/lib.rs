//! Robust regression with neural networks trained under the density power
//! divergence.

pub mod benchmarks;
pub mod competitors;
pub mod dataset;
pub mod dpd;
pub mod error;
pub mod error_model;
pub mod influence;
pub mod nn;
pub mod quadrature;
pub mod trainer;

pub use competitors::{comp_loss, fit_competitor, CompetitorLoss};
pub use dataset::Dataset;
pub use dpd::{DpdConfig, EtaPoint};
pub use error::{Error, Result};
pub use error_model::ErrorModel;
pub use influence::{IfCurve, IfSetup, Influence};
pub use nn::{Activation, GradSelection, HiddenLayer, NetworkSpec, ParamVector};
pub use trainer::{fit, predict, FitResult, SigmaSolver, TrainConfig};
