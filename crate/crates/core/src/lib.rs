//! Kernel-based regularized FIR identification.
//!
//! The crate covers the FIR data model with least-squares and regularized
//! least-squares estimators, the SS/DC/TC/ridge/diagonal kernel families,
//! six hyperparameter criteria (EB, SUREg, SUREy and the oracle MSEg, MSEy,
//! EEB) with analytic gradients, a multi-start box-constrained optimizer,
//! the asymptotic limit functionals and a Monte Carlo benchmark harness.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the common `f64` case.

pub mod asymptotics;
pub mod bench;
pub mod criteria;
pub mod error;
pub mod hyperopt;
pub mod kernels;
pub mod linalg;
pub mod model;
pub mod scalar;

pub use asymptotics::{LimitKind, LimitSpec, RateExperimentConfig, RateResult};
pub use bench::{ExperimentConfig, InputKind, RunRecord};
pub use criteria::{CriterionKind, DataMoments, DerivedQuantities};
pub use error::{Error, Result};
pub use hyperopt::{estimate_hyperparameter, Method, OptimizerConfig};
pub use kernels::{KernelFamily, KernelSpec};
pub use model::{Dataset, EstimateReport, OptimizerDiagnostics, SystemTruth};
pub use scalar::Real;

pub type Dataset64 = Dataset<f64>;
pub type SystemTruth64 = SystemTruth<f64>;
pub type KernelSpec64 = KernelSpec<f64>;
pub type EstimateReport64 = EstimateReport<f64>;
pub type LimitSpec64 = LimitSpec<f64>;
