//! Numerical laboratory for two-layer networks versus random features on
//! high-dimensional Gaussian-mixture classification: online-SGD simulation,
//! order-parameter ODE integration, fixed-point analysis and closed-form
//! random-feature asymptotics.

pub mod dynamics_ode;
pub mod error;
pub mod fixed_point;
pub mod linalg;
pub mod mixture;
pub mod moments;
pub mod quadrature;
pub mod rf_theory;
pub mod scalar;
pub mod sgd_sim;
pub mod special;
pub mod trajectory;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Concrete `f64` aliases for the main data types.
pub type Mixture64 = mixture::MixtureSpec<f64>;
pub type LocalFieldGaussian64 = moments::LocalFieldGaussian<f64>;
pub type OrderParameterState64 = dynamics_ode::OrderParameterState<f64>;
pub type OdeConfig64 = dynamics_ode::OdeConfig<f64>;
pub type TwoLayerNet64 = sgd_sim::TwoLayerNet<f64>;
pub type RfModel64 = sgd_sim::RfModel<f64>;
pub type TrainConfig64 = sgd_sim::TrainConfig<f64>;
pub type XorAnsatz64 = fixed_point::XorAnsatz<f64>;
pub type FeatureMoments64 = rf_theory::FeatureMoments<f64>;
