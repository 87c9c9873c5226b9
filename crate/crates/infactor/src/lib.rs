//! Generalized infinite factor models with structured increasing
//! shrinkage priors.
//!
//! The library covers the full workflow: forward sampling and Monte Carlo
//! verification of the SIS, MGP, and CUSP priors ([`priors`]), adaptive
//! Gibbs samplers for gaussian and multivariate-probit data ([`gibbs`]),
//! posterior summaries including MAP-draw selection, LPML, and latent
//! correlation networks ([`summary`]), a synthetic scenario harness
//! ([`sim`]), and CSV/JSON ingestion plus the command surface backing the
//! `infactor` binary ([`io`]).
//!
//! The numeric core is generic over the scalar type through
//! [`scalar::Real`] (implemented for `f32` and `f64`); the aliases below
//! fix `f64` for ordinary use.

pub mod error;
pub mod gibbs;
pub mod io;
pub mod linalg;
pub mod model;
pub mod priors;
pub mod rng;
pub mod rv;
pub mod scalar;
pub mod sim;
pub mod summary;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Matrix = ndarray::Array2<f64>;
pub type Dataset = model::Dataset<f64>;
pub type Hyperparameters = model::Hyperparameters<f64>;
pub type ModelState = model::ModelState<f64>;
pub type ChainConfig = gibbs::ChainConfig<f64>;
pub type ChainOutput = gibbs::ChainOutput<f64>;
pub type DrawSnapshot = gibbs::DrawSnapshot<f64>;
pub type SummaryReport = summary::SummaryReport<f64>;
pub type ScenarioSpec = sim::ScenarioSpec<f64>;
pub type PriorConfig = priors::PriorConfig<f64>;
pub type PriorDraw = priors::PriorDraw<f64>;
