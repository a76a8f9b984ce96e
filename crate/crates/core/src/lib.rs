//! Estimation of average treatment effects in a target population from
//! source-population study data.
//!
//! Two target parameters are supported: the generalization parameter
//! `ψ_a = E[Y^a]` over the combined population, and the transportation
//! parameter `θ_a = E[Y^a | S = 0]` over the target population alone.
//! Estimators include a plug-in average of the nested regression, a doubly
//! robust cross-fitted estimator, and a second-order U-statistic estimator
//! when the target observes every covariate.

pub mod cli;
pub mod dr;
pub mod error;
pub mod io;
pub mod model;
pub mod nuisance;
pub mod quadratic;
pub mod sensitivity;
pub mod simulation;
pub mod survey;

pub use error::{Error, Result};
pub use model::{
    clip_probabilities, split_folds, Arm, CombinedSample, EffectEstimate, EstimandKind,
    EstimandSpec, FoldAssignment, Method, SourceRecord, SurveyInfo, TargetRecord, Treatment,
};
