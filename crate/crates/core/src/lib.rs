//! Survival ensembles by area-norm COBRA.
//!
//! Five base learners (survival tree, random survival forest, lasso and ridge
//! Cox, k-NN survival) are trained on one half of the training data. A
//! calibration record is *proximal* to a query when enough learners place its
//! predicted curve within area distance `ε` of the query's curve; the
//! prediction is the Kaplan–Meier estimate over the proximal records.

pub mod cobra;
pub mod curves;
pub mod data;
pub mod error;
pub mod learners;
pub mod metrics;
pub mod relevance;
pub mod seed;
pub mod tuning;

pub use cobra::{fit_cobra, CobraModel, CobraParams, ProximityAggregate};
pub use curves::{CurveKind, StepCurve};
pub use data::{SurvivalDataset, SurvivalRecord};
pub use error::{Error, Result};
pub use learners::{FittedLearner, LearnerSpec};
pub use metrics::MetricReport;
pub use relevance::RelevanceResult;
pub use tuning::{Objective, SearchSpace, TrialResult};
