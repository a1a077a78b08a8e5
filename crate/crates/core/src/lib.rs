//! Simulation, estimation, and evaluation for multi-step recommender systems.
//!
//! A recommender alternates between recommending, observing ratings, and
//! retraining. The data it collects depends on its own earlier
//! recommendations, which biases plain maximum likelihood. This crate
//! provides the environments to simulate that loop, loss-weighting schemes
//! that remove the bias (inverse propensity and its extension for no-repeat
//! policies), weighted matrix factorization trainers, and exhaustive
//! enumeration oracles that check the estimators' expectations exactly.

pub mod environments;
pub mod error;
pub mod estimators;
pub mod history;
pub mod metrics;
pub mod recommenders;
pub mod rng;
pub mod snapshot;

pub use error::{Error, Result};
pub use history::{
    consumed_pairs, HistoryConfig, InteractionHistory, LatentParams, Observation, PairSet,
    PropensityLog, RatingMatrix, RecommendationMatrix, StepQuota,
};
pub use rng::SeededRng;
