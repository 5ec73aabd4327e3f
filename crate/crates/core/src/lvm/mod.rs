//! Generative latent-variable model linking word choice, latent sentiment
//! and gender, trained with posterior regularization toward a sentiment
//! lexicon and an L1 penalty on the gender-specific deviations.

mod adam;
mod model;
mod objective;
mod params;
mod ranking;
pub mod synth;
mod train;

pub use adam::Adam;
pub use model::{marginal_word_gender, posterior_sentiment, posterior_sentiment_all, sentiment_prior, word_dist};
pub use objective::{
    gradients, kl_divergence, main_objective, total_loss, Gradients, LossParts, Objective, Regularizer, TrainingData,
};
pub use params::{init_params, init_params_with_sigma, Gender, ModelParams, TrainConfig, ALPHA_GRID, BETA_GRID};
pub use ranking::{all_rankings, deviation_ranking, deviation_ranking_with, Averaging, DeviationRanking};
pub use train::{grid_train, grid_train_on, train, train_on, TrainOutcome};
