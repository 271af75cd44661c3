//! Meta-training and meta-testing of the Bayesian method, its contrastive
//! variant, the prototype baseline and the coreset nearest-neighbour
//! baseline.

pub mod losses;
mod methods;
mod train;

pub use methods::{
    proto_scores, BayesInner, BayesMethod, CoresetNn, HyperParams, MetaMethod, Optimizer,
    ProtoInner, ProtoMaml, Scorer,
};
pub use train::{
    bayes_optimal_report, evaluate, guard, mean_gradient, score_test_episodes, test_episode,
    train_centralized, train_centralized_with, train_episode_seed, validation_loss, LossTrace, OuterOptimizer,
    TrainOutcome, DIVERGENCE_LIMIT,
};
