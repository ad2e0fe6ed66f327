//! Personalized item ranking from implicit feedback.
//!
//! Learns ranking models by maximizing a pairwise log-sigmoid criterion
//! with bootstrap stochastic gradient ascent, instantiated for matrix
//! factorization and learned item-similarity kNN, with cosine-kNN and
//! most-popular baselines and a leave-one-out AUC evaluation harness.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod training;

pub use data::{
    enumerate_triples, generate_synthetic, leave_one_out_split, load_interactions, load_split,
    merge_split, Dataset, SplitPair, Triple, TripleSampler, DEFAULT_TRIPLE_CAP,
};
pub use error::{Error, Result};
pub use evaluation::{
    heldout_auc, auc_train_identity, auc_with_scores, fit_model, grid_search, most_popular_on_test_auc,
    np_max_bound, repeat_experiment, EvalReport, GridSpec, ModelSpec, TrialSummary,
};
pub use models::{
    cosine_similarity, knn_pair_gradient, load_model, mf_pair_gradient, save_model, Coord,
    GradEntry, KnnModel, MfModel, Model, PairGradient, PopularityModel, RegGroup,
};
pub use training::{
    bpr_opt_estimate, bpr_opt_exact, learn_bpr, sgd_step, sigmoid_neg, Hyperparams, Schedule,
    TrainOptions, TrainTrace,
};
