//! Weakly supervised classification with weighted logical supervision.
//!
//! Supervision is written as weighted rules over latent binary labels
//! ([`logic`]), grounded over a dataset into a factor graph ([`grounding`]),
//! and solved with loopy belief propagation ([`inference`]). A classifier
//! ([`prediction`]) is trained on the resulting posteriors, and rule weights
//! are refined, in a variational EM loop ([`learning`]).

pub mod data;
pub mod grounding;
pub mod inference;
pub mod json;
pub mod learning;
pub mod logic;
pub mod metrics;
pub mod numeric;
pub mod prediction;
pub mod synth;

pub use data::{load_dataset, split_dataset, DataError, Dataset, FieldValue, Instance};
pub use grounding::{graph_stats, ground, FactorGraph, GroundError, RuleWeight, StatsReport};
pub use inference::{
    at_least_one_messages, bethe_objective, brute_force_marginals, exact_log_partition, loopy_bp, BpOptions,
    InferenceError, MarginalTable,
};
pub use learning::{e_step, fit, m_step_weights, EmOptions, EmTrace, FitResult, LearnError};
pub use logic::{
    parse_rule, parse_rules, render_rule, validate_program, FieldType, LogicError, Polarity, Program, Rule, RuleBody,
    Schema, Weight,
};
pub use metrics::{evaluate, sample_precision, EvalReport, MetricsError, SampleEstimate};
pub use prediction::{decide, train_distill, Classifier, ClassifierKind, ModelFile, PredictError, TrainOptions};
pub use synth::{baseline_labels, generate, SynthError, SynthSpec};
