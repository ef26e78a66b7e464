//! Variational EM over latent labels.
//!
//! Each iteration grounds the program together with the classifier's current
//! predictions, takes the BP marginals as the posterior `q` (E-step), distills
//! the classifier on `q`, and then refines the learnable rule weights by
//! gradient ascent on `J(w) = sum_r w_r E_q[f_r] - ln Z(w)`, where `Z`
//! normalizes the supervision factors alone.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::data::Dataset;
use crate::grounding::{ground, FactorGraph, GroundError, RuleWeight};
use crate::inference::{bethe_objective, loopy_bp, rule_expectations, BpOptions, InferenceError, MarginalTable};
use crate::logic::{LogicError, Program};
use crate::prediction::{train_distill, Classifier, ClassifierKind, PredictError, TrainOptions};

/// Learnable weights are clamped to `[-WEIGHT_BOUND, WEIGHT_BOUND]`.
pub const WEIGHT_BOUND: f64 = 20.0;

/// Number of step halvings tried before a weight step is skipped.
pub const MAX_HALVINGS: usize = 10;

/// Offsets used to derive per-purpose seeds from the run seed.
pub mod seeds {
    pub const CLASSIFIER_INIT: u64 = 1;
    pub const DISTILL: u64 = 1000;

    pub fn derive(seed: u64, offset: u64) -> u64 {
        seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(offset)
    }
}

#[derive(Debug, Error)]
pub enum LearnError {
    #[error(transparent)]
    Ground(#[from] GroundError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error("invalid EM options: {0}")]
    InvalidOptions(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub em_iterations: usize,
    pub bp: BpOptions,
    /// `seed` is overridden per iteration by [`fit`].
    pub train: TrainOptions,
    pub weight_steps: usize,
    pub weight_learning_rate: f64,
    pub line_search: bool,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            em_iterations: 3,
            bp: BpOptions::default(),
            train: TrainOptions::default(),
            weight_steps: 10,
            weight_learning_rate: 0.1,
            line_search: true,
        }
    }
}

/// Ground with the classifier as per-instance prior and run BP.
pub fn e_step(program: &Program, ds: &Dataset, c: &Classifier, bp: &BpOptions) -> Result<MarginalTable, LearnError> {
    let logp = c.log_probs(ds)?;
    let g = ground(program, ds, Some(&logp))?;
    Ok(loopy_bp(&g, bp)?)
}

/// Surrogate `sum_r w_r E_q[f_r] - ln Z(w)` with `ln Z` from the Bethe
/// approximation of `model` (exact on trees). Hard rules contribute nothing.
pub fn weight_objective(g: &FactorGraph, expected_q: &[f64], model: &MarginalTable) -> f64 {
    let linear: f64 = g
        .rules()
        .iter()
        .zip(expected_q)
        .map(|(r, e)| match r.weight {
            RuleWeight::Soft(w) => w * e,
            RuleWeight::Hard => 0.0,
        })
        .sum();
    linear - bethe_objective(g, model)
}

/// `dJ/dw_r = E_q[f_r] - E_p[f_r]` for every rule of `g` (tied across groundings).
pub fn weight_gradient(g: &FactorGraph, q: &MarginalTable, model: &MarginalTable) -> Vec<f64> {
    let eq = rule_expectations(g, q);
    let ep = rule_expectations(g, model);
    eq.iter().zip(&ep).map(|(a, b)| a - b).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct WeightStep {
    /// Learnable weight values after the step, in program order.
    pub weights: Vec<f64>,
    pub objective: f64,
    pub step_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct WeightUpdate {
    pub initial_objective: f64,
    pub initial_gradient: Vec<f64>,
    pub steps: Vec<WeightStep>,
}

impl WeightUpdate {
    pub fn final_objective(&self) -> f64 {
        self.steps.last().map_or(self.initial_objective, |s| s.objective)
    }
}

/// Refine learnable weights of `program` against the posterior `q`.
///
/// Each step moves rule `r` by `lr * grad_r / n_r`, where `n_r` is the rule's
/// grounding count, then clamps. With line search the step is accepted only
/// if the surrogate does not decrease, halving up to [`MAX_HALVINGS`] times;
/// a rejected step ends the M-step.
pub fn m_step_weights(
    program: &mut Program,
    ds: &Dataset,
    q: &MarginalTable,
    opts: &EmOptions,
) -> Result<WeightUpdate, LearnError> {
    let learnable = program.learnable_indices();
    let base = ground(program, ds, None)?;
    let eq = rule_expectations(&base, q);
    let mut model = loopy_bp(&base, &opts.bp)?;
    let mut objective = weight_objective(&base, &eq, &model);
    let initial_objective = objective;
    let initial_gradient: Vec<f64> = {
        let ep = rule_expectations(&base, &model);
        learnable.iter().map(|&r| eq[r] - ep[r]).collect()
    };
    let mut update = WeightUpdate { initial_objective, initial_gradient, steps: Vec::new() };
    if learnable.is_empty() {
        return Ok(update);
    }

    let mut counts = vec![0usize; base.rules().len()];
    for f in base.factors() {
        if let Some(r) = f.rule {
            counts[r] += 1;
        }
    }
    let mut weights: Vec<RuleWeight> = base.rules().iter().map(|r| r.weight).collect();
    let mut graph = base;

    for _ in 0..opts.weight_steps {
        let ep = rule_expectations(&graph, &model);
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut trial = weights.clone();
            let mut moved = false;
            for &r in &learnable {
                if let RuleWeight::Soft(w) = weights[r] {
                    let step = opts.weight_learning_rate * scale * (eq[r] - ep[r]) / counts[r].max(1) as f64;
                    let next = (w + step).clamp(-WEIGHT_BOUND, WEIGHT_BOUND);
                    moved |= next != w;
                    trial[r] = RuleWeight::Soft(next);
                }
            }
            if !moved {
                break;
            }
            let g = graph.reweighted(&trial);
            let m = loopy_bp(&g, &opts.bp)?;
            let j = weight_objective(&g, &eq, &m);
            if !opts.line_search || j >= objective {
                accepted = Some((trial, g, m, j));
                break;
            }
            scale *= 0.5;
        }
        let Some((trial, g, m, j)) = accepted else { break };
        weights = trial;
        graph = g;
        model = m;
        objective = j;
        update.steps.push(WeightStep {
            weights: learnable
                .iter()
                .map(|&r| match weights[r] {
                    RuleWeight::Soft(w) => w,
                    RuleWeight::Hard => unreachable!("learnable weights are soft"),
                })
                .collect(),
            objective,
            step_scale: scale,
        });
    }

    if let Some(last) = update.steps.last() {
        for (&r, &w) in learnable.iter().zip(&last.weights) {
            program.set_learned_weight(r, w)?;
        }
    }
    Ok(update)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PosteriorSummary {
    pub mean_q1: f64,
    /// Fraction of instances with `q1 >= 0.5`.
    pub positive_fraction: f64,
    pub mean_entropy: f64,
}

impl PosteriorSummary {
    pub fn of(q: &MarginalTable) -> Self {
        let n = q.len().max(1) as f64;
        let mut mean_q1 = 0.0;
        let mut positives = 0usize;
        let mut entropy = 0.0;
        for &[q0, q1] in q.marginals() {
            mean_q1 += q1;
            positives += usize::from(q1 >= 0.5);
            for p in [q0, q1] {
                if p > 0.0 {
                    entropy -= p * p.ln();
                }
            }
        }
        PosteriorSummary { mean_q1: mean_q1 / n, positive_fraction: positives as f64 / n, mean_entropy: entropy / n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EmIteration {
    pub iteration: usize,
    pub q_snapshot: PosteriorSummary,
    pub bp_converged: bool,
    pub bp_iterations: usize,
    pub distill_loss: f64,
    /// Learnable weight values after this iteration's M-step.
    pub weight_values: BTreeMap<String, f64>,
    pub weight_steps_accepted: usize,
    pub surrogate_objective: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EmTrace {
    pub iterations: Vec<EmIteration>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub classifier: Classifier,
    pub program: Program,
    pub trace: EmTrace,
}

/// Run `opts.em_iterations` rounds of e_step, distillation and weight
/// refinement. Deterministic for a fixed seed.
pub fn fit(
    program: &Program,
    ds: &Dataset,
    kind: ClassifierKind,
    opts: &EmOptions,
    seed: u64,
) -> Result<FitResult, LearnError> {
    if opts.em_iterations == 0 {
        return Err(LearnError::InvalidOptions("em_iterations must be at least 1".into()));
    }
    let mut program = program.clone();
    let mut classifier = Classifier::new(kind, ds.dim(), seeds::derive(seed, seeds::CLASSIFIER_INIT));
    let mut trace = EmTrace::default();
    for iteration in 0..opts.em_iterations {
        let q = e_step(&program, ds, &classifier, &opts.bp)?;
        let train = TrainOptions { seed: seeds::derive(seed, seeds::DISTILL + iteration as u64), ..opts.train };
        let (trained, report) = train_distill(&classifier, ds, &q, &train)?;
        classifier = trained;
        let update = m_step_weights(&mut program, ds, &q, opts)?;
        log::info!(
            "em iteration {}: distill loss {:.4}, {} weight steps, objective {:.4}",
            iteration + 1,
            report.final_loss,
            update.steps.len(),
            update.final_objective()
        );
        trace.iterations.push(EmIteration {
            iteration: iteration + 1,
            q_snapshot: PosteriorSummary::of(&q),
            bp_converged: q.converged,
            bp_iterations: q.iterations,
            distill_loss: report.final_loss,
            weight_values: program.learned_weights(),
            weight_steps_accepted: update.steps.len(),
            surrogate_objective: update.final_objective(),
        });
    }
    Ok(FitResult { classifier, program, trace })
}
