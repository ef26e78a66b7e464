//! Posterior marginals over the latent labels.
//!
//! [`loopy_bp`] runs synchronous (flooding) sum-product in the log domain.
//! [`brute_force_marginals`] enumerates all configurations and serves as the
//! exact reference for small graphs.

use std::f64::consts::LN_2;
use std::sync::Arc;

use thiserror::Error;

use crate::grounding::{FactorGraph, FactorKind, Potential, RuleWeight};
use crate::numeric::{log1mexp, logsumexp2, normalize_log2, sigmoid, HARD_PENALTY};

/// Graphs with more variables than this are rejected by the enumeration routines.
pub const MAX_BRUTE_FORCE_VARS: usize = 20;

const CONTRADICTION_LEVEL: f64 = HARD_PENALTY / 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("contradictory constraints (variable {0} has no admissible value)")]
    Contradiction(usize),
    #[error("contradictory constraints (no admissible configuration)")]
    NoAdmissibleConfiguration,
    #[error("brute force supports at most {MAX_BRUTE_FORCE_VARS} variables, graph has {0}")]
    TooManyVariables(usize),
    #[error("invalid BP options: {0}")]
    InvalidOptions(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpOptions {
    pub max_iterations: usize,
    /// Sup-norm of the log-domain message change that counts as converged.
    pub tolerance: f64,
    /// Weight on the previous message; ignored on tree-structured graphs.
    pub damping: f64,
}

impl Default for BpOptions {
    fn default() -> Self {
        BpOptions { max_iterations: 50, tolerance: 1e-6, damping: 0.3 }
    }
}

impl BpOptions {
    pub fn validate(&self) -> Result<(), InferenceError> {
        if self.max_iterations == 0 {
            return Err(InferenceError::InvalidOptions("max_iterations must be positive".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(InferenceError::InvalidOptions("tolerance must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(InferenceError::InvalidOptions("damping must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Final BP messages, indexed by edge id, normalized log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct BpMessages {
    pub to_factor: Vec<[f64; 2]>,
    pub to_var: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTable {
    marginals: Vec<[f64; 2]>,
    pub converged: bool,
    pub iterations: usize,
    pub max_residual: f64,
    messages: Option<Arc<BpMessages>>,
}

impl MarginalTable {
    /// Table from explicit `(q0, q1)` pairs, treated as a fully factorized posterior.
    pub fn from_probabilities(marginals: Vec<[f64; 2]>) -> Self {
        MarginalTable { marginals, converged: true, iterations: 0, max_residual: 0.0, messages: None }
    }

    /// Table from `q1` values.
    pub fn from_q1(q1: &[f64]) -> Self {
        Self::from_probabilities(q1.iter().map(|&p| [1.0 - p, p]).collect())
    }

    pub fn len(&self) -> usize {
        self.marginals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marginals.is_empty()
    }

    pub fn get(&self, i: usize) -> [f64; 2] {
        self.marginals[i]
    }

    pub fn q1(&self, i: usize) -> f64 {
        self.marginals[i][1]
    }

    pub fn marginals(&self) -> &[[f64; 2]] {
        &self.marginals
    }

    pub fn messages(&self) -> Option<&BpMessages> {
        self.messages.as_deref()
    }
}

/// Outgoing messages of an at-least-one factor, given incoming
/// variable-to-factor log-messages. Linear in the number of variables.
pub fn at_least_one_messages(incoming: &[[f64; 2]], weight: RuleWeight) -> Vec<[f64; 2]> {
    let (none, any) = weight.scores();
    let mut out = vec![[0.0; 2]; incoming.len()];
    at_least_one_into(none, any, incoming, &mut out, &mut Vec::new());
    out
}

fn at_least_one_into(none: f64, any: f64, incoming: &[[f64; 2]], out: &mut [[f64; 2]], log_zero: &mut Vec<f64>) {
    // Exclusive sums of ln P_j(0) via prefix + suffix; subtracting from a
    // total would cancel against the hard-penalty sentinel.
    log_zero.clear();
    log_zero.extend(incoming.iter().map(|m| (m[0] - logsumexp2(m[0], m[1])).min(0.0)));
    let mut prefix = 0.0;
    for (o, a) in out.iter_mut().zip(log_zero.iter()) {
        o[0] = prefix;
        prefix += a;
    }
    let mut suffix = 0.0;
    for (o, a) in out.iter_mut().zip(log_zero.iter()).rev() {
        let others_zero = o[0] + suffix;
        let off = logsumexp2(any + log1mexp(others_zero), none + others_zero);
        *o = normalize_log2([off, any]);
        suffix += a;
    }
}

fn factor_messages(pot: Potential, incoming: &[[f64; 2]], out: &mut [[f64; 2]], scratch: &mut Vec<f64>) {
    match pot {
        Potential::Unary(t) => out[0] = normalize_log2(t),
        Potential::Pairwise(t) => {
            let (ma, mb) = (incoming[0], incoming[1]);
            out[0] = normalize_log2([
                logsumexp2(t[0][0] + mb[0], t[0][1] + mb[1]),
                logsumexp2(t[1][0] + mb[0], t[1][1] + mb[1]),
            ]);
            out[1] = normalize_log2([
                logsumexp2(t[0][0] + ma[0], t[1][0] + ma[1]),
                logsumexp2(t[0][1] + ma[0], t[1][1] + ma[1]),
            ]);
        }
        Potential::AtLeastOne { none, any } => at_least_one_into(none, any, incoming, out, scratch),
    }
}

/// Variable-to-factor messages: sum of the other incoming factor messages.
fn update_to_factor(g: &FactorGraph, to_var: &[[f64; 2]], to_factor: &mut [[f64; 2]], prefix: &mut Vec<[f64; 2]>) {
    for v in 0..g.num_vars() {
        let edges = g.var_edges(v);
        prefix.clear();
        prefix.push([0.0, 0.0]);
        for &e in edges {
            let p = prefix.last().unwrap();
            prefix.push([p[0] + to_var[e][0], p[1] + to_var[e][1]]);
        }
        let mut suffix = [0.0, 0.0];
        for (k, &e) in edges.iter().enumerate().rev() {
            to_factor[e] = normalize_log2([prefix[k][0] + suffix[0], prefix[k][1] + suffix[1]]);
            suffix[0] += to_var[e][0];
            suffix[1] += to_var[e][1];
        }
    }
}

/// Unnormalized log-belief of variable `v`.
fn var_log_belief(g: &FactorGraph, to_var: &[[f64; 2]], v: usize) -> [f64; 2] {
    g.var_edges(v).iter().fold([0.0, 0.0], |acc, &e| [acc[0] + to_var[e][0], acc[1] + to_var[e][1]])
}

/// Loopy belief propagation with a synchronous schedule.
///
/// Tree-structured graphs are run undamped and until the messages stop
/// changing: the fixed point is the same, and flooding reaches it exactly
/// after a number of sweeps bounded by the diameter. On loopy graphs hitting
/// `max_iterations` is not an error; the table reports `converged = false`.
pub fn loopy_bp(g: &FactorGraph, opts: &BpOptions) -> Result<MarginalTable, InferenceError> {
    opts.validate()?;
    let edges = g.num_edges();
    let uniform = [-LN_2, -LN_2];
    let mut to_var = vec![uniform; edges];
    let mut to_factor = vec![uniform; edges];
    let mut fresh = vec![uniform; edges];
    let potentials: Vec<Potential> = (0..g.num_factors()).map(|f| g.potential(f)).collect();
    let forest = g.is_forest();
    let damping = if forest { 0.0 } else { opts.damping };
    // a forest reaches its exact fixed point (zero residual) within diameter + 1 sweeps
    let (sweeps, stop_at) = if forest {
        (opts.max_iterations.max(g.num_vars() + g.num_factors() + 2), 0.0)
    } else {
        (opts.max_iterations, opts.tolerance)
    };

    let mut var_scratch = Vec::new();
    let mut factor_scratch = Vec::new();
    let converged;
    let mut residual = 0.0;
    let mut iterations = 0;
    if edges > 0 {
        for it in 1..=sweeps {
            update_to_factor(g, &to_var, &mut to_factor, &mut var_scratch);
            for (f, pot) in potentials.iter().enumerate() {
                let range = g.factor_edges(f);
                factor_messages(*pot, &to_factor[range.clone()], &mut fresh[range], &mut factor_scratch);
            }
            residual = 0.0f64;
            for (old, new) in to_var.iter_mut().zip(&fresh) {
                let next = if damping > 0.0 {
                    normalize_log2([
                        (1.0 - damping) * new[0] + damping * old[0],
                        (1.0 - damping) * new[1] + damping * old[1],
                    ])
                } else {
                    *new
                };
                residual = residual.max((next[0] - old[0]).abs()).max((next[1] - old[1]).abs());
                *old = next;
            }
            iterations = it;
            if residual <= stop_at {
                break;
            }
        }
        converged = residual <= opts.tolerance;
        // keep the stored pair consistent for factor beliefs and the Bethe objective
        update_to_factor(g, &to_var, &mut to_factor, &mut var_scratch);
    } else {
        converged = true;
    }

    let mut marginals = Vec::with_capacity(g.num_vars());
    for v in 0..g.num_vars() {
        let b = var_log_belief(g, &to_var, v);
        if b[0].max(b[1]) < CONTRADICTION_LEVEL {
            return Err(InferenceError::Contradiction(v));
        }
        let d = b[1] - b[0];
        marginals.push([sigmoid(-d), sigmoid(d)]);
    }
    log::debug!("bp: {} vars, {} factors, {iterations} sweeps, residual {residual:.3e}", g.num_vars(), g.num_factors());
    Ok(MarginalTable {
        marginals,
        converged,
        iterations,
        max_residual: residual,
        messages: Some(Arc::new(BpMessages { to_factor, to_var })),
    })
}

fn enumerate_scores(g: &FactorGraph) -> Result<Vec<f64>, InferenceError> {
    let n = g.num_vars();
    if n > MAX_BRUTE_FORCE_VARS {
        return Err(InferenceError::TooManyVariables(n));
    }
    let mut assignment = vec![0u8; n];
    let mut scores = Vec::with_capacity(1 << n);
    for config in 0..(1usize << n) {
        for (v, a) in assignment.iter_mut().enumerate() {
            *a = ((config >> v) & 1) as u8;
        }
        scores.push((0..g.num_factors()).map(|f| g.log_potential(f, &assignment)).sum());
    }
    Ok(scores)
}

/// Exact marginals by summing over all `2^n` configurations.
pub fn brute_force_marginals(g: &FactorGraph) -> Result<MarginalTable, InferenceError> {
    let scores = enumerate_scores(g)?;
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max < CONTRADICTION_LEVEL {
        return Err(InferenceError::NoAdmissibleConfiguration);
    }
    let n = g.num_vars();
    let mut total = 0.0;
    let mut ones = vec![0.0; n];
    for (config, s) in scores.iter().enumerate() {
        let w = (s - max).exp();
        total += w;
        for (v, acc) in ones.iter_mut().enumerate() {
            if (config >> v) & 1 == 1 {
                *acc += w;
            }
        }
    }
    let marginals = ones.iter().map(|&o| [(total - o) / total, o / total]).collect();
    Ok(MarginalTable::from_probabilities(marginals))
}

/// Exact `ln Z` by enumeration.
pub fn exact_log_partition(g: &FactorGraph) -> Result<f64, InferenceError> {
    let scores = enumerate_scores(g)?;
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln())
}

/// Bethe approximation of `ln Z` from the messages retained in `m`
/// (exact on trees at convergence). If `m` carries no messages, BP is rerun
/// with default options; a contradictory graph yields `-inf`.
pub fn bethe_objective(g: &FactorGraph, m: &MarginalTable) -> f64 {
    let fallback;
    let msgs = match m.messages() {
        Some(msgs) if msgs.to_var.len() == g.num_edges() => msgs,
        _ => match loopy_bp(g, &BpOptions::default()) {
            Ok(t) => {
                fallback = t;
                fallback.messages().expect("loopy_bp retains messages")
            }
            Err(_) => return f64::NEG_INFINITY,
        },
    };

    let mut total = 0.0;
    for f in 0..g.num_factors() {
        let range = g.factor_edges(f);
        let inc = &msgs.to_factor[range.clone()];
        total += match g.potential(f) {
            Potential::Unary(t) => logsumexp2(t[0] + inc[0][0], t[1] + inc[0][1]),
            Potential::Pairwise(t) => logsumexp2(
                logsumexp2(t[0][0] + inc[0][0] + inc[1][0], t[0][1] + inc[0][0] + inc[1][1]),
                logsumexp2(t[1][0] + inc[0][1] + inc[1][0], t[1][1] + inc[0][1] + inc[1][1]),
            ),
            Potential::AtLeastOne { none, any } => {
                let mut norm = 0.0;
                let mut all_zero = 0.0;
                for m in inc {
                    let l = logsumexp2(m[0], m[1]);
                    norm += l;
                    all_zero += (m[0] - l).min(0.0);
                }
                norm + logsumexp2(none + all_zero, any + log1mexp(all_zero))
            }
        };
        for e in range {
            total -= logsumexp2(msgs.to_factor[e][0] + msgs.to_var[e][0], msgs.to_factor[e][1] + msgs.to_var[e][1]);
        }
    }
    for v in 0..g.num_vars() {
        let b = var_log_belief(g, &msgs.to_var, v);
        total += logsumexp2(b[0], b[1]);
    }
    total
}

/// Expected value of each rule's satisfied-indicator, summed over the rule's
/// groundings in `g`.
///
/// When `m` retains BP messages covering `g`'s edges (e.g. from a graph that
/// extends `g` with predictor priors) the factor beliefs are used; otherwise
/// the marginals are treated as a fully factorized distribution.
pub fn rule_expectations(g: &FactorGraph, m: &MarginalTable) -> Vec<f64> {
    let mut out = vec![0.0; g.rules().len()];
    let msgs = m.messages().filter(|msgs| msgs.to_factor.len() >= g.num_edges());
    let mut incoming = Vec::new();
    for (f, factor) in g.factors().iter().enumerate() {
        let Some(rule) = factor.rule else { continue };
        incoming.clear();
        let pot = match msgs {
            Some(msgs) => {
                incoming.extend_from_slice(&msgs.to_factor[g.factor_edges(f)]);
                g.potential(f)
            }
            None => {
                incoming.extend(g.factor_scope(f).iter().map(|&v| {
                    let q = m.get(v);
                    [q[0].ln().max(HARD_PENALTY), q[1].ln().max(HARD_PENALTY)]
                }));
                match g.potential(f) {
                    Potential::Unary(_) => Potential::Unary([0.0; 2]),
                    Potential::Pairwise(_) => Potential::Pairwise([[0.0; 2]; 2]),
                    Potential::AtLeastOne { .. } => Potential::AtLeastOne { none: 0.0, any: 0.0 },
                }
            }
        };
        let target = match &factor.kind {
            FactorKind::SingletonVote { polarity, .. } => polarity.target(),
            _ => 1,
        };
        out[rule] += match pot {
            Potential::Unary(t) => {
                let d = (t[1] + incoming[0][1]) - (t[0] + incoming[0][0]);
                if target == 1 {
                    sigmoid(d)
                } else {
                    sigmoid(-d)
                }
            }
            Potential::Pairwise(t) => {
                let (a, b) = (incoming[0], incoming[1]);
                let same = logsumexp2(t[0][0] + a[0] + b[0], t[1][1] + a[1] + b[1]);
                let diff = logsumexp2(t[0][1] + a[0] + b[1], t[1][0] + a[1] + b[0]);
                sigmoid(same - diff)
            }
            Potential::AtLeastOne { none, any } => {
                let all_zero: f64 = incoming.iter().map(|m| (m[0] - logsumexp2(m[0], m[1])).min(0.0)).sum();
                let on = any + log1mexp(all_zero);
                let off = none + all_zero;
                if on == f64::NEG_INFINITY {
                    0.0
                } else {
                    sigmoid(on - off)
                }
            }
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grounding::{Factor, RuleInfo};
    use crate::logic::Polarity;

    fn rule(w: RuleWeight) -> RuleInfo {
        RuleInfo { name: "r".into(), weight: w }
    }

    fn vote(var: usize, polarity: Polarity, r: usize) -> Factor {
        Factor { kind: FactorKind::SingletonVote { var, polarity }, rule: Some(r) }
    }

    #[test]
    fn single_vote_gives_sigmoid() {
        let g = FactorGraph::new(1, vec![vote(0, Polarity::Positive, 0)], vec![rule(RuleWeight::Soft(9f64.ln()))]).unwrap();
        let m = loopy_bp(&g, &BpOptions::default()).unwrap();
        assert!((m.q1(0) - 0.9).abs() < 1e-12);
        assert!(m.converged);
        assert!((bethe_objective(&g, &m) - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn lone_variable_is_uniform() {
        let g = FactorGraph::new(1, vec![], vec![]).unwrap();
        let m = loopy_bp(&g, &BpOptions::default()).unwrap();
        assert_eq!(m.get(0), [0.5, 0.5]);
        assert!((bethe_objective(&g, &m) - LN_2).abs() < 1e-15);
    }

    #[test]
    fn hard_at_least_one_pair() {
        let f = Factor { kind: FactorKind::AtLeastOne { vars: vec![0, 1] }, rule: Some(0) };
        let g = FactorGraph::new(2, vec![f], vec![rule(RuleWeight::Hard)]).unwrap();
        let m = loopy_bp(&g, &BpOptions::default()).unwrap();
        for v in 0..2 {
            assert!((m.q1(v) - 2.0 / 3.0).abs() < 1e-12);
        }
        assert!((bethe_objective(&g, &m) - 3f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn soft_at_least_one_pair() {
        let w = 0.7f64;
        let f = Factor { kind: FactorKind::AtLeastOne { vars: vec![0, 1] }, rule: Some(0) };
        let g = FactorGraph::new(2, vec![f], vec![rule(RuleWeight::Soft(w))]).unwrap();
        let m = loopy_bp(&g, &BpOptions::default()).unwrap();
        let expected = 2.0 * w.exp() / (1.0 + 3.0 * w.exp());
        assert!((m.q1(0) - expected).abs() < 1e-12);
        let b = brute_force_marginals(&g).unwrap();
        assert!((b.q1(1) - expected).abs() < 1e-12);
    }

    #[test]
    fn at_least_one_uniform_hard_ratio() {
        let out = at_least_one_messages(&[[0.0, 0.0], [0.0, 0.0]], RuleWeight::Hard);
        for m in out {
            assert!((m[1] - m[0] - LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn at_least_one_of_one_is_a_vote() {
        let out = at_least_one_messages(&[[-LN_2, -LN_2]], RuleWeight::Soft(1.3));
        let expected = normalize_log2([0.0, 1.3]);
        assert!((out[0][0] - expected[0]).abs() < 1e-12 && (out[0][1] - expected[1]).abs() < 1e-12);
    }

    #[test]
    fn at_least_one_satisfied_is_uninformative() {
        let strong = [-30.0, 0.0];
        let out = at_least_one_messages(&[strong, strong, strong], RuleWeight::Hard);
        for m in out {
            assert!((m[0] - m[1]).abs() <= 1e-6);
        }
    }

    #[test]
    fn predictor_only_marginals_are_priors() {
        let factors = vec![
            Factor { kind: FactorKind::PredictorPrior { var: 0, logp: [0.8f64.ln(), 0.2f64.ln()] }, rule: None },
            Factor { kind: FactorKind::PredictorPrior { var: 1, logp: [0.1f64.ln(), 0.9f64.ln()] }, rule: None },
        ];
        let g = FactorGraph::new(2, factors, vec![]).unwrap();
        let b = brute_force_marginals(&g).unwrap();
        assert!((b.q1(0) - 0.2).abs() < 1e-12 && (b.q1(1) - 0.9).abs() < 1e-12);
        let m = loopy_bp(&g, &BpOptions::default()).unwrap();
        assert!((m.q1(0) - 0.2).abs() < 1e-12 && (m.q1(1) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn contradiction_is_reported() {
        let mut factors = vec![Factor { kind: FactorKind::AtLeastOne { vars: vec![0, 1, 2] }, rule: Some(0) }];
        factors.extend((0..3).map(|v| vote(v, Polarity::Negative, 1)));
        let g = FactorGraph::new(3, factors, vec![rule(RuleWeight::Hard), rule(RuleWeight::Hard)]).unwrap();
        let err = brute_force_marginals(&g).unwrap_err();
        assert!(err.to_string().contains("contradictory constraints"));
        let err = loopy_bp(&g, &BpOptions::default()).unwrap_err();
        assert!(err.to_string().contains("contradictory constraints"));
    }

    #[test]
    fn too_many_variables() {
        let g = FactorGraph::new(21, vec![], vec![]).unwrap();
        assert_eq!(brute_force_marginals(&g).unwrap_err(), InferenceError::TooManyVariables(21));
    }

    #[test]
    fn options_are_validated() {
        let g = FactorGraph::new(1, vec![], vec![]).unwrap();
        for opts in [
            BpOptions { damping: 1.0, ..Default::default() },
            BpOptions { tolerance: 0.0, ..Default::default() },
            BpOptions { max_iterations: 0, ..Default::default() },
        ] {
            assert!(matches!(loopy_bp(&g, &opts), Err(InferenceError::InvalidOptions(_))));
        }
    }

    #[test]
    fn factorized_expectations_without_messages() {
        let g = FactorGraph::new(
            2,
            vec![vote(0, Polarity::Negative, 0), Factor { kind: FactorKind::Agree { a: 0, b: 1 }, rule: Some(1) }],
            vec![rule(RuleWeight::Soft(1.0)), rule(RuleWeight::Soft(1.0))],
        )
        .unwrap();
        let q = MarginalTable::from_q1(&[0.25, 0.6]);
        let e = rule_expectations(&g, &q);
        assert!((e[0] - 0.75).abs() < 1e-12);
        assert!((e[1] - (0.75 * 0.4 + 0.25 * 0.6)).abs() < 1e-12);
    }
}
