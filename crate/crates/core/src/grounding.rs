//! Compile a rule program over a dataset into a factor graph with one binary
//! latent label per instance.

use serde::Serialize;
use thiserror::Error;

use crate::data::Dataset;
use crate::logic::{Polarity, Program, RuleBody, Weight};
use crate::numeric::{logsumexp2, HARD_PENALTY};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GroundError {
    #[error("predictor log-probabilities cover {found} instances, dataset has {expected}")]
    PredictorLength { expected: usize, found: usize },
    #[error("predictor log-probabilities for instance {index} are not normalized (logsumexp = {lse})")]
    NotNormalized { index: usize, lse: f64 },
    #[error("factor {factor} references variable {var} out of range")]
    VariableOutOfRange { factor: usize, var: usize },
    #[error("factor {0} has no variables")]
    EmptyFactor(usize),
    #[error("factor {0} repeats a variable")]
    RepeatedVariable(usize),
    #[error("factor {factor} references unknown rule {rule}")]
    UnknownRule { factor: usize, rule: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RuleWeight {
    Soft(f64),
    Hard,
}

impl From<Weight> for RuleWeight {
    fn from(w: Weight) -> Self {
        match w.value() {
            Some(v) => RuleWeight::Soft(v),
            None => RuleWeight::Hard,
        }
    }
}

impl RuleWeight {
    /// Log-potentials `(violated, satisfied)`.
    pub fn scores(self) -> (f64, f64) {
        match self {
            RuleWeight::Soft(w) => (0.0, w),
            RuleWeight::Hard => (HARD_PENALTY, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FactorKind {
    SingletonVote { var: usize, polarity: Polarity },
    AtLeastOne { vars: Vec<usize> },
    Agree { a: usize, b: usize },
    /// Classifier log-probabilities `[ln p0, ln p1]`.
    PredictorPrior { var: usize, logp: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub kind: FactorKind,
    /// Index into the graph's rule table; `None` for predictor priors.
    pub rule: Option<usize>,
}

/// Log-potential of a factor, specialised by shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Potential {
    Unary([f64; 2]),
    Pairwise([[f64; 2]; 2]),
    /// `none`: all-zero configuration; `any`: at least one variable is 1.
    AtLeastOne { none: f64, any: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum FactorClass {
    SingletonVote,
    AtLeastOne,
    Agree,
    PredictorPrior,
}

impl FactorKind {
    pub fn class(&self) -> FactorClass {
        match self {
            FactorKind::SingletonVote { .. } => FactorClass::SingletonVote,
            FactorKind::AtLeastOne { .. } => FactorClass::AtLeastOne,
            FactorKind::Agree { .. } => FactorClass::Agree,
            FactorKind::PredictorPrior { .. } => FactorClass::PredictorPrior,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleInfo {
    pub name: String,
    pub weight: RuleWeight,
}

/// Bipartite variable/factor graph. Edges are laid out factor by factor, so
/// a graph whose factor list is a prefix of another's shares its edge ids.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph {
    num_vars: usize,
    factors: Vec<Factor>,
    rules: Vec<RuleInfo>,
    edge_offsets: Vec<usize>,
    edge_vars: Vec<usize>,
    var_edge_offsets: Vec<usize>,
    var_edges: Vec<usize>,
}

impl FactorGraph {
    pub fn new(num_vars: usize, factors: Vec<Factor>, rules: Vec<RuleInfo>) -> Result<Self, GroundError> {
        let mut edge_offsets = Vec::with_capacity(factors.len() + 1);
        let mut edge_vars = Vec::new();
        edge_offsets.push(0);
        for (fi, f) in factors.iter().enumerate() {
            let start = edge_vars.len();
            match &f.kind {
                FactorKind::SingletonVote { var, .. } | FactorKind::PredictorPrior { var, .. } => edge_vars.push(*var),
                FactorKind::Agree { a, b } => edge_vars.extend([*a, *b]),
                FactorKind::AtLeastOne { vars } => edge_vars.extend_from_slice(vars),
            }
            let scope = &edge_vars[start..];
            if scope.is_empty() {
                return Err(GroundError::EmptyFactor(fi));
            }
            if let Some(&var) = scope.iter().find(|&&v| v >= num_vars) {
                return Err(GroundError::VariableOutOfRange { factor: fi, var });
            }
            let mut sorted = scope.to_vec();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(GroundError::RepeatedVariable(fi));
            }
            match f.rule {
                Some(r) if r >= rules.len() => return Err(GroundError::UnknownRule { factor: fi, rule: r }),
                _ => {}
            }
            edge_offsets.push(edge_vars.len());
        }

        let mut degree = vec![0usize; num_vars];
        for &v in &edge_vars {
            degree[v] += 1;
        }
        let mut var_edge_offsets = Vec::with_capacity(num_vars + 1);
        var_edge_offsets.push(0);
        for d in &degree {
            var_edge_offsets.push(var_edge_offsets.last().unwrap() + d);
        }
        let mut fill = var_edge_offsets[..num_vars].to_vec();
        let mut var_edges = vec![0usize; edge_vars.len()];
        for (e, &v) in edge_vars.iter().enumerate() {
            var_edges[fill[v]] = e;
            fill[v] += 1;
        }

        Ok(FactorGraph { num_vars, factors, rules, edge_offsets, edge_vars, var_edge_offsets, var_edges })
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edge_vars.len()
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn rules(&self) -> &[RuleInfo] {
        &self.rules
    }

    /// Edge id range of factor `f`.
    pub fn factor_edges(&self, f: usize) -> std::ops::Range<usize> {
        self.edge_offsets[f]..self.edge_offsets[f + 1]
    }

    pub fn factor_scope(&self, f: usize) -> &[usize] {
        &self.edge_vars[self.factor_edges(f)]
    }

    /// Edge ids incident to variable `v`.
    pub fn var_edges(&self, v: usize) -> &[usize] {
        &self.var_edges[self.var_edge_offsets[v]..self.var_edge_offsets[v + 1]]
    }

    pub fn edge_var(&self, e: usize) -> usize {
        self.edge_vars[e]
    }

    pub fn potential(&self, f: usize) -> Potential {
        let factor = &self.factors[f];
        let weight = factor.rule.map(|r| self.rules[r].weight);
        match (&factor.kind, weight) {
            (FactorKind::PredictorPrior { logp, .. }, _) => Potential::Unary(*logp),
            (FactorKind::SingletonVote { polarity, .. }, Some(w)) => {
                let (off, on) = w.scores();
                let mut t = [off; 2];
                t[polarity.target()] = on;
                Potential::Unary(t)
            }
            (FactorKind::Agree { .. }, Some(w)) => {
                let (off, on) = w.scores();
                Potential::Pairwise([[on, off], [off, on]])
            }
            (FactorKind::AtLeastOne { .. }, Some(w)) => {
                let (off, on) = w.scores();
                Potential::AtLeastOne { none: off, any: on }
            }
            (_, None) => unreachable!("rule-backed factor without a rule"),
        }
    }

    /// Log-potential of factor `f` under a full assignment.
    pub fn log_potential(&self, f: usize, assignment: &[u8]) -> f64 {
        let scope = self.factor_scope(f);
        match self.potential(f) {
            Potential::Unary(t) => t[assignment[scope[0]] as usize],
            Potential::Pairwise(t) => t[assignment[scope[0]] as usize][assignment[scope[1]] as usize],
            Potential::AtLeastOne { none, any } => {
                if scope.iter().any(|&v| assignment[v] == 1) {
                    any
                } else {
                    none
                }
            }
        }
    }

    /// Indicator of the rule feature of factor `f` (1 when the rule is satisfied).
    pub fn rule_feature(&self, f: usize, assignment: &[u8]) -> f64 {
        let scope = self.factor_scope(f);
        let on = match &self.factors[f].kind {
            FactorKind::SingletonVote { polarity, .. } => assignment[scope[0]] as usize == polarity.target(),
            FactorKind::Agree { .. } => assignment[scope[0]] == assignment[scope[1]],
            FactorKind::AtLeastOne { .. } => scope.iter().any(|&v| assignment[v] == 1),
            FactorKind::PredictorPrior { .. } => false,
        };
        if on {
            1.0
        } else {
            0.0
        }
    }

    /// Same structure with new rule weights.
    pub fn reweighted(&self, weights: &[RuleWeight]) -> FactorGraph {
        assert_eq!(weights.len(), self.rules.len(), "one weight per rule");
        let mut g = self.clone();
        for (info, &w) in g.rules.iter_mut().zip(weights) {
            info.weight = w;
        }
        g
    }

    /// Copy of the graph without predictor priors.
    pub fn without_predictor(&self) -> FactorGraph {
        let factors = self.factors.iter().filter(|f| f.rule.is_some()).cloned().collect();
        FactorGraph::new(self.num_vars, factors, self.rules.clone()).expect("sub-graph of a valid graph")
    }

    /// True when the variable/factor incidence graph has no cycles.
    pub fn is_forest(&self) -> bool {
        let nodes = self.num_vars + self.factors.len();
        let mut parent: Vec<usize> = (0..nodes).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for f in 0..self.factors.len() {
            let fnode = self.num_vars + f;
            for &v in self.factor_scope(f) {
                let (a, b) = (find(&mut parent, fnode), find(&mut parent, v));
                if a == b {
                    return false;
                }
                parent[a] = b;
            }
        }
        true
    }
}

/// Ground `program` over `ds`. Factors are emitted rule by rule in program
/// order (votes by instance, groups by key, pairs in sorted order), followed
/// by one predictor prior per instance when `predictor` is given.
pub fn ground(program: &Program, ds: &Dataset, predictor: Option<&[[f64; 2]]>) -> Result<FactorGraph, GroundError> {
    if let Some(logps) = predictor {
        if logps.len() != ds.len() {
            return Err(GroundError::PredictorLength { expected: ds.len(), found: logps.len() });
        }
        for (index, lp) in logps.iter().enumerate() {
            let lse = logsumexp2(lp[0], lp[1]);
            if !(lse.abs() <= 1e-6) {
                return Err(GroundError::NotNormalized { index, lse });
            }
        }
    }

    let mut factors = Vec::new();
    let mut rules = Vec::with_capacity(program.len());
    for (ri, rule) in program.rules().iter().enumerate() {
        rules.push(RuleInfo { name: rule.name.clone(), weight: rule.weight.into() });
        let rule_ref = Some(ri);
        match &rule.body {
            RuleBody::Vote { field, polarity } => {
                for (i, inst) in ds.instances().iter().enumerate() {
                    if inst.flag(field) {
                        factors.push(Factor { kind: FactorKind::SingletonVote { var: i, polarity: *polarity }, rule: rule_ref });
                    }
                }
            }
            RuleBody::AtLeastOne { group_field } => {
                for members in ds.groups(group_field).into_iter().flat_map(|g| g.values()) {
                    let kind = if members.len() == 1 {
                        FactorKind::SingletonVote { var: members[0], polarity: Polarity::Positive }
                    } else {
                        FactorKind::AtLeastOne { vars: members.clone() }
                    };
                    factors.push(Factor { kind, rule: rule_ref });
                }
            }
            RuleBody::Agree { pair_field } => {
                for &(a, b) in ds.pairs(pair_field).unwrap_or(&[]) {
                    factors.push(Factor { kind: FactorKind::Agree { a, b }, rule: rule_ref });
                }
            }
        }
    }
    if let Some(logps) = predictor {
        for (var, lp) in logps.iter().enumerate() {
            factors.push(Factor { kind: FactorKind::PredictorPrior { var, logp: *lp }, rule: None });
        }
    }
    FactorGraph::new(ds.len(), factors, rules)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StatsReport {
    pub variables: usize,
    pub factors: usize,
    pub singleton_vote: usize,
    pub at_least_one: usize,
    pub agree: usize,
    pub predictor_prior: usize,
    pub max_arity: usize,
    pub is_tree: bool,
}

pub fn graph_stats(g: &FactorGraph) -> StatsReport {
    let mut s = StatsReport {
        variables: g.num_vars(),
        factors: g.num_factors(),
        singleton_vote: 0,
        at_least_one: 0,
        agree: 0,
        predictor_prior: 0,
        max_arity: 0,
        is_tree: g.is_forest(),
    };
    for (fi, f) in g.factors().iter().enumerate() {
        match f.kind.class() {
            FactorClass::SingletonVote => s.singleton_vote += 1,
            FactorClass::AtLeastOne => s.at_least_one += 1,
            FactorClass::Agree => s.agree += 1,
            FactorClass::PredictorPrior => s.predictor_prior += 1,
        }
        s.max_arity = s.max_arity.max(g.factor_scope(fi).len());
    }
    s
}
