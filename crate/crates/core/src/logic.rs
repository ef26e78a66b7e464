//! Rule language for indirect supervision.
//!
//! A program is a list of weighted rules, one per line:
//!
//! ```text
//! # tag: DS
//! 2.1972: vote(+kb_match)
//! learn(1.0): vote(-lf_table_noise)
//! # tag: JI
//! hard: at_least_one(group_id)
//! ```
//!
//! Weights are natural log-odds. `learn(w)` marks a weight refined during
//! EM, starting from `w`; `hard` turns the rule into a constraint.
//! Full-line comments of the form `# tag: X` set the ablation tag of every
//! following rule, and `# name: X` names the next rule.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldType {
    Bool,
    Real,
    Key,
    Pairs,
}

impl fmt::Display for FieldType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FieldType::Bool => "bool",
            FieldType::Real => "real",
            FieldType::Key => "key",
            FieldType::Pairs => "pairs",
        };
        f.write_str(s)
    }
}

/// Declared instance fields and their types.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schema {
    fields: BTreeMap<String, FieldType>,
}

impl Schema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_field(mut self, name: impl Into<String>, ty: FieldType) -> Self {
        self.insert(name, ty);
        self
    }

    pub fn insert(&mut self, name: impl Into<String>, ty: FieldType) {
        self.fields.insert(name.into(), ty);
    }

    pub fn get(&self, name: &str) -> Option<FieldType> {
        self.fields.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, FieldType)> {
        self.fields.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    Fixed(f64),
    Learnable { init: f64, current: f64 },
    Hard,
}

impl Weight {
    pub fn learnable(init: f64) -> Self {
        Weight::Learnable { init, current: init }
    }

    /// Current log-odds value, `None` for hard constraints.
    pub fn value(&self) -> Option<f64> {
        match *self {
            Weight::Fixed(v) => Some(v),
            Weight::Learnable { current, .. } => Some(current),
            Weight::Hard => None,
        }
    }

    pub fn is_learnable(&self) -> bool {
        matches!(self, Weight::Learnable { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
}

impl Polarity {
    /// Label the vote pushes toward.
    pub fn target(self) -> usize {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => 0,
        }
    }

    fn symbol(self) -> char {
        match self {
            Polarity::Positive => '+',
            Polarity::Negative => '-',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RuleBody {
    /// Virtual evidence on one instance, fired when the boolean field is true.
    Vote { field: String, polarity: Polarity },
    /// At least one instance sharing the key field is positive.
    AtLeastOne { group_field: String },
    /// Linked instances (pair-list field) tend to share a label.
    Agree { pair_field: String },
}

impl RuleBody {
    pub fn field(&self) -> &str {
        match self {
            RuleBody::Vote { field, .. } => field,
            RuleBody::AtLeastOne { group_field } => group_field,
            RuleBody::Agree { pair_field } => pair_field,
        }
    }

    fn required_type(&self) -> FieldType {
        match self {
            RuleBody::Vote { .. } => FieldType::Bool,
            RuleBody::AtLeastOne { .. } => FieldType::Key,
            RuleBody::Agree { .. } => FieldType::Pairs,
        }
    }

    /// Name used when the program does not supply one.
    pub fn default_name(&self) -> String {
        match self {
            RuleBody::Vote { field, polarity: Polarity::Positive } => format!("vote_pos_{field}"),
            RuleBody::Vote { field, polarity: Polarity::Negative } => format!("vote_neg_{field}"),
            RuleBody::AtLeastOne { group_field } => format!("at_least_one_{group_field}"),
            RuleBody::Agree { pair_field } => format!("agree_{pair_field}"),
        }
    }
}

impl fmt::Display for RuleBody {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleBody::Vote { field, polarity } => write!(f, "vote({}{field})", polarity.symbol()),
            RuleBody::AtLeastOne { group_field } => write!(f, "at_least_one({group_field})"),
            RuleBody::Agree { pair_field } => write!(f, "agree({pair_field})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub name: String,
    pub weight: Weight,
    pub body: RuleBody,
    /// Ablation tag (`DS`, `DP`, `JI`, ...); not part of the rendered rule.
    pub tag: Option<String>,
}

impl Rule {
    pub fn new(weight: Weight, body: RuleBody) -> Self {
        Rule { name: body.default_name(), weight, body, tag: None }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn tagged(mut self, tag: impl Into<String>) -> Self {
        self.tag = Some(tag.into());
        self
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_rule(self))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LogicError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("unknown weight token '{token}' at line {line}, column {column}")]
    UnknownWeight { line: usize, column: usize, token: String },
    #[error("non-finite weight literal '{literal}' at line {line}, column {column}")]
    NonFiniteWeight { line: usize, column: usize, literal: String },
    #[error("rule '{rule}': unknown field '{field}'")]
    UnknownField { rule: String, field: String },
    #[error("rule '{rule}': field '{field}' has type {found}, expected {expected}")]
    FieldTypeMismatch { rule: String, field: String, expected: FieldType, found: FieldType },
    #[error("duplicate name '{0}'")]
    DuplicateName(String),
    #[error("rule '{0}' does not have a learnable weight")]
    NotLearnable(String),
    #[error("no rule named '{0}'")]
    NoSuchRule(String),
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str, line: usize) -> Self {
        Cursor { text, pos: 0, line }
    }

    fn column(&self) -> usize {
        self.text[..self.pos].chars().count() + 1
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.text.len() - trimmed.len();
    }

    fn syntax(&self, message: impl Into<String>) -> LogicError {
        LogicError::Syntax { line: self.line, column: self.column(), message: message.into() }
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<(), LogicError> {
        if self.eat(token) {
            Ok(())
        } else {
            Err(self.syntax(format!("expected '{token}'")))
        }
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> &'a str {
        let start = self.pos;
        let len: usize = self.rest().chars().take_while(|c| pred(*c)).map(char::len_utf8).sum();
        self.pos += len;
        &self.text[start..self.pos]
    }

    fn ident(&mut self) -> Result<String, LogicError> {
        self.skip_ws();
        let first_ok = self.rest().chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_');
        if !first_ok {
            return Err(self.syntax("expected identifier"));
        }
        Ok(self.take_while(|c| c.is_ascii_alphanumeric() || c == '_').to_string())
    }

    fn real(&mut self) -> Result<f64, LogicError> {
        self.skip_ws();
        let column = self.column();
        let literal = self.take_while(|c| c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E' | '+' | '-'));
        if literal.is_empty() {
            return Err(self.syntax("expected real number"));
        }
        let value: f64 = literal.parse().map_err(|_| LogicError::Syntax {
            line: self.line,
            column,
            message: format!("malformed number '{literal}'"),
        })?;
        if !value.is_finite() {
            return Err(LogicError::NonFiniteWeight { line: self.line, column, literal: literal.to_string() });
        }
        Ok(value)
    }

    fn weight(&mut self) -> Result<Weight, LogicError> {
        self.skip_ws();
        let rest = self.rest();
        if rest.starts_with("learn") {
            self.pos += "learn".len();
            self.expect("(")?;
            let init = self.real()?;
            self.expect(")")?;
            return Ok(Weight::learnable(init));
        }
        if rest.starts_with("hard") {
            self.pos += "hard".len();
            return Ok(Weight::Hard);
        }
        match rest.chars().next() {
            Some(c) if c.is_ascii_digit() || matches!(c, '.' | '+' | '-') => Ok(Weight::Fixed(self.real()?)),
            Some(_) => {
                let column = self.column();
                let token = rest.split(|c: char| c == ':' || c.is_whitespace()).next().unwrap_or(rest);
                Err(LogicError::UnknownWeight { line: self.line, column, token: token.to_string() })
            }
            None => Err(self.syntax("expected weight")),
        }
    }

    fn body(&mut self) -> Result<RuleBody, LogicError> {
        self.skip_ws();
        let column = self.column();
        let keyword = self.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
        let body = match keyword {
            "vote" => {
                self.expect("(")?;
                let polarity = if self.eat("+") {
                    Polarity::Positive
                } else if self.eat("-") {
                    Polarity::Negative
                } else {
                    return Err(self.syntax("expected '+' or '-'"));
                };
                let field = self.ident()?;
                RuleBody::Vote { field, polarity }
            }
            "at_least_one" => {
                self.expect("(")?;
                RuleBody::AtLeastOne { group_field: self.ident()? }
            }
            "agree" => {
                self.expect("(")?;
                RuleBody::Agree { pair_field: self.ident()? }
            }
            other => {
                return Err(LogicError::Syntax {
                    line: self.line,
                    column,
                    message: format!("unknown rule body '{other}'"),
                })
            }
        };
        self.expect(")")?;
        Ok(body)
    }

    fn rule(&mut self) -> Result<Rule, LogicError> {
        let weight = self.weight()?;
        self.expect(":")?;
        let body = self.body()?;
        self.skip_ws();
        if !self.rest().is_empty() {
            return Err(self.syntax("unexpected trailing input"));
        }
        Ok(Rule::new(weight, body))
    }
}

/// Parse a single rule line. The rule receives its body's default name.
pub fn parse_rule(text: &str) -> Result<Rule, LogicError> {
    Cursor::new(text, 1).rule()
}

/// Render a rule in the grammar accepted by [`parse_rule`].
///
/// Learnable weights render their initial value, not the refined one.
pub fn render_rule(rule: &Rule) -> String {
    let weight = match rule.weight {
        Weight::Fixed(v) => format!("{v:?}"),
        Weight::Learnable { init, .. } => format!("learn({init:?})"),
        Weight::Hard => "hard".to_string(),
    };
    format!("{weight}: {}", rule.body)
}

/// Parse a whole program file: one rule per line, `#` comments, and
/// `# tag:` / `# name:` annotations.
pub fn parse_rules(text: &str) -> Result<Vec<Rule>, LogicError> {
    let mut rules = Vec::new();
    let mut tag: Option<String> = None;
    let mut pending_name: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = raw.trim_start();
        if let Some(comment) = trimmed.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(t) = comment.strip_prefix("tag:") {
                let t = t.trim();
                tag = (!t.is_empty()).then(|| t.to_string());
            } else if let Some(n) = comment.strip_prefix("name:") {
                pending_name = Some(n.trim().to_string());
            }
            continue;
        }
        let content = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        };
        if content.trim().is_empty() {
            continue;
        }
        let mut rule = Cursor::new(content, line_no).rule()?;
        if let Some(name) = pending_name.take() {
            rule.name = name;
        }
        rule.tag = tag.clone();
        rules.push(rule);
    }
    Ok(rules)
}

/// Render a program so that [`parse_rules`] restores names and tags.
pub fn render_program(rules: &[Rule]) -> String {
    let mut out = String::new();
    let mut tag: Option<&str> = None;
    for rule in rules {
        if rule.tag.as_deref() != tag {
            tag = rule.tag.as_deref();
            out.push_str(&format!("# tag: {}\n", tag.unwrap_or("")));
        }
        if rule.name != rule.body.default_name() {
            out.push_str(&format!("# name: {}\n", rule.name));
        }
        out.push_str(&render_rule(rule));
        out.push('\n');
    }
    out
}

/// A rule list whose field references have been checked against a schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    rules: Vec<Rule>,
    schema: Schema,
}

pub fn validate_program(rules: Vec<Rule>, schema: &Schema) -> Result<Program, LogicError> {
    let mut seen = HashSet::new();
    for rule in &rules {
        if !seen.insert(rule.name.as_str()) {
            return Err(LogicError::DuplicateName(rule.name.clone()));
        }
        let field = rule.body.field();
        let found = schema.get(field).ok_or_else(|| LogicError::UnknownField {
            rule: rule.name.clone(),
            field: field.to_string(),
        })?;
        let expected = rule.body.required_type();
        if found != expected {
            return Err(LogicError::FieldTypeMismatch {
                rule: rule.name.clone(),
                field: field.to_string(),
                expected,
                found,
            });
        }
    }
    Ok(Program { rules, schema: schema.clone() })
}

impl Program {
    pub fn empty(schema: &Schema) -> Self {
        Program { rules: Vec::new(), schema: schema.clone() }
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Indices of rules with learnable weights, in program order.
    pub fn learnable_indices(&self) -> Vec<usize> {
        self.rules.iter().enumerate().filter(|(_, r)| r.weight.is_learnable()).map(|(i, _)| i).collect()
    }

    /// Set the current value of a learnable weight.
    pub fn set_learned_weight(&mut self, index: usize, value: f64) -> Result<(), LogicError> {
        let rule = self.rules.get_mut(index).ok_or_else(|| LogicError::NoSuchRule(index.to_string()))?;
        match &mut rule.weight {
            Weight::Learnable { current, .. } => {
                *current = value;
                Ok(())
            }
            _ => Err(LogicError::NotLearnable(rule.name.clone())),
        }
    }

    /// Current values of learnable weights keyed by rule name.
    pub fn learned_weights(&self) -> BTreeMap<String, f64> {
        self.rules
            .iter()
            .filter_map(|r| match r.weight {
                Weight::Learnable { current, .. } => Some((r.name.clone(), current)),
                _ => None,
            })
            .collect()
    }

    /// Sub-program of rules whose tag is in `tags`; untagged rules are always kept.
    pub fn with_tags(&self, tags: &[&str]) -> Program {
        let rules = self
            .rules
            .iter()
            .filter(|r| r.tag.as_deref().is_none_or(|t| tags.contains(&t)))
            .cloned()
            .collect();
        Program { rules, schema: self.schema.clone() }
    }

    pub fn tags(&self) -> Vec<&str> {
        let mut tags: Vec<&str> = Vec::new();
        for t in self.rules.iter().filter_map(|r| r.tag.as_deref()) {
            if !tags.contains(&t) {
                tags.push(t);
            }
        }
        tags
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vote(field: &str, polarity: Polarity) -> RuleBody {
        RuleBody::Vote { field: field.into(), polarity }
    }

    #[test]
    fn parses_fixed_vote() {
        let r = parse_rule("2.1972: vote(+kb_match)").unwrap();
        assert_eq!(r.weight, Weight::Fixed(2.1972));
        assert_eq!(r.body, vote("kb_match", Polarity::Positive));
    }

    #[test]
    fn parses_learnable_negative_vote() {
        let r = parse_rule("learn(1.0): vote(-lf_table_noise)").unwrap();
        assert_eq!(r.weight, Weight::Learnable { init: 1.0, current: 1.0 });
        assert_eq!(r.body, vote("lf_table_noise", Polarity::Negative));
    }

    #[test]
    fn parses_hard_at_least_one() {
        let r = parse_rule("hard: at_least_one(group_id)").unwrap();
        assert_eq!(r.weight, Weight::Hard);
        assert_eq!(r.body, RuleBody::AtLeastOne { group_field: "group_id".into() });
        assert_eq!(render_rule(&r), "hard: at_least_one(group_id)");
    }

    #[test]
    fn renders_fixed_vote() {
        let r = parse_rule("2.1972: vote(+kb_match)").unwrap();
        assert_eq!(render_rule(&r), "2.1972: vote(+kb_match)");
    }

    #[test]
    fn renders_init_not_current() {
        let mut r = parse_rule("learn(1.0): vote(-lf_table_noise)").unwrap();
        r.weight = Weight::Learnable { init: 1.0, current: 1.7 };
        assert_eq!(render_rule(&r), "learn(1.0): vote(-lf_table_noise)");
    }

    #[test]
    fn whitespace_is_tolerated() {
        let r = parse_rule("  -0.5 :  agree( same_entity )  ").unwrap();
        assert_eq!(r.weight, Weight::Fixed(-0.5));
        assert_eq!(r.body, RuleBody::Agree { pair_field: "same_entity".into() });
    }

    #[test]
    fn syntax_errors_carry_location() {
        match parse_rule("1.0: vote(kb_match)") {
            Err(LogicError::Syntax { line: 1, column: 11, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match parse_rule("1.0 vote(+a)") {
            Err(LogicError::Syntax { column: 5, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_rule("1.0: vote(+a) extra"), Err(LogicError::Syntax { .. })));
        assert!(matches!(parse_rule("1.0: exists(a)"), Err(LogicError::Syntax { .. })));
    }

    #[test]
    fn weight_errors() {
        assert!(matches!(
            parse_rule("soft: vote(+a)"),
            Err(LogicError::UnknownWeight { token, column: 1, .. }) if token == "soft"
        ));
        assert!(matches!(parse_rule("1e400: vote(+a)"), Err(LogicError::NonFiniteWeight { .. })));
        assert!(matches!(parse_rule("learn(1e999): vote(+a)"), Err(LogicError::NonFiniteWeight { .. })));
    }

    #[test]
    fn program_annotations_and_comments() {
        let text = "# header\n# tag: DS\n# name: ds\nlearn(1.0): vote(+kb_match) # trailing\n\n# tag: JI\nhard: at_least_one(g)\n";
        let rules = parse_rules(text).unwrap();
        assert_eq!(rules.len(), 2);
        assert_eq!(rules[0].name, "ds");
        assert_eq!(rules[0].tag.as_deref(), Some("DS"));
        assert_eq!(rules[1].name, "at_least_one_g");
        assert_eq!(rules[1].tag.as_deref(), Some("JI"));
        assert_eq!(parse_rules(&render_program(&rules)).unwrap(), rules);
    }

    #[test]
    fn program_errors_report_line() {
        match parse_rules("1.0: vote(+a)\n\nbad line") {
            Err(LogicError::UnknownWeight { line: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    fn schema() -> Schema {
        Schema::new()
            .with_field("kb_match", FieldType::Bool)
            .with_field("group_id", FieldType::Key)
            .with_field("score", FieldType::Real)
    }

    #[test]
    fn validate_accepts_declared_fields() {
        let rules = parse_rules("2.0: vote(+kb_match)\nhard: at_least_one(group_id)").unwrap();
        let p = validate_program(rules, &schema()).unwrap();
        assert_eq!(p.len(), 2);
    }

    #[test]
    fn validate_rejects_unknown_field() {
        let rules = vec![parse_rule("1.0: vote(+missing_field)").unwrap()];
        let err = validate_program(rules, &schema()).unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");
    }

    #[test]
    fn validate_rejects_duplicate_names() {
        let rules = vec![
            parse_rule("1.0: vote(+kb_match)").unwrap().named("ds"),
            parse_rule("2.0: vote(-kb_match)").unwrap().named("ds"),
        ];
        let err = validate_program(rules, &schema()).unwrap_err();
        assert!(err.to_string().contains("duplicate name"), "{err}");
    }

    #[test]
    fn validate_rejects_type_mismatch() {
        let rules = vec![parse_rule("1.0: vote(+score)").unwrap()];
        assert!(matches!(
            validate_program(rules, &schema()),
            Err(LogicError::FieldTypeMismatch { expected: FieldType::Bool, found: FieldType::Real, .. })
        ));
        let rules = vec![parse_rule("1.0: agree(group_id)").unwrap()];
        assert!(matches!(validate_program(rules, &schema()), Err(LogicError::FieldTypeMismatch { .. })));
    }

    #[test]
    fn learnable_weights_mutate_only_current() {
        let rules = parse_rules("learn(0.5): vote(+kb_match)\n1.0: vote(-kb_match)").unwrap();
        let mut p = validate_program(rules, &schema()).unwrap();
        assert_eq!(p.learnable_indices(), vec![0]);
        p.set_learned_weight(0, 1.25).unwrap();
        assert_eq!(p.rules()[0].weight, Weight::Learnable { init: 0.5, current: 1.25 });
        assert!(matches!(p.set_learned_weight(1, 0.0), Err(LogicError::NotLearnable(_))));
    }

    #[test]
    fn tag_subsets_keep_untagged() {
        let text = "1.0: vote(+kb_match)\n# tag: DS\n2.0: vote(-kb_match)\n# tag: JI\nhard: at_least_one(group_id)";
        let p = validate_program(parse_rules(text).unwrap(), &schema()).unwrap();
        assert_eq!(p.tags(), vec!["DS", "JI"]);
        assert_eq!(p.with_tags(&["DS"]).len(), 2);
        assert_eq!(p.with_tags(&[]).len(), 1);
    }

    fn arb_ident() -> impl Strategy<Value = String> {
        "[a-z_][a-z0-9_]{0,10}"
    }

    fn arb_weight() -> impl Strategy<Value = Weight> {
        prop_oneof![
            (-1e6f64..1e6).prop_map(Weight::Fixed),
            (-1e6f64..1e6).prop_map(Weight::learnable),
            Just(Weight::Hard),
        ]
    }

    fn arb_body() -> impl Strategy<Value = RuleBody> {
        prop_oneof![
            (arb_ident(), any::<bool>()).prop_map(|(field, pos)| RuleBody::Vote {
                field,
                polarity: if pos { Polarity::Positive } else { Polarity::Negative },
            }),
            arb_ident().prop_map(|group_field| RuleBody::AtLeastOne { group_field }),
            arb_ident().prop_map(|pair_field| RuleBody::Agree { pair_field }),
        ]
    }

    proptest! {
        #[test]
        fn parse_render_identity(weight in arb_weight(), body in arb_body()) {
            let rule = Rule::new(weight, body);
            prop_assert_eq!(parse_rule(&render_rule(&rule)).unwrap(), rule);
        }
    }
}
