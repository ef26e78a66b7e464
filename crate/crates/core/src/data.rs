//! Instances, datasets and the JSONL dataset format.
//!
//! The first line of a dataset file is a header
//! `{"d": 2, "fields": {"kb_match": "bool", "group_id": "key"}}`; each
//! following line is one instance
//! `{"id": "a", "x": [0.1, 0.2], "fields": {"kb_match": true}, "gold": 1}`.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::json::to_canonical_string;
use crate::logic::{FieldType, Schema};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: expected {expected} features, found {found}")]
    Dimension { line: usize, expected: usize, found: usize },
    #[error("line {line}: duplicate id '{id}'")]
    DuplicateId { line: usize, id: String },
    #[error("split fraction {0} is outside (0, 1)")]
    InvalidFraction(f64),
    #[error("cannot split an empty dataset")]
    Empty,
    #[error("unknown field '{0}'")]
    UnknownField(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Bool(bool),
    Real(f64),
    Key(String),
    /// Ids of linked instances.
    Pairs(Vec<String>),
}

impl FieldValue {
    fn to_json(&self) -> Value {
        match self {
            FieldValue::Bool(b) => Value::Bool(*b),
            FieldValue::Real(r) => serde_json::json!(r),
            FieldValue::Key(k) => Value::String(k.clone()),
            FieldValue::Pairs(ids) => Value::Array(ids.iter().cloned().map(Value::String).collect()),
        }
    }

    fn from_json(ty: FieldType, value: &Value) -> Option<FieldValue> {
        match (ty, value) {
            (FieldType::Bool, Value::Bool(b)) => Some(FieldValue::Bool(*b)),
            (FieldType::Real, Value::Number(n)) => n.as_f64().filter(|v| v.is_finite()).map(FieldValue::Real),
            (FieldType::Key, Value::String(s)) => Some(FieldValue::Key(s.clone())),
            (FieldType::Key, Value::Number(n)) => Some(FieldValue::Key(n.to_string())),
            (FieldType::Pairs, Value::Array(items)) => items
                .iter()
                .map(|v| v.as_str().map(str::to_string))
                .collect::<Option<Vec<_>>>()
                .map(FieldValue::Pairs),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: String,
    pub features: Vec<f64>,
    /// Declared field values; undeclared fields live in `extra`.
    pub fields: BTreeMap<String, FieldValue>,
    pub extra: BTreeMap<String, Value>,
    /// Gold label, for evaluation only.
    pub gold: Option<u8>,
}

impl Instance {
    pub fn new(id: impl Into<String>, features: Vec<f64>) -> Self {
        Instance { id: id.into(), features, fields: BTreeMap::new(), extra: BTreeMap::new(), gold: None }
    }

    pub fn with_field(mut self, name: impl Into<String>, value: FieldValue) -> Self {
        self.fields.insert(name.into(), value);
        self
    }

    pub fn with_gold(mut self, gold: u8) -> Self {
        self.gold = Some(gold);
        self
    }

    /// Boolean field value; absent fields read as false.
    pub fn flag(&self, name: &str) -> bool {
        matches!(self.fields.get(name), Some(FieldValue::Bool(true)))
    }

    pub fn key(&self, name: &str) -> Option<&str> {
        match self.fields.get(name) {
            Some(FieldValue::Key(k)) => Some(k),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    d: usize,
    schema: Schema,
    instances: Vec<Instance>,
    /// key field -> key value -> instance indices (ascending)
    groups: BTreeMap<String, BTreeMap<String, Vec<usize>>>,
    /// pair field -> sorted, de-duplicated index pairs with `a < b`
    pairs: BTreeMap<String, Vec<(usize, usize)>>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    d: usize,
    #[serde(default)]
    fields: Schema,
}

#[derive(Deserialize)]
struct RawInstance {
    id: Value,
    x: Vec<f64>,
    #[serde(default)]
    fields: serde_json::Map<String, Value>,
    #[serde(default)]
    gold: Option<u8>,
}

impl Dataset {
    /// Build a dataset and its group/pair indexes. `lines`, when given, maps
    /// each instance to its source line for error reporting.
    fn build(d: usize, schema: Schema, instances: Vec<Instance>, lines: Option<&[usize]>) -> Result<Self, DataError> {
        let line_of = |i: usize| lines.map_or(i + 1, |l| l[i]);
        let mut index_of: HashMap<&str, usize> = HashMap::with_capacity(instances.len());
        for (i, inst) in instances.iter().enumerate() {
            if inst.features.len() != d {
                return Err(DataError::Dimension { line: line_of(i), expected: d, found: inst.features.len() });
            }
            if inst.features.iter().any(|v| !v.is_finite()) {
                return Err(DataError::Malformed { line: line_of(i), message: "non-finite feature".into() });
            }
            if let Some(g) = inst.gold {
                if g > 1 {
                    return Err(DataError::Malformed { line: line_of(i), message: format!("gold label {g} not in {{0,1}}") });
                }
            }
            if index_of.insert(inst.id.as_str(), i).is_some() {
                return Err(DataError::DuplicateId { line: line_of(i), id: inst.id.clone() });
            }
        }

        let mut groups: BTreeMap<String, BTreeMap<String, Vec<usize>>> = BTreeMap::new();
        let mut pairs: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
        for (name, ty) in schema.iter() {
            match ty {
                FieldType::Key => {
                    let mut by_key: BTreeMap<String, Vec<usize>> = BTreeMap::new();
                    for (i, inst) in instances.iter().enumerate() {
                        if let Some(k) = inst.key(name) {
                            by_key.entry(k.to_string()).or_default().push(i);
                        }
                    }
                    groups.insert(name.to_string(), by_key);
                }
                FieldType::Pairs => {
                    let mut list = Vec::new();
                    for (i, inst) in instances.iter().enumerate() {
                        if let Some(FieldValue::Pairs(ids)) = inst.fields.get(name) {
                            for other in ids {
                                let j = *index_of.get(other.as_str()).ok_or_else(|| DataError::Malformed {
                                    line: line_of(i),
                                    message: format!("field '{name}' links unknown id '{other}'"),
                                })?;
                                if i == j {
                                    return Err(DataError::Malformed {
                                        line: line_of(i),
                                        message: format!("field '{name}' links an instance to itself"),
                                    });
                                }
                                list.push((i.min(j), i.max(j)));
                            }
                        }
                    }
                    list.sort_unstable();
                    list.dedup();
                    pairs.insert(name.to_string(), list);
                }
                FieldType::Bool | FieldType::Real => {}
            }
        }
        Ok(Dataset { d, schema, instances, groups, pairs })
    }

    pub fn new(d: usize, schema: Schema, instances: Vec<Instance>) -> Result<Self, DataError> {
        Self::build(d, schema, instances, None)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Groups for a key field, keyed by group value.
    pub fn groups(&self, field: &str) -> Option<&BTreeMap<String, Vec<usize>>> {
        self.groups.get(field)
    }

    /// Linked index pairs for a pair-list field.
    pub fn pairs(&self, field: &str) -> Option<&[(usize, usize)]> {
        self.pairs.get(field).map(Vec::as_slice)
    }

    pub fn gold(&self) -> Option<Vec<u8>> {
        self.instances.iter().map(|i| i.gold).collect()
    }

    /// Parse a dataset from JSONL. An empty input yields an empty dataset.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, DataError> {
        let mut header: Option<Header> = None;
        let mut instances = Vec::new();
        let mut lines = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |e: serde_json::Error| DataError::Malformed { line: line_no, message: e.to_string() };
            let Some(h) = &header else {
                header = Some(serde_json::from_str(&line).map_err(malformed)?);
                continue;
            };
            let raw: RawInstance = serde_json::from_str(&line).map_err(malformed)?;
            let id = match raw.id {
                Value::String(s) => s,
                Value::Number(n) => n.to_string(),
                other => {
                    return Err(DataError::Malformed { line: line_no, message: format!("invalid id {other}") })
                }
            };
            if raw.x.len() != h.d {
                return Err(DataError::Dimension { line: line_no, expected: h.d, found: raw.x.len() });
            }
            let mut inst = Instance::new(id, raw.x);
            inst.gold = raw.gold;
            for (name, value) in raw.fields {
                match h.fields.get(&name) {
                    Some(ty) => {
                        let v = FieldValue::from_json(ty, &value).ok_or_else(|| DataError::Malformed {
                            line: line_no,
                            message: format!("field '{name}' is not a valid {ty} value"),
                        })?;
                        inst.fields.insert(name, v);
                    }
                    None => {
                        inst.extra.insert(name, value);
                    }
                }
            }
            instances.push(inst);
            lines.push(line_no);
        }
        match header {
            Some(h) => Self::build(h.d, h.fields, instances, Some(&lines)),
            None => Ok(Dataset::new(0, Schema::new(), Vec::new()).expect("empty dataset is valid")),
        }
    }

    /// Write the dataset as canonical JSONL.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), DataError> {
        let header = Header { d: self.d, fields: self.schema.clone() };
        writeln!(out, "{}", to_canonical_string(&header).map_err(io::Error::other)?)?;
        for inst in &self.instances {
            let mut fields = serde_json::Map::new();
            for (k, v) in &inst.extra {
                fields.insert(k.clone(), v.clone());
            }
            for (k, v) in &inst.fields {
                fields.insert(k.clone(), v.to_json());
            }
            let mut obj = serde_json::Map::new();
            obj.insert("id".into(), Value::String(inst.id.clone()));
            obj.insert("x".into(), serde_json::json!(inst.features));
            obj.insert("fields".into(), Value::Object(fields));
            if let Some(g) = inst.gold {
                obj.insert("gold".into(), serde_json::json!(g));
            }
            writeln!(out, "{}", to_canonical_string(&obj).map_err(io::Error::other)?)?;
        }
        Ok(())
    }

    /// Same instances with a restricted subset, re-indexed.
    fn subset(&self, indices: &[usize]) -> Dataset {
        let instances = indices.iter().map(|&i| self.instances[i].clone()).collect();
        Dataset::new(self.d, self.schema.clone(), instances).expect("subset of a valid dataset stays valid")
    }

    /// Connected components of the group/pair coupling structure.
    fn coupled_units(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let union = |a: usize, b: usize, parent: &mut Vec<usize>| {
            let (ra, rb) = (find(parent, a), find(parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        };
        for by_key in self.groups.values() {
            for members in by_key.values() {
                for w in members.windows(2) {
                    union(w[0], w[1], &mut parent);
                }
            }
        }
        for list in self.pairs.values() {
            for &(a, b) in list {
                union(a, b, &mut parent);
            }
        }
        let mut units: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            let r = find(&mut parent, i);
            units.entry(r).or_default().push(i);
        }
        units.into_values().collect()
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let file = File::open(path)?;
    Dataset::from_reader(BufReader::new(file))
}

/// Split into `(first, second)` with roughly `fraction` of the instances in
/// `first`. Instances sharing a group or linked by a pair field always land
/// in the same split. Deterministic for a fixed seed.
pub fn split_dataset(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DataError::InvalidFraction(fraction));
    }
    if ds.is_empty() {
        return Err(DataError::Empty);
    }
    let mut units = ds.coupled_units();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    units.shuffle(&mut rng);
    let target = (fraction * ds.len() as f64).round() as usize;
    let mut first = Vec::new();
    let mut second = Vec::new();
    for unit in units {
        if first.len() + unit.len() <= target {
            first.extend(unit);
        } else {
            second.extend(unit);
        }
    }
    first.sort_unstable();
    second.sort_unstable();
    Ok((ds.subset(&first), ds.subset(&second)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset, DataError> {
        Dataset::from_reader(text.as_bytes())
    }

    const HEADER: &str = r#"{"d": 2, "fields": {"kb_match": "bool", "group_id": "key", "same": "pairs"}}"#;

    #[test]
    fn loads_three_instances() {
        let text = format!(
            "{HEADER}\n{}\n{}\n{}\n",
            r#"{"id": "a", "x": [0.0, 1.0], "fields": {"kb_match": true, "group_id": "g7"}, "gold": 1}"#,
            r#"{"id": "b", "x": [1.0, 1.0], "fields": {"group_id": "g7", "note": "kept"}}"#,
            r#"{"id": "c", "x": [2.0, 0.5], "fields": {"same": ["a"]}}"#,
        );
        let ds = parse(&text).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.groups("group_id").unwrap()["g7"], vec![0, 1]);
        assert_eq!(ds.pairs("same").unwrap(), &[(0, 2)]);
        assert!(ds.instances()[0].flag("kb_match"));
        assert!(!ds.instances()[1].flag("kb_match"));
        assert_eq!(ds.instances()[1].extra["note"], Value::String("kept".into()));
        assert_eq!(ds.instances()[0].gold, Some(1));
        assert_eq!(ds.gold(), None);
    }

    #[test]
    fn dimension_error_reports_line() {
        let text = format!("{HEADER}\n{}\n{}\n", r#"{"id":"a","x":[0,1]}"#, r#"{"id":"b","x":[0,1,2]}"#);
        match parse(&text) {
            Err(DataError::Dimension { line: 3, expected: 2, found: 3 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_and_duplicate_lines() {
        let text = format!("{HEADER}\n{{not json\n");
        assert!(matches!(parse(&text), Err(DataError::Malformed { line: 2, .. })));
        let text = format!("{HEADER}\n{}\n\n{}\n", r#"{"id":"a","x":[0,1]}"#, r#"{"id":"a","x":[0,1]}"#);
        assert!(matches!(parse(&text), Err(DataError::DuplicateId { line: 4, .. })));
        let text = format!("{HEADER}\n{}\n", r#"{"id":"a","x":[0,1],"fields":{"kb_match":3}}"#);
        assert!(matches!(parse(&text), Err(DataError::Malformed { line: 2, .. })));
        let text = format!("{HEADER}\n{}\n", r#"{"id":"a","x":[0,1],"fields":{"same":["zz"]}}"#);
        assert!(matches!(parse(&text), Err(DataError::Malformed { line: 2, .. })));
        let text = format!("{HEADER}\n{}\n", r#"{"id":"a","x":[0,1],"gold":2}"#);
        assert!(matches!(parse(&text), Err(DataError::Malformed { line: 2, .. })));
    }

    #[test]
    fn empty_input_is_empty_dataset() {
        let ds = parse("").unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn write_then_read_preserves_dataset() {
        let text = format!(
            "{HEADER}\n{}\n{}\n",
            r#"{"id": "a", "x": [0.1, 1.0], "fields": {"kb_match": true, "group_id": "g", "extra": [1]}, "gold": 0}"#,
            r#"{"id": "b", "x": [1.0, -3.25], "fields": {"same": ["a"], "group_id": "g"}}"#,
        );
        let ds = parse(&text).unwrap();
        let mut buf = Vec::new();
        ds.write_jsonl(&mut buf).unwrap();
        let back = Dataset::from_reader(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
    }

    fn singletons(n: usize) -> Dataset {
        let schema = Schema::new().with_field("group_id", FieldType::Key);
        let instances = (0..n).map(|i| Instance::new(format!("i{i}"), vec![i as f64])).collect();
        Dataset::new(1, schema, instances).unwrap()
    }

    #[test]
    fn split_singletons_half() {
        let ds = singletons(10);
        let (a, b) = split_dataset(&ds, 0.5, 1).unwrap();
        assert_eq!((a.len(), b.len()), (5, 5));
        let ids: std::collections::HashSet<_> = a.instances().iter().chain(b.instances()).map(|i| &i.id).collect();
        assert_eq!(ids.len(), 10);
        let (a2, b2) = split_dataset(&ds, 0.5, 1).unwrap();
        assert_eq!((a, b), (a2, b2));
    }

    #[test]
    fn split_never_divides_a_group() {
        let schema = Schema::new().with_field("group_id", FieldType::Key);
        let mut instances: Vec<Instance> = (0..4)
            .map(|i| Instance::new(format!("g{i}"), vec![0.0]).with_field("group_id", FieldValue::Key("G".into())))
            .collect();
        instances.extend((0..6).map(|i| Instance::new(format!("s{i}"), vec![1.0])));
        let ds = Dataset::new(1, schema, instances).unwrap();
        for seed in 0..50 {
            let (a, b) = split_dataset(&ds, 0.4, seed).unwrap();
            let in_a = a.instances().iter().filter(|i| i.id.starts_with('g')).count();
            let in_b = b.instances().iter().filter(|i| i.id.starts_with('g')).count();
            assert!(in_a == 0 || in_b == 0, "seed {seed} divided the group");
            assert_eq!(a.len() + b.len(), 10);
        }
    }

    #[test]
    fn split_rejects_bad_input() {
        let ds = singletons(3);
        assert!(matches!(split_dataset(&ds, 0.0, 1), Err(DataError::InvalidFraction(_))));
        assert!(matches!(split_dataset(&ds, 1.0, 1), Err(DataError::InvalidFraction(_))));
        assert!(matches!(split_dataset(&singletons(0), 0.5, 1), Err(DataError::Empty)));
    }
}
