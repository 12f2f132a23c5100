//! Problem instances, matchings and cost evaluation.

use std::collections::BTreeMap;
use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("server index {index} out of range (n = {n})")]
    ServerOutOfRange { index: usize, n: usize },
    #[error("request index {index} out of range (n = {n})")]
    RequestOutOfRange { index: usize, n: usize },
    #[error("server {0} appears twice in matching")]
    DuplicateServer(usize),
    #[error("request {0} appears twice in matching")]
    DuplicateRequest(usize),
    #[error("operation requires a line-metric instance")]
    NotLine,
}

/// One reason an external instance record was rejected.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Violation {
    #[error("size mismatch: {servers} servers vs {requests} requests")]
    SizeMismatch { servers: usize, requests: usize },
    #[error("instance must contain at least one server and one request")]
    Empty,
    #[error("t must exceed 1 (got {0})")]
    TNotAboveOne(Scalar),
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("missing field {0:?}")]
    MissingField(&'static str),
    #[error("distance table row {row} has {len} entries, expected {n}")]
    RaggedTable { row: usize, len: usize, n: usize },
    #[error("distance table entry ({0},{1}) is negative")]
    NegativeDistance(usize, usize),
    #[error("distance table diagonal entry {0} is nonzero")]
    NonzeroDiagonal(usize),
    #[error("distance table is asymmetric at ({0},{1})")]
    Asymmetric(usize, usize),
    #[error("triangle inequality fails for ({0},{1},{2})")]
    Triangle(usize, usize, usize),
    #[error("request {index} is not a valid point index ({value})")]
    BadRequestIndex { index: usize, value: Scalar },
}

/// Every invariant an external record violated, in discovery order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceError {
    pub violations: Vec<Violation>,
}

impl fmt::Display for InstanceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid instance: ")?;
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for InstanceError {}

/// Where servers and requests live.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Metric {
    /// Points on the real line; `d(s, r) = |s - r|`.
    Line { servers: Vec<Scalar>, requests: Vec<Scalar> },
    /// A finite metric over the `n` server locations; request `j` sits at point `requests[j]`.
    Table { table: Vec<Vec<Scalar>>, requests: Vec<usize> },
}

/// A validated problem input: equal numbers of servers and requests plus the parameter `t > 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    metric: Metric,
    t: Scalar,
}

/// The on-disk JSON record, before validation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawInstance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<Scalar>,
    #[serde(default = "default_metric")]
    pub metric: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub servers: Option<Vec<Scalar>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_table: Option<Vec<Vec<Scalar>>>,
    #[serde(default)]
    pub requests: Vec<Scalar>,
}

fn default_metric() -> String {
    "line".to_string()
}

pub fn default_t() -> Scalar {
    Scalar::from_integer(3)
}

/// Checks every invariant of a raw record and reports all violations at once.
pub fn validate_instance(raw: &RawInstance) -> Result<Instance, InstanceError> {
    let mut violations = Vec::new();
    let t = raw.t.clone().unwrap_or_else(default_t);
    if t <= Scalar::one() {
        violations.push(Violation::TNotAboveOne(t.clone()));
    }
    let metric = match raw.metric.as_str() {
        "line" => match &raw.servers {
            None => {
                violations.push(Violation::MissingField("servers"));
                None
            }
            Some(servers) => {
                check_sizes(servers.len(), raw.requests.len(), &mut violations);
                Some(Metric::Line { servers: servers.clone(), requests: raw.requests.clone() })
            }
        },
        "table" | "general" => match &raw.distance_table {
            None => {
                violations.push(Violation::MissingField("distance_table"));
                None
            }
            Some(table) => {
                let n = table.len();
                check_sizes(n, raw.requests.len(), &mut violations);
                check_table(table, &mut violations);
                let mut requests = Vec::with_capacity(raw.requests.len());
                for (index, value) in raw.requests.iter().enumerate() {
                    match value.to_string().parse::<usize>() {
                        Ok(p) if p < n => requests.push(p),
                        _ => violations.push(Violation::BadRequestIndex { index, value: value.clone() }),
                    }
                }
                Some(Metric::Table { table: table.clone(), requests })
            }
        },
        other => {
            violations.push(Violation::UnknownMetric(other.to_string()));
            None
        }
    };
    match metric {
        Some(metric) if violations.is_empty() => Ok(Instance { metric, t }),
        _ => Err(InstanceError { violations }),
    }
}

fn check_sizes(servers: usize, requests: usize, violations: &mut Vec<Violation>) {
    if servers != requests {
        violations.push(Violation::SizeMismatch { servers, requests });
    } else if servers == 0 {
        violations.push(Violation::Empty);
    }
}

fn check_table(table: &[Vec<Scalar>], violations: &mut Vec<Violation>) {
    let n = table.len();
    let mut square = true;
    for (row, entries) in table.iter().enumerate() {
        if entries.len() != n {
            violations.push(Violation::RaggedTable { row, len: entries.len(), n });
            square = false;
        }
    }
    if !square {
        return;
    }
    for i in 0..n {
        if !table[i][i].is_zero() {
            violations.push(Violation::NonzeroDiagonal(i));
        }
        for j in 0..n {
            if table[i][j].is_negative() {
                violations.push(Violation::NegativeDistance(i, j));
            }
            if j > i && table[i][j] != table[j][i] {
                violations.push(Violation::Asymmetric(i, j));
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if table[i][k] > &table[i][j] + &table[j][k] {
                    violations.push(Violation::Triangle(i, j, k));
                }
            }
        }
    }
}

impl Instance {
    /// A line instance with the given positions; validated.
    pub fn line(servers: Vec<Scalar>, requests: Vec<Scalar>, t: Scalar) -> Result<Self, InstanceError> {
        validate_instance(&RawInstance {
            t: Some(t),
            metric: "line".into(),
            servers: Some(servers),
            distance_table: None,
            requests,
        })
    }

    /// Parses integer / `"p/q"` literals; handy in tests and examples.
    pub fn line_from_strs(servers: &[&str], requests: &[&str], t: &str) -> Result<Self, InstanceError> {
        let parse = |v: &[&str]| -> Result<Vec<Scalar>, InstanceError> {
            v.iter()
                .enumerate()
                .map(|(index, s)| {
                    s.parse().map_err(|_| InstanceError {
                        violations: vec![Violation::BadRequestIndex { index, value: Scalar::zero() }],
                    })
                })
                .collect()
        };
        let t = t.parse().map_err(|_| InstanceError { violations: vec![Violation::MissingField("t")] })?;
        Instance::line(parse(servers)?, parse(requests)?, t)
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let raw: RawInstance = serde_json::from_str(text)?;
        Ok(validate_instance(&raw)?)
    }

    pub fn to_raw(&self) -> RawInstance {
        match &self.metric {
            Metric::Line { servers, requests } => RawInstance {
                t: Some(self.t.clone()),
                metric: "line".into(),
                servers: Some(servers.clone()),
                distance_table: None,
                requests: requests.clone(),
            },
            Metric::Table { table, requests } => RawInstance {
                t: Some(self.t.clone()),
                metric: "table".into(),
                servers: None,
                distance_table: Some(table.clone()),
                requests: requests.iter().map(|&p| Scalar::from_integer(p as i64)).collect(),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_raw()).expect("instance serializes")
    }

    /// Same points, different `t`.
    pub fn with_t(&self, t: Scalar) -> Result<Self, InstanceError> {
        let mut raw = self.to_raw();
        raw.t = Some(t);
        validate_instance(&raw)
    }

    pub fn n(&self) -> usize {
        match &self.metric {
            Metric::Line { servers, .. } => servers.len(),
            Metric::Table { table, .. } => table.len(),
        }
    }

    pub fn t(&self) -> &Scalar {
        &self.t
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn is_line(&self) -> bool {
        matches!(self.metric, Metric::Line { .. })
    }

    /// `(servers, requests)` positions of a line instance.
    pub fn line_points(&self) -> Result<(&[Scalar], &[Scalar]), ModelError> {
        match &self.metric {
            Metric::Line { servers, requests } => Ok((servers, requests)),
            Metric::Table { .. } => Err(ModelError::NotLine),
        }
    }

    fn check_indices(&self, s: usize, r: usize) -> Result<(), ModelError> {
        let n = self.n();
        if s >= n {
            return Err(ModelError::ServerOutOfRange { index: s, n });
        }
        if r >= n {
            return Err(ModelError::RequestOutOfRange { index: r, n });
        }
        Ok(())
    }

    /// `d(s, r)` between server `s` and request `r`.
    pub fn distance(&self, s: usize, r: usize) -> Result<Scalar, ModelError> {
        self.check_indices(s, r)?;
        Ok(match &self.metric {
            Metric::Line { servers, requests } => servers[s].abs_diff(&requests[r]),
            Metric::Table { table, requests } => table[s][requests[r]].clone(),
        })
    }

    /// The full `n x n` cost matrix, row = server.
    pub fn cost_matrix(&self) -> Vec<Vec<Scalar>> {
        let n = self.n();
        (0..n)
            .map(|s| (0..n).map(|r| self.distance(s, r).expect("indices in range")).collect())
            .collect()
    }
}

/// `d(s, r)`; see [`Instance::distance`].
pub fn distance(instance: &Instance, s: usize, r: usize) -> Result<Scalar, ModelError> {
    instance.distance(s, r)
}

/// `w(M) = sum of d(s, r)` over the edges of `m`.
pub fn matching_cost(instance: &Instance, m: &Matching) -> Result<Scalar, ModelError> {
    let mut total = Scalar::zero();
    for (s, r) in m.pairs() {
        total = &total + &instance.distance(s, r)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub server: usize,
    pub request: usize,
    pub cost: Scalar,
}

/// A set of vertex-disjoint (server, request) pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Matching {
    by_server: BTreeMap<usize, usize>,
    by_request: BTreeMap<usize, usize>,
}

impl Matching {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, ModelError> {
        let mut m = Matching::new();
        for (s, r) in pairs {
            m.insert(s, r)?;
        }
        Ok(m)
    }

    pub fn insert(&mut self, s: usize, r: usize) -> Result<(), ModelError> {
        if self.by_server.contains_key(&s) {
            return Err(ModelError::DuplicateServer(s));
        }
        if self.by_request.contains_key(&r) {
            return Err(ModelError::DuplicateRequest(r));
        }
        self.by_server.insert(s, r);
        self.by_request.insert(r, s);
        Ok(())
    }

    pub fn remove(&mut self, s: usize, r: usize) -> bool {
        if self.by_server.get(&s) == Some(&r) {
            self.by_server.remove(&s);
            self.by_request.remove(&r);
            true
        } else {
            false
        }
    }

    pub fn contains(&self, s: usize, r: usize) -> bool {
        self.by_server.get(&s) == Some(&r)
    }

    pub fn request_of(&self, s: usize) -> Option<usize> {
        self.by_server.get(&s).copied()
    }

    pub fn server_of(&self, r: usize) -> Option<usize> {
        self.by_request.get(&r).copied()
    }

    pub fn len(&self) -> usize {
        self.by_server.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_server.is_empty()
    }

    /// Pairs `(server, request)` in server order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.by_server.iter().map(|(&s, &r)| (s, r))
    }

    pub fn servers(&self) -> impl Iterator<Item = usize> + '_ {
        self.by_server.keys().copied()
    }

    pub fn requests(&self) -> impl Iterator<Item = usize> + '_ {
        self.by_request.keys().copied()
    }

    pub fn edges(&self, instance: &Instance) -> Result<Vec<Edge>, ModelError> {
        self.pairs()
            .map(|(s, r)| Ok(Edge { server: s, request: r, cost: instance.distance(s, r)? }))
            .collect()
    }
}

impl Serialize for Matching {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.pairs().map(|(s, r)| [s, r]))
    }
}

impl<'de> Deserialize<'de> for Matching {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let pairs: Vec<[usize; 2]> = Vec::deserialize(deserializer)?;
        Matching::from_pairs(pairs.into_iter().map(|[s, r]| (s, r))).map_err(serde::de::Error::custom)
    }
}

/// Arithmetic the online engine runs on: exact [`Scalar`] or `f64` for large experiments.
pub trait Weight: Clone + PartialEq + PartialOrd + fmt::Debug + Send + Sync + 'static {
    /// Whether equalities can be asserted exactly.
    const EXACT: bool;
    fn zero() -> Self;
    fn from_scalar(v: &Scalar) -> Self;
    fn to_f64(&self) -> f64;
    fn plus(&self, o: &Self) -> Self;
    fn minus(&self, o: &Self) -> Self;
    fn times(&self, o: &Self) -> Self;
    fn total_cmp(&self, o: &Self) -> Ordering;
    fn is_neg(&self) -> bool {
        self.total_cmp(&Self::zero()) == Ordering::Less
    }
}

impl Weight for Scalar {
    const EXACT: bool = true;
    fn zero() -> Self {
        Scalar::zero()
    }
    fn from_scalar(v: &Scalar) -> Self {
        v.clone()
    }
    fn to_f64(&self) -> f64 {
        Scalar::to_f64(self)
    }
    fn plus(&self, o: &Self) -> Self {
        self + o
    }
    fn minus(&self, o: &Self) -> Self {
        self - o
    }
    fn times(&self, o: &Self) -> Self {
        self * o
    }
    fn total_cmp(&self, o: &Self) -> Ordering {
        self.cmp(o)
    }
}

impl Weight for f64 {
    const EXACT: bool = false;
    fn zero() -> Self {
        0.0
    }
    fn from_scalar(v: &Scalar) -> Self {
        v.to_f64()
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn plus(&self, o: &Self) -> Self {
        self + o
    }
    fn minus(&self, o: &Self) -> Self {
        self - o
    }
    fn times(&self, o: &Self) -> Self {
        self * o
    }
    fn total_cmp(&self, o: &Self) -> Ordering {
        f64::total_cmp(self, o)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sc(v: &str) -> Scalar {
        v.parse().unwrap()
    }

    #[test]
    fn line_distances() {
        let inst = Instance::line_from_strs(&["0", "5", "1/2"], &["1", "5", "100"], "3").unwrap();
        assert_eq!(inst.distance(0, 0).unwrap(), sc("1"));
        assert_eq!(inst.distance(1, 1).unwrap(), sc("0"));
        assert_eq!(inst.distance(2, 2).unwrap(), sc("199/2"));
        assert!(matches!(inst.distance(3, 0), Err(ModelError::ServerOutOfRange { .. })));
        assert!(matches!(inst.distance(0, 7), Err(ModelError::RequestOutOfRange { .. })));
    }

    #[test]
    fn matching_costs() {
        let inst = Instance::line_from_strs(&["0", "10"], &["1", "2"], "3").unwrap();
        assert_eq!(matching_cost(&inst, &Matching::new()).unwrap(), Scalar::zero());
        let single = Matching::from_pairs([(0, 0)]).unwrap();
        assert_eq!(matching_cost(&inst, &single).unwrap(), sc("1"));
        let both = Matching::from_pairs([(0, 0), (1, 1)]).unwrap();
        assert_eq!(matching_cost(&inst, &both).unwrap(), sc("9"));
    }

    #[test]
    fn matching_rejects_duplicates() {
        assert_eq!(Matching::from_pairs([(0, 0), (0, 1)]), Err(ModelError::DuplicateServer(0)));
        assert_eq!(Matching::from_pairs([(0, 0), (1, 0)]), Err(ModelError::DuplicateRequest(0)));
    }

    #[test]
    fn validation_accepts_well_formed() {
        let inst = Instance::from_json(r#"{"t":"3","metric":"line","servers":["0","10"],"requests":["1","2"]}"#).unwrap();
        assert_eq!(inst.n(), 2);
        assert_eq!(inst.t(), &sc("3"));
    }

    #[test]
    fn validation_reports_every_violation() {
        let raw: RawInstance =
            serde_json::from_str(r#"{"t":"1","metric":"line","servers":["0"],"requests":["1","2"]}"#).unwrap();
        let err = validate_instance(&raw).unwrap_err();
        assert_eq!(err.violations.len(), 2);
        assert!(err.to_string().contains("t must exceed 1"));
        assert!(err.to_string().contains("size mismatch"));
    }

    #[test]
    fn validation_of_tables() {
        let ok = Instance::from_json(
            r#"{"t":"3","metric":"table","distance_table":[["0","1"],["1","0"]],"requests":[1,0]}"#,
        )
        .unwrap();
        assert_eq!(ok.distance(0, 0).unwrap(), sc("1"));
        assert_eq!(ok.distance(0, 1).unwrap(), sc("0"));

        let raw: RawInstance = serde_json::from_str(
            r#"{"metric":"table","distance_table":[["0","1","5"],["2","0","1"],["5","1","-1"]],"requests":[0,1,7]}"#,
        )
        .unwrap();
        let err = validate_instance(&raw).unwrap_err();
        let has = |f: fn(&Violation) -> bool| err.violations.iter().any(f);
        assert!(has(|v| matches!(v, Violation::Asymmetric(0, 1))));
        assert!(has(|v| matches!(v, Violation::NegativeDistance(2, 2))));
        assert!(has(|v| matches!(v, Violation::NonzeroDiagonal(2))));
        assert!(has(|v| matches!(v, Violation::Triangle(..))));
        assert!(has(|v| matches!(v, Violation::BadRequestIndex { index: 2, .. })));
    }

    #[test]
    fn json_round_trip() {
        let inst = Instance::line_from_strs(&["0", "1/3"], &["-2", "7/5"], "5/2").unwrap();
        let back = Instance::from_json(&inst.to_json()).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn duplicates_and_zero_edges_are_legal() {
        let inst = Instance::line_from_strs(&["4", "4"], &["4", "4"], "3").unwrap();
        assert_eq!(inst.distance(1, 0).unwrap(), Scalar::zero());
    }
}
