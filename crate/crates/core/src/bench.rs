//! Instance generators, the greedy baseline, and competitive-ratio experiments.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{assign_edge_levels, build_genealogy};
use crate::engine::{run_online_with, EngineError, EngineOptions, PathClass, RunTrace};
use crate::model::{default_t, matching_cost, Instance, InstanceError, Matching, ModelError, Weight};
use crate::offline::opt_cost;
use crate::scalar::Scalar;
use crate::verify::check_all_lemmas;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("unknown generator kind {0:?} (expected uniform, perturbed-permutation or cluster-gap)")]
    UnknownKind(String),
    #[error("unknown arithmetic mode {0:?} (expected exact or float)")]
    UnknownArithmetic(String),
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("n must be at least 1")]
    EmptyInstance,
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("engine failed on {id}: {source}")]
    Engine { id: String, source: EngineError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    Uniform,
    PerturbedPermutation,
    ClusterGap,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 3] =
        [GeneratorKind::Uniform, GeneratorKind::PerturbedPermutation, GeneratorKind::ClusterGap];

    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::Uniform => "uniform",
            GeneratorKind::PerturbedPermutation => "perturbed-permutation",
            GeneratorKind::ClusterGap => "cluster-gap",
        }
    }

    fn tag(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GeneratorKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GeneratorKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| BenchError::UnknownKind(s.into()))
    }
}

fn rng_for(kind: GeneratorKind, n: usize, seed: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[0] = kind.tag();
    bytes[8..16].copy_from_slice(&(n as u64).to_le_bytes());
    bytes[16..24].copy_from_slice(&seed.to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

const GRAIN: u32 = 32;

/// Uniform on `{k / 2^32 : 0 <= k <= 2^32}`.
fn unit(rng: &mut ChaCha8Rng) -> Scalar {
    Scalar::dyadic(rng.random_range(0..=1i64 << GRAIN), GRAIN)
}

/// Uniform dyadic in `[0, 2^-extra)` at `2^-(32 + extra)` granularity.
fn small(rng: &mut ChaCha8Rng, extra: u32) -> Scalar {
    Scalar::dyadic(rng.random_range(0..1i64 << GRAIN), GRAIN + extra)
}

/// A seeded instance of the given family with `t = 3`; identical arguments give identical output.
pub fn generate(kind: GeneratorKind, n: usize, seed: u64) -> Result<Instance, BenchError> {
    if n == 0 {
        return Err(BenchError::EmptyInstance);
    }
    let mut rng = rng_for(kind, n, seed);
    let (servers, requests) = match kind {
        GeneratorKind::Uniform => {
            let s = (0..n).map(|_| unit(&mut rng)).collect();
            let r = (0..n).map(|_| unit(&mut rng)).collect();
            (s, r)
        }
        GeneratorKind::PerturbedPermutation => perturbed_permutation(&mut rng, n),
        GeneratorKind::ClusterGap => cluster_gap(&mut rng, n),
    };
    Ok(Instance::line(servers, requests, default_t())?)
}

fn perturbed_permutation(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Scalar>, Vec<Scalar>) {
    let servers: Vec<Scalar> = (0..n as i64).map(Scalar::from_integer).collect();
    let mut order: Vec<i64> = (0..n as i64).collect();
    order.shuffle(rng);
    let half = 1i64 << (GRAIN - 1);
    let requests = order
        .into_iter()
        .map(|i| {
            // delta = (k - 2^31) / 2^32 with 1 <= k < 2^32, strictly inside (-1/2, 1/2).
            let k = rng.random_range(1..1i64 << GRAIN);
            Scalar::from_integer(i) + Scalar::dyadic(k - half, GRAIN)
        })
        .collect();
    (servers, requests)
}

/// A left cluster of `c = max(1, n/8)` servers whose only free member sits at `-(1+v)`,
/// `v` in `[1/8, 1/4)`, after `c - 1` requests land on the others; then a staircase of
/// servers near `1, 2, ..., n-c` with requests arriving near `0` and just right of each
/// staircase server in turn. Greedy walks the staircase and pays about `2(n-c)`; the
/// optimum sends the request near `0` left and pays a constant.
fn cluster_gap(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Scalar>, Vec<Scalar>) {
    let c = (n / 8).max(1);
    let v = Scalar::new(1, 8) + small(rng, 3);
    let free_left = -(Scalar::one() + v);
    let mut servers = vec![free_left.clone()];
    for j in 1..c {
        servers.push(&free_left - &Scalar::from_integer(2 * j as i64) - small(rng, 6));
    }
    let mut requests: Vec<Scalar> = servers[1..].to_vec();
    let eps0 = Scalar::dyadic(rng.random_range(1..1i64 << GRAIN), GRAIN + 6);
    requests.push(eps0);
    for k in 1..=(n - c) {
        let s = Scalar::from_integer(k as i64) + small(rng, 6);
        requests.push(&s + &Scalar::dyadic(rng.random_range(1..1i64 << GRAIN), GRAIN + 6));
        servers.push(s);
    }
    (servers, requests)
}

/// Matches each arriving request to its nearest free server, ties to the smaller index.
pub fn greedy_online(instance: &Instance) -> Result<Matching, ModelError> {
    let n = instance.n();
    let mut free = vec![true; n];
    let mut m = Matching::new();
    for r in 0..n {
        let mut best: Option<(Scalar, usize)> = None;
        for s in (0..n).filter(|&s| free[s]) {
            let d = instance.distance(s, r)?;
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, s));
            }
        }
        let (_, s) = best.expect("as many servers as requests");
        free[s] = false;
        m.insert(s, r)?;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arithmetic {
    #[default]
    Exact,
    Float,
}

impl FromStr for Arithmetic {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Arithmetic::Exact),
            "float" => Ok(Arithmetic::Float),
            _ => Err(BenchError::UnknownArithmetic(s.into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kinds: Vec<GeneratorKind>,
    pub n_values: Vec<usize>,
    /// Seeds `0..seeds` are run for every `(kind, n)`.
    pub seeds: u64,
    #[serde(default = "default_t")]
    pub t: Scalar,
    #[serde(default)]
    pub arithmetic: Arithmetic,
    /// Run the full lemma suite on every exact run.
    #[serde(default)]
    pub verify: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| BenchError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::InvalidConfig(m.into()));
        if self.kinds.is_empty() {
            return bad("no generator kinds");
        }
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return bad("n values must be non-empty and at least 1");
        }
        if self.seeds == 0 {
            return bad("seeds must be at least 1");
        }
        if self.t <= Scalar::one() {
            return bad("t must exceed 1");
        }
        Ok(())
    }

    /// Applies an `RM_ARITH` value, if any.
    pub fn with_arithmetic_override(mut self, value: Option<&str>) -> Result<Self, BenchError> {
        if let Some(v) = value {
            self.arithmetic = v.parse()?;
        }
        Ok(self)
    }
}

/// One CSV row. Blank `max_level` in float mode; blank `checks_passed` when not verified.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub id: String,
    pub kind: GeneratorKind,
    pub n: usize,
    pub seed: u64,
    pub w_online: f64,
    pub w_opt: f64,
    pub ratio: f64,
    pub ratio_norm: f64,
    pub max_level: Option<u64>,
    pub short_cost_frac: f64,
    pub greedy_cost: f64,
    pub checks_passed: Option<bool>,
}

pub fn instance_id(kind: GeneratorKind, n: usize, seed: u64) -> String {
    format!("{kind}-n{n}-s{seed}")
}

fn short_fraction<W: Weight>(trace: &RunTrace<W>) -> f64 {
    let total = trace.online_cost.to_f64();
    if total == 0.0 {
        return 0.0;
    }
    let costs = crate::engine::CostTable::<W>::new(&trace.instance, &trace.t);
    let short = trace
        .phases
        .iter()
        .filter(|p| p.class == PathClass::Short)
        .fold(W::zero(), |acc, p| acc.plus(costs.d(p.server, p.request)));
    short.to_f64() / total
}

fn normalized(ratio: f64, n: usize) -> f64 {
    ratio / (1.0 + (n as f64).log2())
}

/// Runs one `(kind, n, seed)` cell of an experiment.
pub fn run_row(
    kind: GeneratorKind,
    n: usize,
    seed: u64,
    t: &Scalar,
    arithmetic: Arithmetic,
    verify: bool,
) -> Result<ResultRow, BenchError> {
    let id = instance_id(kind, n, seed);
    let inst = generate(kind, n, seed)?.with_t(t.clone())?;
    let w_opt = opt_cost(&inst);
    let greedy_cost = matching_cost(&inst, &greedy_online(&inst)?)?.to_f64();
    let engine_err = |source| BenchError::Engine { id: id.clone(), source };
    let (w_online, ratio, max_level, short_cost_frac, checks_passed) = match arithmetic {
        Arithmetic::Exact => {
            let tr = run_online_with::<Scalar>(&inst, EngineOptions { detailed: true }).map_err(engine_err)?;
            let ratio = if w_opt.is_zero() { Scalar::one() } else { &tr.online_cost / &w_opt };
            let max_level = build_genealogy(&tr)
                .and_then(|g| assign_edge_levels(&tr, &g, &w_opt))
                .map(|lv| lv.max_level())
                .ok();
            let checks = verify.then(|| check_all_lemmas(&tr).passed);
            (tr.online_cost.to_f64(), ratio.to_f64(), max_level, short_fraction(&tr), checks)
        }
        Arithmetic::Float => {
            let tr = run_online_with::<f64>(&inst, EngineOptions { detailed: false }).map_err(engine_err)?;
            let wo = w_opt.to_f64();
            let ratio = if wo == 0.0 { 1.0 } else { tr.online_cost / wo };
            (tr.online_cost, ratio, None, short_fraction(&tr), None)
        }
    };
    Ok(ResultRow {
        id,
        kind,
        n,
        seed,
        w_online,
        w_opt: w_opt.to_f64(),
        ratio,
        ratio_norm: normalized(ratio, n),
        max_level,
        short_cost_frac,
        greedy_cost,
        checks_passed,
    })
}

/// One row per `(kind, n, seed)`, sorted by kind name, then `n`, then seed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRow>, BenchError> {
    config.validate()?;
    let mut jobs = Vec::new();
    for &kind in &config.kinds {
        for &n in &config.n_values {
            for seed in 0..config.seeds {
                jobs.push((kind, n, seed));
            }
        }
    }
    let mut rows = jobs
        .into_par_iter()
        .map(|(kind, n, seed)| run_row(kind, n, seed, &config.t, config.arithmetic, config.verify))
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| (a.kind.name(), a.n, a.seed).cmp(&(b.kind.name(), b.n, b.seed)));
    Ok(rows)
}

pub const CSV_HEADER: &str =
    "id,kind,n,seed,w_online,w_opt,ratio,ratio_norm,max_level,short_cost_frac,greedy_cost,checks_passed";

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(rows: &[ResultRow]) -> Result<String, BenchError> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

/// Mean of `ratio` over rows with the given `n`.
pub fn mean_ratio(rows: &[ResultRow], n: usize) -> Option<f64> {
    let v: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.ratio).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run_online;

    fn sc(v: &str) -> Scalar {
        v.parse().unwrap()
    }

    #[test]
    fn uniform_shape_and_determinism() {
        let a = generate(GeneratorKind::Uniform, 4, 7).unwrap();
        let (s, r) = a.line_points().unwrap();
        assert_eq!((s.len(), r.len()), (4, 4));
        assert!(s.iter().chain(r).all(|x| *x >= Scalar::zero() && *x <= Scalar::one()));
        assert_eq!(a, generate(GeneratorKind::Uniform, 4, 7).unwrap());
        assert_ne!(a, generate(GeneratorKind::Uniform, 4, 8).unwrap());
    }

    #[test]
    fn perturbed_permutation_shape() {
        let a = generate(GeneratorKind::PerturbedPermutation, 3, 1).unwrap();
        let (s, r) = a.line_points().unwrap();
        assert_eq!(s, &[sc("0"), sc("1"), sc("2")]);
        let mut hit = [false; 3];
        for x in r {
            let k = (0..3).find(|&k| x.abs_diff(&Scalar::from(k as i64)) < sc("1/2")).unwrap();
            hit[k] = true;
        }
        assert_eq!(hit, [true; 3]);
    }

    #[test]
    fn cluster_gap_shape() {
        for n in [1, 2, 9, 64] {
            let inst = generate(GeneratorKind::ClusterGap, n, 3).unwrap();
            assert_eq!(inst.n(), n);
            let (s, _) = inst.line_points().unwrap();
            let c = (n / 8).max(1);
            assert!(s[..c].iter().all(|x| *x < sc("-9/8")));
            assert!(s[c..].iter().all(|x| *x >= Scalar::one()));
        }
    }

    #[test]
    fn unknown_kind_rejected() {
        assert!(matches!("zigzag".parse::<GeneratorKind>(), Err(BenchError::UnknownKind(_))));
        assert_eq!("cluster-gap".parse::<GeneratorKind>().unwrap(), GeneratorKind::ClusterGap);
        assert!(matches!(generate(GeneratorKind::Uniform, 0, 0), Err(BenchError::EmptyInstance)));
    }

    #[test]
    fn greedy_examples() {
        let inst = Instance::line_from_strs(&["0", "3"], &["2", "4"], "3").unwrap();
        let m = greedy_online(&inst).unwrap();
        assert_eq!(m.pairs().collect::<Vec<_>>(), vec![(0, 1), (1, 0)]);
        assert_eq!(matching_cost(&inst, &m).unwrap(), sc("5"));
        assert_eq!(opt_cost(&inst), sc("3"));

        let tie = Instance::line_from_strs(&["0", "2"], &["1", "5"], "3").unwrap();
        assert_eq!(greedy_online(&tie).unwrap().server_of(0), Some(0));
        let one = Instance::line_from_strs(&["4"], &["1"], "3").unwrap();
        assert_eq!(greedy_online(&one).unwrap().server_of(0), Some(0));
    }

    #[test]
    fn cluster_gap_separates_greedy_from_engine() {
        let inst = generate(GeneratorKind::ClusterGap, 32, 0).unwrap();
        let opt = opt_cost(&inst).to_f64();
        let greedy = matching_cost(&inst, &greedy_online(&inst).unwrap()).unwrap().to_f64();
        let rm = run_online(&inst).unwrap().online_cost.to_f64();
        assert!(greedy > 50.0, "greedy {greedy}");
        assert!(opt < 1.5, "opt {opt}");
        assert!(rm < 5.0, "rm {rm}");
    }

    #[test]
    fn experiment_rows_and_csv() {
        let cfg = ExperimentConfig::from_json(
            r#"{"kinds":["uniform","perturbed-permutation"],"n_values":[2,4,3],"seeds":5,"verify":true}"#,
        )
        .unwrap();
        let rows = run_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 30);
        let keys: Vec<_> = rows.iter().map(|r| (r.kind.name(), r.n, r.seed)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        for r in &rows {
            assert!(r.ratio >= 1.0 - 1e-12);
            assert!((r.ratio - r.w_online / r.w_opt).abs() <= 1e-9 * r.ratio);
            assert_eq!(r.checks_passed, Some(true), "{}", r.id);
        }
        let text = to_csv_string(&rows).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(text, to_csv_string(&run_experiment(&cfg).unwrap()).unwrap());
    }

    #[test]
    fn float_rows_leave_level_and_checks_blank() {
        let cfg = ExperimentConfig::from_json(r#"{"kinds":["uniform"],"n_values":[5],"seeds":1,"arithmetic":"float","verify":true}"#)
            .unwrap();
        let rows = run_experiment(&cfg).unwrap();
        let text = to_csv_string(&rows).unwrap();
        let line = text.lines().nth(1).unwrap();
        assert!(line.starts_with("uniform-n5-s0,uniform,5,0,"));
        assert!(line.ends_with(','), "{line}");
        assert_eq!(rows[0].max_level, None);
    }

    #[test]
    fn config_validation_and_override() {
        assert!(ExperimentConfig::from_json(r#"{"kinds":["uniform"],"n_values":[0],"seeds":1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"kinds":["uniform"],"n_values":[3],"seeds":0}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"kinds":["uniform"],"n_values":[3],"seeds":1,"t":"1"}"#).is_err());
        let cfg = ExperimentConfig::from_json(r#"{"kinds":["uniform"],"n_values":[3],"seeds":1}"#).unwrap();
        assert_eq!(cfg.arithmetic, Arithmetic::Exact);
        assert_eq!(cfg.t, sc("3"));
        let f = cfg.clone().with_arithmetic_override(Some("float")).unwrap();
        assert_eq!(f.arithmetic, Arithmetic::Float);
        assert!(cfg.with_arithmetic_override(Some("decimal")).is_err());
    }
}
