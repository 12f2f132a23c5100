//! Post-hoc instrumentation of line-metric runs: spans, search intervals, the
//! cumulative search region and its genealogy, interval levels, and the per-level
//! structure of maximal intervals.

use std::fmt;

use serde::Serialize;

use crate::engine::{PhaseDetail, RunTrace};
use crate::model::ModelError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("trace lacks per-phase detail")]
    NotDetailed,
    #[error("phase {phase} out of range 1..={n}")]
    PhaseOutOfRange { phase: usize, n: usize },
    #[error("request {request} has not arrived by phase {phase}")]
    NotArrived { request: usize, phase: usize },
    #[error("closed spans of the tree requests of phase {phase} are disconnected")]
    Disconnected { phase: usize },
    #[error("online edge of phase {phase} lies in no interval of sigma_{phase}")]
    EdgeUncovered { phase: usize },
    #[error("optimal cost is zero; levels are undefined")]
    ZeroOptimum,
    #[error("nesting violated between intervals {0} and {1}")]
    Nesting(usize, usize),
    #[error("level {level} structure violated: {detail}")]
    Structure { level: u64, detail: String },
}

/// An interval with open interior `(low, high)` and closure `[low, high]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Region {
    pub low: Scalar,
    pub high: Scalar,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.low, self.high)
    }
}

impl Region {
    pub fn new(low: Scalar, high: Scalar) -> Self {
        assert!(low <= high, "region endpoints out of order");
        Region { low, high }
    }

    pub fn point(x: Scalar) -> Self {
        Region { low: x.clone(), high: x }
    }

    pub fn length(&self) -> Scalar {
        &self.high - &self.low
    }

    pub fn is_degenerate(&self) -> bool {
        self.low == self.high
    }

    pub fn interior_contains(&self, x: &Scalar) -> bool {
        &self.low < x && x < &self.high
    }

    pub fn closure_contains(&self, x: &Scalar) -> bool {
        &self.low <= x && x <= &self.high
    }

    pub fn on_boundary(&self, x: &Scalar) -> bool {
        x == &self.low || x == &self.high
    }

    /// Closure of `other` inside closure of `self`.
    pub fn contains_region(&self, other: &Region) -> bool {
        self.low <= other.low && other.high <= self.high
    }

    pub fn closures_intersect(&self, other: &Region) -> bool {
        self.low <= other.high && other.low <= self.high
    }

    pub fn interiors_intersect(&self, other: &Region) -> bool {
        self.low < other.high && other.low < self.high
    }

    pub fn hull(&self, other: &Region) -> Region {
        Region { low: Scalar::min_of(&self.low, &other.low), high: Scalar::max_of(&self.high, &other.high) }
    }

    /// Whether the two regions fuse into one when both belong to the search region.
    pub fn merges_with(&self, other: &Region, mode: MergeMode) -> bool {
        match mode {
            MergeMode::Closed => self.closures_intersect(other),
            MergeMode::Open => {
                if self.is_degenerate() {
                    other.closure_contains(&self.low)
                } else if other.is_degenerate() {
                    self.closure_contains(&other.low)
                } else {
                    self.interiors_intersect(other)
                }
            }
        }
    }

    /// Disjoint in the sense matching `mode` (closures for closed merging, interiors otherwise).
    pub fn separated(&self, other: &Region, mode: MergeMode) -> bool {
        !self.merges_with(other, mode)
    }
}

/// How abutting intervals of the cumulative search region combine.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeMode {
    /// Intervals whose closures meet (even at one point) merge.
    Closed,
    /// Only overlapping interiors merge; a degenerate interval merges with any closure holding it.
    #[default]
    Open,
}

fn detail(trace: &RunTrace<Scalar>, phase: usize) -> Result<&PhaseDetail<Scalar>, AnalysisError> {
    let n = trace.phases.len();
    if phase == 0 || phase > n {
        return Err(AnalysisError::PhaseOutOfRange { phase, n });
    }
    trace.phases[phase - 1].detail.as_ref().ok_or(AnalysisError::NotDetailed)
}

/// `span(r, i)`: centered at `r` with half-width `y_max^i(r) / t`.
pub fn span(trace: &RunTrace<Scalar>, r: usize, phase: usize) -> Result<Region, AnalysisError> {
    let d = detail(trace, phase)?;
    if r >= phase {
        return Err(AnalysisError::NotArrived { request: r, phase });
    }
    let (_, requests) = trace.instance.line_points()?;
    let half = &d.y_max[r] / &trace.t;
    Ok(Region::new(&requests[r] - &half, &requests[r] + &half))
}

/// `sr(r_i)`: the hull of the closed spans of the phase's tree requests, which must be connected.
pub fn search_interval(trace: &RunTrace<Scalar>, phase: usize) -> Result<Region, AnalysisError> {
    let d = detail(trace, phase)?;
    let mut spans = d
        .tree_requests
        .iter()
        .map(|&r| span(trace, r, phase))
        .collect::<Result<Vec<_>, _>>()?;
    spans.sort_by(|a, b| a.low.cmp(&b.low));
    let mut hull = spans[0].clone();
    for s in &spans[1..] {
        if s.low > hull.high {
            return Err(AnalysisError::Disconnected { phase });
        }
        hull = hull.hull(s);
    }
    Ok(hull)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionNode {
    pub id: usize,
    pub region: Region,
    pub birth: usize,
    /// Phase in which the interval was absorbed; `None` if it survives to the end.
    pub death: Option<usize>,
    pub predecessors: Vec<usize>,
    pub successor: Option<usize>,
}

/// Every interval that ever appears in a `sigma_i`. Exactly one node is born per
/// phase (node id = phase - 1), even when the new search interval adds no extent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionGenealogy {
    pub mode: MergeMode,
    pub nodes: Vec<RegionNode>,
    /// `sigma[i]` lists node ids of `sigma_i` left to right; `sigma[0]` is empty.
    pub sigma: Vec<Vec<usize>>,
    pub search_intervals: Vec<Region>,
}

impl RegionGenealogy {
    pub fn node(&self, id: usize) -> &RegionNode {
        &self.nodes[id]
    }

    /// The node born in `phase`.
    pub fn newborn(&self, phase: usize) -> &RegionNode {
        &self.nodes[phase - 1]
    }

    pub fn sigma_regions(&self, phase: usize) -> Vec<Region> {
        self.sigma[phase].iter().map(|&id| self.nodes[id].region.clone()).collect()
    }

    /// The member of `sigma_phase` that `node` has grown into (`node` itself if still alive).
    pub fn holder_at(&self, node: usize, phase: usize) -> usize {
        let mut id = node;
        while let Some(next) = self.nodes[id].successor.filter(|&s| self.nodes[s].birth <= phase) {
            id = next;
        }
        id
    }

    /// Any two intervals are separated or nested. Returns the first offending pair.
    pub fn nesting_violation(&self) -> Option<(usize, usize)> {
        for a in &self.nodes {
            for b in &self.nodes[a.id + 1..] {
                let (ra, rb) = (&a.region, &b.region);
                if !(ra.separated(rb, self.mode) || ra.contains_region(rb) || rb.contains_region(ra)) {
                    return Some((a.id, b.id));
                }
            }
        }
        None
    }
}

pub fn build_genealogy(trace: &RunTrace<Scalar>) -> Result<RegionGenealogy, AnalysisError> {
    build_genealogy_with(trace, MergeMode::default())
}

pub fn build_genealogy_with(trace: &RunTrace<Scalar>, mode: MergeMode) -> Result<RegionGenealogy, AnalysisError> {
    trace.instance.line_points()?;
    let n = trace.phases.len();
    let mut nodes: Vec<RegionNode> = Vec::with_capacity(n);
    let mut sigma: Vec<Vec<usize>> = vec![Vec::new()];
    let mut search_intervals = Vec::with_capacity(n);
    for phase in 1..=n {
        let sr = search_interval(trace, phase)?;
        let prev = &sigma[phase - 1];
        let mut region = sr.clone();
        let mut preds: Vec<usize> = Vec::new();
        loop {
            let mut grown: Vec<usize> =
                prev.iter().copied().filter(|&id| nodes[id].region.merges_with(&region, mode)).collect();
            // A single point has no open extent, so it must not bridge two abutting intervals.
            if mode == MergeMode::Open && region.is_degenerate() {
                grown.truncate(1);
            }
            let mut next = sr.clone();
            for &id in &grown {
                next = next.hull(&nodes[id].region);
            }
            let stable = grown == preds && next == region;
            preds = grown;
            region = next;
            if stable {
                break;
            }
        }
        let id = nodes.len();
        for &p in &preds {
            nodes[p].death = Some(phase);
            nodes[p].successor = Some(id);
        }
        let mut current: Vec<usize> = prev.iter().copied().filter(|p| !preds.contains(p)).collect();
        nodes.push(RegionNode { id, region, birth: phase, death: None, predecessors: preds, successor: None });
        current.push(id);
        current.sort_by(|&a, &b| {
            let (ra, rb) = (&nodes[a].region, &nodes[b].region);
            ra.low.cmp(&rb.low).then(ra.high.cmp(&rb.high))
        });
        sigma.push(current);
        search_intervals.push(sr);
    }
    Ok(RegionGenealogy { mode, nodes, sigma, search_intervals })
}

/// `sigma_i` as left-to-right regions.
pub fn cumulative_search_region(
    trace: &RunTrace<Scalar>,
    phase: usize,
    mode: MergeMode,
) -> Result<Vec<Region>, AnalysisError> {
    let n = trace.phases.len();
    if phase == 0 || phase > n {
        return Err(AnalysisError::PhaseOutOfRange { phase, n });
    }
    Ok(build_genealogy_with(trace, mode)?.sigma_regions(phase))
}

/// Level brackets `base * q^k <= L < base * q^(k+1)` with `base = w_opt / n` and
/// `q = 1 + 1/(32 t)`; anything shorter than `base * q` is level 0.
#[derive(Debug, Clone)]
pub struct LevelScale {
    pub base: Scalar,
    pub q: Scalar,
    ln_q: f64,
}

impl LevelScale {
    pub fn new(w_opt: &Scalar, n: usize, t: &Scalar) -> Result<Self, AnalysisError> {
        if !w_opt.is_positive() {
            return Err(AnalysisError::ZeroOptimum);
        }
        let base = w_opt / &Scalar::from_integer(n as i64);
        let q = Scalar::one() + (Scalar::from_integer(32) * t).recip();
        let ln_q = q.ln_estimate();
        Ok(LevelScale { base, q, ln_q })
    }

    pub fn level(&self, length: &Scalar) -> u64 {
        if length < &self.base {
            return 0;
        }
        let x = length / &self.base;
        let le = |k: u64| self.q.pow(k as u32) <= x;
        let mut k = (x.ln_estimate() / self.ln_q).floor().max(0.0) as u64;
        while k > 0 && !le(k) {
            k -= 1;
        }
        while le(k + 1) {
            k += 1;
        }
        k
    }

    /// Lower end of the level-`k` bracket.
    pub fn lower(&self, k: u64) -> Scalar {
        &self.base * &self.q.pow(k as u32)
    }
}

pub fn level_of_interval(length: &Scalar, w_opt: &Scalar, n: usize, t: &Scalar) -> Result<u64, AnalysisError> {
    Ok(LevelScale::new(w_opt, n, t)?.level(length))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelAssignment {
    pub w_opt: Scalar,
    pub n: usize,
    pub t: Scalar,
    /// Level of each genealogy node.
    pub node_levels: Vec<u64>,
    /// Level of the online edge of each phase (index = phase - 1).
    pub edge_levels: Vec<u64>,
    /// Node of `sigma_i` containing the online edge of phase `i`.
    pub edge_nodes: Vec<usize>,
}

impl LevelAssignment {
    pub fn max_level(&self) -> u64 {
        self.edge_levels.iter().copied().max().unwrap_or(0)
    }

    /// Levels that carry at least one online edge, ascending.
    pub fn used_levels(&self) -> Vec<u64> {
        let mut v = self.edge_levels.clone();
        v.sort_unstable();
        v.dedup();
        v
    }
}

pub fn assign_edge_levels(
    trace: &RunTrace<Scalar>,
    genealogy: &RegionGenealogy,
    w_opt: &Scalar,
) -> Result<LevelAssignment, AnalysisError> {
    let scale = LevelScale::new(w_opt, trace.n(), &trace.t)?;
    let (servers, requests) = trace.instance.line_points()?;
    let node_levels: Vec<u64> = genealogy.nodes.iter().map(|nd| scale.level(&nd.region.length())).collect();
    let mut edge_levels = Vec::with_capacity(trace.phases.len());
    let mut edge_nodes = Vec::with_capacity(trace.phases.len());
    for p in &trace.phases {
        let (s, r) = (&servers[p.server], &requests[p.request]);
        let holds = |id: usize| {
            let reg = &genealogy.nodes[id].region;
            reg.closure_contains(s) && reg.closure_contains(r)
        };
        let born = p.phase - 1;
        let id = if holds(born) {
            born
        } else {
            *genealogy.sigma[p.phase]
                .iter()
                .find(|&&id| holds(id))
                .ok_or(AnalysisError::EdgeUncovered { phase: p.phase })?
        };
        edge_levels.push(node_levels[id]);
        edge_nodes.push(id);
    }
    Ok(LevelAssignment { w_opt: w_opt.clone(), n: trace.n(), t: trace.t.clone(), node_levels, edge_levels, edge_nodes })
}

/// One maximal level-`k` interval with its history.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaximalInterval {
    pub node: usize,
    /// `E_C`: level-`k` intervals that grew into this one, in birth order (minimal first).
    pub chain: Vec<usize>,
    /// `comp(C)`: lower-level intervals absorbed along the way.
    pub comp: Vec<usize>,
    /// Phases whose online edge is a level-`k` edge inside this interval (`M_C`).
    pub edges: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelKStructure {
    pub level: u64,
    pub maximal: Vec<MaximalInterval>,
}

/// Builds the level-`k` structure without judging it; see [`LevelKStructure::violations`].
pub fn build_level_k_structure(genealogy: &RegionGenealogy, levels: &LevelAssignment, k: u64) -> LevelKStructure {
    let lev = &levels.node_levels;
    let mut maximal = Vec::new();
    for nd in &genealogy.nodes {
        if lev[nd.id] != k {
            continue;
        }
        let is_max = match nd.successor {
            None => true,
            Some(s) => lev[s] > k,
        };
        if !is_max {
            continue;
        }
        let mut chain = Vec::new();
        let mut comp = Vec::new();
        let mut stack = vec![nd.id];
        while let Some(c) = stack.pop() {
            chain.push(c);
            for &p in &genealogy.nodes[c].predecessors {
                if lev[p] == k {
                    stack.push(p);
                } else {
                    comp.push(p);
                }
            }
        }
        chain.sort_by_key(|&c| genealogy.nodes[c].birth);
        comp.sort_by(|&a, &b| genealogy.nodes[a].region.low.cmp(&genealogy.nodes[b].region.low));
        let mut edges: Vec<usize> = chain
            .iter()
            .map(|&c| genealogy.nodes[c].birth)
            .filter(|&ph| levels.edge_levels[ph - 1] == k && chain.contains(&levels.edge_nodes[ph - 1]))
            .collect();
        edges.sort_unstable();
        maximal.push(MaximalInterval { node: nd.id, chain, comp, edges });
    }
    maximal.sort_by(|a, b| genealogy.nodes[a.node].region.low.cmp(&genealogy.nodes[b.node].region.low));
    LevelKStructure { level: k, maximal }
}

impl LevelKStructure {
    pub fn is_empty(&self) -> bool {
        self.maximal.is_empty()
    }

    /// Every structural property that fails, as human-readable descriptions.
    /// The single-predecessor and nesting properties are only claimed for `k >= 1`.
    pub fn violations(
        &self,
        trace: &RunTrace<Scalar>,
        genealogy: &RegionGenealogy,
        levels: &LevelAssignment,
    ) -> Vec<String> {
        let k = self.level;
        let lev = &levels.node_levels;
        let nodes = &genealogy.nodes;
        let mut out = Vec::new();
        let Ok((servers, requests)) = trace.instance.line_points() else {
            return vec!["not a line instance".into()];
        };
        for m in &self.maximal {
            let c = &nodes[m.node].region;
            if m.chain.iter().any(|&x| lev[x] != k) {
                out.push(format!("E_C of node {} has a member off level {k}", m.node));
            }
            if m.chain.last() != Some(&m.node) {
                out.push(format!("E_C of node {} does not end at it", m.node));
            }
            if let Some(&first) = m.chain.first() {
                if nodes[first].predecessors.iter().any(|&p| lev[p] == k) {
                    out.push(format!("first member {first} of E_C is not minimal"));
                }
            }
            if k >= 1 {
                for &x in &m.chain {
                    let same: Vec<usize> = nodes[x].predecessors.iter().copied().filter(|&p| lev[p] == k).collect();
                    if same.len() > 1 {
                        out.push(format!("node {x} has {} level-{k} predecessors", same.len()));
                    }
                }
                for w in m.chain.windows(2) {
                    if !nodes[w[1]].region.contains_region(&nodes[w[0]].region) {
                        out.push(format!("E_C members {} and {} are not nested", w[0], w[1]));
                    }
                }
            }
            for (a_i, &a) in m.comp.iter().enumerate() {
                if !c.contains_region(&nodes[a].region) {
                    out.push(format!("comp interval {a} is not inside node {}", m.node));
                }
                for &b in &m.comp[a_i + 1..] {
                    if !nodes[a].region.separated(&nodes[b].region, genealogy.mode) {
                        out.push(format!("comp intervals {a} and {b} overlap"));
                    }
                }
            }
            // Every endpoint of an online edge held by C at its birth that is not in M_C lies in
            // a comp interval.
            let birth = nodes[m.node].birth;
            for p in &trace.phases[..birth] {
                let (s, r) = (&servers[p.server], &requests[p.request]);
                let held = genealogy.holder_at(levels.edge_nodes[p.phase - 1], birth) == m.node;
                if !held || m.edges.contains(&p.phase) {
                    continue;
                }
                for x in [s, r] {
                    if !m.comp.iter().any(|&a| nodes[a].region.closure_contains(x)) {
                        out.push(format!("point {x} of phase {} edge is in no comp interval", p.phase));
                    }
                }
            }
        }
        for (i, a) in self.maximal.iter().enumerate() {
            for b in &self.maximal[i + 1..] {
                if nodes[a.node].region.interiors_intersect(&nodes[b.node].region) {
                    out.push(format!("maximal intervals {} and {} overlap", a.node, b.node));
                }
            }
        }
        let mut covered: Vec<usize> = self.maximal.iter().flat_map(|m| m.edges.iter().copied()).collect();
        covered.sort_unstable();
        let mut wanted: Vec<usize> =
            (1..=levels.edge_levels.len()).filter(|&ph| levels.edge_levels[ph - 1] == k).collect();
        wanted.sort_unstable();
        if covered != wanted {
            out.push(format!("level-{k} edges {wanted:?} are not partitioned by maximal intervals ({covered:?})"));
        }
        out
    }
}

/// Builds the level-`k` structure and rejects it if any structural property fails.
pub fn level_k_structure(
    trace: &RunTrace<Scalar>,
    genealogy: &RegionGenealogy,
    levels: &LevelAssignment,
    k: u64,
) -> Result<LevelKStructure, AnalysisError> {
    let s = build_level_k_structure(genealogy, levels, k);
    let v = s.violations(trace, genealogy, levels);
    if v.is_empty() {
        Ok(s)
    } else {
        Err(AnalysisError::Structure { level: k, detail: v.join("; ") })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run_online;
    use crate::model::Instance;
    use crate::offline::opt_cost;

    fn sc(v: &str) -> Scalar {
        v.parse().unwrap()
    }

    fn region(a: &str, b: &str) -> Region {
        Region::new(sc(a), sc(b))
    }

    fn w1() -> RunTrace<Scalar> {
        run_online(&Instance::line_from_strs(&["0", "10"], &["1", "2"], "3").unwrap()).unwrap()
    }

    #[test]
    fn w1_spans_and_search_intervals() {
        let tr = w1();
        assert_eq!(span(&tr, 0, 1).unwrap(), region("0", "2"));
        assert_eq!(span(&tr, 1, 2).unwrap(), region("-6", "10"));
        assert_eq!(span(&tr, 0, 2).unwrap(), region("-16/3", "22/3"));
        assert_eq!(span(&tr, 1, 1), Err(AnalysisError::NotArrived { request: 1, phase: 1 }));
        assert_eq!(search_interval(&tr, 1).unwrap(), region("0", "2"));
        assert_eq!(search_interval(&tr, 2).unwrap(), region("-6", "10"));
    }

    #[test]
    fn w1_genealogy() {
        let tr = w1();
        let g = build_genealogy(&tr).unwrap();
        assert_eq!(g.sigma_regions(1), vec![region("0", "2")]);
        assert_eq!(g.sigma_regions(2), vec![region("-6", "10")]);
        assert_eq!(g.nodes[0].death, Some(2));
        assert_eq!(g.nodes[0].successor, Some(1));
        assert_eq!(g.nodes[1].predecessors, vec![0]);
        assert_eq!(g.nodes[1].death, None);
        assert!(g.nesting_violation().is_none());
    }

    #[test]
    fn degenerate_spans() {
        let tr = run_online(&Instance::line_from_strs(&["4"], &["4"], "3").unwrap()).unwrap();
        assert_eq!(span(&tr, 0, 1).unwrap(), Region::point(sc("4")));
        assert_eq!(search_interval(&tr, 1).unwrap(), Region::point(sc("4")));
    }

    #[test]
    fn disjoint_clusters_stay_apart() {
        let tr = run_online(&Instance::line_from_strs(&["0", "100"], &["1", "101"], "3").unwrap()).unwrap();
        let g = build_genealogy(&tr).unwrap();
        assert_eq!(g.sigma_regions(2), vec![region("0", "2"), region("100", "102")]);
        assert!(g.nodes[1].predecessors.is_empty());
        assert_eq!(cumulative_search_region(&tr, 2, MergeMode::Open).unwrap().len(), 2);
    }

    #[test]
    fn merge_modes_differ_on_touching_intervals() {
        let a = region("0", "2");
        let b = region("2", "5");
        assert!(a.merges_with(&b, MergeMode::Closed));
        assert!(!a.merges_with(&b, MergeMode::Open));
        assert!(Region::point(sc("2")).merges_with(&a, MergeMode::Open));
    }

    #[test]
    fn level_examples() {
        let (w, n, t) = (sc("9"), 2, sc("3"));
        assert_eq!(level_of_interval(&sc("2"), &w, n, &t).unwrap(), 0);
        assert_eq!(level_of_interval(&sc("9/2"), &w, n, &t).unwrap(), 0);
        assert_eq!(level_of_interval(&sc("9"), &w, n, &t).unwrap(), 66);
        assert_eq!(level_of_interval(&(sc("97/96") * sc("9/2")), &w, n, &t).unwrap(), 1);
        assert_eq!(level_of_interval(&sc("16"), &w, n, &t).unwrap(), 122);
        assert_eq!(level_of_interval(&sc("0"), &w, n, &t).unwrap(), 0);
        assert_eq!(level_of_interval(&sc("1"), &sc("0"), n, &t), Err(AnalysisError::ZeroOptimum));
    }

    #[test]
    fn level_brackets_are_half_open() {
        let scale = LevelScale::new(&sc("7"), 3, &sc("3")).unwrap();
        for k in [0u64, 1, 5, 40, 300] {
            let lo = scale.lower(k);
            assert_eq!(scale.level(&lo), k);
            let below = &scale.lower(k + 1) - &sc("1/1000000000000");
            assert_eq!(scale.level(&below), k);
        }
    }

    #[test]
    fn w1_levels_and_structures() {
        let tr = w1();
        let g = build_genealogy(&tr).unwrap();
        let w = opt_cost(&tr.instance);
        let lv = assign_edge_levels(&tr, &g, &w).unwrap();
        assert_eq!(lv.edge_levels, vec![0, 122]);
        assert_eq!(lv.max_level(), 122);

        let s0 = level_k_structure(&tr, &g, &lv, 0).unwrap();
        assert_eq!(s0.maximal.len(), 1);
        assert_eq!(g.nodes[s0.maximal[0].node].region, region("0", "2"));
        assert_eq!(s0.maximal[0].edges, vec![1]);

        let s = level_k_structure(&tr, &g, &lv, 122).unwrap();
        assert_eq!(s.maximal.len(), 1);
        let m = &s.maximal[0];
        assert_eq!(g.nodes[m.node].region, region("-6", "10"));
        assert_eq!(m.edges, vec![2]);
        assert_eq!(m.comp, vec![0]);
        assert_eq!(m.chain, vec![1]);

        assert!(level_k_structure(&tr, &g, &lv, 5).unwrap().is_empty());
    }
}
