//! The online algorithm: keep a t-feasible offline matching `M*` with duals, find a
//! minimum t-net-cost augmenting path for each arriving request, augment `M*`, and
//! match the request online to the path's free endpoint.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::model::{Instance, Matching, ModelError, Weight};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("no free server left for request {0}")]
    NoFreeServer(usize),
    #[error("request {got} processed out of order (expected {expected})")]
    OutOfOrder { expected: usize, got: usize },
    #[error("all requests have been processed")]
    Exhausted,
    #[error("edge sequence is not an alternating path: {0}")]
    NotAlternating(String),
    #[error("dual invariant broken in phase {phase}: {detail}")]
    Invariant { phase: usize, detail: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `d(s, r)` and `t * d(s, r)` for all pairs, converted once to the engine's arithmetic.
#[derive(Debug, Clone)]
pub struct CostTable<W> {
    n: usize,
    d: Vec<W>,
    td: Vec<W>,
}

impl<W: Weight> CostTable<W> {
    pub fn new(instance: &Instance, t: &Scalar) -> Self {
        let n = instance.n();
        let mut d = Vec::with_capacity(n * n);
        let mut td = Vec::with_capacity(n * n);
        for s in 0..n {
            for r in 0..n {
                let x = instance.distance(s, r).expect("indices in range");
                td.push(W::from_scalar(&(t * &x)));
                d.push(W::from_scalar(&x));
            }
        }
        CostTable { n, d, td }
    }

    #[inline]
    pub fn d(&self, s: usize, r: usize) -> &W {
        &self.d[s * self.n + r]
    }

    #[inline]
    pub fn td(&self, s: usize, r: usize) -> &W {
        &self.td[s * self.n + r]
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// The offline matching `M*` with its duals, the free-server set and per-request dual maxima.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualState<W> {
    pub y_server: Vec<W>,
    pub y_request: Vec<W>,
    pub y_max: Vec<W>,
    pub mate_of_server: Vec<Option<usize>>,
    pub mate_of_request: Vec<Option<usize>>,
    pub arrived: Vec<bool>,
}

impl<W: Weight> DualState<W> {
    pub fn new(n: usize) -> Self {
        DualState {
            y_server: vec![W::zero(); n],
            y_request: vec![W::zero(); n],
            y_max: vec![W::zero(); n],
            mate_of_server: vec![None; n],
            mate_of_request: vec![None; n],
            arrived: vec![false; n],
        }
    }

    pub fn n(&self) -> usize {
        self.y_server.len()
    }

    pub fn is_free(&self, s: usize) -> bool {
        self.mate_of_server[s].is_none()
    }

    pub fn free_servers(&self) -> Vec<usize> {
        (0..self.n()).filter(|&s| self.is_free(s)).collect()
    }

    pub fn offline(&self) -> Matching {
        Matching::from_pairs(self.offline_pairs()).expect("mates are consistent")
    }

    pub fn offline_pairs(&self) -> Vec<(usize, usize)> {
        self.mate_of_server.iter().enumerate().filter_map(|(s, m)| m.map(|r| (s, r))).collect()
    }

    fn set_offline_edge(&mut self, s: usize, r: usize) {
        self.mate_of_server[s] = Some(r);
        self.mate_of_request[r] = Some(s);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathEdge<W> {
    pub server: usize,
    pub request: usize,
    /// Whether the edge belonged to `M*` before augmentation.
    pub in_offline: bool,
    pub length: W,
}

/// An alternating path from the arriving request to a free server, edges in walk order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentingPath<W> {
    pub request: usize,
    pub server: usize,
    pub edges: Vec<PathEdge<W>>,
    pub t_net_cost: W,
    pub length: W,
}

impl<W> AugmentingPath<W> {
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }
}

/// Builds a path from its edges, computing `phi_t` and `l(P)`.
pub fn make_path<W: Weight>(request: usize, server: usize, edges: Vec<PathEdge<W>>, t: &W) -> AugmentingPath<W> {
    let mut fresh = W::zero();
    let mut matched = W::zero();
    for e in &edges {
        if e.in_offline {
            matched = matched.plus(&e.length);
        } else {
            fresh = fresh.plus(&e.length);
        }
    }
    AugmentingPath { request, server, t_net_cost: t.times(&fresh).minus(&matched), length: fresh.plus(&matched), edges }
}

/// `phi_t(P) = t * (non-matching length) - (matching length)`, after checking that the
/// `(server, request)` sequence alternates with respect to `offline`, starting outside it.
pub fn t_net_cost(
    instance: &Instance,
    edges: &[(usize, usize)],
    offline: &Matching,
    t: &Scalar,
) -> Result<Scalar, EngineError> {
    let mut total = Scalar::zero();
    for (k, &(s, r)) in edges.iter().enumerate() {
        let d = instance.distance(s, r)?;
        let matched = offline.contains(s, r);
        if matched != (k % 2 == 1) {
            return Err(EngineError::NotAlternating(format!("edge {k} ({s},{r}) has the wrong membership")));
        }
        if k > 0 {
            let (ps, pr) = edges[k - 1];
            let shared = if k % 2 == 1 { ps == s } else { pr == r };
            if !shared {
                return Err(EngineError::NotAlternating(format!("edges {} and {k} are not adjacent", k - 1)));
            }
        }
        total = if matched { &total - &d } else { &total + &(t * &d) };
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PathClass {
    Short,
    Long,
}

/// Short iff `l(P) <= 4/(t-1) * phi_t(P)`, compared as `l(P) * (t-1) <= 4 * phi_t(P)`.
pub fn classify<W: Weight>(length: &W, phi: &W, t: &W) -> PathClass {
    let one = W::from_scalar(&Scalar::one());
    let four = W::from_scalar(&Scalar::from(4));
    let lhs = length.times(&t.minus(&one));
    let rhs = four.times(phi);
    if lhs.total_cmp(&rhs) == Ordering::Greater {
        PathClass::Long
    } else {
        PathClass::Short
    }
}

/// The outcome of Step 1 for one request.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult<W> {
    pub path: AugmentingPath<W>,
    /// The shortest-path label of the chosen free server; equals `phi_t(P)`.
    pub label: W,
    pub tree_servers: Vec<usize>,
    pub tree_requests: Vec<usize>,
}

struct HeapItem<W> {
    dist: W,
    hops: usize,
    is_request: bool,
    index: usize,
}

impl<W: Weight> HeapItem<W> {
    fn key_cmp(&self, o: &Self) -> Ordering {
        self.dist
            .total_cmp(&o.dist)
            .then(self.hops.cmp(&o.hops))
            .then(self.is_request.cmp(&o.is_request))
            .then(self.index.cmp(&o.index))
    }
}

impl<W: Weight> PartialEq for HeapItem<W> {
    fn eq(&self, o: &Self) -> bool {
        self.key_cmp(o) == Ordering::Equal
    }
}
impl<W: Weight> Eq for HeapItem<W> {}
impl<W: Weight> PartialOrd for HeapItem<W> {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl<W: Weight> Ord for HeapItem<W> {
    fn cmp(&self, o: &Self) -> Ordering {
        // BinaryHeap is a max-heap.
        o.key_cmp(self)
    }
}

fn label_lt<W: Weight>(a: &(W, usize), b: &(W, usize)) -> bool {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)) == Ordering::Less
}

/// Step 1: Dijkstra from `r` over the residual graph (request to non-mate server with
/// weight `t*d - y(s) - y(r)`, server to its mate with weight 0) until the first free
/// server is settled. Labels are `(distance, hops)` so equal-cost paths prefer fewer
/// edges; remaining ties go to the smaller server index. Duals of vertices settled
/// strictly below the terminal label are then shifted, which makes `y(r) = phi_t(P)`.
pub fn min_tnet_cost_path<W: Weight>(
    state: &mut DualState<W>,
    costs: &CostTable<W>,
    r: usize,
    t: &W,
) -> Result<SearchResult<W>, EngineError> {
    let n = state.n();
    if r >= n {
        return Err(ModelError::RequestOutOfRange { index: r, n }.into());
    }
    state.arrived[r] = true;
    let mut dist_s: Vec<Option<(W, usize)>> = vec![None; n];
    let mut dist_r: Vec<Option<(W, usize)>> = vec![None; n];
    let mut pred_s = vec![usize::MAX; n];
    let mut done_s = vec![false; n];
    let mut done_r = vec![false; n];
    let mut settled_s = Vec::new();
    let mut settled_r = Vec::new();
    let mut heap = BinaryHeap::new();
    dist_r[r] = Some((W::zero(), 0));
    heap.push(HeapItem { dist: W::zero(), hops: 0, is_request: true, index: r });
    let mut terminal = None;
    while let Some(item) = heap.pop() {
        if item.is_request {
            let u = item.index;
            if done_r[u] {
                continue;
            }
            done_r[u] = true;
            settled_r.push(u);
            let yu = &state.y_request[u];
            let skip = state.mate_of_request[u];
            for s in 0..n {
                if done_s[s] || skip == Some(s) {
                    continue;
                }
                let mut rc = costs.td(s, u).minus(&state.y_server[s]).minus(yu);
                if !W::EXACT && rc.is_neg() {
                    rc = W::zero();
                }
                let cand = (item.dist.plus(&rc), item.hops + 1);
                if dist_s[s].as_ref().is_none_or(|cur| label_lt(&cand, cur)) {
                    heap.push(HeapItem { dist: cand.0.clone(), hops: cand.1, is_request: false, index: s });
                    dist_s[s] = Some(cand);
                    pred_s[s] = u;
                }
            }
        } else {
            let s = item.index;
            if done_s[s] {
                continue;
            }
            done_s[s] = true;
            match state.mate_of_server[s] {
                None => {
                    terminal = Some(s);
                    break;
                }
                Some(m) => {
                    settled_s.push(s);
                    let cand = (item.dist.clone(), item.hops + 1);
                    if dist_r[m].as_ref().is_none_or(|cur| label_lt(&cand, cur)) {
                        heap.push(HeapItem { dist: cand.0.clone(), hops: cand.1, is_request: true, index: m });
                        dist_r[m] = Some(cand);
                    }
                }
            }
        }
    }
    let terminal = terminal.ok_or(EngineError::NoFreeServer(r))?;
    let ell = dist_s[terminal].as_ref().expect("terminal has a label").0.clone();

    // Walk back from the terminal to r.
    let mut edges = Vec::new();
    let mut s = terminal;
    loop {
        let u = pred_s[s];
        edges.push(PathEdge { server: s, request: u, in_offline: false, length: costs.d(s, u).clone() });
        if u == r {
            break;
        }
        let mate = state.mate_of_request[u].expect("tree requests other than the root are matched");
        edges.push(PathEdge { server: mate, request: u, in_offline: true, length: costs.d(mate, u).clone() });
        s = mate;
    }
    edges.reverse();

    let below = |lab: &Option<(W, usize)>| lab.as_ref().is_some_and(|l| l.0.total_cmp(&ell) == Ordering::Less);
    let mut tree_servers: Vec<usize> = settled_s.iter().copied().filter(|&s| below(&dist_s[s])).collect();
    let mut tree_requests: Vec<usize> = settled_r.iter().copied().filter(|&u| below(&dist_r[u])).collect();
    for e in &edges {
        if e.server != terminal {
            tree_servers.push(e.server);
        }
        tree_requests.push(e.request);
    }
    tree_servers.sort_unstable();
    tree_servers.dedup();
    tree_requests.sort_unstable();
    tree_requests.dedup();

    for &u in &settled_r {
        let lu = &dist_r[u].as_ref().expect("settled").0;
        if lu.total_cmp(&ell) == Ordering::Less {
            state.y_request[u] = state.y_request[u].plus(&ell.minus(lu));
            if state.y_request[u].total_cmp(&state.y_max[u]) == Ordering::Greater {
                state.y_max[u] = state.y_request[u].clone();
            }
        }
    }
    for &s in &settled_s {
        let ls = &dist_s[s].as_ref().expect("settled").0;
        if ls.total_cmp(&ell) == Ordering::Less {
            state.y_server[s] = state.y_server[s].minus(&ell.minus(ls));
        }
    }

    let path = make_path(r, terminal, edges, t);
    Ok(SearchResult { path, label: ell, tree_servers, tree_requests })
}

/// Step 2: flip `M*` along the path and lower each newly matched request's dual by
/// `(t-1) d(s, r)` so the new offline edges are tight at `d`.
pub fn augment<W: Weight>(
    state: &mut DualState<W>,
    costs: &CostTable<W>,
    path: &AugmentingPath<W>,
    t: &W,
    phase: usize,
) -> Result<(), EngineError> {
    let broken = |detail: String| EngineError::Invariant { phase, detail };
    if !state.is_free(path.server) {
        return Err(broken(format!("terminal server {} is not free", path.server)));
    }
    let t_minus_one = t.minus(&W::from_scalar(&Scalar::one()));
    for e in path.edges.iter().filter(|e| e.in_offline) {
        if state.mate_of_server[e.server] != Some(e.request) {
            return Err(broken(format!("edge ({},{}) is not in the offline matching", e.server, e.request)));
        }
        state.mate_of_server[e.server] = None;
        state.mate_of_request[e.request] = None;
    }
    for e in path.edges.iter().filter(|e| !e.in_offline) {
        state.set_offline_edge(e.server, e.request);
        state.y_request[e.request] = state.y_request[e.request].minus(&t_minus_one.times(&e.length));
    }
    if W::EXACT {
        for e in path.edges.iter().filter(|e| !e.in_offline) {
            let sum = state.y_server[e.server].plus(&state.y_request[e.request]);
            if sum != *costs.d(e.server, e.request) {
                return Err(broken(format!("new offline edge ({},{}) is not tight", e.server, e.request)));
            }
            if state.y_request[e.request].is_neg() {
                return Err(broken(format!("request {} dual went negative", e.request)));
            }
            if W::zero().total_cmp(&state.y_server[e.server]) == Ordering::Less {
                return Err(broken(format!("server {} dual went positive", e.server)));
            }
        }
    }
    Ok(())
}

/// Dual vectors at one instant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualSnapshot<W> {
    pub servers: Vec<W>,
    pub requests: Vec<W>,
}

/// What the analysis needs beyond the path itself.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseDetail<W> {
    /// `A_i`: servers of the alternating tree, excluding the terminal.
    pub tree_servers: Vec<usize>,
    /// `B_i`: requests of the alternating tree, always including the arriving one.
    pub tree_requests: Vec<usize>,
    /// Free servers when the request arrived.
    pub free_before: Vec<usize>,
    pub after_search: DualSnapshot<W>,
    pub after_augment: DualSnapshot<W>,
    /// Largest dual each request has held through this phase.
    pub y_max: Vec<W>,
    /// `M*` at the end of the phase as `(server, request)` pairs.
    pub offline_after: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseTrace<W> {
    /// 1-based phase number.
    pub phase: usize,
    pub request: usize,
    pub server: usize,
    pub path: AugmentingPath<W>,
    /// Shortest-path label of the terminal.
    pub label: W,
    pub class: PathClass,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<PhaseDetail<W>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace<W> {
    #[serde(skip)]
    pub instance: Instance,
    pub t: Scalar,
    pub phases: Vec<PhaseTrace<W>>,
    pub online: Matching,
    pub offline: Matching,
    pub online_cost: W,
}

impl<W: Weight> RunTrace<W> {
    pub fn n(&self) -> usize {
        self.instance.n()
    }

    pub fn is_detailed(&self) -> bool {
        self.phases.iter().all(|p| p.detail.is_some())
    }

    /// `M*_i` for `i` in `0..=n` (`M*_0` is empty). Needs a detailed trace.
    pub fn offline_at(&self, i: usize) -> Vec<(usize, usize)> {
        if i == 0 {
            return Vec::new();
        }
        self.phases[i - 1].detail.as_ref().expect("detailed trace").offline_after.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineOptions {
    /// Record dual snapshots and tree sets for every phase.
    pub detailed: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions { detailed: true }
    }
}

/// One run of the algorithm, fed request by request in arrival order.
pub struct RmEngine<W: Weight> {
    instance: Instance,
    t_scalar: Scalar,
    t: W,
    costs: CostTable<W>,
    state: DualState<W>,
    online: Vec<(usize, usize)>,
    online_cost: W,
    options: EngineOptions,
}

impl<W: Weight> RmEngine<W> {
    pub fn new(instance: &Instance, options: EngineOptions) -> Self {
        let t_scalar = instance.t().clone();
        RmEngine {
            t: W::from_scalar(&t_scalar),
            costs: CostTable::new(instance, &t_scalar),
            state: DualState::new(instance.n()),
            instance: instance.clone(),
            t_scalar,
            online: Vec::new(),
            online_cost: W::zero(),
            options,
        }
    }

    pub fn state(&self) -> &DualState<W> {
        &self.state
    }

    pub fn costs(&self) -> &CostTable<W> {
        &self.costs
    }

    pub fn next_request(&self) -> Option<usize> {
        let i = self.online.len();
        (i < self.instance.n()).then_some(i)
    }

    /// Runs both steps for request `r`, which must be the next arrival.
    pub fn process_request(&mut self, r: usize) -> Result<PhaseTrace<W>, EngineError> {
        let expected = self.next_request().ok_or(EngineError::Exhausted)?;
        if r != expected {
            return Err(EngineError::OutOfOrder { expected, got: r });
        }
        let phase = expected + 1;
        let free_before = if self.options.detailed { self.state.free_servers() } else { Vec::new() };
        let search = min_tnet_cost_path(&mut self.state, &self.costs, r, &self.t)?;
        if W::EXACT && search.label != search.path.t_net_cost {
            return Err(EngineError::Invariant {
                phase,
                detail: format!("search label {:?} differs from path cost {:?}", search.label, search.path.t_net_cost),
            });
        }
        let after_search = self.options.detailed.then(|| DualSnapshot {
            servers: self.state.y_server.clone(),
            requests: self.state.y_request.clone(),
        });
        augment(&mut self.state, &self.costs, &search.path, &self.t, phase)?;
        let s = search.path.server;
        self.online.push((s, r));
        self.online_cost = self.online_cost.plus(self.costs.d(s, r));
        let class = classify(&search.path.length, &search.path.t_net_cost, &self.t);
        let detail = after_search.map(|after_search| PhaseDetail {
            tree_servers: search.tree_servers,
            tree_requests: search.tree_requests,
            free_before,
            after_search,
            after_augment: DualSnapshot {
                servers: self.state.y_server.clone(),
                requests: self.state.y_request.clone(),
            },
            y_max: self.state.y_max.clone(),
            offline_after: self.state.offline_pairs(),
        });
        Ok(PhaseTrace { phase, request: r, server: s, path: search.path, label: search.label, class, detail })
    }

    pub fn run(mut self) -> Result<RunTrace<W>, EngineError> {
        let mut phases = Vec::with_capacity(self.instance.n());
        while let Some(r) = self.next_request() {
            phases.push(self.process_request(r)?);
        }
        Ok(RunTrace {
            online: Matching::from_pairs(self.online.iter().copied()).expect("online servers are distinct"),
            offline: self.state.offline(),
            instance: self.instance,
            t: self.t_scalar,
            phases,
            online_cost: self.online_cost,
        })
    }
}

/// Exact run with full per-phase detail.
pub fn run_online(instance: &Instance) -> Result<RunTrace<Scalar>, EngineError> {
    RmEngine::<Scalar>::new(instance, EngineOptions::default()).run()
}

pub fn run_online_with<W: Weight>(instance: &Instance, options: EngineOptions) -> Result<RunTrace<W>, EngineError> {
    RmEngine::<W>::new(instance, options).run()
}
