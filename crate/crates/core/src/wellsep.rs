//! Well-separated inputs, well-aligned matchings and the close/far/medium cost bound,
//! plus their extraction from the level structure of an online run.

use serde::Serialize;

use crate::analysis::{LevelKStructure, RegionGenealogy};
use crate::engine::{PathClass, RunTrace};
use crate::offline::line_opt_cost;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WellSepError {
    #[error("epsilon must lie in (0, 1/8], got {0}")]
    BadEpsilon(Scalar),
    #[error("delta must be positive, got {0}")]
    BadDelta(Scalar),
    #[error("edge ({server}, {request}) fits no close/far/medium class")]
    Untaggable { server: Scalar, request: Scalar },
    #[error("input is not well-separated for the frame")]
    NotSeparated,
    #[error("matching is not well-aligned")]
    NotAligned,
    #[error("extracted instance at interval {node} fails: {detail}")]
    Extraction { node: usize, detail: String },
}

/// A closed interval `[low, high]` in frame coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Closed {
    pub low: Scalar,
    pub high: Scalar,
}

impl Closed {
    pub fn contains(&self, x: &Scalar) -> bool {
        &self.low <= x && x <= &self.high
    }
}

/// Gap width `delta`, slack `epsilon` and the translation mapping the gap to `[0, delta]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WellSepFrame {
    pub delta: Scalar,
    pub epsilon: Scalar,
    pub offset: Scalar,
}

impl WellSepFrame {
    pub fn new(delta: Scalar, epsilon: Scalar, offset: Scalar) -> Result<Self, WellSepError> {
        if !epsilon.is_positive() || epsilon > Scalar::new(1, 8) {
            return Err(WellSepError::BadEpsilon(epsilon));
        }
        if !delta.is_positive() {
            return Err(WellSepError::BadDelta(delta));
        }
        Ok(WellSepFrame { delta, epsilon, offset })
    }

    pub fn translate(&self, x: &Scalar) -> Scalar {
        x - &self.offset
    }

    fn ed(&self) -> Scalar {
        &self.epsilon * &self.delta
    }

    fn closed(low: Scalar, high: Scalar) -> Closed {
        Closed { low, high }
    }

    pub fn i_m(&self) -> Closed {
        Self::closed(Scalar::zero(), self.delta.clone())
    }

    pub fn i_l(&self) -> Closed {
        Self::closed(-self.ed(), Scalar::zero())
    }

    pub fn i_r(&self) -> Closed {
        Self::closed(self.delta.clone(), &self.delta + &self.ed())
    }

    pub fn i_a(&self) -> Closed {
        Self::closed(-self.ed(), &self.delta + &self.ed())
    }

    /// `[-eps*delta, eps*delta]`
    pub fn i_l_near(&self) -> Closed {
        Self::closed(-self.ed(), self.ed())
    }

    /// `[(1-eps)*delta, (1+eps)*delta]`
    pub fn i_r_near(&self) -> Closed {
        Self::closed(&self.delta - &self.ed(), &self.delta + &self.ed())
    }

    /// `[eps*delta, (1-eps)*delta]`, where medium edges put their request.
    pub fn middle(&self) -> Closed {
        Self::closed(self.ed(), &self.delta - &self.ed())
    }

    fn in_flanks(&self, x: &Scalar) -> bool {
        self.i_l().contains(x) || self.i_r().contains(x)
    }
}

/// Servers in `I_L u I_R` and requests in `I_A`, after translation.
pub fn is_well_separated(servers: &[Scalar], requests: &[Scalar], frame: &WellSepFrame) -> bool {
    servers.iter().all(|s| frame.in_flanks(&frame.translate(s)))
        && requests.iter().all(|r| frame.i_a().contains(&frame.translate(r)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeTag {
    Close,
    Far,
    Med,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaggedEdge {
    /// Caller-chosen identifier (the phase number for extracted instances).
    pub id: usize,
    pub server: Scalar,
    pub request: Scalar,
    pub tag: EdgeTag,
}

impl TaggedEdge {
    pub fn cost(&self) -> Scalar {
        self.server.abs_diff(&self.request)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifiedMatching {
    pub frame: WellSepFrame,
    pub edges: Vec<TaggedEdge>,
}

impl ClassifiedMatching {
    pub fn with_tag(&self, tag: EdgeTag) -> impl Iterator<Item = &TaggedEdge> {
        self.edges.iter().filter(move |e| e.tag == tag)
    }

    pub fn cost(&self, tag: EdgeTag) -> Scalar {
        self.with_tag(tag).map(TaggedEdge::cost).sum()
    }

    pub fn count(&self, tag: EdgeTag) -> usize {
        self.with_tag(tag).count()
    }

    pub fn servers(&self, tag: EdgeTag) -> Vec<Scalar> {
        self.with_tag(tag).map(|e| e.server.clone()).collect()
    }

    pub fn requests(&self, tag: EdgeTag) -> Vec<Scalar> {
        self.with_tag(tag).map(|e| e.request.clone()).collect()
    }

    pub fn all_servers(&self) -> Vec<Scalar> {
        self.edges.iter().map(|e| e.server.clone()).collect()
    }

    pub fn all_requests(&self) -> Vec<Scalar> {
        self.edges.iter().map(|e| e.request.clone()).collect()
    }
}

fn tag_of(frame: &WellSepFrame, server: &Scalar, request: &Scalar) -> Option<EdgeTag> {
    let (s, r) = (frame.translate(server), frame.translate(request));
    let (l, rn) = (frame.i_l_near(), frame.i_r_near());
    if (l.contains(&s) && l.contains(&r)) || (rn.contains(&s) && rn.contains(&r)) {
        Some(EdgeTag::Close)
    } else if (l.contains(&s) && rn.contains(&r)) || (rn.contains(&s) && l.contains(&r)) {
        Some(EdgeTag::Far)
    } else if frame.middle().contains(&r) && frame.in_flanks(&s) {
        Some(EdgeTag::Med)
    } else {
        None
    }
}

/// Tags each `(id, server position, request position)` edge; close wins over far, far over medium.
pub fn classify_edges(
    edges: &[(usize, Scalar, Scalar)],
    frame: &WellSepFrame,
) -> Result<ClassifiedMatching, WellSepError> {
    let tagged = edges
        .iter()
        .map(|(id, s, r)| {
            let tag = tag_of(frame, s, r)
                .ok_or_else(|| WellSepError::Untaggable { server: s.clone(), request: r.clone() })?;
            Ok(TaggedEdge { id: *id, server: s.clone(), request: r.clone(), tag })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ClassifiedMatching { frame: frame.clone(), edges: tagged })
}

/// Close edges inside `I_R'` have the server right of the request; inside `I_L'`, left of it.
/// A zero-length edge counts as both.
pub fn is_well_aligned(cm: &ClassifiedMatching) -> bool {
    let f = &cm.frame;
    let (l, rn) = (f.i_l_near(), f.i_r_near());
    cm.with_tag(EdgeTag::Close).all(|e| {
        let (s, r) = (f.translate(&e.server), f.translate(&e.request));
        let in_left = l.contains(&s) && l.contains(&r);
        let in_right = rn.contains(&s) && rn.contains(&r);
        (!in_left || s <= r) && (!in_right || s >= r)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub name: &'static str,
    pub lhs: Scalar,
    pub rhs: Scalar,
    pub holds: bool,
}

impl Comparison {
    fn le(name: &'static str, lhs: Scalar, rhs: Scalar) -> Self {
        let holds = lhs <= rhs;
        Comparison { name, lhs, rhs, holds }
    }

    fn eq(name: &'static str, lhs: Scalar, rhs: Scalar) -> Self {
        let holds = lhs == rhs;
        Comparison { name, lhs, rhs, holds }
    }
}

/// The cost bound and its four intermediate claims, all exact.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WspcReport {
    pub close_cost: Scalar,
    pub med_cost: Scalar,
    pub far_cost: Scalar,
    pub opt_cost: Scalar,
    /// `w(close) + w(med) <= (2/eps + 3) OPT + 4 eps/(1 - 2 eps) w(far)`
    pub bound: Comparison,
    /// (i) close edges are optimal on their own endpoints; (ii) medium cost;
    /// (iii) optimum on close+far endpoints; (iv) close optimum vs close+far optimum.
    pub claims: Vec<Comparison>,
}

impl WspcReport {
    pub fn holds(&self) -> bool {
        self.bound.holds && self.claims.iter().all(|c| c.holds)
    }
}

/// Evaluates the close/medium cost bound for a well-aligned matching of a
/// well-separated input whose optimum is `opt_cost`.
pub fn check_wspc(cm: &ClassifiedMatching, opt_cost: &Scalar) -> Result<WspcReport, WellSepError> {
    let f = &cm.frame;
    if !is_well_separated(&cm.all_servers(), &cm.all_requests(), f) {
        return Err(WellSepError::NotSeparated);
    }
    if !is_well_aligned(cm) {
        return Err(WellSepError::NotAligned);
    }
    let eps = &f.epsilon;
    let one = Scalar::one();
    let two = Scalar::from(2);
    let close_cost = cm.cost(EdgeTag::Close);
    let med_cost = cm.cost(EdgeTag::Med);
    let far_cost = cm.cost(EdgeTag::Far);
    let inv_eps = eps.recip();

    let close_opt = line_opt_cost(&cm.servers(EdgeTag::Close), &cm.requests(EdgeTag::Close));
    let mut cf_servers = cm.servers(EdgeTag::Far);
    cf_servers.extend(cm.servers(EdgeTag::Close));
    let mut cf_requests = cm.requests(EdgeTag::Far);
    cf_requests.extend(cm.requests(EdgeTag::Close));
    let cf_opt = line_opt_cost(&cf_servers, &cf_requests);
    let far_count = Scalar::from_integer(cm.count(EdgeTag::Far) as i64);

    let claims = vec![
        Comparison::eq("close_is_optimal", close_cost.clone(), close_opt.clone()),
        Comparison::le("medium_cost", med_cost.clone(), &inv_eps * opt_cost),
        Comparison::le("close_far_optimum", cf_opt.clone(), &(&inv_eps + &Scalar::from(3)) * opt_cost),
        Comparison::le(
            "close_optimum_vs_close_far",
            &close_opt - &(&(&(Scalar::from(4) * eps) * &f.delta) * &far_count),
            cf_opt,
        ),
    ];
    let lhs = &close_cost + &med_cost;
    let rhs = &(&(&two * &inv_eps) + &Scalar::from(3)) * opt_cost
        + &(&(Scalar::from(4) * eps) / &(&one - &(&two * eps))) * &far_cost;
    Ok(WspcReport { close_cost, med_cost, far_cost, opt_cost: opt_cost.clone(), bound: Comparison::le("wspc", lhs, rhs), claims })
}

/// One maximal level-`k` interval viewed as a well-separated instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelInstance {
    pub level: u64,
    pub node: usize,
    pub frame: WellSepFrame,
    /// `(phase, server position, request position)` of each edge of `M_C`.
    pub edges: Vec<(usize, Scalar, Scalar)>,
    pub separated: bool,
    /// `None` when some edge fits no class.
    pub classified: Option<ClassifiedMatching>,
    pub aligned: bool,
    /// Phases of far edges whose online path was short.
    pub short_far_edges: Vec<usize>,
}

impl LevelInstance {
    pub fn servers(&self) -> Vec<Scalar> {
        self.edges.iter().map(|e| e.1.clone()).collect()
    }

    pub fn requests(&self) -> Vec<Scalar> {
        self.edges.iter().map(|e| e.2.clone()).collect()
    }

    pub fn opt_cost(&self) -> Scalar {
        line_opt_cost(&self.servers(), &self.requests())
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.separated {
            out.push("not well-separated".to_string());
        }
        if self.classified.is_none() {
            out.push("an edge fits no class".to_string());
        }
        if !self.aligned {
            out.push("not well-aligned".to_string());
        }
        if !self.short_far_edges.is_empty() {
            out.push(format!("far edges from short paths in phases {:?}", self.short_far_edges));
        }
        out
    }
}

/// `eps = 1/(32 t)`, used for extraction.
pub fn extraction_epsilon(t: &Scalar) -> Scalar {
    (Scalar::from(32) * t).recip()
}

/// Builds one instance per maximal interval (levels `k >= 1` only), recording whether
/// each well-separation, alignment and far-edge property holds.
pub fn build_level_instances(
    structure: &LevelKStructure,
    genealogy: &RegionGenealogy,
    trace: &RunTrace<Scalar>,
) -> Result<Vec<LevelInstance>, WellSepError> {
    if structure.level == 0 {
        return Ok(Vec::new());
    }
    let (servers, requests) = trace.instance.line_points().map_err(|_| WellSepError::NotSeparated)?;
    let eps = extraction_epsilon(&trace.t);
    let mut out = Vec::new();
    for m in &structure.maximal {
        if m.edges.is_empty() {
            continue;
        }
        let minimal = &genealogy.nodes[m.chain[0]].region;
        let frame = WellSepFrame::new(minimal.length(), eps.clone(), minimal.low.clone())?;
        let edges: Vec<(usize, Scalar, Scalar)> = m
            .edges
            .iter()
            .map(|&ph| {
                let p = &trace.phases[ph - 1];
                (ph, servers[p.server].clone(), requests[p.request].clone())
            })
            .collect();
        let s: Vec<Scalar> = edges.iter().map(|e| e.1.clone()).collect();
        let r: Vec<Scalar> = edges.iter().map(|e| e.2.clone()).collect();
        let separated = is_well_separated(&s, &r, &frame);
        let classified = classify_edges(&edges, &frame).ok();
        let aligned = classified.as_ref().is_some_and(is_well_aligned);
        let short_far_edges = classified
            .as_ref()
            .map(|cm| {
                cm.with_tag(EdgeTag::Far)
                    .filter(|e| trace.phases[e.id - 1].class == PathClass::Short)
                    .map(|e| e.id)
                    .collect()
            })
            .unwrap_or_default();
        out.push(LevelInstance {
            level: structure.level,
            node: m.node,
            frame,
            edges,
            separated,
            classified,
            aligned,
            short_far_edges,
        });
    }
    Ok(out)
}

/// As [`build_level_instances`], but fails on the first instance violating a property.
pub fn extract_level_instances(
    structure: &LevelKStructure,
    genealogy: &RegionGenealogy,
    trace: &RunTrace<Scalar>,
) -> Result<Vec<LevelInstance>, WellSepError> {
    let all = build_level_instances(structure, genealogy, trace)?;
    for li in &all {
        let p = li.problems();
        if !p.is_empty() {
            return Err(WellSepError::Extraction { node: li.node, detail: p.join("; ") });
        }
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{assign_edge_levels, build_genealogy, level_k_structure};
    use crate::engine::run_online;
    use crate::model::Instance;
    use crate::offline::opt_cost;

    fn sc(v: &str) -> Scalar {
        v.parse().unwrap()
    }

    fn figure_frame() -> WellSepFrame {
        WellSepFrame::new(sc("8"), sc("1/8"), Scalar::zero()).unwrap()
    }

    /// Servers s1..s5 and requests r1..r5 of the five-edge example, with its matching.
    fn figure_edges() -> Vec<(usize, Scalar, Scalar)> {
        let s = ["-1", "-1/2", "9", "8", "17/2"].map(sc);
        let r = ["1/2", "1/4", "0", "4", "15/2"].map(sc);
        // (request index, server index), 1-based as in the drawing.
        [(1, 2), (2, 5), (3, 1), (4, 4), (5, 3)]
            .iter()
            .map(|&(ri, si)| (ri, s[si - 1].clone(), r[ri - 1].clone()))
            .collect()
    }

    #[test]
    fn frame_rejects_bad_parameters() {
        assert!(matches!(WellSepFrame::new(sc("1"), sc("1/4"), sc("0")), Err(WellSepError::BadEpsilon(_))));
        assert!(matches!(WellSepFrame::new(sc("1"), sc("0"), sc("0")), Err(WellSepError::BadEpsilon(_))));
        assert!(matches!(WellSepFrame::new(sc("0"), sc("1/8"), sc("0")), Err(WellSepError::BadDelta(_))));
    }

    #[test]
    fn figure_instance_is_separated_and_aligned() {
        let f = figure_frame();
        let edges = figure_edges();
        let s: Vec<Scalar> = edges.iter().map(|e| e.1.clone()).collect();
        let r: Vec<Scalar> = edges.iter().map(|e| e.2.clone()).collect();
        assert!(is_well_separated(&s, &r, &f));
        assert!(!is_well_separated(&[sc("4")], &[sc("1")], &f));

        let cm = classify_edges(&edges, &f).unwrap();
        let ids = |t| cm.with_tag(t).map(|e| e.id).collect::<Vec<_>>();
        assert_eq!(ids(EdgeTag::Close), vec![1, 3, 5]);
        assert_eq!(ids(EdgeTag::Far), vec![2]);
        assert_eq!(ids(EdgeTag::Med), vec![4]);
        assert!(is_well_aligned(&cm));

        let opt = line_opt_cost(&s, &r);
        let rep = check_wspc(&cm, &opt).unwrap();
        assert!(rep.holds(), "{rep:?}");
    }

    #[test]
    fn alignment_flip_detected() {
        let f = figure_frame();
        let cm = classify_edges(&[(1, sc("7"), sc("15/2"))], &f).unwrap();
        assert_eq!(cm.edges[0].tag, EdgeTag::Close);
        assert!(!is_well_aligned(&cm));
        let empty = classify_edges(&[], &f).unwrap();
        assert!(is_well_aligned(&empty));
    }

    #[test]
    fn simple_classes() {
        let f = figure_frame();
        let cm = classify_edges(&[(1, sc("-1"), sc("1")), (2, sc("0"), sc("1/2"))], &f).unwrap();
        assert!(cm.edges.iter().all(|e| e.tag == EdgeTag::Close));
        let far = classify_edges(&[(1, sc("0"), sc("8"))], &f).unwrap();
        assert_eq!(far.edges[0].tag, EdgeTag::Far);
        let rep = check_wspc(&far, &sc("8")).unwrap();
        assert_eq!(rep.bound.lhs, Scalar::zero());
        assert!(rep.holds());
        assert!(matches!(
            classify_edges(&[(1, sc("4"), sc("4"))], &f),
            Err(WellSepError::Untaggable { .. })
        ));
    }

    #[test]
    fn close_only_bound_reduces_to_optimality() {
        let f = figure_frame();
        let cm = classify_edges(&[(1, sc("-1"), sc("0")), (2, sc("9"), sc("15/2"))], &f).unwrap();
        let opt = line_opt_cost(&cm.all_servers(), &cm.all_requests());
        let rep = check_wspc(&cm, &opt).unwrap();
        assert_eq!(rep.claims[0].lhs, rep.claims[0].rhs);
        assert!(rep.holds());
    }

    #[test]
    fn w1_top_level_extraction() {
        let tr = run_online(&Instance::line_from_strs(&["0", "10"], &["1", "2"], "3").unwrap()).unwrap();
        let g = build_genealogy(&tr).unwrap();
        let lv = assign_edge_levels(&tr, &g, &opt_cost(&tr.instance)).unwrap();
        let s = level_k_structure(&tr, &g, &lv, 122).unwrap();
        let inst = extract_level_instances(&s, &g, &tr).unwrap();
        assert_eq!(inst.len(), 1);
        let li = &inst[0];
        assert_eq!(li.frame.delta, sc("16"));
        assert_eq!(li.frame.epsilon, sc("1/96"));
        assert_eq!(li.frame.offset, sc("-6"));
        let cm = li.classified.as_ref().unwrap();
        assert_eq!(cm.edges.len(), 1);
        assert_eq!(cm.edges[0].tag, EdgeTag::Med);
        let rep = check_wspc(cm, &li.opt_cost()).unwrap();
        assert_eq!(rep.bound.lhs, sc("8"));
        assert_eq!(rep.bound.rhs, sc("1560"));

        let s0 = level_k_structure(&tr, &g, &lv, 0).unwrap();
        assert!(extract_level_instances(&s0, &g, &tr).unwrap().is_empty());
    }
}
