//! Offline optimum oracles: sorted pairing on the line, the interval-sweep cost
//! formula, and an exact Hungarian solver for arbitrary metrics.

use serde::Serialize;

use crate::model::{Instance, Matching, ModelError};
use crate::scalar::Scalar;

/// One gap `[low, high]` between consecutive sorted points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DecompositionPiece {
    pub low: Scalar,
    pub high: Scalar,
    pub length: Scalar,
    /// |#servers - #requests| among the points up to and including `low`.
    pub diff: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct IntervalDecomposition {
    pub pieces: Vec<DecompositionPiece>,
}

impl IntervalDecomposition {
    pub fn cost(&self) -> Scalar {
        self.pieces.iter().map(|p| &p.length * &Scalar::from_integer(p.diff as i64)).sum()
    }
}

fn sorted_indices(points: &[Scalar]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| points[a].cmp(&points[b]).then(a.cmp(&b)));
    idx
}

/// Pairs the i-th smallest server with the i-th smallest request; equal coordinates
/// keep input order. Returns `(server, request)` index pairs.
pub fn sorted_pairing(servers: &[Scalar], requests: &[Scalar]) -> Vec<(usize, usize)> {
    assert_eq!(servers.len(), requests.len(), "sorted pairing needs balanced point sets");
    sorted_indices(servers).into_iter().zip(sorted_indices(requests)).collect()
}

/// Optimal matching cost of two equal-size point multisets on the line.
pub fn line_opt_cost(servers: &[Scalar], requests: &[Scalar]) -> Scalar {
    sorted_pairing(servers, requests).into_iter().map(|(s, r)| servers[s].abs_diff(&requests[r])).sum()
}

pub fn optimal_line_matching(instance: &Instance) -> Result<Matching, ModelError> {
    let (servers, requests) = instance.line_points()?;
    Ok(Matching::from_pairs(sorted_pairing(servers, requests)).expect("sorted pairing is a bijection"))
}

/// Cost of a line optimum via `sum_j diff(K_j) * L(kappa_j)`, plus the pieces.
pub fn interval_decomposition_cost(instance: &Instance) -> Result<(Scalar, IntervalDecomposition), ModelError> {
    let (servers, requests) = instance.line_points()?;
    let decomposition = decompose(servers, requests);
    Ok((decomposition.cost(), decomposition))
}

pub fn decompose(servers: &[Scalar], requests: &[Scalar]) -> IntervalDecomposition {
    let mut points: Vec<(&Scalar, bool)> =
        servers.iter().map(|p| (p, true)).chain(requests.iter().map(|p| (p, false))).collect();
    points.sort_by(|a, b| a.0.cmp(b.0));
    let mut pieces = Vec::with_capacity(points.len().saturating_sub(1));
    let mut balance: i64 = 0;
    for w in points.windows(2) {
        balance += if w[0].1 { 1 } else { -1 };
        pieces.push(DecompositionPiece {
            low: w[0].0.clone(),
            high: w[1].0.clone(),
            length: w[1].0 - w[0].0,
            diff: balance.unsigned_abs() as usize,
        });
    }
    IntervalDecomposition { pieces }
}

/// Dual potentials proving optimality of an assignment: `u[s] + v[r] <= c(s, r)`
/// everywhere with equality on matched pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub u: Vec<Scalar>,
    pub v: Vec<Scalar>,
}

impl Certificate {
    pub fn certifies(&self, costs: &[Vec<Scalar>], m: &Matching) -> bool {
        let n = costs.len();
        if m.len() != n {
            return false;
        }
        for s in 0..n {
            for r in 0..n {
                let slack = &costs[s][r] - &(&self.u[s] + &self.v[r]);
                if slack.is_negative() || (m.contains(s, r) && !slack.is_zero()) {
                    return false;
                }
            }
        }
        true
    }
}

/// Exact Hungarian method (shortest augmenting paths with potentials), `O(n^3)`.
/// `costs[s][r]`; returns the assignment and its optimality certificate.
pub fn hungarian(costs: &[Vec<Scalar>]) -> (Matching, Certificate) {
    let n = costs.len();
    // 1-based columns with a virtual column 0, as in the classic formulation.
    let mut u = vec![Scalar::zero(); n + 1];
    let mut v = vec![Scalar::zero(); n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        let mut minv: Vec<Option<Scalar>> = vec![None; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta: Option<Scalar> = None;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = &(&costs[i0 - 1][j - 1] - &u[i0]) - &v[j];
                if minv[j].as_ref().is_none_or(|m| cur < *m) {
                    minv[j] = Some(cur);
                    way[j] = j0;
                }
                let mj = minv[j].as_ref().expect("set above");
                if delta.as_ref().is_none_or(|d| mj < d) {
                    delta = Some(mj.clone());
                    j1 = j;
                }
            }
            let delta = delta.expect("an unused column remains");
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] = &u[row_of[j]] + &delta;
                    v[j] = &v[j] - &delta;
                } else if let Some(m) = minv[j].as_mut() {
                    *m = &*m - &delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut m = Matching::new();
    for j in 1..=n {
        m.insert(row_of[j] - 1, j - 1).expect("assignment is a bijection");
    }
    let cert = Certificate { u: u[1..].to_vec(), v: v[1..].to_vec() };
    (m, cert)
}

/// Minimum-cost perfect matching for any metric.
pub fn exact_min_cost_matching(instance: &Instance) -> Matching {
    hungarian(&instance.cost_matrix()).0
}

/// Optimal offline cost; sorted pairing on the line, Hungarian otherwise.
pub fn opt_cost(instance: &Instance) -> Scalar {
    match instance.line_points() {
        Ok((s, r)) => line_opt_cost(s, r),
        Err(_) => {
            let costs = instance.cost_matrix();
            let (m, _) = hungarian(&costs);
            m.pairs().map(|(s, r)| costs[s][r].clone()).sum()
        }
    }
}

/// True iff every gap between consecutive points is crossed only by edges of one
/// orientation (all with server left of request, or all with server right).
pub fn check_opt_property(m: &Matching, instance: &Instance) -> Result<bool, ModelError> {
    let (servers, requests) = instance.line_points()?;
    let mut points: Vec<&Scalar> = servers.iter().chain(requests.iter()).collect();
    points.sort();
    points.dedup();
    let edges: Vec<(&Scalar, &Scalar)> = m.pairs().map(|(s, r)| (&servers[s], &requests[r])).collect();
    for w in points.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mut left = false;
        let mut right = false;
        for &(s, r) in &edges {
            let (a, b) = if s <= r { (s, r) } else { (r, s) };
            if a <= lo && b >= hi {
                if s < r {
                    left = true;
                } else {
                    right = true;
                }
            }
        }
        if left && right {
            return Ok(false);
        }
    }
    Ok(true)
}
