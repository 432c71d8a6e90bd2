//! The two quadratic forms behind the curvature criterion, their edge-pair
//! decomposition, and the local (triangle/square) machinery.
//!
//! For a density `rho` and potential `psi` on a reversible triple, the
//! criterion compares
//!
//! * `a_form`: the metric form, a weighted Dirichlet energy with the
//!   logarithmic mean of the endpoint densities as edge weight, and
//! * `b_form_direct`: the Hessian-type form whose lower bound against
//!   `a_form` is the curvature constant.
//!
//! `b_edge_terms` rewrites the second form as one diagonal term per edge
//! plus one term per ordered pair of distinct edges sharing a vertex; all
//! certificates work by bounding groups of these local terms, via
//! `b_subgraph` restrictions and the exact `square_identity` on four-cycles
//! of uniform-rate regular chains.

use crate::logmean::{theta_partials_raw, theta_raw};
use crate::markov::MarkovTriple;
use thiserror::Error;

/// Densities below this floor are treated as touching the boundary.
const STRICT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurvatureError {
    #[error("density must be strictly positive, but state {state} carries {value:e}")]
    NonStrictDensity { state: usize, value: f64 },
    #[error("vector length {got} does not match state count {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("invalid subgraph: {reason}")]
    InvalidSubgraph { reason: String },
    #[error("operation requires a uniform-rate regular chain with uniform stationary law")]
    UnsupportedModel,
}

fn check_inputs(t: &MarkovTriple, rho: &[f64], psi: &[f64]) -> Result<(), CurvatureError> {
    if rho.len() != t.n() {
        return Err(CurvatureError::LengthMismatch { got: rho.len(), expected: t.n() });
    }
    if psi.len() != t.n() {
        return Err(CurvatureError::LengthMismatch { got: psi.len(), expected: t.n() });
    }
    for (state, &r) in rho.iter().enumerate() {
        if !(r.is_finite() && r >= STRICT_FLOOR) {
            return Err(CurvatureError::NonStrictDensity { state, value: r });
        }
    }
    Ok(())
}

/// Metric form: `(1/2) sum_{x,y} (psi(y)-psi(x))^2 theta(rho(x),rho(y)) Q(x,y) pi(x)`.
///
/// Nonnegative; zero iff `psi` is constant on each component of the support
/// graph. Homogeneous of degree one in `rho` and quadratic in `psi`.
pub fn a_form(t: &MarkovTriple, rho: &[f64], psi: &[f64]) -> Result<f64, CurvatureError> {
    check_inputs(t, rho, psi)?;
    let mut acc = 0.0;
    for e in t.edges() {
        let g = psi[e.y] - psi[e.x];
        acc += g * g * theta_raw(rho[e.x], rho[e.y]) * e.conductance;
    }
    Ok(acc)
}

/// Metric form restricted to the edges of a subgraph pattern.
pub fn a_subgraph(
    t: &MarkovTriple,
    pattern: &SubgraphPattern,
    rho: &[f64],
    psi: &[f64],
) -> Result<f64, CurvatureError> {
    check_inputs(t, rho, psi)?;
    let edges = pattern.edge_list(t)?;
    let mut acc = 0.0;
    for &(x, y) in &edges {
        let g = psi[y] - psi[x];
        acc += g * g * theta_raw(rho[x], rho[y]) * t.conductance(x, y);
    }
    Ok(acc)
}

/// Hessian-type form, evaluated as the explicit triple sum over a directed
/// edge `(x, y)` and a third state `z` ranging over the neighbors of each
/// endpoint.
///
/// For `rho = 1` the density part vanishes and the value reduces to
/// `-<grad psi, grad L psi>` in the edge inner product.
pub fn b_form_direct(t: &MarkovTriple, rho: &[f64], psi: &[f64]) -> Result<f64, CurvatureError> {
    check_inputs(t, rho, psi)?;
    let mut acc = 0.0;
    for x in 0..t.n() {
        for (y, _, c) in t.neighbors_with_conductance(x) {
            let g = psi[x] - psi[y];
            let th = theta_raw(rho[x], rho[y]);
            let (d1, d2) = theta_partials_raw(rho[x], rho[y]);
            // Density part: the derivative of the edge weight along the
            // evolution of rho at both endpoints.
            let mut drift = 0.0;
            for (z, qxz) in t.neighbors(x) {
                drift += d1 * qxz * (rho[z] - rho[x]);
            }
            for (z, qyz) in t.neighbors(y) {
                drift += d2 * qyz * (rho[z] - rho[y]);
            }
            acc += 0.25 * g * g * drift * c;
            // Potential part: second-order difference of psi along the edge.
            let mut curl = 0.0;
            for (z, qxz) in t.neighbors(x) {
                curl += qxz * (psi[z] - psi[x]);
            }
            for (z, qyz) in t.neighbors(y) {
                curl -= qyz * (psi[z] - psi[y]);
            }
            acc -= 0.5 * curl * g * th * c;
        }
    }
    Ok(acc)
}

/// Identification of one term of the edge-pair decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgePair {
    /// Diagonal term of the undirected edge `{x, y}`.
    Diagonal { x: usize, y: usize },
    /// Ordered pair of distinct edges `{shared, left}` and `{shared, right}`.
    Adjacent { shared: usize, left: usize, right: usize },
}

/// One term `b(e, e')` of the decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgePairTerm {
    pub pair: EdgePair,
    pub value: f64,
}

fn b_diagonal(t: &MarkovTriple, rho: &[f64], psi: &[f64], x: usize, y: usize) -> f64 {
    let g = psi[x] - psi[y];
    let th = theta_raw(rho[x], rho[y]);
    let (d1, d2) = theta_partials_raw(rho[x], rho[y]);
    let qxy = t.rate(x, y);
    let qyx = t.rate(y, x);
    let c = t.conductance(x, y);
    0.5 * g
        * g
        * (2.0 * th * (qxy + qyx) + d1 * (rho[y] - rho[x]) * qxy + d2 * (rho[x] - rho[y]) * qyx)
        * c
}

fn b_adjacent(
    t: &MarkovTriple,
    rho: &[f64],
    psi: &[f64],
    shared: usize,
    left: usize,
    right: usize,
) -> f64 {
    let g = psi[shared] - psi[left];
    let th = theta_raw(rho[shared], rho[left]);
    let (d1, _) = theta_partials_raw(rho[shared], rho[left]);
    let c = t.conductance(shared, left);
    (0.5 * g * g * d1 * (rho[right] - rho[shared])
        + (psi[left] - psi[shared]) * (psi[right] - psi[shared]) * th)
        * t.rate(shared, right)
        * c
}

/// Edge-pair decomposition of the Hessian-type form: one diagonal term per
/// undirected edge plus one term per ordered pair of distinct edges sharing
/// a vertex. The terms sum to [`b_form_direct`].
pub fn b_edge_terms(
    t: &MarkovTriple,
    rho: &[f64],
    psi: &[f64],
) -> Result<Vec<EdgePairTerm>, CurvatureError> {
    check_inputs(t, rho, psi)?;
    let mut terms = Vec::new();
    for e in t.edges() {
        terms.push(EdgePairTerm {
            pair: EdgePair::Diagonal { x: e.x, y: e.y },
            value: b_diagonal(t, rho, psi, e.x, e.y),
        });
    }
    for shared in 0..t.n() {
        let nbrs: Vec<usize> = t.neighbors(shared).map(|(y, _)| y).collect();
        for &left in &nbrs {
            for &right in &nbrs {
                if left != right {
                    terms.push(EdgePairTerm {
                        pair: EdgePair::Adjacent { shared, left, right },
                        value: b_adjacent(t, rho, psi, shared, left, right),
                    });
                }
            }
        }
    }
    Ok(terms)
}

/// The two forms with the on/off-diagonal split of the second one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormValue {
    pub a: f64,
    pub b_total: f64,
    pub b_on: f64,
    pub b_off: f64,
}

/// Evaluate both forms at once through the edge-pair decomposition.
pub fn forms(t: &MarkovTriple, rho: &[f64], psi: &[f64]) -> Result<FormValue, CurvatureError> {
    let a = a_form(t, rho, psi)?;
    let mut b_on = 0.0;
    let mut b_off = 0.0;
    for term in b_edge_terms(t, rho, psi)? {
        match term.pair {
            EdgePair::Diagonal { .. } => b_on += term.value,
            EdgePair::Adjacent { .. } => b_off += term.value,
        }
    }
    Ok(FormValue { a, b_total: b_on + b_off, b_on, b_off })
}

/// Cycle subgraph used to localize the decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubgraphPattern {
    Triangle([usize; 3]),
    Square([usize; 4]),
}

impl SubgraphPattern {
    fn vertices(&self) -> &[usize] {
        match self {
            SubgraphPattern::Triangle(v) => v,
            SubgraphPattern::Square(v) => v,
        }
    }

    /// Consecutive-cycle edge list, validated against the support graph.
    fn edge_list(&self, t: &MarkovTriple) -> Result<Vec<(usize, usize)>, CurvatureError> {
        let v = self.vertices();
        for (i, &a) in v.iter().enumerate() {
            if a >= t.n() {
                return Err(CurvatureError::InvalidSubgraph {
                    reason: format!("vertex {a} out of bounds"),
                });
            }
            for &b in &v[i + 1..] {
                if a == b {
                    return Err(CurvatureError::InvalidSubgraph {
                        reason: format!("vertex {a} repeated"),
                    });
                }
            }
        }
        let mut edges = Vec::with_capacity(v.len());
        for i in 0..v.len() {
            let (a, b) = (v[i], v[(i + 1) % v.len()]);
            if !t.is_edge(a, b) {
                return Err(CurvatureError::InvalidSubgraph {
                    reason: format!("consecutive states {a} and {b} are not adjacent"),
                });
            }
            edges.push((a, b));
        }
        Ok(edges)
    }
}

/// Which terms of the decomposition to sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    On,
    Off,
    All,
}

/// Sum of decomposition terms with both edges inside the pattern:
/// diagonal terms of the pattern's edges (`On`), ordered pairs of distinct
/// pattern edges sharing a vertex (`Off`), or both (`All`).
pub fn b_subgraph(
    t: &MarkovTriple,
    pattern: &SubgraphPattern,
    rho: &[f64],
    psi: &[f64],
    part: Part,
) -> Result<f64, CurvatureError> {
    check_inputs(t, rho, psi)?;
    let edges = pattern.edge_list(t)?;
    let mut acc = 0.0;
    if part != Part::Off {
        for &(x, y) in &edges {
            acc += b_diagonal(t, rho, psi, x, y);
        }
    }
    if part != Part::On {
        for (i, &(a1, b1)) in edges.iter().enumerate() {
            for &(a2, b2) in &edges[i + 1..] {
                // Distinct cycle edges share at most one vertex.
                let shared_pairs = [(a1, b1, a2, b2), (a1, b1, b2, a2), (b1, a1, a2, b2), (b1, a1, b2, a2)];
                for &(s, l, s2, r) in &shared_pairs {
                    if s == s2 {
                        acc += b_adjacent(t, rho, psi, s, l, r);
                        acc += b_adjacent(t, rho, psi, s, r, l);
                    }
                }
            }
        }
    }
    Ok(acc)
}

/// Exact decomposition of the off-diagonal sum over a four-cycle of a
/// uniform-rate regular chain with uniform stationary law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquareIdentity {
    /// Alternating-sum part: `(mu q^2 / 2) |AS|^2 sum_i theta(rho_i, rho_{i+1})`
    /// with `AS = psi_1 - psi_2 + psi_3 - psi_4`.
    pub alternating: f64,
    /// Concavity part: `(mu q^2 / 2) sum_i g_i^2 D_i` with `g_i` the edge
    /// increment of `psi` and `D_i` the log-mean concavity deficit of the
    /// edge against its two outer cycle neighbors.
    pub deficit: f64,
    /// `alternating + deficit`, equal to the off-diagonal subgraph sum.
    pub total: f64,
}

/// Evaluate the square identity. Both parts are nonnegative, which is what
/// makes four-cycle contributions certifiable.
pub fn square_identity(
    t: &MarkovTriple,
    square: [usize; 4],
    rho: &[f64],
    psi: &[f64],
) -> Result<SquareIdentity, CurvatureError> {
    check_inputs(t, rho, psi)?;
    let Some((_, q)) = t.regular_uniform() else {
        return Err(CurvatureError::UnsupportedModel);
    };
    let pattern = SubgraphPattern::Square(square);
    pattern.edge_list(t)?;
    let mu = t.pi()[0];
    let scale = 0.5 * mu * q * q;
    let at = |i: usize| square[i % 4];
    let alternating_sum = psi[at(0)] - psi[at(1)] + psi[at(2)] - psi[at(3)];
    let theta_sum: f64 = (0..4).map(|i| theta_raw(rho[at(i)], rho[at(i + 1)])).sum();
    let alternating = scale * alternating_sum * alternating_sum * theta_sum;
    let mut deficit = 0.0;
    for i in 0..4 {
        let g = psi[at(i + 1)] - psi[at(i)];
        let (d1, d2) = theta_partials_raw(rho[at(i)], rho[at(i + 1)]);
        let d = rho[at(i + 3)] * d1 + rho[at(i + 2)] * d2
            - theta_raw(rho[at(i + 3)], rho[at(i + 2)]);
        deficit += g * g * d;
    }
    deficit *= scale;
    Ok(SquareIdentity { alternating, deficit, total: alternating + deficit })
}
