//! Dynamic upper bounds for the discrete transport distance between
//! densities, via minimization of the kinetic action over discretized
//! paths, plus entropy-convexity consistency reports along the computed
//! near-minimal paths.
//!
//! A path is piecewise linear in the density and piecewise constant in the
//! potential. On each time interval the potential is eliminated exactly:
//! it solves the weighted-Laplacian linear system expressing the discrete
//! continuity equation at the interval's midpoint density, so returned
//! paths satisfy the continuity residual to solver precision by
//! construction. The remaining optimization runs over interior densities
//! only, with the exact adjoint gradient of the reduced action.

use crate::curvature;
use crate::logmean::{theta_partials_raw, theta_raw};
use crate::markov::{Density, MarkovError, MarkovTriple};
use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

/// Hard cap on the state-space size for path optimization.
const STATE_CAP: usize = 24;
/// Largest user-selectable starting grid.
const GRID_CAP: usize = 200;
/// Continuity residual above which a path is rejected.
const RESIDUAL_TOLERANCE: f64 = 1e-8;
/// Interior densities are kept above this floor during the search.
const POSITIVITY_FLOOR: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("endpoint densities must be strictly positive, state {state} carries {value:e}")]
    BadEndpoint { state: usize, value: f64 },
    #[error("state space too large for path optimization: {states} states exceeds cap {cap}")]
    TooLarge { states: usize, cap: usize },
    #[error("invalid time grid: {0}")]
    BadGrid(String),
    #[error("path mismatch: {0}")]
    BadPath(String),
    #[error(
        "path rejected: continuity residual {residual:e} exceeds tolerance {tolerance:e}"
    )]
    RejectedPath { residual: f64, tolerance: f64 },
    #[error("path solver breakdown: {0}")]
    SolverFailure(String),
    #[error(transparent)]
    Markov(#[from] MarkovError),
}

/// Discretized curve in the space of densities.
///
/// The density is piecewise linear between grid nodes. The potential is
/// piecewise constant: `potentials[k]` applies on the interval to the right
/// of node `k`, and the final entry duplicates the last interval's value so
/// both sequences have one entry per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    pub time_grid: Vec<f64>,
    pub densities: Vec<Density>,
    pub potentials: Vec<Vec<f64>>,
}

/// Options for the path optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportOptions {
    /// Number of time intervals of the first solve (2..=200).
    pub initial_grid: usize,
    /// Number of grid-doubling refinement passes after the first solve.
    pub refinements: usize,
    /// Outer descent iterations per grid level.
    pub max_outer_iterations: usize,
}

impl Default for TransportOptions {
    fn default() -> Self {
        Self { initial_grid: 64, refinements: 2, max_outer_iterations: 400 }
    }
}

/// Result of a path optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportResult {
    /// Square root of the minimized action: an upper bound for the
    /// transport distance, not an exact value.
    pub w_upper: f64,
    /// Minimized action (squared upper bound).
    pub action: f64,
    /// Best path found.
    pub path: DiscretePath,
    /// Sup-norm continuity residual of the returned path.
    pub residual: f64,
    /// Grid sizes visited, in order.
    pub grids: Vec<usize>,
}

/// Entropy-convexity consistency report along a computed path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityReport {
    pub kappa: f64,
    pub w_upper: f64,
    pub entropy_start: f64,
    pub entropy_end: f64,
    /// Per-node slack of the convexity inequality: interpolated bound minus
    /// actual entropy (nonnegative means the inequality holds there).
    pub slacks: Vec<(f64, f64)>,
    /// Smallest slack over the grid.
    pub worst_slack: f64,
    /// Allowed violation, `0.05 |H(rho0) + H(rho1)|`, absorbing the
    /// approximation error of both the path and the distance bound.
    pub tolerance: f64,
    /// Whether the worst slack stays above `-tolerance`.
    pub consistent: bool,
}

fn check_endpoint(t: &MarkovTriple, rho: &Density) -> Result<(), TransportError> {
    for (state, &value) in rho.values().iter().enumerate() {
        if !(value > 0.0) {
            return Err(TransportError::BadEndpoint { state, value });
        }
    }
    let _ = t.density(rho.values().to_vec())?; // length + mass validation
    Ok(())
}

/// Weighted Laplacian of the logarithmic-mean conductances at density `m`:
/// the quadratic form `psi' L(m) psi` is the action integrand.
fn weighted_laplacian(t: &MarkovTriple, m: &[f64]) -> DMatrix<f64> {
    let n = t.n();
    let mut lap = DMatrix::zeros(n, n);
    for e in t.edges() {
        let w = theta_raw(m[e.x], m[e.y]) * e.conductance;
        lap[(e.x, e.x)] += w;
        lap[(e.y, e.y)] += w;
        lap[(e.x, e.y)] -= w;
        lap[(e.y, e.x)] -= w;
    }
    lap
}

/// Solve `L(m) psi = b` for `b` orthogonal to constants, pinning the first
/// node to zero.
fn solve_pinned(t: &MarkovTriple, m: &[f64], b: &[f64]) -> Result<Vec<f64>, TransportError> {
    let n = t.n();
    let lap = weighted_laplacian(t, m);
    let minor = lap.view((1, 1), (n - 1, n - 1)).into_owned();
    let chol = Cholesky::new(minor).ok_or_else(|| {
        TransportError::SolverFailure("weighted Laplacian lost positive definiteness".into())
    })?;
    let rhs = DVector::from_iterator(n - 1, b[1..].iter().copied());
    let sol = chol.solve(&rhs);
    let mut psi = vec![0.0; n];
    psi[1..].copy_from_slice(sol.as_slice());
    Ok(psi)
}

fn quad_form(t: &MarkovTriple, rho: &[f64], psi: &[f64]) -> f64 {
    let mut acc = 0.0;
    for e in t.edges() {
        let g = psi[e.x] - psi[e.y];
        acc += g * g * theta_raw(rho[e.x], rho[e.y]) * e.conductance;
    }
    acc
}

/// Interval potentials solving the continuity equation at the midpoint
/// densities, plus the reduced action of the density path.
fn eliminate_potentials(
    t: &MarkovTriple,
    times: &[f64],
    rhos: &[Vec<f64>],
) -> Result<(f64, Vec<Vec<f64>>), TransportError> {
    let n = t.n();
    let mut action = 0.0;
    let mut psis = Vec::with_capacity(rhos.len() - 1);
    for k in 0..rhos.len() - 1 {
        let dt = times[k + 1] - times[k];
        let m: Vec<f64> = (0..n).map(|x| 0.5 * (rhos[k][x] + rhos[k + 1][x])).collect();
        let b: Vec<f64> =
            (0..n).map(|x| t.pi()[x] * (rhos[k + 1][x] - rhos[k][x]) / dt).collect();
        let psi = solve_pinned(t, &m, &b)?;
        action += 0.5 * dt * (quad_form(t, &rhos[k], &psi) + quad_form(t, &rhos[k + 1], &psi));
        psis.push(psi);
    }
    Ok((action, psis))
}

/// Reduced action and its exact gradient with respect to every density
/// node, by the adjoint method: one extra pinned solve per interval.
fn action_and_gradient(
    t: &MarkovTriple,
    times: &[f64],
    rhos: &[Vec<f64>],
) -> Result<(f64, Vec<Vec<f64>>), TransportError> {
    let n = t.n();
    let intervals = rhos.len() - 1;
    let (action, psis) = eliminate_potentials(t, times, rhos)?;
    let mut grad = vec![vec![0.0; n]; rhos.len()];
    for k in 0..intervals {
        let dt = times[k + 1] - times[k];
        let m: Vec<f64> = (0..n).map(|x| 0.5 * (rhos[k][x] + rhos[k + 1][x])).collect();
        let psi = &psis[k];
        // Adjoint of the continuity constraint against the action's direct
        // dependence on the interval potential.
        let mut rhs = vec![0.0; n];
        for e in t.edges() {
            let w = (theta_raw(rhos[k][e.x], rhos[k][e.y])
                + theta_raw(rhos[k + 1][e.x], rhos[k + 1][e.y]))
                * e.conductance;
            let g = psi[e.x] - psi[e.y];
            rhs[e.x] -= dt * w * g;
            rhs[e.y] += dt * w * g;
        }
        let lam = solve_pinned(t, &m, &rhs)?;
        for e in t.edges() {
            let g = psi[e.x] - psi[e.y];
            let g2 = g * g;
            let pl = g * (lam[e.x] - lam[e.y]);
            // Direct dependence of the trapezoid action on both density slots.
            let (dk_x, dk_y) = theta_partials_raw(rhos[k][e.x], rhos[k][e.y]);
            grad[k][e.x] += 0.5 * dt * dk_x * e.conductance * g2;
            grad[k][e.y] += 0.5 * dt * dk_y * e.conductance * g2;
            let (dk1_x, dk1_y) = theta_partials_raw(rhos[k + 1][e.x], rhos[k + 1][e.y]);
            grad[k + 1][e.x] += 0.5 * dt * dk1_x * e.conductance * g2;
            grad[k + 1][e.y] += 0.5 * dt * dk1_y * e.conductance * g2;
            // Constraint dependence through the midpoint weights.
            let (dm_x, dm_y) = theta_partials_raw(m[e.x], m[e.y]);
            let gm_x = 0.5 * dm_x * e.conductance * pl;
            let gm_y = 0.5 * dm_y * e.conductance * pl;
            grad[k][e.x] += gm_x;
            grad[k + 1][e.x] += gm_x;
            grad[k][e.y] += gm_y;
            grad[k + 1][e.y] += gm_y;
        }
        // Constraint dependence through the mass-transfer right-hand side.
        for x in 0..n {
            let s = lam[x] * t.pi()[x] / dt;
            grad[k][x] += s;
            grad[k + 1][x] -= s;
        }
    }
    Ok((action, grad))
}

fn uniform_times(intervals: usize) -> Vec<f64> {
    (0..=intervals).map(|k| k as f64 / intervals as f64).collect()
}

/// Projected descent over interior density nodes at a fixed grid.
fn optimize_at_grid(
    t: &MarkovTriple,
    times: &[f64],
    mut rhos: Vec<Vec<f64>>,
    max_outer_iterations: usize,
) -> Result<(f64, Vec<Vec<f64>>), TransportError> {
    let n = t.n();
    let pi = t.pi();
    let pi_sq: f64 = pi.iter().map(|&p| p * p).sum();
    let interior = 1..rhos.len() - 1;
    let (mut action, mut grad) = action_and_gradient(t, times, &rhos)?;
    let mut step = 1.0;
    for _ in 0..max_outer_iterations {
        let mut accepted = false;
        for _ in 0..40 {
            let mut candidate = rhos.clone();
            let mut positive = true;
            for j in interior.clone() {
                let dot: f64 = grad[j].iter().zip(pi).map(|(&g, &p)| g * p).sum();
                for x in 0..n {
                    let projected = grad[j][x] - dot / pi_sq * pi[x];
                    candidate[j][x] = rhos[j][x] - step * projected;
                    if candidate[j][x] <= POSITIVITY_FLOOR {
                        positive = false;
                    }
                }
            }
            if !positive {
                step *= 0.5;
                continue;
            }
            let (new_action, new_grad) = action_and_gradient(t, times, &candidate)?;
            if new_action < action - 1e-16 {
                rhos = candidate;
                action = new_action;
                grad = new_grad;
                step = (step * 1.3).min(1e3);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok((action, rhos))
}

fn refine_grid(rhos: &[Vec<f64>], pi: &[f64]) -> Vec<Vec<f64>> {
    let n = rhos[0].len();
    let mut out = Vec::with_capacity(2 * rhos.len() - 1);
    for k in 0..rhos.len() - 1 {
        out.push(rhos[k].clone());
        let mut mid: Vec<f64> =
            (0..n).map(|x| 0.5 * (rhos[k][x] + rhos[k + 1][x])).collect();
        let mass: f64 = mid.iter().zip(pi).map(|(&r, &p)| r * p).sum();
        for r in &mut mid {
            *r /= mass;
        }
        out.push(mid);
    }
    out.push(rhos.last().expect("nonempty path").clone());
    out
}

/// Sup-norm residual of the discrete continuity equation over all
/// intervals, using the midpoint density weights.
pub fn continuity_residual(t: &MarkovTriple, path: &DiscretePath) -> Result<f64, TransportError> {
    validate_path_shape(t, path)?;
    let n = t.n();
    let mut worst = 0.0_f64;
    for k in 0..path.time_grid.len() - 1 {
        let dt = path.time_grid[k + 1] - path.time_grid[k];
        let rho_k = path.densities[k].values();
        let rho_k1 = path.densities[k + 1].values();
        let m: Vec<f64> = (0..n).map(|x| 0.5 * (rho_k[x] + rho_k1[x])).collect();
        let lap = weighted_laplacian(t, &m);
        let psi = DVector::from_column_slice(&path.potentials[k]);
        let flow = &lap * psi;
        for x in 0..n {
            let r = flow[x] - t.pi()[x] * (rho_k1[x] - rho_k[x]) / dt;
            worst = worst.max(r.abs());
        }
    }
    Ok(worst)
}

fn validate_path_shape(t: &MarkovTriple, path: &DiscretePath) -> Result<(), TransportError> {
    let len = path.time_grid.len();
    if len < 2 {
        return Err(TransportError::BadGrid("need at least two grid nodes".into()));
    }
    if path.densities.len() != len || path.potentials.len() != len {
        return Err(TransportError::BadPath(format!(
            "grid has {len} nodes but {} densities and {} potentials",
            path.densities.len(),
            path.potentials.len()
        )));
    }
    if (path.time_grid[0] - 0.0).abs() > 1e-12 || (path.time_grid[len - 1] - 1.0).abs() > 1e-12 {
        return Err(TransportError::BadGrid("grid must span [0, 1]".into()));
    }
    for k in 0..len - 1 {
        if path.time_grid[k + 1] <= path.time_grid[k] {
            return Err(TransportError::BadGrid("grid must be strictly increasing".into()));
        }
    }
    for (k, rho) in path.densities.iter().enumerate() {
        if rho.values().len() != t.n() {
            return Err(TransportError::BadPath(format!(
                "density at node {k} has wrong length"
            )));
        }
    }
    for (k, psi) in path.potentials.iter().enumerate() {
        if psi.len() != t.n() {
            return Err(TransportError::BadPath(format!(
                "potential at node {k} has wrong length"
            )));
        }
    }
    Ok(())
}

/// Kinetic action of a path: per-interval trapezoid of the metric form
/// with the interval's constant potential. Paths whose continuity residual
/// exceeds the tolerance are rejected.
pub fn action(t: &MarkovTriple, path: &DiscretePath) -> Result<f64, TransportError> {
    let residual = continuity_residual(t, path)?;
    if residual > RESIDUAL_TOLERANCE {
        return Err(TransportError::RejectedPath {
            residual,
            tolerance: RESIDUAL_TOLERANCE,
        });
    }
    let mut total = 0.0;
    for k in 0..path.time_grid.len() - 1 {
        let dt = path.time_grid[k + 1] - path.time_grid[k];
        let psi = &path.potentials[k];
        let left = curvature::a_form(t, path.densities[k].values(), psi)
            .map_err(|e| TransportError::BadPath(e.to_string()))?;
        let right = curvature::a_form(t, path.densities[k + 1].values(), psi)
            .map_err(|e| TransportError::BadPath(e.to_string()))?;
        total += 0.5 * dt * (left + right);
    }
    Ok(total)
}

/// Minimize the path action between two strictly positive densities and
/// return the square root: an upper bound for the transport distance,
/// nonincreasing under the built-in grid refinements because the best
/// value seen is kept.
pub fn distance_upper(
    t: &MarkovTriple,
    rho0: &Density,
    rho1: &Density,
    options: &TransportOptions,
) -> Result<TransportResult, TransportError> {
    if t.n() > STATE_CAP {
        return Err(TransportError::TooLarge { states: t.n(), cap: STATE_CAP });
    }
    if !(2..=GRID_CAP).contains(&options.initial_grid) {
        return Err(TransportError::BadGrid(format!(
            "initial grid must have 2..={GRID_CAP} intervals, got {}",
            options.initial_grid
        )));
    }
    check_endpoint(t, rho0)?;
    check_endpoint(t, rho1)?;
    let n = t.n();
    let start = rho0.values();
    let end = rho1.values();
    let mut grids = Vec::new();
    let mut best: Option<(f64, Vec<f64>, Vec<Vec<f64>>)> = None; // action, times, rhos
    let mut intervals = options.initial_grid;
    let mut rhos: Vec<Vec<f64>> = (0..=intervals)
        .map(|k| {
            let s = k as f64 / intervals as f64;
            (0..n).map(|x| (1.0 - s) * start[x] + s * end[x]).collect()
        })
        .collect();
    for level in 0..=options.refinements {
        if level > 0 {
            rhos = refine_grid(&rhos, t.pi());
            intervals *= 2;
        }
        let times = uniform_times(intervals);
        let (action_value, solved) =
            optimize_at_grid(t, &times, rhos, options.max_outer_iterations)?;
        grids.push(intervals);
        rhos = solved;
        let better = match &best {
            None => true,
            Some((a, _, _)) => action_value < *a,
        };
        if better {
            best = Some((action_value, times, rhos.clone()));
        }
    }
    let (best_action, times, best_rhos) = best.expect("at least one grid level runs");
    let (_, psis) = eliminate_potentials(t, &times, &best_rhos)?;
    let mut potentials = psis;
    potentials.push(potentials.last().expect("at least one interval").clone());
    let densities: Vec<Density> = best_rhos
        .iter()
        .map(|r| t.density_normalized(r.clone()))
        .collect::<Result<_, _>>()?;
    let path = DiscretePath { time_grid: times, densities, potentials };
    let residual = continuity_residual(t, &path)?;
    Ok(TransportResult {
        w_upper: best_action.max(0.0).sqrt(),
        action: best_action,
        path,
        residual,
        grids,
    })
}

/// Evaluate the entropy-convexity inequality with modulus `kappa` along a
/// computed near-minimal path: at each grid time the entropy must stay
/// below the linear interpolation of the endpoint entropies minus
/// `kappa/2 * s (1-s)` times the squared distance bound, within a
/// tolerance absorbing the discretization and the gap between the bound
/// and the true distance.
pub fn convexity_check(
    t: &MarkovTriple,
    rho0: &Density,
    rho1: &Density,
    kappa: f64,
    options: &TransportOptions,
) -> Result<ConvexityReport, TransportError> {
    let solved = distance_upper(t, rho0, rho1, options)?;
    Ok(convexity_from(t, &solved, kappa))
}

/// Evaluate the convexity inequality along an already-computed path
/// without re-solving.
pub fn convexity_from(t: &MarkovTriple, solved: &TransportResult, kappa: f64) -> ConvexityReport {
    let h0 = t.entropy(solved.path.densities.first().expect("nonempty path"));
    let h1 = t.entropy(solved.path.densities.last().expect("nonempty path"));
    let w_sq = solved.action;
    let mut slacks = Vec::with_capacity(solved.path.time_grid.len());
    let mut worst = f64::INFINITY;
    for (node, &s) in solved.path.time_grid.iter().enumerate() {
        let bound = (1.0 - s) * h0 + s * h1 - 0.5 * kappa * s * (1.0 - s) * w_sq;
        let slack = bound - t.entropy(&solved.path.densities[node]);
        worst = worst.min(slack);
        slacks.push((s, slack));
    }
    let tolerance = 0.05 * (h0 + h1).abs();
    ConvexityReport {
        kappa,
        w_upper: solved.w_upper,
        entropy_start: h0,
        entropy_end: h1,
        slacks,
        worst_slack: worst,
        tolerance,
        consistent: worst >= -tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k2() -> MarkovTriple {
        models::complete_graph(2).unwrap().into_triple()
    }

    fn k3() -> MarkovTriple {
        models::complete_graph(3).unwrap().into_triple()
    }

    #[test]
    fn constant_path_with_zero_potential_has_zero_action() {
        let t = k3();
        let rho = t.density_normalized(vec![1.3, 0.9, 0.8]).unwrap();
        let grid = 8;
        let path = DiscretePath {
            time_grid: uniform_times(grid),
            densities: vec![rho; grid + 1],
            potentials: vec![vec![0.0; 3]; grid + 1],
        };
        assert_eq!(action(&t, &path).unwrap(), 0.0);
        assert_eq!(continuity_residual(&t, &path).unwrap(), 0.0);
    }

    #[test]
    fn identical_endpoints_give_zero_distance() {
        let t = k3();
        let rho = t.density_normalized(vec![1.3, 0.9, 0.8]).unwrap();
        let opts = TransportOptions { initial_grid: 8, refinements: 0, ..Default::default() };
        let result = distance_upper(&t, &rho, &rho, &opts).unwrap();
        assert!(result.w_upper < 1e-8, "got {}", result.w_upper);
        // Endpoints of the returned path match the inputs.
        let back0 = result.path.densities.first().unwrap().values();
        let back1 = result.path.densities.last().unwrap().values();
        for x in 0..3 {
            assert_relative_eq!(back0[x], rho.values()[x], max_relative = 1e-10);
            assert_relative_eq!(back1[x], rho.values()[x], max_relative = 1e-10);
        }
    }

    #[test]
    fn two_state_distance_matches_scalar_oracle() {
        let t = k2();
        let rho0 = t.density(vec![1.2, 0.8]).unwrap();
        let rho1 = t.density(vec![0.8, 1.2]).unwrap();
        let opts = TransportOptions { initial_grid: 64, refinements: 0, ..Default::default() };
        let result = distance_upper(&t, &rho0, &rho1, &opts).unwrap();
        // One-dimensional reduction: the distance is the integral of
        // 1/sqrt(2 theta(a, 2-a)) over the moved mass coordinate.
        let steps = 20_000;
        let (lo, hi) = (0.8, 1.2);
        let mut integral = 0.0;
        for i in 0..steps {
            let a0 = lo + (hi - lo) * i as f64 / steps as f64;
            let a1 = lo + (hi - lo) * (i + 1) as f64 / steps as f64;
            let f0 = 1.0 / theta_raw(a0, 2.0 - a0).sqrt();
            let f1 = 1.0 / theta_raw(a1, 2.0 - a1).sqrt();
            integral += 0.5 * (f0 + f1) * (a1 - a0);
        }
        let oracle = integral / 2.0_f64.sqrt();
        assert_relative_eq!(result.w_upper, oracle, epsilon = 1e-3);
        assert!(result.residual <= 1e-10);
        // The reported action equals the path's action under the public
        // evaluation, and upper-bounds the minimum by construction.
        let replay = action(&t, &result.path).unwrap();
        assert_relative_eq!(replay, result.action, max_relative = 1e-12, epsilon = 1e-15);
    }

    #[test]
    fn symmetry_between_endpoint_orders() {
        let t = k3();
        let a = t.density_normalized(vec![1.5, 0.9, 0.6]).unwrap();
        let b = t.density_normalized(vec![0.5, 0.8, 1.7]).unwrap();
        let opts = TransportOptions { initial_grid: 32, refinements: 0, ..Default::default() };
        let ab = distance_upper(&t, &a, &b, &opts).unwrap();
        let ba = distance_upper(&t, &b, &a, &opts).unwrap();
        assert!((ab.w_upper - ba.w_upper).abs() <= 1e-4, "{} vs {}", ab.w_upper, ba.w_upper);
    }

    #[test]
    fn time_reversal_preserves_action() {
        let t = k3();
        let a = t.density_normalized(vec![1.5, 0.9, 0.6]).unwrap();
        let b = t.density_normalized(vec![0.5, 0.8, 1.7]).unwrap();
        let opts = TransportOptions { initial_grid: 16, refinements: 0, ..Default::default() };
        let result = distance_upper(&t, &a, &b, &opts).unwrap();
        let len = result.path.time_grid.len();
        let mut reversed_potentials: Vec<Vec<f64>> = (0..len - 1)
            .rev()
            .map(|k| result.path.potentials[k].iter().map(|&v| -v).collect())
            .collect();
        reversed_potentials.push(reversed_potentials.last().unwrap().clone());
        let reversed = DiscretePath {
            time_grid: result.path.time_grid.iter().rev().map(|&s| 1.0 - s).collect(),
            densities: result.path.densities.iter().rev().cloned().collect(),
            potentials: reversed_potentials,
        };
        let forward = action(&t, &result.path).unwrap();
        let backward = action(&t, &reversed).unwrap();
        assert_relative_eq!(forward, backward, max_relative = 1e-12);
    }

    #[test]
    fn corrupted_potentials_are_rejected() {
        let t = k2();
        let rho0 = t.density(vec![1.2, 0.8]).unwrap();
        let rho1 = t.density(vec![0.8, 1.2]).unwrap();
        let opts = TransportOptions { initial_grid: 8, refinements: 0, ..Default::default() };
        let mut result = distance_upper(&t, &rho0, &rho1, &opts).unwrap();
        for psi in &mut result.path.potentials {
            psi[1] += 0.5;
        }
        assert!(matches!(
            action(&t, &result.path),
            Err(TransportError::RejectedPath { .. })
        ));
    }

    #[test]
    fn doubling_rates_halves_squared_distance() {
        let slow = k2();
        let fast = MarkovTriple::new(
            vec!["0".into(), "1".into()],
            vec![1.0, 1.0],
            vec![(0, 1, 2.0), (1, 0, 2.0)],
        )
        .unwrap();
        let rho0 = slow.density(vec![1.2, 0.8]).unwrap();
        let rho1 = slow.density(vec![0.8, 1.2]).unwrap();
        let opts = TransportOptions { initial_grid: 32, refinements: 0, ..Default::default() };
        let w_slow = distance_upper(&slow, &rho0, &rho1, &opts).unwrap();
        let w_fast = distance_upper(&fast, &rho0, &rho1, &opts).unwrap();
        assert_relative_eq!(w_fast.action, 0.5 * w_slow.action, max_relative = 1e-6);
    }

    #[test]
    fn refinement_keeps_best_and_keeps_residual_small() {
        let t = k2();
        let rho0 = t.density(vec![1.2, 0.8]).unwrap();
        let rho1 = t.density(vec![0.8, 1.2]).unwrap();
        let coarse = TransportOptions { initial_grid: 16, refinements: 0, ..Default::default() };
        let fine = TransportOptions { initial_grid: 16, refinements: 2, ..Default::default() };
        let w_coarse = distance_upper(&t, &rho0, &rho1, &coarse).unwrap();
        let w_fine = distance_upper(&t, &rho0, &rho1, &fine).unwrap();
        assert!(w_fine.w_upper <= w_coarse.w_upper + 1e-8);
        assert_eq!(w_fine.grids, vec![16, 32, 64]);
        assert!(w_fine.residual <= w_coarse.residual + 1e-12);
    }

    #[test]
    fn triangle_inequality_on_three_states() {
        let t = k3();
        let mut rng = ChaCha8Rng::seed_from_u64(0x3a);
        let opts = TransportOptions { initial_grid: 24, refinements: 0, ..Default::default() };
        for _ in 0..3 {
            let sample = |rng: &mut ChaCha8Rng| {
                let raw: Vec<f64> = (0..3).map(|_| rng.gen_range(0.2..2.0)).collect();
                t.density_normalized(raw).unwrap()
            };
            let (a, b, c) = (sample(&mut rng), sample(&mut rng), sample(&mut rng));
            let ac = distance_upper(&t, &a, &c, &opts).unwrap().w_upper;
            let ab = distance_upper(&t, &a, &b, &opts).unwrap().w_upper;
            let bc = distance_upper(&t, &b, &c, &opts).unwrap().w_upper;
            assert!(ac <= ab + bc + 2e-3, "{ac} > {ab} + {bc}");
        }
    }

    #[test]
    fn convexity_consistent_on_small_urn() {
        let t = models::bernoulli_laplace(3, 1).unwrap().into_triple();
        let kappa = 1.25;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5d);
        let opts = TransportOptions { initial_grid: 24, refinements: 1, ..Default::default() };
        for _ in 0..3 {
            let raw0: Vec<f64> = (0..3).map(|_| rng.gen_range(0.2..2.0)).collect();
            let raw1: Vec<f64> = (0..3).map(|_| rng.gen_range(0.2..2.0)).collect();
            let rho0 = t.density_normalized(raw0).unwrap();
            let rho1 = t.density_normalized(raw1).unwrap();
            let report = convexity_check(&t, &rho0, &rho1, kappa, &opts).unwrap();
            assert!(
                report.consistent,
                "worst slack {} below -{}",
                report.worst_slack, report.tolerance
            );
            // Endpoint slacks vanish by construction.
            assert!(report.slacks.first().unwrap().1.abs() <= 1e-10);
            assert!(report.slacks.last().unwrap().1.abs() <= 1e-10);
        }
    }

    #[test]
    fn zero_kappa_reduces_to_plain_convexity_report() {
        let t = k2();
        let rho0 = t.density(vec![1.6, 0.4]).unwrap();
        let rho1 = t.density(vec![0.4, 1.6]).unwrap();
        let opts = TransportOptions { initial_grid: 16, refinements: 0, ..Default::default() };
        let with_kappa = convexity_check(&t, &rho0, &rho1, 2.0, &opts).unwrap();
        let plain = convexity_check(&t, &rho0, &rho1, 0.0, &opts).unwrap();
        // Dropping the quadratic term can only increase every slack.
        assert!(plain.worst_slack >= with_kappa.worst_slack - 1e-12);
        assert!(plain.consistent);
    }

    #[test]
    fn input_validation() {
        let t = k2();
        let rho = t.density(vec![1.0, 1.0]).unwrap();
        let opts = TransportOptions { initial_grid: 1, refinements: 0, ..Default::default() };
        assert!(matches!(
            distance_upper(&t, &rho, &rho, &opts),
            Err(TransportError::BadGrid(_))
        ));
        let big = models::bernoulli_laplace(8, 4).unwrap().into_triple();
        let uniform = big.uniform_density();
        assert!(matches!(
            distance_upper(&big, &uniform, &uniform, &TransportOptions::default()),
            Err(TransportError::TooLarge { states: 70, cap: 24 })
        ));
        // A zero entry is a valid density but not a valid endpoint.
        let zero = t.density_normalized(vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            distance_upper(&t, &zero, &rho, &TransportOptions::default()),
            Err(TransportError::BadEndpoint { state: 0, .. })
        ));
    }

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        let t = models::bernoulli_laplace(3, 1).unwrap().into_triple();
        let mut rng = ChaCha8Rng::seed_from_u64(0x11);
        let intervals = 8;
        let times = uniform_times(intervals);
        let r0 = vec![1.5, 0.9, 0.6];
        let r1 = vec![0.5, 0.8, 1.7];
        let mass = |v: &[f64]| -> f64 { v.iter().zip(t.pi()).map(|(&r, &p)| r * p).sum() };
        let mut rhos: Vec<Vec<f64>> = (0..=intervals)
            .map(|k| {
                let s = k as f64 / intervals as f64;
                let mut v: Vec<f64> =
                    (0..3).map(|x| (1.0 - s) * r0[x] + s * r1[x]).collect();
                if k > 0 && k < intervals {
                    for e in &mut v {
                        *e *= rng.gen_range(0.9..1.1);
                    }
                }
                let m = mass(&v);
                for e in &mut v {
                    *e /= m;
                }
                v
            })
            .collect();
        let (_, grad) = action_and_gradient(&t, &times, &rhos).unwrap();
        let h = 1e-6;
        for j in [1, 4, intervals - 1] {
            for x in 0..3 {
                let keep = rhos[j][x];
                rhos[j][x] = keep + h;
                let up = eliminate_potentials(&t, &times, &rhos).unwrap().0;
                rhos[j][x] = keep - h;
                let dn = eliminate_potentials(&t, &times, &rhos).unwrap().0;
                rhos[j][x] = keep;
                let fd = (up - dn) / (2.0 * h);
                assert_relative_eq!(grad[j][x], fd, max_relative = 1e-6, epsilon = 1e-9);
            }
        }
    }
}
