//! Reversible Markov triples and the discrete calculus built on them.
//!
//! A [`MarkovTriple`] bundles a finite state space, an irreducible rate
//! matrix `Q`, and a stationary distribution `pi` satisfying detailed
//! balance `pi(x) Q(x,y) = pi(y) Q(y,x)`. Construction validates all of
//! this and reports every violation found. On top of the triple the module
//! provides the generator, gradient, divergence, Dirichlet form, the
//! `pi`-weighted inner products on vertices and edges, relative entropy,
//! the heat semigroup, and the spectral gap, plus a plain-text edge-list
//! format for loading chains from disk.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

/// Single validation failure discovered while building a triple.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("state space is empty")]
    EmptyStateSpace,
    #[error("number of weights ({weights}) does not match number of labels ({labels})")]
    WeightCountMismatch { weights: usize, labels: usize },
    #[error("label {label:?} appears more than once")]
    DuplicateLabel { label: String },
    #[error("state {state} ({label:?}) has nonpositive or non-finite weight {weight}")]
    BadWeight { state: usize, label: String, weight: f64 },
    #[error("rate entry ({x}, {y}) is out of bounds for {n} states")]
    IndexOutOfBounds { x: usize, y: usize, n: usize },
    #[error("rate from {x} to {y} is negative or non-finite ({rate})")]
    BadRate { x: usize, y: usize, rate: f64 },
    #[error("self-loop rate given for state {x}; rates must connect distinct states")]
    SelfLoop { x: usize },
    #[error("duplicate rate entry for ({x}, {y})")]
    DuplicateRate { x: usize, y: usize },
    #[error("rate from {x} to {y} is positive but the reverse rate is missing")]
    OneWayEdge { x: usize, y: usize },
    #[error("detailed balance fails on edge ({x}, {y}): relative residual {residual:e}")]
    DetailedBalance { x: usize, y: usize, residual: f64 },
    #[error("chain is reducible: only {reachable} of {n} states are reachable from state 0")]
    Reducible { reachable: usize, n: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarkovError {
    #[error("invalid Markov triple: {}", format_violations(violations))]
    Invalid { violations: Vec<Violation> },
    #[error("density has an entry that is negative or non-finite at state {state}: {value}")]
    NegativeDensity { state: usize, value: f64 },
    #[error("density mass {mass} deviates from 1 by more than {tolerance:e}")]
    UnnormalizedDensity { mass: f64, tolerance: f64 },
    #[error("density has no mass to normalize (total {mass})")]
    ZeroMass { mass: f64 },
    #[error("vector length {got} does not match state count {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("heat flow time must be finite and nonnegative, got {t}")]
    InvalidTime { t: f64 },
}

fn format_violations(violations: &[Violation]) -> String {
    let items: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
    items.join("; ")
}

/// Tolerances applied while validating a triple.
#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    /// Maximum relative residual allowed in `pi(x) Q(x,y) = pi(y) Q(y,x)`.
    pub balance_tolerance: f64,
    /// Maximum deviation of a density's mass from 1 accepted by [`MarkovTriple::density`].
    pub mass_tolerance: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            balance_tolerance: 1e-12,
            mass_tolerance: 1e-12,
        }
    }
}

/// Undirected edge of the support graph, stored with both directed rates
/// and the (symmetrized) conductance `c(x,y) = pi(x) Q(x,y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub x: usize,
    pub y: usize,
    pub rate_xy: f64,
    pub rate_yx: f64,
    pub conductance: f64,
}

/// Probability density relative to the stationary distribution:
/// nonnegative values with `sum_x pi(x) rho(x) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    values: Vec<f64>,
}

impl Density {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl std::ops::Index<usize> for Density {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// Function on directed edges, stored in the same layout as the triple's
/// adjacency structure. Produced by [`MarkovTriple::gradient`].
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFunction {
    values: Vec<f64>,
}

impl EdgeFunction {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// Validated reversible Markov triple: state space, rates, stationary law.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovTriple {
    labels: Vec<String>,
    pi: Vec<f64>,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    rate: Vec<f64>,
    /// Symmetrized conductance per directed slot, aligned with `col`.
    cond: Vec<f64>,
    edges: Vec<Edge>,
    mass_tolerance: f64,
}

impl MarkovTriple {
    /// Build and validate a triple with default tolerances.
    ///
    /// `rates` lists directed entries `(x, y, Q(x,y))`; both orientations of
    /// every edge must be present. `weights` are positive and normalized
    /// internally to the stationary distribution.
    pub fn new(
        labels: Vec<String>,
        weights: Vec<f64>,
        rates: Vec<(usize, usize, f64)>,
    ) -> Result<Self, MarkovError> {
        Self::with_options(labels, weights, rates, BuildOptions::default())
    }

    pub fn with_options(
        labels: Vec<String>,
        weights: Vec<f64>,
        rates: Vec<(usize, usize, f64)>,
        options: BuildOptions,
    ) -> Result<Self, MarkovError> {
        let mut violations = Vec::new();
        let n = labels.len();
        if n == 0 {
            violations.push(Violation::EmptyStateSpace);
        }
        if weights.len() != n {
            violations.push(Violation::WeightCountMismatch {
                weights: weights.len(),
                labels: n,
            });
        }
        {
            let mut sorted: Vec<&String> = labels.iter().collect();
            sorted.sort();
            for pair in sorted.windows(2) {
                if pair[0] == pair[1] {
                    violations.push(Violation::DuplicateLabel {
                        label: pair[0].clone(),
                    });
                }
            }
            violations.dedup();
        }
        for (state, &w) in weights.iter().enumerate() {
            if !(w.is_finite() && w > 0.0) {
                violations.push(Violation::BadWeight {
                    state,
                    label: labels.get(state).cloned().unwrap_or_default(),
                    weight: w,
                });
            }
        }
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for &(x, y, q) in &rates {
            if x >= n || y >= n {
                violations.push(Violation::IndexOutOfBounds { x, y, n });
                continue;
            }
            if x == y {
                violations.push(Violation::SelfLoop { x });
                continue;
            }
            if !(q.is_finite() && q >= 0.0) {
                violations.push(Violation::BadRate { x, y, rate: q });
                continue;
            }
            if q > 0.0 {
                entries.push((x, y, q));
            }
        }
        entries.sort_by_key(|&(x, y, _)| (x, y));
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 && pair[0].1 == pair[1].1 {
                violations.push(Violation::DuplicateRate {
                    x: pair[0].0,
                    y: pair[0].1,
                });
            }
        }
        if !violations.is_empty() {
            return Err(MarkovError::Invalid { violations });
        }

        let total: f64 = weights.iter().sum();
        let pi: Vec<f64> = weights.iter().map(|&w| w / total).collect();

        // CSR over the (deduplicated, sorted) directed entries.
        let mut row_ptr = vec![0usize; n + 1];
        for &(x, _, _) in &entries {
            row_ptr[x + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut col = vec![0usize; entries.len()];
        let mut rate = vec![0.0f64; entries.len()];
        {
            let mut cursor = row_ptr.clone();
            for &(x, y, q) in &entries {
                col[cursor[x]] = y;
                rate[cursor[x]] = q;
                cursor[x] += 1;
            }
        }
        let slot = |x: usize, y: usize| -> Option<usize> {
            let lo = row_ptr[x];
            let hi = row_ptr[x + 1];
            col[lo..hi].binary_search(&y).ok().map(|k| lo + k)
        };

        // Reversibility: mutual support plus detailed balance.
        let mut edges = Vec::new();
        for x in 0..n {
            for k in row_ptr[x]..row_ptr[x + 1] {
                let y = col[k];
                match slot(y, x) {
                    None => {
                        violations.push(Violation::OneWayEdge { x, y });
                    }
                    Some(back) if x < y => {
                        let c_xy = pi[x] * rate[k];
                        let c_yx = pi[y] * rate[back];
                        let scale = c_xy.max(c_yx);
                        let residual = (c_xy - c_yx).abs() / scale;
                        if residual > options.balance_tolerance {
                            violations.push(Violation::DetailedBalance { x, y, residual });
                        } else {
                            edges.push(Edge {
                                x,
                                y,
                                rate_xy: rate[k],
                                rate_yx: rate[back],
                                conductance: 0.5 * (c_xy + c_yx),
                            });
                        }
                    }
                    Some(_) => {}
                }
            }
        }

        // Irreducibility on the undirected support graph.
        if n > 0 {
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            let mut reachable = 1usize;
            while let Some(x) = stack.pop() {
                for k in row_ptr[x]..row_ptr[x + 1] {
                    let y = col[k];
                    if !seen[y] {
                        seen[y] = true;
                        reachable += 1;
                        stack.push(y);
                    }
                }
            }
            if reachable != n {
                violations.push(Violation::Reducible { reachable, n });
            }
        }

        if !violations.is_empty() {
            return Err(MarkovError::Invalid { violations });
        }

        let mut cond = vec![0.0f64; rate.len()];
        for e in &edges {
            let fwd = slot(e.x, e.y).expect("edge slot exists");
            let bwd = slot(e.y, e.x).expect("edge slot exists");
            cond[fwd] = e.conductance;
            cond[bwd] = e.conductance;
        }

        Ok(Self {
            labels,
            pi,
            row_ptr,
            col,
            rate,
            cond,
            edges,
            mass_tolerance: options.mass_tolerance,
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, x: usize) -> &str {
        &self.labels[x]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    /// Undirected edges of the support graph.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Directed neighbors of `x` with their rates `Q(x, y)`.
    pub fn neighbors(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[x];
        let hi = self.row_ptr[x + 1];
        self.col[lo..hi].iter().copied().zip(self.rate[lo..hi].iter().copied())
    }

    /// Neighbors of `x` with the symmetric conductance `c(x, y) = pi(x) Q(x, y)`.
    pub fn neighbors_with_conductance(
        &self,
        x: usize,
    ) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        let lo = self.row_ptr[x];
        let hi = self.row_ptr[x + 1];
        self.col[lo..hi]
            .iter()
            .copied()
            .zip(self.rate[lo..hi].iter().copied())
            .zip(self.cond[lo..hi].iter().copied())
            .map(|((y, q), c)| (y, q, c))
    }

    pub fn degree(&self, x: usize) -> usize {
        self.row_ptr[x + 1] - self.row_ptr[x]
    }

    /// `Q(x, y)`, zero when the states are not adjacent.
    pub fn rate(&self, x: usize, y: usize) -> f64 {
        self.slot(x, y).map_or(0.0, |k| self.rate[k])
    }

    /// Symmetric conductance `c(x, y)`, zero when not adjacent.
    pub fn conductance(&self, x: usize, y: usize) -> f64 {
        self.slot(x, y).map_or(0.0, |k| self.cond[k])
    }

    pub fn is_edge(&self, x: usize, y: usize) -> bool {
        self.slot(x, y).is_some()
    }

    fn slot(&self, x: usize, y: usize) -> Option<usize> {
        let lo = self.row_ptr[x];
        let hi = self.row_ptr[x + 1];
        self.col[lo..hi].binary_search(&y).ok().map(|k| lo + k)
    }

    /// When every state has the same degree `d`, every positive rate the
    /// same value `q`, and `pi` is uniform, returns `(d, q)`.
    pub fn regular_uniform(&self) -> Option<(usize, f64)> {
        if self.n() == 0 || self.rate.is_empty() {
            return None;
        }
        let d = self.degree(0);
        if (1..self.n()).any(|x| self.degree(x) != d) {
            return None;
        }
        let q = self.rate[0];
        if self.rate.iter().any(|&r| r != q) {
            return None;
        }
        let p = self.pi[0];
        if self.pi.iter().any(|&w| w != p) {
            return None;
        }
        Some((d, q))
    }

    /// Validate a vector as a density: nonnegative, mass `sum pi rho = 1`
    /// within the build tolerance.
    pub fn density(&self, values: Vec<f64>) -> Result<Density, MarkovError> {
        self.check_len(values.len())?;
        for (state, &v) in values.iter().enumerate() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(MarkovError::NegativeDensity { state, value: v });
            }
        }
        let mass: f64 = values.iter().zip(&self.pi).map(|(&v, &p)| v * p).sum();
        if (mass - 1.0).abs() > self.mass_tolerance {
            return Err(MarkovError::UnnormalizedDensity {
                mass,
                tolerance: self.mass_tolerance,
            });
        }
        Ok(Density { values })
    }

    /// Rescale a nonnegative vector with positive mass into a density.
    pub fn density_normalized(&self, mut values: Vec<f64>) -> Result<Density, MarkovError> {
        self.check_len(values.len())?;
        for (state, &v) in values.iter().enumerate() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(MarkovError::NegativeDensity { state, value: v });
            }
        }
        let mass: f64 = values.iter().zip(&self.pi).map(|(&v, &p)| v * p).sum();
        if !(mass.is_finite() && mass > 0.0) {
            return Err(MarkovError::ZeroMass { mass });
        }
        for v in &mut values {
            *v /= mass;
        }
        Ok(Density { values })
    }

    /// The constant density `rho = 1`.
    pub fn uniform_density(&self) -> Density {
        Density {
            values: vec![1.0; self.n()],
        }
    }

    fn check_len(&self, got: usize) -> Result<(), MarkovError> {
        if got == self.n() {
            Ok(())
        } else {
            Err(MarkovError::LengthMismatch {
                got,
                expected: self.n(),
            })
        }
    }

    /// Generator: `(L f)(x) = sum_y Q(x,y) (f(y) - f(x))`.
    pub fn generator_apply(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.n(), "function length must match state count");
        (0..self.n())
            .map(|x| {
                self.neighbors(x)
                    .map(|(y, q)| q * (f[y] - f[x]))
                    .sum::<f64>()
            })
            .collect()
    }

    /// Discrete gradient `(grad f)(x, y) = f(y) - f(x)` on directed edges.
    pub fn gradient(&self, f: &[f64]) -> EdgeFunction {
        assert_eq!(f.len(), self.n(), "function length must match state count");
        let mut values = vec![0.0; self.col.len()];
        for x in 0..self.n() {
            for k in self.row_ptr[x]..self.row_ptr[x + 1] {
                values[k] = f[self.col[k]] - f[x];
            }
        }
        EdgeFunction { values }
    }

    /// Divergence, the negative adjoint of the gradient:
    /// `(div F)(x) = (1/2) sum_y (F(x,y) - F(y,x)) Q(x,y)`, so that
    /// `<grad f, F>_edge = -<f, div F>_vertex`.
    pub fn divergence(&self, field: &EdgeFunction) -> Vec<f64> {
        assert_eq!(field.values.len(), self.col.len(), "edge layout mismatch");
        (0..self.n())
            .map(|x| {
                let mut acc = 0.0;
                for k in self.row_ptr[x]..self.row_ptr[x + 1] {
                    let y = self.col[k];
                    let back = self.slot(y, x).expect("reversible support");
                    acc += 0.5 * (field.values[k] - field.values[back]) * self.rate[k];
                }
                acc
            })
            .collect()
    }

    /// Vertex inner product `<f, g> = sum_x f(x) g(x) pi(x)`.
    pub fn vertex_inner(&self, f: &[f64], g: &[f64]) -> f64 {
        assert_eq!(f.len(), self.n(), "function length must match state count");
        assert_eq!(g.len(), self.n(), "function length must match state count");
        f.iter()
            .zip(g)
            .zip(&self.pi)
            .map(|((&a, &b), &p)| a * b * p)
            .sum()
    }

    /// Edge inner product
    /// `<F, G> = (1/2) sum_{x,y} F(x,y) G(x,y) Q(x,y) pi(x)`.
    pub fn edge_inner(&self, f: &EdgeFunction, g: &EdgeFunction) -> f64 {
        assert_eq!(f.values.len(), self.col.len(), "edge layout mismatch");
        assert_eq!(g.values.len(), self.col.len(), "edge layout mismatch");
        let mut acc = 0.0;
        for x in 0..self.n() {
            for k in self.row_ptr[x]..self.row_ptr[x + 1] {
                acc += 0.5 * f.values[k] * g.values[k] * self.cond[k];
            }
        }
        acc
    }

    /// Dirichlet form
    /// `E(f, g) = (1/2) sum_{x,y} (f(y)-f(x))(g(y)-g(x)) Q(x,y) pi(x) = -<f, L g>`.
    pub fn dirichlet(&self, f: &[f64], g: &[f64]) -> f64 {
        assert_eq!(f.len(), self.n(), "function length must match state count");
        assert_eq!(g.len(), self.n(), "function length must match state count");
        let mut acc = 0.0;
        for x in 0..self.n() {
            for k in self.row_ptr[x]..self.row_ptr[x + 1] {
                let y = self.col[k];
                acc += 0.5 * (f[y] - f[x]) * (g[y] - g[x]) * self.cond[k];
            }
        }
        acc
    }

    /// Relative entropy `H(rho) = sum_x pi(x) rho(x) ln rho(x)` with the
    /// convention `0 ln 0 = 0`.
    pub fn entropy(&self, rho: &Density) -> f64 {
        rho.values
            .iter()
            .zip(&self.pi)
            .map(|(&r, &p)| if r > 0.0 { p * r * r.ln() } else { 0.0 })
            .sum()
    }

    /// Symmetrization `D^{1/2} L D^{-1/2}` with `D = diag(pi)`; shares the
    /// spectrum of `L` and is exactly symmetric thanks to detailed balance.
    pub(crate) fn symmetrized_generator(&self) -> DMatrix<f64> {
        let n = self.n();
        let sqrt_pi: Vec<f64> = self.pi.iter().map(|&p| p.sqrt()).collect();
        let mut m = DMatrix::zeros(n, n);
        for x in 0..n {
            let mut diag = 0.0;
            for k in self.row_ptr[x]..self.row_ptr[x + 1] {
                let y = self.col[k];
                // c(x,y) / sqrt(pi_x pi_y), symmetric by construction.
                m[(x, y)] = self.cond[k] / (sqrt_pi[x] * sqrt_pi[y]);
                diag += self.rate[k];
            }
            m[(x, x)] = -diag;
        }
        // Enforce exact symmetry against rounding in the division.
        for x in 0..n {
            for y in (x + 1)..n {
                let avg = 0.5 * (m[(x, y)] + m[(y, x)]);
                m[(x, y)] = avg;
                m[(y, x)] = avg;
            }
        }
        m
    }

    /// Spectral gap: smallest nonzero eigenvalue of `-L`.
    pub fn spectral_gap(&self) -> f64 {
        if self.n() < 2 {
            return 0.0;
        }
        let eig = SymmetricEigen::new(-self.symmetrized_generator());
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        vals[1].max(0.0)
    }

    /// Evolve a density by the heat semigroup for time `t`, choosing the
    /// method automatically (dense eigendecomposition up to 1000 states,
    /// adaptive integration beyond).
    pub fn heat_flow(&self, rho: &Density, t: f64) -> Result<Density, MarkovError> {
        let method = if self.n() <= 1000 {
            HeatMethod::Eigen
        } else {
            HeatMethod::Integrate
        };
        self.heat_flow_with(rho, t, method)
    }

    /// Heat flow with an explicit method choice.
    pub fn heat_flow_with(
        &self,
        rho: &Density,
        t: f64,
        method: HeatMethod,
    ) -> Result<Density, MarkovError> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(MarkovError::InvalidTime { t });
        }
        if t == 0.0 {
            return Ok(rho.clone());
        }
        let evolved = match method {
            HeatMethod::Eigen => self.heat_eigen(rho.values(), t),
            HeatMethod::Integrate => self.heat_integrate(rho.values(), t),
        };
        // The exact flow preserves mass and positivity; squash the
        // integrator's rounding so the result is again a valid density.
        let clamped: Vec<f64> = evolved.into_iter().map(|v| v.max(0.0)).collect();
        self.density_normalized(clamped)
    }

    fn heat_eigen(&self, rho: &[f64], t: f64) -> Vec<f64> {
        let n = self.n();
        let eig = SymmetricEigen::new(self.symmetrized_generator());
        let sqrt_pi: Vec<f64> = self.pi.iter().map(|&p| p.sqrt()).collect();
        let scaled = DVector::from_iterator(n, rho.iter().zip(&sqrt_pi).map(|(&r, &s)| r * s));
        let coeffs = eig.eigenvectors.transpose() * scaled;
        let mut propagated = DVector::zeros(n);
        for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
            propagated[i] = coeffs[i] * (t * lambda).exp();
        }
        let back = &eig.eigenvectors * propagated;
        (0..n).map(|x| back[x] / sqrt_pi[x]).collect()
    }

    /// Adaptive embedded Runge-Kutta (Cash-Karp 4/5) on the sparse generator.
    fn heat_integrate(&self, rho: &[f64], t: f64) -> Vec<f64> {
        let rel_tol = 1e-10;
        let abs_tol = 1e-13;
        let max_rate: f64 = (0..self.n())
            .map(|x| self.neighbors(x).map(|(_, q)| q).sum::<f64>())
            .fold(0.0, f64::max);
        let mut state: Vec<f64> = rho.to_vec();
        let mut time = 0.0;
        let mut dt = (t / 16.0).min(0.5 / max_rate.max(1e-300));
        // Cash-Karp tableau.
        const A: [[f64; 5]; 5] = [
            [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
            [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
            [3.0 / 10.0, -9.0 / 10.0, 6.0 / 5.0, 0.0, 0.0],
            [-11.0 / 54.0, 5.0 / 2.0, -70.0 / 27.0, 35.0 / 27.0, 0.0],
            [
                1631.0 / 55296.0,
                175.0 / 512.0,
                575.0 / 13824.0,
                44275.0 / 110592.0,
                253.0 / 4096.0,
            ],
        ];
        const B5: [f64; 6] = [
            37.0 / 378.0,
            0.0,
            250.0 / 621.0,
            125.0 / 594.0,
            0.0,
            512.0 / 1771.0,
        ];
        const B4: [f64; 6] = [
            2825.0 / 27648.0,
            0.0,
            18575.0 / 48384.0,
            13525.0 / 55296.0,
            277.0 / 14336.0,
            1.0 / 4.0,
        ];
        while time < t {
            if time + dt > t {
                dt = t - time;
            }
            let mut stages: Vec<Vec<f64>> = Vec::with_capacity(6);
            stages.push(self.generator_apply(&state));
            for s in 0..5 {
                let mut arg = state.clone();
                for (j, stage) in stages.iter().enumerate() {
                    let w = A[s][j] * dt;
                    if w != 0.0 {
                        for (a, &k) in arg.iter_mut().zip(stage) {
                            *a += w * k;
                        }
                    }
                }
                stages.push(self.generator_apply(&arg));
            }
            let mut next = state.clone();
            let mut err: f64 = 0.0;
            for i in 0..state.len() {
                let mut high = 0.0;
                let mut low = 0.0;
                for (j, stage) in stages.iter().enumerate() {
                    high += B5[j] * stage[i];
                    low += B4[j] * stage[i];
                }
                next[i] += dt * high;
                let scale = abs_tol + rel_tol * state[i].abs().max(next[i].abs());
                err = err.max((dt * (high - low)).abs() / scale);
            }
            if err <= 1.0 {
                state = next;
                time += dt;
            }
            let grow = 0.9 * err.max(1e-10).powf(-0.2);
            dt *= grow.clamp(0.2, 5.0);
        }
        state
    }
}

/// Strategy for computing the heat semigroup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatMethod {
    /// Dense eigendecomposition of the symmetrized generator.
    Eigen,
    /// Adaptive embedded Runge-Kutta on the sparse generator.
    Integrate,
}

/// Error from reading the plain-text edge-list format.
#[derive(Debug, Error)]
pub enum EdgeListError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Invalid(#[from] MarkovError),
}

/// Parse a chain from the edge-list text format.
///
/// Lines are either comments (`# ...`), stationary weights (`pi LABEL W`),
/// or directed rates (`X Y RATE`); labels are arbitrary whitespace-free
/// strings registered in order of first appearance, and every state needs
/// exactly one `pi` line.
pub fn parse_edge_list(text: &str) -> Result<MarkovTriple, EdgeListError> {
    let mut labels: Vec<String> = Vec::new();
    let mut weight_of: Vec<Option<f64>> = Vec::new();
    let mut rates: Vec<(usize, usize, f64)> = Vec::new();
    let intern = |labels: &mut Vec<String>, weight_of: &mut Vec<Option<f64>>, name: &str| {
        if let Some(i) = labels.iter().position(|l| l == name) {
            i
        } else {
            labels.push(name.to_string());
            weight_of.push(None);
            labels.len() - 1
        }
    };
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields[0] == "pi" {
            if fields.len() != 3 {
                return Err(EdgeListError::Parse {
                    line,
                    message: format!("expected `pi LABEL WEIGHT`, got {} fields", fields.len()),
                });
            }
            let w: f64 = fields[2].parse().map_err(|_| EdgeListError::Parse {
                line,
                message: format!("cannot parse weight {:?}", fields[2]),
            })?;
            let idx = intern(&mut labels, &mut weight_of, fields[1]);
            if weight_of[idx].is_some() {
                return Err(EdgeListError::Parse {
                    line,
                    message: format!("duplicate pi line for {:?}", fields[1]),
                });
            }
            weight_of[idx] = Some(w);
        } else {
            if fields.len() != 3 {
                return Err(EdgeListError::Parse {
                    line,
                    message: format!("expected `X Y RATE`, got {} fields", fields.len()),
                });
            }
            let q: f64 = fields[2].parse().map_err(|_| EdgeListError::Parse {
                line,
                message: format!("cannot parse rate {:?}", fields[2]),
            })?;
            let x = intern(&mut labels, &mut weight_of, fields[0]);
            let y = intern(&mut labels, &mut weight_of, fields[1]);
            rates.push((x, y, q));
        }
    }
    let mut weights = Vec::with_capacity(labels.len());
    for (i, w) in weight_of.iter().enumerate() {
        match w {
            Some(w) => weights.push(*w),
            None => {
                return Err(EdgeListError::Parse {
                    line: 0,
                    message: format!("state {:?} has no pi line", labels[i]),
                })
            }
        }
    }
    Ok(MarkovTriple::new(labels, weights, rates)?)
}

/// Serialize a chain to the edge-list text format; floats round-trip exactly.
pub fn write_edge_list(triple: &MarkovTriple) -> String {
    let mut out = String::new();
    out.push_str("# states\n");
    for (label, &p) in triple.labels().iter().zip(triple.pi()) {
        out.push_str(&format!("pi {label} {p}\n"));
    }
    out.push_str("# directed rates\n");
    for x in 0..triple.n() {
        for (y, q) in triple.neighbors(x) {
            out.push_str(&format!("{} {} {}\n", triple.label(x), triple.label(y), q));
        }
    }
    out
}
