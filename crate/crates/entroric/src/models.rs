//! Built-in chain families and the local graph combinatorics used by the
//! curvature certificates.
//!
//! The families are the Bernoulli-Laplace exclusion walk (`k` particles
//! exchanging over `n` sites), the random-transposition walk on the
//! symmetric group, the complete-graph walk, and products of chains. Each
//! constructor returns a [`Model`]: a validated triple plus exact rational
//! rate metadata and, for the structured families, a decodable state
//! encoding that lets pair classification recover the generator move
//! behind every edge.
//!
//! The second half of the module enumerates triangles, four-cycles and
//! wedges of arbitrary triples; the certificates consume these to verify
//! the local geometry they rely on.

use crate::markov::{MarkovError, MarkovTriple};
use num_rational::Rational64;
use std::collections::BTreeSet;
use thiserror::Error;

/// Hard cap on state counts for the built-in constructors.
const MAX_STATES: u64 = 250_000;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bernoulli-laplace urn needs n > 1 and 1 <= k <= n-1, got n={n}, k={k}")]
    BadUrnParameters { n: u32, k: u32 },
    #[error("random transpositions need 2 <= n <= 8, got n={n}")]
    BadSymmetricGroupSize { n: u32 },
    #[error("complete graph needs n >= 2, got n={n}")]
    BadCompleteSize { n: u32 },
    #[error("model would have {states} states, above the cap of {cap}")]
    TooLarge { states: u64, cap: u64 },
    #[error("pair classification needs a subset- or permutation-encoded model")]
    UnsupportedClassification,
    #[error(transparent)]
    Markov(#[from] MarkovError),
}

/// Decodable state representation, kept alongside the triple so that edge
/// moves can be recovered exactly.
#[derive(Debug, Clone, PartialEq)]
pub enum StateEncoding {
    /// States are `k`-subsets of `{0, ..., n-1}` stored as bitmasks in
    /// increasing mask order.
    Subsets { n: u32, k: u32, masks: Vec<u32> },
    /// States are permutations of `{0, ..., n-1}` in one-line notation,
    /// in lexicographic order.
    Permutations { n: u32, words: Vec<Vec<u8>> },
    /// No structure beyond the triple itself.
    Opaque,
}

/// A chain family instance: validated triple plus construction metadata.
#[derive(Debug, Clone)]
pub struct Model {
    name: String,
    triple: MarkovTriple,
    uniform_rate: Option<Rational64>,
    encoding: StateEncoding,
}

impl Model {
    /// Wrap an externally built triple (e.g. loaded from a file).
    pub fn from_triple(name: impl Into<String>, triple: MarkovTriple) -> Self {
        Self {
            name: name.into(),
            triple,
            uniform_rate: None,
            encoding: StateEncoding::Opaque,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn triple(&self) -> &MarkovTriple {
        &self.triple
    }

    pub fn into_triple(self) -> MarkovTriple {
        self.triple
    }

    /// Exact uniform jump rate, when the construction guarantees one.
    pub fn uniform_rate(&self) -> Option<Rational64> {
        self.uniform_rate
    }

    pub fn encoding(&self) -> &StateEncoding {
        &self.encoding
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

fn subset_label(mask: u32, n: u32) -> String {
    let elems: Vec<String> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| i.to_string()).collect();
    format!("{{{}}}", elems.join(","))
}

/// Bernoulli-Laplace exclusion walk: `k` particles on `n` sites, a uniformly
/// chosen particle and hole swap. States are the `k`-subsets of the site
/// set, each of the `k (n-k)` swaps fires at rate `1 / (k (n-k))`, and the
/// stationary law is uniform.
pub fn bernoulli_laplace(n: u32, k: u32) -> Result<Model, ModelError> {
    if n < 2 || k == 0 || k >= n {
        return Err(ModelError::BadUrnParameters { n, k });
    }
    let states = binomial(n as u64, k as u64);
    if states > MAX_STATES {
        return Err(ModelError::TooLarge { states, cap: MAX_STATES });
    }
    let mut masks: Vec<u32> = (0u32..1 << n).filter(|m| m.count_ones() == k).collect();
    masks.sort_unstable();
    let index_of = |mask: u32| masks.binary_search(&mask).expect("closed under swaps");
    let degree = (k * (n - k)) as i64;
    let q = 1.0 / degree as f64;
    let mut rates = Vec::with_capacity(masks.len() * degree as usize);
    for (xi, &mask) in masks.iter().enumerate() {
        for i in 0..n {
            if mask >> i & 1 == 0 {
                continue;
            }
            for j in 0..n {
                if mask >> j & 1 == 1 {
                    continue;
                }
                let swapped = mask & !(1 << i) | 1 << j;
                rates.push((xi, index_of(swapped), q));
            }
        }
    }
    let labels: Vec<String> = masks.iter().map(|&m| subset_label(m, n)).collect();
    let triple = MarkovTriple::new(labels, vec![1.0; masks.len()], rates)?;
    Ok(Model {
        name: format!("bl({n},{k})"),
        triple,
        uniform_rate: Some(Rational64::new(1, degree)),
        encoding: StateEncoding::Subsets { n, k, masks },
    })
}

fn permutations_lex(n: u32) -> Vec<Vec<u8>> {
    let mut word: Vec<u8> = (0..n as u8).collect();
    let mut all = vec![word.clone()];
    // Standard next-permutation sweep produces lexicographic order.
    loop {
        let Some(i) = (0..word.len().saturating_sub(1)).rev().find(|&i| word[i] < word[i + 1])
        else {
            break;
        };
        let j = (i + 1..word.len()).rev().find(|&j| word[j] > word[i]).unwrap();
        word.swap(i, j);
        word[i + 1..].reverse();
        all.push(word.clone());
    }
    all
}

/// Random-transposition walk on the symmetric group: from `sigma`, each of
/// the `n(n-1)/2` transpositions `tau` leads to `tau . sigma` at rate
/// `2 / (n(n-1))`; the stationary law is uniform.
///
/// Composing on the left means a transposition of *values* `i` and `j`:
/// in one-line notation the positions holding `i` and `j` swap contents.
pub fn random_transposition(n: u32) -> Result<Model, ModelError> {
    if !(2..=8).contains(&n) {
        return Err(ModelError::BadSymmetricGroupSize { n });
    }
    let words = permutations_lex(n);
    let index_of = |w: &[u8]| {
        words
            .binary_search_by(|probe| probe.as_slice().cmp(w))
            .expect("closed under transpositions")
    };
    let degree = (n * (n - 1) / 2) as i64;
    let q = 1.0 / degree as f64;
    let mut rates = Vec::with_capacity(words.len() * degree as usize);
    for (xi, word) in words.iter().enumerate() {
        let mut position = vec![0usize; n as usize];
        for (p, &v) in word.iter().enumerate() {
            position[v as usize] = p;
        }
        for i in 0..n as usize {
            for j in (i + 1)..n as usize {
                let mut next = word.clone();
                next.swap(position[i], position[j]);
                rates.push((xi, index_of(&next), q));
            }
        }
    }
    let labels: Vec<String> = words
        .iter()
        .map(|w| w.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(""))
        .collect();
    let triple = MarkovTriple::new(labels, vec![1.0; words.len()], rates)?;
    Ok(Model {
        name: format!("rt({n})"),
        triple,
        uniform_rate: Some(Rational64::new(1, degree)),
        encoding: StateEncoding::Permutations { n, words },
    })
}

/// Complete-graph walk on `n` vertices with rates `1/(n-1)` and uniform law.
pub fn complete_graph(n: u32) -> Result<Model, ModelError> {
    if n < 2 {
        return Err(ModelError::BadCompleteSize { n });
    }
    if n as u64 > MAX_STATES {
        return Err(ModelError::TooLarge { states: n as u64, cap: MAX_STATES });
    }
    let q = 1.0 / (n - 1) as f64;
    let labels: Vec<String> = (0..n).map(|i| i.to_string()).collect();
    let mut rates = Vec::new();
    for x in 0..n as usize {
        for y in 0..n as usize {
            if x != y {
                rates.push((x, y, q));
            }
        }
    }
    let triple = MarkovTriple::new(labels, vec![1.0; n as usize], rates)?;
    Ok(Model {
        name: format!("complete({n})"),
        triple,
        uniform_rate: Some(Rational64::new(1, (n - 1) as i64)),
        encoding: StateEncoding::Opaque,
    })
}

/// Product chain: coordinates move independently with their factor rates,
/// the generator is the unweighted sum of the coordinate generators, and
/// the stationary law is the product law.
pub fn product_chain(t1: &MarkovTriple, t2: &MarkovTriple) -> Result<MarkovTriple, ModelError> {
    let states = t1.n() as u64 * t2.n() as u64;
    if states > MAX_STATES {
        return Err(ModelError::TooLarge { states, cap: MAX_STATES });
    }
    let n2 = t2.n();
    let idx = |x1: usize, x2: usize| x1 * n2 + x2;
    let mut labels = Vec::with_capacity(states as usize);
    let mut weights = Vec::with_capacity(states as usize);
    for x1 in 0..t1.n() {
        for x2 in 0..n2 {
            labels.push(format!("({},{})", t1.label(x1), t2.label(x2)));
            weights.push(t1.pi()[x1] * t2.pi()[x2]);
        }
    }
    let mut rates = Vec::new();
    for x1 in 0..t1.n() {
        for x2 in 0..n2 {
            for (y1, q) in t1.neighbors(x1) {
                rates.push((idx(x1, x2), idx(y1, x2), q));
            }
            for (y2, q) in t2.neighbors(x2) {
                rates.push((idx(x1, x2), idx(x1, y2), q));
            }
        }
    }
    Ok(MarkovTriple::new(labels, weights, rates)?)
}

/// Product at the model level, combining rate metadata.
pub fn product_model(a: &Model, b: &Model) -> Result<Model, ModelError> {
    let triple = product_chain(a.triple(), b.triple())?;
    let uniform_rate = match (a.uniform_rate, b.uniform_rate) {
        (Some(p), Some(q)) if p == q => Some(p),
        _ => None,
    };
    Ok(Model {
        name: format!("product({},{})", a.name, b.name),
        triple,
        uniform_rate,
        encoding: StateEncoding::Opaque,
    })
}

/// Ordered pair of distinct edges sharing a vertex: `(center, left)` and
/// `(center, right)` with `left != right`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Wedge {
    pub center: usize,
    pub left: usize,
    pub right: usize,
}

/// All ordered wedges of the support graph.
pub fn wedges(t: &MarkovTriple) -> Vec<Wedge> {
    let mut out = Vec::new();
    for center in 0..t.n() {
        let nbrs: Vec<usize> = t.neighbors(center).map(|(y, _)| y).collect();
        for &left in &nbrs {
            for &right in &nbrs {
                if left != right {
                    out.push(Wedge { center, left, right });
                }
            }
        }
    }
    out
}

/// All triangles `{x, y, z}` of the support graph, each listed once with
/// `x < y < z`.
pub fn enumerate_triangles(t: &MarkovTriple) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for e in t.edges() {
        let (x, y) = (e.x, e.y);
        for (z, _) in t.neighbors(x) {
            if z > y && t.is_edge(y, z) {
                out.push([x, y, z]);
            }
        }
    }
    out
}

/// Number of triangles through each undirected edge, aligned with
/// [`MarkovTriple::edges`].
pub fn edge_triangle_counts(t: &MarkovTriple) -> Vec<usize> {
    t.edges()
        .iter()
        .map(|e| {
            t.neighbors(e.x)
                .filter(|&(z, _)| z != e.y && t.is_edge(e.y, z))
                .count()
        })
        .collect()
}

/// Lexicographically minimal representative of a 4-cycle under rotation
/// and reflection.
fn canonical_cycle(c: [usize; 4]) -> [usize; 4] {
    let mut best = c;
    for r in 0..4 {
        for reflect in [false, true] {
            let mut cand = [0usize; 4];
            for (i, slot) in cand.iter_mut().enumerate() {
                let pos = if reflect { (r + 4 - i) % 4 } else { (r + i) % 4 };
                *slot = c[pos];
            }
            if cand < best {
                best = cand;
            }
        }
    }
    best
}

/// All four-cycles `x1-x2-x3-x4-x1` of the support graph (chords allowed),
/// each listed once in canonical orientation.
pub fn enumerate_squares(t: &MarkovTriple) -> Vec<[usize; 4]> {
    let mut seen = BTreeSet::new();
    for x in 0..t.n() {
        for v in (x + 1)..t.n() {
            // x and v as opposite corners; any two distinct common
            // neighbors close a four-cycle.
            let common: Vec<usize> = t
                .neighbors(x)
                .filter(|&(y, _)| t.is_edge(y, v))
                .map(|(y, _)| y)
                .collect();
            for (i, &y) in common.iter().enumerate() {
                for &z in &common[i + 1..] {
                    seen.insert(canonical_cycle([x, y, v, z]));
                }
            }
        }
    }
    seen.into_iter().collect()
}

/// A four-cycle is chordless when neither diagonal is an edge.
pub fn is_chordless_square(t: &MarkovTriple, sq: &[usize; 4]) -> bool {
    !t.is_edge(sq[0], sq[2]) && !t.is_edge(sq[1], sq[3])
}

/// The eight ordered wedges lying on a four-cycle (two per corner).
pub fn wedges_of_square(sq: &[usize; 4]) -> [Wedge; 8] {
    let mut out = [Wedge { center: 0, left: 0, right: 0 }; 8];
    for i in 0..4 {
        let prev = sq[(i + 3) % 4];
        let center = sq[i];
        let next = sq[(i + 1) % 4];
        out[2 * i] = Wedge { center, left: prev, right: next };
        out[2 * i + 1] = Wedge { center, left: next, right: prev };
    }
    out
}

/// Counts of four-cycles through a wedge `(x; y, z)`: completions are
/// vertices `v` adjacent to both arms, other than the center; the cycle is
/// chordless when additionally `v` is not adjacent to `x` and the arms are
/// not adjacent to each other.
pub fn wedge_square_counts(t: &MarkovTriple, w: &Wedge) -> (usize, usize) {
    let mut total = 0;
    let mut chordless = 0;
    let arms_adjacent = t.is_edge(w.left, w.right);
    for (v, _) in t.neighbors(w.left) {
        if v == w.center || !t.is_edge(v, w.right) {
            continue;
        }
        total += 1;
        if !arms_adjacent && !t.is_edge(v, w.center) {
            chordless += 1;
        }
    }
    (total, chordless)
}

/// Partition of the ordered wedges of a structured model by the moves
/// generating the two edges.
#[derive(Debug, Clone)]
pub struct PairClassification {
    /// "Overlapping" pairs: for subsets, the two swaps share the leaving or
    /// the entering site; for permutations, the two transpositions are
    /// disjoint.
    pub p1: Vec<Wedge>,
    /// The complementary wedges.
    pub p2: Vec<Wedge>,
}

/// Classify every ordered wedge of a subset- or permutation-encoded model
/// by its generator moves.
pub fn classify_pairs(model: &Model) -> Result<PairClassification, ModelError> {
    let t = model.triple();
    let mut p1 = Vec::new();
    let mut p2 = Vec::new();
    match model.encoding() {
        StateEncoding::Subsets { masks, .. } => {
            for w in wedges(t) {
                // Swap behind an edge (S, T): leaves bit S\T, enters T\S.
                let center = masks[w.center];
                let out_l = center & !masks[w.left];
                let in_l = masks[w.left] & !center;
                let out_r = center & !masks[w.right];
                let in_r = masks[w.right] & !center;
                if out_l == out_r || in_l == in_r {
                    p1.push(w);
                } else {
                    p2.push(w);
                }
            }
        }
        StateEncoding::Permutations { words, .. } => {
            for w in wedges(t) {
                let moved = |a: &[u8], b: &[u8]| -> u32 {
                    // Transposed value pair as a bitmask.
                    let mut mask = 0u32;
                    for (x, y) in a.iter().zip(b) {
                        if x != y {
                            mask |= 1 << x;
                        }
                    }
                    mask
                };
                let ml = moved(&words[w.center], &words[w.left]);
                let mr = moved(&words[w.center], &words[w.right]);
                if ml & mr == 0 {
                    p1.push(w);
                } else {
                    p2.push(w);
                }
            }
        }
        StateEncoding::Opaque => return Err(ModelError::UnsupportedClassification),
    }
    Ok(PairClassification { p1, p2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;

    #[test]
    fn parameter_validation() {
        assert!(matches!(bernoulli_laplace(1, 1), Err(ModelError::BadUrnParameters { .. })));
        assert!(matches!(bernoulli_laplace(4, 0), Err(ModelError::BadUrnParameters { .. })));
        assert!(matches!(bernoulli_laplace(4, 4), Err(ModelError::BadUrnParameters { .. })));
        assert!(matches!(random_transposition(1), Err(ModelError::BadSymmetricGroupSize { .. })));
        assert!(matches!(random_transposition(9), Err(ModelError::BadSymmetricGroupSize { .. })));
        assert!(matches!(complete_graph(1), Err(ModelError::BadCompleteSize { .. })));
    }

    #[test]
    fn smallest_urn_is_a_single_unit_edge() {
        let m = bernoulli_laplace(2, 1).unwrap();
        assert_eq!(m.triple().n(), 2);
        assert_eq!(m.triple().edges().len(), 1);
        assert_eq!(m.triple().edges()[0].rate_xy, 1.0);
        assert_eq!(m.uniform_rate(), Some(Rational64::new(1, 1)));
    }

    #[test]
    fn urn_4_2_shape() {
        let m = bernoulli_laplace(4, 2).unwrap();
        let t = m.triple();
        assert_eq!(t.n(), 6);
        assert_eq!(t.edges().len(), 12);
        assert_eq!(t.regular_uniform(), Some((4, 0.25)));
        assert_eq!(m.uniform_rate(), Some(Rational64::new(1, 4)));
        // Two neighbors share exactly n-2 common neighbors.
        for e in t.edges() {
            let common = t
                .neighbors(e.x)
                .filter(|&(z, _)| z != e.y && t.is_edge(z, e.y))
                .count();
            assert_eq!(common, 2);
        }
    }

    #[test]
    fn urn_with_one_particle_is_complete_graph() {
        for n in 3..=5 {
            let urn = bernoulli_laplace(n, 1).unwrap();
            let k = complete_graph(n).unwrap();
            // The subset {i} corresponds to vertex i; with masks sorted the
            // state order matches, so the triples agree up to labels.
            let t1 = urn.triple();
            let t2 = k.triple();
            assert_eq!(t1.n(), t2.n());
            for x in 0..t1.n() {
                assert_relative_eq!(t1.pi()[x], t2.pi()[x], max_relative = 1e-15);
                let mut n1: Vec<(usize, f64)> = t1.neighbors(x).collect();
                let mut n2: Vec<(usize, f64)> = t2.neighbors(x).collect();
                n1.sort_by(|a, b| a.0.cmp(&b.0));
                n2.sort_by(|a, b| a.0.cmp(&b.0));
                assert_eq!(n1, n2);
            }
        }
    }

    #[test]
    fn transposition_walk_shapes() {
        let m = random_transposition(2).unwrap();
        assert_eq!(m.triple().n(), 2);
        assert_eq!(m.triple().edges().len(), 1);

        let m = random_transposition(3).unwrap();
        assert_eq!(m.triple().n(), 6);
        assert_eq!(m.triple().regular_uniform(), Some((3, 1.0 / 3.0)));
        assert_eq!(m.triple().edges().len(), 9);

        let m = random_transposition(4).unwrap();
        assert_eq!(m.triple().n(), 24);
        assert_eq!(m.triple().regular_uniform(), Some((6, 1.0 / 6.0)));
        assert_eq!(m.triple().edges().len(), 72);
    }

    #[test]
    fn transposition_neighbors_swap_values() {
        // From the identity on 3 letters, swapping values 0 and 2 gives 210.
        let m = random_transposition(3).unwrap();
        let t = m.triple();
        let id = t.index_of("012").unwrap();
        let neighbors: Vec<&str> = t.neighbors(id).map(|(y, _)| t.label(y)).collect();
        assert_eq!(neighbors.len(), 3);
        for w in ["102", "210", "021"] {
            assert!(neighbors.contains(&w), "missing {w} among {neighbors:?}");
        }
        // Left-composition check away from the identity: sigma = 120
        // (position p holds value sigma(p)); swapping values 0 and 1 yields 021.
        let sigma = t.index_of("120").unwrap();
        let swapped = t.index_of("021").unwrap();
        assert!(t.is_edge(sigma, swapped));
    }

    #[test]
    fn transposition_walk_is_triangle_free() {
        for n in 2..=4 {
            let m = random_transposition(n).unwrap();
            assert!(enumerate_triangles(m.triple()).is_empty());
        }
    }

    #[test]
    fn urn_triangle_counts() {
        let m = bernoulli_laplace(4, 2).unwrap();
        let tris = enumerate_triangles(m.triple());
        assert_eq!(tris.len(), 8);
        let per_edge = edge_triangle_counts(m.triple());
        assert!(per_edge.iter().all(|&c| c == 2));
        // Listed triangles really are 3-cliques.
        for [x, y, z] in tris {
            let t = m.triple();
            assert!(t.is_edge(x, y) && t.is_edge(y, z) && t.is_edge(x, z));
        }
        for n in 5..=6 {
            for k in 2..n - 1 {
                let m = bernoulli_laplace(n, k).unwrap();
                let per_edge = edge_triangle_counts(m.triple());
                assert!(per_edge.iter().all(|&c| c == (n - 2) as usize), "bl({n},{k})");
            }
        }
    }

    #[test]
    fn product_of_two_bits_is_a_four_cycle() {
        let k2 = complete_graph(2).unwrap();
        let m = product_model(&k2, &k2).unwrap();
        let t = m.triple();
        assert_eq!(t.n(), 4);
        assert_eq!(t.regular_uniform(), Some((2, 1.0)));
        assert_eq!(m.uniform_rate(), Some(Rational64::new(1, 1)));
        let squares = enumerate_squares(t);
        assert_eq!(squares.len(), 1);
        assert!(is_chordless_square(t, &squares[0]));
        assert!(enumerate_triangles(t).is_empty());
        assert_relative_eq!(t.spectral_gap(), 2.0, max_relative = 1e-10);
    }

    #[test]
    fn product_with_trivial_factor_is_isomorphic() {
        let a = bernoulli_laplace(4, 2).unwrap();
        let one = MarkovTriple::new(vec!["*".into()], vec![1.0], vec![]).unwrap();
        let p = product_chain(a.triple(), &one).unwrap();
        assert_eq!(p.n(), a.triple().n());
        for x in 0..p.n() {
            assert_relative_eq!(p.pi()[x], a.triple().pi()[x], max_relative = 1e-15);
            let mut n1: Vec<(usize, f64)> = p.neighbors(x).collect();
            let mut n2: Vec<(usize, f64)> = a.triple().neighbors(x).collect();
            n1.sort_by(|u, v| u.0.cmp(&v.0));
            n2.sort_by(|u, v| u.0.cmp(&v.0));
            assert_eq!(n1, n2);
        }
    }

    #[test]
    fn product_mixed_rates_lose_uniformity() {
        let a = complete_graph(2).unwrap(); // rate 1
        let b = complete_graph(3).unwrap(); // rate 1/2
        let m = product_model(&a, &b).unwrap();
        assert_eq!(m.uniform_rate(), None);
        assert_eq!(m.triple().regular_uniform(), None);
    }

    #[test]
    fn four_cycle_enumeration_is_canonical_and_exhaustive() {
        // On the 4-cycle there is exactly one square; on K4 there are three
        // (every pair of disjoint edges is a diagonal pair), all chorded.
        let k2 = complete_graph(2).unwrap();
        let cycle = product_model(&k2, &k2).unwrap();
        assert_eq!(enumerate_squares(cycle.triple()).len(), 1);

        let k4 = complete_graph(4).unwrap();
        let squares = enumerate_squares(k4.triple());
        assert_eq!(squares.len(), 3);
        assert!(squares.iter().all(|sq| !is_chordless_square(k4.triple(), sq)));
        // Canonical form is stable: re-canonicalizing is the identity.
        for sq in &squares {
            assert_eq!(canonical_cycle(*sq), *sq);
        }
    }

    #[test]
    fn wedge_square_counts_on_known_graphs() {
        let k2 = complete_graph(2).unwrap();
        let cycle = product_model(&k2, &k2).unwrap();
        for w in wedges(cycle.triple()) {
            let (total, chordless) = wedge_square_counts(cycle.triple(), &w);
            assert_eq!((total, chordless), (1, 1));
        }
    }

    #[test]
    fn urn_pair_classification_counts() {
        for (n, k) in [(4u32, 2u32), (5, 2), (6, 3)] {
            let m = bernoulli_laplace(n, k).unwrap();
            let t = m.triple();
            let classes = classify_pairs(&m).unwrap();
            let all = wedges(t).len();
            assert_eq!(classes.p1.len() + classes.p2.len(), all);
            // Overlapping swaps close a triangle (the unique one on the wedge).
            for w in &classes.p1 {
                assert!(t.is_edge(w.left, w.right));
            }
            // Non-overlapping swaps: arms not adjacent, three four-cycles
            // through the wedge, exactly one of them chordless.
            for w in &classes.p2 {
                assert!(!t.is_edge(w.left, w.right));
                let (total, chordless) = wedge_square_counts(t, w);
                assert_eq!((total, chordless), (3, 1), "bl({n},{k}) wedge {w:?}");
            }
        }
    }

    #[test]
    fn transposition_pair_classification_counts() {
        for n in [3u32, 4] {
            let m = random_transposition(n).unwrap();
            let t = m.triple();
            let classes = classify_pairs(&m).unwrap();
            assert_eq!(classes.p1.len() + classes.p2.len(), wedges(t).len());
            // Disjoint transpositions: a unique (automatically chordless)
            // four-cycle through the wedge.
            for w in &classes.p1 {
                let (total, chordless) = wedge_square_counts(t, w);
                assert_eq!((total, chordless), (1, 1), "rt({n}) wedge {w:?}");
            }
            // Overlapping transpositions: exactly two, both chordless.
            for w in &classes.p2 {
                let (total, chordless) = wedge_square_counts(t, w);
                assert_eq!((total, chordless), (2, 2), "rt({n}) wedge {w:?}");
            }
        }
    }

    #[test]
    fn transposition_squares_are_pure() {
        // Each four-cycle's eight wedges fall in a single class.
        for n in [3u32, 4] {
            let m = random_transposition(n).unwrap();
            let t = m.triple();
            let classes = classify_pairs(&m).unwrap();
            let mut class_of: BTreeMap<Wedge, u8> = BTreeMap::new();
            for w in &classes.p1 {
                class_of.insert(*w, 1);
            }
            for w in &classes.p2 {
                class_of.insert(*w, 2);
            }
            for sq in enumerate_squares(t) {
                assert!(is_chordless_square(t, &sq));
                let kinds: Vec<u8> = wedges_of_square(&sq)
                    .iter()
                    .map(|w| class_of[w])
                    .collect();
                assert!(
                    kinds.iter().all(|&c| c == kinds[0]),
                    "mixed square {sq:?} in rt({n})"
                );
            }
        }
    }

    #[test]
    fn transposition_pair_completions_by_group_law() {
        // For a wedge sharing value i (moves {i,j} and {i,q}), the two
        // completing vertices are reached by applying the complementary
        // transpositions in either order.
        for n in [3u32, 4, 5] {
            let m = random_transposition(n).unwrap();
            let t = m.triple();
            let StateEncoding::Permutations { words, .. } = m.encoding() else {
                panic!()
            };
            let apply = |word: &[u8], a: u8, b: u8| -> Vec<u8> {
                word.iter()
                    .map(|&v| {
                        if v == a {
                            b
                        } else if v == b {
                            a
                        } else {
                            v
                        }
                    })
                    .collect()
            };
            let index_of = |w: &[u8]| {
                words
                    .binary_search_by(|probe| probe.as_slice().cmp(w))
                    .unwrap()
            };
            let classes = classify_pairs(&m).unwrap();
            for w in classes.p2.iter().take(200) {
                let sigma = &words[w.center];
                let moved = |other: &[u8]| -> Vec<u8> {
                    (0..n as u8)
                        .filter(|&v| {
                            sigma.iter().position(|&s| s == v)
                                != other.iter().position(|&s| s == v)
                        })
                        .collect()
                };
                let ml = moved(&words[w.left]);
                let mr = moved(&words[w.right]);
                let shared: Vec<u8> = ml.iter().copied().filter(|v| mr.contains(v)).collect();
                assert_eq!(shared.len(), 1);
                let i = shared[0];
                let j = *ml.iter().find(|&&v| v != i).unwrap();
                let q = *mr.iter().find(|&&v| v != i).unwrap();
                // Completions: tau_iq tau_ij sigma and tau_jq tau_ij sigma.
                let via_left_1 = apply(&apply(sigma, i, j), i, q);
                let via_left_2 = apply(&apply(sigma, i, j), j, q);
                // The same two states reached through the right arm.
                let via_right_1 = apply(&apply(sigma, i, q), j, q);
                let via_right_2 = apply(&apply(sigma, i, q), i, j);
                assert_eq!(via_left_1, via_right_1);
                assert_eq!(via_left_2, via_right_2);
                // And they really are the wedge's square completions.
                for v in [index_of(&via_left_1), index_of(&via_left_2)] {
                    assert!(t.is_edge(w.left, v) && t.is_edge(w.right, v));
                }
            }
        }
    }

    #[test]
    fn classification_requires_structured_encoding() {
        let k3 = complete_graph(3).unwrap();
        assert!(matches!(
            classify_pairs(&k3),
            Err(ModelError::UnsupportedClassification)
        ));
    }

    #[test]
    fn size_caps() {
        assert!(matches!(bernoulli_laplace(30, 15), Err(ModelError::TooLarge { .. })));
    }
}
