//! Entropic Ricci curvature bounds for reversible finite Markov chains.
//!
//! The crate computes two kinds of curvature lower bounds for a reversible
//! triple (state space, rate matrix, stationary distribution):
//!
//! * exact rational certificates for structured chains (Bernoulli-Laplace
//!   urn exchange, random transpositions, and uniform-rate regular chains
//!   whose local geometry can be verified by enumeration), and
//! * numerical estimates obtained by minimizing the Bochner-type ratio
//!   over densities and potentials.
//!
//! Supporting machinery: the logarithmic-mean calculus ([`logmean`]), the
//! Markov-chain core with gradients, Dirichlet forms, heat flow and spectral
//! gaps ([`markov`]), model constructors ([`models`]), the curvature forms
//! and their edge-pair decomposition ([`curvature`]), certification and
//! estimation ([`estimator`]), and a discrete-transport action solver used
//! to cross-check curvature via displacement convexity ([`transport`]).

pub mod curvature;
pub mod estimator;
pub mod logmean;
pub mod markov;
pub mod models;
pub mod transport;

pub use markov::{Density, MarkovTriple};
pub use models::Model;
