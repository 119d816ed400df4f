//! Geometric and spectral machinery for conformal Korn inequalities on
//! non-smooth domains.
//!
//! The crate is organised around one pipeline:
//!
//! * [`geometry`] describes computational domains (boxes, polygons, an outward
//!   power cusp, Koch prefractals) with exact or certified distance queries.
//! * [`whitney`] builds truncated Whitney covers out of dyadic cubes and the
//!   associated neighbour graph.
//! * [`tree`] roots the full-face subgraph of a cover, computes shadows, the
//!   shadow expansion constant and the pairwise-disjoint overlap cubes that
//!   carry correction terms.
//! * [`fields`] holds matrix-valued piecewise fields over a cover together
//!   with quadrature and weighted norms.
//! * [`conformal`] provides the conformal Killing algebra: the trace-free
//!   strain, its finite-dimensional kernel and gradient space, and splittings
//!   of dual data against that space.
//! * [`decompose`] implements the tree-indexed decomposition of an orthogonal
//!   field into locally supported, locally orthogonal pieces, plus the Hardy
//!   averaging operator used to control it.
//! * [`korn`] discretises the inequality itself: Rayleigh quotients on
//!   multilinear elements, the duality chain audit, projection-based
//!   corollary scans and the sharp cusp counterexample.
//! * [`report`] is the small shared check/report schema used by the CLI.
//!
//! Tolerances used across the crate live in [`tol`].

pub mod conformal;
pub mod decompose;
pub mod fields;
pub mod geometry;
pub mod korn;
pub mod report;
pub mod tol;
pub mod tree;
pub mod whitney;
