//! Shared numeric tolerances.
//!
//! Three ladders, by how a quantity is produced. Anything checked against a
//! closed form computed with exact coefficient algebra uses [`EXACT_ALGEBRA`];
//! quantities that pass through quadrature or iterative projections use
//! [`QUADRATURE`]; spectral quantities from the eigensolver use [`EIGEN`].

/// Identities that hold at coefficient level (dyadic arithmetic, polynomial
/// algebra, closed-form integrals of monomials). Failures above this level
/// indicate a logic bug, not roundoff.
pub const EXACT_ALGEBRA: f64 = 1e-12;

/// Quantities backed by Gauss quadrature or small dense linear solves.
pub const QUADRATURE: f64 = 1e-9;

/// Quantities backed by the iterative eigensolver.
pub const EIGEN: f64 = 1e-6;

/// Relative slack for comparisons between two floating point accumulations
/// of the same exact value (sum orderings differ, so a few ulps per term).
pub const ACCUMULATION: f64 = 1e-13;

/// Relative pairing level under which a field counts as orthogonal to the
/// gradient-space generators and is admitted into the decomposition.
pub const W0_INPUT: f64 = 1e-8;

/// Relative residual allowed on per-piece generator pairings when the audit
/// re-quadratures cell and bump moments.
pub const PIECE_PAIRING: f64 = 1e-9;

/// Relative nodewise error allowed when summing decomposition pieces back
/// into the input field.
pub const RECONSTRUCTION: f64 = 1e-10;
