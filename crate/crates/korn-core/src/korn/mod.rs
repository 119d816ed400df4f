//! Numerical estimation of the inequality constant on 3d domains.
//!
//! The constant is the inverse square root of the smallest eigenvalue of the
//! trace-free strain form against the kernel-deflated gradient form, both
//! discretized with triquadratic voxel elements. Companion checks validate
//! the deflation space, the projection estimates behind the proof, and the
//! sharpness example on an exterior cusp.

pub mod constant;
pub mod cusp;
pub mod duality;
pub mod eig;
pub mod mesh;
pub mod mg;
pub mod sigma_scan;

pub use constant::{
    deflation_completeness, kernel_constraints, korn_constant, DeflationReport, KornError,
    KornOptions, KornReport,
};
pub use cusp::{admissible_window, cusp_truncated_norms, CuspError, CuspField, CuspNorms, CuspParams};
pub use duality::{duality_chain_case, ChainLink, ChainReport};
pub use eig::{lobpcg, EigOptions, EigResult, Pencil, Projector};
pub use mg::LatticeMg;
pub use mesh::{apply_block, apply_scalar3, BlockCsr, FormValues, ScalarCsr, VoxelMesh};
pub use sigma_scan::{sigma_projection_checks, strain_identity_check, SigmaScan};
