//! Ratio scans behind the projection and norm-equivalence corollaries.
//!
//! The kernel of the trace-free strain is a ten-dimensional polynomial
//! space; its Q2 interpolants span the same space exactly, so the discrete
//! mass-orthogonal projection `P` onto that span annihilates the numerator
//! `||v - Pv||` for kernel fields to rounding. Over a seeded family of
//! smooth test fields the scan records the two Rayleigh-type suprema
//!
//!   graded:   ||v - Pv||_{W^{1,2}} / ||l(v)||_{L^2}
//!   absolute: ||v||_{W^{1,2}} / (||v||_{L^2} + ||l(v)||_{L^2})
//!
//! which the caller compares across mesh sizes. Rough nodal noise is run
//! through the assembled forms as well to confirm the pointwise dominance
//! `||l(v)||^2 <= ||eps(v)||^2` carries over to the discrete forms exactly.

use crate::conformal::kernel_basis;
use crate::geometry::Domain;
use crate::korn::duality::random_vec_poly;
use crate::korn::eig::pdot;
use crate::korn::mesh::{apply_scalar3, VoxelMesh};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use serde::Serialize;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, Serialize)]
pub struct SigmaScan {
    /// Supremum of `||v - Pv||_{W^{1,2}} / ||l(v)||` over the smooth family.
    pub graded_sup: f64,
    /// Supremum of `||v||_{W^{1,2}} / (||v|| + ||l(v)||)`.
    pub absolute_sup: f64,
    /// Worst relative projection residual over the kernel basis itself.
    pub kernel_numerator: f64,
    /// Largest `||w||_{W^{1,2}} / ||w||_{L^2}` over the kernel span sphere.
    pub span_norm_ratio: f64,
    /// Largest `||l(v)||^2 - ||eps(v)||^2` over all samples, noise included.
    pub strain_gap_max: f64,
    pub h: f64,
    pub samples: usize,
}

struct Projector {
    basis: Vec<Vec<f64>>,
    mass_basis: Vec<Vec<f64>>,
    chol: Cholesky<f64, nalgebra::Dyn>,
}

impl Projector {
    fn build(mesh: &VoxelMesh) -> Projector {
        let kb = kernel_basis(3);
        let basis: Vec<Vec<f64>> = kb.iter().map(|p| mesh.interpolate_vecpoly(p)).collect();
        let mass = mesh.assemble_mass(0.0);
        let mass_basis: Vec<Vec<f64>> = basis
            .iter()
            .map(|z| {
                let mut mz = vec![0.0; z.len()];
                apply_scalar3(&mass, z, &mut mz);
                mz
            })
            .collect();
        let k = basis.len();
        let mut gram = DMatrix::<f64>::zeros(k, k);
        for j in 0..k {
            for i in j..k {
                let d = pdot(&mass_basis[j], &basis[i]);
                gram[(i, j)] = d;
                gram[(j, i)] = d;
            }
        }
        let chol = Cholesky::new(gram).expect("kernel interpolants are independent");
        Projector {
            basis,
            mass_basis,
            chol,
        }
    }

    /// Returns `v - Pv` with `P` the mass-orthogonal projection.
    fn complement(&self, v: &[f64]) -> Vec<f64> {
        let k = self.basis.len();
        let y = DVector::from_iterator(k, self.mass_basis.iter().map(|mz| pdot(mz, v)));
        let c = self.chol.solve(&y);
        let mut w = v.to_vec();
        for j in 0..k {
            let cj = c[j];
            for (wi, zi) in w.iter_mut().zip(&self.basis[j]) {
                *wi -= cj * zi;
            }
        }
        w
    }
}

fn w12(f: &crate::korn::mesh::FormValues) -> f64 {
    (f.grad + f.mass).sqrt()
}

/// Scans seeded families of fields on a voxel mesh of the domain and
/// reports the measured suprema. Deterministic for a fixed seed.
pub fn sigma_projection_checks(domain: &Domain, h: f64, samples: usize, seed: u64) -> SigmaScan {
    let mesh = VoxelMesh::build(domain, h);
    let proj = Projector::build(&mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut graded_sup = 0.0f64;
    let mut absolute_sup = 0.0f64;
    let mut strain_gap = f64::NEG_INFINITY;
    for _ in 0..samples {
        let v = mesh.interpolate_vecpoly(&random_vec_poly(3, 3, &mut rng));
        let fv = mesh.eval_forms(&v, 0.0);
        let w = proj.complement(&v);
        let fw = mesh.eval_forms(&w, 0.0);
        if fv.lform > 0.0 {
            graded_sup = graded_sup.max(w12(&fw) / fv.lform.sqrt());
        }
        absolute_sup = absolute_sup.max(w12(&fv) / (fv.mass.sqrt() + fv.lform.sqrt()));
        strain_gap = strain_gap.max(fv.lform - fv.eps);
    }

    // Dominance must also hold on fields with no smoothness at all.
    for _ in 0..4 {
        let v: Vec<f64> = (0..mesh.n_dofs())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let fv = mesh.eval_forms(&v, 0.0);
        strain_gap = strain_gap.max(fv.lform - fv.eps);
    }

    let mut kernel_numerator = 0.0f64;
    for z in &proj.basis {
        let fz = mesh.eval_forms(z, 0.0);
        let fw = mesh.eval_forms(&proj.complement(z), 0.0);
        kernel_numerator = kernel_numerator.max(w12(&fw) / w12(&fz));
    }

    let mut span_norm_ratio = 0.0f64;
    let k = proj.basis.len();
    let n_dofs = mesh.n_dofs();
    for draw in 0..40 {
        let mut w = vec![0.0; n_dofs];
        for (j, z) in proj.basis.iter().enumerate() {
            let c = if draw < k {
                (draw == j) as u8 as f64
            } else {
                rng.gen_range(-1.0..1.0)
            };
            if c != 0.0 {
                for (wi, zi) in w.iter_mut().zip(z) {
                    *wi += c * zi;
                }
            }
        }
        let fw = mesh.eval_forms(&w, 0.0);
        if fw.mass > 0.0 {
            span_norm_ratio = span_norm_ratio.max(w12(&fw) / fw.mass.sqrt());
        }
    }

    SigmaScan {
        graded_sup,
        absolute_sup,
        kernel_numerator,
        span_norm_ratio,
        strain_gap_max: strain_gap,
        h,
        samples,
    }
}

/// Relative defect of `int |l(v)|^2 = int |eps(v)|^2 - int (div v)^2 / 3`
/// for an exact polynomial field, with the left side integrated from the
/// trace-free strain directly rather than from the jacobian.
pub fn strain_identity_check(domain: &Domain, h: f64, v: &crate::fields::poly::VecPoly) -> f64 {
    let mesh = VoxelMesh::build(domain, h);
    let lhs = mesh.matpoly_sq_integral(&crate::fields::poly::trace_free_strain(v), 0.0);
    let f = mesh.poly_forms(v, 0.0);
    let rhs = f.eps - f.div / 3.0;
    (lhs - rhs).abs() / f.eps.max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::poly::{Poly, VecPoly};
    use crate::geometry::dyadic::MAX_DIM;

    #[test]
    fn kernel_fields_project_to_themselves() {
        let dom = Domain::builtin("unit_cube").unwrap();
        let scan = sigma_projection_checks(&dom, 0.25, 6, 11);
        assert!(
            scan.kernel_numerator <= 1e-10,
            "kernel numerator {}",
            scan.kernel_numerator
        );
        assert!(scan.span_norm_ratio.is_finite() && scan.span_norm_ratio >= 1.0);
        assert!(scan.strain_gap_max <= 1e-10);
        assert!(scan.graded_sup.is_finite() && scan.graded_sup > 0.0);
        assert!(scan.absolute_sup >= 1.0 - 1e-12);
    }

    #[test]
    fn ratios_are_stable_under_refinement() {
        let dom = Domain::builtin("unit_cube").unwrap();
        let coarse = sigma_projection_checks(&dom, 0.25, 8, 5);
        let fine = sigma_projection_checks(&dom, 0.125, 8, 5);
        let rel = |a: f64, b: f64| (a - b).abs() / b;
        assert!(
            rel(coarse.graded_sup, fine.graded_sup) < 0.10,
            "graded {} vs {}",
            coarse.graded_sup,
            fine.graded_sup
        );
        assert!(
            rel(coarse.absolute_sup, fine.absolute_sup) < 0.10,
            "absolute {} vs {}",
            coarse.absolute_sup,
            fine.absolute_sup
        );
    }

    #[test]
    fn identity_holds_for_random_cubics() {
        let dom = Domain::builtin("unit_cube").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let v = random_vec_poly(3, 3, &mut rng);
            let r = strain_identity_check(&dom, 0.5, &v);
            assert!(r <= 1e-11, "identity defect {r}");
        }
    }

    #[test]
    fn identity_terms_match_hand_values_for_the_identity_field() {
        // v = x: eps = I, div = 3, l = 0 on the unit cube.
        let dom = Domain::builtin("unit_cube").unwrap();
        let mut v = VecPoly::zero(3);
        for c in 0..3 {
            let mut e = [0u8; MAX_DIM];
            e[c] = 1;
            let mut p = Poly::zero(3);
            p.add_term(e, 1.0);
            v.comps[c] = p;
        }
        let mesh = VoxelMesh::build(&dom, 0.5);
        let f = mesh.poly_forms(&v, 0.0);
        assert!((f.eps - 3.0).abs() <= 1e-12);
        assert!((f.div - 9.0).abs() <= 1e-12);
        assert!(f.lform.abs() <= 1e-12);
        assert!(strain_identity_check(&dom, 0.5, &v) <= 1e-13);
    }
}
