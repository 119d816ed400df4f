//! Inequality constant of a domain from the discrete eigenvalue problem.
//!
//! With `B(v) = int |l(v)|^2 rho^(2 beta)` and
//! `A(v) = int |(I - P) Dv|^2 rho^(2 beta)`, where `P` is the weighted
//! projection onto the seven-dimensional gradient-generator span, the
//! constant is `lambda_min(B, A)^(-1/2)` over fields outside the shared
//! kernel. Pointwise `l` annihilates every generator, so `lambda_min <= 1`
//! and the constant is at least one.

use super::eig::{lobpcg, EigOptions, Pencil, Projector};
use super::mesh::{apply_block, apply_scalar3, VoxelMesh};
use super::mg::LatticeMg;
use crate::conformal::kernel_basis;
use crate::geometry::Domain;
use nalgebra::{Cholesky, DVector, Dyn};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KornError {
    /// The pencil collapsed: some strain-free direction escaped deflation.
    #[error("strain form vanishes outside the deflated kernel (lambda = {0:.3e})")]
    DegeneratePencil(f64),
    #[error("eigensolver stalled at residual {0:.3e}")]
    Stalled(f64),
}

pub struct KornOptions {
    pub beta: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub block: usize,
    pub seed: u64,
}

impl Default for KornOptions {
    fn default() -> Self {
        KornOptions {
            beta: 0.0,
            tol: 1e-8,
            max_iter: 2000,
            block: 4,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KornReport {
    pub c: f64,
    pub lambda_min: f64,
    pub residual: f64,
    pub iterations: usize,
    pub dofs: usize,
    pub h: f64,
    pub beta: f64,
    pub deflation_dim: usize,
    pub converged: bool,
}

/// Nodal interpolants of the conformal kernel fields.
pub fn kernel_constraints(mesh: &VoxelMesh) -> Vec<Vec<f64>> {
    kernel_basis(3)
        .iter()
        .map(|f| mesh.interpolate_vecpoly(f))
        .collect()
}

struct DeflatedGradient<'a> {
    stiff: &'a super::mesh::ScalarCsr,
    y: &'a [Vec<f64>],
    gram_chol: Cholesky<f64, Dyn>,
}

impl DeflatedGradient<'_> {
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        apply_scalar3(self.stiff, x, out);
        let m = self.y.len();
        let mut rhs = DVector::zeros(m);
        for j in 0..m {
            rhs[j] = super::eig::pdot(&self.y[j], x);
        }
        let c = self.gram_chol.solve(&rhs);
        for j in 0..m {
            let cj = c[j];
            if cj != 0.0 {
                for (o, v) in out.iter_mut().zip(&self.y[j]) {
                    *o -= cj * v;
                }
            }
        }
    }
}

pub fn korn_constant(
    domain: &Domain,
    h: f64,
    opts: &KornOptions,
) -> Result<KornReport, KornError> {
    let mesh = VoxelMesh::build(domain, h);
    let b = mesh.assemble_lform(opts.beta);
    let stiff = mesh.assemble_stiffness(opts.beta);
    let (y, gram) = mesh.gradient_pairings(opts.beta);
    let gram_chol = Cholesky::new(gram).expect("generator Gram is positive definite");
    let grad = DeflatedGradient {
        stiff: &stiff,
        y: &y,
        gram_chol,
    };
    let constraints = Projector::from_columns(&kernel_constraints(&mesh));
    let mg = LatticeMg::new(&mesh);
    let s_apply = |x: &[f64], out: &mut [f64]| apply_block(&b, x, out);
    let t_apply = |x: &[f64], out: &mut [f64]| grad.apply(x, out);
    let precond = |x: &[f64], out: &mut [f64]| mg.apply_vector(x, out);
    let pencil = Pencil {
        n: mesh.n_dofs(),
        s_apply: &s_apply,
        t_apply: &t_apply,
        precond: Some(&precond),
    };
    let res = lobpcg(
        &pencil,
        Some(&constraints),
        None,
        &EigOptions {
            block: opts.block,
            need: 1,
            max_iter: opts.max_iter,
            tol: opts.tol,
            seed: opts.seed,
        },
    );
    if !res.converged {
        return Err(KornError::Stalled(res.residuals[0]));
    }
    let lambda = res.values[0];
    if !(lambda > 1e-10) {
        return Err(KornError::DegeneratePencil(lambda));
    }
    Ok(KornReport {
        c: lambda.powf(-0.5),
        lambda_min: lambda,
        residual: res.residuals[0],
        iterations: res.iterations,
        dofs: mesh.n_dofs(),
        h,
        beta: opts.beta,
        deflation_dim: constraints.len(),
        converged: res.converged,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DeflationReport {
    /// Ritz values of the kernel interpolants against the mass form.
    pub near_null: Vec<f64>,
    /// Smallest strain-active eigenvalue.
    pub first_positive: f64,
    /// Separation `first_positive / max |near_null|`.
    pub ratio: f64,
    pub converged: bool,
}

/// Confirms the interpolated kernel exhausts the strain-free directions:
/// the mass-pencil spectrum shows exactly ten numerically null values
/// followed by a well-separated positive one.
pub fn deflation_completeness(domain: &Domain, h: f64, seed: u64) -> DeflationReport {
    let mesh = VoxelMesh::build(domain, h);
    let b = mesh.assemble_lform(0.0);
    let m = mesh.assemble_mass(0.0);
    let mg = LatticeMg::new(&mesh);
    let s_apply = |x: &[f64], out: &mut [f64]| apply_block(&b, x, out);
    let t_apply = |x: &[f64], out: &mut [f64]| apply_scalar3(&m, x, out);
    let precond = |x: &[f64], out: &mut [f64]| mg.apply_vector(x, out);
    let pencil = Pencil {
        n: mesh.n_dofs(),
        s_apply: &s_apply,
        t_apply: &t_apply,
        precond: Some(&precond),
    };
    let kdim = 10;
    let res = lobpcg(
        &pencil,
        None,
        Some(kernel_constraints(&mesh)),
        &EigOptions {
            block: kdim + 1,
            need: kdim + 1,
            max_iter: 800,
            tol: 1e-7,
            seed,
        },
    );
    let near_null = res.values[..kdim].to_vec();
    let first_positive = res.values[kdim];
    let floor = near_null.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    DeflationReport {
        near_null,
        first_positive,
        ratio: first_positive / floor.max(1e-300),
        converged: res.converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainSpec;
    use nalgebra::{DMatrix, SymmetricEigen};

    fn dense_of(n: usize, f: impl Fn(&[f64], &mut [f64])) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            f(&e, &mut col);
            e[j] = 0.0;
            for i in 0..n {
                m[(i, j)] = col[i];
            }
        }
        m
    }

    #[test]
    fn coarse_cube_constant_matches_a_dense_eigensolve() {
        let dom = Domain::builtin("unit_cube").unwrap();
        let h = 0.5;
        let report = korn_constant(
            &dom,
            h,
            &KornOptions {
                tol: 1e-10,
                ..KornOptions::default()
            },
        )
        .unwrap();
        assert!(report.converged);
        assert_eq!(report.deflation_dim, 10);
        assert!(report.c >= 1.0, "constant {} below the algebraic floor", report.c);

        let mesh = VoxelMesh::build(&dom, h);
        let n = mesh.n_dofs();
        let bm = mesh.assemble_lform(0.0);
        let sm = mesh.assemble_stiffness(0.0);
        let (y, gram) = mesh.gradient_pairings(0.0);
        let grad = DeflatedGradient {
            stiff: &sm,
            y: &y,
            gram_chol: Cholesky::new(gram).unwrap(),
        };
        let db = dense_of(n, |x, out| apply_block(&bm, x, out));
        let da = dense_of(n, |x, out| grad.apply(x, out));
        // Orthonormal basis of the kernel complement.
        let ks = kernel_constraints(&mesh);
        let mut kmat = DMatrix::zeros(n, ks.len());
        for (j, k) in ks.iter().enumerate() {
            kmat.set_column(j, &DVector::from_column_slice(k));
        }
        let qr = kmat.qr();
        let qk = qr.q();
        let comp = DMatrix::identity(n, n) - &qk * qk.transpose();
        let eig = SymmetricEigen::new(comp);
        let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
        assert_eq!(keep.len(), n - 10);
        let mut q = DMatrix::zeros(n, keep.len());
        for (c, &i) in keep.iter().enumerate() {
            q.set_column(c, &eig.eigenvectors.column(i));
        }
        let sb = q.transpose() * &db * &q;
        let sa = q.transpose() * &da * &q;
        let chol = Cholesky::new((&sa + sa.transpose()) * 0.5).expect("complement is definite");
        let li = chol
            .l()
            .solve_lower_triangular(&DMatrix::identity(keep.len(), keep.len()))
            .unwrap();
        let m = &li * ((&sb + sb.transpose()) * 0.5) * li.transpose();
        let m = (&m + m.transpose()) * 0.5;
        let lam = SymmetricEigen::new(m)
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert!(
            (report.lambda_min - lam).abs() <= 1e-8 * lam.abs(),
            "{} vs dense {}",
            report.lambda_min,
            lam
        );
    }

    #[test]
    fn deflation_is_complete_on_a_coarse_cube() {
        let dom = Domain::builtin("unit_cube").unwrap();
        let rep = deflation_completeness(&dom, 0.25, 5);
        assert!(rep.converged);
        for v in &rep.near_null {
            assert!(v.abs() < 1e-10, "kernel value {v} not numerically null");
        }
        assert!(rep.first_positive > 1e-3);
        assert!(rep.ratio >= 1e3, "separation ratio {}", rep.ratio);
    }

    #[test]
    fn constant_is_invariant_under_translation() {
        let unit = Domain::builtin("unit_cube").unwrap();
        let shifted = Domain::new(DomainSpec::AxisBox {
            lo: vec![2.0, 2.0, 2.0],
            hi: vec![3.0, 3.0, 3.0],
        })
        .unwrap();
        let opts = KornOptions {
            tol: 1e-9,
            ..KornOptions::default()
        };
        let a = korn_constant(&unit, 0.25, &opts).unwrap();
        let b = korn_constant(&shifted, 0.25, &opts).unwrap();
        assert!(
            (a.c - b.c).abs() <= 1e-6 * a.c,
            "translation moved the constant: {} vs {}",
            a.c,
            b.c
        );
    }
}
