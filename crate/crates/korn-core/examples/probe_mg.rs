use korn_core::geometry::Domain;
use korn_core::korn::eig::pdot;
use korn_core::korn::{apply_block, apply_scalar3, lobpcg, EigOptions, LatticeMg, Pencil, Projector, VoxelMesh};
use korn_core::korn::kernel_constraints;
use nalgebra::{Cholesky, DVector};
use std::time::Instant;

fn main() {
    let dom = Domain::builtin("unit_cube").unwrap();
    let coarse_h = 0.25;
    let h = 0.125;

    let mesh = VoxelMesh::build(&dom, h);
    let b = mesh.assemble_lform(0.0);
    let stiff = mesh.assemble_stiffness(0.0);
    let (y, gram) = mesh.gradient_pairings(0.0);
    let chol = Cholesky::new(gram).unwrap();
    let t_apply = |x: &[f64], out: &mut [f64]| {
        apply_scalar3(&stiff, x, out);
        let m = y.len();
        let mut rhs = DVector::zeros(m);
        for j in 0..m {
            rhs[j] = pdot(&y[j], x);
        }
        let c = chol.solve(&rhs);
        for j in 0..m {
            let cj = c[j];
            if cj != 0.0 {
                for (o, v) in out.iter_mut().zip(&y[j]) {
                    *o -= cj * v;
                }
            }
        }
    };
    let s_apply = |x: &[f64], out: &mut [f64]| apply_block(&b, x, out);
    let constraints = Projector::from_columns(&kernel_constraints(&mesh));
    let mg = LatticeMg::new(&mesh);
    let n = mesh.n_dofs();

    let single = |x: &[f64], out: &mut [f64]| mg.apply_vector(x, out);
    let double = |x: &[f64], out: &mut [f64]| {
        // 2V - V T V: symmetrized two-cycle approximation of T^-1.
        let mut a = vec![0.0; n];
        mg.apply_vector(x, &mut a);
        let mut ta = vec![0.0; n];
        t_apply(&a, &mut ta);
        mg.apply_vector(&ta, out);
        for (o, av) in out.iter_mut().zip(&a) {
            *o = 2.0 * av - *o;
        }
    };

    // Coarse warm start block.
    let t0 = Instant::now();
    let cmesh = VoxelMesh::build(&dom, coarse_h);
    let cb = cmesh.assemble_lform(0.0);
    let cstiff = cmesh.assemble_stiffness(0.0);
    let (cy, cgram) = cmesh.gradient_pairings(0.0);
    let cchol = Cholesky::new(cgram).unwrap();
    let ct_apply = |x: &[f64], out: &mut [f64]| {
        apply_scalar3(&cstiff, x, out);
        let m = cy.len();
        let mut rhs = DVector::zeros(m);
        for j in 0..m {
            rhs[j] = pdot(&cy[j], x);
        }
        let c = cchol.solve(&rhs);
        for j in 0..m {
            let cj = c[j];
            if cj != 0.0 {
                for (o, v) in out.iter_mut().zip(&cy[j]) {
                    *o -= cj * v;
                }
            }
        }
    };
    let cs_apply = |x: &[f64], out: &mut [f64]| apply_block(&cb, x, out);
    let ccons = Projector::from_columns(&kernel_constraints(&cmesh));
    let cmg = LatticeMg::new(&cmesh);
    let cpre = |x: &[f64], out: &mut [f64]| cmg.apply_vector(x, out);
    let cpencil = Pencil {
        n: cmesh.n_dofs(),
        s_apply: &cs_apply,
        t_apply: &ct_apply,
        precond: Some(&cpre),
    };
    let opts = EigOptions {
        block: 4,
        need: 1,
        max_iter: 2000,
        tol: 1e-8,
        seed: 7,
    };
    let cres = lobpcg(&cpencil, Some(&ccons), None, &opts);
    println!(
        "coarse h={coarse_h} iters={} lambda={:.9} dt={:.1}s",
        cres.iterations,
        cres.values[0],
        t0.elapsed().as_secs_f64()
    );
    let init: Vec<Vec<f64>> = cres.vectors
        .iter()
        .map(|v| mesh.interpolate(|x| cmesh.eval_at(v, x).unwrap_or([0.0; 3])))
        .collect();

    for (name, warm) in [("cold", false), ("warm", true)] {
        for (pname, pre) in [
            ("v1", &single as &(dyn Fn(&[f64], &mut [f64]) + Sync)),
            ("v2", &double as &(dyn Fn(&[f64], &mut [f64]) + Sync)),
        ] {
            let pencil = Pencil {
                n,
                s_apply: &s_apply,
                t_apply: &t_apply,
                precond: Some(pre),
            };
            let t0 = Instant::now();
            let start = if warm { Some(init.clone()) } else { None };
            let res = lobpcg(&pencil, Some(&constraints), start, &opts);
            println!(
                "{name}/{pname}: iters={} lambda={:.12} res={:.2e} dt={:.1}s values={:?}",
                res.iterations,
                res.values[0],
                res.residuals[0],
                t0.elapsed().as_secs_f64(),
                res.values
            );
        }
    }
}
