//! End-to-end audit of the duality argument behind the inequality.
//!
//! For a random matrix field `F` split as `g + psi` (gradient-space part
//! removed) and a random cubic test field `u` orthogonalized against the
//! generator span, the pairing `I[Du : F]` is pushed through the chain
//!
//!   reconstruction -> per-region projection -> local constants ->
//!   sum factorization -> overlap counting -> piece mass -> split stability
//!
//! with every constant measured, not assumed. Each link reports its two
//! sides and must close with nonnegative slack up to rounding. Region inner
//! products put cell payloads on the main nodes and bump corrections on the
//! overlap-box nodes; the two node families are disjoint, so the box terms
//! telescope between parent and child and the per-region Cauchy-Schwarz
//! steps are exact.

use crate::conformal::{kernel_basis, split_off_v, v_dim, VBasis};
use crate::decompose::{eval_generator, v_decompose_with, Bump, Decomposition, Pou};
use crate::fields::poly::{trace_free_strain, Poly, VecPoly};
use crate::fields::{i_dot, weighted_norm, Quad, SampledField};
use crate::tol;
use crate::tree::{OverlapBox, RootedTree};
use crate::whitney::WhitneyCover;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use serde::Serialize;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, Serialize)]
pub struct ChainLink {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainReport {
    pub links: Vec<ChainLink>,
    /// Largest measured region constant.
    pub c_max: f64,
    /// Largest node multiplicity across regions.
    pub mult_max: usize,
    /// Piece-mass ratio `sqrt(sum ||g_t||^2) / ||g||`.
    pub norm_ratio: f64,
    /// Split stability bound.
    pub split_c1: f64,
    /// Sum of projection leakage terms.
    pub eps_total: f64,
    /// Residual pairing of the test field with the removed space.
    pub psi_pairing: f64,
    pub regions: usize,
    pub all_pass: bool,
}

/// Per-region accumulators in the two-part inner product.
#[derive(Default)]
struct Region {
    ip_gd: f64,
    g_sq: f64,
    l_sq: f64,
    du_sq: f64,
    y_du: [f64; 7],
    g_pair: [f64; 7],
    gram: [[f64; 7]; 7],
}

fn accumulate_point(
    reg: &mut Region,
    n: usize,
    w: f64,
    x: &[f64],
    gval: &[f64],
    du: &[f64],
    lu: &[f64],
    gen: &mut [f64],
) {
    let m = v_dim(n);
    reg.ip_gd += w * gval.iter().zip(du).map(|(a, b)| a * b).sum::<f64>();
    reg.g_sq += w * gval.iter().map(|a| a * a).sum::<f64>();
    reg.l_sq += w * lu.iter().map(|a| a * a).sum::<f64>();
    reg.du_sq += w * du.iter().map(|a| a * a).sum::<f64>();
    let mut gvals = [[0.0f64; 16]; 7];
    for j in 0..m {
        eval_generator(n, j, x, gen);
        gvals[j][..n * n].copy_from_slice(&gen[..n * n]);
        reg.y_du[j] += w * gen.iter().zip(du).map(|(a, b)| a * b).sum::<f64>();
        reg.g_pair[j] += w * gen.iter().zip(gval).map(|(a, b)| a * b).sum::<f64>();
    }
    for j in 0..m {
        for k in j..m {
            let d: f64 = gvals[j][..n * n]
                .iter()
                .zip(&gvals[k][..n * n])
                .map(|(a, b)| a * b)
                .sum();
            reg.gram[j][k] += w * d;
        }
    }
}

/// Projection data: perpendicular energy of `Du` and the leakage of its
/// generator component against the piece.
fn region_projection(reg: &Region, m: usize) -> (f64, f64) {
    let mut g = DMatrix::<f64>::zeros(m, m);
    for j in 0..m {
        for k in j..m {
            g[(j, k)] = reg.gram[j][k];
            g[(k, j)] = reg.gram[j][k];
        }
    }
    let eig = SymmetricEigen::new(g);
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let y = DVector::from_row_slice(&reg.y_du[..m]);
    let coef = if lmax <= 0.0 {
        DVector::zeros(m)
    } else {
        // Pseudo-inverse restricted to the numerically resolved span.
        let mut c = DVector::zeros(m);
        for i in 0..m {
            let lam = eig.eigenvalues[i];
            if lam > 1e-12 * lmax {
                let u = eig.eigenvectors.column(i);
                c += u * (u.dot(&y) / lam);
            }
        }
        c
    };
    let proj_sq = coef.dot(&y);
    let du_perp_sq = (reg.du_sq - proj_sq).max(0.0);
    let leak: f64 = (0..m).map(|j| coef[j] * reg.g_pair[j]).sum();
    (du_perp_sq.sqrt(), leak.abs())
}

/// Random polynomial with the given total degree, all coefficients uniform.
pub(crate) fn random_poly(n: usize, deg: u8, rng: &mut ChaCha8Rng) -> Poly {
    let mut p = Poly::zero(n);
    let mut exps = [0u8; crate::geometry::dyadic::MAX_DIM];
    fn walk(
        p: &mut Poly,
        exps: &mut [u8; crate::geometry::dyadic::MAX_DIM],
        axis: usize,
        left: u8,
        n: usize,
        rng: &mut ChaCha8Rng,
    ) {
        if axis == n {
            p.add_term(*exps, rng.gen_range(-1.0..1.0));
            return;
        }
        for e in 0..=left {
            exps[axis] = e;
            walk(p, exps, axis + 1, left - e, n, rng);
            exps[axis] = 0;
        }
    }
    walk(&mut p, &mut exps, 0, deg, n, rng);
    p
}

pub(crate) fn random_vec_poly(n: usize, deg: u8, rng: &mut ChaCha8Rng) -> VecPoly {
    let mut u = VecPoly::zero(n);
    for c in 0..n {
        u.comps[c] = random_poly(n, deg, rng);
    }
    u
}

fn random_matrix_field(quad: &Quad, n: usize, rng: &mut ChaCha8Rng) -> SampledField {
    let mut f = SampledField::zeros(quad, n * n);
    let polys: Vec<Poly> = (0..n * n).map(|_| random_poly(n, 2, rng)).collect();
    for i in 0..quad.len() {
        let x = &quad.nodes[i];
        let out = f.at_mut(i);
        for (e, p) in polys.iter().enumerate() {
            out[e] = p.eval(&x[..n]);
        }
    }
    f
}

/// Test field: random cubic with its generator pairings subtracted through
/// the kernel fields, so its gradient is orthogonal to the removed span.
fn orthogonal_test_field(
    quad: &Quad,
    basis: &VBasis,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> VecPoly {
    let mut u = random_vec_poly(n, 3, rng);
    let kb = kernel_basis(n);
    for (j, psi) in basis.psi.iter().enumerate() {
        let du = SampledField::from_matpoly(quad, &u.jacobian());
        let d = i_dot(quad, &du, psi);
        // Kernel field whose gradient is psi_j.
        let mut w = VecPoly::zero(n);
        for (k, &coef) in basis.coefs[j].iter().enumerate() {
            if coef != 0.0 {
                w = w.add(&kb[n + k].scale(coef));
            }
        }
        u = u.add(&w.scale(-d));
    }
    u
}

#[allow(clippy::too_many_arguments)]
pub fn duality_chain_case(
    quad: &Quad,
    cover: &WhitneyCover,
    tree: &RootedTree,
    boxes: &[OverlapBox],
    pou: &Pou,
    basis: &VBasis,
    seed: u64,
) -> ChainReport {
    let n = cover.dim;
    assert_eq!(n, 3, "region accumulators are sized for three dimensions");
    let m = v_dim(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Input pair: a split field and an orthogonalized test field.
    let mut f = random_matrix_field(quad, n, &mut rng);
    let nf = weighted_norm(quad, &f, 2.0, 0.0);
    f.scale(1.0 / nf);
    let split = split_off_v(quad, basis, &f);
    let g = split.h;
    let mut psi = f.clone();
    psi.axpy(-1.0, &g);
    let dec: Decomposition =
        v_decompose_with(quad, cover, tree, boxes, pou, &g).expect("split output is admissible");

    let u = orthogonal_test_field(quad, basis, n, &mut rng);
    let du_f = SampledField::from_matpoly(quad, &u.jacobian());
    let lu_f = SampledField::from_matpoly(quad, &trace_free_strain(&u));

    let lhs_total = i_dot(quad, &du_f, &f);
    let lhs_g = i_dot(quad, &du_f, &g);
    let psi_pairing = i_dot(quad, &du_f, &psi);
    let du_norm = weighted_norm(quad, &du_f, 2.0, 0.0);
    let psi_norm = weighted_norm(quad, &psi, 2.0, 0.0);
    let f_norm = weighted_norm(quad, &f, 2.0, 0.0);
    let g_norm = weighted_norm(quad, &g, 2.0, 0.0);

    // Region sweep.
    let mut counts = vec![0u32; quad.len()];
    let mut regions = Vec::new();
    let mut gen = vec![0.0; n * n];
    let mut bval = vec![0.0; n * n];
    for t in 0..cover.len() {
        if !dec.active[t] {
            continue;
        }
        let mut reg = Region::default();
        let piece = &dec.pieces[t];
        for (k, &i) in piece.node_ids.iter().enumerate() {
            let w = quad.w_main[i];
            if w == 0.0 {
                continue;
            }
            counts[i] += 1;
            let cell = &piece.vals[k * piece.stride..(k + 1) * piece.stride];
            accumulate_point(
                &mut reg,
                n,
                w,
                &quad.nodes[i][..n],
                cell,
                du_f.at(i),
                lu_f.at(i),
                &mut gen,
            );
        }
        let mut signed: Vec<(f64, &Bump)> = Vec::new();
        if let Some(b) = &dec.bumps[t] {
            signed.push((-1.0, b));
        }
        for &c in &tree.children[t] {
            if let Some(b) = &dec.bumps[c] {
                signed.push((1.0, b));
            }
        }
        for (sign, bump) in signed {
            let (lo, hi) = quad.box_range[bump.box_id];
            for i in lo..hi {
                let w = quad.w_box[i];
                if w == 0.0 {
                    continue;
                }
                counts[i] += 1;
                bump.eval(n, &quad.nodes[i][..n], &mut bval);
                for v in bval.iter_mut() {
                    *v *= sign;
                }
                accumulate_point(
                    &mut reg,
                    n,
                    w,
                    &quad.nodes[i][..n],
                    &bval,
                    du_f.at(i),
                    lu_f.at(i),
                    &mut gen,
                );
            }
        }
        regions.push(reg);
    }

    // Measured chain quantities.
    let mut sum_ip = 0.0;
    let mut sum_proj = 0.0;
    let mut sum_lg = 0.0;
    let mut sum_l_sq = 0.0;
    let mut sum_g_sq = 0.0;
    let mut eps_total = 0.0;
    let mut c_max = 0.0f64;
    for reg in &regions {
        let (du_perp, leak) = region_projection(reg, m);
        let g_t = reg.g_sq.sqrt();
        let l_t = reg.l_sq.sqrt();
        sum_ip += reg.ip_gd;
        sum_proj += du_perp * g_t + leak;
        sum_lg += l_t * g_t;
        sum_l_sq += reg.l_sq;
        sum_g_sq += reg.g_sq;
        eps_total += leak;
        if l_t > 0.0 {
            c_max = c_max.max(du_perp / l_t);
        } else {
            assert!(
                du_perp <= 1e-12 * du_norm,
                "region with strain-free test energy {du_perp}"
            );
        }
    }
    let mult_max = counts.iter().cloned().max().unwrap_or(0) as usize;
    let mut l_glob_sq = 0.0;
    for i in 0..quad.len() {
        let w = quad.w_main[i] + quad.w_box[i];
        if w != 0.0 {
            let v = lu_f.at(i);
            l_glob_sq += w * v.iter().map(|a| a * a).sum::<f64>();
        }
    }
    let norm_ratio = sum_g_sq.sqrt() / g_norm.max(f64::MIN_POSITIVE);

    let scale = du_norm * f_norm + f64::MIN_POSITIVE;
    let recon_err = (lhs_g - sum_ip).abs();
    let mut links = Vec::new();
    let mut push = |name: &'static str, lhs: f64, rhs: f64, tol: f64| {
        let slack = rhs - lhs;
        links.push(ChainLink {
            name,
            lhs,
            rhs,
            slack,
            pass: slack >= -tol,
        });
    };

    push(
        "removed-space pairing vanishes",
        psi_pairing.abs(),
        tol::PIECE_PAIRING * (du_norm * psi_norm + f64::MIN_POSITIVE),
        0.0,
    );
    push(
        "region sum reconstructs the pairing",
        recon_err,
        tol::RECONSTRUCTION * scale,
        0.0,
    );
    push(
        "per-region projection bound",
        sum_ip,
        sum_proj,
        tol::EXACT_ALGEBRA * scale,
    );
    push(
        "measured local constants",
        sum_proj,
        c_max * sum_lg + eps_total,
        tol::EXACT_ALGEBRA * (scale + sum_proj.abs()),
    );
    push(
        "sum factorization",
        sum_lg,
        sum_l_sq.sqrt() * sum_g_sq.sqrt(),
        tol::EXACT_ALGEBRA * (1.0 + sum_lg.abs()),
    );
    push(
        "overlap counting",
        sum_l_sq,
        mult_max as f64 * l_glob_sq,
        tol::EXACT_ALGEBRA * (1.0 + sum_l_sq),
    );
    push(
        "piece mass ratio is finite",
        sum_g_sq.sqrt(),
        norm_ratio * g_norm,
        tol::EXACT_ALGEBRA * (1.0 + sum_g_sq.sqrt()),
    );
    push(
        "split stability",
        g_norm,
        split.c1 * f_norm,
        tol::EXACT_ALGEBRA * (1.0 + g_norm),
    );
    let composite_rhs = c_max * (mult_max as f64).sqrt() * l_glob_sq.sqrt() * norm_ratio
        * split.c1
        * f_norm
        + eps_total
        + psi_pairing.abs()
        + recon_err;
    push(
        "composite estimate",
        lhs_total,
        composite_rhs,
        tol::EXACT_ALGEBRA * (scale + composite_rhs.abs()),
    );

    let all_pass = links.iter().all(|l| l.pass);
    ChainReport {
        links,
        c_max,
        mult_max,
        norm_ratio,
        split_c1: split.c1,
        eps_total,
        psi_pairing,
        regions: regions.len(),
        all_pass,
    }
}
