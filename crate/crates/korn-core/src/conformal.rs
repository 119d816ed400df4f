//! The conformal kernel and its gradient space.
//!
//! The trace-free strain `l(v) = eps(v) - (div v / n) Id` annihilates exactly
//! the conformal fields: translations, rotations, the dilation and the `n`
//! special quadratic fields (for ambient dimension at least three). Their
//! gradients span an `m`-dimensional space `V` of matrix fields with
//! `m = n(n-1)/2 + 1 + n`, generated by the constant skew matrices `E_ij`,
//! the identity, and the linear matrix fields `H_i`.

use crate::fields::poly::{MatPoly, Poly, VecPoly};
use crate::fields::{i_dot, weighted_norm, weighted_norm_cubes, Quad, SampledField};

pub fn kernel_dim(n: usize) -> usize {
    (n + 1) * (n + 2) / 2
}

pub fn v_dim(n: usize) -> usize {
    n * (n - 1) / 2 + 1 + n
}

/// Constant skew matrix with +1 at (i, j) and -1 at (j, i).
pub fn e_matrix(n: usize, i: usize, j: usize) -> MatPoly {
    assert!(i != j && i < n && j < n);
    let mut m = MatPoly::zero(n);
    m.set(i, j, Poly::constant(n, 1.0));
    m.set(j, i, Poly::constant(n, -1.0));
    m
}

/// Linear matrix field `H_i`: entry (j, k) is
/// `d_jk x_i + d_ki x_j - d_ji x_k` (d = Kronecker delta).
pub fn h_matrix(n: usize, i: usize) -> MatPoly {
    assert!(i < n);
    let mut m = MatPoly::zero(n);
    for j in 0..n {
        for k in 0..n {
            let mut p = Poly::zero(n);
            if j == k {
                p = p.add(&Poly::var(n, i));
            }
            if k == i {
                p = p.add(&Poly::var(n, j));
            }
            if j == i {
                p = p.sub(&Poly::var(n, k));
            }
            m.set(j, k, p);
        }
    }
    m
}

/// Basis of the kernel of the trace-free strain: translations, rotations,
/// the dilation, then the special fields `x_i x - |x|^2 e_i / 2`.
pub fn kernel_basis(n: usize) -> Vec<VecPoly> {
    assert!((3..=4).contains(&n), "conformal kernel needs dimension 3 or 4");
    let mut out = Vec::with_capacity(kernel_dim(n));
    for i in 0..n {
        let mut v = VecPoly::zero(n);
        v.comps[i] = Poly::constant(n, 1.0);
        out.push(v);
    }
    for i in 0..n {
        for j in i + 1..n {
            let mut v = VecPoly::zero(n);
            v.comps[i] = Poly::var(n, j);
            v.comps[j] = Poly::var(n, i).scale(-1.0);
            out.push(v);
        }
    }
    let mut dil = VecPoly::zero(n);
    for a in 0..n {
        dil.comps[a] = Poly::var(n, a);
    }
    out.push(dil);
    for i in 0..n {
        out.push(special_field(n, i));
    }
    out
}

/// Quadratic kernel field whose gradient is `H_i`.
pub fn special_field(n: usize, i: usize) -> VecPoly {
    let xi = Poly::var(n, i);
    let mut norm2 = Poly::zero(n);
    for a in 0..n {
        let xa = Poly::var(n, a);
        norm2 = norm2.add(&xa.mul(&xa));
    }
    let mut v = VecPoly::zero(n);
    for a in 0..n {
        v.comps[a] = xi.mul(&Poly::var(n, a));
    }
    v.comps[i] = v.comps[i].sub(&norm2.scale(0.5));
    v
}

/// Generators of `V` in canonical order: `E_ij` (i < j, lexicographic),
/// the identity, then `H_1 .. H_n`.
pub fn v_generators(n: usize) -> Vec<MatPoly> {
    assert!((3..=4).contains(&n), "gradient space needs dimension 3 or 4");
    let mut out = Vec::with_capacity(v_dim(n));
    for i in 0..n {
        for j in i + 1..n {
            out.push(e_matrix(n, i, j));
        }
    }
    out.push(MatPoly::identity_scaled(n, &Poly::constant(n, 1.0)));
    for i in 0..n {
        out.push(h_matrix(n, i));
    }
    out
}

/// Exact Gram of the `H_i` over the centered cube of side `l`:
/// `delta_ij (3n - 2) l^(n+2) / 12`.
pub fn h_gram_closed_form(n: usize, l: f64) -> f64 {
    (3.0 * n as f64 - 2.0) * l.powi(n as i32 + 2) / 12.0
}

/// `H_j(x - y)` expanded over the generators:
/// `H_j(x) - y_j Id - sum_{k != j} y_k E_kj`.
pub fn h_anchor_shift(n: usize, j: usize, y: &[f64]) -> MatPoly {
    let mut m = h_matrix(n, j);
    let id = MatPoly::identity_scaled(n, &Poly::constant(n, 1.0));
    m = m.sub(&id.scale(y[j]));
    for k in 0..n {
        if k != j {
            // E_kj for k > j is -E_jk in the i < j convention.
            let e = if k < j {
                e_matrix(n, k, j)
            } else {
                e_matrix(n, j, k).scale(-1.0)
            };
            m = m.sub(&e.scale(y[k]));
        }
    }
    m
}

/// Orthonormal basis of `V` in the product `<f, g> = I[f : g rho^(p beta)]`.
#[derive(Clone, Debug)]
pub struct VBasis {
    pub n: usize,
    pub p: f64,
    pub beta: f64,
    /// rho^(p beta) at every node.
    pub weight: Vec<f64>,
    /// Orthonormal sampled fields.
    pub psi: Vec<SampledField>,
    /// psi_j expressed over the raw generators.
    pub coefs: Vec<Vec<f64>>,
    /// Ratio of largest to smallest pivot norm in the orthogonalization.
    pub condition: f64,
}

pub fn weighted_dot(quad: &Quad, weight: &[f64], a: &SampledField, b: &SampledField) -> f64 {
    let mut s = 0.0;
    for i in 0..quad.len() {
        let w = quad.w_main[i];
        if w != 0.0 {
            let d: f64 = a.at(i).iter().zip(b.at(i)).map(|(x, y)| x * y).sum();
            s += w * weight[i] * d;
        }
    }
    s
}

/// Modified Gram-Schmidt over the sampled generators.
pub fn orthonormalize_v(quad: &Quad, p: f64, beta: f64) -> VBasis {
    let n = quad.dim;
    let gens = v_generators(n);
    let m = gens.len();
    let weight: Vec<f64> = quad
        .rho
        .iter()
        .map(|&r| if beta == 0.0 { 1.0 } else { r.powf(p * beta) })
        .collect();
    let mut psi: Vec<SampledField> = Vec::with_capacity(m);
    let mut coefs: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut pivot_min = f64::INFINITY;
    let mut pivot_max = 0.0f64;
    for (j, g) in gens.iter().enumerate() {
        let mut f = SampledField::from_matpoly(quad, g);
        let mut row = vec![0.0; m];
        row[j] = 1.0;
        // Two MGS passes for orthogonality to rounding level.
        for _ in 0..2 {
            for (k, q) in psi.iter().enumerate() {
                let c = weighted_dot(quad, &weight, &f, q);
                f.axpy(-c, q);
                for (r, qc) in row.iter_mut().zip(&coefs[k]) {
                    *r -= c * qc;
                }
            }
        }
        let nrm = weighted_dot(quad, &weight, &f, &f).sqrt();
        assert!(nrm > 0.0, "generator {j} degenerated under the weight");
        pivot_min = pivot_min.min(nrm);
        pivot_max = pivot_max.max(nrm);
        f.scale(1.0 / nrm);
        for r in &mut row {
            *r /= nrm;
        }
        psi.push(f);
        coefs.push(row);
    }
    VBasis {
        n,
        p,
        beta,
        weight,
        psi,
        coefs,
        condition: pivot_max / pivot_min,
    }
}

/// Splitting of a matrix field into a weighted `V` part and a complement
/// with vanishing unweighted pairings against the basis.
#[derive(Clone, Debug)]
pub struct VSplit {
    /// Coefficients `alpha_j = I[F : psi_j]` (unweighted pairing).
    pub alpha: Vec<f64>,
    /// `h = F - rho^(p beta) sum_j alpha_j psi_j`.
    pub h: SampledField,
    /// Residual pairings `I[h : psi_j]`, zero to rounding by construction.
    pub pairings: Vec<f64>,
    /// Measured stability constant with `||h|| <= c1 ||F||` in the
    /// (p, beta)-norm.
    pub c1: f64,
}

pub fn split_off_v(quad: &Quad, basis: &VBasis, f: &SampledField) -> VSplit {
    let alpha: Vec<f64> = basis.psi.iter().map(|q| i_dot(quad, f, q)).collect();
    let mut h = f.clone();
    for (a, q) in alpha.iter().zip(&basis.psi) {
        let mut wq = q.clone();
        wq.scale_per_node(&basis.weight);
        h.axpy(-a, &wq);
    }
    let pairings: Vec<f64> = basis.psi.iter().map(|q| i_dot(quad, &h, q)).collect();
    let p = basis.p;
    let pc = p / (p - 1.0);
    let mut c1 = 1.0;
    for q in &basis.psi {
        let dual = weighted_norm(quad, q, pc, -basis.beta);
        let mut wq = q.clone();
        wq.scale_per_node(&basis.weight);
        let primal = weighted_norm(quad, &wq, p, basis.beta);
        c1 += dual * primal;
    }
    VSplit {
        alpha,
        h,
        pairings,
        c1,
    }
}

/// Outcome of replacing a complement field by one with finite cube support.
#[derive(Clone, Debug)]
pub struct TruncationReport {
    /// Number of cubes the field was kept on.
    pub kept: usize,
    /// Cubes whose contribution was discarded, ascending.
    pub dropped_cubes: Vec<usize>,
    /// `(q, -beta)`-norm of the field over the dropped cubes.
    pub tail_norm: f64,
    /// Tail pairings `c_i = I[h : nu_i]` over the dropped cubes.
    pub coefs: Vec<f64>,
    /// Residual pairings of the output against the raw generators.
    pub pairings: Vec<f64>,
    /// `(q, -beta)`-norm of `h - g`.
    pub error_actual: f64,
    /// `tail_norm (1 + sum_i |nu_i|_(p,beta) |rho^(p beta) nu_i|_(q,-beta,Q))`,
    /// an a-priori ceiling for `error_actual`.
    pub error_bound: f64,
    /// Pivot-norm ratio of the orthogonalization restricted to `Q`.
    pub condition: f64,
}

fn region_dot(quad: &Quad, mask: &[bool], weight: &[f64], a: &SampledField, b: &SampledField) -> f64 {
    let mut s = 0.0;
    for i in 0..quad.len() {
        let w = quad.w_main[i];
        if w != 0.0 && mask[quad.cube_of[i]] {
            let d: f64 = a.at(i).iter().zip(b.at(i)).map(|(x, y)| x * y).sum();
            s += w * weight[i] * d;
        }
    }
    s
}

/// Replaces a field with vanishing generator pairings by one supported on
/// finitely many cubes, restoring the pairings with a correction carried by
/// the region `Q`.
///
/// Cubes outside `q_cubes` are discarded greedily, smallest `(q, -beta)`
/// contribution first, for as long as the discarded tail stays at or below
/// `epsilon`. The correction is `sum_i c_i rho^(p beta) nu_i` on `Q`, where
/// the `nu_i` orthonormalize the generators in the `Q`-restricted weighted
/// product and `c_i` pairs `h` over the dropped cubes, so every generator
/// pairing of the output cancels to quadrature accuracy.
pub fn truncate_to_w0(
    quad: &Quad,
    h: &SampledField,
    epsilon: f64,
    q_cubes: &[usize],
    p: f64,
    beta: f64,
) -> (SampledField, TruncationReport) {
    let n = quad.dim;
    let n_cubes = quad.cube_range.len();
    assert!(!q_cubes.is_empty(), "correction region must be nonempty");
    assert!(epsilon >= 0.0 && p > 1.0 && beta >= 0.0);
    let q = p / (p - 1.0);
    let mut in_q = vec![false; n_cubes];
    for &t in q_cubes {
        in_q[t] = true;
    }

    // Per-cube tail contribution in the (q, -beta)-norm, q-th power.
    let mut contrib = vec![0.0f64; n_cubes];
    for i in 0..quad.len() {
        let w = quad.w_main[i];
        if w != 0.0 {
            let mag = h.abs_at(i);
            if mag > 0.0 {
                contrib[quad.cube_of[i]] += w * quad.rho[i].powf(-q * beta) * mag.powf(q);
            }
        }
    }
    let mut order: Vec<usize> = (0..n_cubes).filter(|t| !in_q[*t]).collect();
    order.sort_by(|&a, &b| contrib[a].total_cmp(&contrib[b]).then(a.cmp(&b)));
    let mut keep = vec![true; n_cubes];
    let mut tail_pow = 0.0;
    let mut dropped_cubes = Vec::new();
    let budget = epsilon.powf(q);
    for t in order {
        if tail_pow + contrib[t] <= budget {
            tail_pow += contrib[t];
            keep[t] = false;
            dropped_cubes.push(t);
        }
    }
    dropped_cubes.sort_unstable();
    let tail_norm = tail_pow.powf(1.0 / q);

    // Orthonormalize the generators in the Q-restricted weighted product.
    let gens = v_generators(n);
    let weight: Vec<f64> = quad
        .rho
        .iter()
        .map(|&r| if beta == 0.0 { 1.0 } else { r.powf(p * beta) })
        .collect();
    let mut nu: Vec<SampledField> = Vec::with_capacity(gens.len());
    let mut pivot_min = f64::INFINITY;
    let mut pivot_max = 0.0f64;
    for (j, g) in gens.iter().enumerate() {
        let mut f = SampledField::from_matpoly(quad, g);
        for _ in 0..2 {
            for v in &nu {
                let c = region_dot(quad, &in_q, &weight, &f, v);
                f.axpy(-c, v);
            }
        }
        let nrm = region_dot(quad, &in_q, &weight, &f, &f).sqrt();
        assert!(nrm > 0.0, "generator {j} degenerates on the region");
        pivot_min = pivot_min.min(nrm);
        pivot_max = pivot_max.max(nrm);
        f.scale(1.0 / nrm);
        nu.push(f);
    }

    // Tail pairings and the corrected, finitely supported field.
    let dropped: Vec<bool> = keep.iter().map(|k| !k).collect();
    let ones = vec![1.0; quad.len()];
    let coefs: Vec<f64> = nu
        .iter()
        .map(|v| region_dot(quad, &dropped, &ones, h, v))
        .collect();
    let mut g_out = h.clone();
    for i in 0..quad.len() {
        if !keep[quad.cube_of[i]] {
            for v in g_out.at_mut(i) {
                *v = 0.0;
            }
        }
    }
    for (c, v) in coefs.iter().zip(&nu) {
        for i in 0..quad.len() {
            if in_q[quad.cube_of[i]] {
                let w = *c * weight[i];
                for (o, s) in g_out.at_mut(i).iter_mut().zip(v.at(i)) {
                    *o += w * s;
                }
            }
        }
    }

    let pairings: Vec<f64> = gens
        .iter()
        .map(|gm| i_dot(quad, &g_out, &SampledField::from_matpoly(quad, gm)))
        .collect();
    let mut diff = h.clone();
    diff.axpy(-1.0, &g_out);
    let error_actual = weighted_norm(quad, &diff, q, -beta);
    let mut bound_sum = 1.0;
    for v in &nu {
        let primal = weighted_norm(quad, v, p, beta);
        let mut wv = v.clone();
        wv.scale_per_node(&weight);
        bound_sum += primal * weighted_norm_cubes(quad, &wv, q, -beta, &in_q);
    }
    let report = TruncationReport {
        kept: keep.iter().filter(|k| **k).count(),
        dropped_cubes,
        tail_norm,
        coefs,
        pairings,
        error_actual,
        error_bound: tail_norm * bound_sum,
        condition: pivot_max / pivot_min,
    };
    (g_out, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::poly::trace_free_strain;
    use crate::geometry::Domain;
    use crate::tree::{overlap_boxes, RootedTree};
    use crate::whitney::WhitneyCover;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trace_free_strain_kills_kernel_basis() {
        for n in [3, 4] {
            for (k, v) in kernel_basis(n).iter().enumerate() {
                let l = trace_free_strain(v);
                assert!(
                    l.max_abs_coeff() == 0.0,
                    "kernel field {k} in dim {n} leaks strain"
                );
            }
        }
    }

    #[test]
    fn trace_free_strain_kills_random_kernel_combos() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [3, 4] {
            let basis = kernel_basis(n);
            for _ in 0..100 {
                let mut v = VecPoly::zero(n);
                let mut scale = 0.0f64;
                for b in &basis {
                    let c: f64 = rng.gen_range(-2.0..2.0);
                    scale = scale.max(c.abs());
                    v = v.add(&b.scale(c));
                }
                let l = trace_free_strain(&v);
                assert!(l.max_abs_coeff() <= 1e-12 * scale.max(1.0));
            }
        }
    }

    #[test]
    fn non_kernel_fields_leak_strain() {
        let n = 3;
        let mut v = VecPoly::zero(n);
        v.comps[0] = Poly::var(n, 0).mul(&Poly::var(n, 0));
        assert!(trace_free_strain(&v).max_abs_coeff() > 0.1);
        // A shear is not conformal either.
        let mut w = VecPoly::zero(n);
        w.comps[0] = Poly::var(n, 1);
        assert!(trace_free_strain(&w).max_abs_coeff() > 0.1);
    }

    fn coeff_rank(mats: &[MatPoly]) -> usize {
        use std::collections::BTreeMap;
        // Collect all monomial slots over all entries.
        let mut slots: BTreeMap<(usize, [u8; 4]), usize> = BTreeMap::new();
        for m in mats {
            for (e, p) in m.entries.iter().enumerate() {
                for (exp, _) in p.terms() {
                    let key = (e, *exp);
                    let next = slots.len();
                    slots.entry(key).or_insert(next);
                }
            }
        }
        let rows = mats.len();
        let cols = slots.len();
        let mut a = nalgebra::DMatrix::<f64>::zeros(rows, cols);
        for (r, m) in mats.iter().enumerate() {
            for (e, p) in m.entries.iter().enumerate() {
                for (exp, c) in p.terms() {
                    a[(r, slots[&(e, *exp)])] = *c;
                }
            }
        }
        a.svd(false, false).rank(1e-10)
    }

    fn vec_coeff_rank(vs: &[VecPoly]) -> usize {
        use std::collections::BTreeMap;
        let mut slots: BTreeMap<(usize, [u8; 4]), usize> = BTreeMap::new();
        for v in vs {
            for (e, p) in v.comps.iter().enumerate() {
                for (exp, _) in p.terms() {
                    let key = (e, *exp);
                    let next = slots.len();
                    slots.entry(key).or_insert(next);
                }
            }
        }
        let mut a = nalgebra::DMatrix::<f64>::zeros(vs.len(), slots.len());
        for (r, v) in vs.iter().enumerate() {
            for (e, p) in v.comps.iter().enumerate() {
                for (exp, c) in p.terms() {
                    a[(r, slots[&(e, *exp)])] = *c;
                }
            }
        }
        a.svd(false, false).rank(1e-10)
    }

    #[test]
    fn kernel_and_gradient_space_dimensions() {
        let b3 = kernel_basis(3);
        assert_eq!(b3.len(), 10);
        assert_eq!(vec_coeff_rank(&b3), 10);
        let g3 = v_generators(3);
        assert_eq!(g3.len(), 7);
        assert_eq!(coeff_rank(&g3), 7);

        let b4 = kernel_basis(4);
        assert_eq!(b4.len(), 15);
        assert_eq!(vec_coeff_rank(&b4), 15);
        let g4 = v_generators(4);
        assert_eq!(g4.len(), 11);
        assert_eq!(coeff_rank(&g4), 11);
    }

    #[test]
    fn gradient_of_special_field_is_h() {
        for n in [3, 4] {
            for i in 0..n {
                let d = special_field(n, i).jacobian();
                let diff = d.sub(&h_matrix(n, i));
                assert!(diff.max_abs_coeff() == 0.0, "dim {n}, i = {i}");
            }
        }
    }

    #[test]
    fn h_gram_matches_closed_form() {
        for n in [3usize, 4] {
            for l in [0.25, 0.5, 1.0, 2.0] {
                let lo = vec![-0.5 * l; n];
                let hi = vec![0.5 * l; n];
                for i in 0..n {
                    for j in 0..n {
                        let hij = h_matrix(n, i).frobenius(&h_matrix(n, j));
                        let got = hij.integrate_box(&lo, &hi);
                        let want = if i == j { h_gram_closed_form(n, l) } else { 0.0 };
                        let scale = h_gram_closed_form(n, l);
                        assert!(
                            (got - want).abs() <= 1e-13 * scale,
                            "n={n} l={l} ({i},{j}): {got} vs {want}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn anchor_shift_identity_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in [3, 4] {
            for _ in 0..25 {
                let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
                for j in 0..n {
                    let lhs = h_matrix(n, j).translate(&y);
                    let rhs = h_anchor_shift(n, j, &y);
                    let diff = lhs.sub(&rhs);
                    assert!(
                        diff.max_abs_coeff() <= 1e-10,
                        "n={n} j={j}: residual {}",
                        diff.max_abs_coeff()
                    );
                }
            }
        }
    }

    fn small_3d_quad(beta_weighted: bool) -> Quad {
        let dom = Domain::builtin("unit_cube").unwrap();
        let cov = WhitneyCover::build(&dom, 3);
        let tree = RootedTree::build(&cov, None).unwrap();
        let (boxes, _) = overlap_boxes(&cov, &tree).unwrap();
        Quad::build(&cov, &boxes, 3, beta_weighted.then_some(&dom))
    }

    #[test]
    fn orthonormal_basis_is_orthonormal_and_spans() {
        let quad = small_3d_quad(true);
        for (p, beta) in [(2.0, 0.0), (2.0, 1.0), (1.5, 0.5)] {
            let vb = orthonormalize_v(&quad, p, beta);
            assert_eq!(vb.psi.len(), 7);
            for j in 0..7 {
                for k in 0..7 {
                    let d = weighted_dot(&quad, &vb.weight, &vb.psi[j], &vb.psi[k]);
                    let want = if j == k { 1.0 } else { 0.0 };
                    assert!(
                        (d - want).abs() < 1e-12,
                        "p={p} beta={beta} ({j},{k}): {d}"
                    );
                }
            }
            assert!(vb.condition.is_finite() && vb.condition >= 1.0);
            // Every generator is reproduced by its projection.
            for g in v_generators(3) {
                let f = SampledField::from_matpoly(&quad, &g);
                let mut r = f.clone();
                for q in &vb.psi {
                    let c = weighted_dot(&quad, &vb.weight, &f, q);
                    r.axpy(-c, q);
                }
                let rn = weighted_dot(&quad, &vb.weight, &r, &r).sqrt();
                assert!(rn < 1e-10, "projection residual {rn}");
            }
        }
    }

    #[test]
    fn split_has_vanishing_pairings_and_bounded_norm() {
        let quad = small_3d_quad(true);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for (p, beta) in [(2.0, 1.0), (1.5, 0.0)] {
            let vb = orthonormalize_v(&quad, p, beta);
            for _ in 0..5 {
                let f = SampledField::from_fn(&quad, 9, |x, out| {
                    for (c, v) in out.iter_mut().enumerate() {
                        *v = rng.gen_range(-1.0..1.0)
                            + x[0] * (c as f64 * 0.1)
                            + x[1] * x[2];
                    }
                });
                let split = split_off_v(&quad, &vb, &f);
                let scale = weighted_norm(&quad, &f, p, beta).max(1.0);
                for pr in &split.pairings {
                    assert!(pr.abs() <= 1e-9 * scale, "pairing {pr}");
                }
                let hn = weighted_norm(&quad, &split.h, p, beta);
                let fn_ = weighted_norm(&quad, &f, p, beta);
                assert!(hn <= split.c1 * fn_ * (1.0 + 1e-12));
                assert!(split.c1.is_finite() && split.c1 >= 1.0);
            }
        }
    }

    /// Cube indices whose closure meets the center of the unit cube.
    fn central_cubes(quad: &Quad) -> Vec<usize> {
        let mut best = Vec::new();
        let mut best_d = f64::INFINITY;
        for (t, &(s0, s1)) in quad.cube_range.iter().enumerate() {
            let mut d = 0.0f64;
            for i in s0..s1 {
                let x = &quad.nodes[i];
                d += (x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2) + (x[2] - 0.5).powi(2);
            }
            d /= (s1 - s0) as f64;
            if d < best_d {
                best_d = d;
                best = vec![t];
            }
        }
        best
    }

    #[test]
    fn truncation_keeps_a_compact_field_intact() {
        let quad = small_3d_quad(false);
        let q_cubes = central_cubes(&quad);
        // A field living on exactly one non-central cube.
        let target = (0..quad.cube_range.len())
            .find(|t| !q_cubes.contains(t))
            .unwrap();
        let h = SampledField::from_fn(&quad, 9, |x, out| {
            out[0] = x[0] - x[1];
        });
        let mut h = h;
        for i in 0..quad.len() {
            if quad.cube_of[i] != target {
                for v in h.at_mut(i) {
                    *v = 0.0;
                }
            }
        }
        let (g, rep) = truncate_to_w0(&quad, &h, 0.0, &q_cubes, 2.0, 0.0);
        // Every dropped cube carried zero mass, so nothing changed.
        assert!(rep.tail_norm == 0.0);
        for c in &rep.coefs {
            assert!(*c == 0.0);
        }
        for i in 0..quad.len() {
            for (a, b) in g.at(i).iter().zip(h.at(i)) {
                assert!(a == b, "node {i} altered");
            }
        }
        assert!(!rep.dropped_cubes.contains(&target));
    }

    #[test]
    fn truncation_restores_generator_pairings() {
        let dom = Domain::builtin("unit_cube").unwrap();
        let cov = WhitneyCover::build(&dom, 4);
        let tree = RootedTree::build(&cov, None).unwrap();
        let (boxes, _) = overlap_boxes(&cov, &tree).unwrap();
        let quad = Quad::build(&cov, &boxes, 3, Some(&dom));
        let q_cubes = central_cubes(&quad);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let (p, beta) = (2.0, 1.0);
        let vb = orthonormalize_v(&quad, p, beta);
        for round in 0..10 {
            let f = SampledField::from_fn(&quad, 9, |x, out| {
                for (c, v) in out.iter_mut().enumerate() {
                    *v = rng.gen_range(-1.0..1.0) + x[(c + round) % 3] * x[round % 3];
                }
            });
            let h = split_off_v(&quad, &vb, &f).h;
            let q = p / (p - 1.0);
            let eps = 0.3 * weighted_norm(&quad, &h, q, -beta);
            let (g, rep) = truncate_to_w0(&quad, &h, eps, &q_cubes, p, beta);
            assert!(!rep.dropped_cubes.is_empty(), "round {round} dropped nothing");
            assert!(rep.tail_norm <= eps);
            // Output vanishes on every dropped cube.
            for i in 0..quad.len() {
                if rep.dropped_cubes.contains(&quad.cube_of[i]) {
                    assert!(g.abs_at(i) == 0.0);
                }
            }
            let scale = weighted_norm(&quad, &g, q, -beta).max(1.0);
            for pr in &rep.pairings {
                assert!(pr.abs() <= 1e-9 * scale, "round {round}: pairing {pr}");
            }
            assert!(rep.error_actual <= rep.error_bound * (1.0 + 1e-12) + 1e-14);
            assert!(rep.error_bound.is_finite());
            assert!(rep.condition >= 1.0);
        }
    }
}
