//! Quadrature contexts and sampled fields over Whitney covers.
//!
//! A [`Quad`] fixes one set of nodes for an entire cover: a tensor
//! Gauss-Legendre rule on each cube (these carry the global integration
//! weights) plus auxiliary rules on every parent-child overlap box, split at
//! the shared face so each half belongs to exactly one cube. All inner
//! products, norms and decomposition coefficients downstream are evaluated
//! through this single context, which keeps their algebraic identities true
//! to rounding even where the quadrature itself is inexact.

pub mod gauss;
pub mod poly;

use crate::geometry::dyadic::MAX_DIM;
use crate::geometry::Domain;
use crate::tree::OverlapBox;
use crate::whitney::WhitneyCover;
use poly::{MatPoly, VecPoly};

#[derive(Clone, Debug)]
pub struct Quad {
    pub dim: usize,
    pub order: usize,
    pub nodes: Vec<[f64; MAX_DIM]>,
    /// Global-integral weight; zero on overlap-box nodes.
    pub w_main: Vec<f64>,
    /// Overlap-box integral weight; zero on cube nodes.
    pub w_box: Vec<f64>,
    /// Cover cube owning each node.
    pub cube_of: Vec<usize>,
    /// Boundary distance at each node (1.0 when built without a domain).
    pub rho: Vec<f64>,
    /// Contiguous node range of each cube's main rule.
    pub cube_range: Vec<(usize, usize)>,
    /// Contiguous node range of each overlap box (both halves).
    pub box_range: Vec<(usize, usize)>,
}

impl Quad {
    pub fn build(
        cover: &WhitneyCover,
        boxes: &[OverlapBox],
        order: usize,
        domain: Option<&Domain>,
    ) -> Quad {
        let dim = cover.dim;
        let per_cube = order.pow(dim as u32);
        let total = cover.len() * per_cube + boxes.len() * 2 * per_cube;
        let mut nodes = Vec::with_capacity(total);
        let mut w_main = Vec::with_capacity(total);
        let mut w_box = Vec::with_capacity(total);
        let mut cube_of = Vec::with_capacity(total);
        let mut cube_range = Vec::with_capacity(cover.len());
        let push_rule =
            |lo: &[f64], hi: &[f64], cube: usize, main: bool,
             nodes: &mut Vec<[f64; MAX_DIM]>, w_main: &mut Vec<f64>,
             w_box: &mut Vec<f64>, cube_of: &mut Vec<usize>| {
                let (xs, ws) = gauss::tensor_rule(order, lo, hi);
                for (x, w) in xs.iter().zip(&ws) {
                    let mut p = [0.0; MAX_DIM];
                    p[..dim].copy_from_slice(x);
                    nodes.push(p);
                    w_main.push(if main { *w } else { 0.0 });
                    w_box.push(if main { 0.0 } else { *w });
                    cube_of.push(cube);
                }
            };
        for (t, c) in cover.cubes.iter().enumerate() {
            let lo = cover.grid.lo(c);
            let hi = cover.grid.hi(c);
            let start = nodes.len();
            push_rule(
                &lo[..dim], &hi[..dim], t, true,
                &mut nodes, &mut w_main, &mut w_box, &mut cube_of,
            );
            cube_range.push((start, nodes.len()));
        }
        let mut box_range = Vec::with_capacity(boxes.len());
        for b in boxes {
            let start = nodes.len();
            let mut lo_half = b.lo;
            let mut hi_half = b.hi;
            hi_half[b.axis] = b.plane;
            push_rule(
                &lo_half[..dim], &hi_half[..dim], b.cube_lo, false,
                &mut nodes, &mut w_main, &mut w_box, &mut cube_of,
            );
            lo_half = b.lo;
            hi_half = b.hi;
            lo_half[b.axis] = b.plane;
            push_rule(
                &lo_half[..dim], &hi_half[..dim], b.cube_hi, false,
                &mut nodes, &mut w_main, &mut w_box, &mut cube_of,
            );
            box_range.push((start, nodes.len()));
        }
        let rho = match domain {
            Some(d) => nodes.iter().map(|x| d.boundary_dist_point(&x[..dim])).collect(),
            None => vec![1.0; nodes.len()],
        };
        Quad {
            dim,
            order,
            nodes,
            w_main,
            w_box,
            cube_of,
            rho,
            cube_range,
            box_range,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Total measure represented by the main weights.
    pub fn total_volume(&self) -> f64 {
        self.w_main.iter().sum()
    }
}

/// Field sampled at every node of a [`Quad`]; `stride` components per node.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledField {
    pub stride: usize,
    pub vals: Vec<f64>,
}

impl SampledField {
    pub fn zeros(quad: &Quad, stride: usize) -> Self {
        SampledField {
            stride,
            vals: vec![0.0; quad.len() * stride],
        }
    }

    pub fn from_fn(quad: &Quad, stride: usize, mut f: impl FnMut(&[f64], &mut [f64])) -> Self {
        let mut vals = vec![0.0; quad.len() * stride];
        for (i, x) in quad.nodes.iter().enumerate() {
            f(&x[..quad.dim], &mut vals[i * stride..(i + 1) * stride]);
        }
        SampledField { stride, vals }
    }

    pub fn from_matpoly(quad: &Quad, m: &MatPoly) -> Self {
        let n = m.dim;
        Self::from_fn(quad, n * n, |x, out| {
            let v = m.eval(x);
            for j in 0..n {
                for k in 0..n {
                    out[j * n + k] = v[j][k];
                }
            }
        })
    }

    pub fn from_vecpoly(quad: &Quad, v: &VecPoly) -> Self {
        let n = v.dim;
        Self::from_fn(quad, n, |x, out| {
            let val = v.eval(x);
            out[..n].copy_from_slice(&val[..n]);
        })
    }

    pub fn at(&self, i: usize) -> &[f64] {
        &self.vals[i * self.stride..(i + 1) * self.stride]
    }

    pub fn at_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.vals[i * self.stride..(i + 1) * self.stride]
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &SampledField) {
        assert_eq!(self.vals.len(), other.vals.len());
        for (a, b) in self.vals.iter_mut().zip(&other.vals) {
            *a += s * b;
        }
    }

    /// Multiply every component at node `i` by `scal[i]`.
    pub fn scale_per_node(&mut self, scal: &[f64]) {
        for (i, s) in scal.iter().enumerate() {
            for v in self.at_mut(i) {
                *v *= s;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.vals {
            *v *= s;
        }
    }

    /// Euclidean length of the component vector at a node.
    pub fn abs_at(&self, i: usize) -> f64 {
        self.at(i).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

fn dot_at(a: &SampledField, b: &SampledField, i: usize) -> f64 {
    a.at(i).iter().zip(b.at(i)).map(|(x, y)| x * y).sum()
}

/// Global functional: integral of the componentwise product.
pub fn i_dot(quad: &Quad, a: &SampledField, b: &SampledField) -> f64 {
    let mut s = 0.0;
    for i in 0..quad.len() {
        let w = quad.w_main[i];
        if w != 0.0 {
            s += w * dot_at(a, b, i);
        }
    }
    s
}

/// Integral of the componentwise product over one cube.
pub fn cube_dot(quad: &Quad, t: usize, a: &SampledField, b: &SampledField) -> f64 {
    let (s0, s1) = quad.cube_range[t];
    let mut s = 0.0;
    for i in s0..s1 {
        s += quad.w_main[i] * dot_at(a, b, i);
    }
    s
}

/// Integral of the componentwise product over overlap box `s`.
pub fn box_dot(quad: &Quad, s: usize, a: &SampledField, b: &SampledField) -> f64 {
    let (s0, s1) = quad.box_range[s];
    let mut acc = 0.0;
    for i in s0..s1 {
        acc += quad.w_box[i] * dot_at(a, b, i);
    }
    acc
}

/// Weighted q-norm `(int |F|^q rho^(q beta))^(1/q)` with Frobenius |F|.
pub fn weighted_norm(quad: &Quad, f: &SampledField, q: f64, beta: f64) -> f64 {
    assert!(q >= 1.0);
    let mut s = 0.0;
    for i in 0..quad.len() {
        let w = quad.w_main[i];
        if w != 0.0 {
            let mag = f.abs_at(i);
            if mag > 0.0 {
                s += w * quad.rho[i].powf(q * beta) * mag.powf(q);
            }
        }
    }
    s.powf(1.0 / q)
}

/// Weighted q-norm over the cubes flagged in `mask` (main nodes only).
pub fn weighted_norm_cubes(
    quad: &Quad,
    f: &SampledField,
    q: f64,
    beta: f64,
    mask: &[bool],
) -> f64 {
    assert!(q >= 1.0);
    let mut s = 0.0;
    for i in 0..quad.len() {
        let w = quad.w_main[i];
        if w != 0.0 && mask[quad.cube_of[i]] {
            let mag = f.abs_at(i);
            if mag > 0.0 {
                s += w * quad.rho[i].powf(q * beta) * mag.powf(q);
            }
        }
    }
    s.powf(1.0 / q)
}

/// Integral of `|F| rho^beta` (the q = 1 weighted norm).
pub fn weighted_l1(quad: &Quad, f: &SampledField, beta: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..quad.len() {
        let w = quad.w_main[i];
        if w != 0.0 {
            let r = if beta == 0.0 { 1.0 } else { quad.rho[i].powf(beta) };
            s += w * r * f.abs_at(i);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::dyadic::{CubeId, GridBase};
    use crate::tree::{overlap_boxes, RootedTree};
    use poly::Poly;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_cube_quad(order: usize) -> (WhitneyCover, Quad) {
        let grid = GridBase::covering(&[0.0, 0.0], &[1.0, 1.0]);
        let cubes = vec![CubeId::new(1, &[0, 0]), CubeId::new(1, &[1, 0])];
        let cov = WhitneyCover::from_cubes(grid, 2, cubes);
        let tree = RootedTree::build(&cov, None).unwrap();
        let (boxes, _) = overlap_boxes(&cov, &tree).unwrap();
        let quad = Quad::build(&cov, &boxes, order, None);
        (cov, quad)
    }

    #[test]
    fn main_weights_integrate_polynomials_exactly() {
        let (_, quad) = two_cube_quad(4);
        assert!((quad.total_volume() - 0.5).abs() < 1e-14);
        // Degree 7 in each variable is exact for a 4-point rule.
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let mut p = Poly::constant(2, 1.0);
        for _ in 0..7 {
            p = p.mul(&x);
        }
        p = p.mul(&y).add(&x.mul(&y));
        let f = SampledField::from_fn(&quad, 1, |pt, out| out[0] = p.eval(pt));
        let one = SampledField::from_fn(&quad, 1, |_, out| out[0] = 1.0);
        let got = i_dot(&quad, &f, &one);
        let want = p.integrate_box(&[0.0, 0.0], &[1.0, 0.5]);
        assert!((got - want).abs() < 1e-14, "{got} vs {want}");
    }

    #[test]
    fn box_weights_integrate_over_overlap_box() {
        let (_, quad) = two_cube_quad(3);
        assert_eq!(quad.box_range.len(), 1);
        let one = SampledField::from_fn(&quad, 1, |_, out| out[0] = 1.0);
        let vol = box_dot(&quad, 0, &one, &one);
        // Box side is 1/16 of the half-unit cubes: (0.5/8)^2.
        let want = (0.5 / 8.0) * (0.5 / 8.0);
        assert!((vol - want).abs() < 1e-15, "{vol} vs {want}");
        // A linear function integrates exactly too.
        let x = SampledField::from_fn(&quad, 1, |pt, out| out[0] = pt[0]);
        let got = box_dot(&quad, 0, &x, &one);
        assert!((got - 0.5 * vol).abs() < 1e-15, "box centered on x = 1/2");
    }

    #[test]
    fn cube_dot_splits_the_global_functional() {
        let (cov, quad) = two_cube_quad(3);
        let f = SampledField::from_fn(&quad, 2, |pt, out| {
            out[0] = pt[0] * pt[1];
            out[1] = 1.0 - pt[0];
        });
        let g = SampledField::from_fn(&quad, 2, |pt, out| {
            out[0] = 1.0 + pt[1];
            out[1] = pt[0];
        });
        let total = i_dot(&quad, &f, &g);
        let split: f64 = (0..cov.len()).map(|t| cube_dot(&quad, t, &f, &g)).sum();
        assert!((total - split).abs() < 1e-15);
    }

    #[test]
    fn weighted_norms_respect_discrete_hoelder() {
        let dom = Domain::builtin("unit_square").unwrap();
        let cov = WhitneyCover::build(&dom, 5);
        let tree = RootedTree::build(&cov, None).unwrap();
        let (boxes, _) = overlap_boxes(&cov, &tree).unwrap();
        let quad = Quad::build(&cov, &boxes, 3, Some(&dom));
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for (p, q) in [(2.0, 2.0), (1.5, 3.0), (3.0, 1.5)] {
            for beta in [0.0, 0.7] {
                let f = SampledField::from_fn(&quad, 4, |_, out| {
                    out.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0))
                });
                let g = SampledField::from_fn(&quad, 4, |_, out| {
                    out.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0))
                });
                let lhs = i_dot(&quad, &f, &g).abs();
                let rhs = weighted_norm(&quad, &f, p, beta) * weighted_norm(&quad, &g, q, -beta);
                assert!(
                    lhs <= rhs * (1.0 + 1e-12),
                    "p={p} q={q} beta={beta}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn norms_decrease_in_beta_when_rho_below_one() {
        // Unit square: boundary distance is at most 1/2 < 1 everywhere.
        let dom = Domain::builtin("unit_square").unwrap();
        let cov = WhitneyCover::build(&dom, 5);
        let quad = Quad::build(&cov, &[], 3, Some(&dom));
        let f = SampledField::from_fn(&quad, 1, |pt, out| out[0] = 1.0 + pt[0]);
        let mut prev = f64::INFINITY;
        for beta in [0.0, 0.5, 1.0, 2.0] {
            let n = weighted_norm(&quad, &f, 2.0, beta);
            assert!(n < prev, "beta {beta}: {n} not below {prev}");
            prev = n;
        }
    }

    #[test]
    fn singular_weight_quadrature_matches_closed_form() {
        // Pick a cover cube on which the boundary distance is the plain
        // x-coordinate (left wall strictly nearest); the rho^-2 integral is
        // then elementary.
        let dom = Domain::builtin("unit_square").unwrap();
        let cov = WhitneyCover::build(&dom, 5);
        let t = (0..cov.len())
            .find(|&t| {
                let c = &cov.cubes[t];
                let lo = cov.grid.lo(c);
                let hi = cov.grid.hi(c);
                hi[0] < lo[1].min(1.0 - hi[1]).min(1.0 - hi[0])
            })
            .expect("some cube sees only the left wall");
        let c = &cov.cubes[t];
        let (lo, hi) = (cov.grid.lo(c), cov.grid.hi(c));
        let want = (1.0 / lo[0] - 1.0 / hi[0]) * (hi[1] - lo[1]);
        for (order, tol) in [(6, 2e-5), (12, 1e-12)] {
            let quad = Quad::build(&cov, &[], order, Some(&dom));
            let (s0, s1) = quad.cube_range[t];
            let got: f64 = (s0..s1)
                .map(|i| quad.w_main[i] * quad.rho[i].powi(-2))
                .sum();
            assert!(
                (got - want).abs() / want < tol,
                "order {order}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn sampled_matrix_fields_round_trip() {
        let (_, quad) = two_cube_quad(2);
        let mut v = VecPoly::zero(2);
        v.comps[0] = Poly::var(2, 1).scale(-1.0);
        v.comps[1] = Poly::var(2, 0);
        let m = v.jacobian();
        let f = SampledField::from_matpoly(&quad, &m);
        assert_eq!(f.stride, 4);
        for i in 0..quad.len() {
            assert_eq!(f.at(i), &[0.0, -1.0, 1.0, 0.0]);
        }
        let vf = SampledField::from_vecpoly(&quad, &v);
        assert_eq!(vf.stride, 2);
        let i0 = 0;
        let x = quad.nodes[i0];
        assert_eq!(vf.at(i0), &[-x[1], x[0]]);
    }
}
