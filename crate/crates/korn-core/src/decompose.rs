//! Tree-indexed splitting of a matrix field into locally supported pieces,
//! each with vanishing pairings against the gradient-space generators.
//!
//! Pipeline: a Shepard partition of unity subordinate to the extended cubes
//! cuts the field into cells; a first pass over the overlap boxes transfers
//! the constant-generator moments up the tree; a second pass does the same
//! for the linear generators using centered duals whose constant pairings
//! vanish by symmetry. Every coefficient is produced by the same quadrature
//! functional that the audits use, so the per-piece identities hold to
//! rounding, not just to quadrature accuracy.
//!
//! The averaging tree operator (subtree means read on the overlap boxes) and
//! its empirical norm estimation live here too, since they share the subtree
//! bookkeeping.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::conformal::v_dim;
use crate::fields::{Quad, SampledField};
use crate::geometry::dyadic::MAX_DIM;
use crate::tol;
use crate::tree::{OverlapBox, RootedTree, ShadowData};
use crate::whitney::WhitneyCover;

/// Skew-pair count plus one (identity); the constant generators for n <= 4.
const MAX_CONST: usize = 7;

// ---------------------------------------------------------------------------
// Generator evaluation (canonical order: skews E_ab lexicographic, identity,
// then the linear fields H_1..H_n), kept as closed-form loops so the hot
// audit paths avoid polynomial-map lookups.

fn skew_pair(n: usize, j: usize) -> (usize, usize) {
    let mut k = j;
    for a in 0..n {
        let row = n - 1 - a;
        if k < row {
            return (a, a + 1 + k);
        }
        k -= row;
    }
    panic!("skew index {j} out of range for dimension {n}");
}

/// Writes generator `j` at `x` into `out` (row-major, length n*n).
pub fn eval_generator(n: usize, j: usize, x: &[f64], out: &mut [f64]) {
    let ns = n * (n - 1) / 2;
    out[..n * n].fill(0.0);
    if j < ns {
        let (a, b) = skew_pair(n, j);
        out[a * n + b] = 1.0;
        out[b * n + a] = -1.0;
    } else if j == ns {
        for d in 0..n {
            out[d * n + d] = 1.0;
        }
    } else {
        let i = j - ns - 1;
        for d in 0..n {
            out[d * n + d] = x[i];
        }
        for r in 0..n {
            if r != i {
                out[r * n + i] += x[r];
                out[i * n + r] -= x[r];
            }
        }
    }
}

/// `H_i(x) : m` for a row-major matrix `m`.
fn dot_with_h(n: usize, i: usize, x: &[f64], m: &[f64]) -> f64 {
    let mut tr = 0.0;
    for d in 0..n {
        tr += m[d * n + d];
    }
    let mut s = x[i] * tr;
    for r in 0..n {
        if r != i {
            s += x[r] * (m[r * n + i] - m[i * n + r]);
        }
    }
    s
}

/// Frobenius sup of generator `j` over the axis box `[lo, hi]`.
pub fn generator_sup_on_box(n: usize, j: usize, lo: &[f64], hi: &[f64]) -> f64 {
    let ns = n * (n - 1) / 2;
    if j < ns {
        2.0f64.sqrt()
    } else if j == ns {
        (n as f64).sqrt()
    } else {
        let i = j - ns - 1;
        let mut sum = 0.0;
        let mut mi = 0.0;
        for (a, (&l, &h)) in lo.iter().zip(hi).enumerate().take(n) {
            let m = l.abs().max(h.abs());
            sum += m * m;
            if a == i {
                mi = m;
            }
        }
        ((n as f64 - 2.0) * mi * mi + 2.0 * sum).sqrt()
    }
}

// ---------------------------------------------------------------------------
// Shepard partition of unity.

/// C1 plateau profile in cube units: 1 for |u| <= 7/16, cubic ramp to 0 at
/// |u| = 9/16. Support matches the open extended cube exactly.
fn profile(u: f64) -> f64 {
    let a = u.abs();
    if a <= 7.0 / 16.0 {
        1.0
    } else if a >= 9.0 / 16.0 {
        0.0
    } else {
        let s = (9.0 / 16.0 - a) * 8.0;
        s * s * (3.0 - 2.0 * s)
    }
}

fn profile_deriv(u: f64) -> f64 {
    let a = u.abs();
    if a <= 7.0 / 16.0 || a >= 9.0 / 16.0 {
        0.0
    } else {
        let s = (9.0 / 16.0 - a) * 8.0;
        -8.0 * 6.0 * s * (1.0 - s) * u.signum()
    }
}

/// Shepard partition of unity over the cover, tabulated at the quadrature
/// nodes. `phi <= 1` holds exactly in floating point because the Shepard
/// denominator is a nonnegative sum dominating each summand.
#[derive(Clone, Debug)]
pub struct Pou {
    /// Per cube: (node id, phi) over every node where phi > 0, node-sorted.
    pub per_cube: Vec<Vec<(usize, f64)>>,
    /// Largest |sum_t phi_t(x) - 1| over nodes.
    pub sum_err: f64,
    /// Largest phi value; 1.0 at plateau nodes, never above.
    pub phi_max: f64,
    /// Largest |grad phi_t| * side_t over nodes (bounded-gradient audit).
    pub grad_stat: f64,
    /// Nodes with no covering bump; must be empty for a valid cover.
    pub uncovered: Vec<usize>,
}

pub fn partition_of_unity(quad: &Quad, cover: &WhitneyCover) -> Pou {
    let dim = quad.dim;
    let adj = cover.adjacency();
    let mut per_cube: Vec<Vec<(usize, f64)>> = vec![Vec::new(); cover.len()];
    let mut sum_err = 0.0f64;
    let mut phi_max = 0.0f64;
    let mut grad_stat = 0.0f64;
    let mut uncovered = Vec::new();
    let mut cand: Vec<(usize, f64, [f64; MAX_DIM])> = Vec::new();
    for i in 0..quad.len() {
        let x = &quad.nodes[i];
        let own = quad.cube_of[i];
        cand.clear();
        for &t in std::iter::once(&own).chain(adj[own].iter()) {
            let c = &cover.cubes[t];
            let side = cover.grid.side(c.level);
            let lo = cover.grid.lo(c);
            let mut b = 1.0;
            let mut vals = [0.0f64; MAX_DIM];
            for a in 0..dim {
                let u = (x[a] - (lo[a] + 0.5 * side)) / side;
                vals[a] = profile(u);
                b *= vals[a];
            }
            if b > 0.0 {
                let mut grad = [0.0f64; MAX_DIM];
                for a in 0..dim {
                    let u = (x[a] - (lo[a] + 0.5 * side)) / side;
                    let mut d = profile_deriv(u) / side;
                    for (o, &v) in vals.iter().enumerate().take(dim) {
                        if o != a {
                            d *= v;
                        }
                    }
                    grad[a] = d;
                }
                cand.push((t, b, grad));
            }
        }
        if cand.is_empty() {
            uncovered.push(i);
            continue;
        }
        let s: f64 = cand.iter().map(|c| c.1).sum();
        let mut ds = [0.0f64; MAX_DIM];
        for c in &cand {
            for a in 0..dim {
                ds[a] += c.2[a];
            }
        }
        let mut total = 0.0;
        for &(t, b, g) in &cand {
            let phi = b / s;
            total += phi;
            phi_max = phi_max.max(phi);
            per_cube[t].push((i, phi));
            let side = cover.grid.side(cover.cubes[t].level);
            let mut g2 = 0.0;
            for a in 0..dim {
                let d = (g[a] * s - b * ds[a]) / (s * s);
                g2 += d * d;
            }
            grad_stat = grad_stat.max(g2.sqrt() * side);
        }
        sum_err = sum_err.max((total - 1.0).abs());
    }
    for list in &mut per_cube {
        list.sort_unstable_by_key(|e| e.0);
    }
    Pou {
        per_cube,
        sum_err,
        phi_max,
        grad_stat,
        uncovered,
    }
}

// ---------------------------------------------------------------------------
// Pieces and bumps.

/// Sparse matrix-field samples of one piece's cell part (`g * phi_t`).
#[derive(Clone, Debug, Default)]
pub struct Piece {
    pub stride: usize,
    /// Sorted node ids with a nonzero payload.
    pub node_ids: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Piece {
    pub fn is_zero(&self) -> bool {
        self.node_ids.is_empty()
    }

    /// Payload at a node, if stored.
    pub fn value_at(&self, node: usize) -> Option<&[f64]> {
        let k = self.node_ids.binary_search(&node).ok()?;
        Some(&self.vals[k * self.stride..(k + 1) * self.stride])
    }
}

/// Correction payload on one overlap box: a constant matrix plus centered
/// linear parts `sum_i kappa_i * theta_scale * H_i(x - c)`, where the scale
/// is the dual normalizer `12 / ((3n - 2) side^(n+2))`.
#[derive(Clone, Debug)]
pub struct Bump {
    pub box_id: usize,
    pub constant: Vec<f64>,
    pub kappa: [f64; MAX_DIM],
    pub center: [f64; MAX_DIM],
    pub theta_scale: f64,
}

impl Bump {
    fn new_zero(n: usize, box_id: usize, b: &OverlapBox) -> Bump {
        let side = b.hi[b.axis] - b.lo[b.axis];
        let mut center = [0.0; MAX_DIM];
        for a in 0..MAX_DIM {
            center[a] = 0.5 * (b.lo[a] + b.hi[a]);
        }
        Bump {
            box_id,
            constant: vec![0.0; n * n],
            kappa: [0.0; MAX_DIM],
            center,
            theta_scale: 12.0 / ((3.0 * n as f64 - 2.0) * side.powi(n as i32 + 2)),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.constant.iter().all(|&v| v == 0.0) && self.kappa.iter().all(|&v| v == 0.0)
    }

    /// Writes the bump value at `x` into `out` (row-major, length n*n).
    pub fn eval(&self, n: usize, x: &[f64], out: &mut [f64]) {
        out[..n * n].copy_from_slice(&self.constant);
        let mut z = [0.0f64; MAX_DIM];
        for a in 0..n {
            z[a] = x[a] - self.center[a];
        }
        for (i, &k) in self.kappa.iter().enumerate().take(n) {
            if k == 0.0 {
                continue;
            }
            let c = k * self.theta_scale;
            for d in 0..n {
                out[d * n + d] += c * z[i];
            }
            for r in 0..n {
                if r != i {
                    out[r * n + i] += c * z[r];
                    out[i * n + r] -= c * z[r];
                }
            }
        }
    }
}

fn box_volume(dim: usize, b: &OverlapBox) -> f64 {
    (0..dim).map(|a| b.hi[a] - b.lo[a]).product()
}

fn box_index(cover_len: usize, boxes: &[OverlapBox]) -> Vec<Option<usize>> {
    let mut box_of = vec![None; cover_len];
    for (k, b) in boxes.iter().enumerate() {
        box_of[b.node] = Some(k);
    }
    box_of
}

/// Cell parts `g * phi_t`. Nodes where `g` vanishes identically are dropped,
/// so fields with small cube support produce mostly empty pieces.
pub fn cell_pieces(pou: &Pou, g: &SampledField) -> Vec<Piece> {
    let stride = g.stride;
    pou.per_cube
        .iter()
        .map(|list| {
            let mut node_ids = Vec::new();
            let mut vals = Vec::new();
            for &(i, phi) in list {
                let gv = g.at(i);
                if gv.iter().any(|&v| v != 0.0) {
                    node_ids.push(i);
                    vals.extend(gv.iter().map(|&v| v * phi));
                }
            }
            Piece {
                stride,
                node_ids,
                vals,
            }
        })
        .collect()
}

/// Pairings of one piece's cell part against generators `js`, under the main
/// quadrature weights.
fn cell_moments(quad: &Quad, n: usize, piece: &Piece, js: &[usize], out: &mut [f64]) {
    out[..js.len()].fill(0.0);
    let ns = n * (n - 1) / 2;
    for (k, &i) in piece.node_ids.iter().enumerate() {
        let w = quad.w_main[i];
        if w == 0.0 {
            continue;
        }
        let v = &piece.vals[k * piece.stride..(k + 1) * piece.stride];
        let x = &quad.nodes[i];
        for (slot, &j) in js.iter().enumerate() {
            let d = if j < ns {
                let (a, b) = skew_pair(n, j);
                v[a * n + b] - v[b * n + a]
            } else if j == ns {
                (0..n).map(|d| v[d * n + d]).sum()
            } else {
                dot_with_h(n, j - ns - 1, x, v)
            };
            out[slot] += w * d;
        }
    }
}

/// Pairing of a bump against generator `j`, by quadrature over its box.
fn bump_moment(quad: &Quad, n: usize, bump: &Bump, j: usize) -> f64 {
    let (s, e) = quad.box_range[bump.box_id];
    let mut val = vec![0.0; n * n];
    let mut gen = vec![0.0; n * n];
    let mut acc = 0.0;
    for i in s..e {
        let w = quad.w_box[i];
        let x = &quad.nodes[i];
        bump.eval(n, &x[..n], &mut val);
        eval_generator(n, j, &x[..n], &mut gen);
        let d: f64 = val.iter().zip(&gen).map(|(a, b)| a * b).sum();
        acc += w * d;
    }
    acc
}

// ---------------------------------------------------------------------------
// Stage one: constant generators.

/// Stage-one output: constant bumps carrying subtree pairing sums.
pub struct StageOne {
    pub bumps: Vec<Option<Bump>>,
    /// Subtree sums of the constant-generator pairings, per node.
    pub msub0: Vec<[f64; MAX_CONST]>,
    /// Subtree contains a nonzero cell.
    pub active: Vec<bool>,
    /// Generator pairings evaluated (complexity audit).
    pub pairings: usize,
}

/// Transfers the constant-generator moments (skews and identity) up the
/// tree: each non-root node's bump absorbs its subtree sum, so corrected
/// pieces annihilate the constants. The root piece needs no bump because
/// the input's global pairings vanish.
pub fn decompose_stage_one(
    quad: &Quad,
    cover: &WhitneyCover,
    tree: &RootedTree,
    boxes: &[OverlapBox],
    cells: &[Piece],
) -> StageOne {
    let n = cover.dim;
    let ns = n * (n - 1) / 2;
    let m0 = ns + 1;
    let js: Vec<usize> = (0..m0).collect();
    let nn = cover.len();
    let mut msub0 = vec![[0.0f64; MAX_CONST]; nn];
    let mut active = vec![false; nn];
    let mut pairings = 0usize;
    let mut own = [0.0f64; MAX_CONST];
    for t in 0..nn {
        if !cells[t].is_zero() {
            cell_moments(quad, n, &cells[t], &js, &mut own);
            pairings += m0;
            msub0[t][..m0].copy_from_slice(&own[..m0]);
            active[t] = true;
        }
    }
    for t in tree.post_order() {
        if let Some(p) = tree.parent[t] {
            if active[t] {
                active[p] = true;
                for j in 0..m0 {
                    msub0[p][j] += msub0[t][j];
                }
            }
        }
    }
    let box_of = box_index(nn, boxes);
    let mut bumps: Vec<Option<Bump>> = vec![None; nn];
    for t in 0..nn {
        if t == tree.root || !active[t] {
            continue;
        }
        let m = &msub0[t];
        if m[..m0].iter().all(|&v| v == 0.0) {
            continue;
        }
        let k = box_of[t].expect("non-root node without an overlap box");
        let b = &boxes[k];
        let vol = box_volume(n, b);
        let mut bump = Bump::new_zero(n, k, b);
        for (j, &mj) in m[..ns].iter().enumerate() {
            let (a, c) = skew_pair(n, j);
            bump.constant[a * n + c] += mj / (2.0 * vol);
            bump.constant[c * n + a] -= mj / (2.0 * vol);
        }
        for d in 0..n {
            bump.constant[d * n + d] += m[ns] / (n as f64 * vol);
        }
        bumps[t] = Some(bump);
    }
    StageOne {
        bumps,
        msub0,
        active,
        pairings,
    }
}

// ---------------------------------------------------------------------------
// Stage two: linear generators.

/// Adds the centered linear duals on top of the stage-one bumps. The duals'
/// constant pairings vanish by odd symmetry, so stage-one orthogonality is
/// preserved; the only cross term is the stage-one constant against the
/// linear generators, removed here in closed form.
pub fn decompose_stage_two(
    quad: &Quad,
    cover: &WhitneyCover,
    tree: &RootedTree,
    boxes: &[OverlapBox],
    cells: &[Piece],
    stage: StageOne,
) -> (Vec<Option<Bump>>, Vec<bool>, usize) {
    let n = cover.dim;
    let ns = n * (n - 1) / 2;
    let js: Vec<usize> = (ns + 1..ns + 1 + n).collect();
    let nn = cover.len();
    let mut msub1 = vec![[0.0f64; MAX_DIM]; nn];
    let mut pairings = stage.pairings;
    let mut own = [0.0f64; MAX_DIM];
    for t in 0..nn {
        if !cells[t].is_zero() {
            cell_moments(quad, n, &cells[t], &js, &mut own);
            pairings += n;
            msub1[t][..n].copy_from_slice(&own[..n]);
        }
    }
    for t in tree.post_order() {
        if let Some(p) = tree.parent[t] {
            for i in 0..n {
                msub1[p][i] += msub1[t][i];
            }
        }
    }
    let box_of = box_index(nn, boxes);
    let mut bumps = stage.bumps;
    for t in 0..nn {
        if t == tree.root || !stage.active[t] {
            continue;
        }
        // The bump must pair with H_i to the subtree cell moment; its own
        // constant part already contributes vol * (C : H_i(center)).
        let mut kappa = [0.0f64; MAX_DIM];
        let mut any = false;
        for i in 0..n {
            let correction = match &bumps[t] {
                Some(b) => {
                    let vol = box_volume(n, &boxes[b.box_id]);
                    vol * dot_with_h(n, i, &b.center[..n], &b.constant)
                }
                None => 0.0,
            };
            kappa[i] = msub1[t][i] - correction;
            if kappa[i] != 0.0 {
                any = true;
            }
        }
        if any {
            let k = box_of[t].expect("non-root node without an overlap box");
            let bump = bumps[t].get_or_insert_with(|| Bump::new_zero(n, k, &boxes[k]));
            bump.kappa = kappa;
        }
    }
    (bumps, stage.active, pairings)
}

// ---------------------------------------------------------------------------
// Full pipeline.

#[derive(Debug, Error)]
pub enum DecomposeError {
    #[error("input pairs with the gradient space: worst relative pairing {worst:.3e}")]
    NotOrthogonal { worst: f64, residuals: Vec<f64> },
}

#[derive(Debug)]
pub struct Decomposition {
    pub n: usize,
    pub pieces: Vec<Piece>,
    pub bumps: Vec<Option<Bump>>,
    /// Subtree-support flags; pieces outside stay identically zero.
    pub active: Vec<bool>,
    pub pou_sum_err: f64,
    pub pou_grad_stat: f64,
    pub phi_max: f64,
    pub pairings_done: usize,
    pub input_pairing_rel: f64,
}

/// Global pairing scales: L1 mass of the field times the sup of each
/// generator over the covered bounding box.
pub fn pairing_scales(quad: &Quad, cover: &WhitneyCover, g: &SampledField) -> Vec<f64> {
    let n = cover.dim;
    let m = v_dim(n);
    let mut l1 = 0.0;
    for i in 0..quad.len() {
        let w = quad.w_main[i];
        if w != 0.0 {
            l1 += w * g.abs_at(i);
        }
    }
    let mut lo = [f64::INFINITY; MAX_DIM];
    let mut hi = [f64::NEG_INFINITY; MAX_DIM];
    for c in &cover.cubes {
        let clo = cover.grid.lo(c);
        let chi = cover.grid.hi(c);
        for a in 0..n {
            lo[a] = lo[a].min(clo[a]);
            hi[a] = hi[a].max(chi[a]);
        }
    }
    (0..m)
        .map(|j| l1 * generator_sup_on_box(n, j, &lo[..n], &hi[..n]) + f64::MIN_POSITIVE)
        .collect()
}

pub fn v_decompose(
    quad: &Quad,
    cover: &WhitneyCover,
    tree: &RootedTree,
    boxes: &[OverlapBox],
    g: &SampledField,
) -> Result<Decomposition, DecomposeError> {
    let pou = partition_of_unity(quad, cover);
    v_decompose_with(quad, cover, tree, boxes, &pou, g)
}

/// Pipeline entry point reusing a precomputed partition of unity.
pub fn v_decompose_with(
    quad: &Quad,
    cover: &WhitneyCover,
    tree: &RootedTree,
    boxes: &[OverlapBox],
    pou: &Pou,
    g: &SampledField,
) -> Result<Decomposition, DecomposeError> {
    let n = cover.dim;
    assert!((3..=4).contains(&n), "gradient space needs dimension 3 or 4");
    assert_eq!(g.stride, n * n, "expected a matrix field");
    assert!(pou.uncovered.is_empty(), "partition of unity has gaps");
    let m = v_dim(n);
    let scales = pairing_scales(quad, cover, g);
    let mut residuals = vec![0.0; m];
    let mut gen = vec![0.0; n * n];
    for i in 0..quad.len() {
        let w = quad.w_main[i];
        if w == 0.0 {
            continue;
        }
        let v = g.at(i);
        if v.iter().all(|&c| c == 0.0) {
            continue;
        }
        let x = &quad.nodes[i];
        for (j, r) in residuals.iter_mut().enumerate() {
            eval_generator(n, j, &x[..n], &mut gen);
            let d: f64 = v.iter().zip(&gen).map(|(a, b)| a * b).sum();
            *r += w * d;
        }
    }
    let worst = residuals
        .iter()
        .zip(&scales)
        .map(|(r, s)| r.abs() / s)
        .fold(0.0f64, f64::max);
    if worst > tol::W0_INPUT {
        return Err(DecomposeError::NotOrthogonal { worst, residuals });
    }
    let cells = cell_pieces(pou, g);
    let stage = decompose_stage_one(quad, cover, tree, boxes, &cells);
    let (bumps, active, pairings_done) =
        decompose_stage_two(quad, cover, tree, boxes, &cells, stage);
    Ok(Decomposition {
        n,
        pieces: cells,
        bumps,
        active,
        pou_sum_err: pou.sum_err,
        pou_grad_stat: pou.grad_stat,
        phi_max: pou.phi_max,
        pairings_done,
        input_pairing_rel: worst,
    })
}

// ---------------------------------------------------------------------------
// Audit.

#[derive(Clone, Copy, Debug, Serialize)]
pub struct NormRatio {
    pub q: f64,
    pub beta: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub ratio: f64,
    /// K^(n+1+beta): the shape the stability constant is compared against.
    pub reference: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecompositionAudit {
    /// max over nodes of |sum_t g_t - g| relative to the sup of |g|.
    pub reconstruction_rel: f64,
    /// Stored payload outside the open extended cube (must be zero).
    pub support_violations: usize,
    /// max over pieces and generators of |pairing| / (L1 * sup) scale.
    pub pairing_rel_max: f64,
    /// Points where a piece exceeds the field away from its boxes.
    pub p11_violations: usize,
    /// sup over box nodes of (|g_t| - |g|)_+ divided by the subtree average
    /// of the field's entry mass at that box; infinite if unbalanced.
    pub p12_measured: f64,
    /// 6n(1 + n^2/2) K^(n+1): the comparison envelope for `p12_measured`.
    pub p12_reference: f64,
    pub localization_ok: bool,
    pub pairings_done: usize,
    /// Active cells times generator count.
    pub pairing_budget: usize,
    pub ratios: Vec<NormRatio>,
}

fn frob(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn max_entry(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, a| m.max(a.abs()))
}

/// Composite q-th power of a piece norm: cell part under the main weights
/// plus the correction of swapping in the full value over the bump boxes.
fn piece_norm_pow(
    quad: &Quad,
    d: &Decomposition,
    t: usize,
    children: &[usize],
    e: f64,
    q: f64,
) -> f64 {
    let n = d.n;
    let piece = &d.pieces[t];
    let mut acc = 0.0;
    for (k, &i) in piece.node_ids.iter().enumerate() {
        let w = quad.w_main[i];
        if w == 0.0 {
            continue;
        }
        let v = &piece.vals[k * piece.stride..(k + 1) * piece.stride];
        acc += w * quad.rho[i].powf(e) * frob(v).powf(q);
    }
    let mut signed: Vec<(f64, &Bump)> = Vec::new();
    if let Some(b) = &d.bumps[t] {
        signed.push((-1.0, b));
    }
    for &c in children {
        if let Some(b) = &d.bumps[c] {
            signed.push((1.0, b));
        }
    }
    let mut val = vec![0.0; n * n];
    let mut full = vec![0.0; n * n];
    for (sign, bump) in signed {
        let (lo, hi) = quad.box_range[bump.box_id];
        for i in lo..hi {
            let w = quad.w_box[i];
            let x = &quad.nodes[i];
            bump.eval(n, &x[..n], &mut val);
            let cell = piece.value_at(i);
            for (k, f) in full.iter_mut().enumerate() {
                *f = sign * val[k] + cell.map_or(0.0, |c| c[k]);
            }
            let wq = w * quad.rho[i].powf(e);
            acc += wq * (frob(&full).powf(q) - cell.map_or(0.0, |c| frob(c).powf(q)));
        }
    }
    acc.max(0.0)
}

#[allow(clippy::too_many_arguments)]
pub fn audit_decomposition(
    quad: &Quad,
    cover: &WhitneyCover,
    tree: &RootedTree,
    boxes: &[OverlapBox],
    d: &Decomposition,
    g: &SampledField,
    k_shadow: f64,
    q_list: &[f64],
    beta_list: &[f64],
) -> DecompositionAudit {
    let n = d.n;
    let m = v_dim(n);
    let nn = cover.len();

    // Reconstruction: the bump terms cancel in parent/child pairs by
    // identical arithmetic, so the cell parts alone must reproduce g.
    let mut res = vec![0.0f64; quad.len() * g.stride];
    for i in 0..quad.len() {
        for (k, &v) in g.at(i).iter().enumerate() {
            res[i * g.stride + k] = -v;
        }
    }
    for piece in &d.pieces {
        for (k, &i) in piece.node_ids.iter().enumerate() {
            for c in 0..piece.stride {
                res[i * g.stride + c] += piece.vals[k * piece.stride + c];
            }
        }
    }
    let gmax = g.max_abs();
    let rmax = res.iter().fold(0.0f64, |mx, v| mx.max(v.abs()));
    let reconstruction_rel = if gmax > 0.0 { rmax / gmax } else { rmax };

    // Support: cell payloads confined to the open extended cube; bump boxes
    // re-checked against both owning pieces' extended cubes.
    let mut support_violations = 0usize;
    for (t, piece) in d.pieces.iter().enumerate() {
        let (lo, hi) = cover.grid.extended_bounds(&cover.cubes[t]);
        for (k, &i) in piece.node_ids.iter().enumerate() {
            let x = &quad.nodes[i];
            let inside = (0..n).all(|a| x[a] > lo[a] && x[a] < hi[a]);
            let nz = piece.vals[k * piece.stride..(k + 1) * piece.stride]
                .iter()
                .any(|&v| v != 0.0);
            if nz && !inside {
                support_violations += 1;
            }
        }
    }
    for (t, bump) in d.bumps.iter().enumerate() {
        let bump = match bump {
            Some(b) => b,
            None => continue,
        };
        let bx = &boxes[bump.box_id];
        for owner in [t, tree.parent[t].expect("root never carries a bump")] {
            // The closed box may touch the closed extension: a box beside an
            // equal-level face reaches exactly side/16 past it.
            let (lo, hi) = cover.grid.extended_bounds(&cover.cubes[owner]);
            if !(0..n).all(|a| bx.lo[a] >= lo[a] && bx.hi[a] <= hi[a]) {
                support_violations += 1;
            }
        }
    }

    // Pairings: honest re-quadrature of cell plus signed bump moments.
    let scales = pairing_scales(quad, cover, g);
    let all_js: Vec<usize> = (0..m).collect();
    let mut pairing_rel_max = 0.0f64;
    let mut own = vec![0.0f64; m];
    for t in 0..nn {
        if !d.active[t] {
            continue;
        }
        cell_moments(quad, n, &d.pieces[t], &all_js, &mut own);
        for j in 0..m {
            let mut p = own[j];
            if let Some(b) = &d.bumps[t] {
                p -= bump_moment(quad, n, b, j);
            }
            for &c in &tree.children[t] {
                if let Some(b) = &d.bumps[c] {
                    p += bump_moment(quad, n, b, j);
                }
            }
            pairing_rel_max = pairing_rel_max.max(p.abs() / scales[j]);
        }
    }

    // Pointwise domination away from the boxes; box excess against the
    // subtree average of the field's entry mass.
    let mut mass = SampledField::zeros(quad, 1);
    for i in 0..quad.len() {
        mass.at_mut(i)[0] = g.at(i).iter().map(|v| v.abs()).sum();
    }
    let shadow = crate::tree::shadows(cover, tree);
    let t_mass = hardy_apply(quad, tree, &shadow, &mass);
    let mut p11_violations = 0usize;
    let mut p12_measured = 0.0f64;
    let mut val = vec![0.0; n * n];
    let mut full = vec![0.0; n * n];
    for t in 0..nn {
        let piece = &d.pieces[t];
        if piece.is_zero() && d.bumps[t].is_none() {
            continue;
        }
        let mut excl: Vec<(usize, &Bump, f64)> = Vec::new();
        if let Some(b) = &d.bumps[t] {
            excl.push((t, b, -1.0));
        }
        for &c in &tree.children[t] {
            if let Some(b) = &d.bumps[c] {
                excl.push((c, b, 1.0));
            }
        }
        'nodes: for (k, &i) in piece.node_ids.iter().enumerate() {
            let x = &quad.nodes[i];
            for (_, b, _) in &excl {
                let bx = &boxes[b.box_id];
                if (0..n).all(|a| x[a] >= bx.lo[a] && x[a] <= bx.hi[a]) {
                    continue 'nodes;
                }
            }
            let v = &piece.vals[k * piece.stride..(k + 1) * piece.stride];
            if max_entry(v) > max_entry(g.at(i)) {
                p11_violations += 1;
            }
        }
        for (s, b, sign) in &excl {
            let (lo, hi) = quad.box_range[b.box_id];
            for i in lo..hi {
                let x = &quad.nodes[i];
                b.eval(n, &x[..n], &mut val);
                let cell = piece.value_at(i);
                for (k, f) in full.iter_mut().enumerate() {
                    *f = sign * val[k] + cell.map_or(0.0, |c| c[k]);
                }
                let excess = max_entry(&full) - max_entry(g.at(i));
                if excess > 0.0 {
                    let avg = t_mass[*s];
                    p12_measured = if avg > 0.0 {
                        p12_measured.max(excess / avg)
                    } else {
                        f64::INFINITY
                    };
                }
            }
        }
    }
    let c_n = 6.0 * n as f64 * (1.0 + (n * n) as f64 / 2.0);
    let p12_reference = c_n * k_shadow.powi(n as i32 + 1);

    // Localization and the pairing budget.
    let mut localization_ok = true;
    let mut nonzero_cells = 0usize;
    for t in 0..nn {
        if !d.pieces[t].is_zero() {
            nonzero_cells += 1;
        }
        if !d.active[t] && (!d.pieces[t].is_zero() || d.bumps[t].is_some()) {
            localization_ok = false;
        }
    }
    let pairing_budget = nonzero_cells * m;

    let mut ratios = Vec::new();
    for &q in q_list {
        for &beta in beta_list {
            let e = -q * beta;
            let mut num_q = 0.0;
            for t in 0..nn {
                if d.active[t] {
                    num_q += piece_norm_pow(quad, d, t, &tree.children[t], e, q);
                }
            }
            let numerator = num_q.powf(1.0 / q);
            let denominator = crate::fields::weighted_norm(quad, g, q, -beta);
            ratios.push(NormRatio {
                q,
                beta,
                numerator,
                denominator,
                ratio: if denominator > 0.0 {
                    numerator / denominator
                } else {
                    0.0
                },
                reference: k_shadow.powf(n as f64 + 1.0 + beta),
            });
        }
    }

    DecompositionAudit {
        reconstruction_rel,
        support_violations,
        pairing_rel_max,
        p11_violations,
        p12_measured,
        p12_reference,
        localization_ok,
        pairings_done: d.pairings_done,
        pairing_budget,
        ratios,
    }
}

/// Quadrature check of the centered-dual normalization on every overlap box:
/// unit pairing with the matching linear generator, zero with all others and
/// with the constants.
pub fn theta_duality_max_dev(quad: &Quad, boxes: &[OverlapBox], n: usize) -> (f64, f64) {
    let ns = n * (n - 1) / 2;
    let mut dev_h = 0.0f64;
    let mut dev_const = 0.0f64;
    for (k, b) in boxes.iter().enumerate() {
        for i in 0..n {
            let mut bump = Bump::new_zero(n, k, b);
            bump.kappa[i] = 1.0;
            for j in 0..ns + 1 {
                dev_const = dev_const.max(bump_moment(quad, n, &bump, j).abs());
            }
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                dev_h = dev_h.max((bump_moment(quad, n, &bump, ns + 1 + j) - want).abs());
            }
        }
    }
    (dev_h, dev_const)
}

// ---------------------------------------------------------------------------
// Averaging tree operator.

/// Per-cube integrals of the absolute field under the main weights.
pub fn cube_abs_integrals(quad: &Quad, g: &SampledField) -> Vec<f64> {
    assert_eq!(g.stride, 1, "the tree operator acts on scalar fields");
    quad.cube_range
        .iter()
        .map(|&(s, e)| (s..e).map(|i| quad.w_main[i] * g.at(i)[0].abs()).sum())
        .collect()
}

/// Subtree averages from per-cube integrals: value at node t is the subtree
/// sum over the subtree measure. The root value is computed but has no box
/// to live on, so norms skip it.
pub fn hardy_from_cube_integrals(tree: &RootedTree, ints: &[f64], measure: &[f64]) -> Vec<f64> {
    let mut num = ints.to_vec();
    for t in tree.post_order() {
        if let Some(p) = tree.parent[t] {
            num[p] += num[t];
        }
    }
    num.iter().zip(measure).map(|(a, b)| a / b).collect()
}

/// The averaging operator: on each overlap box, the mean of |g| over the
/// subtree's cubes.
pub fn hardy_apply(
    quad: &Quad,
    tree: &RootedTree,
    shadow: &ShadowData,
    g: &SampledField,
) -> Vec<f64> {
    let ints = cube_abs_integrals(quad, g);
    hardy_from_cube_integrals(tree, &ints, &shadow.measure)
}

#[derive(Clone, Debug, Serialize)]
pub struct HardyNormReport {
    pub q: f64,
    pub beta: f64,
    /// Best ratio found; a lower bound on the operator norm.
    pub lower_bound: f64,
    pub power_iteration: f64,
    pub best_candidate: f64,
    pub best_candidate_node: usize,
    pub random_max: f64,
}

/// Weighted masses reused across norm evaluations: per-cube and per-box
/// integrals of rho^e.
struct HardyWeights {
    cube: Vec<f64>,
    boxes: Vec<f64>,
    box_of: Vec<Option<usize>>,
}

fn hardy_weights(quad: &Quad, cover: &WhitneyCover, boxes: &[OverlapBox], e: f64) -> HardyWeights {
    let cube = quad
        .cube_range
        .iter()
        .map(|&(s, ee)| (s..ee).map(|i| quad.w_main[i] * quad.rho[i].powf(e)).sum())
        .collect();
    let bw = quad
        .box_range
        .iter()
        .map(|&(s, ee)| (s..ee).map(|i| quad.w_box[i] * quad.rho[i].powf(e)).sum())
        .collect();
    HardyWeights {
        cube,
        boxes: bw,
        box_of: box_index(cover.len(), boxes),
    }
}

fn hardy_image_norm_pow(tree: &RootedTree, w: &HardyWeights, values: &[f64], q: f64) -> f64 {
    let mut s = 0.0;
    for (t, &v) in values.iter().enumerate() {
        if t == tree.root {
            continue;
        }
        if let Some(k) = w.box_of[t] {
            s += w.boxes[k] * v.abs().powf(q);
        }
    }
    s
}

/// Empirical lower bound on the operator norm between the dual-weighted
/// q-spaces (weight rho^(-q beta) on both sides): nonnegative-cone power
/// iteration plus structured candidates (subtree and single-cube
/// indicators) plus seeded random trials.
#[allow(clippy::too_many_arguments)]
pub fn hardy_norm_estimate(
    quad: &Quad,
    cover: &WhitneyCover,
    tree: &RootedTree,
    shadow: &ShadowData,
    boxes: &[OverlapBox],
    q: f64,
    beta: f64,
    trials: usize,
    seed: u64,
) -> HardyNormReport {
    let e = -q * beta;
    let w = hardy_weights(quad, cover, boxes, e);
    let nn = cover.len();
    if boxes.is_empty() {
        return HardyNormReport {
            q,
            beta,
            lower_bound: 0.0,
            power_iteration: 0.0,
            best_candidate: 0.0,
            best_candidate_node: usize::MAX,
            random_max: 0.0,
        };
    }

    // Weighted subtree masses for the indicator candidates.
    let mut cw_sub = w.cube.clone();
    let mut bw_sub = vec![0.0f64; nn];
    for t in 0..nn {
        if let Some(k) = w.box_of[t] {
            bw_sub[t] = w.boxes[k];
        }
    }
    for t in tree.post_order() {
        if let Some(p) = tree.parent[t] {
            cw_sub[p] += cw_sub[t];
            bw_sub[p] += bw_sub[t];
        }
    }

    let mut best_candidate = 0.0f64;
    let mut best_candidate_node = usize::MAX;
    for t in 0..nn {
        // Indicator of the subtree's cubes: the image is 1 on the subtree's
        // boxes and the volume fraction on each ancestor box.
        let mut img = bw_sub[t];
        let mut s = t;
        while let Some(p) = tree.parent[s] {
            if let Some(k) = w.box_of[p] {
                img += w.boxes[k] * (shadow.measure[t] / shadow.measure[p]).powf(q);
            }
            s = p;
        }
        if cw_sub[t] > 0.0 {
            let r = (img / cw_sub[t]).powf(1.0 / q);
            if r > best_candidate {
                best_candidate = r;
                best_candidate_node = t;
            }
        }
        // Single-cube indicator: seen only along the ancestor path.
        let vol_t = cover.grid.volume(&cover.cubes[t]);
        let mut img1 = w
            .box_of[t]
            .map_or(0.0, |k| w.boxes[k] * (vol_t / shadow.measure[t]).powf(q));
        let mut s = t;
        while let Some(p) = tree.parent[s] {
            if let Some(k) = w.box_of[p] {
                img1 += w.boxes[k] * (vol_t / shadow.measure[p]).powf(q);
            }
            s = p;
        }
        if w.cube[t] > 0.0 {
            let r = (img1 / w.cube[t]).powf(1.0 / q);
            if r > best_candidate {
                best_candidate = r;
                best_candidate_node = t;
            }
        }
    }

    // Nonnegative power-type iteration on the stationarity condition.
    let ratio_of = |g: &SampledField| -> f64 {
        let ints = cube_abs_integrals(quad, g);
        let vals = hardy_from_cube_integrals(tree, &ints, &shadow.measure);
        let num = hardy_image_norm_pow(tree, &w, &vals, q).powf(1.0 / q);
        let mut den = 0.0;
        for i in 0..quad.len() {
            let wm = quad.w_main[i];
            if wm != 0.0 {
                den += wm * quad.rho[i].powf(e) * g.at(i)[0].abs().powf(q);
            }
        }
        let den = den.powf(1.0 / q);
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    };
    let mut g = SampledField::from_fn(quad, 1, |_, out| out[0] = 1.0);
    let mut power_iteration = 0.0f64;
    for _ in 0..25 {
        power_iteration = power_iteration.max(ratio_of(&g));
        let ints = cube_abs_integrals(quad, &g);
        let vals = hardy_from_cube_integrals(tree, &ints, &shadow.measure);
        // Stationarity: the maximizer's (q-1)-th power is proportional to
        // the accumulated box responses along the node's ancestor path.
        let mut term = vec![0.0f64; nn];
        for t in 0..nn {
            if t == tree.root {
                continue;
            }
            if let Some(k) = w.box_of[t] {
                term[t] = w.boxes[k] * vals[t].max(0.0).powf(q - 1.0) / shadow.measure[t];
            }
        }
        let mut prefix = vec![0.0f64; nn];
        for &t in &tree.bfs_order {
            prefix[t] = term[t] + tree.parent[t].map_or(0.0, |p| prefix[p]);
        }
        let mut mx = 0.0f64;
        for i in 0..quad.len() {
            if quad.w_main[i] == 0.0 {
                g.at_mut(i)[0] = 0.0;
                continue;
            }
            let wgt = quad.rho[i].powf(e);
            let v = (prefix[quad.cube_of[i]] / wgt).powf(1.0 / (q - 1.0));
            g.at_mut(i)[0] = v;
            mx = mx.max(v);
        }
        if mx == 0.0 {
            break;
        }
        g.scale(1.0 / mx);
    }
    power_iteration = power_iteration.max(ratio_of(&g));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random_max = 0.0f64;
    for _ in 0..trials {
        let mut f = SampledField::zeros(quad, 1);
        // Random nonnegative cube-wise profiles, occasionally sparse.
        let sparse = rng.gen_bool(0.5);
        let stride = rng.gen_range(1..=nn);
        for t in 0..nn {
            if sparse && t % stride != 0 {
                continue;
            }
            let v: f64 = rng.gen_range(0.0..1.0);
            let (s, ee) = quad.cube_range[t];
            for i in s..ee {
                f.at_mut(i)[0] = v;
            }
        }
        random_max = random_max.max(ratio_of(&f));
    }

    HardyNormReport {
        q,
        beta,
        lower_bound: power_iteration.max(best_candidate).max(random_max),
        power_iteration,
        best_candidate,
        best_candidate_node,
        random_max,
    }
}

/// Least-squares slope of ln(y) against x.
pub fn fit_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().map(|y| y.ln()).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y.ln() - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

// ---------------------------------------------------------------------------
// Admissible-input manufacturing.

/// Restricts `f` to the region's cubes and removes the generator span there,
/// in the plain product, leaving pairings at solver roundoff.
pub fn project_out_v_region(
    quad: &Quad,
    cover: &WhitneyCover,
    region: &[bool],
    f: &mut SampledField,
) {
    let n = cover.dim;
    let m = v_dim(n);
    assert_eq!(f.stride, n * n);
    for i in 0..quad.len() {
        if !region[quad.cube_of[i]] {
            f.at_mut(i).fill(0.0);
        }
    }
    let mut gram = nalgebra::DMatrix::<f64>::zeros(m, m);
    let mut rhs = nalgebra::DVector::<f64>::zeros(m);
    let mut gens = vec![vec![0.0; n * n]; m];
    for i in 0..quad.len() {
        let w = quad.w_main[i];
        if w == 0.0 || !region[quad.cube_of[i]] {
            continue;
        }
        let x = &quad.nodes[i];
        for (j, gj) in gens.iter_mut().enumerate() {
            eval_generator(n, j, &x[..n], gj);
        }
        let v = f.at(i);
        for j in 0..m {
            let dj: f64 = gens[j].iter().zip(v).map(|(a, b)| a * b).sum();
            rhs[j] += w * dj;
            for l in j..m {
                let dl: f64 = gens[j].iter().zip(&gens[l]).map(|(a, b)| a * b).sum();
                gram[(j, l)] += w * dl;
            }
        }
    }
    for j in 0..m {
        for l in 0..j {
            gram[(j, l)] = gram[(l, j)];
        }
    }
    let coef = gram
        .cholesky()
        .expect("region too small to separate the generators")
        .solve(&rhs);
    let mut gen = vec![0.0; n * n];
    for i in 0..quad.len() {
        if !region[quad.cube_of[i]] {
            continue;
        }
        let x = quad.nodes[i];
        let v = f.at_mut(i);
        for j in 0..m {
            eval_generator(n, j, &x[..n], &mut gen);
            for (vv, gg) in v.iter_mut().zip(&gen) {
                *vv -= coef[j] * gg;
            }
        }
    }
}

/// Seeded random polynomial matrix field (degree <= 2 entries), restricted
/// to a cube region and projected off the generator span there.
pub fn random_w0_field(
    quad: &Quad,
    cover: &WhitneyCover,
    region: &[bool],
    seed: u64,
) -> SampledField {
    let n = cover.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nm = 1 + n + n * (n + 1) / 2;
    let coefs: Vec<f64> = (0..n * n * nm).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut f = SampledField::from_fn(quad, n * n, |x, out| {
        let mut mono = [0.0f64; 1 + MAX_DIM + MAX_DIM * (MAX_DIM + 1) / 2];
        let mut c = 0;
        mono[c] = 1.0;
        c += 1;
        for a in 0..n {
            mono[c] = x[a];
            c += 1;
        }
        for a in 0..n {
            for b in a..n {
                mono[c] = x[a] * x[b];
                c += 1;
            }
        }
        for (ent, o) in out.iter_mut().enumerate() {
            *o = (0..nm).map(|k| coefs[ent * nm + k] * mono[k]).sum();
        }
    });
    project_out_v_region(quad, cover, region, &mut f);
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::v_generators;
    use crate::geometry::dyadic::{CubeId, GridBase};
    use crate::geometry::Domain;
    use crate::tree::{overlap_boxes, shadows};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Cube of the grid level whose side is 1 containing the point.
    fn locate_unit(grid: &GridBase, x: &[f64]) -> CubeId {
        let mut level = 0u8;
        loop {
            let side = grid.side(level);
            if (side - 1.0).abs() < 1e-12 {
                let idx: Vec<i32> = (0..3)
                    .map(|a| ((x[a] - grid.origin[a]) / side).floor() as i32)
                    .collect();
                return CubeId::new(level, &idx);
            }
            assert!(side > 1.0, "grid too coarse for unit cubes");
            level += 1;
        }
    }

    fn path_cover_3d(len: i32) -> WhitneyCover {
        let grid = GridBase::covering(&[0.0, 0.0, 0.0], &[len as f64, 1.0, 1.0]);
        let cubes: Vec<CubeId> = (0..len)
            .map(|i| locate_unit(&grid, &[i as f64 + 0.5, 0.5, 0.5]))
            .collect();
        WhitneyCover::from_cubes(grid, 3, cubes)
    }

    fn pipeline(cover: &WhitneyCover) -> (RootedTree, Vec<OverlapBox>, Quad) {
        let tree = RootedTree::build(cover, Some(&[0.5, 0.5, 0.5])).unwrap();
        let (boxes, _) = overlap_boxes(cover, &tree).unwrap();
        let quad = Quad::build(cover, &boxes, 3, None);
        (tree, boxes, quad)
    }

    #[test]
    fn profile_plateau_and_support() {
        assert_eq!(profile(0.0), 1.0);
        assert_eq!(profile(7.0 / 16.0), 1.0);
        assert_eq!(profile(-7.0 / 16.0), 1.0);
        assert_eq!(profile(9.0 / 16.0), 0.0);
        assert_eq!(profile(0.7), 0.0);
        assert_eq!(profile(0.5), 0.5);
        // C1 at the knots.
        for u in [7.0 / 16.0, 9.0 / 16.0] {
            let h = 1e-7;
            let fd = (profile(u + h) - profile(u - h)) / (2.0 * h);
            assert!((fd - profile_deriv(u)).abs() < 1e-5);
        }
    }

    #[test]
    fn single_cube_partition_is_identically_one() {
        let cover = path_cover_3d(1);
        let tree = RootedTree::build(&cover, None).unwrap();
        let (boxes, _) = overlap_boxes(&cover, &tree).unwrap();
        assert!(boxes.is_empty());
        let quad = Quad::build(&cover, &boxes, 3, None);
        let pou = partition_of_unity(&quad, &cover);
        assert!(pou.uncovered.is_empty());
        assert_eq!(pou.per_cube[0].len(), quad.len());
        for &(_, phi) in &pou.per_cube[0] {
            assert_eq!(phi, 1.0);
        }
    }

    #[test]
    fn partition_sums_to_one_and_stays_in_range() {
        let cover = path_cover_3d(3);
        let (_, _, quad) = pipeline(&cover);
        let pou = partition_of_unity(&quad, &cover);
        assert!(pou.uncovered.is_empty());
        assert!(pou.sum_err < 1e-12, "sum error {}", pou.sum_err);
        assert!(pou.phi_max <= 1.0);
        // Support of the first cube along x reaches only into the extension.
        let first = cover.locate(&[0.5, 0.5, 0.5]).unwrap();
        let hi = cover.grid.hi(&cover.cubes[first])[0];
        for &(i, phi) in &pou.per_cube[first] {
            assert!(phi > 0.0);
            assert!(quad.nodes[i][0] < hi + 1.0 / 16.0);
        }
    }

    #[test]
    fn generator_evaluation_matches_polynomial_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [3usize, 4] {
            let gens = v_generators(n);
            let mut out = vec![0.0; n * n];
            for _ in 0..20 {
                let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                for (j, g) in gens.iter().enumerate() {
                    eval_generator(n, j, &x, &mut out);
                    let want = g.eval(&x);
                    for r in 0..n {
                        for c in 0..n {
                            assert!(
                                (out[r * n + c] - want[r][c]).abs() < 1e-14,
                                "gen {j} entry ({r},{c})"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn generator_sup_bounds_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 3;
        let lo = [-0.3, 0.1, -1.0];
        let hi = [0.4, 0.9, -0.2];
        let mut out = vec![0.0; n * n];
        for j in 0..v_dim(n) {
            let sup = generator_sup_on_box(n, j, &lo, &hi);
            for _ in 0..200 {
                let x: Vec<f64> = (0..n).map(|a| rng.gen_range(lo[a]..hi[a])).collect();
                eval_generator(n, j, &x, &mut out);
                let f = frob(&out);
                assert!(f <= sup * (1.0 + 1e-12), "gen {j}: {f} > {sup}");
            }
        }
    }

    #[test]
    fn theta_duals_are_normalized_on_real_boxes() {
        let cover = path_cover_3d(3);
        let (_, boxes, quad) = pipeline(&cover);
        assert_eq!(boxes.len(), 2);
        let (dev_h, dev_const) = theta_duality_max_dev(&quad, &boxes, 3);
        assert!(dev_h < 1e-11, "H-pairing deviation {dev_h}");
        assert!(dev_const < 1e-11, "constant leak {dev_const}");
    }

    #[test]
    fn two_cube_stage_one_balances_constant_moments() {
        let cover = path_cover_3d(2);
        let tree = RootedTree::build(&cover, Some(&[0.5, 0.5, 0.5])).unwrap();
        let (boxes, _) = overlap_boxes(&cover, &tree).unwrap();
        let quad = Quad::build(&cover, &boxes, 3, None);
        let region = vec![true; 2];
        let g = random_w0_field(&quad, &cover, &region, 7);
        let pou = partition_of_unity(&quad, &cover);
        let cells = cell_pieces(&pou, &g);
        let stage = decompose_stage_one(&quad, &cover, &tree, &boxes, &cells);
        let scales = pairing_scales(&quad, &cover, &g);
        let n = 3;
        let m0 = 4;
        let child = (0..2).find(|&t| t != tree.root).unwrap();
        assert!(stage.bumps[child].is_some());
        let js: Vec<usize> = (0..m0).collect();
        let mut own = [0.0f64; MAX_CONST];
        for t in 0..2 {
            cell_moments(&quad, n, &cells[t], &js, &mut own);
            for (slot, &j) in js.iter().enumerate() {
                let mut p = own[slot];
                if let Some(b) = &stage.bumps[t] {
                    p -= bump_moment(&quad, n, b, j);
                }
                for &c in &tree.children[t] {
                    if let Some(b) = &stage.bumps[c] {
                        p += bump_moment(&quad, n, b, j);
                    }
                }
                assert!(
                    p.abs() < 1e-11 * scales[j],
                    "node {t} generator {j}: {p:.3e}"
                );
            }
        }
    }

    #[test]
    fn three_cube_stage_one_telescopes_over_a_subtree() {
        let cover = path_cover_3d(3);
        let (tree, boxes, quad) = pipeline(&cover);
        let region = vec![true; 3];
        let g = random_w0_field(&quad, &cover, &region, 21);
        let pou = partition_of_unity(&quad, &cover);
        let cells = cell_pieces(&pou, &g);
        let stage = decompose_stage_one(&quad, &cover, &tree, &boxes, &cells);
        // Middle node: one child, one parent. Over its subtree the interior
        // bump cancels, leaving the cells minus the subtree's own bump.
        let mid = (0..3)
            .find(|&t| tree.parent[t].is_some() && !tree.children[t].is_empty())
            .unwrap();
        let mut sub = vec![mid];
        let mut stack = vec![mid];
        while let Some(t) = stack.pop() {
            for &c in &tree.children[t] {
                sub.push(c);
                stack.push(c);
            }
        }
        let n = 3;
        let in_box = |b: &Bump, i: usize| {
            let (s, e) = quad.box_range[b.box_id];
            i >= s && i < e
        };
        let scale = g.max_abs().max(1.0);
        let mut lhs = vec![0.0f64; n * n];
        let mut rhs = vec![0.0f64; n * n];
        let mut val = vec![0.0f64; n * n];
        for i in 0..quad.len() {
            let x = &quad.nodes[i];
            lhs.fill(0.0);
            rhs.fill(0.0);
            for &t in &sub {
                if let Some(v) = cells[t].value_at(i) {
                    for (a, b) in lhs.iter_mut().zip(v) {
                        *a += b;
                    }
                    for (a, b) in rhs.iter_mut().zip(v) {
                        *a += b;
                    }
                }
                if let Some(b) = &stage.bumps[t] {
                    if in_box(b, i) {
                        b.eval(n, &x[..n], &mut val);
                        for (a, s) in lhs.iter_mut().zip(&val) {
                            *a -= s;
                        }
                    }
                }
                for &c in &tree.children[t] {
                    if let Some(b) = &stage.bumps[c] {
                        if in_box(b, i) {
                            b.eval(n, &x[..n], &mut val);
                            for (a, s) in lhs.iter_mut().zip(&val) {
                                *a += s;
                            }
                        }
                    }
                }
            }
            if let Some(b) = &stage.bumps[mid] {
                if in_box(b, i) {
                    b.eval(n, &x[..n], &mut val);
                    for (a, s) in rhs.iter_mut().zip(&val) {
                        *a -= s;
                    }
                }
            }
            for (a, b) in lhs.iter().zip(rhs.iter()) {
                assert!((a - b).abs() <= 1e-12 * scale.max(b.abs()));
            }
        }
    }

    #[test]
    fn end_to_end_decomposition_on_a_path() {
        let cover = path_cover_3d(3);
        let (tree, boxes, quad) = pipeline(&cover);
        let region = vec![true; 3];
        let g = random_w0_field(&quad, &cover, &region, 3);
        let d = v_decompose(&quad, &cover, &tree, &boxes, &g).unwrap();
        assert!(d.input_pairing_rel < tol::W0_INPUT);
        let audit = audit_decomposition(
            &quad,
            &cover,
            &tree,
            &boxes,
            &d,
            &g,
            3.0,
            &[1.5, 2.0, 3.0],
            &[0.0],
        );
        assert!(audit.reconstruction_rel < tol::RECONSTRUCTION);
        assert_eq!(audit.support_violations, 0);
        assert!(
            audit.pairing_rel_max < tol::PIECE_PAIRING,
            "{}",
            audit.pairing_rel_max
        );
        assert_eq!(audit.p11_violations, 0);
        assert!(audit.localization_ok);
        assert!(audit.pairings_done <= audit.pairing_budget);
        assert!(audit.p12_measured.is_finite());
        for r in &audit.ratios {
            assert!(r.ratio.is_finite() && r.ratio > 0.0);
        }
    }

    #[test]
    fn leaf_supported_field_keeps_far_pieces_empty() {
        let cover = path_cover_3d(3);
        let (tree, boxes, quad) = pipeline(&cover);
        let leaf = (0..3)
            .find(|&t| tree.children[t].is_empty() && tree.parent[t].is_some())
            .unwrap();
        let mut region = vec![false; 3];
        region[leaf] = true;
        let g = random_w0_field(&quad, &cover, &region, 5);
        let d = v_decompose(&quad, &cover, &tree, &boxes, &g).unwrap();
        for t in 0..3 {
            if !d.active[t] {
                assert!(d.pieces[t].is_zero());
                assert!(d.bumps[t].is_none());
            }
        }
        let audit =
            audit_decomposition(&quad, &cover, &tree, &boxes, &d, &g, 3.0, &[2.0], &[0.0]);
        assert!(audit.reconstruction_rel < tol::RECONSTRUCTION);
        assert!(audit.pairing_rel_max < tol::PIECE_PAIRING);
        assert!(audit.localization_ok);
    }

    #[test]
    fn non_orthogonal_input_is_rejected() {
        let cover = path_cover_3d(2);
        let tree = RootedTree::build(&cover, None).unwrap();
        let (boxes, _) = overlap_boxes(&cover, &tree).unwrap();
        let quad = Quad::build(&cover, &boxes, 3, None);
        let g = SampledField::from_fn(&quad, 9, |_, out| {
            out.fill(0.0);
            out[0] = 1.0;
            out[4] = 1.0;
            out[8] = 1.0;
        });
        match v_decompose(&quad, &cover, &tree, &boxes, &g) {
            Err(DecomposeError::NotOrthogonal { worst, .. }) => assert!(worst > 1e-3),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn projection_leaves_exact_support_and_zero_pairings() {
        let cover = path_cover_3d(3);
        let (_, _, quad) = pipeline(&cover);
        let mut region = vec![true; 3];
        region[2] = false;
        let g = random_w0_field(&quad, &cover, &region, 9);
        let scales = pairing_scales(&quad, &cover, &g);
        let mut gen = vec![0.0; 9];
        for j in 0..v_dim(3) {
            let mut r = 0.0;
            for i in 0..quad.len() {
                let w = quad.w_main[i];
                if w == 0.0 {
                    continue;
                }
                eval_generator(3, j, &quad.nodes[i][..3], &mut gen);
                r += w * g.at(i).iter().zip(&gen).map(|(a, b)| a * b).sum::<f64>();
            }
            assert!(r.abs() / scales[j] < 1e-11, "generator {j}");
        }
        let (s, e) = quad.cube_range[2];
        for i in s..e {
            assert!(g.at(i).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn averaging_operator_on_path_matches_hand_enumeration() {
        let cover = path_cover_3d(3);
        let tree = RootedTree::build(&cover, Some(&[0.5, 0.5, 0.5])).unwrap();
        let shadow = shadows(&cover, &tree);
        let (boxes, _) = overlap_boxes(&cover, &tree).unwrap();
        let quad = Quad::build(&cover, &boxes, 3, None);
        // chi over everything: every subtree average is exactly 1.
        let one = SampledField::from_fn(&quad, 1, |_, out| out[0] = 1.0);
        for (t, v) in hardy_apply(&quad, &tree, &shadow, &one).iter().enumerate() {
            assert!((v - 1.0).abs() < 1e-13, "node {t}: {v}");
        }
        // chi over the far leaf: averages 1, 1/2, 1/3 up the chain.
        let leaf = cover.locate(&[2.5, 0.5, 0.5]).unwrap();
        let mid = cover.locate(&[1.5, 0.5, 0.5]).unwrap();
        let root = cover.locate(&[0.5, 0.5, 0.5]).unwrap();
        let mut chi = SampledField::zeros(&quad, 1);
        let (s, e) = quad.cube_range[leaf];
        for i in s..e {
            chi.at_mut(i)[0] = 1.0;
        }
        let vals = hardy_apply(&quad, &tree, &shadow, &chi);
        assert!((vals[leaf] - 1.0).abs() < 1e-13);
        assert!((vals[mid] - 0.5).abs() < 1e-13);
        assert!((vals[root] - 1.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn averaging_operator_on_branching_tree_matches_hand_enumeration() {
        // Five unit cubes in a row, rooted at the second: the root has two
        // children (one bare leaf, one chain of three).
        let grid = GridBase::covering(&[0.0, 0.0, 0.0], &[5.0, 1.0, 1.0]);
        let cubes: Vec<CubeId> = (0..5)
            .map(|i| locate_unit(&grid, &[i as f64 + 0.5, 0.5, 0.5]))
            .collect();
        let cover = WhitneyCover::from_cubes(grid, 3, cubes);
        let tree = RootedTree::build(&cover, Some(&[1.5, 0.5, 0.5])).unwrap();
        let shadow = shadows(&cover, &tree);
        let (boxes, _) = overlap_boxes(&cover, &tree).unwrap();
        let quad = Quad::build(&cover, &boxes, 2, None);
        let c0 = cover.locate(&[0.5, 0.5, 0.5]).unwrap();
        let c2 = cover.locate(&[2.5, 0.5, 0.5]).unwrap();
        let c3 = cover.locate(&[3.5, 0.5, 0.5]).unwrap();
        let c4 = cover.locate(&[4.5, 0.5, 0.5]).unwrap();
        assert_eq!(tree.children[tree.root].len(), 2);
        // chi at the end of the chain: 1, 1/2, 1/3 along it, 0 on the other
        // branch, 1/5 at the root.
        let mut chi = SampledField::zeros(&quad, 1);
        let (s, e) = quad.cube_range[c4];
        for i in s..e {
            chi.at_mut(i)[0] = 1.0;
        }
        let vals = hardy_apply(&quad, &tree, &shadow, &chi);
        assert!((vals[c4] - 1.0).abs() < 1e-13);
        assert!((vals[c3] - 0.5).abs() < 1e-13);
        assert!((vals[c2] - 1.0 / 3.0).abs() < 1e-13);
        assert!(vals[c0].abs() < 1e-15);
        assert!((vals[tree.root] - 0.2).abs() < 1e-13);
    }

    #[test]
    fn averaging_operator_is_monotone_and_nonnegative() {
        let cover = path_cover_3d(3);
        let (tree, _, quad) = pipeline(&cover);
        let shadow = shadows(&cover, &tree);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let a = SampledField::from_fn(&quad, 1, |_, out| out[0] = rng.gen_range(0.0..1.0));
            let mut b = a.clone();
            for i in 0..quad.len() {
                b.at_mut(i)[0] += rng.gen_range(0.0..0.5);
            }
            let ta = hardy_apply(&quad, &tree, &shadow, &a);
            let tb = hardy_apply(&quad, &tree, &shadow, &b);
            for (x, y) in ta.iter().zip(&tb) {
                assert!(*x >= 0.0 && *x <= *y + 1e-15);
            }
        }
    }

    #[test]
    fn norm_estimate_dominates_every_probe() {
        let cover = path_cover_3d(3);
        let (tree, boxes, quad) = pipeline(&cover);
        let shadow = shadows(&cover, &tree);
        let rep = hardy_norm_estimate(&quad, &cover, &tree, &shadow, &boxes, 2.0, 0.0, 50, 23);
        assert!(rep.lower_bound.is_finite() && rep.lower_bound > 0.0);
        assert!(rep.lower_bound >= rep.power_iteration);
        assert!(rep.lower_bound >= rep.best_candidate);
        assert!(rep.lower_bound >= rep.random_max);
        assert!(rep.best_candidate_node < cover.len());
    }

    #[test]
    fn single_cube_operator_norm_is_zero() {
        let cover = path_cover_3d(1);
        let tree = RootedTree::build(&cover, None).unwrap();
        let shadow = shadows(&cover, &tree);
        let (boxes, _) = overlap_boxes(&cover, &tree).unwrap();
        let quad = Quad::build(&cover, &boxes, 2, None);
        let rep = hardy_norm_estimate(&quad, &cover, &tree, &shadow, &boxes, 2.0, 0.0, 10, 1);
        assert_eq!(rep.lower_bound, 0.0);
    }

    #[test]
    fn fit_log_slope_recovers_exponent() {
        let xs = [0.0f64, 0.5, 1.0, 1.5];
        let ys: Vec<f64> = xs.iter().map(|x| 0.7 * (1.3 * x).exp()).collect();
        assert!((fit_log_slope(&xs, &ys) - 1.3).abs() < 1e-12);
    }

    #[test]
    fn weighted_audit_on_domain_cover_stays_bounded() {
        let dom = Domain::builtin("unit_cube").unwrap();
        let cover = WhitneyCover::build(&dom, 3);
        let tree = RootedTree::build(&cover, None).unwrap();
        let (boxes, _) = overlap_boxes(&cover, &tree).unwrap();
        let quad = Quad::build(&cover, &boxes, 3, Some(&dom));
        let region = vec![true; cover.len()];
        let g = random_w0_field(&quad, &cover, &region, 31);
        let d = v_decompose(&quad, &cover, &tree, &boxes, &g).unwrap();
        let audit = audit_decomposition(
            &quad,
            &cover,
            &tree,
            &boxes,
            &d,
            &g,
            5.0,
            &[2.0],
            &[0.0, 1.0],
        );
        assert!(audit.reconstruction_rel < tol::RECONSTRUCTION);
        assert!(audit.pairing_rel_max < tol::PIECE_PAIRING);
        assert_eq!(audit.p11_violations, 0);
        assert_eq!(audit.support_violations, 0);
        for r in &audit.ratios {
            assert!(r.ratio.is_finite(), "q {} beta {}", r.q, r.beta);
        }
    }
}
