//! Block LOBPCG for the symmetric pencil `S x = lambda T x` with `T`
//! positive definite, optionally restricted to the Euclidean orthogonal
//! complement of a constraint space.
//!
//! Operators enter as matrix-free applies. All reductions sum in a fixed
//! order, so a seeded run reproduces bit for bit regardless of the rayon
//! thread count.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const DOT_CHUNK: usize = 1 << 14;

/// Deterministic parallel dot product: ordered chunk sums folded serially.
pub fn pdot(a: &[f64], b: &[f64]) -> f64 {
    let parts: Vec<f64> = a
        .par_chunks(DOT_CHUNK)
        .zip(b.par_chunks(DOT_CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum())
        .collect();
    parts.iter().sum()
}

pub fn pnorm(a: &[f64]) -> f64 {
    pdot(a, a).sqrt()
}

/// Projector onto the orthogonal complement of a fixed set of directions.
pub struct Projector {
    basis: Vec<Vec<f64>>,
}

impl Projector {
    /// Orthonormalizes the columns (two Gram-Schmidt passes) and keeps them
    /// as the removed subspace. Panics if the columns are dependent.
    pub fn from_columns(cols: &[Vec<f64>]) -> Projector {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cols.len());
        for (j, c) in cols.iter().enumerate() {
            let mut v = c.clone();
            let scale = pnorm(&v);
            for _ in 0..2 {
                for b in &basis {
                    let coef = pdot(b, &v);
                    v.par_chunks_mut(DOT_CHUNK)
                        .zip(b.par_chunks(DOT_CHUNK))
                        .for_each(|(vc, bc)| {
                            for (p, q) in vc.iter_mut().zip(bc) {
                                *p -= coef * q;
                            }
                        });
                }
            }
            let nrm = pnorm(&v);
            assert!(
                nrm > 1e-10 * scale.max(1e-300),
                "constraint {j} depends on the previous ones"
            );
            v.iter_mut().for_each(|p| *p /= nrm);
            basis.push(v);
        }
        Projector { basis }
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn apply(&self, v: &mut [f64]) {
        for b in &self.basis {
            let coef = pdot(b, v);
            v.par_chunks_mut(DOT_CHUNK)
                .zip(b.par_chunks(DOT_CHUNK))
                .for_each(|(vc, bc)| {
                    for (p, q) in vc.iter_mut().zip(bc) {
                        *p -= coef * q;
                    }
                });
        }
    }
}

/// `out[r] = sum_i coef[i] * cols[i][r]`, summed over `i` in order.
fn linear_combo(cols: &[&Vec<f64>], coef: &[f64], out: &mut [f64]) {
    out.par_chunks_mut(DOT_CHUNK)
        .enumerate()
        .for_each(|(chunk, oc)| {
            let lo = chunk * DOT_CHUNK;
            let len = oc.len();
            oc.fill(0.0);
            for (c, col) in coef.iter().zip(cols) {
                if *c != 0.0 {
                    for (o, v) in oc.iter_mut().zip(&col[lo..lo + len]) {
                        *o += c * v;
                    }
                }
            }
        });
}

/// One block of iterate columns together with their operator images.
struct Block {
    v: Vec<Vec<f64>>,
    sv: Vec<Vec<f64>>,
    tv: Vec<Vec<f64>>,
}

impl Block {
    fn width(&self) -> usize {
        self.v.len()
    }
}

fn gram(a: &[Vec<f64>], b: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| pdot(&a[i], &b[j]))
}

/// Factor `C` with `C^T G C = I`, dropping numerically null directions.
/// Returns `None` when the Gram matrix has no usable rank.
fn ortho_factor(g: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let sym = (g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    if lmax <= 0.0 {
        return None;
    }
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > 1e-12 * lmax)
        .collect();
    if keep.is_empty() {
        return None;
    }
    let mut c = DMatrix::zeros(g.nrows(), keep.len());
    for (col, &i) in keep.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt().recip();
        for r in 0..g.nrows() {
            c[(r, col)] = eig.eigenvectors[(r, i)] * s;
        }
    }
    Some(c)
}

/// Removes the `T`-components of `against` (whose columns must be
/// `T`-orthonormal) from plain iterate columns, before operator images are
/// taken. Two passes keep the trial Gram near identity.
fn t_orthogonalize_columns(cols: &mut [Vec<f64>], against: &Block) {
    for col in cols.iter_mut() {
        for _ in 0..2 {
            for (v, tv) in against.v.iter().zip(&against.tv) {
                let coef = pdot(tv, col);
                col.par_chunks_mut(DOT_CHUNK)
                    .zip(v.par_chunks(DOT_CHUNK))
                    .for_each(|(cc, vc)| {
                        for (p, q) in cc.iter_mut().zip(vc) {
                            *p -= coef * q;
                        }
                    });
            }
        }
    }
}

/// Same removal for a block whose operator images already exist; the images
/// update by the same combination.
fn t_orthogonalize_block(b: &mut Block, against: &Block) {
    for col in 0..b.width() {
        for _ in 0..2 {
            for j in 0..against.width() {
                let coef = pdot(&against.tv[j], &b.v[col]);
                for (dst, src) in [
                    (&mut b.v[col], &against.v[j]),
                    (&mut b.sv[col], &against.sv[j]),
                    (&mut b.tv[col], &against.tv[j]),
                ] {
                    dst.par_chunks_mut(DOT_CHUNK)
                        .zip(src.par_chunks(DOT_CHUNK))
                        .for_each(|(cc, vc)| {
                            for (p, q) in cc.iter_mut().zip(vc) {
                                *p -= coef * q;
                            }
                        });
                }
            }
        }
    }
}

/// Applies a coefficient matrix to all three column families of a block.
fn transform(b: &Block, c: &DMatrix<f64>) -> Block {
    let n = b.v[0].len();
    let make = |src: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        let cols: Vec<&Vec<f64>> = src.iter().collect();
        (0..c.ncols())
            .map(|j| {
                let coef: Vec<f64> = (0..c.nrows()).map(|i| c[(i, j)]).collect();
                let mut out = vec![0.0; n];
                linear_combo(&cols, &coef, &mut out);
                out
            })
            .collect()
    };
    Block {
        v: make(&b.v),
        sv: make(&b.sv),
        tv: make(&b.tv),
    }
}

/// Smallest `k` Ritz pairs of the pencil (`sg`, `tg`), robust against a
/// rank-deficient trial basis. Returned coefficients are `tg`-orthonormal.
fn ritz(sg: &DMatrix<f64>, tg: &DMatrix<f64>, k: usize) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let b = ortho_factor(tg)?;
    if b.ncols() < k {
        return None;
    }
    let m = b.transpose() * sg * &b;
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let theta: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut z = DMatrix::zeros(b.ncols(), k);
    for (col, &i) in order[..k].iter().enumerate() {
        z.set_column(col, &eig.eigenvectors.column(i));
    }
    Some((theta, &b * z))
}

pub struct EigOptions {
    /// Block width; at least the wanted count plus expected multiplicity.
    pub block: usize,
    /// Leading eigenpairs whose residuals must pass `tol`.
    pub need: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

pub struct EigResult {
    /// Ascending Ritz values, `block` of them.
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    /// Block-relative residuals: null directions measure small once the
    /// block carries any positive mode.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub struct Pencil<'a> {
    pub n: usize,
    pub s_apply: &'a (dyn Fn(&[f64], &mut [f64]) + Sync),
    pub t_apply: &'a (dyn Fn(&[f64], &mut [f64]) + Sync),
    pub precond: Option<&'a (dyn Fn(&[f64], &mut [f64]) + Sync)>,
}

impl Pencil<'_> {
    fn images(&self, v: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut sv = vec![vec![0.0; self.n]; v.len()];
        let mut tv = vec![vec![0.0; self.n]; v.len()];
        for (col, (s, t)) in v.iter().zip(sv.iter_mut().zip(tv.iter_mut())) {
            (self.s_apply)(col, s);
            (self.t_apply)(col, t);
        }
        (sv, tv)
    }
}

pub fn lobpcg(
    pencil: &Pencil,
    constraints: Option<&Projector>,
    init: Option<Vec<Vec<f64>>>,
    opts: &EigOptions,
) -> EigResult {
    let n = pencil.n;
    let k = opts.block;
    assert!(opts.need <= k && k > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut cols = init.unwrap_or_default();
    assert!(cols.len() <= k, "initial block wider than requested");
    while cols.len() < k {
        cols.push((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
    }
    if let Some(p) = constraints {
        cols.iter_mut().for_each(|c| p.apply(c));
    }

    let (sv, tv) = pencil.images(&cols);
    let mut x = Block { v: cols, sv, tv };
    let c = ortho_factor(&gram(&x.v, &x.tv)).expect("initial block has usable rank");
    assert_eq!(c.ncols(), k, "initial block is rank deficient");
    x = transform(&x, &c);

    // Rotate so the S Gram is diagonal and Ritz values are available.
    let sg = gram(&x.v, &x.sv);
    let tg = DMatrix::identity(k, k);
    let (mut theta, z) = ritz(&sg, &tg, k).expect("identity Gram always factors");
    x = transform(&x, &z);

    let mut p: Option<Block> = None;
    let mut iterations = 0;
    let mut converged = false;
    let mut residuals = vec![f64::INFINITY; k];

    for it in 0..opts.max_iter {
        iterations = it;
        // Residuals r_j = S x_j - theta_j T x_j, measured against the
        // largest operator action in the block.
        let mut rs: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut s_max = 0.0f64;
        let mut t_max = 0.0f64;
        for j in 0..k {
            s_max = s_max.max(pnorm(&x.sv[j]));
            t_max = t_max.max(pnorm(&x.tv[j]));
        }
        for j in 0..k {
            let mut r = x.sv[j].clone();
            let th = theta[j];
            r.par_chunks_mut(DOT_CHUNK)
                .zip(x.tv[j].par_chunks(DOT_CHUNK))
                .for_each(|(rc, tc)| {
                    for (a, b) in rc.iter_mut().zip(tc) {
                        *a -= th * b;
                    }
                });
            if let Some(pr) = constraints {
                pr.apply(&mut r);
            }
            let denom = (s_max + theta[j].abs() * t_max).max(1e-300);
            residuals[j] = pnorm(&r) / denom;
            rs.push(r);
        }
        if residuals[..opts.need].iter().all(|&r| r <= opts.tol) {
            converged = true;
            break;
        }

        // Preconditioned, constrained search directions.
        let mut w: Vec<Vec<f64>> = rs
            .iter()
            .map(|r| {
                let mut out = vec![0.0; n];
                match pencil.precond {
                    Some(m) => m(r, &mut out),
                    None => out.copy_from_slice(r),
                }
                out
            })
            .collect();
        if let Some(pr) = constraints {
            w.iter_mut().for_each(|c| pr.apply(c));
        }
        t_orthogonalize_columns(&mut w, &x);
        let (sw, tw) = pencil.images(&w);
        let mut wb = Block { v: w, sv: sw, tv: tw };
        match ortho_factor(&gram(&wb.v, &wb.tv)) {
            Some(c) => wb = transform(&wb, &c),
            None => break,
        }

        // Rayleigh-Ritz over [X W P].
        let mut families: Vec<&Block> = vec![&x, &wb];
        if let Some(pb) = &p {
            families.push(pb);
        }
        let all_v: Vec<Vec<f64>> = families
            .iter()
            .flat_map(|b| b.v.iter().cloned())
            .collect();
        let all_sv: Vec<Vec<f64>> = families
            .iter()
            .flat_map(|b| b.sv.iter().cloned())
            .collect();
        let all_tv: Vec<Vec<f64>> = families
            .iter()
            .flat_map(|b| b.tv.iter().cloned())
            .collect();
        let basis = Block {
            v: all_v,
            sv: all_sv,
            tv: all_tv,
        };
        let sg = gram(&basis.v, &basis.sv);
        let tg = gram(&basis.v, &basis.tv);
        let Some((new_theta, z)) = ritz(&sg, &tg, k) else {
            break;
        };
        if std::env::var_os("EIG_TRACE").is_some() {
            eprintln!(
                "it={it} width={} res_last={:.3e} theta_last={:.15e}",
                basis.width(),
                residuals[opts.need - 1],
                theta[k - 1]
            );
        }
        let x_new = transform(&basis, &z);

        // Next conjugate block: the same combination without the X part,
        // kept T-orthogonal to the new iterates.
        let mut zp = z.clone();
        for col in 0..k {
            for row in 0..k {
                zp[(row, col)] = 0.0;
            }
        }
        let mut p_raw = transform(&basis, &zp);
        t_orthogonalize_block(&mut p_raw, &x_new);
        p = ortho_factor(&gram(&p_raw.v, &p_raw.tv)).map(|c| transform(&p_raw, &c));

        theta = new_theta;
        x = x_new;
    }

    EigResult {
        values: theta,
        vectors: x.v,
        residuals,
        iterations,
        converged,
    }
}
