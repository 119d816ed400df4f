//! Triquadratic voxel discretization of vector fields on 3d domains.
//!
//! Elements are axis-aligned cubes of side `h`, included when their center
//! lies inside the domain. Each element carries 27 nodes (3 per axis), so the
//! quadratic conformal kernel fields are represented exactly. Degrees of
//! freedom are interleaved: `dof = 3 * node + component`.

use crate::decompose::eval_generator;
use crate::fields::poly::{MatPoly, VecPoly};
use crate::geometry::Domain;
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::sync::OnceLock;

/// 3-point Gauss rule on `[0, 1]`, exact through degree five.
const GP: [f64; 3] = [
    0.5 - 0.387_298_334_620_741_7,
    0.5,
    0.5 + 0.387_298_334_620_741_7,
];
const GW: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

/// Quadratic Lagrange values on `[0, 1]` with nodes at 0, 1/2, 1.
fn shape1(x: f64) -> [f64; 3] {
    [(1.0 - x) * (1.0 - 2.0 * x), 4.0 * x * (1.0 - x), x * (2.0 * x - 1.0)]
}

fn dshape1(x: f64) -> [f64; 3] {
    [4.0 * x - 3.0, 4.0 - 8.0 * x, 4.0 * x - 1.0]
}

/// Reference-element tables on the unit cube: 27 Gauss points x 27 nodes.
struct RefData {
    /// Shape value per Gauss point and node.
    val: Vec<[f64; 27]>,
    /// Reference gradient per Gauss point and node.
    grad: Vec<[[f64; 3]; 27]>,
    /// Gauss weight (unit volume).
    w: [f64; 27],
    /// Gauss point coordinates on the unit cube.
    x: [[f64; 3]; 27],
}

fn ref_data() -> &'static RefData {
    static DATA: OnceLock<RefData> = OnceLock::new();
    DATA.get_or_init(|| {
        let mut val = vec![[0.0; 27]; 27];
        let mut grad = vec![[[0.0; 3]; 27]; 27];
        let mut w = [0.0; 27];
        let mut x = [[0.0; 3]; 27];
        for g in 0..27 {
            let (gx, gy, gz) = (g % 3, (g / 3) % 3, g / 9);
            let (nx, ny, nz) = (shape1(GP[gx]), shape1(GP[gy]), shape1(GP[gz]));
            let (dx, dy, dz) = (dshape1(GP[gx]), dshape1(GP[gy]), dshape1(GP[gz]));
            w[g] = GW[gx] * GW[gy] * GW[gz];
            x[g] = [GP[gx], GP[gy], GP[gz]];
            for i in 0..27 {
                let (ix, iy, iz) = (i % 3, (i / 3) % 3, i / 9);
                val[g][i] = nx[ix] * ny[iy] * nz[iz];
                grad[g][i] = [
                    dx[ix] * ny[iy] * nz[iz],
                    nx[ix] * dy[iy] * nz[iz],
                    nx[ix] * ny[iy] * dz[iz],
                ];
            }
        }
        RefData { val, grad, w, x }
    })
}

/// Per-pair integration channels on the reference element, premultiplied by
/// the Gauss weight: `dot = grad_i . grad_j`, the outer products
/// `o[a][b] = grad_i[a] grad_j[b]`, and the mass product. Physical scaling is
/// `h * dot`, `h * o`, `h^3 * mass`.
const CH: usize = 11;

fn ref_channels() -> &'static Vec<[f64; CH]> {
    static DATA: OnceLock<Vec<[f64; CH]>> = OnceLock::new();
    DATA.get_or_init(|| {
        let rd = ref_data();
        let mut ch = vec![[0.0; CH]; 27 * 27 * 27];
        for g in 0..27 {
            for i in 0..27 {
                for j in 0..27 {
                    let gi = rd.grad[g][i];
                    let gj = rd.grad[g][j];
                    let e = &mut ch[(g * 27 + i) * 27 + j];
                    e[0] = rd.w[g] * (gi[0] * gj[0] + gi[1] * gj[1] + gi[2] * gj[2]);
                    for a in 0..3 {
                        for b in 0..3 {
                            e[1 + 3 * a + b] = rd.w[g] * gi[a] * gj[b];
                        }
                    }
                    e[10] = rd.w[g] * rd.val[g][i] * rd.val[g][j];
                }
            }
        }
        ch
    })
}

/// Uniform triquadratic mesh over the voxels whose center lies inside a
/// domain.
pub struct VoxelMesh {
    pub h: f64,
    pub origin: [f64; 3],
    /// Voxel-lattice extent per axis.
    pub cells: [usize; 3],
    /// Lattice coordinates of the active voxels.
    pub elems: Vec<[u32; 3]>,
    /// Active node ids of each element, local order x-fastest.
    pub elem_nodes: Vec<[u32; 27]>,
    /// Coordinates of the active nodes.
    pub nodes: Vec<[f64; 3]>,
    /// Boundary distance at the 27 Gauss points of every element.
    pub gauss_rho: Vec<[f64; 27]>,
    elem_grid: Vec<i32>,
}

impl VoxelMesh {
    pub fn build(domain: &Domain, h: f64) -> VoxelMesh {
        assert_eq!(domain.dim, 3, "voxel meshes are three-dimensional");
        assert!(h > 0.0);
        let origin = [domain.bbox_lo[0], domain.bbox_lo[1], domain.bbox_lo[2]];
        let mut cells = [0usize; 3];
        for a in 0..3 {
            let span = domain.bbox_hi[a] - domain.bbox_lo[a];
            cells[a] = (span / h).round().max(1.0) as usize;
            assert!(
                (cells[a] as f64 * h - span).abs() <= 1e-9 * span.max(1.0),
                "mesh size must tile the bounding box"
            );
        }
        let nlat = [2 * cells[0] + 1, 2 * cells[1] + 1, 2 * cells[2] + 1];
        let mut node_grid = vec![-1i32; nlat[0] * nlat[1] * nlat[2]];
        let mut elem_grid = vec![-1i32; cells[0] * cells[1] * cells[2]];
        let mut elems = Vec::new();
        for ez in 0..cells[2] {
            for ey in 0..cells[1] {
                for ex in 0..cells[0] {
                    let c = [
                        origin[0] + (ex as f64 + 0.5) * h,
                        origin[1] + (ey as f64 + 0.5) * h,
                        origin[2] + (ez as f64 + 0.5) * h,
                    ];
                    if domain.contains(&c) {
                        elem_grid[(ez * cells[1] + ey) * cells[0] + ex] = elems.len() as i32;
                        elems.push([ex as u32, ey as u32, ez as u32]);
                    }
                }
            }
        }
        assert!(!elems.is_empty(), "mesh covers no voxel");
        // Activate the 27 lattice nodes of every included element.
        let lat_id = |ix: usize, iy: usize, iz: usize| (iz * nlat[1] + iy) * nlat[0] + ix;
        let mut nodes = Vec::new();
        let mut elem_nodes = Vec::with_capacity(elems.len());
        for e in &elems {
            let mut ids = [0u32; 27];
            for i in 0..27 {
                let (dx, dy, dz) = (i % 3, (i / 3) % 3, i / 9);
                let l = lat_id(
                    2 * e[0] as usize + dx,
                    2 * e[1] as usize + dy,
                    2 * e[2] as usize + dz,
                );
                if node_grid[l] < 0 {
                    node_grid[l] = nodes.len() as i32;
                    nodes.push([
                        origin[0] + (2 * e[0] as usize + dx) as f64 * 0.5 * h,
                        origin[1] + (2 * e[1] as usize + dy) as f64 * 0.5 * h,
                        origin[2] + (2 * e[2] as usize + dz) as f64 * 0.5 * h,
                    ]);
                }
                ids[i] = node_grid[l] as u32;
            }
            elem_nodes.push(ids);
        }
        let rd = ref_data();
        let gauss_rho = elems
            .iter()
            .map(|e| {
                let mut r = [1.0f64; 27];
                for g in 0..27 {
                    let x = [
                        origin[0] + (e[0] as f64 + rd.x[g][0]) * h,
                        origin[1] + (e[1] as f64 + rd.x[g][1]) * h,
                        origin[2] + (e[2] as f64 + rd.x[g][2]) * h,
                    ];
                    r[g] = domain.boundary_dist_point(&x);
                }
                r
            })
            .collect();
        VoxelMesh {
            h,
            origin,
            cells,
            elems,
            elem_nodes,
            nodes,
            gauss_rho,
            elem_grid,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_dofs(&self) -> usize {
        3 * self.nodes.len()
    }

    pub fn volume(&self) -> f64 {
        self.elems.len() as f64 * self.h.powi(3)
    }

    fn gauss_point(&self, e: usize, g: usize) -> [f64; 3] {
        let rd = ref_data();
        let el = &self.elems[e];
        [
            self.origin[0] + (el[0] as f64 + rd.x[g][0]) * self.h,
            self.origin[1] + (el[1] as f64 + rd.x[g][1]) * self.h,
            self.origin[2] + (el[2] as f64 + rd.x[g][2]) * self.h,
        ]
    }

    /// Nodal interpolant of a pointwise vector function.
    pub fn interpolate(&self, mut f: impl FnMut(&[f64; 3]) -> [f64; 3]) -> Vec<f64> {
        let mut v = vec![0.0; self.n_dofs()];
        for (i, x) in self.nodes.iter().enumerate() {
            let y = f(x);
            v[3 * i] = y[0];
            v[3 * i + 1] = y[1];
            v[3 * i + 2] = y[2];
        }
        v
    }

    pub fn interpolate_vecpoly(&self, p: &VecPoly) -> Vec<f64> {
        self.interpolate(|x| {
            let y = p.eval(x);
            [y[0], y[1], y[2]]
        })
    }

    /// Element and local coordinates of a point, if it lies in an active
    /// voxel.
    fn locate(&self, x: &[f64; 3]) -> Option<(usize, [f64; 3])> {
        let mut e = [0usize; 3];
        let mut loc = [0.0; 3];
        for a in 0..3 {
            let t = (x[a] - self.origin[a]) / self.h;
            let mut c = t.floor();
            if c as isize >= self.cells[a] as isize {
                c = self.cells[a] as f64 - 1.0;
            }
            if c < 0.0 {
                return None;
            }
            e[a] = c as usize;
            loc[a] = t - c;
            if !(-1e-12..=1.0 + 1e-12).contains(&loc[a]) {
                return None;
            }
        }
        let id = self.elem_grid[(e[2] * self.cells[1] + e[1]) * self.cells[0] + e[0]];
        (id >= 0).then(|| (id as usize, loc))
    }

    /// Field value at a point inside the mesh.
    pub fn eval_at(&self, v: &[f64], x: &[f64; 3]) -> Option<[f64; 3]> {
        let (e, loc) = self.locate(x)?;
        let (nx, ny, nz) = (shape1(loc[0]), shape1(loc[1]), shape1(loc[2]));
        let mut out = [0.0; 3];
        for i in 0..27 {
            let (ix, iy, iz) = (i % 3, (i / 3) % 3, i / 9);
            let s = nx[ix] * ny[iy] * nz[iz];
            let n = self.elem_nodes[e][i] as usize;
            for a in 0..3 {
                out[a] += s * v[3 * n + a];
            }
        }
        Some(out)
    }

    /// Field gradient `out[a][c] = d v_a / d x_c` at a point.
    pub fn grad_at(&self, v: &[f64], x: &[f64; 3]) -> Option<[[f64; 3]; 3]> {
        let (e, loc) = self.locate(x)?;
        let (nx, ny, nz) = (shape1(loc[0]), shape1(loc[1]), shape1(loc[2]));
        let (dx, dy, dz) = (dshape1(loc[0]), dshape1(loc[1]), dshape1(loc[2]));
        let mut out = [[0.0; 3]; 3];
        for i in 0..27 {
            let (ix, iy, iz) = (i % 3, (i / 3) % 3, i / 9);
            let g = [
                dx[ix] * ny[iy] * nz[iz] / self.h,
                nx[ix] * dy[iy] * nz[iz] / self.h,
                nx[ix] * ny[iy] * dz[iz] / self.h,
            ];
            let n = self.elem_nodes[e][i] as usize;
            for a in 0..3 {
                for c in 0..3 {
                    out[a][c] += v[3 * n + a] * g[c];
                }
            }
        }
        Some(out)
    }
}

/// Quadratic-form values of a discrete field, all weighted by `rho^(2 beta)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FormValues {
    /// `int |Dv|^2`
    pub grad: f64,
    /// `int |l(v)|^2`
    pub lform: f64,
    /// `int |eps(v)|^2`
    pub eps: f64,
    /// `int (div v)^2`
    pub div: f64,
    /// `int |v|^2`
    pub mass: f64,
}

fn forms_from_matrix(d: &[[f64; 3]; 3], val: &[f64; 3], c: f64, acc: &mut FormValues) {
    let mut grad = 0.0;
    let mut eps = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            grad += d[a][b] * d[a][b];
            let e = 0.5 * (d[a][b] + d[b][a]);
            eps += e * e;
        }
    }
    let div = d[0][0] + d[1][1] + d[2][2];
    acc.grad += c * grad;
    acc.eps += c * eps;
    acc.div += c * div * div;
    acc.lform += c * (eps - div * div / 3.0);
    acc.mass += c * (val[0] * val[0] + val[1] * val[1] + val[2] * val[2]);
}

impl VoxelMesh {
    /// All quadratic forms of a nodal field in one element sweep. Element
    /// contributions are summed in element order so results are
    /// reproducible regardless of the thread count.
    pub fn eval_forms(&self, v: &[f64], beta: f64) -> FormValues {
        let rd = ref_data();
        let jac = self.h.powi(3);
        let parts: Vec<FormValues> = (0..self.elems.len())
            .into_par_iter()
            .map(|e| {
                let mut acc = FormValues::default();
                let ids = &self.elem_nodes[e];
                for g in 0..27 {
                    let mut d = [[0.0; 3]; 3];
                    let mut val = [0.0; 3];
                    for i in 0..27 {
                        let n = ids[i] as usize;
                        for a in 0..3 {
                            let x = v[3 * n + a];
                            val[a] += rd.val[g][i] * x;
                            for c in 0..3 {
                                d[a][c] += x * rd.grad[g][i][c] / self.h;
                            }
                        }
                    }
                    let w = rd.w[g] * jac * weight(self.gauss_rho[e][g], beta);
                    forms_from_matrix(&d, &val, w, &mut acc);
                }
                acc
            })
            .collect();
        parts.iter().fold(FormValues::default(), |x, y| FormValues {
            grad: x.grad + y.grad,
            lform: x.lform + y.lform,
            eps: x.eps + y.eps,
            div: x.div + y.div,
            mass: x.mass + y.mass,
        })
    }

    /// Integral of the squared Frobenius norm of an exact matrix
    /// polynomial, by the same element Gauss rule as `poly_forms`.
    pub fn matpoly_sq_integral(&self, m: &MatPoly, beta: f64) -> f64 {
        let rd = ref_data();
        let jac = self.h.powi(3);
        let mut acc = 0.0;
        for e in 0..self.elems.len() {
            for g in 0..27 {
                let x = self.gauss_point(e, g);
                let val = m.eval(&x);
                let mut s = 0.0;
                for row in val.iter().take(3) {
                    for v in row.iter().take(3) {
                        s += v * v;
                    }
                }
                acc += rd.w[g] * jac * weight(self.gauss_rho[e][g], beta) * s;
            }
        }
        acc
    }

    /// Quadratic forms of a closed-form polynomial field, integrated by the
    /// element Gauss rule (exact through cubic components).
    pub fn poly_forms(&self, v: &VecPoly, beta: f64) -> FormValues {
        let rd = ref_data();
        let jac = self.h.powi(3);
        let dv = v.jacobian();
        let mut acc = FormValues::default();
        for e in 0..self.elems.len() {
            for g in 0..27 {
                let x = self.gauss_point(e, g);
                let j = dv.eval(&x);
                let mut d = [[0.0; 3]; 3];
                for a in 0..3 {
                    d[a][..3].copy_from_slice(&j[a][..3]);
                }
                let vv = v.eval(&x);
                let val = [vv[0], vv[1], vv[2]];
                let w = rd.w[g] * jac * weight(self.gauss_rho[e][g], beta);
                forms_from_matrix(&d, &val, w, &mut acc);
            }
        }
        acc
    }
}

fn weight(rho: f64, beta: f64) -> f64 {
    if beta == 0.0 {
        1.0
    } else {
        rho.powf(2.0 * beta)
    }
}

/// Scalar node-by-node sparse matrix, one value per node pair.
pub struct ScalarCsr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

/// Vector-valued sparse matrix with a 3x3 block per node pair,
/// `block[3a + b]` coupling component `a` of the row to `b` of the column.
pub struct BlockCsr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<[f64; 9]>,
}

/// `y = (K (x) I_3) x` for a scalar matrix acting on interleaved dofs.
pub fn apply_scalar3(k: &ScalarCsr, x: &[f64], y: &mut [f64]) {
    y.par_chunks_mut(3)
        .enumerate()
        .for_each(|(i, out)| {
            let mut acc = [0.0; 3];
            for idx in k.row_ptr[i]..k.row_ptr[i + 1] {
                let j = k.cols[idx] as usize;
                let v = k.vals[idx];
                for a in 0..3 {
                    acc[a] += v * x[3 * j + a];
                }
            }
            out.copy_from_slice(&acc);
        });
}

pub fn apply_block(k: &BlockCsr, x: &[f64], y: &mut [f64]) {
    y.par_chunks_mut(3)
        .enumerate()
        .for_each(|(i, out)| {
            let mut acc = [0.0; 3];
            for idx in k.row_ptr[i]..k.row_ptr[i + 1] {
                let j = k.cols[idx] as usize;
                let b = &k.vals[idx];
                for a in 0..3 {
                    acc[a] += b[3 * a] * x[3 * j]
                        + b[3 * a + 1] * x[3 * j + 1]
                        + b[3 * a + 2] * x[3 * j + 2];
                }
            }
            out.copy_from_slice(&acc);
        });
}

impl VoxelMesh {
    /// Shared node-adjacency pattern of all assembled operators.
    fn pattern(&self) -> (Vec<usize>, Vec<u32>) {
        let n = self.n_nodes();
        let mut rows: Vec<Vec<u32>> = vec![Vec::new(); n];
        for ids in &self.elem_nodes {
            for &i in ids {
                rows[i as usize].extend_from_slice(ids);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0usize);
        let mut cols = Vec::new();
        for r in &mut rows {
            r.sort_unstable();
            r.dedup();
            cols.extend_from_slice(r);
            row_ptr.push(cols.len());
        }
        (row_ptr, cols)
    }

    /// Per-element channel matrix `sum_g rho^(2 beta) ch_g` in reference
    /// scaling. With `beta = 0` every element shares one matrix.
    fn element_channels(&self, beta: f64) -> (Vec<[f64; CH]>, bool) {
        let ch = ref_channels();
        let contract = |rho: &[f64; 27]| {
            let mut e = vec![[0.0; CH]; 27 * 27];
            for g in 0..27 {
                let w = weight(rho[g], beta);
                for p in 0..27 * 27 {
                    let src = &ch[g * 27 * 27 + p];
                    let dst = &mut e[p];
                    for c in 0..CH {
                        dst[c] += w * src[c];
                    }
                }
            }
            e
        };
        if beta == 0.0 {
            (contract(&[1.0; 27]), true)
        } else {
            let mut all = Vec::with_capacity(self.elems.len() * 27 * 27);
            for rho in &self.gauss_rho {
                all.extend_from_slice(&contract(rho));
            }
            (all, false)
        }
    }

    fn assemble_scalar(&self, beta: f64, channel: impl Fn(&[f64; CH]) -> f64) -> ScalarCsr {
        let (row_ptr, cols) = self.pattern();
        let mut vals = vec![0.0; cols.len()];
        let (chans, shared) = self.element_channels(beta);
        for (e, ids) in self.elem_nodes.iter().enumerate() {
            let base = if shared { 0 } else { e * 27 * 27 };
            for (i, &ni) in ids.iter().enumerate() {
                let r = ni as usize;
                let row = &cols[row_ptr[r]..row_ptr[r + 1]];
                for (j, &nj) in ids.iter().enumerate() {
                    let k = row.binary_search(&nj).expect("pattern covers elements");
                    vals[row_ptr[r] + k] += channel(&chans[base + i * 27 + j]);
                }
            }
        }
        ScalarCsr {
            n: self.n_nodes(),
            row_ptr,
            cols,
            vals,
        }
    }

    /// `int grad(u) . grad(v) rho^(2 beta)` per scalar node pair.
    pub fn assemble_stiffness(&self, beta: f64) -> ScalarCsr {
        let h = self.h;
        self.assemble_scalar(beta, move |c| h * c[0])
    }

    /// `int u v rho^(2 beta)` per scalar node pair.
    pub fn assemble_mass(&self, beta: f64) -> ScalarCsr {
        let h3 = self.h.powi(3);
        self.assemble_scalar(beta, move |c| h3 * c[10])
    }

    /// Trace-free strain product `int l(u) : l(v) rho^(2 beta)` as 3x3 node
    /// blocks.
    pub fn assemble_lform(&self, beta: f64) -> BlockCsr {
        let (row_ptr, cols) = self.pattern();
        let mut vals = vec![[0.0; 9]; cols.len()];
        let (chans, shared) = self.element_channels(beta);
        let h = self.h;
        for (e, ids) in self.elem_nodes.iter().enumerate() {
            let base = if shared { 0 } else { e * 27 * 27 };
            for (i, &ni) in ids.iter().enumerate() {
                let r = ni as usize;
                let row = &cols[row_ptr[r]..row_ptr[r + 1]];
                for (j, &nj) in ids.iter().enumerate() {
                    let k = row.binary_search(&nj).expect("pattern covers elements");
                    let c = &chans[base + i * 27 + j];
                    let block = &mut vals[row_ptr[r] + k];
                    for a in 0..3 {
                        for b in 0..3 {
                            // l(u):l(v) = eps:eps - div div / 3 with
                            // eps:eps = (delta_ab dot + o_ba) / 2.
                            let o_ab = c[1 + 3 * a + b];
                            let o_ba = c[1 + 3 * b + a];
                            let mut s = 0.5 * o_ba - o_ab / 3.0;
                            if a == b {
                                s += 0.5 * c[0];
                            }
                            block[3 * a + b] += h * s;
                        }
                    }
                }
            }
        }
        BlockCsr {
            n: self.n_nodes(),
            row_ptr,
            cols,
            vals,
        }
    }

    /// Load vectors `y_j[dof] = int D(basis_dof) : gen_j rho^(2 beta)` for
    /// the seven gradient-space generators, and their Gram matrix.
    pub fn gradient_pairings(&self, beta: f64) -> (Vec<Vec<f64>>, DMatrix<f64>) {
        let rd = ref_data();
        let m = 7;
        let jac = self.h.powi(3);
        let mut y = vec![vec![0.0; self.n_dofs()]; m];
        let mut gram = DMatrix::<f64>::zeros(m, m);
        let mut gens = vec![[0.0; 9]; m];
        for (e, ids) in self.elem_nodes.iter().enumerate() {
            for g in 0..27 {
                let x = self.gauss_point(e, g);
                let w = rd.w[g] * jac * weight(self.gauss_rho[e][g], beta);
                for (j, gen) in gens.iter_mut().enumerate() {
                    eval_generator(3, j, &x, gen);
                }
                for j in 0..m {
                    for k in j..m {
                        let dot: f64 =
                            gens[j].iter().zip(&gens[k]).map(|(p, q)| p * q).sum();
                        gram[(j, k)] += w * dot;
                    }
                }
                for (i, &ni) in ids.iter().enumerate() {
                    let gr = [
                        rd.grad[g][i][0] / self.h,
                        rd.grad[g][i][1] / self.h,
                        rd.grad[g][i][2] / self.h,
                    ];
                    for (j, gen) in gens.iter().enumerate() {
                        for a in 0..3 {
                            let row = &gen[3 * a..3 * a + 3];
                            y[j][3 * ni as usize + a] +=
                                w * (gr[0] * row[0] + gr[1] * row[1] + gr[2] * row[2]);
                        }
                    }
                }
            }
        }
        for j in 0..m {
            for k in 0..j {
                gram[(j, k)] = gram[(k, j)];
            }
        }
        (y, gram)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::kernel_basis;
    use crate::fields::poly::{trace_free_strain, Poly};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_quadratic(rng: &mut ChaCha8Rng) -> VecPoly {
        let mut v = VecPoly::zero(3);
        for c in 0..3 {
            let mut p = Poly::constant(3, rng.gen_range(-1.0..1.0));
            for a in 0..3 {
                p = p.add(&Poly::var(3, a).scale(rng.gen_range(-1.0..1.0)));
                for b in a..3 {
                    let q = Poly::var(3, a).mul(&Poly::var(3, b));
                    p = p.add(&q.scale(rng.gen_range(-1.0..1.0)));
                }
            }
            v.comps[c] = p;
        }
        v
    }

    #[test]
    fn unit_cube_and_l_shape_have_expected_volume() {
        let cube = Domain::builtin("unit_cube").unwrap();
        let m = VoxelMesh::build(&cube, 0.25);
        assert_eq!(m.elems.len(), 64);
        assert!((m.volume() - 1.0).abs() < 1e-14);
        assert_eq!(m.n_nodes(), 9 * 9 * 9);

        let l = Domain::builtin("l_shape3d").unwrap();
        let m = VoxelMesh::build(&l, 0.25);
        assert!((m.volume() - 0.75).abs() < 1e-14);
    }

    #[test]
    fn quadratic_fields_are_reproduced_exactly() {
        let dom = Domain::builtin("unit_cube").unwrap();
        let mesh = VoxelMesh::build(&dom, 0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_quadratic(&mut rng);
        let nodal = mesh.interpolate_vecpoly(&v);
        let dv = v.jacobian();
        for _ in 0..50 {
            let x = [
                rng.gen_range(0.01..0.99),
                rng.gen_range(0.01..0.99),
                rng.gen_range(0.01..0.99),
            ];
            let got = mesh.eval_at(&nodal, &x).unwrap();
            let want = v.eval(&x);
            for a in 0..3 {
                assert!((got[a] - want[a]).abs() < 1e-12, "value mismatch at {x:?}");
            }
            let gd = mesh.grad_at(&nodal, &x).unwrap();
            let wd = dv.eval(&x);
            for a in 0..3 {
                for c in 0..3 {
                    assert!((gd[a][c] - wd[a][c]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences_of_the_interpolant() {
        let dom = Domain::builtin("unit_cube").unwrap();
        let mesh = VoxelMesh::build(&dom, 0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<f64> = (0..mesh.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let step = 1e-6;
        for _ in 0..20 {
            // Stay inside one element so the interpolant is smooth across
            // the stencil.
            let x = [
                rng.gen_range(0.3..0.45),
                rng.gen_range(0.3..0.45),
                rng.gen_range(0.3..0.45),
            ];
            let g = mesh.grad_at(&v, &x).unwrap();
            for c in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[c] += step;
                xm[c] -= step;
                let fp = mesh.eval_at(&v, &xp).unwrap();
                let fm = mesh.eval_at(&v, &xm).unwrap();
                for a in 0..3 {
                    let fd = (fp[a] - fm[a]) / (2.0 * step);
                    assert!(
                        (g[a][c] - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                        "axis {c}: {} vs {fd}",
                        g[a][c]
                    );
                }
            }
        }
    }

    #[test]
    fn discrete_forms_match_closed_form_integrals() {
        let dom = Domain::builtin("unit_cube").unwrap();
        let mesh = VoxelMesh::build(&dom, 0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let v = random_quadratic(&mut rng);
            let nodal = mesh.interpolate_vecpoly(&v);
            let got = mesh.eval_forms(&nodal, 0.0);
            let lo = [0.0; 3];
            let hi = [1.0; 3];
            let dv = v.jacobian();
            let want_grad = dv.frobenius(&dv).integrate_box(&lo, &hi);
            let eps = dv.sym();
            let want_eps = eps.frobenius(&eps).integrate_box(&lo, &hi);
            let div = dv.trace();
            let want_div = div.mul(&div).integrate_box(&lo, &hi);
            let l = trace_free_strain(&v);
            let want_l = l.frobenius(&l).integrate_box(&lo, &hi);
            let scale = want_grad.abs().max(1.0);
            assert!((got.grad - want_grad).abs() < 1e-11 * scale);
            assert!((got.eps - want_eps).abs() < 1e-11 * scale);
            assert!((got.div - want_div).abs() < 1e-11 * scale);
            assert!((got.lform - want_l).abs() < 1e-11 * scale);
            let pf = mesh.poly_forms(&v, 0.0);
            assert!((pf.grad - want_grad).abs() < 1e-11 * scale);
            assert!((pf.lform - want_l).abs() < 1e-11 * scale);
        }
    }

    #[test]
    fn assembled_operators_agree_with_form_evaluation() {
        let dom = Domain::builtin("unit_cube").unwrap();
        let mesh = VoxelMesh::build(&dom, 0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for beta in [0.0, 1.0] {
            let stiff = mesh.assemble_stiffness(beta);
            let mass = mesh.assemble_mass(beta);
            let lf = mesh.assemble_lform(beta);
            let x: Vec<f64> = (0..mesh.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let want = mesh.eval_forms(&x, beta);
            let mut y = vec![0.0; mesh.n_dofs()];
            apply_scalar3(&stiff, &x, &mut y);
            let grad: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            apply_scalar3(&mass, &x, &mut y);
            let m: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            apply_block(&lf, &x, &mut y);
            let l: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            let scale = want.grad.max(1.0);
            assert!((grad - want.grad).abs() < 1e-10 * scale, "beta {beta}");
            assert!((m - want.mass).abs() < 1e-10 * scale);
            assert!((l - want.lform).abs() < 1e-10 * scale);
            assert!(l >= 0.0 && want.lform <= want.eps + 1e-12 * scale);
        }
    }

    #[test]
    fn kernel_interpolants_have_zero_strain_energy() {
        let dom = Domain::builtin("l_shape3d").unwrap();
        let mesh = VoxelMesh::build(&dom, 0.25);
        for (k, f) in kernel_basis(3).iter().enumerate() {
            let nodal = mesh.interpolate_vecpoly(f);
            let forms = mesh.eval_forms(&nodal, 0.0);
            assert!(
                forms.lform <= 1e-13 * forms.grad.max(1.0),
                "kernel field {k} leaks strain energy {}",
                forms.lform
            );
        }
    }

    #[test]
    fn generator_loads_reproduce_the_gram_matrix() {
        let dom = Domain::builtin("unit_cube").unwrap();
        let mesh = VoxelMesh::build(&dom, 0.25);
        let (y, gram) = mesh.gradient_pairings(0.0);
        // Fields whose gradients are exactly the generators.
        let kb = kernel_basis(3);
        // kernel_basis order: translations (3), then the gradient fields.
        let grad_fields = &kb[3..10];
        for (k, f) in grad_fields.iter().enumerate() {
            let nodal = mesh.interpolate_vecpoly(f);
            for j in 0..7 {
                let dot: f64 = y[j].iter().zip(&nodal).map(|(a, b)| a * b).sum();
                let want = gram[(j, k)];
                assert!(
                    (dot - want).abs() < 1e-10 * want.abs().max(1.0),
                    "({j},{k}): {dot} vs {want}"
                );
            }
        }
        // Spot-check two closed-form entries on the unit cube.
        let two_vol = 2.0 * mesh.volume();
        assert!((gram[(0, 0)] - two_vol).abs() < 1e-12 * two_vol);
        let id_idx = 3;
        assert!((gram[(id_idx, id_idx)] - 3.0 * mesh.volume()).abs() < 1e-12 * two_vol);
    }
}
