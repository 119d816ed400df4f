//! Geometric multigrid V-cycle on the voxel node lattice, used as a
//! preconditioner for the strain eigenproblems.
//!
//! Each level carries a shifted graph Laplacian `s * L + s^3 * I` on the
//! active lattice points, a consistent finite-difference picture of
//! `-laplace + 1` at lattice spacing `s`. The cycle (fixed damped-Jacobi
//! sweeps, trilinear transfer, direct coarsest solve) is a symmetric
//! positive linear operator, which block eigensolvers require. Everything
//! runs serially in lattice order, so applications are deterministic.

use super::mesh::VoxelMesh;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

struct Level {
    dims: [usize; 3],
    active: Vec<bool>,
    /// Inverse diagonal of the level operator, zero on inactive points.
    diag_inv: Vec<f64>,
    /// Lattice spacing.
    scale: f64,
}

impl Level {
    fn idx(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// `out = (s L + s^3) u` on active points.
    fn op_apply(&self, u: &[f64], out: &mut [f64]) {
        let [dx, dy, dz] = self.dims;
        let s = self.scale;
        let s3 = s * s * s;
        for z in 0..dz {
            for y in 0..dy {
                for x in 0..dx {
                    let i = self.idx(x, y, z);
                    if !self.active[i] {
                        out[i] = 0.0;
                        continue;
                    }
                    let mut acc = s3 * u[i];
                    let mut nb = |j: usize| {
                        if self.active[j] {
                            acc += s * (u[i] - u[j]);
                        }
                    };
                    if x > 0 {
                        nb(i - 1);
                    }
                    if x + 1 < dx {
                        nb(i + 1);
                    }
                    if y > 0 {
                        nb(i - dx);
                    }
                    if y + 1 < dy {
                        nb(i + dx);
                    }
                    if z > 0 {
                        nb(i - dx * dy);
                    }
                    if z + 1 < dz {
                        nb(i + dx * dy);
                    }
                    out[i] = acc;
                }
            }
        }
    }
}

/// Per-axis trilinear transfer stencil of a fine lattice index.
fn parents(f: usize) -> ([(usize, f64); 2], usize) {
    if f % 2 == 0 {
        ([(f / 2, 1.0), (0, 0.0)], 1)
    } else {
        ([(f / 2, 0.5), (f / 2 + 1, 0.5)], 2)
    }
}

pub struct LatticeMg {
    levels: Vec<Level>,
    coarse_chol: Cholesky<f64, Dyn>,
    /// Lattice index to coarsest dense unknown, -1 when inactive.
    coarse_ids: Vec<i32>,
    /// Level-0 lattice index of every mesh node.
    node_lattice: Vec<usize>,
    omega: f64,
    sweeps: usize,
}

impl LatticeMg {
    pub fn new(mesh: &VoxelMesh) -> LatticeMg {
        let dims = [
            2 * mesh.cells[0] + 1,
            2 * mesh.cells[1] + 1,
            2 * mesh.cells[2] + 1,
        ];
        let mut active = vec![false; dims[0] * dims[1] * dims[2]];
        let mut node_lattice = vec![usize::MAX; mesh.n_nodes()];
        for (e, ids) in mesh.elems.iter().zip(&mesh.elem_nodes) {
            for (i, &node) in ids.iter().enumerate() {
                let (ox, oy, oz) = (i % 3, (i / 3) % 3, i / 9);
                let l = ((2 * e[2] as usize + oz) * dims[1] + 2 * e[1] as usize + oy) * dims[0]
                    + 2 * e[0] as usize
                    + ox;
                active[l] = true;
                node_lattice[node as usize] = l;
            }
        }
        let mut levels = vec![make_level(dims, active, mesh.h * 0.5)];
        while levels.last().unwrap().dims.iter().any(|&d| d > 9) {
            let fine = levels.last().unwrap();
            let cd = [
                fine.dims[0] / 2 + 1,
                fine.dims[1] / 2 + 1,
                fine.dims[2] / 2 + 1,
            ];
            let mut ca = vec![false; cd[0] * cd[1] * cd[2]];
            for z in 0..cd[2] {
                for y in 0..cd[1] {
                    for x in 0..cd[0] {
                        ca[(z * cd[1] + y) * cd[0] + x] =
                            fine.active[fine.idx(2 * x, 2 * y, 2 * z)];
                    }
                }
            }
            let scale = fine.scale * 2.0;
            levels.push(make_level(cd, ca, scale));
        }

        // Direct factorization on the coarsest active set.
        let last = levels.last().unwrap();
        let mut coarse_ids = vec![-1i32; last.len()];
        let mut n = 0;
        for (i, &a) in last.active.iter().enumerate() {
            if a {
                coarse_ids[i] = n as i32;
                n += 1;
            }
        }
        assert!(n > 0, "coarsest level lost the whole domain");
        let mut a = DMatrix::<f64>::zeros(n, n);
        let s = last.scale;
        let [dx, dy, dz] = last.dims;
        for z in 0..dz {
            for y in 0..dy {
                for x in 0..dx {
                    let i = last.idx(x, y, z);
                    if coarse_ids[i] < 0 {
                        continue;
                    }
                    let r = coarse_ids[i] as usize;
                    a[(r, r)] = s * s * s;
                    let mut nb = |j: usize| {
                        if coarse_ids[j] >= 0 {
                            a[(r, r)] += s;
                            a[(r, coarse_ids[j] as usize)] -= s;
                        }
                    };
                    if x > 0 {
                        nb(i - 1);
                    }
                    if x + 1 < dx {
                        nb(i + 1);
                    }
                    if y > 0 {
                        nb(i - dx);
                    }
                    if y + 1 < dy {
                        nb(i + dx);
                    }
                    if z > 0 {
                        nb(i - dx * dy);
                    }
                    if z + 1 < dz {
                        nb(i + dx * dy);
                    }
                }
            }
        }
        let coarse_chol = Cholesky::new(a).expect("shifted Laplacian is positive definite");
        LatticeMg {
            levels,
            coarse_chol,
            coarse_ids,
            node_lattice,
            omega: 0.7,
            sweeps: 2,
        }
    }

    fn smooth(&self, l: usize, r: &[f64], e: &mut [f64], t: &mut [f64]) {
        let lev = &self.levels[l];
        for _ in 0..self.sweeps {
            lev.op_apply(e, t);
            for i in 0..e.len() {
                e[i] += self.omega * lev.diag_inv[i] * (r[i] - t[i]);
            }
        }
    }

    fn vcycle(&self, l: usize, r: &[f64]) -> Vec<f64> {
        let lev = &self.levels[l];
        if l + 1 == self.levels.len() {
            let n = self.coarse_chol.l().nrows();
            let mut rhs = DVector::zeros(n);
            for (i, &id) in self.coarse_ids.iter().enumerate() {
                if id >= 0 {
                    rhs[id as usize] = r[i];
                }
            }
            let sol = self.coarse_chol.solve(&rhs);
            let mut e = vec![0.0; lev.len()];
            for (i, &id) in self.coarse_ids.iter().enumerate() {
                if id >= 0 {
                    e[i] = sol[id as usize];
                }
            }
            return e;
        }
        let mut e = vec![0.0; lev.len()];
        let mut t = vec![0.0; lev.len()];
        self.smooth(l, r, &mut e, &mut t);

        lev.op_apply(&e, &mut t);
        let next = &self.levels[l + 1];
        let mut rc = vec![0.0; next.len()];
        let [dx, dy, dz] = lev.dims;
        for z in 0..dz {
            for y in 0..dy {
                for x in 0..dx {
                    let i = lev.idx(x, y, z);
                    if !lev.active[i] {
                        continue;
                    }
                    let res = r[i] - t[i];
                    if res == 0.0 {
                        continue;
                    }
                    let (px, nx) = parents(x);
                    let (py, ny) = parents(y);
                    let (pz, nz) = parents(z);
                    for &(cz, wz) in &pz[..nz] {
                        for &(cy, wy) in &py[..ny] {
                            for &(cx, wx) in &px[..nx] {
                                let j = next.idx(cx, cy, cz);
                                if next.active[j] {
                                    rc[j] += wx * wy * wz * res;
                                }
                            }
                        }
                    }
                }
            }
        }
        let ec = self.vcycle(l + 1, &rc);
        for z in 0..dz {
            for y in 0..dy {
                for x in 0..dx {
                    let i = lev.idx(x, y, z);
                    if !lev.active[i] {
                        continue;
                    }
                    let (px, nx) = parents(x);
                    let (py, ny) = parents(y);
                    let (pz, nz) = parents(z);
                    let mut v = 0.0;
                    for &(cz, wz) in &pz[..nz] {
                        for &(cy, wy) in &py[..ny] {
                            for &(cx, wx) in &px[..nx] {
                                let j = next.idx(cx, cy, cz);
                                if next.active[j] {
                                    v += wx * wy * wz * ec[j];
                                }
                            }
                        }
                    }
                    e[i] += v;
                }
            }
        }
        self.smooth(l, r, &mut e, &mut t);
        e
    }

    /// Applies one V-cycle per component of an interleaved vector field.
    pub fn apply_vector(&self, r: &[f64], out: &mut [f64]) {
        let n0 = self.levels[0].len();
        for comp in 0..3 {
            let mut lat = vec![0.0; n0];
            for (node, &l) in self.node_lattice.iter().enumerate() {
                lat[l] = r[3 * node + comp];
            }
            let e = self.vcycle(0, &lat);
            for (node, &l) in self.node_lattice.iter().enumerate() {
                out[3 * node + comp] = e[l];
            }
        }
    }
}

fn make_level(dims: [usize; 3], active: Vec<bool>, scale: f64) -> Level {
    let mut lev = Level {
        dims,
        active,
        diag_inv: Vec::new(),
        scale,
    };
    let [dx, dy, dz] = lev.dims;
    let mut diag_inv = vec![0.0; lev.len()];
    for z in 0..dz {
        for y in 0..dy {
            for x in 0..dx {
                let i = lev.idx(x, y, z);
                if !lev.active[i] {
                    continue;
                }
                let mut deg = 0.0;
                let mut nb = |j: usize| {
                    if lev.active[j] {
                        deg += 1.0;
                    }
                };
                if x > 0 {
                    nb(i - 1);
                }
                if x + 1 < dx {
                    nb(i + 1);
                }
                if y > 0 {
                    nb(i - dx);
                }
                if y + 1 < dy {
                    nb(i + dx);
                }
                if z > 0 {
                    nb(i - dx * dy);
                }
                if z + 1 < dz {
                    nb(i + dx * dy);
                }
                diag_inv[i] = 1.0 / (scale * deg + scale * scale * scale);
            }
        }
    }
    lev.diag_inv = diag_inv;
    lev
}
