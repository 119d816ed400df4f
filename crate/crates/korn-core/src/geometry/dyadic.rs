//! Dyadic grid and cube arithmetic.
//!
//! Every cube is `origin + scale * 2^-level * [k, k+1]^n` with `scale` a power
//! of two and `origin` on a coarse dyadic lattice, so all corner coordinates
//! are exact in f64 and cross-level adjacency can be decided in integers.

use serde::{Deserialize, Serialize};

/// Maximum ambient dimension supported by the geometric kernels.
pub const MAX_DIM: usize = 4;

/// Fractional bits of the origin lattice; origins are multiples of 2^-3.
const ORIGIN_BITS: u32 = 3;

/// Identifier of a dyadic cube relative to a [`GridBase`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct CubeId {
    pub level: u8,
    pub idx: [i32; MAX_DIM],
}

impl CubeId {
    pub fn new(level: u8, idx: &[i32]) -> Self {
        let mut full = [0i32; MAX_DIM];
        full[..idx.len()].copy_from_slice(idx);
        CubeId { level, idx: full }
    }

    /// Child cube in direction `bits` (one bit per axis).
    pub fn child(&self, dim: usize, bits: usize) -> Self {
        let mut idx = self.idx;
        for (a, v) in idx.iter_mut().enumerate().take(dim) {
            *v = (*v << 1) + ((bits >> a) & 1) as i32;
        }
        CubeId { level: self.level + 1, idx }
    }
}

/// Base lattice of a domain: a power-of-two scale anchored at a coarse
/// dyadic origin whose level-0 cube contains the domain.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GridBase {
    pub dim: usize,
    /// Lower corner of the level-0 cube, multiples of 1/8.
    pub origin: Vec<f64>,
    /// Side of the level-0 cube, a power of two.
    pub scale: f64,
}

impl GridBase {
    /// Smallest grid whose root cube covers `[lo, hi]`.
    pub fn covering(lo: &[f64], hi: &[f64]) -> Self {
        let dim = lo.len();
        let q = f64::from(1u32 << ORIGIN_BITS);
        let origin: Vec<f64> = lo.iter().map(|&v| (v * q).floor() / q).collect();
        let extent = hi
            .iter()
            .zip(&origin)
            .map(|(&h, &o)| h - o)
            .fold(0.0f64, f64::max);
        let mut scale = 1.0f64;
        while scale < extent {
            scale *= 2.0;
        }
        while scale * 0.5 >= extent && extent > 0.0 {
            scale *= 0.5;
        }
        GridBase { dim, origin, scale }
    }

    pub fn side(&self, level: u8) -> f64 {
        self.scale * f64::exp2(-f64::from(level))
    }

    pub fn diam(&self, level: u8) -> f64 {
        self.side(level) * (self.dim as f64).sqrt()
    }

    pub fn lo(&self, c: &CubeId) -> [f64; MAX_DIM] {
        let s = self.side(c.level);
        let mut out = [0.0; MAX_DIM];
        for a in 0..self.dim {
            out[a] = self.origin[a] + f64::from(c.idx[a]) * s;
        }
        out
    }

    pub fn hi(&self, c: &CubeId) -> [f64; MAX_DIM] {
        let s = self.side(c.level);
        let mut out = [0.0; MAX_DIM];
        for a in 0..self.dim {
            out[a] = self.origin[a] + f64::from(c.idx[a] + 1) * s;
        }
        out
    }

    pub fn center(&self, c: &CubeId) -> [f64; MAX_DIM] {
        let s = self.side(c.level);
        let mut out = [0.0; MAX_DIM];
        for a in 0..self.dim {
            out[a] = self.origin[a] + (f64::from(c.idx[a]) + 0.5) * s;
        }
        out
    }

    pub fn volume(&self, c: &CubeId) -> f64 {
        self.side(c.level).powi(self.dim as i32)
    }

    /// Cube bounds in integer units of `scale * 2^-ref`; requires `ref >= level`.
    pub fn units(&self, c: &CubeId, r#ref: u8) -> ([i64; MAX_DIM], i64) {
        debug_assert!(r#ref >= c.level);
        let shift = u32::from(r#ref - c.level);
        let side = 1i64 << shift;
        let mut lo = [0i64; MAX_DIM];
        for a in 0..self.dim {
            lo[a] = i64::from(c.idx[a]) << shift;
        }
        (lo, side)
    }

    /// Bounds of the `(1 + 2*eps)`-dilated cube with `eps = 1/16`, in integer
    /// units of `scale * 2^-(ref+4)`. Used for the 9/8-extended cubes.
    pub fn extended_units(&self, c: &CubeId, r#ref: u8) -> ([i64; MAX_DIM], [i64; MAX_DIM]) {
        let (lo, side) = self.units(c, r#ref);
        let mut elo = [0i64; MAX_DIM];
        let mut ehi = [0i64; MAX_DIM];
        for a in 0..self.dim {
            elo[a] = (lo[a] << 4) - side;
            ehi[a] = ((lo[a] + side) << 4) + side;
        }
        (elo, ehi)
    }

    /// Extended (9/8-dilated, open) cube bounds in f64; exact because the
    /// margin side/16 is dyadic.
    pub fn extended_bounds(&self, c: &CubeId) -> ([f64; MAX_DIM], [f64; MAX_DIM]) {
        let lo = self.lo(c);
        let hi = self.hi(c);
        let m = self.side(c.level) / 16.0;
        let mut elo = [0.0; MAX_DIM];
        let mut ehi = [0.0; MAX_DIM];
        for a in 0..self.dim {
            elo[a] = lo[a] - m;
            ehi[a] = hi[a] + m;
        }
        (elo, ehi)
    }
}

/// How two closed dyadic cubes at possibly different levels meet.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Contact {
    Disjoint,
    /// Closed cubes intersect and interiors are disjoint; `full_face` is true
    /// when the intersection equals an entire (n-1)-face of the smaller cube.
    Touch { full_face: bool },
    /// Interiors overlap (one contains part of the other).
    Overlap,
}

/// Classify the contact of two cubes on a common grid.
pub fn contact(grid: &GridBase, a: &CubeId, b: &CubeId) -> Contact {
    let r#ref = a.level.max(b.level);
    let (alo, aside) = grid.units(a, r#ref);
    let (blo, bside) = grid.units(b, r#ref);
    let small = aside.min(bside);
    let mut degenerate = 0usize;
    let mut full_axes = 0usize;
    for ax in 0..grid.dim {
        let lo = alo[ax].max(blo[ax]);
        let hi = (alo[ax] + aside).min(blo[ax] + bside);
        if hi < lo {
            return Contact::Disjoint;
        }
        if hi == lo {
            degenerate += 1;
        } else if hi - lo == small {
            full_axes += 1;
        }
    }
    if degenerate == 0 {
        return Contact::Overlap;
    }
    Contact::Touch {
        full_face: degenerate == 1 && full_axes == grid.dim - 1,
    }
}
