//! Whitney covers: families of dyadic cubes filling a domain from inside,
//! with diameter comparable to boundary distance.
//!
//! A cube of level `k` is accepted when it contains points whose boundary
//! distance exceeds twice its diameter while its own distance to the boundary
//! stays below four diameters, and its center lies in the domain. Descent
//! stops at accepted cubes, so interiors are pairwise disjoint, every
//! accepted cube `Q` satisfies `diam(Q) <= dist(Q, boundary) <= 4 diam(Q)`,
//! and the union covers every interior point whose boundary distance exceeds
//! `2 sqrt(dim) * scale * 2^-max_level`.

use crate::geometry::dyadic::{contact, Contact, CubeId, GridBase, MAX_DIM};
use crate::geometry::Domain;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct NeighborEdge {
    /// Indices into `cubes`, `a < b`.
    pub a: usize,
    pub b: usize,
    /// Whole face of the finer cube lies on a face of the coarser one.
    pub full_face: bool,
}

#[derive(Clone, Debug)]
pub struct WhitneyCover {
    pub grid: GridBase,
    pub dim: usize,
    pub max_level: u8,
    /// Sorted by (level, index).
    pub cubes: Vec<CubeId>,
    /// Boundary distance per cube (NaN for synthetic covers without a domain).
    pub dists: Vec<f64>,
    /// Touching pairs, sorted.
    pub edges: Vec<NeighborEdge>,
    index: HashMap<CubeId, usize>,
}

impl WhitneyCover {
    pub fn build(domain: &Domain, max_level: u8) -> Self {
        assert!(max_level <= 24, "index arithmetic assumes level <= 24");
        let grid = domain.grid.clone();
        let dim = domain.dim;
        let mut accepted: Vec<CubeId> = Vec::new();
        let mut stack = vec![CubeId::new(0, &[0; MAX_DIM])];
        while let Some(c) = stack.pop() {
            let lo = grid.lo(&c);
            let hi = grid.hi(&c);
            let mut center = [0.0; MAX_DIM];
            for a in 0..dim {
                center[a] = 0.5 * (lo[a] + hi[a]);
            }
            let inside = domain.contains(&center[..dim]);
            let dmin = domain.boundary_dist_box(&lo[..dim], &hi[..dim]);
            if !inside {
                if dmin > 0.0 {
                    // The cube misses the boundary, so it lies wholly outside.
                    continue;
                }
            } else {
                let diam = grid.diam(c.level);
                if dmin > 4.0 * diam {
                    // Deep interior relative to this level; an ancestor layer
                    // already covered it, nothing below can be accepted.
                    continue;
                }
                if dmin > 0.0 {
                    // Some point must see the boundary beyond two diameters.
                    let accept = if dmin + diam <= 2.0 * diam {
                        false
                    } else if domain.boundary_dist_point(&center[..dim]) > 2.0 * diam {
                        true
                    } else {
                        domain.max_dist_exceeds(&lo[..dim], &hi[..dim], 2.0 * diam)
                    };
                    if accept {
                        accepted.push(c);
                        continue;
                    }
                }
            }
            if c.level < max_level {
                for b in (0..1u32 << dim).rev() {
                    stack.push(c.child(dim, b as usize));
                }
            }
        }
        accepted.sort();
        Self::assemble(grid, dim, max_level, accepted, None)
    }

    /// Cover from an explicit cube list (synthetic fixtures). Boundary
    /// distances are NaN until attached via [`WhitneyCover::with_dists`].
    pub fn from_cubes(grid: GridBase, dim: usize, cubes: Vec<CubeId>) -> Self {
        let mut cubes = cubes;
        cubes.sort();
        cubes.dedup();
        let max_level = cubes.iter().map(|c| c.level).max().unwrap_or(0);
        Self::assemble(grid, dim, max_level, cubes, None)
    }

    pub fn with_dists(mut self, domain: &Domain) -> Self {
        self.dists = self
            .cubes
            .iter()
            .map(|c| {
                let lo = self.grid.lo(c);
                let hi = self.grid.hi(c);
                domain.boundary_dist_box(&lo[..self.dim], &hi[..self.dim])
            })
            .collect();
        self
    }

    fn assemble(
        grid: GridBase,
        dim: usize,
        max_level: u8,
        cubes: Vec<CubeId>,
        dists: Option<Vec<f64>>,
    ) -> Self {
        let index: HashMap<CubeId, usize> =
            cubes.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        let edges = connect(&grid, dim, &cubes, &index, 2).0;
        let dists = dists.unwrap_or_else(|| vec![f64::NAN; cubes.len()]);
        WhitneyCover {
            grid,
            dim,
            max_level,
            cubes,
            dists,
            edges,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn index_of(&self, c: &CubeId) -> Option<usize> {
        self.index.get(c).copied()
    }

    /// Cube of the cover containing `x`, if any.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        for level in 0..=self.max_level {
            let side = self.grid.side(level);
            let mut idx = [0i32; MAX_DIM];
            for a in 0..self.dim {
                let t = ((x[a] - self.grid.origin[a]) / side).floor();
                if t < i32::MIN as f64 || t > i32::MAX as f64 {
                    return None;
                }
                idx[a] = t as i32;
            }
            if let Some(&i) = self.index.get(&CubeId::new(level, &idx)) {
                return Some(i);
            }
        }
        None
    }

    /// Minimal boundary distance guaranteeing coverage by the sieve.
    pub fn coverage_threshold(&self) -> f64 {
        2.0 * self.grid.diam(self.max_level)
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.cubes.len()];
        for e in &self.edges {
            adj[e.a].push(e.b);
            adj[e.b].push(e.a);
        }
        adj
    }

    /// Number of expanded cubes (open 9/8 dilations) containing `x`, given
    /// that `x` lies in cube `i` of the cover. The dilation margin is below
    /// one sixteenth of a side, so only `i` and its touching neighbors
    /// qualify.
    pub fn expanded_overlap_count(&self, x: &[f64], i: usize, adj: &[Vec<usize>]) -> usize {
        let mut count = 0;
        for &j in std::iter::once(&i).chain(adj[i].iter()) {
            let (elo, ehi) = self.grid.extended_bounds(&self.cubes[j]);
            if (0..self.dim).all(|a| elo[a] < x[a] && x[a] < ehi[a]) {
                count += 1;
            }
        }
        count
    }

    pub fn rows(&self) -> Vec<CubeRow> {
        self.cubes
            .iter()
            .zip(&self.dists)
            .map(|(c, &d)| {
                let lo = self.grid.lo(c);
                let hi = self.grid.hi(c);
                CubeRow {
                    level: c.level,
                    idx: c.idx[..self.dim].to_vec(),
                    lo: lo[..self.dim].to_vec(),
                    hi: hi[..self.dim].to_vec(),
                    dist: d,
                    ratio: d / self.grid.diam(c.level),
                }
            })
            .collect()
    }

    /// Structural audit against the generating domain.
    pub fn audit(&self, domain: &Domain, samples: usize, seed: u64) -> CoverAudit {
        let dim = self.dim;
        let mut ratio_min = f64::INFINITY;
        let mut ratio_max: f64 = 0.0;
        let mut strictly_inside_failures = 0usize;
        let mut levels: BTreeMap<u8, usize> = BTreeMap::new();
        for (c, &d) in self.cubes.iter().zip(&self.dists) {
            *levels.entry(c.level).or_insert(0) += 1;
            let lo = self.grid.lo(c);
            let hi = self.grid.hi(c);
            let d = if d.is_nan() {
                domain.boundary_dist_box(&lo[..dim], &hi[..dim])
            } else {
                d
            };
            let ratio = d / self.grid.diam(c.level);
            ratio_min = ratio_min.min(ratio);
            ratio_max = ratio_max.max(ratio);
            if !(d > 0.0) || !domain.cube_inside(&lo[..dim], &hi[..dim]) {
                strictly_inside_failures += 1;
            }
        }
        // Nesting violations: an accepted cube with an accepted strict ancestor.
        let mut nested_violations = 0usize;
        for c in &self.cubes {
            let mut a = *c;
            while a.level > 0 {
                let mut idx = [0i32; MAX_DIM];
                for k in 0..dim {
                    idx[k] = a.idx[k] >> 1;
                }
                a = CubeId::new(a.level - 1, &idx);
                if self.index.contains_key(&a) {
                    nested_violations += 1;
                    break;
                }
            }
        }
        // Neighbor level gap, searched one level wider than edges record.
        let band = if self.cubes.len() <= 200_000 { 3 } else { 2 };
        let (wide_edges, overlap_pairs) = connect(&self.grid, dim, &self.cubes, &self.index, band);
        let mut max_neighbor_level_diff = 0u8;
        for e in &wide_edges {
            let la = self.cubes[e.a].level;
            let lb = self.cubes[e.b].level;
            max_neighbor_level_diff = max_neighbor_level_diff.max(la.abs_diff(lb));
        }
        // Coverage: random interior points beyond the threshold must land in
        // some accepted cube.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let threshold = self.coverage_threshold() * (1.0 + 1e-9);
        let mut coverage_failures = 0usize;
        let mut tested = 0usize;
        let mut attempts = 0usize;
        while tested < samples && attempts < samples * 10_000 {
            attempts += 1;
            let mut x = [0.0; MAX_DIM];
            for a in 0..dim {
                x[a] = rng.gen_range(domain.bbox_lo[a]..domain.bbox_hi[a]);
            }
            if !domain.contains(&x[..dim]) || domain.boundary_dist_point(&x[..dim]) <= threshold {
                continue;
            }
            tested += 1;
            if self.locate(&x[..dim]).is_none() {
                coverage_failures += 1;
            }
        }
        // Expanded-cube overlap at random points of random cubes.
        let adj = self.adjacency();
        let mut expanded_overlap_max = 0usize;
        if !self.cubes.is_empty() {
            for _ in 0..samples {
                let i = rng.gen_range(0..self.cubes.len());
                let lo = self.grid.lo(&self.cubes[i]);
                let hi = self.grid.hi(&self.cubes[i]);
                let mut x = [0.0; MAX_DIM];
                for a in 0..dim {
                    x[a] = rng.gen_range(lo[a]..hi[a]);
                }
                expanded_overlap_max =
                    expanded_overlap_max.max(self.expanded_overlap_count(&x[..dim], i, &adj));
            }
        }
        CoverAudit {
            dim,
            cube_count: self.cubes.len(),
            level_histogram: levels.into_iter().collect(),
            ratio_min,
            ratio_max,
            strictly_inside_failures,
            nested_violations,
            overlap_pairs,
            max_neighbor_level_diff,
            coverage_samples: tested,
            coverage_failures,
            expanded_overlap_max,
            expanded_overlap_bound: 12usize.pow(dim as u32),
        }
    }
}

/// Touching pairs among `cubes`, looking `band` levels upward from each cube.
/// Returns the edges and the number of (forbidden) overlapping pairs.
fn connect(
    grid: &GridBase,
    dim: usize,
    cubes: &[CubeId],
    index: &HashMap<CubeId, usize>,
    band: u8,
) -> (Vec<NeighborEdge>, usize) {
    let present: Vec<u8> = {
        let mut ls: Vec<u8> = cubes.iter().map(|c| c.level).collect();
        ls.sort_unstable();
        ls.dedup();
        ls
    };
    let mut edges = Vec::new();
    let mut overlap_pairs = 0usize;
    let mut cands: Vec<CubeId> = Vec::new();
    for (i, c) in cubes.iter().enumerate() {
        for &l2 in present.iter().filter(|&&l| l >= c.level && l - c.level <= band) {
            cands.clear();
            ring_candidates(c, l2, dim, &mut cands);
            for cand in &cands {
                if let Some(&j) = index.get(cand) {
                    if j == i || (l2 == c.level && j < i) {
                        continue;
                    }
                    match contact(grid, c, cand) {
                        Contact::Touch { full_face } => edges.push(NeighborEdge {
                            a: i.min(j),
                            b: i.max(j),
                            full_face,
                        }),
                        Contact::Overlap => overlap_pairs += 1,
                        Contact::Disjoint => {}
                    }
                }
            }
        }
    }
    edges.sort_by_key(|e| (e.a, e.b));
    edges.dedup();
    (edges, overlap_pairs)
}

/// All level-`lvl2` cube ids in the one-cube-thick ring around `c`
/// (including ids straddling its faces, excluding ids strictly inside it).
fn ring_candidates(c: &CubeId, lvl2: u8, dim: usize, out: &mut Vec<CubeId>) {
    let dl = (lvl2 - c.level) as u32;
    let span: i64 = 1 << dl;
    let mut base = [0i64; MAX_DIM];
    for a in 0..dim {
        base[a] = (c.idx[a] as i64) << dl;
    }
    let mut off = [-1i64; MAX_DIM];
    loop {
        let interior = (0..dim).all(|a| off[a] >= 0 && off[a] < span);
        if !interior {
            let mut idx = [0i32; MAX_DIM];
            let mut ok = true;
            for a in 0..dim {
                let v = base[a] + off[a];
                if v < i32::MIN as i64 || v > i32::MAX as i64 {
                    ok = false;
                    break;
                }
                idx[a] = v as i32;
            }
            if ok {
                out.push(CubeId::new(lvl2, &idx));
            }
        }
        let mut a = 0;
        loop {
            if a == dim {
                return;
            }
            off[a] += 1;
            if off[a] <= span {
                break;
            }
            off[a] = -1;
            a += 1;
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CubeRow {
    pub level: u8,
    pub idx: Vec<i32>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub dist: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CoverAudit {
    pub dim: usize,
    pub cube_count: usize,
    pub level_histogram: Vec<(u8, usize)>,
    /// dist/diam extremes over all cubes; must sit in [1, 4].
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub strictly_inside_failures: usize,
    pub nested_violations: usize,
    pub overlap_pairs: usize,
    pub max_neighbor_level_diff: u8,
    pub coverage_samples: usize,
    pub coverage_failures: usize,
    pub expanded_overlap_max: usize,
    pub expanded_overlap_bound: usize,
}

impl CoverAudit {
    pub fn passes(&self) -> bool {
        self.cube_count > 0
            && self.ratio_min >= 1.0 - 1e-10
            && self.ratio_max <= 4.0 + 1e-10
            && self.strictly_inside_failures == 0
            && self.nested_violations == 0
            && self.overlap_pairs == 0
            && self.max_neighbor_level_diff <= 2
            && self.coverage_samples > 0
            && self.coverage_failures == 0
            && self.expanded_overlap_max <= self.expanded_overlap_bound
    }
}
