//! Domain descriptions and distance queries.
//!
//! A [`Domain`] is an open connected set given by one of the [`DomainSpec`]
//! variants. Construction validates the spec, extracts an exact patch
//! decomposition of the boundary and fixes the dyadic base grid whose level-0
//! cube covers the domain. Distance queries against the boundary are exact
//! (closed form) for rectilinear and polygonal domains and certified to
//! high accuracy for the cusp through one-dimensional minimisation.

pub mod dist;
pub mod dyadic;

use dist::{subtract_rects, Patch};
use dyadic::{CubeId, GridBase, MAX_DIM};
use serde::{Deserialize, Serialize};
use thiserror::Error;

fn default_scale() -> f64 {
    1.0
}

/// Serializable description of a computational domain.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    /// Open axis-aligned box (lo, hi).
    AxisBox { lo: Vec<f64>, hi: Vec<f64> },
    /// L-shaped domain: the scale-cube minus its far corner quadrant.
    LShape {
        dim: usize,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// Union of open axis boxes, connected through positive-measure overlaps.
    BoxUnion { boxes: Vec<BoxSpec> },
    /// Simple polygon, vertices in counterclockwise order.
    Polygon2d { vertices: Vec<[f64; 2]> },
    /// {0 < x1, x2 < 1, 0 < x3 < x2^gamma} with an outward cusp along x2 = 0.
    Cusp3d { gamma: f64 },
    /// Koch snowflake prefractal of the given subdivision level.
    KochPrefractal2d { level: u32 },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point lies outside the domain closure (signed distance {distance:e})")]
    ExteriorPoint { distance: f64 },
    #[error("invalid domain spec at `{path}`: {reason}")]
    InvalidSpec { path: String, reason: String },
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> GeometryError {
    GeometryError::InvalidSpec {
        path: path.into(),
        reason: reason.into(),
    }
}

#[derive(Clone, Debug)]
enum Interior {
    Boxes(Vec<([f64; MAX_DIM], [f64; MAX_DIM])>),
    Polygon(Vec<[f64; 2]>),
    Cusp { gamma: f64 },
}

/// Validated domain with boundary patches and base grid.
#[derive(Clone, Debug)]
pub struct Domain {
    pub spec: DomainSpec,
    pub dim: usize,
    pub bbox_lo: Vec<f64>,
    pub bbox_hi: Vec<f64>,
    pub grid: GridBase,
    interior: Interior,
    patches: Vec<Patch>,
    patch_boxes: Vec<([f64; MAX_DIM], [f64; MAX_DIM])>,
}

impl Domain {
    pub fn new(spec: DomainSpec) -> Result<Self, GeometryError> {
        validate(&spec)?;
        let (dim, interior) = interior_of(&spec);
        let patches = patches_of(&spec, &interior);
        let (bbox_lo, bbox_hi) = bbox_of(&spec, &interior, dim);
        let grid = GridBase::covering(&bbox_lo, &bbox_hi);
        let patch_boxes = patches.iter().map(|p| p.bbox(dim)).collect();
        Ok(Domain {
            spec,
            dim,
            bbox_lo,
            bbox_hi,
            grid,
            interior,
            patches,
            patch_boxes,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, GeometryError> {
        let spec: DomainSpec =
            serde_json::from_str(text).map_err(|e| invalid("$", e.to_string()))?;
        Domain::new(spec)
    }

    /// Built-in domains used throughout the test catalog.
    pub fn builtin(name: &str) -> Option<Self> {
        let spec = match name {
            "unit_square" => DomainSpec::AxisBox {
                lo: vec![0.0, 0.0],
                hi: vec![1.0, 1.0],
            },
            "unit_cube" => DomainSpec::AxisBox {
                lo: vec![0.0, 0.0, 0.0],
                hi: vec![1.0, 1.0, 1.0],
            },
            "l_shape2d" => DomainSpec::LShape { dim: 2, scale: 1.0 },
            "l_shape3d" => DomainSpec::LShape { dim: 3, scale: 1.0 },
            "cusp_gamma2" => DomainSpec::Cusp3d { gamma: 2.0 },
            "koch_level3" => DomainSpec::KochPrefractal2d { level: 3 },
            _ => return None,
        };
        Some(Domain::new(spec).expect("builtin specs are valid"))
    }

    /// Strict interior membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        match &self.interior {
            Interior::Boxes(boxes) => boxes
                .iter()
                .any(|(lo, hi)| (0..self.dim).all(|a| lo[a] < x[a] && x[a] < hi[a])),
            Interior::Polygon(vs) => point_in_polygon(x[0], x[1], vs),
            Interior::Cusp { gamma } => {
                x[0] > 0.0
                    && x[0] < 1.0
                    && x[1] > 0.0
                    && x[1] < 1.0
                    && x[2] > 0.0
                    && x[2] < dist::pow_gamma(x[1], *gamma)
            }
        }
    }

    /// Unsigned distance from an arbitrary point to the boundary.
    pub fn boundary_dist_point(&self, x: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        for (p, bb) in self.patches.iter().zip(&self.patch_boxes) {
            if dist::dist_point_box(x, &bb.0, &bb.1, self.dim) >= best {
                continue;
            }
            best = best.min(p.dist_point(x, self.dim));
        }
        best
    }

    /// Distance from a closed axis box to the boundary.
    pub fn boundary_dist_box(&self, lo: &[f64], hi: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        for (p, bb) in self.patches.iter().zip(&self.patch_boxes) {
            if dist::dist_box_box(lo, hi, &bb.0, &bb.1, self.dim) >= best {
                continue;
            }
            best = best.min(p.dist_box(lo, hi, self.dim));
        }
        best
    }

    /// Interior distance to the boundary; zero on the boundary itself and an
    /// error (carrying the negative-convention distance) outside the closure.
    pub fn distance_to_boundary(&self, x: &[f64]) -> Result<f64, GeometryError> {
        let d = self.boundary_dist_point(x);
        if self.contains(x) {
            Ok(d)
        } else if d == 0.0 {
            Ok(0.0)
        } else {
            Err(GeometryError::ExteriorPoint { distance: -d })
        }
    }

    /// Does the closed cube lie inside the open domain? Exact for all
    /// supported domains: a connected set missing the boundary lies on one
    /// side of it.
    pub fn cube_inside(&self, lo: &[f64], hi: &[f64]) -> bool {
        let mut c = [0.0; MAX_DIM];
        for a in 0..self.dim {
            c[a] = 0.5 * (lo[a] + hi[a]);
        }
        self.contains(&c) && self.boundary_dist_box(lo, hi) > 0.0
    }

    /// Decide whether `max_x d(x, boundary) > threshold` over the closed box,
    /// by branch and bound on the 1-Lipschitz distance function. Ties within
    /// `1e-13 * diam` of the threshold resolve to `false`.
    pub fn max_dist_exceeds(&self, lo: &[f64], hi: &[f64], threshold: f64) -> bool {
        #[derive(PartialEq)]
        struct Node {
            ub: f64,
            lo: [f64; MAX_DIM],
            hi: [f64; MAX_DIM],
        }
        impl Eq for Node {}
        impl Ord for Node {
            fn cmp(&self, other: &Self) -> std::cmp::Ordering {
                self.ub.total_cmp(&other.ub)
            }
        }
        impl PartialOrd for Node {
            fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
                Some(self.cmp(other))
            }
        }
        let dim = self.dim;
        let radius = |lo: &[f64; MAX_DIM], hi: &[f64; MAX_DIM]| -> f64 {
            let mut s = 0.0;
            for a in 0..dim {
                let h = 0.5 * (hi[a] - lo[a]);
                s += h * h;
            }
            s.sqrt()
        };
        let center_val = |lo: &[f64; MAX_DIM], hi: &[f64; MAX_DIM]| -> f64 {
            let mut c = [0.0; MAX_DIM];
            for a in 0..dim {
                c[a] = 0.5 * (lo[a] + hi[a]);
            }
            self.boundary_dist_point(&c[..dim])
        };
        let mut root_lo = [0.0; MAX_DIM];
        let mut root_hi = [0.0; MAX_DIM];
        root_lo[..dim].copy_from_slice(&lo[..dim]);
        root_hi[..dim].copy_from_slice(&hi[..dim]);
        let tie = 1e-13 * (radius(&root_lo, &root_hi) + threshold.abs());
        let mut heap = std::collections::BinaryHeap::new();
        let d0 = center_val(&root_lo, &root_hi);
        if d0 > threshold {
            return true;
        }
        heap.push(Node {
            ub: d0 + radius(&root_lo, &root_hi),
            lo: root_lo,
            hi: root_hi,
        });
        let mut steps = 0usize;
        while let Some(node) = heap.pop() {
            if node.ub <= threshold + tie {
                return false;
            }
            steps += 1;
            debug_assert!(steps < 1_000_000, "max-dist branch and bound diverged");
            if steps >= 1_000_000 {
                return false;
            }
            // Split the longest axis.
            let mut ax = 0;
            for a in 1..dim {
                if node.hi[a] - node.lo[a] > node.hi[ax] - node.lo[ax] {
                    ax = a;
                }
            }
            let mid = 0.5 * (node.lo[ax] + node.hi[ax]);
            for half in 0..2 {
                let mut hlo = node.lo;
                let mut hhi = node.hi;
                if half == 0 {
                    hhi[ax] = mid;
                } else {
                    hlo[ax] = mid;
                }
                let dc = center_val(&hlo, &hhi);
                if dc > threshold {
                    return true;
                }
                let ub = dc + radius(&hlo, &hhi);
                if ub > threshold + tie {
                    heap.push(Node { ub, lo: hlo, hi: hhi });
                }
            }
        }
        false
    }

    pub fn cube_lo_hi(&self, c: &CubeId) -> ([f64; MAX_DIM], [f64; MAX_DIM]) {
        (self.grid.lo(c), self.grid.hi(c))
    }
}

fn interior_of(spec: &DomainSpec) -> (usize, Interior) {
    match spec {
        DomainSpec::AxisBox { lo, hi } => {
            let mut l = [0.0; MAX_DIM];
            let mut h = [0.0; MAX_DIM];
            l[..lo.len()].copy_from_slice(lo);
            h[..hi.len()].copy_from_slice(hi);
            (lo.len(), Interior::Boxes(vec![(l, h)]))
        }
        DomainSpec::LShape { dim, scale } => {
            let s = *scale;
            let mut boxes = Vec::new();
            if *dim == 2 {
                boxes.push(([0.0, 0.0, 0.0, 0.0], [s, s / 2.0, 0.0, 0.0]));
                boxes.push(([0.0, 0.0, 0.0, 0.0], [s / 2.0, s, 0.0, 0.0]));
            } else {
                boxes.push(([0.0, 0.0, 0.0, 0.0], [s, s / 2.0, s, 0.0]));
                boxes.push(([0.0, 0.0, 0.0, 0.0], [s / 2.0, s, s, 0.0]));
            }
            (*dim, Interior::Boxes(boxes))
        }
        DomainSpec::BoxUnion { boxes } => {
            let dim = boxes[0].lo.len();
            let bs = boxes
                .iter()
                .map(|b| {
                    let mut l = [0.0; MAX_DIM];
                    let mut h = [0.0; MAX_DIM];
                    l[..dim].copy_from_slice(&b.lo);
                    h[..dim].copy_from_slice(&b.hi);
                    (l, h)
                })
                .collect();
            (dim, Interior::Boxes(bs))
        }
        DomainSpec::Polygon2d { vertices } => (2, Interior::Polygon(vertices.clone())),
        DomainSpec::Cusp3d { gamma } => (3, Interior::Cusp { gamma: *gamma }),
        DomainSpec::KochPrefractal2d { level } => {
            (2, Interior::Polygon(koch_vertices(*level)))
        }
    }
}

fn patches_of(spec: &DomainSpec, interior: &Interior) -> Vec<Patch> {
    match (spec, interior) {
        (DomainSpec::Cusp3d { gamma }, _) => {
            let g = *gamma;
            vec![
                // Bottom x3 = 0 over [0,1]^2.
                Patch::Rect {
                    lo: [0.0, 0.0, 0.0, 0.0],
                    hi: [1.0, 1.0, 0.0, 0.0],
                },
                // Far face x2 = 1, x3 in [0,1].
                Patch::Rect {
                    lo: [0.0, 1.0, 0.0, 0.0],
                    hi: [1.0, 1.0, 1.0, 0.0],
                },
                Patch::CuspFlat { x1: 0.0, gamma: g },
                Patch::CuspFlat { x1: 1.0, gamma: g },
                Patch::CuspGraph { gamma: g },
            ]
        }
        (_, Interior::Polygon(vs)) => {
            let m = vs.len();
            (0..m)
                .map(|i| Patch::Segment {
                    a: vs[i],
                    b: vs[(i + 1) % m],
                })
                .collect()
        }
        (_, Interior::Boxes(boxes)) => rectilinear_patches(boxes, dim_of(spec)),
        _ => unreachable!("cusp handled above"),
    }
}

fn dim_of(spec: &DomainSpec) -> usize {
    match spec {
        DomainSpec::AxisBox { lo, .. } => lo.len(),
        DomainSpec::LShape { dim, .. } => *dim,
        DomainSpec::BoxUnion { boxes } => boxes[0].lo.len(),
        DomainSpec::Polygon2d { .. } | DomainSpec::KochPrefractal2d { .. } => 2,
        DomainSpec::Cusp3d { .. } => 3,
    }
}

/// Exact boundary of a union of open boxes: every box face, minus the open
/// face-plane sections of the other boxes.
fn rectilinear_patches(
    boxes: &[([f64; MAX_DIM], [f64; MAX_DIM])],
    dim: usize,
) -> Vec<Patch> {
    let mut out = Vec::new();
    for (i, (lo, hi)) in boxes.iter().enumerate() {
        for axis in 0..dim {
            for side in 0..2 {
                let coord = if side == 0 { lo[axis] } else { hi[axis] };
                // Face in the reduced coordinates (all axes except `axis`).
                let mut f_lo = [0.0; MAX_DIM];
                let mut f_hi = [0.0; MAX_DIM];
                let mut k = 0;
                for a in 0..dim {
                    if a != axis {
                        f_lo[k] = lo[a];
                        f_hi[k] = hi[a];
                        k += 1;
                    }
                }
                let mut cutters = Vec::new();
                for (j, (jlo, jhi)) in boxes.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    if jlo[axis] < coord && coord < jhi[axis] {
                        let mut c_lo = [0.0; MAX_DIM];
                        let mut c_hi = [0.0; MAX_DIM];
                        let mut k = 0;
                        for a in 0..dim {
                            if a != axis {
                                c_lo[k] = jlo[a];
                                c_hi[k] = jhi[a];
                                k += 1;
                            }
                        }
                        cutters.push((c_lo, c_hi));
                    }
                }
                for (r_lo, r_hi) in subtract_rects(f_lo, f_hi, &cutters, dim - 1) {
                    // Re-insert the face axis.
                    let mut p_lo = [0.0; MAX_DIM];
                    let mut p_hi = [0.0; MAX_DIM];
                    let mut k = 0;
                    for a in 0..dim {
                        if a == axis {
                            p_lo[a] = coord;
                            p_hi[a] = coord;
                        } else {
                            p_lo[a] = r_lo[k];
                            p_hi[a] = r_hi[k];
                            k += 1;
                        }
                    }
                    out.push(Patch::Rect { lo: p_lo, hi: p_hi });
                }
            }
        }
    }
    out
}

fn bbox_of(spec: &DomainSpec, interior: &Interior, dim: usize) -> (Vec<f64>, Vec<f64>) {
    match interior {
        Interior::Boxes(boxes) => {
            let mut lo = vec![f64::INFINITY; dim];
            let mut hi = vec![f64::NEG_INFINITY; dim];
            for (l, h) in boxes {
                for a in 0..dim {
                    lo[a] = lo[a].min(l[a]);
                    hi[a] = hi[a].max(h[a]);
                }
            }
            (lo, hi)
        }
        Interior::Polygon(vs) => {
            let mut lo = vec![f64::INFINITY; 2];
            let mut hi = vec![f64::NEG_INFINITY; 2];
            for v in vs {
                for a in 0..2 {
                    lo[a] = lo[a].min(v[a]);
                    hi[a] = hi[a].max(v[a]);
                }
            }
            (lo, hi)
        }
        Interior::Cusp { .. } => {
            debug_assert!(matches!(spec, DomainSpec::Cusp3d { .. }));
            (vec![0.0; 3], vec![1.0; 3])
        }
    }
}

fn validate(spec: &DomainSpec) -> Result<(), GeometryError> {
    match spec {
        DomainSpec::AxisBox { lo, hi } => {
            if lo.len() != hi.len() {
                return Err(invalid("hi", "lo and hi must have equal length"));
            }
            if !(2..=MAX_DIM).contains(&lo.len()) {
                return Err(invalid("lo", format!("dimension must be 2..={MAX_DIM}")));
            }
            for (a, (&l, &h)) in lo.iter().zip(hi).enumerate() {
                if !(l < h) {
                    return Err(invalid(
                        format!("hi[{a}]"),
                        format!("needs lo < hi, got [{l}, {h}]"),
                    ));
                }
            }
            Ok(())
        }
        DomainSpec::LShape { dim, scale } => {
            if !matches!(dim, 2 | 3) {
                return Err(invalid("dim", "l_shape supports dim 2 or 3"));
            }
            if !(*scale > 0.0) {
                return Err(invalid("scale", "scale must be positive"));
            }
            Ok(())
        }
        DomainSpec::BoxUnion { boxes } => {
            if boxes.is_empty() {
                return Err(invalid("boxes", "box union must be nonempty"));
            }
            let dim = boxes[0].lo.len();
            if !(2..=MAX_DIM).contains(&dim) {
                return Err(invalid("boxes[0].lo", format!("dimension must be 2..={MAX_DIM}")));
            }
            for (i, b) in boxes.iter().enumerate() {
                if b.lo.len() != dim || b.hi.len() != dim {
                    return Err(invalid(
                        format!("boxes[{i}]"),
                        "all boxes must share one dimension",
                    ));
                }
                for a in 0..dim {
                    if !(b.lo[a] < b.hi[a]) {
                        return Err(invalid(
                            format!("boxes[{i}].hi[{a}]"),
                            "needs lo < hi",
                        ));
                    }
                }
            }
            // Connectivity through open overlaps.
            let n = boxes.len();
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(i) = stack.pop() {
                for j in 0..n {
                    if !seen[j] {
                        let open_overlap = (0..dim).all(|a| {
                            boxes[i].lo[a] < boxes[j].hi[a] && boxes[j].lo[a] < boxes[i].hi[a]
                        });
                        if open_overlap {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
            if let Some(j) = seen.iter().position(|s| !s) {
                return Err(invalid(
                    format!("boxes[{j}]"),
                    "union is disconnected: boxes must overlap with positive measure",
                ));
            }
            Ok(())
        }
        DomainSpec::Polygon2d { vertices } => validate_polygon(vertices, "vertices"),
        DomainSpec::Cusp3d { gamma } => {
            if !(*gamma > 1.0) {
                return Err(invalid("gamma", "cusp exponent must exceed 1"));
            }
            Ok(())
        }
        DomainSpec::KochPrefractal2d { level } => {
            if *level > 8 {
                return Err(invalid("level", "prefractal level capped at 8"));
            }
            Ok(())
        }
    }
}

fn validate_polygon(vs: &[[f64; 2]], path: &str) -> Result<(), GeometryError> {
    let m = vs.len();
    if m < 3 {
        return Err(invalid(path, "polygon needs at least 3 vertices"));
    }
    // Counterclockwise orientation via the shoelace sum.
    let mut area2 = 0.0;
    for i in 0..m {
        let a = vs[i];
        let b = vs[(i + 1) % m];
        area2 += a[0] * b[1] - b[0] * a[1];
    }
    if !(area2 > 0.0) {
        return Err(invalid(path, "vertices must wind counterclockwise"));
    }
    // Simplicity: no two non-adjacent edges may touch.
    for i in 0..m {
        let (a1, b1) = (vs[i], vs[(i + 1) % m]);
        for j in i + 1..m {
            if j == i || (j + 1) % m == i || (i + 1) % m == j {
                continue;
            }
            let (a2, b2) = (vs[j], vs[(j + 1) % m]);
            if segments_touch(a1, b1, a2, b2) {
                return Err(invalid(
                    format!("{path}[{i}]..{path}[{j}]"),
                    "polygon is not simple: edges intersect",
                ));
            }
        }
    }
    Ok(())
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_touch(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = orient(a, b, c);
    let d2 = orient(a, b, d);
    let d3 = orient(c, d, a);
    let d4 = orient(c, d, b);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |p: [f64; 2], q: [f64; 2], r: [f64; 2], o: f64| {
        o == 0.0
            && r[0] >= p[0].min(q[0])
            && r[0] <= p[0].max(q[0])
            && r[1] >= p[1].min(q[1])
            && r[1] <= p[1].max(q[1])
    };
    on(a, b, c, d1) || on(a, b, d, d2) || on(c, d, a, d3) || on(c, d, b, d4)
}

fn point_in_polygon(px: f64, py: f64, vs: &[[f64; 2]]) -> bool {
    let m = vs.len();
    let mut inside = false;
    for i in 0..m {
        let a = vs[i];
        let b = vs[(i + 1) % m];
        if (a[1] > py) != (b[1] > py) {
            let t = (py - a[1]) / (b[1] - a[1]);
            let x = a[0] + t * (b[0] - a[0]);
            if px < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Koch snowflake prefractal vertices, counterclockwise, bumps outward.
pub fn koch_vertices(level: u32) -> Vec<[f64; 2]> {
    let mut vs: Vec<[f64; 2]> = vec![[0.0, 0.0], [1.0, 0.0], [0.5, 3.0f64.sqrt() / 2.0]];
    for _ in 0..level {
        let mut next = Vec::with_capacity(vs.len() * 4);
        for i in 0..vs.len() {
            let a = vs[i];
            let b = vs[(i + 1) % vs.len()];
            let dx = b[0] - a[0];
            let dy = b[1] - a[1];
            let p1 = [a[0] + dx / 3.0, a[1] + dy / 3.0];
            let p3 = [a[0] + 2.0 * dx / 3.0, a[1] + 2.0 * dy / 3.0];
            // Outward = right of travel for a counterclockwise polygon.
            let h = 3.0f64.sqrt() / 6.0;
            let peak = [
                a[0] + dx / 2.0 + dy * h,
                a[1] + dy / 2.0 - dx * h,
            ];
            next.push(a);
            next.push(p1);
            next.push(peak);
            next.push(p3);
        }
        vs = next;
    }
    vs
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_box_face_point_distance_is_zero() {
        let d = Domain::builtin("unit_square").unwrap();
        assert_eq!(d.distance_to_boundary(&[0.0, 0.5]).unwrap(), 0.0);
        assert_eq!(d.distance_to_boundary(&[0.3, 0.4]).unwrap(), 0.3);
    }

    #[test]
    fn exterior_point_reports_negative_distance() {
        let d = Domain::builtin("unit_square").unwrap();
        match d.distance_to_boundary(&[1.5, 0.5]) {
            Err(GeometryError::ExteriorPoint { distance }) => {
                assert!((distance + 0.5).abs() < 1e-15)
            }
            other => panic!("expected exterior error, got {other:?}"),
        }
    }

    #[test]
    fn l_shape_distance_sees_reentrant_corner() {
        let d = Domain::builtin("l_shape2d").unwrap();
        // Point diagonally below-left of the corner (1/2, 1/2).
        let x = [0.45, 0.45];
        let want = (0.05f64 * 0.05 + 0.05 * 0.05).sqrt();
        assert!((d.distance_to_boundary(&x).unwrap() - want).abs() < 1e-15);
        // Point under the horizontal wall: nearest feature is the wall.
        let x = [0.7, 0.4];
        assert!((d.distance_to_boundary(&x).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn cusp_distance_matches_brute_force_boundary_sampling() {
        let dom = Domain::builtin("cusp_gamma2").unwrap();
        let x = [0.5, 0.5, 0.1];
        let d = dom.distance_to_boundary(&x).unwrap();
        // Independent oracle: sample about 1e6 boundary points across the
        // five faces (grids include endpoints and hit coordinate midpoints).
        let mut best = f64::INFINITY;
        let mut upd = |y: [f64; 3]| {
            let dd = ((y[0] - x[0]).powi(2) + (y[1] - x[1]).powi(2) + (y[2] - x[2]).powi(2))
                .sqrt();
            if dd < best {
                best = dd;
            }
        };
        let m = 448usize;
        for i in 0..=m {
            let u = i as f64 / m as f64;
            for j in 0..=m {
                let v = j as f64 / m as f64;
                upd([u, v, 0.0]); // bottom
                upd([u, 1.0, v]); // far face
                upd([0.0, u, v * u * u]); // x1 = 0 face (curved extent)
                upd([1.0, u, v * u * u]);
                upd([u, v, v * v]); // graph surface
            }
        }
        assert!(
            (d - best).abs() < 1e-6,
            "implementation {d} vs sampled oracle {best}"
        );
        assert!((d - 0.1).abs() < 1e-12, "nearest face is the bottom: {d}");
    }

    #[test]
    fn cusp_interior_test_respects_profile() {
        let dom = Domain::builtin("cusp_gamma2").unwrap();
        assert!(dom.contains(&[0.5, 0.5, 0.2]));
        assert!(!dom.contains(&[0.5, 0.5, 0.26]));
        assert!(!dom.contains(&[0.5, 0.1, 0.02]));
        assert!(dom.contains(&[0.5, 0.1, 0.005]));
    }

    #[test]
    fn cube_inside_unit_square() {
        let d = Domain::builtin("unit_square").unwrap();
        assert!(d.cube_inside(&[0.25, 0.25], &[0.5, 0.5]));
        assert!(!d.cube_inside(&[0.0, 0.0], &[0.25, 0.25])); // touches boundary
    }

    #[test]
    fn cube_crossing_reentrant_corner_is_outside() {
        let d = Domain::builtin("l_shape2d").unwrap();
        // Cube straddling the corner (1/2, 1/2): part of it leaves the L.
        assert!(!d.cube_inside(&[0.4375, 0.4375], &[0.5625, 0.5625]));
        assert!(d.cube_inside(&[0.25, 0.25], &[0.375, 0.375]));
    }

    #[test]
    fn koch_polygon_is_valid_and_counterclockwise() {
        for level in 0..=3 {
            let vs = koch_vertices(level);
            assert_eq!(vs.len(), 3 * 4usize.pow(level));
            validate_polygon(&vs, "vertices").unwrap();
        }
        let d = Domain::builtin("koch_level3").unwrap();
        // Triangle centroid stays inside every prefractal.
        assert!(d.contains(&[0.5, 0.28]));
        assert!(!d.contains(&[0.5, -0.5]));
    }

    #[test]
    fn koch_level1_distance_against_direct_segments() {
        let vs = koch_vertices(1);
        let d = Domain::new(DomainSpec::Polygon2d { vertices: vs.clone() }).unwrap();
        let x = [0.5, 0.2];
        let mut want = f64::INFINITY;
        for i in 0..vs.len() {
            want = want.min(dist::dist_point_segment(
                x,
                vs[i],
                vs[(i + 1) % vs.len()],
            ));
        }
        assert_eq!(d.boundary_dist_point(&x), want);
    }

    #[test]
    fn parse_rejects_bad_specs() {
        let err = Domain::from_json(r#"{"type":"cusp3d","gamma":0.5}"#).unwrap_err();
        assert!(err.to_string().contains("gamma"));
        let err = Domain::from_json(r#"{"type":"axis_box","lo":[0,0],"hi":[1,-1]}"#).unwrap_err();
        assert!(err.to_string().contains("hi[1]"));
        let err = Domain::from_json(
            r#"{"type":"box_union","boxes":[{"lo":[0,0],"hi":[1,1]},{"lo":[2,2],"hi":[3,3]}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("disconnected"));
        let err = Domain::from_json(
            r#"{"type":"polygon2d","vertices":[[0,0],[1,1],[1,0],[0,1]]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("not simple") || err.to_string().contains("counterclockwise"));
    }

    #[test]
    fn max_dist_exceeds_on_unit_square() {
        let d = Domain::builtin("unit_square").unwrap();
        // Max distance over [0.25,0.75]^2 is 0.5 at the centre.
        assert!(d.max_dist_exceeds(&[0.25, 0.25], &[0.75, 0.75], 0.49));
        assert!(!d.max_dist_exceeds(&[0.25, 0.25], &[0.75, 0.75], 0.51));
        // Over a corner cube [0, 0.25]^2 the max is 0.25.
        assert!(d.max_dist_exceeds(&[0.0, 0.0], &[0.25, 0.25], 0.2));
        assert!(!d.max_dist_exceeds(&[0.0, 0.0], &[0.25, 0.25], 0.26));
    }

    proptest! {
        #[test]
        fn boundary_distance_is_lipschitz(
            x0 in -0.5f64..1.5, y0 in -0.5f64..1.5,
            dx in -0.3f64..0.3, dy in -0.3f64..0.3,
        ) {
            let d = Domain::builtin("l_shape2d").unwrap();
            let a = [x0, y0];
            let b = [x0 + dx, y0 + dy];
            let da = d.boundary_dist_point(&a);
            let db = d.boundary_dist_point(&b);
            let step = (dx * dx + dy * dy).sqrt();
            prop_assert!((da - db).abs() <= step + 1e-12);
        }

        #[test]
        fn koch_boundary_distance_is_lipschitz(
            x0 in -0.4f64..1.4, y0 in -0.4f64..1.2,
            dx in -0.2f64..0.2, dy in -0.2f64..0.2,
        ) {
            let d = Domain::builtin("koch_level3").unwrap();
            let a = [x0, y0];
            let b = [x0 + dx, y0 + dy];
            let da = d.boundary_dist_point(&a);
            let db = d.boundary_dist_point(&b);
            let step = (dx * dx + dy * dy).sqrt();
            prop_assert!((da - db).abs() <= step + 1e-12);
        }
    }
}
