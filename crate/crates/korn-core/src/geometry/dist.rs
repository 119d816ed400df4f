//! Boundary patches and distance kernels.
//!
//! A domain's boundary is decomposed into finitely many patches: axis-aligned
//! (possibly degenerate) rectangles, polygon segments, and for the cusp the
//! two curved-profile faces plus the graph surface. Point and box distances
//! to rectangles and segments are closed-form; distances involving the cusp
//! curve `t -> (t, t^gamma)` reduce to a one-dimensional minimisation, which
//! for `gamma = 2` is solved exactly through the cubic formula.

use super::dyadic::MAX_DIM;

#[derive(Clone, Debug)]
pub enum Patch {
    /// Axis-aligned box, degenerate in at least one axis; distance is the
    /// componentwise-gap norm.
    Rect {
        lo: [f64; MAX_DIM],
        hi: [f64; MAX_DIM],
    },
    /// Closed 2D segment.
    Segment { a: [f64; 2], b: [f64; 2] },
    /// Cusp face x1 = c with curved extent {0<=x2<=1, 0<=x3<=x2^gamma}.
    CuspFlat { x1: f64, gamma: f64 },
    /// Cusp graph surface x3 = x2^gamma over (x1, x2) in [0,1]^2.
    CuspGraph { gamma: f64 },
}

fn gap_point(x: f64, lo: f64, hi: f64) -> f64 {
    (lo - x).max(x - hi).max(0.0)
}

fn gap_interval(alo: f64, ahi: f64, blo: f64, bhi: f64) -> f64 {
    (blo - ahi).max(alo - bhi).max(0.0)
}

pub fn dist_point_box(x: &[f64], lo: &[f64], hi: &[f64], dim: usize) -> f64 {
    let mut s = 0.0;
    for a in 0..dim {
        let g = gap_point(x[a], lo[a], hi[a]);
        s += g * g;
    }
    s.sqrt()
}

pub fn dist_box_box(alo: &[f64], ahi: &[f64], blo: &[f64], bhi: &[f64], dim: usize) -> f64 {
    let mut s = 0.0;
    for a in 0..dim {
        let g = gap_interval(alo[a], ahi[a], blo[a], bhi[a]);
        s += g * g;
    }
    s.sqrt()
}

pub fn dist_point_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let qx = a[0] + t * dx - p[0];
    let qy = a[1] + t * dy - p[1];
    (qx * qx + qy * qy).sqrt()
}

fn segments_intersect_box(a: [f64; 2], b: [f64; 2], lo: &[f64], hi: &[f64]) -> bool {
    // Liang-Barsky clip: does the segment meet the closed box?
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    let d = [b[0] - a[0], b[1] - a[1]];
    for ax in 0..2 {
        if d[ax] == 0.0 {
            if a[ax] < lo[ax] || a[ax] > hi[ax] {
                return false;
            }
        } else {
            let mut ta = (lo[ax] - a[ax]) / d[ax];
            let mut tb = (hi[ax] - a[ax]) / d[ax];
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

pub fn dist_box_segment(lo: &[f64], hi: &[f64], a: [f64; 2], b: [f64; 2]) -> f64 {
    if segments_intersect_box(a, b, lo, hi) {
        return 0.0;
    }
    // Disjoint convex sets in the plane: the minimum is attained at a vertex
    // of one of them.
    let mut best = dist_point_box(&[a[0], a[1]], lo, hi, 2).min(dist_point_box(&[b[0], b[1]], lo, hi, 2));
    for &cx in &[lo[0], hi[0]] {
        for &cy in &[lo[1], hi[1]] {
            best = best.min(dist_point_segment([cx, cy], a, b));
        }
    }
    best
}

/// Scan-plus-golden-section global minimiser for piecewise-smooth `f` on
/// `[a, b]`. Refines every sampled local basin.
pub fn minimize_1d(f: &dyn Fn(f64) -> f64, a: f64, b: f64, samples: usize) -> (f64, f64) {
    debug_assert!(samples >= 4);
    let h = (b - a) / samples as f64;
    let vals: Vec<(f64, f64)> = (0..=samples)
        .map(|i| {
            let t = a + h * i as f64;
            (t, f(t))
        })
        .collect();
    let mut best = vals[0];
    for v in &vals {
        if v.1 < best.1 {
            best = *v;
        }
    }
    let golden = |mut lo: f64, mut hi: f64| -> (f64, f64) {
        const INV_PHI: f64 = 0.618_033_988_749_894_9;
        let mut c = hi - INV_PHI * (hi - lo);
        let mut d = lo + INV_PHI * (hi - lo);
        let mut fc = f(c);
        let mut fd = f(d);
        for _ in 0..70 {
            if fc < fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - INV_PHI * (hi - lo);
                fc = f(c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + INV_PHI * (hi - lo);
                fd = f(d);
            }
        }
        let m = 0.5 * (lo + hi);
        (m, f(m))
    };
    for i in 0..=samples {
        let is_basin = (i == 0 || vals[i].1 <= vals[i - 1].1)
            && (i == samples || vals[i].1 <= vals[i + 1].1);
        if is_basin {
            let lo = if i == 0 { a } else { vals[i - 1].0 };
            let hi = if i == samples { b } else { vals[i + 1].0 };
            let cand = golden(lo, hi);
            if cand.1 < best.1 {
                best = cand;
            }
        }
    }
    best
}

/// Distance from a plane point to the curve `t -> (t, t^gamma)`, `t` in [0,1].
pub fn dist_point_curve(u: f64, v: f64, gamma: f64) -> f64 {
    let f = |t: f64| {
        let du = t - u;
        let dv = t.powf(gamma) - v;
        (du * du + dv * dv).sqrt()
    };
    if gamma == 2.0 {
        // Stationarity is 2t^3 + (1-2v)t - u = 0; solve exactly and compare
        // with the endpoints.
        let mut best = f(0.0).min(f(1.0));
        for t in cubic_roots(2.0, 0.0, 1.0 - 2.0 * v, -u) {
            if t > 0.0 && t < 1.0 {
                let t = newton_polish_curve2(t, u, v);
                best = best.min(f(t));
            }
        }
        best
    } else {
        minimize_1d(&f, 0.0, 1.0, 48).1
    }
}

fn newton_polish_curve2(mut t: f64, u: f64, v: f64) -> f64 {
    for _ in 0..2 {
        let g = 2.0 * t * t * t + (1.0 - 2.0 * v) * t - u;
        let dg = 6.0 * t * t + (1.0 - 2.0 * v);
        if dg.abs() > 1e-30 {
            t -= g / dg;
        }
    }
    t.clamp(0.0, 1.0)
}

/// Real roots of a*t^3 + b*t^2 + c*t + d (a != 0).
pub fn cubic_roots(a: f64, b: f64, c: f64, d: f64) -> Vec<f64> {
    let b = b / a;
    let c = c / a;
    let d = d / a;
    // Depressed: t = s - b/3, s^3 + p s + q = 0.
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let shift = -b / 3.0;
    let disc = (q / 2.0) * (q / 2.0) + (p / 3.0) * (p / 3.0) * (p / 3.0);
    let mut roots = Vec::with_capacity(3);
    if disc > 0.0 {
        let r = disc.sqrt();
        let s = (-q / 2.0 + r).cbrt() + (-q / 2.0 - r).cbrt();
        roots.push(s + shift);
    } else if p == 0.0 {
        roots.push(shift);
    } else {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        for k in 0..3 {
            roots.push(m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() + shift);
        }
    }
    roots
}

/// Distance from a plane point to the closed region
/// {0<=u<=1, 0<=v<=u^gamma}; zero inside.
pub fn dist_point_cusp_region(u: f64, v: f64, gamma: f64) -> f64 {
    let inside = (0.0..=1.0).contains(&u) && v >= 0.0 && v <= pow_gamma(u.max(0.0), gamma);
    if inside {
        return 0.0;
    }
    let d_bottom = dist_point_segment([u, v], [0.0, 0.0], [1.0, 0.0]);
    let d_right = dist_point_segment([u, v], [1.0, 0.0], [1.0, 1.0]);
    d_bottom.min(d_right).min(dist_point_curve(u, v, gamma))
}

/// Distance from a 2D axis box to the curve `t -> (t, t^gamma)`.
pub fn dist_box_curve(lo: &[f64], hi: &[f64], gamma: f64) -> f64 {
    let f = |t: f64| {
        let gu = gap_point(t, lo[0], hi[0]);
        let gv = gap_point(pow_gamma(t, gamma), lo[1], hi[1]);
        (gu * gu + gv * gv).sqrt()
    };
    minimize_1d(&f, 0.0, 1.0, 48).1
}

/// Distance from a 2D axis box to the closed cusp region.
pub fn dist_box_cusp_region(lo: &[f64], hi: &[f64], gamma: f64) -> f64 {
    // Intersection test: the box meets the region iff its lower-left corner
    // region coordinates admit a point with v <= u^gamma, i.e. the corner
    // (min u feasible, min v) works because the region is monotone in u.
    let u0 = lo[0].max(0.0).min(1.0);
    let u1 = hi[0].max(0.0).min(1.0);
    if u1 >= u0 && hi[0] >= 0.0 && lo[0] <= 1.0 {
        let vtop = pow_gamma(u1, gamma);
        if lo[1] <= vtop && hi[1] >= 0.0 {
            return 0.0;
        }
    }
    let d_bottom = dist_box_segment(lo, hi, [0.0, 0.0], [1.0, 0.0]);
    let d_right = dist_box_segment(lo, hi, [1.0, 0.0], [1.0, 1.0]);
    d_bottom.min(d_right).min(dist_box_curve(lo, hi, gamma))
}

pub fn pow_gamma(x: f64, gamma: f64) -> f64 {
    if gamma == 2.0 {
        x * x
    } else {
        x.powf(gamma)
    }
}

impl Patch {
    pub fn dist_point(&self, x: &[f64], dim: usize) -> f64 {
        match self {
            Patch::Rect { lo, hi } => dist_point_box(x, lo, hi, dim),
            Patch::Segment { a, b } => dist_point_segment([x[0], x[1]], *a, *b),
            Patch::CuspFlat { x1, gamma } => {
                let g1 = x[0] - x1;
                let g2 = dist_point_cusp_region(x[1], x[2], *gamma);
                (g1 * g1 + g2 * g2).sqrt()
            }
            Patch::CuspGraph { gamma } => {
                let g1 = gap_point(x[0], 0.0, 1.0);
                let g2 = dist_point_curve(x[1], x[2], *gamma);
                (g1 * g1 + g2 * g2).sqrt()
            }
        }
    }

    pub fn dist_box(&self, blo: &[f64], bhi: &[f64], dim: usize) -> f64 {
        match self {
            Patch::Rect { lo, hi } => dist_box_box(blo, bhi, lo, hi, dim),
            Patch::Segment { a, b } => dist_box_segment(blo, bhi, *a, *b),
            Patch::CuspFlat { x1, gamma } => {
                let g1 = gap_interval(blo[0], bhi[0], *x1, *x1);
                let g2 = dist_box_cusp_region(&[blo[1], blo[2]], &[bhi[1], bhi[2]], *gamma);
                (g1 * g1 + g2 * g2).sqrt()
            }
            Patch::CuspGraph { gamma } => {
                let g1 = gap_interval(blo[0], bhi[0], 0.0, 1.0);
                let g2 = dist_box_curve(&[blo[1], blo[2]], &[bhi[1], bhi[2]], *gamma);
                (g1 * g1 + g2 * g2).sqrt()
            }
        }
    }

    /// Loose bounding box used to prune patch scans.
    pub fn bbox(&self, dim: usize) -> ([f64; MAX_DIM], [f64; MAX_DIM]) {
        match self {
            Patch::Rect { lo, hi } => (*lo, *hi),
            Patch::Segment { a, b } => {
                let mut lo = [0.0; MAX_DIM];
                let mut hi = [0.0; MAX_DIM];
                lo[0] = a[0].min(b[0]);
                lo[1] = a[1].min(b[1]);
                hi[0] = a[0].max(b[0]);
                hi[1] = a[1].max(b[1]);
                (lo, hi)
            }
            Patch::CuspFlat { x1, .. } => {
                let mut lo = [0.0; MAX_DIM];
                let mut hi = [1.0; MAX_DIM];
                lo[0] = *x1;
                hi[0] = *x1;
                lo[dim.min(MAX_DIM - 1)] = 0.0;
                (lo, hi)
            }
            Patch::CuspGraph { .. } => ([0.0; MAX_DIM], [1.0; MAX_DIM]),
        }
    }
}

/// Subtract open axis rectangles from a closed one; the remainder (which may
/// contain degenerate walls of the cutters) is returned as closed rectangles.
/// Coordinates have `k` active axes stored in `[f64; MAX_DIM]` prefixes.
pub fn subtract_rects(
    f_lo: [f64; MAX_DIM],
    f_hi: [f64; MAX_DIM],
    cutters: &[([f64; MAX_DIM], [f64; MAX_DIM])],
    k: usize,
) -> Vec<([f64; MAX_DIM], [f64; MAX_DIM])> {
    let mut pieces = vec![(f_lo, f_hi)];
    for &(clo, chi) in cutters {
        let mut next = Vec::new();
        for (plo, phi) in pieces {
            // No open overlap: keep whole.
            let open_overlap = (0..k).all(|a| plo[a] < chi[a] && clo[a] < phi[a]);
            if !open_overlap {
                next.push((plo, phi));
                continue;
            }
            // Slab split; the core inside the closed cutter keeps only its
            // walls on the cutter boundary.
            let mut core_lo = plo;
            let mut core_hi = phi;
            for a in 0..k {
                if core_lo[a] < clo[a] {
                    let mut cut_hi = core_hi;
                    cut_hi[a] = clo[a];
                    next.push((core_lo, cut_hi));
                    core_lo[a] = clo[a];
                }
                if core_hi[a] > chi[a] {
                    let mut cut_lo = core_lo;
                    cut_lo[a] = chi[a];
                    next.push((cut_lo, core_hi));
                    core_hi[a] = chi[a];
                }
            }
            // core is now within the closed cutter; its faces on the cutter
            // boundary are not removed by the open cutter.
            for a in 0..k {
                if core_lo[a] == clo[a] {
                    let mut wall_hi = core_hi;
                    wall_hi[a] = core_lo[a];
                    next.push((core_lo, wall_hi));
                }
                if core_hi[a] == chi[a] {
                    let mut wall_lo = core_lo;
                    wall_lo[a] = core_hi[a];
                    next.push((wall_lo, core_hi));
                }
            }
        }
        pieces = next;
    }
    pieces.retain(|(lo, hi)| (0..k).all(|a| hi[a] >= lo[a]));
    pieces
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_box_distance_closed_form() {
        let lo = [0.0, 0.0, 0.0, 0.0];
        let hi = [1.0, 2.0, 0.0, 0.0];
        assert_eq!(dist_point_box(&[2.0, 3.0], &lo, &hi, 2), 2.0f64.sqrt());
        assert_eq!(dist_point_box(&[0.5, 1.0], &lo, &hi, 2), 0.0);
    }

    #[test]
    fn box_segment_distance() {
        let lo = [0.0, 0.0];
        let hi = [1.0, 1.0];
        // Crossing segment.
        assert_eq!(dist_box_segment(&lo, &hi, [-1.0, 0.5], [2.0, 0.5]), 0.0);
        // Parallel above: distance 0.5.
        let d = dist_box_segment(&lo, &hi, [-1.0, 1.5], [2.0, 1.5]);
        assert!((d - 0.5).abs() < 1e-15);
        // Diagonal beyond a corner.
        let d = dist_box_segment(&lo, &hi, [2.0, 2.0], [3.0, 1.0]);
        assert!((d - 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cubic_solver_matches_factored_roots() {
        // (t-1)(t-2)(t+3) = t^3 - 7t + 6... recompute: t^3 +0t^2 -7t +6.
        let mut r = cubic_roots(1.0, 0.0, -7.0, 6.0);
        r.sort_by(f64::total_cmp);
        assert_eq!(r.len(), 3);
        for (got, want) in r.iter().zip([-3.0, 1.0, 2.0]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        // Single real root: t^3 + t + 1.
        let r = cubic_roots(1.0, 0.0, 1.0, 1.0);
        assert_eq!(r.len(), 1);
        let t = r[0];
        assert!((t * t * t + t + 1.0).abs() < 1e-12);
    }

    #[test]
    fn curve_distance_exact_vs_scan() {
        // gamma = 2 Cardano path against the generic scanner.
        for &(u, v) in &[(0.5, 0.1), (0.3, 0.4), (-0.2, 0.5), (1.3, 0.9), (0.7, -0.3)] {
            let exact = dist_point_curve(u, v, 2.0);
            let f = |t: f64| {
                let du = t - u;
                let dv = t * t - v;
                (du * du + dv * dv).sqrt()
            };
            let scanned = minimize_1d(&f, 0.0, 1.0, 256).1;
            assert!(
                (exact - scanned).abs() < 1e-10,
                "({u},{v}): {exact} vs {scanned}"
            );
        }
    }

    #[test]
    fn subtract_keeps_reentrant_corner() {
        // 1D face [0,1], open cutter (0, 0.5): remainder must contain the
        // walls {0} and {0.5} and the segment [0.5, 1].
        let f_lo = [0.0; MAX_DIM];
        let mut f_hi = [0.0; MAX_DIM];
        f_hi[0] = 1.0;
        let mut c_lo = [0.0; MAX_DIM];
        let mut c_hi = [0.0; MAX_DIM];
        c_lo[0] = 0.0;
        c_hi[0] = 0.5;
        let rem = subtract_rects(f_lo, f_hi, &[(c_lo, c_hi)], 1);
        let covers = |x: f64| rem.iter().any(|(lo, hi)| lo[0] <= x && x <= hi[0]);
        assert!(covers(0.0));
        assert!(covers(0.5));
        assert!(covers(0.75));
        assert!(!covers(0.25));
    }

    #[test]
    fn subtract_2d_window() {
        // Face [0,1]^2 minus open window (0.25,0.75)^2: centre removed, rim kept.
        let f_lo = [0.0; MAX_DIM];
        let mut f_hi = [0.0; MAX_DIM];
        f_hi[0] = 1.0;
        f_hi[1] = 1.0;
        let mut c_lo = [0.0; MAX_DIM];
        let mut c_hi = [0.0; MAX_DIM];
        c_lo[0] = 0.25;
        c_lo[1] = 0.25;
        c_hi[0] = 0.75;
        c_hi[1] = 0.75;
        let rem = subtract_rects(f_lo, f_hi, &[(c_lo, c_hi)], 2);
        let covers = |x: f64, y: f64| {
            rem.iter()
                .any(|(lo, hi)| lo[0] <= x && x <= hi[0] && lo[1] <= y && y <= hi[1])
        };
        assert!(!covers(0.5, 0.5));
        assert!(covers(0.25, 0.5)); // window wall stays
        assert!(covers(0.1, 0.5));
        assert!(covers(0.5, 0.9));
    }
}
