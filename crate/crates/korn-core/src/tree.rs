//! Rooted trees over Whitney covers.
//!
//! The cover's full-face contact graph is spanned by a breadth-first tree.
//! Each node `t` carries its shadow (the cubes of its subtree), the smallest
//! dilation factor `K` with every shadow inside `K Q_t`, and an overlap box
//! `B_t` on the face shared with its parent, small enough to sit inside both
//! expanded cubes and pairwise disjoint across the tree.

use crate::geometry::dyadic::MAX_DIM;
use crate::whitney::WhitneyCover;
use serde::Serialize;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error(
        "cover is not face-connected: {reachable} of {total} cubes reachable; \
         first orphan at level {level} idx {idx:?}"
    )]
    Disconnected {
        reachable: usize,
        total: usize,
        level: u8,
        idx: Vec<i32>,
    },
    #[error("overlap boxes still collide after {halvings} halvings")]
    OverlapBoxes { halvings: u32 },
}

#[derive(Clone, Debug)]
pub struct RootedTree {
    pub root: usize,
    pub parent: Vec<Option<usize>>,
    /// Sorted child lists.
    pub children: Vec<Vec<usize>>,
    /// Parents precede children.
    pub bfs_order: Vec<usize>,
    pub depth: Vec<u32>,
}

impl RootedTree {
    /// Breadth-first spanning tree of the full-face contact graph. The root
    /// is the cube containing `root_hint` when given and locatable, otherwise
    /// the first coarsest cube.
    pub fn build(cover: &WhitneyCover, root_hint: Option<&[f64]>) -> Result<Self, TreeError> {
        let n = cover.len();
        let mut adj = vec![Vec::new(); n];
        for e in &cover.edges {
            if e.full_face {
                adj[e.a].push(e.b);
                adj[e.b].push(e.a);
            }
        }
        for v in &mut adj {
            v.sort_unstable();
        }
        let root = root_hint
            .and_then(|x| cover.locate(x))
            .unwrap_or_else(|| {
                (0..n)
                    .min_by_key(|&i| cover.cubes[i].level)
                    .expect("cover is nonempty")
            });
        let mut parent = vec![None; n];
        let mut depth = vec![0u32; n];
        let mut seen = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = std::collections::VecDeque::new();
        seen[root] = true;
        queue.push_back(root);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = Some(u);
                    depth[v] = depth[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        if order.len() != n {
            let orphan = (0..n).find(|&i| !seen[i]).unwrap();
            let c = &cover.cubes[orphan];
            return Err(TreeError::Disconnected {
                reachable: order.len(),
                total: n,
                level: c.level,
                idx: c.idx[..cover.dim].to_vec(),
            });
        }
        let mut children = vec![Vec::new(); n];
        for (v, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(v);
            }
        }
        for c in &mut children {
            c.sort_unstable();
        }
        Ok(RootedTree {
            root,
            parent,
            children,
            bfs_order: order,
            depth,
        })
    }

    /// Children before parents.
    pub fn post_order(&self) -> impl Iterator<Item = usize> + '_ {
        self.bfs_order.iter().rev().copied()
    }
}

/// Per-node subtree summaries.
#[derive(Clone, Debug)]
pub struct ShadowData {
    /// Total volume of the subtree's own cubes (the shadow measure).
    pub measure: Vec<f64>,
    pub bbox_lo: Vec<[f64; MAX_DIM]>,
    pub bbox_hi: Vec<[f64; MAX_DIM]>,
}

pub fn shadows(cover: &WhitneyCover, tree: &RootedTree) -> ShadowData {
    let n = cover.len();
    let dim = cover.dim;
    let mut measure = vec![0.0; n];
    let mut bbox_lo = vec![[f64::INFINITY; MAX_DIM]; n];
    let mut bbox_hi = vec![[f64::NEG_INFINITY; MAX_DIM]; n];
    for t in tree.post_order() {
        let c = &cover.cubes[t];
        let lo = cover.grid.lo(c);
        let hi = cover.grid.hi(c);
        measure[t] += cover.grid.volume(c);
        for a in 0..dim {
            bbox_lo[t][a] = bbox_lo[t][a].min(lo[a]);
            bbox_hi[t][a] = bbox_hi[t][a].max(hi[a]);
        }
        if let Some(p) = tree.parent[t] {
            measure[p] += measure[t];
            for a in 0..dim {
                bbox_lo[p][a] = bbox_lo[p][a].min(bbox_lo[t][a]);
                bbox_hi[p][a] = bbox_hi[p][a].max(bbox_hi[t][a]);
            }
        }
    }
    ShadowData {
        measure,
        bbox_lo,
        bbox_hi,
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ShadowConstant {
    /// Smallest K with every shadow inside the K-dilation of its node cube.
    pub k: f64,
    /// Node attaining it.
    pub witness: usize,
}

pub fn shadow_constant(
    cover: &WhitneyCover,
    tree: &RootedTree,
    sh: &ShadowData,
) -> ShadowConstant {
    let dim = cover.dim;
    let mut best = 0.0f64;
    let mut witness = tree.root;
    for t in 0..cover.len() {
        let c = &cover.cubes[t];
        let side = cover.grid.side(c.level);
        let lo = cover.grid.lo(c);
        let mut dev = 0.0f64;
        for a in 0..dim {
            let ctr = lo[a] + 0.5 * side;
            dev = dev.max((sh.bbox_lo[t][a] - ctr).abs());
            dev = dev.max((sh.bbox_hi[t][a] - ctr).abs());
        }
        let k = 2.0 * dev / side;
        if k > best {
            best = k;
            witness = t;
        }
    }
    ShadowConstant { k: best, witness }
}

/// Confirm the constant: every shadow fits in the K-dilation (with slack for
/// rounding) and the witness subtree attains it within `sharp_slack`.
pub fn verify_shadow_constant(
    cover: &WhitneyCover,
    tree: &RootedTree,
    sh: &ShadowData,
    sc: &ShadowConstant,
    sharp_slack: f64,
) -> bool {
    let dim = cover.dim;
    let half = |t: usize| -> ([f64; MAX_DIM], f64) {
        let c = &cover.cubes[t];
        let side = cover.grid.side(c.level);
        let lo = cover.grid.lo(c);
        let mut ctr = [0.0; MAX_DIM];
        for a in 0..dim {
            ctr[a] = lo[a] + 0.5 * side;
        }
        (ctr, 0.5 * side)
    };
    for t in 0..cover.len() {
        let (ctr, h) = half(t);
        let reach = sc.k * h * (1.0 + 1e-12);
        for a in 0..dim {
            if (sh.bbox_lo[t][a] - ctr[a]).abs() > reach
                || (sh.bbox_hi[t][a] - ctr[a]).abs() > reach
            {
                return false;
            }
        }
    }
    // Sharpness: some corner of some descendant cube of the witness reaches
    // K/2 times its side from the witness center.
    let (ctr, h) = half(sc.witness);
    let goal = sc.k * h * (1.0 - sharp_slack);
    let mut stack = vec![sc.witness];
    while let Some(t) = stack.pop() {
        let c = &cover.cubes[t];
        let lo = cover.grid.lo(c);
        let hi = cover.grid.hi(c);
        for a in 0..dim {
            if (lo[a] - ctr[a]).abs() >= goal || (hi[a] - ctr[a]).abs() >= goal {
                return true;
            }
        }
        stack.extend(tree.children[t].iter().copied());
    }
    false
}

/// Overlap box on the face a node shares with its parent.
#[derive(Clone, Debug, Serialize)]
pub struct OverlapBox {
    pub node: usize,
    pub lo: [f64; MAX_DIM],
    pub hi: [f64; MAX_DIM],
    /// Axis normal to the shared face and the face coordinate.
    pub axis: usize,
    pub plane: f64,
    /// Cover cubes owning the halves below and above the face plane.
    pub cube_lo: usize,
    pub cube_hi: usize,
}

/// One box per non-root node, centered on the shared face at one eighth of
/// the finer side, halved together until pairwise disjoint.
pub fn overlap_boxes(
    cover: &WhitneyCover,
    tree: &RootedTree,
) -> Result<(Vec<OverlapBox>, u32), TreeError> {
    let dim = cover.dim;
    struct Seed {
        node: usize,
        center: [f64; MAX_DIM],
        half0: f64,
        axis: usize,
        plane: f64,
        cube_lo: usize,
        cube_hi: usize,
    }
    let mut seeds = Vec::new();
    for &t in &tree.bfs_order {
        let Some(p) = tree.parent[t] else { continue };
        let (ct, cp) = (&cover.cubes[t], &cover.cubes[p]);
        let (fine, coarse) = if ct.level >= cp.level { (t, p) } else { (p, t) };
        let (cf, cc) = (&cover.cubes[fine], &cover.cubes[coarse]);
        let sf = cover.grid.side(cf.level);
        let sc_ = cover.grid.side(cc.level);
        let lof = cover.grid.lo(cf);
        let loc = cover.grid.lo(cc);
        let mut center = [0.0; MAX_DIM];
        let mut axis = None;
        for a in 0..dim {
            let cfa = lof[a] + 0.5 * sf;
            let cca = loc[a] + 0.5 * sc_;
            if (cfa - cca).abs() == 0.5 * (sf + sc_) {
                debug_assert!(axis.is_none(), "cubes touch along one axis only");
                let plane = if cfa < cca { cfa + 0.5 * sf } else { cfa - 0.5 * sf };
                let (cube_lo, cube_hi) = if cfa < cca { (fine, coarse) } else { (coarse, fine) };
                axis = Some((a, plane, cube_lo, cube_hi));
                center[a] = 0.0;
            } else {
                center[a] = cfa;
            }
        }
        let (a, plane, cube_lo, cube_hi) = axis.expect("tree edges are full-face contacts");
        center[a] = plane;
        seeds.push(Seed {
            node: t,
            center,
            half0: sf.min(sc_) / 16.0,
            axis: a,
            plane,
            cube_lo,
            cube_hi,
        });
    }
    let boxes_at = |shrink: f64| -> Vec<OverlapBox> {
        seeds
            .iter()
            .map(|s| {
                let h = s.half0 * shrink;
                let mut lo = [0.0; MAX_DIM];
                let mut hi = [0.0; MAX_DIM];
                for a in 0..dim {
                    lo[a] = s.center[a] - h;
                    hi[a] = s.center[a] + h;
                }
                OverlapBox {
                    node: s.node,
                    lo,
                    hi,
                    axis: s.axis,
                    plane: s.plane,
                    cube_lo: s.cube_lo,
                    cube_hi: s.cube_hi,
                }
            })
            .collect()
    };
    let mut shrink = 1.0;
    for halvings in 0..=8u32 {
        let boxes = boxes_at(shrink);
        if pairwise_disjoint(&boxes, dim) {
            // Each box must sit inside the expanded cubes of both endpoints.
            for b in &boxes {
                let t = b.node;
                let p = tree.parent[t].unwrap();
                for q in [t, p] {
                    let (elo, ehi) = cover.grid.extended_bounds(&cover.cubes[q]);
                    for a in 0..dim {
                        assert!(
                            b.lo[a] >= elo[a] && b.hi[a] <= ehi[a],
                            "overlap box of node {t} leaves expanded cube {q}"
                        );
                    }
                }
            }
            return Ok((boxes, halvings));
        }
        shrink *= 0.5;
    }
    Err(TreeError::OverlapBoxes { halvings: 8 })
}

fn pairwise_disjoint(boxes: &[OverlapBox], dim: usize) -> bool {
    if boxes.is_empty() {
        return true;
    }
    let cell = boxes
        .iter()
        .map(|b| b.hi[0] - b.lo[0])
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let key = |b: &OverlapBox| -> [i64; MAX_DIM] {
        let mut k = [0i64; MAX_DIM];
        for a in 0..dim {
            k[a] = (0.5 * (b.lo[a] + b.hi[a]) / cell).floor() as i64;
        }
        k
    };
    let mut grid: HashMap<[i64; MAX_DIM], Vec<usize>> = HashMap::new();
    for (i, b) in boxes.iter().enumerate() {
        grid.entry(key(b)).or_default().push(i);
    }
    let overlaps = |x: &OverlapBox, y: &OverlapBox| -> bool {
        (0..dim).all(|a| x.lo[a] < y.hi[a] && y.lo[a] < x.hi[a])
    };
    for (i, b) in boxes.iter().enumerate() {
        let k0 = key(b);
        let mut off = [-1i64; MAX_DIM];
        loop {
            let mut k = k0;
            for a in 0..dim {
                k[a] += off[a];
            }
            if let Some(cellmates) = grid.get(&k) {
                for &j in cellmates {
                    if j > i && overlaps(b, &boxes[j]) {
                        return false;
                    }
                }
            }
            let mut a = 0;
            loop {
                if a == dim {
                    break;
                }
                off[a] += 1;
                if off[a] <= 1 {
                    break;
                }
                off[a] = -1;
                a += 1;
            }
            if a == dim {
                break;
            }
        }
    }
    true
}
