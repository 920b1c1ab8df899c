//! Software bounding volume hierarchy over particle search spheres.
//!
//! Stands in for the hardware BVH of a ray-tracing core: it can be built from
//! scratch (LBVH over Morton codes) or refitted in place, and answers
//! point-containment queries ("which spheres contain `q`?"). Refitting keeps
//! the topology fixed, so as particles drift the boxes overlap more and the
//! per-query traversal work grows; [`TraversalStats`] makes that visible.

use std::ops::AddAssign;

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Domain, ParticleSystem, Vec3};

pub const DEFAULT_LEAF_SIZE: usize = 4;

const MORTON_BITS: u32 = 10;
const STACK_DEPTH: usize = 128;
/// Boxes are padded by this fraction of the box length so that rounding in
/// translated (ghost) query points can never prune a true hit.
const PAD_FRACTION: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TraversalStats {
    pub queries: u64,
    pub nodes_visited: u64,
    pub leaves_visited: u64,
    pub sphere_tests: u64,
    pub hits: u64,
}

impl TraversalStats {
    pub fn mean_nodes_visited(&self) -> f64 {
        if self.queries == 0 {
            0.0
        } else {
            self.nodes_visited as f64 / self.queries as f64
        }
    }
}

impl AddAssign for TraversalStats {
    fn add_assign(&mut self, o: Self) {
        self.queries += o.queries;
        self.nodes_visited += o.nodes_visited;
        self.leaves_visited += o.leaves_visited;
        self.sphere_tests += o.sphere_tests;
        self.hits += o.hits;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    aabb: Aabb,
    /// Left child, or first slot in `prim_order` for a leaf.
    first: u32,
    /// Right child for an internal node.
    right: u32,
    /// Primitive count; zero marks an internal node.
    count: u32,
    /// Largest search radius in the subtree.
    max_radius: f64,
}

impl Node {
    #[inline]
    fn is_leaf(&self) -> bool {
        self.count > 0
    }
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    prim_order: Vec<u32>,
    leaf_size: usize,
    epoch: u64,
    pad: f64,
}

/// Spreads the low 10 bits of `v` so that two zero bits separate each one.
fn expand_bits(v: u32) -> u32 {
    let mut v = v & 0x3ff;
    v = (v | (v << 16)) & 0x0300_00ff;
    v = (v | (v << 8)) & 0x0300_f00f;
    v = (v | (v << 4)) & 0x030c_30c3;
    v = (v | (v << 2)) & 0x0924_9249;
    v
}

/// 30-bit Morton code of `p` on a 2^10-per-axis grid over the box.
pub fn morton_code(p: Vec3, side_length: f64) -> u32 {
    let cells = (1u32 << MORTON_BITS) as f64;
    let q = |v: f64| ((v / side_length * cells).floor().clamp(0.0, cells - 1.0)) as u32;
    (expand_bits(q(p.x)) << 2) | (expand_bits(q(p.y)) << 1) | expand_bits(q(p.z))
}

impl Bvh {
    pub fn build(ps: &ParticleSystem, domain: &Domain, leaf_size: usize) -> Bvh {
        assert!(!ps.is_empty(), "cannot build a BVH over zero particles");
        let leaf_size = leaf_size.max(1);
        let mut keyed: Vec<(u32, u32)> = ps
            .positions
            .iter()
            .enumerate()
            .map(|(i, p)| (morton_code(*p, domain.side_length), i as u32))
            .collect();
        keyed.sort_unstable();

        let codes: Vec<u32> = keyed.iter().map(|k| k.0).collect();
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * ps.len() / leaf_size + 1),
            prim_order: keyed.into_iter().map(|k| k.1).collect(),
            leaf_size,
            epoch: 0,
            pad: PAD_FRACTION * domain.side_length,
        };
        bvh.build_range(&codes, ps, 0, codes.len());
        bvh
    }

    /// Emits the subtree for sorted slots `lo..hi` in preorder, returning its root.
    fn build_range(&mut self, codes: &[u32], ps: &ParticleSystem, lo: usize, hi: usize) -> u32 {
        let idx = self.nodes.len() as u32;
        self.nodes.push(Node {
            aabb: Aabb::EMPTY,
            first: lo as u32,
            right: 0,
            count: 0,
            max_radius: 0.0,
        });
        if hi - lo <= self.leaf_size {
            let (aabb, max_radius) = leaf_bounds(&self.prim_order[lo..hi], ps, self.pad);
            let node = &mut self.nodes[idx as usize];
            node.count = (hi - lo) as u32;
            node.aabb = aabb;
            node.max_radius = max_radius;
            return idx;
        }
        let split = split_position(codes, lo, hi);
        let left = self.build_range(codes, ps, lo, split);
        let right = self.build_range(codes, ps, split, hi);
        let (l, r) = (self.nodes[left as usize], self.nodes[right as usize]);
        let node = &mut self.nodes[idx as usize];
        node.first = left;
        node.right = right;
        node.aabb = l.aabb.union(&r.aabb);
        node.max_radius = l.max_radius.max(r.max_radius);
        idx
    }

    /// Recomputes every box from current positions without touching the topology.
    pub fn refit(&mut self, ps: &ParticleSystem) -> Result<()> {
        if ps.len() != self.prim_order.len() {
            return Err(Error::Structure(format!(
                "BVH built over {} particles, refit with {}",
                self.prim_order.len(),
                ps.len()
            )));
        }
        // Preorder layout: children always sit after their parent.
        for idx in (0..self.nodes.len()).rev() {
            let node = self.nodes[idx];
            let (aabb, max_radius) = if node.is_leaf() {
                let lo = node.first as usize;
                leaf_bounds(&self.prim_order[lo..lo + node.count as usize], ps, self.pad)
            } else {
                let (l, r) = (
                    self.nodes[node.first as usize],
                    self.nodes[node.right as usize],
                );
                (l.aabb.union(&r.aabb), l.max_radius.max(r.max_radius))
            };
            self.nodes[idx].aabb = aabb;
            self.nodes[idx].max_radius = max_radius;
        }
        self.epoch += 1;
        Ok(())
    }

    /// Calls `visitor(j)` once for every `j != exclude` with `|q - p_j| < r_j`.
    pub fn query_point<F: FnMut(usize)>(
        &self,
        ps: &ParticleSystem,
        q: Vec3,
        exclude: Option<usize>,
        stats: &mut TraversalStats,
        mut visitor: F,
    ) {
        self.traverse(q, f64::NEG_INFINITY, stats, |j, st| {
            if Some(j) == exclude {
                return;
            }
            st.sphere_tests += 1;
            let r = ps.radii()[j];
            if (q - ps.positions[j]).norm_squared() < r * r {
                st.hits += 1;
                visitor(j);
            }
        });
    }

    /// Calls `visitor(j)` for every primitive `j != exclude` accepted by `keep`
    /// in a leaf whose padded box contains `q`, skipping subtrees whose radii
    /// all fall below `min_radius`. A superset of the exact hits; the caller
    /// applies its own predicate and returns whether `j` was a real hit.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn for_each_candidate<K: Fn(usize) -> bool, F: FnMut(usize) -> bool>(
        &self,
        q: Vec3,
        min_radius: f64,
        exclude: usize,
        stats: &mut TraversalStats,
        keep: K,
        mut visitor: F,
    ) {
        self.traverse(q, min_radius, stats, |j, st| {
            if j == exclude || !keep(j) {
                return;
            }
            st.sphere_tests += 1;
            if visitor(j) {
                st.hits += 1;
            }
        });
    }

    #[inline]
    fn traverse<F: FnMut(usize, &mut TraversalStats)>(
        &self,
        q: Vec3,
        min_radius: f64,
        stats: &mut TraversalStats,
        mut leaf_prim: F,
    ) {
        stats.queries += 1;
        let mut stack = [0u32; STACK_DEPTH];
        let mut top = 0usize;
        let enter = |node: &Node| node.max_radius >= min_radius && node.aabb.contains_point(q);
        if enter(&self.nodes[0]) {
            stack[0] = 0;
            top = 1;
        }
        while top > 0 {
            top -= 1;
            let node = &self.nodes[stack[top] as usize];
            stats.nodes_visited += 1;
            if node.is_leaf() {
                stats.leaves_visited += 1;
                let lo = node.first as usize;
                for &j in &self.prim_order[lo..lo + node.count as usize] {
                    leaf_prim(j as usize, stats);
                }
                continue;
            }
            for child in [node.right, node.first] {
                if enter(&self.nodes[child as usize]) {
                    debug_assert!(top < STACK_DEPTH);
                    stack[top] = child;
                    top += 1;
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.prim_order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prim_order.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Refits since the last build.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    pub fn prim_order(&self) -> &[u32] {
        &self.prim_order
    }

    /// Heap bytes held by the node array and primitive order.
    pub fn footprint_bytes(&self) -> usize {
        self.nodes.len() * std::mem::size_of::<Node>() + self.prim_order.len() * 4
    }

    pub fn root_aabb(&self) -> Aabb {
        self.nodes[0].aabb
    }

    /// Node boxes in storage (preorder) order.
    pub fn node_aabbs(&self) -> Vec<Aabb> {
        self.nodes.iter().map(|n| n.aabb).collect()
    }

    /// Tree height in nodes along the longest root-to-leaf path.
    pub fn height(&self) -> usize {
        fn depth(nodes: &[Node], idx: usize) -> usize {
            let n = &nodes[idx];
            if n.is_leaf() {
                1
            } else {
                1 + depth(nodes, n.first as usize).max(depth(nodes, n.right as usize))
            }
        }
        depth(&self.nodes, 0)
    }

    /// Checks parent-contains-children and leaf-contains-spheres for every node.
    pub fn check_containment(&self, ps: &ParticleSystem) -> bool {
        self.nodes.iter().all(|node| {
            if node.is_leaf() {
                let lo = node.first as usize;
                self.prim_order[lo..lo + node.count as usize]
                    .iter()
                    .all(|&j| {
                        let j = j as usize;
                        node.aabb
                            .contains(&Aabb::around_sphere(ps.positions[j], ps.radii()[j]))
                    })
            } else {
                node.aabb.contains(&self.nodes[node.first as usize].aabb)
                    && node.aabb.contains(&self.nodes[node.right as usize].aabb)
            }
        })
    }
}

/// Padded box around the leaf's spheres and their largest radius.
fn leaf_bounds(prims: &[u32], ps: &ParticleSystem, pad: f64) -> (Aabb, f64) {
    let (aabb, max_radius) = prims.iter().fold((Aabb::EMPTY, 0.0f64), |(acc, r), &j| {
        let j = j as usize;
        let rj = ps.radii()[j];
        (
            acc.union(&Aabb::around_sphere(ps.positions[j], rj)),
            r.max(rj),
        )
    });
    (aabb.grow(pad), max_radius)
}

/// Split at the highest bit where the range's codes differ; median on ties.
fn split_position(codes: &[u32], lo: usize, hi: usize) -> usize {
    let first = codes[lo];
    let last = codes[hi - 1];
    if first == last {
        return (lo + hi) / 2;
    }
    let prefix = (first ^ last).leading_zeros();
    lo + codes[lo..hi].partition_point(|&c| (c ^ first).leading_zeros() > prefix)
}
