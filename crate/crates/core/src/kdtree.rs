//! Static kd-tree over points in R^3.
//!
//! Node distance bounds are computed with the same per-coordinate operations
//! as `geometry::dist`, and IEEE rounding is monotone, so `min_dist(node, x)`
//! never exceeds the computed distance of any point in the node (and
//! `max_dist` never falls below it). Pruning is therefore exact.

use crate::geometry::{dist, Point};

const NONE: u32 = u32::MAX;

#[derive(Clone, Debug)]
pub struct KdNode {
    pub lo: Point,
    pub hi: Point,
    pub start: usize,
    pub end: usize,
    pub left: u32,
    pub right: u32,
}

impl KdNode {
    #[inline]
    pub fn is_leaf(&self) -> bool {
        self.left == NONE
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// A set of distances `d` from a query point, with open or closed ends.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistRange {
    pub lo: f64,
    pub lo_closed: bool,
    pub hi: f64,
    pub hi_closed: bool,
}

impl DistRange {
    /// `d < r`.
    pub fn open_ball(r: f64) -> Self {
        DistRange { lo: f64::NEG_INFINITY, lo_closed: false, hi: r, hi_closed: false }
    }

    /// `d <= r`.
    pub fn closed_ball(r: f64) -> Self {
        DistRange { lo: f64::NEG_INFINITY, lo_closed: false, hi: r, hi_closed: true }
    }

    /// `inner <= d < outer`.
    pub fn shell(inner: f64, outer: f64) -> Self {
        DistRange { lo: inner, lo_closed: true, hi: outer, hi_closed: false }
    }

    /// `d >= r`.
    pub fn outside(r: f64) -> Self {
        DistRange { lo: r, lo_closed: true, hi: f64::INFINITY, hi_closed: true }
    }

    #[inline]
    pub fn contains(&self, d: f64) -> bool {
        let above = d > self.lo || (self.lo_closed && d == self.lo);
        let below = d < self.hi || (self.hi_closed && d == self.hi);
        above && below
    }

    #[inline]
    fn misses(&self, mn: f64, mx: f64) -> bool {
        mx < self.lo || (mx == self.lo && !self.lo_closed) || mn > self.hi || (mn == self.hi && !self.hi_closed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coverage {
    Outside,
    Inside,
    Partial,
}

#[derive(Clone, Debug)]
pub struct KdTree {
    /// `order[i]` is the caller's index of the i-th point in tree order.
    pub order: Vec<usize>,
    pub points: Vec<Point>,
    pub nodes: Vec<KdNode>,
}

impl KdTree {
    pub fn build(points: &[Point], leaf_size: usize) -> KdTree {
        let leaf_size = leaf_size.max(1);
        let mut items: Vec<(Point, usize)> = points.iter().copied().zip(0..).collect();
        let mut nodes = Vec::new();
        if !items.is_empty() {
            build_node(&mut items, 0, &mut nodes, leaf_size);
        }
        KdTree {
            order: items.iter().map(|&(_, i)| i).collect(),
            points: items.iter().map(|&(p, _)| p).collect(),
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn min_dist(&self, node: &KdNode, x: &Point) -> f64 {
        let mut g = [0.0; 3];
        for k in 0..3 {
            g[k] = if x[k] < node.lo[k] {
                node.lo[k] - x[k]
            } else if x[k] > node.hi[k] {
                x[k] - node.hi[k]
            } else {
                0.0
            };
        }
        (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt()
    }

    #[inline]
    pub fn max_dist(&self, node: &KdNode, x: &Point) -> f64 {
        let mut g = [0.0; 3];
        for k in 0..3 {
            g[k] = (x[k] - node.lo[k]).abs().max((node.hi[k] - x[k]).abs());
        }
        (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt()
    }

    #[inline]
    pub fn coverage(&self, node: &KdNode, x: &Point, range: &DistRange) -> Coverage {
        let mn = self.min_dist(node, x);
        let mx = self.max_dist(node, x);
        if range.misses(mn, mx) {
            Coverage::Outside
        } else if range.contains(mn) && range.contains(mx) {
            Coverage::Inside
        } else {
            Coverage::Partial
        }
    }

    /// Calls `f(tree_position, distance)` for every point whose distance from
    /// `x` lies in `range`.
    pub fn for_each_in_range(&self, x: &Point, range: &DistRange, mut f: impl FnMut(usize, f64)) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            match self.coverage(node, x, range) {
                Coverage::Outside => {}
                Coverage::Partial if !node.is_leaf() => {
                    stack.push(node.right);
                    stack.push(node.left);
                }
                _ => {
                    for i in node.start..node.end {
                        let d = dist(&self.points[i], x);
                        if range.contains(d) {
                            f(i, d);
                        }
                    }
                }
            }
        }
    }

    /// Caller indices of the points in `range`, sorted ascending.
    pub fn indices_in_range(&self, x: &Point, range: &DistRange) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_in_range(x, range, |i, _| out.push(self.order[i]));
        out.sort_unstable();
        out
    }

    /// Smallest distance from `x` that is strictly greater than `r`.
    pub fn next_distance_above(&self, x: &Point, r: f64) -> Option<f64> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = f64::INFINITY;
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            if self.min_dist(node, x) >= best || self.max_dist(node, x) <= r {
                continue;
            }
            if node.is_leaf() {
                for i in node.start..node.end {
                    let d = dist(&self.points[i], x);
                    if d > r && d < best {
                        best = d;
                    }
                }
            } else {
                let (a, b) = (node.left, node.right);
                let da = self.min_dist(&self.nodes[a as usize], x);
                let db = self.min_dist(&self.nodes[b as usize], x);
                if da <= db {
                    stack.push(b);
                    stack.push(a);
                } else {
                    stack.push(a);
                    stack.push(b);
                }
            }
        }
        best.is_finite().then_some(best)
    }

    /// Distance from `x` to the nearest point.
    pub fn nearest_distance(&self, x: &Point) -> Option<f64> {
        self.next_distance_above(x, f64::NEG_INFINITY)
    }

    /// Largest distance from `x` to a point, or `floor` if no point is farther.
    pub fn farthest_distance(&self, x: &Point, floor: f64) -> f64 {
        let mut best = floor;
        if self.nodes.is_empty() {
            return best;
        }
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            if self.max_dist(node, x) <= best {
                continue;
            }
            if node.is_leaf() {
                for i in node.start..node.end {
                    best = best.max(dist(&self.points[i], x));
                }
            } else {
                stack.push(node.left);
                stack.push(node.right);
            }
        }
        best
    }

    /// Exact diameter of the point set.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0;
        for p in &self.points {
            best = self.farthest_distance(p, best);
        }
        best
    }
}

fn build_node(items: &mut [(Point, usize)], offset: usize, nodes: &mut Vec<KdNode>, leaf_size: usize) -> u32 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for (p, _) in items.iter() {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let id = nodes.len() as u32;
    nodes.push(KdNode { lo, hi, start: offset, end: offset + items.len(), left: NONE, right: NONE });
    if items.len() <= leaf_size {
        return id;
    }
    let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a))).unwrap();
    let mid = items.len() / 2;
    items.select_nth_unstable_by(mid, |a, b| a.0[axis].total_cmp(&b.0[axis]).then(a.1.cmp(&b.1)));
    let (left, right) = items.split_at_mut(mid);
    let l = build_node(left, offset, nodes, leaf_size);
    let r = build_node(right, offset + mid, nodes, leaf_size);
    nodes[id as usize].left = l;
    nodes[id as usize].right = r;
    id
}
