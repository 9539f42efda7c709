//! Finite atomic measures with an exact ball-mass index, and test-measure
//! generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::ExactSum;
use crate::geometry::{dist, Point, ORIGIN};
use crate::kdtree::{Coverage, DistRange, KdTree};

const LEAF_SIZE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmbientParams {
    pub d: usize,
    pub s: f64,
}

impl AmbientParams {
    pub fn new(d: usize, s: f64) -> Result<Self> {
        if d != 2 && d != 3 {
            return Err(Error::invalid(format!("dimension must be 2 or 3, got {d}")));
        }
        if !(s > (d - 1) as f64 && s < d as f64) {
            return Err(Error::invalid(format!("need d-1 < s < d, got d={d}, s={s}")));
        }
        Ok(AmbientParams { d, s })
    }
}

/// Exact ball-mass index: a kd-tree whose nodes carry their weight totals as
/// non-overlapping expansions, so any traversal yields the correctly rounded
/// mass.
#[derive(Clone, Debug)]
pub struct MassIndex {
    tree: KdTree,
    weights: Vec<f64>,
    node_sums: Vec<ExactSum>,
}

impl MassIndex {
    fn build(points: &[Point], weights: &[f64]) -> MassIndex {
        let tree = KdTree::build(points, LEAF_SIZE);
        let tw: Vec<f64> = tree.order.iter().map(|&i| weights[i]).collect();
        let node_sums = tree.nodes.iter().map(|n| tw[n.start..n.end].iter().copied().collect()).collect();
        MassIndex { tree, weights: tw, node_sums }
    }

    pub fn tree(&self) -> &KdTree {
        &self.tree
    }

    pub fn sum_in_range(&self, x: &Point, range: &DistRange) -> ExactSum {
        let mut acc = ExactSum::new();
        if self.tree.nodes.is_empty() {
            return acc;
        }
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            let node = &self.tree.nodes[id as usize];
            match self.tree.coverage(node, x, range) {
                Coverage::Outside => {}
                Coverage::Inside => acc.add_all(&self.node_sums[id as usize]),
                Coverage::Partial if !node.is_leaf() => {
                    stack.push(node.right);
                    stack.push(node.left);
                }
                Coverage::Partial => {
                    for i in node.start..node.end {
                        if range.contains(dist(&self.tree.points[i], x)) {
                            acc.add(self.weights[i]);
                        }
                    }
                }
            }
        }
        acc
    }
}

#[derive(Clone, Debug)]
pub struct AtomicMeasure {
    ambient: AmbientParams,
    positions: Vec<Point>,
    weights: Vec<f64>,
    total_mass: f64,
    index: MassIndex,
}

impl AtomicMeasure {
    pub fn new(ambient: AmbientParams, positions: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        let ambient = AmbientParams::new(ambient.d, ambient.s)?;
        if positions.len() != weights.len() {
            return Err(Error::invalid("positions and weights differ in length"));
        }
        for (i, (p, &w)) in positions.iter().zip(&weights).enumerate() {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::invalid(format!("atom {i}: weight must be positive and finite, got {w}")));
            }
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::invalid(format!("atom {i}: non-finite coordinate")));
            }
            if ambient.d == 2 && p[2] != 0.0 {
                return Err(Error::invalid(format!("atom {i}: third coordinate must be 0 in d=2")));
            }
        }
        let total_mass = weights.iter().copied().collect::<ExactSum>().value();
        let index = MassIndex::build(&positions, &weights);
        Ok(AtomicMeasure { ambient, positions, weights, total_mass, index })
    }

    pub fn empty(ambient: AmbientParams) -> Self {
        AtomicMeasure::new(ambient, vec![], vec![]).expect("empty measure is valid")
    }

    pub fn ambient(&self) -> AmbientParams {
        self.ambient
    }

    pub fn d(&self) -> usize {
        self.ambient.d
    }

    pub fn s(&self) -> f64 {
        self.ambient.s
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn position(&self, i: usize) -> &Point {
        &self.positions[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn index(&self) -> &MassIndex {
        &self.index
    }

    /// μ(B(x, r)) for the open ball.
    pub fn ball_mass(&self, x: &Point, r: f64) -> Result<f64> {
        check_point(x)?;
        if !(r > 0.0) || r.is_nan() {
            return Err(Error::invalid(format!("radius must be positive, got {r}")));
        }
        Ok(self.open_mass(x, r))
    }

    /// Mass of atoms with |a - x| < r; no argument checks.
    pub fn open_mass(&self, x: &Point, r: f64) -> f64 {
        self.index.sum_in_range(x, &DistRange::open_ball(r)).value()
    }

    /// Mass of atoms with |a - x| <= r.
    pub fn closed_mass(&self, x: &Point, r: f64) -> f64 {
        self.index.sum_in_range(x, &DistRange::closed_ball(r)).value()
    }

    /// Mass of atoms with inner <= |a - x| < outer.
    pub fn shell_mass(&self, x: &Point, inner: f64, outer: f64) -> f64 {
        self.index.sum_in_range(x, &DistRange::shell(inner, outer)).value()
    }

    pub fn mass_in_range(&self, x: &Point, range: &DistRange) -> f64 {
        self.index.sum_in_range(x, range).value()
    }

    /// Open-ball mass by a linear scan; the reference for the index.
    pub fn ball_mass_scan(&self, x: &Point, r: f64) -> f64 {
        self.positions
            .iter()
            .zip(&self.weights)
            .filter(|(p, _)| dist(p, x) < r)
            .map(|(_, &w)| w)
            .collect::<ExactSum>()
            .value()
    }

    /// Indices of atoms in the open ball, ascending.
    pub fn atoms_within(&self, x: &Point, r: f64) -> Vec<usize> {
        self.index.tree().indices_in_range(x, &DistRange::open_ball(r))
    }

    pub fn atoms_in_range(&self, x: &Point, range: &DistRange) -> Vec<usize> {
        self.index.tree().indices_in_range(x, range)
    }

    pub fn next_distance_above(&self, x: &Point, r: f64) -> Option<f64> {
        self.index.tree().next_distance_above(x, r)
    }

    pub fn nearest_distance(&self, x: &Point) -> Option<f64> {
        self.index.tree().nearest_distance(x)
    }

    /// Index of the lowest-numbered atom located exactly at `x`, if any.
    pub fn atom_at(&self, x: &Point) -> Option<usize> {
        self.index.tree().indices_in_range(x, &DistRange::closed_ball(0.0)).first().copied()
    }

    pub fn diameter(&self) -> f64 {
        self.index.tree().diameter()
    }

    /// Axis-aligned bounding box of the support.
    pub fn bounding_box(&self) -> Option<(Point, Point)> {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.positions {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (!self.positions.is_empty()).then_some((lo, hi))
    }

    /// The measure restricted to the listed atoms (kept in the given order).
    pub fn restrict(&self, atoms: &[usize]) -> AtomicMeasure {
        let pos = atoms.iter().map(|&i| self.positions[i]).collect();
        let w = atoms.iter().map(|&i| self.weights[i]).collect();
        AtomicMeasure::new(self.ambient, pos, w).expect("restriction of a valid measure")
    }

    /// Same atoms with every weight multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<AtomicMeasure> {
        let w = self.weights.iter().map(|w| w * c).collect();
        AtomicMeasure::new(self.ambient, self.positions.clone(), w)
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<AtomicMeasure> {
        AtomicMeasure::new(self.ambient, self.positions.clone(), weights)
    }
}

pub fn check_point(x: &Point) -> Result<()> {
    if x.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid("non-finite point"))
    }
}

/// Equal-mass Cantor measure on the unit cube: each cell keeps its 2^d corner
/// sub-cells of side `ratio` times its own; atoms sit at the centres of the
/// depth-level cells.
pub fn build_cantor_measure(
    d: usize,
    s: f64,
    depth: u32,
    ratio: Option<f64>,
    jitter_seed: Option<u64>,
) -> Result<AtomicMeasure> {
    let ambient = AmbientParams::new(d, s)?;
    let ratio = ratio.unwrap_or_else(|| 2f64.powf(-(d as f64) / s));
    if !(ratio > 0.0 && ratio < 0.5) {
        return Err(Error::invalid(format!("ratio must lie in (0, 1/2), got {ratio}")));
    }
    let nchild = 1usize << d;
    let count = nchild
        .checked_pow(depth)
        .filter(|&n| n <= 1 << 26)
        .ok_or_else(|| Error::invalid(format!("depth {depth} is too large")))?;
    let mut corners = vec![ORIGIN];
    let mut side = 1.0;
    for _ in 0..depth {
        let step = side - side * ratio;
        let mut next = Vec::with_capacity(corners.len() * nchild);
        for c in &corners {
            for b in 0..nchild {
                let mut p = *c;
                for (k, pk) in p.iter_mut().enumerate().take(d) {
                    if b >> k & 1 == 1 {
                        *pk += step;
                    }
                }
                next.push(p);
            }
        }
        corners = next;
        side *= ratio;
    }
    let mut rng = jitter_seed.map(ChaCha8Rng::seed_from_u64);
    let amp = 0.01 * side / (d as f64).sqrt();
    let positions: Vec<Point> = corners
        .iter()
        .map(|c| {
            let mut p = *c;
            for pk in p.iter_mut().take(d) {
                *pk += side / 2.0;
                if let Some(rng) = rng.as_mut() {
                    *pk += rng.gen_range(-amp..=amp);
                }
            }
            p
        })
        .collect();
    let w = 2f64.powi(-((d as u32 * depth) as i32));
    debug_assert_eq!(positions.len(), count);
    AtomicMeasure::new(ambient, positions, vec![w; count])
}

/// Push-forward under a ↦ λa + z with weights multiplied by λ^s.
pub fn rescale_measure(mu: &AtomicMeasure, lambda: f64, z: &Point) -> Result<AtomicMeasure> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("scale factor must be positive, got {lambda}")));
    }
    check_point(z)?;
    if mu.d() == 2 && z[2] != 0.0 {
        return Err(Error::invalid("translation must be planar in d=2"));
    }
    let ls = lambda.powf(mu.s());
    let pos =
        mu.positions().iter().map(|a| [lambda * a[0] + z[0], lambda * a[1] + z[1], lambda * a[2] + z[2]]).collect();
    let w = mu.weights().iter().map(|w| w * ls).collect();
    AtomicMeasure::new(mu.ambient(), pos, w)
}

pub fn translate_measure(mu: &AtomicMeasure, z: &Point) -> Result<AtomicMeasure> {
    check_point(z)?;
    let pos = mu.positions().iter().map(|a| [a[0] + z[0], a[1] + z[1], a[2] + z[2]]).collect();
    AtomicMeasure::new(mu.ambient(), pos, mu.weights().to_vec())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub c1_empirical: f64,
    pub probe_count: usize,
    pub argmax: Option<(Point, f64)>,
    pub radius_range: (f64, f64),
}

/// Log-spaced radii used by `growth_probe`: 64 radii from 2^-20 R to R, where
/// R is twice the bounding-box diagonal (or 1 for a degenerate support).
pub fn default_growth_radii(mu: &AtomicMeasure) -> Vec<f64> {
    let extent = mu.bounding_box().map(|(lo, hi)| dist(&lo, &hi)).filter(|&e| e > 0.0).unwrap_or(0.5);
    let top = 2.0 * extent;
    (0..64).map(|i| top * 2f64.powf(-20.0 * i as f64 / 63.0)).collect()
}

pub fn growth_probe(mu: &AtomicMeasure, sample_count: usize, rng_seed: u64) -> Result<GrowthReport> {
    let radii = default_growth_radii(mu);
    growth_probe_with(mu, &radii, sample_count, rng_seed)
}

/// sup of μ(B(x,r))/r^s over atom positions × `radii`, plus `sample_count`
/// random pairs (x uniform in the enlarged bounding box, r log-uniform over
/// the radius range).
pub fn growth_probe_with(
    mu: &AtomicMeasure,
    radii: &[f64],
    sample_count: usize,
    rng_seed: u64,
) -> Result<GrowthReport> {
    if sample_count == 0 {
        return Err(Error::invalid("sample_count must be at least 1"));
    }
    if radii.is_empty() || radii.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(Error::invalid("radii must be positive and finite"));
    }
    let s = mu.s();
    let rlo = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let rhi = radii.iter().copied().fold(0.0, f64::max);
    let mut best = 0.0;
    let mut argmax = None;
    let mut probes = 0;
    let consider = |x: &Point, r: f64, best: &mut f64, argmax: &mut Option<(Point, f64)>| {
        let v = mu.open_mass(x, r) / r.powf(s);
        if v > *best {
            *best = v;
            *argmax = Some((*x, r));
        }
    };
    for x in mu.positions() {
        for &r in radii {
            consider(x, r, &mut best, &mut argmax);
            probes += 1;
        }
    }
    if let Some((lo, hi)) = mu.bounding_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let pad = 0.1 * dist(&lo, &hi).max(rhi);
        for _ in 0..sample_count {
            let mut x = ORIGIN;
            for k in 0..mu.d() {
                x[k] = rng.gen_range(lo[k] - pad..=hi[k] + pad);
            }
            let r = rlo * (rhi / rlo).powf(rng.gen::<f64>());
            consider(&x, r, &mut best, &mut argmax);
            probes += 1;
        }
    }
    Ok(GrowthReport { c1_empirical: best, probe_count: probes, argmax, radius_range: (rlo, rhi) })
}
