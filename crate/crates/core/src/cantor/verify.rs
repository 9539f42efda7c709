use serde::{Deserialize, Serialize};

use super::CantorTree;
use crate::geometry::{dist, Point};
use crate::kdtree::{DistRange, KdTree};
use crate::measure::AtomicMeasure;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub passed: bool,
    /// Human-readable witness of the first failure.
    pub witness: Option<String>,
}

impl PropertyCheck {
    fn new(name: &str, witness: Option<String>) -> Self {
        PropertyCheck { name: name.to_string(), passed: witness.is_none(), witness }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<PropertyCheck>,
    pub rarefied_mass: f64,
    pub total_mass: f64,
    pub gamma: f64,
    pub retained_fraction: f64,
}

impl VerificationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Domination, separation in the support, significant mass, plus rechecks
/// of the per-cell low-density and association properties.
pub fn verify_construction(tree: &CantorTree, mu: &AtomicMeasure) -> VerificationReport {
    let n = mu.len();
    let p = &tree.params;
    let s = mu.s();

    // Domination: μ′ is μ on a set of distinct atoms that all lie in
    // level-N cells.
    let mut dom = None;
    let mut in_last = vec![false; n];
    for c in tree.levels.last().into_iter().flatten() {
        for &a in &c.atoms {
            if a >= n {
                dom = Some(format!("atom index {a} out of range"));
            } else {
                in_last[a] = true;
            }
        }
    }
    let mut seen = vec![false; n];
    for &a in &tree.rarefied_atoms {
        if a >= n || seen[a] || !in_last[a] {
            dom.get_or_insert(format!("atom {a} of μ′ is not a distinct level-N atom"));
        } else {
            seen[a] = true;
        }
    }
    if dom.is_none() && in_last != seen {
        dom = Some("μ′ differs from the union of level-N cells".into());
    }

    // Separation: dist(supp μ′ \ Ω, Ω) >= ερ for every cell.
    let mut sep = None;
    let supp: Vec<usize> = tree.rarefied_atoms.iter().copied().filter(|&a| a < n).collect();
    let pts: Vec<Point> = supp.iter().map(|&a| *mu.position(a)).collect();
    let stree = KdTree::build(&pts, 16);
    'levels: for (k, level) in tree.levels.iter().enumerate() {
        for (j, c) in level.iter().enumerate() {
            let mut members: Vec<usize> = c.atoms.clone();
            members.sort_unstable();
            let inside_all = supp.iter().all(|a| members.binary_search(a).is_ok());
            if inside_all {
                continue;
            }
            let r = p.epsilon * c.rho();
            for &a in &members {
                if a >= n {
                    continue;
                }
                let mut hit = None;
                stree.for_each_in_range(mu.position(a), &DistRange::open_ball(r), |i, d| {
                    let b = supp[stree.order[i]];
                    if hit.is_none() && members.binary_search(&b).is_err() {
                        hit = Some((b, d));
                    }
                });
                if let Some((b, d)) = hit {
                    sep = Some(format!(
                        "level {k} cell {j}: atom {a} and outside atom {b} are {d:e} apart, below ερ = {r:e}"
                    ));
                    break 'levels;
                }
            }
        }
    }

    // Significant mass.
    let mass = tree.rarefied_atoms.iter().filter(|&&a| a < n).map(|&a| mu.weight(a)).sum::<f64>();
    let target = tree.gamma / 2.0 * mu.total_mass();
    let sig = (!(mass >= target)).then(|| format!("μ′(R^d) = {mass:e} < γ/2 μ(R^d) = {target:e}"));

    // Low density μ(M B_j) <= 2 M^s δ ρ_j^s and association with the parent's
    // top cover.
    let mut low = None;
    let mut assoc = None;
    for (k, level) in tree.levels.iter().enumerate().skip(1) {
        for (j, c) in level.iter().enumerate() {
            let rho = c.rho();
            let mb = mu.open_mass(&c.ball.center, p.m * rho);
            let bound = 2.0 * p.m.powf(s) * p.delta * rho.powf(s);
            if !(mb <= bound) {
                low.get_or_insert(format!("level {k} cell {j}: μ(MB) = {mb:e} > {bound:e}"));
            }
            let parent = c.parent.and_then(|pi| tree.levels[k - 1].get(pi));
            let top = parent.zip(c.top_index).and_then(|(pc, t)| pc.top_cover.get(t));
            match top {
                Some(t) => {
                    let off = dist(&c.ball.center, &t.center);
                    if !(p.m * rho <= t.r && off + rho <= 3.0 * t.r) {
                        assoc.get_or_insert(format!("level {k} cell {j} is not deep inside its top ball"));
                    }
                }
                None => {
                    assoc.get_or_insert(format!("level {k} cell {j} has no associated top ball"));
                }
            }
        }
    }

    VerificationReport {
        checks: vec![
            PropertyCheck::new("domination", dom),
            PropertyCheck::new("separation", sep),
            PropertyCheck::new("significant_mass", sig),
            PropertyCheck::new("low_density", low),
            PropertyCheck::new("association", assoc),
        ],
        rarefied_mass: mass,
        total_mass: mu.total_mass(),
        gamma: tree.gamma,
        retained_fraction: tree.retained_fraction,
    }
}
