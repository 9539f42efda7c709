//! The multiscale Cantor construction: admissible triples, top cover,
//! low-density balls, annulus shrinking, bottom cover, cells and the
//! rarefied measure μ′.

mod level;
mod verify;

pub use level::{
    build_bottom_cover, build_level, build_top_cover, find_low_density_scale, shrink_to_stable_radius, BottomCandidate,
    LevelOutcome, LevelStats, LowDensityScale, ShrunkRadius, TopCover, TopCoverBall,
};
pub use verify::{verify_construction, PropertyCheck, VerificationReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::ExactSum;
use crate::geometry::{Ball, Point};
use crate::kdtree::KdTree;
use crate::measure::AtomicMeasure;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CantorParams {
    #[serde(rename = "N")]
    pub levels: usize,
    pub epsilon: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub delta: f64,
    #[serde(rename = "Delta")]
    pub big_delta: f64,
    /// Mass fraction target; μ(E)/μ(R^d) when absent.
    #[serde(default)]
    pub gamma: Option<f64>,
    pub q: u32,
    /// Finest dyadic exponent scanned for good scales.
    #[serde(default = "default_k_cap")]
    pub k_cap: i32,
    /// Maximal number of annulus-shrinking steps.
    #[serde(default = "default_shrink_cap")]
    pub shrink_cap: u32,
}

fn default_k_cap() -> i32 {
    96
}

fn default_shrink_cap() -> u32 {
    10_000
}

impl CantorParams {
    pub fn new(levels: usize, epsilon: f64, m: f64, delta: f64, big_delta: f64, q: u32) -> CantorParams {
        CantorParams {
            levels,
            epsilon,
            m,
            delta,
            big_delta,
            gamma: None,
            q,
            k_cap: default_k_cap(),
            shrink_cap: default_shrink_cap(),
        }
    }

    pub fn validate(&self, s: f64) -> Result<()> {
        let e = self.epsilon;
        if !(e > 0.0 && e <= 0.5) {
            return Err(Error::invalid(format!("epsilon must lie in (0, 1/2], got {e}")));
        }
        if !((1.0 - 3.0 * e).max(0.0).powf(s) > 0.5) {
            return Err(Error::invalid(format!("(1 - 3 epsilon)^s must exceed 1/2, epsilon = {e}")));
        }
        if !(self.m > 4.0 && self.m.is_finite()) {
            return Err(Error::invalid(format!("M must exceed 4, got {}", self.m)));
        }
        if !(self.big_delta > 0.0 && self.big_delta.is_finite()) {
            return Err(Error::invalid(format!("Delta must be positive, got {}", self.big_delta)));
        }
        let cap = (self.big_delta / 2f64.powf(s + 1.0)).min(1.0);
        if !(self.delta > 0.0 && self.delta < cap) {
            return Err(Error::invalid(format!("delta must lie in (0, {cap}), got {}", self.delta)));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g <= 1.0) {
                return Err(Error::invalid(format!("gamma must lie in (0, 1], got {g}")));
            }
        }
        if self.q == 0 {
            return Err(Error::invalid("q must be at least 1"));
        }
        if self.shrink_cap == 0 {
            return Err(Error::invalid("shrink_cap must be at least 1"));
        }
        Ok(())
    }

    /// q + log2 M + log2(1/ε) + 3, the good-scale cost of one level.
    pub fn level_cost(&self) -> f64 {
        self.q as f64 + self.m.log2() + (1.0 / self.epsilon).log2() + 3.0
    }
}

/// (Ω, Ẽ, B): cell atoms, retained atoms and the enclosing ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleTriple {
    pub omega: Vec<usize>,
    pub e_tilde: Vec<usize>,
    pub ball: Ball,
}

/// A Cantor cell. Its atom set is the atoms of B̃_j among the parent's atoms;
/// the geometric cell is the closed ερ-neighbourhood of B̃_j.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub level: usize,
    pub parent: Option<usize>,
    pub atoms: Vec<usize>,
    pub e_tilde: Vec<usize>,
    pub ball: Ball,
    /// Atom at the centre of the bottom ball (none for the initial cell).
    pub center_atom: Option<usize>,
    /// Index of the associated top ball in the parent's `top_cover`.
    pub top_index: Option<usize>,
    /// ρ = 2^{-dyadic_steps} (1 - 3ε)^{shrink_steps} r_{top}.
    pub dyadic_steps: u32,
    pub shrink_steps: u32,
    /// Filled once the cell has been refined.
    pub top_cover: Vec<TopCoverBall>,
    pub children: Vec<usize>,
    pub stats: Option<LevelStats>,
}

impl Cell {
    pub fn rho(&self) -> f64 {
        self.ball.radius
    }

    pub fn triple(&self) -> AdmissibleTriple {
        AdmissibleTriple { omega: self.atoms.clone(), e_tilde: self.e_tilde.clone(), ball: self.ball }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CantorTree {
    pub params: CantorParams,
    pub e_atoms: Vec<usize>,
    /// levels[k] holds the level-k cells; levels[0] is the initial cell.
    pub levels: Vec<Vec<Cell>>,
    /// Atoms of μ′, ascending.
    pub rarefied_atoms: Vec<usize>,
    pub rarefied_mass: f64,
    pub e_mass: f64,
    pub total_mass: f64,
    pub gamma: f64,
    /// μ′(R^d) / μ(E).
    pub retained_fraction: f64,
    /// Per-level good-scale budget (N - k)(q + log2 M + log2(1/ε) + 3).
    pub budgets: Vec<f64>,
}

impl CantorTree {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    /// For every atom of μ, the index of its level-k cell.
    pub fn cell_of(&self, k: usize, n_atoms: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; n_atoms];
        for (j, c) in self.levels[k].iter().enumerate() {
            for &a in &c.atoms {
                out[a] = Some(j);
            }
        }
        out
    }

    /// μ′ as a measure on its own atoms (in ascending atom order).
    pub fn rarefied_measure(&self, mu: &AtomicMeasure) -> AtomicMeasure {
        mu.restrict(&self.rarefied_atoms)
    }

    pub fn rarefied_weights(&self, mu: &AtomicMeasure) -> Vec<f64> {
        let mut w = vec![0.0; mu.len()];
        for &a in &self.rarefied_atoms {
            w[a] = mu.weight(a);
        }
        w
    }
}

pub(crate) fn mass_of(mu: &AtomicMeasure, atoms: &[usize]) -> f64 {
    atoms.iter().map(|&a| mu.weight(a)).collect::<ExactSum>().value()
}

/// The initial triple: ρ₀ = 2 diam(E) + 4/ε, B₀ centred at the lowest-index
/// atom of E, Ω₀ = atoms within the closed ερ₀-neighbourhood of E.
pub fn initial_triple(mu: &AtomicMeasure, e_atoms: &[usize], epsilon: f64) -> Result<AdmissibleTriple> {
    let mut e: Vec<usize> = e_atoms.to_vec();
    e.sort_unstable();
    e.dedup();
    if e.is_empty() {
        return Err(Error::invalid("E must contain at least one atom"));
    }
    if let Some(&bad) = e.iter().find(|&&a| a >= mu.len()) {
        return Err(Error::invalid(format!("E atom {bad} is out of range")));
    }
    let pts: Vec<Point> = e.iter().map(|&a| *mu.position(a)).collect();
    let tree = KdTree::build(&pts, 16);
    let rho = 2.0 * tree.diameter() + 4.0 / epsilon;
    let halo = epsilon * rho;
    let omega = (0..mu.len()).filter(|&i| tree.nearest_distance(mu.position(i)).is_some_and(|d| d <= halo)).collect();
    Ok(AdmissibleTriple { omega, e_tilde: e.clone(), ball: Ball::new(*mu.position(e[0]), rho) })
}

/// Runs the N-level iteration from the initial triple.
pub fn build_cantor_tree(mu: &AtomicMeasure, e_atoms: &[usize], params: &CantorParams) -> Result<CantorTree> {
    params.validate(mu.s())?;
    let t0 = initial_triple(mu, e_atoms, params.epsilon)?;
    let total_mass = mu.total_mass();
    let e_mass = mass_of(mu, &t0.e_tilde);
    let gamma = params.gamma.unwrap_or(e_mass / total_mass);
    let root = Cell {
        level: 0,
        parent: None,
        atoms: t0.omega.clone(),
        e_tilde: t0.e_tilde.clone(),
        ball: t0.ball,
        center_atom: None,
        top_index: None,
        dyadic_steps: 0,
        shrink_steps: 0,
        top_cover: Vec::new(),
        children: Vec::new(),
        stats: None,
    };
    let mut levels = vec![vec![root]];
    for k in 1..=params.levels {
        let mut next = Vec::new();
        for j in 0..levels[k - 1].len() {
            let parent = &levels[k - 1][j];
            if parent.e_tilde.is_empty() {
                continue;
            }
            let out = build_level(mu, &parent.triple(), params, k - 1, j)?;
            let first = next.len();
            for mut child in out.children {
                child.parent = Some(j);
                next.push(child);
            }
            let parent = &mut levels[k - 1][j];
            parent.children = (first..next.len()).collect();
            parent.top_cover = out.top_cover.balls;
            parent.stats = Some(out.stats);
        }
        check_level_separation(mu, &next, params.epsilon, k)?;
        log::info!("level {k}: {} cells", next.len());
        levels.push(next);
    }
    let mut rarefied: Vec<usize> = levels[params.levels].iter().flat_map(|c| c.atoms.iter().copied()).collect();
    rarefied.sort_unstable();
    let rarefied_mass = mass_of(mu, &rarefied);
    let budgets = (0..=params.levels).map(|k| (params.levels - k) as f64 * params.level_cost()).collect();
    Ok(CantorTree {
        params: params.clone(),
        e_atoms: t0.e_tilde,
        levels,
        rarefied_atoms: rarefied,
        rarefied_mass,
        e_mass,
        total_mass,
        gamma,
        retained_fraction: rarefied_mass / e_mass,
        budgets,
    })
}

/// Atoms of distinct cells at one level must be at distance at least
/// ε max(ρ_i, ρ_j).
/// Returns (cell, atom, other atom, distance) for the first violation.
pub fn level_separation_violation(
    mu: &AtomicMeasure,
    cells: &[Cell],
    epsilon: f64,
) -> Option<(usize, usize, usize, f64)> {
    let mut owner = Vec::new();
    let mut pts = Vec::new();
    for (j, c) in cells.iter().enumerate() {
        for &a in &c.atoms {
            owner.push((j, a));
            pts.push(*mu.position(a));
        }
    }
    let tree = KdTree::build(&pts, 16);
    for (j, c) in cells.iter().enumerate() {
        let r = epsilon * c.rho();
        for &a in &c.atoms {
            let mut hit = None;
            tree.for_each_in_range(mu.position(a), &crate::kdtree::DistRange::open_ball(r), |i, d| {
                let (other, b) = owner[tree.order[i]];
                if other != j && hit.is_none() {
                    hit = Some((j, a, b, d));
                }
            });
            if hit.is_some() {
                return hit;
            }
        }
    }
    None
}

fn check_level_separation(mu: &AtomicMeasure, cells: &[Cell], epsilon: f64, level: usize) -> Result<()> {
    match level_separation_violation(mu, cells, epsilon) {
        None => Ok(()),
        Some((cell, a, b, d)) => Err(Error::PropertyViolation {
            level,
            cell,
            property: "separation",
            detail: format!("atoms {a} and {b} of different cells are {d:e} apart"),
        }),
    }
}
