use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mass_of, AdmissibleTriple, CantorParams, Cell};
use crate::error::{Error, Result};
use crate::geometry::{dist, Ball, Point};
use crate::kdtree::{DistRange, KdTree};
use crate::measure::AtomicMeasure;
use crate::scales::is_good_scale;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopCoverBall {
    pub center: Point,
    pub center_atom: usize,
    /// The selected good scale r_j = 2^{-k}.
    pub r: f64,
    pub k: i32,
}

impl TopCoverBall {
    /// T_j = B(z_j, 4 r_j).
    pub fn ball(&self) -> Ball {
        Ball::new(self.center, 4.0 * self.r)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopCover {
    pub balls: Vec<TopCoverBall>,
    /// j(x) for every atom of Ẽ, in the triple's order.
    pub assignment: Vec<usize>,
    /// r_x for every atom of Ẽ.
    pub r_x: Vec<f64>,
}

/// Largest dyadic exponent k >= 0 with 2^{-k} <= limit.
fn first_exponent(limit: f64) -> i32 {
    let mut k = (-limit.log2()).ceil().max(0.0) as i32;
    while (-(k as f64)).exp2() > limit {
        k += 1;
    }
    while k > 0 && (-((k - 1) as f64)).exp2() <= limit {
        k -= 1;
    }
    k
}

/// Number of good scales 2^{-k}, k0 <= k <= k_cap. Below the distance to
/// the nearest other atom the ball mass is the mass at x, so only the coarser
/// scales need ball queries.
fn count_good_scales(mu: &AtomicMeasure, x: &Point, big_delta: f64, k0: i32, k_cap: i32) -> u32 {
    let s = mu.s();
    let w0 = mu.closed_mass(x, 0.0);
    let nn = mu.next_distance_above(x, 0.0).unwrap_or(f64::INFINITY);
    let mut count = 0;
    for k in k0..=k_cap {
        let r = (-(k as f64)).exp2();
        let good = if r <= nn { w0 > big_delta / 2f64.powf(s) * r.powf(s) } else { is_good_scale(mu, x, big_delta, k) };
        count += u32::from(good);
    }
    count
}

/// Vitali selection among the balls B(x, r_x), x ∈ Ẽ, where r_x is the
/// largest good scale at most ερ/4. Stops once the balls B(z_j, 2r_j) cover Ẽ.
pub fn build_top_cover(
    mu: &AtomicMeasure,
    triple: &AdmissibleTriple,
    big_delta: f64,
    epsilon: f64,
    k_cap: i32,
) -> Result<TopCover> {
    let limit = epsilon * triple.ball.radius / 4.0;
    let k0 = first_exponent(limit);
    let scales: Vec<(usize, Option<i32>)> = triple
        .e_tilde
        .par_iter()
        .map(|&a| {
            let x = mu.position(a);
            (a, (k0..=k_cap).find(|&k| is_good_scale(mu, x, big_delta, k)))
        })
        .collect();
    let mut ks = Vec::with_capacity(scales.len());
    for (a, k) in scales {
        match k {
            Some(k) => ks.push(k),
            None => {
                return Err(Error::InsufficientScales { level: 0, cell: 0, atom: a, limit });
            }
        }
    }
    let e = &triple.e_tilde;
    let pts: Vec<Point> = e.iter().map(|&a| *mu.position(a)).collect();
    let tree = KdTree::build(&pts, 16);
    let r_x: Vec<f64> = ks.iter().map(|&k| (-(k as f64)).exp2()).collect();
    let mut order: Vec<usize> = (0..e.len()).collect();
    order.sort_by(|&i, &j| ks[i].cmp(&ks[j]).then(e[i].cmp(&e[j])));
    // near[i]: selected balls j with |x_i - z_j| < 2 r_j, in selection order.
    let mut near: Vec<Vec<usize>> = vec![Vec::new(); e.len()];
    let mut covered = 0;
    let mut balls: Vec<TopCoverBall> = Vec::new();
    for &i in &order {
        if covered == e.len() {
            break;
        }
        let x = &pts[i];
        let blocked = near[i].iter().any(|&j| dist(x, &balls[j].center) < r_x[i] + balls[j].r);
        if blocked {
            continue;
        }
        let j = balls.len();
        balls.push(TopCoverBall { center: *x, center_atom: e[i], r: r_x[i], k: ks[i] });
        tree.for_each_in_range(x, &DistRange::open_ball(2.0 * r_x[i]), |p, _| {
            let t = tree.order[p];
            if near[t].is_empty() {
                covered += 1;
            }
            near[t].push(j);
        });
    }
    let mut assignment = Vec::with_capacity(e.len());
    for (i, list) in near.iter().enumerate() {
        let j = *list.first().ok_or_else(|| Error::ConstructionFailure {
            level: 0,
            cell: 0,
            reason: format!("top cover misses atom {}", e[i]),
        })?;
        assignment.push(j);
    }
    Ok(TopCover { balls, assignment, r_x })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowDensityScale {
    pub t: f64,
    /// t = 2^{-ell} r_j.
    pub ell: u32,
}

/// Largest t = 2^{-ℓ} r_j, ℓ = 0..=q, with μ(B(x, Mt)) <= δ t^s, Mt <= r_j and
/// |x - z_j| + Mt <= 3 r_j; `None` puts x in the exceptional set F.
pub fn find_low_density_scale(
    mu: &AtomicMeasure,
    x: &Point,
    top: &TopCoverBall,
    m: f64,
    delta: f64,
    q: u32,
) -> Option<LowDensityScale> {
    let s = mu.s();
    let off = dist(x, &top.center);
    (0..=q).find_map(|ell| {
        let t = top.r * (-(ell as f64)).exp2();
        let fits = m * t <= top.r && off + m * t <= 3.0 * top.r;
        (fits && mu.open_mass(x, m * t) <= delta * t.powf(s)).then_some(LowDensityScale { t, ell })
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShrunkRadius {
    pub rho: f64,
    /// ρ = (1 - 3ε)^steps t.
    pub steps: u32,
}

/// λ_k = (1 - 3ε)^k; the least k with
/// μ(B(x, λ_k t) \ B(x, λ_{k+1} t)) <= 3dε μ(B(x, λ_k t)).
pub fn shrink_to_stable_radius(mu: &AtomicMeasure, x: &Point, t: f64, epsilon: f64, cap: u32) -> Result<ShrunkRadius> {
    let lam = 1.0 - 3.0 * epsilon;
    let c = 3.0 * mu.d() as f64 * epsilon;
    for k in 0..cap {
        let outer = t * lam.powi(k as i32);
        let inner = t * lam.powi(k as i32 + 1);
        if mu.shell_mass(x, inner, outer) <= c * mu.open_mass(x, outer) {
            return Ok(ShrunkRadius { rho: outer, steps: k });
        }
    }
    Err(Error::ConstructionFailure {
        level: 0,
        cell: 0,
        reason: format!("annulus shrinking did not stop within {cap} steps at {x:?}"),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BottomCandidate {
    pub center: Point,
    pub radius: f64,
    /// Tie-breaking key (the atom index).
    pub atom: usize,
}

/// Besicovitch selection: repeatedly take the largest candidate (lowest atom
/// on ties) whose centre lies in no selected open ball. Returns candidate
/// indices in selection order.
pub fn build_bottom_cover(candidates: &[BottomCandidate]) -> Vec<usize> {
    let pts: Vec<Point> = candidates.iter().map(|c| c.center).collect();
    let tree = KdTree::build(&pts, 16);
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&i, &j| {
        candidates[j].radius.total_cmp(&candidates[i].radius).then(candidates[i].atom.cmp(&candidates[j].atom))
    });
    let mut covered = vec![false; candidates.len()];
    let mut out = Vec::new();
    for &i in &order {
        if covered[i] {
            continue;
        }
        out.push(i);
        let c = &candidates[i];
        tree.for_each_in_range(&c.center, &DistRange::open_ball(c.radius), |p, _| covered[tree.order[p]] = true);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub omega_mass: f64,
    pub e_mass: f64,
    pub top_balls: usize,
    /// Σ_j μ(T_j) / μ(Ω).
    pub top_mass_ratio: f64,
    pub f_atoms: usize,
    pub f_mass: f64,
    pub bottom_balls: usize,
    /// μ(Ẽ) - μ(∪ Ẽ_j).
    pub lost_mass: f64,
    /// lost_mass / μ(Ω).
    pub loss_ratio: f64,
    /// Least number of good scales at most ερ/4 over Ẽ, counted up to k_cap.
    pub min_good_scales: u32,
    pub max_shrink_steps: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelOutcome {
    pub children: Vec<Cell>,
    pub top_cover: TopCover,
    pub bottom_cover: Vec<Ball>,
    pub stats: LevelStats,
}

fn violation(level: usize, cell: usize, property: &'static str, detail: String) -> Error {
    Error::PropertyViolation { level, cell, property, detail }
}

/// One step of the construction applied to a level-`level` cell.
pub fn build_level(
    mu: &AtomicMeasure,
    triple: &AdmissibleTriple,
    params: &CantorParams,
    level: usize,
    cell: usize,
) -> Result<LevelOutcome> {
    let s = mu.s();
    let eps = params.epsilon;
    let annotate = |e: Error| match e {
        Error::InsufficientScales { atom, limit, .. } => Error::InsufficientScales { level, cell, atom, limit },
        Error::ConstructionFailure { reason, .. } => Error::ConstructionFailure { level, cell, reason },
        other => other,
    };
    let omega_mass = mass_of(mu, &triple.omega);
    let e_mass = mass_of(mu, &triple.e_tilde);
    if triple.e_tilde.is_empty() {
        let top_cover = TopCover { balls: Vec::new(), assignment: Vec::new(), r_x: Vec::new() };
        let stats = LevelStats {
            omega_mass,
            e_mass,
            top_balls: 0,
            top_mass_ratio: 0.0,
            f_atoms: 0,
            f_mass: 0.0,
            bottom_balls: 0,
            lost_mass: 0.0,
            loss_ratio: 0.0,
            min_good_scales: 0,
            max_shrink_steps: 0,
        };
        return Ok(LevelOutcome { children: Vec::new(), top_cover, bottom_cover: Vec::new(), stats });
    }
    let top = build_top_cover(mu, triple, params.big_delta, eps, params.k_cap).map_err(annotate)?;
    let e = &triple.e_tilde;

    // Vitali guarantee and disjointness of the generating balls.
    for (i, &j) in top.assignment.iter().enumerate() {
        let b = &top.balls[j];
        if !(dist(mu.position(e[i]), &b.center) < 2.0 * b.r && b.r >= top.r_x[i]) {
            return Err(violation(level, cell, "vitali", format!("atom {} with ball {j}", e[i])));
        }
    }
    let centers: Vec<Point> = top.balls.iter().map(|b| b.center).collect();
    let ctree = KdTree::build(&centers, 16);
    for (j, b) in top.balls.iter().enumerate() {
        let mut bad = None;
        // r_i + r_j <= 2 max(r_i, r_j); only larger-or-equal partners need checking.
        ctree.for_each_in_range(&b.center, &DistRange::open_ball(2.0 * b.r), |p, d| {
            let i = ctree.order[p];
            if i != j && top.balls[i].r >= b.r && d < top.balls[i].r + b.r {
                bad = Some(i);
            }
        });
        if let Some(i) = bad {
            return Err(violation(level, cell, "top_disjoint", format!("balls {i} and {j} overlap")));
        }
    }

    // Low-density scale and shrinking for every x ∈ Ẽ.
    let radii: Vec<Option<(LowDensityScale, ShrunkRadius)>> = (0..e.len())
        .into_par_iter()
        .map(|i| {
            let x = mu.position(e[i]);
            let b = &top.balls[top.assignment[i]];
            match find_low_density_scale(mu, x, b, params.m, params.delta, params.q) {
                None => Ok(None),
                Some(ld) => shrink_to_stable_radius(mu, x, ld.t, eps, params.shrink_cap).map(|r| Some((ld, r))),
            }
        })
        .collect::<Result<_>>()
        .map_err(annotate)?;
    let mut candidates = Vec::new();
    let mut cand_of = Vec::new();
    let mut in_f = vec![false; e.len()];
    for (i, r) in radii.iter().enumerate() {
        match r {
            Some((_, sr)) => {
                candidates.push(BottomCandidate { center: *mu.position(e[i]), radius: sr.rho, atom: e[i] });
                cand_of.push(i);
            }
            None => in_f[i] = true,
        }
    }
    let f_atoms: Vec<usize> = (0..e.len()).filter(|&i| in_f[i]).map(|i| e[i]).collect();
    let f_mass = mass_of(mu, &f_atoms);
    if candidates.is_empty() {
        return Err(Error::ConstructionFailure {
            level,
            cell,
            reason: format!(
                "every retained atom lies in the exceptional set F (lost mass {:e} of {:e})",
                e_mass, omega_mass
            ),
        });
    }
    let selected = build_bottom_cover(&candidates);

    // Centre-freeness.
    let bpts: Vec<Point> = selected.iter().map(|&c| candidates[c].center).collect();
    let btree = KdTree::build(&bpts, 16);
    for (j, &c) in selected.iter().enumerate() {
        let b = &candidates[c];
        let mut hit = None;
        btree.for_each_in_range(&b.center, &DistRange::open_ball(b.radius), |p, _| {
            if btree.order[p] != j {
                hit = Some(btree.order[p]);
            }
        });
        if let Some(i) = hit {
            return Err(violation(level, cell, "center_free", format!("centre of ball {i} lies in ball {j}")));
        }
    }

    // Assign every parent atom to the first bottom ball containing it.
    let opts: Vec<Point> = triple.omega.iter().map(|&a| *mu.position(a)).collect();
    let otree = KdTree::build(&opts, 16);
    let mut first: Vec<Option<(usize, f64)>> = vec![None; opts.len()];
    for (j, &c) in selected.iter().enumerate() {
        let b = &candidates[c];
        otree.for_each_in_range(&b.center, &DistRange::open_ball(b.radius), |p, d| {
            let slot = &mut first[otree.order[p]];
            if slot.is_none() {
                *slot = Some((j, d));
            }
        });
    }
    let lam = 1.0 - 3.0 * eps;
    let mut child_atoms: Vec<Vec<usize>> = vec![Vec::new(); selected.len()];
    for (p, f) in first.iter().enumerate() {
        if let Some((j, d)) = *f {
            if d <= lam * candidates[selected[j]].radius {
                child_atoms[j].push(triple.omega[p]);
            }
        }
    }
    let mut e_sorted = e.clone();
    e_sorted.sort_unstable();
    let mut f_sorted = f_atoms.clone();
    f_sorted.sort_unstable();
    let retained = |a: &usize| e_sorted.binary_search(a).is_ok() && f_sorted.binary_search(a).is_err();

    let mut children = Vec::with_capacity(selected.len());
    let mut kept = Vec::new();
    let mut max_shrink = 0;
    for (j, &c) in selected.iter().enumerate() {
        let b = &candidates[c];
        let i = cand_of[c];
        let (ld, sr) = radii[i].expect("candidate has radii");
        max_shrink = max_shrink.max(sr.steps);
        let top_index = top.assignment[i];
        let tb = &top.balls[top_index];
        let rho = b.radius;
        // Low density of the dilated ball.
        let mb = mu.open_mass(&b.center, params.m * rho);
        let bound = 2.0 * params.m.powf(s) * params.delta * rho.powf(s);
        if !(mb <= bound) {
            return Err(violation(level, cell, "low_density", format!("ball {j}: μ(MB) = {mb:e} > {bound:e}")));
        }
        // Association with the top cover.
        let off = dist(&b.center, &tb.center);
        if !(params.m * rho <= tb.r && off + rho <= 3.0 * tb.r) {
            return Err(violation(level, cell, "association", format!("ball {j} and top ball {top_index}")));
        }
        let mut atoms = std::mem::take(&mut child_atoms[j]);
        atoms.sort_unstable();
        let e_tilde: Vec<usize> = atoms.iter().copied().filter(|a| retained(a)).collect();
        kept.extend_from_slice(&e_tilde);
        children.push(Cell {
            level: level + 1,
            parent: None,
            atoms,
            e_tilde,
            ball: Ball::new(b.center, rho),
            center_atom: Some(b.atom),
            top_index: Some(top_index),
            dyadic_steps: ld.ell,
            shrink_steps: sr.steps,
            top_cover: Vec::new(),
            children: Vec::new(),
            stats: None,
        });
    }
    if let Some((child, a, b, d)) = super::level_separation_violation(mu, &children, eps) {
        let detail = format!("child {child}: atoms {a} and {b} are {d:e} apart");
        return Err(violation(level, cell, "separation", detail));
    }
    let kept_mass = mass_of(mu, &kept);
    let top_mass: f64 = top.balls.iter().map(|b| mu.open_mass(&b.center, 4.0 * b.r)).sum();
    let k0 = first_exponent(eps * triple.ball.radius / 4.0);
    let min_good_scales = e
        .par_iter()
        .map(|&a| count_good_scales(mu, mu.position(a), params.big_delta, k0, params.k_cap))
        .min()
        .unwrap_or(0);
    let stats = LevelStats {
        omega_mass,
        e_mass,
        top_balls: top.balls.len(),
        top_mass_ratio: top_mass / omega_mass,
        f_atoms: f_atoms.len(),
        f_mass,
        bottom_balls: selected.len(),
        lost_mass: e_mass - kept_mass,
        loss_ratio: (e_mass - kept_mass) / omega_mass,
        min_good_scales,
        max_shrink_steps: max_shrink,
    };
    let bottom_cover = children.iter().map(|c| c.ball).collect();
    Ok(LevelOutcome { children, top_cover: top, bottom_cover, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ORIGIN;
    use crate::measure::AmbientParams;

    #[test]
    fn dyadic_exponent() {
        assert_eq!(first_exponent(0.25), 2);
        assert_eq!(first_exponent(0.3), 2);
        assert_eq!(first_exponent(5.0), 0);
        assert_eq!(first_exponent(0.5), 1);
    }

    #[test]
    fn single_atom_examples() {
        let mu = AtomicMeasure::new(AmbientParams::new(2, 1.5).unwrap(), vec![ORIGIN], vec![1e-9]).unwrap();
        let triple = AdmissibleTriple { omega: vec![0], e_tilde: vec![0], ball: Ball::new(ORIGIN, 10.0) };
        let top = build_top_cover(&mu, &triple, 0.25, 0.1, 96).unwrap();
        assert_eq!(top.balls.len(), 1);
        assert_eq!(top.balls[0].center_atom, 0);
        assert_eq!(top.balls[0].r, top.r_x[0]);
        // A light atom alone in a coarse top ball: the first scale with
        // Mt <= r qualifies.
        let coarse = TopCoverBall { center: ORIGIN, center_atom: 0, r: 0.5, k: 1 };
        let ld = find_low_density_scale(&mu, &ORIGIN, &coarse, 8.0, 1e-3, 12).unwrap();
        assert_eq!(ld.ell, 3);
        assert!(find_low_density_scale(&mu, &ORIGIN, &coarse, 8.0, 0.0, 12).is_none());
        let sr = shrink_to_stable_radius(&mu, &ORIGIN, ld.t, 0.1, 100).unwrap();
        assert_eq!((sr.rho, sr.steps), (ld.t, 0));
    }

    #[test]
    fn mass_near_boundary_shrinks() {
        let ambient = AmbientParams::new(2, 1.5).unwrap();
        // Centre atom light, heavy atom inside the outer 3ε shell.
        let mu = AtomicMeasure::new(ambient, vec![ORIGIN, [0.95, 0.0, 0.0]], vec![0.01, 1.0]).unwrap();
        let sr = shrink_to_stable_radius(&mu, &ORIGIN, 1.0, 0.05, 100).unwrap();
        assert!(sr.steps >= 1);
        assert_eq!(sr.rho, 0.85f64.powi(sr.steps as i32));
    }

    #[test]
    fn bottom_cover_basics() {
        let same = vec![
            BottomCandidate { center: ORIGIN, radius: 1.0, atom: 0 },
            BottomCandidate { center: ORIGIN, radius: 1.0, atom: 1 },
        ];
        assert_eq!(build_bottom_cover(&same), vec![0]);
        let two = vec![
            BottomCandidate { center: ORIGIN, radius: 0.5, atom: 0 },
            BottomCandidate { center: [2.0, 0.0, 0.0], radius: 1.0, atom: 1 },
        ];
        assert_eq!(build_bottom_cover(&two), vec![1, 0]);
    }
}
