//! Diagnostics on a built Cantor tree: partial Riesz transforms, level
//! energies and cross terms, the mean-zero pair identity, the Ψ function and
//! the Marcinkiewicz g-function.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cantor::CantorTree;
use crate::error::{Error, Result};
use crate::exact::ExactSum;
use crate::geometry::{dist, unit_ball_volume, Point, ORIGIN};
use crate::measure::AtomicMeasure;
use crate::quad::integrate;
use crate::riesz::kernel_term;

/// Precomputed lookups shared by all harness statistics.
pub struct HarnessContext<'a> {
    pub tree: &'a CantorTree,
    pub mu: &'a AtomicMeasure,
    /// μ′ weight of every atom of μ (zero off supp μ′).
    pub weights: Vec<f64>,
    /// cell_of[k][a]: the level-k cell containing atom a.
    pub cell_of: Vec<Vec<Option<usize>>>,
}

impl<'a> HarnessContext<'a> {
    pub fn new(tree: &'a CantorTree, mu: &'a AtomicMeasure) -> Result<Self> {
        if tree.rarefied_atoms.iter().any(|&a| a >= mu.len()) {
            return Err(Error::invalid("tree does not belong to this measure"));
        }
        let cell_of = (0..tree.levels.len()).map(|k| tree.cell_of(k, mu.len())).collect();
        Ok(HarnessContext { tree, mu, weights: tree.rarefied_weights(mu), cell_of })
    }

    pub fn depth(&self) -> usize {
        self.tree.depth()
    }

    pub fn in_support(&self, a: usize) -> bool {
        self.weights.get(a).is_some_and(|&w| w > 0.0)
    }

    /// μ′(R^d).
    pub fn mass(&self) -> f64 {
        self.tree.rarefied_atoms.iter().map(|&a| self.weights[a]).collect::<ExactSum>().value()
    }

    fn support_of_cell(&self, level: usize, j: usize) -> Vec<usize> {
        let mut v: Vec<usize> =
            self.tree.levels[level][j].atoms.iter().copied().filter(|&a| self.in_support(a)).collect();
        v.sort_unstable();
        v
    }
}

fn exact_vec(sums: &[ExactSum; 3]) -> Point {
    [sums[0].value(), sums[1].value(), sums[2].value()]
}

/// ∫ over Ω^{(from)}(x) \ Ω^{(to)}(x) of (y - x)/|y - x|^{1+s} dμ′(y),
/// for an atom x of μ′ and from < to <= N.
pub fn cell_difference_riesz(ctx: &HarnessContext, x: usize, from: usize, to: usize) -> Result<Point> {
    let n = ctx.depth();
    if !(from < to && to <= n) {
        return Err(Error::invalid(format!("need from < to <= {n}, got ({from}, {to})")));
    }
    if !ctx.in_support(x) {
        return Err(Error::invalid(format!("atom {x} is not in the support of μ′")));
    }
    let outer = ctx.cell_of[from][x].ok_or_else(|| Error::invalid(format!("atom {x} has no level-{from} cell")))?;
    let inner = ctx.cell_of[to][x];
    let s = ctx.mu.s();
    let px = ctx.mu.position(x);
    let mut sums: [ExactSum; 3] = Default::default();
    for &a in &ctx.tree.levels[from][outer].atoms {
        if !ctx.in_support(a) || ctx.cell_of[to][a] == inner {
            continue;
        }
        let t = kernel_term(ctx.mu.position(a), px, ctx.weights[a], s);
        for (acc, v) in sums.iter_mut().zip(t) {
            acc.add(v);
        }
    }
    Ok(exact_vec(&sums))
}

/// R^{(k)}(μ′)(x) for an atom x of μ′ (which lies in a level-(k+1) cell).
pub fn partial_riesz(ctx: &HarnessContext, x: usize, k: usize) -> Result<Point> {
    cell_difference_riesz(ctx, x, k, k + 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanZeroResidual {
    pub level: usize,
    pub cell: usize,
    pub residual: Point,
    /// Σ over the summed pairs of |kernel| w_x w_y.
    pub scale: f64,
    pub pairs: usize,
}

impl MeanZeroResidual {
    pub fn magnitude(&self) -> f64 {
        self.residual.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// |residual| / scale, 0 when there are no pairs.
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.magnitude() / self.scale
        } else {
            self.magnitude()
        }
    }
}

/// The pair sum of w_x w_y (y - x)/|y - x|^{1+s} over atoms x, y of μ′ in
/// the level-`level` cell `j` lying in different level-N cells, accumulated
/// in plain floating point in atom order (or a seeded random order). It is
/// ∫_{Ω_j} Σ_{ℓ=level}^{N-1} R^{(ℓ)}(μ′) dμ′ and vanishes by antisymmetry.
pub fn mean_zero_check(
    ctx: &HarnessContext,
    level: usize,
    j: usize,
    shuffle_seed: Option<u64>,
) -> Result<MeanZeroResidual> {
    let n = ctx.depth();
    if level > n || j >= ctx.tree.levels[level].len() {
        return Err(Error::invalid(format!("no cell {j} at level {level}")));
    }
    let mut atoms = ctx.support_of_cell(level, j);
    if let Some(seed) = shuffle_seed {
        atoms.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let s = ctx.mu.s();
    let leaf = &ctx.cell_of[n];
    let mut residual = ORIGIN;
    let mut scale = 0.0;
    let mut pairs = 0;
    for &x in &atoms {
        let px = ctx.mu.position(x);
        let wx = ctx.weights[x];
        for &y in &atoms {
            if leaf[x] == leaf[y] {
                continue;
            }
            let t = kernel_term(ctx.mu.position(y), px, ctx.weights[y] * wx, s);
            for k in 0..3 {
                residual[k] += t[k];
            }
            scale += t.iter().map(|v| v * v).sum::<f64>().sqrt();
            pairs += 1;
        }
    }
    Ok(MeanZeroResidual { level, cell: j, residual, scale, pairs })
}

/// mean_zero_check over every cell of every level.
pub fn mean_zero_all(ctx: &HarnessContext, shuffle_seed: Option<u64>) -> Result<Vec<MeanZeroResidual>> {
    let cells: Vec<(usize, usize)> =
        ctx.tree.levels.iter().enumerate().flat_map(|(k, l)| (0..l.len()).map(move |j| (k, j))).collect();
    cells
        .par_iter()
        .map(|&(k, j)| mean_zero_check(ctx, k, j, shuffle_seed.map(|s| s ^ ((k as u64) << 32 | j as u64))))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossTerm {
    pub k: usize,
    pub j: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// ∫|R^{(k)}(μ′)|² dμ′ for k = 0..N-1.
    pub level_energies: Vec<f64>,
    /// ∫(R^{(k)}, R^{(j)}) dμ′ for k < j.
    pub cross_terms: Vec<CrossTerm>,
    /// ∫|Σ_k R^{(k)}(μ′)|² dμ′.
    pub sigma_energy: f64,
    /// |Σ-energy - Σ level energies - 2 Σ cross terms| relative to the
    /// largest of the compared quantities.
    pub identity_residual: f64,
    pub mu_prime_mass: f64,
    /// level energies / μ′(R^d).
    pub energy_ratios: Vec<f64>,
}

/// Per-level energies, pairwise cross terms and the energy of the sum.
pub fn level_energies(ctx: &HarnessContext) -> Result<EnergyReport> {
    let n = ctx.depth();
    if n == 0 {
        return Err(Error::invalid("the tree has no refined levels"));
    }
    let support = &ctx.tree.rarefied_atoms;
    let fields: Vec<Vec<Point>> = support
        .par_iter()
        .map(|&x| (0..n).map(|k| partial_riesz(ctx, x, k)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let dot = |a: &Point, b: &Point| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let integrate_pair = |k: usize, j: usize| -> f64 {
        support.iter().zip(&fields).map(|(&x, f)| ctx.weights[x] * dot(&f[k], &f[j])).collect::<ExactSum>().value()
    };
    let level_energies: Vec<f64> = (0..n).map(|k| integrate_pair(k, k)).collect();
    let mut cross_terms = Vec::new();
    for k in 0..n {
        for j in k + 1..n {
            cross_terms.push(CrossTerm { k, j, value: integrate_pair(k, j) });
        }
    }
    let sigma_energy = support
        .iter()
        .zip(&fields)
        .map(|(&x, f)| {
            let mut t = ORIGIN;
            for v in f {
                for c in 0..3 {
                    t[c] += v[c];
                }
            }
            ctx.weights[x] * dot(&t, &t)
        })
        .collect::<ExactSum>()
        .value();
    let mut expanded: ExactSum = level_energies.iter().copied().collect();
    for c in &cross_terms {
        expanded.add(2.0 * c.value);
    }
    let expanded = expanded.value();
    let scale = level_energies.iter().sum::<f64>().max(sigma_energy.abs()).max(f64::MIN_POSITIVE);
    let mass = ctx.mass();
    Ok(EnergyReport {
        energy_ratios: level_energies.iter().map(|e| e / mass).collect(),
        level_energies,
        cross_terms,
        identity_residual: (sigma_energy - expanded).abs() / scale,
        sigma_energy,
        mu_prime_mass: mass,
    })
}

/// Radial bump φ(x) = A·(1 - S(|x| - 1)) on 1 <= |x| <= 2 and A inside the
/// unit ball, with S the quintic smoothstep and A = 2^d / (1 + d I_d),
/// I_d = ∫_1^2 (1 - S(r - 1)) r^{d-1} dr, so that ∫φ = m_d(B(0, 2)).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiSpec {
    pub d: usize,
    pub amplitude: f64,
    pub k_max: u32,
}

fn smoothstep(u: f64) -> f64 {
    u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpCheck {
    pub lower_bound_on_unit_ball: bool,
    pub upper_bound: bool,
    pub support: bool,
    pub integral_error: f64,
    pub max_gradient: f64,
    pub gradient_bound: bool,
}

impl BumpCheck {
    pub fn all_pass(&self) -> bool {
        self.lower_bound_on_unit_ball
            && self.upper_bound
            && self.support
            && self.integral_error <= 1e-9
            && self.gradient_bound
    }
}

impl PsiSpec {
    pub const DEFAULT_K_MAX: u32 = 40;

    pub fn new(d: usize, k_max: u32) -> Result<PsiSpec> {
        if !(d == 2 || d == 3) {
            return Err(Error::invalid(format!("dimension must be 2 or 3, got {d}")));
        }
        if k_max < 2 {
            return Err(Error::invalid("k_max must be at least 2"));
        }
        // ∫_0^1 (1 - S(u)) (1 + u)^{d-1} du in closed form.
        let i_d = match d {
            2 => 9.0 / 14.0,
            _ => 71.0 / 84.0,
        };
        Ok(PsiSpec { d, amplitude: 2f64.powi(d as i32) / (1.0 + d as f64 * i_d), k_max })
    }

    /// Radial profile φ(r).
    pub fn phi(&self, r: f64) -> f64 {
        if r <= 1.0 {
            self.amplitude
        } else if r < 2.0 {
            self.amplitude * (1.0 - smoothstep(r - 1.0))
        } else {
            0.0
        }
    }

    /// |φ'(r)|.
    pub fn phi_slope(&self, r: f64) -> f64 {
        if r > 1.0 && r < 2.0 {
            let u = r - 1.0;
            self.amplitude * 30.0 * u * u * (1.0 - u) * (1.0 - u)
        } else {
            0.0
        }
    }

    /// Checks φ >= 1 on B(0,1), φ <= 2^d, supp φ ⊂ B(0,2), ∫φ = m_d(B(0,2))
    /// (by adaptive radial quadrature) and |∇φ| <= 2·2^d on a grid.
    pub fn check_bump(&self, grid: usize) -> BumpCheck {
        let d = self.d as i32;
        let cap = 2f64.powi(d);
        let rs: Vec<f64> = (0..=grid).map(|i| 3.0 * i as f64 / grid as f64).collect();
        let omega = unit_ball_volume(self.d);
        let shell = integrate(|r| self.phi(r) * r.powi(d - 1), 1.0, 2.0, 1e-14, 0.0, 200).value;
        let integral = omega * (self.amplitude + self.d as f64 * shell);
        let target = omega * cap;
        let max_gradient = rs.iter().map(|&r| self.phi_slope(r)).fold(0.0, f64::max);
        BumpCheck {
            lower_bound_on_unit_ball: rs.iter().filter(|&&r| r <= 1.0).all(|&r| self.phi(r) >= 1.0),
            upper_bound: rs.iter().all(|&r| self.phi(r) <= cap),
            support: rs.iter().filter(|&&r| r >= 2.0).all(|&r| self.phi(r) == 0.0),
            integral_error: (integral - target).abs() / target,
            max_gradient,
            gradient_bound: max_gradient <= 2.0 * cap,
        }
    }

    /// Σ_{k > k_max} 2^{k(s-d)} bound 2^{k_max(s-d)} / (1 - 2^{s-d}).
    pub fn tail_bound(&self, s: f64) -> f64 {
        let q = 2f64.powf(s - self.d as f64);
        q.powi(self.k_max as i32) / (1.0 - q)
    }
}

/// A ball of the family 𝒥 with its disjoint group mass μ′(T̃_j).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiBall {
    pub center: Point,
    /// r_j; the top ball is T_j = B(z_j, 4 r_j).
    pub r: f64,
    pub mass: f64,
}

/// The family 𝒥 for the top covers of one level together with the masses of
/// the disjoint groups T̃_j formed from the next level's cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiCovers {
    pub level: usize,
    pub d: usize,
    pub s: f64,
    pub balls: Vec<PsiBall>,
    /// Top balls discarded because another top ball contains them.
    pub nested: usize,
    /// μ′ mass of next-level cells inside no ball of 𝒥.
    pub uncovered_mass: f64,
}

/// Builds 𝒥 and T̃_j from the top covers of the level-`level` cells. T_j is
/// dropped when it lies inside another T_i (for identical balls the later
/// index is dropped); a child cell goes to the first ball of 𝒥 containing all
/// of its atoms.
pub fn psi_covers(ctx: &HarnessContext, level: usize) -> Result<PsiCovers> {
    let n = ctx.depth();
    if level >= n {
        return Err(Error::invalid(format!("level must be below {n}, got {level}")));
    }
    let mut balls = Vec::new();
    let mut nested = 0;
    let mut uncovered = ExactSum::new();
    let children = &ctx.tree.levels[level + 1];
    for (pj, parent) in ctx.tree.levels[level].iter().enumerate() {
        let tops: Vec<_> = parent.top_cover.iter().map(|t| t.ball()).collect();
        let family: Vec<usize> = (0..tops.len())
            .filter(|&j| {
                !(0..tops.len()).any(|i| i != j && tops[j].inside(&tops[i]) && (!tops[i].inside(&tops[j]) || i < j))
            })
            .collect();
        nested += tops.len() - family.len();
        let mut mass: Vec<ExactSum> = vec![ExactSum::new(); family.len()];
        for c in children.iter().filter(|c| c.parent == Some(pj)) {
            let m: ExactSum = c.atoms.iter().map(|&a| ctx.weights[a]).collect();
            let pos = family
                .iter()
                .position(|&j| c.atoms.iter().all(|&a| dist(ctx.mu.position(a), &tops[j].center) < tops[j].radius));
            match pos {
                Some(p) => mass[p].add_all(&m),
                None => uncovered.add_all(&m),
            }
        }
        for (p, &j) in family.iter().enumerate() {
            let t = &parent.top_cover[j];
            balls.push(PsiBall { center: t.center, r: t.r, mass: mass[p].value() });
        }
    }
    Ok(PsiCovers { level, d: ctx.mu.d(), s: ctx.mu.s(), balls, nested, uncovered_mass: uncovered.value() })
}

/// Ψ(x) = Σ_{k=2}^{k_max} 2^{k(s-d)} Σ_j μ′(T̃_j) φ_{k,j}(x) / m_d(2^k T_j),
/// with φ_{k,j} = φ((· - z_j) / (2^{k-1} 4 r_j)).
pub fn psi_eval(covers: &PsiCovers, x: &Point, spec: &PsiSpec) -> f64 {
    let d = covers.d as i32;
    let q = 2f64.powf(covers.s - covers.d as f64);
    let omega = unit_ball_volume(covers.d);
    let mut total = ExactSum::new();
    for b in &covers.balls {
        let dx = dist(x, &b.center);
        for k in 2..=spec.k_max {
            let radius = 2f64.powi(k as i32) * 4.0 * b.r;
            let phi = spec.phi(2.0 * dx / radius);
            if phi > 0.0 {
                total.add(q.powi(k as i32) * b.mass * phi / (omega * radius.powi(d)));
            }
        }
    }
    total.value()
}

/// ∫Ψ dm_d as the explicit sum Σ_{k=2}^{k_max} 2^{k(s-d)} Σ_j μ′(T̃_j).
pub fn psi_integral(spec: &PsiSpec, covers: &PsiCovers) -> f64 {
    let q = 2f64.powf(covers.s - covers.d as f64);
    let group: f64 = covers.balls.iter().map(|b| b.mass).collect::<ExactSum>().value();
    (2..=spec.k_max).map(|k| q.powi(k as i32) * group).collect::<ExactSum>().value()
}

/// q²(1 - q^{k_max-1}) / (1 - q) · Σ_j μ′(T̃_j), q = 2^{s-d}.
pub fn psi_closed_form(spec: &PsiSpec, covers: &PsiCovers) -> f64 {
    let q = 2f64.powf(covers.s - covers.d as f64);
    let group: f64 = covers.balls.iter().map(|b| b.mass).collect::<ExactSum>().value();
    q * q * (1.0 - q.powi(spec.k_max as i32 - 1)) / (1.0 - q) * group
}

/// g_A(x) = Σ_j μ′(T̃_j) / (A r_j)^s · 1[x ∈ A T_j].
pub fn g_function_eval(covers: &PsiCovers, x: &Point, a: f64) -> Result<f64> {
    if !(a >= 2.0) {
        return Err(Error::invalid(format!("A must be at least 2, got {a}")));
    }
    Ok(covers
        .balls
        .iter()
        .filter(|b| dist(x, &b.center) < 4.0 * a * b.r)
        .map(|b| b.mass / (a * b.r).powf(covers.s))
        .collect::<ExactSum>()
        .value())
}

/// ∫ g_A² dμ′.
pub fn g_function_norm(ctx: &HarnessContext, covers: &PsiCovers, a: f64) -> Result<f64> {
    let vals = ctx
        .tree
        .rarefied_atoms
        .iter()
        .map(|&x| g_function_eval(covers, ctx.mu.position(x), a).map(|g| ctx.weights[x] * g * g))
        .collect::<Result<Vec<f64>>>()?;
    Ok(vals.into_iter().collect::<ExactSum>().value())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiLevelReport {
    pub level: usize,
    pub balls: usize,
    pub nested: usize,
    pub group_mass: f64,
    pub uncovered_mass: f64,
    pub integral: f64,
    pub closed_form: f64,
    pub relative_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GNormReport {
    pub level: usize,
    pub a: f64,
    pub norm_squared: f64,
    /// ∫ g_A² dμ′ / μ′(R^d).
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnessReport {
    pub energies: EnergyReport,
    pub mean_zero_worst: f64,
    pub mean_zero_cells: usize,
    pub psi: Vec<PsiLevelReport>,
    pub psi_tail_bound: f64,
    pub g_norms: Vec<GNormReport>,
}

impl HarnessReport {
    pub fn all_finite(&self) -> bool {
        let e = &self.energies;
        e.level_energies
            .iter()
            .chain(&e.energy_ratios)
            .chain(e.cross_terms.iter().map(|c| &c.value))
            .all(|v| v.is_finite())
            && e.sigma_energy.is_finite()
            && self.mean_zero_worst.is_finite()
            && self.psi.iter().all(|p| p.integral.is_finite() && p.closed_form.is_finite())
            && self.g_norms.iter().all(|g| g.norm_squared.is_finite())
    }
}

/// Energies, the mean-zero identity over every cell, Ψ integrals for every
/// level and ∫ g_A² dμ′ for the given dilations.
pub fn harness_report(ctx: &HarnessContext, spec: &PsiSpec, dilations: &[f64]) -> Result<HarnessReport> {
    let energies = level_energies(ctx)?;
    let residuals = mean_zero_all(ctx, None)?;
    let mean_zero_worst = residuals.iter().map(MeanZeroResidual::relative).fold(0.0, f64::max);
    let mass = energies.mu_prime_mass;
    let mut psi = Vec::new();
    let mut g_norms = Vec::new();
    for level in 0..ctx.depth() {
        let covers = psi_covers(ctx, level)?;
        let integral = psi_integral(spec, &covers);
        let closed_form = psi_closed_form(spec, &covers);
        psi.push(PsiLevelReport {
            level,
            balls: covers.balls.len(),
            nested: covers.nested,
            group_mass: covers.balls.iter().map(|b| b.mass).sum(),
            uncovered_mass: covers.uncovered_mass,
            integral,
            closed_form,
            relative_gap: if closed_form == 0.0 {
                integral.abs()
            } else {
                (integral - closed_form).abs() / closed_form.abs()
            },
        });
        for &a in dilations {
            let norm_squared = g_function_norm(ctx, &covers, a)?;
            g_norms.push(GNormReport { level, a, norm_squared, ratio: norm_squared / mass });
        }
    }
    Ok(HarnessReport {
        energies,
        mean_zero_worst,
        mean_zero_cells: residuals.len(),
        psi,
        psi_tail_bound: spec.tail_bound(ctx.mu.s()),
        g_norms,
    })
}
