//! Lower bounds for the nonlinear Wolff capacity from witness measures, the
//! maximum principle, and a grid proxy for the Calderón–Zygmund capacity.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauges::{wolff_potential, Gauge};
use crate::geometry::{norm, GridSpec, Point, ORIGIN};
use crate::measure::AtomicMeasure;
use crate::riesz::{riesz_at, TruncationSpec};
use crate::scales::ScaleWindow;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WolffSup {
    pub value: f64,
    /// Index of the maximising probe (the first one on ties).
    pub probe: Option<usize>,
    /// Set when the potential diverges at `probe`.
    pub divergent: bool,
}

/// max over the probes of W_{Φ,s}(μ); a divergent probe yields +∞.
pub fn wolff_sup(mu: &AtomicMeasure, g: &Gauge, probes: &[Point], window: &ScaleWindow) -> Result<WolffSup> {
    if probes.is_empty() {
        return Err(Error::invalid("no probe points"));
    }
    let vals: Vec<Result<f64>> = probes.par_iter().map(|x| wolff_potential(mu, x, g, window)).collect();
    let mut best = WolffSup { value: 0.0, probe: None, divergent: false };
    for (i, v) in vals.into_iter().enumerate() {
        match v {
            Ok(v) => {
                if best.probe.is_none() || v > best.value {
                    best.value = v;
                    best.probe = Some(i);
                }
            }
            Err(Error::Divergence(_)) => return Ok(WolffSup { value: f64::INFINITY, probe: Some(i), divergent: true }),
            Err(e) => return Err(e),
        }
    }
    Ok(best)
}

/// The support of μ followed by a grid over its enlarged bounding box.
pub fn support_and_halo(mu: &AtomicMeasure, halo: &GridSpec) -> Result<Vec<Point>> {
    let mut probes = mu.positions().to_vec();
    if let Some((lo, hi)) = mu.bounding_box() {
        probes.extend(halo.points(mu.d(), &lo, &hi)?);
    }
    Ok(probes)
}

/// Uniform random points in the bounding box of μ enlarged by `margin`
/// times its largest extent, excluding atoms.
pub fn random_off_support_probes(mu: &AtomicMeasure, count: usize, margin: f64, seed: u64) -> Vec<Point> {
    let Some((lo, hi)) = mu.bounding_box() else { return Vec::new() };
    let d = mu.d();
    let extent = (0..d).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);
    let pad = margin * if extent > 0.0 { extent } else { 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut p = ORIGIN;
        for k in 0..d {
            p[k] = rng.gen_range(lo[k] - pad..=hi[k] + pad);
        }
        if mu.atom_at(&p).is_none() {
            out.push(p);
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct CapacityEstimate {
    /// Total mass of the witness: a lower bound for cap_{Φ,s}(E).
    pub value: f64,
    pub witness: AtomicMeasure,
    /// sup of W_{Φ,s}(candidate) over the support probes.
    pub a_used: f64,
    /// witness = factor · candidate.
    pub factor: f64,
    /// The dilation M of the rescaling step (1 when A <= 1).
    pub dilation: f64,
    pub diagnostic: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacitySummary {
    pub value: f64,
    pub a_used: f64,
    pub factor: f64,
    pub dilation: f64,
    pub candidate_mass: f64,
    pub witness_atoms: usize,
    pub diagnostic: Option<String>,
}

impl CapacityEstimate {
    pub fn summary(&self) -> CapacitySummary {
        CapacitySummary {
            value: self.value,
            a_used: self.a_used,
            factor: self.factor,
            dilation: self.dilation,
            candidate_mass: if self.factor > 0.0 { self.witness.total_mass() / self.factor } else { 0.0 },
            witness_atoms: self.witness.len(),
            diagnostic: self.diagnostic.clone(),
        }
    }
}

/// The mass factor turning a measure with sup W <= A into one with
/// sup W <= A′ (A′ < A): (A′/A)^{1/σ} M^{-s} with M = e^{A/c} and
/// c = min(ϰ, Φ(ϰ)), which forces μ(B(x, r))/(M r)^s <= ϰ at every scale
/// so the σ-condition applies. Returns (factor, M).
pub fn rescale_factor(g: &Gauge, s: f64, a: f64, a_prime: f64) -> Result<(f64, f64)> {
    if !(a_prime > 0.0 && a > a_prime) {
        return Err(Error::invalid(format!("rescaling needs 0 < A′ < A, got A′ = {a_prime}, A = {a}")));
    }
    let c = g.kappa.min(g.eval(g.kappa));
    let ln_m = a / c;
    let factor = ((a_prime / a).ln() / g.sigma - s * ln_m).exp();
    Ok((factor, ln_m.exp()))
}

/// Witness for cap_{Φ,s}(E): A = sup of W(candidate) over its support;
/// the maximum principle makes 2^{-s}·candidate satisfy W <= A everywhere,
/// and when A > 1 the rescaling to level 1 follows. The candidate's atoms
/// must lie in `e`.
pub fn capacity_lower_bound(
    e: &[Point],
    g: &Gauge,
    window: &ScaleWindow,
    candidate: &AtomicMeasure,
) -> Result<CapacityEstimate> {
    let set: HashSet<[u64; 3]> = e.iter().map(|p| p.map(f64::to_bits)).collect();
    if let Some(i) = candidate.positions().iter().position(|p| !set.contains(&p.map(f64::to_bits))) {
        return Err(Error::invalid(format!("candidate atom {i} is not a point of E")));
    }
    let s = candidate.s();
    if candidate.is_empty() {
        return Ok(CapacityEstimate {
            value: 0.0,
            witness: candidate.clone(),
            a_used: 0.0,
            factor: 1.0,
            dilation: 1.0,
            diagnostic: Some("empty candidate".into()),
        });
    }
    let sup = wolff_sup(candidate, g, candidate.positions(), window)?;
    if sup.divergent {
        return Ok(CapacityEstimate {
            value: 0.0,
            witness: AtomicMeasure::empty(candidate.ambient()),
            a_used: f64::INFINITY,
            factor: 0.0,
            dilation: f64::INFINITY,
            diagnostic: Some(format!("Wolff potential diverges at candidate atom {}", sup.probe.unwrap_or(0))),
        });
    }
    let a = sup.value;
    let half = 2f64.powf(-s);
    let (factor, dilation) = if a <= 1.0 {
        (half, 1.0)
    } else {
        let (f, m) = rescale_factor(g, s, a, 1.0)?;
        (half * f, m)
    };
    let diagnostic = (factor == 0.0).then(|| format!("rescaling factor underflows at A = {a:e}"));
    let witness = if factor > 0.0 { candidate.scaled(factor)? } else { AtomicMeasure::empty(candidate.ambient()) };
    Ok(CapacityEstimate { value: witness.total_mass(), witness, a_used: a, factor, dilation, diagnostic })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleReport {
    /// max of W(μ) over supp μ.
    pub a_support: f64,
    /// max of W(2^{-s} μ) over the off-support probes.
    pub worst_value: f64,
    pub worst_probe: Option<Point>,
    pub probes: usize,
    pub tol: f64,
    pub passed: bool,
}

/// Checks W(2^{-s}μ)(x) <= A (1 + tol) at every off-support probe, where A is
/// the maximum of W(μ) over supp μ. Probes on atoms are ignored.
pub fn max_principle_check(
    mu: &AtomicMeasure,
    g: &Gauge,
    window: &ScaleWindow,
    probes: &[Point],
    tol: f64,
) -> Result<MaxPrincipleReport> {
    if mu.is_empty() {
        return Ok(MaxPrincipleReport {
            a_support: 0.0,
            worst_value: 0.0,
            worst_probe: None,
            probes: 0,
            tol,
            passed: true,
        });
    }
    let a = wolff_sup(mu, g, mu.positions(), window)?;
    let off: Vec<Point> = probes.iter().copied().filter(|p| mu.atom_at(p).is_none()).collect();
    let tilde = mu.scaled(2f64.powf(-mu.s()))?;
    let (worst_value, worst_probe) = if off.is_empty() {
        (0.0, None)
    } else {
        let w = wolff_sup(&tilde, g, &off, window)?;
        (w.value, w.probe.map(|i| off[i]))
    };
    Ok(MaxPrincipleReport {
        a_support: a.value,
        worst_value,
        worst_probe,
        probes: off.len(),
        tol,
        passed: worst_value <= a.value * (1.0 + tol),
    })
}

/// max over grid points and inner truncation radii ε of |R_ε(μ)(x)|, where
/// R_ε sums over atoms at distance greater than ε.
pub fn cz_admissibility_proxy(mu: &AtomicMeasure, grid: &[Point], trunc_radii: &[f64]) -> Result<f64> {
    if grid.is_empty() || trunc_radii.is_empty() {
        return Err(Error::invalid("the γ_s proxy needs grid points and truncation radii"));
    }
    let truncs: Vec<TruncationSpec> =
        trunc_radii.iter().map(|&e| TruncationSpec::new(e, f64::INFINITY)).collect::<Result<_>>()?;
    let vals: Vec<f64> = grid
        .par_iter()
        .map(|x| truncs.iter().try_fold(0.0f64, |m, t| Ok::<f64, Error>(m.max(norm(&riesz_at(mu, x, t)?.value)))))
        .collect::<Result<_>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub grid: GridSpec,
    /// Inner truncation radii for the γ_s proxy; empty means dyadic radii
    /// from the window's r_min up to the diameter.
    pub trunc_radii: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityComparison {
    pub atoms: usize,
    pub natural_mass: f64,
    /// max |R_ε(natural measure)| over the grid.
    pub proxy_sup: f64,
    /// natural mass / proxy_sup: the largest multiple of the natural
    /// measure that is proxy-admissible.
    pub gamma_proxy: f64,
    pub capacity: CapacitySummary,
    /// gamma_proxy / capacity lower bound.
    pub ratio: f64,
    pub trunc_radii: Vec<f64>,
    pub grid_points: usize,
}

/// Equal weights on E with total mass diam(E)^s (1 for a single atom).
pub fn natural_measure(e: &AtomicMeasure) -> Result<AtomicMeasure> {
    let n = e.len();
    if n == 0 {
        return Err(Error::invalid("E has no atoms"));
    }
    let diam = e.diameter();
    let total = if diam > 0.0 { diam.powf(e.s()) } else { 1.0 };
    e.with_weights(vec![total / n as f64; n])
}

/// The γ_s grid proxy against the Wolff capacity bound (gauge `g`) for the
/// natural measure on E.
pub fn compare_capacities(
    e: &AtomicMeasure,
    g: &Gauge,
    window: &ScaleWindow,
    cfg: &CompareConfig,
) -> Result<CapacityComparison> {
    let nu = natural_measure(e)?;
    let (lo, hi) = nu.bounding_box().expect("nonempty");
    let grid = cfg.grid.points(nu.d(), &lo, &hi)?;
    let trunc_radii = if cfg.trunc_radii.is_empty() {
        if !(window.r_min > 0.0) {
            return Err(Error::invalid("default truncation radii need r_min > 0"));
        }
        let top = nu.diameter().max(window.r_min);
        let mut v = vec![window.r_min];
        while *v.last().unwrap() < top {
            v.push(2.0 * v.last().unwrap());
        }
        v
    } else {
        cfg.trunc_radii.clone()
    };
    let proxy_sup = cz_admissibility_proxy(&nu, &grid, &trunc_radii)?;
    let natural_mass = nu.total_mass();
    let gamma_proxy = if proxy_sup > 0.0 { natural_mass / proxy_sup } else { f64::INFINITY };
    let cap = capacity_lower_bound(nu.positions(), g, window, &nu)?;
    Ok(CapacityComparison {
        atoms: nu.len(),
        natural_mass,
        proxy_sup,
        gamma_proxy,
        ratio: gamma_proxy / cap.value,
        capacity: cap.summary(),
        trunc_radii,
        grid_points: grid.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::AmbientParams;

    #[test]
    fn rescale_reaches_target_level() {
        let g = Gauge::exponential(3.0).unwrap();
        let (f, m) = rescale_factor(&g, 1.5, 4.0, 1.0).unwrap();
        let c = g.kappa.min(g.eval(g.kappa));
        assert!((m - (4.0 / c).exp()).abs() < 1e-12 * m);
        assert!((f - 0.25 * m.powf(-1.5)).abs() < 1e-12 * f);
        assert!(rescale_factor(&g, 1.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn empty_measure_cases() {
        let amb = AmbientParams::new(2, 1.5).unwrap();
        let mu = AtomicMeasure::empty(amb);
        let w = ScaleWindow::new(0.01, f64::INFINITY).unwrap();
        let g = Gauge::power(2.0).unwrap();
        assert_eq!(wolff_sup(&mu, &g, &[ORIGIN], &w).unwrap().value, 0.0);
        assert!(max_principle_check(&mu, &g, &w, &[ORIGIN], 1e-6).unwrap().passed);
        assert_eq!(cz_admissibility_proxy(&mu, &[ORIGIN], &[0.1]).unwrap(), 0.0);
    }
}
