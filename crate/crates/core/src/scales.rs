//! Superlevel scale sets E(x, Δ) = {r : μ(B(x, r)) / r^s > Δ}, dyadic good
//! scales, the weak-type statistic and the exceptional set.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::ExactSum;
use crate::geometry::{Ball, Point};
use crate::measure::{check_point, AtomicMeasure};

/// Radii window (r_min, r_max). `r_max` may be infinite; `r_min = 0` is
/// allowed but makes statistics at atoms divergent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleWindow {
    pub r_min: f64,
    pub r_max: f64,
}

impl ScaleWindow {
    pub fn new(r_min: f64, r_max: f64) -> Result<Self> {
        if !(r_min >= 0.0 && r_min.is_finite()) {
            return Err(Error::invalid(format!("r_min must be finite and nonnegative, got {r_min}")));
        }
        if !(r_max > r_min) {
            return Err(Error::invalid(format!("r_max must exceed r_min, got ({r_min}, {r_max})")));
        }
        Ok(ScaleWindow { r_min, r_max })
    }

    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        ScaleWindow::new(self.r_min * lambda, self.r_max * lambda)
    }

    /// ln(r_max / r_min).
    pub fn log_width(&self) -> f64 {
        (self.r_max / self.r_min).ln()
    }
}

/// Disjoint open radius intervals, sorted, with L = Σ ln(hi / lo).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScaleSet {
    pub intervals: Vec<(f64, f64)>,
    pub log_measure: f64,
}

impl ScaleSet {
    fn from_intervals(intervals: Vec<(f64, f64)>) -> Self {
        let log_measure = intervals.iter().map(|(a, b)| (b / a).ln()).sum();
        ScaleSet { intervals, log_measure }
    }

    pub fn contains(&self, r: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| a < r && r < b)
    }
}

/// Radius below which mass m has density above Δ.
#[inline]
fn threshold(m: f64, delta: f64, s: f64) -> f64 {
    (m / delta).powf(1.0 / s)
}

/// Exact E(x, Δ) ∩ (r_min, r_max).
///
/// μ(B(x, r)) is left-continuous and piecewise constant with jumps at atom
/// distances, so on each constant piece the density condition reads
/// r < (m/Δ)^{1/s}. The walk jumps from threshold to threshold inside E and
/// skips stretches of atoms that cannot lift the density above Δ outside it.
pub fn superlevel_scale_set(mu: &AtomicMeasure, x: &Point, delta: f64, window: &ScaleWindow) -> Result<ScaleSet> {
    check_point(x)?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid(format!("Δ must be positive and finite, got {delta}")));
    }
    if window.r_min == 0.0 && mu.atom_at(x).is_some() {
        return Err(Error::Divergence("scale set at an atom with r_min = 0 has infinite log-measure".into()));
    }
    let s = mu.s();
    let r_max = window.r_max;
    let mut out = Vec::new();
    let mut cur = window.r_min;
    'outer: loop {
        // Outside E just above `cur` unless the mass at cur already suffices.
        let mut m = mu.closed_mass(x, cur);
        if threshold(m, delta, s) <= cur {
            let d1 = loop {
                let Some(d1) = mu.next_distance_above(x, cur) else { break 'outer };
                if d1 >= r_max {
                    break 'outer;
                }
                let m1 = mu.closed_mass(x, d1);
                if threshold(m1, delta, s) > d1 {
                    m = m1;
                    break d1;
                }
                let cap = delta * d1.powf(s);
                let mut f = 1.0;
                let mut next = d1;
                while f > 1.0 / 64.0 {
                    let far = (d1 * (1.0 + f)).min(r_max);
                    if mu.closed_mass(x, far) <= cap {
                        next = far;
                        break;
                    }
                    f *= 0.5;
                }
                if next >= r_max {
                    break 'outer;
                }
                cur = next;
            };
            cur = d1;
        }
        let start = cur;
        loop {
            let e = threshold(m, delta, s);
            if e >= r_max {
                out.push((start, r_max));
                break 'outer;
            }
            if mu.open_mass(x, e) > m {
                cur = e;
                m = mu.closed_mass(x, e);
                if threshold(m, delta, s) > e {
                    continue;
                }
            } else {
                cur = e;
            }
            out.push((start, e));
            continue 'outer;
        }
    }
    Ok(ScaleSet::from_intervals(out))
}

/// The strict dyadic density test μ(B(x, 2^{-k})) > (Δ/2^s) 2^{-sk}.
pub fn is_good_scale(mu: &AtomicMeasure, x: &Point, delta: f64, k: i32) -> bool {
    let s = mu.s();
    let r = (-(k as f64)).exp2();
    mu.open_mass(x, r) > delta / 2f64.powf(s) * r.powf(s)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GoodScaleReport {
    pub ks: Vec<u32>,
    pub count: usize,
}

pub fn good_scales(mu: &AtomicMeasure, x: &Point, delta: f64, k_max: u32) -> Result<GoodScaleReport> {
    check_point(x)?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid(format!("Δ must be positive and finite, got {delta}")));
    }
    let ks: Vec<u32> = (0..=k_max).filter(|&k| is_good_scale(mu, x, delta, k as i32)).collect();
    let count = ks.len();
    Ok(GoodScaleReport { ks, count })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WeakTypeReport {
    /// (T, μ{x : L(E(x, Δ)) > T}).
    pub curve: Vec<(f64, f64)>,
    /// Least-squares decay exponent of ln(mass) against ln ln T.
    pub alpha_hat: Option<f64>,
    /// L(E(x, Δ)) per atom, in atom order.
    pub log_measures: Vec<f64>,
    pub total_mass: f64,
}

pub fn weak_type_statistic(mu: &AtomicMeasure, delta: f64, ts: &[f64], window: &ScaleWindow) -> Result<WeakTypeReport> {
    if ts.is_empty() {
        return Err(Error::invalid("at least one T is required"));
    }
    if ts.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::invalid("every T must be positive and finite"));
    }
    if !(window.r_min > 0.0) {
        return Err(Error::invalid("weak-type statistic needs r_min > 0"));
    }
    let log_measures: Vec<f64> = (0..mu.len())
        .into_par_iter()
        .map(|i| superlevel_scale_set(mu, mu.position(i), delta, window).map(|e| e.log_measure))
        .collect::<Result<_>>()?;
    let curve: Vec<(f64, f64)> = ts
        .iter()
        .map(|&t| {
            let m: ExactSum = log_measures.iter().zip(mu.weights()).filter(|(l, _)| **l > t).map(|(_, &w)| w).collect();
            (t, m.value())
        })
        .collect();
    let alpha_hat = fit_decay_exponent(&curve);
    Ok(WeakTypeReport { curve, alpha_hat, log_measures, total_mass: mu.total_mass() })
}

/// −slope of ln(mass) against ln ln T over the points with T > 1 and
/// mass > 0; `None` with fewer than two usable points.
pub fn fit_decay_exponent(curve: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        curve.iter().filter(|(t, m)| *t > 1.0 && *m > 0.0).map(|(t, m)| (t.ln().ln(), m.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    // 0 - x rather than -x, so a flat curve reports +0.
    Some(0.0 - sxy / sxx)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalSet {
    pub members: Vec<usize>,
    pub mass_fraction: f64,
}

/// Atoms x ∈ ½B₀ whose density exceeds δ at every r ∈ [r₀/2^q, r₀/4].
pub fn exceptional_set(mu: &AtomicMeasure, b0: &Ball, delta: f64, q: u32) -> Result<ExceptionalSet> {
    check_point(&b0.center)?;
    if q < 3 {
        return Err(Error::invalid(format!("q must be at least 3, got {q}")));
    }
    if !(b0.radius > 0.0 && b0.radius.is_finite()) {
        return Err(Error::invalid("B0 radius must be positive and finite"));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid(format!("δ must be positive and finite, got {delta}")));
    }
    let total = mu.open_mass(&b0.center, b0.radius);
    if total == 0.0 {
        return Err(Error::UndefinedFraction("μ(B0) = 0".into()));
    }
    let s = mu.s();
    let lo = b0.radius / 2f64.powi(q as i32);
    let hi = b0.radius / 4.0;
    let window = ScaleWindow::new(lo, hi)?;
    let candidates = mu.atoms_within(&b0.center, b0.radius / 2.0);
    let flags: Vec<bool> = candidates
        .par_iter()
        .map(|&i| {
            let x = mu.position(i);
            let e = superlevel_scale_set(mu, x, delta, &window)?;
            let interior = e.intervals.len() == 1 && e.intervals[0] == (lo, hi);
            let ends = mu.open_mass(x, lo) > delta * lo.powf(s) && mu.open_mass(x, hi) > delta * hi.powf(s);
            Ok(interior && ends)
        })
        .collect::<Result<_>>()?;
    let members: Vec<usize> = candidates.into_iter().zip(flags).filter(|(_, f)| *f).map(|(i, _)| i).collect();
    let mass: ExactSum = members.iter().map(|&i| mu.weight(i)).collect();
    Ok(ExceptionalSet { mass_fraction: mass.value() / total, members })
}
