//! Potential gauges Φ, their admissibility, the smooth convex gauge V, Wolff
//! potentials W_{Φ,s}(μ)(x) = ∫ Φ(μ(B(x, r))/r^s) dr/r and the quadratic
//! Wolff energy.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::ExactSum;
use crate::geometry::{dist, Point};
use crate::measure::{check_point, AtomicMeasure};
use crate::quad;
use crate::scales::ScaleWindow;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GaugeKind {
    Power {
        p: f64,
    },
    Exponential {
        beta: f64,
    },
    SmoothV,
    /// Φ = 1_{t > threshold}; not admissible, used to cross-check scale sets.
    Indicator {
        threshold: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gauge {
    pub kind: GaugeKind,
    pub sigma: f64,
    pub kappa: f64,
}

/// max(3, (s - d + 2)/(s - d + 1)).
pub fn default_beta(d: usize, s: f64) -> f64 {
    let e = s - d as f64;
    ((e + 2.0) / (e + 1.0)).max(3.0)
}

impl Gauge {
    pub fn power(p: f64) -> Result<Gauge> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::invalid(format!("power gauge needs p > 0, got {p}")));
        }
        Ok(Gauge { kind: GaugeKind::Power { p }, sigma: p, kappa: 1.0 })
    }

    /// e^{-t^{-β}} with σ = 1 and ϰ = β^{1/β}, the largest ϰ for σ = 1.
    pub fn exponential(beta: f64) -> Result<Gauge> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::invalid(format!("exponential gauge needs β > 0, got {beta}")));
        }
        Ok(Gauge { kind: GaugeKind::Exponential { beta }, sigma: 1.0, kappa: beta.powf(1.0 / beta) })
    }

    pub fn exponential_default(d: usize, s: f64) -> Gauge {
        Gauge::exponential(default_beta(d, s)).expect("default β is valid")
    }

    pub fn smooth_v() -> Gauge {
        Gauge { kind: GaugeKind::SmoothV, sigma: 2.0, kappa: 1.0 }
    }

    pub fn indicator(threshold: f64) -> Result<Gauge> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(Error::invalid(format!("indicator threshold must be positive, got {threshold}")));
        }
        Ok(Gauge { kind: GaugeKind::Indicator { threshold }, sigma: 1.0, kappa: 1.0 })
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self.kind {
            GaugeKind::Power { p } => t.powf(p),
            GaugeKind::Exponential { beta } => (-t.powf(-beta)).exp(),
            GaugeKind::SmoothV => SmoothGaugeV.v(t),
            GaugeKind::Indicator { threshold } => f64::from(u8::from(t > threshold)),
        }
    }

    /// ln Φ(t), finite where Φ underflows.
    pub fn ln_eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return f64::NEG_INFINITY;
        }
        match self.kind {
            GaugeKind::Power { p } => p * t.ln(),
            GaugeKind::Exponential { beta } => -t.powf(-beta),
            GaugeKind::SmoothV => SmoothGaugeV.v(t).ln(),
            GaugeKind::Indicator { threshold } => {
                if t > threshold {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// lim_{t→∞} Φ(t) > 0, so an atom at the evaluation point makes the
    /// potential diverge.
    pub fn positive_at_infinity(&self) -> bool {
        true
    }
}

impl fmt::Display for Gauge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            GaugeKind::Power { p } => write!(f, "power:p={p}"),
            GaugeKind::Exponential { beta } => write!(f, "exp:beta={beta}"),
            GaugeKind::SmoothV => write!(f, "V"),
            GaugeKind::Indicator { threshold } => write!(f, "indicator:delta={threshold}"),
        }
    }
}

impl FromStr for Gauge {
    type Err = Error;

    /// `exp:beta=3`, `power:p=2`, `V` or `indicator:delta=0.25`.
    fn from_str(spec: &str) -> Result<Gauge> {
        let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
        let param = |key: &str| -> Result<Option<f64>> {
            let mut value = None;
            for kv in rest.split(',').filter(|kv| !kv.is_empty()) {
                let (k, v) = kv.split_once('=').ok_or_else(|| Error::invalid(format!("bad gauge parameter {kv:?}")))?;
                if k.trim() != key {
                    return Err(Error::invalid(format!("unknown gauge parameter {k:?}")));
                }
                value = Some(v.trim().parse().map_err(|_| Error::invalid(format!("bad number in {kv:?}")))?);
            }
            Ok(value)
        };
        match name.trim() {
            "exp" | "exponential" => Gauge::exponential(param("beta")?.unwrap_or(3.0)),
            "power" => Gauge::power(param("p")?.unwrap_or(2.0)),
            "V" | "v" => Ok(Gauge::smooth_v()),
            "indicator" => Gauge::indicator(param("delta")?.ok_or_else(|| Error::invalid("indicator needs delta"))?),
            other => Err(Error::invalid(format!("unknown gauge {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub property: String,
    pub t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub passed: bool,
    pub zero_at_origin: bool,
    pub strictly_increasing: bool,
    pub sigma_condition: bool,
    pub first_violation: Option<Violation>,
}

pub fn check_admissibility(g: &Gauge, grid_size: usize) -> Result<AdmissibilityReport> {
    check_admissibility_fn(|t| g.ln_eval(t), g.eval(0.0), g.sigma, g.kappa, grid_size)
}

/// Φ(0) = 0, strict increase of ln Φ on a log grid over [1e-4, 1e4], and
/// ln Φ(t) - σ ln t non-decreasing on a log grid over [1e-6 ϰ, ϰ].
pub fn check_admissibility_fn(
    ln_phi: impl Fn(f64) -> f64,
    phi_at_zero: f64,
    sigma: f64,
    kappa: f64,
    grid_size: usize,
) -> Result<AdmissibilityReport> {
    if grid_size < 100 {
        return Err(Error::invalid(format!("grid_size must be at least 100, got {grid_size}")));
    }
    let grid = |lo: f64, hi: f64| -> Vec<f64> {
        let (l0, l1) = (lo.ln(), hi.ln());
        (0..grid_size).map(|i| (l0 + (l1 - l0) * i as f64 / (grid_size - 1) as f64).exp()).collect()
    };
    let mut first = None;
    let zero_at_origin = phi_at_zero == 0.0;
    if !zero_at_origin {
        first = Some(Violation { property: "zero_at_origin".into(), t: 0.0 });
    }
    let mut strictly_increasing = true;
    let g = grid(1e-4, 1e4);
    for w in g.windows(2) {
        if !(ln_phi(w[1]) > ln_phi(w[0])) {
            strictly_increasing = false;
            first.get_or_insert(Violation { property: "strictly_increasing".into(), t: w[1] });
            break;
        }
    }
    let mut sigma_condition = true;
    let g = grid(kappa * 1e-6, kappa);
    let h = |t: f64| ln_phi(t) - sigma * t.ln();
    for w in g.windows(2) {
        let (h0, h1) = (h(w[0]), h(w[1]));
        if !(h1 >= h0 - 1e-12 * h0.abs().max(1.0)) {
            sigma_condition = false;
            first.get_or_insert(Violation { property: "sigma_condition".into(), t: w[1] });
            break;
        }
    }
    Ok(AdmissibilityReport {
        passed: zero_at_origin && strictly_increasing && sigma_condition,
        zero_at_origin,
        strictly_increasing,
        sigma_condition,
        first_violation: first,
    })
}

/// The reference profile v with v'' = 2 on [0, 1], 2(2 - t) on [1, 2] and 0
/// beyond; V(x) = v(|x|).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SmoothGaugeV;

impl SmoothGaugeV {
    pub fn v(&self, t: f64) -> f64 {
        let t = t.abs();
        if t <= 1.0 {
            t * t
        } else if t <= 2.0 {
            let u = t - 1.0;
            t * t - u * u * u / 3.0
        } else {
            11.0 / 3.0 + 3.0 * (t - 2.0)
        }
    }

    pub fn dv(&self, t: f64) -> f64 {
        if t <= 1.0 {
            2.0 * t
        } else if t <= 2.0 {
            let u = t - 1.0;
            2.0 + 2.0 * u - u * u
        } else {
            3.0
        }
    }

    pub fn d2v(&self, t: f64) -> f64 {
        if t <= 1.0 {
            2.0
        } else if t <= 2.0 {
            2.0 * (2.0 - t)
        } else {
            0.0
        }
    }

    /// G(u) = ∫_0^u v(t)/t dt.
    pub fn log_antiderivative(&self, u: f64) -> f64 {
        // Primitive of v(t)/t on [1, 2] is t² - t³/9 - t + (ln t)/3 + 11/18,
        // on [2, ∞) it is 3t - (7/3) ln t + c with c fixed by continuity.
        let mid = |t: f64| t * t - t * t * t / 9.0 - t + t.ln() / 3.0 + 11.0 / 18.0;
        if u <= 1.0 {
            0.5 * u * u
        } else if u <= 2.0 {
            mid(u)
        } else {
            let c = mid(2.0) - 6.0 + 7.0 / 3.0 * 2f64.ln();
            3.0 * u - 7.0 / 3.0 * u.ln() + c
        }
    }

    pub fn check_invariants(&self, grid_size: usize, dilations: &[f64]) -> VInvariantReport {
        let (l0, l1) = (1e-6f64.ln(), 100f64.ln());
        let grid: Vec<f64> =
            (0..grid_size).map(|i| (l0 + (l1 - l0) * i as f64 / (grid_size.max(2) - 1) as f64).exp()).collect();
        let slack = |x: f64| 1e-12 * x.abs().max(1e-300);
        let origin = self.v(0.0) == 0.0 && self.dv(0.0) == 0.0;
        let mut prev = self.d2v(0.0);
        let mut concavity = true;
        for &t in &grid {
            let c = self.d2v(t);
            if c > prev || (t >= 2.0 && c != 0.0) {
                concavity = false;
            }
            prev = c;
        }
        let sandwich = grid.iter().all(|&t| {
            let v = self.v(t);
            t.min(t * t) <= v + slack(v) && v <= t * t + slack(v)
        });
        let gradient = grid.iter().all(|&t| {
            let d = self.dv(t);
            d * d <= 4.0 * self.v(t) + slack(d * d) && d <= 4.0
        });
        let homogeneity = dilations.iter().all(|&a| {
            grid.iter().all(|&t| {
                let rhs = a * a * self.v(t);
                self.v(a * t) <= rhs + slack(rhs)
            })
        });
        VInvariantReport {
            origin,
            concavity,
            sandwich,
            gradient,
            homogeneity,
            v_at_two: self.v(2.0),
            max_gradient: grid.iter().map(|&t| self.dv(t)).fold(0.0, f64::max),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VInvariantReport {
    /// v(0) = 0 and v'(0) = 0.
    pub origin: bool,
    /// v'' non-increasing and zero from t = 2 on.
    pub concavity: bool,
    /// min(t, t²) <= v(t) <= t².
    pub sandwich: bool,
    /// v'(t)² <= 4 v(t) and v' <= 4.
    pub gradient: bool,
    /// v(at) <= a² v(t).
    pub homogeneity: bool,
    pub v_at_two: f64,
    pub max_gradient: f64,
}

impl VInvariantReport {
    pub fn all_pass(&self) -> bool {
        self.origin && self.concavity && self.sandwich && self.gradient && self.homogeneity
    }
}

/// Per-piece relative tolerance of the adaptive quadrature.
const PIECE_REL_TOL: f64 = 1e-11;
const PIECE_MAX_INTERVALS: usize = 200;

/// ∫_a^b Φ(m/r^s) dr/r for constant mass m, 0 <= a < b <= ∞.
///
/// With y = ln(m/r^s) this is (1/s) ∫ Φ(e^y) dy over [ln(m/b^s), ln(m/a^s)].
pub fn piece_integral(g: &Gauge, s: f64, m: f64, a: f64, b: f64) -> f64 {
    if m == 0.0 || a >= b {
        return 0.0;
    }
    let y_hi = m.ln() - s * a.ln();
    let y_lo = if b.is_finite() { m.ln() - s * b.ln() } else { f64::NEG_INFINITY };
    match g.kind {
        GaugeKind::Power { p } => {
            let head = (m / a.powf(s)).powf(p) / (p * s);
            if b.is_finite() {
                // 1 - (a/b)^{ps}, formed without cancellation.
                head * -(p * s * ((a - b) / b).ln_1p()).exp_m1()
            } else {
                head
            }
        }
        GaugeKind::Indicator { threshold } => (y_hi - y_lo.max(threshold.ln())).max(0.0) / s,
        GaugeKind::SmoothV => {
            let v = SmoothGaugeV;
            let lo = if b.is_finite() { v.log_antiderivative(m / b.powf(s)) } else { 0.0 };
            (v.log_antiderivative(m / a.powf(s)) - lo) / s
        }
        GaugeKind::Exponential { beta } => {
            // Φ(e^y) = exp(-e^{-βy}) is exactly 0 in double precision below
            // y = -ln(750)/β.
            let cut = -(750f64).ln() / beta;
            let lo = y_lo.max(cut);
            if y_hi <= lo {
                return 0.0;
            }
            let f = |y: f64| (-(-beta * y).exp()).exp();
            quad::integrate(f, lo, y_hi, PIECE_REL_TOL, 0.0, PIECE_MAX_INTERVALS).value / s
        }
    }
}

/// The same piece by adaptive quadrature of Φ(e^y) for any gauge and finite
/// b; the reference for the closed forms.
pub fn piece_integral_quadrature(g: &Gauge, s: f64, m: f64, a: f64, b: f64) -> f64 {
    if m == 0.0 || a >= b {
        return 0.0;
    }
    let y_hi = m.ln() - s * a.ln();
    let y_lo = m.ln() - s * b.ln();
    quad::integrate(|y| g.eval(y.exp()), y_lo, y_hi, 1e-13, 0.0, 2000).value / s
}

/// W_{Φ,s}(μ)(x) over the window, exact in the piecewise-constant mass.
pub fn wolff_potential(mu: &AtomicMeasure, x: &Point, g: &Gauge, window: &ScaleWindow) -> Result<f64> {
    check_point(x)?;
    let s = mu.s();
    let mut d: Vec<(f64, f64)> = mu.positions().iter().zip(mu.weights()).map(|(p, &w)| (dist(p, x), w)).collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0));
    if window.r_min == 0.0 && d.first().is_some_and(|p| p.0 == 0.0) && g.positive_at_infinity() {
        return Err(Error::Divergence("Wolff potential at an atom with r_min = 0".into()));
    }
    let mut mass = ExactSum::new();
    let mut i = 0;
    while i < d.len() && d[i].0 <= window.r_min {
        mass.add(d[i].1);
        i += 1;
    }
    let mut m = mass.value();
    let mut cur = window.r_min;
    let mut total = 0.0;
    while i < d.len() && d[i].0 < window.r_max {
        let r = d[i].0;
        total += piece_integral(g, s, m, cur, r);
        while i < d.len() && d[i].0 == r {
            mass.add(d[i].1);
            i += 1;
        }
        m = mass.value();
        cur = r;
    }
    total += piece_integral(g, s, m, cur, window.r_max);
    Ok(total)
}

/// Wolff potential at several points in parallel.
pub fn wolff_potentials(mu: &AtomicMeasure, xs: &[Point], g: &Gauge, window: &ScaleWindow) -> Result<Vec<f64>> {
    xs.par_iter().map(|x| wolff_potential(mu, x, g, window)).collect()
}

/// Σ_x μ({x}) W_{t²,s}(μ)(x) over the window.
pub fn wolff_energy(mu: &AtomicMeasure, window: &ScaleWindow) -> Result<f64> {
    if !(window.r_min > 0.0) {
        return Err(Error::invalid("Wolff energy needs r_min > 0"));
    }
    let g = Gauge::power(2.0)?;
    let w = wolff_potentials(mu, mu.positions(), &g, window)?;
    Ok(w.iter().zip(mu.weights()).map(|(p, m)| p * m).collect::<ExactSum>().value())
}
