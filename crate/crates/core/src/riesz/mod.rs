//! The s-dimensional Riesz transform of atomic measures: direct sums,
//! truncations, the discretised maximal transform, the adjoint, and a
//! certified hierarchical backend (`fast`).

mod fast;
mod multipole;

pub use fast::{riesz_field_fast, FastConfig, RieszTree};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist, dist2, Ball, Point};
use crate::measure::{check_point, AtomicMeasure};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelEval {
    pub value: Point,
    pub terms_used: usize,
    pub error_bound: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationSpec {
    pub inner_radius: f64,
    pub outer_radius: f64,
}

impl TruncationSpec {
    pub fn new(inner_radius: f64, outer_radius: f64) -> Result<Self> {
        if !(inner_radius >= 0.0) || !(outer_radius > inner_radius) {
            return Err(Error::invalid(format!(
                "truncation needs 0 <= inner < outer, got ({inner_radius}, {outer_radius})"
            )));
        }
        Ok(TruncationSpec { inner_radius, outer_radius })
    }

    pub fn none() -> Self {
        TruncationSpec { inner_radius: 0.0, outer_radius: f64::INFINITY }
    }

    pub fn outside(inner_radius: f64) -> Self {
        TruncationSpec { inner_radius, outer_radius: f64::INFINITY }
    }

    #[inline]
    pub fn admits(&self, r: f64) -> bool {
        self.inner_radius < r && r < self.outer_radius
    }
}

impl Default for TruncationSpec {
    fn default() -> Self {
        Self::none()
    }
}

/// w (a - x) / |a - x|^{1+s}.
#[inline]
pub fn kernel_term(a: &Point, x: &Point, w: f64, s: f64) -> Point {
    let r2 = dist2(a, x);
    let f = w * r2.powf(-0.5 * (1.0 + s));
    [(a[0] - x[0]) * f, (a[1] - x[1]) * f, (a[2] - x[2]) * f]
}

#[inline]
pub(crate) fn add_into(acc: &mut Point, v: &Point) {
    acc[0] += v[0];
    acc[1] += v[1];
    acc[2] += v[2];
}

pub fn riesz_at(mu: &AtomicMeasure, x: &Point, trunc: &TruncationSpec) -> Result<KernelEval> {
    check_point(x)?;
    let s = mu.s();
    let mut acc = [0.0; 3];
    let mut terms = 0;
    for (i, (a, &w)) in mu.positions().iter().zip(mu.weights()).enumerate() {
        let r = dist(a, x);
        if r == 0.0 && trunc.inner_radius == 0.0 {
            return Err(Error::Singularity { atom: i });
        }
        if trunc.admits(r) {
            add_into(&mut acc, &kernel_term(a, x, w, s));
            terms += 1;
        }
    }
    Ok(KernelEval { value: acc, terms_used: terms, error_bound: 0.0 })
}

/// Direct evaluation at many targets (parallel, deterministic per target).
pub fn riesz_field_direct(mu: &AtomicMeasure, targets: &[Point], trunc: &TruncationSpec) -> Result<Vec<KernelEval>> {
    targets.par_iter().map(|x| riesz_at(mu, x, trunc)).collect()
}

/// Riesz transform over the atoms outside the open ball `ball`
/// (|a - c| >= radius).
pub fn riesz_outside_ball(mu: &AtomicMeasure, x: &Point, ball: &Ball) -> Result<Point> {
    let s = mu.s();
    let mut acc = [0.0; 3];
    for (i, (a, &w)) in mu.positions().iter().zip(mu.weights()).enumerate() {
        if dist(a, &ball.center) < ball.radius {
            continue;
        }
        if dist2(a, x) == 0.0 {
            return Err(Error::Singularity { atom: i });
        }
        add_into(&mut acc, &kernel_term(a, x, w, s));
    }
    Ok(acc)
}

/// max over balls B of the family of |R(μ restricted outside 2B)(x)|.
pub fn riesz_maximal(mu: &AtomicMeasure, x: &Point, family: &[Ball]) -> Result<f64> {
    check_point(x)?;
    if family.is_empty() {
        return Err(Error::invalid("ball family is empty"));
    }
    let mut best: f64 = 0.0;
    for b in family {
        if !b.contains(x) {
            return Err(Error::invalid(format!("ball {:?} does not contain the evaluation point", b)));
        }
        let v = riesz_outside_ball(mu, x, &b.dilate(2.0))?;
        best = best.max(crate::geometry::norm(&v));
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximalFamilyConfig {
    /// Radii 2^-k for k in k_min..=k_max.
    pub k_min: i32,
    pub k_max: i32,
    /// Centres x + ρ·g/2 for g in {-1, 0, 1}^d when true, else only x.
    pub shifted_centers: bool,
}

impl Default for MaximalFamilyConfig {
    fn default() -> Self {
        MaximalFamilyConfig { k_min: -2, k_max: 12, shifted_centers: true }
    }
}

pub fn default_ball_family(x: &Point, d: usize, cfg: &MaximalFamilyConfig) -> Vec<Ball> {
    let mut out = Vec::new();
    for k in cfg.k_min..=cfg.k_max {
        let rho = 2f64.powi(-k);
        if !cfg.shifted_centers {
            out.push(Ball::new(*x, rho));
            continue;
        }
        let n = 3usize.pow(d as u32);
        for code in 0..n {
            let mut c = *x;
            let mut m = code;
            for coord in c.iter_mut().take(d) {
                let g = (m % 3) as f64 - 1.0;
                m /= 3;
                *coord += 0.5 * rho * g;
            }
            out.push(Ball::new(c, rho));
        }
    }
    out
}

/// R*(ν)(x) = -Σ w⃗_a · (a - x)/|a - x|^{1+s}.
pub fn riesz_adjoint_at(nu: &[(Point, Point)], x: &Point, s: f64) -> Result<f64> {
    check_point(x)?;
    let mut acc = 0.0;
    for (i, (a, wv)) in nu.iter().enumerate() {
        if dist2(a, x) == 0.0 {
            return Err(Error::Singularity { atom: i });
        }
        let k = kernel_term(a, x, 1.0, s);
        acc -= wv[0] * k[0] + wv[1] * k[1] + wv[2] * k[2];
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ORIGIN;
    use crate::measure::AmbientParams;

    fn amb() -> AmbientParams {
        AmbientParams::new(2, 1.5).unwrap()
    }

    #[test]
    fn single_atom_examples() {
        let mu = AtomicMeasure::new(amb(), vec![ORIGIN], vec![1.0]).unwrap();
        let v = riesz_at(&mu, &[1.0, 0.0, 0.0], &TruncationSpec::none()).unwrap();
        assert_eq!(v.value, [-1.0, 0.0, 0.0]);
        assert_eq!(v.error_bound, 0.0);
        let v = riesz_at(&mu, &[2.0, 0.0, 0.0], &TruncationSpec::none()).unwrap();
        assert!((v.value[0] + 2.0 / 2f64.powf(2.5)).abs() < 1e-15);
        assert!(matches!(riesz_at(&mu, &ORIGIN, &TruncationSpec::none()), Err(Error::Singularity { atom: 0 })));
        let v = riesz_at(&mu, &ORIGIN, &TruncationSpec::outside(0.5)).unwrap();
        assert_eq!(v.value, [0.0; 3]);
    }

    #[test]
    fn symmetric_pair_cancels() {
        let mu = AtomicMeasure::new(amb(), vec![[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]], vec![0.5, 0.5]).unwrap();
        let v = riesz_at(&mu, &ORIGIN, &TruncationSpec::none()).unwrap();
        assert_eq!(v.value, [0.0; 3]);
    }

    #[test]
    fn maximal_examples() {
        let mu = AtomicMeasure::new(amb(), vec![ORIGIN], vec![1.0]).unwrap();
        let x = [1.0, 0.0, 0.0];
        let small = riesz_maximal(&mu, &x, &[Ball::new(x, 0.1)]).unwrap();
        assert!((small - 1.0).abs() < 1e-15);
        assert_eq!(riesz_maximal(&mu, &x, &[Ball::new(x, 10.0)]).unwrap(), 0.0);
        assert!(riesz_maximal(&mu, &x, &[]).is_err());
        assert!(riesz_maximal(&mu, &x, &[Ball::new(ORIGIN, 0.5)]).is_err());
        let fam = default_ball_family(&x, 2, &MaximalFamilyConfig::default());
        let full = riesz_maximal(&mu, &x, &fam).unwrap();
        assert!(full >= small);
    }

    #[test]
    fn adjoint_examples() {
        let x = [1.0, 0.0, 0.0];
        assert_eq!(riesz_adjoint_at(&[(ORIGIN, [1.0, 0.0, 0.0])], &x, 1.5).unwrap(), 1.0);
        assert_eq!(riesz_adjoint_at(&[(ORIGIN, [0.0, 1.0, 0.0])], &x, 1.5).unwrap(), 0.0);
        assert!(riesz_adjoint_at(&[(x, [0.0, 1.0, 0.0])], &x, 1.5).is_err());
    }
}
