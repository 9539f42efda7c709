use serde::{Deserialize, Serialize};

/// Points live in R^3; planar data keep the third coordinate at zero so the
/// same distance routine serves d = 2 and d = 3 with identical rounding.
pub type Point = [f64; 3];

pub const ORIGIN: Point = [0.0; 3];

#[inline]
pub fn dist2(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
pub fn dist(a: &Point, b: &Point) -> f64 {
    dist2(a, b).sqrt()
}

#[inline]
pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn norm(v: &Point) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub fn point_from_slice(d: usize, coords: &[f64]) -> Point {
    let mut p = ORIGIN;
    p[..d].copy_from_slice(&coords[..d]);
    p
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Point, radius: f64) -> Self {
        Ball { center, radius }
    }

    /// Open-ball membership.
    pub fn contains(&self, x: &Point) -> bool {
        dist(&self.center, x) < self.radius
    }

    pub fn dilate(&self, factor: f64) -> Ball {
        Ball::new(self.center, self.radius * factor)
    }

    /// `self ⊆ other` for closed balls, decided from centers and radii.
    pub fn inside(&self, other: &Ball) -> bool {
        dist(&self.center, &other.center) + self.radius <= other.radius
    }
}

/// Lebesgue measure of the unit ball in R^d.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 / 3.0 * std::f64::consts::PI,
        _ => panic!("unsupported dimension {d}"),
    }
}

/// A regular grid over the bounding box of a point set, enlarged on every
/// side by `margin` times the largest box extent: `grid:16x16:margin=0.1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub counts: Vec<usize>,
    pub margin: f64,
}

impl GridSpec {
    pub fn new(counts: Vec<usize>, margin: f64) -> crate::Result<GridSpec> {
        if counts.is_empty() || counts.len() > 3 || counts.contains(&0) {
            return Err(crate::Error::invalid(format!("grid needs 1 to 3 positive counts, got {counts:?}")));
        }
        if !(margin >= 0.0 && margin.is_finite()) {
            return Err(crate::Error::invalid(format!("grid margin must be finite and >= 0, got {margin}")));
        }
        Ok(GridSpec { counts, margin })
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid nodes (endpoints included) in row-major order, last axis fastest.
    /// A degenerate box gets unit extent.
    pub fn points(&self, d: usize, lo: &Point, hi: &Point) -> crate::Result<Vec<Point>> {
        if self.counts.len() != d {
            return Err(crate::Error::invalid(format!("grid has {} axes but d = {d}", self.counts.len())));
        }
        let extent = (0..d).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);
        let pad = self.margin * if extent > 0.0 { extent } else { 1.0 };
        let axes: Vec<Vec<f64>> = (0..d)
            .map(|k| {
                let (a, b) = (lo[k] - pad, hi[k] + pad);
                let n = self.counts[k];
                if n == 1 {
                    vec![0.5 * (a + b)]
                } else {
                    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
                }
            })
            .collect();
        let mut out = Vec::with_capacity(self.len());
        let mut idx = vec![0usize; d];
        loop {
            let mut p = ORIGIN;
            for k in 0..d {
                p[k] = axes[k][idx[k]];
            }
            out.push(p);
            let mut k = d;
            loop {
                if k == 0 {
                    return Ok(out);
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < self.counts[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
}

impl std::str::FromStr for GridSpec {
    type Err = crate::Error;

    fn from_str(spec: &str) -> crate::Result<GridSpec> {
        let bad = || crate::Error::invalid(format!("bad grid spec {spec:?}, expected grid:16x16:margin=0.1"));
        let mut parts = spec.split(':');
        if parts.next() != Some("grid") {
            return Err(bad());
        }
        let counts = parts
            .next()
            .ok_or_else(bad)?
            .split('x')
            .map(|c| c.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<crate::Result<Vec<_>>>()?;
        let mut margin = 0.0;
        for kv in parts {
            match kv.split_once('=') {
                Some(("margin", v)) => margin = v.trim().parse().map_err(|_| bad())?,
                _ => return Err(bad()),
            }
        }
        GridSpec::new(counts, margin)
    }
}
