//! Shipped test measures: lacunary core–satellite measures on which the
//! Cantor construction provably finds low-density balls, plus the parameter
//! sets used with them.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::cantor::CantorParams;
use crate::error::{Error, Result};
use crate::geometry::{Point, ORIGIN};
use crate::measure::{build_cantor_measure, AmbientParams, AtomicMeasure};

/// One generation of the hierarchy: a node carries `core_mass` at its centre
/// and `count` child nodes at distance `distance`, at angles 2πb/count in
/// the first coordinate plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tier {
    pub core_mass: f64,
    pub count: usize,
    pub distance: f64,
}

/// Leaves are small equal-weight Cantor clusters (a single atom at depth 0)
/// fitted in a cube of the given diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafSpec {
    pub depth: u32,
    pub diameter: f64,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LacunarySpec {
    pub d: usize,
    pub s: f64,
    pub tiers: Vec<Tier>,
    pub leaf: LeafSpec,
}

#[derive(Clone, Debug)]
pub struct LacunaryMeasure {
    pub measure: AtomicMeasure,
    /// The leaf atoms, which form the set E.
    pub e_atoms: Vec<usize>,
}

const ROOT: Tier = Tier { core_mass: 0.2, count: 4, distance: 0.9 };
const MID: Tier = Tier { core_mass: 1e-5, count: 4, distance: 1e-4 };
const DEEP: Tier = Tier { core_mass: 1e-11, count: 4, distance: 1.2e-8 };

impl LacunarySpec {
    /// The fixture for an N-level construction (N = 1, 2 or 3) with leaf
    /// clusters of the given Cantor depth where the layout allows it.
    pub fn for_levels(levels: usize, leaf_depth: u32) -> Result<LacunarySpec> {
        let (tiers, leaf) = match levels {
            1 => (vec![ROOT], LeafSpec { depth: leaf_depth, diameter: 1e-3, mass: 1e-5 }),
            2 => (vec![ROOT, MID], LeafSpec { depth: leaf_depth, diameter: 1e-6, mass: 1e-11 }),
            3 => (vec![ROOT, MID, DEEP], LeafSpec { depth: 0, diameter: 0.0, mass: 1e-17 }),
            _ => return Err(Error::invalid(format!("no lacunary fixture for N = {levels}"))),
        };
        Ok(LacunarySpec { d: 2, s: 1.5, tiers, leaf })
    }

    /// The 65536-leaf-atom fixture for the two-level construction.
    pub fn standard() -> LacunarySpec {
        LacunarySpec::for_levels(2, 6).expect("valid fixture")
    }

    pub fn build(&self) -> Result<LacunaryMeasure> {
        let ambient = AmbientParams::new(self.d, self.s)?;
        let cluster = build_cantor_measure(self.d, self.s, self.leaf.depth, None, None)?;
        let scale = self.leaf.diameter / (self.d as f64).sqrt();
        let cw = self.leaf.mass / cluster.len() as f64;
        let mut pos = Vec::new();
        let mut w = Vec::new();
        let mut e = Vec::new();
        self.grow(0, ORIGIN, &cluster, scale, cw, &mut pos, &mut w, &mut e);
        Ok(LacunaryMeasure { measure: AtomicMeasure::new(ambient, pos, w)?, e_atoms: e })
    }

    #[allow(clippy::too_many_arguments)]
    fn grow(
        &self,
        tier: usize,
        c: Point,
        cluster: &AtomicMeasure,
        scale: f64,
        cw: f64,
        pos: &mut Vec<Point>,
        w: &mut Vec<f64>,
        e: &mut Vec<usize>,
    ) {
        if tier == self.tiers.len() {
            for p in cluster.positions() {
                let mut q = c;
                for k in 0..self.d {
                    q[k] += (p[k] - 0.5) * scale;
                }
                e.push(pos.len());
                pos.push(q);
                w.push(cw);
            }
            return;
        }
        let t = &self.tiers[tier];
        if t.core_mass > 0.0 {
            pos.push(c);
            w.push(t.core_mass);
        }
        for b in 0..t.count {
            let a = 2.0 * PI * b as f64 / t.count as f64;
            let child = [c[0] + t.distance * a.cos(), c[1] + t.distance * a.sin(), c[2]];
            self.grow(tier + 1, child, cluster, scale, cw, pos, w, e);
        }
    }
}

/// ε = 0.01, M = 8, δ = 10^-3, Δ = 0.25, q = 12.
pub fn fixture_params(levels: usize) -> CantorParams {
    CantorParams::new(levels, 0.01, 8.0, 1e-3, 0.25, 12)
}
