//! JSON files for measures and Cantor trees. Floats are written as shortest
//! round-tripping decimals, so a measure survives a file round trip bit for
//! bit; coordinates and weights may also be given as decimal strings.

use std::fs;
use std::path::Path;

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize};

use crate::cantor::CantorTree;
use crate::error::{Error, Result};
use crate::geometry::point_from_slice;
use crate::measure::{AmbientParams, AtomicMeasure};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Num(pub f64);

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Num, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(f64),
            S(String),
        }
        match Raw::deserialize(de)? {
            Raw::N(v) => Ok(Num(v)),
            Raw::S(s) => s.trim().parse().map(Num).map_err(|_| de::Error::custom(format!("not a number: {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureFile {
    pub d: usize,
    pub s: f64,
    /// Each atom is `[[x_1, ..., x_d], w]`.
    pub atoms: Vec<(Vec<Num>, Num)>,
    /// Optional marked atom subset (the set E of a fixture).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_atoms: Option<Vec<usize>>,
}

impl MeasureFile {
    pub fn from_measure(mu: &AtomicMeasure, e_atoms: Option<&[usize]>) -> MeasureFile {
        let d = mu.d();
        MeasureFile {
            d,
            s: mu.s(),
            atoms: mu
                .positions()
                .iter()
                .zip(mu.weights())
                .map(|(p, &w)| (p[..d].iter().map(|&c| Num(c)).collect(), Num(w)))
                .collect(),
            e_atoms: e_atoms.map(<[usize]>::to_vec),
        }
    }

    pub fn to_measure(&self) -> Result<AtomicMeasure> {
        let ambient = AmbientParams::new(self.d, self.s)?;
        let mut pos = Vec::with_capacity(self.atoms.len());
        let mut w = Vec::with_capacity(self.atoms.len());
        for (i, (c, m)) in self.atoms.iter().enumerate() {
            if c.len() != self.d {
                return Err(Error::invalid(format!("atom {i} has {} coordinates, expected {}", c.len(), self.d)));
            }
            let coords: Vec<f64> = c.iter().map(|n| n.0).collect();
            pos.push(point_from_slice(self.d, &coords));
            w.push(m.0);
        }
        if let Some(e) = &self.e_atoms {
            if let Some(&bad) = e.iter().find(|&&a| a >= self.atoms.len()) {
                return Err(Error::invalid(format!("marked atom {bad} is out of range")));
            }
        }
        AtomicMeasure::new(ambient, pos, w)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_measure(path: &Path, mu: &AtomicMeasure, e_atoms: Option<&[usize]>) -> Result<()> {
    write_json(path, &MeasureFile::from_measure(mu, e_atoms))
}

/// The measure and its marked atoms, if any.
pub fn load_measure(path: &Path) -> Result<(AtomicMeasure, Option<Vec<usize>>)> {
    let f: MeasureFile = read_json(path)?;
    Ok((f.to_measure()?, f.e_atoms))
}

/// A Cantor tree together with the measure it was built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeFile {
    pub measure: MeasureFile,
    pub tree: CantorTree,
}

pub fn save_tree(path: &Path, mu: &AtomicMeasure, tree: &CantorTree) -> Result<()> {
    write_json(path, &TreeFile { measure: MeasureFile::from_measure(mu, Some(&tree.e_atoms)), tree: tree.clone() })
}

pub fn load_tree(path: &Path) -> Result<(AtomicMeasure, CantorTree)> {
    let f: TreeFile = read_json(path)?;
    Ok((f.measure.to_measure()?, f.tree))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strings_and_numbers() {
        let f: MeasureFile =
            serde_json::from_str(r#"{"d":2,"s":1.5,"atoms":[[[0.1,"0.2"],"0.5"],[[1,2],0.25]]}"#).unwrap();
        let mu = f.to_measure().unwrap();
        assert_eq!(mu.position(0), &[0.1, 0.2, 0.0]);
        assert_eq!(mu.weight(0), 0.5);
        assert_eq!(mu.weight(1), 0.25);
    }

    #[test]
    fn awkward_floats_round_trip() {
        let amb = AmbientParams::new(3, 2.5).unwrap();
        let pos = vec![[0.1 + 0.2, 1.0 / 3.0, -7e-300], [std::f64::consts::PI, 1e300, 5e-324]];
        let mu = AtomicMeasure::new(amb, pos, vec![1.0 / 7.0, 2f64.powi(-1000)]).unwrap();
        let text = serde_json::to_string(&MeasureFile::from_measure(&mu, None)).unwrap();
        let back: MeasureFile = serde_json::from_str(&text).unwrap();
        let nu = back.to_measure().unwrap();
        assert_eq!(mu.positions(), nu.positions());
        assert_eq!(mu.weights(), nu.weights());
    }
}
