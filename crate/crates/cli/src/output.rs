//! CSV and JSON writers and the small text formats accepted on the command line.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use rieszwolff::geometry::point_from_slice;
use rieszwolff::scales::ScaleWindow;
use rieszwolff::{AtomicMeasure, GridSpec, Point};
use serde::Serialize;

/// Shortest decimal that parses back to the same f64.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn csv_header(d: usize, prefixes: &[&str], extra: &[&str]) -> String {
    let axes = ["1", "2", "3"];
    let mut cols: Vec<String> = Vec::new();
    for p in prefixes {
        cols.extend(axes[..d].iter().map(|a| format!("{p}{a}")));
    }
    cols.extend(extra.iter().map(|e| e.to_string()));
    cols.join(",")
}

pub fn csv_point(d: usize, p: &Point) -> impl Iterator<Item = String> + '_ {
    p[..d].iter().map(|&v| num(v))
}

/// `rmin,rmax`, where rmax may be `inf`.
pub fn parse_window(spec: &str) -> Result<ScaleWindow> {
    let (a, b) = spec.split_once(',').with_context(|| format!("window must be rmin,rmax, got {spec:?}"))?;
    let a: f64 = a.trim().parse().with_context(|| format!("bad rmin in {spec:?}"))?;
    let b: f64 = b.trim().parse().with_context(|| format!("bad rmax in {spec:?}"))?;
    Ok(ScaleWindow::new(a, b)?)
}

pub fn parse_list(spec: &str) -> Result<Vec<f64>> {
    spec.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad number {t:?}")))
        .collect()
}

/// A grid spec over the bounding box of μ, or a CSV file with one point per
/// line (a non-numeric first line is taken as a header).
pub fn parse_targets(spec: &str, mu: &AtomicMeasure) -> Result<Vec<Point>> {
    let d = mu.d();
    if spec.starts_with("grid:") {
        let grid: GridSpec = spec.parse()?;
        let Some((lo, hi)) = mu.bounding_box() else { bail!("the measure has no atoms to place a grid around") };
        return Ok(grid.points(d, &lo, &hi)?);
    }
    let text = fs::read_to_string(spec).with_context(|| format!("reading targets {spec:?}"))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(v) if v.len() == d => out.push(point_from_slice(d, &v)),
            Ok(v) => bail!("line {}: expected {d} coordinates, got {}", i + 1, v.len()),
            Err(_) if out.is_empty() && i == 0 => continue,
            Err(_) => bail!("line {}: not a list of numbers: {line:?}", i + 1),
        }
    }
    if out.is_empty() {
        bail!("no target points in {spec:?}");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_and_lists() {
        let w = parse_window("1e-3, inf").unwrap();
        assert_eq!((w.r_min, w.r_max), (1e-3, f64::INFINITY));
        assert!(parse_window("1e-3").is_err());
        assert!(parse_window("2,1").is_err());
        assert_eq!(parse_list("1, 2.5,,3").unwrap(), vec![1.0, 2.5, 3.0]);
        assert!(parse_list("1,x").is_err());
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1 + 0.2, 1e300, 5e-324, -1.0 / 3.0, 0.0] {
            assert_eq!(num(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn headers() {
        assert_eq!(csv_header(3, &["x", "R"], &["error_bound"]), "x1,x2,x3,R1,R2,R3,error_bound");
    }
}
