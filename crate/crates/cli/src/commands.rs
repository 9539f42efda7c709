use std::io::Write;

use anyhow::{bail, Context, Result};
use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rieszwolff::cantor::{
    build_cantor_tree, verify_construction, CantorParams, CantorTree, LevelStats, VerificationReport,
};
use rieszwolff::capacity::{
    capacity_lower_bound, compare_capacities, max_principle_check, natural_measure, CapacityComparison,
    CapacitySummary, CompareConfig, MaxPrincipleReport,
};
use rieszwolff::fixtures::LacunarySpec;
use rieszwolff::gauges::{wolff_energy, wolff_potentials, Gauge};
use rieszwolff::harness::{harness_report, HarnessContext, HarnessReport, PsiSpec};
use rieszwolff::io::{load_measure, load_tree, read_json, save_measure, MeasureFile};
use rieszwolff::measure::build_cantor_measure;
use rieszwolff::riesz::{riesz_field_direct, riesz_field_fast, TruncationSpec};
use rieszwolff::scales::{exceptional_set, superlevel_scale_set, weak_type_statistic, ExceptionalSet, ScaleSet};
use rieszwolff::{AmbientParams, AtomicMeasure, Ball, GridSpec, Point};
use serde::Serialize;

use crate::output::{csv_header, csv_point, num, parse_list, parse_targets, parse_window, sink, write_json};
use crate::{
    AssertionFailure, CantorArgs, CapacityArgs, Cli, Command, GenerateArgs, MeasureKind, Mode, RieszArgs, ScalesArgs,
    VerifyArgs, WolffArgs,
};

pub fn dispatch(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!(rieszwolff::Error::invalid("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Generate(a) => generate(a, cli.seed),
        Command::Riesz(a) => riesz(a),
        Command::Scales(a) => scales(a, cli.seed),
        Command::Wolff(a) => wolff(a),
        Command::Cantor(a) => cantor(a),
        Command::Verify(a) => verify(a),
        Command::Capacity(a) => capacity(a),
    }
}

fn load(path: &std::path::Path) -> Result<(AtomicMeasure, Option<Vec<usize>>)> {
    load_measure(path).with_context(|| format!("loading measure {}", path.display()))
}

fn generate(a: &GenerateArgs, seed: u64) -> Result<()> {
    AmbientParams::new(a.d, a.s)?;
    let (mu, marked) = match a.kind {
        MeasureKind::Cantor => {
            let jitter = a.jitter.then_some(seed);
            (build_cantor_measure(a.d, a.s, a.depth, a.ratio, jitter)?, None)
        }
        MeasureKind::Lacunary => {
            if a.d != 2 || a.s != 1.5 {
                bail!(rieszwolff::Error::invalid("the lacunary fixture is laid out for d = 2, s = 1.5"));
            }
            let f = LacunarySpec::for_levels(a.levels, a.depth)?.build()?;
            (f.measure, Some(f.e_atoms))
        }
    };
    info!("generated {} atoms", mu.len());
    save_measure(&a.out, &mu, marked.as_deref())?;
    Ok(())
}

fn riesz(a: &RieszArgs) -> Result<()> {
    let (mu, _) = load(&a.measure)?;
    let targets = parse_targets(&a.targets, &mu)?;
    let d = mu.d();
    let evals = match a.mode {
        Mode::Direct => riesz_field_direct(&mu, &targets, &TruncationSpec::none())?,
        Mode::Fast => riesz_field_fast(&mu, &targets, a.tol)?,
    };
    let mut w = sink(a.out.as_deref())?;
    writeln!(w, "{}", csv_header(d, &["x", "R"], &["error_bound"]))?;
    for (x, e) in targets.iter().zip(&evals) {
        let row: Vec<String> =
            csv_point(d, x).chain(csv_point(d, &e.value)).chain(std::iter::once(num(e.error_bound))).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SampledIntervals {
    atom: usize,
    position: Vec<f64>,
    set: ScaleSet,
}

#[derive(Serialize)]
struct ScalesReport {
    delta: f64,
    window: (f64, f64),
    atoms: usize,
    total_mass: f64,
    curve: Vec<(f64, f64)>,
    alpha_hat: Option<f64>,
    log_measure_min: f64,
    log_measure_max: f64,
    log_measure_mean: f64,
    q: u32,
    exceptional: ExceptionalSet,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    intervals: Vec<SampledIntervals>,
}

fn scales(a: &ScalesArgs, seed: u64) -> Result<()> {
    let (mu, _) = load(&a.measure)?;
    let window = parse_window(&a.window)?;
    let ts = parse_list(&a.ts)?;
    let rep = weak_type_statistic(&mu, a.delta, &ts, &window)?;
    let (lo, hi) = mu.bounding_box().context("the measure has no atoms")?;
    let center: Point = std::array::from_fn(|k| 0.5 * (lo[k] + hi[k]));
    let b0 = Ball::new(center, mu.diameter().max(f64::MIN_POSITIVE));
    let exceptional = exceptional_set(&mu, &b0, a.delta, a.q)?;
    let mut intervals = Vec::new();
    if a.dump_intervals {
        let mut idx: Vec<usize> = (0..mu.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(a.samples);
        idx.sort_unstable();
        for i in idx {
            let x = mu.position(i);
            intervals.push(SampledIntervals {
                atom: i,
                position: x[..mu.d()].to_vec(),
                set: superlevel_scale_set(&mu, x, a.delta, &window)?,
            });
        }
    }
    let ls = &rep.log_measures;
    let report = ScalesReport {
        delta: a.delta,
        window: (window.r_min, window.r_max),
        atoms: mu.len(),
        total_mass: rep.total_mass,
        curve: rep.curve.clone(),
        alpha_hat: rep.alpha_hat,
        log_measure_min: ls.iter().copied().fold(f64::INFINITY, f64::min),
        log_measure_max: ls.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        log_measure_mean: ls.iter().zip(mu.weights()).map(|(l, w)| l * w).sum::<f64>() / rep.total_mass,
        q: a.q,
        exceptional,
        intervals,
    };
    write_json(a.out.as_deref(), &report)
}

fn wolff(a: &WolffArgs) -> Result<()> {
    let (mu, _) = load(&a.measure)?;
    let g: Gauge = a.gauge.parse()?;
    let window = parse_window(&a.window)?;
    let targets = if a.targets == "atoms" { mu.positions().to_vec() } else { parse_targets(&a.targets, &mu)? };
    let values = wolff_potentials(&mu, &targets, &g, &window)?;
    let d = mu.d();
    let mut w = sink(a.out.as_deref())?;
    writeln!(w, "{}", csv_header(d, &["x"], &["W"]))?;
    for (x, v) in targets.iter().zip(&values) {
        let row: Vec<String> = csv_point(d, x).chain(std::iter::once(num(*v))).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    if a.energy {
        writeln!(w, "# energy={}", num(wolff_energy(&mu, &window)?))?;
    }
    w.flush()?;
    Ok(())
}

/// The tree file written by `cantor`: what `load_tree` reads, plus the μ′
/// weights and the verification report.
#[derive(Serialize)]
struct TreeOutput<'a> {
    measure: MeasureFile,
    tree: &'a CantorTree,
    rarefied_weights: Vec<f64>,
    verification: &'a VerificationReport,
}

fn cantor(a: &CantorArgs) -> Result<()> {
    let (mu, marked) = load(&a.measure)?;
    let mut params: CantorParams =
        read_json(&a.params).with_context(|| format!("reading parameters {}", a.params.display()))?;
    if let Some(n) = a.levels {
        params.levels = n;
    }
    let e_atoms = marked.unwrap_or_else(|| (0..mu.len()).collect());
    let tree = build_cantor_tree(&mu, &e_atoms, &params)?;
    let report = verify_construction(&tree, &mu);
    info!("construction: {} levels, retained fraction {}", tree.depth(), tree.retained_fraction);
    let weights = tree.rarefied_weights(&mu);
    let out = TreeOutput {
        measure: MeasureFile::from_measure(&mu, Some(&tree.e_atoms)),
        tree: &tree,
        rarefied_weights: tree.rarefied_atoms.iter().map(|&i| weights[i]).collect(),
        verification: &report,
    };
    write_json(Some(&a.out), &out)?;
    if !report.all_pass() {
        bail!(AssertionFailure(failed_checks(&report)));
    }
    Ok(())
}

fn failed_checks(r: &VerificationReport) -> String {
    let names: Vec<&str> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    format!("verification failed: {}", names.join(", "))
}

#[derive(Serialize)]
struct CellDiagnostics<'a> {
    level: usize,
    cell: usize,
    rho: f64,
    #[serde(flatten)]
    stats: &'a LevelStats,
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    passed: bool,
    verification: VerificationReport,
    cells: Vec<CellDiagnostics<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    harness: Option<HarnessReport>,
}

fn verify(a: &VerifyArgs) -> Result<()> {
    let (mu, tree) = load_tree(&a.tree).with_context(|| format!("loading tree {}", a.tree.display()))?;
    let verification = verify_construction(&tree, &mu);
    let cells = tree
        .levels
        .iter()
        .enumerate()
        .flat_map(|(k, level)| {
            level.iter().enumerate().filter_map(move |(j, c)| {
                c.stats.as_ref().map(|stats| CellDiagnostics { level: k, cell: j, rho: c.rho(), stats })
            })
        })
        .collect();
    let harness = if a.harness {
        let ctx = HarnessContext::new(&tree, &mu)?;
        let spec = PsiSpec::new(mu.d(), PsiSpec::DEFAULT_K_MAX)?;
        Some(harness_report(&ctx, &spec, &parse_list(&a.dilations)?)?)
    } else {
        None
    };
    let passed = verification.all_pass();
    let report = VerifyReport { passed, verification, cells, harness };
    write_json(a.report.as_deref(), &report)?;
    if !passed {
        bail!(AssertionFailure(failed_checks(&report.verification)));
    }
    Ok(())
}

#[derive(Serialize)]
struct CapacityReport {
    gauge: String,
    window: (f64, f64),
    atoms: usize,
    estimate: CapacitySummary,
    maximum_principle: MaxPrincipleReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<CapacityComparison>,
}

fn capacity(a: &CapacityArgs) -> Result<()> {
    let (e, _) = load(&a.set)?;
    let g: Gauge = a.gauge.parse()?;
    let window = parse_window(&a.window)?;
    let grid: GridSpec = a.probes.parse()?;
    let nu = natural_measure(&e)?;
    let est = capacity_lower_bound(e.positions(), &g, &window, &nu)?;
    let (lo, hi) = e.bounding_box().context("the set has no atoms")?;
    let probes = grid.points(e.d(), &lo, &hi)?;
    let maximum_principle = max_principle_check(&nu, &g, &window, &probes, 1e-6)?;
    let comparison = if a.compare {
        Some(compare_capacities(&e, &g, &window, &CompareConfig { grid, trunc_radii: Vec::new() })?)
    } else {
        None
    };
    let report = CapacityReport {
        gauge: g.to_string(),
        window: (window.r_min, window.r_max),
        atoms: e.len(),
        estimate: est.summary(),
        maximum_principle,
        comparison,
    };
    write_json(a.out.as_deref(), &report)
}
