//! One function per experiment. Each returns a table for the CSV file and a
//! JSON summary; none of them touch the filesystem.

use mixlab_core::cohomology::DEFAULT_TOLERANCE;
use mixlab_core::dd::circle_diff;
use mixlab_core::io::ClassificationReport;
use mixlab_core::{
    birkhoff_sublevel_measure, catalog, certify_roof, classify_roof, convergent_times, correlate_cubes,
    decompose_components, ergodic_sum_l2, fiber_mixing_profile, hitting_complement_measure, poincare_return,
    poincare_return_numeric, solve_roof, sublevel_power_law, trivial_conjugacy_check, uniform_bound_profile,
    visit_fraction, AlgebraVector, Arc, Cube, RoofFile, RoofSpec, TorusPoint,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Experiment, Params, Resolved};

/// Formats a real with 17 significant digits, independent of locale.
pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct Table {
    pub header: &'static [&'static str],
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &'static [&'static str]) -> Self {
        Self { header, rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

pub struct Outcome {
    pub table: Table,
    pub results: Value,
    /// Short human-readable result for standard output.
    pub headline: String,
}

pub fn run(resolved: &Resolved) -> anyhow::Result<Outcome> {
    let p = &resolved.config.params;
    let roof = resolved.roof.as_ref();
    let roof = || roof.expect("resolution loads the roof");
    match resolved.config.experiment {
        Experiment::Classify => classify(roof()),
        Experiment::Solve => solve(roof()),
        Experiment::Stretch => stretch(roof(), p),
        Experiment::Sublevel => sublevel(p),
        Experiment::Visits => visits(roof(), p),
        Experiment::Correlate => correlate(roof(), p),
        Experiment::FiberProfile => fiber_profile(roof(), p),
        Experiment::Hitting => hitting(roof(), p),
        Experiment::Weyl => weyl(roof(), p),
        Experiment::L2 => l2(roof(), p),
        Experiment::ReturnCheck => return_check(p),
        Experiment::Conjugacy => conjugacy(roof(), p),
    }
}

fn cube(p: &Params) -> anyhow::Result<Cube> {
    let [x1, x2, y1, y2, h] = p.cube.expect("default");
    Ok(Cube::new((x1, x2), (y1, y2), h)?)
}

fn classify(spec: &RoofSpec) -> anyhow::Result<Outcome> {
    let c = classify_roof(&spec.map, &spec.poly, DEFAULT_TOLERANCE);
    let report = ClassificationReport::from(&c);
    let mut table = Table::new(&["m", "n", "re", "im", "abs"]);
    for e in &report.components {
        table.push(vec![e.m.to_string(), e.n.to_string(), real(e.re), real(e.im), real(e.abs)]);
    }
    Ok(Outcome {
        table,
        headline: format!("{}\n{}", c.verdict, serde_json::to_string_pretty(&report)?),
        results: serde_json::to_value(&report)?,
    })
}

fn solve(spec: &RoofSpec) -> anyhow::Result<Outcome> {
    let sol = solve_roof(&spec.map, &spec.poly, DEFAULT_TOLERANCE)?;
    let mut table = Table::new(&["m", "k", "re", "im"]);
    for (m, k, c) in sol.transfer.modes() {
        table.push(vec![m.to_string(), k.to_string(), real(c.re), real(c.im)]);
    }
    Ok(Outcome {
        table,
        headline: format!("mean {} + {}i, {} transfer modes", sol.mean.re, sol.mean.im, sol.transfer.modes().count()),
        results: json!({
            "mean": {"re": sol.mean.re, "im": sol.mean.im},
            "transfer": RoofFile::from_parts(&spec.map, &sol.transfer),
        }),
    })
}

fn stretch(spec: &RoofSpec, p: &Params) -> anyhow::Result<Outcome> {
    let (c, grid) = (p.c.expect("default"), p.grid.expect("default"));
    let mut table = Table::new(&["n", "measure", "error_bound"]);
    let mut curve = Vec::new();
    for &n in p.n.as_ref().expect("default") {
        let est = birkhoff_sublevel_measure(&spec.map, &spec.poly, n, c, grid)?;
        table.push(vec![n.to_string(), real(est.measure), real(est.error_bound)]);
        curve.push(json!({"n": n, "measure": est.measure, "error_bound": est.error_bound}));
    }
    Ok(Outcome {
        table,
        headline: format!("sublevel measures at {} times", curve.len()),
        results: json!({ "curve": curve }),
    })
}

fn sublevel(p: &Params) -> anyhow::Result<Outcome> {
    let deltas = p.deltas.as_ref().expect("default");
    let (degree, grid, seed) = (p.degree.expect("default"), p.grid.expect("default"), p.seed.expect("default"));
    let mut table = Table::new(&["poly", "delta", "measure"]);
    let mut slopes = Vec::new();
    for i in 0..p.polys.expect("default") {
        let poly = catalog::random_unit_poly(degree, seed, i)?;
        let fit = sublevel_power_law(&poly, deltas, grid)?;
        for (d, m) in fit.deltas.iter().zip(&fit.measures) {
            table.push(vec![i.to_string(), real(*d), real(*m)]);
        }
        slopes.push(fit.slope);
    }
    let min_slope = slopes.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Outcome {
        table,
        headline: format!("smallest fitted exponent {min_slope}"),
        results: json!({ "slopes": slopes, "min_slope": min_slope }),
    })
}

fn visits(spec: &RoofSpec, p: &Params) -> anyhow::Result<Outcome> {
    let start = TorusPoint::new(p.x.expect("default"), p.y.expect("default"));
    let c = p.c.expect("default");
    let mut table = Table::new(&["n", "fraction"]);
    let mut curve = Vec::new();
    for &n in p.n.as_ref().expect("default") {
        let fraction = visit_fraction(&spec.map, &spec.poly, start, c, n)?;
        table.push(vec![n.to_string(), real(fraction)]);
        curve.push(json!({"n": n, "fraction": fraction}));
    }
    Ok(Outcome {
        table,
        headline: format!("visit fractions at {} times", curve.len()),
        results: json!({ "curve": curve }),
    })
}

fn correlate(spec: &RoofSpec, p: &Params) -> anyhow::Result<Outcome> {
    let roof = certify_roof(&spec.poly)?;
    let q = cube(p)?;
    let (samples, seed) = (p.samples.expect("default"), p.seed.expect("default"));
    let mut table = Table::new(&["t", "value", "stderr", "samples", "seed"]);
    let mut curve = Vec::new();
    for &t in p.t.as_ref().expect("default") {
        let est = correlate_cubes(&roof, &spec.map, &q, &q, t, samples, seed)?;
        table.push(vec![real(t), real(est.value), real(est.std_error), samples.to_string(), seed.to_string()]);
        curve.push(json!({"t": t, "value": est.value, "stderr": est.std_error}));
    }
    let mu = q.measure(&roof);
    Ok(Outcome {
        table,
        headline: format!("correlations at {} times, mu(Q) = {mu}", curve.len()),
        results: json!({ "mu_q": mu, "curve": curve }),
    })
}

fn fiber_profile(spec: &RoofSpec, p: &Params) -> anyhow::Result<Outcome> {
    let roof = certify_roof(&spec.poly)?;
    let q = cube(p)?;
    let [a, b] = p.arc.expect("default");
    let arc = Arc::new(a, b);
    let (x, grid) = (p.x.expect("default"), p.grid.expect("default"));
    let limit = arc.length() * q.measure(&roof);
    let mut table = Table::new(&["t", "profile", "limit"]);
    let mut curve = Vec::new();
    for &t in p.t.as_ref().expect("default") {
        let v = fiber_mixing_profile(&roof, &spec.map, x, arc, &q, t, grid)?;
        table.push(vec![real(t), real(v), real(limit)]);
        curve.push(json!({"t": t, "profile": v}));
    }
    Ok(Outcome {
        table,
        headline: format!("fiber profile at {} times, limit {limit}", curve.len()),
        results: json!({ "limit": limit, "curve": curve }),
    })
}

fn hitting(spec: &RoofSpec, p: &Params) -> anyhow::Result<Outcome> {
    let roof = certify_roof(&spec.poly)?;
    let (c, grid) = (p.c.expect("default"), p.grid.expect("default"));
    let mut table = Table::new(&["t", "measure"]);
    let mut curve = Vec::new();
    for &t in p.t.as_ref().expect("default") {
        let v = hitting_complement_measure(&roof, &spec.map, t, c, grid)?;
        table.push(vec![real(t), real(v)]);
        curve.push(json!({"t": t, "measure": v}));
    }
    Ok(Outcome {
        table,
        headline: format!("hitting complement at {} times", curve.len()),
        results: json!({ "curve": curve }),
    })
}

fn weyl(spec: &RoofSpec, p: &Params) -> anyhow::Result<Outcome> {
    let (zero_average, _) = spec.poly.project();
    let cf = convergent_times(spec.map.alpha, p.terms.expect("default"))?;
    let mut times = cf.denominators.clone();
    times.dedup();
    let ratios = uniform_bound_profile(&spec.map, &zero_average, &times, p.grid.expect("default"))?;
    let mut table = Table::new(&["n", "ratio"]);
    for (n, r) in times.iter().zip(&ratios) {
        table.push(vec![n.to_string(), real(*r)]);
    }
    let largest = ratios.iter().copied().fold(0.0, f64::max);
    Ok(Outcome {
        table,
        headline: format!("largest max|phi_N|/sqrt(N) over {} convergent times: {largest}", times.len()),
        results: json!({
            "partial_quotients": cf.partial_quotients,
            "denominators": times,
            "ratios": ratios,
        }),
    })
}

fn l2(spec: &RoofSpec, p: &Params) -> anyhow::Result<Outcome> {
    let parts = decompose_components(&spec.poly);
    let mut table = Table::new(&["time", "m", "n", "value"]);
    let mut totals = Vec::new();
    for &n in p.n.as_ref().expect("default") {
        let mut total = 0.0;
        for s in &parts.components {
            let v = ergodic_sum_l2(&spec.map, s, n)?;
            table.push(vec![n.to_string(), s.label().m.to_string(), s.label().n.to_string(), real(v)]);
            total += v;
        }
        totals.push(json!({"time": n, "total": total}));
    }
    Ok(Outcome {
        table,
        headline: format!("{} components", parts.components.len()),
        results: json!({ "totals": totals }),
    })
}

fn return_check(p: &Params) -> anyhow::Result<Outcome> {
    let seed = p.seed.expect("default");
    let rows: Vec<anyhow::Result<[f64; 7]>> = (0..p.points.expect("default"))
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let wy = rng.random_range(0.1..2.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
            let w = AlgebraVector::new(rng.random_range(-2.0..2.0), wy, rng.random_range(-2.0..2.0));
            let (x, z): (f64, f64) = (rng.random(), rng.random());
            let closed = poincare_return(w, x, z)?;
            let numeric = poincare_return_numeric(w, x, z)?;
            let map_error = circle_diff(closed.0, numeric.x)
                .abs()
                .max(circle_diff(closed.1, numeric.z).abs());
            Ok([w.wx, w.wy, w.wz, x, z, map_error, (numeric.time - 1.0 / wy).abs()])
        })
        .collect();
    let mut table = Table::new(&["wx", "wy", "wz", "x", "z", "map_error", "time_error"]);
    let (mut worst_map, mut worst_time) = (0.0f64, 0.0f64);
    for row in rows {
        let row = row?;
        worst_map = worst_map.max(row[5]);
        worst_time = worst_time.max(row[6]);
        table.push(row.iter().map(|&v| real(v)).collect());
    }
    Ok(Outcome {
        table,
        headline: format!("max map error {worst_map:e}, max time error {worst_time:e}"),
        results: json!({ "max_map_error": worst_map, "max_time_error": worst_time }),
    })
}

fn conjugacy(spec: &RoofSpec, p: &Params) -> anyhow::Result<Outcome> {
    let roof = certify_roof(&spec.poly)?;
    let sol = solve_roof(&spec.map, &spec.poly, DEFAULT_TOLERANCE)?;
    let (points, seed) = (p.points.expect("default"), p.seed.expect("default"));
    let mut table = Table::new(&["t", "deviation"]);
    let mut worst = 0.0f64;
    for &t in p.t.as_ref().expect("default") {
        let dev = trivial_conjugacy_check(&roof, &spec.map, &sol.transfer, sol.mean.re, t, points, seed)?;
        table.push(vec![real(t), real(dev)]);
        worst = worst.max(dev);
    }
    Ok(Outcome {
        table,
        headline: format!("max conjugacy deviation {worst:e}"),
        results: json!({ "constant": sol.mean.re, "max_deviation": worst }),
    })
}
