use std::fs;
use std::path::{Path, PathBuf};

use lvseasons_core::classify::{classify_permanence, Classification};
use lvseasons_core::flow::{seasonal_time_series, write_time_series_csv};
use lvseasons_core::orbit::{attractor_detect, iterate_orbit, OrbitRecord};
use lvseasons_core::params::presets;
use lvseasons_core::poincare::{
    axial_fixed_point, interior_fixed_points, planar_fixed_points, FixedPointRecord, PoincareError,
};
use lvseasons_core::{IntegratorConfig, SeasonalParams, State};
use serde::Serialize;

use crate::{numeric, svg, CliError, Format, RunContext};

fn out_dir(ctx: &RunContext, fallback: &str) -> Result<PathBuf, CliError> {
    let dir = ctx.out_dir.clone().unwrap_or_else(|| PathBuf::from(fallback));
    fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("report types serialize");
    out.push(b'\n');
    out
}

fn wants(ctx: &RunContext, format: Format) -> bool {
    match ctx.format {
        None => matches!(format, Format::Csv | Format::Svg),
        Some(f) => f == format,
    }
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

pub fn classify(params: &SeasonalParams, ctx: &RunContext) -> Result<(), CliError> {
    let c = classify_permanence(params, &ctx.cfg).map_err(numeric)?;
    if ctx.out_dir.is_some() {
        let dir = out_dir(ctx, ".")?;
        write_file(&dir, "verdict.json", &pretty(&c))?;
    }
    match ctx.format {
        Some(Format::Json) => print!("{}", String::from_utf8(pretty(&c)).unwrap()),
        None | Some(Format::Text) => println!("{c}"),
        Some(f) => return Err(CliError::BadArguments(format!("classify cannot print {f:?}"))),
    }
    Ok(())
}

fn simulate_files(
    params: &SeasonalParams,
    x0: &State,
    t: f64,
    dt: f64,
    ctx: &RunContext,
    dir: &Path,
    title: &str,
) -> Result<Vec<PathBuf>, CliError> {
    let rows = seasonal_time_series(params, x0, t, dt, &ctx.cfg).map_err(numeric)?;
    let mut written = Vec::new();
    if wants(ctx, Format::Csv) {
        let mut buf = Vec::new();
        write_time_series_csv(&mut buf, &rows)?;
        written.push(write_file(dir, "timeseries.csv", &buf)?);
    }
    if wants(ctx, Format::Json) {
        written.push(write_file(dir, "timeseries.json", &pretty(&rows))?);
    }
    if wants(ctx, Format::Svg) {
        written.push(write_file(dir, "timeseries.svg", svg::time_series(&rows, title).as_bytes())?);
    }
    Ok(written)
}

pub fn simulate(params: &SeasonalParams, x0: &State, t: f64, dt: f64, ctx: &RunContext) -> Result<(), CliError> {
    if ctx.format == Some(Format::Text) {
        return Err(CliError::BadArguments("simulate writes csv, json or svg".into()));
    }
    let dir = out_dir(ctx, ".")?;
    let title = format!("solution from x0 = ({}, {}, {})", x0[0], x0[1], x0[2]);
    print_paths(&simulate_files(params, x0, t, dt, ctx, &dir, &title)?);
    Ok(())
}

/// Every fixed point of the period map that exists for these parameters.
/// Searches needing `r_i > 0` are skipped for species that cannot grow.
#[derive(Debug, Serialize)]
pub struct FixedPointReport {
    pub axial: Vec<FixedPointRecord>,
    pub planar: Vec<FixedPointRecord>,
    pub interior: Vec<FixedPointRecord>,
    pub seed: u64,
}

impl FixedPointReport {
    pub fn states(&self) -> Vec<State> {
        self.axial.iter().chain(&self.planar).chain(&self.interior).map(|r| r.theta).collect()
    }
}

fn skip_no_growth(r: Result<Vec<FixedPointRecord>, PoincareError>) -> Result<Vec<FixedPointRecord>, CliError> {
    match r {
        Err(PoincareError::NonPositiveGrowth(_)) => Ok(Vec::new()),
        other => other.map_err(numeric),
    }
}

pub fn find_fixed_points(params: &SeasonalParams, cfg: &IntegratorConfig, seed: u64) -> Result<FixedPointReport, CliError> {
    let mut axial = Vec::new();
    for i in 0..3 {
        if let Some(rec) = axial_fixed_point(params, i, cfg).map_err(numeric)? {
            axial.push(rec);
        }
    }
    let mut planar = Vec::new();
    for k in 0..3 {
        planar.extend(skip_no_growth(planar_fixed_points(params, k, cfg))?);
    }
    let interior = skip_no_growth(interior_fixed_points(params, cfg, seed))?;
    Ok(FixedPointReport { axial, planar, interior, seed })
}

pub fn fixed_points(params: &SeasonalParams, ctx: &RunContext) -> Result<(), CliError> {
    let report = find_fixed_points(params, &ctx.cfg, ctx.seed)?;
    let body = pretty(&report);
    if ctx.out_dir.is_some() {
        write_file(&out_dir(ctx, ".")?, "fixed_points.json", &body)?;
    }
    print!("{}", String::from_utf8(body).unwrap());
    Ok(())
}

fn orbit_files(record: &OrbitRecord, ctx: &RunContext, dir: &Path, title: &str) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    if wants(ctx, Format::Csv) {
        let mut buf = Vec::new();
        record.write_csv(&mut buf)?;
        written.push(write_file(dir, "orbit.csv", &buf)?);
    }
    if wants(ctx, Format::Json) {
        written.push(write_file(dir, "orbit.json", &pretty(record))?);
    }
    if wants(ctx, Format::Svg) {
        let svg = svg::orbit_scatter(&record.points, record.transient_cut, title);
        written.push(write_file(dir, "orbit.svg", svg.as_bytes())?);
    }
    Ok(written)
}

pub fn orbit(params: &SeasonalParams, x0: &State, n: usize, ctx: &RunContext) -> Result<(), CliError> {
    if ctx.format == Some(Format::Text) {
        return Err(CliError::BadArguments("orbit writes csv, json or svg".into()));
    }
    let dir = out_dir(ctx, ".")?;
    let record = iterate_orbit(params, x0, n, &ctx.cfg).map_err(numeric)?;
    let title = format!("period-map orbit from x0 = ({}, {}, {})", x0[0], x0[1], x0[2]);
    let mut written = orbit_files(&record, ctx, &dir, &title)?;
    if record.points.len() >= lvseasons_core::orbit::MIN_RECORD_LEN {
        let fps = find_fixed_points(params, &ctx.cfg, ctx.seed)?;
        let report = attractor_detect(params, &record, &fps.states(), &ctx.cfg).map_err(numeric)?;
        written.push(write_file(&dir, "attractor.json", &pretty(&report))?);
    }
    print_paths(&written);
    Ok(())
}

fn summary(k: usize, c: &Classification, attractor: &lvseasons_core::orbit::AttractorReport) -> String {
    let mut s = format!("example {k}\n{c}\nattractor: {:?}", attractor.kind);
    if let Some(d) = &attractor.curve_diagnostics {
        s += &format!(
            "\n  diameter {:.6}, closure defect {:.6} ({:.2}% of diameter)",
            d.diameter,
            d.closure_defect,
            100.0 * d.closure_ratio()
        );
        if let Some(gap) = d.min_gap_to_fixed_points {
            s += &format!("\n  distance to nearest fixed point {gap:.6}");
        }
        if let Some(rho) = d.rotation_number_estimate {
            s += &format!("\n  rotation number ~ {rho:.6}");
        }
    }
    if let Some(x) = attractor.fixed_point {
        s += &format!("\n  fixed point ({:.6}, {:.6}, {:.6})", x[0], x[1], x[2]);
    }
    s + &format!("\n  smallest post-transient coordinate {:.6}", attractor.min_coordinate)
}

pub fn example(k: usize, n: usize, periods: f64, ctx: &RunContext) -> Result<(), CliError> {
    let params = presets::example(k).expect("k is range-checked by the parser");
    let x0 = State::from(presets::example_initial_value(k).unwrap());
    let dir = out_dir(ctx, &format!("lvseasons-example-{k}"))?;

    let c = classify_permanence(&params, &ctx.cfg).map_err(numeric)?;
    let mut written = vec![write_file(&dir, "verdict.json", &pretty(&c))?];

    let t = periods * params.omega();
    let title = format!("example {k}: solution from x0 = ({}, {}, {})", x0[0], x0[1], x0[2]);
    written.extend(simulate_files(&params, &x0, t, params.omega() / 50.0, ctx, &dir, &title)?);

    let record = iterate_orbit(&params, &x0, n, &ctx.cfg).map_err(numeric)?;
    let title = format!("example {k}: orbit of the period map");
    written.extend(orbit_files(&record, ctx, &dir, &title)?);

    let fps = find_fixed_points(&params, &ctx.cfg, ctx.seed)?;
    let attractor = attractor_detect(&params, &record, &fps.states(), &ctx.cfg).map_err(numeric)?;
    written.push(write_file(&dir, "attractor.json", &pretty(&attractor))?);

    println!("{}", summary(k, &c, &attractor));
    print_paths(&written);
    Ok(())
}
