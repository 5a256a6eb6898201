//! Subcommand implementations.
//!
//! Each runner resolves its section of the [`RunConfig`] (flags override the
//! file), executes the study, and writes its outputs under
//! `<out>/<subcommand>/` through [`report::OutputWriter`]. Randomized
//! studies draw from named substreams of the run seed: `"ga"` for the
//! optimizer, `"mobility"` for flight paths, and `"mobility-fading"` for
//! shadow-fading innovations, so fading can be re-rolled against a fixed
//! trajectory.

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};

use aamsim_core::antenna::{DipoleAntenna, UlaPanel};
use aamsim_core::config::{load_config, rng_substream};
use aamsim_core::corridor::{
    validate_directions, validate_schedule, DirectionViolation, Layer, OccupancyRecord,
    OccupancySchedule, PrismIndex, Violation,
};
use aamsim_core::coverage::{associate, summarize, CoverageMap, CoverageSummary};
use aamsim_core::localization::{corridor_sweep, AntennaMode, SliceStats};
use aamsim_core::mobility::run_mobility_study;
use aamsim_core::optimizer::{run_ga, GaScenario, OptimizerError};
use aamsim_core::scenario::{build_grid, default_grid_spacing_m};
use aamsim_core::{NetworkLayout, RunConfig};

use crate::report::{num, Csv, OutputWriter};
use crate::{
    Cli, Command, CorridorCheckArgs, CoverageArgs, HandoverArgs, LocalizeArgs, OptimizeArgs,
    PatternDumpArgs,
};

/// Failure class deciding the process exit code.
pub enum CliError {
    /// Bad configuration, flags, or input files.
    Invalid(anyhow::Error),
    /// The run itself failed (I/O, serialization).
    Runtime(anyhow::Error),
}

fn invalid(err: impl Into<anyhow::Error>) -> CliError {
    CliError::Invalid(err.into())
}

fn runtime(err: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(err.into())
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.common.jobs {
        if jobs == 0 {
            return Err(invalid(anyhow!("--jobs must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(runtime)?;
    }

    let mut config = match &cli.common.config {
        Some(path) => load_config(path).map_err(invalid)?,
        None => RunConfig::new(0),
    };
    if let Some(seed) = cli.common.seed {
        config.seed = seed;
    }

    let out_root = cli
        .common
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .or_else(|| std::env::var_os("AAMSIM_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));

    match &cli.command {
        Command::Coverage(args) => run_coverage(args, config, &out_root),
        Command::Optimize(args) => run_optimize(args, config, &out_root),
        Command::Handover(args) => run_handover(args, config, &out_root),
        Command::Localize(args) => run_localize(args, config, &out_root),
        Command::CorridorCheck(args) => run_corridor_check(args, config, &out_root),
        Command::PatternDump(args) => run_pattern_dump(args, config, &out_root),
    }
}

fn association_csv(map: &CoverageMap, layout: &NetworkLayout) -> String {
    let mut csv = Csv::new(
        "ix,iy,x_m,y_m,z_m,serving_site,serving_tier,serving_panel,rsrp_dbm,sir_db",
    );
    for p in &map.points {
        csv.row([
            p.ix.to_string(),
            p.iy.to_string(),
            num(p.position.x),
            num(p.position.y),
            num(p.position.z),
            p.serving_site.to_string(),
            layout.sites[p.serving_site].tier.to_string(),
            p.serving_panel.to_string(),
            num(p.rsrp_dbm),
            num(p.sir_db),
        ]);
    }
    csv.into_string()
}

#[derive(Serialize)]
struct CoverageReport {
    isd_m: f64,
    tiers: u32,
    height_m: f64,
    spacing_m: f64,
    shared_uptilt_deg: Option<f64>,
    summary: CoverageSummary,
}

fn run_coverage(
    args: &CoverageArgs,
    mut config: RunConfig,
    out_root: &Path,
) -> Result<(), CliError> {
    if let Some(isd) = args.isd {
        config.scenario.isd_m = isd;
    }
    if let Some(tiers) = args.tiers {
        config.scenario.tiers = tiers;
    }
    if let Some(height) = args.height {
        config.coverage.height_m = height;
    }
    if let Some(spacing) = args.spacing {
        config.coverage.spacing_m = Some(spacing);
    }

    let layout = NetworkLayout::build(&config.scenario.layout_params()).map_err(invalid)?;
    let layout = match args.uptilt {
        Some(angle) => layout.with_uptilts(&vec![angle; layout.sites.len()]),
        None => layout,
    };
    let spacing = config
        .coverage
        .spacing_m
        .unwrap_or_else(|| default_grid_spacing_m(config.scenario.isd_m));
    let grid = build_grid(&layout, config.coverage.height_m, spacing).map_err(invalid)?;
    let params = config.coverage.link_budget(&config.scenario);
    let map = associate(&layout, &grid, &params).map_err(invalid)?;

    let report = CoverageReport {
        isd_m: config.scenario.isd_m,
        tiers: config.scenario.tiers,
        height_m: config.coverage.height_m,
        spacing_m: spacing,
        shared_uptilt_deg: args.uptilt,
        summary: summarize(&map, &layout),
    };

    let mut writer = OutputWriter::create(out_root.join("coverage")).map_err(runtime)?;
    writer
        .write("association.csv", &association_csv(&map, &layout))
        .map_err(runtime)?;
    writer.write_json("summary.json", &report).map_err(runtime)?;
    writer.finish("coverage", &config).map_err(runtime)?;
    Ok(())
}

#[derive(Serialize)]
struct OptimizeReport {
    isd_m: f64,
    tiers: u32,
    height_m: f64,
    seed: u64,
    report_spacing_m: f64,
    fitness_spacing_m: f64,
    evaluations: usize,
    tilts_deg: Vec<f64>,
    /// Best fitness on the coarse grid the GA evolved against.
    coarse_min_sir_db: f64,
    /// Worst-point SIR of the optimized layout on the reporting grid.
    min_sir_db: Option<f64>,
    /// Worst-point SIR of the downtilt-only layout on the reporting grid.
    baseline_min_sir_db: Option<f64>,
    fragmentation_index: usize,
    baseline_fragmentation_index: usize,
    tier2_uptilt_share: f64,
}

fn run_optimize(
    args: &OptimizeArgs,
    mut config: RunConfig,
    out_root: &Path,
) -> Result<(), CliError> {
    if let Some(isd) = args.isd {
        config.scenario.isd_m = isd;
    }
    if let Some(tiers) = args.tiers {
        config.scenario.tiers = tiers;
    }
    if let Some(height) = args.height {
        config.coverage.height_m = height;
    }
    if let Some(spacing) = args.spacing {
        config.coverage.spacing_m = Some(spacing);
    }
    if let Some(population) = args.population {
        config.optimizer.ga.population = population;
    }
    if let Some(generations) = args.generations {
        config.optimizer.ga.generations = generations;
    }
    let factor = config.optimizer.fitness_spacing_factor;
    if !(factor.is_finite() && factor >= 1.0) {
        return Err(invalid(anyhow!(
            "fitness_spacing_factor must be a finite value >= 1, got {factor}"
        )));
    }

    let layout = NetworkLayout::build(&config.scenario.layout_params()).map_err(invalid)?;
    let report_spacing = config
        .coverage
        .spacing_m
        .unwrap_or_else(|| default_grid_spacing_m(config.scenario.isd_m));
    let fitness_spacing = report_spacing * factor;
    let height = config.coverage.height_m;
    let full_grid = build_grid(&layout, height, report_spacing).map_err(invalid)?;
    let coarse_grid = build_grid(&layout, height, fitness_spacing).map_err(invalid)?;
    let params = config.coverage.link_budget(&config.scenario);

    let scenario = GaScenario {
        layout: layout.clone(),
        grid: coarse_grid,
        link_budget: params.clone(),
    };
    let mut rng = rng_substream(config.seed, &config.optimizer.ga.rng_label);
    let result = run_ga(&config.optimizer.ga, &scenario, &mut rng).map_err(|err| match err {
        OptimizerError::Coverage(inner) => runtime(inner),
        other => invalid(other),
    })?;

    let tilted = layout.with_uptilts(&result.best_genome);
    let optimized_map = associate(&tilted, &full_grid, &params).map_err(runtime)?;
    let baseline_map = associate(&layout, &full_grid, &params).map_err(runtime)?;
    let optimized = summarize(&optimized_map, &tilted);
    let baseline = summarize(&baseline_map, &layout);

    let mut history = Csv::new("generation,best_fitness_db,mean_fitness_db");
    for stats in &result.fitness_history {
        history.row([
            stats.generation.to_string(),
            num(stats.best_fitness_db),
            num(stats.mean_fitness_db),
        ]);
    }

    let report = OptimizeReport {
        isd_m: config.scenario.isd_m,
        tiers: config.scenario.tiers,
        height_m: height,
        seed: config.seed,
        report_spacing_m: report_spacing,
        fitness_spacing_m: fitness_spacing,
        evaluations: result.evaluations,
        tilts_deg: result.best_genome.clone(),
        coarse_min_sir_db: result.best_fitness_db,
        min_sir_db: optimized.min_sir_db,
        baseline_min_sir_db: baseline.min_sir_db,
        fragmentation_index: optimized.fragmentation_index,
        baseline_fragmentation_index: baseline.fragmentation_index,
        tier2_uptilt_share: optimized.tier2_uptilt_share,
    };

    let mut writer = OutputWriter::create(out_root.join("optimize")).map_err(runtime)?;
    writer
        .write("ga_history.csv", &history.into_string())
        .map_err(runtime)?;
    writer
        .write_json("best_tilts.json", &report)
        .map_err(runtime)?;
    writer
        .write("association.csv", &association_csv(&optimized_map, &tilted))
        .map_err(runtime)?;
    writer.finish("optimize", &config).map_err(runtime)?;
    Ok(())
}

#[derive(Serialize)]
struct HandoverReport {
    isd_m: f64,
    tiers: u32,
    height_m: f64,
    speed_kmph: f64,
    step_s: f64,
    window_s: f64,
    n_windows: usize,
    ttt_s: f64,
    hom_db: f64,
    sf_sigma_db: f64,
    sf_ar_coefficient: f64,
    mean_handovers: f64,
    variance: f64,
}

fn run_handover(
    args: &HandoverArgs,
    mut config: RunConfig,
    out_root: &Path,
) -> Result<(), CliError> {
    if let Some(isd) = args.isd {
        config.scenario.isd_m = isd;
    }
    if let Some(height) = args.height {
        config.mobility.height_m = height;
    }
    if let Some(speed) = args.speed {
        config.mobility.speed_kmph = speed;
    }
    if let Some(windows) = args.windows {
        config.mobility.n_windows = windows;
    }

    let layout = NetworkLayout::build(&config.scenario.layout_params()).map_err(invalid)?;
    let params = config.coverage.link_budget(&config.scenario);
    let traj = config.mobility.trajectory();
    let ho = config.mobility.handover();
    let mut traj_rng = rng_substream(config.seed, "mobility");
    let mut sf_rng = rng_substream(config.seed, "mobility-fading");
    let pmf = run_mobility_study(
        &layout,
        &traj,
        &ho,
        &params,
        config.mobility.sf_sigma_db,
        config.mobility.sf_ar_coefficient,
        &mut traj_rng,
        &mut sf_rng,
    )
    .map_err(invalid)?;

    let mut csv = Csv::new("handovers,windows,probability");
    let probabilities = pmf.probabilities();
    for (count, (&windows, probability)) in pmf.counts.iter().zip(&probabilities).enumerate() {
        csv.row([count.to_string(), windows.to_string(), num(*probability)]);
    }

    let report = HandoverReport {
        isd_m: config.scenario.isd_m,
        tiers: config.scenario.tiers,
        height_m: config.mobility.height_m,
        speed_kmph: config.mobility.speed_kmph,
        step_s: config.mobility.step_s,
        window_s: config.mobility.window_s,
        n_windows: pmf.n_windows,
        ttt_s: config.mobility.ttt_s,
        hom_db: config.mobility.hom_db,
        sf_sigma_db: config.mobility.sf_sigma_db,
        sf_ar_coefficient: config.mobility.sf_ar_coefficient,
        mean_handovers: pmf.mean,
        variance: pmf.variance,
    };

    let mut writer = OutputWriter::create(out_root.join("handover")).map_err(runtime)?;
    writer
        .write("ho_pmf.csv", &csv.into_string())
        .map_err(runtime)?;
    writer.write_json("summary.json", &report).map_err(runtime)?;
    writer.finish("handover", &config).map_err(runtime)?;
    Ok(())
}

fn parse_antenna_mode(text: &str) -> Result<AntennaMode> {
    match text {
        "siso" => Ok(AntennaMode::Siso),
        "miso" => Ok(AntennaMode::Miso),
        "mimo" => Ok(AntennaMode::Mimo),
        other => bail!("unknown antenna mode {other:?} (expected siso, miso, or mimo)"),
    }
}

fn sorted_observable_rmse(slice: &SliceStats) -> Vec<f64> {
    let mut values: Vec<f64> = slice
        .points()
        .iter()
        .filter(|p| p.observable)
        .map(|p| p.rmse_m)
        .collect();
    values.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite RMSE"));
    values
}

fn run_localize(
    args: &LocalizeArgs,
    mut config: RunConfig,
    out_root: &Path,
) -> Result<(), CliError> {
    if let Some(dx) = args.dx {
        config.localization.dx_m = dx;
    }
    if let Some(dy) = args.dy {
        config.localization.dy_m = dy;
    }
    if let Some(heights) = &args.heights {
        config.localization.heights_m = heights.clone();
    }
    if let Some(antenna) = &args.antenna {
        config.localization.mode = parse_antenna_mode(antenna).map_err(invalid)?;
    }
    if let Some(spacing) = args.spacing {
        config.localization.spacing_m = spacing;
    }

    let sweep_config = config.localization.sweep();
    let result = corridor_sweep(&sweep_config).map_err(invalid)?;

    let mut grid_csv = Csv::new("x_m,y_m,height_m,rmse_m,observable");
    let mut cdf_csv = Csv::new("dx_m,dy_m,height_m,rmse_m,cum_prob");
    let mut median_csv = Csv::new(
        "dx_m,dy_m,height_m,median_rmse_m,n_observable,n_unobservable",
    );
    for slice in &result.slices {
        let height = slice.height_m();
        for point in slice.points() {
            grid_csv.row([
                num(point.x_m),
                num(point.y_m),
                num(height),
                num(point.rmse_m),
                point.observable.to_string(),
            ]);
        }
        let sorted = sorted_observable_rmse(slice);
        let n = sorted.len();
        for (i, rmse) in sorted.iter().enumerate() {
            cdf_csv.row([
                num(result.dx_m),
                num(result.dy_m),
                num(height),
                num(*rmse),
                num((i + 1) as f64 / n as f64),
            ]);
        }
        median_csv.row([
            num(result.dx_m),
            num(result.dy_m),
            num(height),
            num(slice.median_rmse_m()),
            slice.n_observable().to_string(),
            slice.n_unobservable().to_string(),
        ]);
    }

    let mut writer = OutputWriter::create(out_root.join("localize")).map_err(runtime)?;
    writer
        .write("crlb_grid.csv", &grid_csv.into_string())
        .map_err(runtime)?;
    writer
        .write("crlb_cdf.csv", &cdf_csv.into_string())
        .map_err(runtime)?;
    writer
        .write("median_vs_alt.csv", &median_csv.into_string())
        .map_err(runtime)?;
    writer.finish("localize", &config).map_err(runtime)?;
    Ok(())
}

/// Parses the schedule CSV: header `t,vehicle,i,j,layer`, one occupancy
/// record per row.
fn parse_schedule_csv(text: &str) -> Result<Vec<OccupancyRecord>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, line)| (i + 1, line.trim()))
        .filter(|(_, line)| !line.is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| anyhow!("schedule is empty"))?;
    if header != "t,vehicle,i,j,layer" {
        bail!("schedule header must be \"t,vehicle,i,j,layer\", got {header:?}");
    }
    let mut records = Vec::new();
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            bail!("line {line_no}: expected 5 fields, got {}", fields.len());
        }
        let time: u32 = fields[0]
            .parse()
            .with_context(|| format!("line {line_no}: bad time {:?}", fields[0]))?;
        let vehicle = fields[1];
        if vehicle.is_empty() {
            bail!("line {line_no}: empty vehicle id");
        }
        let i: i32 = fields[2]
            .parse()
            .with_context(|| format!("line {line_no}: bad i {:?}", fields[2]))?;
        let j: i32 = fields[3]
            .parse()
            .with_context(|| format!("line {line_no}: bad j {:?}", fields[3]))?;
        let layer: Layer = fields[4]
            .parse()
            .with_context(|| format!("line {line_no}: bad layer {:?}", fields[4]))?;
        records.push(OccupancyRecord {
            time,
            vehicle: vehicle.to_string(),
            prism: PrismIndex::new(i, j, layer),
        });
    }
    Ok(records)
}

#[derive(Serialize)]
struct CorridorReport {
    schedule: String,
    n_records: usize,
    horizon: Option<u32>,
    rule_violations: Vec<Violation>,
    direction_violations: Vec<DirectionViolation>,
}

fn run_corridor_check(
    args: &CorridorCheckArgs,
    config: RunConfig,
    out_root: &Path,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.schedule)
        .with_context(|| format!("cannot read schedule {}", args.schedule.display()))
        .map_err(invalid)?;
    let records = parse_schedule_csv(&text).map_err(invalid)?;
    let n_records = records.len();
    let model = config.corridor.model().map_err(invalid)?;
    let schedule = OccupancySchedule::from_records(records).map_err(invalid)?;
    let rule_violations = validate_schedule(&schedule, &model).map_err(invalid)?;
    let direction_violations = validate_directions(&schedule, &model).map_err(invalid)?;

    let report = CorridorReport {
        schedule: args.schedule.display().to_string(),
        n_records,
        horizon: schedule.horizon(),
        rule_violations,
        direction_violations,
    };

    let mut writer = OutputWriter::create(out_root.join("corridor-check")).map_err(runtime)?;
    writer
        .write_json("violations.json", &report)
        .map_err(runtime)?;
    writer.finish("corridor-check", &config).map_err(runtime)?;
    Ok(())
}

fn run_pattern_dump(
    args: &PatternDumpArgs,
    mut config: RunConfig,
    out_root: &Path,
) -> Result<(), CliError> {
    if let Some(tilt) = args.tilt {
        config.pattern.tilt_deg = tilt;
    }
    if let Some(step) = args.step {
        config.pattern.step_deg = step;
    }
    let step = config.pattern.step_deg;
    if !(step.is_finite() && step > 0.0 && step <= 180.0) {
        return Err(invalid(anyhow!(
            "pattern step must be in (0, 180] degrees, got {step}"
        )));
    }
    let tilt = config.pattern.tilt_deg;
    let down = UlaPanel::downtilt(tilt).map_err(invalid)?;
    let up = UlaPanel::uptilt(tilt).map_err(invalid)?;
    let dipole = DipoleAntenna::z_oriented();

    let mut csv = Csv::new("elevation_deg,downtilt_gain_dbi,uptilt_gain_dbi,dipole_gain_dbi");
    let steps = (180.0 / step).floor() as usize;
    for i in 0..=steps {
        let elevation = -90.0 + i as f64 * step;
        let direction = nalgebra_direction(elevation);
        csv.row([
            num(elevation),
            num(down.gain_db(elevation)),
            num(up.gain_db(elevation)),
            num(10.0 * dipole.gain_linear(&direction).log10()),
        ]);
    }

    let mut writer = OutputWriter::create(out_root.join("pattern-dump")).map_err(runtime)?;
    writer
        .write("pattern.csv", &csv.into_string())
        .map_err(runtime)?;
    writer.finish("pattern-dump", &config).map_err(runtime)?;
    Ok(())
}

fn nalgebra_direction(elevation_deg: f64) -> nalgebra::Vector3<f64> {
    let e = elevation_deg.to_radians();
    nalgebra::Vector3::new(e.cos(), 0.0, e.sin())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_csv_round_trips_records() {
        let text = "t,vehicle,i,j,layer\n0,A,1,0,top\n1,A,1,1,top\n0,B,2,0,bottom\n";
        let records = parse_schedule_csv(text).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[0].time, 0);
        assert_eq!(records[0].vehicle, "A");
        assert_eq!(records[0].prism, PrismIndex::new(1, 0, Layer::Top));
        assert_eq!(records[2].prism, PrismIndex::new(2, 0, Layer::Bottom));
    }

    #[test]
    fn schedule_csv_rejects_malformed_input() {
        for (text, needle) in [
            ("", "empty"),
            ("time,car,i,j,layer\n", "header"),
            ("t,vehicle,i,j,layer\n0,A,1,0\n", "expected 5 fields"),
            ("t,vehicle,i,j,layer\nx,A,1,0,top\n", "bad time"),
            ("t,vehicle,i,j,layer\n0,,1,0,top\n", "empty vehicle"),
            ("t,vehicle,i,j,layer\n0,A,a,0,top\n", "bad i"),
            ("t,vehicle,i,j,layer\n0,A,1,b,top\n", "bad j"),
            ("t,vehicle,i,j,layer\n0,A,1,0,sideways\n", "bad layer"),
        ] {
            let err = parse_schedule_csv(text).unwrap_err();
            assert!(
                format!("{err:#}").contains(needle),
                "{text:?} -> {err:#}"
            );
        }
    }

    #[test]
    fn antenna_mode_parsing_accepts_the_three_modes() {
        assert_eq!(parse_antenna_mode("siso").unwrap(), AntennaMode::Siso);
        assert_eq!(parse_antenna_mode("miso").unwrap(), AntennaMode::Miso);
        assert_eq!(parse_antenna_mode("mimo").unwrap(), AntennaMode::Mimo);
        assert!(parse_antenna_mode("dual").is_err());
    }
}
