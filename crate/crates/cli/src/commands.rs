use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use rmpnav_core::analysis::{
    approx_error_study, run_benchmark, sample_endpoints, summarize, ClearanceHistogram, Parallelism, Scenario,
    StudyConfig, VariantStats,
};
use rmpnav_core::extraction::{extract_fixed_resolution, extract_obstacles};
use rmpnav_core::rmp::CellDistance;
use rmpnav_core::sim::{run_episode, SimError};
use rmpnav_core::{OccupancyOctree, Variant};

use crate::config::{ConfigError, ParamsFile, SceneFile};
use crate::dump::{read_dump, write_dump};
use crate::output::{csv, json, sha256_hex, Header, OutputSet};
use crate::{Command, MapSource, ParamsArg};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments, configuration or inputs.
    #[error("{0}")]
    Usage(String),
    /// Failures while computing or writing results.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn config_error(path: &Path, e: ConfigError) -> CliError {
    usage(format!("{}: {e}", path.display()))
}

fn commit(outputs: OutputSet) -> Result<(), CliError> {
    outputs
        .commit()
        .map_err(|e| CliError::Runtime(format!("writing outputs failed: {e}")))
}

fn to_json<B: Serialize>(header: &Header, body: &B) -> Result<String, CliError> {
    json(header, body).map_err(|e| CliError::Runtime(e.to_string()))
}

/// Parameters plus the JSON used to hash them.
fn load_params(arg: &ParamsArg) -> Result<(ParamsFile, serde_json::Value), CliError> {
    let params = match &arg.params {
        None => ParamsFile::default(),
        Some(path) => ParamsFile::parse(&read_text(path)?).map_err(|e| config_error(path, e))?,
    };
    let value = serde_json::to_value(params).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok((params, value))
}

struct LoadedMaps {
    maps: Vec<OccupancyOctree>,
    /// SHA-256 of every input file, for the config hash.
    sources: Vec<String>,
}

fn load_maps(source: &MapSource) -> Result<LoadedMaps, CliError> {
    if let Some(path) = &source.scene {
        let text = read_text(path)?;
        let scene = SceneFile::parse(&text).map_err(|e| config_error(path, e))?;
        let maps = scene.build_maps().map_err(|e| config_error(path, e))?;
        return Ok(LoadedMaps {
            maps,
            sources: vec![sha256_hex(text.as_bytes())],
        });
    }
    let mut loaded = LoadedMaps {
        maps: Vec::new(),
        sources: Vec::new(),
    };
    for path in &source.map {
        let text = read_text(path)?;
        let map = read_dump(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        loaded.maps.push(map);
        loaded.sources.push(sha256_hex(text.as_bytes()));
    }
    Ok(loaded)
}

fn single_map(loaded: LoadedMaps) -> Result<(OccupancyOctree, String), CliError> {
    let LoadedMaps { mut maps, sources } = loaded;
    if maps.len() != 1 {
        return Err(usage(format!(
            "this command takes exactly one map, got {} (set procedural.maps = 1 or pass one --map)",
            maps.len()
        )));
    }
    Ok((maps.pop().expect("one map"), sources.concat()))
}

pub fn parse_variant(s: &str) -> Result<Variant, CliError> {
    if s == "hier" || s == "hierarchical" {
        return Ok(Variant::Hierarchical);
    }
    if let Some(r) = s.strip_prefix("fixed:") {
        if let Ok(radius) = r.parse::<f64>() {
            if radius.is_finite() && radius > 0.0 {
                return Ok(Variant::Fixed { radius });
            }
        }
    }
    Err(usage(format!(
        "invalid variant `{s}` (expected `hier` or `fixed:<radius>`)"
    )))
}

fn fmt_vec(v: &Vector3<f64>) -> [String; 3] {
    [v.x.to_string(), v.y.to_string(), v.z.to_string()]
}

fn file_label(variant: &str) -> String {
    variant.replace(':', "-")
}

pub fn execute(command: Command) -> Result<String, CliError> {
    match command {
        Command::BuildMap { scene, out } => build_map(&scene, out),
        Command::Extract {
            source,
            pos,
            variant,
            params,
            out,
        } => extract(&source, pos, &variant, &params, out),
        Command::Simulate {
            source,
            variant,
            start,
            goal,
            seed,
            params,
            timings,
            out,
        } => simulate(
            &source,
            &variant,
            start.zip(goal),
            start.is_some() != goal.is_some(),
            seed,
            &params,
            timings,
            out,
        ),
        Command::Benchmark {
            source,
            variant,
            trials,
            seed,
            params,
            single_thread,
            threads,
            timings,
            out,
        } => {
            let parallelism = if single_thread {
                Parallelism::SingleThread
            } else {
                Parallelism::Threads(threads.unwrap_or(0))
            };
            benchmark(&source, &variant, trials, seed, &params, parallelism, timings, out)
        }
        Command::ApproxError {
            scenario,
            distances,
            trials,
            seed,
            params,
            out,
        } => approx_error(&scenario, &distances, trials, seed, &params, out),
    }
}

fn build_map(scene_path: &Path, out: PathBuf) -> Result<String, CliError> {
    let (map, source) = single_map(load_maps(&MapSource {
        scene: Some(scene_path.to_path_buf()),
        map: Vec::new(),
    })?)?;
    let header = Header::new(&json!({ "command": "build-map", "scene_sha256": source }), 0);
    let mut outputs = OutputSet::default();
    outputs.add(&out, header.csv_line() + &write_dump(&map));
    commit(outputs)?;
    Ok(format!(
        "occupied cells: {}\nnodes: {}\nmemory: {} bytes\nwrote {}\n",
        map.occupied_count(),
        map.node_count(),
        map.memory_bytes(),
        out.display()
    ))
}

fn extract(
    source: &MapSource,
    pos: [f64; 3],
    variant: &str,
    params_arg: &ParamsArg,
    out: PathBuf,
) -> Result<String, CliError> {
    let variant_value = parse_variant(variant)?;
    let (params, params_json) = load_params(params_arg)?;
    let (map, source) = single_map(load_maps(source)?)?;
    let position = Vector3::from(pos);
    if map.cell_index(&position).is_none() {
        return Err(usage(format!("position {pos:?} lies outside the map bounds")));
    }
    let cells = match variant_value {
        Variant::Hierarchical => extract_obstacles(&map, &position, &params.schedule()),
        Variant::Fixed { radius } => extract_fixed_resolution(&map, &position, radius),
    };
    let header = Header::new(
        &json!({
            "command": "extract",
            "map_sha256": source,
            "pos": pos,
            "variant": variant_value.label(),
            "schedule": params_json["schedule"],
        }),
        0,
    );
    let rows = cells.iter().map(|c| {
        let [x, y, z] = fmt_vec(&c.center);
        vec![x, y, z, c.height.to_string(), c.side_length.to_string()]
    });
    let text = csv(
        &header,
        &["center_x", "center_y", "center_z", "height", "side_length"],
        rows,
    );
    let mut outputs = OutputSet::default();
    outputs.add(&out, text);
    commit(outputs)?;

    let mut counts = vec![0usize; map.num_levels() as usize];
    for c in &cells {
        counts[c.height as usize] += 1;
    }
    let mut report = format!("cells: {}\n", cells.len());
    for (h, n) in counts.iter().enumerate().filter(|(_, n)| **n > 0) {
        let _ = writeln!(report, "height {h}: {n}");
    }
    let _ = writeln!(report, "wrote {}", out.display());
    Ok(report)
}

#[derive(Serialize)]
struct SimulateSummary {
    variant: String,
    start: [f64; 3],
    goal: [f64; 3],
    outcome: &'static str,
    duration: f64,
    path_length: f64,
    min_clearance: f64,
    steps: usize,
}

#[derive(Serialize)]
struct SimulateTimings {
    mean_policy_eval_time: f64,
    mean_step_time: f64,
    steps: usize,
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    source: &MapSource,
    variant: &str,
    endpoints: Option<([f64; 3], [f64; 3])>,
    half_given: bool,
    seed: u64,
    params_arg: &ParamsArg,
    timings: bool,
    out: PathBuf,
) -> Result<String, CliError> {
    if half_given {
        return Err(usage("give both --start and --goal, or neither"));
    }
    let variant_value = parse_variant(variant)?;
    let (params, params_json) = load_params(params_arg)?;
    let (map, source) = single_map(load_maps(source)?)?;
    let (start, goal) = match endpoints {
        Some((s, g)) => (Vector3::from(s), Vector3::from(g)),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample_endpoints(&map, &mut rng, &params.benchmark(Parallelism::SingleThread))
                .ok_or_else(|| usage("no feasible start/goal pair found in this map"))?
        }
    };
    let result = run_episode(
        &map,
        start,
        goal,
        variant_value,
        &params.sim(),
        &params.navigation(),
        &params.schedule(),
    )
    .map_err(|e| match e {
        SimError::NonFinite { .. } | SimError::Policy(_) => CliError::Runtime(e.to_string()),
        _ => usage(e.to_string()),
    })?;

    let header = Header::new(
        &json!({
            "command": "simulate",
            "map_sha256": source,
            "variant": variant_value.label(),
            "start": endpoints.map(|e| e.0),
            "goal": endpoints.map(|e| e.1),
            "params": params_json,
        }),
        seed,
    );
    let rows = result
        .trajectory
        .iter()
        .zip(&result.per_step_clearance)
        .map(|(s, clearance)| {
            let mut row = vec![s.time.to_string()];
            row.extend(fmt_vec(&s.state.position));
            row.extend(fmt_vec(&s.state.velocity));
            row.push(clearance.to_string());
            row
        });
    let trajectory = csv(&header, &["t", "px", "py", "pz", "vx", "vy", "vz", "clearance"], rows);
    let summary = SimulateSummary {
        variant: variant_value.label(),
        start: start.into(),
        goal: goal.into(),
        outcome: result.outcome.as_str(),
        duration: result.duration(),
        path_length: result.path_length(),
        min_clearance: result.min_clearance(),
        steps: result.policy_eval_times.len(),
    };
    let mut outputs = OutputSet::default();
    outputs.add(out.join("trajectory.csv"), trajectory);
    outputs.add(out.join("summary.json"), to_json(&header, &summary)?);
    if timings {
        let t = SimulateTimings {
            mean_policy_eval_time: result.mean_policy_eval_time(),
            mean_step_time: result.mean_step_time(),
            steps: result.policy_eval_times.len(),
        };
        outputs.add(out.join("timings.json"), to_json(&header, &t)?);
    }
    commit(outputs)?;
    Ok(format!(
        "outcome: {}\nduration: {:.3} s\npath length: {:.3} m\nmin clearance: {:.3} m\nwrote {}\n",
        summary.outcome,
        summary.duration,
        summary.path_length,
        summary.min_clearance,
        out.display()
    ))
}

/// Totals of one variant over every map.
#[derive(Debug, Serialize)]
struct VariantSummary {
    variant: String,
    executed: usize,
    skipped: usize,
    reached: usize,
    stuck: usize,
    timeout: usize,
    collision: usize,
    success_rate: f64,
    stuck_rate: f64,
    collision_rate: f64,
    timeout_rate: f64,
    min_clearance: f64,
    fraction_below_0_3: f64,
    clearance_histogram: ClearanceHistogram,
}

fn summarize_variant(label: &str, stats: &[VariantStats]) -> VariantSummary {
    let mine: Vec<&VariantStats> = stats.iter().filter(|s| s.variant == label).collect();
    let mut histogram = mine[0].clearance_histogram.clone();
    histogram.counts.iter_mut().for_each(|c| *c = 0);
    let mut sum = VariantSummary {
        variant: label.to_string(),
        executed: 0,
        skipped: 0,
        reached: 0,
        stuck: 0,
        timeout: 0,
        collision: 0,
        success_rate: 0.0,
        stuck_rate: 0.0,
        collision_rate: 0.0,
        timeout_rate: 0.0,
        min_clearance: f64::INFINITY,
        fraction_below_0_3: 0.0,
        clearance_histogram: ClearanceHistogram::new(1.0, 1.0),
    };
    for s in &mine {
        sum.executed += s.trials - s.skipped;
        sum.skipped += s.skipped;
        sum.reached += s.reached;
        sum.stuck += s.stuck;
        sum.timeout += s.timeout;
        sum.collision += s.collision;
        sum.min_clearance = sum.min_clearance.min(s.min_clearance);
        for (a, b) in histogram.counts.iter_mut().zip(&s.clearance_histogram.counts) {
            *a += b;
        }
    }
    let n = sum.executed.max(1) as f64;
    sum.success_rate = sum.reached as f64 / n;
    sum.stuck_rate = sum.stuck as f64 / n;
    sum.collision_rate = sum.collision as f64 / n;
    sum.timeout_rate = sum.timeout as f64 / n;
    sum.fraction_below_0_3 = histogram.fraction_below(0.3);
    sum.clearance_histogram = histogram;
    sum
}

#[derive(Serialize)]
struct BenchmarkOutput<'a> {
    trials_per_map: usize,
    maps: Vec<serde_json::Value>,
    variants: Vec<String>,
    params: &'a serde_json::Value,
    summary: Vec<VariantSummary>,
    stats: &'a [VariantStats],
}

#[allow(clippy::too_many_arguments)]
fn benchmark(
    source: &MapSource,
    variant_args: &[String],
    trials: usize,
    seed: u64,
    params_arg: &ParamsArg,
    parallelism: Parallelism,
    timings: bool,
    out: PathBuf,
) -> Result<String, CliError> {
    let labels: Vec<String> = if variant_args.is_empty() {
        vec!["hier".into(), "fixed:1".into(), "fixed:3".into()]
    } else {
        variant_args.to_vec()
    };
    let variants = labels.iter().map(|s| parse_variant(s)).collect::<Result<Vec<_>, _>>()?;
    let labels: Vec<String> = variants.iter().map(|v| v.label()).collect();
    if let Some(dup) = labels.iter().enumerate().find(|(i, l)| labels[..*i].contains(l)) {
        return Err(usage(format!("variant `{}` given twice", dup.1)));
    }
    if trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let (params, params_json) = load_params(params_arg)?;
    let loaded = load_maps(source)?;
    let config = params.benchmark(parallelism);
    let report =
        run_benchmark(&loaded.maps, trials, &variants, seed, &config).map_err(|e| CliError::Runtime(e.to_string()))?;

    let header = Header::new(
        &json!({
            "command": "benchmark",
            "map_sha256": loaded.sources,
            "variants": labels,
            "trials": trials,
            "params": params_json,
        }),
        seed,
    );
    let summary: Vec<VariantSummary> = labels.iter().map(|l| summarize_variant(l, &report.stats)).collect();
    let body = BenchmarkOutput {
        trials_per_map: trials,
        maps: loaded
            .maps
            .iter()
            .zip(&loaded.sources)
            .map(|(m, s)| json!({ "sha256": s, "occupied_cells": m.occupied_count() }))
            .collect(),
        variants: labels.clone(),
        params: &params_json,
        summary,
        stats: &report.stats,
    };

    let mut outputs = OutputSet::default();
    outputs.add(out.join("report.json"), to_json(&header, &body)?);
    for s in &report.stats {
        let stem = format!("map{}_{}", s.map_index, file_label(&s.variant));
        outputs.add(out.join("stats").join(format!("{stem}.json")), to_json(&header, s)?);
        let h = &s.clearance_histogram;
        let rows = h.counts.iter().enumerate().map(|(i, c)| {
            let hi = h.edges.get(i + 1).map_or("inf".to_string(), |e| e.to_string());
            vec![h.edges[i].to_string(), hi, c.to_string()]
        });
        outputs.add(
            out.join("histograms").join(format!("{stem}.csv")),
            csv(&header, &["clearance_lo", "clearance_hi", "count"], rows),
        );
    }
    let rows = report.trials.iter().map(|t| {
        vec![
            t.map_index.to_string(),
            t.trial.to_string(),
            t.variant.clone(),
            t.start[0].to_string(),
            t.start[1].to_string(),
            t.start[2].to_string(),
            t.goal[0].to_string(),
            t.goal[1].to_string(),
            t.goal[2].to_string(),
            t.outcome.clone(),
            t.duration.to_string(),
            t.path_length.to_string(),
            t.min_clearance.to_string(),
        ]
    });
    outputs.add(
        out.join("trials.csv"),
        csv(
            &header,
            &[
                "map",
                "trial",
                "variant",
                "start_x",
                "start_y",
                "start_z",
                "goal_x",
                "goal_y",
                "goal_z",
                "outcome",
                "duration",
                "path_length",
                "min_clearance",
            ],
            rows,
        ),
    );
    if timings {
        #[derive(Serialize)]
        struct Timings<'a> {
            timings: &'a [rmpnav_core::analysis::VariantTimings],
        }
        outputs.add(
            out.join("timings.json"),
            to_json(
                &header,
                &Timings {
                    timings: &report.timings,
                },
            )?,
        );
    }
    commit(outputs)?;

    let mut text = String::new();
    for s in &body.summary {
        let _ = writeln!(
            text,
            "{}: reached {}/{} stuck {} timeout {} collision {} (clearance < 0.3 m: {:.4})",
            s.variant, s.reached, s.executed, s.stuck, s.timeout, s.collision, s.fraction_below_0_3
        );
    }
    let _ = writeln!(text, "wrote {}", out.display());
    Ok(text)
}

fn approx_error(
    scenario: &str,
    distances: &[f64],
    trials: usize,
    seed: u64,
    params_arg: &ParamsArg,
    out: PathBuf,
) -> Result<String, CliError> {
    let scenario_value =
        Scenario::parse(scenario).ok_or_else(|| usage(format!("invalid scenario `{scenario}` (fig, r16 or all)")))?;
    if distances.is_empty() || distances.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(usage("--distances must be positive"));
    }
    let (params, params_json) = load_params(params_arg)?;
    let nav = params.navigation();
    let mut study = StudyConfig::default();
    study.params = rmpnav_core::rmp::ObstaclePolicyParams {
        distance: CellDistance::Center,
        r: study.params.r,
        ..nav.scale.apply(0, &nav.obstacle)
    };
    let samples = approx_error_study(scenario_value, distances, trials, seed, &study);
    let summary = summarize(&samples);

    let header = Header::new(
        &json!({
            "command": "approx-error",
            "scenario": scenario_value.as_str(),
            "distances": distances,
            "trials": trials,
            "obstacle": params_json["obstacle"],
            "scale": params_json["scale"],
        }),
        seed,
    );
    let rows = samples.iter().map(|s| {
        vec![
            s.scenario.as_str().to_string(),
            s.trial.to_string(),
            s.distance.to_string(),
            s.angular_error.to_string(),
            s.magnitude_ratio.to_string(),
        ]
    });
    let samples_csv = csv(
        &header,
        &["scenario", "trial", "distance", "angular_error_deg", "magnitude_ratio"],
        rows,
    );
    let rows = summary.iter().map(|s| {
        vec![
            s.scenario.as_str().to_string(),
            s.distance.to_string(),
            s.trials.to_string(),
            s.angular_error_mean.to_string(),
            s.angular_error_std.to_string(),
            s.magnitude_ratio_mean.to_string(),
            s.magnitude_ratio_std.to_string(),
        ]
    });
    let summary_csv = csv(
        &header,
        &[
            "scenario",
            "distance",
            "trials",
            "angular_error_mean",
            "angular_error_std",
            "magnitude_ratio_mean",
            "magnitude_ratio_std",
        ],
        rows,
    );
    let mut outputs = OutputSet::default();
    outputs.add(out.join("samples.csv"), samples_csv);
    outputs.add(out.join("summary.csv"), summary_csv);
    commit(outputs)?;

    let mut text = String::new();
    for s in &summary {
        let _ = writeln!(
            text,
            "d = {} m: angular error {:.3} deg, magnitude ratio {:.4}",
            s.distance, s.angular_error_mean, s.magnitude_ratio_mean
        );
    }
    let _ = writeln!(text, "wrote {}", out.display());
    Ok(text)
}
