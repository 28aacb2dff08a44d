//! Randomized start/goal benchmark over several maps and navigation variants.
//!
//! Every trial draws one start/goal pair and runs it with each variant, so the
//! variants are compared on identical tasks. Trials are seeded individually
//! from the base seed and their index, which makes the report independent of
//! how many threads execute them.

use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::extraction::ResolutionSchedule;
use crate::octree::{NodeAddress, Occupancy, OccupancyOctree};
use crate::rmp::NavigationParams;
use crate::scalar::Real;
use crate::sim::{run_episode, Outcome, SimConfig, Variant};

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("failed to build thread pool: {0}")]
    ThreadPool(String),
    #[error("benchmark needs at least one map and one variant")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    SingleThread,
    /// Worker threads; zero means one per available core.
    Threads(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkConfig<T: Real> {
    pub sim: SimConfig<T>,
    pub params: NavigationParams<T>,
    pub schedule: ResolutionSchedule<T>,
    /// Minimum obstacle clearance of sampled start and goal points (m).
    pub endpoint_clearance: T,
    /// Minimum start-goal distance (m).
    pub min_separation: T,
    pub max_sampling_attempts: usize,
    pub histogram_bin: f64,
    pub parallelism: Parallelism,
}

impl<T: Real> Default for BenchmarkConfig<T> {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            params: NavigationParams::default(),
            schedule: ResolutionSchedule::default(),
            endpoint_clearance: T::lit(0.5),
            min_separation: T::lit(3.0),
            max_sampling_attempts: 5000,
            histogram_bin: 0.1,
            parallelism: Parallelism::Threads(0),
        }
    }
}

/// Clearance histogram with fixed-width bins up to the truncation distance;
/// the last bin collects samples at or beyond it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClearanceHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl ClearanceHistogram {
    pub fn new(bin: f64, truncation: f64) -> Self {
        let bins = (truncation / bin).round() as usize;
        let edges = (0..=bins).map(|i| i as f64 * bin).collect();
        Self {
            edges,
            counts: vec![0; bins + 1],
        }
    }

    pub fn add(&mut self, clearance: f64) {
        let bins = self.counts.len() - 1;
        let bin = self.edges[1] - self.edges[0];
        let i = ((clearance / bin).floor().max(0.0) as usize).min(bins);
        self.counts[i] += 1;
    }

    fn merge(&mut self, other: &Self) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Fraction of samples in bins lying entirely below `threshold`.
    pub fn fraction_below(&self, threshold: f64) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let below: u64 = self
            .counts
            .iter()
            .enumerate()
            .filter(|(i, _)| *i + 1 < self.edges.len() && self.edges[i + 1] <= threshold + 1e-12)
            .map(|(_, c)| c)
            .sum();
        below as f64 / total as f64
    }
}

/// Deterministic outcome statistics of one variant on one map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantStats {
    pub map_index: usize,
    pub variant: String,
    pub trials: usize,
    /// Trials without a feasible start/goal pair; excluded from the rates.
    pub skipped: usize,
    pub reached: usize,
    pub stuck: usize,
    pub timeout: usize,
    pub collision: usize,
    pub success_rate: f64,
    pub stuck_rate: f64,
    pub collision_rate: f64,
    pub timeout_rate: f64,
    pub min_clearance: f64,
    pub mean_path_length: f64,
    pub clearance_histogram: ClearanceHistogram,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct TimingSummary {
    pub count: usize,
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

impl TimingSummary {
    pub fn from_samples(mut samples: Vec<f64>) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        samples.sort_by(f64::total_cmp);
        let pick = |q: f64| samples[((samples.len() - 1) as f64 * q).round() as usize];
        Self {
            count: samples.len(),
            mean: samples.iter().sum::<f64>() / samples.len() as f64,
            p50: pick(0.5),
            p90: pick(0.9),
            p99: pick(0.99),
            max: *samples.last().unwrap(),
        }
    }
}

/// Wall-clock timings of one variant on one map (seconds). Machine dependent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantTimings {
    pub map_index: usize,
    pub variant: String,
    pub policy_eval: TimingSummary,
    /// Policy evaluation plus re-extraction, per integration step.
    pub step: TimingSummary,
    pub episode: TimingSummary,
}

/// Per-trial, per-variant outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub map_index: usize,
    pub trial: usize,
    pub variant: String,
    pub start: [f64; 3],
    pub goal: [f64; 3],
    pub outcome: String,
    pub duration: f64,
    pub path_length: f64,
    pub min_clearance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub stats: Vec<VariantStats>,
    pub trials: Vec<TrialRecord>,
    #[serde(skip)]
    pub timings: Vec<VariantTimings>,
}

impl BenchmarkReport {
    pub fn stats_for(&self, map_index: usize, variant: &str) -> Option<&VariantStats> {
        self.stats
            .iter()
            .find(|s| s.map_index == map_index && s.variant == variant)
    }
}

struct EpisodeSummary {
    outcome: Outcome,
    duration: f64,
    path_length: f64,
    min_clearance: f64,
    histogram: ClearanceHistogram,
    policy_eval_times: Vec<f64>,
    step_times: Vec<f64>,
    wall_time: f64,
}

struct TrialResult {
    map_index: usize,
    trial: usize,
    endpoints: Option<([f64; 3], [f64; 3])>,
    episodes: Vec<Option<EpisodeSummary>>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn trial_seed(seed: u64, map_index: usize, trial: usize) -> u64 {
    splitmix(splitmix(seed ^ splitmix(map_index as u64)) ^ trial as u64)
}

fn sample_free_point<T: Real>(map: &OccupancyOctree<T>, rng: &mut ChaCha8Rng, clearance: T) -> Option<Vector3<T>> {
    let lo = map.grid_min();
    let dims = map.grid_dims();
    let index: [u32; 3] = std::array::from_fn(|a| lo[a] + rng.random_range(0..dims[a]));
    if map.cell_occupancy(index) != Occupancy::Free {
        return None;
    }
    let center = map.center(&NodeAddress::new(0, index));
    (map.nearest_occupied_distance(&center, clearance) >= clearance).then_some(center)
}

/// Draws a start/goal pair of free points with the configured clearance and
/// separation, or `None` after the attempt budget is exhausted.
pub fn sample_endpoints<T: Real>(
    map: &OccupancyOctree<T>,
    rng: &mut ChaCha8Rng,
    config: &BenchmarkConfig<T>,
) -> Option<(Vector3<T>, Vector3<T>)> {
    let mut start = None;
    for _ in 0..config.max_sampling_attempts {
        let Some(candidate) = sample_free_point(map, rng, config.endpoint_clearance) else {
            continue;
        };
        match start {
            None => start = Some(candidate),
            Some(s) => {
                if (candidate - s).norm() >= config.min_separation {
                    return Some((s, candidate));
                }
            }
        }
    }
    None
}

fn to_array<T: Real>(v: &Vector3<T>) -> [f64; 3] {
    [v.x.as_f64(), v.y.as_f64(), v.z.as_f64()]
}

fn run_trial<T: Real>(
    maps: &[OccupancyOctree<T>],
    map_index: usize,
    trial: usize,
    variants: &[Variant<T>],
    seed: u64,
    config: &BenchmarkConfig<T>,
) -> TrialResult {
    let map = &maps[map_index];
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, map_index, trial));
    let Some((start, goal)) = sample_endpoints(map, &mut rng, config) else {
        return TrialResult {
            map_index,
            trial,
            endpoints: None,
            episodes: Vec::new(),
        };
    };
    let truncation = config.sim.clearance_truncation.as_f64();
    let episodes = variants
        .iter()
        .map(|&variant| {
            let t0 = Instant::now();
            let result = run_episode(map, start, goal, variant, &config.sim, &config.params, &config.schedule).ok()?;
            let wall_time = t0.elapsed().as_secs_f64();
            let mut histogram = ClearanceHistogram::new(config.histogram_bin, truncation);
            for c in &result.per_step_clearance {
                histogram.add(c.as_f64());
            }
            let step_times = result
                .policy_eval_times
                .iter()
                .zip(&result.extraction_times)
                .map(|(a, b)| a + b)
                .collect();
            Some(EpisodeSummary {
                outcome: result.outcome,
                duration: result.duration().as_f64(),
                path_length: result.path_length().as_f64(),
                min_clearance: result.min_clearance().as_f64(),
                histogram,
                policy_eval_times: result.policy_eval_times,
                step_times,
                wall_time,
            })
        })
        .collect();
    TrialResult {
        map_index,
        trial,
        endpoints: Some((to_array(&start), to_array(&goal))),
        episodes,
    }
}

/// Runs `n_trials` randomized trials per map with every variant.
pub fn run_benchmark<T: Real>(
    maps: &[OccupancyOctree<T>],
    n_trials: usize,
    variants: &[Variant<T>],
    seed: u64,
    config: &BenchmarkConfig<T>,
) -> Result<BenchmarkReport, BenchmarkError> {
    if maps.is_empty() || variants.is_empty() {
        return Err(BenchmarkError::Empty);
    }
    let jobs: Vec<(usize, usize)> = (0..maps.len())
        .flat_map(|m| (0..n_trials).map(move |t| (m, t)))
        .collect();
    let run = |&(m, t): &(usize, usize)| run_trial(maps, m, t, variants, seed, config);
    let results: Vec<TrialResult> = match config.parallelism {
        Parallelism::SingleThread => jobs.iter().map(run).collect(),
        Parallelism::Threads(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| BenchmarkError::ThreadPool(e.to_string()))?;
            pool.install(|| jobs.par_iter().map(run).collect())
        }
    };
    Ok(aggregate(maps.len(), n_trials, variants, config, results))
}

fn aggregate<T: Real>(
    n_maps: usize,
    n_trials: usize,
    variants: &[Variant<T>],
    config: &BenchmarkConfig<T>,
    results: Vec<TrialResult>,
) -> BenchmarkReport {
    let truncation = config.sim.clearance_truncation.as_f64();
    let mut stats = Vec::new();
    let mut timings = Vec::new();
    let mut trials = Vec::new();

    for map_index in 0..n_maps {
        let map_results: Vec<&TrialResult> = results.iter().filter(|r| r.map_index == map_index).collect();
        for (vi, variant) in variants.iter().enumerate() {
            let label = variant.label();
            let mut s = VariantStats {
                map_index,
                variant: label.clone(),
                trials: n_trials,
                skipped: 0,
                reached: 0,
                stuck: 0,
                timeout: 0,
                collision: 0,
                success_rate: 0.0,
                stuck_rate: 0.0,
                collision_rate: 0.0,
                timeout_rate: 0.0,
                min_clearance: truncation,
                mean_path_length: 0.0,
                clearance_histogram: ClearanceHistogram::new(config.histogram_bin, truncation),
            };
            let mut eval = Vec::new();
            let mut step = Vec::new();
            let mut wall = Vec::new();
            let mut path_total = 0.0;
            for r in &map_results {
                let (Some((start, goal)), Some(Some(ep))) = (r.endpoints, r.episodes.get(vi)) else {
                    s.skipped += 1;
                    continue;
                };
                match ep.outcome {
                    Outcome::Reached => s.reached += 1,
                    Outcome::Stuck => s.stuck += 1,
                    Outcome::Timeout => s.timeout += 1,
                    Outcome::Collision => s.collision += 1,
                }
                s.min_clearance = s.min_clearance.min(ep.min_clearance);
                s.clearance_histogram.merge(&ep.histogram);
                path_total += ep.path_length;
                eval.extend_from_slice(&ep.policy_eval_times);
                step.extend_from_slice(&ep.step_times);
                wall.push(ep.wall_time);
                trials.push(TrialRecord {
                    map_index,
                    trial: r.trial,
                    variant: label.clone(),
                    start,
                    goal,
                    outcome: ep.outcome.as_str().to_string(),
                    duration: ep.duration,
                    path_length: ep.path_length,
                    min_clearance: ep.min_clearance,
                });
            }
            let executed = (s.trials - s.skipped).max(1) as f64;
            s.success_rate = s.reached as f64 / executed;
            s.stuck_rate = s.stuck as f64 / executed;
            s.collision_rate = s.collision as f64 / executed;
            s.timeout_rate = s.timeout as f64 / executed;
            s.mean_path_length = path_total / executed;
            stats.push(s);
            timings.push(VariantTimings {
                map_index,
                variant: label,
                policy_eval: TimingSummary::from_samples(eval),
                step: TimingSummary::from_samples(step),
                episode: TimingSummary::from_samples(wall),
            });
        }
    }
    trials.sort_by_key(|a| (a.map_index, a.trial));
    BenchmarkReport { stats, trials, timings }
}
