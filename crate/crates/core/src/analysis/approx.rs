//! How much does replacing a block of fine obstacle policies by one coarse
//! policy change the commanded acceleration?
//!
//! A 4×4×4 block of 0.1 m voxels is centered at the origin. For a static robot
//! at distance `d` along a fixed direction, the single policy of the enclosing
//! height-2 cell is compared to the fusion of one policy per occupied voxel.

use nalgebra::Vector3;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::extraction::ObstacleCell;
use crate::rmp::{obstacle_policy, CellDistance, ObstaclePolicyParams, PolicySum, ScaleRule};
use crate::scalar::Real;

const BLOCK_CELLS: u32 = 4;
const VOXEL_SIDE: f64 = 0.1;

/// Which voxels of the block are occupied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// A 4×4 slab on the block's lower (−z) face.
    Fig,
    /// 16 voxels drawn uniformly without replacement, redrawn every trial.
    R16,
    /// All 64 voxels.
    All,
}

impl Scenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Fig => "Fig",
            Scenario::R16 => "R16",
            Scenario::All => "All",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fig" => Some(Scenario::Fig),
            "r16" => Some(Scenario::R16),
            "all" => Some(Scenario::All),
            _ => None,
        }
    }

    fn voxels(&self, rng: &mut ChaCha8Rng) -> Vec<[u32; 3]> {
        let all = (0..BLOCK_CELLS.pow(3)).map(|i| [i % 4, (i / 4) % 4, i / 16]);
        match self {
            Scenario::All => all.collect(),
            Scenario::Fig => all.filter(|v| v[2] == 0).collect(),
            Scenario::R16 => {
                let mut picked: Vec<usize> = sample(rng, 64, 16).into_vec();
                picked.sort_unstable();
                let all: Vec<[u32; 3]> = all.collect();
                picked.into_iter().map(|i| all[i]).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxErrorSample<T: Real> {
    pub scenario: Scenario,
    pub trial: usize,
    pub distance: T,
    /// Angle between coarse and fine accelerations, degrees in [0, 180].
    pub angular_error: T,
    /// `|f_coarse| / |f_fine|`.
    pub magnitude_ratio: T,
}

/// Study settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyConfig<T: Real> {
    /// Policy parameters shared by the coarse cell and every voxel.
    pub params: ObstaclePolicyParams<T>,
    /// Unit direction from the block center towards the robot.
    pub direction: Vector3<T>,
}

impl<T: Real> Default for StudyConfig<T> {
    /// Finest-height length scales, center distances, and an active range
    /// wide enough that no policy is cut off over the studied distances.
    fn default() -> Self {
        let mut params = ScaleRule::default().apply(0, &ObstaclePolicyParams::unscaled());
        params.distance = CellDistance::Center;
        params.r = T::lit(1.0e3);
        Self {
            params,
            direction: Vector3::x(),
        }
    }
}

fn voxel_cell<T: Real>(index: [u32; 3]) -> ObstacleCell<T> {
    let offset = |i: u32| T::lit((i as f64 + 0.5) * VOXEL_SIDE - 0.5 * BLOCK_CELLS as f64 * VOXEL_SIDE);
    ObstacleCell {
        center: Vector3::new(offset(index[0]), offset(index[1]), offset(index[2])),
        height: 0,
        side_length: T::lit(VOXEL_SIDE),
    }
}

fn coarse_cell<T: Real>() -> ObstacleCell<T> {
    ObstacleCell {
        center: Vector3::zeros(),
        height: 2,
        side_length: T::lit(VOXEL_SIDE * BLOCK_CELLS as f64),
    }
}

fn fine_accel<T: Real>(x: &Vector3<T>, voxels: &[[u32; 3]], params: &ObstaclePolicyParams<T>) -> Vector3<T> {
    let mut sum = PolicySum::default();
    for &v in voxels {
        sum.add(&obstacle_policy(x, &Vector3::zeros(), &voxel_cell(v), params).policy);
    }
    sum.resolve().accel
}

fn coarse_accel<T: Real>(x: &Vector3<T>, params: &ObstaclePolicyParams<T>) -> Vector3<T> {
    obstacle_policy(x, &Vector3::zeros(), &coarse_cell(), params)
        .policy
        .accel
}

/// Angle between two vectors in degrees, computed with `atan2` for accuracy
/// near 0° and 180°. Zero if either vector vanishes.
pub fn angular_error_degrees<T: Real>(a: &Vector3<T>, b: &Vector3<T>) -> T {
    if a.norm() == T::zero() || b.norm() == T::zero() {
        return T::zero();
    }
    let angle = a.cross(b).norm().atan2(a.dot(b));
    angle * T::lit(180.0 / std::f64::consts::PI)
}

fn ratio<T: Real>(coarse: &Vector3<T>, fine: &Vector3<T>) -> T {
    let (c, f) = (coarse.norm(), fine.norm());
    if f == T::zero() {
        if c == T::zero() {
            T::one()
        } else {
            T::max_value().unwrap_or_else(T::one)
        }
    } else {
        c / f
    }
}

/// One sample per (trial, distance). `All` and `Fig` are deterministic and use
/// a single trial regardless of `trials`.
pub fn approx_error_study<T: Real>(
    scenario: Scenario,
    distances: &[T],
    trials: usize,
    seed: u64,
    config: &StudyConfig<T>,
) -> Vec<ApproxErrorSample<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trials = match scenario {
        Scenario::R16 => trials.max(1),
        _ => 1,
    };
    let direction = config.direction.normalize();
    let mut samples = Vec::with_capacity(trials * distances.len());
    for trial in 0..trials {
        let voxels = scenario.voxels(&mut rng);
        for &distance in distances {
            let x = direction * distance;
            let fine = fine_accel(&x, &voxels, &config.params);
            let coarse = coarse_accel(&x, &config.params);
            samples.push(ApproxErrorSample {
                scenario,
                trial,
                distance,
                angular_error: angular_error_degrees(&coarse, &fine),
                magnitude_ratio: ratio(&coarse, &fine),
            });
        }
    }
    samples
}

/// Mean and spread of samples sharing a distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxErrorSummary {
    pub scenario: Scenario,
    pub distance: f64,
    pub trials: usize,
    pub angular_error_mean: f64,
    pub angular_error_std: f64,
    pub magnitude_ratio_mean: f64,
    pub magnitude_ratio_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Groups samples by distance, preserving first-seen order.
pub fn summarize<T: Real>(samples: &[ApproxErrorSample<T>]) -> Vec<ApproxErrorSummary> {
    let mut order: Vec<(Scenario, f64)> = Vec::new();
    for s in samples {
        let key = (s.scenario, s.distance.as_f64());
        if !order.contains(&key) {
            order.push(key);
        }
    }
    order
        .into_iter()
        .map(|(scenario, distance)| {
            let group: Vec<_> = samples
                .iter()
                .filter(|s| s.scenario == scenario && s.distance.as_f64() == distance)
                .collect();
            let angles: Vec<f64> = group.iter().map(|s| s.angular_error.as_f64()).collect();
            let ratios: Vec<f64> = group.iter().map(|s| s.magnitude_ratio.as_f64()).collect();
            let (am, asd) = mean_std(&angles);
            let (rm, rsd) = mean_std(&ratios);
            ApproxErrorSummary {
                scenario,
                distance,
                trials: group.len(),
                angular_error_mean: am,
                angular_error_std: asd,
                magnitude_ratio_mean: rm,
                magnitude_ratio_std: rsd,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchPoint<T: Real> {
    pub distance: T,
    pub angular_error: T,
    pub magnitude_ratio: T,
}

/// Error of a policy that uses the fine voxels below `switch_distance` and
/// the coarse summary beyond it, measured against always-fine.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchCurve<T: Real> {
    pub switch_distance: T,
    pub points: Vec<SwitchPoint<T>>,
    /// `|f(switch⁺) - f(switch⁻)|` of the piecewise policy (m/s²).
    pub jump: T,
    /// `|f(switch⁺)| / |f(switch⁻)|`.
    pub jump_ratio: T,
}

pub fn hierarchical_switch_study<T: Real>(
    voxels: &[[u32; 3]],
    distances: &[T],
    switch_distance: T,
    config: &StudyConfig<T>,
) -> SwitchCurve<T> {
    let direction = config.direction.normalize();
    let piecewise = |d: T| {
        let x = direction * d;
        if d < switch_distance {
            fine_accel(&x, voxels, &config.params)
        } else {
            coarse_accel(&x, &config.params)
        }
    };
    let points = distances
        .iter()
        .map(|&distance| {
            let reference = fine_accel(&(direction * distance), voxels, &config.params);
            let used = piecewise(distance);
            SwitchPoint {
                distance,
                angular_error: angular_error_degrees(&used, &reference),
                magnitude_ratio: ratio(&used, &reference),
            }
        })
        .collect();
    let x = direction * switch_distance;
    let below = fine_accel(&x, voxels, &config.params);
    let above = coarse_accel(&x, &config.params);
    SwitchCurve {
        switch_distance,
        points,
        jump: (above - below).norm(),
        jump_ratio: ratio(&above, &below),
    }
}

/// Voxel indices used by a deterministic scenario (`All` or `Fig`).
pub fn scenario_voxels(scenario: Scenario, seed: u64) -> Vec<[u32; 3]> {
    scenario.voxels(&mut ChaCha8Rng::seed_from_u64(seed))
}
