//! TOML scene and parameter files.

use serde::{Deserialize, Serialize};

use rmpnav_core::analysis::{BenchmarkConfig, Parallelism, ProceduralScene, Scene};
use rmpnav_core::extraction::ResolutionSchedule;
use rmpnav_core::octree::{OctreeConfig, MAX_LEVELS};
use rmpnav_core::rmp::{CellDistance, MetricGate, ObstaclePolicyParams, ScaleRule};
use rmpnav_core::{Aabb, NavigationParams, OccupancyOctree, SimConfig};

/// The parameter file shipped with the tool.
pub const DEFAULT_PARAMS: &str = include_str!("../config/default_params.toml");

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{0}")]
    Toml(#[from] toml::de::Error),
    #[error("field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

/// Either an explicit box list or a procedural room generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    #[serde(default = "default_levels")]
    pub num_levels: u8,
    #[serde(default)]
    pub unknown_as_occupied: bool,
    pub min_cell_size: Option<f64>,
    pub bounds: Option<BoxSpec>,
    #[serde(default)]
    pub boxes: Vec<BoxSpec>,
    pub procedural: Option<ProceduralSpec>,
}

fn default_levels() -> u8 {
    OctreeConfig::default().num_levels
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProceduralSpec {
    pub size: [f64; 3],
    pub min_cell_size: f64,
    pub wall_segments: usize,
    pub wall_length: [f64; 2],
    pub pillar_density: f64,
    pub furniture_density: f64,
    /// Number of maps; map `i` is generated from `seed + i`.
    pub maps: usize,
    pub seed: u64,
}

impl Default for ProceduralSpec {
    fn default() -> Self {
        let p = ProceduralScene::default();
        Self {
            size: p.size,
            min_cell_size: p.min_cell_size,
            wall_segments: p.wall_segments,
            wall_length: p.wall_length,
            pillar_density: p.pillar_density,
            furniture_density: p.furniture_density,
            maps: 4,
            seed: 0,
        }
    }
}

impl ProceduralSpec {
    fn generator(&self) -> ProceduralScene {
        ProceduralScene {
            size: self.size,
            min_cell_size: self.min_cell_size,
            wall_segments: self.wall_segments,
            wall_length: self.wall_length,
            pillar_density: self.pillar_density,
            furniture_density: self.furniture_density,
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let [w, d, h] = self.size;
        if !(w.is_finite() && d.is_finite() && h.is_finite() && w >= 4.0 && d >= 4.0 && h >= 1.0) {
            return Err(invalid("procedural.size", "need at least 4 m x 4 m x 1 m"));
        }
        if !(self.min_cell_size.is_finite() && self.min_cell_size > 0.0) {
            return Err(invalid("procedural.min_cell_size", "must be positive"));
        }
        let [lo, hi] = self.wall_length;
        if !(lo > 0.0 && lo < hi && hi <= self.size[0].min(self.size[1]) - 2.0) {
            return Err(invalid(
                "procedural.wall_length",
                "need 0 < min < max <= shorter side - 2 m",
            ));
        }
        for (name, v) in [
            ("pillar_density", self.pillar_density),
            ("furniture_density", self.furniture_density),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!("procedural.{name}"), "must be non-negative"));
            }
        }
        if self.maps == 0 {
            return Err(invalid("procedural.maps", "must be at least 1"));
        }
        Ok(())
    }
}

impl SceneFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let scene: SceneFile = toml::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.num_levels == 0 || self.num_levels > MAX_LEVELS {
            return Err(invalid("num_levels", format!("must lie in 1..={MAX_LEVELS}")));
        }
        match (&self.procedural, &self.bounds) {
            (Some(p), None) => {
                if self.min_cell_size.is_some() || !self.boxes.is_empty() {
                    return Err(invalid("procedural", "cannot be combined with min_cell_size or boxes"));
                }
                p.validate()
            }
            (Some(_), Some(_)) => Err(invalid("procedural", "cannot be combined with bounds")),
            (None, None) => Err(invalid("bounds", "missing (or give a [procedural] table)")),
            (None, Some(bounds)) => {
                let cell = self.min_cell_size.ok_or_else(|| invalid("min_cell_size", "missing"))?;
                if !(cell.is_finite() && cell > 0.0) {
                    return Err(invalid("min_cell_size", "must be positive"));
                }
                check_box("bounds", bounds)?;
                for (i, b) in self.boxes.iter().enumerate() {
                    check_box(&format!("boxes[{i}]"), b)?;
                }
                Ok(())
            }
        }
    }

    fn octree_config(&self) -> OctreeConfig {
        OctreeConfig {
            num_levels: self.num_levels,
            unknown_as_occupied: self.unknown_as_occupied,
        }
    }

    /// Box scenes yield one map, procedural scenes `procedural.maps`.
    pub fn scenes(&self) -> Vec<Scene<f64>> {
        match &self.procedural {
            Some(p) => (0..p.maps)
                .map(|i| p.generator().generate(p.seed.wrapping_add(i as u64)))
                .collect(),
            None => {
                let to_aabb = |b: &BoxSpec| Aabb::from_arrays(b.min, b.max);
                vec![Scene {
                    bounds: to_aabb(self.bounds.as_ref().expect("validated")),
                    min_cell_size: self.min_cell_size.expect("validated"),
                    boxes: self.boxes.iter().map(to_aabb).collect(),
                }]
            }
        }
    }

    pub fn build_maps(&self) -> Result<Vec<OccupancyOctree>, ConfigError> {
        self.scenes()
            .iter()
            .map(|s| {
                s.build(self.octree_config())
                    .map_err(|e| invalid("bounds", e.to_string()))
            })
            .collect()
    }
}

fn check_box(field: &str, b: &BoxSpec) -> Result<(), ConfigError> {
    if b.min.iter().chain(&b.max).any(|v| !v.is_finite()) {
        return Err(invalid(field, "coordinates must be finite"));
    }
    if (0..3).any(|a| b.min[a] >= b.max[a]) {
        return Err(invalid(field, "min must be below max on every axis"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSpec {
    pub floor: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceSpec {
    Surface,
    Center,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObstacleSpec {
    pub eta_rep: f64,
    pub eta_damp: f64,
    pub epsilon: f64,
    pub c_softnorm: f64,
    pub distance: DistanceSpec,
    pub gate: Option<GateSpec>,
}

impl Default for ObstacleSpec {
    fn default() -> Self {
        let p = ObstaclePolicyParams::<f64>::unscaled();
        Self {
            eta_rep: p.eta_rep,
            eta_damp: p.eta_damp,
            epsilon: p.epsilon,
            c_softnorm: p.c_softnorm,
            distance: DistanceSpec::Surface,
            gate: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttractorSpec {
    pub alpha: f64,
    pub beta: f64,
    pub c_softnorm: f64,
}

impl Default for AttractorSpec {
    fn default() -> Self {
        let p = NavigationParams::default();
        Self {
            alpha: p.alpha,
            beta: p.beta,
            c_softnorm: p.attractor_c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScaleSpec {
    pub damp_per_level: f64,
    pub rep_per_level: f64,
    pub range_per_level: f64,
    pub level_offset: f64,
}

impl Default for ScaleSpec {
    fn default() -> Self {
        let s = ScaleRule::<f64>::default();
        Self {
            damp_per_level: s.damp_per_level,
            rep_per_level: s.rep_per_level,
            range_per_level: s.range_per_level,
            level_offset: s.level_offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSpec {
    pub base: f64,
    pub exponent_divisor: f64,
    pub offset: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        let s = ResolutionSchedule::<f64>::default();
        Self {
            base: s.base,
            exponent_divisor: s.exponent_divisor,
            offset: s.offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSpec {
    pub dt: f64,
    pub reextract_displacement: f64,
    pub goal_tolerance: f64,
    pub stall_speed: f64,
    pub stall_duration: f64,
    pub max_duration: f64,
    pub velocity_limit: f64,
    pub clearance_truncation: f64,
}

impl Default for SimSpec {
    fn default() -> Self {
        let s = SimConfig::default();
        Self {
            dt: s.dt,
            reextract_displacement: s.reextract_displacement,
            goal_tolerance: s.goal_tolerance,
            stall_speed: s.stall_speed,
            stall_duration: s.stall_duration,
            max_duration: s.max_duration,
            velocity_limit: s.velocity_limit,
            clearance_truncation: s.clearance_truncation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkSpec {
    pub endpoint_clearance: f64,
    pub min_separation: f64,
    pub max_sampling_attempts: usize,
    pub histogram_bin: f64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        let b = BenchmarkConfig::<f64>::default();
        Self {
            endpoint_clearance: b.endpoint_clearance,
            min_separation: b.min_separation,
            max_sampling_attempts: b.max_sampling_attempts,
            histogram_bin: b.histogram_bin,
        }
    }
}

/// Every tunable of the navigation stack; missing tables and fields take defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsFile {
    pub obstacle: ObstacleSpec,
    pub attractor: AttractorSpec,
    pub scale: ScaleSpec,
    pub schedule: ScheduleSpec,
    pub sim: SimSpec,
    pub benchmark: BenchmarkSpec,
}

impl ParamsFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let params: ParamsFile = toml::from_str(text)?;
        params.validate()?;
        Ok(params)
    }

    pub fn navigation(&self) -> NavigationParams {
        let o = &self.obstacle;
        let mut obstacle = ObstaclePolicyParams::unscaled();
        obstacle.eta_rep = o.eta_rep;
        obstacle.eta_damp = o.eta_damp;
        obstacle.epsilon = o.epsilon;
        obstacle.c_softnorm = o.c_softnorm;
        obstacle.distance = match o.distance {
            DistanceSpec::Surface => CellDistance::Surface,
            DistanceSpec::Center => CellDistance::Center,
        };
        obstacle.gate = match o.gate {
            None => MetricGate::Off,
            Some(g) => MetricGate::Approach {
                floor: g.floor,
                speed: g.speed,
            },
        };
        NavigationParams {
            obstacle,
            scale: ScaleRule {
                damp_per_level: self.scale.damp_per_level,
                rep_per_level: self.scale.rep_per_level,
                range_per_level: self.scale.range_per_level,
                level_offset: self.scale.level_offset,
            },
            alpha: self.attractor.alpha,
            beta: self.attractor.beta,
            attractor_c: self.attractor.c_softnorm,
        }
    }

    pub fn schedule(&self) -> ResolutionSchedule<f64> {
        ResolutionSchedule {
            base: self.schedule.base,
            exponent_divisor: self.schedule.exponent_divisor,
            offset: self.schedule.offset,
        }
    }

    pub fn sim(&self) -> SimConfig {
        let s = &self.sim;
        SimConfig {
            dt: s.dt,
            reextract_displacement: s.reextract_displacement,
            goal_tolerance: s.goal_tolerance,
            stall_speed: s.stall_speed,
            stall_duration: s.stall_duration,
            max_duration: s.max_duration,
            velocity_limit: s.velocity_limit,
            clearance_truncation: s.clearance_truncation,
        }
    }

    pub fn benchmark(&self, parallelism: Parallelism) -> BenchmarkConfig<f64> {
        BenchmarkConfig {
            sim: self.sim(),
            params: self.navigation(),
            schedule: self.schedule(),
            endpoint_clearance: self.benchmark.endpoint_clearance,
            min_separation: self.benchmark.min_separation,
            max_sampling_attempts: self.benchmark.max_sampling_attempts,
            histogram_bin: self.benchmark.histogram_bin,
            parallelism,
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let nav = self.navigation();
        for h in [0, MAX_LEVELS] {
            nav.scale
                .apply(h, &nav.obstacle)
                .validate()
                .map_err(|m| invalid("obstacle", m))?;
        }
        if !(self.scale.level_offset.is_finite() && self.scale.level_offset > 0.0) {
            return Err(invalid("scale.level_offset", "must be positive"));
        }
        for (name, v) in [
            ("attractor.alpha", self.attractor.alpha),
            ("attractor.beta", self.attractor.beta),
            ("attractor.c_softnorm", self.attractor.c_softnorm),
            ("schedule.base", self.schedule.base),
            ("schedule.exponent_divisor", self.schedule.exponent_divisor),
            ("benchmark.histogram_bin", self.benchmark.histogram_bin),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, "must be positive"));
            }
        }
        if !self.schedule.offset.is_finite() {
            return Err(invalid("schedule.offset", "must be finite"));
        }
        for (name, v) in [
            ("benchmark.endpoint_clearance", self.benchmark.endpoint_clearance),
            ("benchmark.min_separation", self.benchmark.min_separation),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(name, "must be non-negative"));
            }
        }
        self.sim().validate().map_err(|m| invalid("sim", m))
    }
}
