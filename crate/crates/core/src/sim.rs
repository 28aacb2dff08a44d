//! Closed-loop simulation of a double-integrator point robot.

use std::time::Instant;

use nalgebra::Vector3;
use thiserror::Error;

use crate::extraction::{extract_fixed_resolution_into, extract_obstacles_into, ObstacleCell, ResolutionSchedule};
use crate::octree::{Occupancy, OccupancyOctree};
use crate::rmp::{evaluate_navigation, NavigationParams, RmpError};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState<T: Real> {
    pub position: Vector3<T>,
    pub velocity: Vector3<T>,
}

impl<T: Real> RobotState<T> {
    pub fn at_rest(position: Vector3<T>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.velocity.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig<T: Real> {
    /// Integration step (s).
    pub dt: T,
    /// Obstacles are re-extracted once the robot moved this far (m).
    pub reextract_displacement: T,
    pub goal_tolerance: T,
    /// Speeds below this count as standing still (m/s).
    pub stall_speed: T,
    /// Standing still this long away from the goal means stuck (s).
    pub stall_duration: T,
    pub max_duration: T,
    pub velocity_limit: T,
    /// Clearance values are capped at this distance (m).
    pub clearance_truncation: T,
}

impl<T: Real> Default for SimConfig<T> {
    fn default() -> Self {
        Self {
            dt: T::lit(0.005),
            reextract_displacement: T::lit(0.05),
            goal_tolerance: T::lit(0.25),
            stall_speed: T::lit(0.02),
            stall_duration: T::lit(2.0),
            max_duration: T::lit(60.0),
            velocity_limit: T::lit(2.0),
            clearance_truncation: T::lit(2.0),
        }
    }
}

impl<T: Real> SimConfig<T> {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("dt", self.dt),
            ("reextract_displacement", self.reextract_displacement),
            ("goal_tolerance", self.goal_tolerance),
            ("stall_speed", self.stall_speed),
            ("stall_duration", self.stall_duration),
            ("max_duration", self.max_duration),
            ("velocity_limit", self.velocity_limit),
            ("clearance_truncation", self.clearance_truncation),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > T::zero()) {
                return Err(format!("{name} must be positive, got {}", v.as_f64()));
            }
        }
        Ok(())
    }
}

/// Which obstacle set drives the robot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant<T: Real> {
    /// Multi-resolution cells from the hierarchical extractor.
    Hierarchical,
    /// Finest cells within a hard radius (m).
    Fixed { radius: T },
}

impl<T: Real> Variant<T> {
    /// Short label such as `hier` or `fixed:1`.
    pub fn label(&self) -> String {
        match self {
            Variant::Hierarchical => "hier".to_string(),
            Variant::Fixed { radius } => format!("fixed:{}", radius.as_f64()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Reached,
    Stuck,
    Timeout,
    Collision,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Reached => "reached",
            Outcome::Stuck => "stuck",
            Outcome::Timeout => "timeout",
            Outcome::Collision => "collision",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedState<T: Real> {
    pub time: T,
    pub state: RobotState<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult<T: Real> {
    pub trajectory: Vec<TimedState<T>>,
    pub outcome: Outcome,
    /// Distance to the nearest occupied cell at each trajectory sample.
    pub per_step_clearance: Vec<T>,
    /// Wall-clock seconds spent evaluating policies, one per integration step.
    pub policy_eval_times: Vec<f64>,
    /// Wall-clock seconds spent re-extracting obstacles, one per integration step.
    pub extraction_times: Vec<f64>,
}

impl<T: Real> EpisodeResult<T> {
    pub fn duration(&self) -> T {
        self.trajectory.last().map(|s| s.time).unwrap_or_else(T::zero)
    }

    pub fn path_length(&self) -> T {
        self.trajectory
            .windows(2)
            .map(|w| (w[1].state.position - w[0].state.position).norm())
            .fold(T::zero(), |a, b| a + b)
    }

    pub fn min_clearance(&self) -> T {
        self.per_step_clearance
            .iter()
            .copied()
            .fold(T::max_value().unwrap_or_else(T::one), |a, b| a.min(b))
    }

    pub fn mean_policy_eval_time(&self) -> f64 {
        mean(&self.policy_eval_times)
    }

    /// Mean per-step cost: policy evaluation plus amortized re-extraction.
    pub fn mean_step_time(&self) -> f64 {
        mean(&self.policy_eval_times) + mean(&self.extraction_times)
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("start position {0:?} is occupied")]
    StartOccupied([f64; 3]),
    #[error("goal position {0:?} is occupied")]
    GoalOccupied([f64; 3]),
    #[error("{which} position {point:?} lies outside the map")]
    OutOfMap { which: &'static str, point: [f64; 3] },
    #[error("non-finite state or acceleration at t = {time} s")]
    NonFinite { time: f64 },
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Policy(#[from] RmpError),
}

fn to_array<T: Real>(v: &Vector3<T>) -> [f64; 3] {
    [v.x.as_f64(), v.y.as_f64(), v.z.as_f64()]
}

/// Semi-implicit Euler step: `v' = clip(v + a·dt)`, `p' = p + v'·dt`.
/// The velocity is rescaled to `velocity_limit` when it exceeds it.
pub fn step<T: Real>(
    state: &RobotState<T>,
    accel: &Vector3<T>,
    dt: T,
    velocity_limit: T,
) -> Result<RobotState<T>, SimError> {
    if !(state.is_finite() && accel.iter().all(|v| v.is_finite()) && dt.is_finite()) {
        return Err(SimError::NonFinite { time: f64::NAN });
    }
    let mut velocity = state.velocity + accel * dt;
    let speed = velocity.norm();
    if speed > velocity_limit {
        velocity *= velocity_limit / speed;
    }
    Ok(RobotState {
        position: state.position + velocity * dt,
        velocity,
    })
}

/// Reusable obstacle source for one variant.
#[derive(Debug, Clone)]
pub struct ObstacleTracker<T: Real> {
    variant: Variant<T>,
    schedule: ResolutionSchedule<T>,
    cells: Vec<ObstacleCell<T>>,
    anchor: Option<Vector3<T>>,
}

impl<T: Real> ObstacleTracker<T> {
    pub fn new(variant: Variant<T>, schedule: ResolutionSchedule<T>) -> Self {
        Self {
            variant,
            schedule,
            cells: Vec::new(),
            anchor: None,
        }
    }

    /// Re-extracts when the robot moved more than `threshold` since the last
    /// extraction. Returns whether an extraction happened.
    pub fn update(&mut self, map: &OccupancyOctree<T>, position: &Vector3<T>, threshold: T) -> bool {
        if let Some(anchor) = self.anchor {
            if (position - anchor).norm() <= threshold {
                return false;
            }
        }
        match self.variant {
            Variant::Hierarchical => extract_obstacles_into(map, position, &self.schedule, &mut self.cells),
            Variant::Fixed { radius } => extract_fixed_resolution_into(map, position, radius, &mut self.cells),
        }
        self.anchor = Some(*position);
        true
    }

    pub fn cells(&self) -> &[ObstacleCell<T>] {
        &self.cells
    }
}

/// Runs one rest-to-rest episode from `start` towards `goal`.
pub fn run_episode<T: Real>(
    map: &OccupancyOctree<T>,
    start: Vector3<T>,
    goal: Vector3<T>,
    variant: Variant<T>,
    config: &SimConfig<T>,
    params: &NavigationParams<T>,
    schedule: &ResolutionSchedule<T>,
) -> Result<EpisodeResult<T>, SimError> {
    config.validate().map_err(SimError::Config)?;
    for (which, point) in [("start", &start), ("goal", &goal)] {
        match map.query_occupancy(point) {
            Occupancy::Occupied if which == "start" => return Err(SimError::StartOccupied(to_array(point))),
            Occupancy::Occupied => return Err(SimError::GoalOccupied(to_array(point))),
            _ if map.cell_index(point).is_none() => {
                return Err(SimError::OutOfMap {
                    which,
                    point: to_array(point),
                })
            }
            _ => {}
        }
    }

    let attractor = params.attractor(goal);
    let mut tracker = ObstacleTracker::new(variant, *schedule);
    let mut state = RobotState::at_rest(start);
    let max_steps = (config.max_duration / config.dt).ceil().as_f64() as usize;
    let mut trajectory = vec![TimedState { time: T::zero(), state }];
    let mut clearance = vec![map.nearest_occupied_distance(&start, config.clearance_truncation)];
    let mut policy_eval_times = Vec::new();
    let mut extraction_times = Vec::new();
    let mut stalled_for = T::zero();
    let mut outcome = Outcome::Timeout;

    for step_index in 1..=max_steps {
        let time = config.dt * T::from_usize_lossy(step_index);

        let t0 = Instant::now();
        tracker.update(map, &state.position, config.reextract_displacement);
        extraction_times.push(t0.elapsed().as_secs_f64());

        let t1 = Instant::now();
        let nav = evaluate_navigation(&state.position, &state.velocity, tracker.cells(), &attractor, params)?;
        policy_eval_times.push(t1.elapsed().as_secs_f64());

        state = step(&state, &nav.accel, config.dt, config.velocity_limit)
            .map_err(|_| SimError::NonFinite { time: time.as_f64() })?;
        trajectory.push(TimedState { time, state });
        clearance.push(map.nearest_occupied_distance(&state.position, config.clearance_truncation));

        if map.query_occupancy(&state.position) == Occupancy::Occupied {
            outcome = Outcome::Collision;
            break;
        }
        let speed = state.velocity.norm();
        let to_goal = (state.position - goal).norm();
        if speed < config.stall_speed {
            if to_goal <= config.goal_tolerance {
                outcome = Outcome::Reached;
                break;
            }
            stalled_for += config.dt;
            if stalled_for >= config.stall_duration {
                outcome = Outcome::Stuck;
                break;
            }
        } else {
            stalled_for = T::zero();
        }
    }

    Ok(EpisodeResult {
        trajectory,
        outcome,
        per_step_clearance: clearance,
        policy_eval_times,
        extraction_times,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Aabb;
    use crate::octree::{build_from_boxes, OctreeConfig};
    use approx::assert_relative_eq;

    #[test]
    fn step_at_rest_without_accel_is_identity() {
        let s = RobotState::at_rest(Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(step(&s, &Vector3::zeros(), 0.1, 2.0).unwrap(), s);
    }

    #[test]
    fn step_semi_implicit_euler() {
        let s = RobotState::at_rest(Vector3::new(1.0, 2.0, 3.0));
        let n = step(&s, &Vector3::new(1.0, 0.0, 0.0), 0.1, 2.0).unwrap();
        assert_relative_eq!(n.velocity, Vector3::new(0.1, 0.0, 0.0), epsilon = 1e-15);
        assert_relative_eq!(n.position, Vector3::new(1.01, 2.0, 3.0), epsilon = 1e-15);
    }

    #[test]
    fn constant_accel_grows_linearly_until_clip() {
        let mut s = RobotState::at_rest(Vector3::<f64>::zeros());
        let a = Vector3::new(0.0, 4.0, 0.0);
        for i in 1..=10 {
            s = step(&s, &a, 0.05, 1.0).unwrap();
            let expected = (0.2 * i as f64).min(1.0);
            assert_relative_eq!(s.velocity.y, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn non_finite_accel_is_rejected() {
        let s = RobotState::at_rest(Vector3::<f64>::zeros());
        assert!(step(&s, &Vector3::new(f64::NAN, 0.0, 0.0), 0.1, 1.0).is_err());
    }

    #[test]
    fn occupied_endpoints_are_rejected() {
        let map = build_from_boxes(
            &[Aabb::from_arrays([1.0; 3], [2.0; 3])],
            Aabb::from_arrays([0.0; 3], [4.0; 3]),
            0.1,
            OctreeConfig::default(),
        )
        .unwrap();
        let params = NavigationParams::default();
        let cfg = SimConfig::default();
        let sched = ResolutionSchedule::default();
        let free = Vector3::repeat(0.5);
        let occ = Vector3::repeat(1.5);
        assert!(matches!(
            run_episode(&map, occ, free, Variant::Hierarchical, &cfg, &params, &sched),
            Err(SimError::StartOccupied(_))
        ));
        assert!(matches!(
            run_episode(&map, free, occ, Variant::Hierarchical, &cfg, &params, &sched),
            Err(SimError::GoalOccupied(_))
        ));
        assert!(matches!(
            run_episode(
                &map,
                free,
                Vector3::repeat(9.0),
                Variant::Hierarchical,
                &cfg,
                &params,
                &sched
            ),
            Err(SimError::OutOfMap { .. })
        ));
    }

    #[test]
    fn empty_map_reaches_goal_on_straight_line() {
        let map = build_from_boxes(
            &[],
            Aabb::from_arrays([0.0; 3], [10.0; 3]),
            0.1,
            OctreeConfig::default(),
        )
        .unwrap();
        let start = Vector3::new(1.0, 1.0, 1.0);
        let goal = Vector3::new(8.0, 6.0, 2.0);
        let res = run_episode(
            &map,
            start,
            goal,
            Variant::Hierarchical,
            &SimConfig::default(),
            &NavigationParams::default(),
            &ResolutionSchedule::default(),
        )
        .unwrap();
        assert_eq!(res.outcome, Outcome::Reached);
        let dir = (goal - start).normalize();
        for s in &res.trajectory {
            let rel = s.state.position - start;
            let off_line = (rel - dir * rel.dot(&dir)).norm();
            assert!(off_line < 1e-9);
        }
        assert_eq!(res.trajectory.len(), res.per_step_clearance.len());
        assert_eq!(res.policy_eval_times.len() + 1, res.trajectory.len());
    }
}
