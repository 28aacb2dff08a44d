//! Riemannian motion policies for a point robot.
//!
//! A [`Policy`] pairs a desired acceleration with a symmetric positive
//! semi-definite metric that weights it against other policies. Policies are
//! fused by metric-weighted averaging, `f = (Σ A_i)^+ Σ A_i f_i`, `A = Σ A_i`.
//!
//! Every obstacle cell produces a repulsor/damper policy whose metric is a
//! rank-one outer product of its soft-normalized acceleration, so a cell only
//! constrains motion along the direction it pushes. Length scales grow with
//! the cell's octree height so coarse cells act over a larger range.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::extraction::ObstacleCell;
use crate::scalar::Real;

/// Eigenvalues below this fraction of the largest one are treated as zero
/// when inverting a summed metric.
pub const PSEUDO_INVERSE_CUTOFF: f64 = 1e-8;

const OBSTACLE_C: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RmpError {
    #[error("policy {index} has a non-finite acceleration or metric")]
    NonFinite { index: usize },
}

/// Acceleration `accel` (m/s²) weighted by the metric `metric`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Policy<T: Real> {
    pub accel: Vector3<T>,
    pub metric: Matrix3<T>,
}

impl<T: Real> Policy<T> {
    pub fn new(accel: Vector3<T>, metric: Matrix3<T>) -> Self {
        Self { accel, metric }
    }

    pub fn zero() -> Self {
        Self::new(Vector3::zeros(), Matrix3::zeros())
    }

    pub fn is_finite(&self) -> bool {
        self.accel.iter().all(|v| v.is_finite()) && self.metric.iter().all(|v| v.is_finite())
    }
}

/// How the robot-to-cell distance fed to the policy terms is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CellDistance {
    /// Distance to the cell center minus half its side, floored at zero.
    #[default]
    Surface,
    /// Distance to the cell center.
    Center,
}

/// Velocity gate on the obstacle metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricGate<T: Real> {
    /// `A = w_r(d)·s(f)s(f)ᵀ` regardless of velocity.
    Off,
    /// Scales the metric by `floor + (1 - floor)·min(1, max(0, -ẋ·r̂) / speed)`,
    /// so cells the robot is not approaching keep only `floor` of their weight.
    Approach { floor: T, speed: T },
}

impl<T: Real> MetricGate<T> {
    pub fn factor(&self, x_dot: &Vector3<T>, r_hat: &Vector3<T>) -> T {
        match *self {
            MetricGate::Off => T::one(),
            MetricGate::Approach { floor, speed } => {
                let approach = (-x_dot.dot(r_hat)).max(T::zero()) / speed;
                floor + (T::one() - floor) * approach.min(T::one())
            }
        }
    }
}

/// Tuning of one obstacle policy (length scales already resolved for a height).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstaclePolicyParams<T: Real> {
    /// Repulsor strength (m/s²).
    pub eta_rep: T,
    /// Repulsor length scale (m).
    pub nu_rep: T,
    /// Damper strength.
    pub eta_damp: T,
    /// Damper length scale (m).
    pub nu_damp: T,
    /// Regularizer of the damper gain, in (0, 1).
    pub epsilon: T,
    /// Active range (m); the metric vanishes beyond it.
    pub r: T,
    /// Soft-normalization scale of the metric direction (m/s²).
    pub c_softnorm: T,
    pub distance: CellDistance,
    pub gate: MetricGate<T>,
}

impl<T: Real> Default for ObstaclePolicyParams<T> {
    fn default() -> Self {
        ScaleRule::default().apply(0, &Self::unscaled())
    }
}

impl<T: Real> ObstaclePolicyParams<T> {
    /// Default strengths; length scales are placeholders until [`ScaleRule::apply`].
    pub fn unscaled() -> Self {
        Self {
            eta_rep: T::lit(22.0),
            nu_rep: T::one(),
            eta_damp: T::lit(35.0),
            nu_damp: T::one(),
            epsilon: T::lit(0.01),
            r: T::one(),
            c_softnorm: T::lit(OBSTACLE_C),
            distance: CellDistance::Surface,
            gate: MetricGate::Off,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("eta_rep", self.eta_rep),
            ("nu_rep", self.nu_rep),
            ("eta_damp", self.eta_damp),
            ("nu_damp", self.nu_damp),
            ("r", self.r),
            ("c_softnorm", self.c_softnorm),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > T::zero()) {
                return Err(format!("{name} must be positive, got {}", v.as_f64()));
            }
        }
        if !(self.epsilon > T::zero() && self.epsilon < T::one()) {
            return Err(format!("epsilon must lie in (0, 1), got {}", self.epsilon.as_f64()));
        }
        if let MetricGate::Approach { floor, speed } = self.gate {
            if !(floor > T::zero() && floor <= T::one()) {
                return Err(format!("gate floor must lie in (0, 1], got {}", floor.as_f64()));
            }
            if !(speed.is_finite() && speed > T::zero()) {
                return Err(format!("gate speed must be positive, got {}", speed.as_f64()));
            }
        }
        Ok(())
    }
}

/// Height-dependent length scales: `nu_damp = damp·(h + offset)`,
/// `nu_rep = rep·(h + offset)`, `r = range·(h + offset)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleRule<T: Real> {
    pub damp_per_level: T,
    pub rep_per_level: T,
    pub range_per_level: T,
    pub level_offset: T,
}

impl<T: Real> Default for ScaleRule<T> {
    fn default() -> Self {
        Self {
            damp_per_level: T::lit(0.45),
            rep_per_level: T::lit(0.75),
            range_per_level: T::lit(1.5),
            level_offset: T::one(),
        }
    }
}

impl<T: Real> ScaleRule<T> {
    pub fn apply(&self, height: u8, base: &ObstaclePolicyParams<T>) -> ObstaclePolicyParams<T> {
        let level = T::lit(height as f64) + self.level_offset;
        ObstaclePolicyParams {
            nu_damp: self.damp_per_level * level,
            nu_rep: self.rep_per_level * level,
            r: self.range_per_level * level,
            ..*base
        }
    }
}

/// [`ScaleRule::apply`] with the default rule.
pub fn scale_params<T: Real>(height: u8, base: &ObstaclePolicyParams<T>) -> ObstaclePolicyParams<T> {
    ScaleRule::default().apply(height, base)
}

/// Goal attractor gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttractorParams<T: Real> {
    pub alpha: T,
    pub beta: T,
    pub goal: Vector3<T>,
    pub c_softnorm: T,
}

impl<T: Real> AttractorParams<T> {
    pub fn new(goal: Vector3<T>) -> Self {
        Self {
            alpha: T::lit(10.0),
            beta: T::lit(8.5),
            goal,
            c_softnorm: T::lit(0.1),
        }
    }
}

/// `v / h(|v|)` with `h(z) = z + c·ln(1 + exp(-2z/c))`.
///
/// Norm below one (it rounds to one once `|v|` exceeds a few dozen `c`),
/// roughly `|v|/(c·ln 2)` for `|v| << c`, zero at the origin.
pub fn soft_normalize<T: Real>(v: &Vector3<T>, c: T) -> Vector3<T> {
    let z = v.norm();
    let h = z + c * (-(T::lit(2.0) * z / c)).exp().ln_1p();
    v / h
}

/// Range weight `(1 - d/r)²` for `d <= r`, zero beyond.
pub fn w_r<T: Real>(d: T, r: T) -> T {
    if d >= r {
        return T::zero();
    }
    let u = T::one() - d / r;
    u * u
}

/// Repulsor `eta_rep · exp(-d / nu_rep) · r_hat`.
pub fn repulsor<T: Real>(d: T, r_hat: &Vector3<T>, params: &ObstaclePolicyParams<T>) -> Vector3<T> {
    r_hat * (params.eta_rep * (-d / params.nu_rep).exp())
}

/// Damper `eta_damp / (d/nu_damp + eps) · max(0, -ẋ·r̂) (r̂ r̂ᵀ) ẋ`.
///
/// Zero unless the velocity points towards the obstacle.
pub fn damper<T: Real>(x_dot: &Vector3<T>, r_hat: &Vector3<T>, d: T, params: &ObstaclePolicyParams<T>) -> Vector3<T> {
    let along = x_dot.dot(r_hat);
    if along >= T::zero() {
        return Vector3::zeros();
    }
    let gain = params.eta_damp / (d / params.nu_damp + params.epsilon);
    // max(0, -along) · (r̂ r̂ᵀ) ẋ = -along · along · r̂
    r_hat * (gain * (-along) * along)
}

/// Obstacle policy for one cell plus whether the robot is inside the cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleResponse<T: Real> {
    pub policy: Policy<T>,
    pub collision: bool,
}

pub fn obstacle_policy<T: Real>(
    x: &Vector3<T>,
    x_dot: &Vector3<T>,
    cell: &ObstacleCell<T>,
    params: &ObstaclePolicyParams<T>,
) -> ObstacleResponse<T> {
    let offset = x - cell.center;
    let center_distance = offset.norm();
    let half = cell.side_length * T::lit(0.5);
    let collision = offset.iter().all(|v| v.abs() <= half);
    if center_distance <= T::zero() {
        return ObstacleResponse {
            policy: Policy::zero(),
            collision: true,
        };
    }
    let r_hat = offset / center_distance;
    let d = match params.distance {
        CellDistance::Surface => (center_distance - half).max(T::zero()),
        CellDistance::Center => center_distance,
    };
    let accel = repulsor(d, &r_hat, params) - damper(x_dot, &r_hat, d, params);
    let weight = w_r(d, params.r) * params.gate.factor(x_dot, &r_hat);
    let metric = if weight > T::zero() {
        let s = soft_normalize(&accel, params.c_softnorm);
        s * s.transpose() * weight
    } else {
        Matrix3::zeros()
    };
    ObstacleResponse {
        policy: Policy::new(accel, metric),
        collision,
    }
}

/// Goal attractor `alpha·s(goal - x) - beta·ẋ` with identity metric.
pub fn attractor_policy<T: Real>(x: &Vector3<T>, x_dot: &Vector3<T>, params: &AttractorParams<T>) -> Policy<T> {
    let pull = soft_normalize(&(params.goal - x), params.c_softnorm);
    Policy::new(pull * params.alpha - x_dot * params.beta, Matrix3::identity())
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix.
pub fn symmetric_pseudo_inverse<T: Real>(m: &Matrix3<T>) -> Matrix3<T> {
    let eig = SymmetricEigen::new(*m);
    let largest = eig.eigenvalues.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    if largest <= T::zero() {
        return Matrix3::zeros();
    }
    let cutoff = largest * T::lit(PSEUDO_INVERSE_CUTOFF);
    let mut inv = Matrix3::zeros();
    for k in 0..3 {
        let lambda = eig.eigenvalues[k];
        if lambda > cutoff {
            let v = eig.eigenvectors.column(k);
            inv += v * v.transpose() / lambda;
        }
    }
    inv
}

/// Running sums `Σ A_i` and `Σ A_i f_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicySum<T: Real> {
    pub metric: Matrix3<T>,
    pub weighted_accel: Vector3<T>,
    pub count: usize,
}

impl<T: Real> Default for PolicySum<T> {
    fn default() -> Self {
        Self {
            metric: Matrix3::zeros(),
            weighted_accel: Vector3::zeros(),
            count: 0,
        }
    }
}

impl<T: Real> PolicySum<T> {
    pub fn add(&mut self, policy: &Policy<T>) {
        self.metric += policy.metric;
        self.weighted_accel += policy.metric * policy.accel;
        self.count += 1;
    }

    pub fn merge(mut self, other: Self) -> Self {
        self.metric += other.metric;
        self.weighted_accel += other.weighted_accel;
        self.count += other.count;
        self
    }

    /// The equivalent policy; zero acceleration when the summed metric vanishes.
    pub fn resolve(&self) -> Policy<T> {
        let accel = symmetric_pseudo_inverse(&self.metric) * self.weighted_accel;
        Policy::new(accel, self.metric)
    }
}

/// Fuses policies into one equivalent policy.
pub fn combine<T: Real>(policies: &[Policy<T>]) -> Result<Policy<T>, RmpError> {
    let mut sum = PolicySum::default();
    for (index, p) in policies.iter().enumerate() {
        if !p.is_finite() {
            return Err(RmpError::NonFinite { index });
        }
        sum.add(p);
    }
    Ok(sum.resolve())
}

/// Everything the navigation stack needs besides the goal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavigationParams<T: Real> {
    /// Strengths and constants shared by all heights; length scales come from `scale`.
    pub obstacle: ObstaclePolicyParams<T>,
    pub scale: ScaleRule<T>,
    pub alpha: T,
    pub beta: T,
    /// Soft-normalization scale of the goal pull (m).
    pub attractor_c: T,
}

impl<T: Real> Default for NavigationParams<T> {
    fn default() -> Self {
        Self {
            obstacle: ObstaclePolicyParams::unscaled(),
            scale: ScaleRule::default(),
            alpha: T::lit(10.0),
            beta: T::lit(8.5),
            attractor_c: T::lit(0.1),
        }
    }
}

impl<T: Real> NavigationParams<T> {
    pub fn attractor(&self, goal: Vector3<T>) -> AttractorParams<T> {
        AttractorParams {
            alpha: self.alpha,
            beta: self.beta,
            goal,
            c_softnorm: self.attractor_c,
        }
    }

    fn per_height(&self) -> Vec<ObstaclePolicyParams<T>> {
        (0..=crate::octree::MAX_LEVELS)
            .map(|h| self.scale.apply(h, &self.obstacle))
            .collect()
    }
}

/// Result of one navigation evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavigationOutput<T: Real> {
    pub accel: Vector3<T>,
    /// Cells the robot is currently inside of.
    pub collisions: usize,
}

type HeightSums<T> = Vec<PolicySum<T>>;

fn accumulate<T: Real>(
    sums: &mut HeightSums<T>,
    collisions: &mut usize,
    x: &Vector3<T>,
    x_dot: &Vector3<T>,
    cell: &ObstacleCell<T>,
    per_height: &[ObstaclePolicyParams<T>],
) {
    let response = obstacle_policy(x, x_dot, cell, &per_height[cell.height as usize]);
    *collisions += response.collision as usize;
    if response.policy.metric != Matrix3::zeros() {
        sums[cell.height as usize].add(&response.policy);
    }
}

fn finish<T: Real>(
    sums: &HeightSums<T>,
    collisions: usize,
    x: &Vector3<T>,
    x_dot: &Vector3<T>,
    attractor: &AttractorParams<T>,
) -> Result<NavigationOutput<T>, RmpError> {
    let mut total = PolicySum::default();
    for (height, sum) in sums.iter().enumerate() {
        if sum.count == 0 {
            continue;
        }
        let level = sum.resolve();
        if !level.is_finite() {
            return Err(RmpError::NonFinite { index: height });
        }
        total.add(&level);
    }
    let goal = attractor_policy(x, x_dot, attractor);
    if !goal.is_finite() {
        return Err(RmpError::NonFinite { index: sums.len() });
    }
    total.add(&goal);
    Ok(NavigationOutput {
        accel: total.resolve().accel,
        collisions,
    })
}

/// Acceleration commanded by all obstacle cells plus the goal attractor.
///
/// Cells of equal height are fused first; the per-height results and the
/// attractor are then fused again.
pub fn evaluate_navigation<T: Real>(
    x: &Vector3<T>,
    x_dot: &Vector3<T>,
    cells: &[ObstacleCell<T>],
    attractor: &AttractorParams<T>,
    params: &NavigationParams<T>,
) -> Result<NavigationOutput<T>, RmpError> {
    let per_height = params.per_height();
    let mut sums: HeightSums<T> = vec![PolicySum::default(); per_height.len()];
    let mut collisions = 0;
    for cell in cells {
        accumulate(&mut sums, &mut collisions, x, x_dot, cell, &per_height);
    }
    finish(&sums, collisions, x, x_dot, attractor)
}

/// Parallel variant of [`evaluate_navigation`]; equal to it up to
/// floating-point reassociation.
pub fn evaluate_navigation_par<T: Real>(
    x: &Vector3<T>,
    x_dot: &Vector3<T>,
    cells: &[ObstacleCell<T>],
    attractor: &AttractorParams<T>,
    params: &NavigationParams<T>,
) -> Result<NavigationOutput<T>, RmpError> {
    let per_height = params.per_height();
    let levels = per_height.len();
    let (sums, collisions) = cells
        .par_chunks(256)
        .map(|chunk| {
            let mut sums: HeightSums<T> = vec![PolicySum::default(); levels];
            let mut collisions = 0;
            for cell in chunk {
                accumulate(&mut sums, &mut collisions, x, x_dot, cell, &per_height);
            }
            (sums, collisions)
        })
        .reduce(
            || (vec![PolicySum::default(); levels], 0),
            |(a, ca), (b, cb)| {
                let merged = a.into_iter().zip(b).map(|(l, r)| l.merge(r)).collect();
                (merged, ca + cb)
            },
        );
    finish(&sums, collisions, x, x_dot, attractor)
}
