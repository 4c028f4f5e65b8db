//! Rhombic leader-follower topology, hand velocity estimation, goal
//! generation and formation-state metrics.
//!
//! ```text
//!            2
//!  hand - 1     4        (heading points from 1 toward the hand)
//!            3
//! ```
//!
//! The operator leads vehicle 1, vehicle 1 leads 2 and 3, and the midpoint
//! of 2 and 3 leads vehicle 4. Each of the five edges carries one impedance
//! link whose clamped correction shifts the follower's goal.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::impedance::all_finite;

pub const VEHICLE_COUNT: usize = 4;
pub const LINK_COUNT: usize = 5;

/// Minimum separation below which two vehicles count as coincident.
const COINCIDENT_M: f64 = 1e-9;

/// The five impedance links, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Link {
    Hum1,
    L12,
    L13,
    L24,
    L34,
}

impl Link {
    pub const ALL: [Link; LINK_COUNT] = [Link::Hum1, Link::L12, Link::L13, Link::L24, Link::L34];

    pub fn name(self) -> &'static str {
        match self {
            Link::Hum1 => "hum1",
            Link::L12 => "12",
            Link::L13 => "13",
            Link::L24 => "24",
            Link::L34 => "34",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Thresholds for the contracted/regular/extended and
/// decreasing/constant/increasing classifications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricThresholds {
    /// Spread ratios within `1 ± shape_band` are regular.
    pub shape_band: f64,
    /// Smoothed `|ds/dt|` at or below this (1/s) is constant.
    pub rate_deadband: f64,
    /// Time constant (s) of the exponential smoother on `ds/dt`.
    pub rate_time_constant: f64,
}

impl Default for MetricThresholds {
    fn default() -> Self {
        Self {
            shape_band: 0.1,
            rate_deadband: 0.05,
            rate_time_constant: 0.25,
        }
    }
}

/// How the formation's forward axis is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HeadingMode {
    /// Always the configured axis.
    Fixed,
    /// Follow the horizontal hand velocity once it exceeds `min_speed` (m/s);
    /// below that the last heading is kept.
    FromVelocity { min_speed: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormationConfig {
    /// Hand to vehicle 1 (m).
    pub l1: f64,
    /// Vehicle 1 to vehicles 2 and 3, along the heading (m).
    pub l2: f64,
    /// Midpoint of 2 and 3 to vehicle 4 (m).
    pub l3: f64,
    /// Lateral half-width of the rhombus (m).
    pub width: f64,
    /// Bound on every applied correction (m).
    pub limit: f64,
    /// Hand-velocity force gain (N·s/m).
    pub k_v: f64,
    /// Hand speed cap before the force law (m/s).
    pub v_max: f64,
    /// Least-squares window of the hand velocity estimator (s).
    pub velocity_window: f64,
    pub heading: Vector3<f64>,
    pub heading_mode: HeadingMode,
    pub thresholds: MetricThresholds,
}

impl Default for FormationConfig {
    fn default() -> Self {
        Self {
            l1: 0.5,
            l2: 0.5,
            l3: 0.5,
            width: 0.5,
            limit: 0.25,
            k_v: -7.0,
            v_max: 1.5,
            velocity_window: 0.2,
            heading: Vector3::x(),
            heading_mode: HeadingMode::Fixed,
            thresholds: MetricThresholds::default(),
        }
    }
}

impl FormationConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(SimError::param(name, format!("must be finite and > 0, got {v}")))
            }
        };
        positive("l1", self.l1)?;
        positive("l2", self.l2)?;
        positive("l3", self.l3)?;
        positive("limit", self.limit)?;
        positive("v_max", self.v_max)?;
        if !(self.width.is_finite() && self.width >= 0.0) {
            return Err(SimError::param(
                "width",
                format!("must be finite and >= 0, got {}", self.width),
            ));
        }
        if !self.k_v.is_finite() {
            return Err(SimError::param("k_v", "must be finite"));
        }
        if !(self.velocity_window.is_finite() && self.velocity_window >= 0.0) {
            return Err(SimError::param("velocity_window", "must be finite and >= 0"));
        }
        HeadingFrame::new(&self.heading)?;
        if let HeadingMode::FromVelocity { min_speed } = self.heading_mode {
            positive("heading_min_speed", min_speed)?;
        }
        let t = &self.thresholds;
        positive("shape_band", t.shape_band)?;
        if !(t.rate_deadband.is_finite() && t.rate_deadband >= 0.0) {
            return Err(SimError::param("rate_deadband", "must be finite and >= 0"));
        }
        positive("rate_time_constant", t.rate_time_constant)?;
        Ok(())
    }

    /// Nominal drone-to-drone link lengths in [`Link::ALL`] order, with the
    /// hand link first.
    pub fn nominal_link_lengths(&self) -> [f64; LINK_COUNT] {
        let front = self.l2.hypot(self.width);
        let back = self.l3.hypot(self.width);
        [self.l1, front, front, back, back]
    }
}

/// Orthonormal horizontal frame: `forward` points from the formation toward
/// the hand, `lateral = ẑ × forward`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadingFrame {
    pub forward: Vector3<f64>,
    pub lateral: Vector3<f64>,
}

impl HeadingFrame {
    /// Uses the horizontal part of `heading`; fails if that part vanishes.
    pub fn new(heading: &Vector3<f64>) -> Result<Self> {
        let horizontal = Vector3::new(heading.x, heading.y, 0.0);
        let norm = horizontal.norm();
        if !(norm.is_finite() && norm > 1e-12) {
            return Err(SimError::param(
                "heading",
                "needs a non-zero, finite horizontal component",
            ));
        }
        let forward = horizontal / norm;
        let lateral = Vector3::new(-forward.y, forward.x, 0.0);
        Ok(Self { forward, lateral })
    }
}

/// Spawn/reference positions of vehicles 1..4 behind the hand.
pub fn nominal_layout(
    config: &FormationConfig,
    hand: &Vector3<f64>,
    heading: &Vector3<f64>,
) -> Result<[Vector3<f64>; VEHICLE_COUNT]> {
    let frame = HeadingFrame::new(heading)?;
    let (u, n) = (frame.forward, frame.lateral);
    let v1 = hand - u * config.l1;
    let v2 = v1 - u * config.l2 + n * config.width;
    let v3 = v1 - u * config.l2 - n * config.width;
    let v4 = (v2 + v3) / 2.0 - u * config.l3;
    Ok([v1, v2, v3, v4])
}

/// One timestamped hand position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandSample {
    pub t: f64,
    pub position: Vector3<f64>,
}

/// Hand state as seen by the force law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandInput {
    pub t: f64,
    pub position: Vector3<f64>,
    /// Speed-capped velocity estimate (m/s).
    pub velocity: Vector3<f64>,
    /// Fewer than two samples were available for the estimate.
    pub cold: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityEstimate {
    pub velocity: Vector3<f64>,
    pub cold: bool,
}

/// Least-squares slope of position over the trailing `window` seconds.
///
/// `history` must be ordered by strictly increasing time; the window is
/// anchored at the newest sample.
pub fn estimate_hand_velocity(history: &[HandSample], window: f64) -> Result<VelocityEstimate> {
    if history.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(SimError::Input("hand sample timestamps must strictly increase".into()));
    }
    let Some(last) = history.last() else {
        return Ok(VelocityEstimate {
            velocity: Vector3::zeros(),
            cold: true,
        });
    };
    // Small slack so a sample exactly `window` old survives rounding of tick times.
    let cutoff = last.t - window - 1e-9;
    let recent: Vec<&HandSample> = history.iter().filter(|s| s.t >= cutoff).collect();
    if recent.len() < 2 {
        return Ok(VelocityEstimate {
            velocity: Vector3::zeros(),
            cold: true,
        });
    }

    let n = recent.len() as f64;
    let t_mean = recent.iter().map(|s| s.t).sum::<f64>() / n;
    let p_mean = recent.iter().map(|s| s.position).sum::<Vector3<f64>>() / n;
    let mut stt = 0.0;
    let mut stp = Vector3::zeros();
    for s in &recent {
        let dt = s.t - t_mean;
        stt += dt * dt;
        stp += (s.position - p_mean) * dt;
    }
    let velocity = stp / stt;
    if !all_finite(&velocity) {
        return Err(SimError::NonFinite("hand velocity estimate"));
    }
    Ok(VelocityEstimate {
        velocity,
        cold: false,
    })
}

/// Scales `velocity` down so its norm does not exceed `v_max`.
pub fn cap_speed(velocity: &Vector3<f64>, v_max: f64) -> Vector3<f64> {
    let speed = velocity.norm();
    if speed > v_max {
        velocity * (v_max / speed)
    } else {
        *velocity
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormationGoals {
    pub goals: [Vector3<f64>; VEHICLE_COUNT],
}

/// Goal positions for vehicles 1..4.
///
/// Every goal is built from the leader's actual position (the hand for
/// vehicle 1) minus the nominal offset, plus the clamped correction of the
/// incoming link. With a negative `K_v` the corrections point against the
/// hand's motion, so each stage of the cascade trails its leader by the
/// offset plus the correction magnitude.
pub fn compute_goals(
    hand: &Vector3<f64>,
    positions: &[Vector3<f64>; VEHICLE_COUNT],
    corrections: &[Vector3<f64>],
    frame: &HeadingFrame,
    config: &FormationConfig,
) -> Result<FormationGoals> {
    if corrections.len() != LINK_COUNT {
        return Err(SimError::Config(format!(
            "expected {LINK_COUNT} link corrections, got {}",
            corrections.len()
        )));
    }
    if !all_finite(hand) || !positions.iter().all(all_finite) {
        return Err(SimError::NonFinite("goal inputs"));
    }
    let (u, n) = (frame.forward, frame.lateral);
    let c = |link: Link| corrections[link.index()];
    let [p1, p2, p3, _] = *positions;

    let g1 = hand - u * config.l1 + c(Link::Hum1);
    let g2 = p1 - u * config.l2 + n * config.width + c(Link::L12);
    let g3 = p1 - u * config.l2 - n * config.width + c(Link::L13);
    let g4 = (p2 + p3) / 2.0 - u * config.l3 + (c(Link::L24) + c(Link::L34)) / 2.0;
    Ok(FormationGoals {
        goals: [g1, g2, g3, g4],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeClass {
    Contracted,
    Regular,
    Extended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateClass {
    Decreasing,
    Constant,
    Increasing,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 3] = [ShapeClass::Contracted, ShapeClass::Regular, ShapeClass::Extended];

    pub fn as_str(self) -> &'static str {
        match self {
            ShapeClass::Contracted => "contracted",
            ShapeClass::Regular => "regular",
            ShapeClass::Extended => "extended",
        }
    }

    pub fn classify(spread_ratio: f64, band: f64) -> Self {
        if spread_ratio < 1.0 - band {
            ShapeClass::Contracted
        } else if spread_ratio > 1.0 + band {
            ShapeClass::Extended
        } else {
            ShapeClass::Regular
        }
    }
}

impl RateClass {
    pub const ALL: [RateClass; 3] = [RateClass::Decreasing, RateClass::Constant, RateClass::Increasing];

    pub fn as_str(self) -> &'static str {
        match self {
            RateClass::Decreasing => "decreasing",
            RateClass::Constant => "constant",
            RateClass::Increasing => "increasing",
        }
    }

    pub fn classify(rate: f64, deadband: f64) -> Self {
        if rate > deadband {
            RateClass::Increasing
        } else if rate < -deadband {
            RateClass::Decreasing
        } else {
            RateClass::Constant
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormationMetrics {
    /// Link lengths in [`Link::ALL`] order (m).
    pub link_distances: [f64; LINK_COUNT],
    /// Mean drone-to-drone link length over its nominal mean.
    pub spread_ratio: f64,
    /// Exponentially smoothed `d(spread_ratio)/dt` (1/s).
    pub spread_rate: f64,
    pub shape: ShapeClass,
    pub rate: RateClass,
    /// Smallest distance between any two vehicles (m).
    pub min_separation: f64,
    /// Two vehicles coincide.
    pub degenerate: bool,
}

impl FormationMetrics {
    /// Metrics of the undisturbed nominal rhombus.
    pub fn nominal(config: &FormationConfig) -> Self {
        let link_distances = config.nominal_link_lengths();
        let layout = nominal_layout(config, &Vector3::zeros(), &config.heading)
            .unwrap_or([Vector3::zeros(); VEHICLE_COUNT]);
        let min_separation = min_pair_distance(&layout);
        Self {
            link_distances,
            spread_ratio: 1.0,
            spread_rate: 0.0,
            shape: ShapeClass::Regular,
            rate: RateClass::Constant,
            min_separation,
            degenerate: min_separation < COINCIDENT_M,
        }
    }
}

fn min_pair_distance(positions: &[Vector3<f64>; VEHICLE_COUNT]) -> f64 {
    let mut min = f64::INFINITY;
    for i in 0..VEHICLE_COUNT {
        for j in i + 1..VEHICLE_COUNT {
            min = min.min((positions[i] - positions[j]).norm());
        }
    }
    min
}

/// Link distances, spread ratio and its smoothed rate, and the
/// shape/rate classification.
///
/// The hand link is reported but excluded from the spread ratio. With no
/// `previous` metrics the rate starts at zero.
pub fn formation_metrics(
    hand: &Vector3<f64>,
    positions: &[Vector3<f64>; VEHICLE_COUNT],
    config: &FormationConfig,
    previous: Option<&FormationMetrics>,
    dt: f64,
) -> Result<FormationMetrics> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SimError::param("dt", format!("must be finite and > 0, got {dt}")));
    }
    let [p1, p2, p3, p4] = positions;
    let link_distances = [
        (hand - p1).norm(),
        (p1 - p2).norm(),
        (p1 - p3).norm(),
        (p2 - p4).norm(),
        (p3 - p4).norm(),
    ];
    let nominal = config.nominal_link_lengths();
    let actual_sum: f64 = link_distances[1..].iter().sum();
    let nominal_sum: f64 = nominal[1..].iter().sum();
    let spread_ratio = actual_sum / nominal_sum;
    if !spread_ratio.is_finite() {
        return Err(SimError::NonFinite("spread ratio"));
    }

    let th = &config.thresholds;
    let spread_rate = match previous {
        Some(prev) => {
            let raw = (spread_ratio - prev.spread_ratio) / dt;
            let alpha = 1.0 - (-dt / th.rate_time_constant).exp();
            prev.spread_rate + alpha * (raw - prev.spread_rate)
        }
        None => 0.0,
    };
    let min_separation = min_pair_distance(positions);

    Ok(FormationMetrics {
        link_distances,
        spread_ratio,
        spread_rate,
        shape: ShapeClass::classify(spread_ratio, th.shape_band),
        rate: RateClass::classify(spread_rate, th.rate_deadband),
        min_separation,
        degenerate: min_separation < COINCIDENT_M,
    })
}
