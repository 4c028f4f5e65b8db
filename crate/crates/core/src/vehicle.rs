//! Point-mass vehicles with PID goal tracking, and the fixed-step world.

use std::collections::VecDeque;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::formation::{
    cap_speed, compute_goals, estimate_hand_velocity, formation_metrics, nominal_layout, FormationConfig,
    FormationGoals, FormationMetrics, HandInput, HandSample, HeadingFrame, HeadingMode, LINK_COUNT,
    VEHICLE_COUNT,
};
use crate::impedance::{
    all_finite, build_discrete_model, hand_force, step_link, DiscreteModel, ImpedanceLinkState,
    ImpedanceParams,
};

/// Default control period: 80 Hz.
pub const DEFAULT_SAMPLE_PERIOD: f64 = 1.0 / 80.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    /// 1/s²
    pub kp: f64,
    /// 1/s³
    pub ki: f64,
    /// 1/s
    pub kd: f64,
    /// Bound on the commanded acceleration norm (m/s²).
    pub a_max: f64,
    /// Per-axis bound on the error integral (m·s).
    pub integrator_limit: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: 8.0,
            ki: 0.4,
            kd: 5.0,
            a_max: 6.0,
            integrator_limit: 0.25,
        }
    }
}

impl PidGains {
    pub fn validate(&self) -> Result<()> {
        if !(self.kp.is_finite() && self.kp > 0.0) {
            return Err(SimError::param("kp", "must be finite and > 0"));
        }
        if !(self.ki.is_finite() && self.ki >= 0.0) {
            return Err(SimError::param("ki", "must be finite and >= 0"));
        }
        if !(self.kd.is_finite() && self.kd >= 0.0) {
            return Err(SimError::param("kd", "must be finite and >= 0"));
        }
        if !(self.a_max.is_finite() && self.a_max > 0.0) {
            return Err(SimError::param("a_max", "must be finite and > 0"));
        }
        if !(self.integrator_limit.is_finite() && self.integrator_limit >= 0.0) {
            return Err(SimError::param("integrator_limit", "must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub integral: Vector3<f64>,
    pub previous_error: Vector3<f64>,
}

impl VehicleState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            ..Default::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.position)
            && all_finite(&self.velocity)
            && all_finite(&self.integral)
            && all_finite(&self.previous_error)
    }
}

/// One PID update toward `goal`. Returns the acceleration command and the
/// state with refreshed integral and previous error; position and velocity
/// are left untouched.
pub fn pid_step(
    gains: &PidGains,
    state: &VehicleState,
    goal: &Vector3<f64>,
    dt: f64,
) -> Result<(Vector3<f64>, VehicleState)> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SimError::param("dt", format!("must be finite and > 0, got {dt}")));
    }
    if !all_finite(goal) || !state.is_finite() {
        return Err(SimError::NonFinite("pid input"));
    }
    let error = goal - state.position;
    let limit = gains.integrator_limit;
    let integral = (state.integral + error * dt).map(|i| i.clamp(-limit, limit));
    let derivative = (error - state.previous_error) / dt;

    let mut accel = error * gains.kp + integral * gains.ki + derivative * gains.kd;
    let norm = accel.norm();
    if norm > gains.a_max {
        accel *= gains.a_max / norm;
    }
    let next = VehicleState {
        integral,
        previous_error: error,
        ..*state
    };
    Ok((accel, next))
}

/// Semi-implicit Euler: velocity first, then position with the new velocity.
pub fn vehicle_step(state: &VehicleState, accel: &Vector3<f64>, dt: f64) -> Result<VehicleState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SimError::param("dt", format!("must be finite and > 0, got {dt}")));
    }
    if !all_finite(accel) {
        return Err(SimError::NonFinite("acceleration"));
    }
    let velocity = state.velocity + accel * dt;
    let position = state.position + velocity * dt;
    Ok(VehicleState {
        position,
        velocity,
        ..*state
    })
}

/// Everything needed to advance the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldConfig {
    pub impedance: ImpedanceParams,
    pub sample_period: f64,
    pub formation: FormationConfig,
    pub pid: PidGains,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            impedance: ImpedanceParams::default(),
            sample_period: DEFAULT_SAMPLE_PERIOD,
            formation: FormationConfig::default(),
            pid: PidGains::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub tick: u64,
    pub hand: HandInput,
    history: VecDeque<HandSample>,
    pub heading: Vector3<f64>,
    pub vehicles: [VehicleState; VEHICLE_COUNT],
    pub links: [ImpedanceLinkState; LINK_COUNT],
    pub goals: FormationGoals,
    pub metrics: FormationMetrics,
    sample_period: f64,
}

impl WorldState {
    /// Simulation time, always `tick · T`.
    pub fn time(&self) -> f64 {
        self.tick as f64 * self.sample_period
    }

    pub fn positions(&self) -> [Vector3<f64>; VEHICLE_COUNT] {
        self.vehicles.map(|v| v.position)
    }

    pub fn corrections(&self) -> [Vector3<f64>; LINK_COUNT] {
        self.links.map(|l| l.correction)
    }

    pub fn hand_history(&self) -> impl Iterator<Item = &HandSample> {
        self.history.iter()
    }
}

/// Fixed-step world integrator. Holds the validated configuration and the
/// discretized impedance model.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulator {
    config: WorldConfig,
    model: DiscreteModel,
}

impl Simulator {
    pub fn new(config: WorldConfig) -> Result<Self> {
        config.formation.validate()?;
        config.pid.validate()?;
        let model = build_discrete_model(config.impedance, config.sample_period)?;
        Ok(Self { config, model })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn model(&self) -> &DiscreteModel {
        &self.model
    }

    /// World at tick 0: vehicles at rest on the nominal layout behind `hand`,
    /// links relaxed.
    pub fn spawn(&self, hand: Vector3<f64>) -> Result<WorldState> {
        if !all_finite(&hand) {
            return Err(SimError::NonFinite("spawn hand position"));
        }
        let cfg = &self.config.formation;
        let layout = nominal_layout(cfg, &hand, &cfg.heading)?;
        let mut history = VecDeque::new();
        history.push_back(HandSample {
            t: 0.0,
            position: hand,
        });
        Ok(WorldState {
            tick: 0,
            hand: HandInput {
                t: 0.0,
                position: hand,
                velocity: Vector3::zeros(),
                cold: true,
            },
            history,
            heading: HeadingFrame::new(&cfg.heading)?.forward,
            vehicles: layout.map(VehicleState::at_rest),
            links: [ImpedanceLinkState::default(); LINK_COUNT],
            goals: FormationGoals { goals: layout },
            metrics: FormationMetrics::nominal(cfg),
            sample_period: self.config.sample_period,
        })
    }

    /// Advances one tick using the hand position `hand_position`, observed at
    /// the end of the tick.
    ///
    /// Order: ingest hand sample, estimate velocity, force, step and clamp
    /// the five links, goals, PID, vehicle integration, metrics. On error the
    /// input world is untouched.
    pub fn tick(&self, world: &WorldState, hand_position: Vector3<f64>) -> Result<WorldState> {
        let cfg = &self.config.formation;
        let dt = self.config.sample_period;
        if !all_finite(&hand_position) {
            return Err(SimError::NonFinite("hand sample"));
        }
        let tick = world.tick + 1;
        let t = tick as f64 * dt;

        let mut history = world.history.clone();
        history.push_back(HandSample {
            t,
            position: hand_position,
        });
        while history.len() > 2 && history.front().is_some_and(|s| s.t < t - cfg.velocity_window - 1e-9) {
            history.pop_front();
        }
        let estimate = estimate_hand_velocity(history.make_contiguous(), cfg.velocity_window)?;
        let velocity = cap_speed(&estimate.velocity, cfg.v_max);
        let hand = HandInput {
            t,
            position: hand_position,
            velocity,
            cold: estimate.cold,
        };

        let heading = match cfg.heading_mode {
            HeadingMode::Fixed => world.heading,
            HeadingMode::FromVelocity { min_speed } => {
                let horizontal = Vector3::new(velocity.x, velocity.y, 0.0);
                if horizontal.norm() >= min_speed {
                    horizontal.normalize()
                } else {
                    world.heading
                }
            }
        };
        let frame = HeadingFrame::new(&heading)?;

        let force = hand_force(cfg.k_v, &velocity)?;
        let mut links = world.links;
        for link in links.iter_mut() {
            *link = step_link(&self.model, link, &force, cfg.limit)?;
        }

        let positions = world.positions();
        let corrections = links.map(|l| l.correction);
        let goals = compute_goals(&hand_position, &positions, &corrections, &frame, cfg)?;

        let mut vehicles = world.vehicles;
        for (vehicle, goal) in vehicles.iter_mut().zip(&goals.goals) {
            let (accel, tracked) = pid_step(&self.config.pid, vehicle, goal, dt)?;
            *vehicle = vehicle_step(&tracked, &accel, dt)?;
        }

        let metrics = formation_metrics(
            &hand_position,
            &vehicles.map(|v| v.position),
            cfg,
            Some(&world.metrics),
            dt,
        )?;

        Ok(WorldState {
            tick,
            hand,
            history,
            heading: frame.forward,
            vehicles,
            links,
            goals,
            metrics,
            sample_period: dt,
        })
    }
}
