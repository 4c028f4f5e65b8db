//! Headless scenarios: TOML scenario documents, the deterministic run loop
//! and log export.
//!
//! Every key is optional; omitted keys take the default link parameters
//! (M = 1.9 kg, D = 12.6 N·s/m, K = 21 N/m, K_v = -7 N·s/m, 0.25 m limit,
//! 0.5 m offsets, 80 Hz). Units are part of the key names. See
//! `docs/scenario-format.md` for the full key list.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::Spanned;

use crate::error::SimError;
use crate::formation::{
    FormationConfig, HeadingFrame, HeadingMode, Link, MetricThresholds, RateClass, ShapeClass, LINK_COUNT,
    VEHICLE_COUNT,
};
use crate::impedance::ImpedanceParams;
use crate::tactile::{select_pattern, PatternId, TactileScheduler};
use crate::vehicle::{PidGains, Simulator, WorldConfig, WorldState, DEFAULT_SAMPLE_PERIOD};

pub const DEFAULT_DURATION_S: f64 = 10.0;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("{}", fmt_located("malformed scenario", .line, .message))]
    Malformed { line: Option<usize>, message: String },
    #[error("{}", fmt_located(&format!("invalid `{}`", .field), .line, .message))]
    Invalid {
        field: String,
        line: Option<usize>,
        message: String,
    },
}

fn fmt_located(what: &str, line: &Option<usize>, message: &str) -> String {
    match line {
        Some(l) => format!("{what} (line {l}): {message}"),
        None => format!("{what}: {message}"),
    }
}

impl ScenarioError {
    pub fn field(&self) -> Option<&str> {
        match self {
            ScenarioError::Invalid { field, .. } => Some(field),
            ScenarioError::Malformed { .. } => None,
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            ScenarioError::Invalid { line, .. } | ScenarioError::Malformed { line, .. } => *line,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    /// Stay at the previous point, jump on arrival.
    Hold,
    Linear,
    /// `3u² - 2u³` easing; zero velocity at both ends.
    Smoothstep,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub t: f64,
    pub position: Vector3<f64>,
    /// Interpolation used on the segment arriving at this waypoint.
    pub interp: Interpolation,
}

/// Scripted hand path: starts at `start` at t = 0 and passes through the
/// waypoints; holds the last point afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct HandTrajectory {
    pub start: Vector3<f64>,
    pub waypoints: Vec<Waypoint>,
}

impl HandTrajectory {
    pub fn stationary(at: Vector3<f64>) -> Self {
        Self {
            start: at,
            waypoints: Vec::new(),
        }
    }

    pub fn last_time(&self) -> f64 {
        self.waypoints.last().map_or(0.0, |w| w.t)
    }

    pub fn position_at(&self, t: f64) -> Vector3<f64> {
        let mut prev_t = 0.0;
        let mut prev_p = self.start;
        for w in &self.waypoints {
            if t < w.t {
                let u = (t - prev_t) / (w.t - prev_t);
                let s = match w.interp {
                    Interpolation::Hold => 0.0,
                    Interpolation::Linear => u,
                    Interpolation::Smoothstep => u * u * (3.0 - 2.0 * u),
                };
                return prev_p + (w.position - prev_p) * s.clamp(0.0, 1.0);
            }
            prev_t = w.t;
            prev_p = w.position;
        }
        prev_p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Structured,
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "structured" | "json" => Ok(ExportFormat::Structured),
            other => Err(format!("unsupported format `{other}` (expected csv or structured)")),
        }
    }
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Structured => "structured",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputSelection {
    pub format: Option<ExportFormat>,
    pub path: Option<String>,
}

/// Fully resolved scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub world: WorldConfig,
    pub duration: f64,
    pub hand: HandTrajectory,
    pub output: OutputSelection,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            duration: DEFAULT_DURATION_S,
            hand: HandTrajectory::stationary(Vector3::zeros()),
            output: OutputSelection::default(),
        }
    }
}

impl ScenarioConfig {
    /// Number of ticks after the initial state.
    pub fn tick_count(&self) -> u64 {
        (self.duration / self.world.sample_period + 1e-9).floor() as u64
    }

    /// Replaces the duration, re-checking it against the trajectory.
    pub fn with_duration(mut self, duration: f64) -> Result<Self, ScenarioError> {
        check_duration(duration, &self.hand, self.world.sample_period, None)?;
        self.duration = duration;
        Ok(self)
    }

    /// Fully spelled-out scenario document; loading it gives back `self`.
    pub fn to_toml(&self) -> String {
        let w = &self.world;
        let f = &w.formation;
        let p = &w.pid;
        let mut s = String::new();
        let _ = writeln!(s, "duration_s = {:?}", self.duration);
        let _ = writeln!(s, "sample_period_s = {:?}", w.sample_period);
        let _ = writeln!(s, "\n[impedance]");
        let _ = writeln!(s, "mass_kg = {:?}", w.impedance.mass());
        let _ = writeln!(s, "damping_ns_per_m = {:?}", w.impedance.damping());
        let _ = writeln!(s, "stiffness_n_per_m = {:?}", w.impedance.stiffness());
        let _ = writeln!(s, "\n[formation]");
        let _ = writeln!(s, "k_v_ns_per_m = {:?}", f.k_v);
        let _ = writeln!(s, "limit_m = {:?}", f.limit);
        let _ = writeln!(s, "l1_m = {:?}", f.l1);
        let _ = writeln!(s, "l2_m = {:?}", f.l2);
        let _ = writeln!(s, "l3_m = {:?}", f.l3);
        let _ = writeln!(s, "width_m = {:?}", f.width);
        let _ = writeln!(s, "v_max_m_per_s = {:?}", f.v_max);
        let _ = writeln!(s, "velocity_window_s = {:?}", f.velocity_window);
        let _ = writeln!(s, "heading = {}", vec_toml(&f.heading));
        match f.heading_mode {
            HeadingMode::Fixed => {
                let _ = writeln!(s, "heading_mode = \"fixed\"");
            }
            HeadingMode::FromVelocity { min_speed } => {
                let _ = writeln!(s, "heading_mode = \"velocity\"");
                let _ = writeln!(s, "heading_min_speed_m_per_s = {min_speed:?}");
            }
        }
        let _ = writeln!(s, "shape_band = {:?}", f.thresholds.shape_band);
        let _ = writeln!(s, "rate_deadband_per_s = {:?}", f.thresholds.rate_deadband);
        let _ = writeln!(s, "rate_time_constant_s = {:?}", f.thresholds.rate_time_constant);
        let _ = writeln!(s, "\n[pid]");
        let _ = writeln!(s, "kp_per_s2 = {:?}", p.kp);
        let _ = writeln!(s, "ki_per_s3 = {:?}", p.ki);
        let _ = writeln!(s, "kd_per_s = {:?}", p.kd);
        let _ = writeln!(s, "a_max_m_per_s2 = {:?}", p.a_max);
        let _ = writeln!(s, "integrator_limit_m_s = {:?}", p.integrator_limit);
        let _ = writeln!(s, "\n[hand]");
        let _ = writeln!(s, "start_m = {}", vec_toml(&self.hand.start));
        for wp in &self.hand.waypoints {
            let interp = match wp.interp {
                Interpolation::Hold => "hold",
                Interpolation::Linear => "linear",
                Interpolation::Smoothstep => "smoothstep",
            };
            let _ = writeln!(s, "\n[[hand.waypoints]]");
            let _ = writeln!(s, "t_s = {:?}", wp.t);
            let _ = writeln!(s, "position_m = {}", vec_toml(&wp.position));
            let _ = writeln!(s, "interp = \"{interp}\"");
        }
        if self.output.format.is_some() || self.output.path.is_some() {
            let _ = writeln!(s, "\n[output]");
            if let Some(fmt) = self.output.format {
                let _ = writeln!(s, "format = \"{fmt}\"");
            }
            if let Some(path) = &self.output.path {
                let _ = writeln!(s, "path = {}", toml::Value::String(path.clone()));
            }
        }
        s
    }
}

fn vec_toml(v: &Vector3<f64>) -> String {
    format!("[{:?}, {:?}, {:?}]", v.x, v.y, v.z)
}

// Raw document shape. Scalars keep their spans so diagnostics can name a line.

type Sf = Option<Spanned<f64>>;

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    duration_s: Sf,
    sample_period_s: Sf,
    #[serde(default)]
    impedance: RawImpedance,
    #[serde(default)]
    formation: RawFormation,
    #[serde(default)]
    pid: RawPid,
    #[serde(default)]
    hand: RawHand,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawImpedance {
    mass_kg: Sf,
    damping_ns_per_m: Sf,
    stiffness_n_per_m: Sf,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawFormation {
    k_v_ns_per_m: Sf,
    limit_m: Sf,
    l1_m: Sf,
    l2_m: Sf,
    l3_m: Sf,
    width_m: Sf,
    v_max_m_per_s: Sf,
    velocity_window_s: Sf,
    heading: Option<Spanned<[f64; 3]>>,
    heading_mode: Option<Spanned<String>>,
    heading_min_speed_m_per_s: Sf,
    shape_band: Sf,
    rate_deadband_per_s: Sf,
    rate_time_constant_s: Sf,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawPid {
    kp_per_s2: Sf,
    ki_per_s3: Sf,
    kd_per_s: Sf,
    a_max_m_per_s2: Sf,
    integrator_limit_m_s: Sf,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawHand {
    start_m: Option<Spanned<[f64; 3]>>,
    #[serde(default)]
    waypoints: Vec<Spanned<RawWaypoint>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWaypoint {
    t_s: Spanned<f64>,
    position_m: Spanned<[f64; 3]>,
    #[serde(default = "default_interp")]
    interp: Interpolation,
}

fn default_interp() -> Interpolation {
    Interpolation::Linear
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    format: Option<Spanned<String>>,
    path: Option<String>,
}

struct LineIndex<'a>(&'a str);

impl LineIndex<'_> {
    fn line(&self, offset: usize) -> usize {
        let end = offset.min(self.0.len());
        self.0.as_bytes()[..end].iter().filter(|&&b| b == b'\n').count() + 1
    }
}

/// Reads one scalar with a default and a validity predicate.
fn scalar(
    lines: &LineIndex,
    field: &str,
    raw: &Sf,
    default: f64,
    valid: impl Fn(f64) -> bool,
    requirement: &str,
) -> Result<f64, ScenarioError> {
    match raw {
        None => Ok(default),
        Some(s) => {
            let v = *s.get_ref();
            if v.is_finite() && valid(v) {
                Ok(v)
            } else {
                Err(ScenarioError::Invalid {
                    field: field.to_string(),
                    line: Some(lines.line(s.span().start)),
                    message: format!("{requirement}, got {v}"),
                })
            }
        }
    }
}

fn vector(lines: &LineIndex, field: &str, raw: &Option<Spanned<[f64; 3]>>, default: Vector3<f64>) -> Result<Vector3<f64>, ScenarioError> {
    match raw {
        None => Ok(default),
        Some(s) => {
            let [x, y, z] = *s.get_ref();
            if [x, y, z].iter().all(|c| c.is_finite()) {
                Ok(Vector3::new(x, y, z))
            } else {
                Err(ScenarioError::Invalid {
                    field: field.to_string(),
                    line: Some(lines.line(s.span().start)),
                    message: "components must be finite".into(),
                })
            }
        }
    }
}

fn check_duration(
    duration: f64,
    hand: &HandTrajectory,
    period: f64,
    line: Option<usize>,
) -> Result<(), ScenarioError> {
    let invalid = |message: String| ScenarioError::Invalid {
        field: "duration_s".into(),
        line,
        message,
    };
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(invalid(format!("must be finite and >= 0, got {duration}")));
    }
    if duration < hand.last_time() {
        return Err(invalid(format!(
            "{duration} s is shorter than the last waypoint at {} s",
            hand.last_time()
        )));
    }
    if duration / period > 1e8 {
        return Err(invalid("more than 1e8 ticks".into()));
    }
    Ok(())
}

/// Parses and validates a scenario document.
pub fn load_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let lines = LineIndex(text);
    let raw: RawScenario = toml::from_str(text).map_err(|e| ScenarioError::Malformed {
        line: e.span().map(|s| lines.line(s.start)),
        message: e.message().to_string(),
    })?;

    let pos = |v: f64| v > 0.0;
    let non_neg = |v: f64| v >= 0.0;
    let any = |_: f64| true;
    const POS: &str = "must be finite and > 0";
    const NON_NEG: &str = "must be finite and >= 0";

    let period = scalar(&lines, "sample_period_s", &raw.sample_period_s, DEFAULT_SAMPLE_PERIOD, pos, POS)?;

    let d = ImpedanceParams::default();
    let ri = &raw.impedance;
    let mass = scalar(&lines, "impedance.mass_kg", &ri.mass_kg, d.mass(), pos, POS)?;
    let damping = scalar(&lines, "impedance.damping_ns_per_m", &ri.damping_ns_per_m, d.damping(), non_neg, NON_NEG)?;
    let stiffness = scalar(&lines, "impedance.stiffness_n_per_m", &ri.stiffness_n_per_m, d.stiffness(), pos, POS)?;
    let impedance = ImpedanceParams::new(mass, damping, stiffness).map_err(|e| ScenarioError::Invalid {
        field: "impedance".into(),
        line: None,
        message: e.to_string(),
    })?;

    let df = FormationConfig::default();
    let rf = &raw.formation;
    let heading = vector(&lines, "formation.heading", &rf.heading, df.heading)?;
    if let Err(e) = HeadingFrame::new(&heading) {
        return Err(ScenarioError::Invalid {
            field: "formation.heading".into(),
            line: rf.heading.as_ref().map(|s| lines.line(s.span().start)),
            message: e.to_string(),
        });
    }
    let min_speed = scalar(&lines, "formation.heading_min_speed_m_per_s", &rf.heading_min_speed_m_per_s, 0.2, pos, POS)?;
    let heading_mode = match &rf.heading_mode {
        None => HeadingMode::Fixed,
        Some(s) => match s.get_ref().as_str() {
            "fixed" => HeadingMode::Fixed,
            "velocity" => HeadingMode::FromVelocity { min_speed },
            other => {
                return Err(ScenarioError::Invalid {
                    field: "formation.heading_mode".into(),
                    line: Some(lines.line(s.span().start)),
                    message: format!("expected \"fixed\" or \"velocity\", got \"{other}\""),
                })
            }
        },
    };
    let dt = df.thresholds;
    let formation = FormationConfig {
        k_v: scalar(&lines, "formation.k_v_ns_per_m", &rf.k_v_ns_per_m, df.k_v, any, "must be finite")?,
        limit: scalar(&lines, "formation.limit_m", &rf.limit_m, df.limit, pos, POS)?,
        l1: scalar(&lines, "formation.l1_m", &rf.l1_m, df.l1, pos, POS)?,
        l2: scalar(&lines, "formation.l2_m", &rf.l2_m, df.l2, pos, POS)?,
        l3: scalar(&lines, "formation.l3_m", &rf.l3_m, df.l3, pos, POS)?,
        width: scalar(&lines, "formation.width_m", &rf.width_m, df.width, non_neg, NON_NEG)?,
        v_max: scalar(&lines, "formation.v_max_m_per_s", &rf.v_max_m_per_s, df.v_max, pos, POS)?,
        velocity_window: scalar(&lines, "formation.velocity_window_s", &rf.velocity_window_s, df.velocity_window, non_neg, NON_NEG)?,
        heading,
        heading_mode,
        thresholds: MetricThresholds {
            shape_band: scalar(&lines, "formation.shape_band", &rf.shape_band, dt.shape_band, pos, POS)?,
            rate_deadband: scalar(&lines, "formation.rate_deadband_per_s", &rf.rate_deadband_per_s, dt.rate_deadband, non_neg, NON_NEG)?,
            rate_time_constant: scalar(&lines, "formation.rate_time_constant_s", &rf.rate_time_constant_s, dt.rate_time_constant, pos, POS)?,
        },
    };

    let dp = PidGains::default();
    let rp = &raw.pid;
    let pid = PidGains {
        kp: scalar(&lines, "pid.kp_per_s2", &rp.kp_per_s2, dp.kp, pos, POS)?,
        ki: scalar(&lines, "pid.ki_per_s3", &rp.ki_per_s3, dp.ki, non_neg, NON_NEG)?,
        kd: scalar(&lines, "pid.kd_per_s", &rp.kd_per_s, dp.kd, non_neg, NON_NEG)?,
        a_max: scalar(&lines, "pid.a_max_m_per_s2", &rp.a_max_m_per_s2, dp.a_max, pos, POS)?,
        integrator_limit: scalar(&lines, "pid.integrator_limit_m_s", &rp.integrator_limit_m_s, dp.integrator_limit, non_neg, NON_NEG)?,
    };

    let start = vector(&lines, "hand.start_m", &raw.hand.start_m, Vector3::zeros())?;
    let mut waypoints = Vec::with_capacity(raw.hand.waypoints.len());
    let mut prev_t = 0.0;
    for (i, sw) in raw.hand.waypoints.iter().enumerate() {
        let w = sw.get_ref();
        let t = *w.t_s.get_ref();
        let field = format!("hand.waypoints[{i}].t_s");
        if !(t.is_finite() && t > prev_t) {
            let message = if i == 0 {
                format!("must be > 0, got {t}")
            } else {
                format!("must be greater than the previous waypoint time {prev_t}, got {t}")
            };
            return Err(ScenarioError::Invalid {
                field,
                line: Some(lines.line(w.t_s.span().start)),
                message,
            });
        }
        let position = vector(
            &lines,
            &format!("hand.waypoints[{i}].position_m"),
            &Some(w.position_m.clone()),
            Vector3::zeros(),
        )?;
        waypoints.push(Waypoint {
            t,
            position,
            interp: w.interp,
        });
        prev_t = t;
    }
    let hand = HandTrajectory { start, waypoints };

    let duration = match &raw.duration_s {
        Some(s) => {
            check_duration(*s.get_ref(), &hand, period, Some(lines.line(s.span().start)))?;
            *s.get_ref()
        }
        None => {
            // Default long enough to cover the trajectory plus settling.
            let d = DEFAULT_DURATION_S.max(hand.last_time() + 5.0);
            check_duration(d, &hand, period, None)?;
            d
        }
    };

    let output = OutputSelection {
        format: match &raw.output.format {
            None => None,
            Some(s) => Some(s.get_ref().parse().map_err(|message| ScenarioError::Invalid {
                field: "output.format".into(),
                line: Some(lines.line(s.span().start)),
                message,
            })?),
        },
        path: raw.output.path.clone(),
    };

    let world = WorldConfig {
        impedance,
        sample_period: period,
        formation,
        pid,
    };
    // Cross-field checks the per-field pass cannot see.
    Simulator::new(world).map_err(|e| ScenarioError::Invalid {
        field: match &e {
            SimError::Parameter { name, .. } => (*name).to_string(),
            _ => "scenario".into(),
        },
        line: None,
        message: e.to_string(),
    })?;

    Ok(ScenarioConfig {
        world,
        duration,
        hand,
        output,
    })
}

type Triple = [f64; 3];

/// One logged tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub tick: u64,
    pub time_s: f64,
    pub hand_position: Triple,
    pub hand_velocity: Triple,
    /// Unit heading used for the layout this tick.
    pub heading: Triple,
    /// Raw link displacement Δx per link, in [`Link::ALL`] order.
    pub link_displacement: [Triple; LINK_COUNT],
    /// Clamped correction per link.
    pub link_correction: [Triple; LINK_COUNT],
    pub goals: [Triple; VEHICLE_COUNT],
    pub positions: [Triple; VEHICLE_COUNT],
    pub spread_ratio: f64,
    pub spread_rate: f64,
    pub shape: ShapeClass,
    pub rate: RateClass,
    pub pattern: PatternId,
}

fn triple(v: &Vector3<f64>) -> Triple {
    [v.x, v.y, v.z]
}

impl LogRow {
    pub fn capture(world: &WorldState, pattern: PatternId) -> Self {
        Self {
            tick: world.tick,
            time_s: world.time(),
            hand_position: triple(&world.hand.position),
            hand_velocity: triple(&world.hand.velocity),
            heading: triple(&world.heading),
            link_displacement: world.links.map(|l| triple(&l.displacement)),
            link_correction: world.links.map(|l| triple(&l.correction)),
            goals: world.goals.goals.map(|g| triple(&g)),
            positions: world.vehicles.map(|v| triple(&v.position)),
            spread_ratio: world.metrics.spread_ratio,
            spread_rate: world.metrics.spread_rate,
            shape: world.metrics.shape,
            rate: world.metrics.rate,
            pattern,
        }
    }

    /// Every numeric field is finite.
    pub fn is_finite(&self) -> bool {
        let triples = [self.hand_position, self.hand_velocity, self.heading]
            .into_iter()
            .chain(self.link_displacement)
            .chain(self.link_correction)
            .chain(self.goals)
            .chain(self.positions);
        let mut ok = self.time_s.is_finite() && self.spread_ratio.is_finite() && self.spread_rate.is_finite();
        for t in triples {
            ok &= t.iter().all(|x| x.is_finite());
        }
        ok
    }

    fn csv_fields(&self) -> Vec<String> {
        let mut out = vec![self.tick.to_string(), self.time_s.to_string()];
        let mut push = |t: &Triple| out.extend(t.iter().map(|x| x.to_string()));
        push(&self.hand_position);
        push(&self.hand_velocity);
        push(&self.heading);
        for i in 0..LINK_COUNT {
            push(&self.link_displacement[i]);
            push(&self.link_correction[i]);
        }
        for i in 0..VEHICLE_COUNT {
            push(&self.goals[i]);
            push(&self.positions[i]);
        }
        out.push(self.spread_ratio.to_string());
        out.push(self.spread_rate.to_string());
        out.push(self.shape.as_str().to_string());
        out.push(self.rate.as_str().to_string());
        out.push(self.pattern.as_str().to_string());
        out
    }
}

/// CSV column names, in order.
pub fn csv_columns() -> Vec<String> {
    let axes = ["x", "y", "z"];
    let mut cols = vec!["tick".to_string(), "time_s".to_string()];
    cols.extend(axes.iter().map(|a| format!("hand_{a}")));
    cols.extend(axes.iter().map(|a| format!("hand_v{a}")));
    cols.extend(axes.iter().map(|a| format!("heading_{a}")));
    for link in Link::ALL {
        cols.extend(axes.iter().map(|a| format!("dx_{}_{a}", link.name())));
        cols.extend(axes.iter().map(|a| format!("imp_{}_{a}", link.name())));
    }
    for i in 1..=VEHICLE_COUNT {
        cols.extend(axes.iter().map(|a| format!("goal{i}_{a}")));
        cols.extend(axes.iter().map(|a| format!("pos{i}_{a}")));
    }
    cols.extend(["spread_ratio", "spread_rate", "shape", "rate", "pattern"].map(String::from));
    cols
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogTable {
    pub sample_period_s: f64,
    pub rows: Vec<LogRow>,
}

impl LogTable {
    pub fn to_csv(&self) -> String {
        let mut s = csv_columns().join(",");
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.csv_fields().join(","));
            s.push('\n');
        }
        s
    }

    /// Parses the output of [`LogTable::to_csv`].
    pub fn from_csv(text: &str, sample_period_s: f64) -> Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty csv")?;
        if header != csv_columns().join(",") {
            return Err("unexpected csv header".into());
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            let bad = |what: &str| format!("row {}: {what}", n + 1);
            if cells.len() != csv_columns().len() {
                return Err(bad("wrong column count"));
            }
            let num = |i: usize| cells[i].parse::<f64>().map_err(|_| bad("bad number"));
            let tri = |i: usize| -> Result<Triple, String> { Ok([num(i)?, num(i + 1)?, num(i + 2)?]) };
            let mut link_displacement = [[0.0; 3]; LINK_COUNT];
            let mut link_correction = [[0.0; 3]; LINK_COUNT];
            for k in 0..LINK_COUNT {
                link_displacement[k] = tri(11 + 6 * k)?;
                link_correction[k] = tri(14 + 6 * k)?;
            }
            let base = 11 + 6 * LINK_COUNT;
            let mut goals = [[0.0; 3]; VEHICLE_COUNT];
            let mut positions = [[0.0; 3]; VEHICLE_COUNT];
            for k in 0..VEHICLE_COUNT {
                goals[k] = tri(base + 6 * k)?;
                positions[k] = tri(base + 3 + 6 * k)?;
            }
            let tail = base + 6 * VEHICLE_COUNT;
            let shape = ShapeClass::ALL
                .into_iter()
                .find(|c| c.as_str() == cells[tail + 2])
                .ok_or_else(|| bad("bad shape"))?;
            let rate = RateClass::ALL
                .into_iter()
                .find(|c| c.as_str() == cells[tail + 3])
                .ok_or_else(|| bad("bad rate"))?;
            rows.push(LogRow {
                tick: cells[0].parse().map_err(|_| bad("bad tick"))?,
                time_s: num(1)?,
                hand_position: tri(2)?,
                hand_velocity: tri(5)?,
                heading: tri(8)?,
                link_displacement,
                link_correction,
                goals,
                positions,
                spread_ratio: num(tail)?,
                spread_rate: num(tail + 1)?,
                shape,
                rate,
                pattern: PatternId::parse(cells[tail + 4]).ok_or_else(|| bad("bad pattern"))?,
            });
        }
        Ok(Self { sample_period_s, rows })
    }

    pub fn to_structured(&self) -> String {
        serde_json::to_string(self).expect("log rows hold only finite numbers")
    }

    pub fn from_structured(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Serializes a log in the requested format.
pub fn export_log(log: &LogTable, format: ExportFormat) -> Vec<u8> {
    match format {
        ExportFormat::Csv => log.to_csv().into_bytes(),
        ExportFormat::Structured => log.to_structured().into_bytes(),
    }
}

/// A tick failed; the log holds every row completed before it.
#[derive(Error, Debug, Clone, PartialEq)]
#[error("tick {tick} failed: {source}")]
pub struct RunError {
    pub tick: u64,
    pub source: SimError,
    pub partial: LogTable,
}

/// Runs a scenario from spawn to its duration.
pub fn run_scenario(config: &ScenarioConfig) -> Result<LogTable, RunError> {
    let period = config.world.sample_period;
    let fail = |tick: u64, source: SimError, rows: Vec<LogRow>| RunError {
        tick,
        source,
        partial: LogTable {
            sample_period_s: period,
            rows,
        },
    };
    let sim = Simulator::new(config.world).map_err(|e| fail(0, e, Vec::new()))?;
    let mut world = sim.spawn(config.hand.position_at(0.0)).map_err(|e| fail(0, e, Vec::new()))?;
    let mut tactile = TactileScheduler::new();

    let ticks = config.tick_count();
    let mut rows = Vec::with_capacity(ticks as usize + 1);
    let record = |world: &WorldState, tactile: &mut TactileScheduler, rows: &mut Vec<LogRow>| {
        let pattern = select_pattern(world.metrics.shape, world.metrics.rate);
        tactile.advance(world.time() * 1000.0, pattern)?;
        rows.push(LogRow::capture(world, tactile.active_pattern()));
        Ok::<(), SimError>(())
    };
    if let Err(e) = record(&world, &mut tactile, &mut rows) {
        return Err(fail(0, e, rows));
    }
    for k in 1..=ticks {
        let hand = config.hand.position_at(k as f64 * period);
        match sim.tick(&world, hand) {
            Ok(next) => world = next,
            Err(e) => return Err(fail(k, e, rows)),
        }
        if let Err(e) = record(&world, &mut tactile, &mut rows) {
            return Err(fail(k, e, rows));
        }
    }
    Ok(LogTable {
        sample_period_s: period,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = load_scenario("").unwrap();
        assert_eq!(cfg.world.impedance, ImpedanceParams::default());
        assert_eq!(cfg.world.formation.k_v, -7.0);
        assert_eq!(cfg.world.formation.limit, 0.25);
        assert_eq!(cfg.world.formation.l1, 0.5);
        assert_eq!(cfg.world.sample_period, 1.0 / 80.0);
        assert_eq!(cfg.duration, DEFAULT_DURATION_S);
    }

    #[test]
    fn out_of_order_waypoints_rejected() {
        let doc = "\
[[hand.waypoints]]
t_s = 2.0
position_m = [1.0, 0.0, 0.0]

[[hand.waypoints]]
t_s = 1.0
position_m = [2.0, 0.0, 0.0]
";
        let err = load_scenario(doc).unwrap_err();
        assert_eq!(err.field(), Some("hand.waypoints[1].t_s"));
        assert_eq!(err.line(), Some(6));
    }

    #[test]
    fn short_duration_rejected() {
        let doc = "duration_s = 1.0\n[[hand.waypoints]]\nt_s = 2.0\nposition_m = [1.0, 0.0, 0.0]\n";
        let err = load_scenario(doc).unwrap_err();
        assert_eq!(err.field(), Some("duration_s"));
        assert_eq!(err.line(), Some(1));
    }

    #[test]
    fn unknown_field_rejected_with_line() {
        let err = load_scenario("duration_s = 1.0\n\n[impedance]\nmass = 2.0\n").unwrap_err();
        assert!(matches!(err, ScenarioError::Malformed { .. }));
        assert_eq!(err.line(), Some(4));
        assert!(err.to_string().contains("mass"), "{err}");
    }

    #[test]
    fn invalid_parameter_names_field() {
        let err = load_scenario("[impedance]\nmass_kg = -1.0\n").unwrap_err();
        assert_eq!(err.field(), Some("impedance.mass_kg"));
        assert_eq!(err.line(), Some(2));
    }

    #[test]
    fn integers_accepted_for_floats() {
        let cfg = load_scenario("duration_s = 3\n").unwrap();
        assert_eq!(cfg.duration, 3.0);
    }

    #[test]
    fn interpolation_modes() {
        let hand = HandTrajectory {
            start: Vector3::zeros(),
            waypoints: vec![
                Waypoint { t: 1.0, position: Vector3::new(1.0, 0.0, 0.0), interp: Interpolation::Linear },
                Waypoint { t: 2.0, position: Vector3::new(2.0, 0.0, 0.0), interp: Interpolation::Hold },
                Waypoint { t: 3.0, position: Vector3::new(3.0, 0.0, 0.0), interp: Interpolation::Smoothstep },
            ],
        };
        assert_eq!(hand.position_at(0.5).x, 0.5);
        assert_eq!(hand.position_at(1.5).x, 1.0);
        assert_eq!(hand.position_at(2.0).x, 2.0);
        assert_eq!(hand.position_at(2.5).x, 2.5);
        assert!((hand.position_at(2.25).x - (2.0 + 0.15625)).abs() < 1e-15);
        assert_eq!(hand.position_at(10.0).x, 3.0);
    }

    #[test]
    fn log_row_count() {
        let cfg = ScenarioConfig {
            duration: 1.0,
            ..Default::default()
        };
        let log = run_scenario(&cfg).unwrap();
        assert_eq!(log.rows.len(), 81);
        assert_eq!(log.rows.last().unwrap().time_s, 1.0);
    }

    #[test]
    fn csv_line_count() {
        let cfg = ScenarioConfig {
            duration: 2.0 / 80.0,
            ..Default::default()
        };
        let log = run_scenario(&cfg).unwrap();
        assert_eq!(log.rows.len(), 3);
        assert_eq!(log.to_csv().lines().count(), 4);
        let header = log.to_csv().lines().next().unwrap().to_string();
        assert_eq!(header.split(',').count(), csv_columns().len());
    }

    #[test]
    fn format_tokens() {
        assert_eq!("csv".parse::<ExportFormat>(), Ok(ExportFormat::Csv));
        assert_eq!("structured".parse::<ExportFormat>(), Ok(ExportFormat::Structured));
        assert!("xml".parse::<ExportFormat>().is_err());
    }
}
