//! Wire messages. Every message is one JSON object per websocket text
//! frame, tagged by a `"type"` field; fields appear in declaration order.
//!
//! Floating-point values in server messages are rounded to 6 significant
//! digits before encoding, so the shortest decimal form written on the wire
//! never carries more than 6 digits and decoding gives back the same
//! message.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use swarmlink_core::formation::{LINK_COUNT, VEHICLE_COUNT};
use swarmlink_core::tactile::{Level, ScheduledFrame, FINGER_COUNT};
use swarmlink_core::{PatternId, RateClass, ShapeClass, WorldState};

pub type Triple = [f64; 3];

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("invalid message: {0}")]
    Invalid(String),
}

/// Rounds to 6 significant digits.
pub fn quantize(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

fn quantize3(v: &Vector3<f64>) -> Triple {
    [quantize(v.x), quantize(v.y), quantize(v.z)]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleView {
    pub position: Triple,
    pub goal: Triple,
}

/// One tactile step, timed on the session clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TactileMessage {
    pub wave_id: u64,
    pub pattern: PatternId,
    pub frame_index: u32,
    pub t_start_ms: f64,
    pub duration_ms: u32,
    /// Per-finger vibration frequency, thumb first: 0, 150, 200 or 250 Hz.
    pub fingers: [u16; FINGER_COUNT],
}

impl From<&ScheduledFrame> for TactileMessage {
    fn from(f: &ScheduledFrame) -> Self {
        Self {
            wave_id: f.wave_id,
            pattern: f.pattern,
            frame_index: f.frame_index,
            t_start_ms: quantize(f.t_start_ms),
            duration_ms: f.duration_ms,
            fingers: f.fingers.map(Level::frequency_hz),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMessage {
    /// Session tick; never decreases, repeats only in heartbeats.
    pub tick: u64,
    /// World time since the last spawn or reset (s).
    pub t_s: f64,
    pub paused: bool,
    pub hand: Triple,
    pub vehicles: [VehicleView; VEHICLE_COUNT],
    /// Clamped link corrections in hum1, 12, 13, 24, 34 order.
    pub x_imp: [Triple; LINK_COUNT],
    pub spread_ratio: f64,
    pub shape: ShapeClass,
    pub rate: RateClass,
    pub pattern: PatternId,
    pub frame: Option<TactileMessage>,
}

impl StateMessage {
    pub fn from_world(
        tick: u64,
        paused: bool,
        world: &WorldState,
        pattern: PatternId,
        frame: Option<&ScheduledFrame>,
    ) -> Self {
        let mut vehicles = [VehicleView {
            position: [0.0; 3],
            goal: [0.0; 3],
        }; VEHICLE_COUNT];
        for (i, v) in vehicles.iter_mut().enumerate() {
            v.position = quantize3(&world.vehicles[i].position);
            v.goal = quantize3(&world.goals.goals[i]);
        }
        Self {
            tick,
            t_s: quantize(world.time()),
            paused,
            hand: quantize3(&world.hand.position),
            vehicles,
            x_imp: world.links.map(|l| quantize3(&l.correction)),
            spread_ratio: quantize(world.metrics.spread_ratio),
            shape: world.metrics.shape,
            rate: world.metrics.rate,
            pattern,
            frame: frame.map(TactileMessage::from),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Hand,
    Observer,
}

/// Everything the server sends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State(StateMessage),
    Tactile(TactileMessage),
    Welcome { client: u64, role: Role },
    Role { role: Role },
    Error { reason: String },
}

pub fn encode(message: &ServerMessage) -> String {
    serde_json::to_string(message).expect("server messages serialize")
}

pub fn encode_state(state: &StateMessage) -> String {
    encode(&ServerMessage::State(state.clone()))
}

pub fn decode_server(text: &str) -> Result<ServerMessage, ProtocolError> {
    serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))
}

/// Live commands. Applied in arrival order at tick boundaries.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Reset,
    Pause,
    Resume,
    SetParam { name: String, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputMessage {
    Hand { t_ms: f64, position: Vector3<f64> },
    Command(Command),
    ClaimHand,
    ReleaseHand,
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum RawInput {
    Hand { t_ms: f64, position: [f64; 3] },
    Reset,
    Pause,
    Resume,
    SetParam { name: String, value: f64 },
    ClaimHand,
    ReleaseHand,
}

pub fn decode_input(text: &str) -> Result<InputMessage, ProtocolError> {
    let raw: RawInput = serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    Ok(match raw {
        RawInput::Hand { t_ms, position } => {
            if !t_ms.is_finite() || t_ms < 0.0 {
                return Err(ProtocolError::Invalid(format!("t_ms must be finite and >= 0, got {t_ms}")));
            }
            if !position.iter().all(|x| x.is_finite()) {
                return Err(ProtocolError::Invalid("hand position must be finite".into()));
            }
            InputMessage::Hand {
                t_ms,
                position: Vector3::from(position),
            }
        }
        RawInput::Reset => InputMessage::Command(Command::Reset),
        RawInput::Pause => InputMessage::Command(Command::Pause),
        RawInput::Resume => InputMessage::Command(Command::Resume),
        RawInput::SetParam { name, value } => InputMessage::Command(Command::SetParam { name, value }),
        RawInput::ClaimHand => InputMessage::ClaimHand,
        RawInput::ReleaseHand => InputMessage::ReleaseHand,
    })
}
