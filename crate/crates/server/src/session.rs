use nalgebra::Vector3;
use thiserror::Error;

use swarmlink_core::impedance::ImpedanceParams;
use swarmlink_core::scenario::LogRow;
use swarmlink_core::tactile::{select_pattern, ScheduledFrame};
use swarmlink_core::{
    LogTable, PatternId, ScenarioConfig, SimError, Simulator, TactileScheduler, WorldConfig, WorldState,
};

use crate::protocol::{Command, StateMessage};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SessionError {
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("rejected {name} = {value}: {reason}")]
    Rejected { name: String, value: f64, reason: String },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Whitelisted live tunables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tunable {
    VelocityGain,
    Limit,
    Mass,
    Damping,
    Stiffness,
    Width,
    Offset1,
    Offset2,
    Offset3,
}

impl Tunable {
    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "K_v" => Tunable::VelocityGain,
            "limit" | "x_imp_limit" => Tunable::Limit,
            "M" | "M_d" => Tunable::Mass,
            "D" | "D_d" => Tunable::Damping,
            "K" | "K_d" => Tunable::Stiffness,
            "W" => Tunable::Width,
            "L_1" | "L1" => Tunable::Offset1,
            "L_2" | "L2" => Tunable::Offset2,
            "L_3" | "L3" => Tunable::Offset3,
            _ => return None,
        })
    }

    /// Returns a copy of `config` with the tunable set, or the validation error.
    pub fn apply(self, config: &WorldConfig, value: f64) -> Result<WorldConfig, SimError> {
        let mut next = *config;
        let imp = config.impedance;
        let f = &mut next.formation;
        match self {
            Tunable::VelocityGain => f.k_v = value,
            Tunable::Limit => f.limit = value,
            Tunable::Width => f.width = value,
            Tunable::Offset1 => f.l1 = value,
            Tunable::Offset2 => f.l2 = value,
            Tunable::Offset3 => f.l3 = value,
            Tunable::Mass => next.impedance = ImpedanceParams::new(value, imp.damping(), imp.stiffness())?,
            Tunable::Damping => next.impedance = ImpedanceParams::new(imp.mass(), value, imp.stiffness())?,
            Tunable::Stiffness => next.impedance = ImpedanceParams::new(imp.mass(), imp.damping(), value)?,
        }
        Simulator::new(next)?;
        Ok(next)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SessionInput {
    Hand(Vector3<f64>),
    Command(Command),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Advanced { frames: Vec<ScheduledFrame> },
    /// Paused: nothing moved.
    Heartbeat,
}

/// The authoritative live world.
///
/// Until a hand position arrives the scripted trajectory drives the hand;
/// after that the most recent live position is held.
pub struct LiveSession {
    scenario: ScenarioConfig,
    sim: Simulator,
    world: WorldState,
    tactile: TactileScheduler,
    tactile_ms: f64,
    selected: PatternId,
    tick: u64,
    paused: bool,
    live_hand: Option<Vector3<f64>>,
    log: Option<LogTable>,
}

impl LiveSession {
    pub fn new(scenario: ScenarioConfig) -> Result<Self, SimError> {
        let sim = Simulator::new(scenario.world)?;
        let world = sim.spawn(scenario.hand.position_at(0.0))?;
        let selected = select_pattern(world.metrics.shape, world.metrics.rate);
        Ok(Self {
            scenario,
            sim,
            world,
            tactile: TactileScheduler::new(),
            tactile_ms: 0.0,
            selected,
            tick: 0,
            paused: false,
            live_hand: None,
            log: None,
        })
    }

    /// Records one log row per advanced tick from now on.
    pub fn with_log(mut self) -> Self {
        self.log = Some(LogTable {
            sample_period_s: self.period(),
            rows: Vec::new(),
        });
        self
    }

    pub fn period(&self) -> f64 {
        self.sim.config().sample_period
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// Session clock (ms): advanced ticks times the period.
    pub fn clock_ms(&self) -> f64 {
        self.tick as f64 * self.period() * 1000.0
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn config(&self) -> &WorldConfig {
        self.sim.config()
    }

    pub fn take_log(&mut self) -> Option<LogTable> {
        self.log.take()
    }

    /// Applies everything queued since the last tick. Commands run in order
    /// and each gets a result; of the hand positions only the newest is kept.
    pub fn drain<I>(&mut self, inputs: I) -> Vec<Result<(), SessionError>>
    where
        I: IntoIterator<Item = SessionInput>,
    {
        let mut newest = None;
        let mut results = Vec::new();
        for input in inputs {
            match input {
                SessionInput::Hand(p) => newest = Some(p),
                SessionInput::Command(c) => results.push(self.apply(&c)),
            }
        }
        if newest.is_some() {
            self.live_hand = newest;
        }
        results
    }

    pub fn apply(&mut self, command: &Command) -> Result<(), SessionError> {
        match command {
            Command::Pause => self.paused = true,
            Command::Resume => self.paused = false,
            Command::Reset => {
                let hand = self.live_hand.unwrap_or_else(|| self.scenario.hand.position_at(0.0));
                self.world = self.sim.spawn(hand)?;
                self.selected = select_pattern(self.world.metrics.shape, self.world.metrics.rate);
            }
            Command::SetParam { name, value } => {
                let tunable = Tunable::parse(name).ok_or_else(|| SessionError::UnknownParam(name.clone()))?;
                let next = tunable.apply(self.sim.config(), *value).map_err(|e| SessionError::Rejected {
                    name: name.clone(),
                    value: *value,
                    reason: e.to_string(),
                })?;
                self.sim = Simulator::new(next)?;
                self.scenario.world = next;
            }
        }
        Ok(())
    }

    /// Runs one tick unless paused. Returns tactile frames whose onset the
    /// tick's clock passed.
    pub fn step(&mut self) -> Result<Step, SessionError> {
        if self.paused {
            return Ok(Step::Heartbeat);
        }
        let hand = match self.live_hand {
            Some(p) => p,
            None => self.scenario.hand.position_at((self.world.tick + 1) as f64 * self.period()),
        };
        self.world = self.sim.tick(&self.world, hand)?;
        self.tick += 1;
        let frames = self.advance_tactile(self.clock_ms());
        self.selected = select_pattern(self.world.metrics.shape, self.world.metrics.rate);
        if let Some(log) = &mut self.log {
            log.rows.push(LogRow::capture(&self.world, self.tactile.active_pattern()));
        }
        Ok(Step::Advanced { frames })
    }

    /// Moves the tactile clock forward (never back) and returns newly
    /// started frames.
    pub fn advance_tactile(&mut self, now_ms: f64) -> Vec<ScheduledFrame> {
        self.tactile_ms = self.tactile_ms.max(now_ms);
        self.tactile
            .advance(self.tactile_ms, self.selected)
            .expect("tactile clock is finite and monotone")
    }

    pub fn next_tactile_ms(&self) -> Option<f64> {
        self.tactile.next_event_ms()
    }

    pub fn state_message(&self) -> StateMessage {
        let frame = self.tactile.current_frame();
        StateMessage::from_world(
            self.tick,
            self.paused,
            &self.world,
            self.tactile.active_pattern(),
            frame.as_ref(),
        )
    }
}
