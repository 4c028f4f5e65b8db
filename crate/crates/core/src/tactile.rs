//! Five-finger vibrotactile encoding of the formation state.
//!
//! The shape class picks the flow direction of a wave (extended: middle
//! finger outward, contracted: outer fingers inward). The rate class picks
//! the intensity gradient across fingers (increasing distance: outer
//! fingers strongest, decreasing: middle finger strongest, constant: all
//! medium). Fingers are numbered 1 (thumb) to 5 (little).

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::formation::{RateClass, ShapeClass};

pub const FINGER_COUNT: usize = 5;
/// Silence between consecutive waves (ms).
pub const INTER_WAVE_GAP_MS: u32 = 600;
/// Length of the silent period emitted for [`PatternId::None`] (ms).
pub const SILENT_PERIOD_MS: u32 = INTER_WAVE_GAP_MS;
/// Pulse length of a step whose strongest level is LOW (ms).
pub const LOW_PULSE_MS: u32 = 200;
/// Pulse length of MID and HIGH steps (ms).
pub const STRONG_PULSE_MS: u32 = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub enum Level {
    #[default]
    Off,
    Low,
    Mid,
    High,
}

impl Level {
    /// Vibration frequency in Hz; 0 when off.
    pub fn frequency_hz(self) -> u16 {
        match self {
            Level::Off => 0,
            Level::Low => 150,
            Level::Mid => 200,
            Level::High => 250,
        }
    }

    pub fn from_frequency_hz(hz: u16) -> Option<Self> {
        match hz {
            0 => Some(Level::Off),
            150 => Some(Level::Low),
            200 => Some(Level::Mid),
            250 => Some(Level::High),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PatternId {
    CD,
    CI,
    CC,
    ED,
    EI,
    EC,
    #[serde(rename = "NONE")]
    None,
}

impl PatternId {
    pub const ACTIVE: [PatternId; 6] = [
        PatternId::CD,
        PatternId::CI,
        PatternId::CC,
        PatternId::ED,
        PatternId::EI,
        PatternId::EC,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PatternId::CD => "CD",
            PatternId::CI => "CI",
            PatternId::CC => "CC",
            PatternId::ED => "ED",
            PatternId::EI => "EI",
            PatternId::EC => "EC",
            PatternId::None => "NONE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        PatternId::ACTIVE
            .into_iter()
            .chain([PatternId::None])
            .find(|p| p.as_str() == s)
    }

    fn parts(self) -> Option<(ShapeClass, RateClass)> {
        use RateClass::*;
        use ShapeClass::*;
        Some(match self {
            PatternId::CD => (Contracted, Decreasing),
            PatternId::CI => (Contracted, Increasing),
            PatternId::CC => (Contracted, Constant),
            PatternId::ED => (Extended, Decreasing),
            PatternId::EI => (Extended, Increasing),
            PatternId::EC => (Extended, Constant),
            PatternId::None => return None,
        })
    }
}

pub fn select_pattern(shape: ShapeClass, rate: RateClass) -> PatternId {
    use RateClass::*;
    use ShapeClass::*;
    match (shape, rate) {
        (Contracted, Decreasing) => PatternId::CD,
        (Contracted, Increasing) => PatternId::CI,
        (Contracted, Constant) => PatternId::CC,
        (Extended, Decreasing) => PatternId::ED,
        (Extended, Increasing) => PatternId::EI,
        (Extended, Constant) => PatternId::EC,
        (Regular, _) => PatternId::None,
    }
}

/// One step of a wave, timed relative to the wave start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TactileFrame {
    pub start_ms: u32,
    pub duration_ms: u32,
    pub fingers: [Level; FINGER_COUNT],
}

impl TactileFrame {
    pub fn max_level(&self) -> Level {
        self.fingers.iter().copied().max().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternWave {
    pub pattern: PatternId,
    pub frames: Vec<TactileFrame>,
    pub gap_ms: u32,
}

impl PatternWave {
    /// Time from the first pulse onset to the end of the last pulse.
    pub fn active_ms(&self) -> u32 {
        self.frames.last().map_or(0, |f| f.start_ms + f.duration_ms)
    }

    /// Time from this wave's start to the next wave's start.
    pub fn period_ms(&self) -> u32 {
        if self.frames.is_empty() {
            SILENT_PERIOD_MS
        } else {
            self.active_ms() + self.gap_ms
        }
    }
}

/// Finger groups (0-based) from the middle finger outward.
const MIDDLE_OUT: [&[usize]; 3] = [&[2], &[1, 3], &[0, 4]];

/// Expands a pattern into its wave. `None` yields an empty wave.
pub fn render_pattern(id: PatternId) -> PatternWave {
    let Some((shape, rate)) = id.parts() else {
        return PatternWave {
            pattern: id,
            frames: Vec::new(),
            gap_ms: INTER_WAVE_GAP_MS,
        };
    };
    // Levels per group, indexed middle → outer.
    let levels = match rate {
        RateClass::Increasing => [Level::Low, Level::Mid, Level::High],
        RateClass::Decreasing => [Level::High, Level::Mid, Level::Low],
        RateClass::Constant => [Level::Mid; 3],
    };
    let order: [usize; 3] = match shape {
        ShapeClass::Contracted => [2, 1, 0],
        _ => [0, 1, 2],
    };

    let mut frames = Vec::with_capacity(3);
    let mut t = 0;
    for group in order {
        let mut fingers = [Level::Off; FINGER_COUNT];
        for &f in MIDDLE_OUT[group] {
            fingers[f] = levels[group];
        }
        let duration_ms = if levels[group] == Level::Low {
            LOW_PULSE_MS
        } else {
            STRONG_PULSE_MS
        };
        frames.push(TactileFrame {
            start_ms: t,
            duration_ms,
            fingers,
        });
        t += duration_ms;
    }
    PatternWave {
        pattern: id,
        frames,
        gap_ms: INTER_WAVE_GAP_MS,
    }
}

/// A frame placed on the absolute timeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledFrame {
    pub wave_id: u64,
    pub pattern: PatternId,
    pub frame_index: u32,
    pub t_start_ms: f64,
    pub duration_ms: u32,
    pub fingers: [Level; FINGER_COUNT],
}

impl ScheduledFrame {
    pub fn end_ms(&self) -> f64 {
        self.t_start_ms + self.duration_ms as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ActiveWave {
    id: u64,
    start_ms: f64,
    wave: PatternWave,
    emitted: usize,
}

impl ActiveWave {
    fn end_ms(&self) -> f64 {
        self.start_ms + self.wave.period_ms() as f64
    }

    fn frame(&self, index: usize) -> ScheduledFrame {
        let f = &self.wave.frames[index];
        ScheduledFrame {
            wave_id: self.id,
            pattern: self.wave.pattern,
            frame_index: index as u32,
            t_start_ms: self.start_ms + f.start_ms as f64,
            duration_ms: f.duration_ms,
            fingers: f.fingers,
        }
    }
}

/// Turns a stream of pattern selections into whole, back-to-back waves.
///
/// The pattern is only re-read at wave boundaries, so a wave in progress
/// always completes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TactileScheduler {
    current: Option<ActiveWave>,
    last_ms: Option<f64>,
    next_wave_id: u64,
}

impl TactileScheduler {
    pub fn new() -> Self {
        Self::default()
    }

    /// Moves the clock to `now_ms` with `latest` as the most recent pattern
    /// selection and returns every frame whose onset is at or before `now_ms`
    /// and has not been returned yet.
    pub fn advance(&mut self, now_ms: f64, latest: PatternId) -> Result<Vec<ScheduledFrame>> {
        if !now_ms.is_finite() {
            return Err(SimError::NonFinite("scheduler clock"));
        }
        if let Some(last_ms) = self.last_ms {
            if now_ms < last_ms {
                return Err(SimError::ClockRegression { now_ms, last_ms });
            }
        }
        self.last_ms = Some(now_ms);

        let mut out = Vec::new();
        if self.current.is_none() {
            self.start_wave(now_ms, latest);
        }
        loop {
            let wave = self.current.as_mut().expect("wave started above");
            while wave.emitted < wave.wave.frames.len() && wave.frame(wave.emitted).t_start_ms <= now_ms {
                out.push(wave.frame(wave.emitted));
                wave.emitted += 1;
            }
            let end = wave.end_ms();
            if now_ms >= end {
                self.start_wave(end, latest);
            } else {
                break;
            }
        }
        Ok(out)
    }

    fn start_wave(&mut self, start_ms: f64, pattern: PatternId) {
        self.current = Some(ActiveWave {
            id: self.next_wave_id,
            start_ms,
            wave: render_pattern(pattern),
            emitted: 0,
        });
        self.next_wave_id += 1;
    }

    /// Pattern of the wave in progress.
    pub fn active_pattern(&self) -> PatternId {
        self.current.as_ref().map_or(PatternId::None, |w| w.wave.pattern)
    }

    /// The frame whose pulse covers the current clock, if any.
    pub fn current_frame(&self) -> Option<ScheduledFrame> {
        let now = self.last_ms?;
        let wave = self.current.as_ref()?;
        (0..wave.emitted)
            .map(|i| wave.frame(i))
            .find(|f| f.t_start_ms <= now && now < f.end_ms())
    }

    /// Clock time of the next frame onset or wave boundary.
    pub fn next_event_ms(&self) -> Option<f64> {
        let wave = self.current.as_ref()?;
        if wave.emitted < wave.wave.frames.len() {
            Some(wave.frame(wave.emitted).t_start_ms)
        } else {
            Some(wave.end_ms())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Level::*;

    #[test]
    fn selection_table() {
        assert_eq!(select_pattern(ShapeClass::Extended, RateClass::Increasing), PatternId::EI);
        assert_eq!(select_pattern(ShapeClass::Contracted, RateClass::Decreasing), PatternId::CD);
        assert_eq!(select_pattern(ShapeClass::Regular, RateClass::Increasing), PatternId::None);
    }

    #[test]
    fn ei_wave() {
        let w = render_pattern(PatternId::EI);
        assert_eq!(
            w.frames,
            vec![
                TactileFrame { start_ms: 0, duration_ms: 200, fingers: [Off, Off, Low, Off, Off] },
                TactileFrame { start_ms: 200, duration_ms: 300, fingers: [Off, Mid, Off, Mid, Off] },
                TactileFrame { start_ms: 500, duration_ms: 300, fingers: [High, Off, Off, Off, High] },
            ]
        );
        assert_eq!(w.period_ms(), 1400);
    }

    #[test]
    fn none_is_empty() {
        let w = render_pattern(PatternId::None);
        assert!(w.frames.is_empty());
        assert_eq!(w.active_ms(), 0);
    }

    #[test]
    fn frequencies_round_trip() {
        for l in [Off, Low, Mid, High] {
            assert_eq!(Level::from_frequency_hz(l.frequency_hz()), Some(l));
        }
        assert_eq!(Level::from_frequency_hz(175), None);
    }

    #[test]
    fn pattern_names_round_trip() {
        for p in PatternId::ACTIVE.into_iter().chain([PatternId::None]) {
            assert_eq!(PatternId::parse(p.as_str()), Some(p));
        }
    }

    #[test]
    fn constant_pattern_gives_periodic_waves() {
        let mut s = TactileScheduler::new();
        let mut frames = Vec::new();
        let mut t = 0.0;
        while t <= 4200.0 {
            frames.extend(s.advance(t, PatternId::EI).unwrap());
            t += 12.5;
        }
        let starts: Vec<f64> = frames.iter().filter(|f| f.frame_index == 0).map(|f| f.t_start_ms).collect();
        assert_eq!(starts, vec![0.0, 1400.0, 2800.0, 4200.0]);
        assert!(frames.iter().all(|f| f.pattern == PatternId::EI));
    }

    #[test]
    fn switch_to_none_mid_wave_finishes_wave() {
        let mut s = TactileScheduler::new();
        let mut frames = s.advance(0.0, PatternId::EC).unwrap();
        frames.extend(s.advance(100.0, PatternId::None).unwrap());
        frames.extend(s.advance(1499.0, PatternId::None).unwrap());
        assert_eq!(frames.len(), 3);
        assert!(frames.iter().all(|f| f.pattern == PatternId::EC));
        assert_eq!(s.active_pattern(), PatternId::EC);
        frames.extend(s.advance(3000.0, PatternId::None).unwrap());
        assert_eq!(frames.len(), 3);
        assert_eq!(s.active_pattern(), PatternId::None);
    }

    #[test]
    fn clock_regression_rejected() {
        let mut s = TactileScheduler::new();
        s.advance(10.0, PatternId::EI).unwrap();
        assert!(matches!(s.advance(5.0, PatternId::EI), Err(SimError::ClockRegression { .. })));
    }

    #[test]
    fn current_frame_and_next_event() {
        let mut s = TactileScheduler::new();
        s.advance(0.0, PatternId::EI).unwrap();
        assert_eq!(s.next_event_ms(), Some(200.0));
        s.advance(250.0, PatternId::EI).unwrap();
        let f = s.current_frame().unwrap();
        assert_eq!(f.frame_index, 1);
        s.advance(900.0, PatternId::EI).unwrap();
        assert!(s.current_frame().is_none());
        assert_eq!(s.next_event_ms(), Some(1400.0));
    }
}
