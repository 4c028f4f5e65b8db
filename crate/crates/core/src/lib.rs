//! Simulation core for an operator-guided four-vehicle formation.
//!
//! The operator's hand velocity drives virtual mass-spring-damper links
//! between the hand and the vehicles. The links bend the rhombic formation's
//! goals, point-mass vehicles track those goals with PID control, and the
//! resulting formation state is encoded as five-finger tactile patterns.
//!
//! - [`impedance`]: exact discrete link dynamics, force law and clamping.
//! - [`formation`]: topology, hand velocity, goal generation and metrics.
//! - [`vehicle`]: PID tracking, point-mass integration and the world tick.
//! - [`tactile`]: pattern selection, rendering and wave scheduling.
//! - [`scenario`]: scenario documents, the headless runner and log export.

pub mod error;
pub mod formation;
pub mod impedance;
pub mod scenario;
pub mod tactile;
pub mod vehicle;

pub use error::{Result, SimError};
pub use formation::{FormationConfig, FormationMetrics, Link, RateClass, ShapeClass};
pub use impedance::{DampingClass, DiscreteModel, ImpedanceLinkState, ImpedanceParams};
pub use scenario::{load_scenario, run_scenario, ExportFormat, LogRow, LogTable, ScenarioConfig, ScenarioError};
pub use tactile::{PatternId, TactileScheduler};
pub use vehicle::{PidGains, Simulator, WorldConfig, WorldState};
