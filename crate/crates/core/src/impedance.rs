//! Virtual mass-spring-damper links.
//!
//! Each link integrates `M Δẍ + D Δẋ + K Δx = F` independently on the three
//! world axes. The force is held constant over a sample period, so the
//! continuous model is propagated exactly by the zero-order-hold pair
//! `A_d = exp(A T)`, `B_d = (exp(A T) - I) A⁻¹ B` with
//! `A = [[0, 1], [-K/M, -D/M]]` and `B = [0, 1/M]ᵀ`.

use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Relative tolerance on the discriminant `D² - 4MK` inside which the
/// repeated-eigenvalue branch is used.
pub const CRITICAL_TOLERANCE: f64 = 1e-9;

/// Continuous impedance parameters shared by every link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpedanceParams {
    mass: f64,
    damping: f64,
    stiffness: f64,
}

impl ImpedanceParams {
    pub fn new(mass: f64, damping: f64, stiffness: f64) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(SimError::param("mass", format!("must be finite and > 0, got {mass}")));
        }
        if !(damping.is_finite() && damping >= 0.0) {
            return Err(SimError::param(
                "damping",
                format!("must be finite and >= 0, got {damping}"),
            ));
        }
        if !(stiffness.is_finite() && stiffness > 0.0) {
            return Err(SimError::param(
                "stiffness",
                format!("must be finite and > 0, got {stiffness}"),
            ));
        }
        Ok(Self {
            mass,
            damping,
            stiffness,
        })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    pub fn stiffness(&self) -> f64 {
        self.stiffness
    }

    /// `D² - 4MK`; its sign decides the damping regime.
    pub fn discriminant(&self) -> f64 {
        self.damping * self.damping - 4.0 * self.mass * self.stiffness
    }

    /// Continuous state matrix `[[0, 1], [-K/M, -D/M]]`.
    pub fn state_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(
            0.0,
            1.0,
            -self.stiffness / self.mass,
            -self.damping / self.mass,
        )
    }
}

impl Default for ImpedanceParams {
    /// Near-critically damped link: M = 1.9 kg, D = 12.6 N·s/m, K = 21 N/m.
    fn default() -> Self {
        Self {
            mass: 1.9,
            damping: 12.6,
            stiffness: 21.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DampingClass {
    Underdamped,
    Critical,
    Overdamped,
}

pub fn classify_damping(params: &ImpedanceParams) -> DampingClass {
    let disc = params.discriminant();
    let scale = 4.0 * params.mass * params.stiffness;
    if disc.abs() <= CRITICAL_TOLERANCE * scale {
        DampingClass::Critical
    } else if disc < 0.0 {
        DampingClass::Underdamped
    } else {
        DampingClass::Overdamped
    }
}

/// Exact discrete-time propagator of one impedance axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteModel {
    a_d: Matrix2<f64>,
    b_d: Vector2<f64>,
    period: f64,
    params: ImpedanceParams,
}

impl DiscreteModel {
    pub fn a_d(&self) -> &Matrix2<f64> {
        &self.a_d
    }

    pub fn b_d(&self) -> &Vector2<f64> {
        &self.b_d
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn params(&self) -> &ImpedanceParams {
        &self.params
    }

    /// Propagates one scalar axis `(Δx, Δẋ)` under a held force.
    pub fn propagate(&self, state: Vector2<f64>, force: f64) -> Vector2<f64> {
        self.a_d * state + self.b_d * force
    }
}

/// Builds `(A_d, B_d)` for sampling period `period` seconds.
///
/// `exp(A T)` is evaluated through the shifted form
/// `e^{μT} (g(T) I + f(T) (A - μI))` with `μ = -D/2M` and
/// `ν² = μ² - K/M`; `f, g` are `sinh/cosh`, `sin/cos` or `T, 1`
/// for real-distinct, complex and repeated eigenvalues respectively.
pub fn build_discrete_model(params: ImpedanceParams, period: f64) -> Result<DiscreteModel> {
    // Re-run validation so deserialized or hand-built params cannot slip through.
    let params = ImpedanceParams::new(params.mass, params.damping, params.stiffness)?;
    if !(period.is_finite() && period > 0.0) {
        return Err(SimError::param(
            "sample_period",
            format!("must be finite and > 0, got {period}"),
        ));
    }

    let a = params.state_matrix();
    let mu = -params.damping / (2.0 * params.mass);
    let nu_sq = params.discriminant() / (4.0 * params.mass * params.mass);
    let (g, f) = match classify_damping(&params) {
        DampingClass::Critical => (1.0, period),
        DampingClass::Overdamped => {
            let nu = nu_sq.sqrt();
            ((nu * period).cosh(), (nu * period).sinh() / nu)
        }
        DampingClass::Underdamped => {
            let nu = (-nu_sq).sqrt();
            ((nu * period).cos(), (nu * period).sin() / nu)
        }
    };
    let shifted = a - Matrix2::identity() * mu;
    let a_d = (Matrix2::identity() * g + shifted * f) * (mu * period).exp();

    // A⁻¹B = [-1/K, 0]ᵀ, so B_d = (A_d - I)[-1/K, 0]ᵀ.
    let k = params.stiffness;
    let b_d = Vector2::new((1.0 - a_d[(0, 0)]) / k, -a_d[(1, 0)] / k);

    Ok(DiscreteModel {
        a_d,
        b_d,
        period,
        params,
    })
}

/// Repeated-root closed form `e^{λT} (I + T (A - λI))`, `λ = -D/2M`.
///
/// Exact only when `D² = 4MK`; kept as an independent cross-check of the
/// critical branch of [`build_discrete_model`].
pub fn repeated_root_exponential(params: &ImpedanceParams, period: f64) -> Matrix2<f64> {
    let lambda = -params.damping / (2.0 * params.mass);
    let a = params.state_matrix();
    (Matrix2::identity() + (a - Matrix2::identity() * lambda) * period) * (lambda * period).exp()
}

/// Per-link state: raw displacement and rate on each axis, plus the clamped
/// correction that is applied to formation goals.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImpedanceLinkState {
    pub displacement: Vector3<f64>,
    pub rate: Vector3<f64>,
    pub correction: Vector3<f64>,
}

impl ImpedanceLinkState {
    pub fn is_finite(&self) -> bool {
        all_finite(&self.displacement) && all_finite(&self.rate) && all_finite(&self.correction)
    }
}

/// Advances a link by one sample and clamps the applied correction.
///
/// Only `correction` is clamped; the raw `(Δx, Δẋ)` state keeps the
/// unclamped dynamics.
pub fn step_link(
    model: &DiscreteModel,
    state: &ImpedanceLinkState,
    force: &Vector3<f64>,
    limit: f64,
) -> Result<ImpedanceLinkState> {
    if !(limit.is_finite() && limit > 0.0) {
        return Err(SimError::param("limit", format!("must be finite and > 0, got {limit}")));
    }
    if !all_finite(force) {
        return Err(SimError::NonFinite("link force"));
    }
    if !all_finite(&state.displacement) || !all_finite(&state.rate) {
        return Err(SimError::NonFinite("link state"));
    }

    let a = model.a_d;
    let b = model.b_d;
    let displacement = state.displacement * a[(0, 0)] + state.rate * a[(0, 1)] + force * b[0];
    let rate = state.displacement * a[(1, 0)] + state.rate * a[(1, 1)] + force * b[1];
    let correction = displacement.map(|x| clamp_correction(x, limit));

    let next = ImpedanceLinkState {
        displacement,
        rate,
        correction,
    };
    if !next.is_finite() {
        return Err(SimError::NonFinite("link state"));
    }
    Ok(next)
}

/// External force from the operator's hand velocity, `F = K_v v`.
pub fn hand_force(k_v: f64, velocity: &Vector3<f64>) -> Result<Vector3<f64>> {
    if !k_v.is_finite() || !all_finite(velocity) {
        return Err(SimError::NonFinite("hand force input"));
    }
    Ok(velocity * k_v)
}

/// Symmetric clamp of a correction to `[-limit, limit]`.
pub fn clamp_correction(x_imp: f64, limit: f64) -> f64 {
    x_imp.clamp(-limit, limit)
}

pub(crate) fn all_finite(v: &Vector3<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}
