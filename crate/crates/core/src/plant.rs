//! Lumped first-order model of one side's actuation chain.
//!
//! The pump/motor/gearbox/wheel chain collapses to a static gain `K_v`
//! (wheel speed per pump rpm) followed by a first-order lag `tau`:
//!
//! ```text
//! dv/dt = A * n_eff + (F - v) / tau,    A = K_v / tau
//! ```
//!
//! where `n_eff` is the saturated rpm command after any control-scale
//! disturbance and `F` is an additive velocity disturbance.

use serde::{Deserialize, Serialize};

use crate::error::{finite, require_positive, Result};

/// Physical parameters of the pump → hydraulic motor → gearbox → wheel chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuationChain {
    /// Pump displacement, m³/rad.
    pub pump_displacement: f64,
    /// Hydraulic motor displacement, m³/rad.
    pub motor_displacement: f64,
    /// Gear reduction between hydraulic motor and wheel.
    pub gear_ratio: f64,
    /// Wheel radius, m.
    pub wheel_radius: f64,
}

impl ActuationChain {
    pub fn validate(&self) -> Result<()> {
        require_positive("pump_displacement", self.pump_displacement)?;
        require_positive("motor_displacement", self.motor_displacement)?;
        require_positive("gear_ratio", self.gear_ratio)?;
        require_positive("wheel_radius", self.wheel_radius)
    }
}

/// Steady-state gain from pump rpm to wheel linear velocity (m/s per rpm).
pub fn derive_gain(chain: &ActuationChain) -> Result<f64> {
    chain.validate()?;
    let two_pi = 2.0 * std::f64::consts::PI;
    Ok(two_pi * chain.wheel_radius * chain.pump_displacement
        / (60.0 * chain.gear_ratio * chain.motor_displacement))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParams {
    #[serde(rename = "k_v_mps_per_rpm")]
    pub k_v: f64,
    #[serde(rename = "tau_s")]
    pub tau: f64,
    #[serde(rename = "n_max_rpm")]
    pub n_max: f64,
}

impl Default for PlantParams {
    /// Desk-scale defaults: roughly 0.15 m/s at 600 rpm.
    fn default() -> Self {
        Self {
            k_v: 2.5e-4,
            tau: 0.8,
            n_max: 1500.0,
        }
    }
}

impl PlantParams {
    pub fn new(k_v: f64, tau: f64, n_max: f64) -> Result<Self> {
        let p = Self { k_v, tau, n_max };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("k_v", self.k_v)?;
        require_positive("tau", self.tau)?;
        require_positive("n_max", self.n_max)
    }

    /// Control input gain `A = K_v / tau`.
    pub fn input_gain(&self) -> f64 {
        self.k_v / self.tau
    }

    pub fn saturate(&self, n: f64) -> f64 {
        n.clamp(-self.n_max, self.n_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    /// Wheel linear velocity, m/s.
    pub v: f64,
    /// Simulation time, s.
    pub t: f64,
}

/// External disturbance acting on one side.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceProfile {
    #[default]
    None,
    /// Multiplies the command by `1 + magnitude` from `t_start` on.
    ControlScale {
        #[serde(rename = "t_start_s")]
        t_start: f64,
        magnitude: f64,
    },
    /// Adds a constant `F = magnitude` (m/s) from `t_start` on.
    AdditiveStep {
        #[serde(rename = "t_start_s")]
        t_start: f64,
        #[serde(rename = "magnitude_mps")]
        magnitude: f64,
    },
    /// `F = magnitude * sin(2π f (t - t_start))` from `t_start` on.
    Sinusoid {
        #[serde(rename = "t_start_s")]
        t_start: f64,
        #[serde(rename = "magnitude_mps")]
        magnitude: f64,
        #[serde(rename = "frequency_hz")]
        frequency: f64,
    },
}

impl DisturbanceProfile {
    pub fn validate(&self) -> Result<()> {
        let check = |t_start: f64, magnitude: f64| -> Result<()> {
            if !(t_start.is_finite() && t_start >= 0.0) {
                return Err(crate::error::invalid("t_start", "must be finite and >= 0"));
            }
            finite(magnitude, "disturbance magnitude").map(|_| ())
        };
        match *self {
            Self::None => Ok(()),
            Self::ControlScale { t_start, magnitude } => check(t_start, magnitude),
            Self::AdditiveStep { t_start, magnitude } => check(t_start, magnitude),
            Self::Sinusoid {
                t_start,
                magnitude,
                frequency,
            } => {
                check(t_start, magnitude)?;
                finite(frequency, "disturbance frequency").map(|_| ())
            }
        }
    }

    /// Onset time, if the profile has one.
    pub fn onset(&self) -> Option<f64> {
        match *self {
            Self::None => None,
            Self::ControlScale { t_start, .. }
            | Self::AdditiveStep { t_start, .. }
            | Self::Sinusoid { t_start, .. } => Some(t_start),
        }
    }
}

/// Returns `(F, n_eff)` for command `n_cmd` at time `t`.
pub fn eval_disturbance(profile: &DisturbanceProfile, t: f64, n_cmd: f64) -> (f64, f64) {
    match *profile {
        DisturbanceProfile::None => (0.0, n_cmd),
        DisturbanceProfile::ControlScale { t_start, magnitude } if t >= t_start => {
            (0.0, (1.0 + magnitude) * n_cmd)
        }
        DisturbanceProfile::AdditiveStep { t_start, magnitude } if t >= t_start => {
            (magnitude, n_cmd)
        }
        DisturbanceProfile::Sinusoid {
            t_start,
            magnitude,
            frequency,
        } if t >= t_start => {
            let phase = 2.0 * std::f64::consts::PI * frequency * (t - t_start);
            (magnitude * phase.sin(), n_cmd)
        }
        _ => (0.0, n_cmd),
    }
}

/// Right-hand side of the velocity ODE.
#[inline]
pub fn velocity_rate(params: &PlantParams, v: f64, n_eff: f64, f: f64) -> f64 {
    params.input_gain() * n_eff + (f - v) / params.tau
}

/// Advances the plant by one RK4 step of length `dt`.
///
/// The command is saturated to `±n_max` first, then the disturbance is
/// sampled at `state.t` and held over the step together with the command.
/// A scaled command is clamped again so the integrator never sees more
/// than `n_max`.
pub fn step(
    state: PlantState,
    params: &PlantParams,
    n_p: f64,
    profile: &DisturbanceProfile,
    dt: f64,
) -> Result<PlantState> {
    let n_cmd = params.saturate(n_p);
    let (f, n_eff) = eval_disturbance(profile, state.t, n_cmd);
    let n_eff = params.saturate(n_eff);
    let rate = |v: f64| velocity_rate(params, v, n_eff, f);

    let v = state.v;
    let k1 = rate(v);
    let k2 = rate(v + 0.5 * dt * k1);
    let k3 = rate(v + 0.5 * dt * k2);
    let k4 = rate(v + dt * k3);
    let v_next = v + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

    Ok(PlantState {
        v: finite(v_next, "plant step")?,
        t: state.t + dt,
    })
}

/// A plant instance with its own parameters and disturbance.
#[derive(Debug, Clone)]
pub struct Plant {
    pub params: PlantParams,
    pub disturbance: DisturbanceProfile,
    pub state: PlantState,
}

impl Plant {
    pub fn new(params: PlantParams, disturbance: DisturbanceProfile) -> Result<Self> {
        params.validate()?;
        disturbance.validate()?;
        Ok(Self {
            params,
            disturbance,
            state: PlantState::default(),
        })
    }

    pub fn with_velocity(mut self, v: f64) -> Self {
        self.state.v = v;
        self
    }

    pub fn step(&mut self, n_p: f64, dt: f64) -> Result<PlantState> {
        self.state = step(self.state, &self.params, n_p, &self.disturbance, dt)?;
        Ok(self.state)
    }
}
