//! Two-layer safety supervision for one drive side.
//!
//! The low layer watches the inverse-model policy against the `ζ`
//! envelope and, on the first violation, latches control over to the
//! adaptive controller for the rest of the run. The high layer watches
//! the adaptive controller against the wider `o` envelope and halts on
//! violation. Latches never reset.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rac::{adaptive_update, blf_value, rac_command, AdaptiveState, PpcParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Dnn,
    Rac,
    Hybrid,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    #[default]
    Dnn,
    Rac,
    Halted,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Dnn => "dnn",
            Policy::Rac => "rac",
            Policy::Halted => "halted",
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dnn" => Ok(Policy::Dnn),
            "rac" => Ok(Policy::Rac),
            "halted" => Ok(Policy::Halted),
            other => Err(format!("unknown status `{other}`")),
        }
    }
}

/// Checks that the low envelope sits strictly inside the high one, so the
/// low layer always fires first.
pub fn check_envelope_order(zeta: &PpcParams, o: &PpcParams) -> Result<()> {
    zeta.validate()?;
    o.validate()?;
    if zeta.shoot < o.shoot && zeta.bound < o.bound {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "zeta envelope ({}, {}) must lie strictly inside o envelope ({}, {})",
            zeta.shoot, zeta.bound, o.shoot, o.bound
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupervisorState {
    pub alpha1: u8,
    pub alpha2: u8,
    pub switched_at: Option<f64>,
    pub shutdown_at: Option<f64>,
    pub zeta: PpcParams,
    pub o: PpcParams,
}

impl SupervisorState {
    /// Starts on the inverse-model policy.
    pub fn new(zeta: PpcParams, o: PpcParams) -> Self {
        Self {
            alpha1: 1,
            alpha2: 0,
            switched_at: None,
            shutdown_at: None,
            zeta,
            o,
        }
    }

    /// Starts latched onto the adaptive controller, for standalone runs.
    pub fn rac_only(zeta: PpcParams, o: PpcParams) -> Self {
        Self {
            alpha1: 0,
            alpha2: 1,
            ..Self::new(zeta, o)
        }
    }

    pub fn halted(&self) -> bool {
        self.shutdown_at.is_some()
    }

    pub fn policy(&self) -> Policy {
        if self.halted() {
            Policy::Halted
        } else if self.alpha1 == 1 {
            Policy::Dnn
        } else {
            Policy::Rac
        }
    }

    /// `α₁ u_dnn + α₂ u_s`, with an absent term contributing zero.
    pub fn compose(&self, u_dnn: Option<f64>, u_s: Option<f64>) -> f64 {
        f64::from(self.alpha1) * u_dnn.unwrap_or(0.0) + f64::from(self.alpha2) * u_s.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    /// Command sent to the plant, absent once halted.
    pub command: Option<f64>,
    pub policy: Policy,
    pub u_s: Option<f64>,
    /// `ζ² - e²`, when the low layer was evaluated.
    pub r_low: Option<f64>,
    /// `o² - e²`, when the high layer was evaluated.
    pub denom_high: Option<f64>,
    pub blf: Option<f64>,
}

impl Decision {
    fn halt(r_low: Option<f64>, denom_high: Option<f64>) -> Self {
        Self {
            command: None,
            policy: Policy::Halted,
            u_s: None,
            r_low,
            denom_high,
            blf: None,
        }
    }
}

/// Low-layer latch. Fires on `ζ(t)² - e² ≤ 0`; once off, the inverse-model
/// flag stays off.
pub fn latch_update(st: &SupervisorState, e: f64, t: f64) -> SupervisorState {
    let mut next = *st;
    if st.alpha1 == 1 {
        let z = st.zeta.at(t);
        if z * z - e * e <= 0.0 {
            next.alpha1 = 0;
            next.alpha2 = 1;
            next.switched_at = Some(t);
        }
    }
    next
}

/// High layer: shutdown test first, then adaptation and command.
fn high_layer(
    st: &mut SupervisorState,
    e: f64,
    t: f64,
    rac: &mut AdaptiveState,
    dt: f64,
    r_low: Option<f64>,
) -> Result<Decision> {
    let o = st.o.at(t);
    let denom = o * o - e * e;
    if denom <= 0.0 {
        st.shutdown_at = Some(t);
        return Ok(Decision::halt(r_low, Some(denom)));
    }
    *rac = adaptive_update(rac, e, o, dt)?;
    let u_s = rac_command(e, o, rac)?;
    Ok(Decision {
        command: Some(st.compose(None, Some(u_s))),
        policy: Policy::Rac,
        u_s: Some(u_s),
        r_low,
        denom_high: Some(denom),
        blf: blf_value(e, o),
    })
}

fn already_halted(st: &SupervisorState) -> Option<Decision> {
    st.halted().then(|| Decision::halt(None, None))
}

/// One hybrid control step. On the step where the latch fires the
/// adaptive controller starts from `θ̂₀` and already produces the command.
pub fn supervise_step(
    st: &mut SupervisorState,
    e: f64,
    t: f64,
    u_dnn: f64,
    rac: &mut AdaptiveState,
    dt: f64,
) -> Result<Decision> {
    if let Some(d) = already_halted(st) {
        return Ok(d);
    }
    let mut r_low = None;
    if st.alpha1 == 1 {
        let z = st.zeta.at(t);
        let r = z * z - e * e;
        r_low = Some(r);
        if r > 0.0 {
            return Ok(Decision {
                command: Some(st.compose(Some(u_dnn), None)),
                policy: Policy::Dnn,
                u_s: None,
                r_low,
                denom_high: None,
                blf: None,
            });
        }
        *st = latch_update(st, e, t);
        rac.reset();
    }
    high_layer(st, e, t, rac, dt, r_low)
}

/// Standalone inverse-model run: a `ζ` violation halts immediately.
pub fn supervise_dnn_only(st: &mut SupervisorState, e: f64, t: f64, u_dnn: f64) -> Decision {
    if let Some(d) = already_halted(st) {
        return d;
    }
    let z = st.zeta.at(t);
    let r = z * z - e * e;
    if r <= 0.0 {
        st.shutdown_at = Some(t);
        return Decision::halt(Some(r), None);
    }
    Decision {
        command: Some(st.compose(Some(u_dnn), None)),
        policy: Policy::Dnn,
        u_s: None,
        r_low: Some(r),
        denom_high: None,
        blf: None,
    }
}

/// Standalone adaptive run with only the high layer.
pub fn supervise_rac_only(
    st: &mut SupervisorState,
    e: f64,
    t: f64,
    rac: &mut AdaptiveState,
    dt: f64,
) -> Result<Decision> {
    if let Some(d) = already_halted(st) {
        return Ok(d);
    }
    if st.alpha2 != 1 {
        return Err(Error::Contract(
            "adaptive-only supervision needs alpha2 = 1".into(),
        ));
    }
    high_layer(st, e, t, rac, dt, None)
}

/// One supervisor plus adaptive state per side, dispatching on mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideController {
    pub mode: Mode,
    pub state: SupervisorState,
    pub rac: AdaptiveState,
}

impl SideController {
    pub fn new(mode: Mode, zeta: PpcParams, o: PpcParams, rac: AdaptiveState) -> Result<Self> {
        if mode == Mode::Hybrid {
            check_envelope_order(&zeta, &o)?;
        }
        let state = match mode {
            Mode::Rac => SupervisorState::rac_only(zeta, o),
            Mode::Dnn | Mode::Hybrid => SupervisorState::new(zeta, o),
        };
        Ok(Self { mode, state, rac })
    }

    /// `u_dnn` is required in dnn and hybrid modes.
    pub fn step(&mut self, e: f64, t: f64, u_dnn: Option<f64>, dt: f64) -> Result<Decision> {
        let need = || Error::Contract("inverse-model command missing".into());
        match self.mode {
            Mode::Dnn => Ok(supervise_dnn_only(
                &mut self.state,
                e,
                t,
                u_dnn.ok_or_else(need)?,
            )),
            Mode::Rac => supervise_rac_only(&mut self.state, e, t, &mut self.rac, dt),
            Mode::Hybrid => supervise_step(
                &mut self.state,
                e,
                t,
                u_dnn.ok_or_else(need)?,
                &mut self.rac,
                dt,
            ),
        }
    }

    /// Halts this side because the other side halted.
    pub fn force_halt(&mut self, t: f64) {
        if !self.state.halted() {
            self.state.shutdown_at = Some(t);
        }
    }
}
