//! Closed-loop runs: wheel references, open-loop data collection and the
//! fixed-step scenario loop.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_positive, Error, Result};
use crate::metrics::{metrics, RunSummary};
use crate::nn::{Batch, InverseModel};
use crate::plant::{self, DisturbanceProfile, PlantParams, PlantState};
use crate::rac::{AdaptiveState, PpcParams, RacGains};
use crate::supervisor::{check_envelope_order, Mode, Policy, SideController};

/// Vehicle-level path; converted to per-side wheel speeds by
/// [`reference`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Path {
    ConstantSpeed {
        speed_mps: f64,
    },
    Circle {
        radius_m: f64,
        speed_mps: f64,
    },
    /// Yaw rate `ω_max sin(π V t / L)`: the turn direction flips every
    /// segment of length `L` and the reference never steps.
    SCurve {
        segment_length_m: f64,
        speed_mps: f64,
        yaw_rate_max_rad_per_s: f64,
    },
}

impl Path {
    pub fn validate(&self, track_width: f64) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidPath(msg));
        match *self {
            Path::ConstantSpeed { speed_mps } if !speed_mps.is_finite() => {
                bad(format!("speed {speed_mps} is not finite"))
            }
            Path::Circle {
                radius_m,
                speed_mps,
            } => {
                if !speed_mps.is_finite() {
                    bad(format!("speed {speed_mps} is not finite"))
                } else if !radius_m.is_finite() || radius_m <= track_width / 2.0 {
                    bad(format!(
                        "radius {radius_m} m must exceed half the track width ({} m)",
                        track_width / 2.0
                    ))
                } else {
                    Ok(())
                }
            }
            Path::SCurve {
                segment_length_m,
                speed_mps,
                yaw_rate_max_rad_per_s,
            } => {
                if !(segment_length_m.is_finite() && segment_length_m > 0.0) {
                    bad(format!("segment length {segment_length_m} must be > 0"))
                } else if !(speed_mps.is_finite() && yaw_rate_max_rad_per_s.is_finite()) {
                    bad("s-curve speed and yaw rate must be finite".into())
                } else {
                    Ok(())
                }
            }
            Path::ConstantSpeed { .. } => Ok(()),
        }
    }

    fn speed_and_yaw_rate(&self, t: f64) -> (f64, f64) {
        match *self {
            Path::ConstantSpeed { speed_mps } => (speed_mps, 0.0),
            Path::Circle {
                radius_m,
                speed_mps,
            } => (speed_mps, speed_mps / radius_m),
            Path::SCurve {
                segment_length_m,
                speed_mps,
                yaw_rate_max_rad_per_s,
            } => {
                let phase = std::f64::consts::PI * speed_mps * t / segment_length_m;
                (speed_mps, yaw_rate_max_rad_per_s * phase.sin())
            }
        }
    }
}

/// Left and right wheel speed references at time `t`, with the start-up
/// ramp `1 - e^{-t / ramp_time}` applied.
pub fn reference(path: &Path, track_width: f64, t: f64, ramp_time: f64) -> Result<(f64, f64)> {
    require_positive("track_width_m", track_width)?;
    require_positive("ramp_time_s", ramp_time)?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(invalid("t", format!("must be finite and >= 0, got {t}")));
    }
    path.validate(track_width)?;
    let (v, w) = path.speed_and_yaw_rate(t);
    let ramp = -(-t / ramp_time).exp_m1();
    let half = w * track_width / 2.0;
    Ok(((v - half) * ramp, (v + half) * ramp))
}

/// Open-loop staircase from `-n_max` to `+n_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sweep {
    pub n_steps: usize,
    pub dwell_s: f64,
    /// Defaults to the plant's saturation limit.
    pub n_max_rpm: Option<f64>,
    pub dt_s: f64,
    /// Spacing of logged samples; a whole multiple of `dt_s`.
    pub sample_interval_s: f64,
    /// Unlogged hold at the first level so logging starts near steady state.
    pub settle_s: f64,
    pub velocity_noise_mps: f64,
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            n_steps: 50,
            dwell_s: 2.0,
            n_max_rpm: None,
            dt_s: 1e-3,
            sample_interval_s: 1e-2,
            settle_s: 5.0,
            velocity_noise_mps: 0.0,
        }
    }
}

impl Sweep {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps < 2 {
            return Err(invalid("n_steps", "need at least two levels"));
        }
        require_positive("dwell_s", self.dwell_s)?;
        require_positive("dt_s", self.dt_s)?;
        require_positive("sample_interval_s", self.sample_interval_s)?;
        if let Some(n) = self.n_max_rpm {
            require_positive("n_max_rpm", n)?;
        }
        if !(self.settle_s.is_finite() && self.settle_s >= 0.0) {
            return Err(invalid("settle_s", "must be >= 0"));
        }
        if !(self.velocity_noise_mps.is_finite() && self.velocity_noise_mps >= 0.0) {
            return Err(invalid("velocity_noise_mps", "must be >= 0"));
        }
        let stride = self.sample_interval_s / self.dt_s;
        if (stride - stride.round()).abs() > 1e-9 || stride.round() < 1.0 {
            return Err(invalid(
                "sample_interval_s",
                "must be a whole multiple of dt_s",
            ));
        }
        if self.steps_per_level() % self.stride() != 0 {
            return Err(invalid(
                "dwell_s",
                "must be a whole multiple of sample_interval_s",
            ));
        }
        Ok(())
    }

    fn stride(&self) -> usize {
        (self.sample_interval_s / self.dt_s).round() as usize
    }

    fn steps_per_level(&self) -> usize {
        (self.dwell_s / self.dt_s).round() as usize
    }

    pub fn samples_per_level(&self) -> usize {
        self.steps_per_level() / self.stride()
    }

    pub fn sample_count(&self) -> usize {
        self.n_steps * self.samples_per_level()
    }

    pub fn levels(&self, params: &PlantParams) -> Vec<f64> {
        let n_max = self.n_max_rpm.unwrap_or(params.n_max);
        let span = 2.0 * n_max / (self.n_steps - 1) as f64;
        (0..self.n_steps)
            .map(|j| -n_max + j as f64 * span)
            .collect()
    }
}

/// Drives one plant through the staircase and logs `(v, n)` pairs as an
/// inverse-map dataset: inputs are velocities, targets the commands.
pub fn collect_open_loop(
    params: &PlantParams,
    disturbance: &DisturbanceProfile,
    sweep: &Sweep,
    seed: u64,
) -> Result<Batch> {
    params.validate()?;
    disturbance.validate()?;
    sweep.validate()?;
    let noise = Normal::new(0.0, sweep.velocity_noise_mps)
        .map_err(|e| invalid("velocity_noise_mps", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = sweep.levels(params);
    let dt = sweep.dt_s;

    let mut k: u64 = 0;
    let mut state = PlantState::default();
    let mut advance = |state: &mut PlantState, n: f64| -> Result<()> {
        let s = PlantState {
            v: state.v,
            t: k as f64 * dt,
        };
        *state = plant::step(s, params, n, disturbance, dt)?;
        k += 1;
        Ok(())
    };

    for _ in 0..(sweep.settle_s / dt).round() as usize {
        advance(&mut state, levels[0])?;
    }
    let mut inputs = Vec::with_capacity(sweep.sample_count());
    let mut targets = Vec::with_capacity(sweep.sample_count());
    let stride = sweep.stride();
    for &n in &levels {
        for i in 1..=sweep.steps_per_level() {
            advance(&mut state, n)?;
            if i % stride == 0 {
                let v = if sweep.velocity_noise_mps > 0.0 {
                    state.v + noise.sample(&mut rng)
                } else {
                    state.v
                };
                inputs.push(v);
                targets.push(n);
            }
        }
    }
    Batch::new(inputs, targets)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SideConfig {
    pub plant: PlantParams,
    pub disturbance: DisturbanceProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub mode: Mode,
    pub duration_s: f64,
    #[serde(default = "default_dt")]
    pub dt_s: f64,
    #[serde(default = "default_ramp")]
    pub ramp_time_s: f64,
    pub track_width_m: f64,
    pub path: Path,
    #[serde(default)]
    pub zeta: Option<PpcParams>,
    #[serde(default)]
    pub o: Option<PpcParams>,
    #[serde(default)]
    pub rac: RacGains,
    #[serde(default)]
    pub left: SideConfig,
    #[serde(default)]
    pub right: SideConfig,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_ramp() -> f64 {
    2.0
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        require_positive("duration_s", self.duration_s)?;
        require_positive("dt_s", self.dt_s)?;
        require_positive("ramp_time_s", self.ramp_time_s)?;
        require_positive("track_width_m", self.track_width_m)?;
        self.path.validate(self.track_width_m)?;
        for side in [&self.left, &self.right] {
            side.plant.validate()?;
            side.disturbance.validate()?;
        }
        let missing =
            |name: &str| Error::Config(format!("mode {:?} needs a [{name}] envelope", self.mode));
        match self.mode {
            Mode::Dnn => {
                self.zeta.ok_or_else(|| missing("zeta"))?.validate()?;
            }
            Mode::Rac => {
                self.o.ok_or_else(|| missing("o"))?.validate()?;
            }
            Mode::Hybrid => {
                let z = self.zeta.ok_or_else(|| missing("zeta"))?;
                let o = self.o.ok_or_else(|| missing("o"))?;
                check_envelope_order(&z, &o)?;
            }
        }
        if self.mode != Mode::Dnn {
            self.rac.validate()?;
            if self.dt_s * self.rac.delta >= 1.0 {
                return Err(Error::Config("dt_s * delta_per_s must be below 1".into()));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration_s / self.dt_s).round() as usize
    }

    pub fn needs_models(&self) -> bool {
        self.mode != Mode::Rac
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SideRecord {
    pub v_ref: f64,
    pub v: f64,
    pub e: f64,
    pub u_dnn: Option<f64>,
    pub u_s: Option<f64>,
    pub u_c: Option<f64>,
    pub alpha1: u8,
    pub alpha2: u8,
    pub theta_hat: Option<f64>,
    pub zeta: Option<f64>,
    pub o: Option<f64>,
    pub blf: Option<f64>,
    pub r_low: Option<f64>,
    pub denom_high: Option<f64>,
    pub status: Policy,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TraceRecord {
    pub t: f64,
    pub left: SideRecord,
    pub right: SideRecord,
}

impl TraceRecord {
    pub fn sides(&self) -> [&SideRecord; 2] {
        [&self.left, &self.right]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitStatus {
    Completed,
    Error,
    Shutdown,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Completed => 0,
            ExitStatus::Error => 1,
            ExitStatus::Shutdown => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceRecord>,
    pub summary: RunSummary,
    pub status: ExitStatus,
}

struct Side<'a> {
    ctrl: SideController,
    plant: PlantParams,
    disturbance: DisturbanceProfile,
    v: f64,
    model: Option<&'a InverseModel>,
}

impl Side<'_> {
    fn record(&self, cfg: &ScenarioConfig, t: f64, v_ref: f64) -> Result<SideRecord> {
        let e = self.v - v_ref;
        let u_dnn = match self.model {
            Some(m) if cfg.mode != Mode::Rac => Some(m.command(v_ref)?),
            _ => None,
        };
        let zeta = match cfg.mode {
            Mode::Dnn | Mode::Hybrid => cfg.zeta.map(|z| z.at(t)),
            Mode::Rac => None,
        };
        let o = match cfg.mode {
            Mode::Rac | Mode::Hybrid => cfg.o.map(|o| o.at(t)),
            Mode::Dnn => None,
        };
        Ok(SideRecord {
            v_ref,
            v: self.v,
            e,
            u_dnn,
            zeta,
            o,
            r_low: zeta.map(|z| z * z - e * e),
            denom_high: o.map(|o| o * o - e * e),
            blf: o.and_then(|o| crate::rac::blf_value(e, o)),
            ..SideRecord::default()
        })
    }
}

/// Runs the closed loop for `cfg.duration_s` or until a shutdown. Both
/// sides step in lockstep; a halt on either side halts both, and the
/// trace ends at that step.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    left_model: Option<&InverseModel>,
    right_model: Option<&InverseModel>,
) -> Result<RunOutput> {
    cfg.validate()?;
    if cfg.needs_models() && (left_model.is_none() || right_model.is_none()) {
        return Err(Error::Config(format!(
            "mode {:?} needs a trained model for each side",
            cfg.mode
        )));
    }
    let zeta = cfg.zeta.or(cfg.o).expect("validated");
    let o = cfg.o.or(cfg.zeta).expect("validated");
    let make = |side: &SideConfig, model| -> Result<Side<'_>> {
        Ok(Side {
            ctrl: SideController::new(cfg.mode, zeta, o, AdaptiveState::new(cfg.rac)?)?,
            plant: side.plant,
            disturbance: side.disturbance,
            v: 0.0,
            model,
        })
    };
    let mut sides = [make(&cfg.left, left_model)?, make(&cfg.right, right_model)?];

    let dt = cfg.dt_s;
    let mut trace = Vec::with_capacity(cfg.steps());
    for k in 0..cfg.steps() {
        let t = k as f64 * dt;
        let refs = reference(&cfg.path, cfg.track_width_m, t, cfg.ramp_time_s)?;
        let mut recs = [SideRecord::default(); 2];
        let mut halted = false;
        for (i, side) in sides.iter_mut().enumerate() {
            let v_ref = if i == 0 { refs.0 } else { refs.1 };
            let mut rec = side.record(cfg, t, v_ref)?;
            let d = side.ctrl.step(rec.e, t, rec.u_dnn, dt)?;
            rec.u_s = d.u_s;
            rec.u_c = d.command;
            halted |= d.policy == Policy::Halted;
            recs[i] = rec;
        }
        for (side, rec) in sides.iter_mut().zip(recs.iter_mut()) {
            if halted {
                side.ctrl.force_halt(t);
                rec.u_c = None;
                rec.u_s = None;
            }
            let st = side.ctrl.state;
            rec.alpha1 = st.alpha1;
            rec.alpha2 = st.alpha2;
            rec.status = st.policy();
            rec.theta_hat = (st.alpha2 == 1 && !halted).then_some(side.ctrl.rac.theta_hat);
        }
        trace.push(TraceRecord {
            t,
            left: recs[0],
            right: recs[1],
        });
        if halted {
            break;
        }
        for (side, rec) in sides.iter_mut().zip(recs.iter()) {
            let state = PlantState { v: side.v, t };
            let u = rec.u_c.expect("command present while running");
            side.v = plant::step(state, &side.plant, u, &side.disturbance, dt)?.v;
        }
    }
    let summary = metrics(&trace)?;
    let status = if summary.shutdown_at_s.is_some() {
        ExitStatus::Shutdown
    } else {
        ExitStatus::Completed
    };
    Ok(RunOutput {
        trace,
        summary,
        status,
    })
}
