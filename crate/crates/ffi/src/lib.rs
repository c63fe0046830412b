//! C ABI over the skidsafe control stack.
//!
//! Objects cross the boundary as opaque handles created by `*_new` or
//! `*_load` and released by the matching `*_free`. Every fallible call
//! returns an [`SkStatus`]; on failure, [`sk_last_error`] describes the
//! most recent error on the calling thread. Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use skidsafe::io::config::ExperimentConfig;
use skidsafe::io::{model, summary, trace};
use skidsafe::nn::InverseModel;
use skidsafe::plant::{DisturbanceProfile, Plant, PlantParams};
use skidsafe::rac::{AdaptiveState, PpcParams, RacGains};
use skidsafe::scenario::run_scenario;
use skidsafe::supervisor::{Mode, Policy, SideController};
use skidsafe::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Config = 5,
    Contract = 6,
    Numeric = 7,
    TrainingDiverged = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkMode {
    Dnn = 0,
    Rac = 1,
    Hybrid = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkPolicy {
    Dnn = 0,
    Rac = 1,
    Halted = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkDisturbanceKind {
    None = 0,
    ControlScale = 1,
    AdditiveStep = 2,
    Sinusoid = 3,
}

/// `frequency_hz` is read only for sinusoids.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SkDisturbance {
    pub kind: SkDisturbanceKind,
    pub t_start_s: f64,
    pub magnitude: f64,
    pub frequency_hz: f64,
}

/// Envelope `(shoot - bound) * exp(-rate * t) + bound`, in m/s.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SkEnvelope {
    pub shoot_mps: f64,
    pub bound_mps: f64,
    pub rate_per_s: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SkRacGains {
    pub k: f64,
    pub gamma: f64,
    pub delta_per_s: f64,
    pub theta_hat0: f64,
}

/// One supervisor decision. `command_rpm` is NaN once halted.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SkDecision {
    pub command_rpm: f64,
    pub policy: SkPolicy,
    pub theta_hat: f64,
}

/// Trained inverse model.
pub struct SkModel(InverseModel);

/// One side's plant with its disturbance.
pub struct SkPlant(Plant);

/// One side's supervised controller.
pub struct SkController(SideController);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SkStatus {
    match e {
        Error::InvalidParameter { .. } | Error::DegenerateRange(_) | Error::InvalidPath(_) => {
            SkStatus::InvalidArgument
        }
        Error::NumericFault { .. } | Error::Factorization { .. } => SkStatus::Numeric,
        Error::Contract(_) => SkStatus::Contract,
        Error::TrainingDiverged { .. } => SkStatus::TrainingDiverged,
        Error::Config(_) => SkStatus::Config,
        Error::Io { .. } => SkStatus::Io,
        Error::Format { .. } => SkStatus::Format,
    }
}

struct Fail(SkStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SkStatus::NullPointer, format!("`{what}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SkStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            SkStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SkStatus::InvalidArgument, format!("`{what}` is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn opt_path(p: *const c_char, what: &str) -> Result<Option<PathBuf>, Fail> {
    if p.is_null() {
        Ok(None)
    } else {
        path_arg(p, what).map(Some)
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn obj_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Loads a model file written by `skidsafe train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sk_model_load(
    path: *const c_char,
    out_model: *mut *mut SkModel,
) -> SkStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        let m = model::load(&path_arg(path, "path")?)?;
        *slot = Box::into_raw(Box::new(SkModel(m)));
        Ok(())
    })
}

/// # Safety
/// `m` must come from `sk_model_load` and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn sk_model_free(m: *mut SkModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Feed-forward command in rpm for wheel speed `v_mps`.
///
/// # Safety
/// `m` must be a live model handle; `out_rpm` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sk_model_command(
    m: *const SkModel,
    v_mps: f64,
    out_rpm: *mut f64,
) -> SkStatus {
    guard(|| {
        let m = obj(m, "model")?;
        *out(out_rpm, "out_rpm")? = m.0.command(v_mps)?;
        Ok(())
    })
}

fn disturbance(d: &SkDisturbance) -> DisturbanceProfile {
    match d.kind {
        SkDisturbanceKind::None => DisturbanceProfile::None,
        SkDisturbanceKind::ControlScale => DisturbanceProfile::ControlScale {
            t_start: d.t_start_s,
            magnitude: d.magnitude,
        },
        SkDisturbanceKind::AdditiveStep => DisturbanceProfile::AdditiveStep {
            t_start: d.t_start_s,
            magnitude: d.magnitude,
        },
        SkDisturbanceKind::Sinusoid => DisturbanceProfile::Sinusoid {
            t_start: d.t_start_s,
            magnitude: d.magnitude,
            frequency: d.frequency_hz,
        },
    }
}

/// Creates a plant at rest. `dist` may be NULL for no disturbance.
///
/// # Safety
/// `dist` must be NULL or readable; `out_plant` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sk_plant_new(
    k_v_mps_per_rpm: f64,
    tau_s: f64,
    n_max_rpm: f64,
    dist: *const SkDisturbance,
    out_plant: *mut *mut SkPlant,
) -> SkStatus {
    guard(|| {
        let slot = out(out_plant, "out_plant")?;
        let params = PlantParams::new(k_v_mps_per_rpm, tau_s, n_max_rpm)?;
        let profile = dist.as_ref().map_or(DisturbanceProfile::None, disturbance);
        *slot = Box::into_raw(Box::new(SkPlant(Plant::new(params, profile)?)));
        Ok(())
    })
}

/// # Safety
/// `p` must come from `sk_plant_new` and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn sk_plant_free(p: *mut SkPlant) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Advances the plant by `dt_s` under command `n_rpm`; writes the new speed.
///
/// # Safety
/// `p` must be a live plant handle; `out_v_mps` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn sk_plant_step(
    p: *mut SkPlant,
    n_rpm: f64,
    dt_s: f64,
    out_v_mps: *mut f64,
) -> SkStatus {
    guard(|| {
        let p = obj_mut(p, "plant")?;
        if !(dt_s > 0.0 && dt_s.is_finite()) {
            return Err(Fail(
                SkStatus::InvalidArgument,
                format!("dt_s must be positive, got {dt_s}"),
            ));
        }
        let s = p.0.step(n_rpm, dt_s)?;
        if let Some(v) = out_v_mps.as_mut() {
            *v = s.v;
        }
        Ok(())
    })
}

/// Current speed and time of the plant.
///
/// # Safety
/// `p` must be a live plant handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn sk_plant_state(
    p: *const SkPlant,
    out_v_mps: *mut f64,
    out_t_s: *mut f64,
) -> SkStatus {
    guard(|| {
        let p = obj(p, "plant")?;
        *out(out_v_mps, "out_v_mps")? = p.0.state.v;
        *out(out_t_s, "out_t_s")? = p.0.state.t;
        Ok(())
    })
}

/// Creates a supervised controller for one side.
///
/// # Safety
/// The envelope and gain pointers must be readable; `out_ctrl` writable.
#[no_mangle]
pub unsafe extern "C" fn sk_controller_new(
    mode: SkMode,
    zeta: *const SkEnvelope,
    o: *const SkEnvelope,
    gains: *const SkRacGains,
    out_ctrl: *mut *mut SkController,
) -> SkStatus {
    guard(|| {
        let slot = out(out_ctrl, "out_ctrl")?;
        let env = |p: *const SkEnvelope, what| -> Result<PpcParams, Fail> {
            let e = obj(p, what)?;
            Ok(PpcParams::new(e.shoot_mps, e.bound_mps, e.rate_per_s)?)
        };
        let g = obj(gains, "gains")?;
        let rac = AdaptiveState::new(RacGains {
            k: g.k,
            gamma: g.gamma,
            delta: g.delta_per_s,
            theta_hat0: g.theta_hat0,
        })?;
        let mode = match mode {
            SkMode::Dnn => Mode::Dnn,
            SkMode::Rac => Mode::Rac,
            SkMode::Hybrid => Mode::Hybrid,
        };
        let c = SideController::new(mode, env(zeta, "zeta")?, env(o, "o")?, rac)?;
        *slot = Box::into_raw(Box::new(SkController(c)));
        Ok(())
    })
}

/// # Safety
/// `c` must come from `sk_controller_new` and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn sk_controller_free(c: *mut SkController) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// One supervised control step for tracking error `e_mps = v - v_ref` at
/// time `t_s`. Pass NaN for `u_dnn_rpm` in rac mode. A shutdown is
/// reported through `out->policy`, not through the status.
///
/// # Safety
/// `c` must be a live controller handle; `out_decision` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sk_controller_step(
    c: *mut SkController,
    e_mps: f64,
    t_s: f64,
    u_dnn_rpm: f64,
    dt_s: f64,
    out_decision: *mut SkDecision,
) -> SkStatus {
    guard(|| {
        let c = obj_mut(c, "controller")?;
        let slot = out(out_decision, "out_decision")?;
        let u_dnn = (!u_dnn_rpm.is_nan()).then_some(u_dnn_rpm);
        let d = c.0.step(e_mps, t_s, u_dnn, dt_s)?;
        *slot = SkDecision {
            command_rpm: d.command.unwrap_or(f64::NAN),
            policy: match d.policy {
                Policy::Dnn => SkPolicy::Dnn,
                Policy::Rac => SkPolicy::Rac,
                Policy::Halted => SkPolicy::Halted,
            },
            theta_hat: c.0.rac.theta_hat,
        };
        Ok(())
    })
}

/// Runs a scenario from a TOML experiment file and writes the trace CSV
/// and, if `summary_path` is non-NULL, the JSON summary. `out_exit_code`
/// receives 0 for a completed run and 2 for a safety shutdown. Model
/// paths may be NULL in rac mode.
///
/// # Safety
/// String arguments must be NULL or NUL-terminated; `out_exit_code` writable.
#[no_mangle]
pub unsafe extern "C" fn sk_simulate(
    config_path: *const c_char,
    left_model_path: *const c_char,
    right_model_path: *const c_char,
    trace_path: *const c_char,
    summary_path: *const c_char,
    out_exit_code: *mut i32,
) -> SkStatus {
    guard(|| {
        let code = out(out_exit_code, "out_exit_code")?;
        let cfg = ExperimentConfig::load(&path_arg(config_path, "config_path")?)?;
        let load = |p: Option<PathBuf>| p.map(|p| model::load(&p)).transpose();
        let left = load(opt_path(left_model_path, "left_model_path")?)?;
        let right = load(opt_path(right_model_path, "right_model_path")?)?;
        let trace_path = path_arg(trace_path, "trace_path")?;
        let summary_path = opt_path(summary_path, "summary_path")?;
        let run = run_scenario(&cfg.scenario, left.as_ref(), right.as_ref())?;
        trace::save(&trace_path, &run.trace)?;
        if let Some(p) = summary_path {
            summary::save(&p, &run.summary)?;
        }
        *code = run.status.code();
        Ok(())
    })
}
