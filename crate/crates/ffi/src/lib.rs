//! C interface to the environments, the proxy-value loss, the violation
//! bound and the training driver.
//!
//! Every function returns a [`PvpStatus`]. On failure a message is kept per
//! thread and can be read with [`pvp_last_error`]. Handles are opaque and
//! must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pvp::agent::losses;
use pvp::analysis::compute_bound;
use pvp::envs::{Action, ActionSpace, AnyEnv, Env, EnvConfig};
use pvp::harness::{train, HarnessError, RunConfig};
use pvp::oracle::Expert;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PvpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Numeric = 4,
    Io = 5,
    Runtime = 6,
    Panic = 7,
}

/// Opaque environment handle.
pub struct PvpEnv {
    env: AnyEnv,
}

/// Outcome of one environment step.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PvpStep {
    pub reward: f64,
    pub cost: u8,
    pub done: bool,
    pub success: bool,
    pub violation: bool,
    pub truncated: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Fail(PvpStatus, String);

impl From<HarnessError> for Fail {
    fn from(e: HarnessError) -> Self {
        let status = match e.exit_code() {
            2 => PvpStatus::Config,
            3 => PvpStatus::Numeric,
            _ if matches!(e, HarnessError::Io(_) | HarnessError::Csv(_)) => PvpStatus::Io,
            _ => PvpStatus::Runtime,
        };
        Fail(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(PvpStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PvpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PvpStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PvpStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(PvpStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{name} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail(PvpStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail(PvpStatus::NullPointer, format!("{name} is null")))
}

unsafe fn env_arg<'a>(p: *mut PvpEnv) -> Result<&'a mut PvpEnv, Fail> {
    out_arg(p, "env")
}

unsafe fn write_obs(obs: &[f64], out: *mut f64, len: usize) -> Result<(), Fail> {
    if len != obs.len() {
        return Err(invalid(format!("observation buffer holds {len} values, need {}", obs.len())));
    }
    if out.is_null() {
        return Err(Fail(PvpStatus::NullPointer, "obs_out is null".into()));
    }
    ptr::copy_nonoverlapping(obs.as_ptr(), out, len);
    Ok(())
}

/// Message for the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pvp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pvp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds an environment from a JSON config such as
/// `{"env":"gridworld","width":6,"height":6,"layout":"empty"}`.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pvp_env_new(config_json: *const c_char, out: *mut *mut PvpEnv) -> PvpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let cfg: EnvConfig = serde_json::from_str(str_arg(config_json, "config_json")?)
            .map_err(|e| Fail(PvpStatus::Config, e.to_string()))?;
        let env = cfg.build().map_err(|e| Fail(PvpStatus::Config, e.to_string()))?;
        *out = Box::into_raw(Box::new(PvpEnv { env }));
        Ok(())
    })
}

/// # Safety
/// `env` must come from [`pvp_env_new`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn pvp_env_free(env: *mut PvpEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Observation length, and the action layout: `discrete` is set for index
/// actions, in which case `action_dim` is the number of actions.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pvp_env_spec(
    env: *mut PvpEnv,
    obs_dim: *mut usize,
    discrete: *mut bool,
    action_dim: *mut usize,
) -> PvpStatus {
    guard(|| {
        let env = &env_arg(env)?.env;
        *out_arg(obs_dim, "obs_dim")? = env.obs_dim();
        let (d, n) = match env.action_space() {
            ActionSpace::Discrete { n } => (true, n),
            ActionSpace::Continuous { dim } => (false, dim),
        };
        *out_arg(discrete, "discrete")? = d;
        *out_arg(action_dim, "action_dim")? = n;
        Ok(())
    })
}

/// Starts an episode and writes the first observation.
///
/// # Safety
/// `obs_out` must hold `obs_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pvp_env_reset(env: *mut PvpEnv, seed: u64, obs_out: *mut f64, obs_len: usize) -> PvpStatus {
    guard(|| {
        let env = &mut env_arg(env)?.env;
        let obs = env.reset(seed);
        write_obs(&obs, obs_out, obs_len)
    })
}

unsafe fn step_with(env: *mut PvpEnv, action: Action, obs_out: *mut f64, obs_len: usize, out: *mut PvpStep) -> Result<(), Fail> {
    let env = &mut env_arg(env)?.env;
    let out = out_arg(out, "step_out")?;
    if !env.action_space().contains(&action) {
        return Err(invalid(format!("action {action:?} is outside the action space")));
    }
    let r = env.step(&action).map_err(|e| Fail(PvpStatus::Runtime, e.to_string()))?;
    write_obs(&r.next_obs, obs_out, obs_len)?;
    *out = PvpStep {
        reward: r.reward,
        cost: r.cost,
        done: r.done,
        success: r.info.success,
        violation: r.info.violation,
        truncated: r.info.truncated,
    };
    Ok(())
}

/// # Safety
/// `obs_out` must hold `obs_len` doubles and `step_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pvp_env_step_discrete(
    env: *mut PvpEnv,
    action: usize,
    obs_out: *mut f64,
    obs_len: usize,
    step_out: *mut PvpStep,
) -> PvpStatus {
    guard(|| step_with(env, Action::Discrete(action), obs_out, obs_len, step_out))
}

/// # Safety
/// `action` must hold `action_len` doubles, `obs_out` `obs_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pvp_env_step_continuous(
    env: *mut PvpEnv,
    action: *const f64,
    action_len: usize,
    obs_out: *mut f64,
    obs_len: usize,
    step_out: *mut PvpStep,
) -> PvpStatus {
    guard(|| {
        let a = slice_arg(action, action_len, "action")?.to_vec();
        step_with(env, Action::Continuous(a), obs_out, obs_len, step_out)
    })
}

/// Writes the scripted expert's action: one value (the index) for discrete
/// environments, `action_dim` values otherwise.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pvp_env_expert_action(env: *mut PvpEnv, out: *mut f64, len: usize) -> PvpStatus {
    guard(|| {
        let env = &env_arg(env)?.env;
        let a = env.expert_action().map_err(|e| Fail(PvpStatus::Runtime, e.to_string()))?;
        let values = match a {
            Action::Discrete(i) => vec![i as f64],
            Action::Continuous(v) => v,
        };
        write_obs(&values, out, len)
    })
}

/// Proxy value loss `mean[(q_h - b)^2 + (q_n + b)^2]` over `n` pairs.
///
/// # Safety
/// `q_h` and `q_n` must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pvp_pv_loss(q_h: *const f64, q_n: *const f64, n: usize, bound: f64, out: *mut f64) -> PvpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if !(bound.is_finite() && bound > 0.0) {
            return Err(invalid(format!("bound must be positive, got {bound}")));
        }
        let h = slice_arg(q_h, n, "q_h")?;
        let a = slice_arg(q_n, n, "q_n")?;
        *out = losses::pv_loss(h, a, bound).loss;
        Ok(())
    })
}

/// Intent-violation bound `(kappa + epsilon * psi) / (1 - gamma)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pvp_compute_bound(gamma: f64, epsilon: f64, kappa: f64, psi: f64, out: *mut f64) -> PvpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = compute_bound(gamma, epsilon, kappa, psi).map_err(|e| invalid(e.to_string()))?;
        Ok(())
    })
}

/// Runs training from a JSON run config and returns the run summary as a
/// JSON string, to be released with [`pvp_string_free`].
///
/// # Safety
/// `config_json` must be NUL-terminated; `summary_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pvp_train(config_json: *const c_char, summary_out: *mut *mut c_char) -> PvpStatus {
    guard(|| {
        let out = out_arg(summary_out, "summary_out")?;
        *out = ptr::null_mut();
        let cfg: RunConfig = serde_json::from_str(str_arg(config_json, "config_json")?)
            .map_err(|e| Fail(PvpStatus::Config, e.to_string()))?;
        let run = train(cfg)?;
        let text = serde_json::to_string(&run.summary).map_err(|e| Fail(PvpStatus::Runtime, e.to_string()))?;
        *out = CString::new(text).map_err(|e| Fail(PvpStatus::Runtime, e.to_string()))?.into_raw();
        Ok(())
    })
}
