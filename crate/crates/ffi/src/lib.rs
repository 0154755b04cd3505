//! C ABI over `bapsrl`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_load`
//! and released by the matching `*_free`. Every fallible call returns a
//! [`BapStatus`]; on failure the message is kept per thread and can be read
//! with [`bap_last_error_message`]. Array arguments have the fixed lengths
//! given by the `BAP_*` constants.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bapsrl::bap;
use bapsrl::config::{Config, Maneuver};
use bapsrl::env::risk::{collision_probability, harm_from_speeds};
use bapsrl::env::{IntersectionEnv, TerminalReason};
use bapsrl::error::Error;
use bapsrl::learner::dual_ascent;
use bapsrl::nn::checkpoint::Checkpoint;
use bapsrl::nn::encode_state;
use bapsrl::nn::gaussian::mean_action;
use bapsrl::rng::{seeded_rng, streams};
use bapsrl::types::{ActionVector, LagrangeState, StateVector, ACTION_DIM, NUM_CONSTRAINTS, STATE_DIM};

pub const BAP_STATE_DIM: usize = 38;
pub const BAP_ACTION_DIM: usize = 2;
pub const BAP_NUM_CONSTRAINTS: usize = 6;

const _: () = assert!(BAP_STATE_DIM == STATE_DIM);
const _: () = assert!(BAP_ACTION_DIM == ACTION_DIM);
const _: () = assert!(BAP_NUM_CONSTRAINTS == NUM_CONSTRAINTS);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BapStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Checkpoint = 5,
    Numeric = 6,
    /// The call was valid but the object is in the wrong state, e.g. stepping
    /// a finished episode.
    Usage = 7,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BapTerminal {
    None = 0,
    Goal = 1,
    Collision = 2,
    Timeout = 3,
}

/// Result of one simulator tick.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BapStepResult {
    pub reward: f64,
    /// Sparse (VRU, side, rear) then dense (VRU, side, rear).
    pub costs: [f64; BAP_NUM_CONSTRAINTS],
    pub terminal: BapTerminal,
    /// 0 VRU, 1 side vehicle, 2 rear vehicle; -1 unless `terminal` is a collision.
    pub collision_class: i32,
}

/// Opaque configuration.
pub struct BapConfig {
    inner: Config,
}

/// Opaque simulator instance.
pub struct BapEnv {
    inner: IntersectionEnv,
}

/// Opaque trained policy loaded from a checkpoint.
pub struct BapPolicy {
    inner: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<String>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> BapStatus {
    match err {
        Error::Config { .. } | Error::Validation(_) => BapStatus::Config,
        Error::Usage(_) => BapStatus::Usage,
        Error::NonFinite { .. } | Error::NonFiniteLoss { .. } => BapStatus::Numeric,
        Error::Checkpoint { .. } => BapStatus::Checkpoint,
        Error::Io { .. } | Error::Record { .. } => BapStatus::Io,
    }
}

struct Failure(BapStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

type FfiResult = Result<(), Failure>;

fn null(name: &str) -> Failure {
    Failure(BapStatus::NullPointer, format!("`{name}` is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(BapStatus::InvalidArgument, msg.into())
}

/// Runs `f`, recording its failure or panic.
fn guard(f: impl FnOnce() -> FfiResult) -> BapStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            BapStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("panic: {msg}"));
            BapStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("`{name}` is not valid UTF-8")))
}

unsafe fn array_arg<const N: usize>(p: *const f64, name: &str) -> Result<[f64; N], Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    let mut out = [0.0; N];
    ptr::copy_nonoverlapping(p, out.as_mut_ptr(), N);
    Ok(out)
}

unsafe fn write_array(dst: *mut f64, src: &[f64], name: &str) -> FfiResult {
    if dst.is_null() {
        return Err(null(name));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

unsafe fn write_out<T>(dst: *mut T, value: T, name: &str) -> FfiResult {
    if dst.is_null() {
        return Err(null(name));
    }
    dst.write(value);
    Ok(())
}

unsafe fn put_handle<T>(out: *mut *mut T, value: T) -> FfiResult {
    if out.is_null() {
        return Err(null("out"));
    }
    out.write(Box::into_raw(Box::new(value)));
    Ok(())
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn handle_mut<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(name))
}

// ---------------------------------------------------------------- errors

/// Byte length of the calling thread's last error message, 0 if none.
#[no_mangle]
pub extern "C" fn bap_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, String::len))
}

/// Copies the last error message into `buf` (NUL-terminated, truncated to
/// `len - 1` bytes). Returns the number of bytes written without the NUL.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn bap_last_error_message(buf: *mut c_char, len: usize) -> usize {
    if buf.is_null() || len == 0 {
        return 0;
    }
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_deref().unwrap_or("").as_bytes();
        let n = bytes.len().min(len - 1);
        ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
        *buf.add(n) = 0;
        n
    })
}

// ---------------------------------------------------------------- config

/// # Safety
/// `out` must be a valid pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn bap_config_default(out: *mut *mut BapConfig) -> BapStatus {
    guard(|| {
        put_handle(out, BapConfig { inner: Config::default() })
    })
}

/// Parses a TOML document; missing keys take their defaults.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bap_config_from_toml(text: *const c_char, out: *mut *mut BapConfig) -> BapStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let inner = Config::from_toml_str(text, &[])?;
        put_handle(out, BapConfig { inner })
    })
}

/// Applies one `section.key=value` (or bare `key=value`) override.
///
/// # Safety
/// `config` must be a live handle; `assignment` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bap_config_set(config: *mut BapConfig, assignment: *const c_char) -> BapStatus {
    guard(|| {
        let cfg = handle_mut(config, "config")?;
        let a = str_arg(assignment, "assignment")?;
        cfg.inner = cfg.inner.with_overrides(&[a.to_string()])?;
        Ok(())
    })
}

/// Serializes the configuration. Writes at most `len` bytes including the
/// terminating NUL and stores the full length (without NUL) in `needed`.
///
/// # Safety
/// `config` must be a live handle; `buf` valid for `len` bytes or null;
/// `needed` valid or null.
#[no_mangle]
pub unsafe extern "C" fn bap_config_to_toml(config: *const BapConfig, buf: *mut c_char, len: usize, needed: *mut usize) -> BapStatus {
    guard(|| {
        let text = handle(config, "config")?.inner.to_toml();
        if !needed.is_null() {
            *needed = text.len();
        }
        if !buf.is_null() && len > 0 {
            let n = text.len().min(len - 1);
            ptr::copy_nonoverlapping(text.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        Ok(())
    })
}

/// # Safety
/// `config` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bap_config_free(config: *mut BapConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

// ---------------------------------------------------------------- simulator

/// Creates a simulator whose randomness derives only from `seed`.
///
/// # Safety
/// `config` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bap_env_new(config: *const BapConfig, seed: u64, out: *mut *mut BapEnv) -> BapStatus {
    guard(|| {
        let cfg = &handle(config, "config")?.inner;
        cfg.validate()?;
        let inner = IntersectionEnv::new(cfg, seeded_rng(seed, streams::ENV_BASE));
        put_handle(out, BapEnv { inner })
    })
}

/// Starts an episode. `maneuver` is 0 left, 1 right, 2 straight, or -1 to
/// sample it. Writes the first observation into `state`.
///
/// # Safety
/// `env` must be a live handle; `state` valid for `BAP_STATE_DIM` doubles.
#[no_mangle]
pub unsafe extern "C" fn bap_env_reset(env: *mut BapEnv, maneuver: i32, state: *mut f64) -> BapStatus {
    guard(|| {
        let env = handle_mut(env, "env")?;
        let forced = match maneuver {
            -1 => None,
            m if (0..3).contains(&m) => Some(Maneuver::ALL[m as usize]),
            m => return Err(invalid(format!("maneuver code {m} (expected -1, 0, 1 or 2)"))),
        };
        if state.is_null() {
            return Err(null("state"));
        }
        let obs = env.inner.reset(forced);
        write_array(state, obs.as_slice(), "state")
    })
}

/// Advances one tick with the normalized control `(a_lon, steer)`; values
/// outside `[-1, 1]` are clipped.
///
/// # Safety
/// `env` must be a live handle; `state` valid for `BAP_STATE_DIM` doubles;
/// `result` valid.
#[no_mangle]
pub unsafe extern "C" fn bap_env_step(env: *mut BapEnv, a_lon: f64, steer: f64, state: *mut f64, result: *mut BapStepResult) -> BapStatus {
    guard(|| {
        let env = handle_mut(env, "env")?;
        if state.is_null() {
            return Err(null("state"));
        }
        if result.is_null() {
            return Err(null("result"));
        }
        if !a_lon.is_finite() || !steer.is_finite() {
            return Err(invalid("action must be finite"));
        }
        let out = env.inner.step(ActionVector::new(a_lon, steer))?;
        let (terminal, collision_class) = match out.terminal {
            None => (BapTerminal::None, -1),
            Some(TerminalReason::Goal) => (BapTerminal::Goal, -1),
            Some(TerminalReason::Timeout) => (BapTerminal::Timeout, -1),
            Some(TerminalReason::Collision(c)) => (BapTerminal::Collision, c.index() as i32),
        };
        write_array(state, out.state.as_slice(), "state")?;
        write_out(
            result,
            BapStepResult {
                reward: out.reward,
                costs: out.cost.to_array(),
                terminal,
                collision_class,
            },
            "result",
        )
    })
}

/// Ticks elapsed in the current episode.
///
/// # Safety
/// `env` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn bap_env_tick(env: *const BapEnv) -> u64 {
    env.as_ref().map_or(0, |e| e.inner.tick() as u64)
}

/// # Safety
/// `env` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bap_env_free(env: *mut BapEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

// ---------------------------------------------------------------- policy

/// Loads a trained policy from a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bap_policy_load(path: *const c_char, out: *mut *mut BapPolicy) -> BapStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let inner = Checkpoint::load(path)?;
        put_handle(out, BapPolicy { inner })
    })
}

fn observation(values: [f64; BAP_STATE_DIM]) -> Result<StateVector, Failure> {
    let s = StateVector::from_values(values.to_vec()).ok_or_else(|| invalid("state has the wrong length"))?;
    if !s.is_finite() {
        return Err(invalid("state must be finite"));
    }
    Ok(s)
}

/// Deterministic action: the clipped policy mean for `state`.
///
/// # Safety
/// `policy` must be a live handle; `state` valid for `BAP_STATE_DIM`
/// doubles; `action` valid for `BAP_ACTION_DIM` doubles.
#[no_mangle]
pub unsafe extern "C" fn bap_policy_act(policy: *const BapPolicy, state: *const f64, action: *mut f64) -> BapStatus {
    guard(|| {
        let p = handle(policy, "policy")?;
        let s = observation(array_arg::<BAP_STATE_DIM>(state, "state")?)?;
        let head = p.inner.net.forward_one(&encode_state(&s))?;
        write_array(action, &mean_action(&head.mean).to_array(), "action")
    })
}

/// Reward value and the `BAP_NUM_CONSTRAINTS` cost values for `state`.
///
/// # Safety
/// `policy` must be a live handle; `state` valid for `BAP_STATE_DIM`
/// doubles; `value_reward` valid; `value_costs` valid for
/// `BAP_NUM_CONSTRAINTS` doubles.
#[no_mangle]
pub unsafe extern "C" fn bap_policy_values(
    policy: *const BapPolicy,
    state: *const f64,
    value_reward: *mut f64,
    value_costs: *mut f64,
) -> BapStatus {
    guard(|| {
        let p = handle(policy, "policy")?;
        let s = observation(array_arg::<BAP_STATE_DIM>(state, "state")?)?;
        let head = p.inner.net.forward_one(&encode_state(&s))?;
        write_out(value_reward, p.inner.value_norm.denormalize(head.v_r), "value_reward")?;
        write_array(value_costs, &head.v_c, "value_costs")
    })
}

/// Multipliers stored with the policy.
///
/// # Safety
/// `policy` must be a live handle; `lambda` valid for `BAP_NUM_CONSTRAINTS`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn bap_policy_lambda(policy: *const BapPolicy, lambda: *mut f64) -> BapStatus {
    guard(|| {
        let p = handle(policy, "policy")?;
        write_array(lambda, &p.inner.lagrange.lambda, "lambda")
    })
}

/// # Safety
/// `policy` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bap_policy_free(policy: *mut BapPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

// ---------------------------------------------------------------- kernels

/// Prior log-odds per constraint, `alpha·ln(lambda + epsilon) + rho`, or
/// zeros when `use_prior` is false.
///
/// # Safety
/// `lambda`, `rho` and `out` must each be valid for `BAP_NUM_CONSTRAINTS`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn bap_prior_log_odds(
    lambda: *const f64,
    rho: *const f64,
    alpha: f64,
    epsilon: f64,
    use_prior: bool,
    out: *mut f64,
) -> BapStatus {
    guard(|| {
        let lambda = array_arg::<BAP_NUM_CONSTRAINTS>(lambda, "lambda")?;
        let rho = array_arg::<BAP_NUM_CONSTRAINTS>(rho, "rho")?;
        if use_prior && lambda.iter().any(|l| *l + epsilon <= 0.0) {
            return Err(invalid("lambda + epsilon must be positive"));
        }
        write_array(out, &bap::prior_log_odds(&lambda, &rho, alpha, epsilon, use_prior), "out")
    })
}

/// `eta·max(0, cost - limit) + cost_advantage`.
#[no_mangle]
pub extern "C" fn bap_violation_evidence(cost: f64, limit: f64, cost_advantage: f64, eta: f64) -> f64 {
    bap::violation_evidence(cost, limit, cost_advantage, eta)
}

/// Gate `sigmoid(beta·delta + phi_prior)`.
#[no_mangle]
pub extern "C" fn bap_posterior_weight(phi_prior: f64, delta: f64, beta: f64) -> f64 {
    bap::posterior_weights(&[phi_prior], &[[delta]], beta)[0][0]
}

/// Gated Lagrangian advantage for one step.
///
/// # Safety
/// `cost_advantages`, `weights` and `lambda` must each be valid for
/// `BAP_NUM_CONSTRAINTS` doubles; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn bap_gated_advantage(
    reward_advantage: f64,
    cost_advantages: *const f64,
    weights: *const f64,
    lambda: *const f64,
    out: *mut f64,
) -> BapStatus {
    guard(|| {
        let c = array_arg::<BAP_NUM_CONSTRAINTS>(cost_advantages, "cost_advantages")?;
        let w = array_arg::<BAP_NUM_CONSTRAINTS>(weights, "weights")?;
        let l = array_arg::<BAP_NUM_CONSTRAINTS>(lambda, "lambda")?;
        write_out(out, bap::bap_advantage(&[reward_advantage], &[c], &[w], &l)[0], "out")
    })
}

/// Projected multiplier step; `lambda` is updated in place.
///
/// # Safety
/// `lambda`, `episodic_costs` and `limits` must each be valid for
/// `BAP_NUM_CONSTRAINTS` doubles.
#[no_mangle]
pub unsafe extern "C" fn bap_dual_ascent(lambda: *mut f64, episodic_costs: *const f64, limits: *const f64, alpha_lambda: f64) -> BapStatus {
    guard(|| {
        let state = LagrangeState {
            lambda: array_arg::<BAP_NUM_CONSTRAINTS>(lambda, "lambda")?,
            rho: [0.0; NUM_CONSTRAINTS],
            limits: array_arg::<BAP_NUM_CONSTRAINTS>(limits, "limits")?,
        };
        let j = array_arg::<BAP_NUM_CONSTRAINTS>(episodic_costs, "episodic_costs")?;
        write_array(lambda, &dual_ascent(&state, &j, alpha_lambda).lambda, "lambda")
    })
}

/// Collision probability from a time to collision; pass `INFINITY` when no
/// collision is predicted. A negative or NaN `ttc` is an invalid argument.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bap_collision_probability(ttc: f64, tau_ttc: f64, out: *mut f64) -> BapStatus {
    guard(|| {
        if ttc.is_nan() || ttc < 0.0 {
            return Err(invalid(format!("time to collision {ttc}")));
        }
        let ttc = (ttc != f64::INFINITY).then_some(ttc);
        write_out(out, collision_probability(ttc, tau_ttc)?, "out")
    })
}

/// Collision harm from masses (kg), speeds (m/s) and the angle between the
/// velocity vectors (rad).
#[no_mangle]
pub extern "C" fn bap_harm(mass_ego: f64, mass_other: f64, speed_ego: f64, speed_other: f64, angle: f64) -> f64 {
    harm_from_speeds(mass_ego, mass_other, speed_ego, speed_other, angle)
}
