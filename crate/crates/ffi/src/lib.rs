//! C ABI for the `truereview` crate.
//!
//! Every fallible function returns a [`TrStatus`]; the message of the most
//! recent failure on the calling thread is available through
//! [`tr_last_error_message`]. Objects are handed out as opaque pointers and
//! must be released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use truereview::belief::{posterior_update, Belief, UserModel};
use truereview::experiment::parse_config;
use truereview::incentive::{self, AccuracyMap, IncentiveParams, RatingHistory};
use truereview::nash::{self, DeviationExperiment};
use truereview::sim::{run_simulation, SimTrace};
use truereview::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    IndexOutOfRange = 3,
    /// The requested bonus cannot be computed yet (no later ratings).
    Pending = 4,
    Config = 5,
    Io = 6,
    Panic = 7,
}

/// Accuracy map selector for [`TrIncentiveParams`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrAccuracyMap {
    Sigmoid = 0,
    Linear = 1,
}

/// Mechanism parameters passed by value.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrIncentiveParams {
    pub alpha: f64,
    pub max_grade: f64,
    pub accuracy_map: TrAccuracyMap,
}

/// Components of one settled bonus.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TrBonusBreakdown {
    pub informativeness: f64,
    pub accuracy_loss: f64,
    pub accuracy_factor: f64,
    pub bonus: f64,
}

/// Posterior mean and standard deviation.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TrPosterior {
    pub q_hat: f64,
    pub sigma_hat: f64,
}

/// Monte Carlo estimate with its standard error.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TrEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Rating history of one paper.
pub struct TrHistory {
    inner: RatingHistory,
}

/// Result of one simulated repetition.
pub struct TrTrace {
    inner: SimTrace,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn fail(status: TrStatus, message: impl Into<String>) -> TrStatus {
    set_last_error(message.into());
    status
}

fn status_of(err: &Error) -> TrStatus {
    match err {
        Error::IndexOutOfRange { .. } => TrStatus::IndexOutOfRange,
        Error::Config { .. } | Error::Report { .. } => TrStatus::Config,
        Error::Io(_) => TrStatus::Io,
        _ => TrStatus::InvalidArgument,
    }
}

fn from_error(err: Error) -> TrStatus {
    fail(status_of(&err), err.to_string())
}

/// Runs `body`, converting panics into [`TrStatus::Panic`].
fn guard(body: impl FnOnce() -> TrStatus) -> TrStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            fail(TrStatus::Panic, format!("panic: {msg}"))
        }
    }
}

fn params_of(p: &TrIncentiveParams) -> Result<IncentiveParams, TrStatus> {
    let map = match p.accuracy_map {
        TrAccuracyMap::Sigmoid => AccuracyMap::Sigmoid,
        TrAccuracyMap::Linear => AccuracyMap::Linear,
    };
    IncentiveParams::new(p.alpha, p.max_grade, map).map_err(from_error)
}

unsafe fn out_ref<'a, T>(out: *mut T, name: &str) -> Result<&'a mut T, TrStatus> {
    // SAFETY: the caller guarantees `out` is either NULL or valid for writes.
    unsafe { out.as_mut() }.ok_or_else(|| fail(TrStatus::NullPointer, format!("`{name}` is NULL")))
}

macro_rules! try_status {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `cap`). Returns the full message length excluding the NUL,
/// or 0 when there is no error.
///
/// # Safety
/// `buf` must be NULL or valid for `cap` bytes of writes.
#[no_mangle]
pub unsafe extern "C" fn tr_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let slot = slot.borrow();
        let Some(msg) = slot.as_ref() else {
            if !buf.is_null() && cap > 0 {
                // SAFETY: `buf` holds at least one byte.
                unsafe { *buf = 0 };
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            // SAFETY: `buf` holds `cap > n` bytes and does not alias `bytes`.
            unsafe {
                ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Sigmoid parameters with the given `alpha` and maximum grade.
#[no_mangle]
pub extern "C" fn tr_incentive_params_sigmoid(alpha: f64, max_grade: f64) -> TrIncentiveParams {
    TrIncentiveParams {
        alpha,
        max_grade,
        accuracy_map: TrAccuracyMap::Sigmoid,
    }
}

/// Squared difference `(a - b)²`.
#[no_mangle]
pub extern "C" fn tr_quadratic_loss(a: f64, b: f64) -> f64 {
    incentive::quadratic_loss(a, b)
}

/// Accuracy factor `f(x)` for a loss `x` in `[0, M²]`.
///
/// # Safety
/// `params` and `out` must be NULL or valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tr_accuracy_factor(
    params: *const TrIncentiveParams,
    loss: f64,
    out: *mut f64,
) -> TrStatus {
    guard(|| {
        // SAFETY: forwarded caller guarantee.
        let Some(p) = (unsafe { params.as_ref() }) else {
            return fail(TrStatus::NullPointer, "`params` is NULL");
        };
        let out = try_status!(unsafe { out_ref(out, "out") });
        let p = try_status!(params_of(p));
        if !(0.0..=p.max_loss()).contains(&loss) {
            return fail(
                TrStatus::InvalidArgument,
                format!("loss {loss} outside [0, {}]", p.max_loss()),
            );
        }
        *out = p.accuracy_factor(loss);
        TrStatus::Ok
    })
}

/// Creates an empty history with default rating `default_rating`.
/// Writes NULL to `out` on failure.
///
/// # Safety
/// `out` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tr_history_new(
    default_rating: f64,
    max_grade: f64,
    out: *mut *mut TrHistory,
) -> TrStatus {
    guard(|| {
        let out = try_status!(unsafe { out_ref(out, "out") });
        *out = ptr::null_mut();
        let inner = try_status!(RatingHistory::new(default_rating, max_grade).map_err(from_error));
        *out = Box::into_raw(Box::new(TrHistory { inner }));
        TrStatus::Ok
    })
}

/// Releases a history. NULL is ignored.
///
/// # Safety
/// `history` must be NULL or a pointer from [`tr_history_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tr_history_free(history: *mut TrHistory) {
    if !history.is_null() {
        // SAFETY: ownership returns to Rust exactly once.
        drop(unsafe { Box::from_raw(history) });
    }
}

/// Appends a rating by `reviewer` at `round`.
///
/// # Safety
/// `history` must be NULL or a live history handle.
#[no_mangle]
pub unsafe extern "C" fn tr_history_push(
    history: *mut TrHistory,
    reviewer: u32,
    grade: f64,
    round: u64,
) -> TrStatus {
    guard(|| {
        // SAFETY: forwarded caller guarantee.
        let Some(h) = (unsafe { history.as_mut() }) else {
            return fail(TrStatus::NullPointer, "`history` is NULL");
        };
        match h.inner.push(reviewer, grade, round) {
            Ok(()) => TrStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// Number of user ratings (the default rating is not counted).
///
/// # Safety
/// `history` and `out` must be NULL or valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tr_history_len(history: *const TrHistory, out: *mut usize) -> TrStatus {
    guard(|| {
        // SAFETY: forwarded caller guarantee.
        let Some(h) = (unsafe { history.as_ref() }) else {
            return fail(TrStatus::NullPointer, "`history` is NULL");
        };
        let out = try_status!(unsafe { out_ref(out, "out") });
        *out = h.inner.len();
        TrStatus::Ok
    })
}

/// Displayed rating: average of the default rating and every user rating.
///
/// # Safety
/// `history` and `out` must be NULL or valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tr_history_current_rating(history: *const TrHistory, out: *mut f64) -> TrStatus {
    guard(|| {
        // SAFETY: forwarded caller guarantee.
        let Some(h) = (unsafe { history.as_ref() }) else {
            return fail(TrStatus::NullPointer, "`history` is NULL");
        };
        let out = try_status!(unsafe { out_ref(out, "out") });
        *out = h.inner.current_rating();
        TrStatus::Ok
    })
}

/// Bonus of the `index`-th user rating (1-based). Returns
/// [`TrStatus::Pending`] when no later rating exists.
///
/// # Safety
/// `history`, `params` and `out` must be NULL or valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tr_history_review_bonus(
    history: *const TrHistory,
    index: usize,
    params: *const TrIncentiveParams,
    out: *mut TrBonusBreakdown,
) -> TrStatus {
    guard(|| {
        // SAFETY: forwarded caller guarantee.
        let Some(h) = (unsafe { history.as_ref() }) else {
            return fail(TrStatus::NullPointer, "`history` is NULL");
        };
        let Some(p) = (unsafe { params.as_ref() }) else {
            return fail(TrStatus::NullPointer, "`params` is NULL");
        };
        let out = try_status!(unsafe { out_ref(out, "out") });
        let p = try_status!(params_of(p));
        if p.max_grade() != h.inner.max_grade() {
            return fail(
                TrStatus::InvalidArgument,
                "params and history disagree on max_grade",
            );
        }
        match incentive::review_bonus(&h.inner, index, &p) {
            Ok(Some(b)) => {
                *out = TrBonusBreakdown {
                    informativeness: b.informativeness,
                    accuracy_loss: b.accuracy_loss,
                    accuracy_factor: b.accuracy_factor,
                    bonus: b.bonus,
                };
                TrStatus::Ok
            }
            Ok(None) => fail(
                TrStatus::Pending,
                format!("rating {index} has no later ratings yet"),
            ),
            Err(e) => from_error(e),
        }
    })
}

/// Conjugate-normal update of the prior `N(z, sigma)` with the mean
/// `observation` of `n >= 1` reviews of error `mean_error`.
///
/// # Safety
/// `out` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tr_posterior_update(
    z: f64,
    sigma: f64,
    observation: f64,
    n: usize,
    mean_error: f64,
    out: *mut TrPosterior,
) -> TrStatus {
    guard(|| {
        let out = try_status!(unsafe { out_ref(out, "out") });
        if !(sigma > 0.0 && mean_error > 0.0) {
            return fail(TrStatus::InvalidArgument, "sigma and mean_error must be > 0");
        }
        match posterior_update(&Belief { z, sigma }, observation, n, mean_error) {
            Some(p) => {
                *out = TrPosterior {
                    q_hat: p.q_hat,
                    sigma_hat: p.sigma_hat,
                };
                TrStatus::Ok
            }
            None => fail(TrStatus::InvalidArgument, "n must be at least 1"),
        }
    })
}

/// Closed-form `E[(x_n - x_{n+1})²]` when the `(n+1)`-th reviewer shifts by `delta`.
#[no_mangle]
pub extern "C" fn tr_analytic_deviation_loss(variance: f64, n: usize, delta: f64) -> f64 {
    nash::analytic_deviation_loss(variance, n, delta)
}

/// Monte Carlo estimate of the deviation loss around `q_true`.
///
/// # Safety
/// `out` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tr_simulate_deviation_loss(
    variance: f64,
    n: usize,
    delta: f64,
    trials: u64,
    seed: u64,
    q_true: f64,
    out: *mut TrEstimate,
) -> TrStatus {
    guard(|| {
        let out = try_status!(unsafe { out_ref(out, "out") });
        let exp = DeviationExperiment {
            variance,
            n,
            delta,
            trials,
            seed,
        };
        match nash::simulate_deviation_loss(&exp, q_true) {
            Ok(e) => {
                *out = TrEstimate {
                    estimate: e.estimate,
                    std_error: e.std_error,
                };
                TrStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

unsafe fn opt_str<'a>(s: *const c_char, name: &str) -> Result<Option<&'a str>, TrStatus> {
    if s.is_null() {
        return Ok(None);
    }
    // SAFETY: the caller guarantees a NUL-terminated string.
    unsafe { CStr::from_ptr(s) }
        .to_str()
        .map(Some)
        .map_err(|_| fail(TrStatus::InvalidArgument, format!("`{name}` is not UTF-8")))
}

/// Runs one repetition described by TOML `config` text (NULL means all
/// defaults), narrowed to `policy` (e.g. `"selfish:0.1"`) and `user_model`
/// (`"model1"` or `"model2"`). Both selectors may be NULL when the config
/// already names exactly one cell. Writes NULL to `out` on failure.
///
/// # Safety
/// String arguments must be NULL or NUL-terminated; `out` must be NULL or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tr_trace_run(
    config: *const c_char,
    policy: *const c_char,
    user_model: *const c_char,
    seed: u64,
    out: *mut *mut TrTrace,
) -> TrStatus {
    guard(|| {
        let out = try_status!(unsafe { out_ref(out, "out") });
        *out = ptr::null_mut();
        let text = try_status!(unsafe { opt_str(config, "config") }).unwrap_or("");
        let policy = try_status!(unsafe { opt_str(policy, "policy") });
        let model = match try_status!(unsafe { opt_str(user_model, "user_model") }) {
            None => None,
            Some(m) => match m.parse::<UserModel>() {
                Ok(m) => Some(m),
                Err(reason) => return fail(TrStatus::Config, reason),
            },
        };
        let mut suite = try_status!(parse_config(text).map_err(from_error));
        try_status!(suite.select(policy, model).map_err(from_error));
        let cells = suite.cells();
        let [(model, row)] = cells.as_slice() else {
            return fail(
                TrStatus::Config,
                format!(
                    "expected exactly one (policy, user_model) cell, got {}",
                    cells.len()
                ),
            );
        };
        let mut cfg = try_status!(suite.cell_config(*model, row).map_err(from_error));
        cfg.seed = seed;
        let inner = try_status!(run_simulation(&cfg).map_err(from_error));
        *out = Box::into_raw(Box::new(TrTrace { inner }));
        TrStatus::Ok
    })
}

/// Releases a trace. NULL is ignored.
///
/// # Safety
/// `trace` must be NULL or a pointer from [`tr_trace_run`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tr_trace_free(trace: *mut TrTrace) {
    if !trace.is_null() {
        // SAFETY: ownership returns to Rust exactly once.
        drop(unsafe { Box::from_raw(trace) });
    }
}

unsafe fn trace_ref<'a>(trace: *const TrTrace) -> Result<&'a SimTrace, TrStatus> {
    // SAFETY: forwarded caller guarantee.
    unsafe { trace.as_ref() }
        .map(|t| &t.inner)
        .ok_or_else(|| fail(TrStatus::NullPointer, "`trace` is NULL"))
}

/// Number of users in the traced population.
///
/// # Safety
/// `trace` and `out` must be NULL or valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tr_trace_num_users(trace: *const TrTrace, out: *mut usize) -> TrStatus {
    guard(|| {
        let t = try_status!(unsafe { trace_ref(trace) });
        let out = try_status!(unsafe { out_ref(out, "out") });
        *out = t.typical_errors.len();
        TrStatus::Ok
    })
}

/// Number of recorded snapshots.
///
/// # Safety
/// `trace` and `out` must be NULL or valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tr_trace_snapshot_count(trace: *const TrTrace, out: *mut usize) -> TrStatus {
    guard(|| {
        let t = try_status!(unsafe { trace_ref(trace) });
        let out = try_status!(unsafe { out_ref(out, "out") });
        *out = t.snapshots.len();
        TrStatus::Ok
    })
}

/// Round and global loss of snapshot `index` (0-based).
///
/// # Safety
/// `trace`, `round` and `global_loss` must be NULL or valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tr_trace_snapshot(
    trace: *const TrTrace,
    index: usize,
    round: *mut u64,
    global_loss: *mut f64,
) -> TrStatus {
    guard(|| {
        let t = try_status!(unsafe { trace_ref(trace) });
        let round = try_status!(unsafe { out_ref(round, "round") });
        let global_loss = try_status!(unsafe { out_ref(global_loss, "global_loss") });
        let Some(s) = t.snapshots.get(index) else {
            return fail(
                TrStatus::IndexOutOfRange,
                format!("snapshot {index} out of range (trace has {})", t.snapshots.len()),
            );
        };
        *round = s.round;
        *global_loss = s.global_loss;
        TrStatus::Ok
    })
}

/// Copies the reputations of snapshot `index` into `buf`, which must hold
/// `len` values with `len` equal to the number of users.
///
/// # Safety
/// `trace` must be NULL or a live handle; `buf` must be NULL or valid for
/// `len` writes.
#[no_mangle]
pub unsafe extern "C" fn tr_trace_reputations(
    trace: *const TrTrace,
    index: usize,
    buf: *mut f64,
    len: usize,
) -> TrStatus {
    guard(|| {
        let t = try_status!(unsafe { trace_ref(trace) });
        if buf.is_null() {
            return fail(TrStatus::NullPointer, "`buf` is NULL");
        }
        let Some(s) = t.snapshots.get(index) else {
            return fail(
                TrStatus::IndexOutOfRange,
                format!("snapshot {index} out of range (trace has {})", t.snapshots.len()),
            );
        };
        if len != s.reputations.len() {
            return fail(
                TrStatus::InvalidArgument,
                format!(
                    "buffer holds {len} values, trace has {} users",
                    s.reputations.len()
                ),
            );
        }
        // SAFETY: `buf` is valid for `len` writes and does not alias the trace.
        unsafe { ptr::copy_nonoverlapping(s.reputations.as_ptr(), buf, len) };
        TrStatus::Ok
    })
}

/// Copies each user's typical error σ^t into `buf` of `len` values.
///
/// # Safety
/// `trace` must be NULL or a live handle; `buf` must be NULL or valid for
/// `len` writes.
#[no_mangle]
pub unsafe extern "C" fn tr_trace_typical_errors(
    trace: *const TrTrace,
    buf: *mut f64,
    len: usize,
) -> TrStatus {
    guard(|| {
        let t = try_status!(unsafe { trace_ref(trace) });
        if buf.is_null() {
            return fail(TrStatus::NullPointer, "`buf` is NULL");
        }
        if len != t.typical_errors.len() {
            return fail(
                TrStatus::InvalidArgument,
                format!(
                    "buffer holds {len} values, trace has {} users",
                    t.typical_errors.len()
                ),
            );
        }
        // SAFETY: `buf` is valid for `len` writes and does not alias the trace.
        unsafe { ptr::copy_nonoverlapping(t.typical_errors.as_ptr(), buf, len) };
        TrStatus::Ok
    })
}
