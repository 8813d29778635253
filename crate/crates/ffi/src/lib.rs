//! C ABI over the qpfer toolkit.
//!
//! Value types cross the boundary as plain structs of doubles, schedules
//! travel as opaque handles with accessor functions, and every fallible
//! call returns a [`QpferStatus`]. After a failing call,
//! [`qpfer_last_error_message`] describes what went wrong on the current
//! thread. The build script renders this module's surface into
//! `include/qpfer.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use qpfer::code::{decoded_distribution, ProtocolVariant};
use qpfer::error::Error;
use qpfer::montecarlo::{run, ProtocolConfig};
use qpfer::optics::equivalence_report;
use qpfer::pauli::ErrorDistribution;
use qpfer::postprocess::{
    binary_entropy, bstep_distribution, css_key_rate, four_state_working_distribution,
    pooling_feasibility, pooling_rates, pstep_distribution, schedule_search, FeasibleSchedule,
    ResidualRates, ScheduleStep, SearchBounds,
};
use qpfer::threshold::{baseline_threshold, find_threshold, ChannelFamily};

/// Bumped whenever the exported surface changes incompatibly.
pub const QPFER_ABI_VERSION: u32 = 1;

/// Selector for the protocol variant arguments.
pub const QPFER_VARIANT_FOUR_STATE: u32 = 0;
/// Selector for the protocol variant arguments.
pub const QPFER_VARIANT_SIX_STATE: u32 = 1;

/// Channel family selector: equal X, Y, and Z weights.
pub const QPFER_FAMILY_SYMMETRIC: u32 = 0;
/// Channel family selector: equal X and Z weights, no Y component.
pub const QPFER_FAMILY_XZ_ONLY: u32 = 1;
/// Channel family selector: weights taken from the `w_x, w_y, w_z` arguments.
pub const QPFER_FAMILY_CUSTOM: u32 = 2;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpferStatus {
    /// The call succeeded and all output parameters are set.
    Ok = 0,
    /// An argument was rejected; outputs are untouched.
    InvalidInput = 1,
    /// The search space contains no feasible answer; outputs are untouched.
    Infeasible = 2,
    /// An unexpected internal failure; outputs are untouched.
    Internal = 3,
}

/// A Pauli error distribution: four probabilities summing to one.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpferDist {
    pub p_i: f64,
    pub p_x: f64,
    pub p_y: f64,
    pub p_z: f64,
}

/// Search space for schedule searches and threshold scans.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpferBounds {
    /// Maximum number of interleaved pair-parity steps.
    pub max_b: u32,
    /// Maximum number of interleaved pooling steps.
    pub max_p_rounds: u32,
    /// Largest final pooling width considered.
    pub r_max: u64,
    /// Feasibility target both final-step bounds must meet.
    pub target: f64,
}

/// A feasible post-processing schedule together with its residual rates
/// and key rate. Obtain from [`qpfer_schedule_search`], inspect through
/// the `qpfer_schedule_*` accessors, release with [`qpfer_schedule_free`].
pub struct QpferSchedule {
    inner: FeasibleSchedule,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<Vec<u8>>) {
    let stored = CString::new(message).unwrap_or_else(|_| {
        CString::new("error message contained an interior NUL").expect("static text")
    });
    LAST_ERROR.with(|slot| *slot.borrow_mut() = stored);
}

fn fail(err: &Error) -> QpferStatus {
    set_error(err.to_string());
    match err {
        Error::InvalidArgument(_)
        | Error::InvalidDistribution(_)
        | Error::EmptyCheckSet(_)
        | Error::Config(_) => QpferStatus::InvalidInput,
        _ => QpferStatus::Internal,
    }
}

fn invalid(message: &str) -> QpferStatus {
    set_error(message);
    QpferStatus::InvalidInput
}

/// Runs `f`, converting a panic into [`QpferStatus::Internal`] instead of
/// unwinding across the ABI boundary.
fn catching(f: impl FnOnce() -> QpferStatus) -> QpferStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            QpferStatus::Internal
        }
    }
}

fn to_dist(d: QpferDist) -> Result<ErrorDistribution, Error> {
    ErrorDistribution::new(d.p_i, d.p_x, d.p_y, d.p_z)
}

fn from_dist(d: &ErrorDistribution) -> QpferDist {
    QpferDist {
        p_i: d.p_i(),
        p_x: d.p_x(),
        p_y: d.p_y(),
        p_z: d.p_z(),
    }
}

fn to_bounds(b: QpferBounds) -> SearchBounds {
    SearchBounds {
        max_b: b.max_b,
        max_p_rounds: b.max_p_rounds,
        r_max: b.r_max,
        target: b.target,
    }
}

fn to_variant(variant: u32) -> Result<ProtocolVariant, Error> {
    match variant {
        QPFER_VARIANT_FOUR_STATE => Ok(ProtocolVariant::FourState),
        QPFER_VARIANT_SIX_STATE => Ok(ProtocolVariant::SixState),
        other => Err(Error::InvalidArgument(format!(
            "unknown variant selector {other}"
        ))),
    }
}

fn to_family(family: u32, w_x: f64, w_y: f64, w_z: f64) -> Result<ChannelFamily, Error> {
    match family {
        QPFER_FAMILY_SYMMETRIC => Ok(ChannelFamily::Symmetric),
        QPFER_FAMILY_XZ_ONLY => Ok(ChannelFamily::XzOnly),
        QPFER_FAMILY_CUSTOM => Ok(ChannelFamily::Custom { w_x, w_y, w_z }),
        other => Err(Error::InvalidArgument(format!(
            "unknown family selector {other}"
        ))),
    }
}

/// The ABI revision compiled into this library.
#[no_mangle]
pub extern "C" fn qpfer_abi_version() -> u32 {
    QPFER_ABI_VERSION
}

/// Message for the most recent failure on the calling thread.
///
/// The pointer stays valid until the next failing qpfer call on the same
/// thread; do not free it. Returns an empty string when nothing failed yet.
#[no_mangle]
pub extern "C" fn qpfer_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// The default search space used by the command-line tool.
#[no_mangle]
pub extern "C" fn qpfer_default_bounds() -> QpferBounds {
    let b = SearchBounds::default();
    QpferBounds {
        max_b: b.max_b,
        max_p_rounds: b.max_p_rounds,
        r_max: b.r_max,
        target: b.target,
    }
}

/// Distribution of residual errors on accepted decoded qubits, plus the
/// probability that a code survives the parity check.
///
/// # Safety
///
/// `out` and `out_survival` must be valid for writes or null (null outputs
/// are rejected with [`QpferStatus::InvalidInput`]).
#[no_mangle]
pub unsafe extern "C" fn qpfer_decoded_distribution(
    channel: QpferDist,
    out: *mut QpferDist,
    out_survival: *mut f64,
) -> QpferStatus {
    if out.is_null() || out_survival.is_null() {
        return invalid("output pointers must not be null");
    }
    let channel = match to_dist(channel) {
        Ok(d) => d,
        Err(e) => return fail(&e),
    };
    let (decoded, survival) = decoded_distribution(&channel);
    *out = from_dist(&decoded);
    *out_survival = survival;
    QpferStatus::Ok
}

/// Bit-flip and phase-flip rates of a distribution.
///
/// # Safety
///
/// `out_bit` and `out_phase` must be valid for writes or null.
#[no_mangle]
pub unsafe extern "C" fn qpfer_flip_rates(
    dist: QpferDist,
    out_bit: *mut f64,
    out_phase: *mut f64,
) -> QpferStatus {
    if out_bit.is_null() || out_phase.is_null() {
        return invalid("output pointers must not be null");
    }
    let dist = match to_dist(dist) {
        Ok(d) => d,
        Err(e) => return fail(&e),
    };
    let (bit, phase) = dist.flip_rates();
    *out_bit = bit;
    *out_phase = phase;
    QpferStatus::Ok
}

/// The pair-parity purification step on a distribution, with the pair
/// survival probability.
///
/// # Safety
///
/// `out` and `out_survival` must be valid for writes or null.
#[no_mangle]
pub unsafe extern "C" fn qpfer_bstep(
    dist: QpferDist,
    out: *mut QpferDist,
    out_survival: *mut f64,
) -> QpferStatus {
    if out.is_null() || out_survival.is_null() {
        return invalid("output pointers must not be null");
    }
    let dist = match to_dist(dist) {
        Ok(d) => d,
        Err(e) => return fail(&e),
    };
    let (next, survival) = bstep_distribution(&dist);
    *out = from_dist(&next);
    *out_survival = survival;
    QpferStatus::Ok
}

/// The parity-pooling purification step over `r` draws.
///
/// # Safety
///
/// `out` must be valid for writes or null.
#[no_mangle]
pub unsafe extern "C" fn qpfer_pstep(dist: QpferDist, r: u64, out: *mut QpferDist) -> QpferStatus {
    if out.is_null() {
        return invalid("output pointer must not be null");
    }
    catching(|| {
        let dist = match to_dist(dist) {
            Ok(d) => d,
            Err(e) => return fail(&e),
        };
        match pstep_distribution(&dist, r) {
            Ok(next) => {
                *out = from_dist(&next);
                QpferStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Exact marginal flip rates after pooling `r` draws.
///
/// # Safety
///
/// `out_bit` and `out_phase` must be valid for writes or null.
#[no_mangle]
pub unsafe extern "C" fn qpfer_pooling_rates(
    dist: QpferDist,
    r: u64,
    out_bit: *mut f64,
    out_phase: *mut f64,
) -> QpferStatus {
    if out_bit.is_null() || out_phase.is_null() {
        return invalid("output pointers must not be null");
    }
    let dist = match to_dist(dist) {
        Ok(d) => d,
        Err(e) => return fail(&e),
    };
    match pooling_rates(&dist, r) {
        Ok(rates) => {
            *out_bit = rates.e_bit;
            *out_phase = rates.e_phase;
            QpferStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Certified upper bounds for a final pooling step of width `r`, and
/// whether both meet `target`.
///
/// # Safety
///
/// The three output pointers must be valid for writes or null.
#[no_mangle]
pub unsafe extern "C" fn qpfer_pooling_feasibility(
    dist: QpferDist,
    r: u64,
    target: f64,
    out_feasible: *mut bool,
    out_bit_bound: *mut f64,
    out_phase_bound: *mut f64,
) -> QpferStatus {
    if out_feasible.is_null() || out_bit_bound.is_null() || out_phase_bound.is_null() {
        return invalid("output pointers must not be null");
    }
    let dist = match to_dist(dist) {
        Ok(d) => d,
        Err(e) => return fail(&e),
    };
    match pooling_feasibility(&dist, r, target) {
        Ok(check) => {
            *out_feasible = check.feasible;
            *out_bit_bound = check.bit_bound;
            *out_phase_bound = check.phase_bound;
            QpferStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Binary entropy in bits; rejects arguments outside `[0, 1]`.
///
/// # Safety
///
/// `out` must be valid for writes or null.
#[no_mangle]
pub unsafe extern "C" fn qpfer_binary_entropy(p: f64, out: *mut f64) -> QpferStatus {
    if out.is_null() {
        return invalid("output pointer must not be null");
    }
    if !(0.0..=1.0).contains(&p) {
        return invalid("entropy argument must lie in [0, 1]");
    }
    *out = binary_entropy(p);
    QpferStatus::Ok
}

/// Asymptotic CSS distillation rate for the given residual rates; negative
/// values mean no key.
///
/// # Safety
///
/// `out` must be valid for writes or null.
#[no_mangle]
pub unsafe extern "C" fn qpfer_css_key_rate(
    e_bit: f64,
    e_phase: f64,
    out: *mut f64,
) -> QpferStatus {
    if out.is_null() {
        return invalid("output pointer must not be null");
    }
    if !(0.0..=1.0).contains(&e_bit) || !(0.0..=1.0).contains(&e_phase) {
        return invalid("residual rates must lie in [0, 1]");
    }
    *out = css_key_rate(ResidualRates { e_bit, e_phase });
    QpferStatus::Ok
}

/// The working distribution a four-state session plans against, given its
/// two measured rates.
///
/// # Safety
///
/// `out` must be valid for writes or null.
#[no_mangle]
pub unsafe extern "C" fn qpfer_four_state_working_distribution(
    bit_rate: f64,
    phase_rate: f64,
    out: *mut QpferDist,
) -> QpferStatus {
    if out.is_null() {
        return invalid("output pointer must not be null");
    }
    match four_state_working_distribution(bit_rate, phase_rate) {
        Ok(dist) => {
            *out = from_dist(&dist);
            QpferStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// The physical channel a family produces at the given scale.
///
/// # Safety
///
/// `out` must be valid for writes or null.
#[no_mangle]
pub unsafe extern "C" fn qpfer_family_distribution(
    family: u32,
    w_x: f64,
    w_y: f64,
    w_z: f64,
    scale: f64,
    out: *mut QpferDist,
) -> QpferStatus {
    if out.is_null() {
        return invalid("output pointer must not be null");
    }
    let family = match to_family(family, w_x, w_y, w_z) {
        Ok(f) => f,
        Err(e) => return fail(&e),
    };
    match family.distribution(scale) {
        Ok(dist) => {
            *out = from_dist(&dist);
            QpferStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Searches the bounded schedule space for a feasible post-processing
/// plan. On success writes a handle the caller must release with
/// [`qpfer_schedule_free`]; when nothing in the space works, returns
/// [`QpferStatus::Infeasible`] and writes null.
///
/// # Safety
///
/// `out` must be valid for writes or null.
#[no_mangle]
pub unsafe extern "C" fn qpfer_schedule_search(
    dist: QpferDist,
    bounds: QpferBounds,
    out: *mut *mut QpferSchedule,
) -> QpferStatus {
    if out.is_null() {
        return invalid("output pointer must not be null");
    }
    catching(|| {
        let dist = match to_dist(dist) {
            Ok(d) => d,
            Err(e) => return fail(&e),
        };
        match schedule_search(&dist, &to_bounds(bounds)) {
            Ok(Some(found)) => {
                *out = Box::into_raw(Box::new(QpferSchedule { inner: found }));
                QpferStatus::Ok
            }
            Ok(None) => {
                *out = ptr::null_mut();
                set_error("no feasible schedule within the given bounds");
                QpferStatus::Infeasible
            }
            Err(e) => fail(&e),
        }
    })
}

/// Number of interleaved steps in the schedule (the final pooling step is
/// not counted). Returns 0 on a null handle.
///
/// # Safety
///
/// `handle` must be null or a live pointer from [`qpfer_schedule_search`].
#[no_mangle]
pub unsafe extern "C" fn qpfer_schedule_step_count(handle: *const QpferSchedule) -> usize {
    match handle.as_ref() {
        Some(h) => h.inner.schedule.steps().len(),
        None => 0,
    }
}

/// Interleaved step at `index`: writes 0 for a pair-parity step, or the
/// pooling width for a pooling step.
///
/// # Safety
///
/// `handle` must be null or a live pointer from [`qpfer_schedule_search`];
/// `out_width` must be valid for writes or null.
#[no_mangle]
pub unsafe extern "C" fn qpfer_schedule_step(
    handle: *const QpferSchedule,
    index: usize,
    out_width: *mut u64,
) -> QpferStatus {
    if out_width.is_null() {
        return invalid("output pointer must not be null");
    }
    let Some(h) = handle.as_ref() else {
        return invalid("schedule handle must not be null");
    };
    match h.inner.schedule.steps().get(index) {
        Some(ScheduleStep::B) => {
            *out_width = 0;
            QpferStatus::Ok
        }
        Some(ScheduleStep::P { r }) => {
            *out_width = *r;
            QpferStatus::Ok
        }
        None => invalid("step index out of range"),
    }
}

/// Width of the final pooling step. Returns 0 on a null handle.
///
/// # Safety
///
/// `handle` must be null or a live pointer from [`qpfer_schedule_search`].
#[no_mangle]
pub unsafe extern "C" fn qpfer_schedule_final_r(handle: *const QpferSchedule) -> u64 {
    match handle.as_ref() {
        Some(h) => h.inner.schedule.final_r(),
        None => 0,
    }
}

/// Residual bit and phase rates the schedule certifies.
///
/// # Safety
///
/// `handle` must be null or a live pointer from [`qpfer_schedule_search`];
/// the output pointers must be valid for writes or null.
#[no_mangle]
pub unsafe extern "C" fn qpfer_schedule_residual(
    handle: *const QpferSchedule,
    out_bit: *mut f64,
    out_phase: *mut f64,
) -> QpferStatus {
    if out_bit.is_null() || out_phase.is_null() {
        return invalid("output pointers must not be null");
    }
    let Some(h) = handle.as_ref() else {
        return invalid("schedule handle must not be null");
    };
    *out_bit = h.inner.residual.e_bit;
    *out_phase = h.inner.residual.e_phase;
    QpferStatus::Ok
}

/// Key rate of the schedule. Returns NaN on a null handle.
///
/// # Safety
///
/// `handle` must be null or a live pointer from [`qpfer_schedule_search`].
#[no_mangle]
pub unsafe extern "C" fn qpfer_schedule_key_rate(handle: *const QpferSchedule) -> f64 {
    match handle.as_ref() {
        Some(h) => h.inner.key_rate,
        None => f64::NAN,
    }
}

/// Releases a schedule handle. Null is a no-op.
///
/// # Safety
///
/// `handle` must be null or a pointer from [`qpfer_schedule_search`] that
/// has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn qpfer_schedule_free(handle: *mut QpferSchedule) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Certifies the largest channel scale of a family at which the bounded
/// pipeline still distills key. With `use_decode` false the code stage is
/// skipped and the bare channel is post-processed directly.
///
/// Writes the certified scale and the first infeasible scale probed (NaN
/// when the whole scan stayed feasible).
///
/// # Safety
///
/// `out_certified` and `out_first_infeasible` must be valid for writes or
/// null.
#[no_mangle]
pub unsafe extern "C" fn qpfer_find_threshold(
    family: u32,
    w_x: f64,
    w_y: f64,
    w_z: f64,
    variant: u32,
    precision: f64,
    bounds: QpferBounds,
    use_decode: bool,
    out_certified: *mut f64,
    out_first_infeasible: *mut f64,
) -> QpferStatus {
    if out_certified.is_null() || out_first_infeasible.is_null() {
        return invalid("output pointers must not be null");
    }
    catching(|| {
        let family = match to_family(family, w_x, w_y, w_z) {
            Ok(f) => f,
            Err(e) => return fail(&e),
        };
        let variant = match to_variant(variant) {
            Ok(v) => v,
            Err(e) => return fail(&e),
        };
        let result = if use_decode {
            find_threshold(&family, variant, precision, &to_bounds(bounds))
        } else {
            baseline_threshold(&family, variant, precision, &to_bounds(bounds))
        };
        match result {
            Ok(result) => {
                *out_certified = result.certified_scale;
                *out_first_infeasible = result.first_infeasible_scale.unwrap_or(f64::NAN);
                QpferStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Runs the full protocol simulation. `config_json` is a JSON document
/// with the same schema as the `[simulate]` section of the command-line
/// tool's config file; the report comes back as a JSON document the caller
/// must release with [`qpfer_string_free`].
///
/// The protocol outcome (abort flag, feasibility, key length) is encoded
/// in the report, not in the status: the status only reports whether the
/// simulation itself could run.
///
/// # Safety
///
/// `config_json` must be a NUL-terminated string; `out_json` must be valid
/// for writes or null.
#[no_mangle]
pub unsafe extern "C" fn qpfer_simulate_json(
    config_json: *const c_char,
    out_json: *mut *mut c_char,
) -> QpferStatus {
    if config_json.is_null() || out_json.is_null() {
        return invalid("config and output pointers must not be null");
    }
    let text = match CStr::from_ptr(config_json).to_str() {
        Ok(text) => text,
        Err(_) => return invalid("config must be valid UTF-8"),
    };
    catching(|| {
        let config: ProtocolConfig = match serde_json::from_str(text) {
            Ok(config) => config,
            Err(e) => return invalid(&format!("cannot parse config: {e}")),
        };
        let report = match run(&config) {
            Ok(report) => report,
            Err(e) => return fail(&e),
        };
        let rendered = match serde_json::to_string(&report) {
            Ok(rendered) => rendered,
            Err(e) => {
                set_error(format!("cannot render report: {e}"));
                return QpferStatus::Internal;
            }
        };
        match CString::new(rendered) {
            Ok(rendered) => {
                *out_json = rendered.into_raw();
                QpferStatus::Ok
            }
            Err(_) => {
                set_error("report contained an interior NUL");
                QpferStatus::Internal
            }
        }
    })
}

/// Releases a string returned by this library. Null is a no-op.
///
/// # Safety
///
/// `s` must be null or a pointer returned by a qpfer function that has not
/// been freed yet.
#[no_mangle]
pub unsafe extern "C" fn qpfer_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Largest probability deviation between the optical receiver model and
/// the record-level decode semantics, swept over every code state and
/// joint Pauli error of the variant. Values above 1e-12 indicate a bug.
///
/// # Safety
///
/// `out` must be valid for writes or null.
#[no_mangle]
pub unsafe extern "C" fn qpfer_optics_max_deviation(variant: u32, out: *mut f64) -> QpferStatus {
    if out.is_null() {
        return invalid("output pointer must not be null");
    }
    catching(|| {
        let variant = match to_variant(variant) {
            Ok(v) => v,
            Err(e) => return fail(&e),
        };
        *out = equivalence_report(variant).max_deviation;
        QpferStatus::Ok
    })
}
