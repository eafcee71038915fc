//! C ABI over `roa-core`.
//!
//! Problems and results are opaque handles created by `roa_*_new`/`load`
//! functions and released with the matching `*_free`. Fallible calls return a
//! [`RoaStatus`]; on failure, [`roa_last_error`] describes the cause (per
//! thread). Strings returned by the library are freed with
//! [`roa_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use roa_core::cli::{self, ProblemFile, ResultFile};
use roa_core::relax::Degrees;
use roa_core::solver::SolveStatus;
use roa_core::RoaError;

/// Status codes of fallible calls.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoaStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Problem or result text could not be parsed.
    Parse = 3,
    /// Arguments are inconsistent (dimensions, indices, degrees).
    InvalidInput = 4,
    /// The conic solver did not reach a usable solution.
    Solver = 5,
    /// A certificate failed validation.
    Validation = 6,
    Io = 7,
    /// The library panicked; the handle arguments should be discarded.
    Panic = 8,
}

/// Solver outcome of one record.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoaSolveStatus {
    /// Assembly failed before the solver ran.
    NotSolved = 0,
    Optimal = 1,
    NearOptimal = 2,
    Infeasible = 3,
    Unbounded = 4,
    NumericalFailure = 5,
}

impl From<Option<SolveStatus>> for RoaSolveStatus {
    fn from(s: Option<SolveStatus>) -> Self {
        match s {
            None => RoaSolveStatus::NotSolved,
            Some(SolveStatus::Optimal) => RoaSolveStatus::Optimal,
            Some(SolveStatus::NearOptimal) => RoaSolveStatus::NearOptimal,
            Some(SolveStatus::Infeasible) => RoaSolveStatus::Infeasible,
            Some(SolveStatus::Unbounded) => RoaSolveStatus::Unbounded,
            Some(SolveStatus::NumericalFailure) => RoaSolveStatus::NumericalFailure,
        }
    }
}

/// Summary of one result record. Absent values are NaN.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct RoaRecordInfo {
    pub deg_w: u32,
    pub deg_v: u32,
    pub k: u32,
    pub status: RoaSolveStatus,
    /// Nonzero when the record carries `w` and `v`.
    pub has_certificate: i32,
    pub d_star: f64,
    pub p_star: f64,
    pub vol_inner: f64,
    pub relative_error: f64,
    pub running_min_relative_error: f64,
    pub wall_time_s: f64,
}

/// Validation counts for one record.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct RoaValidation {
    pub samples: usize,
    pub violations: usize,
    pub uncertain: usize,
    /// Number of certificate sign checks that failed.
    pub failed_spot_checks: usize,
}

/// Opaque problem definition.
pub struct RoaProblem(ProblemFile);

/// Opaque result set.
pub struct RoaResult(ResultFile);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(RoaStatus, String);

impl From<RoaError> for Failure {
    fn from(e: RoaError) -> Self {
        let status = match &e {
            RoaError::Parse(_) => RoaStatus::Parse,
            RoaError::Solver { .. } => RoaStatus::Solver,
            RoaError::Validation(_) => RoaStatus::Validation,
            RoaError::Io(_) => RoaStatus::Io,
            _ => RoaStatus::InvalidInput,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: RoaStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RoaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_error();
            RoaStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RoaStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(RoaStatus::NullArgument, format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(RoaStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .map_or_else(|| fail(RoaStatus::NullArgument, format!("{what} is null")), Ok)
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .map_or_else(|| fail(RoaStatus::NullArgument, format!("{what} is null")), Ok)
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next library call on the same thread.
#[no_mangle]
pub extern "C" fn roa_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version (static string).
#[no_mangle]
pub extern "C" fn roa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn roa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a problem from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn roa_problem_parse(toml: *const c_char, out: *mut *mut RoaProblem) -> RoaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let p = ProblemFile::parse(str_arg(toml, "toml")?)?;
        *out = Box::into_raw(Box::new(RoaProblem(p)));
        Ok(())
    })
}

/// Loads a problem file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn roa_problem_load(path: *const c_char, out: *mut *mut RoaProblem) -> RoaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let p = ProblemFile::load(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(RoaProblem(p)));
        Ok(())
    })
}

/// Number of state variables.
///
/// # Safety
/// `problem` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn roa_problem_dim(problem: *const RoaProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.0.n)
}

/// # Safety
/// `problem` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn roa_problem_free(problem: *mut RoaProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Solves the relaxations for `len` degree pairs, at most `jobs` at a time
/// (0: one per core). With `with_volume` nonzero, inner-set errors are
/// estimated with the problem's sampling plan. Failed solves become records
/// without certificates and make the call return `Solver`; `*out` is set
/// either way.
///
/// # Safety
/// `deg_w` and `deg_v` must point to `len` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn roa_sweep(
    problem: *const RoaProblem,
    deg_w: *const u32,
    deg_v: *const u32,
    len: usize,
    jobs: usize,
    with_volume: i32,
    out: *mut *mut RoaResult,
) -> RoaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let problem = ref_arg(problem, "problem")?;
        if len == 0 {
            return fail(RoaStatus::InvalidInput, "empty degree list");
        }
        if deg_w.is_null() || deg_v.is_null() {
            return fail(RoaStatus::NullArgument, "degree arrays are null");
        }
        let ws = std::slice::from_raw_parts(deg_w, len);
        let vs = std::slice::from_raw_parts(deg_v, len);
        let degrees: Vec<Degrees> = ws.iter().zip(vs).map(|(w, v)| Degrees::new(*w, *v)).collect();
        let result = cli::sweep(&problem.0, &degrees, jobs, with_volume != 0)?;
        let failed = result.records.iter().find(|r| r.w.is_none()).map(|r| {
            format!(
                "deg_w {} deg_v {}: {}",
                r.deg_w,
                r.deg_v,
                r.error.as_deref().unwrap_or("no certificate")
            )
        });
        *out = Box::into_raw(Box::new(RoaResult(result)));
        match failed {
            Some(msg) => fail(RoaStatus::Solver, msg),
            None => Ok(()),
        }
    })
}

/// Solves one relaxation; see [`roa_sweep`].
///
/// # Safety
/// As for [`roa_sweep`].
#[no_mangle]
pub unsafe extern "C" fn roa_solve(
    problem: *const RoaProblem,
    deg_w: u32,
    deg_v: u32,
    with_volume: i32,
    out: *mut *mut RoaResult,
) -> RoaStatus {
    roa_sweep(problem, &deg_w, &deg_v, 1, 1, with_volume, out)
}

/// Parses a result from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn roa_result_parse(json: *const c_char, out: *mut *mut RoaResult) -> RoaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let r = ResultFile::parse(str_arg(json, "json")?)?;
        *out = Box::into_raw(Box::new(RoaResult(r)));
        Ok(())
    })
}

/// Loads a result file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn roa_result_load(path: *const c_char, out: *mut *mut RoaResult) -> RoaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let r = ResultFile::load(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(RoaResult(r)));
        Ok(())
    })
}

/// Writes a result file.
///
/// # Safety
/// `result` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn roa_result_save(result: *const RoaResult, path: *const c_char) -> RoaStatus {
    guard(|| {
        let r = ref_arg(result, "result")?;
        r.0.save(Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// The result as JSON (free with [`roa_string_free`]), or null.
///
/// # Safety
/// `result` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn roa_result_to_json(result: *const RoaResult) -> *mut c_char {
    let mut s = ptr::null_mut();
    let status = guard(|| {
        s = into_c_string(ref_arg(result, "result")?.0.to_json());
        Ok(())
    });
    if status == RoaStatus::Ok {
        s
    } else {
        ptr::null_mut()
    }
}

/// # Safety
/// `result` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn roa_result_free(result: *mut RoaResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Number of records (0 for null).
///
/// # Safety
/// `result` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn roa_result_len(result: *const RoaResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.records.len())
}

/// Number of state variables of the result's problem (0 for null).
///
/// # Safety
/// `result` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn roa_result_dim(result: *const RoaResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.problem.n)
}

/// # Safety
/// `result` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn roa_result_record(
    result: *const RoaResult,
    index: usize,
    out: *mut RoaRecordInfo,
) -> RoaStatus {
    guard(|| {
        let r = ref_arg(result, "result")?;
        let out = out_arg(out, "out")?;
        let Some(rec) = r.0.records.get(index) else {
            return fail(RoaStatus::InvalidInput, format!("no record {index}"));
        };
        let nan = |x: Option<f64>| x.unwrap_or(f64::NAN);
        *out = RoaRecordInfo {
            deg_w: rec.deg_w,
            deg_v: rec.deg_v,
            k: rec.k,
            status: rec.status.into(),
            has_certificate: i32::from(rec.w.is_some() && rec.v.is_some()),
            d_star: nan(rec.d_star),
            p_star: nan(rec.p_star),
            vol_inner: nan(rec.vol_inner),
            relative_error: nan(rec.relative_error),
            running_min_relative_error: nan(rec.running_min_relative_error),
            wall_time_s: rec.wall_time_s,
        };
        Ok(())
    })
}

unsafe fn eval_record(
    result: *const RoaResult,
    index: usize,
    point: *const f64,
    dim: usize,
    out: *mut f64,
    time: Option<f64>,
) -> RoaStatus {
    guard(|| {
        let r = ref_arg(result, "result")?;
        let out = out_arg(out, "out")?;
        let n = r.0.problem.n;
        if dim != n {
            return fail(
                RoaStatus::InvalidInput,
                format!("point has {dim} entries, expected {n}"),
            );
        }
        if point.is_null() {
            return fail(RoaStatus::NullArgument, "point is null");
        }
        let Some(rec) = r.0.records.get(index) else {
            return fail(RoaStatus::InvalidInput, format!("no record {index}"));
        };
        let x = std::slice::from_raw_parts(point, dim);
        let poly = match time {
            None => rec.w_poly(n)?,
            Some(_) => rec.v_poly(n)?,
        };
        let Some(poly) = poly else {
            return fail(
                RoaStatus::InvalidInput,
                format!("record {index} carries no certificate"),
            );
        };
        *out = match time {
            None => poly.eval(x),
            Some(t) => {
                let tx: Vec<f64> = std::iter::once(t).chain(x.iter().copied()).collect();
                poly.eval(&tx)
            }
        };
        Ok(())
    })
}

/// Evaluates `w` of record `index` at `point` (`dim` entries).
///
/// # Safety
/// `point` must hold `dim` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn roa_result_eval_w(
    result: *const RoaResult,
    index: usize,
    point: *const f64,
    dim: usize,
    out: *mut f64,
) -> RoaStatus {
    eval_record(result, index, point, dim, out, None)
}

/// Evaluates `v(t, point)` of record `index`.
///
/// # Safety
/// As for [`roa_result_eval_w`].
#[no_mangle]
pub unsafe extern "C" fn roa_result_eval_v(
    result: *const RoaResult,
    index: usize,
    t: f64,
    point: *const f64,
    dim: usize,
    out: *mut f64,
) -> RoaStatus {
    eval_record(result, index, point, dim, out, Some(t))
}

/// Validates record `index` with `samples` Monte Carlo points: counts
/// in-set samples the oracle labels out-ROA and failed certificate checks.
/// Returns `Validation` when any are found (`*out` is still filled).
///
/// # Safety
/// `result` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn roa_validate(
    result: *const RoaResult,
    index: usize,
    samples: usize,
    seed: u64,
    out: *mut RoaValidation,
) -> RoaStatus {
    guard(|| {
        let r = ref_arg(result, "result")?;
        let out = out_arg(out, "out")?;
        *out = RoaValidation::default();
        let Some(rec) = r.0.records.get(index) else {
            return fail(RoaStatus::InvalidInput, format!("no record {index}"));
        };
        if rec.w.is_none() || rec.v.is_none() {
            return fail(
                RoaStatus::InvalidInput,
                format!("record {index} carries no certificate"),
            );
        }
        let single = ResultFile {
            records: vec![rec.clone()],
            ..r.0.clone()
        };
        let report = cli::validate(&single, samples, seed, 1000)?
            .pop()
            .expect("one record with a certificate");
        *out = RoaValidation {
            samples: report.samples,
            violations: report.violations.len(),
            uncertain: report.uncertain.len(),
            failed_spot_checks: report.spot_checks.iter().filter(|s| !s.passed()).count(),
        };
        if report.passed() {
            Ok(())
        } else {
            fail(
                RoaStatus::Validation,
                format!(
                    "{} violations, {} failed certificate checks",
                    out.violations, out.failed_spot_checks
                ),
            )
        }
    })
}
