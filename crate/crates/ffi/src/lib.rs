//! C ABI over `define-core`.
//!
//! Every fallible function returns a [`DefineStatus`] and writes results
//! through out-pointers. On failure the message is available from
//! [`define_last_error`] on the same thread. Handles are opaque and must be
//! released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use define_core::analogy::{kl_divergence, AnalogyError};
use define_core::btmodel::{fit, BtError, ComparisonMatrix, FitOptions, ModelFile, SalienceModel};
use define_core::decide::{score, DecideError};
use define_core::labeler::{label_for_return, DecisionLabel};
use define_core::schema::{default_schema, FactorProfile, FactorSchema, LikelihoodGrade, SchemaError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefineStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    SchemaMismatch = 3,
    NotConverged = 4,
    Degenerate = 5,
    Io = 6,
    Panic = 7,
}

/// Factor taxonomy.
pub struct DefineSchema(Arc<FactorSchema>);

/// One transcript's factor profile.
pub struct DefineProfile(FactorProfile);

/// Fitted salience strengths.
pub struct DefineModel(SalienceModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(DefineStatus, String);

impl Failure {
    fn null(what: &str) -> Self {
        Failure(DefineStatus::NullPointer, format!("{what} is null"))
    }

    fn invalid(message: impl Into<String>) -> Self {
        Failure(DefineStatus::InvalidArgument, message.into())
    }
}

impl From<SchemaError> for Failure {
    fn from(e: SchemaError) -> Self {
        let status = match e {
            SchemaError::Io(_) => DefineStatus::Io,
            _ => DefineStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<BtError> for Failure {
    fn from(e: BtError) -> Self {
        let status = match e {
            BtError::NotConverged { .. } => DefineStatus::NotConverged,
            BtError::DegenerateMatrix { .. } => DefineStatus::Degenerate,
            BtError::SchemaMismatch => DefineStatus::SchemaMismatch,
            BtError::Io(_) => DefineStatus::Io,
            _ => DefineStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<AnalogyError> for Failure {
    fn from(e: AnalogyError) -> Self {
        let status = match e {
            AnalogyError::SchemaMismatch => DefineStatus::SchemaMismatch,
            _ => DefineStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<DecideError> for Failure {
    fn from(e: DecideError) -> Self {
        let status = match e {
            DecideError::SchemaMismatch => DefineStatus::SchemaMismatch,
            _ => DefineStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> DefineStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => DefineStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DefineStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn fill(out: *mut f64, len: usize, values: &[f64]) -> Result<(), Failure> {
    if len != values.len() {
        return Err(Failure::invalid(format!("buffer holds {len} values, need {}", values.len())));
    }
    if out.is_null() {
        return Err(Failure::null("out"));
    }
    std::slice::from_raw_parts_mut(out, len).copy_from_slice(values);
    Ok(())
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn define_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

// ---------------------------------------------------------------------------
// Schema

/// The built-in 15-factor, 33-item schema.
#[no_mangle]
pub extern "C" fn define_schema_default() -> *mut DefineSchema {
    Box::into_raw(Box::new(DefineSchema(Arc::new(default_schema()))))
}

/// Loads a schema JSON file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn define_schema_load(path: *const c_char, out: *mut *mut DefineSchema) -> DefineStatus {
    guard(|| {
        if path.is_null() {
            return Err(Failure::null("path"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|_| Failure::invalid("path is not UTF-8"))?;
        let schema = FactorSchema::from_json_file(path)?;
        write_out(out, Box::into_raw(Box::new(DefineSchema(Arc::new(schema)))), "out")
    })
}

/// # Safety
/// `schema` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn define_schema_item_count(schema: *const DefineSchema) -> usize {
    schema.as_ref().map_or(0, |s| s.0.item_count())
}

/// # Safety
/// `schema` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn define_schema_factor_count(schema: *const DefineSchema) -> usize {
    schema.as_ref().map_or(0, |s| s.0.factor_count())
}

/// Outcomes of `factor`, or 0 when out of range.
///
/// # Safety
/// `schema` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn define_schema_outcome_count(schema: *const DefineSchema, factor: usize) -> usize {
    schema
        .as_ref()
        .filter(|s| factor < s.0.factor_count())
        .map_or(0, |s| s.0.outcome_count(factor))
}

/// # Safety
/// `schema` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn define_schema_free(schema: *mut DefineSchema) {
    if !schema.is_null() {
        drop(Box::from_raw(schema));
    }
}

// ---------------------------------------------------------------------------
// Profiles

/// Builds a profile from grades 1..=6, one per item in flat schema order.
///
/// # Safety
/// `grades` must point to `len` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn define_profile_from_grades(
    schema: *const DefineSchema,
    grades: *const u8,
    len: usize,
    out: *mut *mut DefineProfile,
) -> DefineStatus {
    guard(|| {
        let schema = &deref(schema, "schema")?.0;
        let flat = slice(grades, len, "grades")?;
        if len != schema.item_count() {
            return Err(Failure::invalid(format!("expected {} grades, got {len}", schema.item_count())));
        }
        let mut rest = flat;
        let mut nested = Vec::with_capacity(schema.factor_count());
        for f in 0..schema.factor_count() {
            let (head, tail) = rest.split_at(schema.outcome_count(f));
            let parsed = head
                .iter()
                .map(|&g| LikelihoodGrade::from_value(g).ok_or_else(|| Failure::invalid(format!("grade {g} is outside 1..=6"))))
                .collect::<Result<Vec<_>, _>>()?;
            nested.push(parsed);
            rest = tail;
        }
        let profile = FactorProfile::from_grades(schema.clone(), nested, vec![])?;
        write_out(out, Box::into_raw(Box::new(DefineProfile(profile))), "out")
    })
}

/// Builds a profile from probabilities in flat schema order; each factor's
/// block must sum to 1.
///
/// # Safety
/// `probs` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn define_profile_from_probabilities(
    schema: *const DefineSchema,
    probs: *const f64,
    len: usize,
    out: *mut *mut DefineProfile,
) -> DefineStatus {
    guard(|| {
        let schema = &deref(schema, "schema")?.0;
        let flat = slice(probs, len, "probs")?;
        if len != schema.item_count() {
            return Err(Failure::invalid(format!("expected {} values, got {len}", schema.item_count())));
        }
        let profile = FactorProfile::unflatten(schema.clone(), flat.to_vec())?;
        write_out(out, Box::into_raw(Box::new(DefineProfile(profile))), "out")
    })
}

/// Copies the flat probability vector into `out`, which must hold exactly
/// the schema's item count.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn define_profile_flatten(profile: *const DefineProfile, out: *mut f64, len: usize) -> DefineStatus {
    guard(|| fill(out, len, deref(profile, "profile")?.0.flatten()))
}

/// # Safety
/// `profile` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn define_profile_free(profile: *mut DefineProfile) {
    if !profile.is_null() {
        drop(Box::from_raw(profile));
    }
}

/// KL(p || q) in nats, summed over factors.
///
/// # Safety
/// Both handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn define_kl_divergence(
    p: *const DefineProfile,
    q: *const DefineProfile,
    out: *mut f64,
) -> DefineStatus {
    guard(|| {
        let d = kl_divergence(&deref(p, "p")?.0, &deref(q, "q")?.0)?;
        write_out(out, d, "out")
    })
}

// ---------------------------------------------------------------------------
// Models

/// Fits strengths to an `m`×`m` row-major comparison matrix, where entry
/// (x, y) is the weight of x beating y. `tol <= 0` and `max_iter == 0`
/// select the defaults.
///
/// # Safety
/// `weights` must point to `m * m` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn define_model_fit(
    weights: *const f64,
    m: usize,
    tol: f64,
    max_iter: usize,
    out: *mut *mut DefineModel,
) -> DefineStatus {
    guard(|| {
        let cells = m.checked_mul(m).ok_or_else(|| Failure::invalid("matrix size overflows"))?;
        let flat = slice(weights, cells, "weights")?;
        let rows = flat.chunks(m.max(1)).map(<[f64]>::to_vec).collect();
        let matrix = ComparisonMatrix::from_rows(rows)?;
        let defaults = FitOptions::default();
        let opts = FitOptions {
            tol: if tol > 0.0 { tol } else { defaults.tol },
            max_iter: if max_iter > 0 { max_iter } else { defaults.max_iter },
            ..defaults
        };
        let model = fit(&matrix, &opts)?;
        write_out(out, Box::into_raw(Box::new(DefineModel(model))), "out")
    })
}

/// Loads a model file written by `define fit`.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn define_model_load(path: *const c_char, out: *mut *mut DefineModel) -> DefineStatus {
    guard(|| {
        if path.is_null() {
            return Err(Failure::null("path"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|_| Failure::invalid("path is not UTF-8"))?;
        let file = ModelFile::load(path)?;
        write_out(out, Box::into_raw(Box::new(DefineModel(file.model()))), "out")
    })
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn define_model_len(model: *const DefineModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.len())
}

/// Copies the strengths into `out`, which must hold exactly
/// `define_model_len` values.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn define_model_strengths(model: *const DefineModel, out: *mut f64, len: usize) -> DefineStatus {
    guard(|| fill(out, len, &deref(model, "model")?.0.p))
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn define_model_free(model: *mut DefineModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Decision score Σ p_x · P(x | profile).
///
/// # Safety
/// Both handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn define_score(
    profile: *const DefineProfile,
    model: *const DefineModel,
    out: *mut f64,
) -> DefineStatus {
    guard(|| {
        let s = score(&deref(profile, "profile")?.0, &deref(model, "model")?.0)?;
        write_out(out, s, "out")
    })
}

// ---------------------------------------------------------------------------
// Labels

/// Label index for a percentage return: 0 strong-buy, 1 buy, 2 hold,
/// 3 sell, 4 strong-sell; -1 for NaN.
#[no_mangle]
pub extern "C" fn define_label_for_return(return_pct: f64) -> i32 {
    if return_pct.is_nan() {
        return -1;
    }
    label_for_return(return_pct).index() as i32
}

/// Static kebab-case name for a label index, or null when out of range.
#[no_mangle]
pub extern "C" fn define_label_name(index: i32) -> *const c_char {
    const NAMES: [&CStr; 5] = [c"strong-buy", c"buy", c"hold", c"sell", c"strong-sell"];
    usize::try_from(index)
        .ok()
        .and_then(DecisionLabel::from_index)
        .map_or(std::ptr::null(), |l| NAMES[l.index()].as_ptr())
}
