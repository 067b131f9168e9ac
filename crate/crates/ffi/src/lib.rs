//! C ABI over the `ssws` library.
//!
//! Every function returns an [`SswsStatus`]; on failure a message is
//! available from [`ssws_last_error`] on the same thread. Handles are
//! opaque and must be released with their `_free` function. Strings
//! returned through `char **` are owned by the caller and released with
//! [`ssws_string_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ssws::codec::MuLaw;
use ssws::conditioning::{FrameFeatures, FEATURE_DIM};
use ssws::mushra::{self, Assignment, TestPlan};
use ssws::neural::{read_checkpoint, ParamStore};
use ssws::sampler::{synthesize, SamplerConfig};
use ssws::wavenet::ModelConfig;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SswsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Model = 5,
    Stats = 6,
    Design = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).unwrap_or_default());
}

type FfiResult = Result<(), (SswsStatus, String)>;

fn fail<T>(status: SswsStatus, msg: impl ToString) -> Result<T, (SswsStatus, String)> {
    Err((status, msg.to_string()))
}

fn guard(f: impl FnOnce() -> FfiResult) -> SswsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SswsStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SswsStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), (SswsStatus, String)> {
    if p.is_null() {
        fail(SswsStatus::NullPointer, format!("{name} is null"))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be null or point to `n` readable elements.
unsafe fn slice<'a, T>(p: *const T, n: usize, name: &str) -> Result<&'a [T], (SswsStatus, String)> {
    if n == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, n))
}

/// # Safety
/// `p` must be null or point to `n` writable elements.
unsafe fn slice_mut<'a, T>(
    p: *mut T,
    n: usize,
    name: &str,
) -> Result<&'a mut [T], (SswsStatus, String)> {
    if n == 0 {
        return Ok(&mut []);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts_mut(p, n))
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn string<'a>(p: *const c_char, name: &str) -> Result<&'a str, (SswsStatus, String)> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(SswsStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

fn codec(bins: usize) -> Result<MuLaw, (SswsStatus, String)> {
    MuLaw::new(bins).or_else(|e| fail(SswsStatus::InvalidArgument, e))
}

/// Message for the last failed call on this thread ("" after a success).
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ssws_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Static version string.
#[no_mangle]
pub extern "C" fn ssws_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ssws_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// μ-law encodes one amplitude in [-1, 1] with `bins` levels.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ssws_mulaw_encode(x: f64, bins: usize, out: *mut usize) -> SswsStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = codec(bins)?
            .encode(x)
            .or_else(|e| fail(SswsStatus::InvalidArgument, e))?;
        Ok(())
    })
}

/// Centre amplitude of `bin`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ssws_mulaw_decode(bin: usize, bins: usize, out: *mut f64) -> SswsStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = codec(bins)?
            .decode(bin)
            .or_else(|e| fail(SswsStatus::InvalidArgument, e))?;
        Ok(())
    })
}

/// Encodes `n` samples into `out` (`n` entries).
///
/// # Safety
/// `samples` and `out` must hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn ssws_mulaw_encode_buffer(
    samples: *const f32,
    n: usize,
    bins: usize,
    out: *mut u32,
) -> SswsStatus {
    guard(|| {
        let (x, y) = (slice(samples, n, "samples")?, slice_mut(out, n, "out")?);
        let c = codec(bins)?;
        for (o, &s) in y.iter_mut().zip(x) {
            *o = c
                .encode(s as f64)
                .or_else(|e| fail(SswsStatus::InvalidArgument, e))? as u32;
        }
        Ok(())
    })
}

/// Decodes `n` bins into `out`.
///
/// # Safety
/// `bins_in` and `out` must hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn ssws_mulaw_decode_buffer(
    bins_in: *const u32,
    n: usize,
    bins: usize,
    out: *mut f32,
) -> SswsStatus {
    guard(|| {
        let (x, y) = (slice(bins_in, n, "bins_in")?, slice_mut(out, n, "out")?);
        let c = codec(bins)?;
        for (o, &b) in y.iter_mut().zip(x) {
            *o = c
                .decode(b as usize)
                .or_else(|e| fail(SswsStatus::InvalidArgument, e))? as f32;
        }
        Ok(())
    })
}

/// A trained model: configuration plus parameters.
pub struct SswsModel {
    config: ModelConfig,
    params: ParamStore<f32>,
}

/// Loads a checkpoint and its `key = value` model config.
///
/// # Safety
/// Strings must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ssws_model_load(
    checkpoint_path: *const c_char,
    config_path: *const c_char,
    out: *mut *mut SswsModel,
) -> SswsStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let ck = string(checkpoint_path, "checkpoint_path")?;
        let cf = string(config_path, "config_path")?;
        let config = ModelConfig::load(Path::new(cf)).or_else(|e| fail(SswsStatus::Format, e))?;
        let (params, _) = read_checkpoint(Path::new(ck)).or_else(|e| fail(SswsStatus::Io, e))?;
        *out = Box::into_raw(Box::new(SswsModel { config, params }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`ssws_model_load`], freed once.
#[no_mangle]
pub unsafe extern "C" fn ssws_model_free(model: *mut SswsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Receptive field of the model's stack, in samples.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ssws_model_receptive_field(
    model: *const SswsModel,
    out: *mut usize,
) -> SswsStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        *out = (*model).config.stack.receptive_field();
        Ok(())
    })
}

/// Samples produced for `frames` frames (`frames × hop_size`).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ssws_model_samples_for_frames(
    model: *const SswsModel,
    frames: usize,
    out: *mut usize,
) -> SswsStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        *out = frames * (*model).config.hop_size;
        Ok(())
    })
}

/// Synthesizes from row-major `frames × 88` features into `out`
/// (capacity `out_len`, at least `frames × hop_size`).
///
/// # Safety
/// `features` must hold `frames × 88` floats, `out` `out_len` floats.
#[no_mangle]
pub unsafe extern "C" fn ssws_model_synthesize(
    model: *const SswsModel,
    features: *const f32,
    frames: usize,
    seed: u64,
    out: *mut f32,
    out_len: usize,
    written: *mut usize,
) -> SswsStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(written, "written")?;
        let m = &*model;
        let need = frames * m.config.hop_size;
        if out_len < need {
            return fail(
                SswsStatus::BufferTooSmall,
                format!("need {need} samples, buffer holds {out_len}"),
            );
        }
        let data = slice(features, frames * FEATURE_DIM, "features")?.to_vec();
        let f = FrameFeatures::new(frames, m.config.hop_size, data)
            .or_else(|e| fail(SswsStatus::InvalidArgument, e))?;
        let sampler = SamplerConfig {
            seed,
            ..Default::default()
        };
        let (audio, _) = synthesize(&f, &m.params, &m.config, &sampler, None)
            .or_else(|e| fail(SswsStatus::Model, e))?;
        slice_mut(out, need, "out")?.copy_from_slice(audio.samples());
        *written = need;
        Ok(())
    })
}

/// Two-sided paired t-test of `a − b`.
///
/// # Safety
/// `a`, `b` hold `n` doubles; `t` and `p` are valid.
#[no_mangle]
pub unsafe extern "C" fn ssws_paired_t_test(
    a: *const f64,
    b: *const f64,
    n: usize,
    t: *mut f64,
    p: *mut f64,
) -> SswsStatus {
    guard(|| {
        non_null(t, "t")?;
        non_null(p, "p")?;
        let r = mushra::paired_t_test(slice(a, n, "a")?, slice(b, n, "b")?)
            .or_else(|e| fail(SswsStatus::Stats, e))?;
        (*t, *p) = (r.t, r.p);
        Ok(())
    })
}

/// Two-sided Wilcoxon signed-rank test of `a − b` (exact for ≤ 20 non-zero
/// differences).
///
/// # Safety
/// `a`, `b` hold `n` doubles; `w_plus` and `p` are valid.
#[no_mangle]
pub unsafe extern "C" fn ssws_wilcoxon(
    a: *const f64,
    b: *const f64,
    n: usize,
    w_plus: *mut f64,
    p: *mut f64,
) -> SswsStatus {
    guard(|| {
        non_null(w_plus, "w_plus")?;
        non_null(p, "p")?;
        let r = mushra::wilcoxon_signed_rank(slice(a, n, "a")?, slice(b, n, "b")?)
            .or_else(|e| fail(SswsStatus::Stats, e))?;
        (*w_plus, *p) = (r.w_plus, r.p);
        Ok(())
    })
}

/// Holm step-down: adjusted p-values and rejections (1/0) in input order.
///
/// # Safety
/// `p`, `adjusted`, `reject` hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn ssws_holm(
    p: *const f64,
    n: usize,
    alpha: f64,
    adjusted: *mut f64,
    reject: *mut u8,
) -> SswsStatus {
    guard(|| {
        let (adj, rej) = mushra::holm_bonferroni(slice(p, n, "p")?, alpha)
            .or_else(|e| fail(SswsStatus::Stats, e))?;
        slice_mut(adjusted, n, "adjusted")?.copy_from_slice(&adj);
        for (o, r) in slice_mut(reject, n, "reject")?.iter_mut().zip(rej) {
            *o = r as u8;
        }
        Ok(())
    })
}

/// Per-screen ranks (1 = best, ties averaged).
///
/// # Safety
/// `scores` and `ranks` hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ssws_screen_ranks(
    scores: *const f64,
    n: usize,
    ranks: *mut f64,
) -> SswsStatus {
    guard(|| {
        let r = mushra::screen_ranks(slice(scores, n, "scores")?)
            .or_else(|e| fail(SswsStatus::Stats, e))?;
        slice_mut(ranks, n, "ranks")?.copy_from_slice(&r);
        Ok(())
    })
}

/// A built listener assignment with the plan it came from.
pub struct SswsAssignment {
    plan: TestPlan,
    assignment: Assignment,
}

/// Builds an assignment from plan text (the TSV plan format). If
/// `override_seed` is non-zero, `seed` replaces the plan's seed.
///
/// # Safety
/// `plan_text` is NUL-terminated; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn ssws_assignment_build(
    plan_text: *const c_char,
    override_seed: u8,
    seed: u64,
    out: *mut *mut SswsAssignment,
) -> SswsStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let mut plan = TestPlan::parse(string(plan_text, "plan_text")?)
            .or_else(|e| fail(SswsStatus::Format, e))?;
        if override_seed != 0 {
            plan.seed = seed;
        }
        let assignment =
            mushra::build_assignment(&plan).or_else(|e| fail(SswsStatus::Design, e))?;
        *out = Box::into_raw(Box::new(SswsAssignment { plan, assignment }));
        Ok(())
    })
}

/// # Safety
/// `a` must be null or a handle from [`ssws_assignment_build`], freed once.
#[no_mangle]
pub unsafe extern "C" fn ssws_assignment_free(a: *mut SswsAssignment) {
    if !a.is_null() {
        drop(Box::from_raw(a));
    }
}

/// Assignment as JSON; free with [`ssws_string_free`].
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ssws_assignment_to_json(
    a: *const SswsAssignment,
    out: *mut *mut c_char,
) -> SswsStatus {
    guard(|| {
        non_null(a, "assignment")?;
        non_null(out, "out")?;
        let json =
            CString::new((*a).assignment.to_json()).or_else(|e| fail(SswsStatus::Format, e))?;
        *out = json.into_raw();
        Ok(())
    })
}

/// Number of invariant violations against the originating plan (0 = valid).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ssws_assignment_violations(
    a: *const SswsAssignment,
    out: *mut usize,
) -> SswsStatus {
    guard(|| {
        non_null(a, "assignment")?;
        non_null(out, "out")?;
        *out = mushra::validate_assignment(&(*a).assignment, &(*a).plan).len();
        Ok(())
    })
}
