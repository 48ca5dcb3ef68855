//! C ABI over the annotation toolkit.
//!
//! Conventions, shared by every function here:
//!
//! - Every fallible call returns an [`MrnStatus`]; `MRN_STATUS_OK` is zero.
//!   On failure a human-readable message is stored per thread and can be
//!   read with [`mrn_last_error_message`].
//! - Models and feature matrices are opaque handles created by `_load`
//!   functions and released by the matching `_free`; strings returned
//!   through `char **` out-parameters are released with
//!   [`mrn_string_free`]. Passing a handle to any function after freeing
//!   it is undefined behavior, as with any C library.
//! - Label sequences cross the boundary in their text form: alternating
//!   mora and prosody tokens separated by single spaces, e.g. `ka [ mi *`.
//! - `NULL` is never a valid handle, string, or out-parameter unless a
//!   function's documentation says otherwise.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use moranno::label::{parse_label_string, MoraInventory, ProsodyLabel};
use moranno::metrics::{cer, default_excluded, levenshtein, prosody_counts};
use moranno::model::checkpoint;
use moranno::model::decode::{annotate, DecodeMode};
use moranno::model::tensor::Mat;
use moranno::model::{AcousticFeatures, AnnotatorModel, ModelError};

/// Result of every fallible call in this API.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrnStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// An argument value was out of range or inconsistent.
    InvalidArgument = 3,
    /// A label string did not parse as an alternating mora/prosody
    /// sequence over the default inventory.
    ParseError = 4,
    /// The filesystem rejected a read or write.
    IoError = 5,
    /// A model rejected its input or a checkpoint was malformed.
    ModelError = 6,
    /// A metric was undefined for the given inputs.
    MetricError = 7,
    /// An unexpected internal failure; please report these.
    Internal = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: MrnStatus, msg: impl std::fmt::Display) -> MrnStatus {
    let text = msg.to_string().replace('\0', "?");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(text).expect("nul bytes were replaced");
    });
    status
}

fn fail_model(err: ModelError) -> MrnStatus {
    let status = match err {
        ModelError::Io(_) => MrnStatus::IoError,
        _ => MrnStatus::ModelError,
    };
    fail(status, err)
}

/// Message for the most recent failure on the calling thread.
///
/// The pointer stays valid until the next failing call on this thread; it
/// is never null, and holds an empty string before the first failure.
/// Do not free it.
#[no_mangle]
pub extern "C" fn mrn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// A loaded annotator model. Opaque; create with [`mrn_model_load`] and
/// release with [`mrn_model_free`].
pub struct MrnModel {
    inner: AnnotatorModel,
}

/// An acoustic feature matrix. Opaque; create with [`mrn_features_load`]
/// and release with [`mrn_features_free`].
pub struct MrnFeatures {
    inner: AcousticFeatures,
}

/// Reads a UTF-8 string argument, recording the right error on failure.
///
/// # Safety
/// `p` must be null or a valid NUL-terminated C string.
unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, MrnStatus> {
    if p.is_null() {
        return Err(fail(MrnStatus::NullArgument, format!("{what} is null")));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|e| fail(MrnStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, MrnStatus> {
    if p.is_null() {
        return Err(fail(MrnStatus::NullArgument, format!("{what} is null")));
    }
    Ok(unsafe { &mut *p })
}

fn handle_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, MrnStatus> {
    if p.is_null() {
        return Err(fail(MrnStatus::NullArgument, format!("{what} is null")));
    }
    Ok(unsafe { &*p })
}

/// Runs a body, converting any panic into [`MrnStatus::Internal`] so
/// unwinding never crosses the C boundary.
fn guarded(f: impl FnOnce() -> MrnStatus) -> MrnStatus {
    catch_unwind(AssertUnwindSafe(f))
        .unwrap_or_else(|_| fail(MrnStatus::Internal, "internal panic"))
}

fn parse_labels(text: &str) -> Result<moranno::label::TtsLabelSequence, MrnStatus> {
    parse_label_string(text, &MoraInventory::default_cv())
        .map_err(|e| fail(MrnStatus::ParseError, e))
}

/// Loads a model checkpoint from `path` into `*out_model`.
///
/// On success `*out_model` owns the model; release it with
/// [`mrn_model_free`].
///
/// # Safety
/// `path` must be a valid NUL-terminated C string and `out_model` a valid
/// pointer to writable memory.
#[no_mangle]
pub unsafe extern "C" fn mrn_model_load(
    path: *const c_char,
    out_model: *mut *mut MrnModel,
) -> MrnStatus {
    guarded(|| {
        let out = match out_arg(out_model, "out_model") {
            Ok(v) => v,
            Err(s) => return s,
        };
        let path = match unsafe { str_arg(path, "path") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        match checkpoint::load(Path::new(path)) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(MrnModel { inner: model }));
                MrnStatus::Ok
            }
            Err(e) => fail_model(e),
        }
    })
}

/// Releases a model. Passing null is a no-op.
///
/// # Safety
/// `model` must be null or a pointer returned by [`mrn_model_load`] that
/// has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn mrn_model_free(model: *mut MrnModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Writes the model's trainable parameter count to `*out_count`.
///
/// # Safety
/// `model` must be a live model handle and `out_count` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrn_model_param_count(
    model: *const MrnModel,
    out_count: *mut usize,
) -> MrnStatus {
    let model = match handle_arg(model, "model") {
        Ok(v) => v,
        Err(s) => return s,
    };
    let out = match out_arg(out_count, "out_count") {
        Ok(v) => v,
        Err(s) => return s,
    };
    *out = model.inner.n_params();
    MrnStatus::Ok
}

/// Writes the feature-frame width the model expects to `*out_dim`.
///
/// # Safety
/// `model` must be a live model handle and `out_dim` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrn_model_feature_dim(
    model: *const MrnModel,
    out_dim: *mut usize,
) -> MrnStatus {
    let model = match handle_arg(model, "model") {
        Ok(v) => v,
        Err(s) => return s,
    };
    let out = match out_arg(out_dim, "out_dim") {
        Ok(v) => v,
        Err(s) => return s,
    };
    *out = model.inner.config.d_in;
    MrnStatus::Ok
}

fn annotate_to_cstring(
    model: &AnnotatorModel,
    feats: &AcousticFeatures,
    beam_width: usize,
    out: &mut *mut c_char,
) -> MrnStatus {
    let mode = if beam_width <= 1 {
        DecodeMode::Greedy
    } else {
        DecodeMode::Beam { width: beam_width }
    };
    match annotate(model, feats, mode) {
        Ok(ann) => {
            let text = ann.labels.serialize_label_string();
            let c = CString::new(text).expect("label strings never contain nul");
            *out = c.into_raw();
            MrnStatus::Ok
        }
        Err(e) => fail_model(e),
    }
}

/// Annotates one utterance from a caller-owned feature buffer.
///
/// `features` points at `n_frames * dim` doubles, row-major, one row per
/// frame; `dim` must match [`mrn_model_feature_dim`]. `beam_width` of 0
/// or 1 decodes greedily, larger values run a beam search of that width.
/// On success `*out_labels` holds the annotation as a label string;
/// release it with [`mrn_string_free`].
///
/// # Safety
/// `model` must be a live model handle, `features` must point at
/// `n_frames * dim` readable doubles, and `out_labels` must be a valid
/// pointer to writable memory.
#[no_mangle]
pub unsafe extern "C" fn mrn_model_annotate(
    model: *const MrnModel,
    features: *const f64,
    n_frames: usize,
    dim: usize,
    beam_width: usize,
    out_labels: *mut *mut c_char,
) -> MrnStatus {
    guarded(|| {
        let model = match handle_arg(model, "model") {
            Ok(v) => v,
            Err(s) => return s,
        };
        let out = match out_arg(out_labels, "out_labels") {
            Ok(v) => v,
            Err(s) => return s,
        };
        if features.is_null() {
            return fail(MrnStatus::NullArgument, "features is null");
        }
        let Some(len) = n_frames.checked_mul(dim) else {
            return fail(MrnStatus::InvalidArgument, "n_frames * dim overflows");
        };
        if len == 0 {
            return fail(
                MrnStatus::InvalidArgument,
                "features must have at least one frame and one channel",
            );
        }
        let data = unsafe { std::slice::from_raw_parts(features, len) }.to_vec();
        let feats = match AcousticFeatures::new(Mat::from_vec(n_frames, dim, data)) {
            Ok(f) => f,
            Err(e) => return fail_model(e),
        };
        annotate_to_cstring(&model.inner, &feats, beam_width, out)
    })
}

/// Annotates one utterance from a loaded feature matrix.
///
/// Behaves like [`mrn_model_annotate`] with the matrix's own shape.
///
/// # Safety
/// `model` and `features` must be live handles and `out_labels` a valid
/// pointer to writable memory.
#[no_mangle]
pub unsafe extern "C" fn mrn_model_annotate_features(
    model: *const MrnModel,
    features: *const MrnFeatures,
    beam_width: usize,
    out_labels: *mut *mut c_char,
) -> MrnStatus {
    guarded(|| {
        let model = match handle_arg(model, "model") {
            Ok(v) => v,
            Err(s) => return s,
        };
        let feats = match handle_arg(features, "features") {
            Ok(v) => v,
            Err(s) => return s,
        };
        let out = match out_arg(out_labels, "out_labels") {
            Ok(v) => v,
            Err(s) => return s,
        };
        annotate_to_cstring(&model.inner, &feats.inner, beam_width, out)
    })
}

/// Loads a binary feature file (as written by `moranno gen --features`)
/// into `*out_features`. Release the handle with [`mrn_features_free`].
///
/// # Safety
/// `path` must be a valid NUL-terminated C string and `out_features` a
/// valid pointer to writable memory.
#[no_mangle]
pub unsafe extern "C" fn mrn_features_load(
    path: *const c_char,
    out_features: *mut *mut MrnFeatures,
) -> MrnStatus {
    guarded(|| {
        let out = match out_arg(out_features, "out_features") {
            Ok(v) => v,
            Err(s) => return s,
        };
        let path = match unsafe { str_arg(path, "path") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        match AcousticFeatures::load(Path::new(path)) {
            Ok(f) => {
                *out = Box::into_raw(Box::new(MrnFeatures { inner: f }));
                MrnStatus::Ok
            }
            Err(e) => fail_model(e),
        }
    })
}

/// Writes the number of frames in a feature matrix to `*out_frames`.
///
/// # Safety
/// `features` must be a live handle and `out_frames` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrn_features_frame_count(
    features: *const MrnFeatures,
    out_frames: *mut usize,
) -> MrnStatus {
    let feats = match handle_arg(features, "features") {
        Ok(v) => v,
        Err(s) => return s,
    };
    let out = match out_arg(out_frames, "out_frames") {
        Ok(v) => v,
        Err(s) => return s,
    };
    *out = feats.inner.n_frames();
    MrnStatus::Ok
}

/// Writes the per-frame channel count of a feature matrix to `*out_dim`.
///
/// # Safety
/// `features` must be a live handle and `out_dim` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrn_features_dim(
    features: *const MrnFeatures,
    out_dim: *mut usize,
) -> MrnStatus {
    let feats = match handle_arg(features, "features") {
        Ok(v) => v,
        Err(s) => return s,
    };
    let out = match out_arg(out_dim, "out_dim") {
        Ok(v) => v,
        Err(s) => return s,
    };
    *out = feats.inner.dim();
    MrnStatus::Ok
}

/// Releases a feature matrix. Passing null is a no-op.
///
/// # Safety
/// `features` must be null or a pointer returned by
/// [`mrn_features_load`] that has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn mrn_features_free(features: *mut MrnFeatures) {
    if !features.is_null() {
        drop(unsafe { Box::from_raw(features) });
    }
}

/// Releases a string returned through a `char **` out-parameter.
/// Passing null is a no-op.
///
/// # Safety
/// `s` must be null or a string returned by this library that has not
/// been freed yet.
#[no_mangle]
pub unsafe extern "C" fn mrn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Checks that `labels` parses as an alternating mora/prosody label
/// string over the default inventory. Returns `MRN_STATUS_OK` when it
/// does; `MRN_STATUS_PARSE_ERROR` (with a message) when it does not.
///
/// # Safety
/// `labels` must be a valid NUL-terminated C string.
#[no_mangle]
pub unsafe extern "C" fn mrn_labels_validate(labels: *const c_char) -> MrnStatus {
    let text = match unsafe { str_arg(labels, "labels") } {
        Ok(v) => v,
        Err(s) => return s,
    };
    match parse_labels(text) {
        Ok(_) => MrnStatus::Ok,
        Err(s) => s,
    }
}

/// Computes the phoneme error rate of `hypothesis` against `reference`:
/// mora-level edit distance divided by reference length, prosody ignored.
/// Both arguments are label strings. Writes the rate to `*out_rate`.
///
/// # Safety
/// `reference` and `hypothesis` must be valid NUL-terminated C strings
/// and `out_rate` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrn_phoneme_error_rate(
    reference: *const c_char,
    hypothesis: *const c_char,
    out_rate: *mut f64,
) -> MrnStatus {
    guarded(|| {
        let out = match out_arg(out_rate, "out_rate") {
            Ok(v) => v,
            Err(s) => return s,
        };
        let reference = match unsafe { str_arg(reference, "reference") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        let hypothesis = match unsafe { str_arg(hypothesis, "hypothesis") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        let (r, h) = match (parse_labels(reference), parse_labels(hypothesis)) {
            (Ok(r), Ok(h)) => (r, h),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match cer(&r.strip_prosody(), &h.strip_prosody()) {
            Ok(rate) => {
                *out = rate;
                MrnStatus::Ok
            }
            Err(e) => fail(MrnStatus::MetricError, e),
        }
    })
}

/// Scores the prosody stream of `hypothesis` against `reference`.
///
/// Both arguments are label strings whose mora streams must have equal
/// length (score prosody only where the phonemes already match).
/// `excluded` lists prosody symbols to skip, comma-separated (e.g.
/// `"_,?"`); pass `NULL` for that default, or `""` to score everything.
/// Reference positions carrying an excluded symbol contribute nothing to
/// any count. With no scorable events at all, precision, recall, and F1
/// are all defined as 1. Each output pointer may be `NULL` if that score
/// is not wanted.
///
/// # Safety
/// `reference` and `hypothesis` must be valid NUL-terminated C strings;
/// `excluded` must be null or a valid NUL-terminated C string; non-null
/// out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn mrn_prosody_scores(
    reference: *const c_char,
    hypothesis: *const c_char,
    excluded: *const c_char,
    out_precision: *mut f64,
    out_recall: *mut f64,
    out_f1: *mut f64,
) -> MrnStatus {
    guarded(|| {
        let reference = match unsafe { str_arg(reference, "reference") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        let hypothesis = match unsafe { str_arg(hypothesis, "hypothesis") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        let excluded_set = if excluded.is_null() {
            default_excluded()
        } else {
            let spec = match unsafe { str_arg(excluded, "excluded") } {
                Ok(v) => v,
                Err(s) => return s,
            };
            let mut set = std::collections::BTreeSet::new();
            for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                match ProsodyLabel::from_symbol(part) {
                    Some(p) => {
                        set.insert(p);
                    }
                    None => {
                        return fail(
                            MrnStatus::InvalidArgument,
                            format!("`{part}` is not a prosody symbol"),
                        )
                    }
                }
            }
            set
        };
        let (r, h) = match (parse_labels(reference), parse_labels(hypothesis)) {
            (Ok(r), Ok(h)) => (r, h),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match prosody_counts(&r.prosody(), &h.prosody(), &excluded_set) {
            Ok(counts) => {
                let (p, rec, f1) = counts.scores();
                if !out_precision.is_null() {
                    unsafe { *out_precision = p };
                }
                if !out_recall.is_null() {
                    unsafe { *out_recall = rec };
                }
                if !out_f1.is_null() {
                    unsafe { *out_f1 = f1 };
                }
                MrnStatus::Ok
            }
            Err(e) => fail(MrnStatus::MetricError, e),
        }
    })
}

/// Computes the edit distance between two whitespace-tokenized strings,
/// with no grammar applied. Writes the distance to `*out_distance`.
///
/// # Safety
/// `a` and `b` must be valid NUL-terminated C strings and `out_distance`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrn_token_edit_distance(
    a: *const c_char,
    b: *const c_char,
    out_distance: *mut usize,
) -> MrnStatus {
    guarded(|| {
        let out = match out_arg(out_distance, "out_distance") {
            Ok(v) => v,
            Err(s) => return s,
        };
        let a = match unsafe { str_arg(a, "a") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        let b = match unsafe { str_arg(b, "b") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        let ta: Vec<&str> = a.split_whitespace().collect();
        let tb: Vec<&str> = b.split_whitespace().collect();
        *out = levenshtein(&ta, &tb);
        MrnStatus::Ok
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use moranno::label::MoraInventory;
    use moranno::model::{init_model, ModelConfig};
    use moranno::vocab::Vocabulary;
    use std::ptr;

    fn cstr(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    fn last_error() -> String {
        unsafe {
            CStr::from_ptr(mrn_last_error_message())
                .to_str()
                .unwrap()
                .to_string()
        }
    }

    fn tiny_checkpoint(dir: &Path) -> std::path::PathBuf {
        let inventory = MoraInventory::default_cv();
        let vocab = Vocabulary::for_inventory(&inventory).unwrap();
        let cfg = ModelConfig {
            d_model: 8,
            n_heads: 2,
            n_enc_layers: 1,
            n_dec_layers: 1,
            ff_dim: 16,
            ..ModelConfig::default()
        };
        let model = init_model(cfg, vocab, 11).unwrap();
        let path = dir.join("tiny.ckpt");
        checkpoint::save(&model, &path).unwrap();
        path
    }

    #[test]
    fn model_round_trip_annotates_a_buffer() {
        let dir = tempfile::tempdir().unwrap();
        let path = cstr(tiny_checkpoint(dir.path()).to_str().unwrap());

        let mut model: *mut MrnModel = ptr::null_mut();
        let status = unsafe { mrn_model_load(path.as_ptr(), &mut model) };
        assert_eq!(status, MrnStatus::Ok);
        assert!(!model.is_null());

        let mut dim = 0usize;
        assert_eq!(
            unsafe { mrn_model_feature_dim(model, &mut dim) },
            MrnStatus::Ok
        );
        assert_eq!(dim, 12);
        let mut n_params = 0usize;
        assert_eq!(
            unsafe { mrn_model_param_count(model, &mut n_params) },
            MrnStatus::Ok
        );
        assert!(n_params > 0);

        let frames = 6usize;
        let feats: Vec<f64> = (0..frames * dim).map(|i| (i as f64) * 0.01).collect();
        for beam in [0usize, 1, 3] {
            let mut labels: *mut c_char = ptr::null_mut();
            let status = unsafe {
                mrn_model_annotate(model, feats.as_ptr(), frames, dim, beam, &mut labels)
            };
            assert_eq!(status, MrnStatus::Ok, "beam {beam}: {}", last_error());
            assert_eq!(unsafe { mrn_labels_validate(labels) }, MrnStatus::Ok);
            unsafe { mrn_string_free(labels) };
        }
        unsafe { mrn_model_free(model) };
    }

    #[test]
    fn feature_files_round_trip_through_handles() {
        let dir = tempfile::tempdir().unwrap();
        let feats =
            AcousticFeatures::new(Mat::from_vec(3, 12, vec![0.25; 36])).unwrap();
        let feat_path = dir.path().join("u.bin");
        feats.save(&feat_path).unwrap();

        let c_path = cstr(feat_path.to_str().unwrap());
        let mut handle: *mut MrnFeatures = ptr::null_mut();
        assert_eq!(
            unsafe { mrn_features_load(c_path.as_ptr(), &mut handle) },
            MrnStatus::Ok
        );
        let (mut frames, mut dim) = (0usize, 0usize);
        unsafe {
            assert_eq!(mrn_features_frame_count(handle, &mut frames), MrnStatus::Ok);
            assert_eq!(mrn_features_dim(handle, &mut dim), MrnStatus::Ok);
        }
        assert_eq!((frames, dim), (3, 12));

        let model_path = cstr(tiny_checkpoint(dir.path()).to_str().unwrap());
        let mut model: *mut MrnModel = ptr::null_mut();
        assert_eq!(
            unsafe { mrn_model_load(model_path.as_ptr(), &mut model) },
            MrnStatus::Ok
        );
        let mut labels: *mut c_char = ptr::null_mut();
        assert_eq!(
            unsafe { mrn_model_annotate_features(model, handle, 2, &mut labels) },
            MrnStatus::Ok
        );
        assert_eq!(unsafe { mrn_labels_validate(labels) }, MrnStatus::Ok);
        unsafe {
            mrn_string_free(labels);
            mrn_model_free(model);
            mrn_features_free(handle);
        }
    }

    #[test]
    fn failures_set_status_and_message() {
        let mut model: *mut MrnModel = ptr::null_mut();
        assert_eq!(
            unsafe { mrn_model_load(ptr::null(), &mut model) },
            MrnStatus::NullArgument
        );
        assert!(last_error().contains("path"));

        let missing = cstr("/definitely/not/here.ckpt");
        assert_eq!(
            unsafe { mrn_model_load(missing.as_ptr(), &mut model) },
            MrnStatus::IoError
        );
        assert!(!last_error().is_empty());
        assert!(model.is_null(), "failed load must not hand out a model");

        let bad = cstr("ka [ xx");
        assert_eq!(
            unsafe { mrn_labels_validate(bad.as_ptr()) },
            MrnStatus::ParseError
        );
        assert!(last_error().contains("xx"));
    }

    #[test]
    fn metrics_match_the_library() {
        let r = cstr("ka [ mi ] to *");
        let h = cstr("ka [ mi * to *");
        let mut rate = f64::NAN;
        assert_eq!(
            unsafe { mrn_phoneme_error_rate(r.as_ptr(), h.as_ptr(), &mut rate) },
            MrnStatus::Ok
        );
        assert_eq!(rate, 0.0, "same moras, different prosody");

        let (mut p, mut rec, mut f1) = (0.0, 0.0, 0.0);
        assert_eq!(
            unsafe {
                mrn_prosody_scores(
                    r.as_ptr(),
                    h.as_ptr(),
                    ptr::null(),
                    &mut p,
                    &mut rec,
                    &mut f1,
                )
            },
            MrnStatus::Ok
        );
        // Reference events: a rise and a fall (the trailing `*` is the
        // no-event mark). The hypothesis finds the rise, misses the fall,
        // and invents nothing.
        assert_eq!((p, rec), (1.0, 0.5));
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);

        // Excluding the fall symbol removes the one miss.
        let excl = cstr("]");
        assert_eq!(
            unsafe {
                mrn_prosody_scores(r.as_ptr(), h.as_ptr(), excl.as_ptr(), &mut p, &mut rec, &mut f1)
            },
            MrnStatus::Ok
        );
        assert_eq!((p, rec, f1), (1.0, 1.0, 1.0));

        let not_a_symbol = cstr("Q");
        assert_eq!(
            unsafe {
                mrn_prosody_scores(
                    r.as_ptr(),
                    h.as_ptr(),
                    not_a_symbol.as_ptr(),
                    &mut p,
                    &mut rec,
                    &mut f1,
                )
            },
            MrnStatus::InvalidArgument
        );

        let shorter = cstr("ka [");
        assert_eq!(
            unsafe {
                mrn_prosody_scores(
                    r.as_ptr(),
                    shorter.as_ptr(),
                    ptr::null(),
                    &mut p,
                    &mut rec,
                    &mut f1,
                )
            },
            MrnStatus::MetricError
        );

        let a = cstr("ka mi to");
        let b = cstr("ka to");
        let mut d = 0usize;
        assert_eq!(
            unsafe { mrn_token_edit_distance(a.as_ptr(), b.as_ptr(), &mut d) },
            MrnStatus::Ok
        );
        assert_eq!(d, 1);
    }

    #[test]
    fn annotate_rejects_bad_buffers() {
        let dir = tempfile::tempdir().unwrap();
        let path = cstr(tiny_checkpoint(dir.path()).to_str().unwrap());
        let mut model: *mut MrnModel = ptr::null_mut();
        assert_eq!(
            unsafe { mrn_model_load(path.as_ptr(), &mut model) },
            MrnStatus::Ok
        );

        let mut labels: *mut c_char = ptr::null_mut();
        let feats = [0.0f64; 12];
        assert_eq!(
            unsafe { mrn_model_annotate(model, feats.as_ptr(), 0, 12, 1, &mut labels) },
            MrnStatus::InvalidArgument
        );
        // Wrong width: the model wants 12 channels per frame.
        assert_eq!(
            unsafe { mrn_model_annotate(model, feats.as_ptr(), 2, 6, 1, &mut labels) },
            MrnStatus::ModelError
        );
        assert!(last_error().contains("12"));

        let nan = [f64::NAN; 12];
        assert_eq!(
            unsafe { mrn_model_annotate(model, nan.as_ptr(), 1, 12, 1, &mut labels) },
            MrnStatus::ModelError
        );
        unsafe { mrn_model_free(model) };
    }
}
