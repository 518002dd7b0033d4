//! C ABI over the stylemux translator and metrics.
//!
//! Every fallible function returns a [`StylemuxStatus`]; on failure the
//! message is available from [`stylemux_last_error`] on the same thread.
//! Strings handed out by the library must be released with
//! [`stylemux_string_free`], translators with [`stylemux_translator_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use stylemux::cli::Translator;
use stylemux::eval;
use stylemux::text::tokenize;
use stylemux::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StylemuxStatus {
    Ok = 0,
    /// Bad configuration or argument value (unknown language, style, ...).
    Config = 1,
    /// Unreadable or malformed input files.
    Data = 2,
    /// Non-finite values during computation.
    Numerical = 3,
    NullPointer = 4,
    InvalidUtf8 = 5,
    Panic = 6,
}

/// Opaque handle to a loaded model directory.
pub struct StylemuxTranslator {
    inner: Translator,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(StylemuxStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.exit_code() {
            1 => StylemuxStatus::Config,
            3 => StylemuxStatus::Numerical,
            _ => StylemuxStatus::Data,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> StylemuxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            StylemuxStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            StylemuxStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(StylemuxStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(StylemuxStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

fn out_arg<T>(p: *mut T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(StylemuxStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn lines_arg(p: *const *const c_char, n: usize, name: &str) -> Result<Vec<Vec<String>>, Failure> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if p.is_null() {
        return Err(Failure(StylemuxStatus::NullPointer, format!("{name} is null")));
    }
    std::slice::from_raw_parts(p, n)
        .iter()
        .enumerate()
        .map(|(i, &s)| str_arg(s, &format!("{name}[{i}]")).map(|s| tokenize(s).tokens))
        .collect()
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s).map(CString::into_raw).map_err(|_| Failure(StylemuxStatus::Data, "output contains a nul byte".into()))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library from this thread.
#[no_mangle]
pub extern "C" fn stylemux_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn stylemux_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Opens a model directory produced by `stylemux train`.
///
/// # Safety
/// `model_dir` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn stylemux_translator_open(model_dir: *const c_char, out: *mut *mut StylemuxTranslator) -> StylemuxStatus {
    guard(|| {
        out_arg(out, "out")?;
        let dir = str_arg(model_dir, "model_dir")?;
        let inner = Translator::open(Path::new(dir))?;
        *out = Box::into_raw(Box::new(StylemuxTranslator { inner }));
        Ok(())
    })
}

/// Translates one sentence into `tgt_lang` and `tgt_style` (registry names).
/// `max_len` 0 picks a length from the source. On success `*out` holds a
/// string to release with `stylemux_string_free`.
///
/// # Safety
/// `translator` must come from `stylemux_translator_open`; string arguments
/// must be valid C strings and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn stylemux_translate(
    translator: *const StylemuxTranslator,
    text: *const c_char,
    tgt_lang: *const c_char,
    tgt_style: *const c_char,
    beam: u32,
    max_len: u32,
    out: *mut *mut c_char,
) -> StylemuxStatus {
    guard(|| {
        out_arg(out, "out")?;
        let t = translator.as_ref().ok_or_else(|| Failure(StylemuxStatus::NullPointer, "translator is null".into()))?;
        let (text, lang, style) = (str_arg(text, "text")?, str_arg(tgt_lang, "tgt_lang")?, str_arg(tgt_style, "tgt_style")?);
        let t = &t.inner;
        let (lang, style) = (t.registry.lang(lang)?, t.registry.style(style)?);
        if beam == 0 {
            return Err(Failure(StylemuxStatus::Config, "beam must be at least 1".into()));
        }
        let result = t.translate(text, lang, style, beam as usize, max_len as usize)?;
        *out = into_c_string(result)?;
        Ok(())
    })
}

/// Releases a translator; null is ignored.
///
/// # Safety
/// `translator` must come from `stylemux_translator_open` and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn stylemux_translator_free(translator: *mut StylemuxTranslator) {
    if !translator.is_null() {
        drop(Box::from_raw(translator));
    }
}

/// Releases a string returned by the library; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn stylemux_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Corpus BLEU-4 of `n` hypothesis lines against `n` reference lines.
///
/// # Safety
/// `hyps` and `refs` must point to `n` valid C strings each; `out` must be
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn stylemux_bleu(hyps: *const *const c_char, refs: *const *const c_char, n: usize, out: *mut f64) -> StylemuxStatus {
    guard(|| {
        out_arg(out, "out")?;
        let (h, r) = (lines_arg(hyps, n, "hyps")?, lines_arg(refs, n, "refs")?);
        *out = eval::bleu(&h, &r)?;
        Ok(())
    })
}

/// Sentence-averaged METEOR-lite without a synonym table.
///
/// # Safety
/// As for `stylemux_bleu`.
#[no_mangle]
pub unsafe extern "C" fn stylemux_meteor_lite(hyps: *const *const c_char, refs: *const *const c_char, n: usize, out: *mut f64) -> StylemuxStatus {
    guard(|| {
        out_arg(out, "out")?;
        let (h, r) = (lines_arg(hyps, n, "hyps")?, lines_arg(refs, n, "refs")?);
        *out = eval::meteor_lite(&h, &r, None)?;
        Ok(())
    })
}

/// Apostrophe clitics in `text`, which may hold several lines.
///
/// # Safety
/// `text` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn stylemux_count_contractions(text: *const c_char, out: *mut usize) -> StylemuxStatus {
    guard(|| {
        out_arg(out, "out")?;
        let sents: Vec<Vec<String>> = str_arg(text, "text")?.lines().map(|l| tokenize(l).tokens).collect();
        *out = eval::count_contractions(&sents);
        Ok(())
    })
}
