//! C ABI for the cpsurf library.
//!
//! Opaque setup handles, integer status codes, and a thread-local error
//! message. The header is generated by cbindgen into include/cpsurf.h at
//! build time. A handle must not be used concurrently with
//! `cpsurf_setup_free` on itself.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use cpsurf::cli::{predict_regime, Overrides, Setup};
use cpsurf::cpcore::{CpEvaluator, Regime};
use cpsurf::multilayer::ReflectionResult;
use cpsurf::trap::ShiftOutcome;
use cpsurf::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpsurfStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ConfigError = 3,
    DomainError = 4,
    ConvergenceError = 5,
    IoError = 6,
    ParseError = 7,
    DegenerateData = 8,
    /// The requested state holds no bound level (a valid physics outcome).
    Untrapped = 9,
    InternalPanic = 10,
}

/// Potential regime selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpsurfRegime {
    Full = 0,
    ShortRange = 1,
    LongRange = 2,
}

impl From<CpsurfRegime> for Regime {
    fn from(r: CpsurfRegime) -> Regime {
        match r {
            CpsurfRegime::Full => Regime::Full,
            CpsurfRegime::ShortRange => Regime::ShortRange,
            CpsurfRegime::LongRange => Regime::LongRange,
        }
    }
}

/// Polarization selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpsurfPolarization {
    Te = 0,
    Tm = 1,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> CpsurfStatus {
    match err {
        Error::Config(_) => CpsurfStatus::ConfigError,
        Error::Domain(_) => CpsurfStatus::DomainError,
        Error::Convergence { .. } => CpsurfStatus::ConvergenceError,
        Error::Io { .. } => CpsurfStatus::IoError,
        Error::Parse { .. } => CpsurfStatus::ParseError,
        Error::DegenerateData(_) => CpsurfStatus::DegenerateData,
    }
}

/// Opaque handle: a resolved run setup plus its prepared potential
/// evaluator. The evaluator borrows the boxed setup; it is declared first
/// so it drops before the setup it references.
pub struct CpsurfSetup {
    evaluator: Option<CpEvaluator<'static>>,
    setup: Box<Setup>,
}

impl CpsurfSetup {
    fn evaluator(&mut self) -> Result<&CpEvaluator<'static>, Error> {
        if self.evaluator.is_none() {
            // The setup is boxed and lives as long as this handle, and the
            // evaluator drops first, so the 'static promotion is sound.
            let stack: &'static cpsurf::multilayer::CoatingStack =
                unsafe { std::mem::transmute(&self.setup.stack) };
            self.evaluator = Some(CpEvaluator::with_tolerance(stack, self.setup.tolerance)?);
        }
        Ok(self.evaluator.as_ref().unwrap())
    }
}

/// Load and resolve a run configuration (fixtures, stack, line lists).
/// Returns null on failure; the message is available via
/// `cpsurf_last_error`.
///
/// # Safety
/// `config_path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cpsurf_setup_load(config_path: *const c_char) -> *mut CpsurfSetup {
    if config_path.is_null() {
        set_error("config_path is null");
        return std::ptr::null_mut();
    }
    let path = match CStr::from_ptr(config_path).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("config_path is not valid UTF-8");
            return std::ptr::null_mut();
        }
    };
    let result = catch_unwind(|| Setup::resolve(Path::new(path), &Overrides::default()));
    match result {
        Ok(Ok(setup)) => Box::into_raw(Box::new(CpsurfSetup {
            evaluator: None,
            setup: Box::new(setup),
        })),
        Ok(Err(e)) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
        Err(_) => {
            set_error("internal panic during setup");
            std::ptr::null_mut()
        }
    }
}

/// Release a setup handle. Passing null is a no-op.
///
/// # Safety
/// `handle` must be a pointer returned by `cpsurf_setup_load` that has not
/// been freed already.
#[no_mangle]
pub unsafe extern "C" fn cpsurf_setup_free(handle: *mut CpsurfSetup) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Copy the last error message of this thread into `buf` (truncated,
/// always NUL-terminated). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must point to `len` writable bytes (or be null with len 0).
#[no_mangle]
pub unsafe extern "C" fn cpsurf_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Total surface potential of a configured state at distance `z_m`, J.
///
/// # Safety
/// `handle` must be a live setup handle, `state_label` a NUL-terminated
/// string, `out_joules` a writable f64 pointer.
#[no_mangle]
pub unsafe extern "C" fn cpsurf_potential(
    handle: *mut CpsurfSetup,
    state_label: *const c_char,
    z_m: f64,
    regime: CpsurfRegime,
    out_joules: *mut f64,
) -> CpsurfStatus {
    if handle.is_null() || state_label.is_null() || out_joules.is_null() {
        set_error("null argument");
        return CpsurfStatus::NullArgument;
    }
    let label = match CStr::from_ptr(state_label).to_str() {
        Ok(s) => s.to_string(),
        Err(_) => {
            set_error("state_label is not valid UTF-8");
            return CpsurfStatus::InvalidUtf8;
        }
    };
    let h = &mut *handle;
    let result = catch_unwind(AssertUnwindSafe(|| -> Result<f64, Error> {
        let state = h
            .setup
            .states
            .get(&label)
            .ok_or_else(|| Error::Config(format!("unknown state {label:?}")))?
            .clone();
        let evaluator = h.evaluator()?;
        evaluator.total(&state, z_m, regime.into())
    }));
    match result {
        Ok(Ok(v)) => {
            *out_joules = v;
            CpsurfStatus::Ok
        }
        Ok(Err(e)) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            CpsurfStatus::InternalPanic
        }
    }
}

/// Complex reflection amplitude of the configured stack at a real
/// wavelength and transverse wavevector.
///
/// # Safety
/// `handle` must be a live setup handle; `out_re`/`out_im` writable.
#[no_mangle]
pub unsafe extern "C" fn cpsurf_reflection(
    handle: *mut CpsurfSetup,
    wavelength_m: f64,
    k_t: f64,
    polarization: CpsurfPolarization,
    out_re: *mut f64,
    out_im: *mut f64,
) -> CpsurfStatus {
    if handle.is_null() || out_re.is_null() || out_im.is_null() {
        set_error("null argument");
        return CpsurfStatus::NullArgument;
    }
    let h = &*handle;
    let result = catch_unwind(AssertUnwindSafe(|| -> Result<_, Error> {
        if !(wavelength_m > 0.0) {
            return Err(Error::Domain("wavelength must be positive".into()));
        }
        let omega = 2.0 * std::f64::consts::PI * cpsurf::constants::SPEED_OF_LIGHT / wavelength_m;
        let r = ReflectionResult::at_real_frequency(&h.setup.stack, omega, k_t)?;
        Ok(match polarization {
            CpsurfPolarization::Te => r.r_te,
            CpsurfPolarization::Tm => r.r_tm,
        })
    }));
    match result {
        Ok(Ok(r)) => {
            *out_re = r.re;
            *out_im = r.im;
            CpsurfStatus::Ok
        }
        Ok(Err(e)) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            CpsurfStatus::InternalPanic
        }
    }
}

/// Predicted site-1 transition shift against the far-site reference, Hz.
/// Returns `Untrapped` when a configured state holds no bound level in the
/// first site for this regime.
///
/// # Safety
/// `handle` must be a live setup handle; `out_shift_hz` writable.
#[no_mangle]
pub unsafe extern "C" fn cpsurf_predict_shift(
    handle: *mut CpsurfSetup,
    regime: CpsurfRegime,
    out_shift_hz: *mut f64,
) -> CpsurfStatus {
    if handle.is_null() || out_shift_hz.is_null() {
        set_error("null argument");
        return CpsurfStatus::NullArgument;
    }
    let h = &mut *handle;
    let result = catch_unwind(AssertUnwindSafe(|| -> Result<ShiftOutcome, Error> {
        h.evaluator()?;
        let evaluator = h.evaluator.as_ref().unwrap();
        Ok(predict_regime(&h.setup, evaluator, regime.into())?.outcome)
    }));
    match result {
        Ok(Ok(ShiftOutcome::Shift(p))) => {
            *out_shift_hz = p.shift_hz;
            CpsurfStatus::Ok
        }
        Ok(Ok(ShiftOutcome::Untrapped { state_label })) => {
            set_error(format!("state {state_label} is untrapped in site 1"));
            CpsurfStatus::Untrapped
        }
        Ok(Err(e)) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            CpsurfStatus::InternalPanic
        }
    }
}

/// Area-normalized Voigt profile times amplitude, plus offset. Stateless.
///
/// # Safety
/// `out` must be a writable f64 pointer.
#[no_mangle]
pub unsafe extern "C" fn cpsurf_voigt(
    x: f64,
    center: f64,
    gaussian_sigma: f64,
    lorentz_gamma: f64,
    amplitude: f64,
    offset: f64,
    out: *mut f64,
) -> CpsurfStatus {
    if out.is_null() {
        set_error("null argument");
        return CpsurfStatus::NullArgument;
    }
    match cpsurf::specfit::voigt(x, center, gaussian_sigma, lorentz_gamma, amplitude, offset) {
        Ok(v) => {
            *out = v;
            CpsurfStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cpsurf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    fn fixture_config() -> CString {
        let p = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/run_sr88.toml");
        CString::new(p.to_str().unwrap()).unwrap()
    }

    #[test]
    fn load_potential_and_reflection_roundtrip() {
        unsafe {
            let cfg = fixture_config();
            let h = cpsurf_setup_load(cfg.as_ptr());
            assert!(!h.is_null(), "setup failed");
            let (mut re, mut im) = (0.0, 0.0);
            let st = cpsurf_reflection(h, 914e-9, 0.0, CpsurfPolarization::Te, &mut re, &mut im);
            assert_eq!(st, CpsurfStatus::Ok);
            let r2 = re * re + im * im;
            assert!((r2 - 0.178).abs() < 0.005, "R = {r2}");
            assert!((im.atan2(re) - (-2.62)).abs() < 0.03);

            let label = CString::new("1S0").unwrap();
            let mut v = 0.0;
            let st = cpsurf_potential(h, label.as_ptr(), 189e-9, CpsurfRegime::Full, &mut v);
            assert_eq!(st, CpsurfStatus::Ok);
            assert!(v < 0.0);

            let bad = CString::new("nope").unwrap();
            let st = cpsurf_potential(h, bad.as_ptr(), 189e-9, CpsurfRegime::Full, &mut v);
            assert_eq!(st, CpsurfStatus::ConfigError);
            let mut buf = [0i8; 256];
            let n = cpsurf_last_error(buf.as_mut_ptr(), buf.len());
            assert!(n > 0);

            cpsurf_setup_free(h);
        }
    }

    #[test]
    fn voigt_is_stateless_and_validates() {
        unsafe {
            let mut v = 0.0;
            let st = cpsurf_voigt(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, &mut v);
            assert_eq!(st, CpsurfStatus::Ok);
            assert!((v - 0.398_942_280_401_432_7).abs() < 1e-12);
            let st = cpsurf_voigt(0.0, 0.0, 0.0, 0.0, 1.0, 0.0, &mut v);
            assert_eq!(st, CpsurfStatus::DomainError);
        }
    }

    #[test]
    fn null_arguments_are_rejected() {
        unsafe {
            assert!(cpsurf_setup_load(std::ptr::null()).is_null());
            let mut v = 0.0;
            let st = cpsurf_potential(
                std::ptr::null_mut(),
                std::ptr::null(),
                1e-7,
                CpsurfRegime::Full,
                &mut v,
            );
            assert_eq!(st, CpsurfStatus::NullArgument);
            cpsurf_setup_free(std::ptr::null_mut());
        }
    }

    #[test]
    fn header_was_generated() {
        let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/cpsurf.h");
        let text = std::fs::read_to_string(header).expect("cbindgen header");
        for sym in [
            "cpsurf_setup_load",
            "cpsurf_potential",
            "cpsurf_predict_shift",
            "cpsurf_voigt",
            "CpsurfStatus",
        ] {
            assert!(text.contains(sym), "header missing {sym}");
        }
    }
}
