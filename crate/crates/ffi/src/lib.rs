#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! C ABI over the hchain block systems and noise measures.
//!
//! Every function returns an [`HcStatus`]; results go through out-pointers. On failure the
//! message is kept per thread and can be read with [`hc_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hchain::blocks::BlockSystem;
use hchain::chain::build_mode_basis;
use hchain::decoherence::{kernel_trace, trace_measure};
use hchain::noise::{noise_strength, noise_strength_for};
use hchain::verify::check_reduced_forms;
use hchain::Error;

/// Status codes returned by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HcStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Contract = 3,
    Config = 4,
    Numerical = 5,
    Verification = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Opaque block system for one coarse mode.
pub struct HcBlockSystem {
    inner: BlockSystem,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn status_of(e: &Error) -> HcStatus {
    match e {
        Error::Domain(_) => HcStatus::Domain,
        Error::Contract(_) => HcStatus::Contract,
        Error::Config(_) => HcStatus::Config,
        Error::Numerical(_) => HcStatus::Numerical,
        Error::Verification(_) => HcStatus::Verification,
    }
}

fn guard(f: impl FnOnce() -> Result<(), HcStatus>) -> HcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HcStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            HcStatus::Panic
        }
    }
}

fn lift<T>(r: hchain::Result<T>) -> Result<T, HcStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), HcStatus> {
    if p.is_null() {
        set_error(format!("{name} is null"));
        Err(HcStatus::NullPointer)
    } else {
        Ok(())
    }
}

/// # Safety
/// `handle` must be null or a pointer returned by [`hc_block_system_new`] and not yet freed.
unsafe fn system<'a>(handle: *const HcBlockSystem) -> Result<&'a BlockSystem, HcStatus> {
    non_null(handle, "handle")?;
    Ok(&(*handle).inner)
}

/// Builds the block system for coarse mode `mode` with ℳ = `groups`, clump size `d`,
/// atom mass μ, spring frequency ω and N atoms per group.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn hc_block_system_new(
    mode: usize,
    groups: usize,
    d: usize,
    mass: f64,
    spring_frequency: f64,
    group_size: f64,
    out: *mut *mut HcBlockSystem,
) -> HcStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let basis = lift(build_mode_basis(mode, groups, d))?;
        let inner = lift(BlockSystem::new(&basis, mass, spring_frequency, group_size))?;
        *out = Box::into_raw(Box::new(HcBlockSystem { inner }));
        Ok(())
    })
}

/// Releases a handle. Null is accepted and ignored.
///
/// # Safety
/// `handle` must be null or a live pointer from [`hc_block_system_new`]; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hc_block_system_free(handle: *mut HcBlockSystem) {
    if !handle.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(handle))));
    }
}

/// Number of environment modes, d − 1.
///
/// # Safety
/// `handle` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hc_block_system_env_dim(
    handle: *const HcBlockSystem,
    out: *mut usize,
) -> HcStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = system(handle)?.env_dim();
        Ok(())
    })
}

/// Coarse frequency Ω_L in the units of ω.
///
/// # Safety
/// `handle` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hc_block_system_coarse_frequency(
    handle: *const HcBlockSystem,
    out: *mut f64,
) -> HcStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = system(handle)?.omega0;
        Ok(())
    })
}

/// Reduced kinetic and potential coefficients, and the coupling row split into real and
/// imaginary parts. `len` is the capacity of both coupling arrays and must be at least d − 1;
/// the arrays may be null when d = 1.
///
/// # Safety
/// `handle` must be a live handle; non-null pointers must be writable for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn hc_block_system_reduced_forms(
    handle: *const HcBlockSystem,
    kinetic: *mut f64,
    potential: *mut f64,
    coupling_re: *mut f64,
    coupling_im: *mut f64,
    len: usize,
) -> HcStatus {
    guard(|| {
        non_null(kinetic, "kinetic")?;
        non_null(potential, "potential")?;
        let forms = system(handle)?.reduced_forms();
        let n = forms.coupling.len();
        if n > 0 {
            non_null(coupling_re, "coupling_re")?;
            non_null(coupling_im, "coupling_im")?;
            if len < n {
                set_error(format!("coupling arrays hold {len} entries, {n} needed"));
                return Err(HcStatus::BufferTooSmall);
            }
            for (i, z) in forms.coupling.iter().enumerate() {
                *coupling_re.add(i) = z.re;
                *coupling_im.add(i) = z.im;
            }
        }
        *kinetic = forms.kinetic;
        *potential = forms.potential;
        Ok(())
    })
}

/// Time-averaged noise strength S² of this block system, in units k_BTω²/(Nμ).
///
/// # Safety
/// `handle` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hc_block_system_noise_strength(
    handle: *const HcBlockSystem,
    out: *mut f64,
) -> HcStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = lift(noise_strength_for(system(handle)?))?.s2;
        Ok(())
    })
}

/// Equal-time decoherence kernel K_I(t, t) at temperature k_BT and reduced Planck constant ħ.
///
/// # Safety
/// `handle` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hc_block_system_kernel_trace(
    handle: *const HcBlockSystem,
    kbt: f64,
    hbar: f64,
    out: *mut f64,
) -> HcStatus {
    guard(|| {
        non_null(out, "out")?;
        if !(kbt >= 0.0 && hbar > 0.0) {
            set_error("k_BT must be non-negative and ħ positive");
            return Err(HcStatus::Domain);
        }
        *out = lift(kernel_trace(system(handle)?, kbt, hbar))?;
        Ok(())
    })
}

/// S² for mode L at clump size d with ℳ groups, in units k_BTω²/(Nμ).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_noise_strength(
    mode: usize,
    d: usize,
    groups: usize,
    out: *mut f64,
) -> HcStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = lift(noise_strength(mode, d, groups))?.s2;
        Ok(())
    })
}

/// 𝒦_I(d) for mode L in units N k_BT μ ω²/(4ħ²).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_trace_measure(
    mode: usize,
    d: usize,
    groups: usize,
    out: *mut f64,
) -> HcStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = lift(trace_measure(mode, d, groups))?;
        Ok(())
    })
}

/// Compares the closed-form reduced coefficients against a dense elimination. Writes the
/// largest relative residual and whether every check met its tolerance.
///
/// # Safety
/// `max_residual` and `pass` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_check_reduced_forms(
    mode: usize,
    d: usize,
    groups: usize,
    group_size: usize,
    mass: f64,
    max_residual: *mut f64,
    pass: *mut bool,
) -> HcStatus {
    guard(|| {
        non_null(max_residual, "max_residual")?;
        non_null(pass, "pass")?;
        let report = lift(check_reduced_forms(mode, d, groups, group_size, mass))?;
        *max_residual = report.max_residual();
        *pass = report.all_pass();
        Ok(())
    })
}

/// Copies the calling thread's last error message into `buf` as a NUL-terminated string and
/// returns the full message length excluding the terminator, or 0 when there is none.
/// The copy is truncated when `len` is too small.
///
/// # Safety
/// `buf` must be null or writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn hc_last_error_message(buf: *mut c_char, len: usize) -> usize {
    catch_unwind(AssertUnwindSafe(|| {
        LAST_ERROR.with(|e| match e.borrow().as_ref() {
            None => {
                if !buf.is_null() && len > 0 {
                    *buf = 0;
                }
                0
            }
            Some(msg) => {
                let bytes = msg.as_bytes();
                if !buf.is_null() && len > 0 {
                    let n = bytes.len().min(len - 1);
                    ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                    *buf.add(n) = 0;
                }
                bytes.len()
            }
        })
    }))
    .unwrap_or(0)
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn hc_status_string(status: HcStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        HcStatus::Ok => b"ok\0",
        HcStatus::NullPointer => b"null pointer\0",
        HcStatus::Domain => b"argument outside domain\0",
        HcStatus::Contract => b"inconsistent arguments\0",
        HcStatus::Config => b"invalid configuration\0",
        HcStatus::Numerical => b"numerical failure\0",
        HcStatus::Verification => b"verification failed\0",
        HcStatus::BufferTooSmall => b"buffer too small\0",
        HcStatus::Panic => b"internal panic\0",
    };
    s.as_ptr().cast()
}
