//! C ABI over `fraclap`.
//!
//! Every function returns an [`FlStatus`]; on failure the message is available from
//! [`fl_last_error_message`] on the same thread. Complex vectors are interleaved
//! `(re, im)` pairs of `double`. Models are opaque handles released with [`fl_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fraclap::dynamics::Propagator;
use fraclap::error::Error;
use fraclap::kernel::{kernel_table, QuadSpec};
use fraclap::model::{BoxModel, FrequencyGrid, LatticeModel, Potential, TorusModel, DEFAULT_DENSE_CAP};
use fraclap::resolvent::{green_1d, resolvent_apply, Eta, GreenOptions};
use fraclap::scattering::{scatter, ScatterOptions};
use fraclap::symbol::{eval_symbol, threshold_set, FractionalOrder};
use num_complex::Complex64;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ThresholdGuard = 3,
    BufferTooSmall = 4,
    Compute = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlGrid {
    Plain = 0,
    HalfInteger = 1,
    ZeroModeProjected = 2,
}

/// On-shell scattering data at one energy.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FlScatterResult {
    pub lambda: f64,
    pub theta: f64,
    /// S row-major over (+, −), interleaved re/im.
    pub s: [f64; 8],
    pub det_s_re: f64,
    pub det_s_im: f64,
    pub unitarity_residual: f64,
    pub optical_residual: f64,
    pub route_difference: f64,
    pub reciprocity_residual: f64,
}

/// Opaque model handle.
pub struct FlModel {
    base: LatticeModel,
    current: LatticeModel,
}

struct Failure(FlStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::ThresholdGuard { .. } => FlStatus::ThresholdGuard,
            Error::InvalidArgument(_)
            | Error::ZeroOrder
            | Error::PolarZeroMode
            | Error::SizeCap { .. }
            | Error::SupportOverflow(_)
            | Error::DistributionalKernel(_) => FlStatus::InvalidArgument,
            _ => FlStatus::Compute,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: &str) -> Failure {
    Failure(FlStatus::InvalidArgument, msg.to_string())
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FlStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(format!("internal panic: {msg}"));
            FlStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, n: usize) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure(FlStatus::NullPointer, "null input pointer".into()));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a, T>(p: *mut T, n: usize) -> Result<&'a mut [T], Failure> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure(FlStatus::NullPointer, "null output pointer".into()));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn out_ref<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure(FlStatus::NullPointer, "null output pointer".into()))
}

unsafe fn order(r: *const f64, d: usize) -> Result<FractionalOrder, Failure> {
    if d == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    Ok(FractionalOrder::new(slice(r, d)?.to_vec())?)
}

fn to_complex(x: &[f64]) -> Vec<Complex64> {
    x.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()
}

fn from_complex(z: &[Complex64], out: &mut [f64]) {
    for (c, v) in out.chunks_exact_mut(2).zip(z) {
        c[0] = v.re;
        c[1] = v.im;
    }
}

/// Message of the last failure on this thread, or NULL. Valid until the next failing call
/// on the same thread.
#[no_mangle]
pub extern "C" fn fl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn fl_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// ϑ_r(θ); `+inf` on the polar set.
///
/// # Safety
/// `r` and `theta` point to `d` doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fl_symbol(r: *const f64, d: usize, theta: *const f64, out: *mut f64) -> FlStatus {
    guard(|| {
        let o = order(r, d)?;
        let v = eval_symbol(&o, slice(theta, d)?)?;
        *out_ref(out)? = v.value.finite().unwrap_or(f64::INFINITY);
        Ok(())
    })
}

/// Kernel coefficients a_r(0), …, a_r(k_max) into `out` (length `k_max + 1`).
///
/// # Safety
/// `out` points to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fl_kernel_coeffs(r: f64, k_max: usize, out: *mut f64, out_len: usize) -> FlStatus {
    guard(|| {
        if out_len < k_max + 1 {
            return Err(Failure(FlStatus::BufferTooSmall, format!("need {} doubles", k_max + 1)));
        }
        let t = kernel_table(r, k_max, &QuadSpec::default())?;
        slice_mut(out, k_max + 1)?.copy_from_slice(&t.values);
        Ok(())
    })
}

/// Finite thresholds of ϑ_r. Writes at most `cap` values and always stores the full count
/// in `count`; returns `FL_STATUS_BUFFER_TOO_SMALL` when `cap` is short.
///
/// # Safety
/// `r` points to `d` doubles, `out` to `cap` writable doubles, `count` is writable.
#[no_mangle]
pub unsafe extern "C" fn fl_thresholds(r: *const f64, d: usize, out: *mut f64, cap: usize, count: *mut usize) -> FlStatus {
    guard(|| {
        let t = threshold_set(&order(r, d)?);
        *out_ref(count)? = t.values.len();
        if cap < t.values.len() {
            return Err(Failure(FlStatus::BufferTooSmall, format!("need {} doubles", t.values.len())));
        }
        slice_mut(out, t.values.len())?.copy_from_slice(&t.values);
        Ok(())
    })
}

fn boxed(m: LatticeModel, out: &mut *mut FlModel) {
    *out = Box::into_raw(Box::new(FlModel { base: m.clone(), current: m }));
}

/// Periodic torus (Z/nZ)^d; `grid` is an `FlGrid` value.
///
/// # Safety
/// `r` points to `d` doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fl_model_torus_new(r: *const f64, d: usize, n: usize, grid: u32, out: *mut *mut FlModel) -> FlStatus {
    guard(|| {
        let out = out_ref(out)?;
        let g = match grid {
            x if x == FlGrid::Plain as u32 => FrequencyGrid::Plain,
            x if x == FlGrid::HalfInteger as u32 => FrequencyGrid::HalfInteger,
            x if x == FlGrid::ZeroModeProjected as u32 => FrequencyGrid::ZeroModeProjected,
            _ => return Err(invalid("unknown frequency grid")),
        };
        boxed(LatticeModel::Torus(TorusModel::new(order(r, d)?, n, g)?), out);
        Ok(())
    })
}

/// Box [−l, l]^d by kernel compression.
///
/// # Safety
/// `r` points to `d` doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fl_model_box_new(r: *const f64, d: usize, l: usize, out: *mut *mut FlModel) -> FlStatus {
    guard(|| {
        let out = out_ref(out)?;
        let o = order(r, d)?;
        let side = (2 * l + 1) as f64;
        if side.powi(d as i32) > DEFAULT_DENSE_CAP as f64 {
            return Err(invalid("box exceeds the dense cap"));
        }
        boxed(LatticeModel::Box(BoxModel::build(o, l, &QuadSpec::default())?), out);
        Ok(())
    })
}

/// Replace the potential by `count` point values; `sites` holds `count · d` coordinates.
///
/// # Safety
/// `model` is a live handle; `sites` and `values` hold the stated number of entries.
#[no_mangle]
pub unsafe extern "C" fn fl_model_set_potential(model: *mut FlModel, sites: *const i64, values: *const f64, count: usize) -> FlStatus {
    guard(|| {
        let m = out_ref(model)?;
        let d = m.base.order().dim();
        let s = slice(sites, count * d)?;
        let v = slice(values, count)?;
        let mut w = Potential::zero(d);
        for (site, &val) in s.chunks_exact(d).zip(v) {
            if !val.is_finite() {
                return Err(invalid("potential values must be finite"));
            }
            if val != 0.0 {
                w.values.insert(site.to_vec(), val);
            }
        }
        m.current = if w.is_zero() { m.base.clone() } else { m.base.with_potential(&w)? };
        Ok(())
    })
}

/// Number of sites, or 0 for a null handle.
///
/// # Safety
/// `model` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fl_model_sites(model: *const FlModel) -> usize {
    model.as_ref().map_or(0, |m| m.current.sites())
}

/// # Safety
/// `model` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fl_model_free(model: *mut FlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// (H − z)^{−1} f. `f` and `out` hold `2 · sites` doubles.
///
/// # Safety
/// `model` is a live handle; buffers have the stated length.
#[no_mangle]
pub unsafe extern "C" fn fl_resolvent_apply(model: *const FlModel, z_re: f64, z_im: f64, f: *const f64, out: *mut f64) -> FlStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| Failure(FlStatus::NullPointer, "null model".into()))?;
        let n = m.current.sites();
        let x = to_complex(slice(f, 2 * n)?);
        let y = resolvent_apply(&m.current, Complex64::new(z_re, z_im), &x)?;
        from_complex(&y, slice_mut(out, 2 * n)?);
        Ok(())
    })
}

/// e^{−itH} f. `f` and `out` hold `2 · sites` doubles.
///
/// # Safety
/// `model` is a live handle; buffers have the stated length.
#[no_mangle]
pub unsafe extern "C" fn fl_evolve(model: *const FlModel, t: f64, f: *const f64, out: *mut f64) -> FlStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| Failure(FlStatus::NullPointer, "null model".into()))?;
        let n = m.current.sites();
        let x = to_complex(slice(f, 2 * n)?);
        let y = Propagator::new(&m.current, DEFAULT_DENSE_CAP)?.evolve(&x, t)?;
        from_complex(&y, slice_mut(out, 2 * n)?);
        Ok(())
    })
}

/// Free lattice Green function G(λ + iη; lag) in d = 1; `eta == 0` selects the boundary
/// value λ + i0.
///
/// # Safety
/// `re` and `im` are writable.
#[no_mangle]
pub unsafe extern "C" fn fl_green_1d(r: f64, lambda: f64, eta: f64, lag: i64, re: *mut f64, im: *mut f64) -> FlStatus {
    guard(|| {
        let e = if eta == 0.0 { Eta::PlusZero } else { Eta::Finite(eta) };
        let g = green_1d(r, lambda, e, lag, &GreenOptions::default())?;
        *out_ref(re)? = g.value.re;
        *out_ref(im)? = g.value.im;
        Ok(())
    })
}

/// One-dimensional scattering at energy λ for the point potential `values` on `sites`.
///
/// # Safety
/// `sites` and `values` hold `count` entries; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fl_scatter(
    r: f64,
    lambda: f64,
    sites: *const i64,
    values: *const f64,
    count: usize,
    out: *mut FlScatterResult,
) -> FlStatus {
    guard(|| {
        let out = out_ref(out)?;
        let mut w = Potential::zero(1);
        for (&s, &v) in slice(sites, count)?.iter().zip(slice(values, count)?) {
            if !v.is_finite() {
                return Err(invalid("potential values must be finite"));
            }
            if v != 0.0 {
                w.values.insert(vec![s], v);
            }
        }
        let rec = scatter(r, lambda, &w, &ScatterOptions::default())?;
        let mut s = [0.0; 8];
        for a in 0..2 {
            for b in 0..2 {
                s[4 * a + 2 * b] = rec.s[a][b].re;
                s[4 * a + 2 * b + 1] = rec.s[a][b].im;
            }
        }
        *out = FlScatterResult {
            lambda: rec.lambda,
            theta: rec.theta,
            s,
            det_s_re: rec.det_s.re,
            det_s_im: rec.det_s.im,
            unitarity_residual: rec.unitarity_residual,
            optical_residual: rec.optical_residual,
            route_difference: rec.route_difference,
            reciprocity_residual: rec.reciprocity_residual,
        };
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_are_contained() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, FlStatus::Panic);
        let msg = unsafe { std::ffi::CStr::from_ptr(fl_last_error_message()) };
        assert!(msg.to_str().unwrap().contains("boom"));
        fl_clear_error();
        assert!(fl_last_error_message().is_null());
    }
}
