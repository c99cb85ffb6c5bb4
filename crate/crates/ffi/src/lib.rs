//! C ABI over `lggshape`.
//!
//! Volumes cross the boundary as opaque `LggVolume` handles that the caller
//! releases with `lgg_volume_free`. Every fallible function returns an
//! `LggStatus`; on failure `lgg_last_error` describes the error for the
//! calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lggshape::evaluation::dice;
use lggshape::postprocess::keep_largest_component;
use lggshape::radiogenomics::{fisher_exact, ContingencyTable, FisherOptions};
use lggshape::shape::{extract_features, SlicePolicy};
use lggshape::{load_volume, write_volume, Error, VoxelVolume};

/// Opaque volume handle.
pub struct LggVolume {
    inner: VoxelVolume,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LggStatus {
    Ok = 0,
    NullPointer = 1,
    Io = 2,
    Format = 3,
    InvalidArgument = 4,
    Degenerate = 5,
    InsufficientData = 6,
    Panic = 7,
}

/// Per-case shape features.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LggFeatures {
    pub asd: f64,
    pub bevr: f64,
    pub mf: f64,
    pub slice_used: usize,
    pub tumor_voxels: usize,
}

pub const LGG_POLICY_MAX_AREA: u32 = 0;
pub const LGG_POLICY_MEAN: u32 = 1;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LggStatus {
    match e {
        Error::Io { .. } => LggStatus::Io,
        Error::Header { .. }
        | Error::SizeMismatch { .. }
        | Error::InvalidMask { .. }
        | Error::Image { .. }
        | Error::MixedImageDims { .. }
        | Error::EmptyDirectory(_)
        | Error::Manifest(_)
        | Error::Parse { .. }
        | Error::Json(_) => LggStatus::Format,
        Error::Degenerate(_) | Error::DegenerateGeometry | Error::EmptyMask | Error::EmptySlice | Error::EmptyTable => {
            LggStatus::Degenerate
        }
        Error::InsufficientBoundary { .. } | Error::InsufficientData(_) => LggStatus::InsufficientData,
        _ => LggStatus::InvalidArgument,
    }
}

/// Runs `f`, turning errors and panics into a status plus last-error text.
fn guard(f: impl FnOnce() -> Result<(), (LggStatus, String)>) -> LggStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LggStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            LggStatus::Panic
        }
    }
}

fn lib<T>(r: lggshape::Result<T>) -> Result<T, (LggStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (LggStatus, String) {
    (LggStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a str, (LggStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (LggStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

unsafe fn volume_arg<'a>(v: *const LggVolume, what: &str) -> Result<&'a VoxelVolume, (LggStatus, String)> {
    v.as_ref().map(|h| &h.inner).ok_or_else(|| null(what))
}

unsafe fn emit(out: *mut *mut LggVolume, v: VoxelVolume) {
    *out = Box::into_raw(Box::new(LggVolume { inner: v }));
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lgg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a volume file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lgg_volume_load(path: *const c_char, out: *mut *mut LggVolume) -> LggStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let v = lib(load_volume(path_arg(path)?))?;
        emit(out, v);
        Ok(())
    })
}

/// Builds a mask from `nz*ny*nx` bytes in z-major order, each 0 or 1.
///
/// # Safety
/// `data` must point to `nz*ny*nx` bytes, `spacing` to three doubles and
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lgg_mask_new(
    nz: usize,
    ny: usize,
    nx: usize,
    spacing: *const f64,
    data: *const u8,
    out: *mut *mut LggVolume,
) -> LggStatus {
    guard(|| {
        if out.is_null() || spacing.is_null() || data.is_null() {
            return Err(null("argument"));
        }
        let n = nz
            .checked_mul(ny)
            .and_then(|v| v.checked_mul(nx))
            .ok_or((LggStatus::InvalidArgument, "dimensions overflow".into()))?;
        let bytes = std::slice::from_raw_parts(data, n);
        let s = std::slice::from_raw_parts(spacing, 3);
        let values = bytes.iter().map(|&b| b as f32).collect();
        let v = lib(VoxelVolume::mask([nz, ny, nx], [s[0], s[1], s[2]], values))?;
        emit(out, v);
        Ok(())
    })
}

/// Writes `(nz, ny, nx)` into `dims`.
///
/// # Safety
/// `volume` must be a live handle and `dims` must point to three `size_t`.
#[no_mangle]
pub unsafe extern "C" fn lgg_volume_dims(volume: *const LggVolume, dims: *mut usize) -> LggStatus {
    guard(|| {
        let v = volume_arg(volume, "volume")?;
        if dims.is_null() {
            return Err(null("dims"));
        }
        ptr::copy_nonoverlapping(v.dims().as_ptr(), dims, 3);
        Ok(())
    })
}

/// Number of foreground voxels of a mask (nonzero voxels otherwise).
///
/// # Safety
/// `volume` must be a live handle and `count` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lgg_volume_foreground(volume: *const LggVolume, count: *mut usize) -> LggStatus {
    guard(|| {
        let v = volume_arg(volume, "volume")?;
        if count.is_null() {
            return Err(null("count"));
        }
        *count = v.foreground_count();
        Ok(())
    })
}

/// # Safety
/// `volume` must be a live handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lgg_volume_write(volume: *const LggVolume, path: *const c_char) -> LggStatus {
    guard(|| lib(write_volume(volume_arg(volume, "volume")?, path_arg(path)?)))
}

/// Releases a handle; NULL is ignored.
///
/// # Safety
/// `volume` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lgg_volume_free(volume: *mut LggVolume) {
    if !volume.is_null() {
        drop(Box::from_raw(volume));
    }
}

/// Largest 6-connected component of a mask, as a new handle.
///
/// # Safety
/// `mask` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lgg_keep_largest_component(mask: *const LggVolume, out: *mut *mut LggVolume) -> LggStatus {
    guard(|| {
        let m = volume_arg(mask, "mask")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let v = lib(keep_largest_component(m))?;
        emit(out, v);
        Ok(())
    })
}

/// ASD, BEVR and MF of a mask. `policy` is `LGG_POLICY_MAX_AREA` or
/// `LGG_POLICY_MEAN`.
///
/// # Safety
/// `mask` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lgg_extract_features(mask: *const LggVolume, policy: u32, out: *mut LggFeatures) -> LggStatus {
    guard(|| {
        let m = volume_arg(mask, "mask")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let policy = match policy {
            LGG_POLICY_MAX_AREA => SlicePolicy::MaxArea,
            LGG_POLICY_MEAN => SlicePolicy::MeanOverSlices,
            other => return Err((LggStatus::InvalidArgument, format!("unknown policy {other}"))),
        };
        let r = lib(extract_features("", m, policy))?;
        *out = LggFeatures {
            asd: r.asd,
            bevr: r.bevr,
            mf: r.mf,
            slice_used: r.slice_used,
            tumor_voxels: r.tumor_voxels,
        };
        Ok(())
    })
}

/// # Safety
/// `a` and `b` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lgg_dice(a: *const LggVolume, b: *const LggVolume, out: *mut f64) -> LggStatus {
    guard(|| {
        let (a, b) = (volume_arg(a, "a")?, volume_arg(b, "b")?);
        if out.is_null() {
            return Err(null("out"));
        }
        *out = lib(dice(a, b))?;
        Ok(())
    })
}

/// Two-sided Fisher exact test of a `rows x cols` table in row-major order.
/// Large tables fall back to a Monte Carlo estimate seeded by `seed`.
///
/// # Safety
/// `counts` must point to `rows*cols` values and `p_value` be valid.
#[no_mangle]
pub unsafe extern "C" fn lgg_fisher_exact(
    counts: *const u64,
    rows: usize,
    cols: usize,
    seed: u64,
    p_value: *mut f64,
) -> LggStatus {
    guard(|| {
        if counts.is_null() || p_value.is_null() {
            return Err(null("argument"));
        }
        if rows == 0 || cols == 0 {
            return Err((LggStatus::InvalidArgument, "table needs at least one row and column".into()));
        }
        let flat = std::slice::from_raw_parts(counts, rows * cols);
        let table = lib(ContingencyTable::from_counts(flat.chunks(cols).map(<[u64]>::to_vec).collect()))?;
        let opts = FisherOptions {
            seed,
            ..FisherOptions::default()
        };
        *p_value = lib(fisher_exact(&table, &opts))?.p_value;
        Ok(())
    })
}
