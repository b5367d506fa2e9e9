//! C ABI over `msd-core`.
//!
//! Collections are opaque heap handles released with
//! [`msd_collection_free`]. Every fallible call returns an [`MsdStatus`]; on
//! failure [`msd_last_error`] holds a message for the calling thread. Panics
//! never cross the boundary and surface as [`MsdStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;

use msd_core::coherence::CoherenceProfile;
use msd_core::detector::{detect, ThresholdParams as CoreParams};
use msd_core::experiment::haar_collection;
use msd_core::io::{read_collection, write_collection};
use msd_core::nalgebra::{DMatrix, DVector};
use msd_core::{BasisMatrix, MsdError, NoiseSpec, SubspaceCollection};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsdStatus {
    Ok = 0,
    InvalidArgument = 1,
    DegenerateInput = 2,
    Config = 3,
    Calibration = 4,
    Parse = 5,
    Io = 6,
    NullPointer = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsdNoiseKind {
    /// `‖η‖ < level`.
    Bounded = 0,
    /// `η ~ N(0, level² I)`.
    Gaussian = 1,
}

/// Threshold parameters. `N` and `d` come from the collection.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MsdThresholdParams {
    pub alpha: f64,
    pub active_count: usize,
    pub energy_total: f64,
    pub noise_kind: MsdNoiseKind,
    pub noise_level: f64,
    /// `MSD_C0` for uncalibrated thresholds, 1 for calibrated ones.
    pub c0: f64,
    pub c1: f64,
}

/// The concentration constant `e⁻¹/256`.
pub const MSD_C0: f64 = 0.001_437_029_067_075_946_6;

/// Opaque collection handle.
pub struct MsdCollection {
    inner: SubspaceCollection,
    profile: OnceLock<CoherenceProfile>,
}

impl MsdCollection {
    fn profile(&self) -> Result<&CoherenceProfile, MsdError> {
        if let Some(p) = self.profile.get() {
            return Ok(p);
        }
        let p = CoherenceProfile::compute(&self.inner)?;
        Ok(self.profile.get_or_init(|| p))
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn status_of(err: &MsdError) -> MsdStatus {
    match err {
        MsdError::InvalidArgument(_) => MsdStatus::InvalidArgument,
        MsdError::DegenerateInput(_) => MsdStatus::DegenerateInput,
        MsdError::Config(_) => MsdStatus::Config,
        MsdError::Calibration { .. } => MsdStatus::Calibration,
        MsdError::Parse { .. } => MsdStatus::Parse,
        MsdError::Io(_) => MsdStatus::Io,
    }
}

enum Failure {
    Core(MsdError),
    Null(&'static str),
}

impl From<MsdError> for Failure {
    fn from(e: MsdError) -> Self {
        Failure::Core(e)
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> MsdStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error("");
            MsdStatus::Ok
        }
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("{what} is null"));
            MsdStatus::NullPointer
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            MsdStatus::Panic
        }
    }
}

unsafe fn non_null<'a, T>(ptr: *const T, what: &'static str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_ref<'a, T>(ptr: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or(Failure::Null(what))
}

unsafe fn path_arg(path: *const c_char) -> Result<String, Failure> {
    if path.is_null() {
        return Err(Failure::Null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| MsdError::InvalidArgument("path is not valid UTF-8".into()).into())
}

fn boxed(inner: SubspaceCollection) -> *mut MsdCollection {
    Box::into_raw(Box::new(MsdCollection { inner, profile: OnceLock::new() }))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn msd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Samples `count` Haar-distributed `subspace_dim`-dimensional subspaces of
/// `R^ambient_dim`. The same seed yields the same collection as `msd generate`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn msd_collection_sample_haar(
    count: usize,
    ambient_dim: usize,
    subspace_dim: usize,
    seed: u64,
    out: *mut *mut MsdCollection,
) -> MsdStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = boxed(haar_collection(count, ambient_dim, subspace_dim, seed)?);
        Ok(())
    })
}

/// Builds a collection from `count` column-major `ambient_dim × subspace_dim`
/// blocks stored back to back. Each block must have orthonormal columns.
///
/// # Safety
/// `data` must point to `count·ambient_dim·subspace_dim` doubles and `out`
/// must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn msd_collection_from_bases(
    data: *const f64,
    ambient_dim: usize,
    subspace_dim: usize,
    count: usize,
    out: *mut *mut MsdCollection,
) -> MsdStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if data.is_null() {
            return Err(Failure::Null("data"));
        }
        let block = ambient_dim
            .checked_mul(subspace_dim)
            .filter(|&b| b > 0)
            .ok_or_else(|| MsdError::InvalidArgument("dimensions must be positive".into()))?;
        let len = block
            .checked_mul(count)
            .ok_or_else(|| MsdError::InvalidArgument("collection size overflows".into()))?;
        let values = std::slice::from_raw_parts(data, len);
        let bases = values
            .chunks_exact(block)
            .map(|chunk| BasisMatrix::new(DMatrix::from_column_slice(ambient_dim, subspace_dim, chunk)))
            .collect::<Result<Vec<_>, _>>()?;
        *out = boxed(SubspaceCollection::new(bases)?);
        Ok(())
    })
}

/// Reads a basis file written by `msd generate` or [`msd_collection_save`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn msd_collection_load(path: *const c_char, out: *mut *mut MsdCollection) -> MsdStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let path = path_arg(path)?;
        let file = File::open(path).map_err(MsdError::from)?;
        *out = boxed(read_collection(BufReader::new(file))?);
        Ok(())
    })
}

/// # Safety
/// `collection` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn msd_collection_save(collection: *const MsdCollection, path: *const c_char) -> MsdStatus {
    guard(|| {
        let c = non_null(collection, "collection")?;
        let path = path_arg(path)?;
        let file = File::create(path).map_err(MsdError::from)?;
        write_collection(&c.inner, BufWriter::new(file))?;
        Ok(())
    })
}

/// Releases a collection. Null is ignored.
///
/// # Safety
/// `collection` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn msd_collection_free(collection: *mut MsdCollection) {
    if !collection.is_null() {
        drop(Box::from_raw(collection));
    }
}

/// # Safety
/// `collection` must come from this library; the outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn msd_collection_dims(
    collection: *const MsdCollection,
    ambient_dim: *mut usize,
    subspace_dim: *mut usize,
    count: *mut usize,
) -> MsdStatus {
    guard(|| {
        let c = &non_null(collection, "collection")?.inner;
        for (ptr, v) in [(ambient_dim, c.ambient_dim()), (subspace_dim, c.subspace_dim()), (count, c.len())] {
            if let Some(slot) = ptr.as_mut() {
                *slot = v;
            }
        }
        Ok(())
    })
}

/// Fills per-subspace coherences: local 2-subspace, average mixing and
/// average subspace, `N` entries each, and the worst-case coherence. Any
/// output may be null. Needs `N ≥ 3`.
///
/// # Safety
/// Non-null array outputs must hold `N` doubles.
#[no_mangle]
pub unsafe extern "C" fn msd_collection_coherence(
    collection: *const MsdCollection,
    local_two: *mut f64,
    avg_mixing: *mut f64,
    avg_subspace: *mut f64,
    worst_case: *mut f64,
) -> MsdStatus {
    guard(|| {
        let c = non_null(collection, "collection")?;
        let p = c.profile()?;
        let n = c.inner.len();
        for (ptr, values) in [(local_two, &p.local_two), (avg_mixing, &p.avg_mixing), (avg_subspace, &p.avg_subspace)] {
            if !ptr.is_null() {
                std::slice::from_raw_parts_mut(ptr, n).copy_from_slice(values);
            }
        }
        if let Some(w) = worst_case.as_mut() {
            *w = p.worst_case;
        }
        Ok(())
    })
}

/// Runs the marginal detector on `y`.
///
/// `active` receives 1 for every detected subspace and 0 otherwise;
/// `statistics` and `thresholds` receive `T_k` and `τ_k` when non-null.
/// `detected` receives the number of detections when non-null.
///
/// # Safety
/// `y` must hold `y_len` doubles; non-null outputs must hold `N` entries.
#[no_mangle]
pub unsafe extern "C" fn msd_detect(
    collection: *const MsdCollection,
    params: *const MsdThresholdParams,
    y: *const f64,
    y_len: usize,
    active: *mut u8,
    statistics: *mut f64,
    thresholds: *mut f64,
    detected: *mut usize,
) -> MsdStatus {
    guard(|| {
        let c = non_null(collection, "collection")?;
        let p = *non_null(params, "params")?;
        if y.is_null() {
            return Err(Failure::Null("y"));
        }
        if active.is_null() {
            return Err(Failure::Null("active"));
        }
        let noise = match p.noise_kind {
            MsdNoiseKind::Bounded => NoiseSpec::Bounded { epsilon: p.noise_level },
            MsdNoiseKind::Gaussian => NoiseSpec::Gaussian { sigma: p.noise_level },
        };
        let core = CoreParams {
            alpha: p.alpha,
            active_count: p.active_count,
            total: c.inner.len(),
            subspace_dim: c.inner.subspace_dim(),
            energy_total: p.energy_total,
            noise,
            c0: p.c0,
            c1: p.c1,
        };
        core.validate()?;
        let y = DVector::from_column_slice(std::slice::from_raw_parts(y, y_len));
        let result = detect(&c.inner, c.profile()?, &y, &core)?;
        let n = c.inner.len();
        let flags = std::slice::from_raw_parts_mut(active, n);
        for (k, flag) in flags.iter_mut().enumerate() {
            *flag = u8::from(result.estimated_active.contains(&k));
        }
        if !statistics.is_null() {
            std::slice::from_raw_parts_mut(statistics, n).copy_from_slice(&result.statistics);
        }
        if !thresholds.is_null() {
            std::slice::from_raw_parts_mut(thresholds, n).copy_from_slice(&result.thresholds);
        }
        if let Some(d) = detected.as_mut() {
            *d = result.estimated_active.len();
        }
        Ok(())
    })
}
