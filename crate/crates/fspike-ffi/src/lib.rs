//! C ABI for the fspike engine.
//!
//! Conventions:
//! - Networks are opaque handles created by `fspike_network_load` /
//!   `fspike_network_random` and released with `fspike_network_free`.
//! - Fallible calls return [`FspikeStatus`]; constructors return NULL on
//!   failure. After any failure, `fspike_last_error_message` returns a
//!   NUL-terminated description valid on the calling thread until its next
//!   failing call.
//! - Pointer arguments must be valid for the documented lengths; NULL where
//!   a pointer is required yields `FSPIKE_STATUS_USAGE`, never a crash.

use fspike_core::data_io;
use fspike_core::fde::{
    mittag_leffler, FractionalOrder, SolverMethod, SolverOptions, TimeGrid,
};
use fspike_core::network::{forward, LayerSpec, NetworkSpec};
use fspike_core::neuron::{NeuronModel, NeuronParams, ResetRule};
use fspike_core::surrogate::SurrogateSpec;
use fspike_core::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

/// Result of a fallible call. Families match the CLI exit codes: usage and
/// configuration problems, numerical failures, then I/O and format errors.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FspikeStatus {
    Ok = 0,
    Usage = 1,
    Numerical = 2,
    Io = 3,
}

/// A trained or freshly initialized spiking network (opaque).
pub struct FspikeNetwork {
    spec: NetworkSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn remember(err: &Error) -> FspikeStatus {
    let message = err.to_string();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() =
            CString::new(message).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    });
    match err.exit_code() {
        2 => FspikeStatus::Numerical,
        3 => FspikeStatus::Io,
        _ => FspikeStatus::Usage,
    }
}

fn usage(detail: &str) -> FspikeStatus {
    remember(&Error::InvalidArgument(detail.to_string()))
}

/// Run `f`, translating errors and panics into statuses. A panic across the
/// C boundary is undefined behavior, so everything is caught here.
fn guarded(f: impl FnOnce() -> Result<(), Error>) -> FspikeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FspikeStatus::Ok,
        Ok(Err(e)) => remember(&e),
        Err(_) => usage("internal panic"),
    }
}

fn guarded_ptr<T>(f: impl FnOnce() -> Result<*mut T, Error>) -> *mut T {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(p)) => p,
        Ok(Err(e)) => {
            remember(&e);
            std::ptr::null_mut()
        }
        Err(_) => {
            usage("internal panic");
            std::ptr::null_mut()
        }
    }
}

/// # Safety
/// `path` must be a NUL-terminated string.
unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Error> {
    if path.is_null() {
        return Err(Error::InvalidArgument("path is NULL".into()));
    }
    let s = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| Error::InvalidArgument("path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

/// The last error message raised on this thread, NUL-terminated. Never NULL;
/// empty before the first failure. The pointer stays valid until the next
/// failing fspike call on the same thread.
#[no_mangle]
pub extern "C" fn fspike_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fspike_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Load a network checkpoint. Returns NULL on failure (see
/// `fspike_last_error_message`). Free with `fspike_network_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fspike_network_load(path: *const c_char) -> *mut FspikeNetwork {
    guarded_ptr(|| {
        let spec = data_io::load_checkpoint(&path_arg(path)?)?;
        Ok(Box::into_raw(Box::new(FspikeNetwork { spec })))
    })
}

/// Build a randomly initialized dense network. `dims` lists layer widths
/// from input to output (at least two entries); `alpha` is the fractional
/// order in (0, 1]. Returns NULL on failure.
///
/// # Safety
/// `dims` must point to `num_dims` readable entries.
#[no_mangle]
pub unsafe extern "C" fn fspike_network_random(
    dims: *const usize,
    num_dims: usize,
    alpha: f64,
    seed: u64,
) -> *mut FspikeNetwork {
    guarded_ptr(|| {
        if dims.is_null() {
            return Err(Error::InvalidArgument("dims is NULL".into()));
        }
        if num_dims < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least an input and an output width, got {num_dims}"
            )));
        }
        let dims = std::slice::from_raw_parts(dims, num_dims);
        let order = FractionalOrder::new(alpha)?;
        let neuron = NeuronParams {
            alpha: order,
            tau_alpha: 2.0,
            r: 1.0,
            theta: 1.0,
            reset: ResetRule::SoftSubtract,
            model: NeuronModel::Lif,
        }
        .validated()?;
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|d| {
                LayerSpec::random_uniform(d[0], d[1], neuron, SurrogateSpec::default(), &mut rng)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let spec = NetworkSpec::new(layers, order)?;
        Ok(Box::into_raw(Box::new(FspikeNetwork { spec })))
    })
}

/// Save the network as a checkpoint file.
///
/// # Safety
/// `net` must be a live handle; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fspike_network_save(
    net: *const FspikeNetwork,
    path: *const c_char,
) -> FspikeStatus {
    guarded(|| {
        let net = net
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("net is NULL".into()))?;
        data_io::save_checkpoint(&net.spec, &path_arg(path)?)
    })
}

/// Release a handle returned by a constructor. NULL is a no-op.
///
/// # Safety
/// `net` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn fspike_network_free(net: *mut FspikeNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Input width of the first layer; 0 for NULL.
///
/// # Safety
/// `net` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fspike_network_in_dim(net: *const FspikeNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.spec.in_dim())
}

/// Output width of the last layer; 0 for NULL.
///
/// # Safety
/// `net` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fspike_network_out_dim(net: *const FspikeNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.spec.out_dim())
}

/// Number of weight layers; 0 for NULL.
///
/// # Safety
/// `net` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fspike_network_num_layers(net: *const FspikeNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.spec.layers.len())
}

/// Fractional order of the network; NaN for NULL.
///
/// # Safety
/// `net` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fspike_network_alpha(net: *const FspikeNetwork) -> f64 {
    net.as_ref().map_or(f64::NAN, |n| n.spec.alpha.get())
}

fn infer_counts(
    net: &FspikeNetwork,
    intensities: &[f64],
    t_steps: usize,
    encode_seed: u64,
) -> Result<Vec<f64>, Error> {
    let dim = net.spec.in_dim();
    let input = data_io::encode_bernoulli(intensities, 1, dim, t_steps, encode_seed)?;
    let grid = TimeGrid::new(0.0, t_steps as f64, t_steps)?;
    let opts = SolverOptions {
        method: SolverMethod::AbmPredictor,
        memory_window: None,
    };
    let state = forward(&net.spec, &input, &grid, &opts)?;
    Ok(state.final_counts(0).to_vec())
}

/// Encode one sample of `fspike_network_in_dim` intensities in [0, 1] as a
/// Bernoulli spike train over `t_steps` steps, run it, and write the
/// terminal per-class spike counts into `counts_out` (length
/// `fspike_network_out_dim`).
///
/// # Safety
/// `intensities` must hold the input width; `counts_out` must have room for
/// `counts_len >=` output width entries.
#[no_mangle]
pub unsafe extern "C" fn fspike_network_infer(
    net: *const FspikeNetwork,
    intensities: *const f64,
    t_steps: usize,
    encode_seed: u64,
    counts_out: *mut f64,
    counts_len: usize,
) -> FspikeStatus {
    guarded(|| {
        let net = net
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("net is NULL".into()))?;
        if intensities.is_null() || counts_out.is_null() {
            return Err(Error::InvalidArgument("buffer is NULL".into()));
        }
        let out_dim = net.spec.out_dim();
        if counts_len < out_dim {
            return Err(Error::DimensionMismatch(format!(
                "counts buffer holds {counts_len}, need {out_dim}"
            )));
        }
        let sample = std::slice::from_raw_parts(intensities, net.spec.in_dim());
        let counts = infer_counts(net, sample, t_steps, encode_seed)?;
        std::slice::from_raw_parts_mut(counts_out, out_dim).copy_from_slice(&counts);
        Ok(())
    })
}

/// Like `fspike_network_infer`, but writes only the argmax class index.
///
/// # Safety
/// `intensities` must hold the input width; `class_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fspike_network_classify(
    net: *const FspikeNetwork,
    intensities: *const f64,
    t_steps: usize,
    encode_seed: u64,
    class_out: *mut usize,
) -> FspikeStatus {
    guarded(|| {
        let net = net
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("net is NULL".into()))?;
        if intensities.is_null() || class_out.is_null() {
            return Err(Error::InvalidArgument("buffer is NULL".into()));
        }
        let sample = std::slice::from_raw_parts(intensities, net.spec.in_dim());
        let counts = infer_counts(net, sample, t_steps, encode_seed)?;
        let best = counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        class_out.write(best);
        Ok(())
    })
}

/// Evaluate the one-parameter Mittag-Leffler function E_alpha(z) for
/// alpha in (0, 1] and finite z <= 0 or small positive z.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fspike_mittag_leffler(
    alpha: f64,
    z: f64,
    out: *mut f64,
) -> FspikeStatus {
    guarded(|| {
        if out.is_null() {
            return Err(Error::InvalidArgument("out is NULL".into()));
        }
        let order = FractionalOrder::new(alpha)?;
        out.write(mittag_leffler(&order, z)?);
        Ok(())
    })
}
