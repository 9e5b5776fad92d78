//! C interface to the abstraction and synthesis engine.
//!
//! Every object crosses the boundary as an opaque handle created by an
//! `impact_*_load`/`_build`/`_parse` function and released with the matching
//! `_free`. Functions return an [`ImpactStatus`]; on failure the message is
//! available from [`impact_last_error`] on the same thread until the next
//! failing call. Panics never unwind into C: they are reported as
//! [`ImpactStatus::Panic`].
//!
//! Strings are NUL-terminated UTF-8. Output pointers are only written on
//! success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use impact::abstraction::{build_abstraction, Imdp};
use impact::config::Config;
use impact::grid::{label_states, LabeledStates};
use impact::io;
use impact::synthesis::{synthesize, verify, Controller, SpecKind};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImpactStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The configuration could not be read or is invalid.
    Config = 3,
    /// Building the abstraction failed.
    Abstraction = 4,
    /// Interval iteration failed, including non-convergence.
    Synthesis = 5,
    /// Reading or writing a file failed.
    Io = 6,
    /// An index or buffer length is out of range.
    OutOfRange = 7,
    /// The arguments do not belong together (for example an abstraction
    /// built from a different configuration).
    Mismatch = 8,
    /// An internal error; the message describes it.
    Panic = 9,
}

/// A validated problem configuration.
pub struct ImpactConfig(Config);

/// An interval MDP abstraction.
pub struct ImpactImdp(Imdp);

/// A synthesized controller with its probability bounds.
pub struct ImpactController(Controller);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(ImpactStatus, String);

type Outcome = Result<(), Failure>;

fn fail(status: ImpactStatus, message: impl ToString) -> Failure {
    Failure(status, message.to_string())
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, translating failures and panics into a status code.
fn guard(f: impl FnOnce() -> Outcome) -> ImpactStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ImpactStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("internal error: {message}"));
            ImpactStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(ImpactStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(ImpactStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(ImpactStatus::NullArgument, format!("{name} is null")))
}

fn out_ptr<T>(p: *mut T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(fail(ImpactStatus::NullArgument, format!("{name} is null")))
    } else {
        Ok(())
    }
}

fn workers(requested: usize, cfg: &Config) -> Option<usize> {
    if requested > 0 {
        Some(requested)
    } else {
        cfg.run.workers
    }
}

fn labels_for(cfg: &Config) -> Result<LabeledStates, Failure> {
    match &cfg.spec {
        Some(spec) => label_states(&cfg.state, spec.target.as_ref(), spec.avoid.as_ref())
            .map_err(|e| fail(ImpactStatus::Config, format!("labelling states: {e}"))),
        None => Ok(LabeledStates::all_safe(cfg.state.total())),
    }
}

/// Message of the last failing call on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn impact_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn impact_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Reads and validates a configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn impact_config_load(path: *const c_char, out: *mut *mut ImpactConfig) -> ImpactStatus {
    guard(|| {
        let path = text(path, "path")?;
        out_ptr(out, "out")?;
        let cfg = Config::load(Path::new(path)).map_err(|e| fail(ImpactStatus::Config, e))?;
        *out = Box::into_raw(Box::new(ImpactConfig(cfg)));
        Ok(())
    })
}

/// Validates a configuration given as text.
///
/// # Safety
/// `source` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn impact_config_parse(source: *const c_char, out: *mut *mut ImpactConfig) -> ImpactStatus {
    guard(|| {
        let source = text(source, "source")?;
        out_ptr(out, "out")?;
        let cfg = Config::parse(source).map_err(|e| fail(ImpactStatus::Config, e))?;
        *out = Box::into_raw(Box::new(ImpactConfig(cfg)));
        Ok(())
    })
}

/// Lattice sizes of the configured spaces; absent spaces report 0.
///
/// # Safety
/// `config` must be a live handle; the outputs may be null when not wanted.
#[no_mangle]
pub unsafe extern "C" fn impact_config_sizes(
    config: *const ImpactConfig,
    n_states: *mut usize,
    n_inputs: *mut usize,
    n_disturbances: *mut usize,
) -> ImpactStatus {
    guard(|| {
        let cfg = &handle(config, "config")?.0;
        let sizes = [
            (n_states, cfg.state.total()),
            (n_inputs, cfg.input.as_ref().map_or(0, |s| s.total())),
            (n_disturbances, cfg.disturb.as_ref().map_or(0, |s| s.total())),
        ];
        for (p, v) in sizes {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn impact_config_free(config: *mut ImpactConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Builds the abstraction of a configuration. `workers` = 0 uses the
/// configured worker count (all cores by default).
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn impact_abstraction_build(
    config: *const ImpactConfig,
    workers_requested: usize,
    out: *mut *mut ImpactImdp,
) -> ImpactStatus {
    guard(|| {
        let cfg = &handle(config, "config")?.0;
        out_ptr(out, "out")?;
        let dynamics = cfg.require_dynamics().map_err(|e| fail(ImpactStatus::Config, e))?;
        let noise = cfg.require_noise().map_err(|e| fail(ImpactStatus::Config, e))?;
        let labels = labels_for(cfg)?;
        let imdp = impact::with_workers(workers(workers_requested, cfg), || {
            build_abstraction(
                dynamics,
                noise,
                &cfg.state,
                cfg.input.as_ref(),
                cfg.disturb.as_ref(),
                &labels,
                &cfg.run.abstraction,
            )
        })
        .map_err(|e| fail(ImpactStatus::Panic, e))?
        .map_err(|e| fail(ImpactStatus::Abstraction, e))?;
        *out = Box::into_raw(Box::new(ImpactImdp(imdp)));
        Ok(())
    })
}

/// Loads an abstraction directory written by [`impact_imdp_save`] or the
/// command-line tool.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn impact_imdp_load(dir: *const c_char, out: *mut *mut ImpactImdp) -> ImpactStatus {
    guard(|| {
        let dir = text(dir, "dir")?;
        out_ptr(out, "out")?;
        let imdp = io::load_imdp(Path::new(dir)).map_err(|e| fail(ImpactStatus::Io, e))?;
        *out = Box::into_raw(Box::new(ImpactImdp(imdp)));
        Ok(())
    })
}

/// Writes the abstraction's text files into `dir`, creating it if needed.
///
/// # Safety
/// `imdp` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn impact_imdp_save(imdp: *const ImpactImdp, dir: *const c_char) -> ImpactStatus {
    guard(|| {
        let imdp = &handle(imdp, "imdp")?.0;
        let dir = text(dir, "dir")?;
        io::save_imdp(Path::new(dir), imdp).map_err(|e| fail(ImpactStatus::Io, e))
    })
}

/// Safe states, inputs and disturbances of an abstraction (inputs and
/// disturbances are 1 when the space is absent); `rows` is their product.
///
/// # Safety
/// `imdp` must be a live handle; the outputs may be null when not wanted.
#[no_mangle]
pub unsafe extern "C" fn impact_imdp_dims(
    imdp: *const ImpactImdp,
    n_states: *mut usize,
    n_inputs: *mut usize,
    n_disturbances: *mut usize,
    rows: *mut usize,
) -> ImpactStatus {
    guard(|| {
        let m = &handle(imdp, "imdp")?.0;
        for (p, v) in [
            (n_states, m.n_states()),
            (n_inputs, m.n_inputs()),
            (n_disturbances, m.n_disturbances()),
            (rows, m.rows()),
        ] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `imdp` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn impact_imdp_free(imdp: *mut ImpactImdp) {
    if !imdp.is_null() {
        drop(Box::from_raw(imdp));
    }
}

/// Runs interval iteration for the configured specification and synthesis
/// options. Abstractions without inputs are verified (the controller has no
/// policy). `workers` = 0 uses the configured worker count.
///
/// # Safety
/// `config` and `imdp` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn impact_synthesize(
    config: *const ImpactConfig,
    imdp: *const ImpactImdp,
    workers_requested: usize,
    out: *mut *mut ImpactController,
) -> ImpactStatus {
    guard(|| {
        let cfg = &handle(config, "config")?.0;
        let m = &handle(imdp, "imdp")?.0;
        out_ptr(out, "out")?;
        let spec: SpecKind = cfg.require_spec().map_err(|e| fail(ImpactStatus::Config, e))?.kind;
        if m.state_space != cfg.state || m.input_space != cfg.input || m.disturb_space != cfg.disturb {
            return Err(fail(
                ImpactStatus::Mismatch,
                "the abstraction was built for different spaces than the configuration",
            ));
        }
        if m.labels != labels_for(cfg)? {
            return Err(fail(
                ImpactStatus::Mismatch,
                "the abstraction's labels differ from the configured target/avoid regions",
            ));
        }
        let opts = &cfg.run.synthesis;
        let controller = impact::with_workers(workers(workers_requested, cfg), || {
            if m.input_space.is_some() {
                synthesize(m, spec, opts)
            } else {
                verify(m, spec, opts)
            }
        })
        .map_err(|e| fail(ImpactStatus::Panic, e))?
        .map_err(|e| fail(ImpactStatus::Synthesis, e))?;
        *out = Box::into_raw(Box::new(ImpactController(controller)));
        Ok(())
    })
}

/// Loads a controller file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn impact_controller_load(
    path: *const c_char,
    out: *mut *mut ImpactController,
) -> ImpactStatus {
    guard(|| {
        let path = text(path, "path")?;
        out_ptr(out, "out")?;
        let c = io::load_controller(Path::new(path)).map_err(|e| fail(ImpactStatus::Io, e))?;
        *out = Box::into_raw(Box::new(ImpactController(c)));
        Ok(())
    })
}

/// Writes a controller file.
///
/// # Safety
/// `controller` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn impact_controller_save(
    controller: *const ImpactController,
    path: *const c_char,
) -> ImpactStatus {
    guard(|| {
        let c = &handle(controller, "controller")?.0;
        let path = text(path, "path")?;
        io::save_controller(Path::new(path), c).map_err(|e| fail(ImpactStatus::Io, e))
    })
}

/// Number of rows (safe states) in the controller table.
///
/// # Safety
/// `controller` must be a live handle and `len` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn impact_controller_len(controller: *const ImpactController, len: *mut usize) -> ImpactStatus {
    guard(|| {
        let c = &handle(controller, "controller")?.0;
        out_ptr(len, "len")?;
        *len = c.states.len();
        Ok(())
    })
}

/// Row `index` of the table: the lattice index of the state and its lower
/// and upper satisfaction probabilities.
///
/// # Safety
/// `controller` must be a live handle; the outputs may be null when not wanted.
#[no_mangle]
pub unsafe extern "C" fn impact_controller_row(
    controller: *const ImpactController,
    index: usize,
    state: *mut usize,
    p_min: *mut f64,
    p_max: *mut f64,
) -> ImpactStatus {
    guard(|| {
        let c = &handle(controller, "controller")?.0;
        if index >= c.states.len() {
            return Err(fail(
                ImpactStatus::OutOfRange,
                format!("row {index} of a table with {} rows", c.states.len()),
            ));
        }
        if !state.is_null() {
            *state = c.states[index];
        }
        if !p_min.is_null() {
            *p_min = c.p_min[index];
        }
        if !p_max.is_null() {
            *p_max = c.p_max[index];
        }
        Ok(())
    })
}

/// Looks up the input for a continuous state `x` (length = state dims).
/// `*found` is set to 0 when `x` lies in no safe cell of the table, or when
/// the controller has no policy; otherwise the input is written to `u`,
/// which must hold `u_len` values (at least the input dims).
///
/// # Safety
/// `x` must point to `x_len` values, `u` to `u_len` writable values and
/// `found` must be valid.
#[no_mangle]
pub unsafe extern "C" fn impact_controller_input(
    controller: *const ImpactController,
    x: *const f64,
    x_len: usize,
    u: *mut f64,
    u_len: usize,
    found: *mut i32,
) -> ImpactStatus {
    guard(|| {
        let c = &handle(controller, "controller")?.0;
        out_ptr(found, "found")?;
        if x.is_null() {
            return Err(fail(ImpactStatus::NullArgument, "x is null"));
        }
        let dims = c.state_space.dims();
        if x_len != dims {
            return Err(fail(
                ImpactStatus::OutOfRange,
                format!("x has {x_len} values, the state space has {dims} dimensions"),
            ));
        }
        let x = std::slice::from_raw_parts(x, x_len);
        let input = match c.input_at(x) {
            Ok(Some(Some(input))) => input,
            Ok(_) | Err(_) => {
                *found = 0;
                return Ok(());
            }
        };
        if u.is_null() || u_len < input.len() {
            return Err(fail(
                ImpactStatus::OutOfRange,
                format!("u holds {u_len} values, the input has {}", input.len()),
            ));
        }
        std::slice::from_raw_parts_mut(u, input.len()).copy_from_slice(&input);
        *found = 1;
        Ok(())
    })
}

/// # Safety
/// `controller` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn impact_controller_free(controller: *mut ImpactController) {
    if !controller.is_null() {
        drop(Box::from_raw(controller));
    }
}
