//! C ABI over the simulator.
//!
//! Every function returns an [`FzStatus`]. On failure a message is kept per
//! thread and can be read with [`fz_last_error_message`]. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use frontalize::control::ControllerMode;
use frontalize::geometry::{Pose, Vec3};
use frontalize::sim::{self, RunLog, ScenarioConfig};
use frontalize::verification::cosine_similarity;
use frontalize::visibility::score_view;
use frontalize::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FzStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    NoFace = 5,
    Degenerate = 6,
    OutOfRange = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FzMode {
    Grounded = 0,
    PersonFollowing = 1,
    Frontalizing = 2,
}

/// World pose: metres, z up, yaw in radians counter-clockwise.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FzPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

/// One simulation step. `range_m` and `bearing_rad` are NaN without a person.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FzSample {
    pub time_s: f64,
    pub pose: FzPose,
    pub mode: FzMode,
    pub cmd_vx_mps: f64,
    pub cmd_vy_mps: f64,
    pub cmd_yaw_rate_radps: f64,
    pub range_m: f64,
    pub bearing_rad: f64,
}

pub struct FzScenario(ScenarioConfig);

pub struct FzRunLog(RunLog);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> FzStatus {
    match err {
        Error::InvalidArgument(_) => FzStatus::InvalidArgument,
        Error::Config(_) => FzStatus::Config,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => FzStatus::Io,
        Error::NoFace => FzStatus::NoFace,
        Error::DegenerateGeometry(_) | Error::InvalidSurface(_) | Error::Underdetermined(_) => FzStatus::Degenerate,
    }
}

struct Fail(FzStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(FzStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FzStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FzStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            FzStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(FzStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn pose_in(p: &FzPose) -> Result<Pose, Fail> {
    Ok(Pose::new(Vec3::new(p.x, p.y, p.z), p.yaw)?)
}

fn pose_out(p: &Pose) -> FzPose {
    FzPose {
        x: p.position.x,
        y: p.position.y,
        z: p.position.z,
        yaw: p.yaw,
    }
}

fn mode_out(m: ControllerMode) -> FzMode {
    match m {
        ControllerMode::Grounded => FzMode::Grounded,
        ControllerMode::PersonFollowing => FzMode::PersonFollowing,
        ControllerMode::Frontalizing => FzMode::Frontalizing,
    }
}

/// Message for the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn fz_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fz_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fz_scenario_default(out: *mut *mut FzScenario) -> FzStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(FzScenario(ScenarioConfig::default())));
        Ok(())
    })
}

/// Parses and validates a scenario. Relative calibration paths resolve against
/// the working directory.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fz_scenario_from_toml(toml: *const c_char, out: *mut *mut FzScenario) -> FzStatus {
    guard(|| {
        let text = str_arg(toml, "toml")?;
        let out = out_arg(out, "out")?;
        let cfg = ScenarioConfig::from_toml_str(text, None)?;
        *out = Box::into_raw(Box::new(FzScenario(cfg)));
        Ok(())
    })
}

/// # Safety
/// `scenario` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn fz_scenario_set_seed(scenario: *mut FzScenario, seed: u64) -> FzStatus {
    guard(|| {
        out_arg(scenario, "scenario")?.0.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `scenario` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn fz_scenario_free(scenario: *mut FzScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs the closed-loop simulation.
///
/// # Safety
/// `scenario` must come from this library and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fz_run(scenario: *const FzScenario, out: *mut *mut FzRunLog) -> FzStatus {
    guard(|| {
        let cfg = ref_arg(scenario, "scenario")?;
        let out = out_arg(out, "out")?;
        let log = sim::run(&cfg.0)?;
        *out = Box::into_raw(Box::new(FzRunLog(log)));
        Ok(())
    })
}

/// # Safety
/// `log` must come from this library and `len` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fz_runlog_len(log: *const FzRunLog, len: *mut usize) -> FzStatus {
    guard(|| {
        *out_arg(len, "len")? = ref_arg(log, "log")?.0.samples.len();
        Ok(())
    })
}

/// # Safety
/// `log` must come from this library and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fz_runlog_sample(log: *const FzRunLog, index: usize, out: *mut FzSample) -> FzStatus {
    guard(|| {
        let log = ref_arg(log, "log")?;
        let out = out_arg(out, "out")?;
        let s = log.0.samples.get(index).ok_or_else(|| {
            Fail(
                FzStatus::OutOfRange,
                format!("sample {index} of {}", log.0.samples.len()),
            )
        })?;
        *out = FzSample {
            time_s: s.time,
            pose: pose_out(&s.pose),
            mode: mode_out(s.mode),
            cmd_vx_mps: s.command.vx,
            cmd_vy_mps: s.command.vy,
            cmd_yaw_rate_radps: s.command.yaw_rate,
            range_m: s.range.unwrap_or(f64::NAN),
            bearing_rad: s.bearing.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// Writes every CSV log into `dir`, creating it if needed.
///
/// # Safety
/// `log` must come from this library and `dir` be a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn fz_runlog_write_csv(log: *const FzRunLog, dir: *const c_char) -> FzStatus {
    guard(|| {
        let log = ref_arg(log, "log")?;
        let dir = str_arg(dir, "dir")?;
        log.0.write_csv_dir(Path::new(dir))?;
        Ok(())
    })
}

/// # Safety
/// `log` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn fz_runlog_free(log: *mut FzRunLog) {
    if !log.is_null() {
        drop(Box::from_raw(log));
    }
}

/// Frontalization error of the scenario's person seen from `uav`, using the
/// scenario camera, surface and raster. Fails with `FZ_STATUS_NO_FACE` when no
/// face cell is visible.
///
/// # Safety
/// `scenario` must come from this library, `uav` be readable and `error`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn fz_score_view(
    scenario: *const FzScenario,
    uav: *const FzPose,
    error: *mut f64,
) -> FzStatus {
    guard(|| {
        let cfg = &ref_arg(scenario, "scenario")?.0;
        let pose = pose_in(ref_arg(uav, "uav")?)?;
        let error = out_arg(error, "error")?;
        let head = cfg.person.head()?;
        let surface = cfg.surface.build()?;
        let cam_pose = cfg.camera.world_pose(&pose);
        *error = score_view(&surface, &head, &cfg.camera, &cam_pose, cfg.raster)?.error;
        Ok(())
    })
}

/// UAV pose at `range_m` and `bearing_rad` from the scenario's person, facing them.
///
/// # Safety
/// `scenario` must come from this library and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fz_station_pose(
    scenario: *const FzScenario,
    range_m: f64,
    bearing_rad: f64,
    out: *mut FzPose,
) -> FzStatus {
    guard(|| {
        let cfg = &ref_arg(scenario, "scenario")?.0;
        let out = out_arg(out, "out")?;
        if !(range_m > 0.0 && range_m.is_finite() && bearing_rad.is_finite()) {
            return Err(Fail(
                FzStatus::InvalidArgument,
                format!("bad station: range {range_m}, bearing {bearing_rad}"),
            ));
        }
        let head = cfg.person.head()?;
        *out = pose_out(&Pose::station(&head, range_m, bearing_rad));
        Ok(())
    })
}

/// # Safety
/// `a` and `b` must each point to `len` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn fz_cosine_similarity(a: *const f64, b: *const f64, len: usize, out: *mut f64) -> FzStatus {
    guard(|| {
        if a.is_null() || b.is_null() {
            return Err(null("embedding"));
        }
        let out = out_arg(out, "out")?;
        let a = std::slice::from_raw_parts(a, len);
        let b = std::slice::from_raw_parts(b, len);
        *out = cosine_similarity(a, b)?;
        Ok(())
    })
}
