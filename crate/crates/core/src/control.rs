//! PD velocity controllers, the orbit setpoint generator and the mode logic
//! tying them together.
//!
//! Commands are body-frame velocities: `vx` forward, `vy` left, `yaw_rate`
//! counter-clockwise seen from above, like the world yaw.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{estimate_depth, pixel_offset_to_yaw_error, DepthModel, MAX_DEPTH_M, MIN_DEPTH_M};
use crate::geometry::{wrap_angle, BoundingBox, PinholeCamera, Pose, Vec3};
use crate::perception::{DetectionEvent, DetectionKind};
use crate::visibility::FrontalizationScore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisGains {
    pub kp: f64,
    pub kd: f64,
    /// Output magnitude limit.
    pub saturation: f64,
}

impl AxisGains {
    pub fn diagnostics(&self, name: &str) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.kp >= 0.0 && self.kp.is_finite()) {
            out.push(format!("gains.{name}.kp: must be >= 0, got {}", self.kp));
        }
        if !(self.kd >= 0.0 && self.kd.is_finite()) {
            out.push(format!("gains.{name}.kd: must be >= 0, got {}", self.kd));
        }
        if !(self.saturation > 0.0 && self.saturation.is_finite()) {
            out.push(format!("gains.{name}.saturation: must be > 0, got {}", self.saturation));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PDGains {
    pub forward: AxisGains,
    pub lateral: AxisGains,
    pub yaw: AxisGains,
}

impl Default for PDGains {
    fn default() -> Self {
        PDGains {
            forward: AxisGains {
                kp: 0.5,
                kd: 0.1,
                saturation: 1.0,
            },
            lateral: AxisGains {
                kp: 0.5,
                kd: 0.1,
                saturation: 1.0,
            },
            yaw: AxisGains {
                kp: 1.0,
                kd: 0.1,
                saturation: 1.0,
            },
        }
    }
}

impl PDGains {
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = self.forward.diagnostics("forward");
        out.extend(self.lateral.diagnostics("lateral"));
        out.extend(self.yaw.diagnostics("yaw"));
        out
    }
}

/// `clamp(kp e + kd (e - e_prev) / dt, ±saturation)`.
pub fn pd_step(gains: &AxisGains, error: f64, prev_error: f64, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let u = gains.kp * error + gains.kd * (error - prev_error) / dt;
    Ok(u.clamp(-gains.saturation, gains.saturation))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
    pub timestamp: f64,
}

impl VelocityCommand {
    pub fn zero(timestamp: f64) -> Self {
        VelocityCommand {
            timestamp,
            ..Default::default()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.vx == 0.0 && self.vy == 0.0 && self.yaw_rate == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setpoint {
    pub position: Vec3,
    pub yaw: f64,
    pub created_at: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerMode {
    Grounded,
    PersonFollowing,
    Frontalizing,
}

impl ControllerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerMode::Grounded => "grounded",
            ControllerMode::PersonFollowing => "person_following",
            ControllerMode::Frontalizing => "frontalizing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FollowParams {
    pub standoff_m: f64,
    /// A person box older than this no longer drives the vehicle.
    pub stale_after_s: f64,
}

impl Default for FollowParams {
    fn default() -> Self {
        FollowParams {
            standoff_m: 1.5,
            stale_after_s: 2.0,
        }
    }
}

/// Person-following PD with derivative memory.
#[derive(Debug, Clone, Default)]
pub struct PersonFollower {
    prev: Option<(f64, f64, f64)>,
}

impl PersonFollower {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        self.prev = None;
    }

    /// Command from a person box. Forward speed never carries the vehicle
    /// past the standoff within `dt`; heading turns toward the box.
    pub fn step(
        &mut self,
        detection: &DetectionEvent,
        model: &DepthModel,
        camera: &PinholeCamera,
        gains: &PDGains,
        params: &FollowParams,
        now: f64,
    ) -> Result<VelocityCommand> {
        if now - detection.timestamp > params.stale_after_s {
            self.prev = None;
            return Ok(VelocityCommand::zero(now));
        }
        let depth_err = estimate_depth(model, &detection.bbox) - params.standoff_m;
        let yaw_err = -pixel_offset_to_yaw_error(&detection.bbox, camera);
        let (pd, py, dt) = match self.prev {
            Some((t, d, y)) if now > t => (d, y, now - t),
            _ => (depth_err, yaw_err, 1.0),
        };
        let vx = pd_step(&gains.forward, depth_err, pd, dt)?.min(depth_err.max(0.0) / dt);
        let yaw_rate = pd_step(&gains.yaw, yaw_err, py, dt)?;
        self.prev = Some((now, depth_err, yaw_err));
        Ok(VelocityCommand {
            vx,
            vy: 0.0,
            yaw_rate,
            timestamp: now,
        })
    }
}

/// Single-shot form of [`PersonFollower::step`] without derivative history.
pub fn person_follow_step(
    detection: &DetectionEvent,
    model: &DepthModel,
    camera: &PinholeCamera,
    gains: &PDGains,
    now: f64,
) -> Result<VelocityCommand> {
    PersonFollower::new().step(detection, model, camera, gains, &FollowParams::default(), now)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitParams {
    /// Arc displacement per unit frontalization error, radians.
    pub arc_gain: f64,
    /// No arc motion below this error magnitude.
    pub dead_zone: f64,
    pub max_arc_rad: f64,
    /// Closest allowed estimated range.
    pub standoff_m: f64,
    /// Half-width of the hold band `[standoff, standoff + 2 tol)`. Outside it
    /// the vehicle is moved to the band center.
    pub radial_tolerance_m: f64,
    /// Heading counts as centered within this tolerance.
    pub yaw_tolerance_rad: f64,
    /// A score older than this yields no setpoint.
    pub stale_after_s: f64,
}

impl Default for OrbitParams {
    fn default() -> Self {
        OrbitParams {
            arc_gain: 1.2,
            dead_zone: 0.03,
            max_arc_rad: 0.5,
            standoff_m: 1.5,
            radial_tolerance_m: 0.05,
            yaw_tolerance_rad: 0.02,
            stale_after_s: 2.0,
        }
    }
}

impl OrbitParams {
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("arc_gain", self.arc_gain),
            ("dead_zone", self.dead_zone),
            ("radial_tolerance_m", self.radial_tolerance_m),
            ("yaw_tolerance_rad", self.yaw_tolerance_rad),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                out.push(format!("orbit.{name}: must be >= 0, got {v}"));
            }
        }
        for (name, v) in [
            ("max_arc_rad", self.max_arc_rad),
            ("standoff_m", self.standoff_m),
            ("stale_after_s", self.stale_after_s),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("orbit.{name}: must be > 0, got {v}"));
            }
        }
        if self.max_arc_rad >= PI / 2.0 {
            out.push(format!("orbit.max_arc_rad: must be below pi/2, got {}", self.max_arc_rad));
        }
        out
    }

    /// Arc displacement commanded for a score; positive moves the vehicle
    /// toward the subject's left.
    pub fn arc(&self, error: f64) -> f64 {
        if error.abs() < self.dead_zone {
            0.0
        } else {
            (-self.arc_gain * error).clamp(-self.max_arc_rad, self.max_arc_rad)
        }
    }
}

/// Rounding slack below the standoff still treated as inside the hold band.
const RANGE_SLACK_M: f64 = 1e-6;

/// Next waypoint on a circle about the estimated face position.
///
/// The face is placed along the camera ray through the face box center at
/// the estimated range. The vehicle is moved by the arc displacement around
/// it, at the current range when that is inside the hold band and at the band
/// center otherwise, facing the face. Inside the dead zone the
/// current position is held. Returns `None` for a stale score.
#[allow(clippy::too_many_arguments)]
pub fn frontalization_setpoint(
    score: &FrontalizationScore,
    face_box: &BoundingBox,
    uav: &Pose,
    est_range: f64,
    camera: &PinholeCamera,
    params: &OrbitParams,
    now: f64,
) -> Option<Setpoint> {
    if now - score.timestamp > params.stale_after_s {
        return None;
    }
    let yaw_err = pixel_offset_to_yaw_error(face_box, camera);
    let toward_face = wrap_angle(uav.yaw - yaw_err);
    let offset = est_range - params.standoff_m;
    let range_settled = offset > -RANGE_SLACK_M && offset < 2.0 * params.radial_tolerance_m;
    let arc = params.arc(score.error);

    if arc == 0.0 && range_settled {
        let yaw = if yaw_err.abs() < params.yaw_tolerance_rad {
            uav.yaw
        } else {
            toward_face
        };
        return Some(Setpoint {
            position: uav.position,
            yaw,
            created_at: now,
        });
    }

    let radius = if range_settled {
        est_range
    } else {
        params.standoff_m + params.radial_tolerance_m
    };
    let face = uav.position + Vec3::new(toward_face.cos(), toward_face.sin(), 0.0) * est_range;
    let around = toward_face + PI - arc;
    Some(Setpoint {
        position: face + Vec3::new(around.cos(), around.sin(), 0.0) * radius,
        yaw: wrap_angle(around + PI),
        created_at: now,
    })
}

/// Setpoint tracking PD, run on each odometry update.
#[derive(Debug, Clone, Default)]
pub struct InnerLoop {
    prev: Option<(f64, Vec3, f64)>,
}

impl InnerLoop {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        self.prev = None;
    }

    /// Body-frame position and heading errors drive three PD channels. The
    /// derivative history restarts whenever a new setpoint arrives.
    pub fn step(&mut self, setpoint: &Setpoint, odometry: &Pose, gains: &PDGains, dt: f64) -> Result<VelocityCommand> {
        let mut world = setpoint.position - odometry.position;
        world.z = 0.0;
        let e = odometry.to_body(world);
        let e_yaw = wrap_angle(setpoint.yaw - odometry.yaw);
        let (pe, py) = match self.prev {
            Some((created, pe, py)) if created == setpoint.created_at => (pe, py),
            _ => (e, e_yaw),
        };
        let cmd = VelocityCommand {
            vx: pd_step(&gains.forward, e.x, pe.x, dt)?,
            vy: pd_step(&gains.lateral, e.y, pe.y, dt)?,
            yaw_rate: pd_step(&gains.yaw, e_yaw, py, dt)?,
            timestamp: setpoint.created_at.max(0.0),
        };
        self.prev = Some((setpoint.created_at, e, e_yaw));
        Ok(cmd)
    }
}

/// Memoryless form of [`InnerLoop::step`].
pub fn inner_loop_step(setpoint: &Setpoint, odometry: &Pose, gains: &PDGains, dt: f64) -> Result<VelocityCommand> {
    InnerLoop::new().step(setpoint, odometry, gains, dt)
}

/// Mode transition for a batch of events arriving at `now`.
/// `last_face` is the time of the most recent face event before the batch.
pub fn mode_arbiter(
    events: &[DetectionEvent],
    now: f64,
    current: ControllerMode,
    last_face: Option<f64>,
    dropout_s: f64,
) -> ControllerMode {
    let mut mode = current;
    let mut last_face = last_face;
    for e in events {
        match (mode, e.kind) {
            (ControllerMode::Grounded, DetectionKind::Person) => mode = ControllerMode::PersonFollowing,
            (ControllerMode::PersonFollowing, DetectionKind::Face) => mode = ControllerMode::Frontalizing,
            _ => {}
        }
        if e.kind == DetectionKind::Face {
            last_face = Some(e.timestamp);
        }
    }
    if mode == ControllerMode::Frontalizing && last_face.is_none_or(|t| now - t > dropout_s) {
        mode = ControllerMode::PersonFollowing;
    }
    mode
}

/// Everything the controller is tuned by.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerSettings {
    pub gains: PDGains,
    pub follow: FollowParams,
    pub orbit: OrbitParams,
    pub dropout_s: f64,
    /// Inner loop period, seconds.
    pub inner_dt: f64,
}

/// Typical face height in metres, for ranging off the face box when no
/// fresh person box is available.
pub const NOMINAL_FACE_HEIGHT_M: f64 = 0.22;

/// The onboard controller: mode logic, person following, orbit setpoints and
/// the inner loop. It holds the last issued command between updates.
#[derive(Debug, Clone)]
pub struct Controller {
    settings: ControllerSettings,
    camera: PinholeCamera,
    depth: DepthModel,
    mode: ControllerMode,
    last_face: Option<f64>,
    last_person: Option<DetectionEvent>,
    odometry: Option<Pose>,
    setpoint: Option<Setpoint>,
    follower: PersonFollower,
    inner: InnerLoop,
    command: VelocityCommand,
    last_error: Option<f64>,
}

impl Controller {
    pub fn new(settings: ControllerSettings, camera: PinholeCamera, depth: DepthModel) -> Self {
        Controller {
            settings,
            camera,
            depth,
            mode: ControllerMode::Grounded,
            last_face: None,
            last_person: None,
            odometry: None,
            setpoint: None,
            follower: PersonFollower::new(),
            inner: InnerLoop::new(),
            command: VelocityCommand::zero(0.0),
            last_error: None,
        }
    }

    pub fn mode(&self) -> ControllerMode {
        self.mode
    }

    pub fn command(&self) -> VelocityCommand {
        self.command
    }

    pub fn setpoint(&self) -> Option<Setpoint> {
        self.setpoint
    }

    pub fn last_error(&self) -> Option<f64> {
        self.last_error
    }

    fn arbitrate(&mut self, events: &[DetectionEvent], now: f64) {
        let next = mode_arbiter(events, now, self.mode, self.last_face, self.settings.dropout_s);
        if next != self.mode {
            if next == ControllerMode::PersonFollowing {
                self.setpoint = None;
                self.inner.reset();
                self.follower.reset();
                self.command = VelocityCommand::zero(now);
            }
            self.mode = next;
        }
    }

    /// Range to the subject: the person box when fresh, otherwise the face box.
    fn range_estimate(&self, face_box: &BoundingBox, now: f64) -> f64 {
        match self.last_person {
            Some(p) if now - p.timestamp <= self.settings.follow.stale_after_s => estimate_depth(&self.depth, &p.bbox),
            _ => (self.camera.focal_px * NOMINAL_FACE_HEIGHT_M / face_box.height).clamp(MIN_DEPTH_M, MAX_DEPTH_M),
        }
    }

    pub fn on_person(&mut self, event: &DetectionEvent, now: f64) -> Result<()> {
        self.arbitrate(std::slice::from_ref(event), now);
        self.last_person = Some(*event);
        if self.mode == ControllerMode::PersonFollowing {
            self.command = self.follower.step(
                event,
                &self.depth,
                &self.camera,
                &self.settings.gains,
                &self.settings.follow,
                now,
            )?;
        }
        Ok(())
    }

    pub fn on_face(&mut self, event: &DetectionEvent, score: &FrontalizationScore, now: f64) -> Result<()> {
        self.arbitrate(std::slice::from_ref(event), now);
        self.last_face = Some(event.timestamp);
        self.last_error = Some(score.error);
        if self.mode != ControllerMode::Frontalizing {
            return Ok(());
        }
        let Some(uav) = self.odometry else {
            return Ok(());
        };
        let est = self.range_estimate(&event.bbox, now);
        if let Some(sp) = frontalization_setpoint(score, &event.bbox, &uav, est, &self.camera, &self.settings.orbit, now) {
            self.setpoint = Some(sp);
        }
        Ok(())
    }

    pub fn on_odometry(&mut self, pose: &Pose, now: f64) -> Result<()> {
        self.odometry = Some(*pose);
        match self.mode {
            ControllerMode::Grounded => self.command = VelocityCommand::zero(now),
            ControllerMode::PersonFollowing => {
                if self
                    .last_person
                    .is_none_or(|p| now - p.timestamp > self.settings.follow.stale_after_s)
                {
                    self.command = VelocityCommand::zero(now);
                }
            }
            ControllerMode::Frontalizing => {
                if let Some(sp) = self.setpoint {
                    let mut cmd = self.inner.step(&sp, pose, &self.settings.gains, self.settings.inner_dt)?;
                    cmd.timestamp = now;
                    self.command = cmd;
                }
            }
        }
        Ok(())
    }

    /// Advances the dropout timer without new events.
    pub fn tick(&mut self, now: f64) {
        self.arbitrate(&[], now);
    }
}

/// Writes `(time, mode, command)` rows.
/// One command change, with the controller state that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub mode: ControllerMode,
    pub command: VelocityCommand,
    /// Latest frontalization error, when frontalizing.
    pub error: Option<f64>,
    pub setpoint: Option<Setpoint>,
}

/// Empty cells mark values that don't exist in the current mode.
pub fn write_command_log<W: Write>(out: W, rows: &[CommandRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "time_s", "mode", "vx_mps", "vy_mps", "yaw_rate_radps", "error", "setpoint_x_m", "setpoint_y_m",
        "setpoint_yaw_rad",
    ])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in rows {
        let c = &r.command;
        let sp = r.setpoint;
        w.write_record([
            c.timestamp.to_string(),
            r.mode.as_str().to_string(),
            c.vx.to_string(),
            c.vy.to_string(),
            c.yaw_rate.to_string(),
            opt(r.error),
            opt(sp.map(|s| s.position.x)),
            opt(sp.map(|s| s.position.y)),
            opt(sp.map(|s| s.yaw)),
        ])?;
    }
    w.flush()?;
    Ok(())
}
