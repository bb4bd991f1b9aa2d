//! Static grid evaluations: score sweeps and the commanded velocity field.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{frontalization_setpoint, inner_loop_step, VelocityCommand, NOMINAL_FACE_HEIGHT_M};
use crate::error::{Error, Result};
use crate::estimation::{estimate_depth, MAX_DEPTH_M, MIN_DEPTH_M};
use crate::geometry::{person_bbox, relative_bearing, HeadPose, Pose, Vec3};
use crate::perception::{FaceDetector, Scene};
use crate::visibility::score_view;

use super::config::{FieldGrid, ScenarioConfig, SweepGrid};

/// First random stream used by sweep cells; cell `i` uses this plus `i`.
const SWEEP_STREAM_BASE: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub bearing_deg: f64,
    pub range_m: f64,
    pub samples: usize,
    pub detections: usize,
    /// `None` when no sample produced a detection.
    pub mean_error: Option<f64>,
    pub mean_accuracy: Option<f64>,
}

/// Mean frontalization score per (bearing, range) with the vehicle held at
/// each station. Rows are ranges, in grid order.
pub fn sweep(config: &ScenarioConfig, grid: &SweepGrid) -> Result<Vec<SweepCell>> {
    config.validate()?;
    if grid.bearings_deg.is_empty() || grid.ranges_m.is_empty() || grid.samples == 0 {
        return Err(Error::Config(vec!["sweep: grid must be nonempty".into()]));
    }
    let head = config.person.head()?;
    let surface = config.surface.build()?;
    let noise = config.noise_model();
    let cells: Vec<(f64, f64)> = grid
        .ranges_m
        .iter()
        .flat_map(|&r| grid.bearings_deg.iter().map(move |&b| (r, b)))
        .collect();
    cells
        .par_iter()
        .enumerate()
        .map(|(i, &(range, bearing))| {
            let mut det = FaceDetector::with_stream(
                noise,
                config.detection,
                surface.clone(),
                config.raster,
                SWEEP_STREAM_BASE + i as u64,
            );
            let scene = Scene {
                head: Some(&head),
                uav: Pose::station(&head, range, bearing.to_radians()),
                camera: &config.camera,
            };
            let scores: Vec<_> = (0..grid.samples)
                .filter_map(|k| det.detect(&scene, k as f64 / config.rates.face_hz))
                .map(|(_, s)| s)
                .collect();
            let n = scores.len();
            let mean = |f: fn(&crate::visibility::FrontalizationScore) -> f64| {
                (n > 0).then(|| scores.iter().map(f).sum::<f64>() / n as f64)
            };
            Ok(SweepCell {
                bearing_deg: bearing,
                range_m: range,
                samples: grid.samples,
                detections: n,
                mean_error: mean(|s| s.error),
                mean_accuracy: mean(|s| s.accuracy),
            })
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_sweep_csv<W: Write>(out: W, cells: &[SweepCell]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "range_m", "bearing_deg", "samples", "detections", "mean_error", "mean_accuracy",
    ])?;
    for c in cells {
        w.write_record([
            c.range_m.to_string(),
            c.bearing_deg.to_string(),
            c.samples.to_string(),
            c.detections.to_string(),
            opt(c.mean_error),
            opt(c.mean_accuracy),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldCell {
    pub range_m: f64,
    pub bearing_deg: f64,
    /// Vehicle position, world frame.
    pub x_m: f64,
    pub y_m: f64,
    pub yaw_rad: f64,
    /// Face detection probability at this range is at least one half.
    pub detecting: bool,
    /// The controller holds position here.
    pub dead_zone: bool,
    pub error: Option<f64>,
    /// Body-frame command.
    pub command: VelocityCommand,
    /// Commanded velocity rotated into the world frame.
    pub vx_world_mps: f64,
    pub vy_world_mps: f64,
    /// `|bearing| + max(0, range - standoff)`.
    pub lyapunov: f64,
    /// Its rate of change under the command, per second.
    pub lyapunov_rate: f64,
}

impl FieldCell {
    pub fn descending(&self) -> bool {
        self.lyapunov_rate < 0.0
    }
}

/// Convergence measure of a vehicle pose: angular plus radial excess.
pub fn lyapunov(pose: &Pose, head: &HeadPose, standoff: f64) -> Result<f64> {
    let (range, bearing) = relative_bearing(pose, head)?;
    Ok(bearing.abs() + (range - standoff).max(0.0))
}

/// Step used to differentiate the convergence measure, seconds.
const LYAPUNOV_STEP_S: f64 = 1e-3;

/// Open-loop command at each grid pose from a fresh noiseless detection.
pub fn velocity_field(config: &ScenarioConfig, grid: &FieldGrid) -> Result<Vec<FieldCell>> {
    config.validate()?;
    if grid.bearings_deg.is_empty() || grid.ranges_m.is_empty() {
        return Err(Error::Config(vec!["field: grid must be nonempty".into()]));
    }
    let head = config.person.head()?;
    let surface = config.surface.build()?;
    let depth = config.depth_model()?;
    let camera = config.camera;
    let standoff = config.orbit.standoff_m;
    let inner_dt = 1.0 / config.rates.odometry_hz;
    let cells: Vec<(f64, f64)> = grid
        .ranges_m
        .iter()
        .flat_map(|&r| grid.bearings_deg.iter().map(move |&b| (r, b)))
        .collect();
    cells
        .par_iter()
        .map(|&(range, bearing_deg)| {
            let bearing = bearing_deg.to_radians();
            let pose = Pose::station(&head, range, bearing);
            let cam_pose = camera.world_pose(&pose);
            let detecting = bearing.abs() < std::f64::consts::FRAC_PI_2
                && config.detection.face.probability(range)? >= 0.5;

            let face_box = surface.face_box(&head, &camera, &cam_pose);
            let score = score_view(&surface, &head, &camera, &cam_pose, config.raster).ok();
            let (command, dead_zone, error) = match (detecting, face_box, score) {
                (true, Some(fb), Some(score)) => {
                    let est = match person_bbox(&camera, &cam_pose, &head) {
                        Some(pb) => estimate_depth(&depth, &pb),
                        None => (camera.focal_px * NOMINAL_FACE_HEIGHT_M / fb.height).clamp(MIN_DEPTH_M, MAX_DEPTH_M),
                    };
                    let sp = frontalization_setpoint(&score.at(0.0), &fb, &pose, est, &camera, &config.orbit, 0.0)
                        .expect("fresh score");
                    let cmd = inner_loop_step(&sp, &pose, &config.gains, inner_dt)?;
                    let held = sp.position == pose.position && cmd.is_zero();
                    (cmd, held, Some(score.error))
                }
                _ => (VelocityCommand::zero(0.0), false, score.map(|s| s.error)),
            };

            let world = Vec3::new(command.vx, command.vy, 0.0).rotate_z(pose.yaw);
            let v0 = lyapunov(&pose, &head, standoff)?;
            let moved = Pose {
                position: pose.position + world * LYAPUNOV_STEP_S,
                yaw: pose.yaw + command.yaw_rate * LYAPUNOV_STEP_S,
            };
            let v1 = lyapunov(&moved, &head, standoff)?;
            Ok(FieldCell {
                range_m: range,
                bearing_deg,
                x_m: pose.position.x,
                y_m: pose.position.y,
                yaw_rad: pose.yaw,
                detecting,
                dead_zone,
                error,
                command,
                vx_world_mps: world.x,
                vy_world_mps: world.y,
                lyapunov: v0,
                lyapunov_rate: (v1 - v0) / LYAPUNOV_STEP_S,
            })
        })
        .collect()
}

pub fn write_field_csv<W: Write>(out: W, cells: &[FieldCell]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "range_m",
        "bearing_deg",
        "x_m",
        "y_m",
        "yaw_rad",
        "detecting",
        "dead_zone",
        "error",
        "vx_mps",
        "vy_mps",
        "yaw_rate_radps",
        "vx_world_mps",
        "vy_world_mps",
        "lyapunov",
        "lyapunov_rate_per_s",
    ])?;
    for c in cells {
        w.write_record([
            c.range_m.to_string(),
            c.bearing_deg.to_string(),
            c.x_m.to_string(),
            c.y_m.to_string(),
            c.yaw_rad.to_string(),
            c.detecting.to_string(),
            c.dead_zone.to_string(),
            opt(c.error),
            c.command.vx.to_string(),
            c.command.vy.to_string(),
            c.command.yaw_rate.to_string(),
            c.vx_world_mps.to_string(),
            c.vy_world_mps.to_string(),
            c.lyapunov.to_string(),
            c.lyapunov_rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Fraction of detecting cells outside the dead zone whose command strictly
/// decreases the convergence measure. `None` without such cells.
pub fn descent_fraction(cells: &[FieldCell]) -> Option<f64> {
    let active: Vec<_> = cells.iter().filter(|c| c.detecting && !c.dead_zone).collect();
    (!active.is_empty()).then(|| active.iter().filter(|c| c.descending()).count() as f64 / active.len() as f64)
}
