//! First-order velocity-lag vehicle.

use serde::{Deserialize, Serialize};

use crate::control::VelocityCommand;
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleModel {
    /// Velocity response time constant, seconds.
    pub tau_s: f64,
    pub max_speed_mps: f64,
    pub max_yaw_rate_radps: f64,
}

impl Default for VehicleModel {
    fn default() -> Self {
        VehicleModel {
            tau_s: 0.3,
            max_speed_mps: 1.0,
            max_yaw_rate_radps: 1.0,
        }
    }
}

impl VehicleModel {
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.tau_s > 0.0 && self.tau_s.is_finite()) {
            out.push(format!("vehicle.tau_s: must be > 0, got {}", self.tau_s));
        }
        if !(self.max_speed_mps > 0.0) {
            out.push(format!("vehicle.max_speed_mps: must be > 0, got {}", self.max_speed_mps));
        }
        if !(self.max_yaw_rate_radps > 0.0) {
            out.push(format!(
                "vehicle.max_yaw_rate_radps: must be > 0, got {}",
                self.max_yaw_rate_radps
            ));
        }
        out
    }
}

/// Body-frame velocity actually flown.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BodyVelocity {
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
}

/// Advances the vehicle by `dt`. Velocity relaxes exactly toward the
/// saturated command; translation uses the mean velocity over the step at
/// the midpoint heading.
pub fn integrate_vehicle(
    pose: &Pose,
    velocity: &BodyVelocity,
    command: &VelocityCommand,
    vehicle: &VehicleModel,
    dt: f64,
) -> Result<(Pose, BodyVelocity)> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let s = vehicle.max_speed_mps;
    let target = BodyVelocity {
        vx: command.vx.clamp(-s, s),
        vy: command.vy.clamp(-s, s),
        yaw_rate: command
            .yaw_rate
            .clamp(-vehicle.max_yaw_rate_radps, vehicle.max_yaw_rate_radps),
    };
    let a = -(-dt / vehicle.tau_s).exp_m1();
    let relax = |v: f64, c: f64| v + (c - v) * a;
    // Mean velocity over the step, integrating the exponential exactly.
    let mean = |v: f64, c: f64| c + (v - c) * vehicle.tau_s * a / dt;
    let next = BodyVelocity {
        vx: relax(velocity.vx, target.vx),
        vy: relax(velocity.vy, target.vy),
        yaw_rate: relax(velocity.yaw_rate, target.yaw_rate),
    };
    let avg = BodyVelocity {
        vx: mean(velocity.vx, target.vx),
        vy: mean(velocity.vy, target.vy),
        yaw_rate: mean(velocity.yaw_rate, target.yaw_rate),
    };
    if avg.vx == 0.0 && avg.vy == 0.0 && avg.yaw_rate == 0.0 {
        return Ok((*pose, next));
    }
    let mid_yaw = pose.yaw + 0.5 * avg.yaw_rate * dt;
    let step = Vec3::new(avg.vx * dt, avg.vy * dt, 0.0).rotate_z(mid_yaw);
    Ok((
        Pose {
            position: pose.position + step,
            yaw: wrap_angle(pose.yaw + avg.yaw_rate * dt),
        },
        next,
    ))
}
