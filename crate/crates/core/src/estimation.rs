//! Monocular range and heading from a person bounding box.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{person_bbox, BoundingBox, HeadPose, PinholeCamera, Pose};

/// Depth estimates are clamped to this interval, metres.
pub const MIN_DEPTH_M: f64 = 0.3;
pub const MAX_DEPTH_M: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DepthModelKind {
    /// `d = slope * h + intercept`
    #[default]
    Linear,
    /// `d = slope / h + intercept`
    Inverse,
}

impl DepthModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DepthModelKind::Linear => "linear",
            DepthModelKind::Inverse => "inverse",
        }
    }

    fn regressor(self, height: f64) -> f64 {
        match self {
            DepthModelKind::Linear => height,
            DepthModelKind::Inverse => 1.0 / height,
        }
    }
}

impl std::str::FromStr for DepthModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(DepthModelKind::Linear),
            "inverse" => Ok(DepthModelKind::Inverse),
            other => Err(Error::invalid(format!("unknown depth model kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthModel {
    #[serde(default)]
    pub kind: DepthModelKind,
    pub slope: f64,
    pub intercept: f64,
    /// Box heights seen during calibration, pixels.
    pub min_height_px: f64,
    pub max_height_px: f64,
    pub r_squared: f64,
}

impl DepthModel {
    pub fn linear(slope: f64, intercept: f64) -> Self {
        DepthModel {
            kind: DepthModelKind::Linear,
            slope,
            intercept,
            min_height_px: 0.0,
            max_height_px: f64::INFINITY,
            r_squared: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.slope.is_finite() && self.intercept.is_finite()) {
            return Err(Error::invalid("depth model coefficients must be finite"));
        }
        match self.kind {
            DepthModelKind::Linear if self.slope >= 0.0 => {
                Err(Error::invalid("linear depth model needs a negative slope"))
            }
            DepthModelKind::Inverse if self.slope <= 0.0 => {
                Err(Error::invalid("inverse depth model needs a positive coefficient"))
            }
            _ => Ok(()),
        }
    }

    /// Unclamped model output for a box height.
    pub fn predict(&self, height_px: f64) -> f64 {
        match self.kind {
            DepthModelKind::Linear => self.slope * height_px + self.intercept,
            DepthModelKind::Inverse if height_px <= 0.0 => MAX_DEPTH_M,
            DepthModelKind::Inverse => self.slope / height_px + self.intercept,
        }
    }

    /// Writes the model as a single CSV record.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["kind", "slope", "intercept", "min_height_px", "max_height_px", "r_squared"])?;
        w.write_record([
            self.kind.as_str().to_string(),
            self.slope.to_string(),
            self.intercept.to_string(),
            self.min_height_px.to_string(),
            self.max_height_px.to_string(),
            self.r_squared.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let model: DepthModel = r
            .deserialize()
            .next()
            .ok_or_else(|| Error::invalid("depth model file has no record"))??;
        model.validate()?;
        Ok(model)
    }
}

/// One calibration observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub height_px: f64,
    pub distance_m: f64,
}

/// Ordinary least squares followed by one pass that drops samples whose
/// residual exceeds three median absolute residuals, then refits.
pub fn fit_depth_model(samples: &[CalibrationSample]) -> Result<DepthModel> {
    fit_depth_model_kind(samples, DepthModelKind::Linear)
}

pub fn fit_depth_model_kind(samples: &[CalibrationSample], kind: DepthModelKind) -> Result<DepthModel> {
    for s in samples {
        if !(s.height_px > 0.0 && s.height_px.is_finite() && s.distance_m.is_finite()) {
            return Err(Error::invalid(format!(
                "calibration sample ({}, {}) is not a positive height with finite distance",
                s.height_px, s.distance_m
            )));
        }
    }
    let first = ols(samples, kind)?;
    let residuals: Vec<f64> = samples
        .iter()
        .map(|s| (s.distance_m - first.0 * kind.regressor(s.height_px) - first.1).abs())
        .collect();
    let mad = median(&residuals);
    let kept: Vec<CalibrationSample> = samples
        .iter()
        .zip(&residuals)
        .filter(|(_, &r)| r <= 3.0 * mad)
        .map(|(s, _)| *s)
        .collect();
    let kept = if kept.len() == samples.len() || distinct_heights(&kept) < 2 {
        samples.to_vec()
    } else {
        kept
    };
    let (slope, intercept) = ols(&kept, kind)?;

    let mean = kept.iter().map(|s| s.distance_m).sum::<f64>() / kept.len() as f64;
    let ss_tot: f64 = kept.iter().map(|s| (s.distance_m - mean).powi(2)).sum();
    let ss_res: f64 = kept
        .iter()
        .map(|s| (s.distance_m - slope * kind.regressor(s.height_px) - intercept).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    let model = DepthModel {
        kind,
        slope,
        intercept,
        min_height_px: kept.iter().map(|s| s.height_px).fold(f64::INFINITY, f64::min),
        max_height_px: kept.iter().map(|s| s.height_px).fold(f64::NEG_INFINITY, f64::max),
        r_squared,
    };
    model.validate()?;
    Ok(model)
}

fn distinct_heights(samples: &[CalibrationSample]) -> usize {
    let mut h: Vec<f64> = samples.iter().map(|s| s.height_px).collect();
    h.sort_by(f64::total_cmp);
    h.dedup();
    h.len()
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn ols(samples: &[CalibrationSample], kind: DepthModelKind) -> Result<(f64, f64)> {
    if distinct_heights(samples) < 2 {
        return Err(Error::Underdetermined(format!(
            "need at least two distinct box heights, got {}",
            distinct_heights(samples)
        )));
    }
    let n = samples.len() as f64;
    let mx = samples.iter().map(|s| kind.regressor(s.height_px)).sum::<f64>() / n;
    let my = samples.iter().map(|s| s.distance_m).sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for s in samples {
        let dx = kind.regressor(s.height_px) - mx;
        sxy += dx * (s.distance_m - my);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Range estimate for a person box, clamped to `[0.3, 20]` m.
pub fn estimate_depth(model: &DepthModel, bbox: &BoundingBox) -> f64 {
    model.predict(bbox.height).clamp(MIN_DEPTH_M, MAX_DEPTH_M)
}

/// Heading error to the box center, radians. Positive when the box lies
/// right of the image center.
pub fn pixel_offset_to_yaw_error(bbox: &BoundingBox, camera: &PinholeCamera) -> f64 {
    ((bbox.center_u - camera.cx()) / camera.focal_px).atan()
}

/// Reads `height_px,distance_m` rows.
pub fn read_calibration_csv<R: Read>(input: R) -> Result<Vec<CalibrationSample>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn write_calibration_csv<W: Write>(out: W, samples: &[CalibrationSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in samples {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

/// Range sampling used to synthesize a calibration set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSweep {
    pub min_range_m: f64,
    pub max_range_m: f64,
    pub samples: usize,
}

impl Default for CalibrationSweep {
    fn default() -> Self {
        CalibrationSweep {
            min_range_m: 1.5,
            max_range_m: 6.0,
            samples: 24,
        }
    }
}

impl CalibrationSweep {
    pub fn diagnostics(&self, prefix: &str) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.min_range_m > 0.0 && self.max_range_m > self.min_range_m && self.max_range_m.is_finite()) {
            out.push(format!(
                "{prefix}.min_range_m/max_range_m: need 0 < min < max, got {} and {}",
                self.min_range_m, self.max_range_m
            ));
        }
        if self.samples < 2 {
            out.push(format!("{prefix}.samples: need at least 2, got {}", self.samples));
        }
        out
    }
}

/// Noise-free box heights of `head`, seen frontally from evenly spaced ranges.
pub fn synthetic_calibration(camera: &PinholeCamera, head: &HeadPose, sweep: &CalibrationSweep) -> Vec<CalibrationSample> {
    (0..sweep.samples)
        .filter_map(|i| {
            let t = i as f64 / (sweep.samples - 1) as f64;
            let range = sweep.min_range_m + t * (sweep.max_range_m - sweep.min_range_m);
            let uav = Pose::station(head, range, 0.0);
            person_bbox(camera, &camera.world_pose(&uav), head).map(|b| CalibrationSample {
                height_px: b.height,
                distance_m: range,
            })
        })
        .collect()
}
