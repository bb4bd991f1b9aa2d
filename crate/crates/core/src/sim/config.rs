//! Scenario configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::{ControllerSettings, FollowParams, OrbitParams, PDGains};
use crate::error::{Error, Result};
use crate::estimation::{
    fit_depth_model_kind, read_calibration_csv, synthetic_calibration, CalibrationSweep, DepthModel, DepthModelKind,
};
use crate::geometry::{HeadPose, PinholeCamera, Pose, Vec3};
use crate::perception::{DetectionRanges, NoiseModel, SensorRates};
use crate::verification::SyntheticEmbeddingParams;
use crate::visibility::{RasterSize, ReferenceFaceSurface};

use super::vehicle::VehicleModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PersonConfig {
    pub present: bool,
    pub x_m: f64,
    pub y_m: f64,
    pub facing_deg: f64,
    pub height_m: f64,
    pub head_height_m: f64,
}

impl Default for PersonConfig {
    fn default() -> Self {
        PersonConfig {
            present: true,
            x_m: 0.0,
            y_m: 0.0,
            facing_deg: 0.0,
            height_m: 1.8,
            head_height_m: 0.22,
        }
    }
}

impl PersonConfig {
    pub fn head(&self) -> Result<HeadPose> {
        HeadPose::standing(
            self.x_m,
            self.y_m,
            self.facing_deg.to_radians(),
            self.height_m,
            self.head_height_m,
        )
    }
}

/// Vehicle start, either relative to the person (range and bearing, facing
/// them, at head height) or absolute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum StartPose {
    Relative { range_m: f64, bearing_deg: f64 },
    Absolute { x_m: f64, y_m: f64, z_m: f64, yaw_deg: f64 },
}

impl Default for StartPose {
    fn default() -> Self {
        StartPose::Relative {
            range_m: 6.0,
            bearing_deg: 0.0,
        }
    }
}

impl StartPose {
    pub fn resolve(&self, person: &PersonConfig) -> Result<Pose> {
        match *self {
            StartPose::Relative { range_m, bearing_deg } => {
                Ok(Pose::station(&person.head()?, range_m, bearing_deg.to_radians()))
            }
            StartPose::Absolute { x_m, y_m, z_m, yaw_deg } => Pose::new(Vec3::new(x_m, y_m, z_m), yaw_deg.to_radians()),
        }
    }
}

/// Where the depth model comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepthConfig {
    pub kind: DepthModelKind,
    /// Calibration samples (`height_px,distance_m`). When absent, samples
    /// are synthesized from the scenario camera and person.
    pub calibration_file: Option<PathBuf>,
    pub synthetic: CalibrationSweep,
    /// A fixed model; overrides calibration when present.
    pub model: Option<DepthModel>,
}

impl Default for DepthConfig {
    fn default() -> Self {
        DepthConfig {
            kind: DepthModelKind::Inverse,
            calibration_file: None,
            synthetic: CalibrationSweep::default(),
            model: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceConfig {
    pub rows: usize,
    pub cols: usize,
    pub semi_axes_m: [f64; 3],
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        SurfaceConfig {
            rows: 16,
            cols: 16,
            semi_axes_m: [0.09, 0.07, 0.11],
        }
    }
}

impl SurfaceConfig {
    pub fn build(&self) -> Result<ReferenceFaceSurface> {
        let [a, b, c] = self.semi_axes_m;
        ReferenceFaceSurface::ellipsoid(self.rows, self.cols, Vec3::new(a, b, c))
    }
}

/// Static sampling grid for `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub bearings_deg: Vec<f64>,
    pub ranges_m: Vec<f64>,
    /// Face-detector samples per cell.
    pub samples: usize,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            bearings_deg: (0..=6).map(|i| f64::from(i) * 15.0).collect(),
            ranges_m: vec![1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 5.0],
            samples: 20,
        }
    }
}

/// Pose grid for `field`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldGrid {
    pub ranges_m: Vec<f64>,
    pub bearings_deg: Vec<f64>,
}

impl Default for FieldGrid {
    fn default() -> Self {
        FieldGrid {
            ranges_m: (0..9).map(|i| 1.5 + f64::from(i) * 3.5 / 8.0).collect(),
            bearings_deg: (0..9).map(|i| -80.0 + f64::from(i) * 20.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub duration_s: f64,
    pub dt_s: f64,
    pub seed: u64,
    /// Face loss tolerated before falling back to person following.
    pub dropout_s: f64,
    pub person: PersonConfig,
    pub uav: StartPose,
    pub camera: PinholeCamera,
    pub rates: SensorRates,
    pub noise: NoiseModel,
    pub detection: DetectionRanges,
    pub gains: PDGains,
    pub follow: FollowParams,
    pub orbit: OrbitParams,
    pub depth: DepthConfig,
    pub vehicle: VehicleModel,
    pub embedding: SyntheticEmbeddingParams,
    pub surface: SurfaceConfig,
    pub raster: RasterSize,
    pub sweep: SweepGrid,
    pub field: FieldGrid,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            duration_s: 60.0,
            dt_s: 0.02,
            seed: 0,
            dropout_s: 3.0,
            person: PersonConfig::default(),
            uav: StartPose::default(),
            camera: PinholeCamera::default(),
            rates: SensorRates::default(),
            noise: NoiseModel::default(),
            detection: DetectionRanges::default(),
            gains: PDGains::default(),
            follow: FollowParams::default(),
            orbit: OrbitParams::default(),
            depth: DepthConfig::default(),
            vehicle: VehicleModel::default(),
            embedding: SyntheticEmbeddingParams::default(),
            surface: SurfaceConfig::default(),
            raster: RasterSize::default(),
            sweep: SweepGrid::default(),
            field: FieldGrid::default(),
        }
    }
}

impl ScenarioConfig {
    /// Parses TOML. Relative calibration paths resolve against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(vec![e.message().to_string()]))?;
        if let (Some(base), Some(p)) = (base_dir, cfg.depth.calibration_file.as_mut()) {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
        Self::from_toml_str(&text, path.parent())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Noise model carrying the scenario seed.
    pub fn noise_model(&self) -> NoiseModel {
        NoiseModel {
            seed: self.seed,
            ..self.noise
        }
    }

    /// Collects every field problem rather than stopping at the first.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            out.push(format!("duration_s: must be > 0, got {}", self.duration_s));
        }
        out.extend(self.rates.diagnostics());
        if !(self.dt_s > 0.0) {
            out.push(format!("dt_s: must be > 0, got {}", self.dt_s));
        } else if self.rates.max() > 0.0 && self.dt_s > 1.0 / (2.0 * self.rates.max()) {
            out.push(format!(
                "dt_s: must be at most 1/(2 x fastest rate) = {}, got {}",
                1.0 / (2.0 * self.rates.max()),
                self.dt_s
            ));
        }
        if !(self.dropout_s > 0.0) {
            out.push(format!("dropout_s: must be > 0, got {}", self.dropout_s));
        }
        if let Err(e) = self.person.head() {
            out.push(format!("person: {e}"));
        }
        match self.uav {
            StartPose::Relative { range_m, bearing_deg } => {
                if !(range_m > 0.0 && range_m.is_finite()) {
                    out.push(format!("uav.range_m: must be > 0, got {range_m}"));
                }
                if !bearing_deg.is_finite() {
                    out.push("uav.bearing_deg: must be finite".into());
                }
            }
            StartPose::Absolute { .. } => {
                if let Err(e) = self.uav.resolve(&self.person) {
                    out.push(format!("uav: {e}"));
                }
            }
        }
        if let Err(e) = self.camera.validate() {
            out.push(format!("camera: {e}"));
        }
        out.extend(self.noise.diagnostics());
        for (name, m) in [("person", self.detection.person), ("face", self.detection.face)] {
            if !(m.midpoint_m > 0.0 && m.steepness > 0.0) {
                out.push(format!("detection.{name}: midpoint_m and steepness must be > 0"));
            }
        }
        out.extend(self.gains.diagnostics());
        if !(self.follow.standoff_m > 0.0) {
            out.push(format!("follow.standoff_m: must be > 0, got {}", self.follow.standoff_m));
        }
        if !(self.follow.stale_after_s > 0.0) {
            out.push(format!("follow.stale_after_s: must be > 0, got {}", self.follow.stale_after_s));
        }
        out.extend(self.orbit.diagnostics());
        out.extend(self.depth.synthetic.diagnostics("depth.synthetic"));
        if let Some(m) = &self.depth.model {
            if let Err(e) = m.validate() {
                out.push(format!("depth.model: {e}"));
            }
        }
        out.extend(self.vehicle.diagnostics());
        out.extend(self.embedding.diagnostics());
        if let Err(e) = self.surface.build() {
            out.push(format!("surface: {e}"));
        }
        if self.raster.width < 8 || self.raster.height < 8 {
            out.push(format!(
                "raster: need at least 8x8, got {}x{}",
                self.raster.width, self.raster.height
            ));
        }
        if self.sweep.bearings_deg.is_empty() || self.sweep.ranges_m.is_empty() {
            out.push("sweep: grid must be nonempty".into());
        }
        if self.sweep.ranges_m.iter().any(|&r| !(r > 0.0)) {
            out.push("sweep.ranges_m: ranges must be > 0".into());
        }
        if self.sweep.samples == 0 {
            out.push("sweep.samples: must be >= 1".into());
        }
        if self.field.bearings_deg.is_empty() || self.field.ranges_m.is_empty() {
            out.push("field: grid must be nonempty".into());
        }
        if self.field.ranges_m.iter().any(|&r| !(r > 0.0)) {
            out.push("field.ranges_m: ranges must be > 0".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.diagnostics();
        if d.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(d))
        }
    }

    pub fn controller_settings(&self) -> ControllerSettings {
        ControllerSettings {
            gains: self.gains,
            follow: self.follow,
            orbit: self.orbit,
            dropout_s: self.dropout_s,
            inner_dt: 1.0 / self.rates.odometry_hz,
        }
    }

    /// Depth model from the configured source.
    pub fn depth_model(&self) -> Result<DepthModel> {
        if let Some(m) = self.depth.model {
            return Ok(m);
        }
        let samples = match &self.depth.calibration_file {
            Some(path) => {
                let f = std::fs::File::open(path)
                    .map_err(|e| Error::Config(vec![format!("depth.calibration_file: {}: {e}", path.display())]))?;
                read_calibration_csv(f)?
            }
            None => synthetic_calibration(&self.camera, &self.person.head()?, &self.depth.synthetic),
        };
        fit_depth_model_kind(&samples, self.depth.kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ScenarioConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ScenarioConfig {
            seed: 42,
            uav: StartPose::Relative {
                range_m: 2.5,
                bearing_deg: 30.0,
            },
            ..ScenarioConfig::default()
        };
        let text = cfg.to_toml_string();
        assert_eq!(ScenarioConfig::from_toml_str(&text, None).unwrap(), cfg);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg = ScenarioConfig::from_toml_str(
            "duration_s = 10.0\n[uav]\nx_m = 1.0\ny_m = 2.0\nz_m = 1.7\nyaw_deg = 90.0\n",
            None,
        )
        .unwrap();
        assert_eq!(cfg.duration_s, 10.0);
        assert_eq!(cfg.rates, SensorRates::default());
        assert!(matches!(cfg.uav, StartPose::Absolute { .. }));
    }

    #[test]
    fn diagnostics_name_every_bad_field() {
        let err = ScenarioConfig::from_toml_str("duration_s = -1.0\ndt_s = 0.5\n[rates]\nface_hz = 0.0\n", None).unwrap_err();
        let Error::Config(d) = err else { panic!("{err}") };
        assert!(d.iter().any(|m| m.starts_with("duration_s")));
        assert!(d.iter().any(|m| m.starts_with("dt_s")));
        assert!(d.iter().any(|m| m.starts_with("rates.face_hz")));
    }

    #[test]
    fn unknown_fields_and_bad_syntax_are_config_errors() {
        assert!(matches!(
            ScenarioConfig::from_toml_str("durration_s = 1.0", None),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ScenarioConfig::from_toml_str("[rates\n", None),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ScenarioConfig::from_toml_str("[noise]\nseed = 3\n", None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn default_depth_model_is_inverse() {
        let m = ScenarioConfig::default().depth_model().unwrap();
        assert_eq!(m.kind, DepthModelKind::Inverse);
        assert!(m.r_squared > 0.999_999);
    }
}
