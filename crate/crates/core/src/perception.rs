//! Emulated detector stack: a pedestrian detector, a tracker bridging its
//! gaps, and a face detector. Each is a rate-limited, range-gated noisy relay
//! of ground-truth geometry with its own seeded random stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{person_bbox, relative_bearing, BoundingBox, HeadPose, PinholeCamera, Pose};
use crate::visibility::{score_view, FrontalizationScore, RasterSize, ReferenceFaceSurface};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionKind {
    Person,
    Face,
}

impl DetectionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectionKind::Person => "person",
            DetectionKind::Face => "face",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionSource {
    Detector,
    Tracker,
}

impl DetectionSource {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectionSource::Detector => "detector",
            DetectionSource::Tracker => "tracker",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub kind: DetectionKind,
    pub bbox: BoundingBox,
    pub timestamp: f64,
    pub source: DetectionSource,
}

/// Node frequencies in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorRates {
    pub onboard_images_hz: f64,
    pub odometry_hz: f64,
    pub pedestrian_hz: f64,
    pub tracker_hz: f64,
    pub face_hz: f64,
}

impl Default for SensorRates {
    fn default() -> Self {
        SensorRates {
            onboard_images_hz: 1.75,
            odometry_hz: 5.0,
            pedestrian_hz: 0.9,
            tracker_hz: 1.4,
            face_hz: 1.4,
        }
    }
}

impl SensorRates {
    pub fn max(&self) -> f64 {
        [
            self.onboard_images_hz,
            self.odometry_hz,
            self.pedestrian_hz,
            self.tracker_hz,
            self.face_hz,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// Field diagnostics; empty when valid.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("onboard_images_hz", self.onboard_images_hz),
            ("odometry_hz", self.odometry_hz),
            ("pedestrian_hz", self.pedestrian_hz),
            ("tracker_hz", self.tracker_hz),
            ("face_hz", self.face_hz),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("rates.{name}: must be a positive rate, got {v}"));
            }
        }
        if self.pedestrian_hz > self.tracker_hz {
            out.push("rates.pedestrian_hz: must not exceed rates.tracker_hz".into());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Box-center jitter, pixels (one sigma).
    pub center_sigma_px: f64,
    /// Box-size jitter as a fraction of the true height (one sigma).
    pub height_sigma_frac: f64,
    /// Extra miss probability on top of the range model.
    pub false_negative_prob: f64,
    /// Probability of a spurious person box on a tick without a true detection.
    pub false_positive_prob: f64,
    /// Embedding perturbation scale; the per-component sigma is this times `range / 5 m`.
    pub embedding_sigma: f64,
    /// Set from the scenario seed rather than the noise section.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            center_sigma_px: 2.0,
            height_sigma_frac: 0.02,
            false_negative_prob: 0.0,
            false_positive_prob: 0.0,
            embedding_sigma: 0.1,
            seed: 0,
        }
    }
}

impl NoiseModel {
    /// Noise-free boxes; the seed still drives detection gating.
    pub fn noiseless(seed: u64) -> Self {
        NoiseModel {
            center_sigma_px: 0.0,
            height_sigma_frac: 0.0,
            false_negative_prob: 0.0,
            false_positive_prob: 0.0,
            embedding_sigma: 0.0,
            seed,
        }
    }

    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("center_sigma_px", self.center_sigma_px),
            ("height_sigma_frac", self.height_sigma_frac),
            ("embedding_sigma", self.embedding_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                out.push(format!("noise.{name}: must be >= 0, got {v}"));
            }
        }
        for (name, v) in [
            ("false_negative_prob", self.false_negative_prob),
            ("false_positive_prob", self.false_positive_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                out.push(format!("noise.{name}: must be in [0, 1], got {v}"));
            }
        }
        out
    }
}

/// Identifies an independent random stream derived from the scenario seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamId {
    Pedestrian = 1,
    Tracker = 2,
    Face = 3,
    Embedding = 4,
}

/// Deterministic random stream for `(seed, stream)`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Logistic fall-off `1 / (1 + exp(k (r - r0)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeModel {
    pub midpoint_m: f64,
    pub steepness: f64,
}

impl RangeModel {
    pub const FACE: RangeModel = RangeModel {
        midpoint_m: 3.5,
        steepness: 3.0,
    };
    pub const PERSON: RangeModel = RangeModel {
        midpoint_m: 7.0,
        steepness: 1.5,
    };

    pub fn probability(&self, range: f64) -> Result<f64> {
        if !(range > 0.0) {
            return Err(Error::invalid(format!("range must be positive, got {range}")));
        }
        Ok(1.0 / (1.0 + (self.steepness * (range - self.midpoint_m)).exp()))
    }
}

/// Detection range models for both detector kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionRanges {
    pub person: RangeModel,
    pub face: RangeModel,
}

impl Default for DetectionRanges {
    fn default() -> Self {
        DetectionRanges {
            person: RangeModel::PERSON,
            face: RangeModel::FACE,
        }
    }
}

impl DetectionRanges {
    pub fn for_kind(&self, kind: DetectionKind) -> RangeModel {
        match kind {
            DetectionKind::Person => self.person,
            DetectionKind::Face => self.face,
        }
    }
}

/// Probability of a detection at `range` with the default range models.
pub fn detection_probability(range: f64, kind: DetectionKind) -> Result<f64> {
    DetectionRanges::default().for_kind(kind).probability(range)
}

/// Ground truth visible to the sensors at one instant.
#[derive(Debug, Clone, Copy)]
pub struct Scene<'a> {
    pub head: Option<&'a HeadPose>,
    pub uav: Pose,
    pub camera: &'a PinholeCamera,
}

impl Scene<'_> {
    pub fn camera_pose(&self) -> Pose {
        self.camera.world_pose(&self.uav)
    }

    /// Range and bearing of the vehicle from the head, if there is a person.
    pub fn relative(&self) -> Option<(f64, f64)> {
        self.head.and_then(|h| relative_bearing(&self.uav, h).ok())
    }
}

/// Per-tick random draws. Always drawn in full so streams stay aligned
/// regardless of which branch is taken.
struct Draws {
    gate: f64,
    du: f64,
    dv: f64,
    scale: f64,
}

impl Draws {
    fn sample(rng: &mut ChaCha8Rng) -> Self {
        Draws {
            gate: rng.random(),
            du: rng.sample(StandardNormal),
            dv: rng.sample(StandardNormal),
            scale: rng.sample(StandardNormal),
        }
    }

    fn perturb(&self, truth: &BoundingBox, center_sigma: f64, size_sigma: f64) -> BoundingBox {
        let s = (1.0 + self.scale * size_sigma).max(0.0);
        BoundingBox {
            center_u: truth.center_u + self.du * center_sigma,
            center_v: truth.center_v + self.dv * center_sigma,
            width: truth.width * s,
            height: truth.height * s,
        }
    }
}

fn noisy_box(truth: &BoundingBox, draws: &Draws, noise: &NoiseModel, inflation: f64, camera: &PinholeCamera) -> Option<BoundingBox> {
    draws
        .perturb(
            truth,
            noise.center_sigma_px * inflation,
            noise.height_sigma_frac * inflation,
        )
        .clamp_to(camera)
}

/// Pedestrian detector: range-gated, no false positives unless configured.
pub struct PedestrianDetector {
    noise: NoiseModel,
    ranges: DetectionRanges,
    rng: ChaCha8Rng,
}

impl PedestrianDetector {
    pub fn new(noise: NoiseModel, ranges: DetectionRanges) -> Self {
        PedestrianDetector {
            rng: rng_stream(noise.seed, StreamId::Pedestrian as u64),
            noise,
            ranges,
        }
    }

    pub fn detect(&mut self, scene: &Scene<'_>, time: f64) -> Option<DetectionEvent> {
        let draws = Draws::sample(&mut self.rng);
        let spurious: f64 = self.rng.random();
        let spurious_u: f64 = self.rng.random();

        let truth = scene
            .head
            .and_then(|h| Some((person_bbox(scene.camera, &scene.camera_pose(), h)?, scene.relative()?.0)));
        if let Some((bbox, range)) = truth {
            let p = self.ranges.person.probability(range).ok()? * (1.0 - self.noise.false_negative_prob);
            if draws.gate < p {
                return noisy_box(&bbox, &draws, &self.noise, 1.0, scene.camera).map(|bbox| DetectionEvent {
                    kind: DetectionKind::Person,
                    bbox,
                    timestamp: time,
                    source: DetectionSource::Detector,
                });
            }
        }
        if spurious < self.noise.false_positive_prob {
            let w = scene.camera.width_px;
            let h = scene.camera.height_px;
            return Some(DetectionEvent {
                kind: DetectionKind::Person,
                bbox: BoundingBox {
                    center_u: spurious_u * w,
                    center_v: 0.5 * h,
                    width: 0.1 * w,
                    height: 0.4 * h,
                },
                timestamp: time,
                source: DetectionSource::Detector,
            })
            .and_then(|e| e.bbox.clamp_to(scene.camera).map(|bbox| DetectionEvent { bbox, ..e }));
        }
        None
    }
}

/// Relays the person box between detector hits with inflated noise.
pub struct Tracker {
    noise: NoiseModel,
    inflation: f64,
    rng: ChaCha8Rng,
}

/// Tracker noise relative to the detector.
pub const TRACKER_NOISE_INFLATION: f64 = 2.0;

impl Tracker {
    pub fn new(noise: NoiseModel) -> Self {
        Tracker {
            rng: rng_stream(noise.seed, StreamId::Tracker as u64),
            noise,
            inflation: TRACKER_NOISE_INFLATION,
        }
    }

    pub fn noise_inflation(&self) -> f64 {
        self.inflation
    }

    /// Emits a tracked box when the tracker has been initialized by an
    /// earlier detector hit. A detector hit at this very instant supersedes
    /// the tracker, which then stays silent.
    pub fn update(&mut self, last_detection: Option<&DetectionEvent>, scene: &Scene<'_>, time: f64) -> Option<DetectionEvent> {
        let draws = Draws::sample(&mut self.rng);
        let anchor = last_detection?;
        if anchor.timestamp >= time {
            return None;
        }
        let head = scene.head?;
        let truth = person_bbox(scene.camera, &scene.camera_pose(), head)?;
        noisy_box(&truth, &draws, &self.noise, self.inflation, scene.camera).map(|bbox| DetectionEvent {
            kind: DetectionKind::Person,
            bbox,
            timestamp: time,
            source: DetectionSource::Tracker,
        })
    }
}

/// Face detector. Each hit carries the frontalization score of the view.
pub struct FaceDetector {
    noise: NoiseModel,
    ranges: DetectionRanges,
    surface: ReferenceFaceSurface,
    raster: RasterSize,
    rng: ChaCha8Rng,
}

impl FaceDetector {
    pub fn new(noise: NoiseModel, ranges: DetectionRanges, surface: ReferenceFaceSurface, raster: RasterSize) -> Self {
        FaceDetector::with_stream(noise, ranges, surface, raster, StreamId::Face as u64)
    }

    /// Detector on an explicit random stream, for independent static samplers.
    pub fn with_stream(noise: NoiseModel, ranges: DetectionRanges, surface: ReferenceFaceSurface, raster: RasterSize, stream: u64) -> Self {
        FaceDetector {
            rng: rng_stream(noise.seed, stream),
            noise,
            ranges,
            surface,
            raster,
        }
    }

    pub fn surface(&self) -> &ReferenceFaceSurface {
        &self.surface
    }

    pub fn detect(&mut self, scene: &Scene<'_>, time: f64) -> Option<(DetectionEvent, FrontalizationScore)> {
        let draws = Draws::sample(&mut self.rng);
        let head = scene.head?;
        let (range, bearing) = scene.relative()?;
        if bearing.abs() >= std::f64::consts::FRAC_PI_2 {
            return None;
        }
        let p = self.ranges.face.probability(range).ok()? * (1.0 - self.noise.false_negative_prob);
        if draws.gate >= p {
            return None;
        }
        let camera_pose = scene.camera_pose();
        let truth = self.surface.face_box(head, scene.camera, &camera_pose)?;
        let score = score_view(&self.surface, head, scene.camera, &camera_pose, self.raster).ok()?;
        let bbox = noisy_box(&truth, &draws, &self.noise, 1.0, scene.camera)?;
        Some((
            DetectionEvent {
                kind: DetectionKind::Face,
                bbox,
                timestamp: time,
                source: DetectionSource::Detector,
            },
            score.at(time),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use approx::assert_abs_diff_eq;

    fn head() -> HeadPose {
        HeadPose::standing(0.0, 0.0, 0.0, 1.8, 0.22).unwrap()
    }

    #[test]
    fn detection_probability_examples() {
        assert_abs_diff_eq!(detection_probability(3.5, DetectionKind::Face).unwrap(), 0.5);
        // 1 / (1 + e^-7.5) and 1 / (1 + e^7.5)
        assert_abs_diff_eq!(
            detection_probability(1.0, DetectionKind::Face).unwrap(),
            1.0 / (1.0 + (-7.5f64).exp()),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            detection_probability(6.0, DetectionKind::Face).unwrap(),
            1.0 / (1.0 + 7.5f64.exp()),
            epsilon = 1e-12
        );
        assert!(detection_probability(0.0, DetectionKind::Person).is_err());
        assert!(detection_probability(-1.0, DetectionKind::Face).is_err());
    }

    #[test]
    fn detection_probability_is_monotone() {
        for kind in [DetectionKind::Person, DetectionKind::Face] {
            let mut last = 1.0;
            for i in 1..400 {
                let p = detection_probability(0.05 * f64::from(i), kind).unwrap();
                assert!(p <= last);
                last = p;
            }
        }
    }

    #[test]
    fn noiseless_pedestrian_detection_is_ground_truth() {
        let head = head();
        let camera = PinholeCamera::default();
        let uav = Pose::station(&head, 2.0, 0.0);
        let scene = Scene {
            head: Some(&head),
            uav,
            camera: &camera,
        };
        let mut det = PedestrianDetector::new(NoiseModel::noiseless(3), DetectionRanges::default());
        let truth = person_bbox(&camera, &camera.world_pose(&uav), &head).unwrap();
        let ev = det.detect(&scene, 0.0).expect("p(2 m) is essentially one");
        assert_eq!(ev.bbox, truth);
        assert_eq!(ev.kind, DetectionKind::Person);
        assert_eq!(ev.source, DetectionSource::Detector);
    }

    #[test]
    fn far_person_is_not_detected() {
        let head = head();
        let camera = PinholeCamera::default();
        let scene = Scene {
            head: Some(&head),
            uav: Pose::station(&head, 30.0, 0.0),
            camera: &camera,
        };
        let mut det = PedestrianDetector::new(NoiseModel::default(), DetectionRanges::default());
        let hits = (0..1000).filter(|&i| det.detect(&scene, f64::from(i)).is_some()).count();
        assert_eq!(hits, 0);
    }

    #[test]
    fn same_seed_same_events() {
        let head = head();
        let camera = PinholeCamera::default();
        let run = |seed| {
            let mut det = PedestrianDetector::new(
                NoiseModel {
                    seed,
                    ..NoiseModel::default()
                },
                DetectionRanges::default(),
            );
            (0..50)
                .map(|i| {
                    let scene = Scene {
                        head: Some(&head),
                        uav: Pose::station(&head, 4.0 + 0.1 * f64::from(i), 0.2),
                        camera: &camera,
                    };
                    det.detect(&scene, f64::from(i))
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11), run(12));
    }

    #[test]
    fn tracker_needs_a_detection_and_follows_cadence() {
        let head = head();
        let camera = PinholeCamera::default();
        let scene = Scene {
            head: Some(&head),
            uav: Pose::station(&head, 3.0, 0.0),
            camera: &camera,
        };
        let mut tracker = Tracker::new(NoiseModel::default());
        assert!(tracker.update(None, &scene, 0.5).is_none());

        let detection = DetectionEvent {
            kind: DetectionKind::Person,
            bbox: person_bbox(&camera, &camera.world_pose(&scene.uav), &head).unwrap(),
            timestamp: 0.0,
            source: DetectionSource::Detector,
        };
        let ticks: Vec<f64> = (0..3).map(|k| f64::from(k) / 1.4).collect();
        let events: Vec<_> = ticks
            .iter()
            .filter_map(|&t| tracker.update(Some(&detection), &scene, t))
            .collect();
        assert_eq!(events.len(), 2);
        assert!(events.iter().all(|e| e.source == DetectionSource::Tracker));
        assert_abs_diff_eq!(events[0].timestamp, 0.714, epsilon = 1e-3);
        assert_abs_diff_eq!(events[1].timestamp, 1.429, epsilon = 1e-3);
    }

    #[test]
    fn tracker_box_stays_within_noise_bound() {
        let head = head();
        let camera = PinholeCamera::default();
        let scene = Scene {
            head: Some(&head),
            uav: Pose::station(&head, 3.0, 0.0),
            camera: &camera,
        };
        let truth = person_bbox(&camera, &camera.world_pose(&scene.uav), &head).unwrap();
        let detection = DetectionEvent {
            kind: DetectionKind::Person,
            bbox: truth,
            timestamp: 0.0,
            source: DetectionSource::Detector,
        };
        let noise = NoiseModel::default();
        let sigma = noise.center_sigma_px * TRACKER_NOISE_INFLATION;
        let mut tracker = Tracker::new(noise);
        let mut within = 0;
        for k in 1..=200 {
            let ev = tracker.update(Some(&detection), &scene, f64::from(k)).unwrap();
            if (ev.bbox.center_u - truth.center_u).abs() <= 2.0 * sigma {
                within += 1;
            }
        }
        // Two-sigma coverage of a normal is about 95%.
        assert!(within >= 180, "{within}");
    }

    #[test]
    fn face_detector_examples() {
        let head = head();
        let camera = PinholeCamera::default();
        let surface = ReferenceFaceSurface::default();
        let mut det = FaceDetector::new(
            NoiseModel::noiseless(5),
            DetectionRanges::default(),
            surface.clone(),
            RasterSize::default(),
        );

        let frontal = Scene {
            head: Some(&head),
            uav: Pose::station(&head, 1.5, 0.0),
            camera: &camera,
        };
        let (ev, score) = det.detect(&frontal, 1.0).unwrap();
        assert_eq!(ev.kind, DetectionKind::Face);
        assert!(score.error.abs() <= 0.02);
        assert_eq!(score.timestamp, 1.0);

        let behind = Scene {
            uav: Pose::station(&head, 1.5, 120f64.to_radians()),
            ..frontal
        };
        for t in 0..50 {
            assert!(det.detect(&behind, f64::from(t)).is_none());
        }

        let side = Scene {
            uav: Pose::station(&head, 2.0, 30f64.to_radians()),
            ..frontal
        };
        let (_, score) = det.detect(&side, 2.0).unwrap();
        let expected = score_view(
            &surface,
            &head,
            &camera,
            &camera.world_pose(&side.uav),
            RasterSize::default(),
        )
        .unwrap();
        assert_eq!(score.error, expected.error);
    }

    #[test]
    fn no_false_positives_without_a_person() {
        let camera = PinholeCamera::default();
        let scene = Scene {
            head: None,
            uav: Pose::default(),
            camera: &camera,
        };
        let mut det = PedestrianDetector::new(NoiseModel::default(), DetectionRanges::default());
        assert!((0..500).all(|i| det.detect(&scene, f64::from(i)).is_none()));

        let mut noisy = PedestrianDetector::new(
            NoiseModel {
                false_positive_prob: 0.5,
                ..NoiseModel::default()
            },
            DetectionRanges::default(),
        );
        assert!((0..500).any(|i| noisy.detect(&scene, f64::from(i)).is_some()));
    }
}
