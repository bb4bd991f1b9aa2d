//! The fixed-step closed-loop simulation and its log.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use crate::control::CommandRecord;
use crate::control::{Controller, ControllerMode, VelocityCommand};
use crate::error::Result;
use crate::geometry::{relative_bearing, Pose};
use crate::perception::{DetectionEvent, DetectionKind, FaceDetector, PedestrianDetector, Scene, Tracker};
use crate::verification::{cosine_similarity, EmbeddingProvider, FaceObservation, SimilarityRecord, SyntheticEmbedder};
use crate::visibility::FrontalizationScore;

use super::config::ScenarioConfig;
use super::vehicle::{integrate_vehicle, BodyVelocity};

/// Tolerance for a sensor tick landing on a step boundary, seconds.
const TICK_EPS: f64 = 1e-9;

/// Fires at `k / rate` for `k = 0, 1, ...`, on the first step at or after.
#[derive(Debug, Clone)]
struct SensorClock {
    rate: f64,
    next: u64,
}

impl SensorClock {
    fn new(rate: f64) -> Self {
        SensorClock { rate, next: 0 }
    }

    fn due(&mut self, t: f64) -> bool {
        if t >= self.next as f64 / self.rate - TICK_EPS {
            self.next += 1;
            true
        } else {
            false
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SensorCounts {
    pub odometry: u64,
    pub images: u64,
    pub pedestrian: u64,
    pub tracker: u64,
    pub face: u64,
}

/// State at the start of one integration step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSample {
    pub time: f64,
    pub pose: Pose,
    pub velocity: BodyVelocity,
    pub mode: ControllerMode,
    pub command: VelocityCommand,
    /// Ground-truth range and bearing to the person, when present.
    pub range: Option<f64>,
    pub bearing: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub event: DetectionEvent,
    /// Frontalization error carried by face events.
    pub error: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeChange {
    pub time: f64,
    pub mode: ControllerMode,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunLog {
    pub samples: Vec<StepSample>,
    pub commands: Vec<CommandRecord>,
    pub events: Vec<EventRecord>,
    pub scores: Vec<FrontalizationScore>,
    pub similarities: Vec<SimilarityRecord>,
    pub modes: Vec<ModeChange>,
    pub counts: SensorCounts,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunLog {
    /// Sequence of modes entered, starting with `Grounded`.
    pub fn mode_sequence(&self) -> Vec<ControllerMode> {
        self.modes.iter().map(|m| m.mode).collect()
    }

    pub fn final_pose(&self) -> Option<Pose> {
        self.samples.last().map(|s| s.pose)
    }

    pub fn write_trajectory_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "time_s", "x_m", "y_m", "z_m", "yaw_rad", "vx_mps", "vy_mps", "yaw_rate_radps", "mode", "cmd_vx_mps",
            "cmd_vy_mps", "cmd_yaw_rate_radps", "range_m", "bearing_rad",
        ])?;
        for s in &self.samples {
            w.write_record([
                s.time.to_string(),
                s.pose.position.x.to_string(),
                s.pose.position.y.to_string(),
                s.pose.position.z.to_string(),
                s.pose.yaw.to_string(),
                s.velocity.vx.to_string(),
                s.velocity.vy.to_string(),
                s.velocity.yaw_rate.to_string(),
                s.mode.as_str().to_string(),
                s.command.vx.to_string(),
                s.command.vy.to_string(),
                s.command.yaw_rate.to_string(),
                opt(s.range),
                opt(s.bearing),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_commands_csv<W: Write>(&self, out: W) -> Result<()> {
        crate::control::write_command_log(out, &self.commands)
    }

    pub fn write_events_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "time_s", "kind", "source", "center_u_px", "center_v_px", "width_px", "height_px", "error",
        ])?;
        for r in &self.events {
            let e = &r.event;
            w.write_record([
                e.timestamp.to_string(),
                e.kind.as_str().to_string(),
                e.source.as_str().to_string(),
                e.bbox.center_u.to_string(),
                e.bbox.center_v.to_string(),
                e.bbox.width.to_string(),
                e.bbox.height.to_string(),
                opt(r.error),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_scores_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time_s", "error", "accuracy"])?;
        for s in &self.scores {
            w.write_record([s.timestamp.to_string(), s.error.to_string(), s.accuracy.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_similarity_csv<W: Write>(&self, out: W) -> Result<()> {
        crate::verification::write_similarity_csv(out, &self.similarities)
    }

    pub fn write_modes_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time_s", "mode"])?;
        for m in &self.modes {
            w.write_record([m.time.to_string(), m.mode.as_str().to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_counts_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["sensor", "invocations"])?;
        let c = &self.counts;
        for (name, n) in [
            ("odometry", c.odometry),
            ("images", c.images),
            ("pedestrian", c.pedestrian),
            ("tracker", c.tracker),
            ("face", c.face),
        ] {
            w.write_record([name.to_string(), n.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// All CSV exports as `(file name, contents)`.
    pub fn csv_files(&self) -> Result<Vec<(&'static str, Vec<u8>)>> {
        type Writer = fn(&RunLog, &mut Vec<u8>) -> Result<()>;
        let writers: [(&'static str, Writer); 7] = [
            ("trajectory.csv", |l, b| l.write_trajectory_csv(b)),
            ("commands.csv", |l, b| l.write_commands_csv(b)),
            ("events.csv", |l, b| l.write_events_csv(b)),
            ("scores.csv", |l, b| l.write_scores_csv(b)),
            ("similarity.csv", |l, b| l.write_similarity_csv(b)),
            ("modes.csv", |l, b| l.write_modes_csv(b)),
            ("counts.csv", |l, b| l.write_counts_csv(b)),
        ];
        writers
            .into_iter()
            .map(|(name, f)| {
                let mut buf = Vec::new();
                f(self, &mut buf)?;
                Ok((name, buf))
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_csv_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, bytes) in self.csv_files()? {
            std::fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }

    pub fn write_json_file(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

fn note_mode(log: &mut RunLog, mode: ControllerMode, t: f64) {
    if log.modes.last().is_some_and(|m| m.mode != mode) {
        log.modes.push(ModeChange { time: t, mode });
    }
}

/// Runs the closed loop. Deterministic in the configuration.
pub fn run(config: &ScenarioConfig) -> Result<RunLog> {
    config.validate()?;
    run_with_provider(config, &mut SyntheticEmbedder::new(config.embedding, config.noise_model()))
}

/// [`run`] with a caller-supplied embedding provider.
pub fn run_with_provider(config: &ScenarioConfig, provider: &mut dyn EmbeddingProvider) -> Result<RunLog> {
    config.validate()?;
    let noise = config.noise_model();
    let head = if config.person.present {
        Some(config.person.head()?)
    } else {
        None
    };
    let camera = config.camera;
    let surface = config.surface.build()?;
    let reference = provider.reference();

    let mut pedestrian = PedestrianDetector::new(noise, config.detection);
    let mut tracker = Tracker::new(noise);
    let mut face = FaceDetector::new(noise, config.detection, surface, config.raster);
    let mut controller = Controller::new(config.controller_settings(), camera, config.depth_model()?);

    let rates = &config.rates;
    let mut clocks = [
        SensorClock::new(rates.odometry_hz),
        SensorClock::new(rates.onboard_images_hz),
        SensorClock::new(rates.pedestrian_hz),
        SensorClock::new(rates.tracker_hz),
        SensorClock::new(rates.face_hz),
    ];

    let mut pose = config.uav.resolve(&config.person)?;
    let mut velocity = BodyVelocity::default();
    let mut last_detection: Option<DetectionEvent> = None;
    let mut log = RunLog {
        modes: vec![ModeChange {
            time: 0.0,
            mode: ControllerMode::Grounded,
        }],
        ..RunLog::default()
    };

    let steps = (config.duration_s / config.dt_s).round() as u64;
    for i in 0..steps {
        let t = i as f64 * config.dt_s;
        let scene = Scene {
            head: head.as_ref(),
            uav: pose,
            camera: &camera,
        };
        let relative = scene.relative();
        let before = controller.command();

        if clocks[0].due(t) {
            log.counts.odometry += 1;
            controller.on_odometry(&pose, t)?;
        }
        if clocks[1].due(t) {
            log.counts.images += 1;
        }
        if clocks[2].due(t) {
            log.counts.pedestrian += 1;
            if let Some(ev) = pedestrian.detect(&scene, t) {
                log.events.push(EventRecord { event: ev, error: None });
                last_detection = Some(ev);
                controller.on_person(&ev, t)?;
                note_mode(&mut log, controller.mode(), t);
            }
        }
        if clocks[3].due(t) {
            log.counts.tracker += 1;
            if let Some(ev) = tracker.update(last_detection.as_ref(), &scene, t) {
                log.events.push(EventRecord { event: ev, error: None });
                controller.on_person(&ev, t)?;
                note_mode(&mut log, controller.mode(), t);
            }
        }
        if clocks[4].due(t) {
            log.counts.face += 1;
            if let Some((ev, score)) = face.detect(&scene, t) {
                debug_assert_eq!(ev.kind, DetectionKind::Face);
                log.events.push(EventRecord {
                    event: ev,
                    error: Some(score.error),
                });
                log.scores.push(score);
                if let Some((range, bearing)) = relative {
                    let e = provider.embed(&FaceObservation {
                        timestamp: t,
                        bbox: ev.bbox,
                        bearing,
                        range,
                    })?;
                    log.similarities.push(SimilarityRecord {
                        timestamp: t,
                        similarity: cosine_similarity(e.as_slice(), reference.as_slice())?,
                        range,
                        bearing,
                    });
                }
                controller.on_face(&ev, &score, t)?;
                note_mode(&mut log, controller.mode(), t);
            }
        }
        controller.tick(t);
        note_mode(&mut log, controller.mode(), t);

        let mode = controller.mode();
        let command = controller.command();
        if command != before {
            log.commands.push(CommandRecord {
                mode,
                command,
                error: controller.last_error().filter(|_| mode == ControllerMode::Frontalizing),
                setpoint: controller.setpoint(),
            });
        }
        log.samples.push(StepSample {
            time: t,
            pose,
            velocity,
            mode,
            command,
            range: relative.map(|r| r.0),
            bearing: relative.map(|r| r.1),
        });
        (pose, velocity) = integrate_vehicle(&pose, &velocity, &command, &config.vehicle, config.dt_s)?;
    }
    Ok(log)
}

/// Ground-truth range and bearing of a vehicle pose from the scenario person.
pub fn true_relative(config: &ScenarioConfig, pose: &Pose) -> Result<(f64, f64)> {
    relative_bearing(pose, &config.person.head()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clock_fires_on_boundaries() {
        let mut c = SensorClock::new(5.0);
        let fired: Vec<u64> = (0..50).filter(|&i| c.due(i as f64 * 0.02)).collect();
        assert_eq!(fired, vec![0, 10, 20, 30, 40]);
    }

    #[test]
    fn ten_second_counts() {
        let cfg = ScenarioConfig {
            duration_s: 10.0,
            ..ScenarioConfig::default()
        };
        let log = run(&cfg).unwrap();
        assert_eq!(
            log.counts,
            SensorCounts {
                odometry: 50,
                images: 18,
                pedestrian: 9,
                tracker: 14,
                face: 14,
            }
        );
        assert_eq!(log.samples.len(), 500);
    }

    #[test]
    fn absent_person_stays_grounded() {
        let mut cfg = ScenarioConfig {
            duration_s: 20.0,
            ..ScenarioConfig::default()
        };
        cfg.person.present = false;
        let log = run(&cfg).unwrap();
        let start = log.samples[0].pose;
        assert!(log.samples.iter().all(|s| s.pose == start && s.mode == ControllerMode::Grounded));
        assert_eq!(log.mode_sequence(), vec![ControllerMode::Grounded]);
        assert!(log.events.is_empty());
    }

    #[test]
    fn timestamps_strictly_increase() {
        let log = run(&ScenarioConfig {
            duration_s: 20.0,
            ..ScenarioConfig::default()
        })
        .unwrap();
        assert!(log.samples.windows(2).all(|w| w[0].time < w[1].time));
        assert!(log.scores.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
        assert!(log.similarities.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
        // Transitions triggered by events of the same step share a timestamp.
        assert!(log.modes.windows(2).all(|w| w[0].time <= w[1].time));
    }
}
