//! Acceptance criteria, one test per criterion. Each prints a single
//! `criterion N: PASS|FAIL ...` line before asserting.

use std::time::Instant;

use frontalize::control::ControllerMode;
use frontalize::estimation::{
    fit_depth_model, synthetic_calibration, CalibrationSample, CalibrationSweep, DepthModelKind,
};
use frontalize::geometry::{HeadPose, PinholeCamera, Pose, Vec3};
use frontalize::perception::{DetectionKind, DetectionSource, NoiseModel};
use frontalize::sim::{descent_fraction, run, sweep, velocity_field, FieldGrid, RunLog, ScenarioConfig, StartPose, SweepGrid};
use frontalize::visibility::{
    count_correspondences, frontalization_error, visibility, CorrespondenceCounts, RasterSize, ReferenceFaceSurface,
    VisibilityMap,
};

fn report(n: u32, pass: bool, detail: String) {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
}

fn head() -> HeadPose {
    HeadPose::standing(0.0, 0.0, 0.0, 1.8, 0.22).unwrap()
}

#[test]
fn criterion_1_visibility_unit_suite() {
    let start = Instant::now();
    let mut ok = true;

    let v = visibility(&CorrespondenceCounts { counts: vec![0, 1, 3] }).values;
    let expected = [0.0, 1.0 - (-1.0f64).exp(), 1.0 - (-3.0f64).exp()];
    let max_dev = v.iter().zip(expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ok &= max_dev <= 1e-12;

    // Mirror a batch of arbitrary maps left to right.
    let surface = ReferenceFaceSurface::default();
    let mut worst_mirror: f64 = 0.0;
    let mut sum_exact = true;
    for seed in 0..200u32 {
        let values: Vec<f64> = (0..surface.len())
            .map(|i| {
                let x = (i as u32).wrapping_mul(2_654_435_761).wrapping_add(seed.wrapping_mul(40_503));
                f64::from(x % 10_007) / 10_007.0
            })
            .collect();
        let mirrored: Vec<f64> = (0..surface.len()).map(|i| values[surface.mirror_index(i)]).collect();
        let a = frontalization_error(&VisibilityMap { values }, &surface).unwrap();
        let b = frontalization_error(&VisibilityMap { values: mirrored }, &surface).unwrap();
        worst_mirror = worst_mirror.max((a.error + b.error).abs());
        sum_exact &= a.accuracy + a.error == 1.0 && b.accuracy + b.error == 1.0;
    }
    ok &= worst_mirror <= 1e-12 && sum_exact;

    let elapsed = start.elapsed().as_secs_f64();
    ok &= elapsed < 1.0;
    report(
        1,
        ok,
        format!("max value deviation {max_dev:.1e}, mirror residual {worst_mirror:.1e}, accuracy+error exact: {sum_exact}, {elapsed:.3} s"),
    );
    assert!(ok);
}

/// Brute-force correspondence counts, computed in the world frame.
fn oracle_counts(
    surface: &ReferenceFaceSurface,
    head: &HeadPose,
    camera: &PinholeCamera,
    camera_pose: &Pose,
    raster: RasterSize,
) -> Vec<u32> {
    let bb = surface.face_box(head, camera, camera_pose).expect("face in view");
    let (c, s) = (head.facing.cos(), head.facing.sin());
    // Head-local axes expressed in world coordinates.
    let ex = [c, s, 0.0];
    let ey = [-s, c, 0.0];
    let ez = [0.0, 0.0, 1.0];
    let center = [head.position.x, head.position.y, head.position.z];
    let ax = surface.semi_axes();
    let inv2 = [1.0 / (ax.x * ax.x), 1.0 / (ax.y * ax.y), 1.0 / (ax.z * ax.z)];
    // Quadratic form of the ellipsoid in the world frame.
    let mut m = [[0.0; 3]; 3];
    for (k, e) in [ex, ey, ez].iter().enumerate() {
        for r in 0..3 {
            for q in 0..3 {
                m[r][q] += inv2[k] * e[r] * e[q];
            }
        }
    }
    let quad = |a: [f64; 3], b: [f64; 3]| -> f64 {
        let mut acc = 0.0;
        for r in 0..3 {
            for q in 0..3 {
                acc += a[r] * m[r][q] * b[q];
            }
        }
        acc
    };
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let sub = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let to_world = |p: Vec3| -> [f64; 3] {
        [
            center[0] + p.x * ex[0] + p.y * ey[0] + p.z * ez[0],
            center[1] + p.x * ex[1] + p.y * ey[1] + p.z * ez[1],
            center[2] + p.x * ex[2] + p.y * ey[2] + p.z * ez[2],
        ]
    };
    let rot = |p: Vec3| -> [f64; 3] {
        [
            p.x * ex[0] + p.y * ey[0] + p.z * ez[0],
            p.x * ex[1] + p.y * ey[1] + p.z * ez[1],
            p.x * ex[2] + p.y * ey[2] + p.z * ez[2],
        ]
    };

    let eye = [camera_pose.position.x, camera_pose.position.y, camera_pose.position.z];
    let cells: Vec<(usize, [f64; 3])> = surface
        .cells()
        .iter()
        .enumerate()
        .filter_map(|(i, cell)| {
            let p = to_world(cell.point);
            let n = rot(cell.normal);
            (dot(n, sub(eye, p)) > 0.0).then_some((i, sub(p, eye)))
        })
        .collect();

    let fwd = [camera_pose.yaw.cos(), camera_pose.yaw.sin(), 0.0];
    let left = [-camera_pose.yaw.sin(), camera_pose.yaw.cos(), 0.0];
    let mut counts = vec![0u32; surface.len()];
    for j in 0..raster.height {
        for i in 0..raster.width {
            let u = bb.center_u - 0.5 * bb.width + (i as f64 + 0.5) * bb.width / raster.width as f64;
            let v = bb.center_v - 0.5 * bb.height + (j as f64 + 0.5) * bb.height / raster.height as f64;
            let du = (u - 0.5 * camera.width_px) / camera.focal_px;
            let dv = (v - 0.5 * camera.height_px) / camera.focal_px;
            let d = [fwd[0] - du * left[0], fwd[1] - du * left[1], -dv];

            let oc = sub(eye, center);
            let a = quad(d, d);
            let b = 2.0 * quad(oc, d);
            let cc = quad(oc, oc) - 1.0;
            let disc = b * b - 4.0 * a * cc;
            if disc < 0.0 {
                continue;
            }
            let t = (-b - disc.sqrt()) / (2.0 * a);
            if t <= 0.0 {
                continue;
            }
            let hit = [eye[0] + t * d[0], eye[1] + t * d[1], eye[2] + t * d[2]];
            if dot(sub(hit, center), ex) < 0.0 {
                continue;
            }
            let mut best = usize::MAX;
            let mut best_angle = f64::INFINITY;
            for &(idx, w) in &cells {
                let cross = [
                    d[1] * w[2] - d[2] * w[1],
                    d[2] * w[0] - d[0] * w[2],
                    d[0] * w[1] - d[1] * w[0],
                ];
                let angle = dot(cross, cross).sqrt().atan2(dot(d, w));
                if angle < best_angle {
                    best_angle = angle;
                    best = idx;
                }
            }
            counts[best] += 1;
        }
    }
    counts
}

#[test]
fn criterion_2_oracle_equivalence() {
    let start = Instant::now();
    let surface = ReferenceFaceSurface::ellipsoid(16, 16, Vec3::new(0.09, 0.07, 0.11)).unwrap();
    let camera = PinholeCamera::default();
    let head = head();
    let raster = RasterSize::square(64);
    let mut mismatched = Vec::new();
    let mut cells_checked = 0;
    for deg in [0.0, 15.0, -15.0, 30.0, -30.0, 60.0, -60.0, 80.0, -80.0] {
        let pose = camera.world_pose(&Pose::station(&head, 2.0, f64::to_radians(deg)));
        let fast = count_correspondences(&surface, &head, &camera, &pose, raster).unwrap();
        let slow = oracle_counts(&surface, &head, &camera, &pose, raster);
        cells_checked += slow.len();
        if fast.counts != slow {
            let diff = fast.counts.iter().zip(&slow).filter(|(a, b)| a != b).count();
            mismatched.push(format!("{deg}deg: {diff} cells"));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = mismatched.is_empty() && elapsed < 30.0;
    report(
        2,
        ok,
        format!("{cells_checked} cells over 9 bearings, mismatches: {mismatched:?}, {elapsed:.2} s"),
    );
    assert!(ok);
}

/// Spearman rank correlation without ties handling beyond average ranks.
fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn criterion_3_accuracy_vs_orientation() {
    let cfg = ScenarioConfig::default();
    let grid = SweepGrid {
        bearings_deg: (0..=5).map(|i| 15.0 * f64::from(i)).collect(),
        ranges_m: vec![2.0],
        samples: 10,
    };
    let cells = sweep(&cfg, &grid).unwrap();
    let acc: Vec<f64> = cells.iter().map(|c| c.mean_accuracy.expect("detections at 2 m")).collect();
    let theta: Vec<f64> = cells.iter().map(|c| c.bearing_deg).collect();
    let nonincreasing = acc.windows(2).all(|w| w[1] <= w[0]);
    let rho = spearman(&theta, &acc);
    let ok = nonincreasing && rho <= -0.95 && acc[0] >= 0.98;
    let table: Vec<String> = acc.iter().map(|a| format!("{a:.3}")).collect();
    report(3, ok, format!("accuracy {table:?}, spearman {rho:.3}"));
    assert!(ok);
}

#[test]
fn criterion_4_velocity_field() {
    let cfg = ScenarioConfig::default();
    let grid = FieldGrid::default();
    assert!(grid.ranges_m.len() >= 9 && grid.bearings_deg.len() >= 9);
    assert_eq!(grid.ranges_m.first(), Some(&1.5));
    assert_eq!(grid.ranges_m.last(), Some(&5.0));
    assert_eq!(grid.bearings_deg.first(), Some(&-80.0));
    assert_eq!(grid.bearings_deg.last(), Some(&80.0));
    let cells = velocity_field(&cfg, &grid).unwrap();
    let detecting = cells.iter().filter(|c| c.detecting).count();
    let dead: Vec<_> = cells.iter().filter(|c| c.detecting && c.dead_zone).collect();
    let dead_zero = dead.iter().all(|c| c.command.is_zero());
    let frac = descent_fraction(&cells).unwrap_or(0.0);
    let ok = frac >= 0.95 && dead_zero && detecting > 0;
    report(
        4,
        ok,
        format!(
            "{detecting} detecting cells, {} in dead zone (zero command: {dead_zero}), descent fraction {:.3}",
            dead.len(),
            frac
        ),
    );
    assert!(ok);
}

fn converging_config(bearing_deg: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig {
        duration_s: 60.0,
        uav: StartPose::Relative {
            range_m: 2.5,
            bearing_deg,
        },
        ..ScenarioConfig::default()
    };
    cfg.noise = NoiseModel {
        embedding_sigma: cfg.noise.embedding_sigma,
        ..NoiseModel::noiseless(cfg.seed)
    };
    cfg
}

const CONVERGENCE_BEARINGS: [f64; 4] = [30.0, -30.0, 60.0, -60.0];

#[test]
fn criterion_5_closed_loop_convergence() {
    let mut ok = true;
    let mut details = Vec::new();
    for b in CONVERGENCE_BEARINGS {
        let log = run(&converging_config(b)).unwrap();
        let first = log.scores.iter().position(|s| s.error.abs() < 0.05);
        let settled = first.is_some_and(|i| log.scores[i].timestamp <= 60.0 && log.scores[i..].iter().all(|s| s.error.abs() < 0.05));
        let min_range = log.samples.iter().filter_map(|s| s.range).fold(f64::INFINITY, f64::min);
        ok &= settled && min_range >= 1.45;
        details.push(format!(
            "{b:+}deg: settled at {} s, min range {min_range:.3} m",
            first.map_or("never".to_string(), |i| format!("{:.2}", log.scores[i].timestamp))
        ));
    }
    report(5, ok, details.join("; "));
    assert!(ok);
}

fn decile_means(log: &RunLog) -> (f64, f64, f64) {
    let s: Vec<f64> = log.similarities.iter().map(|r| r.similarity).collect();
    let k = (s.len() / 10).max(1);
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    (mean(&s[..k]), mean(&s[s.len() - k..]), *s.last().unwrap())
}

#[test]
fn criterion_6_similarity_rises() {
    let mut ok = true;
    let mut details = Vec::new();
    for b in CONVERGENCE_BEARINGS {
        let log = run(&converging_config(b)).unwrap();
        let (first, last, fin) = decile_means(&log);
        ok &= last - first >= 0.2 && fin >= 0.95;
        details.push(format!("{b:+}deg: {first:.3} -> {last:.3} (final {fin:.3})"));
    }
    report(6, ok, details.join("; "));
    assert!(ok);
}

#[test]
fn criterion_7_person_following() {
    let cfg = ScenarioConfig {
        duration_s: 60.0,
        uav: StartPose::Relative {
            range_m: 6.0,
            bearing_deg: 0.0,
        },
        ..ScenarioConfig::default()
    };
    let log = run(&cfg).unwrap();
    let sequence_ok = log.mode_sequence()
        == vec![ControllerMode::Grounded, ControllerMode::PersonFollowing, ControllerMode::Frontalizing];

    let first_person = log
        .events
        .iter()
        .find(|e| e.event.kind == DetectionKind::Person && e.event.source == DetectionSource::Detector)
        .map(|e| e.event.timestamp);
    let first_face = log
        .events
        .iter()
        .find(|e| e.event.kind == DetectionKind::Face)
        .map(|e| e.event.timestamp);
    let entered = |m: ControllerMode| log.modes.iter().find(|c| c.mode == m).map(|c| c.time);
    let timing_ok = first_person.is_some()
        && entered(ControllerMode::PersonFollowing) == first_person
        && first_face.is_some()
        && entered(ControllerMode::Frontalizing) == first_face;

    // Steady range: mean true range over the last 10 s.
    let tail: Vec<f64> = log.samples.iter().filter(|s| s.time >= 50.0).filter_map(|s| s.range).collect();
    let steady = tail.iter().sum::<f64>() / tail.len() as f64;
    let range_ok = (1.5..=1.7).contains(&steady);

    let ok = sequence_ok && timing_ok && range_ok;
    report(
        7,
        ok,
        format!(
            "modes {:?}, first person {first_person:?} s, first face {first_face:?} s, steady range {steady:.3} m",
            log.mode_sequence()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_8_rates_and_determinism() {
    let cfg = ScenarioConfig {
        duration_s: 10.0,
        ..ScenarioConfig::default()
    };
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    let c = a.counts;
    let counts_ok = c.odometry == 50 && c.pedestrian == 9 && c.tracker == 14 && c.face == 14 && (17..=18).contains(&c.images);
    let identical = a.csv_files().unwrap() == b.csv_files().unwrap() && a.to_json().unwrap() == b.to_json().unwrap();
    let ok = counts_ok && identical;
    report(8, ok, format!("counts {c:?}, byte-identical logs: {identical}"));
    assert!(ok);
}

#[test]
fn criterion_9_depth_estimation() {
    // Noiseless linear data.
    let line: Vec<CalibrationSample> = (0..30)
        .map(|i| {
            let h = 30.0 + 7.0 * f64::from(i);
            CalibrationSample {
                height_px: h,
                distance_m: 7.2 - 0.021 * h,
            }
        })
        .collect();
    let clean = fit_depth_model(&line).unwrap();
    let r2_ok = clean.r_squared >= 1.0 - 1e-12;

    // Pinhole data over 1 to 6 m with the default camera and person.
    let camera = PinholeCamera::default();
    let pinhole = synthetic_calibration(
        &camera,
        &head(),
        &CalibrationSweep {
            min_range_m: 1.0,
            max_range_m: 6.0,
            samples: 26,
        },
    );
    let model = fit_depth_model(&pinhole).unwrap();
    assert_eq!(model.kind, DepthModelKind::Linear);
    let max_err = pinhole
        .iter()
        .map(|s| (model.predict(s.height_px) - s.distance_m).abs())
        .fold(0.0, f64::max);
    let pinhole_ok = max_err < 0.6;

    // One gross outlier.
    let mut dirty = line.clone();
    dirty.insert(11, CalibrationSample {
        height_px: 120.0,
        distance_m: 40.0,
    });
    let refit = fit_depth_model(&dirty).unwrap();
    let outlier_ok = (refit.slope - clean.slope).abs() <= 1e-12 && (refit.intercept - clean.intercept).abs() <= 1e-10;

    let ok = r2_ok && pinhole_ok && outlier_ok;
    report(
        9,
        ok,
        format!(
            "R2 1-{:.1e}; pinhole 1-6 m linear fit max error {max_err:.3} m over {} samples; outlier-invariant: {outlier_ok}",
            1.0 - clean.r_squared,
            pinhole.len()
        ),
    );
    assert!(ok);
}
