//! Correspondence counting over a reference face surface, per-cell visibility
//! scores and the left/right frontalization error derived from them.
//!
//! A query raster is laid over the projected head. Every raster pixel whose
//! ray lands on the front half of the head is matched to the front-facing
//! surface cell closest to it in angle, as seen from the camera. Cells that
//! turn away from the camera stop receiving matches, so the visibility
//! `v = 1 - exp(-N)` of the far half of the face collapses as the view
//! rotates.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, HeadPose, PinholeCamera, Pose, Vec3};

/// Which half of the face a surface cell belongs to, from the subject's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
    /// Center column of an odd-width grid; counted in neither half.
    Midline,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceCell {
    pub row: usize,
    pub col: usize,
    /// Head-local position: x along the face normal, y to the subject's left, z up.
    pub point: Vec3,
    /// Outward unit normal in the head-local frame.
    pub normal: Vec3,
    pub side: Side,
}

/// Discretized front half of an ellipsoidal head, bilaterally symmetric by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceFaceSurface {
    rows: usize,
    cols: usize,
    semi_axes: Vec3,
    cells: Vec<SurfaceCell>,
}

impl Default for ReferenceFaceSurface {
    fn default() -> Self {
        ReferenceFaceSurface::ellipsoid(16, 16, Vec3::new(0.09, 0.07, 0.11))
            .expect("default surface is valid")
    }
}

impl ReferenceFaceSurface {
    /// Samples `rows x cols` cell centers on the front half (`x >= 0`) of an
    /// ellipsoid with the given semi-axes (depth, width, height).
    ///
    /// Column 0 sits on the subject's far left and row 0 at the top.
    pub fn ellipsoid(rows: usize, cols: usize, semi_axes: Vec3) -> Result<Self> {
        if rows * cols < 4 || cols < 2 {
            return Err(Error::InvalidSurface(format!(
                "need at least 4 cells and 2 columns, got {rows}x{cols}"
            )));
        }
        if !(semi_axes.x > 0.0 && semi_axes.y > 0.0 && semi_axes.z > 0.0) {
            return Err(Error::InvalidSurface("semi-axes must be positive".into()));
        }
        let half_pi = std::f64::consts::FRAC_PI_2;
        let mut cells = Vec::with_capacity(rows * cols);
        for row in 0..rows {
            // Integer numerators keep mirrored rows/cols exact negatives.
            let elev = half_pi * (rows as f64 - 1.0 - 2.0 * row as f64) / rows as f64;
            for col in 0..cols {
                let azim = half_pi * (cols as f64 - 1.0 - 2.0 * col as f64) / cols as f64;
                let point = Vec3::new(
                    semi_axes.x * elev.cos() * azim.cos(),
                    semi_axes.y * elev.cos() * azim.sin(),
                    semi_axes.z * elev.sin(),
                );
                let normal = Vec3::new(
                    point.x / (semi_axes.x * semi_axes.x),
                    point.y / (semi_axes.y * semi_axes.y),
                    point.z / (semi_axes.z * semi_axes.z),
                )
                .normalized();
                let side = match (2 * col + 1).cmp(&cols) {
                    std::cmp::Ordering::Less => Side::Left,
                    std::cmp::Ordering::Greater => Side::Right,
                    std::cmp::Ordering::Equal => Side::Midline,
                };
                cells.push(SurfaceCell {
                    row,
                    col,
                    point,
                    normal,
                    side,
                });
            }
        }
        Ok(ReferenceFaceSurface {
            rows,
            cols,
            semi_axes,
            cells,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn semi_axes(&self) -> Vec3 {
        self.semi_axes
    }

    pub fn cells(&self) -> &[SurfaceCell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    /// Index of the cell mirrored across the midsagittal plane.
    pub fn mirror_index(&self, idx: usize) -> usize {
        let (row, col) = (idx / self.cols, idx % self.cols);
        self.index(row, self.cols - 1 - col)
    }

    /// Tight image box around the projected head ellipsoid, clamped to the
    /// image. `None` when any part of the head is behind the camera or the
    /// head is entirely outside the frame.
    pub fn face_box(&self, head: &HeadPose, camera: &PinholeCamera, camera_pose: &Pose) -> Option<BoundingBox> {
        const AZIMUTH: usize = 72;
        const ELEVATION: usize = 36;
        let (mut u0, mut v0) = (f64::INFINITY, f64::INFINITY);
        let (mut u1, mut v1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        let s = self.semi_axes;
        for i in 0..=ELEVATION {
            let elev = std::f64::consts::PI * (i as f64 / ELEVATION as f64 - 0.5);
            for j in 0..AZIMUTH {
                let azim = std::f64::consts::TAU * j as f64 / AZIMUTH as f64;
                let local = Vec3::new(
                    s.x * elev.cos() * azim.cos(),
                    s.y * elev.cos() * azim.sin(),
                    s.z * elev.sin(),
                );
                let p = camera.project_unclipped(camera_pose, head.to_world(local))?;
                u0 = u0.min(p.u);
                u1 = u1.max(p.u);
                v0 = v0.min(p.v);
                v1 = v1.max(p.v);
            }
        }
        BoundingBox::from_corners(u0, v0, u1, v1).clamp_to(camera)
    }
}

/// Query-raster resolution laid over the projected face box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RasterSize {
    pub width: usize,
    pub height: usize,
}

impl RasterSize {
    pub const fn square(n: usize) -> Self {
        RasterSize { width: n, height: n }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Center of raster pixel `(i, j)` inside `bb`, in image coordinates.
    pub fn pixel_center(&self, bb: &BoundingBox, i: usize, j: usize) -> (f64, f64) {
        let u = bb.min_u() + (i as f64 + 0.5) * bb.width / self.width as f64;
        let v = bb.min_v() + (j as f64 + 0.5) * bb.height / self.height as f64;
        (u, v)
    }
}

impl Default for RasterSize {
    fn default() -> Self {
        RasterSize::square(64)
    }
}

/// Per-cell correspondence counts `N_q`, in surface cell order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrespondenceCounts {
    pub counts: Vec<u32>,
}

impl CorrespondenceCounts {
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }
}

/// Per-cell visibility `v(q) = 1 - exp(-N_q)`, in surface cell order.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityMap {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontalizationScore {
    /// Mean right-half visibility minus mean left-half visibility, in `[-1, 1]`.
    /// Positive when the subject's right side is the better-seen half.
    pub error: f64,
    /// `1 - error`.
    pub accuracy: f64,
    pub timestamp: f64,
}

/// Errors are snapped to multiples of this so `accuracy + error == 1` holds
/// exactly in binary floating point.
const ERROR_QUANTUM: f64 = 1.0 / (1u64 << 48) as f64;

impl FrontalizationScore {
    pub fn from_error(error: f64) -> Self {
        let error = (error / ERROR_QUANTUM).round() * ERROR_QUANTUM;
        FrontalizationScore {
            error,
            accuracy: 1.0 - error,
            timestamp: 0.0,
        }
    }

    pub fn at(self, timestamp: f64) -> Self {
        FrontalizationScore { timestamp, ..self }
    }
}

/// Casts the query raster over the projected head and counts, for every
/// surface cell, how many raster pixels are matched to it.
pub fn count_correspondences(
    surface: &ReferenceFaceSurface,
    head: &HeadPose,
    camera: &PinholeCamera,
    camera_pose: &Pose,
    raster: RasterSize,
) -> Result<CorrespondenceCounts> {
    if raster.width < 8 || raster.height < 8 {
        return Err(Error::invalid(format!(
            "raster must be at least 8x8, got {}x{}",
            raster.width, raster.height
        )));
    }
    let bb = surface
        .face_box(head, camera, camera_pose)
        .ok_or(Error::NoFace)?;

    // Everything below runs in the head-local frame.
    let eye = head.to_local(camera_pose.position);
    let axes = surface.semi_axes();
    let scaled_eye = Vec3::new(eye.x / axes.x, eye.y / axes.y, eye.z / axes.z);

    let candidates: Vec<(usize, Vec3)> = surface
        .cells()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.normal.dot(eye - c.point) > 0.0)
        .map(|(i, c)| (i, (c.point - eye).normalized()))
        .collect();

    let mut counts = vec![0u32; surface.len()];
    if candidates.is_empty() {
        return Ok(CorrespondenceCounts { counts });
    }

    for j in 0..raster.height {
        for i in 0..raster.width {
            let (u, v) = raster.pixel_center(&bb, i, j);
            let dir = camera.pixel_ray(camera_pose, u, v).rotate_z(-head.facing);
            let scaled_dir = Vec3::new(dir.x / axes.x, dir.y / axes.y, dir.z / axes.z);

            let a = scaled_dir.dot(scaled_dir);
            let b = 2.0 * scaled_eye.dot(scaled_dir);
            let c = scaled_eye.dot(scaled_eye) - 1.0;
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                continue;
            }
            let t = (-b - disc.sqrt()) / (2.0 * a);
            if t <= 0.0 || (eye + dir * t).x < 0.0 {
                continue;
            }

            let ray = dir.normalized();
            let mut best = candidates[0].0;
            let mut best_cos = f64::NEG_INFINITY;
            for &(idx, cell_dir) in &candidates {
                let cos = ray.dot(cell_dir);
                if cos > best_cos {
                    best_cos = cos;
                    best = idx;
                }
            }
            counts[best] += 1;
        }
    }
    Ok(CorrespondenceCounts { counts })
}

/// Visibility `1 - exp(-N_q)` for every cell.
pub fn visibility(counts: &CorrespondenceCounts) -> VisibilityMap {
    VisibilityMap {
        values: counts
            .counts
            .iter()
            .map(|&n| -(-f64::from(n)).exp_m1())
            .collect(),
    }
}

/// Mean right-half visibility minus mean left-half visibility.
pub fn frontalization_error(vis: &VisibilityMap, surface: &ReferenceFaceSurface) -> Result<FrontalizationScore> {
    if vis.values.len() != surface.len() {
        return Err(Error::InvalidSurface(format!(
            "visibility map has {} cells, surface has {}",
            vis.values.len(),
            surface.len()
        )));
    }
    let (mut right, mut n_right, mut left, mut n_left) = (0.0, 0usize, 0.0, 0usize);
    for (cell, &v) in surface.cells().iter().zip(&vis.values) {
        match cell.side {
            Side::Right => {
                right += v;
                n_right += 1;
            }
            Side::Left => {
                left += v;
                n_left += 1;
            }
            Side::Midline => {}
        }
    }
    if n_right == 0 || n_left == 0 {
        return Err(Error::InvalidSurface("a face half has no cells".into()));
    }
    Ok(FrontalizationScore::from_error(
        right / n_right as f64 - left / n_left as f64,
    ))
}

/// Counts, visibility and frontalization error for one view of the head.
pub fn score_view(
    surface: &ReferenceFaceSurface,
    head: &HeadPose,
    camera: &PinholeCamera,
    camera_pose: &Pose,
    raster: RasterSize,
) -> Result<FrontalizationScore> {
    let counts = count_correspondences(surface, head, camera, camera_pose, raster)?;
    frontalization_error(&visibility(&counts), surface)
}

/// Writes a `row,col,visibility` table for external heatmap rendering.
pub fn write_heatmap_csv<W: Write>(out: W, surface: &ReferenceFaceSurface, vis: &VisibilityMap) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["row", "col", "visibility"])?;
    for (cell, v) in surface.cells().iter().zip(&vis.values) {
        w.write_record([cell.row.to_string(), cell.col.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
