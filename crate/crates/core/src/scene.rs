//! Density maps, ground-truth plans, synthetic scenes and file formats.
//!
//! A scene directory holds:
//!
//! * `density.pgm`: 16-bit big-endian binary PGM, values scaled by 65535;
//! * `density.json`: world transform sidecar;
//! * `segments.json`: run-length encoded masks with detection scores
//!   (a 16-bit label image, PGM or PNG, is accepted as an alternative);
//! * `gt.json`: optional ground-truth plan.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{douglas_peucker, point_segment_dist, trace_contour, GridDims, Point2, Polygon, Rect, SegmentMask};
use crate::proposals::RoomSegment;
use crate::raster::{self, RasterGrid};

pub const SCHEMA_VERSION: u64 = 1;
/// Pixel margin kept free around projected point clouds.
pub const WORLD_MARGIN: f64 = 4.0;

pub const DENSITY_FILE: &str = "density.pgm";
pub const DENSITY_META_FILE: &str = "density.json";
pub const SEGMENTS_FILE: &str = "segments.json";
pub const GT_FILE: &str = "gt.json";

/// Maps meters to pixels: `px = scale * x + offset_x`, same scale on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldTransform {
    pub scale: f64,
    pub offset_x: f64,
    pub offset_y: f64,
}

impl Default for WorldTransform {
    fn default() -> Self {
        WorldTransform {
            scale: 1.0,
            offset_x: 0.0,
            offset_y: 0.0,
        }
    }
}

impl WorldTransform {
    pub fn apply(&self, x: f64, y: f64) -> Point2 {
        Point2::new(self.scale * x + self.offset_x, self.scale * y + self.offset_y)
    }
}

/// Top-view density in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap {
    grid: RasterGrid,
    transform: WorldTransform,
}

impl DensityMap {
    pub fn from_grid(grid: RasterGrid) -> Result<Self> {
        DensityMap::with_transform(grid, WorldTransform::default())
    }

    pub fn with_transform(grid: RasterGrid, transform: WorldTransform) -> Result<Self> {
        if let Some(v) = grid.values().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Spec(format!("density value {v} outside [0, 1]")));
        }
        if !(transform.scale > 0.0 && transform.scale.is_finite()) {
            return Err(Error::Spec(format!("transform scale {} must be positive", transform.scale)));
        }
        Ok(DensityMap { grid, transform })
    }

    pub fn blank(dims: GridDims) -> Self {
        DensityMap {
            grid: RasterGrid::zeros(dims),
            transform: WorldTransform::default(),
        }
    }

    pub fn grid(&self) -> &RasterGrid {
        &self.grid
    }

    pub fn dims(&self) -> GridDims {
        self.grid.dims()
    }

    pub fn transform(&self) -> WorldTransform {
        self.transform
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
}

/// Orthographic top-view histogram, max-normalized, fitted into `dims`
/// with a fixed margin and a uniform scale.
pub fn density_from_points(pc: &PointCloud, dims: GridDims) -> Result<DensityMap> {
    if pc.points.is_empty() {
        return Err(Error::EmptyScene);
    }
    if pc.points.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
        return Err(Error::Spec("point cloud has non-finite coordinates".into()));
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in &pc.points {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let (aw, ah) = (dims.width as f64 - 2.0 * WORLD_MARGIN, dims.height as f64 - 2.0 * WORLD_MARGIN);
    if aw < 1.0 || ah < 1.0 {
        return Err(Error::Spec("grid too small for the margin".into()));
    }
    let span = (x1 - x0).max(y1 - y0);
    // Slightly under the exact fit so the far edge stays inside the grid.
    let scale = if span > 0.0 {
        ((aw / (x1 - x0).max(1e-300)).min(ah / (y1 - y0).max(1e-300))) * (1.0 - 1e-9)
    } else {
        1.0
    };
    let offset_x = dims.width as f64 / 2.0 - scale * (x0 + x1) / 2.0;
    let offset_y = dims.height as f64 / 2.0 - scale * (y0 + y1) / 2.0;
    let t = WorldTransform {
        scale,
        offset_x,
        offset_y,
    };
    let mut counts = vec![0u64; dims.len()];
    for p in &pc.points {
        let q = t.apply(p[0], p[1]);
        let (px, py) = (q.x.floor(), q.y.floor());
        if px >= 0.0 && py >= 0.0 && (px as usize) < dims.width && (py as usize) < dims.height {
            counts[py as usize * dims.width + px as usize] += 1;
        }
    }
    let max = *counts.iter().max().unwrap_or(&0) as f64;
    let values = counts.iter().map(|&c| c as f64 / max).collect();
    DensityMap::with_transform(RasterGrid::from_values(dims, values)?, t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthPlan {
    pub rooms: Vec<Polygon>,
}

impl GroundTruthPlan {
    pub fn new(rooms: Vec<Polygon>) -> Result<Self> {
        Ok(GroundTruthPlan { rooms })
    }

    /// Checks that rooms overlap by at most a one-pixel band: after a
    /// one-pixel erosion no two room masks share a pixel.
    pub fn check_overlap(&self, dims: GridDims) -> Result<()> {
        let masks: Vec<Option<SegmentMask>> = self
            .rooms
            .iter()
            .map(|r| SegmentMask::from_polygon(r, dims).ok().and_then(|m| m.eroded()))
            .collect();
        for i in 0..masks.len() {
            for j in i + 1..masks.len() {
                if let (Some(a), Some(b)) = (&masks[i], &masks[j]) {
                    if a.intersection_area(b) > 0 {
                        return Err(Error::Contract(format!("ground-truth rooms {i} and {j} overlap")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Loaded or generated scene.
#[derive(Debug, Clone)]
pub struct Scene {
    pub density: DensityMap,
    pub segments: Vec<RoomSegment>,
    pub gt: Option<GroundTruthPlan>,
}

/// Parameters of the synthetic scene generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSceneSpec {
    pub width: usize,
    pub height: usize,
    pub min_rooms: usize,
    pub max_rooms: usize,
    /// Layout cell size in pixels; room walls fall on cell boundaries.
    pub snap: usize,
    /// Wall thickness between neighbouring rooms, in pixels.
    pub wall_gap: f64,
    /// Standard deviation of the smooth boundary jitter of the segments.
    pub jitter_sigma: f64,
    /// Random one-pixel erosion or dilation of each segment.
    pub morph_noise: bool,
    pub wall_density: (f64, f64),
    pub clutter_density: (f64, f64),
    /// Amplitude of the additive noise on occupied pixels.
    pub noise: f64,
    pub false_positive_prob: f64,
    pub split_prob: f64,
    pub l_shape_prob: f64,
    pub non_manhattan_prob: f64,
    pub seed: u64,
}

impl Default for SyntheticSceneSpec {
    fn default() -> Self {
        SyntheticSceneSpec {
            width: 256,
            height: 256,
            min_rooms: 3,
            max_rooms: 6,
            snap: 8,
            wall_gap: 4.0,
            jitter_sigma: 0.0,
            morph_noise: false,
            wall_density: (0.8, 1.0),
            clutter_density: (0.02, 0.15),
            noise: 0.02,
            false_positive_prob: 0.0,
            split_prob: 0.0,
            l_shape_prob: 0.3,
            non_manhattan_prob: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticSceneSpec {
    pub fn noiseless(min_rooms: usize, max_rooms: usize, seed: u64) -> Self {
        SyntheticSceneSpec {
            min_rooms,
            max_rooms,
            seed,
            ..Default::default()
        }
    }

    /// Jittered segments with false positives and split segments.
    pub fn noisy(min_rooms: usize, max_rooms: usize, seed: u64) -> Self {
        SyntheticSceneSpec {
            min_rooms,
            max_rooms,
            seed,
            jitter_sigma: 2.0,
            morph_noise: true,
            false_positive_prob: 0.3,
            split_prob: 0.2,
            ..Default::default()
        }
    }

    pub fn dims(&self) -> GridDims {
        GridDims::new(self.width, self.height)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_rooms == 0 || self.max_rooms < self.min_rooms {
            return Err(Error::Spec(format!(
                "room count range {}..={} is infeasible",
                self.min_rooms, self.max_rooms
            )));
        }
        if self.max_rooms > 12 {
            return Err(Error::Spec("at most 12 rooms are supported".into()));
        }
        if self.width < 64 || self.height < 64 || self.width > 4096 || self.height > 4096 {
            return Err(Error::Spec("grid must be between 64 and 4096 pixels per side".into()));
        }
        if self.snap < 2 {
            return Err(Error::Spec("snap must be at least 2 px".into()));
        }
        for (name, p) in [
            ("false_positive_prob", self.false_positive_prob),
            ("split_prob", self.split_prob),
            ("l_shape_prob", self.l_shape_prob),
            ("non_manhattan_prob", self.non_manhattan_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Spec(format!("{name} = {p} is not a probability")));
            }
        }
        for (name, (lo, hi)) in [("wall_density", self.wall_density), ("clutter_density", self.clutter_density)] {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(Error::Spec(format!("{name} range ({lo}, {hi}) invalid")));
            }
        }
        if !(0.0..=self.snap as f64).contains(&self.wall_gap) {
            return Err(Error::Spec(format!("wall_gap {} must lie in [0, snap]", self.wall_gap)));
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) || !(0.0..=0.5).contains(&self.noise) {
            return Err(Error::Spec("jitter and noise must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Minimum room extent in layout cells.
const MIN_CELLS: usize = 3;
/// Free border around the layout, in pixels.
const LAYOUT_MARGIN: f64 = 16.0;

#[derive(Debug, Clone, Copy)]
struct CellRect {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

impl CellRect {
    fn w(&self) -> usize {
        self.x1 - self.x0
    }
    fn h(&self) -> usize {
        self.y1 - self.y0
    }
}

/// Guillotine partition of a `cols x rows` cell grid into `n` rectangles.
fn guillotine(cols: usize, rows: usize, n: usize, rng: &mut ChaCha8Rng) -> Option<Vec<CellRect>> {
    let mut rects = vec![CellRect {
        x0: 0,
        y0: 0,
        x1: cols,
        y1: rows,
    }];
    while rects.len() < n {
        let splittable = |r: &CellRect| r.w() >= 2 * MIN_CELLS || r.h() >= 2 * MIN_CELLS;
        let idx = (0..rects.len())
            .filter(|&i| splittable(&rects[i]))
            .max_by_key(|&i| (rects[i].w() * rects[i].h(), std::cmp::Reverse(i)))?;
        let r = rects[idx];
        let vertical = if r.w() >= 2 * MIN_CELLS && r.h() >= 2 * MIN_CELLS {
            if r.w() == r.h() {
                rng.gen_bool(0.5)
            } else {
                r.w() > r.h()
            }
        } else {
            r.w() >= 2 * MIN_CELLS
        };
        if vertical {
            let cut = rng.gen_range(r.x0 + MIN_CELLS..=r.x1 - MIN_CELLS);
            rects[idx] = CellRect { x1: cut, ..r };
            rects.push(CellRect { x0: cut, ..r });
        } else {
            let cut = rng.gen_range(r.y0 + MIN_CELLS..=r.y1 - MIN_CELLS);
            rects[idx] = CellRect { y1: cut, ..r };
            rects.push(CellRect { y0: cut, ..r });
        }
    }
    Some(rects)
}

/// Pairs of rectangles whose union is an L shape.
fn l_pairs(rects: &[CellRect]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let one_end = |a0: usize, a1: usize, b0: usize, b1: usize| {
        let overlap = a0.max(b0) < a1.min(b1);
        overlap && ((a0 == b0) != (a1 == b1))
    };
    for i in 0..rects.len() {
        for j in i + 1..rects.len() {
            let (a, b) = (rects[i], rects[j]);
            let side_x = a.x1 == b.x0 || b.x1 == a.x0;
            let side_y = a.y1 == b.y0 || b.y1 == a.y0;
            if (side_x && one_end(a.y0, a.y1, b.y0, b.y1)) || (side_y && one_end(a.x0, a.x1, b.x0, b.x1)) {
                out.push((i, j));
            }
        }
    }
    out
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Unit-variance smooth random field made of a few plane waves.
struct SmoothField {
    waves: Vec<(f64, f64, f64)>,
}

impl SmoothField {
    fn new(rng: &mut ChaCha8Rng, wavelength: std::ops::Range<f64>) -> Self {
        let waves = (0..4)
            .map(|_| {
                let dir: f64 = rng.gen_range(0.0..2.0 * PI);
                let k = 2.0 * PI / rng.gen_range(wavelength.clone());
                (k * dir.cos(), k * dir.sin(), rng.gen_range(0.0..2.0 * PI))
            })
            .collect();
        SmoothField { waves }
    }

    fn at(&self, p: Point2) -> f64 {
        let a = (2.0 / self.waves.len() as f64).sqrt();
        self.waves.iter().map(|&(kx, ky, ph)| a * (kx * p.x + ky * p.y + ph).sin()).sum()
    }
}

fn boundary_dist(p: Point2, v: &[Point2]) -> f64 {
    let n = v.len();
    (0..n)
        .map(|i| point_segment_dist(p, v[i], v[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

fn center(x: usize, y: usize) -> Point2 {
    Point2::new(x as f64 + 0.5, y as f64 + 0.5)
}

/// Moves every edge of an axis-aligned loop `d` units inward.
fn inset_rectilinear(v: &[Point2], d: f64) -> Vec<Point2> {
    let n = v.len();
    if d == 0.0 {
        return v.to_vec();
    }
    let area2: f64 = (0..n).map(|i| v[i].x * v[(i + 1) % n].y - v[(i + 1) % n].x * v[i].y).sum();
    let s = if area2 > 0.0 { d } else { -d };
    // Offset of edge i along its left normal, as a shift of x (vertical
    // edges) or y (horizontal edges).
    let shift = |i: usize| {
        let (a, b) = (v[i], v[(i + 1) % n]);
        let (dx, dy) = ((b.x - a.x).signum(), (b.y - a.y).signum());
        (-dy * s, dx * s)
    };
    (0..n)
        .map(|i| {
            let (p, q) = (shift((i + n - 1) % n), shift(i));
            Point2::new(v[i].x + p.0 + q.0, v[i].y + p.1 + q.1)
        })
        .collect()
}

/// Rooms of one layout, as polygons in pixel coordinates.
fn layout_rooms(spec: &SyntheticSceneSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Polygon>> {
    let n = rng.gen_range(spec.min_rooms..=spec.max_rooms);
    let rotated = rng.gen_bool(spec.non_manhattan_prob);
    let want_l = rng.gen_bool(spec.l_shape_prob);
    let (w, h) = (spec.width as f64, spec.height as f64);
    // Cell pitch in layout coordinates; rotated layouts use (u, w) = (x - y,
    // x + y) where one unit is 1/sqrt(2) px, so the pitch is scaled up.
    let pitch = if rotated {
        (spec.snap as f64 * std::f64::consts::SQRT_2).round()
    } else {
        spec.snap as f64
    };
    let (max_cols, max_rows) = if rotated {
        // Bound on cols + rows: the diamond spans half their sum on each axis.
        let m = (2.0 * (w.min(h) - 2.0 * LAYOUT_MARGIN) / pitch) as usize;
        (m, m)
    } else {
        (
            ((w - 2.0 * LAYOUT_MARGIN) / pitch) as usize,
            ((h - 2.0 * LAYOUT_MARGIN) / pitch) as usize,
        )
    };
    let need = n + want_l as usize;
    let min_side = (MIN_CELLS * 2).max(((need * MIN_CELLS * MIN_CELLS * 3) as f64).sqrt().ceil() as usize);
    if (rotated && 2 * min_side > max_cols) || (!rotated && (min_side > max_cols || min_side > max_rows)) {
        return Err(Error::Spec(format!("{n} rooms do not fit the grid")));
    }
    let (cols, rows) = if rotated {
        // The diamond's x extent is half the sum of both sides.
        let c = rng.gen_range(min_side..=max_cols - min_side);
        let r = rng.gen_range(min_side..=(max_cols - c).max(min_side));
        (c, r)
    } else {
        (
            rng.gen_range(min_side..=max_cols.min(26).max(min_side)),
            rng.gen_range(min_side..=max_rows.min(26).max(min_side)),
        )
    };
    let rects = (0..64)
        .find_map(|_| guillotine(cols, rows, need, rng))
        .ok_or_else(|| Error::Spec(format!("cannot split the layout into {need} rooms")))?;
    let mut labels = vec![0usize; cols * rows];
    for (k, r) in rects.iter().enumerate() {
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                labels[y * cols + x] = k;
            }
        }
    }
    let mut count = rects.len();
    if want_l {
        let pairs = l_pairs(&rects);
        if pairs.is_empty() {
            // No L available; drop the extra room by merging two siblings.
            let last = rects.len() - 1;
            let sib = (0..last)
                .find(|&i| {
                    let (a, b) = (rects[i], rects[last]);
                    (a.x0 == b.x0 && a.x1 == b.x1 && (a.y1 == b.y0 || b.y1 == a.y0))
                        || (a.y0 == b.y0 && a.y1 == b.y1 && (a.x1 == b.x0 || b.x1 == a.x0))
                })
                .ok_or_else(|| Error::Spec("layout merge failed".into()))?;
            labels.iter_mut().filter(|l| **l == last).for_each(|l| *l = sib);
        } else {
            let (a, b) = pairs[rng.gen_range(0..pairs.len())];
            labels.iter_mut().filter(|l| **l == b).for_each(|l| *l = a);
            // Fill the hole left by `b` with the last label.
            let last = rects.len() - 1;
            if b != last {
                labels.iter_mut().filter(|l| **l == last).for_each(|l| *l = b);
            }
        }
        count -= 1;
    }

    let (origin_u, origin_v) = if rotated {
        // Center the diamond on the grid center; odd half-offsets keep pixel
        // centers off every wall.
        let (su, sw) = (cols as f64 * pitch, rows as f64 * pitch);
        let uc = w / 2.0 - h / 2.0;
        let wc = w / 2.0 + h / 2.0;
        ((uc - su / 2.0).floor() + 0.5, (wc - sw / 2.0).floor() + 0.5)
    } else {
        (
            ((w - cols as f64 * pitch) / 2.0).floor(),
            ((h - rows as f64 * pitch) / 2.0).floor(),
        )
    };
    // Whole layout units keep pixel centers off the inset walls too.
    let unit = if rotated { std::f64::consts::SQRT_2 } else { 1.0 };
    let inset = (spec.wall_gap / 2.0 * unit).round();
    let cell_dims = GridDims::new(cols, rows);
    let mut rooms = Vec::with_capacity(count);
    for k in 0..count {
        let m = SegmentMask::new(cell_dims, labels.iter().map(|&l| l == k).collect())?;
        let loop_pts = trace_contour(&m)?;
        let corners = douglas_peucker(&loop_pts, 1e-6)?;
        let scaled: Vec<Point2> = corners
            .vertices()
            .iter()
            .map(|c| Point2::new(origin_u + c.x * pitch, origin_v + c.y * pitch))
            .collect();
        let pts: Vec<Point2> = inset_rectilinear(&scaled, inset)
            .into_iter()
            .map(|c| {
                let (a, b) = (c.x, c.y);
                if rotated {
                    Point2::new((a + b) / 2.0, (b - a) / 2.0)
                } else {
                    Point2::new(a, b)
                }
            })
            .collect();
        rooms.push(Polygon::new(pts)?);
    }
    Ok(rooms)
}

/// Deterministic synthetic scene: density map, noisy segments, ground truth.
pub fn generate_synthetic_scene(spec: &SyntheticSceneSpec) -> Result<Scene> {
    spec.validate()?;
    let dims = spec.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rooms = layout_rooms(spec, &mut rng)?;
    let gt = GroundTruthPlan::new(rooms)?;
    gt.check_overlap(dims)?;

    let density = synth_density(spec, &gt, &mut rng)?;

    // One displacement field for the whole scene: neighbouring segments
    // drift together, as detections bounded by the same wall do.
    let warp = (SmoothField::new(&mut rng, 32.0..80.0), SmoothField::new(&mut rng, 32.0..80.0));
    let mut segments = Vec::new();
    for (i, room) in gt.rooms.iter().enumerate() {
        let mask = jittered_mask(room, spec, dims, &warp, &mut rng)?;
        let score = rng.gen_range(0.7..1.0);
        segments.push(RoomSegment::new(i as u32, score, mask)?);
    }
    if rng.gen_bool(spec.split_prob) {
        let k = rng.gen_range(0..segments.len());
        let halves = split_mask(&segments[k].mask, &mut rng)?;
        let score = segments[k].detection_score;
        let extra = segments.len() as u32;
        segments[k] = RoomSegment::new(segments[k].id, score, halves.0)?;
        segments.push(RoomSegment::new(extra, score * 0.9, halves.1)?);
    }
    if rng.gen_bool(spec.false_positive_prob) {
        let mask = false_positive_mask(&gt, dims, &mut rng)?;
        let id = segments.len() as u32;
        segments.push(RoomSegment::new(id, rng.gen_range(0.5..0.8), mask)?);
    }
    Ok(Scene {
        density,
        segments,
        gt: Some(gt),
    })
}

fn synth_density(spec: &SyntheticSceneSpec, gt: &GroundTruthPlan, rng: &mut ChaCha8Rng) -> Result<DensityMap> {
    let dims = spec.dims();
    let mut values = vec![0.0; dims.len()];
    let mut inside = vec![0.0; dims.len()];
    for r in &gt.rooms {
        raster::fill_hard(r.vertices(), dims, dims.full_rect(), 1.0, &mut inside);
    }
    let mut wall = vec![false; dims.len()];
    let reach = spec.wall_gap / 2.0 + 1.0;
    for r in &gt.rooms {
        let win = Rect::covering(r.vertices(), dims).dilate(reach.ceil() as usize + 1, dims);
        for y in win.y0..win.y1 {
            for x in win.x0..win.x1 {
                let d = boundary_dist(center(x, y), r.vertices());
                if d <= 1.0 || (d <= reach && inside[y * dims.width + x] == 0.0) {
                    wall[y * dims.width + x] = true;
                }
            }
        }
    }
    let (wl, wh) = spec.wall_density;
    let (cl, ch) = spec.clutter_density;
    for i in 0..dims.len() {
        let v = if wall[i] {
            rng.gen_range(wl..=wh)
        } else if inside[i] > 0.0 {
            rng.gen_range(cl..=ch) + spec.noise * gaussian(rng)
        } else {
            0.0
        };
        values[i] = v.clamp(0.0, 1.0);
    }
    let max = values.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        values.iter_mut().for_each(|v| *v /= max);
    }
    DensityMap::from_grid(RasterGrid::from_values(dims, values)?)
}

/// Room rendered through the scene warp, then grown or shrunk by up to one
/// pixel.
fn jittered_mask(
    room: &Polygon,
    spec: &SyntheticSceneSpec,
    dims: GridDims,
    warp: &(SmoothField, SmoothField),
    rng: &mut ChaCha8Rng,
) -> Result<SegmentMask> {
    let bias = if spec.morph_noise {
        rng.gen_range(-1i32..=1) as f64
    } else {
        0.0
    };
    let sigma = spec.jitter_sigma;
    let reach = (3.0 * sigma + bias.abs() + 2.0).ceil() as usize;
    let win = Rect::covering(room.vertices(), dims).dilate(reach, dims);
    let mut data = vec![false; dims.len()];
    for y in win.y0..win.y1 {
        for x in win.x0..win.x1 {
            let c = center(x, y);
            let m = if sigma > 0.0 {
                Point2::new(c.x + sigma * warp.0.at(c), c.y + sigma * warp.1.at(c))
            } else {
                c
            };
            let inside = raster::winding_hard(m, room).map(|w| w != 0).unwrap_or(false);
            data[y * dims.width + x] = if bias == 0.0 {
                inside
            } else {
                let d = boundary_dist(m, room.vertices());
                (if inside { -d } else { d }) < bias
            };
        }
    }
    let m = SegmentMask::new(dims, data)?;
    Ok(m.largest_component())
}

/// Cuts a mask across its longer side into two halves overlapping by a few
/// pixels.
fn split_mask(m: &SegmentMask, rng: &mut ChaCha8Rng) -> Result<(SegmentMask, SegmentMask)> {
    let b = m.bbox();
    let overlap = 3usize;
    let dims = m.dims();
    let vertical = b.width() >= b.height();
    let (lo, hi) = if vertical { (b.x0, b.x1) } else { (b.y0, b.y1) };
    let span = hi - lo;
    let cut = lo + span / 2 + rng.gen_range(0..=span / 6) - span / 12;
    let keep = |x: usize, y: usize, first: bool| {
        let t = if vertical { x } else { y };
        m.get(x, y) && if first { t < cut + overlap } else { t + overlap >= cut }
    };
    Ok((
        SegmentMask::from_fn(dims, |x, y| keep(x, y, true))?,
        SegmentMask::from_fn(dims, |x, y| keep(x, y, false))?,
    ))
}

/// Rectangle straddling the outside of the layout.
fn false_positive_mask(gt: &GroundTruthPlan, dims: GridDims, rng: &mut ChaCha8Rng) -> Result<SegmentMask> {
    let mut inside = vec![0.0; dims.len()];
    for r in &gt.rooms {
        raster::fill_hard(r.vertices(), dims, dims.full_rect(), 1.0, &mut inside);
    }
    let all: Vec<Point2> = gt.rooms.iter().flat_map(|r| r.vertices().to_vec()).collect();
    let region = Rect::covering(&all, dims).dilate(12, dims);
    for _ in 0..200 {
        let (fw, fh) = (rng.gen_range(14..36usize), rng.gen_range(14..36usize));
        if region.width() <= fw || region.height() <= fh {
            break;
        }
        let x0 = rng.gen_range(region.x0..region.x1 - fw);
        let y0 = rng.gen_range(region.y0..region.y1 - fh);
        let mut n_in = 0;
        for y in y0..y0 + fh {
            for x in x0..x0 + fw {
                n_in += (inside[y * dims.width + x] > 0.0) as usize;
            }
        }
        let frac = n_in as f64 / (fw * fh) as f64;
        if (0.1..=0.5).contains(&frac) {
            return SegmentMask::from_fn(dims, |x, y| x >= x0 && x < x0 + fw && y >= y0 && y < y0 + fh);
        }
    }
    // Fallback: a block in the top-left margin.
    SegmentMask::from_fn(dims, |x, y| (2..16).contains(&x) && (2..16).contains(&y))
}

// ---------------------------------------------------------------------------
// File formats.

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn json_error(path: &Path, e: serde_json::Error) -> Error {
    Error::parse(path, format!("line {} column {}", e.line(), e.column()), e.to_string())
}

/// Writes a 16-bit big-endian binary PGM with values `round(v * 65535)`.
pub fn write_pgm16(grid: &RasterGrid, mut out: impl Write) -> std::io::Result<()> {
    write!(out, "P5\n{} {}\n65535\n", grid.width(), grid.height())?;
    let mut buf = Vec::with_capacity(grid.values().len() * 2);
    for &v in grid.values() {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        buf.extend_from_slice(&q.to_be_bytes());
    }
    out.write_all(&buf)
}

/// Parses a binary PGM (8 or 16 bit) into values scaled to `[0, 1]`.
pub fn parse_pgm(path: &Path, bytes: &[u8]) -> Result<RasterGrid> {
    let (grid, _) = parse_pgm_raw(path, bytes)?;
    let max = grid.1 as f64;
    let values = grid.0.iter().map(|&v| v as f64 / max).collect();
    RasterGrid::from_values(grid.2, values)
}

type RawPgm = (Vec<u16>, u32, GridDims);

fn parse_pgm_raw(path: &Path, bytes: &[u8]) -> Result<(RawPgm, usize)> {
    let mut pos = 0usize;
    let err = |pos: usize, msg: &str| Error::parse(path, format!("byte {pos}"), msg);
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(err(0, "missing P5 magic"));
    }
    pos += 2;
    let mut fields = [0u64; 3];
    for f in fields.iter_mut() {
        // Whitespace and comments.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(err(pos, "truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(err(pos, "expected a number in the header"));
        }
        *f = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(start, "header number out of range"))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(err(pos, "expected whitespace after maxval")),
    }
    let (w, h, maxval) = (fields[0] as usize, fields[1] as usize, fields[2]);
    if w == 0 || h == 0 || w > 16384 || h > 16384 {
        return Err(err(pos, "unsupported image size"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(err(pos, "maxval must be in 1..=65535"));
    }
    let bps = if maxval < 256 { 1 } else { 2 };
    let need = w * h * bps;
    if bytes.len() < pos + need {
        return Err(err(
            bytes.len(),
            &format!("truncated raster: {} of {} bytes", bytes.len() - pos, need),
        ));
    }
    let raw = &bytes[pos..pos + need];
    let vals: Vec<u16> = if bps == 1 {
        raw.iter().map(|&b| b as u16).collect()
    } else {
        raw.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    };
    if let Some((i, _)) = vals.iter().enumerate().find(|(_, &v)| v as u64 > maxval) {
        return Err(err(pos + i * bps, "sample exceeds maxval"));
    }
    Ok(((vals, maxval as u32, GridDims::new(w, h)), pos + need))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DensityMeta {
    schema_version: u64,
    scale: f64,
    offset_x: f64,
    offset_y: f64,
}

fn check_version(path: &Path, found: u64) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found,
            expected: SCHEMA_VERSION,
        });
    }
    Ok(())
}

/// Reads only the `schema_version` field so version errors win over shape errors.
fn peek_version(path: &Path, bytes: &[u8]) -> Result<()> {
    let v: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| json_error(path, e))?;
    match v.get("schema_version").and_then(|s| s.as_u64()) {
        Some(found) => check_version(path, found),
        None => Err(Error::Validation {
            path: path.to_path_buf(),
            message: "missing schema_version".into(),
        }),
    }
}

pub fn save_density(d: &DensityMap, pgm: &Path, meta: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_pgm16(d.grid(), &mut buf).map_err(|e| Error::io(pgm, e))?;
    write_file(pgm, &buf)?;
    let t = d.transform();
    let m = DensityMeta {
        schema_version: SCHEMA_VERSION,
        scale: t.scale,
        offset_x: t.offset_x,
        offset_y: t.offset_y,
    };
    write_file(meta, to_json(&m).as_bytes())
}

/// Loads a density PGM; the sidecar is optional and defaults to identity.
pub fn load_density(pgm: &Path, meta: Option<&Path>) -> Result<DensityMap> {
    let grid = parse_pgm(pgm, &read(pgm)?)?;
    let t = match meta {
        Some(p) if p.exists() => {
            let bytes = read(p)?;
            peek_version(p, &bytes)?;
            let m: DensityMeta = serde_json::from_slice(&bytes).map_err(|e| json_error(p, e))?;
            WorldTransform {
                scale: m.scale,
                offset_x: m.offset_x,
                offset_y: m.offset_y,
            }
        }
        _ => WorldTransform::default(),
    };
    DensityMap::with_transform(grid, t).map_err(|e| Error::Validation {
        path: pgm.to_path_buf(),
        message: e.to_string(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentsDoc {
    schema_version: u64,
    width: usize,
    height: usize,
    segments: Vec<SegmentDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentDoc {
    id: u32,
    score: f64,
    /// `[start, length, start, length, ...]` over row-major pixel indices.
    rle: Vec<usize>,
}

fn rle_encode(m: &SegmentMask) -> Vec<usize> {
    let mut out = Vec::new();
    let d = m.data();
    let mut i = 0;
    while i < d.len() {
        if d[i] {
            let s = i;
            while i < d.len() && d[i] {
                i += 1;
            }
            out.push(s);
            out.push(i - s);
        } else {
            i += 1;
        }
    }
    out
}

pub fn save_segments(segs: &[RoomSegment], dims: GridDims, path: &Path) -> Result<()> {
    let doc = SegmentsDoc {
        schema_version: SCHEMA_VERSION,
        width: dims.width,
        height: dims.height,
        segments: segs
            .iter()
            .map(|s| SegmentDoc {
                id: s.id,
                score: s.detection_score,
                rle: rle_encode(&s.mask),
            })
            .collect(),
    };
    let mut text = serde_json::to_string(&doc).expect("serializable document");
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// Loads segments from RLE JSON, or from a 16-bit label image (`.pgm` or
/// `.png`) where value `k > 0` marks segment `k`.
pub fn load_segments(path: &Path, dims: GridDims) -> Result<Vec<RoomSegment>> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "pgm" | "png" => load_label_image(path, dims),
        _ => load_segments_json(path, dims),
    }
}

fn invalid(path: &Path, message: impl Into<String>) -> Error {
    Error::Validation {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn load_segments_json(path: &Path, dims: GridDims) -> Result<Vec<RoomSegment>> {
    let bytes = read(path)?;
    peek_version(path, &bytes)?;
    let doc: SegmentsDoc = serde_json::from_slice(&bytes).map_err(|e| json_error(path, e))?;
    if doc.width != dims.width || doc.height != dims.height {
        return Err(invalid(
            path,
            format!("segments are {}x{}, density is {}x{}", doc.width, doc.height, dims.width, dims.height),
        ));
    }
    let mut out = Vec::with_capacity(doc.segments.len());
    for (i, s) in doc.segments.iter().enumerate() {
        if s.rle.len() % 2 != 0 {
            return Err(invalid(path, format!("segment {i}: odd run-length array")));
        }
        let mut data = vec![false; dims.len()];
        for run in s.rle.chunks_exact(2) {
            let (start, len) = (run[0], run[1]);
            if start.checked_add(len).is_none_or(|e| e > data.len()) {
                return Err(invalid(path, format!("segment {i}: run {start}+{len} leaves the grid")));
            }
            data[start..start + len].iter_mut().for_each(|d| *d = true);
        }
        let mask = SegmentMask::new(dims, data).map_err(|_| invalid(path, format!("segment {i}: empty mask")))?;
        out.push(RoomSegment::new(s.id, s.score, mask).map_err(|e| invalid(path, format!("segment {i}: {e}")))?);
    }
    Ok(out)
}

fn load_label_image(path: &Path, dims: GridDims) -> Result<Vec<RoomSegment>> {
    let (vals, w, h) = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
        let ((vals, _, d), _) = parse_pgm_raw(path, &read(path)?)?;
        (vals, d.width, d.height)
    } else {
        let img = image::open(path).map_err(|e| Error::parse(path, "image", e.to_string()))?;
        let g = img.into_luma16();
        let (w, h) = (g.width() as usize, g.height() as usize);
        (g.into_raw(), w, h)
    };
    if w != dims.width || h != dims.height {
        return Err(invalid(path, format!("labels are {w}x{h}, density is {}x{}", dims.width, dims.height)));
    }
    let mut ids: Vec<u16> = vals.iter().copied().filter(|&v| v > 0).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .map(|k| {
            let mask = SegmentMask::new(dims, vals.iter().map(|&v| v == k).collect())?;
            RoomSegment::new(k as u32, 1.0, mask)
        })
        .collect()
}

/// Writes segments as a 16-bit label PGM (`id + 1` per pixel; later
/// segments overwrite earlier ones where they overlap).
pub fn save_label_pgm(segs: &[RoomSegment], dims: GridDims, path: &Path) -> Result<()> {
    let mut labels = vec![0u16; dims.len()];
    for s in segs {
        let id = u16::try_from(s.id + 1).map_err(|_| Error::Spec(format!("segment id {} too large", s.id)))?;
        for (l, &m) in labels.iter_mut().zip(s.mask.data()) {
            if m {
                *l = id;
            }
        }
    }
    let mut buf = format!("P5\n{} {}\n65535\n", dims.width, dims.height).into_bytes();
    for l in labels {
        buf.extend_from_slice(&l.to_be_bytes());
    }
    write_file(path, &buf)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanDoc {
    schema_version: u64,
    rooms: Vec<Vec<[f64; 2]>>,
}

pub fn plan_to_json(rooms: &[Polygon]) -> String {
    let doc = PlanDoc {
        schema_version: SCHEMA_VERSION,
        rooms: rooms
            .iter()
            .map(|r| r.vertices().iter().map(|v| [v.x, v.y]).collect())
            .collect(),
    };
    to_json(&doc)
}

pub fn save_plan(rooms: &[Polygon], path: &Path) -> Result<()> {
    write_file(path, plan_to_json(rooms).as_bytes())
}

pub fn load_plan(path: &Path) -> Result<Vec<Polygon>> {
    let bytes = read(path)?;
    peek_version(path, &bytes)?;
    let doc: PlanDoc = serde_json::from_slice(&bytes).map_err(|e| json_error(path, e))?;
    doc.rooms
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if r.len() < 3 {
                return Err(invalid(path, format!("room {i} has {} vertices; at least 3 required", r.len())));
            }
            let pts = r.iter().map(|&[x, y]| Point2::new(x, y)).collect();
            Polygon::new(pts).map_err(|e| invalid(path, format!("room {i}: {e}")))
        })
        .collect()
}

pub fn load_gt(path: &Path) -> Result<GroundTruthPlan> {
    GroundTruthPlan::new(load_plan(path)?)
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable document");
    s.push('\n');
    s
}

/// Paths of the files of a scene directory.
#[derive(Debug, Clone)]
pub struct ScenePaths {
    pub density: PathBuf,
    pub meta: PathBuf,
    pub segments: PathBuf,
    pub gt: PathBuf,
}

impl ScenePaths {
    pub fn in_dir(dir: &Path) -> Self {
        ScenePaths {
            density: dir.join(DENSITY_FILE),
            meta: dir.join(DENSITY_META_FILE),
            segments: dir.join(SEGMENTS_FILE),
            gt: dir.join(GT_FILE),
        }
    }
}

pub fn save_scene(scene: &Scene, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = ScenePaths::in_dir(dir);
    save_density(&scene.density, &p.density, &p.meta)?;
    save_segments(&scene.segments, scene.density.dims(), &p.segments)?;
    if let Some(gt) = &scene.gt {
        save_plan(&gt.rooms, &p.gt)?;
    }
    Ok(())
}

/// Loads a scene; `gt.json` is optional.
pub fn load_scene(dir: &Path) -> Result<Scene> {
    load_scene_from(&ScenePaths::in_dir(dir))
}

pub fn load_scene_from(p: &ScenePaths) -> Result<Scene> {
    let density = load_density(&p.density, Some(&p.meta))?;
    let segments = load_segments(&p.segments, density.dims())?;
    let gt = if p.gt.exists() { Some(load_gt(&p.gt)?) } else { None };
    Ok(Scene { density, segments, gt })
}
