//! The scored objective and its gradient.
//!
//! `L(P) = -lambda_f f(D, P) + lambda_ang L_ang + lambda_glob L_glob + lambda_0 L_0`
//!
//! * `L_ang`: mean over rooms of the mean negative log angle prior.
//! * `L_glob`: total variation of the summed soft renders.
//! * `L_0`: mean over rooms of the MSE between soft render and source mask,
//!   taken over the room's evaluation window.
//!
//! Every term is evaluated on soft renders, so the value is a smooth function
//! of the vertex coordinates and [`Objective::evaluate`] returns exact
//! gradients of the same value it reports.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{interior_angle, GridDims, Point2, Polygon, Rect, SegmentMask};
use crate::par::Execution;
use crate::proposals::ProposalSet;
use crate::raster::{self, SoftPatch};
use crate::scene::{DensityMap, GroundTruthPlan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    pub lambda_f: f64,
    pub lambda_ang: f64,
    pub lambda_glob: f64,
    pub lambda_0: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            lambda_f: 1.0,
            lambda_ang: 0.05,
            lambda_glob: 1e-4,
            lambda_0: 0.5,
        }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_f", self.lambda_f),
            ("lambda_ang", self.lambda_ang),
            ("lambda_glob", self.lambda_glob),
            ("lambda_0", self.lambda_0),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Spec(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn zero() -> Self {
        Weights {
            lambda_f: 0.0,
            lambda_ang: 0.0,
            lambda_glob: 0.0,
            lambda_0: 0.0,
        }
    }
}

fn gaussian(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
}

/// Mixture prior over corner angles in `(-pi, pi]`.
///
/// Gaussians in cosine space peak at right angles (`+-pi/2`, on top of a
/// uniform plateau `eta`) and fall off toward flat and zero angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnglePriorParams {
    pub sigma1: f64,
    pub sigma2: f64,
    pub eta: f64,
    pub z: f64,
}

impl Default for AnglePriorParams {
    fn default() -> Self {
        AnglePriorParams::new(0.1, 0.08)
    }
}

const PRIOR_SAMPLES: usize = 100_000;

impl AnglePriorParams {
    pub fn new(sigma1: f64, sigma2: f64) -> Self {
        let c6 = (PI / 6.0).cos();
        let mut p = AnglePriorParams {
            sigma1,
            sigma2,
            eta: gaussian(c6, c6, sigma1),
            z: 1.0,
        };
        p.z = trapezoid(|a| p.unnormalized(a).0, -PI, PI, PRIOR_SAMPLES);
        p
    }

    /// Unnormalized density and its derivative in `alpha`.
    fn unnormalized(&self, alpha: f64) -> (f64, f64) {
        let (c6, c56) = ((PI / 6.0).cos(), (5.0 * PI / 6.0).cos());
        let (mu, sigma, base) = if alpha > -PI / 6.0 && alpha <= PI / 6.0 {
            (c6, self.sigma1, 0.0)
        } else if alpha > PI / 6.0 && alpha <= 5.0 * PI / 6.0 {
            (0.0, self.sigma2, self.eta)
        } else if alpha > 5.0 * PI / 6.0 || alpha <= -5.0 * PI / 6.0 {
            (c56, self.sigma1, 0.0)
        } else {
            (0.0, self.sigma2, self.eta)
        };
        let (c, s) = (alpha.cos(), alpha.sin());
        let g = gaussian(c, mu, sigma);
        // dG/dalpha = G * (-(cos - mu) / sigma^2) * (-sin).
        (base + g, g * (c - mu) * s / (sigma * sigma))
    }

    pub fn pdf(&self, alpha: f64) -> f64 {
        self.unnormalized(alpha).0 / self.z
    }

    /// `-log p(alpha)` and its derivative.
    pub fn neg_log(&self, alpha: f64) -> (f64, f64) {
        let (u, du) = self.unnormalized(alpha);
        ((self.z / u).ln(), -du / u)
    }
}

/// Composite trapezoid rule with `n` intervals.
pub fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = 0.5 * (f(a) + f(b));
    for i in 1..n {
        acc += f(a + h * i as f64);
    }
    acc * h
}

/// Maps an interior angle in `[0, 2pi)` to the prior's `(-pi, pi]` range.
pub fn wrap_interior(theta: f64) -> f64 {
    if theta > PI {
        theta - 2.0 * PI
    } else {
        theta
    }
}

pub fn angle_prior_pdf(alpha: f64, params: &AnglePriorParams) -> f64 {
    params.pdf(alpha)
}

/// One selected room of a solution.
#[derive(Debug, Clone)]
pub struct SelectedRoom {
    pub segment: usize,
    pub proposal: usize,
    pub polygon: Polygon,
    pub mask: Arc<SegmentMask>,
    /// Soft evaluation window: the segment's box grown by the dilation margin.
    pub window: Rect,
}

/// One choice (proposal index or skip) per segment, plus the current
/// geometry of the chosen proposals.
#[derive(Debug, Clone)]
pub struct Solution {
    pub choices: Vec<Option<usize>>,
    pub rooms: Vec<SelectedRoom>,
}

impl Solution {
    pub fn from_choices(set: &ProposalSet, choices: &[Option<usize>]) -> Result<Self> {
        if choices.len() != set.len() {
            return Err(Error::Contract(format!(
                "{} choices for {} segments",
                choices.len(),
                set.len()
            )));
        }
        let mut rooms = Vec::new();
        for (seg, choice) in choices.iter().enumerate() {
            if let Some(k) = *choice {
                let polygon = set.proposals(seg).get(k).cloned().ok_or_else(|| {
                    Error::Contract(format!("segment {seg} has no proposal {k}"))
                })?;
                rooms.push(SelectedRoom {
                    segment: seg,
                    proposal: k,
                    polygon,
                    mask: set.segments()[seg].mask.clone(),
                    window: set.window(seg),
                });
            }
        }
        Ok(Solution {
            choices: choices.to_vec(),
            rooms,
        })
    }

    /// Rooms given directly, each with its own mask; used for ground-truth
    /// comparisons and tests.
    pub fn from_rooms(rooms: Vec<(Polygon, Arc<SegmentMask>)>) -> Self {
        let n = rooms.len();
        let rooms = rooms
            .into_iter()
            .enumerate()
            .map(|(i, (polygon, mask))| SelectedRoom {
                segment: i,
                proposal: 0,
                window: mask.bbox().dilate(raster::WINDOW_DILATION, mask.dims()),
                polygon,
                mask,
            })
            .collect();
        Solution {
            choices: vec![Some(0); n],
            rooms,
        }
    }

    pub fn empty(segments: usize) -> Self {
        Solution {
            choices: vec![None; segments],
            rooms: Vec::new(),
        }
    }

    pub fn polygons(&self) -> Vec<Polygon> {
        self.rooms.iter().map(|r| r.polygon.clone()).collect()
    }

    pub(crate) fn views(&self) -> Vec<RoomView<'_>> {
        self.rooms
            .iter()
            .map(|r| RoomView {
                vertices: r.polygon.vertices(),
                mask: &r.mask,
                window: r.window,
            })
            .collect()
    }
}

/// Borrowed geometry of one room during evaluation; vertices need not form
/// a valid polygon (refinement iterates are checked only at the end).
#[derive(Debug, Clone, Copy)]
pub(crate) struct RoomView<'a> {
    pub vertices: &'a [Point2],
    pub mask: &'a SegmentMask,
    pub window: Rect,
}

/// Learned or analytic fitness between a density map and a set of rooms.
pub trait FitnessScorer: Send + Sync {
    fn name(&self) -> &str;

    /// Hard-rendered score in `[0, 1]`.
    fn score(&self, density: &DensityMap, polygons: &[&[Point2]]) -> Result<f64>;

    fn is_differentiable(&self) -> bool {
        false
    }

    /// Score computed from soft renders. When `grads` is given, it receives
    /// the derivative of the score with respect to every window pixel of
    /// every patch.
    fn soft_score(
        &self,
        _density: &DensityMap,
        _patches: &[SoftPatch],
        _grads: Option<&mut [Vec<f64>]>,
    ) -> Result<f64> {
        Err(Error::Contract(format!("scorer {} is not differentiable", self.name())))
    }
}

/// IoU between the union of the rooms and a fixed target region.
#[derive(Debug, Clone)]
pub struct MaskIouScorer {
    name: String,
    dims: GridDims,
    target: Vec<bool>,
    target_area: usize,
}

impl MaskIouScorer {
    pub fn new(name: impl Into<String>, dims: GridDims, target: Vec<bool>) -> Self {
        let target_area = target.iter().filter(|&&t| t).count();
        MaskIouScorer {
            name: name.into(),
            dims,
            target,
            target_area,
        }
    }

    pub fn target(&self) -> &[bool] {
        &self.target
    }
}

impl FitnessScorer for MaskIouScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, _density: &DensityMap, polygons: &[&[Point2]]) -> Result<f64> {
        let mut cov = vec![0.0; self.dims.len()];
        for v in polygons {
            raster::fill_hard(v, self.dims, self.dims.full_rect(), 1.0, &mut cov);
        }
        let (mut inter, mut uni) = (0usize, 0usize);
        for (&c, &t) in cov.iter().zip(&self.target) {
            let c = c > 0.0;
            inter += (c && t) as usize;
            uni += (c || t) as usize;
        }
        Ok(if uni == 0 { 0.0 } else { inter as f64 / uni as f64 })
    }

    fn is_differentiable(&self) -> bool {
        true
    }

    fn soft_score(
        &self,
        _density: &DensityMap,
        patches: &[SoftPatch],
        grads: Option<&mut [Vec<f64>]>,
    ) -> Result<f64> {
        let w = self.dims.width;
        let region = patches
            .iter()
            .fold(Rect::new(0, 0, 0, 0), |r, p| r.union(&p.window));
        // Soft union U = 1 - prod(1 - R_i), accumulated window by window.
        let rw = region.width();
        let mut keep = vec![1.0; rw * region.height()];
        for p in patches {
            let pw = p.window.width();
            for (r, row) in p.values.chunks_exact(pw.max(1)).enumerate() {
                let o = (p.window.y0 + r - region.y0) * rw + (p.window.x0 - region.x0);
                for (k, v) in keep[o..o + pw].iter_mut().zip(row) {
                    *k *= 1.0 - v;
                }
            }
        }
        let (mut inter, mut usum) = (0.0, 0.0);
        for y in region.y0..region.y1 {
            let krow = &keep[(y - region.y0) * rw..(y - region.y0 + 1) * rw];
            let trow = &self.target[y * w + region.x0..y * w + region.x1];
            for (&k, &t) in krow.iter().zip(trow) {
                let u = 1.0 - k;
                usum += u;
                if t {
                    inter += u;
                }
            }
        }
        let total = usum + self.target_area as f64 - inter;
        let Some(g) = grads else {
            return Ok(if total <= 0.0 { 0.0 } else { inter / total });
        };
        for (gi, p) in g.iter_mut().zip(patches) {
            gi.clear();
            gi.resize(p.values.len(), 0.0);
        }
        if total <= 0.0 {
            return Ok(0.0);
        }
        let iou = inter / total;
        let (du_in, du_out) = (1.0 / total, -iou / total);
        for (i, (gi, p)) in g.iter_mut().zip(patches).enumerate() {
            let pw = p.window.width();
            for y in p.window.y0..p.window.y1 {
                for x in p.window.x0..p.window.x1 {
                    let li = (y - p.window.y0) * pw + (x - p.window.x0);
                    let du = if self.target[y * w + x] { du_in } else { du_out };
                    let own = 1.0 - p.values[li];
                    // prod over the other rooms; explicit when this factor vanishes
                    let others = if own != 0.0 {
                        keep[(y - region.y0) * rw + (x - region.x0)] / own
                    } else {
                        patches
                            .iter()
                            .enumerate()
                            .filter(|&(j, _)| j != i)
                            .map(|(_, q)| 1.0 - q.value_at(x, y))
                            .product()
                    };
                    gi[li] = du * others;
                }
            }
        }
        Ok(iou)
    }
}

/// Scorer returning the IoU against the ground-truth room union.
pub fn oracle_iou_scorer(gt: &GroundTruthPlan, dims: GridDims) -> MaskIouScorer {
    let mut cov = vec![0.0; dims.len()];
    for r in &gt.rooms {
        raster::fill_hard(r.vertices(), dims, dims.full_rect(), 1.0, &mut cov);
    }
    MaskIouScorer::new("oracle", dims, cov.iter().map(|&c| c > 0.0).collect())
}

/// Density threshold used to derive occupancy.
pub const OCCUPANCY_THRESHOLD: f64 = 0.05;
/// Disc radius of the morphological closing applied to the thresholded map.
pub const CLOSING_RADIUS: usize = 3;

/// Scorer returning the IoU against the occupied region of the density map:
/// threshold, morphological closing, hole filling.
pub fn density_coverage_scorer(density: &DensityMap, threshold: f64) -> Result<MaskIouScorer> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Spec(format!("threshold {threshold} must be in (0, 1)")));
    }
    let occ = occupancy(density, threshold);
    if !occ.iter().any(|&o| o) {
        log::warn!("density map has no pixels above {threshold}; coverage scores will be 0");
    }
    Ok(MaskIouScorer::new("density-coverage", density.dims(), occ))
}

/// Thresholded, closed and hole-filled occupancy of a density map.
pub fn occupancy(density: &DensityMap, threshold: f64) -> Vec<bool> {
    let dims = density.dims();
    let base: Vec<bool> = density.grid().values().iter().map(|&v| v > threshold).collect();
    let closed = erode(&dilate(&base, dims, CLOSING_RADIUS), dims, CLOSING_RADIUS);
    fill_holes(&closed, dims)
}

fn disc(r: usize) -> Vec<(isize, isize)> {
    let r = r as isize;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

fn dilate(m: &[bool], dims: GridDims, r: usize) -> Vec<bool> {
    let (w, h) = (dims.width as isize, dims.height as isize);
    let k = disc(r);
    let mut out = vec![false; m.len()];
    for y in 0..h {
        for x in 0..w {
            if !m[(y * w + x) as usize] {
                continue;
            }
            for &(dx, dy) in &k {
                let (nx, ny) = (x + dx, y + dy);
                if nx >= 0 && ny >= 0 && nx < w && ny < h {
                    out[(ny * w + nx) as usize] = true;
                }
            }
        }
    }
    out
}

/// Erosion with the disc; pixels beyond the grid count as background.
fn erode(m: &[bool], dims: GridDims, r: usize) -> Vec<bool> {
    let inv: Vec<bool> = m.iter().map(|&b| !b).collect();
    let (w, h) = (dims.width as isize, dims.height as isize);
    let k = disc(r);
    let mut out = vec![false; m.len()];
    for y in 0..h {
        for x in 0..w {
            out[(y * w + x) as usize] = k.iter().all(|&(dx, dy)| {
                let (nx, ny) = (x + dx, y + dy);
                nx >= 0 && ny >= 0 && nx < w && ny < h && !inv[(ny * w + nx) as usize]
            });
        }
    }
    out
}

/// Marks as foreground every background pixel not 4-connected to the border.
pub(crate) fn fill_holes(m: &[bool], dims: GridDims) -> Vec<bool> {
    let (w, h) = (dims.width, dims.height);
    let mut outside = vec![false; m.len()];
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if (x == 0 || y == 0 || x + 1 == w || y + 1 == h) && !m[y * w + x] {
                outside[y * w + x] = true;
                queue.push_back((x, y));
            }
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        let mut visit = |nx: usize, ny: usize| {
            let i = ny * w + nx;
            if !m[i] && !outside[i] {
                outside[i] = true;
                queue.push_back((nx, ny));
            }
        };
        if x > 0 {
            visit(x - 1, y);
        }
        if x + 1 < w {
            visit(x + 1, y);
        }
        if y > 0 {
            visit(x, y - 1);
        }
        if y + 1 < h {
            visit(x, y + 1);
        }
    }
    outside.iter().map(|&o| !o).collect()
}

/// Raw (unweighted) values of the objective's terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Terms {
    pub fitness: f64,
    pub ang: f64,
    pub glob: f64,
    pub zero: f64,
    /// Weighted total `L(P)`.
    pub total: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub terms: Terms,
    /// Per room, per vertex gradient of the total.
    pub grads: Vec<Vec<Point2>>,
}

/// Objective bound to one scene.
/// Sharpness the objective renders with, in pixel units. Far below the
/// rasterizer's default: at c = 1000 every pixel center near an edge adds a
/// near-delta spike to the vertex gradient and Adam goes nowhere, while here
/// the transition is still a small fraction of a pixel on room-sized edges.
pub const OBJECTIVE_SHARPNESS: f64 = 0.2;

#[derive(Clone, Copy)]
pub struct Objective<'a> {
    pub density: &'a DensityMap,
    pub weights: Weights,
    pub scorer: &'a dyn FitnessScorer,
    pub prior: AnglePriorParams,
    pub sharpness: f64,
    /// Treat a non-differentiable scorer as constant when differentiating.
    pub freeze_fitness: bool,
    pub exec: Execution,
}

impl<'a> Objective<'a> {
    pub fn new(density: &'a DensityMap, weights: Weights, scorer: &'a dyn FitnessScorer) -> Self {
        Objective {
            density,
            weights,
            scorer,
            prior: AnglePriorParams::default(),
            sharpness: OBJECTIVE_SHARPNESS,
            freeze_fitness: false,
            exec: Execution::default(),
        }
    }

    pub fn dims(&self) -> GridDims {
        self.density.dims()
    }

    pub fn terms(&self, s: &Solution) -> Result<Terms> {
        Ok(self.evaluate_views(&s.views(), false)?.terms)
    }

    pub fn value(&self, s: &Solution) -> Result<f64> {
        Ok(self.terms(s)?.total)
    }

    /// Objective terms and the gradient for every vertex of every room.
    pub fn gradient(&self, s: &Solution) -> Result<(Terms, Vec<Vec<Point2>>)> {
        let e = self.evaluate_views(&s.views(), true)?;
        Ok((e.terms, e.grads))
    }

    pub(crate) fn evaluate_views(&self, rooms: &[RoomView<'_>], want_grad: bool) -> Result<Evaluation> {
        let w = self.weights;
        let fitness_grad = want_grad && w.lambda_f > 0.0;
        if fitness_grad && !self.scorer.is_differentiable() && !self.freeze_fitness {
            return Err(Error::Contract(format!(
                "scorer {} is not differentiable; freeze it or set lambda_f = 0",
                self.scorer.name()
            )));
        }
        let dims = self.dims();
        let n = rooms.len();
        let mut grads: Vec<Vec<Point2>> = rooms
            .iter()
            .map(|r| vec![Point2::default(); r.vertices.len()])
            .collect();

        let ang = angle_loss(rooms, &self.prior, want_grad.then_some(&mut grads[..]), w.lambda_ang);
        if n == 0 {
            let fitness = if self.scorer.is_differentiable() {
                self.scorer.soft_score(self.density, &[], None)?
            } else {
                self.scorer.score(self.density, &[])?
            };
            let terms = Terms {
                fitness,
                ang: 0.0,
                glob: 0.0,
                zero: 0.0,
                total: -w.lambda_f * fitness,
            };
            return Ok(Evaluation { terms, grads });
        }

        let patches: Vec<SoftPatch> = rooms
            .iter()
            .map(|r| raster::render_soft_patch(r.vertices, r.window, self.sharpness, false, self.exec))
            .collect();
        let mut upstream: Vec<Vec<f64>> = patches.iter().map(|p| vec![0.0; p.values.len()]).collect();

        // Global term: TV of the summed renders. The sum vanishes outside
        // the windows, so a one-pixel ring around their union is enough.
        let local = patches
            .iter()
            .fold(Rect::new(0, 0, 0, 0), |r, p| r.union(&p.window))
            .dilate(1, dims);
        let lw = local.width();
        let mut sum = vec![0.0; lw * local.height()];
        for p in &patches {
            let pw = p.window.width();
            for (r, row) in p.values.chunks_exact(pw.max(1)).enumerate() {
                let o = (p.window.y0 + r - local.y0) * lw + (p.window.x0 - local.x0);
                for (a, v) in sum[o..o + pw].iter_mut().zip(row) {
                    *a += v;
                }
            }
        }
        let (glob, tv_grad) = raster::total_variation_grad(&sum, GridDims::new(lw, local.height()));

        // Drift term.
        let mut zero = 0.0;
        for (i, (p, r)) in patches.iter().zip(rooms).enumerate() {
            let pw = p.window.width();
            let count = p.values.len().max(1) as f64;
            let mut se = 0.0;
            for y in p.window.y0..p.window.y1 {
                for x in p.window.x0..p.window.x1 {
                    let li = (y - p.window.y0) * pw + (x - p.window.x0);
                    let diff = p.values[li] - if r.mask.get(x, y) { 1.0 } else { 0.0 };
                    se += diff * diff;
                    if want_grad {
                        upstream[i][li] += w.lambda_0 * 2.0 * diff / (count * n as f64)
                            + w.lambda_glob * tv_grad[(y - local.y0) * lw + (x - local.x0)];
                    }
                }
            }
            zero += se / count;
        }
        zero /= n as f64;

        let fitness = if self.scorer.is_differentiable() {
            if fitness_grad {
                let mut fg: Vec<Vec<f64>> = vec![Vec::new(); n];
                let f = self.scorer.soft_score(self.density, &patches, Some(&mut fg))?;
                for (u, g) in upstream.iter_mut().zip(&fg) {
                    for (a, b) in u.iter_mut().zip(g) {
                        *a -= w.lambda_f * b;
                    }
                }
                f
            } else {
                self.scorer.soft_score(self.density, &patches, None)?
            }
        } else {
            let polys: Vec<&[Point2]> = rooms.iter().map(|r| r.vertices).collect();
            self.scorer.score(self.density, &polys)?
        };

        if want_grad {
            for ((p, u), g) in patches.iter().zip(&upstream).zip(grads.iter_mut()) {
                p.backward(u, g);
            }
        }

        let total = -w.lambda_f * fitness + w.lambda_ang * ang + w.lambda_glob * glob + w.lambda_0 * zero;
        Ok(Evaluation {
            terms: Terms {
                fitness,
                ang,
                glob,
                zero,
                total,
            },
            grads,
        })
    }
}

/// Mean over rooms of the mean `-log p` of their corner angles. When
/// `grads` is given, `weight * dL_ang` is accumulated into it.
fn angle_loss(
    rooms: &[RoomView<'_>],
    prior: &AnglePriorParams,
    mut grads: Option<&mut [Vec<Point2>]>,
    weight: f64,
) -> f64 {
    if rooms.is_empty() {
        return 0.0;
    }
    let np = rooms.len() as f64;
    let mut total = 0.0;
    for (ri, r) in rooms.iter().enumerate() {
        let v = r.vertices;
        let n = v.len();
        let scale = 1.0 / (np * n as f64);
        let mut acc = 0.0;
        for i in 0..n {
            let (ip, inx) = ((i + n - 1) % n, (i + 1) % n);
            let (u, c, w) = (v[ip], v[i], v[inx]);
            let alpha = wrap_interior(interior_angle(u, c, w));
            let (nl, dnl) = prior.neg_log(alpha);
            acc += nl;
            if let Some(g) = grads.as_deref_mut() {
                // alpha = pi - atan2(C, D), C = e1 x e2, D = e1 . e2.
                let e1 = c - u;
                let e2 = w - c;
                let cr = e1.cross(e2);
                let dt = e1.dot(e2);
                let den = cr * cr + dt * dt;
                if den == 0.0 {
                    continue;
                }
                let dc_de1 = Point2::new(e2.y, -e2.x);
                let dc_de2 = Point2::new(-e1.y, e1.x);
                let dtau_de1 = (dc_de1 * dt - e2 * cr) * (1.0 / den);
                let dtau_de2 = (dc_de2 * dt - e1 * cr) * (1.0 / den);
                // dalpha = -dtau, so with de1/du = -I, de1/dc = I, de2/dc = -I
                // and de2/dw = I the two minus signs cancel on u.
                let k = dnl * weight * scale;
                let gr = &mut g[ri];
                gr[ip] = gr[ip] + dtau_de1 * k;
                gr[i] = gr[i] + (dtau_de2 - dtau_de1) * k;
                gr[inx] = gr[inx] - dtau_de2 * k;
            }
        }
        total += acc * scale;
    }
    total
}

pub fn loss_ang(s: &Solution, params: &AnglePriorParams) -> f64 {
    angle_loss(&s.views(), params, None, 0.0)
}

pub fn loss_glob(s: &Solution, dims: GridDims) -> f64 {
    let mut sum = vec![0.0; dims.len()];
    for r in &s.rooms {
        let p = raster::render_soft_patch(r.polygon.vertices(), r.window, OBJECTIVE_SHARPNESS, false, Execution::default());
        for y in p.window.y0..p.window.y1 {
            for x in p.window.x0..p.window.x1 {
                sum[y * dims.width + x] += p.value_at(x, y);
            }
        }
    }
    raster::total_variation_grad(&sum, dims).0
}

pub fn loss_zero(s: &Solution) -> f64 {
    if s.rooms.is_empty() {
        return 0.0;
    }
    let mut acc = 0.0;
    for r in &s.rooms {
        let p = raster::render_soft_patch(r.polygon.vertices(), r.window, OBJECTIVE_SHARPNESS, false, Execution::default());
        let mut se = 0.0;
        for y in p.window.y0..p.window.y1 {
            for x in p.window.x0..p.window.x1 {
                let d = p.value_at(x, y) - if r.mask.get(x, y) { 1.0 } else { 0.0 };
                se += d * d;
            }
        }
        acc += se / p.values.len().max(1) as f64;
    }
    acc / s.rooms.len() as f64
}

/// `L(P)`; the tree search maximizes `-L(P)`.
pub fn objective(s: &Solution, d: &DensityMap, w: Weights, f: &dyn FitnessScorer) -> Result<f64> {
    Objective::new(d, w, f).value(s)
}

pub fn objective_grad(
    s: &Solution,
    d: &DensityMap,
    w: Weights,
    f: &dyn FitnessScorer,
) -> Result<Vec<Vec<Point2>>> {
    Ok(Objective::new(d, w, f).gradient(s)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::DensityMap;

    fn dims() -> GridDims {
        GridDims::new(64, 64)
    }

    fn room(x0: f64, y0: f64, x1: f64, y1: f64) -> (Polygon, Arc<SegmentMask>) {
        let p = Polygon::rect(x0, y0, x1, y1).unwrap();
        let m = SegmentMask::from_polygon(&p, dims()).unwrap();
        (p, Arc::new(m))
    }

    fn blank_density() -> DensityMap {
        DensityMap::blank(dims())
    }

    #[test]
    fn prior_integrates_to_one() {
        let p = AnglePriorParams::default();
        let integral = trapezoid(|a| p.pdf(a), -PI, PI, PRIOR_SAMPLES);
        assert!((integral - 1.0).abs() < 1e-3, "{integral}");
    }

    #[test]
    fn prior_shape() {
        let p = AnglePriorParams::default();
        let (lo, hi) = (PI / 6.0, 5.0 * PI / 6.0);
        let steps = ((hi - lo) / 1e-4) as usize;
        let best = (1..=steps)
            .map(|i| lo + i as f64 * 1e-4)
            .max_by(|a, b| p.pdf(*a).total_cmp(&p.pdf(*b)))
            .unwrap();
        assert!((best - PI / 2.0).abs() < 1e-3);
        assert!(p.pdf(PI / 2.0) > p.pdf(0.01));
        assert!(p.pdf(PI / 2.0) > p.pdf(PI - 0.01));
        let (l, r) = (p.pdf(PI / 6.0 - 1e-6), p.pdf(PI / 6.0 + 1e-6));
        assert!((l - r).abs() < 1e-3 * p.pdf(PI / 6.0));
        // Reflex corners map onto the -pi/2 peak.
        assert!((p.pdf(wrap_interior(1.5 * PI)) - p.pdf(PI / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn prior_derivative_matches_finite_differences() {
        let p = AnglePriorParams::default();
        for &a in &[0.1, 0.7, 1.3, 1.57, 2.0, 2.8, -0.3, -1.2, -2.9] {
            let h = 1e-6;
            let fd = (p.neg_log(a + h).0 - p.neg_log(a - h).0) / (2.0 * h);
            let an = p.neg_log(a).1;
            assert!((fd - an).abs() < 1e-4 * an.abs().max(1.0), "{a}: {fd} vs {an}");
        }
    }

    #[test]
    fn angle_loss_cases() {
        let p = AnglePriorParams::default();
        let one = Solution::from_rooms(vec![room(10., 10., 30., 25.)]);
        let min = p.neg_log(PI / 2.0).0;
        assert!((loss_ang(&one, &p) - min).abs() < 1e-12);

        let bent = Polygon::from_coords(&[(10., 10.), (30., 10.), (30., 25.), (10. + 15. * (10f64.to_radians()).tan(), 25.)])
            .unwrap();
        let m = one.rooms[0].mask.clone();
        let bent = Solution::from_rooms(vec![(bent, m)]);
        assert!(loss_ang(&bent, &p) > loss_ang(&one, &p));

        let two = Solution::from_rooms(vec![room(10., 10., 30., 25.), room(10., 10., 30., 25.)]);
        assert!((loss_ang(&two, &p) - loss_ang(&one, &p)).abs() < 1e-12);
    }

    #[test]
    fn glob_and_zero_losses() {
        let single = Solution::from_rooms(vec![room(10., 10., 30., 25.)]);
        let tv = loss_glob(&single, dims());
        assert!((tv / 70.0 - 1.0).abs() < 0.02, "{tv}");
        assert_eq!(loss_glob(&Solution::empty(0), dims()), 0.0);

        let a = room(10., 10., 25., 30.);
        let over = Solution::from_rooms(vec![a.clone(), room(20., 10., 35., 30.)]);
        let abut = Solution::from_rooms(vec![a, room(25., 10., 40., 30.)]);
        assert!(loss_glob(&over, dims()) > loss_glob(&abut, dims()));

        assert!(loss_zero(&single) < 0.02);
        assert_eq!(loss_zero(&Solution::empty(3)), 0.0);
        let (p, m) = room(20., 20., 40., 40.);
        let shifted = |d: f64| Solution::from_rooms(vec![(p.translated(Point2::new(d, 0.0)), m.clone())]);
        assert!(loss_zero(&shifted(10.0)) > loss_zero(&shifted(2.0)));
        assert!(loss_zero(&shifted(2.0)) > 0.0);
    }

    #[test]
    fn objective_reductions() {
        let d = blank_density();
        let gt = GroundTruthPlan::new(vec![Polygon::rect(10., 10., 30., 25.).unwrap()]).unwrap();
        let f = oracle_iou_scorer(&gt, dims());
        let s = Solution::from_rooms(vec![room(10., 10., 30., 25.)]);
        assert_eq!(objective(&s, &d, Weights::zero(), &f).unwrap(), 0.0);

        let only_f = Weights {
            lambda_f: 1.0,
            ..Weights::zero()
        };
        let o = Objective::new(&d, only_f, &f);
        let t = o.terms(&s).unwrap();
        assert_eq!(t.total, -t.fitness);
        assert!(objective(&s, &d, Weights::default(), &f).unwrap()
            < objective(&Solution::empty(1), &d, Weights::default(), &f).unwrap());
    }

    #[test]
    fn objective_is_linear_in_weights() {
        let d = blank_density();
        let gt = GroundTruthPlan::new(vec![Polygon::rect(10., 10., 30., 25.).unwrap()]).unwrap();
        let f = oracle_iou_scorer(&gt, dims());
        let s = Solution::from_rooms(vec![room(11., 9., 31., 26.)]);
        let w = Weights::default();
        let w2 = Weights {
            lambda_ang: 2.0 * w.lambda_ang,
            ..w
        };
        let a = objective(&s, &d, w, &f).unwrap();
        let b = objective(&s, &d, w2, &f).unwrap();
        let la = loss_ang(&s, &AnglePriorParams::default());
        assert!((b - a - w.lambda_ang * la).abs() < 1e-12);
    }

    #[test]
    fn oracle_scorer_cases() {
        let d = blank_density();
        let r1 = Polygon::rect(10., 10., 30., 30.).unwrap();
        let r2 = Polygon::rect(30., 10., 50., 30.).unwrap();
        let gt = GroundTruthPlan::new(vec![r1.clone(), r2.clone()]).unwrap();
        let f = oracle_iou_scorer(&gt, dims());
        assert_eq!(f.score(&d, &[r1.vertices(), r2.vertices()]).unwrap(), 1.0);
        assert_eq!(f.score(&d, &[]).unwrap(), 0.0);
        assert_eq!(f.score(&d, &[r1.vertices()]).unwrap(), 0.5);
    }

    #[test]
    fn density_coverage_cases() {
        let dims = dims();
        // Walls of a 30x20 rectangle, faint interior.
        let mut g = vec![0.0; dims.len()];
        for y in 10..30 {
            for x in 10..40 {
                let wall = x <= 11 || x >= 38 || y <= 11 || y >= 28;
                g[y * 64 + x] = if wall { 0.9 } else if (x + y) % 3 == 0 { 0.1 } else { 0.0 };
            }
        }
        let d = DensityMap::from_grid(crate::raster::RasterGrid::from_values(dims, g).unwrap()).unwrap();
        let f = density_coverage_scorer(&d, OCCUPANCY_THRESHOLD).unwrap();
        let tile = Polygon::rect(10., 10., 40., 30.).unwrap();
        assert!(f.score(&d, &[tile.vertices()]).unwrap() >= 0.95);
        assert_eq!(f.score(&d, &[]).unwrap(), 0.0);
        let double = Polygon::rect(10., 10., 40., 50.).unwrap();
        assert!(f.score(&d, &[double.vertices()]).unwrap() <= 0.5);

        let empty = density_coverage_scorer(&blank_density(), 0.05).unwrap();
        assert_eq!(empty.score(&d, &[tile.vertices()]).unwrap(), 0.0);
    }

    /// Hard-only wrapper used to exercise the frozen-fitness path.
    struct Frozen(MaskIouScorer);

    impl FitnessScorer for Frozen {
        fn name(&self) -> &str {
            "frozen"
        }
        fn score(&self, d: &DensityMap, p: &[&[Point2]]) -> Result<f64> {
            self.0.score(d, p)
        }
    }

    #[test]
    fn non_differentiable_scorer_needs_freezing() {
        let d = blank_density();
        let gt = GroundTruthPlan::new(vec![Polygon::rect(10., 10., 30., 25.).unwrap()]).unwrap();
        let f = Frozen(oracle_iou_scorer(&gt, dims()));
        let s = Solution::from_rooms(vec![room(10., 10., 30., 25.)]);
        let mut o = Objective::new(&d, Weights::default(), &f);
        assert!(matches!(o.gradient(&s), Err(Error::Contract(_))));
        o.freeze_fitness = true;
        assert!(o.gradient(&s).is_ok());
        o.weights.lambda_f = 0.0;
        o.freeze_fitness = false;
        assert!(o.gradient(&s).is_ok());
    }

    #[test]
    fn exact_room_is_near_stationary() {
        let d = blank_density();
        let gt = GroundTruthPlan::new(vec![Polygon::rect(10., 10., 30., 25.).unwrap()]).unwrap();
        let f = oracle_iou_scorer(&gt, dims());
        let s = Solution::from_rooms(vec![room(10., 10., 30., 25.)]);
        let g = objective_grad(&s, &d, Weights::default(), &f).unwrap();
        for v in &g[0] {
            assert!(v.x.abs() < 5e-3 && v.y.abs() < 5e-3, "{v:?}");
        }
    }

    #[test]
    fn tv_alone_shrinks_an_isolated_room() {
        let d = blank_density();
        let f = MaskIouScorer::new("none", dims(), vec![false; dims().len()]);
        let w = Weights {
            lambda_glob: 1.0,
            ..Weights::zero()
        };
        let s = Solution::from_rooms(vec![room(10.3, 10.3, 30.3, 25.3)]);
        let g = objective_grad(&s, &d, w, &f).unwrap();
        let center = Point2::new(20.3, 17.8);
        // Moving each corner outward increases TV, so the gradient points out.
        let outward: f64 = s.rooms[0]
            .polygon
            .vertices()
            .iter()
            .zip(&g[0])
            .map(|(&v, &gv)| (v - center).dot(gv))
            .sum();
        assert!(outward > 0.0);
    }
}
