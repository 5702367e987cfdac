//! Hard and differentiable polygon rendering.
//!
//! Both renderers evaluate the winding number at pixel centers. The hard
//! winding number sums `sign(det(a, b)) * angle(a, b)` over the edges, where
//! `a` and `b` are the edge endpoints relative to the sample point. The soft
//! variant replaces `sign(x)` with `c x / (1 + |c x|)`, which makes every
//! pixel value a smooth function of the vertex coordinates.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::{point_segment_dist, GridDims, Point2, Polygon, Rect};
use crate::par::{self, Execution};

/// Sharpness of the soft sign.
pub const DEFAULT_SHARPNESS: f64 = 1000.0;
/// Extra pixels around a segment's bounding box evaluated by the soft renderer.
pub const WINDOW_DILATION: usize = 8;
/// Clamp applied to the cosine before `acos` in the hard renderer.
pub const COS_CLAMP: f64 = 1.0 - 1e-7;
/// Displacement applied to samples that coincide with a vertex.
pub const VERTEX_NUDGE: f64 = 1e-4;
const BOUNDARY_TOL: f64 = 1e-9;

/// Row-major scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    dims: GridDims,
    values: Vec<f64>,
}

impl RasterGrid {
    pub fn zeros(dims: GridDims) -> Self {
        RasterGrid {
            dims,
            values: vec![0.0; dims.len()],
        }
    }

    pub fn from_values(dims: GridDims, values: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || values.len() != dims.len() {
            return Err(Error::Contract(format!(
                "grid {}x{} with {} values",
                dims.width,
                dims.height,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("grid values must be finite".into()));
        }
        Ok(RasterGrid { dims, values })
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.dims.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        let w = self.dims.width;
        self.values[y * w + x] = v;
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn transposed(&self) -> RasterGrid {
        let (w, h) = (self.dims.width, self.dims.height);
        let mut out = RasterGrid::zeros(GridDims::new(h, w));
        for y in 0..h {
            for x in 0..w {
                out.values[x * h + y] = self.values[y * w + x];
            }
        }
        out
    }

    /// Binary PGM (P5, maxval 255) with values scaled so the maximum maps
    /// to 255 and negatives clip to 0.
    pub fn write_pgm8(&self, mut out: impl Write) -> std::io::Result<()> {
        let max = self.max();
        let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
        write!(out, "P5\n{} {}\n255\n", self.dims.width, self.dims.height)?;
        let bytes: Vec<u8> = self
            .values
            .iter()
            .map(|&v| (v * scale).round().clamp(0.0, 255.0) as u8)
            .collect();
        out.write_all(&bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftRenderParams {
    pub c: f64,
    pub bbox: Option<Rect>,
}

impl Default for SoftRenderParams {
    fn default() -> Self {
        SoftRenderParams {
            c: DEFAULT_SHARPNESS,
            bbox: None,
        }
    }
}

impl SoftRenderParams {
    pub fn with_bbox(bbox: Rect) -> Self {
        SoftRenderParams {
            bbox: Some(bbox),
            ..Default::default()
        }
    }
}

/// Default evaluation window for a polygon with no detected box.
pub fn default_window(verts: &[Point2], dims: GridDims) -> Rect {
    Rect::covering(verts, dims).dilate(WINDOW_DILATION, dims)
}

fn pixel_center(x: usize, y: usize) -> Point2 {
    Point2::new(x as f64 + 0.5, y as f64 + 0.5)
}

fn angle_between(a: Point2, b: Point2) -> f64 {
    let nn = (a.dot(a) * b.dot(b)).sqrt();
    (a.dot(b) / nn).clamp(-COS_CLAMP, COS_CLAMP).acos()
}

/// Hard winding number; 1 inside and 0 outside a simple CCW polygon.
pub fn winding_hard(m: Point2, p: &Polygon) -> Result<i32> {
    winding_hard_verts(m, p.vertices())
}

pub(crate) fn winding_hard_verts(m: Point2, v: &[Point2]) -> Result<i32> {
    let n = v.len();
    let mut acc = 0.0;
    for k in 0..n {
        let (u, w) = (v[k], v[(k + 1) % n]);
        if point_segment_dist(m, u, w) < BOUNDARY_TOL {
            return Err(Error::OnBoundary);
        }
        let (a, b) = (u - m, w - m);
        let det = a.cross(b);
        acc += det.signum() * angle_between(a, b);
    }
    Ok((acc / (2.0 * PI)).round() as i32)
}

/// Moves a sample that sits on a vertex slightly toward `toward`.
fn nudge_off_vertices(m: Point2, v: &[Point2], toward: Point2) -> Point2 {
    if !v.iter().any(|&p| (p - m).dot(p - m) < 1e-18) {
        return m;
    }
    let d = toward - m;
    let len = d.norm();
    if len > 0.0 {
        m + d * (VERTEX_NUDGE / len)
    } else {
        m + Point2::new(VERTEX_NUDGE, 0.0)
    }
}

/// Soft winding number at `m`.
pub fn winding_soft(m: Point2, p: &Polygon, params: &SoftRenderParams) -> f64 {
    let v = p.vertices();
    let center = params
        .bbox
        .map(|b| b.center())
        .unwrap_or_else(|| centroid(v));
    soft_value(m, v, params.c, center)
}

fn centroid(v: &[Point2]) -> Point2 {
    v.iter().fold(Point2::default(), |a, &p| a + p) * (1.0 / v.len() as f64)
}

const ATAN_P: [f64; 5] = [
    -8.750_608_600_031_904e-1,
    -1.615_753_718_733_365e1,
    -7.500_855_792_314_705e1,
    -1.228_866_684_490_136e2,
    -6.485_021_904_942_025e1,
];
const ATAN_Q: [f64; 5] = [
    2.485_846_490_142_306e1,
    1.650_270_098_316_988_5e2,
    4.328_810_604_912_903e2,
    4.853_903_996_359_137e2,
    1.945_506_571_482_614e2,
];

/// `atan(t)` for `t` in `[0, 1]`, branch-free so row loops vectorize.
/// Rational approximation accurate to a few ulps.
#[inline(always)]
fn atan_unit(t: f64) -> f64 {
    let big = t > 0.66;
    let x = if big { (t - 1.0) / (t + 1.0) } else { t };
    let off = if big { std::f64::consts::FRAC_PI_4 + 3.061_616_997_868_383e-17 } else { 0.0 };
    let z = x * x;
    let [p0, p1, p2, p3, p4] = ATAN_P;
    let [q0, q1, q2, q3, q4] = ATAN_Q;
    let p = (((p0 * z + p1) * z + p2) * z + p3) * z + p4;
    let q = ((((z + q0) * z + q1) * z + q2) * z + q3) * z + q4;
    off + x + x * z * p / q
}

/// `atan2(y, x)` for `y >= 0`: the unsigned angle between two vectors
/// whose cross and dot products are `y` and `x`.
#[inline(always)]
fn atan2_pos(y: f64, x: f64) -> f64 {
    let ax = x.abs();
    let hi = y.max(ax);
    let lo = y.min(ax);
    let t = if hi > 0.0 { lo / hi } else { 0.0 };
    let r = atan_unit(t);
    let r = if y > ax { std::f64::consts::FRAC_PI_2 - r } else { r };
    if x < 0.0 {
        PI - r
    } else {
        r
    }
}

/// One edge's term `s(c det) * angle` at a sample offset by `(ax, ay)`,
/// `(bx, by)` from the edge endpoints.
#[inline(always)]
fn edge_term(ax: f64, ay: f64, bx: f64, by: f64, c: f64) -> f64 {
    let det = ax * by - ay * bx;
    let dot = ax * bx + ay * by;
    let x = c * det;
    x / (1.0 + x.abs()) * atan2_pos(det.abs(), dot)
}

/// Edge term and its partials with respect to `a` and `b`, as
/// `(term, [da_x, da_y, db_x, db_y])`.
#[inline(always)]
fn edge_term_grad(ax: f64, ay: f64, bx: f64, by: f64, c: f64) -> (f64, [f64; 4]) {
    let det = ax * by - ay * bx;
    let dot = ax * bx + ay * by;
    let x = c * det;
    let d = 1.0 + x.abs();
    let s = x / d;
    let th = atan2_pos(det.abs(), dot);
    let r2 = det * det + dot * dot;
    let inv = if r2 > 0.0 { 1.0 / r2 } else { 0.0 };
    // d term = p d(det) - q d(dot)
    let p = c * th / (d * d) + s.abs() * dot * inv;
    let q = s * det.abs() * inv;
    (s * th, [p * by - q * bx, -p * bx - q * by, -p * ay - q * ax, p * ax - q * ay])
}

pub(crate) fn soft_value(m: Point2, v: &[Point2], c: f64, center: Point2) -> f64 {
    let m = nudge_off_vertices(m, v, center);
    let n = v.len();
    let mut acc = 0.0;
    for k in 0..n {
        let (a, b) = (v[k] - m, v[(k + 1) % n] - m);
        acc += edge_term(a.x, a.y, b.x, b.y, c);
    }
    acc / (2.0 * PI)
}

/// Soft winding number at `m` and its derivative with respect to every
/// vertex coordinate, written to `jac` as `[dx0, dy0, dx1, dy1, ...]`.
pub fn soft_value_grad(m: Point2, v: &[Point2], c: f64, center: Point2, jac: &mut [f64]) -> f64 {
    let m = nudge_off_vertices(m, v, center);
    let n = v.len();
    debug_assert_eq!(jac.len(), 2 * n);
    jac.fill(0.0);
    let inv = 1.0 / (2.0 * PI);
    let mut acc = 0.0;
    for k in 0..n {
        let k1 = (k + 1) % n;
        let (a, b) = (v[k] - m, v[k1] - m);
        let (t, g) = edge_term_grad(a.x, a.y, b.x, b.y, c);
        acc += t;
        jac[2 * k] += g[0] * inv;
        jac[2 * k + 1] += g[1] * inv;
        jac[2 * k1] += g[2] * inv;
        jac[2 * k1 + 1] += g[3] * inv;
    }
    acc * inv
}

/// Pixels of row `y` whose center sits on a vertex; those take the scalar
/// path with a nudged sample.
fn vertex_hits(v: &[Point2], window: Rect, y: usize) -> Vec<usize> {
    let cy = y as f64 + 0.5;
    let mut hits = Vec::new();
    for p in v {
        if (p.y - cy).abs() < 1e-9 {
            let i = (p.x - 0.5).round();
            if (p.x - 0.5 - i).abs() < 1e-9 && i >= window.x0 as f64 && i < window.x1 as f64 {
                hits.push(i as usize - window.x0);
            }
        }
    }
    hits.sort_unstable();
    hits.dedup();
    hits
}

/// Soft values of one window row.
fn soft_row(v: &[Point2], c: f64, window: Rect, y: usize, xs: &[f64], out: &mut [f64]) {
    let n = v.len();
    let cy = y as f64 + 0.5;
    out.fill(0.0);
    for k in 0..n {
        let (p, q) = (v[k], v[(k + 1) % n]);
        let (ay, by) = (p.y - cy, q.y - cy);
        for (o, &mx) in out.iter_mut().zip(xs) {
            *o += edge_term(p.x - mx, ay, q.x - mx, by, c);
        }
    }
    let inv = 1.0 / (2.0 * PI);
    for o in out.iter_mut() {
        *o *= inv;
    }
    let center = window.center();
    for i in vertex_hits(v, window, y) {
        out[i] = soft_value(pixel_center(window.x0 + i, y), v, c, center);
    }
}

/// Dot product accumulated in independent lanes so it vectorizes.
fn dot_lanes(a: &[f64], b: &[f64]) -> f64 {
    const L: usize = 8;
    let mut acc = [0.0f64; L];
    let n = a.len() / L * L;
    for (x, y) in a[..n].chunks_exact(L).zip(b[..n].chunks_exact(L)) {
        for l in 0..L {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = a[n..].iter().zip(&b[n..]).map(|(x, y)| x * y).sum();
    acc.iter().sum::<f64>() + tail
}

/// Adds `sum_i g_i * d value_i / d v` over one window row to `acc`.
fn soft_row_backward(v: &[Point2], c: f64, window: Rect, y: usize, xs: &[f64], g: &[f64], acc: &mut [f64]) {
    let n = v.len();
    let cy = y as f64 + 0.5;
    let hits = vertex_hits(v, window, y);
    let g_orig = g;
    let masked: Vec<f64>;
    let g = if hits.is_empty() {
        g
    } else {
        masked = g
            .iter()
            .enumerate()
            .map(|(i, &x)| if hits.contains(&i) { 0.0 } else { x })
            .collect();
        &masked
    };
    let inv = 1.0 / (2.0 * PI);
    let w = xs.len();
    let mut pw = vec![0.0f64; w];
    let mut qw = vec![0.0f64; w];
    let ones = vec![1.0f64; w];
    for k in 0..n {
        let k1 = (k + 1) % n;
        let (p, q) = (v[k], v[k1]);
        let (ay, by) = (p.y - cy, q.y - cy);
        // d term = P d(det) - Q d(dot); P and Q per pixel, upstream folded in.
        for (((pp, qq), &mx), &gi) in pw.iter_mut().zip(qw.iter_mut()).zip(xs).zip(g) {
            let (ax, bx) = (p.x - mx, q.x - mx);
            let det = ax * by - ay * bx;
            let dot = ax * bx + ay * by;
            let x = c * det;
            let inv_d = 1.0 / (1.0 + x.abs());
            let s = x * inv_d;
            let th = atan2_pos(det.abs(), dot);
            let inv_r2 = 1.0 / (det * det + dot * dot).max(f64::MIN_POSITIVE);
            *pp = gi * (c * th * inv_d * inv_d + s.abs() * dot * inv_r2);
            *qq = gi * (s * det.abs() * inv_r2);
        }
        let (sp, sq) = (dot_lanes(&pw, &ones), dot_lanes(&qw, &ones));
        let (spx, sqx) = (dot_lanes(&pw, xs), dot_lanes(&qw, xs));
        // sums of P ax, P bx, Q ax, Q bx with ax = p.x - x, bx = q.x - x
        let (spa, spb) = (p.x * sp - spx, q.x * sp - spx);
        let (sqa, sqb) = (p.x * sq - sqx, q.x * sq - sqx);
        acc[2 * k] += (by * sp - sqb) * inv;
        acc[2 * k + 1] += (-spb - by * sq) * inv;
        acc[2 * k1] += (-ay * sp - sqa) * inv;
        acc[2 * k1 + 1] += (spa - ay * sq) * inv;
    }
    if hits.is_empty() {
        return;
    }
    let center = window.center();
    let mut jac = vec![0.0; 2 * n];
    for &i in &hits {
        soft_value_grad(pixel_center(window.x0 + i, y), v, c, center, &mut jac);
        let gi = g_orig[i];
        for (a, j) in acc.iter_mut().zip(&jac) {
            *a += gi * j;
        }
    }
}

/// Soft render of one polygon restricted to a pixel window.
#[derive(Debug, Clone)]
pub struct SoftPatch {
    pub window: Rect,
    /// Window-local row-major values.
    pub values: Vec<f64>,
    /// Per pixel, `2 * nverts` partial derivatives (empty when not requested).
    pub jac: Vec<f64>,
    pub nverts: usize,
    vertices: Vec<Point2>,
    c: f64,
    exec: Execution,
}

impl SoftPatch {
    pub fn value_at(&self, x: usize, y: usize) -> f64 {
        if !self.window.contains(x, y) {
            return 0.0;
        }
        self.values[(y - self.window.y0) * self.window.width() + (x - self.window.x0)]
    }

    /// Accumulates `sum_i upstream_i * d values_i / d vertices` into `grad`.
    /// Uses the stored Jacobian when present and recomputes it row by row
    /// otherwise.
    pub fn backward(&self, upstream: &[f64], grad: &mut [Point2]) {
        let n2 = 2 * self.nverts;
        debug_assert_eq!(upstream.len(), self.values.len());
        let mut acc = vec![0.0; n2];
        if !self.jac.is_empty() {
            for (i, &g) in upstream.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &self.jac[i * n2..(i + 1) * n2];
                for (a, &j) in acc.iter_mut().zip(row) {
                    *a += g * j;
                }
            }
        } else {
            let w = self.window.width();
            let xs = row_centers(self.window);
            let rows: Vec<Vec<f64>> = par::map_indexed(self.window.height(), self.exec, |r| {
                let mut a = vec![0.0; n2];
                let g = &upstream[r * w..(r + 1) * w];
                if g.iter().any(|&x| x != 0.0) {
                    soft_row_backward(&self.vertices, self.c, self.window, self.window.y0 + r, &xs, g, &mut a);
                }
                a
            });
            for a in rows {
                for (t, x) in acc.iter_mut().zip(a) {
                    *t += x;
                }
            }
        }
        for (k, gk) in grad.iter_mut().enumerate() {
            gk.x += acc[2 * k];
            gk.y += acc[2 * k + 1];
        }
    }
}

fn row_centers(window: Rect) -> Vec<f64> {
    (window.x0..window.x1).map(|x| x as f64 + 0.5).collect()
}

/// Soft-renders `v` at every pixel center of `window`. With `with_jac`
/// the per-pixel Jacobian is stored; without it [`SoftPatch::backward`]
/// recomputes what it needs.
pub fn render_soft_patch(v: &[Point2], window: Rect, c: f64, with_jac: bool, exec: Execution) -> SoftPatch {
    let (w, h) = (window.width(), window.height());
    let n2 = 2 * v.len();
    let center = window.center();
    let mut values = vec![0.0; w * h];
    let mut jac = if with_jac { vec![0.0; w * h * n2] } else { Vec::new() };
    if w > 0 && h > 0 {
        if with_jac {
            let rows: Vec<(Vec<f64>, Vec<f64>)> = par::map_indexed(h, exec, |r| {
                let y = window.y0 + r;
                let mut vals = vec![0.0; w];
                let mut jr = vec![0.0; w * n2];
                for (i, val) in vals.iter_mut().enumerate() {
                    let m = pixel_center(window.x0 + i, y);
                    *val = soft_value_grad(m, v, c, center, &mut jr[i * n2..(i + 1) * n2]);
                }
                (vals, jr)
            });
            for (r, (vals, jr)) in rows.into_iter().enumerate() {
                values[r * w..(r + 1) * w].copy_from_slice(&vals);
                jac[r * w * n2..(r + 1) * w * n2].copy_from_slice(&jr);
            }
        } else {
            let xs = row_centers(window);
            par::for_each_chunk(&mut values, w, exec, |r, row| {
                soft_row(v, c, window, window.y0 + r, &xs, row);
            });
        }
    }
    SoftPatch {
        window,
        values,
        jac,
        nverts: v.len(),
        vertices: v.to_vec(),
        c,
        exec,
    }
}

/// Soft render on the full grid; zero outside the evaluation window.
pub fn render_soft(p: &Polygon, params: &SoftRenderParams, dims: GridDims) -> RasterGrid {
    let v = p.vertices();
    let window = params
        .bbox
        .map(|b| b.intersect(&dims.full_rect()))
        .unwrap_or_else(|| default_window(v, dims));
    let patch = render_soft_patch(v, window, params.c, false, Execution::default());
    let mut g = RasterGrid::zeros(dims);
    paste(&mut g, &patch, 1.0);
    g
}

fn paste(g: &mut RasterGrid, patch: &SoftPatch, scale: f64) {
    let r = patch.window;
    let w = r.width();
    for y in r.y0..r.y1 {
        for x in r.x0..r.x1 {
            let v = patch.values[(y - r.y0) * w + (x - r.x0)];
            let cur = g.get(x, y);
            g.set(x, y, cur + scale * v);
        }
    }
}

/// Crossing-based nonzero-winding fill of `v` at pixel centers in `window`,
/// added into `out` (full-grid, row-major) with weight `value`.
pub(crate) fn fill_hard(v: &[Point2], dims: GridDims, window: Rect, value: f64, out: &mut [f64]) {
    let n = v.len();
    let mut xs: Vec<(f64, i32)> = Vec::with_capacity(n);
    for y in window.y0..window.y1 {
        let cy = y as f64 + 0.5;
        xs.clear();
        for k in 0..n {
            let (a, b) = (v[k], v[(k + 1) % n]);
            let dir = if a.y <= cy && b.y > cy {
                1
            } else if b.y <= cy && a.y > cy {
                -1
            } else {
                continue;
            };
            xs.push((a.x + (cy - a.y) * (b.x - a.x) / (b.y - a.y), dir));
        }
        if xs.is_empty() {
            continue;
        }
        xs.sort_by(|p, q| p.0.total_cmp(&q.0));
        // Winding of a point is the sum of directions of crossings to its right.
        let mut wind: i32 = xs.iter().map(|c| c.1).sum();
        let mut next = 0;
        for x in window.x0..window.x1 {
            let cx = x as f64 + 0.5;
            while next < xs.len() && xs[next].0 <= cx {
                wind -= xs[next].1;
                next += 1;
            }
            if wind != 0 {
                out[y * dims.width + x] += value;
            }
        }
    }
}

/// Binary image: 1 at pixel centers inside `p`, 0 elsewhere.
pub fn render_hard(p: &Polygon, dims: GridDims) -> RasterGrid {
    let mut g = RasterGrid::zeros(dims);
    fill_hard(p.vertices(), dims, dims.full_rect(), 1.0, &mut g.values);
    g
}

/// `sum_i i * R(P_i)` with 1-based indices.
pub fn compose_indexed(polys: &[Polygon], dims: GridDims) -> RasterGrid {
    let mut g = RasterGrid::zeros(dims);
    for (i, p) in polys.iter().enumerate() {
        fill_hard(p.vertices(), dims, dims.full_rect(), (i + 1) as f64, &mut g.values);
    }
    g
}

/// Elementwise sum of the polygons' hard or soft renders.
pub fn compose_sum(polys: &[Polygon], soft: bool, dims: GridDims) -> RasterGrid {
    let mut g = RasterGrid::zeros(dims);
    for p in polys {
        if soft {
            let window = default_window(p.vertices(), dims);
            let patch = render_soft_patch(p.vertices(), window, DEFAULT_SHARPNESS, false, Execution::default());
            paste(&mut g, &patch, 1.0);
        } else {
            fill_hard(p.vertices(), dims, dims.full_rect(), 1.0, &mut g.values);
        }
    }
    g
}

/// Sum of absolute forward differences in x and y; differences that would
/// reach past the last row or column are zero.
pub fn total_variation(g: &RasterGrid) -> f64 {
    tv_impl(g.values(), g.dims(), None)
}

/// Total variation and its derivative with respect to every pixel value.
pub fn total_variation_grad(values: &[f64], dims: GridDims) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; values.len()];
    let tv = tv_impl(values, dims, Some(&mut grad));
    (tv, grad)
}

fn tv_impl(v: &[f64], dims: GridDims, mut grad: Option<&mut [f64]>) -> f64 {
    let (w, h) = (dims.width, dims.height);
    let mut tv = 0.0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let here = v[i];
            let right = if x + 1 < w { v[i + 1] } else { here };
            let down = if y + 1 < h { v[i + w] } else { here };
            let dx = right - here;
            let dy = down - here;
            tv += dx.abs() + dy.abs();
            if let Some(g) = grad.as_deref_mut() {
                let (sx, sy) = (sign(dx), sign(dy));
                g[i] -= sx + sy;
                if x + 1 < w {
                    g[i + 1] += sx;
                }
                if y + 1 < h {
                    g[i + w] += sy;
                }
            }
        }
    }
    tv
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
