//! Polygon and mask primitives.
//!
//! Coordinates are continuous pixel units. Pixel `(i, j)` covers
//! `[i, i+1) x [j, j+1)` and is sampled at its center `(i + 0.5, j + 0.5)`.
//! Orientation is defined by the sign of the shoelace area in these
//! coordinates; every [`Polygon`] is stored with positive signed area.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster;

/// Minimum distance between consecutive polygon vertices.
pub const MIN_EDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 2D cross product, `det(self, o)`.
    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point2) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridDims {
    pub width: usize,
    pub height: usize,
}

impl GridDims {
    pub const fn new(width: usize, height: usize) -> Self {
        GridDims { width, height }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn full_rect(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }
}

impl Default for GridDims {
    fn default() -> Self {
        GridDims::new(256, 256)
    }
}

/// Half-open integer pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    pub const fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> usize {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> usize {
        self.y1.saturating_sub(self.y0)
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn center(&self) -> Point2 {
        Point2::new(
            (self.x0 + self.x1) as f64 * 0.5,
            (self.y0 + self.y1) as f64 * 0.5,
        )
    }

    /// Grows the rectangle by `by` pixels on every side, clipped to `dims`.
    pub fn dilate(&self, by: usize, dims: GridDims) -> Rect {
        Rect::new(
            self.x0.saturating_sub(by),
            self.y0.saturating_sub(by),
            (self.x1 + by).min(dims.width),
            (self.y1 + by).min(dims.height),
        )
    }

    pub fn intersect(&self, o: &Rect) -> Rect {
        let x0 = self.x0.max(o.x0);
        let y0 = self.y0.max(o.y0);
        Rect::new(x0, y0, self.x1.min(o.x1).max(x0), self.y1.min(o.y1).max(y0))
    }

    pub fn union(&self, o: &Rect) -> Rect {
        if self.is_empty() {
            return *o;
        }
        if o.is_empty() {
            return *self;
        }
        Rect::new(
            self.x0.min(o.x0),
            self.y0.min(o.y0),
            self.x1.max(o.x1),
            self.y1.max(o.y1),
        )
    }

    /// Pixel rectangle covering the continuous bounding box of `pts`, clipped.
    pub fn covering(pts: &[Point2], dims: GridDims) -> Rect {
        let (mut lx, mut ly, mut hx, mut hy) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in pts {
            lx = lx.min(p.x);
            ly = ly.min(p.y);
            hx = hx.max(p.x);
            hy = hy.max(p.y);
        }
        let clip = |v: f64, hi: usize| v.clamp(0.0, hi as f64) as usize;
        let x0 = clip(lx.floor(), dims.width);
        let y0 = clip(ly.floor(), dims.height);
        Rect::new(
            x0,
            y0,
            clip(hx.ceil(), dims.width).max(x0),
            clip(hy.ceil(), dims.height).max(y0),
        )
    }
}

/// Shoelace signed area; positive for counter-clockwise loops.
pub fn signed_area(pts: &[Point2]) -> Result<f64> {
    if pts.len() < 3 {
        return Err(Error::InvalidPolygon(format!(
            "{} vertices, need at least 3",
            pts.len()
        )));
    }
    Ok(shoelace(pts))
}

pub(crate) fn shoelace(pts: &[Point2]) -> f64 {
    let n = pts.len();
    let mut acc = 0.0;
    for i in 0..n {
        acc += pts[i].cross(pts[(i + 1) % n]);
    }
    0.5 * acc
}

/// A closed, counter-clockwise vertex loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Polygon {
    vertices: Vec<Point2>,
}

impl Polygon {
    /// Validates the loop and normalizes it to counter-clockwise order.
    pub fn new(mut vertices: Vec<Point2>) -> Result<Self> {
        validate_loop(&vertices)?;
        if shoelace(&vertices) < 0.0 {
            vertices.reverse();
        }
        Ok(Polygon { vertices })
    }

    pub fn from_coords(coords: &[(f64, f64)]) -> Result<Self> {
        Polygon::new(coords.iter().map(|&(x, y)| Point2::new(x, y)).collect())
    }

    /// Axis-aligned rectangle with corners `(x0, y0)` and `(x1, y1)`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Polygon::from_coords(&[(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn into_vertices(self) -> Vec<Point2> {
        self.vertices
    }

    pub fn area(&self) -> f64 {
        shoelace(&self.vertices)
    }

    pub fn perimeter(&self) -> f64 {
        loop_perimeter(&self.vertices)
    }

    pub fn translated(&self, d: Point2) -> Polygon {
        Polygon {
            vertices: self.vertices.iter().map(|&p| p + d).collect(),
        }
    }

    pub fn is_simple(&self) -> bool {
        !self_intersects(&self.vertices)
    }
}

fn validate_loop(v: &[Point2]) -> Result<()> {
    if v.len() < 3 {
        return Err(Error::InvalidPolygon(format!(
            "{} vertices, need at least 3",
            v.len()
        )));
    }
    if let Some(i) = v.iter().position(|p| !p.is_finite()) {
        return Err(Error::InvalidPolygon(format!("vertex {i} is not finite")));
    }
    let n = v.len();
    for i in 0..n {
        if v[i].dist(v[(i + 1) % n]) < MIN_EDGE {
            return Err(Error::InvalidPolygon(format!(
                "vertices {i} and {} coincide",
                (i + 1) % n
            )));
        }
    }
    if shoelace(v).abs() < 1e-12 {
        return Err(Error::InvalidPolygon("zero area".into()));
    }
    Ok(())
}

pub(crate) fn loop_perimeter(v: &[Point2]) -> f64 {
    let n = v.len();
    (0..n).map(|i| v[i].dist(v[(i + 1) % n])).sum()
}

/// Interior angle at vertex `v` with neighbors `u` (previous) and `w` (next)
/// of a counter-clockwise loop, in `[0, 2pi)`.
pub fn interior_angle(u: Point2, v: Point2, w: Point2) -> f64 {
    let e1 = v - u;
    let e2 = w - v;
    let turn = e1.cross(e2).atan2(e1.dot(e2));
    PI - turn
}

/// Interior angle at every vertex, reflex angles reported above pi.
pub fn interior_angles(p: &Polygon) -> Result<Vec<f64>> {
    let v = p.vertices();
    let n = v.len();
    (0..n)
        .map(|i| {
            let u = v[(i + n - 1) % n];
            let w = v[(i + 1) % n];
            if u.dist(v[i]) < MIN_EDGE || w.dist(v[i]) < MIN_EDGE {
                return Err(Error::InvalidPolygon(format!("zero-length edge at {i}")));
            }
            Ok(interior_angle(u, v[i], w))
        })
        .collect()
}

pub fn point_segment_dist(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

/// Indices of the points kept by Douglas-Peucker on the open chain `pts`.
fn dp_open_indices(pts: &[Point2], eps: f64) -> Vec<usize> {
    let n = pts.len();
    if n <= 2 {
        return (0..n).collect();
    }
    let mut keep = vec![false; n];
    keep[0] = true;
    keep[n - 1] = true;
    let mut stack = vec![(0usize, n - 1)];
    while let Some((s, e)) = stack.pop() {
        let mut far = 0.0;
        let mut idx = s;
        for i in s + 1..e {
            let d = point_segment_dist(pts[i], pts[s], pts[e]);
            if d > far {
                far = d;
                idx = i;
            }
        }
        if far > eps {
            keep[idx] = true;
            stack.push((s, idx));
            stack.push((idx, e));
        }
    }
    (0..n).filter(|&i| keep[i]).collect()
}

/// Douglas-Peucker on an open polyline; endpoints are always kept.
pub fn simplify_polyline(pts: &[Point2], eps: f64) -> Vec<Point2> {
    dp_open_indices(pts, eps)
        .into_iter()
        .map(|i| pts[i])
        .collect()
}

/// Douglas-Peucker simplification of a closed contour.
///
/// The loop is split at two anchors (the point farthest from the centroid
/// and the point farthest from that one), each half is simplified, and
/// anchors that turn out to be unnecessary are dropped again.
pub fn douglas_peucker(contour: &[Point2], eps: f64) -> Result<Polygon> {
    let idx = douglas_peucker_indices(contour, eps)?;
    Polygon::new(idx.into_iter().map(|i| contour[i]).collect())
        .map_err(|e| Error::DegenerateContour(e.to_string()))
}

/// Kept contour indices, in contour order.
pub fn douglas_peucker_indices(contour: &[Point2], eps: f64) -> Result<Vec<usize>> {
    let n = contour.len();
    if n < 3 {
        return Err(Error::DegenerateContour(format!("{n} contour points")));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::DegenerateContour(format!("epsilon {eps} must be positive")));
    }
    let centroid = contour
        .iter()
        .fold(Point2::default(), |acc, &p| acc + p)
        * (1.0 / n as f64);
    let far_from = |o: Point2| {
        (0..n)
            .max_by(|&i, &j| contour[i].dist(o).total_cmp(&contour[j].dist(o)).then(j.cmp(&i)))
            .unwrap()
    };
    let a = far_from(centroid);
    let b = far_from(contour[a]);
    let (a, b) = if a < b { (a, b) } else { (b, a) };

    let first: Vec<Point2> = contour[a..=b].to_vec();
    let second: Vec<Point2> = contour[b..].iter().chain(&contour[..=a]).copied().collect();
    let mut kept: Vec<usize> = dp_open_indices(&first, eps)
        .into_iter()
        .map(|i| a + i)
        .collect();
    kept.pop(); // b, re-added as the start of the second half
    for i in dp_open_indices(&second, eps) {
        kept.push((b + i) % n);
    }
    kept.pop(); // a again
    kept.sort_unstable();
    kept.dedup();

    // Drop anchors whose neighbors already cover their span within eps.
    for anchor in [a, b] {
        if kept.len() <= 3 {
            break;
        }
        let Some(pos) = kept.iter().position(|&k| k == anchor) else {
            continue;
        };
        let m = kept.len();
        let prev = kept[(pos + m - 1) % m];
        let next = kept[(pos + 1) % m];
        let (p0, p1) = (contour[prev], contour[next]);
        let mut i = prev;
        let mut ok = true;
        while i != next {
            if point_segment_dist(contour[i], p0, p1) > eps {
                ok = false;
                break;
            }
            i = (i + 1) % n;
        }
        if ok {
            kept.remove(pos);
        }
    }

    if kept.len() < 3 {
        return Err(Error::DegenerateContour(format!(
            "simplified to {} vertices at epsilon {eps}",
            kept.len()
        )));
    }
    Ok(kept)
}

/// Binary pixel mask on a full grid, with its tight bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentMask {
    dims: GridDims,
    data: Vec<bool>,
    bbox: Rect,
    count: usize,
}

impl SegmentMask {
    pub fn new(dims: GridDims, data: Vec<bool>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::Contract(format!(
                "mask data has {} pixels, grid has {}",
                data.len(),
                dims.len()
            )));
        }
        let mut bbox = Rect::new(usize::MAX, usize::MAX, 0, 0);
        let mut count = 0;
        for y in 0..dims.height {
            for x in 0..dims.width {
                if data[y * dims.width + x] {
                    count += 1;
                    bbox.x0 = bbox.x0.min(x);
                    bbox.y0 = bbox.y0.min(y);
                    bbox.x1 = bbox.x1.max(x + 1);
                    bbox.y1 = bbox.y1.max(y + 1);
                }
            }
        }
        if count == 0 {
            return Err(Error::EmptyMask);
        }
        Ok(SegmentMask {
            dims,
            data,
            bbox,
            count,
        })
    }

    pub fn from_fn(dims: GridDims, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let mut data = vec![false; dims.len()];
        for y in 0..dims.height {
            for x in 0..dims.width {
                data[y * dims.width + x] = f(x, y);
            }
        }
        SegmentMask::new(dims, data)
    }

    /// Mask of the pixel centers covered by `p`.
    pub fn from_polygon(p: &Polygon, dims: GridDims) -> Result<Self> {
        let g = raster::render_hard(p, dims);
        SegmentMask::new(dims, g.values().iter().map(|&v| v > 0.5).collect())
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn bbox(&self) -> Rect {
        self.bbox
    }

    pub fn area(&self) -> usize {
        self.count
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.dims.width + x]
    }

    pub fn intersection_area(&self, o: &SegmentMask) -> usize {
        let r = self.bbox.intersect(&o.bbox);
        let mut n = 0;
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                if self.get(x, y) && o.get(x, y) {
                    n += 1;
                }
            }
        }
        n
    }

    pub fn union(&self, o: &SegmentMask) -> SegmentMask {
        let data = self.data.iter().zip(&o.data).map(|(&a, &b)| a || b).collect();
        SegmentMask::new(self.dims, data).expect("union of non-empty masks")
    }

    /// Erosion by one pixel with the 4-neighborhood cross; pixels beyond
    /// the grid count as background. Returns `None` when nothing survives.
    pub fn eroded(&self) -> Option<SegmentMask> {
        let (w, h) = (self.dims.width, self.dims.height);
        let mut data = vec![false; self.data.len()];
        let b = self.bbox;
        for y in b.y0..b.y1 {
            for x in b.x0..b.x1 {
                data[y * w + x] = self.get(x, y)
                    && x > 0
                    && y > 0
                    && x + 1 < w
                    && y + 1 < h
                    && self.get(x - 1, y)
                    && self.get(x + 1, y)
                    && self.get(x, y - 1)
                    && self.get(x, y + 1);
            }
        }
        SegmentMask::new(self.dims, data).ok()
    }

    /// Largest 4-connected component (ties go to the one found first in
    /// row-major order).
    pub fn largest_component(&self) -> SegmentMask {
        let (w, h) = (self.dims.width, self.dims.height);
        let mut label = vec![0u32; self.data.len()];
        let mut best = (0usize, 0u32);
        let mut next = 0u32;
        let mut queue = VecDeque::new();
        for start in 0..self.data.len() {
            if !self.data[start] || label[start] != 0 {
                continue;
            }
            next += 1;
            label[start] = next;
            queue.push_back(start);
            let mut size = 0;
            while let Some(i) = queue.pop_front() {
                size += 1;
                let (x, y) = (i % w, i / w);
                let mut visit = |j: usize| {
                    if self.data[j] && label[j] == 0 {
                        label[j] = next;
                        queue.push_back(j);
                    }
                };
                if x > 0 {
                    visit(i - 1);
                }
                if x + 1 < w {
                    visit(i + 1);
                }
                if y > 0 {
                    visit(i - w);
                }
                if y + 1 < h {
                    visit(i + w);
                }
            }
            if size > best.0 {
                best = (size, next);
            }
        }
        let data = label.iter().map(|&l| l == best.1).collect();
        SegmentMask::new(self.dims, data).expect("component is non-empty")
    }
}

/// Outer boundary of the largest 4-connected component, as the closed loop
/// of pixel-corner lattice points along its pixel cracks.
///
/// The loop is counter-clockwise (positive shoelace area) and encloses
/// exactly the component's pixels, ignoring holes.
pub fn trace_contour(mask: &SegmentMask) -> Result<Vec<Point2>> {
    let comp = mask.largest_component();
    let (w, h) = (comp.dims.width as i64, comp.dims.height as i64);
    let fg = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && comp.get(x as usize, y as usize);

    // Topmost, then leftmost pixel: its top edge is on the boundary.
    let b = comp.bbox;
    let sy = b.y0 as i64;
    let sx = (b.x0..b.x1)
        .find(|&x| comp.get(x, b.y0))
        .ok_or(Error::EmptyMask)? as i64;

    // Walk lattice points with foreground on the left of the direction.
    let (mut px, mut py, mut dx, mut dy) = (sx, sy, 1i64, 0i64);
    let mut start = None;
    let mut out = Vec::new();
    loop {
        // Pixels ahead-left and ahead-right of the lattice point.
        let (lx, ly) = (-dy, dx);
        let ahead_left = pixel_at(px, py, dx + lx, dy + ly);
        let ahead_right = pixel_at(px, py, dx - lx, dy - ly);
        if !fg(ahead_left.0, ahead_left.1) {
            (dx, dy) = (lx, ly);
        } else if fg(ahead_right.0, ahead_right.1) {
            (dx, dy) = (-lx, -ly);
        }
        match start {
            None => start = Some((px, py, dx, dy)),
            Some(s) if s == (px, py, dx, dy) => break,
            Some(_) => {}
        }
        out.push(Point2::new(px as f64, py as f64));
        px += dx;
        py += dy;
    }
    Ok(out)
}

/// Pixel whose center lies at lattice point `(px, py)` offset by half of
/// `(ox, oy)` (each component is +-1).
fn pixel_at(px: i64, py: i64, ox: i64, oy: i64) -> (i64, i64) {
    (
        if ox > 0 { px } else { px - 1 },
        if oy > 0 { py } else { py - 1 },
    )
}

/// Raster IoU of two polygons on a grid of the given size.
pub fn polygon_iou(a: &Polygon, b: &Polygon, dims: GridDims) -> f64 {
    let ra = raster::render_hard(a, dims);
    let rb = raster::render_hard(b, dims);
    let (mut inter, mut uni) = (0usize, 0usize);
    for (&va, &vb) in ra.values().iter().zip(rb.values()) {
        let (ia, ib) = (va > 0.5, vb > 0.5);
        inter += (ia && ib) as usize;
        uni += (ia || ib) as usize;
    }
    if uni == 0 {
        0.0
    } else {
        inter as f64 / uni as f64
    }
}

/// Replaces runs of consecutive vertices closer than `threshold` by their
/// centroid, repeating until no such pair remains.
pub fn merge_close_vertices(p: &Polygon, threshold: f64) -> Result<Polygon> {
    let mut v = p.vertices().to_vec();
    loop {
        let n = v.len();
        if n < 3 {
            return Err(Error::DegenerateContour(format!("merged to {n} vertices")));
        }
        // A vertex that starts a run: far enough from its predecessor.
        let Some(start) = (0..n).find(|&i| v[(i + n - 1) % n].dist(v[i]) >= threshold) else {
            return Err(Error::DegenerateContour(
                "all vertices within the merge threshold".into(),
            ));
        };
        let mut merged = Vec::with_capacity(n);
        let mut changed = false;
        let mut i = 0;
        while i < n {
            let mut sum = v[(start + i) % n];
            let mut count = 1;
            while i + count < n && v[(start + i + count - 1) % n].dist(v[(start + i + count) % n]) < threshold {
                sum = sum + v[(start + i + count) % n];
                count += 1;
            }
            if count > 1 {
                changed = true;
            }
            merged.push(sum * (1.0 / count as f64));
            i += count;
        }
        v = merged;
        if !changed {
            break;
        }
    }
    Polygon::new(v).map_err(|e| Error::DegenerateContour(e.to_string()))
}

fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let o1 = (b - a).cross(c - a);
    let o2 = (b - a).cross(d - a);
    let o3 = (d - c).cross(a - c);
    let o4 = (d - c).cross(b - c);
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0))
        && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0))
    {
        return true;
    }
    let on = |p: Point2, q: Point2, r: Point2, o: f64| {
        o == 0.0
            && r.x >= p.x.min(q.x)
            && r.x <= p.x.max(q.x)
            && r.y >= p.y.min(q.y)
            && r.y <= p.y.max(q.y)
    };
    on(a, b, c, o1) || on(a, b, d, o2) || on(c, d, a, o3) || on(c, d, b, o4)
}

/// True if any two non-adjacent edges of the loop touch or cross.
pub fn self_intersects(v: &[Point2]) -> bool {
    let n = v.len();
    if n < 4 {
        return false;
    }
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_intersect(a, b, v[j], v[(j + 1) % n]) {
                return true;
            }
        }
    }
    false
}
