//! Room segments and the per-segment candidate polygons searched over.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{douglas_peucker, loop_perimeter, self_intersects, trace_contour, Polygon, Rect, SegmentMask};
use crate::par::{self, Execution};
use crate::raster::WINDOW_DILATION;

/// Default simplification factors; `eps = d * perimeter`.
pub const DEFAULT_DSET: [f64; 3] = [0.04, 0.02, 0.01];

/// Overlap, relative to the smaller segment, above which two segments are
/// also offered as their union.
pub const MERGE_OVERLAP: f64 = 0.05;

/// Segments smaller than this many pixels are not polygonized.
pub const MIN_SEGMENT_AREA: usize = 16;

#[derive(Debug, Clone)]
pub struct RoomSegment {
    pub id: u32,
    pub detection_score: f64,
    pub mask: Arc<SegmentMask>,
}

impl RoomSegment {
    pub fn new(id: u32, detection_score: f64, mask: SegmentMask) -> Result<Self> {
        if mask.area() == 0 {
            return Err(Error::EmptyMask);
        }
        if !(0.0..=1.0).contains(&detection_score) {
            return Err(Error::Spec(format!("detection score {detection_score} outside [0, 1]")));
        }
        Ok(RoomSegment {
            id,
            detection_score,
            mask: Arc::new(mask),
        })
    }

    pub fn area(&self) -> usize {
        self.mask.area()
    }
}

/// Segments with their candidate polygons, in search-level order.
#[derive(Debug, Clone)]
pub struct ProposalSet {
    segments: Vec<RoomSegment>,
    proposals: Vec<Vec<Polygon>>,
    dset: Vec<f64>,
}

impl ProposalSet {
    /// Builds a set from already polygonized segments; checks the invariants.
    pub fn from_parts(segments: Vec<RoomSegment>, proposals: Vec<Vec<Polygon>>, dset: Vec<f64>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::EmptyScene);
        }
        if segments.len() != proposals.len() {
            return Err(Error::Contract("segment / proposal count mismatch".into()));
        }
        for (i, (s, ps)) in segments.iter().zip(&proposals).enumerate() {
            if ps.is_empty() {
                return Err(Error::Contract(format!("segment {i} has no proposals")));
            }
            let win = window_of(&s.mask);
            for (k, p) in ps.iter().enumerate() {
                let inside = p.vertices().iter().all(|v| {
                    v.x >= win.x0 as f64 && v.y >= win.y0 as f64 && v.x <= win.x1 as f64 && v.y <= win.y1 as f64
                });
                if !inside {
                    return Err(Error::Contract(format!("proposal {k} of segment {i} leaves its window")));
                }
                if ps[..k].iter().any(|q| q.len() == p.len()) {
                    return Err(Error::Contract(format!("segment {i} repeats vertex count {}", p.len())));
                }
            }
        }
        Ok(ProposalSet {
            segments,
            proposals,
            dset,
        })
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segments(&self) -> &[RoomSegment] {
        &self.segments
    }

    pub fn proposals(&self, seg: usize) -> &[Polygon] {
        &self.proposals[seg]
    }

    /// Proposals plus the skip option.
    pub fn option_count(&self, seg: usize) -> usize {
        self.proposals[seg].len() + 1
    }

    /// Option index meaning "leave this segment out".
    pub fn skip_option(&self, seg: usize) -> usize {
        self.proposals[seg].len()
    }

    pub fn window(&self, seg: usize) -> Rect {
        window_of(&self.segments[seg].mask)
    }

    pub fn dset(&self) -> &[f64] {
        &self.dset
    }

    /// Number of distinct leaves of the search tree.
    pub fn leaf_count(&self) -> u128 {
        (0..self.len()).fold(1u128, |acc, s| acc.saturating_mul(self.option_count(s) as u128))
    }
}

fn window_of(mask: &SegmentMask) -> Rect {
    mask.bbox().dilate(WINDOW_DILATION, mask.dims())
}

/// Appends the union of every pair overlapping by more than 5% of the
/// smaller mask. Single pass: unions are not merged again.
pub fn merge_overlapping_segments(segs: &[RoomSegment]) -> Vec<RoomSegment> {
    let mut out = segs.to_vec();
    let mut next_id = segs.iter().map(|s| s.id).max().map_or(0, |m| m + 1);
    for i in 0..segs.len() {
        for j in i + 1..segs.len() {
            let (a, b) = (&segs[i], &segs[j]);
            let inter = a.mask.intersection_area(&b.mask);
            let smaller = a.area().min(b.area());
            if inter as f64 > MERGE_OVERLAP * smaller as f64 {
                out.push(RoomSegment {
                    id: next_id,
                    detection_score: a.detection_score.max(b.detection_score),
                    mask: Arc::new(a.mask.union(&b.mask)),
                });
                next_id += 1;
            }
        }
    }
    out
}

fn check_dset(dset: &[f64]) -> Result<()> {
    if dset.is_empty() {
        return Err(Error::Spec("simplification set is empty".into()));
    }
    if let Some(d) = dset.iter().find(|d| !(**d > 0.0 && **d < 0.25)) {
        return Err(Error::Spec(format!("simplification factor {d} outside (0, 0.25)")));
    }
    Ok(())
}

/// Candidate polygons of one segment, coarsest first. An empty list marks
/// the segment as unusable.
pub fn polygonize_segment(seg: &RoomSegment, dset: &[f64]) -> Result<Vec<Polygon>> {
    check_dset(dset)?;
    if seg.area() < MIN_SEGMENT_AREA {
        return Ok(Vec::new());
    }
    let contour = match trace_contour(&seg.mask) {
        Ok(c) => c,
        Err(Error::EmptyMask) => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let perimeter = loop_perimeter(&contour);
    let mut ds = dset.to_vec();
    ds.sort_by(|a, b| b.total_cmp(a));
    let mut out: Vec<Polygon> = Vec::new();
    for d in ds {
        let p = match douglas_peucker(&contour, d * perimeter) {
            Ok(p) => p,
            Err(Error::DegenerateContour(_)) | Err(Error::InvalidPolygon(_)) => continue,
            Err(e) => return Err(e),
        };
        if self_intersects(p.vertices()) {
            continue;
        }
        if out.iter().all(|q| q.len() != p.len()) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Merges, orders by area (descending, id breaking ties) and polygonizes.
pub fn build_proposal_set(segs: &[RoomSegment], dset: &[f64], exec: Execution) -> Result<ProposalSet> {
    check_dset(dset)?;
    let mut merged = merge_overlapping_segments(segs);
    merged.sort_by(|a, b| b.area().cmp(&a.area()).then(a.id.cmp(&b.id)));
    let polys = par::map_indexed(merged.len(), exec, |i| polygonize_segment(&merged[i], dset));
    let mut segments = Vec::new();
    let mut proposals = Vec::new();
    for (s, ps) in merged.into_iter().zip(polys) {
        let ps = ps?;
        if ps.is_empty() {
            log::debug!("segment {} is unusable", s.id);
            continue;
        }
        segments.push(s);
        proposals.push(ps);
    }
    if segments.is_empty() {
        return Err(Error::EmptyScene);
    }
    ProposalSet::from_parts(segments, proposals, dset.to_vec())
}
