//! Room, corner and angle precision / recall of a recovered plan.
//!
//! * Room: a recovered room is correct when it is matched to a ground-truth
//!   room and, after a one-pixel erosion, overlaps no other recovered room.
//! * Corner: a corner of a correct room is correct when it is the nearest
//!   corner of that room to some corner of the matched ground-truth room,
//!   at most 10 px away.
//! * Angle: a correct corner whose interior angle differs from the
//!   ground-truth one by less than 5 degrees.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{interior_angles, polygon_iou, GridDims, Polygon, SegmentMask};

pub const DEFAULT_MATCH_GATE: f64 = 0.5;
pub const CORNER_DIST: f64 = 10.0;
pub const ANGLE_TOL_DEG: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    /// `(gt index, recovered index, IoU)`.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_rec: Vec<usize>,
}

impl MatchResult {
    fn gt_of(&self, rec: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.1 == rec).map(|p| p.0)
    }
}

/// Greedy matching: ground-truth rooms by descending area each take the
/// unmatched recovered room of highest IoU, if it reaches `gate`.
pub fn match_rooms(gt: &[Polygon], rec: &[Polygon], dims: GridDims, gate: f64) -> MatchResult {
    let mut order: Vec<usize> = (0..gt.len()).collect();
    order.sort_by(|&a, &b| gt[b].area().total_cmp(&gt[a].area()).then(a.cmp(&b)));
    let mut used = vec![false; rec.len()];
    let mut out = MatchResult::default();
    for g in order {
        let mut best: Option<(usize, f64)> = None;
        for (r, p) in rec.iter().enumerate() {
            if used[r] {
                continue;
            }
            let iou = polygon_iou(&gt[g], p, dims);
            if iou > 0.0 && best.is_none_or(|(_, b)| iou > b) {
                best = Some((r, iou));
            }
        }
        match best {
            Some((r, iou)) if iou >= gate => {
                used[r] = true;
                out.pairs.push((g, r, iou));
            }
            _ => out.unmatched_gt.push(g),
        }
    }
    out.unmatched_gt.sort_unstable();
    out.unmatched_rec = (0..rec.len()).filter(|&r| !used[r]).collect();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
}

/// True-positive count with both denominators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub recovered: usize,
    pub ground_truth: usize,
}

impl Counts {
    pub fn rates(&self) -> PrecisionRecall {
        let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        PrecisionRecall {
            precision: div(self.tp, self.recovered),
            recall: div(self.tp, self.ground_truth),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub room: PrecisionRecall,
    pub corner: PrecisionRecall,
    pub angle: PrecisionRecall,
    pub ma: PrecisionRecall,
}

impl MetricsReport {
    fn from_rates(room: PrecisionRecall, corner: PrecisionRecall, angle: PrecisionRecall) -> Self {
        MetricsReport {
            room,
            corner,
            angle,
            ma: PrecisionRecall {
                precision: (room.precision + corner.precision + angle.precision) / 3.0,
                recall: (room.recall + corner.recall + angle.recall) / 3.0,
            },
        }
    }

    /// Mean of per-scene reports.
    pub fn mean(reports: &[MetricsReport]) -> MetricsReport {
        if reports.is_empty() {
            return MetricsReport::default();
        }
        let n = reports.len() as f64;
        let avg = |f: &dyn Fn(&MetricsReport) -> PrecisionRecall| PrecisionRecall {
            precision: reports.iter().map(|r| f(r).precision).sum::<f64>() / n,
            recall: reports.iter().map(|r| f(r).recall).sum::<f64>() / n,
        };
        MetricsReport::from_rates(avg(&|r| r.room), avg(&|r| r.corner), avg(&|r| r.angle))
    }

    pub fn table_header() -> String {
        format!(
            "{:<16} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6}\n{:<16} {:>13} {:>13} {:>13} {:>13}",
            "", "Prec", "Rec", "Prec", "Rec", "Prec", "Rec", "Prec", "Rec", "", "Room", "Corner", "Angle", "MA"
        )
    }

    pub fn table_row(&self, label: &str) -> String {
        format!(
            "{:<16} {:>6.3} {:>6.3} {:>6.3} {:>6.3} {:>6.3} {:>6.3} {:>6.3} {:>6.3}",
            label,
            self.room.precision,
            self.room.recall,
            self.corner.precision,
            self.corner.recall,
            self.angle.precision,
            self.angle.recall,
            self.ma.precision,
            self.ma.recall
        )
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", MetricsReport::table_header())?;
        write!(f, "{}", self.table_row("plan"))
    }
}

/// Full breakdown of one evaluation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Evaluation {
    pub matching: MatchResult,
    pub room: Counts,
    pub corner: Counts,
    pub angle: Counts,
    pub room_tp: Vec<bool>,
    /// Per recovered room, per corner.
    pub corner_tp: Vec<Vec<bool>>,
    pub angle_tp: Vec<Vec<bool>>,
    pub report: MetricsReport,
}

fn eroded_masks(rec: &[Polygon], dims: GridDims) -> Vec<Option<SegmentMask>> {
    rec.iter()
        .map(|p| SegmentMask::from_polygon(p, dims).ok().and_then(|m| m.eroded()))
        .collect()
}

/// Precision / recall of recovered rooms.
pub fn room_metric(m: &MatchResult, rec: &[Polygon], n_gt: usize, dims: GridDims) -> (Vec<bool>, Counts) {
    let er = eroded_masks(rec, dims);
    let tp: Vec<bool> = (0..rec.len())
        .map(|j| {
            m.gt_of(j).is_some()
                && (0..rec.len()).all(|k| {
                    k == j
                        || match (&er[j], &er[k]) {
                            (Some(a), Some(b)) => a.intersection_area(b) == 0,
                            _ => true,
                        }
                })
        })
        .collect();
    let counts = Counts {
        tp: tp.iter().filter(|&&t| t).count(),
        recovered: rec.len(),
        ground_truth: n_gt,
    };
    (tp, counts)
}

/// Corner pairs `(rec room, rec corner, gt corner)` of correct rooms.
fn corner_pairs(m: &MatchResult, gt: &[Polygon], rec: &[Polygon], room_tp: &[bool]) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for (j, r) in rec.iter().enumerate() {
        if !room_tp[j] {
            continue;
        }
        let g = &gt[m.gt_of(j).expect("room TP is matched")];
        let mut claimed = vec![false; r.len()];
        for (gi, gc) in g.vertices().iter().enumerate() {
            let (ri, d) = r
                .vertices()
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v.dist(*gc)))
                .fold((usize::MAX, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            if d <= CORNER_DIST && !claimed[ri] {
                claimed[ri] = true;
                out.push((j, ri, gi));
            }
        }
    }
    out
}

pub fn corner_metric(m: &MatchResult, gt: &[Polygon], rec: &[Polygon], room_tp: &[bool]) -> (Vec<Vec<bool>>, Counts) {
    let pairs = corner_pairs(m, gt, rec, room_tp);
    let mut tp: Vec<Vec<bool>> = rec.iter().map(|r| vec![false; r.len()]).collect();
    for &(j, ri, _) in &pairs {
        tp[j][ri] = true;
    }
    let counts = Counts {
        tp: pairs.len(),
        recovered: rec.iter().map(|r| r.len()).sum(),
        ground_truth: gt.iter().map(|g| g.len()).sum(),
    };
    (tp, counts)
}

pub fn angle_metric(m: &MatchResult, gt: &[Polygon], rec: &[Polygon], room_tp: &[bool]) -> (Vec<Vec<bool>>, Counts) {
    let pairs = corner_pairs(m, gt, rec, room_tp);
    let mut tp: Vec<Vec<bool>> = rec.iter().map(|r| vec![false; r.len()]).collect();
    let mut n = 0;
    for &(j, ri, gi) in &pairs {
        let g = &gt[m.gt_of(j).expect("matched")];
        let ra = interior_angles(&rec[j]).expect("valid polygon")[ri];
        let ga = interior_angles(g).expect("valid polygon")[gi];
        // The guard keeps an exact 5 degree deviation out despite rounding.
        if (ra - ga).abs().to_degrees() < ANGLE_TOL_DEG - 1e-9 {
            tp[j][ri] = true;
            n += 1;
        }
    }
    let counts = Counts {
        tp: n,
        recovered: rec.iter().map(|r| r.len()).sum(),
        ground_truth: gt.iter().map(|g| g.len()).sum(),
    };
    (tp, counts)
}

pub fn evaluate_with(gt: &[Polygon], rec: &[Polygon], dims: GridDims, gate: f64) -> Evaluation {
    let matching = match_rooms(gt, rec, dims, gate);
    let (room_tp, room) = room_metric(&matching, rec, gt.len(), dims);
    let (corner_tp, corner) = corner_metric(&matching, gt, rec, &room_tp);
    let (angle_tp, angle) = angle_metric(&matching, gt, rec, &room_tp);
    for j in 0..rec.len() {
        for k in 0..rec[j].len() {
            assert!(!angle_tp[j][k] || corner_tp[j][k], "angle TP outside corner TP");
            assert!(!corner_tp[j][k] || room_tp[j], "corner TP outside room TP");
        }
    }
    let report = MetricsReport::from_rates(room.rates(), corner.rates(), angle.rates());
    Evaluation {
        matching,
        room,
        corner,
        angle,
        room_tp,
        corner_tp,
        angle_tp,
        report,
    }
}

pub fn evaluate(gt: &[Polygon], rec: &[Polygon], dims: GridDims) -> MetricsReport {
    evaluate_with(gt, rec, dims, DEFAULT_MATCH_GATE).report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;

    const D: GridDims = GridDims::new(128, 128);

    fn r(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
        Polygon::rect(x0, y0, x1, y1).unwrap()
    }

    fn plan() -> Vec<Polygon> {
        vec![r(10., 10., 50., 40.), r(50., 10., 90., 40.), r(10., 40., 50., 80.), r(50., 40., 90., 80.)]
    }

    #[test]
    fn identity_is_perfect() {
        let gt = plan();
        let e = evaluate_with(&gt, &gt, D, DEFAULT_MATCH_GATE);
        assert!(e.matching.pairs.iter().all(|p| p.2 == 1.0 && p.0 == p.1));
        let rep = e.report;
        for pr in [rep.room, rep.corner, rep.angle, rep.ma] {
            assert_eq!(pr, PrecisionRecall { precision: 1.0, recall: 1.0 });
        }
    }

    #[test]
    fn empty_reconstruction() {
        let e = evaluate_with(&plan(), &[], D, DEFAULT_MATCH_GATE);
        assert_eq!(e.matching.unmatched_gt, vec![0, 1, 2, 3]);
        assert_eq!(e.report, MetricsReport::default());
    }

    #[test]
    fn larger_room_claims_shared_match() {
        let gt = vec![r(10., 10., 60., 60.), r(60., 10., 80., 60.)];
        let rec = vec![r(10., 10., 75., 60.)];
        let m = match_rooms(&gt, &rec, D, DEFAULT_MATCH_GATE);
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].0, 0);
        assert_eq!(m.unmatched_gt, vec![1]);
    }

    #[test]
    fn partial_recovery() {
        let gt = plan();
        let rep = evaluate(&gt, &gt[..3], D);
        assert_eq!(rep.room, PrecisionRecall { precision: 1.0, recall: 0.75 });
    }

    #[test]
    fn overlap_band_excludes_both() {
        let gt = vec![r(10., 10., 50., 40.), r(50., 10., 90., 40.)];
        let rec = vec![r(10., 10., 52., 40.), r(49., 10., 90., 40.)];
        let e = evaluate_with(&gt, &rec, D, DEFAULT_MATCH_GATE);
        assert_eq!(e.room_tp, vec![false, false]);
        // A one-pixel band is tolerated.
        let rec = vec![r(10., 10., 51., 40.), r(50., 10., 90., 40.)];
        let e = evaluate_with(&gt, &rec, D, DEFAULT_MATCH_GATE);
        assert_eq!(e.room_tp, vec![true, true]);
    }

    #[test]
    fn displaced_corner() {
        let gt = vec![r(10., 10., 60., 60.)];
        let rec = Polygon::from_coords(&[(10., 10.), (60., 10.), (72., 60.), (10., 60.)]).unwrap();
        let rep = evaluate(&gt, &[rec], D);
        assert_eq!(rep.corner, PrecisionRecall { precision: 0.75, recall: 0.75 });
    }

    #[test]
    fn nearest_corner_only() {
        let gt = vec![r(10., 10., 60., 60.)];
        let rec = Polygon::from_coords(&[(10., 10.), (55., 10.), (60., 14.), (60., 60.), (10., 60.)]).unwrap();
        let e = evaluate_with(&gt, &[rec], D, DEFAULT_MATCH_GATE);
        assert_eq!(e.corner.tp, 4);
        assert_eq!(e.corner_tp[0], vec![true, false, true, true, true]);
    }

    #[test]
    fn angle_threshold() {
        let gt = vec![r(20., 20., 70., 70.)];
        // Parallelogram with 85 / 95 degree corners.
        let s = 50.0 * 5f64.to_radians().tan();
        let rec = Polygon::from_coords(&[(20., 20.), (70., 20.), (70. + s, 70.), (20. + s, 70.)]).unwrap();
        let e = evaluate_with(&gt, &[rec], D, DEFAULT_MATCH_GATE);
        assert_eq!(e.corner.tp, 4);
        assert_eq!(e.angle.tp, 0);

        let tilt = 50.0 * 4f64.to_radians().tan();
        let rec = Polygon::from_coords(&[(20., 20.), (70., 20.), (70. + tilt, 70.), (20., 70.)]).unwrap();
        let e = evaluate_with(&gt, &[rec], D, DEFAULT_MATCH_GATE);
        assert_eq!(e.angle.tp, 4);
        assert_eq!(e.report.angle.precision, 1.0);
    }

    #[test]
    fn report_table_has_columns() {
        let rep = evaluate(&plan(), &plan(), D);
        let t = rep.to_string();
        for c in ["Room", "Corner", "Angle", "MA"] {
            assert!(t.contains(c));
        }
        assert_eq!(MetricsReport::mean(&[rep, MetricsReport::default()]).room.precision, 0.5);
    }

    #[test]
    fn reordering_does_not_change_the_report() {
        let gt = plan();
        let mut rec: Vec<Polygon> = gt.iter().map(|p| p.translated(Point2::new(1.5, -0.5))).collect();
        rec.push(r(95., 90., 120., 120.));
        let a = evaluate(&gt, &rec, D);
        let mut gt2 = gt.clone();
        gt2.reverse();
        rec.rotate_left(2);
        assert_eq!(a, evaluate(&gt2, &rec, D));
    }
}
