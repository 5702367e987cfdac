use std::sync::Arc;

use roomtree::objective::{oracle_iou_scorer, Objective, Solution, Weights};
use roomtree::search::refine_solution;
use roomtree::{DensityMap, GridDims, GroundTruthPlan, Point2, Polygon, SegmentMask};

fn worst_corner_error(p: &Polygon, truth: &Polygon) -> f64 {
    truth
        .vertices()
        .iter()
        .map(|t| p.vertices().iter().map(|v| v.dist(*t)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

#[test]
fn jittered_rectangle_snaps_back() {
    let dims = GridDims::new(96, 96);
    let truth = Polygon::rect(20.0, 20.0, 70.0, 60.0).unwrap();
    let start = Polygon::new(vec![
        Point2::new(22.3, 18.1),
        Point2::new(67.6, 21.7),
        Point2::new(72.4, 57.2),
        Point2::new(18.5, 62.8),
    ])
    .unwrap();
    let mask = Arc::new(SegmentMask::from_polygon(&truth, dims).unwrap());
    let sol = Solution::from_rooms(vec![(start.clone(), mask)]);
    let density = DensityMap::blank(dims);
    let scorer = oracle_iou_scorer(&GroundTruthPlan::new(vec![truth.clone()]).unwrap(), dims);
    let obj = Objective::new(&density, Weights::default(), &scorer);

    let before = obj.value(&sol).unwrap();
    let r = refine_solution(&sol, &obj, 50, 0.3).unwrap();
    let after = obj.value(&r.solution).unwrap();
    assert!(after < before, "{after} !< {before}");
    assert!(worst_corner_error(&start, &truth) > 2.5);
    let err = worst_corner_error(&r.solution.polygons()[0], &truth);
    assert!(err < 1.0, "corner error {err}");
    assert!(!r.reverted[0]);
}

#[test]
fn abutting_rooms_stop_overlapping() {
    let dims = GridDims::new(128, 96);
    let gt = GroundTruthPlan::new(vec![
        Polygon::rect(20.0, 20.0, 58.0, 60.0).unwrap(),
        Polygon::rect(58.0, 20.0, 100.0, 60.0).unwrap(),
    ])
    .unwrap();
    // Each room pokes 2 px past the shared wall: a 4 px wide overlap band.
    let a = Polygon::rect(20.0, 20.0, 60.0, 60.0).unwrap();
    let b = Polygon::rect(56.0, 20.0, 100.0, 60.0).unwrap();
    let masks: Vec<_> = gt.rooms.iter().map(|r| Arc::new(SegmentMask::from_polygon(r, dims).unwrap())).collect();
    let sol = Solution::from_rooms(vec![(a, masks[0].clone()), (b, masks[1].clone())]);
    let density = DensityMap::blank(dims);
    let scorer = oracle_iou_scorer(&gt, dims);
    let obj = Objective::new(&density, Weights::default(), &scorer);

    let overlap = |s: &Solution| {
        let p = s.polygons();
        let ma = SegmentMask::from_polygon(&p[0], dims).unwrap();
        ma.intersection_area(&SegmentMask::from_polygon(&p[1], dims).unwrap())
    };
    let before = overlap(&sol);
    assert_eq!(before, 160);
    let r = refine_solution(&sol, &obj, 200, 0.3).unwrap();
    let after = overlap(&r.solution);
    assert!(after as f64 <= 0.2 * before as f64, "overlap {before} -> {after}");
}

#[test]
fn refinement_trace_starts_at_input_and_never_returns_worse() {
    let dims = GridDims::new(64, 64);
    let truth = Polygon::rect(10.0, 12.0, 50.0, 44.0).unwrap();
    let start = Polygon::rect(12.0, 10.0, 47.0, 45.0).unwrap();
    let mask = Arc::new(SegmentMask::from_polygon(&truth, dims).unwrap());
    let sol = Solution::from_rooms(vec![(start, mask)]);
    let density = DensityMap::blank(dims);
    let scorer = oracle_iou_scorer(&GroundTruthPlan::new(vec![truth]).unwrap(), dims);
    let obj = Objective::new(&density, Weights::default(), &scorer);
    let r = refine_solution(&sol, &obj, 20, 0.3).unwrap();
    assert_eq!(r.trace.len(), 21);
    assert!((r.trace[0] - obj.value(&sol).unwrap()).abs() < 1e-12);
    let best = r.trace.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!((obj.value(&r.solution).unwrap() - best).abs() < 1e-9);
    assert!((r.terms.total - best).abs() < 1e-9);
}
