use proptest::prelude::*;
use roomtree::eval::{evaluate, evaluate_with, DEFAULT_MATCH_GATE};
use roomtree::pipeline::dp_baseline;
use roomtree::raster::render_hard;
use roomtree::scene::{
    density_from_points, generate_synthetic_scene, load_scene, save_scene, PointCloud, SyntheticSceneSpec,
};
use roomtree::GridDims;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_rooms_never_overlap(seed in any::<u64>(), l in 0.0f64..1.0, rot in any::<bool>(), noisy in any::<bool>()) {
        let base = if noisy { SyntheticSceneSpec::noisy(1, 7, seed) } else { SyntheticSceneSpec::noiseless(1, 7, seed) };
        let spec = SyntheticSceneSpec { l_shape_prob: l, non_manhattan_prob: if rot { 1.0 } else { 0.0 }, ..base };
        let scene = generate_synthetic_scene(&spec).unwrap();
        let gt = scene.gt.as_ref().unwrap();
        prop_assert!(!gt.rooms.is_empty());
        prop_assert!(gt.check_overlap(scene.density.dims()).is_ok());
        for r in &gt.rooms {
            prop_assert!(r.is_simple());
        }
        prop_assert!(scene.density.grid().values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn point_density_peaks_at_one(pts in proptest::collection::vec((-50.0f64..50.0, -20.0f64..80.0, 0.0f64..3.0), 1..300)) {
        let pc = PointCloud { points: pts.iter().map(|&(x, y, z)| [x, y, z]).collect() };
        let d = density_from_points(&pc, GridDims::new(64, 48)).unwrap();
        prop_assert_eq!(d.grid().max(), 1.0);
        // Every point lands inside the grid, so the counts add up.
        let min = d.grid().values().iter().cloned().filter(|v| *v > 0.0).fold(1.0, f64::min);
        prop_assert!((d.grid().sum() / min - pts.len() as f64).abs() < 1e-6);
    }

    #[test]
    fn evaluation_ignores_room_order(seed in 0u64..200, shift in 0usize..7) {
        let scene = generate_synthetic_scene(&SyntheticSceneSpec::noisy(2, 6, seed)).unwrap();
        let dims = scene.density.dims();
        let gt = scene.gt.clone().unwrap().rooms;
        let mut rec = dp_baseline(&scene, 0.02).unwrap();
        let a = evaluate(&gt, &rec, dims);
        let n = rec.len().max(1);
        rec.rotate_left(shift % n);
        rec.reverse();
        let mut gt2 = gt.clone();
        gt2.rotate_right(shift % gt.len());
        let b = evaluate(&gt2, &rec, dims);
        prop_assert_eq!(a, b);
        for pr in [a.room, a.corner, a.angle, a.ma] {
            prop_assert!((0.0..=1.0).contains(&pr.precision) && (0.0..=1.0).contains(&pr.recall));
        }
        prop_assert_eq!(a.ma.precision, (a.room.precision + a.corner.precision + a.angle.precision) / 3.0);
    }
}

#[test]
fn noiseless_segments_are_the_rooms() {
    for seed in 0..10 {
        let scene = generate_synthetic_scene(&SyntheticSceneSpec::noiseless(2, 6, seed)).unwrap();
        let dims = scene.density.dims();
        let gt = scene.gt.as_ref().unwrap();
        assert_eq!(gt.rooms.len(), scene.segments.len());
        for (room, seg) in gt.rooms.iter().zip(&scene.segments) {
            let hard = render_hard(room, dims);
            let m: Vec<bool> = hard.values().iter().map(|v| *v > 0.5).collect();
            assert_eq!(m.as_slice(), seg.mask.data(), "seed {seed}");
        }
    }
}

#[test]
fn saved_scenes_load_back_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    for seed in [0, 1000, 1001] {
        let spec = if seed == 0 {
            SyntheticSceneSpec::noiseless(3, 6, seed)
        } else {
            SyntheticSceneSpec::noisy(3, 6, seed)
        };
        let scene = generate_synthetic_scene(&spec).unwrap();
        let path = dir.path().join(seed.to_string());
        save_scene(&scene, &path).unwrap();
        let back = load_scene(&path).unwrap();
        assert_eq!(back.gt, scene.gt);
        assert_eq!(back.segments.len(), scene.segments.len());
        for (a, b) in back.segments.iter().zip(&scene.segments) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.mask.data(), b.mask.data());
        }
        let (va, vb) = (back.density.grid().values(), scene.density.grid().values());
        assert!(va.iter().zip(vb).all(|(a, b)| (a - b).abs() <= 0.5 / 65535.0));
        // A second round trip is exact.
        save_scene(&back, &path).unwrap();
        let again = load_scene(&path).unwrap();
        assert_eq!(again.density.grid().values(), back.density.grid().values());
    }
}

#[test]
fn dp_baseline_loses_angles_on_jittered_scenes() {
    let (mut room, mut angle) = (0.0, 0.0);
    let n = 12;
    for seed in 0..n {
        let scene = generate_synthetic_scene(&SyntheticSceneSpec::noisy(3, 6, 500 + seed)).unwrap();
        let gt = &scene.gt.as_ref().unwrap().rooms;
        let rec = dp_baseline(&scene, 0.01).unwrap();
        let e = evaluate_with(gt, &rec, scene.density.dims(), DEFAULT_MATCH_GATE);
        room += e.report.room.precision;
        angle += e.report.angle.precision;
    }
    let (room, angle) = (room / n as f64, angle / n as f64);
    assert!(angle + 0.2 < room, "room {room} angle {angle}");
}
