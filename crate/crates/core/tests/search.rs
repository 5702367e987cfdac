use roomtree::eval::evaluate;
use roomtree::objective::{oracle_iou_scorer, Objective};
use roomtree::par::Execution;
use roomtree::proposals::{build_proposal_set, ProposalSet, DEFAULT_DSET};
use roomtree::scene::{generate_synthetic_scene, Scene, SyntheticSceneSpec};
use roomtree::search::{exhaustive_search, run_search, SearchConfig};
use roomtree::{SearchResult, Weights};

fn small_scene(seed: u64) -> (Scene, ProposalSet) {
    let scene = generate_synthetic_scene(&SyntheticSceneSpec::noisy(2, 3, seed)).unwrap();
    let set = build_proposal_set(&scene.segments, &DEFAULT_DSET, Execution::Sequential).unwrap();
    (scene, set)
}

fn cfg(iterations: usize) -> SearchConfig {
    SearchConfig {
        iterations,
        refine_steps: 5,
        final_steps: 20,
        seed: 11,
        check_invariants: true,
        ..Default::default()
    }
}

fn search(scene: &Scene, set: &ProposalSet, cfg: &SearchConfig) -> SearchResult {
    let scorer = oracle_iou_scorer(scene.gt.as_ref().unwrap(), scene.density.dims());
    let obj = Objective::new(&scene.density, Weights::default(), &scorer);
    let r = run_search(set, &obj, cfg).unwrap();
    assert!((r.score + obj.value(&r.solution).unwrap()).abs() < 1e-9);
    r
}

#[test]
fn identical_seeds_reproduce_the_result() {
    let (scene, set) = small_scene(3);
    let a = search(&scene, &set, &cfg(40));
    let b = search(&scene, &set, &cfg(40));
    assert_eq!(a.choices, b.choices);
    assert_eq!(a.best_trace, b.best_trace);
    for (p, q) in a.solution.polygons().iter().zip(b.solution.polygons()) {
        assert_eq!(p.len(), q.len());
        for (u, v) in p.vertices().iter().zip(q.vertices()) {
            assert!(u.dist(*v) <= 1e-9);
        }
    }
}

#[test]
fn best_score_grows_with_the_budget() {
    let (scene, set) = small_scene(5);
    let short = search(&scene, &set, &cfg(15));
    let long = search(&scene, &set, &cfg(45));
    assert_eq!(short.iterations_run, 15);
    assert_eq!(&long.best_trace[..15], &short.best_trace[..]);
    assert!(long.best_trace.windows(2).all(|w| w[1] >= w[0]));
    assert!(long.leaf_score >= short.leaf_score);
}

#[test]
fn a_single_iteration_still_returns_a_valid_solution() {
    for seed in 0..4 {
        let (scene, set) = small_scene(seed);
        let r = search(&scene, &set, &cfg(1));
        assert_eq!(r.choices.len(), set.len());
        for (seg, c) in r.choices.iter().enumerate() {
            if let Some(k) = c {
                assert!(*k < set.proposals(seg).len());
            }
        }
        for p in r.solution.polygons() {
            assert!(p.len() >= 3);
            assert!(p.is_simple());
            assert!(p.area() > 0.0);
        }
    }
}

#[test]
fn exhaustive_search_dominates() {
    for seed in [1, 2, 7] {
        let (scene, set) = small_scene(seed);
        if set.len() > 4 {
            continue;
        }
        let c = cfg(30);
        let scorer = oracle_iou_scorer(scene.gt.as_ref().unwrap(), scene.density.dims());
        let obj = Objective::new(&scene.density, Weights::default(), &scorer);
        let mcts = run_search(&set, &obj, &c).unwrap();
        let full = exhaustive_search(&set, &obj, &c).unwrap();
        assert!(full.leaf_score >= mcts.leaf_score - 1e-12, "seed {seed}");
        assert_eq!(full.distinct_leaves as u128, set.leaf_count());
    }
}

#[test]
fn the_false_positive_is_left_out() {
    let spec = SyntheticSceneSpec {
        false_positive_prob: 1.0,
        ..SyntheticSceneSpec::noiseless(4, 4, 21)
    };
    let scene = generate_synthetic_scene(&spec).unwrap();
    let set = build_proposal_set(&scene.segments, &DEFAULT_DSET, Execution::Sequential).unwrap();
    assert!(set.len() >= 5);
    let r = search(&scene, &set, &SearchConfig { refine_steps: 10, ..cfg(150) });
    let gt = scene.gt.as_ref().unwrap();
    let report = evaluate(&gt.rooms, &r.solution.polygons(), scene.density.dims());
    assert_eq!(r.solution.rooms.len(), 4, "{:?}", r.choices);
    assert_eq!(report.room.precision, 1.0);
    assert_eq!(report.room.recall, 1.0);
}
