//! Monte Carlo tree search over proposal selections.
//!
//! Level `d` of the tree picks an option for segment `d`: one of its
//! proposals or the skip option (always the last index). Every leaf is
//! refined before it is scored, and leaf results are memoized since
//! refinement is deterministic.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{merge_close_vertices, self_intersects, Point2, Polygon};
use crate::objective::{Objective, RoomView, Solution, Terms};
use crate::par::{self, Execution};
use crate::proposals::ProposalSet;

/// Leaves above which [`exhaustive_search`] refuses to run.
pub const EXHAUSTIVE_LIMIT: u128 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub iterations: usize,
    pub ucb_c: f64,
    /// Adam steps applied to every leaf before scoring.
    pub refine_steps: usize,
    /// Adam step size, in pixels.
    pub refine_lr: f64,
    /// Adam steps applied to the extracted solution.
    pub final_steps: usize,
    pub seed: u64,
    /// Consecutive vertices closer than this are merged at the end.
    pub merge_threshold: f64,
    /// Verify tree consistency after every iteration.
    pub check_invariants: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            iterations: 500,
            ucb_c: 1.0,
            refine_steps: 30,
            refine_lr: 0.3,
            final_steps: 200,
            seed: 0,
            merge_threshold: 5.0,
            check_invariants: cfg!(debug_assertions),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Spec("iterations must be at least 1".into()));
        }
        if !(self.ucb_c >= 0.0 && self.ucb_c.is_finite()) {
            return Err(Error::Spec(format!("ucb_c = {} must be finite and >= 0", self.ucb_c)));
        }
        if !(self.refine_lr > 0.0 && self.refine_lr.is_finite()) {
            return Err(Error::Spec(format!("refine_lr = {} must be positive", self.refine_lr)));
        }
        if !(self.merge_threshold >= 0.0 && self.merge_threshold.is_finite()) {
            return Err(Error::Spec("merge_threshold must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Move {
    pub segment_index: usize,
    pub option: usize,
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub mv: Option<Move>,
    pub parent: Option<usize>,
    pub depth: usize,
    /// Arena indices of expanded children.
    pub children: Vec<usize>,
    /// Options of segment `depth` not yet expanded.
    pub unexpanded: Vec<usize>,
    pub visit_count: u64,
    pub score_sum: f64,
    pub best_score: f64,
    /// Leaf choices that produced `best_score`.
    pub best_leaf: Vec<Option<usize>>,
    /// Rollouts started at this node.
    pub own_evals: u64,
    pub own_score_sum: f64,
}

impl TreeNode {
    pub fn mean(&self) -> f64 {
        if self.visit_count == 0 {
            0.0
        } else {
            self.score_sum / self.visit_count as f64
        }
    }
}

/// Search tree in an arena; index 0 is the root.
#[derive(Debug, Clone)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
    pub levels: usize,
}

impl Tree {
    pub fn new(set: &ProposalSet) -> Self {
        Tree {
            nodes: vec![TreeNode {
                mv: None,
                parent: None,
                depth: 0,
                children: Vec::new(),
                unexpanded: (0..set.option_count(0)).collect(),
                visit_count: 0,
                score_sum: 0.0,
                best_score: f64::NEG_INFINITY,
                best_leaf: Vec::new(),
                own_evals: 0,
                own_score_sum: 0.0,
            }],
            levels: set.len(),
        }
    }

    /// Options chosen on the path from the root to `node`.
    pub fn path(&self, mut node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        while let Some(mv) = self.nodes[node].mv {
            out.push(mv.option);
            node = self.nodes[node].parent.expect("non-root node has a parent");
        }
        out.reverse();
        out
    }

    fn expand(&mut self, node: usize, set: &ProposalSet, rng: &mut ChaCha8Rng) -> usize {
        let n = &mut self.nodes[node];
        let k = rng.gen_range(0..n.unexpanded.len());
        let option = n.unexpanded.swap_remove(k);
        let depth = n.depth + 1;
        let child = TreeNode {
            mv: Some(Move {
                segment_index: depth - 1,
                option,
            }),
            parent: Some(node),
            depth,
            children: Vec::new(),
            unexpanded: if depth < self.levels {
                (0..set.option_count(depth)).collect()
            } else {
                Vec::new()
            },
            visit_count: 0,
            score_sum: 0.0,
            best_score: f64::NEG_INFINITY,
            best_leaf: Vec::new(),
            own_evals: 0,
            own_score_sum: 0.0,
        };
        let id = self.nodes.len();
        self.nodes.push(child);
        self.nodes[node].children.push(id);
        id
    }

    fn backup(&mut self, start: usize, score: f64, leaf: &[Option<usize>]) {
        self.nodes[start].own_evals += 1;
        self.nodes[start].own_score_sum += score;
        let mut cur = Some(start);
        while let Some(i) = cur {
            let n = &mut self.nodes[i];
            n.visit_count += 1;
            n.score_sum += score;
            if score > n.best_score {
                n.best_score = score;
                n.best_leaf = leaf.to_vec();
            }
            cur = n.parent;
        }
    }

    /// Visit counts and score sums agree with children plus own rollouts.
    pub fn check_consistency(&self) -> Result<()> {
        for (i, n) in self.nodes.iter().enumerate() {
            let visits: u64 = n.children.iter().map(|&c| self.nodes[c].visit_count).sum::<u64>() + n.own_evals;
            let sum: f64 = n.children.iter().map(|&c| self.nodes[c].score_sum).sum::<f64>() + n.own_score_sum;
            let tol = 1e-9 * (1.0 + n.score_sum.abs());
            if visits != n.visit_count || (sum - n.score_sum).abs() > tol {
                return Err(Error::Contract(format!("tree node {i} is inconsistent")));
            }
            let mut opts: Vec<usize> = n
                .children
                .iter()
                .map(|&c| self.nodes[c].mv.expect("child move").option)
                .collect();
            opts.sort_unstable();
            opts.dedup();
            if opts.len() != n.children.len() {
                return Err(Error::Contract(format!("tree node {i} has duplicate children")));
            }
        }
        Ok(())
    }
}

/// UCB value of a child given its normalized mean score.
pub fn ucb_value(mean_normalized: f64, parent_visits: u64, child_visits: u64, c: f64) -> f64 {
    if child_visits == 0 {
        return f64::INFINITY;
    }
    mean_normalized + c * ((parent_visits as f64).ln() / child_visits as f64).sqrt()
}

/// Running min / max of raw leaf scores, used to map means into `[0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct ScoreRange {
    pub min: f64,
    pub max: f64,
}

impl Default for ScoreRange {
    fn default() -> Self {
        ScoreRange {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }
}

impl ScoreRange {
    pub fn unit() -> Self {
        ScoreRange { min: 0.0, max: 1.0 }
    }

    pub fn observe(&mut self, s: f64) {
        self.min = self.min.min(s);
        self.max = self.max.max(s);
    }

    pub fn normalize(&self, s: f64) -> f64 {
        if self.max > self.min {
            (s - self.min) / (self.max - self.min)
        } else {
            0.5
        }
    }
}

/// Child of `node` maximizing UCB; unexpanded options must be exhausted
/// first. Ties are broken uniformly at random.
pub fn ucb_select(tree: &Tree, node: usize, c: f64, range: &ScoreRange, rng: &mut impl Rng) -> Result<usize> {
    let n = &tree.nodes[node];
    if n.children.is_empty() {
        return Err(Error::Contract(format!("node {node} has no children to select from")));
    }
    let mut best = Vec::new();
    let mut best_v = f64::NEG_INFINITY;
    for &ch in &n.children {
        let cn = &tree.nodes[ch];
        let v = ucb_value(range.normalize(cn.mean()), n.visit_count, cn.visit_count, c);
        if v > best_v {
            best_v = v;
            best.clear();
            best.push(ch);
        } else if v == best_v {
            best.push(ch);
        }
    }
    Ok(*best.choose(rng).expect("at least one child"))
}

/// Completes the options on the path with uniformly random ones.
pub fn simulate(path: &[usize], set: &ProposalSet, rng: &mut impl Rng) -> Vec<Option<usize>> {
    (0..set.len())
        .map(|seg| {
            let opt = if seg < path.len() {
                path[seg]
            } else {
                rng.gen_range(0..set.option_count(seg))
            };
            (opt != set.skip_option(seg)).then_some(opt)
        })
        .collect()
}

/// Output of [`refine_solution`].
#[derive(Debug, Clone)]
pub struct Refined {
    pub solution: Solution,
    pub terms: Terms,
    /// Rooms that reverted to their input shape because the refined polygon
    /// was invalid.
    pub reverted: Vec<bool>,
    /// Objective value of every iterate.
    pub trace: Vec<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, x: &mut [f64], g: &[f64]) {
        self.t += 1;
        let (c1, c2) = (1.0 - Self::B1.powi(self.t), 1.0 - Self::B2.powi(self.t));
        for i in 0..x.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g[i] * g[i];
            x[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Adam on all vertex coordinates; returns the best iterate seen.
pub fn refine_solution(s: &Solution, obj: &Objective<'_>, steps: usize, lr: f64) -> Result<Refined> {
    let sizes: Vec<usize> = s.rooms.iter().map(|r| r.polygon.len()).collect();
    let mut x: Vec<f64> = s
        .rooms
        .iter()
        .flat_map(|r| r.polygon.vertices().iter().flat_map(|v| [v.x, v.y]))
        .collect();
    let unpack = |x: &[f64]| -> Vec<Vec<Point2>> {
        let mut out = Vec::with_capacity(sizes.len());
        let mut k = 0;
        for &n in &sizes {
            out.push((0..n).map(|i| Point2::new(x[k + 2 * i], x[k + 2 * i + 1])).collect());
            k += 2 * n;
        }
        out
    };
    let eval = |verts: &[Vec<Point2>], grad: bool| {
        let views: Vec<RoomView<'_>> = s
            .rooms
            .iter()
            .zip(verts)
            .map(|(r, v)| RoomView {
                vertices: v,
                mask: &r.mask,
                window: r.window,
            })
            .collect();
        obj.evaluate_views(&views, grad)
    };

    let mut trace = Vec::with_capacity(steps + 1);
    let mut best_x = x.clone();
    let mut best = f64::INFINITY;
    if steps > 0 && !s.rooms.is_empty() {
        let mut adam = Adam::new(x.len(), lr);
        for step in 0..=steps {
            let verts = unpack(&x);
            let e = eval(&verts, step < steps)?;
            trace.push(e.terms.total);
            if e.terms.total < best {
                best = e.terms.total;
                best_x.copy_from_slice(&x);
            }
            if step == steps {
                break;
            }
            let g: Vec<f64> = e.grads.iter().flat_map(|r| r.iter().flat_map(|p| [p.x, p.y])).collect();
            if g.iter().any(|v| !v.is_finite()) {
                break;
            }
            adam.step(&mut x, &g);
        }
    }

    let verts = unpack(&best_x);
    let mut out = s.clone();
    let mut reverted = vec![false; s.rooms.len()];
    for (i, (room, v)) in out.rooms.iter_mut().zip(verts).enumerate() {
        if steps == 0 || v.as_slice() == room.polygon.vertices() {
            continue;
        }
        match Polygon::new(v) {
            Ok(p) if !self_intersects(p.vertices()) && p.area() > 1.0 => room.polygon = p,
            _ => reverted[i] = true,
        }
    }
    let terms = obj.terms(&out)?;
    if trace.is_empty() {
        trace.push(terms.total);
    }
    Ok(Refined {
        solution: out,
        terms,
        reverted,
        trace,
    })
}

/// Memoized objective of refined leaves.
pub struct LeafEvaluator<'a> {
    pub set: &'a ProposalSet,
    pub objective: Objective<'a>,
    pub steps: usize,
    pub lr: f64,
    cache: Mutex<HashMap<Vec<Option<usize>>, f64>>,
}

impl<'a> LeafEvaluator<'a> {
    pub fn new(set: &'a ProposalSet, objective: Objective<'a>, cfg: &SearchConfig) -> Self {
        LeafEvaluator {
            set,
            objective,
            steps: cfg.refine_steps,
            lr: cfg.refine_lr,
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// Raw score `-L` of the refined leaf.
    pub fn score(&self, choices: &[Option<usize>]) -> Result<f64> {
        if let Some(&s) = self.cache.lock().expect("cache lock").get(choices) {
            return Ok(s);
        }
        let s = evaluate_leaf_uncached(self.set, &self.objective, choices, self.steps, self.lr)?;
        self.cache.lock().expect("cache lock").insert(choices.to_vec(), s);
        Ok(s)
    }

    pub fn distinct_leaves(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }
}

fn evaluate_leaf_uncached(
    set: &ProposalSet,
    obj: &Objective<'_>,
    choices: &[Option<usize>],
    steps: usize,
    lr: f64,
) -> Result<f64> {
    let s = Solution::from_choices(set, choices)?;
    let r = refine_solution(&s, obj, steps, lr)?;
    Ok(-r.terms.total)
}

/// Refines the leaf and returns its raw score `-L`.
pub fn evaluate_leaf(set: &ProposalSet, obj: &Objective<'_>, choices: &[Option<usize>], cfg: &SearchConfig) -> Result<f64> {
    if choices.len() != set.len() {
        return Err(Error::Contract("leaf must choose an option for every segment".into()));
    }
    evaluate_leaf_uncached(set, obj, choices, cfg.refine_steps, cfg.refine_lr)
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub solution: Solution,
    pub choices: Vec<Option<usize>>,
    /// `-L` of the returned solution.
    pub score: f64,
    /// Score of the selected leaf under the in-search refinement budget.
    pub leaf_score: f64,
    pub terms: Terms,
    pub iterations_run: usize,
    /// Root best score after every iteration.
    pub best_trace: Vec<f64>,
    /// Raw score of every leaf evaluation, in order.
    pub refinement_trace: Vec<f64>,
    pub distinct_leaves: usize,
    /// Rooms whose final refinement was rejected.
    pub reverted: Vec<bool>,
    pub wall_time: Duration,
}

/// Final pass shared by both searches: refine the chosen leaf thoroughly,
/// merge near-duplicate vertices and score the result.
fn finalize(
    set: &ProposalSet,
    obj: &Objective<'_>,
    choices: &[Option<usize>],
    cfg: &SearchConfig,
) -> Result<(Solution, Terms, Vec<bool>)> {
    let s = Solution::from_choices(set, choices)?;
    let r = refine_solution(&s, obj, cfg.final_steps, cfg.refine_lr)?;
    let mut sol = r.solution;
    for room in sol.rooms.iter_mut() {
        if let Ok(p) = merge_close_vertices(&room.polygon, cfg.merge_threshold) {
            if !self_intersects(p.vertices()) {
                room.polygon = p;
            }
        }
    }
    let terms = obj.terms(&sol)?;
    Ok((sol, terms, r.reverted))
}

/// Select / expand / simulate / update for `cfg.iterations` rounds, then a
/// greedy walk by best score, a final refinement and vertex merging.
pub fn run_search(set: &ProposalSet, obj: &Objective<'_>, cfg: &SearchConfig) -> Result<SearchResult> {
    let leaves = LeafEvaluator::new(set, *obj, cfg);
    run_search_with(&leaves, cfg)
}

/// As [`run_search`], sharing the leaf cache of `leaves`.
pub fn run_search_with(leaves: &LeafEvaluator<'_>, cfg: &SearchConfig) -> Result<SearchResult> {
    cfg.validate()?;
    let set = leaves.set;
    if set.is_empty() {
        return Err(Error::EmptyScene);
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tree = Tree::new(set);
    let mut range = ScoreRange::default();
    let mut best_trace = Vec::with_capacity(cfg.iterations);
    let mut refinement_trace = Vec::with_capacity(cfg.iterations);
    let k = set.len();
    for _ in 0..cfg.iterations {
        let mut node = 0;
        while tree.nodes[node].depth < k && tree.nodes[node].unexpanded.is_empty() {
            node = ucb_select(&tree, node, cfg.ucb_c, &range, &mut rng)?;
        }
        if tree.nodes[node].depth < k {
            node = tree.expand(node, set, &mut rng);
        }
        let leaf = simulate(&tree.path(node), set, &mut rng);
        let score = leaves.score(&leaf)?;
        range.observe(score);
        refinement_trace.push(score);
        tree.backup(node, score, &leaf);
        best_trace.push(tree.nodes[0].best_score);
        if cfg.check_invariants {
            tree.check_consistency()?;
        }
    }
    let distinct = leaves.distinct_leaves() as u128;
    if distinct > set.leaf_count() {
        return Err(Error::Contract(format!(
            "{distinct} distinct leaves exceed the tree's {}",
            set.leaf_count()
        )));
    }

    // Greedy walk by best score; below the deepest expanded node the best
    // leaf recorded there completes the selection.
    let mut node = 0;
    while let Some(&next) = tree.nodes[node]
        .children
        .iter()
        .max_by(|&&a, &&b| tree.nodes[a].best_score.total_cmp(&tree.nodes[b].best_score).then(b.cmp(&a)))
    {
        node = next;
    }
    let choices = tree.nodes[node].best_leaf.clone();
    let leaf_score = leaves.score(&choices)?;
    let (solution, terms, reverted) = finalize(set, &leaves.objective, &choices, cfg)?;
    Ok(SearchResult {
        solution,
        choices,
        score: -terms.total,
        leaf_score,
        terms,
        iterations_run: cfg.iterations,
        best_trace,
        refinement_trace,
        distinct_leaves: leaves.distinct_leaves(),
        reverted,
        wall_time: start.elapsed(),
    })
}

/// Leaf with mixed-radix index `idx`; segment 0 is the least significant digit.
fn leaf_choices(set: &ProposalSet, mut idx: u128) -> Vec<Option<usize>> {
    (0..set.len())
        .map(|seg| {
            let n = set.option_count(seg) as u128;
            let opt = (idx % n) as usize;
            idx /= n;
            (opt != set.skip_option(seg)).then_some(opt)
        })
        .collect()
}

/// Scores every leaf and returns the best (lowest index on ties).
pub fn exhaustive_search(set: &ProposalSet, obj: &Objective<'_>, cfg: &SearchConfig) -> Result<SearchResult> {
    let leaves = LeafEvaluator::new(set, *obj, cfg);
    exhaustive_search_with(&leaves, cfg, Execution::default())
}

pub fn exhaustive_search_with(leaves: &LeafEvaluator<'_>, cfg: &SearchConfig, exec: Execution) -> Result<SearchResult> {
    cfg.validate()?;
    let set = leaves.set;
    if set.is_empty() {
        return Err(Error::EmptyScene);
    }
    let n = set.leaf_count();
    if n > EXHAUSTIVE_LIMIT {
        return Err(Error::BudgetExceeded {
            leaves: n,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let start = Instant::now();
    let scores = par::map_indexed(n as usize, exec, |i| leaves.score(&leaf_choices(set, i as u128)));
    let scores: Vec<f64> = scores.into_iter().collect::<Result<_>>()?;
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    let choices = leaf_choices(set, best as u128);
    let (solution, terms, reverted) = finalize(set, &leaves.objective, &choices, cfg)?;
    Ok(SearchResult {
        solution,
        choices,
        score: -terms.total,
        leaf_score: scores[best],
        terms,
        iterations_run: n as usize,
        best_trace: Vec::new(),
        refinement_trace: scores,
        distinct_leaves: leaves.distinct_leaves(),
        reverted,
        wall_time: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GridDims, SegmentMask};
    use crate::objective::{oracle_iou_scorer, Weights};
    use crate::proposals::RoomSegment;
    use crate::scene::{DensityMap, GroundTruthPlan};

    fn node(visits: u64, sum: f64) -> TreeNode {
        TreeNode {
            mv: None,
            parent: Some(0),
            depth: 1,
            children: Vec::new(),
            unexpanded: Vec::new(),
            visit_count: visits,
            score_sum: sum,
            best_score: 0.0,
            best_leaf: Vec::new(),
            own_evals: 0,
            own_score_sum: 0.0,
        }
    }

    fn tree_with(children: Vec<TreeNode>) -> Tree {
        let mut root = node(children.iter().map(|c| c.visit_count).sum(), 0.0);
        root.parent = None;
        root.depth = 0;
        root.children = (1..=children.len()).collect();
        let mut nodes = vec![root];
        for (i, mut c) in children.into_iter().enumerate() {
            c.mv = Some(Move {
                segment_index: 0,
                option: i,
            });
            nodes.push(c);
        }
        Tree { nodes, levels: 1 }
    }

    #[test]
    fn ucb_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = tree_with(vec![node(5, 2.5), node(0, 0.0)]);
        assert_eq!(ucb_select(&t, 0, 1.0, &ScoreRange::unit(), &mut rng).unwrap(), 2);
        let t = tree_with(vec![node(10, 9.0), node(10, 1.0)]);
        assert_eq!(ucb_select(&t, 0, 1.0, &ScoreRange::unit(), &mut rng).unwrap(), 1);
        let t = tree_with(vec![node(100, 80.0), node(2, 1.2)]);
        let (a, b) = (ucb_value(0.8, 102, 100, 1.0), ucb_value(0.6, 102, 2, 1.0));
        assert!((a - 1.015).abs() < 0.01 && (b - 2.121).abs() < 0.01, "{a} {b}");
        assert_eq!(ucb_select(&t, 0, 1.0, &ScoreRange::unit(), &mut rng).unwrap(), 2);
        let leaf = tree_with(Vec::new());
        assert!(matches!(
            ucb_select(&leaf, 0, 1.0, &ScoreRange::unit(), &mut rng),
            Err(Error::Contract(_))
        ));
    }

    fn one_segment_set(proposals: usize) -> ProposalSet {
        let dims = GridDims::new(64, 64);
        let m = SegmentMask::from_fn(dims, |x, y| (10..40).contains(&x) && (10..30).contains(&y)).unwrap();
        let seg = RoomSegment::new(0, 1.0, m).unwrap();
        let polys = (0..proposals)
            .map(|k| {
                let mut v = vec![
                    Point2::new(10.0, 10.0),
                    Point2::new(40.0, 10.0),
                    Point2::new(40.0, 30.0),
                    Point2::new(10.0, 30.0),
                ];
                for j in 0..k {
                    v.insert(1, Point2::new(12.0 + 4.0 * j as f64, 10.0 - 0.5));
                }
                Polygon::new(v).unwrap()
            })
            .collect();
        ProposalSet::from_parts(vec![seg], vec![polys], vec![0.04]).unwrap()
    }

    #[test]
    fn rollouts_are_uniform() {
        let set = one_segment_set(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            let c = simulate(&[], &set, &mut rng);
            counts[c[0].unwrap_or(3)] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e4 - 0.25).abs() < 0.02, "{counts:?}");
        }
        assert_eq!(simulate(&[1], &set, &mut rng), vec![Some(1)]);
        let a = simulate(&[], &set, &mut ChaCha8Rng::seed_from_u64(5));
        let b = simulate(&[], &set, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn single_segment_search_selects_the_room() {
        let set = one_segment_set(1);
        let dims = GridDims::new(64, 64);
        let d = DensityMap::blank(dims);
        let gt = GroundTruthPlan::new(vec![Polygon::rect(10., 10., 40., 30.).unwrap()]).unwrap();
        let f = oracle_iou_scorer(&gt, dims);
        let obj = Objective::new(&d, Weights::default(), &f);
        let cfg = SearchConfig {
            iterations: 20,
            refine_steps: 3,
            final_steps: 5,
            check_invariants: true,
            ..Default::default()
        };
        let r = run_search(&set, &obj, &cfg).unwrap();
        assert_eq!(r.choices, vec![Some(0)]);
        assert!((r.score + obj.value(&r.solution).unwrap()).abs() < 1e-12);
        assert!(r.best_trace.windows(2).all(|w| w[1] >= w[0]));
        let e = exhaustive_search(&set, &obj, &cfg).unwrap();
        assert_eq!(e.choices, r.choices);
        assert!(e.leaf_score >= r.leaf_score);
        assert_eq!(e.refinement_trace.len(), 2);
    }

    #[test]
    fn empty_leaf_scores_zero() {
        let set = one_segment_set(1);
        let dims = GridDims::new(64, 64);
        let d = DensityMap::blank(dims);
        let gt = GroundTruthPlan::new(vec![Polygon::rect(10., 10., 40., 30.).unwrap()]).unwrap();
        let f = oracle_iou_scorer(&gt, dims);
        let obj = Objective::new(&d, Weights::default(), &f);
        let cfg = SearchConfig::default();
        assert_eq!(evaluate_leaf(&set, &obj, &[None], &cfg).unwrap(), 0.0);
        let a = evaluate_leaf(&set, &obj, &[Some(0)], &cfg).unwrap();
        let b = evaluate_leaf(&set, &obj, &[Some(0)], &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a > 0.0);
    }

    #[test]
    fn refine_zero_steps_is_identity() {
        let set = one_segment_set(2);
        let dims = GridDims::new(64, 64);
        let d = DensityMap::blank(dims);
        let gt = GroundTruthPlan::new(vec![Polygon::rect(10., 10., 40., 30.).unwrap()]).unwrap();
        let f = oracle_iou_scorer(&gt, dims);
        let obj = Objective::new(&d, Weights::default(), &f);
        let s = Solution::from_choices(&set, &[Some(1)]).unwrap();
        let r = refine_solution(&s, &obj, 0, 0.3).unwrap();
        assert_eq!(r.solution.rooms[0].polygon, s.rooms[0].polygon);
    }

    #[test]
    fn exhaustive_budget_is_enforced() {
        let dims = GridDims::new(32, 32);
        let mut segs = Vec::new();
        let mut props = Vec::new();
        for i in 0..20 {
            let m = SegmentMask::from_fn(dims, |x, y| x < 8 && y == i).unwrap();
            segs.push(RoomSegment::new(i as u32, 1.0, m).unwrap());
            props.push(vec![Polygon::rect(0.0, i as f64, 8.0, i as f64 + 1.0).unwrap()]);
        }
        let set = ProposalSet::from_parts(segs, props, vec![0.04]).unwrap();
        let d = DensityMap::blank(dims);
        let gt = GroundTruthPlan::new(vec![]).unwrap();
        let f = oracle_iou_scorer(&gt, dims);
        let obj = Objective::new(&d, Weights::default(), &f);
        assert!(matches!(
            exhaustive_search(&set, &obj, &SearchConfig::default()),
            Err(Error::BudgetExceeded { .. })
        ));
    }
}
