//! End-to-end solve: proposals, tree search, final plan.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Polygon;
use crate::objective::{density_coverage_scorer, oracle_iou_scorer, FitnessScorer, Objective, Weights, OCCUPANCY_THRESHOLD};
use crate::par::Execution;
use crate::proposals::{build_proposal_set, polygonize_segment, ProposalSet, DEFAULT_DSET};
use crate::scene::Scene;
use crate::search::{run_search, SearchConfig, SearchResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScorerChoice {
    /// IoU against the ground-truth room union.
    Oracle,
    /// IoU against the filled occupancy of the density map.
    DensityCoverage,
}

impl FromStr for ScorerChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(ScorerChoice::Oracle),
            "density-coverage" => Ok(ScorerChoice::DensityCoverage),
            _ => Err(Error::Spec(format!("unknown scorer {s:?} (expected oracle or density-coverage)"))),
        }
    }
}

impl fmt::Display for ScorerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScorerChoice::Oracle => "oracle",
            ScorerChoice::DensityCoverage => "density-coverage",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub weights: Weights,
    pub search: SearchConfig,
    pub dset: Vec<f64>,
    pub scorer: ScorerChoice,
    pub exec: Execution,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            weights: Weights::default(),
            search: SearchConfig::default(),
            dset: DEFAULT_DSET.to_vec(),
            scorer: ScorerChoice::Oracle,
            exec: Execution::default(),
        }
    }
}

impl PipelineConfig {
    /// Same search without any gradient refinement.
    pub fn without_refinement(&self) -> Self {
        let mut c = self.clone();
        c.search.refine_steps = 0;
        c.search.final_steps = 0;
        c
    }
}

pub fn make_scorer(scene: &Scene, choice: ScorerChoice) -> Result<Box<dyn FitnessScorer>> {
    Ok(match choice {
        ScorerChoice::Oracle => {
            let gt = scene
                .gt
                .as_ref()
                .ok_or_else(|| Error::Spec("the oracle scorer needs a ground-truth plan".into()))?;
            Box::new(oracle_iou_scorer(gt, scene.density.dims()))
        }
        ScorerChoice::DensityCoverage => Box::new(density_coverage_scorer(&scene.density, OCCUPANCY_THRESHOLD)?),
    })
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub proposals: ProposalSet,
    pub result: SearchResult,
    pub rooms: Vec<Polygon>,
}

pub fn solve(scene: &Scene, cfg: &PipelineConfig) -> Result<SolveOutput> {
    cfg.weights.validate()?;
    cfg.search.validate()?;
    let scorer = make_scorer(scene, cfg.scorer)?;
    let proposals = build_proposal_set(&scene.segments, &cfg.dset, cfg.exec)?;
    let mut obj = Objective::new(&scene.density, cfg.weights, scorer.as_ref());
    obj.exec = cfg.exec;
    let result = run_search(&proposals, &obj, &cfg.search)?;
    let rooms = result.solution.polygons();
    Ok(SolveOutput {
        proposals,
        result,
        rooms,
    })
}

/// Baseline: every input segment polygonized once at factor `d`, no
/// selection and no refinement.
pub fn dp_baseline(scene: &Scene, d: f64) -> Result<Vec<Polygon>> {
    let mut out = Vec::new();
    for s in &scene.segments {
        if let Some(p) = polygonize_segment(s, &[d])?.into_iter().next() {
            out.push(p);
        }
    }
    Ok(out)
}
