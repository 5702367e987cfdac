//! Run configuration: a flat TOML file overlaid by command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use roomtree::pipeline::{PipelineConfig, ScorerChoice};
use roomtree::{SearchConfig, Weights};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emit {
    Svg,
    Pgm,
    Json,
    Trace,
}

impl FromStr for Emit {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "svg" => Emit::Svg,
            "pgm" => Emit::Pgm,
            "json" => Emit::Json,
            "trace" => Emit::Trace,
            _ => bail!("unknown emit kind {s:?} (expected svg, pgm, json or trace)"),
        })
    }
}

impl fmt::Display for Emit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Emit::Svg => "svg",
            Emit::Pgm => "pgm",
            Emit::Json => "json",
            Emit::Trace => "trace",
        })
    }
}

pub const DEFAULT_EMIT: [Emit; 3] = [Emit::Svg, Emit::Json, Emit::Trace];

/// Keys accepted in a config file. Every field is optional; unknown keys
/// are an error.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub scene: Option<PathBuf>,
    pub segments: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub scorer: Option<String>,
    pub iterations: Option<usize>,
    pub seed: Option<u64>,
    pub refine_steps: Option<usize>,
    pub final_steps: Option<usize>,
    pub refine_lr: Option<f64>,
    pub ucb_c: Option<f64>,
    pub merge_threshold: Option<f64>,
    pub lambda_f: Option<f64>,
    pub lambda_ang: Option<f64>,
    pub lambda_glob: Option<f64>,
    pub lambda_0: Option<f64>,
    pub dset: Option<Vec<f64>>,
    pub emit: Option<Vec<String>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("{}: cannot read config", path.display()))?;
        toml::from_str(&text).with_context(|| format!("{}: invalid config", path.display()))
    }

    /// Fields set in `other` win.
    pub fn overlay(self, other: FileConfig) -> FileConfig {
        macro_rules! pick {
            ($($f:ident),*) => {
                FileConfig { $($f: other.$f.or(self.$f)),* }
            };
        }
        pick!(
            scene, segments, gt, out, scorer, iterations, seed, refine_steps, final_steps, refine_lr, ucb_c,
            merge_threshold, lambda_f, lambda_ang, lambda_glob, lambda_0, dset, emit
        )
    }
}

/// Fully resolved and validated solve configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub scene: PathBuf,
    pub segments: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub out: PathBuf,
    pub scorer: ScorerChoice,
    pub weights: Weights,
    pub search: SearchConfig,
    pub dset: Vec<f64>,
    pub emit: Vec<Emit>,
}

impl RunConfig {
    pub fn resolve(f: FileConfig) -> Result<Self> {
        let scene = f.scene.context("no scene given (--scene or `scene` in the config file)")?;
        let out = f.out.context("no output directory given (--out or `out` in the config file)")?;
        let d = PipelineConfig::default();
        let scorer = match &f.scorer {
            Some(s) => s.parse::<ScorerChoice>()?,
            None => d.scorer,
        };
        let w = d.weights;
        let weights = Weights {
            lambda_f: f.lambda_f.unwrap_or(w.lambda_f),
            lambda_ang: f.lambda_ang.unwrap_or(w.lambda_ang),
            lambda_glob: f.lambda_glob.unwrap_or(w.lambda_glob),
            lambda_0: f.lambda_0.unwrap_or(w.lambda_0),
        };
        let s = d.search;
        let search = SearchConfig {
            iterations: f.iterations.unwrap_or(s.iterations),
            ucb_c: f.ucb_c.unwrap_or(s.ucb_c),
            refine_steps: f.refine_steps.unwrap_or(s.refine_steps),
            refine_lr: f.refine_lr.unwrap_or(s.refine_lr),
            final_steps: f.final_steps.unwrap_or(s.final_steps),
            seed: f.seed.unwrap_or(s.seed),
            merge_threshold: f.merge_threshold.unwrap_or(s.merge_threshold),
            check_invariants: s.check_invariants,
        };
        let emit = match &f.emit {
            Some(v) => v.iter().map(|e| e.parse()).collect::<Result<Vec<Emit>>>()?,
            None => DEFAULT_EMIT.to_vec(),
        };
        let dset = f.dset.unwrap_or(d.dset);
        if dset.is_empty() || dset.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            bail!("dset must be a non-empty list of positive factors");
        }
        weights.validate()?;
        search.validate()?;
        Ok(RunConfig {
            scene,
            segments: f.segments,
            gt: f.gt,
            out,
            scorer,
            weights,
            search,
            dset,
            emit,
        })
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            weights: self.weights,
            search: self.search,
            dset: self.dset.clone(),
            scorer: self.scorer,
            ..Default::default()
        }
    }

    pub fn emits(&self, e: Emit) -> bool {
        self.emit.contains(&e)
    }

    /// SHA-256 over everything that can change the plan. Output paths and
    /// emit flags are left out.
    pub fn hash(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            scorer: ScorerChoice,
            weights: &'a Weights,
            search: &'a SearchConfig,
            dset: &'a [f64],
        }
        let key = Key {
            scorer: self.scorer,
            weights: &self.weights,
            search: &self.search,
            dset: &self.dset,
        };
        let bytes = serde_json::to_vec(&key).expect("serializable config");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> FileConfig {
        FileConfig {
            scene: Some("s".into()),
            out: Some("o".into()),
            ..Default::default()
        }
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(toml::from_str::<FileConfig>("iterations = 3\nbogus = 1\n").is_err());
        let f: FileConfig = toml::from_str("iterations = 3\nlambda_ang = 0.5\nemit = [\"svg\"]\n").unwrap();
        assert_eq!(f.iterations, Some(3));
    }

    #[test]
    fn flags_override_file() {
        let file = FileConfig {
            iterations: Some(10),
            seed: Some(1),
            ..base()
        };
        let flags = FileConfig {
            seed: Some(9),
            ..Default::default()
        };
        let c = RunConfig::resolve(file.overlay(flags)).unwrap();
        assert_eq!(c.search.iterations, 10);
        assert_eq!(c.search.seed, 9);
    }

    #[test]
    fn validation() {
        assert!(RunConfig::resolve(FileConfig::default()).is_err());
        let bad = FileConfig {
            lambda_f: Some(-1.0),
            ..base()
        };
        assert!(RunConfig::resolve(bad).is_err());
        let bad = FileConfig {
            emit: Some(vec!["gif".into()]),
            ..base()
        };
        assert!(RunConfig::resolve(bad).is_err());
    }

    #[test]
    fn hash_ignores_paths() {
        let a = RunConfig::resolve(base()).unwrap();
        let b = RunConfig::resolve(FileConfig {
            out: Some("elsewhere".into()),
            ..base()
        })
        .unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig::resolve(FileConfig {
            seed: Some(3),
            ..base()
        })
        .unwrap();
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
