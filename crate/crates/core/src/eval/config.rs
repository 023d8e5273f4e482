use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::MvStrategy;
use crate::data::synthetic::SyntheticConfig;
use crate::data::Schema;
use crate::dro::{Formulation, PadmSettings};
use crate::error::{Error, Result};
use crate::moments::ShrinkageConfig;
use crate::predictor::MfConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetConfig {
    File {
        path: PathBuf,
        #[serde(default = "Schema::movielens_100k")]
        schema: Schema,
    },
    Synthetic(SyntheticConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MvMethod {
    pub alphas: Vec<f64>,
    pub strategy: MvStrategy,
}

impl Default for MvMethod {
    fn default() -> Self {
        MvMethod {
            alphas: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            strategy: MvStrategy::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DroMethod {
    pub kappas: Vec<(f64, f64)>,
    pub formulation: Formulation,
}

impl Default for DroMethod {
    fn default() -> Self {
        let grid = [0.1, 1.0, 5.0];
        DroMethod {
            kappas: grid.iter().flat_map(|&a| grid.iter().map(move |&b| (a, b))).collect(),
            formulation: Formulation::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Methods {
    pub top_n: bool,
    pub mean_variance: Option<MvMethod>,
    pub dro: Option<DroMethod>,
}

impl Default for Methods {
    fn default() -> Self {
        Methods {
            top_n: true,
            mean_variance: Some(MvMethod::default()),
            dro: Some(DroMethod::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub split_ratio: f64,
    /// Run `r` seeds its split, user sample and predictor with `base_seed + r`.
    pub base_seed: u64,
    pub runs: usize,
    pub users_per_run: usize,
    pub list_sizes: Vec<usize>,
    pub min_ratings: usize,
    pub threshold: f64,
    pub methods: Methods,
    pub predictor: MfConfig,
    pub shrinkage: ShrinkageConfig,
    pub padm: PadmSettings,
    /// Record selection wall times. Off, every time is written as zero so
    /// reports are byte-identical across runs.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetConfig::Synthetic(SyntheticConfig::default()),
            split_ratio: 0.6,
            base_seed: 0,
            runs: 10,
            users_per_run: 100,
            list_sizes: vec![3, 5],
            min_ratings: 50,
            threshold: 4.0,
            methods: Methods::default(),
            predictor: MfConfig::default(),
            shrinkage: ShrinkageConfig::default(),
            padm: PadmSettings::default(),
            timing: true,
        }
    }
}

impl ExperimentConfig {
    /// Reads TOML, or JSON when the extension is `.json`. Relative dataset
    /// paths are taken from the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        if let DatasetConfig::File { path: data, .. } = &mut cfg.dataset {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.runs == 0 || self.users_per_run == 0 {
            return bad("runs and users_per_run must be positive".into());
        }
        if self.list_sizes.is_empty() || self.list_sizes.contains(&0) {
            return bad("list_sizes must be nonempty and positive".into());
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split_ratio {} outside (0, 1)", self.split_ratio));
        }
        if !self.threshold.is_finite() {
            return bad("threshold must be finite".into());
        }
        if let Some(mv) = &self.methods.mean_variance {
            if mv.alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
                return bad("alphas must lie in [0, 1]".into());
            }
        }
        if let Some(dro) = &self.methods.dro {
            if dro.kappas.iter().any(|&(a, b)| !(a >= 0.0 && b >= 0.0)) {
                return bad("kappas must be nonnegative".into());
            }
        }
        self.padm.validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}
