use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{gen_gaussian_mixture, gen_imbalanced, read_csv, read_idx, train_eval, Dataset};
use crate::engine::{ALConfig, ProbeToggles};
use crate::error::{Error, Result};
use crate::influence::{DEFAULT_CAP, DEFAULT_DAMPING};
use crate::model::{Architecture, GradScope, TrainConfig};
use crate::selection::StrategyKind;

fn yes() -> bool {
    true
}

fn default_initial_fraction() -> f64 {
    0.1
}

fn default_multiplier() -> usize {
    10
}

fn default_damping() -> f64 {
    DEFAULT_DAMPING
}

fn default_cap() -> usize {
    DEFAULT_CAP
}

/// Where the samples come from. Generated data and the train/eval split
/// use `seed` when given, the run seed otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    GaussianMixture {
        classes: usize,
        per_class: usize,
        dim: usize,
        separation: f64,
        eval_count: usize,
        #[serde(default = "yes")]
        normalize: bool,
        /// Per-class keep ratios applied after generation.
        #[serde(default)]
        imbalance: Option<Vec<f64>>,
        #[serde(default)]
        seed: Option<u64>,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        eval_images: PathBuf,
        eval_labels: PathBuf,
    },
    Csv {
        path: PathBuf,
        label_column: String,
        eval_count: usize,
        #[serde(default = "yes")]
        normalize: bool,
        #[serde(default)]
        seed: Option<u64>,
    },
}

impl DatasetSpec {
    /// Relative paths are resolved against `base` (the config's directory).
    pub fn load(&self, run_seed: u64, base: &Path) -> Result<(Dataset, Dataset)> {
        let at = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        match self {
            DatasetSpec::GaussianMixture {
                classes,
                per_class,
                dim,
                separation,
                eval_count,
                normalize,
                imbalance,
                seed,
            } => {
                let seed = seed.unwrap_or(run_seed);
                let mut ds = gen_gaussian_mixture(*classes, *per_class, *dim, *separation, seed)?;
                if let Some(profile) = imbalance {
                    ds = gen_imbalanced(&ds, profile, seed)?;
                }
                train_eval(&ds, *eval_count, seed, *normalize)
            }
            DatasetSpec::Idx {
                train_images,
                train_labels,
                eval_images,
                eval_labels,
            } => {
                let train = read_idx(at(train_images), at(train_labels))?;
                let eval = read_idx(at(eval_images), at(eval_labels))?;
                if train.feature_shape() != eval.feature_shape() {
                    return Err(Error::config("dataset", "train and eval images differ in shape"));
                }
                Ok((train, eval))
            }
            DatasetSpec::Csv {
                path,
                label_column,
                eval_count,
                normalize,
                seed,
            } => {
                let ds = read_csv(at(path), label_column)?;
                train_eval(&ds, *eval_count, seed.unwrap_or(run_seed), *normalize)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            DatasetSpec::GaussianMixture {
                classes,
                per_class,
                dim,
                separation,
                ..
            } => {
                if *classes < 2 {
                    return Err(Error::config("dataset.classes", "must be at least 2"));
                }
                if *per_class == 0 {
                    return Err(Error::config("dataset.per_class", "must be at least 1"));
                }
                if *dim == 0 {
                    return Err(Error::config("dataset.dim", "must be at least 1"));
                }
                if !separation.is_finite() {
                    return Err(Error::config("dataset.separation", "must be finite"));
                }
            }
            DatasetSpec::Csv { label_column, .. } if label_column.is_empty() => {
                return Err(Error::config("dataset.label_column", "must not be empty"));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Network family; input size and class count come from the data.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Logistic,
    Mlp { hidden: Vec<usize> },
    /// Small two-block CNN; needs image data (`[channels, height, width]`).
    Cnn,
}

impl ModelSpec {
    pub fn architecture(&self, data: &Dataset) -> Result<Architecture> {
        let classes = data.classes();
        Ok(match self {
            ModelSpec::Logistic => Architecture::logistic(data.feature_len(), classes),
            ModelSpec::Mlp { hidden } => {
                if hidden.contains(&0) {
                    return Err(Error::config("model.hidden", "layer widths must be positive"));
                }
                Architecture::mlp(data.feature_len(), hidden, classes)
            }
            ModelSpec::Cnn => match *data.feature_shape() {
                [c, h, w] => Architecture::small_cnn(c, h, w, classes),
                _ => return Err(Error::config("model.kind", "cnn needs image-shaped data")),
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlSection {
    pub cycles: usize,
    pub budget: usize,
    #[serde(default = "default_initial_fraction")]
    pub initial_fraction: f64,
    #[serde(default = "default_multiplier")]
    pub subset_multiplier: usize,
    /// Strategy names, each run over every seed.
    pub strategies: Vec<String>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "yes")]
    pub retrain_from_scratch: bool,
    #[serde(default)]
    pub scope: GradScope,
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_cap")]
    pub hessian_cap: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    pub al: AlSection,
    #[serde(default)]
    pub probes: ProbeToggles,
    /// Model trained from scratch on each run's final labeled pool.
    #[serde(default)]
    pub transfer: Option<ModelSpec>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

/// Command-line replacements for config fields.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub strategy: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::load_with(path, &Overrides::default())
    }

    /// Reads a config and applies overrides before validating, so a bad
    /// field can be replaced from the command line.
    pub fn load_with(path: impl AsRef<Path>, overrides: &Overrides) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
        let mut config: Self = serde_json::from_str(&text).map_err(|e| Error::config("config", e.to_string()))?;
        config.apply(overrides)?;
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        if let Some(seed) = o.seed {
            self.seeds = vec![seed];
        }
        if let Some(s) = &o.strategy {
            self.al.strategies = vec![s.clone()];
        }
        self.validate()
    }

    /// Checks everything that does not need the data.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(Error::config("seeds", "duplicate seed"));
        }
        self.strategies()?;
        self.dataset.validate()?;
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::config("output_dir", "must not be empty"));
        }
        // everything else in ALConfig except the pool-size check
        let probe = self.al_config(StrategyKind::Random, self.seeds[0]);
        probe.validate(usize::MAX / 2)
    }

    pub fn strategies(&self) -> Result<Vec<StrategyKind>> {
        if self.al.strategies.is_empty() {
            return Err(Error::config("al.strategies", "at least one strategy is required"));
        }
        let mut out = Vec::with_capacity(self.al.strategies.len());
        for name in &self.al.strategies {
            let kind: StrategyKind = name
                .parse()
                .map_err(|_| Error::config("al.strategies", format!("unknown strategy {name:?}")))?;
            if out.contains(&kind) {
                return Err(Error::config("al.strategies", format!("{name} listed twice")));
            }
            out.push(kind);
        }
        Ok(out)
    }

    pub fn al_config(&self, strategy: StrategyKind, seed: u64) -> ALConfig {
        ALConfig {
            cycles: self.al.cycles,
            budget: self.al.budget,
            initial_fraction: self.al.initial_fraction,
            subset_multiplier: self.al.subset_multiplier,
            strategy,
            train: self.al.train.clone(),
            seed,
            retrain_from_scratch: self.al.retrain_from_scratch,
            scope: self.al.scope,
            damping: self.al.damping,
            hessian_cap: self.al.hessian_cap,
            probes: self.probes.clone(),
        }
    }

    /// First 16 hex digits of the SHA-256 of the compact JSON form, with
    /// `output_dir` blanked: where results go does not change them.
    pub fn hash(&self) -> Result<String> {
        let mut keyed = self.clone();
        keyed.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&keyed)?;
        let digest = Sha256::digest(&bytes);
        Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"{
        "dataset": {"kind": "gaussian_mixture", "classes": 3, "per_class": 40, "dim": 2, "separation": 3.0, "eval_count": 30},
        "model": {"kind": "logistic"},
        "al": {"cycles": 3, "budget": 5, "strategies": ["random"]},
        "seeds": [0],
        "output_dir": "out"
    }"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.al.subset_multiplier, 10);
        assert_eq!(c.al.train, TrainConfig::default());
        assert_eq!(c.probes, ProbeToggles::default());
        assert!(c.al.retrain_from_scratch);
    }

    #[test]
    fn round_trip_is_field_equal() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        let back = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.hash().unwrap(), back.hash().unwrap());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = MINIMAL.replace("\"seeds\"", "\"colour\": 1, \"seeds\"");
        let err = ExperimentConfig::from_json(&bad).unwrap_err().to_string();
        assert!(err.contains("colour"), "{err}");
        let bad = MINIMAL.replace("\"budget\": 5", "\"budget\": 5, \"bugdet\": 5");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn bad_strategy_names_the_field() {
        let bad = MINIMAL.replace("[\"random\"]", "[\"gradnorm-ish\"]");
        let err = ExperimentConfig::from_json(&bad).unwrap_err().to_string();
        assert!(err.contains("al.strategies"), "{err}");
    }

    #[test]
    fn overrides_replace_lists_and_change_the_hash() {
        let mut c = ExperimentConfig::from_json(MINIMAL).unwrap();
        let before = c.hash().unwrap();
        c.apply(&Overrides {
            seed: Some(7),
            strategy: Some("entropy-gradnorm".into()),
            out: None,
        })
        .unwrap();
        assert_eq!(c.seeds, vec![7]);
        assert_eq!(c.strategies().unwrap(), vec![StrategyKind::EntropyGradnorm]);
        assert_ne!(c.hash().unwrap(), before);
        let h = c.hash().unwrap();
        c.apply(&Overrides {
            out: Some("elsewhere".into()),
            ..Overrides::default()
        })
        .unwrap();
        assert_eq!(c.hash().unwrap(), h);
    }

    #[test]
    fn cnn_needs_images() {
        let ds = Dataset::new(vec![0.0; 4], vec![0, 1], vec![2], 2).unwrap();
        assert!(ModelSpec::Cnn.architecture(&ds).is_err());
        let img = Dataset::new(vec![0.0; 2 * 64], vec![0, 1], vec![1, 8, 8], 2).unwrap();
        assert!(ModelSpec::Cnn.architecture(&img).is_ok());
    }
}
