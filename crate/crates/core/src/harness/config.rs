use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::RectangularParams;
use crate::error::{Error, Result};
use crate::gflow::Activation;

/// Named experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    /// Classifier directions and their pairwise angles.
    RectBoundaries,
    /// Online perceptron alignment to the reference classifiers over time.
    RectAlignment,
    /// Perceptron trained on rectangles vs their Gaussian clones.
    RectCloneCollapse,
    /// Truncated gradient flow at orders 0 to 3.
    TruncatedGf,
    /// Corrections built from the wrong fourth-order tensors.
    CorrectionControls,
    /// Early-stopping accuracy as a function of the training set size.
    FiniteSample,
    /// Two-layer network on CIFAR-10 vs its Gaussian clones.
    MlpCloneCollapse,
    /// Coarse-grained CIFAR-10 with two- and ten-component clones.
    Cifar10cMixtures,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 8] = [
        ExperimentId::RectBoundaries,
        ExperimentId::RectAlignment,
        ExperimentId::RectCloneCollapse,
        ExperimentId::TruncatedGf,
        ExperimentId::CorrectionControls,
        ExperimentId::FiniteSample,
        ExperimentId::MlpCloneCollapse,
        ExperimentId::Cifar10cMixtures,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::RectBoundaries => "rect-boundaries",
            ExperimentId::RectAlignment => "rect-alignment",
            ExperimentId::RectCloneCollapse => "rect-clone-collapse",
            ExperimentId::TruncatedGf => "truncated-gf",
            ExperimentId::CorrectionControls => "correction-controls",
            ExperimentId::FiniteSample => "finite-sample",
            ExperimentId::MlpCloneCollapse => "mlp-clone-collapse",
            ExperimentId::Cifar10cMixtures => "cifar10c-mixtures",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "experiment",
                name: s.to_string(),
            })
    }

    pub fn needs_cifar(self) -> bool {
        matches!(self, ExperimentId::MlpCloneCollapse | ExperimentId::Cifar10cMixtures)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticSection {
    /// Samples used to estimate the class statistics.
    pub sample_size: usize,
    pub c3: Vec<f64>,
}

impl Default for AnalyticSection {
    fn default() -> Self {
        AnalyticSection {
            sample_size: 1_000_000,
            c3: vec![0.01, 0.05, 0.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GflowSection {
    pub activation: Activation,
    /// Size of the frozen sample the expectations are taken over.
    pub sample_size: usize,
    pub eta: f64,
    pub steps: usize,
    /// Orders integrated with the truncated series.
    pub series_orders: Vec<usize>,
    /// Orders integrated with the Taylor-polynomial activation.
    pub polynomial_orders: Vec<usize>,
    /// Standard deviation of the initial weights. Small, so that λ starts
    /// where the Taylor truncation is accurate.
    pub init_scale: f64,
    pub checkpoints_per_decade: usize,
}

impl Default for GflowSection {
    fn default() -> Self {
        GflowSection {
            activation: Activation::Tanh,
            sample_size: 100_000,
            eta: 0.1,
            steps: 20_000,
            series_orders: vec![0, 1, 2, 3],
            polynomial_orders: vec![3],
            init_scale: 0.1,
            checkpoints_per_decade: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptronSection {
    pub activation: Activation,
    pub eta: f64,
    pub steps: usize,
    pub init_scale: f64,
    pub checkpoints_per_decade: usize,
    /// Rectangle samples the Gaussian clones are fitted to.
    pub clone_fit_size: usize,
}

impl Default for PerceptronSection {
    fn default() -> Self {
        PerceptronSection {
            activation: Activation::Tanh,
            eta: 0.05,
            steps: 300_000,
            init_scale: 1.0,
            checkpoints_per_decade: 50,
            clone_fit_size: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiniteSection {
    /// Training samples per class.
    pub sizes: Vec<usize>,
    pub eta: f64,
    pub steps: usize,
    pub checkpoints_per_decade: usize,
}

impl Default for FiniteSection {
    fn default() -> Self {
        FiniteSection {
            sizes: vec![1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096],
            eta: 0.05,
            steps: 100_000,
            checkpoints_per_decade: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSection {
    /// Directory holding the CIFAR-10 binary batches.
    pub cifar_dir: Option<PathBuf>,
    /// Training images per class (`0` keeps the full training set).
    pub per_class: usize,
    /// Test images per class used for evaluation (`0` keeps all).
    pub eval_per_class: usize,
    pub hidden: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub checkpoints_per_decade: usize,
    /// Clamp clone samples to the pixel range.
    pub clip: bool,
}

impl Default for MlpSection {
    fn default() -> Self {
        MlpSection {
            cifar_dir: None,
            per_class: 500,
            eval_per_class: 0,
            hidden: 512,
            lr: 0.005,
            weight_decay: 5e-4,
            batch_size: 64,
            steps: 5000,
            checkpoints_per_decade: 10,
            clip: true,
        }
    }
}

/// Configuration of one experiment, read from TOML. Every field has a
/// default, so a file only needs the keys it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentId>,
    /// One run per seed; seeds fix weight init, sample order and online
    /// samples.
    pub seeds: Vec<u64>,
    /// Seed of the data shared by all runs: evaluation set, frozen samples,
    /// clone fits.
    pub data_seed: u64,
    pub eval_size: usize,
    /// Consecutive separated checkpoints needed to call two curves diverged.
    pub persistence: usize,
    pub rect: RectangularParams,
    pub analytic: AnalyticSection,
    pub gflow: GflowSection,
    pub perceptron: PerceptronSection,
    pub finite: FiniteSection,
    pub mlp: MlpSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: None,
            seeds: vec![0, 1, 2, 3, 4],
            data_seed: 0,
            eval_size: 20_000,
            persistence: 3,
            rect: RectangularParams::default(),
            analytic: AnalyticSection::default(),
            gflow: GflowSection::default(),
            perceptron: PerceptronSection::default(),
            finite: FiniteSection::default(),
            mlp: MlpSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.experiment.is_none() {
            return Err(Error::Config("no experiment id given".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.eval_size == 0 {
            return Err(Error::Config("eval_size must be positive".into()));
        }
        self.rect.validate()
    }
}
