//! Run configuration: one strict JSON document per experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autoencoder::{AutoencoderConfig, Resolution, Topology};
use crate::cmaes::CovarianceMode;
use crate::controller::ControllerSpec;
use crate::environment::WorldConfig;
use crate::error::{Error, Result};
use crate::tensor::OptimizerSettings;

/// Network variants and baselines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Standard autoencoder, mean-score fitness.
    A,
    /// As A with normalized health as an extra controller input.
    B,
    /// As A with deadly mines.
    C,
    /// Alternative autoencoder.
    D,
    /// Alternative autoencoder with the consistency-rewarding fitness.
    E,
    /// Evolved as A, evaluated with random encodings.
    #[serde(rename = "baseline1_random_input")]
    Baseline1RandomInput,
    /// Evolved and evaluated with random encodings.
    #[serde(rename = "baseline2_random_evolution")]
    Baseline2RandomEvolution,
}

impl Variant {
    pub fn health_input(self) -> bool {
        self == Variant::B
    }

    pub fn deadly_mines(self) -> bool {
        self == Variant::C
    }

    pub fn topology(self) -> Topology {
        match self {
            Variant::D | Variant::E => Topology::Alternative,
            _ => Topology::Standard,
        }
    }

    /// Controllers see random encodings during evolution.
    pub fn random_input_evolution(self) -> bool {
        self == Variant::Baseline2RandomEvolution
    }

    /// Controllers see random encodings when evaluated.
    pub fn random_input_evaluation(self) -> bool {
        matches!(self, Variant::Baseline1RandomInput | Variant::Baseline2RandomEvolution)
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::A => "A",
            Variant::B => "B",
            Variant::C => "C",
            Variant::D => "D",
            Variant::E => "E",
            Variant::Baseline1RandomInput => "1",
            Variant::Baseline2RandomEvolution => "2",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub variant: Variant,
    pub generations: u32,
    /// Generations rewarded for novelty before switching to survival.
    pub novelty_generations: u32,
    pub episodes_per_fitness: usize,
    pub eval_episodes: usize,
    /// Decision frames gathered for the sparsity report.
    pub sparsity_frames: usize,
    /// Write a checkpoint every this many generations (0 disables).
    pub checkpoint_every: u32,
    /// Dump reconstructions every this many generations (0 disables).
    pub recon_dump_every: u32,
    pub recon_dump_frames: usize,
}

/// Which fitness drives a generation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Novelty,
    Survival,
}

impl ExperimentConfig {
    pub fn phase(&self, generation: u32) -> Phase {
        if generation < self.novelty_generations {
            Phase::Novelty
        } else {
            Phase::Survival
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            variant: Variant::A,
            generations: 400,
            novelty_generations: 30,
            episodes_per_fitness: 10,
            eval_episodes: 1000,
            sparsity_frames: 1000,
            checkpoint_every: 1,
            recon_dump_every: 10,
            recon_dump_frames: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AutoencoderSection {
    /// Overrides the topology implied by the variant.
    pub topology: Option<Topology>,
    pub chokepoint_size: usize,
    pub buffer_capacity: usize,
    /// Frames reconstructed better than this are not stored.
    pub filter_threshold: f64,
    pub batch_size: usize,
    pub epochs_per_generation: usize,
    /// Cap on frames presented per epoch.
    pub max_presentations: usize,
    pub optimizer: OptimizerSettings,
    /// Frames presented when training the other topology for the sparsity
    /// comparison (0 skips the comparison).
    pub comparison_presentations: usize,
}

impl Default for AutoencoderSection {
    fn default() -> Self {
        Self {
            topology: None,
            chokepoint_size: 128,
            buffer_capacity: 10_000,
            filter_threshold: 0.05,
            batch_size: 32,
            epochs_per_generation: 1,
            max_presentations: 50_000,
            optimizer: OptimizerSettings::default(),
            comparison_presentations: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CmaesSection {
    pub population_size: Option<usize>,
    pub parents: Option<usize>,
    pub sigma0: f64,
    pub mode: CovarianceMode,
}

impl Default for CmaesSection {
    fn default() -> Self {
        Self {
            population_size: None,
            parents: None,
            sigma0: 1.0,
            mode: CovarianceMode::Diagonal,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSection {
    /// Overrides the health input implied by the variant.
    pub health_input: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub environment: WorldConfig,
    pub autoencoder: AutoencoderSection,
    pub cmaes: CmaesSection,
    pub controller: ControllerSection,
    pub output_dir: PathBuf,
    pub master_seed: u64,
}

impl RunConfig {
    /// Full-size settings: 120×160 frames, 400 generations, 10 episodes per
    /// fitness, 1000 evaluation episodes.
    pub fn paper() -> Self {
        Self {
            experiment: ExperimentConfig::default(),
            environment: WorldConfig::default(),
            autoencoder: AutoencoderSection {
                buffer_capacity: 5_000,
                ..AutoencoderSection::default()
            },
            cmaes: CmaesSection::default(),
            controller: ControllerSection::default(),
            output_dir: PathBuf::from("runs/paper"),
            master_seed: 1,
        }
    }

    /// Desktop-sized settings: 60×80 frames, λ = 12, 40 generations, 5
    /// episodes per fitness, 200 evaluation episodes.
    pub fn desk() -> Self {
        Self {
            experiment: ExperimentConfig {
                generations: 40,
                novelty_generations: 5,
                episodes_per_fitness: 5,
                eval_episodes: 200,
                sparsity_frames: 1000,
                checkpoint_every: 5,
                recon_dump_every: 10,
                recon_dump_frames: 4,
                ..ExperimentConfig::default()
            },
            environment: WorldConfig::with_resolution(60, 80),
            autoencoder: AutoencoderSection {
                buffer_capacity: 2_000,
                comparison_presentations: 4_000,
                ..AutoencoderSection::default()
            },
            cmaes: CmaesSection {
                population_size: Some(12),
                ..CmaesSection::default()
            },
            controller: ControllerSection::default(),
            output_dir: PathBuf::from("runs/desk"),
            master_seed: 1,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Self::desk()),
            "paper" => Some(Self::paper()),
            _ => None,
        }
    }

    /// Strict parse: unknown keys are rejected and errors carry the line and
    /// column.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn topology(&self) -> Topology {
        self.autoencoder
            .topology
            .unwrap_or_else(|| self.experiment.variant.topology())
    }

    pub fn health_input(&self) -> bool {
        self.controller
            .health_input
            .unwrap_or_else(|| self.experiment.variant.health_input())
    }

    /// The world with the variant's mine rule applied.
    pub fn world(&self) -> WorldConfig {
        WorldConfig {
            deadly_mines: self.environment.deadly_mines || self.experiment.variant.deadly_mines(),
            ..self.environment.clone()
        }
    }

    pub fn resolution(&self) -> Result<Resolution> {
        let (h, w) = (self.environment.frame_height, self.environment.frame_width);
        Resolution::from_dims(h, w).ok_or_else(|| {
            Error::config(format!(
                "environment frame {h}x{w} has no autoencoder preset; use 120x160, 60x80 or 16x20"
            ))
        })
    }

    pub fn autoencoder_config(&self) -> Result<AutoencoderConfig> {
        Ok(AutoencoderConfig {
            topology: self.topology(),
            resolution: self.resolution()?,
            chokepoint_size: self.autoencoder.chokepoint_size,
        })
    }

    pub fn controller_spec(&self) -> ControllerSpec {
        ControllerSpec::new(self.autoencoder.chokepoint_size, self.health_input())
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.novelty_generations > e.generations {
            return Err(Error::config(format!(
                "experiment.novelty_generations ({}) exceeds experiment.generations ({})",
                e.novelty_generations, e.generations
            )));
        }
        if e.episodes_per_fitness == 0 {
            return Err(Error::config("experiment.episodes_per_fitness must be positive"));
        }
        self.environment.validate()?;
        self.resolution()?;
        let a = &self.autoencoder;
        if a.chokepoint_size == 0 || a.buffer_capacity == 0 || a.batch_size == 0 {
            return Err(Error::config(
                "autoencoder chokepoint_size, buffer_capacity and batch_size must be positive",
            ));
        }
        if a.filter_threshold.is_nan() || a.filter_threshold < 0.0 {
            return Err(Error::config("autoencoder.filter_threshold must be non-negative"));
        }
        a.optimizer.validate()?;
        let c = &self.cmaes;
        if !(c.sigma0 > 0.0 && c.sigma0.is_finite()) {
            return Err(Error::config("cmaes.sigma0 must be positive"));
        }
        self.cmaes_config()?.validate()
    }

    pub fn cmaes_config(&self) -> Result<crate::cmaes::CmaesConfig> {
        let n = self.controller_spec().weight_count();
        let seed = crate::rng::derive_seed(self.master_seed, &[crate::rng::stream::CMAES]);
        let mut cfg = crate::cmaes::CmaesConfig::new(n, seed)
            .with_sigma(self.cmaes.sigma0)
            .with_mode(self.cmaes.mode);
        cfg.population_size = self.cmaes.population_size;
        cfg.parents = self.cmaes.parents;
        Ok(cfg)
    }
}
