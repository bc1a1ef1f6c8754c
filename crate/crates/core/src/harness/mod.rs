//! Experiment configuration, the evolutionary run loop, evaluation and
//! statistics.

pub mod bench;
mod config;
mod experiment;
mod play;
mod stats;

pub use config::{
    AutoencoderSection, CmaesSection, ControllerSection, ExperimentConfig, Phase, RunConfig, Variant,
};
pub use experiment::{
    read_manifest, write_manifest, Champion, ChampionInfo, Experiment, GenerationRecord, Manifest,
    NamedSummary, SparsityReport,
};
pub use play::{
    collect_decision_frames, eval_episode_seed, evaluate_scores, play_eval_episode, sparsity_report,
    AgentPolicy,
};
pub use stats::{
    bucket, mann_whitney_greater, mean, novelty_fitness, std_dev, summary_csv, survival_fitness,
    Bucket, EvalSummary, MannWhitney, CSV_HEADER,
};
