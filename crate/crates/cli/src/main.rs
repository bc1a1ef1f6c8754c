//! `cevo`: train, evaluate and inspect autoencoder-fed evolved agents.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};

use cevo_core::autoencoder::Autoencoder;
use cevo_core::controller::{Controller, ControllerSpec};
use cevo_core::environment::EpisodeOptions;
use cevo_core::harness::bench::{run_suite, Suite};
use cevo_core::harness::{
    evaluate_scores, play_eval_episode, summary_csv, EvalSummary, Experiment, Phase, RunConfig,
};
use cevo_core::Error;

#[derive(Parser)]
#[command(name = "cevo", version, about = "Neuroevolution of game agents that see through an autoencoder")]
struct Cli {
    /// Validate inputs and print the resolved configuration without running.
    #[arg(long, global = true)]
    dry_run: bool,

    /// Worker threads for episode evaluation (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the generational loop and write manifest, checkpoints and champion.
    Train {
        /// Config file, or a preset name (`desk`, `paper`).
        config: String,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        /// Override the config's output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Skip training the companion autoencoder for the sparsity comparison.
        #[arg(long)]
        no_sparsity: bool,
    },
    /// Evaluate a genome over fresh episodes and print the result table.
    Eval {
        /// Controller file (`.cevo`) or JSON array of weights.
        genome: PathBuf,
        /// Config file or preset name.
        config: String,
        #[arg(long)]
        episodes: Option<usize>,
        /// Feed uniform random encodings instead of the autoencoder's.
        #[arg(long)]
        random_input: bool,
        /// Autoencoder weights; defaults to `champion_autoencoder.cevo` next
        /// to the genome.
        #[arg(long)]
        autoencoder: Option<PathBuf>,
        /// Also write the table to this CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Row label; defaults to the variant, or `1` with random input.
        #[arg(long)]
        network: Option<String>,
    },
    /// Write input|reconstruction image pairs seen by the champion.
    Recon {
        /// Run output directory or its checkpoint directory.
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 8)]
        frames: usize,
        /// Destination directory (default: `<checkpoint>/recon_export`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run self-check suites.
    Bench {
        #[arg(value_enum)]
        suite: BenchSuite,
    },
    /// Write the champion genome of a run as a JSON array or controller file.
    ExportGenome {
        /// Run output directory or its checkpoint directory.
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = GenomeFormat::Json)]
        format: GenomeFormat,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchSuite {
    Cmaes,
    Grad,
    Env,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenomeFormat {
    Json,
    Cevo,
}

/// Failure classes mapped to the process exit code.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

type CmdResult = Result<(), Failure>;

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

/// Input files that fail to parse are usage errors; everything else that
/// goes wrong while loading is a runtime failure.
fn classify(e: Error) -> Failure {
    match e {
        Error::Config(_) | Error::Format { .. } | Error::Json(_) => usage(e),
        Error::Io(ref io) if io.kind() == std::io::ErrorKind::NotFound => usage(e),
        other => runtime(other),
    }
}

fn load_config(arg: &str) -> Result<RunConfig, Failure> {
    let path = Path::new(arg);
    let mut cfg = if path.exists() {
        RunConfig::from_file(path).map_err(classify)?
    } else if let Some(cfg) = RunConfig::preset(arg) {
        cfg
    } else {
        return Err(usage(anyhow!("config file {arg} not found and not a preset name (desk, paper)")));
    };
    if let Ok(seed) = std::env::var("CEVO_SEED") {
        cfg.master_seed = seed
            .trim()
            .parse()
            .map_err(|_| usage(anyhow!("CEVO_SEED must be an unsigned integer, got {seed:?}")))?;
    }
    cfg.validate().map_err(classify)?;
    Ok(cfg)
}

fn print_config(cfg: &RunConfig) {
    println!("{}", cfg.to_json());
}

fn cmd_train(config: &str, resume: bool, output_dir: Option<PathBuf>, no_sparsity: bool, dry_run: bool) -> CmdResult {
    let mut cfg = load_config(config)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    let checkpoint = cfg.output_dir.join("checkpoint");
    if dry_run {
        print_config(&cfg);
        return Ok(());
    }
    let mut experiment = if resume && checkpoint.join("progress.json").exists() {
        let exp = Experiment::resume(&checkpoint).map_err(classify)?;
        eprintln!("resuming at generation {}", exp.generation());
        exp
    } else {
        Experiment::new(cfg).map_err(classify)?
    };
    fs::create_dir_all(&experiment.config().output_dir)
        .with_context(|| format!("creating {}", experiment.config().output_dir.display()))
        .map_err(runtime)?;
    let total = experiment.config().experiment.generations;
    experiment
        .run(|r| {
            let phase = match r.phase {
                Phase::Novelty => "novelty",
                Phase::Survival => "survival",
            };
            eprintln!(
                "gen {:>4}/{total} {phase:<8} best {:>10.4} mean {:>10.4} score {:>7.1} buffer {:>5} (+{}) loss {:.4} sigma {:.4}",
                r.generation,
                r.best,
                r.mean,
                r.mean_score,
                r.buffer_size,
                r.frames_admitted,
                r.autoencoder_loss.last().copied().unwrap_or(f64::NAN),
                r.sigma,
            );
        })
        .context("training stopped; the last checkpoint is kept for --resume")
        .map_err(runtime)?;
    let manifest = experiment.finish(!no_sparsity).map_err(runtime)?;
    let rows: Vec<_> = manifest
        .evaluation
        .iter()
        .map(|r| (r.network.clone(), r.summary.clone()))
        .collect();
    print!("{}", summary_csv(&rows));
    if let Some(s) = &manifest.sparsity {
        eprintln!(
            "sparsity over {} frames: standard {} alternative {}",
            s.frames,
            s.standard.map_or("-".into(), |v| format!("{v:.2}")),
            s.alternative.map_or("-".into(), |v| format!("{v:.2}")),
        );
    }
    eprintln!("wrote {}", experiment.config().output_dir.join("manifest.json").display());
    Ok(())
}

fn load_genome(path: &Path, spec: ControllerSpec) -> Result<Controller, Failure> {
    let controller = if path.extension().is_some_and(|e| e == "json") {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(usage)?;
        let genome: Vec<f64> = serde_json::from_str(&text)
            .with_context(|| format!("{} is not a JSON array of weights", path.display()))
            .map_err(usage)?;
        Controller::load_genome(spec, &genome).map_err(classify)?
    } else {
        Controller::load(path).map_err(classify)?
    };
    if controller.spec() != spec {
        return Err(usage(anyhow!(
            "genome {} has {} inputs ({} weights) but the config expects {} inputs ({} weights)",
            path.display(),
            controller.spec().input_size,
            controller.spec().weight_count(),
            spec.input_size,
            spec.weight_count()
        )));
    }
    Ok(controller)
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    genome: &Path,
    config: &str,
    episodes: Option<usize>,
    random_input: bool,
    autoencoder: Option<PathBuf>,
    csv: Option<PathBuf>,
    network: Option<String>,
    dry_run: bool,
) -> CmdResult {
    let cfg = load_config(config)?;
    let controller = load_genome(genome, cfg.controller_spec())?;
    let ae_path = autoencoder.unwrap_or_else(|| {
        genome
            .parent()
            .unwrap_or(Path::new("."))
            .join("champion_autoencoder.cevo")
    });
    let ae = Autoencoder::load(cfg.autoencoder_config().map_err(classify)?, &ae_path).map_err(classify)?;
    let episodes = episodes.unwrap_or(cfg.experiment.eval_episodes);
    if episodes == 0 {
        return Err(usage(anyhow!("--episodes must be positive")));
    }
    if dry_run {
        print_config(&cfg);
        return Ok(());
    }
    let random = random_input || cfg.experiment.variant.random_input_evaluation();
    let scores = evaluate_scores(&ae, &controller, &cfg.world(), episodes, cfg.master_seed, random).map_err(runtime)?;
    let summary = EvalSummary::from_scores(&scores).map_err(runtime)?;
    let label = network.unwrap_or_else(|| {
        if random_input {
            "1".into()
        } else {
            cfg.experiment.variant.label().into()
        }
    });
    let table = summary_csv(&[(label, summary)]);
    print!("{table}");
    if let Some(path) = csv {
        fs::write(&path, &table)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(runtime)?;
    }
    Ok(())
}

fn cmd_recon(checkpoint: &Path, frames: usize, out: Option<PathBuf>, dry_run: bool) -> CmdResult {
    let experiment = Experiment::resume(checkpoint).map_err(classify)?;
    let cfg = experiment.config();
    if dry_run {
        print_config(cfg);
        return Ok(());
    }
    if frames == 0 {
        return Ok(());
    }
    let (controller, ae) = experiment.champion_or_mean().map_err(runtime)?;
    let out = out.unwrap_or_else(|| checkpoint.join("recon_export"));
    fs::create_dir_all(&out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(runtime)?;
    let mut written = 0;
    let mut episode = 0;
    let random = cfg.experiment.variant.random_input_evaluation();
    while written < frames {
        let result = play_eval_episode(
            &ae,
            &controller,
            &cfg.world(),
            cfg.master_seed,
            episode,
            random,
            EpisodeOptions { retain_frames: true },
        )
        .map_err(runtime)?;
        let batch: Vec<_> = result.frames.iter().take(frames - written).collect();
        let recon = ae.reconstruct_batch(&batch).map_err(runtime)?;
        for (f, r) in batch.iter().zip(&recon) {
            let path = out.join(format!("recon_{written:04}.ppm"));
            f.side_by_side(r)
                .and_then(|img| img.write_ppm(&path))
                .map_err(runtime)?;
            written += 1;
        }
        episode += 1;
    }
    eprintln!("wrote {written} images to {}", out.display());
    Ok(())
}

fn cmd_bench(suite: BenchSuite, dry_run: bool) -> CmdResult {
    let suites = match suite {
        BenchSuite::Cmaes => vec![Suite::Cmaes],
        BenchSuite::Grad => vec![Suite::Grad],
        BenchSuite::Env => vec![Suite::Env],
        BenchSuite::All => vec![Suite::Cmaes, Suite::Grad, Suite::Env],
    };
    if dry_run {
        for s in suites {
            println!("{}", s.name());
        }
        return Ok(());
    }
    let mut failed = Vec::new();
    for s in suites {
        let report = run_suite(s).map_err(runtime)?;
        let status = if report.passed { "PASS" } else { "FAIL" };
        println!("{status} {} ({} cases, {:.1}s)", s.name(), report.cases.len(), report.seconds);
        for case in report.failures() {
            println!("  failed: {}: {}", case.name, case.detail);
        }
        if !report.passed {
            failed.push(s.name());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(runtime(anyhow!("suite failures: {}", failed.join(", "))))
    }
}

fn cmd_export(checkpoint: &Path, out: &Path, format: GenomeFormat, dry_run: bool) -> CmdResult {
    let experiment = Experiment::resume(checkpoint).map_err(classify)?;
    if dry_run {
        print_config(experiment.config());
        return Ok(());
    }
    let (controller, _) = experiment.champion_or_mean().map_err(runtime)?;
    match format {
        GenomeFormat::Json => {
            let text = serde_json::to_string(&controller.flatten()).map_err(runtime)?;
            fs::write(out, text + "\n")
                .with_context(|| format!("writing {}", out.display()))
                .map_err(runtime)?;
        }
        GenomeFormat::Cevo => controller.save(out).map_err(runtime)?,
    }
    if experiment.champion().is_none() {
        eprintln!("no survival generation has run; exported the distribution mean");
    }
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(usage(anyhow!("--jobs must be positive")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(runtime)?;
    }
    let dry = cli.dry_run;
    match cli.command {
        Command::Train {
            config,
            resume,
            output_dir,
            no_sparsity,
        } => cmd_train(&config, resume, output_dir, no_sparsity, dry),
        Command::Eval {
            genome,
            config,
            episodes,
            random_input,
            autoencoder,
            csv,
            network,
        } => cmd_eval(&genome, &config, episodes, random_input, autoencoder, csv, network, dry),
        Command::Recon { checkpoint, frames, out } => cmd_recon(&checkpoint, frames, out, dry),
        Command::Bench { suite } => cmd_bench(suite, dry),
        Command::ExportGenome {
            checkpoint,
            out,
            format,
        } => cmd_export(&checkpoint, &out, format, dry),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Usage(e) | Failure::Runtime(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}
