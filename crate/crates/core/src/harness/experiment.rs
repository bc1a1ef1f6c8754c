//! The generational loop with interleaved autoencoder training,
//! checkpointing and the final report.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::play::{collect_decision_frames, evaluate_scores, AgentPolicy};
use super::stats::{mean, novelty_fitness, std_dev, summary_csv, survival_fitness, EvalSummary};
use super::{Phase, RunConfig};
use crate::autoencoder::{sparsity, Autoencoder, AutoencoderConfig, ExperienceBuffer, Topology, Trainer};
use crate::cmaes::Cmaes;
use crate::codec::{Decoder, Encoder};
use crate::controller::Controller;
use crate::environment::{run_episode, write_trace, EpisodeOptions};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::rng::{derive_seed, rng_from, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: u32,
    pub phase: Phase,
    /// Fitness of each member in ask order, larger is better.
    pub fitness: Vec<f64>,
    pub best: f64,
    pub mean: f64,
    pub std_dev: f64,
    /// Mean episode score over all members and episodes.
    pub mean_score: f64,
    pub best_member_score: f64,
    pub buffer_size: usize,
    pub frames_offered: usize,
    pub frames_admitted: usize,
    pub autoencoder_loss: Vec<f64>,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChampionInfo {
    pub generation: u32,
    pub fitness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedSummary {
    pub network: String,
    pub random_input: bool,
    pub summary: EvalSummary,
}

/// Chokepoint sparsity of the run's autoencoder and of a companion with the
/// other topology trained on the same buffer, over the same frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub frames: usize,
    pub standard: Option<f64>,
    pub alternative: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub generations: Vec<GenerationRecord>,
    pub champion: Option<ChampionInfo>,
    pub evaluation: Vec<NamedSummary>,
    pub sparsity: Option<SparsityReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Progress {
    generation: u32,
    records: Vec<GenerationRecord>,
    champion: Option<ChampionInfo>,
    timings: Vec<f64>,
}

/// Genome with the autoencoder weights it was selected under.
#[derive(Clone, Debug, PartialEq)]
pub struct Champion {
    pub info: ChampionInfo,
    pub genome: Vec<f64>,
    pub autoencoder: Autoencoder,
}

struct MemberOutcome {
    scores: Vec<f64>,
    novelty: Vec<f64>,
    offers: Vec<(Frame, f64)>,
}

pub struct Experiment {
    config: RunConfig,
    ae: Autoencoder,
    trainer: Trainer,
    buffer: ExperienceBuffer,
    cmaes: Cmaes,
    generation: u32,
    records: Vec<GenerationRecord>,
    champion: Option<Champion>,
    timings: Vec<f64>,
}

const CHECKPOINT_DIR: &str = "checkpoint";

impl Experiment {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let ae_cfg = config.autoencoder_config()?;
        let ae = Autoencoder::new(ae_cfg, &mut rng_from(config.master_seed, &[stream::AE_INIT]))?;
        let trainer = Trainer::new(config.autoencoder.optimizer.clone(), config.autoencoder.batch_size, &ae)?;
        let buffer = ExperienceBuffer::new(config.autoencoder.buffer_capacity, config.autoencoder.filter_threshold)?;
        let cmaes = Cmaes::new(config.cmaes_config()?)?;
        Ok(Self {
            config,
            ae,
            trainer,
            buffer,
            cmaes,
            generation: 0,
            records: Vec::new(),
            champion: None,
            timings: Vec::new(),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    pub fn records(&self) -> &[GenerationRecord] {
        &self.records
    }

    pub fn autoencoder(&self) -> &Autoencoder {
        &self.ae
    }

    pub fn buffer(&self) -> &ExperienceBuffer {
        &self.buffer
    }

    pub fn cmaes(&self) -> &Cmaes {
        &self.cmaes
    }

    pub fn champion(&self) -> Option<&Champion> {
        self.champion.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        self.generation >= self.config.experiment.generations
    }

    pub fn phase(&self, generation: u32) -> Phase {
        self.config.experiment.phase(generation)
    }

    fn checkpoint_dir(&self) -> PathBuf {
        self.config.output_dir.join(CHECKPOINT_DIR)
    }

    /// Plays one member's fitness episodes against the frozen autoencoder.
    fn evaluate_member(&self, genome: &[f64], member: usize) -> Result<MemberOutcome> {
        let controller = Controller::load_genome(self.config.controller_spec(), genome)?;
        let world = self.config.world();
        let gen = self.generation as u64;
        let random = self.config.experiment.variant.random_input_evolution();
        let mut out = MemberOutcome {
            scores: Vec::new(),
            novelty: Vec::new(),
            offers: Vec::new(),
        };
        for episode in 0..self.config.experiment.episodes_per_fitness {
            let seed = derive_seed(self.config.master_seed, &[stream::TRAIN_EPISODE, gen, episode as u64]);
            let mut policy = AgentPolicy::new(&self.ae, &controller).keeping_encodings();
            if random {
                let noise = derive_seed(self.config.master_seed, &[stream::NOISE, gen, member as u64, episode as u64]);
                policy = policy.with_noise(noise);
            }
            let result = run_episode(&world, seed, &mut policy, EpisodeOptions { retain_frames: true })?;
            let encodings = policy.into_encodings();
            let refs: Vec<&Frame> = result.frames.iter().collect();
            let errors = self.ae.decode_errors(&encodings, &refs)?;
            out.scores.push(result.score as f64);
            out.novelty.push(novelty_fitness(&errors));
            out.offers.extend(result.frames.into_iter().zip(errors));
        }
        Ok(out)
    }

    /// Runs one generation: ask, evaluate, tell, train the autoencoder.
    pub fn run_generation(&mut self) -> Result<&GenerationRecord> {
        if self.is_finished() {
            return Err(Error::state("all generations have already run"));
        }
        let started = Instant::now();
        let gen = self.generation;
        let phase = self.phase(gen);
        let genomes = self.cmaes.ask()?;
        let variant = self.config.experiment.variant;

        let mut fitness = Vec::with_capacity(genomes.len());
        let mut member_scores = Vec::with_capacity(genomes.len());
        let mut offered = 0;
        let mut admitted = 0;
        let mut dump_frames: Vec<Frame> = Vec::new();
        let wave = rayon::current_num_threads().max(1);
        for (chunk_index, chunk) in genomes.chunks(wave).enumerate() {
            let outcomes: Vec<MemberOutcome> = chunk
                .par_iter()
                .enumerate()
                .map(|(i, g)| self.evaluate_member(g, chunk_index * wave + i))
                .collect::<Result<_>>()?;
            for outcome in outcomes {
                let value = match phase {
                    Phase::Novelty => mean(&outcome.novelty),
                    Phase::Survival => survival_fitness(&outcome.scores, variant)?,
                };
                if !value.is_finite() {
                    return Err(Error::Numeric(format!("member fitness {value} in generation {gen}")));
                }
                fitness.push(value);
                member_scores.push(outcome.scores);
                for (frame, error) in outcome.offers {
                    if dump_frames.len() < self.config.experiment.recon_dump_frames {
                        dump_frames.push(frame.clone());
                    }
                    offered += 1;
                    if self.buffer.offer_scored(frame, error) {
                        admitted += 1;
                    }
                }
            }
        }

        let snapshot = match phase {
            Phase::Survival => {
                let best = (0..fitness.len())
                    .max_by(|&a, &b| fitness[a].total_cmp(&fitness[b]).then(b.cmp(&a)))
                    .expect("population is non-empty");
                let better = self.champion.as_ref().is_none_or(|c| fitness[best] > c.info.fitness);
                better.then(|| Champion {
                    info: ChampionInfo {
                        generation: gen,
                        fitness: fitness[best],
                    },
                    genome: genomes[best].clone(),
                    autoencoder: self.ae.clone(),
                })
            }
            Phase::Novelty => None,
        };
        if snapshot.is_some() {
            self.champion = snapshot;
        }

        let negated: Vec<f64> = fitness.iter().map(|f| -f).collect();
        self.cmaes.tell(&genomes, &negated)?;

        let mut shuffle = rng_from(self.config.master_seed, &[stream::AE_SHUFFLE, gen as u64]);
        let loss = self.trainer.train_epochs(
            &mut self.ae,
            &self.buffer,
            self.config.autoencoder.epochs_per_generation,
            self.config.autoencoder.max_presentations,
            &mut shuffle,
        )?;

        let all_scores: Vec<f64> = member_scores.iter().flatten().copied().collect();
        let best_member_score = member_scores.iter().map(|s| mean(s)).fold(f64::NEG_INFINITY, f64::max);
        self.records.push(GenerationRecord {
            generation: gen,
            phase,
            best: fitness.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: mean(&fitness),
            std_dev: std_dev(&fitness),
            fitness,
            mean_score: mean(&all_scores),
            best_member_score,
            buffer_size: self.buffer.len(),
            frames_offered: offered,
            frames_admitted: admitted,
            autoencoder_loss: loss,
            sigma: self.cmaes.sigma(),
        });
        self.generation += 1;

        let every = self.config.experiment.recon_dump_every;
        if every > 0 && (gen + 1).is_multiple_of(every) {
            self.dump_reconstructions(&dump_frames)?;
        }
        self.timings.push(started.elapsed().as_secs_f64());
        let every = self.config.experiment.checkpoint_every;
        if every > 0 && (self.generation.is_multiple_of(every) || self.is_finished()) {
            self.save_checkpoint()?;
        }
        Ok(self.records.last().expect("record just pushed"))
    }

    /// Side-by-side input and reconstruction images under `recon/`.
    fn dump_reconstructions(&self, frames: &[Frame]) -> Result<()> {
        if frames.is_empty() {
            return Ok(());
        }
        let dir = self.config.output_dir.join("recon");
        fs::create_dir_all(&dir)?;
        let refs: Vec<&Frame> = frames.iter().collect();
        for (n, (f, r)) in frames.iter().zip(self.ae.reconstruct_batch(&refs)?).enumerate() {
            let name = format!("recon_gen{}_frame{}.ppm", self.generation, n);
            f.side_by_side(&r)?.write_ppm(&dir.join(name))?;
        }
        Ok(())
    }

    /// Runs the remaining generations, calling `on_generation` after each.
    pub fn run<F: FnMut(&GenerationRecord)>(&mut self, mut on_generation: F) -> Result<()> {
        while !self.is_finished() {
            let record = self.run_generation()?;
            on_generation(record);
        }
        Ok(())
    }

    /// Runs generations until `generation` have completed.
    pub fn run_until(&mut self, generation: u32) -> Result<()> {
        while self.generation < generation.min(self.config.experiment.generations) {
            self.run_generation()?;
        }
        Ok(())
    }

    pub fn save_checkpoint(&self) -> Result<()> {
        let dir = self.checkpoint_dir();
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("config.json"), self.config.to_json())?;
        self.cmaes.save(&dir.join("cmaes.bin"))?;
        self.ae.save(&dir.join("autoencoder.cevo"))?;
        let mut enc = Encoder::new(Vec::new());
        self.trainer.write_state(&mut enc)?;
        fs::write(dir.join("trainer.bin"), enc.into_inner())?;
        let mut enc = Encoder::new(Vec::new());
        self.buffer.write_to(&mut enc)?;
        fs::write(dir.join("buffer.bin"), enc.into_inner())?;
        match &self.champion {
            Some(c) => {
                let controller = Controller::load_genome(self.config.controller_spec(), &c.genome)?;
                controller.save(&dir.join("champion.cevo"))?;
                c.autoencoder.save(&dir.join("champion_autoencoder.cevo"))?;
            }
            None => {
                for name in ["champion.cevo", "champion_autoencoder.cevo"] {
                    let p = dir.join(name);
                    if p.exists() {
                        fs::remove_file(p)?;
                    }
                }
            }
        }
        let progress = Progress {
            generation: self.generation,
            records: self.records.clone(),
            champion: self.champion.as_ref().map(|c| c.info.clone()),
            timings: self.timings.clone(),
        };
        // Written last so that an interrupted save is detected on resume.
        fs::write(dir.join("progress.json"), serde_json::to_vec_pretty(&progress)?)?;
        Ok(())
    }

    /// Restores a run from `<output_dir>/checkpoint` or from a checkpoint
    /// directory itself.
    pub fn resume(path: &Path) -> Result<Self> {
        let dir = if path.join("progress.json").exists() {
            path.to_path_buf()
        } else {
            path.join(CHECKPOINT_DIR)
        };
        let progress_path = dir.join("progress.json");
        let progress: Progress = serde_json::from_slice(&fs::read(&progress_path)?)
            .map_err(|e| Error::format(&progress_path, e.to_string()))?;
        let config = RunConfig::from_file(&dir.join("config.json"))?;
        Self::restore(config, &dir, progress)
    }

    fn restore(config: RunConfig, dir: &Path, progress: Progress) -> Result<Self> {
        let ae_cfg = config.autoencoder_config()?;
        let ae = Autoencoder::load(ae_cfg, &dir.join("autoencoder.cevo"))?;
        let mut trainer = Trainer::new(config.autoencoder.optimizer.clone(), config.autoencoder.batch_size, &ae)?;
        let read = |name: &str| fs::read(dir.join(name));
        let bytes = read("trainer.bin")?;
        let mut dec = Decoder::new(bytes.as_slice());
        trainer
            .read_state(&mut dec)
            .and_then(|_| dec.finish())
            .map_err(|e| Error::format(dir.join("trainer.bin"), e.to_string()))?;
        let bytes = read("buffer.bin")?;
        let mut dec = Decoder::new(bytes.as_slice());
        let buffer = ExperienceBuffer::read_from(&mut dec)
            .and_then(|b| dec.finish().map(|_| b))
            .map_err(|e| Error::format(dir.join("buffer.bin"), e.to_string()))?;
        let cmaes = Cmaes::load(&dir.join("cmaes.bin"))?;
        if cmaes.dimension() != config.controller_spec().weight_count() {
            return Err(Error::format(dir.join("cmaes.bin"), "dimension does not match the controller"));
        }
        let champion = match progress.champion {
            Some(info) => {
                let controller = Controller::load(&dir.join("champion.cevo"))?;
                let autoencoder = Autoencoder::load(ae_cfg, &dir.join("champion_autoencoder.cevo"))?;
                Some(Champion {
                    info,
                    genome: controller.flatten(),
                    autoencoder,
                })
            }
            None => None,
        };
        Ok(Self {
            config,
            ae,
            trainer,
            buffer,
            cmaes,
            generation: progress.generation,
            records: progress.records,
            champion,
            timings: progress.timings,
        })
    }

    /// The champion, or the distribution mean with the current autoencoder
    /// if no survival generation has run.
    pub fn champion_or_mean(&self) -> Result<(Controller, Autoencoder)> {
        let spec = self.config.controller_spec();
        Ok(match &self.champion {
            Some(c) => (Controller::load_genome(spec, &c.genome)?, c.autoencoder.clone()),
            None => (Controller::load_genome(spec, self.cmaes.mean())?, self.ae.clone()),
        })
    }

    /// Evaluates the champion on fresh episodes, with real input and with
    /// random encodings (the latter only, for random-input variants).
    pub fn evaluate_champion(&self) -> Result<Vec<NamedSummary>> {
        let (controller, ae) = self.champion_or_mean()?;
        let world = self.config.world();
        let n = self.config.experiment.eval_episodes;
        let seed = self.config.master_seed;
        let variant = self.config.experiment.variant;
        let mut rows = Vec::new();
        if !variant.random_input_evaluation() {
            let scores = evaluate_scores(&ae, &controller, &world, n, seed, false)?;
            rows.push(NamedSummary {
                network: variant.label().to_string(),
                random_input: false,
                summary: EvalSummary::from_scores(&scores)?,
            });
        }
        let scores = evaluate_scores(&ae, &controller, &world, n, seed, true)?;
        let label = match variant {
            super::Variant::Baseline2RandomEvolution => "2",
            _ => "1",
        };
        rows.push(NamedSummary {
            network: label.to_string(),
            random_input: true,
            summary: EvalSummary::from_scores(&scores)?,
        });
        Ok(rows)
    }

    /// Sparsity of the run's autoencoder and of a companion with the other
    /// topology trained on the final buffer, over frames seen by the
    /// champion.
    pub fn sparsity_report(&self) -> Result<SparsityReport> {
        let (controller, ae) = self.champion_or_mean()?;
        let world = self.config.world();
        let n = self.config.experiment.sparsity_frames;
        let seed = derive_seed(self.config.master_seed, &[stream::SPARSITY]);
        let frames = collect_decision_frames(&ae, &controller, &world, n, seed, false)?;
        let refs: Vec<&Frame> = frames.iter().collect();
        let own = sparsity(&ae, &refs)?;
        let mut report = SparsityReport {
            frames: n,
            standard: None,
            alternative: None,
        };
        let presentations = self.config.autoencoder.comparison_presentations;
        let other = if presentations > 0 && !self.buffer.is_empty() {
            let cfg = AutoencoderConfig {
                topology: match ae.config().topology {
                    Topology::Standard => Topology::Alternative,
                    Topology::Alternative => Topology::Standard,
                },
                ..*ae.config()
            };
            let mut rng = rng_from(self.config.master_seed, &[stream::SPARSITY, 1]);
            let mut companion = Autoencoder::new(cfg, &mut rng)?;
            let mut trainer = Trainer::new(
                self.config.autoencoder.optimizer.clone(),
                self.config.autoencoder.batch_size,
                &companion,
            )?;
            let per_epoch = self.buffer.len().min(self.config.autoencoder.max_presentations.max(1));
            let epochs = presentations.div_ceil(per_epoch);
            trainer.train_epochs(&mut companion, &self.buffer, epochs, per_epoch, &mut rng)?;
            Some(sparsity(&companion, &refs)?)
        } else {
            None
        };
        match ae.config().topology {
            Topology::Standard => {
                report.standard = Some(own);
                report.alternative = other;
            }
            Topology::Alternative => {
                report.alternative = Some(own);
                report.standard = other;
            }
        }
        Ok(report)
    }

    pub fn manifest(&self, evaluation: Vec<NamedSummary>, sparsity: Option<SparsityReport>) -> Manifest {
        Manifest {
            config: self.config.clone(),
            generations: self.records.clone(),
            champion: self.champion.as_ref().map(|c| c.info.clone()),
            evaluation,
            sparsity,
        }
    }

    /// Final evaluation and artifacts: manifest, CSV, timings, champion
    /// files and a decision trace of one evaluation episode.
    pub fn finish(&self, with_sparsity: bool) -> Result<Manifest> {
        let out = &self.config.output_dir;
        fs::create_dir_all(out)?;
        let evaluation = self.evaluate_champion()?;
        let sparsity = if with_sparsity { Some(self.sparsity_report()?) } else { None };
        let manifest = self.manifest(evaluation, sparsity);
        write_manifest(&out.join("manifest.json"), &manifest)?;
        let rows: Vec<(String, EvalSummary)> = manifest
            .evaluation
            .iter()
            .map(|r| (r.network.clone(), r.summary.clone()))
            .collect();
        fs::write(out.join("results.csv"), summary_csv(&rows))?;
        fs::write(out.join("timings.json"), serde_json::to_vec_pretty(&self.timings)?)?;
        let (controller, ae) = self.champion_or_mean()?;
        controller.save(&out.join("champion.cevo"))?;
        ae.save(&out.join("champion_autoencoder.cevo"))?;
        let random = self.config.experiment.variant.random_input_evaluation();
        let trace = super::play::play_eval_episode(
            &ae,
            &controller,
            &self.config.world(),
            self.config.master_seed,
            0,
            random,
            EpisodeOptions::default(),
        )?;
        write_trace(&out.join("trace.jsonl"), &trace.decisions)?;
        Ok(manifest)
    }
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(manifest)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    serde_json::from_slice(&fs::read(path)?).map_err(|e| Error::format(path, e.to_string()))
}
