//! Agents that see through the autoencoder, and evaluation over many
//! seeded episodes.

use rand::Rng as _;
use rayon::prelude::*;

use crate::autoencoder::{sparsity, Autoencoder, Encoding};
use crate::controller::Controller;
use crate::environment::{run_episode, Decision, EpisodeOptions, EpisodeResult, Policy, WorldConfig};
use crate::error::Result;
use crate::frame::Frame;
use crate::rng::{derive_seed, rng_from, stream, Rng};

/// Encodes each decision frame and asks the controller for a command.
/// With a noise generator the controller receives uniform random encodings
/// in `[0, 1]` instead.
pub struct AgentPolicy<'a> {
    ae: &'a Autoencoder,
    controller: &'a Controller,
    noise: Option<Rng>,
    keep_encodings: bool,
    encodings: Vec<Encoding>,
}

impl<'a> AgentPolicy<'a> {
    pub fn new(ae: &'a Autoencoder, controller: &'a Controller) -> Self {
        Self {
            ae,
            controller,
            noise: None,
            keep_encodings: false,
            encodings: Vec::new(),
        }
    }

    /// Replace real encodings by seeded uniform noise.
    pub fn with_noise(mut self, seed: u64) -> Self {
        self.noise = Some(rng_from(seed, &[]));
        self
    }

    /// Keep the real encoding of every decision frame.
    pub fn keeping_encodings(mut self) -> Self {
        self.keep_encodings = true;
        self
    }

    pub fn into_encodings(self) -> Vec<Encoding> {
        self.encodings
    }

    fn health_arg(&self, health: f64) -> Option<f64> {
        (self.controller.spec().input_size == self.ae.config().chokepoint_size + 1).then_some(health)
    }
}

impl Policy for AgentPolicy<'_> {
    fn decide(&mut self, frame: &Frame, health: f64) -> Result<Decision> {
        let real = if self.noise.is_none() || self.keep_encodings {
            Some(self.ae.encode(frame)?)
        } else {
            None
        };
        let health = self.health_arg(health);
        let seen = match &mut self.noise {
            Some(rng) => Encoding((0..self.ae.config().chokepoint_size).map(|_| rng.random::<f64>()).collect()),
            None => real.clone().expect("real encoding computed without noise"),
        };
        let command = self.controller.decide(&seen, health)?;
        if self.keep_encodings {
            self.encodings.push(real.expect("real encoding kept"));
        }
        Ok(Decision {
            command,
            encoding_hash: Some(seen.hash()),
        })
    }
}

/// Seed of the `index`-th evaluation episode under `seed`.
pub fn eval_episode_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, &[stream::EVAL_EPISODE, index as u64])
}

fn eval_noise_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, &[stream::NOISE, u64::MAX, index as u64])
}

/// Plays one evaluation episode.
pub fn play_eval_episode(
    ae: &Autoencoder,
    controller: &Controller,
    world: &WorldConfig,
    seed: u64,
    index: usize,
    random_input: bool,
    options: EpisodeOptions,
) -> Result<EpisodeResult> {
    let mut policy = AgentPolicy::new(ae, controller);
    if random_input {
        policy = policy.with_noise(eval_noise_seed(seed, index));
    }
    run_episode(world, eval_episode_seed(seed, index), &mut policy, options)
}

/// Scores of `episodes` independent episodes, in episode order regardless
/// of scheduling.
pub fn evaluate_scores(
    ae: &Autoencoder,
    controller: &Controller,
    world: &WorldConfig,
    episodes: usize,
    seed: u64,
    random_input: bool,
) -> Result<Vec<u32>> {
    (0..episodes)
        .into_par_iter()
        .map(|i| {
            play_eval_episode(ae, controller, world, seed, i, random_input, EpisodeOptions::default())
                .map(|r| r.score)
        })
        .collect()
}

/// Decision frames from consecutive evaluation episodes until `n_frames`
/// have been gathered.
pub fn collect_decision_frames(
    ae: &Autoencoder,
    controller: &Controller,
    world: &WorldConfig,
    n_frames: usize,
    seed: u64,
    random_input: bool,
) -> Result<Vec<Frame>> {
    let mut frames = Vec::with_capacity(n_frames);
    let options = EpisodeOptions { retain_frames: true };
    let mut index = 0;
    while frames.len() < n_frames {
        let r = play_eval_episode(ae, controller, world, seed, index, random_input, options)?;
        frames.extend(r.frames.into_iter().take(n_frames - frames.len()));
        index += 1;
    }
    Ok(frames)
}

/// Average chokepoint activation sum of `ae` over `n_frames` decision
/// frames seen by the agent.
pub fn sparsity_report(
    ae: &Autoencoder,
    controller: &Controller,
    world: &WorldConfig,
    n_frames: usize,
    seed: u64,
) -> Result<f64> {
    let frames = collect_decision_frames(ae, controller, world, n_frames, seed, false)?;
    let refs: Vec<&Frame> = frames.iter().collect();
    sparsity(ae, &refs)
}
