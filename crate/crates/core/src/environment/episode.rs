//! Episode driver with the five-frame decision cadence, and JSON-lines
//! decision traces.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EnvState, WorldConfig};
use crate::controller::{act_window, ActionCommand, WINDOW};
use crate::error::{Error, Result};
use crate::frame::Frame;

/// What a policy returns at a decision point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    pub command: ActionCommand,
    /// Hash of the encoding the decision was based on, if any.
    pub encoding_hash: Option<u64>,
}

impl From<ActionCommand> for Decision {
    fn from(command: ActionCommand) -> Self {
        Self {
            command,
            encoding_hash: None,
        }
    }
}

/// Chooses an action command from the current frame and normalized health.
pub trait Policy {
    fn decide(&mut self, frame: &Frame, health: f64) -> Result<Decision>;
}

impl<F: FnMut(&Frame, f64) -> Result<ActionCommand>> Policy for F {
    fn decide(&mut self, frame: &Frame, health: f64) -> Result<Decision> {
        self(frame, health).map(Decision::from)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EpisodeOptions {
    /// Keep every decision-point frame in the result.
    pub retain_frames: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub frame: u32,
    pub encoding_hash: Option<u64>,
    pub command: ActionCommand,
    pub health: f64,
    pub score: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    /// Frames survived, at most the timeout.
    pub score: u32,
    pub decisions: Vec<DecisionRecord>,
    /// Decision-point frames when retained, one per decision.
    pub frames: Vec<Frame>,
    pub packs_collected: u32,
    pub mines_hit: u32,
}

impl EpisodeResult {
    pub fn timed_out(&self, config: &WorldConfig) -> bool {
        self.score == config.max_frames
    }
}

/// Plays one episode, asking `policy` for a command every five frames.
/// Intermediate frames of a window are simulated without rendering.
pub fn run_episode<P: Policy + ?Sized>(
    config: &WorldConfig,
    seed: u64,
    policy: &mut P,
    options: EpisodeOptions,
) -> Result<EpisodeResult> {
    let (mut state, mut frame) = EnvState::reset(config, seed)?;
    let mut decisions = Vec::with_capacity(config.max_frames as usize / WINDOW + 1);
    let mut frames = Vec::new();
    'episode: loop {
        let health = state.normalized_health();
        let decision = policy.decide(&frame, health).map_err(|e| Error::Policy {
            frame: state.frame_index(),
            source: Box::new(e),
        })?;
        decisions.push(DecisionRecord {
            frame: state.frame_index(),
            encoding_hash: decision.encoding_hash,
            command: decision.command,
            health,
            score: state.score(),
        });
        if options.retain_frames {
            frames.push(frame.clone());
        }
        let window = act_window(&decision.command);
        for (i, actions) in window.iter().enumerate() {
            if i + 1 < WINDOW {
                if state.advance(*actions)? {
                    break 'episode;
                }
            } else {
                let out = state.step(*actions)?;
                if out.done {
                    break 'episode;
                }
                frame = out.frame;
            }
        }
    }
    Ok(EpisodeResult {
        score: state.score(),
        decisions,
        frames,
        packs_collected: state.packs_collected(),
        mines_hit: state.mines_hit(),
    })
}

/// Writes one JSON object per decision.
pub fn write_trace(path: &Path, records: &[DecisionRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<DecisionRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
