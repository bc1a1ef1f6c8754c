use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Autoencoder, ExperienceBuffer};
use crate::codec::{Decoder, Encoder};
use crate::error::Result;
use crate::frame::Frame;
use crate::tensor::{mae_loss, Optimizer, OptimizerSettings, Tensor};

/// Mini-batch backpropagation over an experience buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Trainer {
    optimizer: Optimizer,
    batch_size: usize,
}

impl Trainer {
    pub fn new(settings: OptimizerSettings, batch_size: usize, ae: &Autoencoder) -> Result<Self> {
        Ok(Self {
            optimizer: Optimizer::new(settings, ae.network())?,
            batch_size: batch_size.max(1),
        })
    }

    pub fn optimizer(&self) -> &Optimizer {
        &self.optimizer
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub(crate) fn write_state<W: Write>(&self, enc: &mut Encoder<W>) -> Result<()> {
        enc.usize(self.batch_size)?;
        self.optimizer.write_state(enc)
    }

    pub(crate) fn read_state<R: Read>(&mut self, dec: &mut Decoder<R>) -> Result<()> {
        self.batch_size = dec.usize()?.max(1);
        self.optimizer.read_state(dec)
    }

    /// One optimizer step on `frames`; returns the batch's mean absolute
    /// error before the step.
    pub fn train_batch(&mut self, ae: &mut Autoencoder, frames: &[&Frame]) -> Result<f64> {
        let input = ae.input_tensor(frames)?;
        let target = ae.target_tensor(frames)?;
        let net = ae.network_mut();
        let trace = net.trace(&input)?;
        let predicted = Tensor::new(target.shape().to_vec(), trace.output().to_vec())?;
        let (loss, grad) = mae_loss(&predicted, &target)?;
        let (tape, _) = net.backprop(&trace, grad.data(), false)?;
        self.optimizer.step(net, &tape)?;
        Ok(loss)
    }

    /// Runs `epochs` shuffled passes over `buffer`, each limited to
    /// `max_presentations` frames, and returns the mean loss of each epoch.
    /// An empty buffer yields an empty trace.
    pub fn train_epochs<R: Rng + ?Sized>(
        &mut self,
        ae: &mut Autoencoder,
        buffer: &ExperienceBuffer,
        epochs: usize,
        max_presentations: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let frames: Vec<&Frame> = buffer.frames().collect();
        self.train_on(ae, &frames, epochs, max_presentations, rng)
    }

    pub fn train_on<R: Rng + ?Sized>(
        &mut self,
        ae: &mut Autoencoder,
        frames: &[&Frame],
        epochs: usize,
        max_presentations: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let mut trace = Vec::with_capacity(epochs);
        if frames.is_empty() {
            return Ok(trace);
        }
        let mut order: Vec<usize> = (0..frames.len()).collect();
        for _ in 0..epochs {
            order.shuffle(rng);
            let take = order.len().min(max_presentations.max(1));
            let mut weighted = 0.0;
            for chunk in order[..take].chunks(self.batch_size) {
                let batch: Vec<&Frame> = chunk.iter().map(|&i| frames[i]).collect();
                weighted += self.train_batch(ae, &batch)? * batch.len() as f64;
            }
            trace.push(weighted / take as f64);
        }
        Ok(trace)
    }
}
