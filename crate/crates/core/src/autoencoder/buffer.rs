use std::collections::VecDeque;
use std::io::{Read, Write};

use super::Autoencoder;
use crate::codec::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::frame::{recon_error, Frame};

/// Bounded FIFO of training frames. A frame is admitted only when the
/// autoencoder reconstructs it with mean absolute error at or above the
/// filter threshold; frames it already reproduces well are dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperienceBuffer {
    frames: VecDeque<Frame>,
    capacity: usize,
    filter_threshold: f64,
    offered: u64,
    admitted: u64,
}

impl ExperienceBuffer {
    pub fn new(capacity: usize, filter_threshold: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("buffer capacity must be positive"));
        }
        if filter_threshold.is_nan() || filter_threshold < 0.0 {
            return Err(Error::config("filter threshold must be non-negative"));
        }
        Ok(Self {
            frames: VecDeque::with_capacity(capacity.min(4096)),
            capacity,
            filter_threshold,
            offered: 0,
            admitted: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn filter_threshold(&self) -> f64 {
        self.filter_threshold
    }

    /// Frames ever offered, admitted or not.
    pub fn frames_offered(&self) -> u64 {
        self.offered
    }

    /// Frames ever admitted, including ones since evicted.
    pub fn frames_admitted(&self) -> u64 {
        self.admitted
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &Frame> {
        self.frames.iter()
    }

    pub fn get(&self, index: usize) -> Option<&Frame> {
        self.frames.get(index)
    }

    pub fn admits(&self, error: f64) -> bool {
        error >= self.filter_threshold
    }

    /// Scores `frame` with `ae` and stores it if the error is high enough.
    pub fn offer(&mut self, frame: Frame, ae: &Autoencoder) -> Result<bool> {
        let reconstruction = ae.reconstruct(&frame)?;
        let error = recon_error(&frame, &reconstruction)?;
        Ok(self.offer_scored(frame, error))
    }

    /// Like [`ExperienceBuffer::offer`] with a precomputed reconstruction
    /// error.
    pub fn offer_scored(&mut self, frame: Frame, error: f64) -> bool {
        self.offered += 1;
        if !self.admits(error) {
            return false;
        }
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
        }
        self.frames.push_back(frame);
        self.admitted += 1;
        true
    }

    pub(crate) fn write_to<W: Write>(&self, enc: &mut Encoder<W>) -> Result<()> {
        enc.usize(self.capacity)?;
        enc.f64(self.filter_threshold)?;
        enc.u64(self.offered)?;
        enc.u64(self.admitted)?;
        enc.usize(self.frames.len())?;
        for f in &self.frames {
            enc.usize(f.height())?;
            enc.usize(f.width())?;
            enc.f32s(f.data())?;
        }
        Ok(())
    }

    pub(crate) fn read_from<R: Read>(dec: &mut Decoder<R>) -> Result<Self> {
        let capacity = dec.usize()?;
        let threshold = dec.f64()?;
        let mut buffer = Self::new(capacity, threshold)?;
        buffer.offered = dec.u64()?;
        buffer.admitted = dec.u64()?;
        let n = dec.usize()?;
        if n > capacity {
            return Err(Error::config("buffer holds more frames than its capacity"));
        }
        for _ in 0..n {
            let h = dec.usize()?;
            let w = dec.usize()?;
            buffer.frames.push_back(Frame::new(h, w, dec.f32s()?)?);
        }
        Ok(buffer)
    }
}
