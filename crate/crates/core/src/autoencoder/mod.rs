//! Convolutional autoencoders that compress frames to a small chokepoint.
//!
//! Two topologies are provided. The standard one convolves over the image
//! with RGB as channels. The alternative one feeds the image with its width
//! axis in the channel position, so the first filters span the full image
//! width (a `3 × k × width` receptive field).
//!
//! Both encoders end in three dense layers; the chokepoint is the ReLU
//! output of the second one (`fc2`). The decoder is three dense layers with
//! a sigmoid output sized to the full frame, in standard `H × W × 3` order.

mod buffer;
mod train;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use buffer::ExperienceBuffer;
pub use train::Trainer;

use crate::error::{Error, Result};
use crate::frame::{mean_abs_diff, Frame, CHANNELS};
use crate::tensor::{Activation, ConvSpec, LayerSpec, Network, Padding, Tensor};

/// Index of the chokepoint layer (`fc2`) within the network.
pub const CHOKEPOINT_LAYER: usize = 4;

/// Frames per forward batch when scoring or reconstructing many frames.
const INFERENCE_BATCH: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Standard,
    Alternative,
}

/// Supported input resolutions. Smaller presets scale the first convolution
/// so that later layers see the same shapes as at full size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    /// 120 × 160.
    Paper,
    /// 60 × 80.
    Desk,
    /// 16 × 20 with narrow layers; used for gradient checks.
    Mini,
}

impl Resolution {
    pub fn height(self) -> usize {
        match self {
            Resolution::Paper => 120,
            Resolution::Desk => 60,
            Resolution::Mini => 16,
        }
    }

    pub fn width(self) -> usize {
        match self {
            Resolution::Paper => 160,
            Resolution::Desk => 80,
            Resolution::Mini => 20,
        }
    }

    pub fn from_dims(height: usize, width: usize) -> Option<Self> {
        [Resolution::Paper, Resolution::Desk, Resolution::Mini]
            .into_iter()
            .find(|r| r.height() == height && r.width() == width)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutoencoderConfig {
    pub topology: Topology,
    pub resolution: Resolution,
    pub chokepoint_size: usize,
}

impl AutoencoderConfig {
    pub fn new(topology: Topology, resolution: Resolution) -> Self {
        Self {
            topology,
            resolution,
            chokepoint_size: 128,
        }
    }

    pub fn frame_len(&self) -> usize {
        self.resolution.height() * self.resolution.width() * CHANNELS
    }

    /// The full layer stack: three convolutions, then `fc1`..`fc5`.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let (h, w) = (self.resolution.height(), self.resolution.width());
        let conv = |in_h, in_w, in_c, fh, fw, stride, filters| ConvSpec {
            in_h,
            in_w,
            in_c,
            filter_h: fh,
            filter_w: fw,
            stride,
            filters,
            padding: Padding::Same,
        };
        let convs = match (self.topology, self.resolution) {
            (Topology::Standard, Resolution::Paper) => [
                conv(h, w, 3, 8, 8, 4, 32),
                conv(30, 40, 32, 4, 4, 3, 64),
                conv(10, 14, 64, 4, 4, 3, 64),
            ],
            (Topology::Standard, Resolution::Desk) => [
                conv(h, w, 3, 4, 4, 2, 32),
                conv(30, 40, 32, 4, 4, 3, 64),
                conv(10, 14, 64, 4, 4, 3, 64),
            ],
            (Topology::Standard, Resolution::Mini) => [
                conv(h, w, 3, 4, 4, 2, 4),
                conv(8, 10, 4, 4, 4, 3, 8),
                conv(3, 4, 8, 4, 4, 3, 8),
            ],
            // Height is the colour axis, width is image rows, channels are
            // image columns.
            (Topology::Alternative, Resolution::Paper) => [
                conv(3, h, w, 3, 8, 4, 64),
                conv(1, 30, 64, 1, 4, 2, 128),
                conv(1, 15, 128, 1, 4, 2, 256),
            ],
            // The stride must stay ≥ 3 to collapse the colour axis, so the
            // desk preset keeps the full-size filter and halves every width.
            (Topology::Alternative, Resolution::Desk) => [
                conv(3, h, w, 3, 8, 4, 64),
                conv(1, 15, 64, 1, 4, 2, 128),
                conv(1, 8, 128, 1, 4, 2, 256),
            ],
            (Topology::Alternative, Resolution::Mini) => [
                conv(3, h, w, 3, 4, 3, 8),
                conv(1, 6, 8, 1, 4, 2, 8),
                conv(1, 3, 8, 1, 4, 2, 8),
            ],
        };
        let flat = convs[2].out_h() * convs[2].out_w() * convs[2].filters;
        let (hidden, wide) = match self.resolution {
            Resolution::Paper | Resolution::Desk => (512, 1024),
            Resolution::Mini => (16, 16),
        };
        let c = self.chokepoint_size;
        let mut specs: Vec<LayerSpec> = convs
            .iter()
            .map(|&s| LayerSpec::conv(s, Activation::Relu))
            .collect();
        specs.extend([
            LayerSpec::dense(flat, hidden, Activation::Relu, true),
            LayerSpec::dense(hidden, c, Activation::Relu, true),
            LayerSpec::dense(c, hidden, Activation::Relu, true),
            LayerSpec::dense(hidden, wide, Activation::Relu, true),
            LayerSpec::dense(wide, self.frame_len(), Activation::Sigmoid, true),
        ]);
        specs
    }
}

/// Chokepoint activations for one frame; every value is non-negative.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoding(pub Vec<f64>);

impl Encoding {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// FNV-1a over the bit patterns, for compact trace logging.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.0 {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder {
    config: AutoencoderConfig,
    network: Network,
}

impl Autoencoder {
    pub fn new<R: Rng + ?Sized>(config: AutoencoderConfig, rng: &mut R) -> Result<Self> {
        let network = Network::glorot(&config.layer_specs(), rng)?;
        Ok(Self { config, network })
    }

    /// All weights and biases zero.
    pub fn zeros(config: AutoencoderConfig) -> Result<Self> {
        let network = Network::zeros(&config.layer_specs())?;
        Ok(Self { config, network })
    }

    pub fn from_network(config: AutoencoderConfig, network: Network) -> Result<Self> {
        if network.specs() != config.layer_specs() {
            return Err(Error::config("network layers do not match the autoencoder topology"));
        }
        Ok(Self { config, network })
    }

    pub fn config(&self) -> &AutoencoderConfig {
        &self.config
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.network
    }

    fn check_frame(&self, frame: &Frame) -> Result<()> {
        let want = (self.config.resolution.height(), self.config.resolution.width());
        if frame.dims() != want {
            return Err(Error::config(format!(
                "frame is {}x{}, autoencoder expects {}x{}",
                frame.height(),
                frame.width(),
                want.0,
                want.1
            )));
        }
        Ok(())
    }

    /// Appends the network input for `frame` to `out`.
    fn push_input(&self, frame: &Frame, out: &mut Vec<f64>) {
        match self.config.topology {
            Topology::Standard => out.extend(frame.data().iter().map(|&v| v as f64)),
            Topology::Alternative => {
                // [c][y][x] so that x (the image column) lands on the channel axis.
                let (h, w) = frame.dims();
                let data = frame.data();
                for c in 0..CHANNELS {
                    for y in 0..h {
                        for x in 0..w {
                            out.push(data[(y * w + x) * CHANNELS + c] as f64);
                        }
                    }
                }
            }
        }
    }

    /// Batched network input for `frames`.
    pub fn input_tensor(&self, frames: &[&Frame]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(frames.len() * self.config.frame_len());
        for f in frames {
            self.check_frame(f)?;
            self.push_input(f, &mut data);
        }
        let mut shape = self.network.input_shape();
        shape.insert(0, frames.len());
        Tensor::new(shape, data)
    }

    /// Reconstruction targets in standard frame order.
    pub fn target_tensor(&self, frames: &[&Frame]) -> Result<Tensor> {
        let data: Vec<f64> = frames
            .iter()
            .flat_map(|f| f.data().iter().map(|&v| v as f64))
            .collect();
        Tensor::new(vec![frames.len(), self.config.frame_len()], data)
    }

    pub fn encode(&self, frame: &Frame) -> Result<Encoding> {
        Ok(self.encode_batch(&[frame])?.remove(0))
    }

    pub fn encode_batch(&self, frames: &[&Frame]) -> Result<Vec<Encoding>> {
        if frames.is_empty() {
            return Ok(Vec::new());
        }
        let input = self.input_tensor(frames)?;
        let out = self
            .network
            .run_layers(input.data(), frames.len(), 0..CHOKEPOINT_LAYER + 1);
        Ok(out
            .chunks_exact(self.config.chokepoint_size)
            .map(|c| Encoding(c.to_vec()))
            .collect())
    }

    pub fn reconstruct(&self, frame: &Frame) -> Result<Frame> {
        Ok(self.reconstruct_batch(&[frame])?.remove(0))
    }

    pub fn reconstruct_batch(&self, frames: &[&Frame]) -> Result<Vec<Frame>> {
        let (h, w) = (self.config.resolution.height(), self.config.resolution.width());
        let mut out = Vec::with_capacity(frames.len());
        for chunk in frames.chunks(INFERENCE_BATCH) {
            let input = self.input_tensor(chunk)?;
            let pred = self.network.predict(&input)?;
            for values in pred.data().chunks_exact(self.config.frame_len()) {
                out.push(Frame::new(h, w, values.iter().map(|&v| v as f32).collect())?);
            }
        }
        Ok(out)
    }

    /// Reconstruction error of each frame, computed in batches without
    /// materializing reconstructed frames.
    pub fn reconstruction_errors(&self, frames: &[&Frame]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(frames.len());
        for chunk in frames.chunks(INFERENCE_BATCH) {
            let input = self.input_tensor(chunk)?;
            let pred = self.network.predict(&input)?;
            for (f, values) in chunk.iter().zip(pred.data().chunks_exact(self.config.frame_len())) {
                out.push(mean_abs_diff(f.data(), values.iter().copied()));
            }
        }
        Ok(out)
    }

    /// Reconstruction errors from precomputed encodings of `frames`, running
    /// only the decoder.
    pub fn decode_errors(&self, encodings: &[Encoding], frames: &[&Frame]) -> Result<Vec<f64>> {
        if encodings.len() != frames.len() {
            return Err(Error::config(format!(
                "{} encodings for {} frames",
                encodings.len(),
                frames.len()
            )));
        }
        let k = self.config.chokepoint_size;
        let layers = self.network.layers().len();
        let mut out = Vec::with_capacity(frames.len());
        for (encs, chunk) in encodings.chunks(INFERENCE_BATCH).zip(frames.chunks(INFERENCE_BATCH)) {
            let mut input = Vec::with_capacity(encs.len() * k);
            for (e, f) in encs.iter().zip(chunk) {
                self.check_frame(f)?;
                if e.len() != k {
                    return Err(Error::config(format!("encoding has {} values, expected {k}", e.len())));
                }
                input.extend_from_slice(e.values());
            }
            let pred = self
                .network
                .run_layers(&input, encs.len(), CHOKEPOINT_LAYER + 1..layers);
            for (f, values) in chunk.iter().zip(pred.chunks_exact(self.config.frame_len())) {
                out.push(mean_abs_diff(f.data(), values.iter().copied()));
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.network.save(path)
    }

    pub fn load(config: AutoencoderConfig, path: &Path) -> Result<Self> {
        Self::from_network(config, Network::load(path)?)
    }
}

/// Mean over frames of the per-frame sum of chokepoint activations, each
/// clamped to `[0, 1]`; bounded by the chokepoint size.
pub fn sparsity_of(encodings: &[Encoding]) -> Result<f64> {
    if encodings.is_empty() {
        return Err(Error::config("sparsity needs at least one frame"));
    }
    let total: f64 = encodings
        .iter()
        .map(|e| e.values().iter().map(|v| v.clamp(0.0, 1.0)).sum::<f64>())
        .sum();
    Ok(total / encodings.len() as f64)
}

pub fn sparsity(ae: &Autoencoder, frames: &[&Frame]) -> Result<f64> {
    if frames.is_empty() {
        return Err(Error::config("sparsity needs at least one frame"));
    }
    let mut encodings = Vec::with_capacity(frames.len());
    for chunk in frames.chunks(INFERENCE_BATCH) {
        encodings.extend(ae.encode_batch(chunk)?);
    }
    sparsity_of(&encodings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::recon_error;
    use crate::tensor::LayerKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_frame(rng: &mut ChaCha8Rng, r: Resolution) -> Frame {
        let n = r.height() * r.width() * 3;
        Frame::new(r.height(), r.width(), (0..n).map(|_| rng.random::<f32>()).collect()).unwrap()
    }

    fn shapes(cfg: AutoencoderConfig) -> Vec<(Vec<usize>, Vec<usize>)> {
        cfg.layer_specs()
            .iter()
            .map(|s| (s.input_shape(), s.output_shape()))
            .collect()
    }

    #[test]
    fn standard_topology_realizes_table_rows() {
        let cfg = AutoencoderConfig::new(Topology::Standard, Resolution::Paper);
        let s = shapes(cfg);
        assert_eq!(s[0], (vec![120, 160, 3], vec![30, 40, 32]));
        assert_eq!(s[1], (vec![30, 40, 32], vec![10, 14, 64]));
        assert_eq!(s[2], (vec![10, 14, 64], vec![4, 5, 64]));
        assert_eq!(s[3], (vec![1280], vec![512]));
        assert_eq!(s[4], (vec![512], vec![128]));
        assert_eq!(s[5], (vec![128], vec![512]));
        assert_eq!(s[6], (vec![512], vec![1024]));
        assert_eq!(s[7], (vec![1024], vec![120 * 160 * 3]));
        let specs = cfg.layer_specs();
        let LayerKind::Conv2d(c1) = specs[0].kind else { panic!() };
        assert_eq!((c1.filter_h, c1.filter_w, c1.in_c, c1.stride, c1.filters), (8, 8, 3, 4, 32));
    }

    #[test]
    fn alternative_topology_realizes_table_rows() {
        let cfg = AutoencoderConfig::new(Topology::Alternative, Resolution::Paper);
        let s = shapes(cfg);
        assert_eq!(s[0], (vec![3, 120, 160], vec![1, 30, 64]));
        assert_eq!(s[1], (vec![1, 30, 64], vec![1, 15, 128]));
        assert_eq!(s[2], (vec![1, 15, 128], vec![1, 8, 256]));
        assert_eq!(s[3], (vec![2048], vec![512]));
        assert_eq!(s[4], (vec![512], vec![128]));
        assert_eq!(s[7], (vec![1024], vec![57600]));
        let specs = cfg.layer_specs();
        let LayerKind::Conv2d(c1) = specs[0].kind else { panic!() };
        assert_eq!((c1.filter_h, c1.filter_w, c1.in_c, c1.stride, c1.filters), (3, 8, 160, 4, 64));
    }

    #[test]
    fn scaled_presets_match_downstream_shapes() {
        let paper = shapes(AutoencoderConfig::new(Topology::Standard, Resolution::Paper));
        let desk = shapes(AutoencoderConfig::new(Topology::Standard, Resolution::Desk));
        assert_eq!(paper[1..7], desk[1..7]);
        assert_eq!(desk[7].1, vec![60 * 80 * 3]);
        let alt = shapes(AutoencoderConfig::new(Topology::Alternative, Resolution::Desk));
        assert_eq!(alt[0], (vec![3, 60, 80], vec![1, 15, 64]));
        assert_eq!(alt[3], (vec![1024], vec![512]));
        assert_eq!(alt[4].1, vec![128]);
        assert_eq!(alt[7].1, vec![60 * 80 * 3]);
        for topo in [Topology::Standard, Topology::Alternative] {
            let mut cfg = AutoencoderConfig::new(topo, Resolution::Mini);
            cfg.chokepoint_size = 8;
            assert!(Network::zeros(&cfg.layer_specs()).is_ok());
        }
    }

    #[test]
    fn zero_network_encodes_zero() {
        let cfg = AutoencoderConfig::new(Topology::Standard, Resolution::Desk);
        let ae = Autoencoder::zeros(cfg).unwrap();
        let enc = ae.encode(&Frame::filled(60, 80, 0.0)).unwrap();
        assert_eq!(enc.len(), 128);
        assert!(enc.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encode_is_deterministic_and_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for topo in [Topology::Standard, Topology::Alternative] {
            let ae = Autoencoder::new(AutoencoderConfig::new(topo, Resolution::Desk), &mut rng).unwrap();
            let f = random_frame(&mut rng, Resolution::Desk);
            let a = ae.encode(&f).unwrap();
            let b = ae.encode(&f.clone()).unwrap();
            assert_eq!(a.len(), 128);
            assert!(a.values().iter().all(|&v| v >= 0.0));
            assert_eq!(a.hash(), b.hash());
            assert_eq!(a, b);
        }
    }

    #[test]
    fn reconstruct_keeps_dimensions_and_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for topo in [Topology::Standard, Topology::Alternative] {
            let ae = Autoencoder::new(AutoencoderConfig::new(topo, Resolution::Desk), &mut rng).unwrap();
            let f = random_frame(&mut rng, Resolution::Desk);
            let r = ae.reconstruct(&f).unwrap();
            assert_eq!(r.dims(), f.dims());
            assert!(r.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            let err = recon_error(&f, &r).unwrap();
            assert!(err > 0.0);
            let batched = ae.reconstruction_errors(&[&f]).unwrap()[0];
            assert!((batched - err).abs() < 1e-6);
        }
    }

    #[test]
    fn decoder_only_errors_match_full_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let ae = Autoencoder::new(AutoencoderConfig::new(Topology::Standard, Resolution::Desk), &mut rng).unwrap();
        let frames: Vec<Frame> = (0..3).map(|_| random_frame(&mut rng, Resolution::Desk)).collect();
        let refs: Vec<&Frame> = frames.iter().collect();
        let encs = ae.encode_batch(&refs).unwrap();
        let a = ae.decode_errors(&encs, &refs).unwrap();
        let b = ae.reconstruction_errors(&refs).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(ae.decode_errors(&encs[..2], &refs).is_err());
    }

    #[test]
    fn wrong_resolution_is_rejected() {
        let ae = Autoencoder::zeros(AutoencoderConfig::new(Topology::Standard, Resolution::Desk)).unwrap();
        assert!(ae.encode(&Frame::filled(120, 160, 0.0)).is_err());
        assert!(ae.reconstruct(&Frame::filled(60, 81, 0.0)).is_err());
    }

    #[test]
    fn alternative_layout_puts_columns_on_channels() {
        let ae = Autoencoder::zeros(AutoencoderConfig::new(Topology::Alternative, Resolution::Mini)).unwrap();
        let mut f = Frame::filled(16, 20, 0.0);
        f.set_pixel(5, 7, [0.1, 0.2, 0.3]);
        let t = ae.input_tensor(&[&f]).unwrap();
        assert_eq!(t.shape(), &[1, 3, 16, 20]);
        // [c][y][x]
        assert!((t.data()[(16 + 5) * 20 + 7] - 0.2).abs() < 1e-7);
        assert!((t.data()[(2 * 16 + 5) * 20 + 7] - 0.3).abs() < 1e-7);
    }

    #[test]
    fn sparsity_cases() {
        assert_eq!(sparsity_of(&[Encoding(vec![0.0; 128])]).unwrap(), 0.0);
        assert_eq!(sparsity_of(&[Encoding(vec![1.0; 128])]).unwrap(), 128.0);
        assert_eq!(sparsity_of(&[Encoding(vec![7.5; 128])]).unwrap(), 128.0);
        let mut a = vec![0.0; 128];
        a[..10].fill(1.0);
        let mut b = vec![0.0; 128];
        b[..40].fill(0.5);
        assert_eq!(sparsity_of(&[Encoding(a), Encoding(b)]).unwrap(), 15.0);
        assert!(sparsity_of(&[]).is_err());
    }

    #[test]
    fn weights_round_trip_through_file() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let dir = tempfile::tempdir().unwrap();
        for topo in [Topology::Standard, Topology::Alternative] {
            let cfg = AutoencoderConfig::new(topo, Resolution::Desk);
            let ae = Autoencoder::new(cfg, &mut rng).unwrap();
            let path = dir.path().join("ae.cevo");
            ae.save(&path).unwrap();
            let back = Autoencoder::load(cfg, &path).unwrap();
            assert_eq!(back, ae);
            let other = AutoencoderConfig::new(
                if topo == Topology::Standard { Topology::Alternative } else { Topology::Standard },
                Resolution::Desk,
            );
            assert!(Autoencoder::load(other, &path).is_err());
        }
    }
}
