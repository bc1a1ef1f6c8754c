use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use rand::Rng;

use super::layer::{Activation, ConvSpec, DenseSpec, Layer, LayerCache, LayerKind, LayerSpec, Padding};
use super::Tensor;
use crate::codec::{Decoder, Encoder};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CEVO";
const FORMAT_VERSION: u32 = 1;
const TAG_DENSE: u8 = 0;
const TAG_CONV: u8 = 1;

/// Activations retained by a forward pass for a later backward pass.
#[derive(Clone, Debug)]
pub struct Trace {
    batch: usize,
    batched: bool,
    input: Vec<f64>,
    caches: Vec<LayerCache>,
}

impl Trace {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Final-layer activations, flat over the batch.
    pub fn output(&self) -> &[f64] {
        &self.caches.last().expect("networks have at least one layer").output
    }

    /// Activated output of layer `index`.
    pub fn layer_output(&self, index: usize) -> &[f64] {
        &self.caches[index].output
    }
}

/// Parameter gradients, one weight and one bias vector per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientTape {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl GradientTape {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.biases)
            .all(|g| g.iter().all(|&v| v == 0.0))
    }

    /// All gradients flattened in the same order as [`Network::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }

    pub(crate) fn matches(&self, net: &Network) -> bool {
        self.weights.len() == net.layers.len()
            && self.biases.len() == net.layers.len()
            && net.layers.iter().enumerate().all(|(i, l)| {
                self.weights[i].len() == l.weights.len() && self.biases[i].len() == l.bias.len()
            })
    }
}

/// An ordered stack of layers. Consecutive layers must agree on element
/// count; a dense layer after a convolution consumes the flattened
/// height × width × channel activation.
#[derive(Clone, Debug)]
pub struct Network {
    layers: Vec<Layer>,
    retained: Option<Trace>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Network {
    /// Builds a network with all parameters zero.
    pub fn zeros(specs: &[LayerSpec]) -> Result<Self> {
        Self::from_layers(specs.iter().map(|&s| Layer::zeros(s)).collect())
    }

    pub fn glorot<R: Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        Self::from_layers(specs.iter().map(|&s| Layer::glorot(s, rng)).collect())
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("network needs at least one layer"));
        }
        for (i, layer) in layers.iter().enumerate() {
            layer
                .spec
                .validate()
                .map_err(|e| Error::config(format!("layer {i}: {e}")))?;
            if layer.weights.len() != layer.spec.weight_len() || layer.bias.len() != layer.spec.bias_len() {
                return Err(Error::config(format!("layer {i}: parameter lengths do not match spec")));
            }
            if i > 0 {
                let produced = layers[i - 1].spec.output_len();
                let expected = layer.spec.input_len();
                if produced != expected {
                    return Err(Error::config(format!(
                        "layer {i} expects {expected} inputs but layer {} produces {produced}",
                        i - 1
                    )));
                }
            }
        }
        Ok(Self {
            layers,
            retained: None,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.retained = None;
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn input_shape(&self) -> Vec<usize> {
        self.layers[0].spec.input_shape()
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].spec.input_len()
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.layers.last().unwrap().spec.output_shape()
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().unwrap().spec.output_len()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Layer::parameter_count).sum()
    }

    /// Layer-major flattening: each layer's weights then its biases.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::config(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                params.len()
            )));
        }
        let mut offset = 0;
        for layer in self.layers_mut() {
            let w = layer.weights.len();
            layer.weights.copy_from_slice(&params[offset..offset + w]);
            offset += w;
            let b = layer.bias.len();
            layer.bias.copy_from_slice(&params[offset..offset + b]);
            offset += b;
        }
        Ok(())
    }

    /// Resolves the batch size of `input`, which must have the network's
    /// input shape optionally prefixed by a batch axis.
    fn batch_of(&self, input: &Tensor) -> Result<(usize, bool)> {
        let expected = self.input_shape();
        let shape = input.shape();
        if shape == expected.as_slice() {
            return Ok((1, false));
        }
        if shape.len() == expected.len() + 1 && shape[1..] == expected[..] {
            return Ok((shape[0], true));
        }
        Err(Error::config(format!(
            "layer 0 expects input shape {expected:?} (optionally batched), got {shape:?}"
        )))
    }

    fn output_tensor(&self, data: Vec<f64>, batch: usize, batched: bool) -> Tensor {
        let mut shape = self.output_shape();
        if batched {
            shape.insert(0, batch);
        }
        Tensor::new(shape, data).expect("layer output length is consistent")
    }

    /// Forward pass that retains activations for [`Network::backward`].
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let trace = self.trace(input)?;
        let out = self.output_tensor(trace.output().to_vec(), trace.batch, trace.batched);
        self.retained = Some(trace);
        Ok(out)
    }

    /// Backward pass from the gradient of a scalar loss with respect to the
    /// output of the most recent [`Network::forward`].
    pub fn backward(&mut self, loss_grad: &Tensor) -> Result<GradientTape> {
        let trace = self
            .retained
            .as_ref()
            .ok_or_else(|| Error::state("backward called before forward"))?;
        let (tape, _) = self.backprop(trace, loss_grad.data(), false)?;
        Ok(tape)
    }

    /// Forward pass that returns the retained activations instead of storing
    /// them, so a shared network can be differentiated from many threads.
    pub fn trace(&self, input: &Tensor) -> Result<Trace> {
        let (batch, batched) = self.batch_of(input)?;
        let mut caches: Vec<LayerCache> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let src = if i == 0 { input.data() } else { &caches[i - 1].output };
            let cache = layer.forward(src, batch, true);
            caches.push(cache);
        }
        Ok(Trace {
            batch,
            batched,
            input: input.data().to_vec(),
            caches,
        })
    }

    /// Exact gradients for every parameter, plus the gradient with respect to
    /// the network input when `want_input_grad` is set.
    pub fn backprop(
        &self,
        trace: &Trace,
        loss_grad: &[f64],
        want_input_grad: bool,
    ) -> Result<(GradientTape, Option<Vec<f64>>)> {
        if trace.caches.len() != self.layers.len() {
            return Err(Error::state("trace was produced by a different network"));
        }
        if loss_grad.len() != trace.output().len() {
            return Err(Error::config(format!(
                "loss gradient has {} values, output has {}",
                loss_grad.len(),
                trace.output().len()
            )));
        }
        let n = self.layers.len();
        let mut weights = vec![Vec::new(); n];
        let mut biases = vec![Vec::new(); n];
        let mut grad = loss_grad.to_vec();
        let mut input_grad = None;
        for i in (0..n).rev() {
            let input = if i == 0 { &trace.input } else { &trace.caches[i - 1].output };
            let need = i > 0 || want_input_grad;
            let (gw, gb, gx) = self.layers[i].backward(input, &trace.caches[i], &grad, trace.batch, need);
            weights[i] = gw;
            biases[i] = gb;
            match gx {
                Some(gx) if i > 0 => grad = gx,
                Some(gx) => input_grad = Some(gx),
                None => {}
            }
        }
        Ok((GradientTape { weights, biases }, input_grad))
    }

    /// Inference without retaining anything.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        let (batch, batched) = self.batch_of(input)?;
        let out = self.run_layers(input.data(), batch, 0..self.layers.len());
        Ok(self.output_tensor(out, batch, batched))
    }

    /// Runs layers `range` on a flat batch whose rows match the input of
    /// `range.start`.
    pub fn run_layers(&self, input: &[f64], batch: usize, range: Range<usize>) -> Vec<f64> {
        let mut current: Option<Vec<f64>> = None;
        for i in range {
            let src = current.as_deref().unwrap_or(input);
            current = Some(self.layers[i].forward(src, batch, false).output);
        }
        current.unwrap_or_else(|| input.to_vec())
    }

    pub fn write_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut enc = Encoder::new(writer);
        enc.bytes(MAGIC)?;
        enc.u32(FORMAT_VERSION)?;
        enc.u32(self.layers.len() as u32)?;
        for layer in &self.layers {
            let spec = layer.spec;
            match spec.kind {
                LayerKind::Dense(d) => {
                    enc.u8(TAG_DENSE)?;
                    enc.u8(spec.activation.tag())?;
                    enc.u8(spec.use_bias as u8)?;
                    enc.u32(d.in_size as u32)?;
                    enc.u32(d.out_size as u32)?;
                }
                LayerKind::Conv2d(c) => {
                    enc.u8(TAG_CONV)?;
                    enc.u8(spec.activation.tag())?;
                    enc.u8(spec.use_bias as u8)?;
                    enc.u8(match c.padding {
                        Padding::Valid => 0,
                        Padding::Same => 1,
                    })?;
                    for v in [c.in_h, c.in_w, c.in_c, c.filter_h, c.filter_w, c.stride, c.filters] {
                        enc.u32(v as u32)?;
                    }
                }
            }
            for &w in layer.weights.iter().chain(&layer.bias) {
                enc.f64(w)?;
            }
        }
        enc.into_inner().flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(reader: R) -> Result<Self> {
        let mut dec = Decoder::new(reader);
        let magic: [u8; 4] = dec.bytes()?;
        if &magic != MAGIC {
            return Err(Error::config("bad magic bytes, not a network file"));
        }
        let version = dec.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::config(format!("unsupported network format version {version}")));
        }
        let count = dec.u32()? as usize;
        if count == 0 || count > 4096 {
            return Err(Error::config(format!("implausible layer count {count}")));
        }
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let tag = dec.u8()?;
            let activation = Activation::from_tag(dec.u8()?)
                .ok_or_else(|| Error::config("unknown activation tag"))?;
            let use_bias = dec.u8()? != 0;
            let kind = match tag {
                TAG_DENSE => LayerKind::Dense(DenseSpec {
                    in_size: dec.u32()? as usize,
                    out_size: dec.u32()? as usize,
                }),
                TAG_CONV => {
                    let padding = match dec.u8()? {
                        0 => Padding::Valid,
                        1 => Padding::Same,
                        p => return Err(Error::config(format!("unknown padding tag {p}"))),
                    };
                    let mut v = [0usize; 7];
                    for slot in &mut v {
                        *slot = dec.u32()? as usize;
                    }
                    LayerKind::Conv2d(ConvSpec {
                        in_h: v[0],
                        in_w: v[1],
                        in_c: v[2],
                        filter_h: v[3],
                        filter_w: v[4],
                        stride: v[5],
                        filters: v[6],
                        padding,
                    })
                }
                t => return Err(Error::config(format!("unknown layer tag {t}"))),
            };
            let spec = LayerSpec {
                kind,
                activation,
                use_bias,
            };
            spec.validate()?;
            let mut layer = Layer::zeros(spec);
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = dec.f64()?;
            }
            layers.push(layer);
        }
        dec.finish()?;
        Self::from_layers(layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        Self::read_from(BufReader::new(file)).map_err(|e| match e {
            Error::Io(_) | Error::Config(_) => Error::format(path, e.to_string()),
            other => other,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory cannot fail");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(bytes)
    }
}
