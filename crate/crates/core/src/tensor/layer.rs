use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let y = if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                };
                // Saturated values stay strictly inside (0, 1).
                y.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
            }
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
            Activation::Identity => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Sigmoid),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// No padding: `out = (in - filter) / stride + 1`.
    Valid,
    /// Minimal zero padding giving `out = ceil(in / stride)`, split with the
    /// smaller half before the data.
    Same,
}

/// Two-dimensional convolution over an `in_h × in_w × in_c` input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub filter_h: usize,
    pub filter_w: usize,
    pub stride: usize,
    pub filters: usize,
    pub padding: Padding,
}

impl ConvSpec {
    fn out_extent(&self, input: usize, filter: usize) -> usize {
        match self.padding {
            Padding::Valid => (input - filter) / self.stride + 1,
            Padding::Same => input.div_ceil(self.stride),
        }
    }

    fn pad_before(&self, input: usize, filter: usize) -> usize {
        match self.padding {
            Padding::Valid => 0,
            Padding::Same => {
                let out = self.out_extent(input, filter);
                let total = ((out - 1) * self.stride + filter).saturating_sub(input);
                total / 2
            }
        }
    }

    pub fn out_h(&self) -> usize {
        self.out_extent(self.in_h, self.filter_h)
    }

    pub fn out_w(&self) -> usize {
        self.out_extent(self.in_w, self.filter_w)
    }

    pub fn pad_top(&self) -> usize {
        self.pad_before(self.in_h, self.filter_h)
    }

    pub fn pad_left(&self) -> usize {
        self.pad_before(self.in_w, self.filter_w)
    }

    /// Elements in one filter.
    pub fn kernel_len(&self) -> usize {
        self.filter_h * self.filter_w * self.in_c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseSpec {
    pub in_size: usize,
    pub out_size: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Conv2d(ConvSpec),
    Dense(DenseSpec),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub activation: Activation,
    pub use_bias: bool,
}

impl LayerSpec {
    pub fn conv(spec: ConvSpec, activation: Activation) -> Self {
        Self {
            kind: LayerKind::Conv2d(spec),
            activation,
            use_bias: true,
        }
    }

    pub fn dense(in_size: usize, out_size: usize, activation: Activation, use_bias: bool) -> Self {
        Self {
            kind: LayerKind::Dense(DenseSpec { in_size, out_size }),
            activation,
            use_bias,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            LayerKind::Dense(d) => {
                if d.in_size == 0 || d.out_size == 0 {
                    return Err(Error::config(format!(
                        "dense layer sizes must be positive, got {}→{}",
                        d.in_size, d.out_size
                    )));
                }
            }
            LayerKind::Conv2d(c) => {
                let dims = [c.in_h, c.in_w, c.in_c, c.filter_h, c.filter_w, c.stride, c.filters];
                if dims.contains(&0) {
                    return Err(Error::config(format!("conv layer has a zero dimension: {c:?}")));
                }
                if c.padding == Padding::Valid && (c.filter_h > c.in_h || c.filter_w > c.in_w) {
                    return Err(Error::config(format!(
                        "filter {}x{} larger than input {}x{} without padding",
                        c.filter_h, c.filter_w, c.in_h, c.in_w
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn input_shape(&self) -> Vec<usize> {
        match self.kind {
            LayerKind::Dense(d) => vec![d.in_size],
            LayerKind::Conv2d(c) => vec![c.in_h, c.in_w, c.in_c],
        }
    }

    pub fn output_shape(&self) -> Vec<usize> {
        match self.kind {
            LayerKind::Dense(d) => vec![d.out_size],
            LayerKind::Conv2d(c) => vec![c.out_h(), c.out_w(), c.filters],
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_shape().iter().product()
    }

    pub fn output_len(&self) -> usize {
        self.output_shape().iter().product()
    }

    pub fn weight_len(&self) -> usize {
        match self.kind {
            LayerKind::Dense(d) => d.in_size * d.out_size,
            LayerKind::Conv2d(c) => c.kernel_len() * c.filters,
        }
    }

    pub fn bias_len(&self) -> usize {
        if !self.use_bias {
            return 0;
        }
        match self.kind {
            LayerKind::Dense(d) => d.out_size,
            LayerKind::Conv2d(c) => c.filters,
        }
    }

    fn fans(&self) -> (usize, usize) {
        match self.kind {
            LayerKind::Dense(d) => (d.in_size, d.out_size),
            LayerKind::Conv2d(c) => (c.kernel_len(), c.filter_h * c.filter_w * c.filters),
        }
    }
}

/// A layer with its parameters. Dense weights are `[out][in]`; convolution
/// weights are `[filter][kh][kw][channel]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Per-layer values kept from the forward pass.
#[derive(Clone, Debug)]
pub(crate) struct LayerCache {
    /// im2col matrix for convolutions, `[batch·out_h·out_w][kernel_len]`.
    pub cols: Option<Vec<f64>>,
    /// Activated output.
    pub output: Vec<f64>,
}

impl Layer {
    pub fn zeros(spec: LayerSpec) -> Self {
        Self {
            weights: vec![0.0; spec.weight_len()],
            bias: vec![0.0; spec.bias_len()],
            spec,
        }
    }

    /// Uniform Glorot initialization with zero biases.
    pub fn glorot<R: Rng + ?Sized>(spec: LayerSpec, rng: &mut R) -> Self {
        let (fan_in, fan_out) = spec.fans();
        let scale = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weights = (0..spec.weight_len())
            .map(|_| rng.random_range(-scale..=scale))
            .collect();
        Self {
            weights,
            bias: vec![0.0; spec.bias_len()],
            spec,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub(crate) fn forward(&self, input: &[f64], batch: usize, keep_cols: bool) -> LayerCache {
        let out_len = self.spec.output_len();
        let mut output = vec![0.0; batch * out_len];
        let cols = match self.spec.kind {
            LayerKind::Dense(d) => {
                if batch == 1 {
                    for (o, row) in self.weights.chunks_exact(d.in_size).enumerate() {
                        output[o] = dot(row, input);
                    }
                } else {
                    // Y[b][o] = Σ_i X[b][i] W[o][i]
                    gemm(
                        batch, d.in_size, d.out_size, input, d.in_size, 1, &self.weights, 1,
                        d.in_size, &mut output, 0.0,
                    );
                }
                None
            }
            LayerKind::Conv2d(c) => {
                let rows = batch * c.out_h() * c.out_w();
                let k = c.kernel_len();
                let cols = im2col(&c, input, batch);
                gemm(rows, k, c.filters, &cols, k, 1, &self.weights, 1, k, &mut output, 0.0);
                keep_cols.then_some(cols)
            }
        };
        let act = self.spec.activation;
        if self.bias.is_empty() {
            output.iter_mut().for_each(|v| *v = act.apply(*v));
        } else {
            let width = self.bias.len();
            for chunk in output.chunks_exact_mut(width) {
                for (v, b) in chunk.iter_mut().zip(&self.bias) {
                    *v = act.apply(*v + b);
                }
            }
        }
        LayerCache { cols, output }
    }

    /// Returns `(weight_grad, bias_grad, input_grad)`.
    pub(crate) fn backward(
        &self,
        input: &[f64],
        cache: &LayerCache,
        grad_output: &[f64],
        batch: usize,
        want_input_grad: bool,
    ) -> (Vec<f64>, Vec<f64>, Option<Vec<f64>>) {
        let act = self.spec.activation;
        let delta: Vec<f64> = grad_output
            .iter()
            .zip(&cache.output)
            .map(|(g, &y)| g * act.derivative_from_output(y))
            .collect();

        let mut grad_w = vec![0.0; self.weights.len()];
        let mut grad_b = vec![0.0; self.bias.len()];
        if !grad_b.is_empty() {
            for chunk in delta.chunks_exact(grad_b.len()) {
                for (gb, d) in grad_b.iter_mut().zip(chunk) {
                    *gb += d;
                }
            }
        }

        let grad_in = match self.spec.kind {
            LayerKind::Dense(d) => {
                let (n_in, n_out) = (d.in_size, d.out_size);
                // dW[o][i] = Σ_b δ[b][o] X[b][i]
                gemm(n_out, batch, n_in, &delta, 1, n_out, input, n_in, 1, &mut grad_w, 0.0);
                want_input_grad.then(|| {
                    let mut gx = vec![0.0; batch * n_in];
                    gemm(batch, n_out, n_in, &delta, n_out, 1, &self.weights, n_in, 1, &mut gx, 0.0);
                    gx
                })
            }
            LayerKind::Conv2d(c) => {
                let rows = batch * c.out_h() * c.out_w();
                let k = c.kernel_len();
                let f = c.filters;
                let owned;
                let cols = match &cache.cols {
                    Some(cols) => cols,
                    None => {
                        owned = im2col(&c, input, batch);
                        &owned
                    }
                };
                gemm(f, rows, k, &delta, 1, f, cols, k, 1, &mut grad_w, 0.0);
                want_input_grad.then(|| {
                    let mut dcols = vec![0.0; rows * k];
                    gemm(rows, f, k, &delta, f, 1, &self.weights, k, 1, &mut dcols, 0.0);
                    col2im(&c, &dcols, batch)
                })
            }
        };
        (grad_w, grad_b, grad_in)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorize the reduction.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in chunks * 4..a.len() {
        sum += a[j] * b[j];
    }
    sum
}

/// `C = A·B + beta·C` with arbitrary strides, `A: m×k`, `B: k×n`, `C: m×n`
/// row-major.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    assert!((m - 1) * rsa + (k - 1) * csa < a.len(), "gemm: A out of bounds");
    assert!((k - 1) * rsb + (n - 1) * csb < b.len(), "gemm: B out of bounds");
    assert!(m * n <= c.len(), "gemm: C out of bounds");
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn im2col(c: &ConvSpec, input: &[f64], batch: usize) -> Vec<f64> {
    let (oh, ow, k) = (c.out_h(), c.out_w(), c.kernel_len());
    let (pt, pl) = (c.pad_top() as isize, c.pad_left() as isize);
    let in_len = c.in_h * c.in_w * c.in_c;
    let mut cols = vec![0.0; batch * oh * ow * k];
    for b in 0..batch {
        let image = &input[b * in_len..(b + 1) * in_len];
        for oy in 0..oh {
            for ox in 0..ow {
                let row = ((b * oh + oy) * ow + ox) * k;
                for ky in 0..c.filter_h {
                    let iy = (oy * c.stride + ky) as isize - pt;
                    if iy < 0 || iy >= c.in_h as isize {
                        continue;
                    }
                    for kx in 0..c.filter_w {
                        let ix = (ox * c.stride + kx) as isize - pl;
                        if ix < 0 || ix >= c.in_w as isize {
                            continue;
                        }
                        let src = (iy as usize * c.in_w + ix as usize) * c.in_c;
                        let dst = row + (ky * c.filter_w + kx) * c.in_c;
                        cols[dst..dst + c.in_c].copy_from_slice(&image[src..src + c.in_c]);
                    }
                }
            }
        }
    }
    cols
}

fn col2im(c: &ConvSpec, dcols: &[f64], batch: usize) -> Vec<f64> {
    let (oh, ow, k) = (c.out_h(), c.out_w(), c.kernel_len());
    let (pt, pl) = (c.pad_top() as isize, c.pad_left() as isize);
    let in_len = c.in_h * c.in_w * c.in_c;
    let mut out = vec![0.0; batch * in_len];
    for b in 0..batch {
        let image = &mut out[b * in_len..(b + 1) * in_len];
        for oy in 0..oh {
            for ox in 0..ow {
                let row = ((b * oh + oy) * ow + ox) * k;
                for ky in 0..c.filter_h {
                    let iy = (oy * c.stride + ky) as isize - pt;
                    if iy < 0 || iy >= c.in_h as isize {
                        continue;
                    }
                    for kx in 0..c.filter_w {
                        let ix = (ox * c.stride + kx) as isize - pl;
                        if ix < 0 || ix >= c.in_w as isize {
                            continue;
                        }
                        let dst = (iy as usize * c.in_w + ix as usize) * c.in_c;
                        let src = row + (ky * c.filter_w + kx) * c.in_c;
                        for ch in 0..c.in_c {
                            image[dst + ch] += dcols[src + ch];
                        }
                    }
                }
            }
        }
    }
    out
}
