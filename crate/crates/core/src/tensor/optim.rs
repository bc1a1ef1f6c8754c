use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{GradientTape, Network};
use crate::codec::{Decoder, Encoder};
use crate::error::{Error, Result};

fn check_tape(net: &Network, tape: &GradientTape) -> Result<()> {
    if !tape.matches(net) {
        return Err(Error::config("gradient tape shapes do not match the network"));
    }
    for (i, (w, b)) in tape.weights.iter().zip(&tape.biases).enumerate() {
        if !w.iter().chain(b).all(|g| g.is_finite()) {
            return Err(Error::Training {
                layer: i,
                message: "non-finite gradient".into(),
            });
        }
    }
    Ok(())
}

/// Plain gradient descent: every parameter moves by `-lr · gradient`.
pub fn sgd_step(net: &mut Network, tape: &GradientTape, lr: f64) -> Result<()> {
    check_tape(net, tape)?;
    for (i, layer) in net.layers_mut().iter_mut().enumerate() {
        for (w, g) in layer.weights.iter_mut().zip(&tape.weights[i]) {
            *w -= lr * g;
        }
        for (b, g) in layer.bias.iter_mut().zip(&tape.biases[i]) {
            *b -= lr * g;
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSettings {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerSettings {
    pub fn sgd(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate.is_finite()
            && self.learning_rate >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Adam moment estimates, flattened in parameter order.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Adam {
    pub fn new(parameter_count: usize) -> Self {
        Self {
            step: 0,
            first: vec![0.0; parameter_count],
            second: vec![0.0; parameter_count],
        }
    }

    fn apply(&mut self, s: &OptimizerSettings, net: &mut Network, tape: &GradientTape) -> Result<()> {
        check_tape(net, tape)?;
        if self.first.len() != net.parameter_count() {
            return Err(Error::config("optimizer state does not match the network"));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - s.beta1.powi(t);
        let c2 = 1.0 - s.beta2.powi(t);
        let lr = s.learning_rate;
        let (b1, b2, eps) = (s.beta1, s.beta2, s.epsilon);
        let mut k = 0;
        for (i, layer) in net.layers_mut().iter_mut().enumerate() {
            for (params, grads) in [(&mut layer.weights, &tape.weights[i]), (&mut layer.bias, &tape.biases[i])] {
                let n = params.len();
                let m = &mut self.first[k..k + n];
                let v = &mut self.second[k..k + n];
                for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m).zip(v) {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
                k += n;
            }
        }
        Ok(())
    }
}

/// A configured optimizer together with its running state.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    settings: OptimizerSettings,
    adam: Option<Adam>,
}

impl Optimizer {
    pub fn new(settings: OptimizerSettings, net: &Network) -> Result<Self> {
        settings.validate()?;
        let adam = (settings.kind == OptimizerKind::Adam).then(|| Adam::new(net.parameter_count()));
        Ok(Self { settings, adam })
    }

    pub fn settings(&self) -> &OptimizerSettings {
        &self.settings
    }

    pub fn step(&mut self, net: &mut Network, tape: &GradientTape) -> Result<()> {
        match &mut self.adam {
            Some(adam) => adam.apply(&self.settings, net, tape),
            None => sgd_step(net, tape, self.settings.learning_rate),
        }
    }

    pub(crate) fn write_state<W: Write>(&self, enc: &mut Encoder<W>) -> Result<()> {
        match &self.adam {
            None => enc.u8(0),
            Some(a) => {
                enc.u8(1)?;
                enc.u64(a.step)?;
                enc.f64s(&a.first)?;
                enc.f64s(&a.second)
            }
        }
    }

    pub(crate) fn read_state<R: Read>(&mut self, dec: &mut Decoder<R>) -> Result<()> {
        let has_adam = dec.u8()? == 1;
        if has_adam != self.adam.is_some() {
            return Err(Error::config("optimizer kind in checkpoint differs from config"));
        }
        if let Some(a) = &mut self.adam {
            let step = dec.u64()?;
            let first = dec.f64s()?;
            let second = dec.f64s()?;
            if first.len() != a.first.len() || second.len() != a.second.len() {
                return Err(Error::config("optimizer state length mismatch"));
            }
            *a = Adam { step, first, second };
        }
        Ok(())
    }
}
