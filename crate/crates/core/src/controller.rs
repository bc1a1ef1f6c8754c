//! The behavior network: chokepoint encoding (plus optional health) to game
//! actions, decided once per five-frame window.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autoencoder::Encoding;
use crate::error::{Error, Result};
use crate::tensor::{Activation, LayerSpec, Network};

/// Frames covered by one decision.
pub const WINDOW: usize = 5;
pub const HIDDEN: [usize; 2] = [16, 8];
pub const OUTPUTS: usize = 4;

/// Dense sigmoid layers without bias: `input → 16 → 8 → 4`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerSpec {
    pub input_size: usize,
}

impl ControllerSpec {
    pub fn new(encoding_len: usize, health_input: bool) -> Self {
        Self {
            input_size: encoding_len + usize::from(health_input),
        }
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let sizes = [self.input_size, HIDDEN[0], HIDDEN[1], OUTPUTS];
        sizes
            .windows(2)
            .map(|w| LayerSpec::dense(w[0], w[1], Activation::Sigmoid, false))
            .collect()
    }

    pub fn weight_count(&self) -> usize {
        self.input_size * HIDDEN[0] + HIDDEN[0] * HIDDEN[1] + HIDDEN[1] * OUTPUTS
    }
}

/// The three game actions that may be active on one frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionSet {
    pub turn_left: bool,
    pub turn_right: bool,
    pub move_forward: bool,
}

impl ActionSet {
    pub const NONE: ActionSet = ActionSet {
        turn_left: false,
        turn_right: false,
        move_forward: false,
    };

    /// Builds a set from action indices (0 left, 1 right, 2 forward).
    pub fn from_indices(indices: &[usize]) -> Self {
        let mut s = Self::NONE;
        for &i in indices {
            match i {
                0 => s.turn_left = true,
                1 => s.turn_right = true,
                2 => s.move_forward = true,
                _ => {}
            }
        }
        s
    }

    pub fn indices(&self) -> Vec<usize> {
        [self.turn_left, self.turn_right, self.move_forward]
            .iter()
            .enumerate()
            .filter_map(|(i, &on)| on.then_some(i))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        *self == Self::NONE
    }
}

/// One decision: which actions to hold and for how many of the window's
/// frames.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionCommand {
    pub actions: ActionSet,
    pub repeat: u8,
}

impl ActionCommand {
    pub const IDLE: ActionCommand = ActionCommand {
        actions: ActionSet::NONE,
        repeat: 0,
    };

    /// Decodes network outputs: an action is active when its output is
    /// strictly above 0.5, and the fourth output times five, rounded up,
    /// gives the repeat count.
    pub fn from_outputs(outputs: &[f64; OUTPUTS]) -> Self {
        let actions = ActionSet {
            turn_left: outputs[0] > 0.5,
            turn_right: outputs[1] > 0.5,
            move_forward: outputs[2] > 0.5,
        };
        let repeat = (5.0 * outputs[3]).ceil();
        let repeat = if repeat.is_nan() { 0.0 } else { repeat.clamp(0.0, WINDOW as f64) };
        Self {
            actions,
            repeat: repeat as u8,
        }
    }
}

/// Per-frame action sets for one decision window.
pub fn act_window(cmd: &ActionCommand) -> [ActionSet; WINDOW] {
    std::array::from_fn(|i| if i < cmd.repeat as usize { cmd.actions } else { ActionSet::NONE })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Controller {
    spec: ControllerSpec,
    network: Network,
}

impl Controller {
    /// Unflattens `genome` layer by layer, each weight matrix row-major with
    /// one row per output unit.
    pub fn load_genome(spec: ControllerSpec, genome: &[f64]) -> Result<Self> {
        if genome.len() != spec.weight_count() {
            return Err(Error::config(format!(
                "genome has {} weights, controller with {} inputs needs {}",
                genome.len(),
                spec.input_size,
                spec.weight_count()
            )));
        }
        if genome.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("genome contains non-finite weights".into()));
        }
        let mut network = Network::zeros(&spec.layer_specs())?;
        network.set_parameters(genome)?;
        Ok(Self { spec, network })
    }

    pub fn spec(&self) -> ControllerSpec {
        self.spec
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.network.parameters()
    }

    /// Raw sigmoid outputs for an already assembled input vector.
    pub fn outputs(&self, input: &[f64]) -> Result<[f64; OUTPUTS]> {
        if input.len() != self.spec.input_size {
            return Err(Error::config(format!(
                "controller expects {} inputs, got {}",
                self.spec.input_size,
                input.len()
            )));
        }
        let out = self.network.run_layers(input, 1, 0..3);
        Ok([out[0], out[1], out[2], out[3]])
    }

    /// Assembles the input from an encoding and, for health-aware
    /// controllers, the normalized health appended last.
    pub fn input(&self, enc: &Encoding, health: Option<f64>) -> Result<Vec<f64>> {
        let expected_health = enc.len() + 1 == self.spec.input_size;
        match (health, expected_health) {
            (Some(_), false) => {
                return Err(Error::config(format!(
                    "health input given to a controller with {} inputs and a {}-value encoding",
                    self.spec.input_size,
                    enc.len()
                )))
            }
            (None, true) => return Err(Error::config("controller requires a health input")),
            _ => {}
        }
        let mut input = Vec::with_capacity(self.spec.input_size);
        input.extend_from_slice(enc.values());
        if let Some(h) = health {
            if !(0.0..=1.0).contains(&h) {
                return Err(Error::config(format!("health {h} outside [0, 1]")));
            }
            input.push(h);
        }
        Ok(input)
    }

    pub fn decide(&self, enc: &Encoding, health: Option<f64>) -> Result<ActionCommand> {
        let input = self.input(enc, health)?;
        Ok(ActionCommand::from_outputs(&self.outputs(&input)?))
    }

    /// Writes the weights in the shared network file format.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.network.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let network = Network::load(path)?;
        let input_size = network.input_len();
        let spec = ControllerSpec { input_size };
        if network.specs() != spec.layer_specs() {
            return Err(Error::format(path, "file does not hold a controller network"));
        }
        Ok(Self { spec, network })
    }
}
