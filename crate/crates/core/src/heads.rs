//! Shared trunk feeding one linear head per UAV.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

use crate::env::StateNormalizer;
use crate::error::{Error, Result};
use crate::nn::{Activation, Dense, DenseGrad, Mlp, MlpTape};

pub const HIDDEN_GAIN: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadNet {
    pub num_uavs: usize,
    pub num_bs: usize,
    pub num_beams: usize,
    pub normalizer: StateNormalizer,
    pub trunk: Mlp,
    pub heads: Vec<Dense>,
}

#[derive(Debug, Clone)]
pub struct HeadsForward {
    pub trunk: MlpTape,
    /// One `B x LN` block per head.
    pub outputs: Vec<Array2<f64>>,
}

impl HeadsForward {
    pub fn features(&self) -> &Array2<f64> {
        &self.trunk.output
    }
}

impl MultiHeadNet {
    pub fn new<R: Rng + ?Sized>(
        dims: (usize, usize, usize),
        trunk_widths: &[usize],
        head_gain: f64,
        normalizer: StateNormalizer,
        rng: &mut R,
    ) -> Result<Self> {
        let (num_uavs, num_bs, num_beams) = dims;
        if num_uavs == 0 || num_bs == 0 || num_beams == 0 || trunk_widths.is_empty() || trunk_widths.contains(&0) {
            return Err(Error::Config(format!(
                "invalid network shape: dims {dims:?}, trunk {trunk_widths:?}"
            )));
        }
        let state_dim = 3 * num_uavs * num_bs * num_beams;
        if normalizer.dim() != state_dim {
            return Err(Error::Shape(format!(
                "normalizer covers {} features, state has {state_dim}",
                normalizer.dim()
            )));
        }
        let mut widths = vec![state_dim];
        widths.extend_from_slice(trunk_widths);
        let trunk = Mlp::new(&widths, HIDDEN_GAIN, HIDDEN_GAIN, Activation::Relu, rng);
        let z = *trunk_widths.last().expect("nonempty");
        let heads = (0..num_uavs)
            .map(|_| Dense::orthogonal(z, num_bs * num_beams, head_gain, Activation::Identity, rng))
            .collect();
        Ok(Self {
            num_uavs,
            num_bs,
            num_beams,
            normalizer,
            trunk,
            heads,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.num_uavs, self.num_bs, self.num_beams)
    }

    pub fn num_actions(&self) -> usize {
        self.num_bs * self.num_beams
    }

    pub fn state_dim(&self) -> usize {
        3 * self.num_uavs * self.num_actions()
    }

    pub fn feature_dim(&self) -> usize {
        self.trunk.output_dim()
    }

    /// Hidden widths of the trunk (input width excluded).
    pub fn trunk_widths(&self) -> Vec<usize> {
        self.trunk.layers.iter().map(Dense::outputs).collect()
    }

    /// Normalized learner input for a raw `3MLN` state.
    pub fn features(&self, raw_state: &[f64]) -> Result<Array1<f64>> {
        if raw_state.len() != self.state_dim() {
            return Err(Error::Shape(format!(
                "state has {} entries, expected 3MLN = {}",
                raw_state.len(),
                self.state_dim()
            )));
        }
        Ok(Array1::from(self.normalizer.normalize(raw_state)))
    }

    pub fn forward(&self, x: Array2<f64>) -> Result<HeadsForward> {
        let trunk = self.trunk.forward(x)?;
        let outputs = self.heads.iter().map(|h| h.forward(&trunk.output).0).collect();
        Ok(HeadsForward { trunk, outputs })
    }

    /// Single-state pass returning the trunk output and every head's output.
    pub fn forward_one(&self, x: ArrayView1<f64>) -> Result<(Array1<f64>, Vec<Array1<f64>>)> {
        let z = self.trunk.forward_one(x)?;
        let outputs = self.heads.iter().map(|h| h.forward_one(z.view())).collect();
        Ok((z, outputs))
    }

    /// Gradients for trunk layers followed by heads, in [`Self::layers`] order.
    /// `extra_dz` adds a gradient arriving at the trunk output from elsewhere.
    pub fn backward(&self, fwd: &HeadsForward, d_outputs: Vec<Array2<f64>>, extra_dz: Option<Array2<f64>>) -> Vec<DenseGrad> {
        let z = fwd.features();
        let mut dz = extra_dz.unwrap_or_else(|| Array2::zeros(z.raw_dim()));
        let mut head_grads = Vec::with_capacity(self.heads.len());
        for ((head, out), d) in self.heads.iter().zip(&fwd.outputs).zip(d_outputs) {
            let (g, dx) = head.backward(z, out, d, true);
            dz += &dx.expect("requested");
            head_grads.push(g);
        }
        let (mut grads, _) = self.trunk.backward(&fwd.trunk, dz, false);
        grads.extend(head_grads);
        grads
    }

    pub fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.trunk.layers.iter().chain(&self.heads)
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.trunk.layers.iter_mut().chain(self.heads.iter_mut())
    }
}
