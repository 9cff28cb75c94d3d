use std::path::Path;

use serde_json::{json, Map};

use crate::error::{Error, Result};
use crate::ops::Conv2dLayer;
use crate::params_io;
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// Prototype projection, affine generators and foreground gate.
#[derive(Clone, Debug, PartialEq)]
pub struct IgdrParams {
    /// `[C_inst, C_inst]`, applied as `pooled @ proj_weight^T + proj_bias`.
    pub proj_weight: Tensor,
    pub proj_bias: Tensor,
    /// `C_inst -> C`, 3x3.
    pub conv_gamma: Conv2dLayer,
    pub conv_beta: Conv2dLayer,
    /// `1 -> 1`, 3x3, over the instance-summed score map.
    pub conv_gate: Conv2dLayer,
}

impl IgdrParams {
    /// Parameters for which the module is exactly the identity on `F_RC`:
    /// scale 1, shift 0, any gate value.
    pub fn identity(channels: usize, inst_channels: usize) -> Self {
        let ci = inst_channels;
        let mut conv_gamma = Conv2dLayer::zeros(channels, ci, 3);
        conv_gamma.bias.data_mut().fill(1.0);
        IgdrParams {
            proj_weight: Tensor::from_fn(&[ci, ci], |i| if i / ci == i % ci { 1.0 } else { 0.0 }),
            proj_bias: Tensor::zeros(&[ci]),
            conv_gamma,
            conv_beta: Conv2dLayer::zeros(channels, ci, 3),
            conv_gate: Conv2dLayer::zeros(1, 1, 3),
        }
    }

    /// Every tensor uniform in `[-scale, scale]`.
    pub fn random(channels: usize, inst_channels: usize, scale: f64, rng: &mut SeededRng) -> Self {
        let mut p = Self::identity(channels, inst_channels);
        for (_, t) in p.tensors_mut() {
            *t = rng.uniform_tensor(t.shape(), -scale, scale);
        }
        p
    }

    pub fn channels(&self) -> usize {
        self.conv_gamma.out_channels()
    }

    pub fn inst_channels(&self) -> usize {
        self.proj_weight.shape()[0]
    }

    pub fn validate(&self) -> Result<()> {
        const OP: &str = "IgdrParams";
        let ci = self.proj_weight.shape().first().copied().unwrap_or(0);
        self.proj_weight.expect_shape(OP, "proj_weight", &[ci, ci])?;
        self.proj_bias.expect_shape(OP, "proj_bias", &[ci])?;
        let c = self.conv_gamma.out_channels();
        for (name, layer, out, inp) in [
            ("conv_gamma", &self.conv_gamma, c, ci),
            ("conv_beta", &self.conv_beta, c, ci),
            ("conv_gate", &self.conv_gate, 1, 1),
        ] {
            if layer.out_channels() != out || layer.in_channels() != inp {
                return Err(Error::shape(
                    OP,
                    format!("{name} channels (out, in)"),
                    format!("({out}, {inp})"),
                    format!("({}, {})", layer.out_channels(), layer.in_channels()),
                ));
            }
        }
        Ok(())
    }

    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("proj.weight".into(), &self.proj_weight),
            ("proj.bias".into(), &self.proj_bias),
            ("conv_gamma.weight".into(), &self.conv_gamma.weight),
            ("conv_gamma.bias".into(), &self.conv_gamma.bias),
            ("conv_beta.weight".into(), &self.conv_beta.weight),
            ("conv_beta.bias".into(), &self.conv_beta.bias),
            ("conv_gate.weight".into(), &self.conv_gate.weight),
            ("conv_gate.bias".into(), &self.conv_gate.bias),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("proj.weight".into(), &mut self.proj_weight),
            ("proj.bias".into(), &mut self.proj_bias),
            ("conv_gamma.weight".into(), &mut self.conv_gamma.weight),
            ("conv_gamma.bias".into(), &mut self.conv_gamma.bias),
            ("conv_beta.weight".into(), &mut self.conv_beta.weight),
            ("conv_beta.bias".into(), &mut self.conv_beta.bias),
            ("conv_gate.weight".into(), &mut self.conv_gate.weight),
            ("conv_gate.bias".into(), &mut self.conv_gate.bias),
        ]
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        z
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let tensors = self.tensors();
        let named: Vec<(&str, &Tensor)> = tensors.iter().map(|(n, t)| (n.as_str(), *t)).collect();
        let mut meta = Map::new();
        meta.insert("channels".into(), json!(self.channels()));
        meta.insert("inst_channels".into(), json!(self.inst_channels()));
        params_io::save(dir, &named, meta)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mut loaded = params_io::load(dir)?;
        let channels = loaded.usize("channels")?;
        let inst = loaded.usize("inst_channels")?;
        let mut layer = |name: &str| -> Result<Conv2dLayer> {
            Conv2dLayer::new(loaded.take(&format!("{name}.weight"))?, loaded.take(&format!("{name}.bias"))?)
        };
        let conv_gamma = layer("conv_gamma")?;
        let conv_beta = layer("conv_beta")?;
        let conv_gate = layer("conv_gate")?;
        let params = IgdrParams {
            proj_weight: loaded.take("proj.weight")?,
            proj_bias: loaded.take("proj.bias")?,
            conv_gamma,
            conv_beta,
            conv_gate,
        };
        params.validate()?;
        if params.channels() != channels || params.inst_channels() != inst {
            return Err(Error::Format(format!(
                "manifest says channels={channels}, inst_channels={inst}; tensors disagree"
            )));
        }
        Ok(params)
    }
}
