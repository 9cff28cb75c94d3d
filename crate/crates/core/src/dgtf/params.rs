use std::path::Path;

use serde_json::{json, Map};

use crate::error::{Error, Result};
use crate::ops::Conv2dLayer;
use crate::params_io;
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// Learnable kernels of the temporal fusion cell for `C`-channel features.
///
/// `conv_offset` maps the concatenated `(X_t, H_{t-1})` pair (`2C` channels)
/// to `3 * k^2 * G` channels: `2 * k^2 * G` raw offsets followed by
/// `k^2 * G` mask logits. For group `g` and kernel tap `q` (row-major), the
/// offset channels are `g * 2k^2 + 2q` (dy) and `g * 2k^2 + 2q + 1` (dx), and
/// the mask channel is `g * k^2 + q` of the mask block.
#[derive(Clone, Debug, PartialEq)]
pub struct DgtfParams {
    pub conv_offset: Conv2dLayer,
    pub conv_r: Conv2dLayer,
    pub conv_z: Conv2dLayer,
    pub conv_h: Conv2dLayer,
    /// `[C, C, k, k]` kernel contracted with the deformably sampled history.
    pub dcn: Conv2dLayer,
    pub conv_out: Conv2dLayer,
    pub deformable_groups: usize,
}

const NAMES: [&str; 6] = ["conv_offset", "conv_r", "conv_z", "conv_h", "dcn", "conv_out"];

impl DgtfParams {
    pub fn new(
        conv_offset: Conv2dLayer,
        conv_r: Conv2dLayer,
        conv_z: Conv2dLayer,
        conv_h: Conv2dLayer,
        dcn: Conv2dLayer,
        conv_out: Conv2dLayer,
        deformable_groups: usize,
    ) -> Result<Self> {
        let params = DgtfParams {
            conv_offset,
            conv_r,
            conv_z,
            conv_h,
            dcn,
            conv_out,
            deformable_groups,
        };
        params.validate()?;
        Ok(params)
    }

    /// All-zero parameters with 3x3 convolutions everywhere.
    pub fn zeros(channels: usize, k: usize, deformable_groups: usize) -> Result<Self> {
        let c = channels;
        DgtfParams::new(
            Conv2dLayer::zeros(3 * k * k * deformable_groups, 2 * c, 3),
            Conv2dLayer::zeros(c, 2 * c, 3),
            Conv2dLayer::zeros(c, 2 * c, 3),
            Conv2dLayer::zeros(c, 2 * c, 3),
            Conv2dLayer::zeros(c, c, k),
            Conv2dLayer::zeros(c, c, 3),
            deformable_groups,
        )
    }

    /// Every weight and bias uniform in `[-scale, scale]`.
    pub fn random(channels: usize, k: usize, deformable_groups: usize, scale: f64, rng: &mut SeededRng) -> Result<Self> {
        let mut p = Self::zeros(channels, k, deformable_groups)?;
        for (_, t) in p.tensors_mut() {
            *t = rng.uniform_tensor(t.shape(), -scale, scale);
        }
        Ok(p)
    }

    /// Training initialisation: fan-in scaled uniform weights, zero biases,
    /// and a zero offset branch so alignment starts as a plain convolution
    /// with mask 0.5.
    pub fn init(channels: usize, k: usize, deformable_groups: usize, rng: &mut SeededRng) -> Result<Self> {
        let mut p = Self::zeros(channels, k, deformable_groups)?;
        for layer in [&mut p.conv_r, &mut p.conv_z, &mut p.conv_h, &mut p.dcn, &mut p.conv_out] {
            let s = layer.weight.shape();
            let bound = 1.0 / ((s[1] * s[2] * s[3]) as f64).sqrt();
            layer.weight = rng.uniform_tensor(s, -bound, bound);
        }
        Ok(p)
    }

    pub fn channels(&self) -> usize {
        self.dcn.out_channels()
    }

    pub fn k(&self) -> usize {
        self.dcn.kernel_size()
    }

    pub fn validate(&self) -> Result<()> {
        const OP: &str = "DgtfParams";
        let c = self.dcn.out_channels();
        let k = self.dcn.kernel_size();
        let g = self.deformable_groups;
        if g == 0 || !c.is_multiple_of(g) {
            return Err(Error::invalid(OP, format!("{g} deformable groups do not divide {c} channels")));
        }
        let dcn_shape = self.dcn.weight.shape();
        if dcn_shape[1] != c || dcn_shape[3] != k {
            return Err(Error::shape(OP, "dcn kernel", format!("[{c}, {c}, {k}, {k}]"), format!("{dcn_shape:?}")));
        }
        let check = |name: &str, layer: &Conv2dLayer, out: usize, inp: usize| -> Result<()> {
            if layer.out_channels() != out || layer.in_channels() != inp {
                return Err(Error::shape(
                    OP,
                    format!("{name} channels (out, in)"),
                    format!("({out}, {inp})"),
                    format!("({}, {})", layer.out_channels(), layer.in_channels()),
                ));
            }
            Ok(())
        };
        check("conv_offset", &self.conv_offset, 3 * k * k * g, 2 * c)?;
        check("conv_r", &self.conv_r, c, 2 * c)?;
        check("conv_z", &self.conv_z, c, 2 * c)?;
        check("conv_h", &self.conv_h, c, 2 * c)?;
        check("conv_out", &self.conv_out, c, c)?;
        for (name, t) in self.tensors() {
            if !t.all_finite() {
                return Err(Error::invalid(OP, format!("{name} has non-finite entries")));
            }
        }
        Ok(())
    }

    fn layers(&self) -> [&Conv2dLayer; 6] {
        [&self.conv_offset, &self.conv_r, &self.conv_z, &self.conv_h, &self.dcn, &self.conv_out]
    }

    /// `(name, tensor)` for every learnable tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        NAMES
            .iter()
            .zip(self.layers())
            .flat_map(|(name, l)| [(format!("{name}.weight"), &l.weight), (format!("{name}.bias"), &l.bias)])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let layers = [
            &mut self.conv_offset,
            &mut self.conv_r,
            &mut self.conv_z,
            &mut self.conv_h,
            &mut self.dcn,
            &mut self.conv_out,
        ];
        NAMES
            .iter()
            .zip(layers)
            .flat_map(|(name, l)| [(format!("{name}.weight"), &mut l.weight), (format!("{name}.bias"), &mut l.bias)])
            .collect()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        z
    }

    /// `self += alpha * other` over every tensor.
    pub fn axpy(&mut self, alpha: f64, other: &DgtfParams) -> Result<()> {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.axpy(alpha, b)?;
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let tensors = self.tensors();
        let named: Vec<(&str, &Tensor)> = tensors.iter().map(|(n, t)| (n.as_str(), *t)).collect();
        let mut meta = Map::new();
        meta.insert("k".into(), json!(self.k()));
        meta.insert("deformable_groups".into(), json!(self.deformable_groups));
        meta.insert("channels".into(), json!(self.channels()));
        params_io::save(dir, &named, meta)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mut loaded = params_io::load(dir)?;
        let channels = loaded.usize("channels")?;
        let k = loaded.usize("k")?;
        let groups = loaded.usize("deformable_groups")?;
        let mut layer = |name: &str| -> Result<Conv2dLayer> {
            Conv2dLayer::new(loaded.take(&format!("{name}.weight"))?, loaded.take(&format!("{name}.bias"))?)
        };
        let params = DgtfParams::new(
            layer("conv_offset")?,
            layer("conv_r")?,
            layer("conv_z")?,
            layer("conv_h")?,
            layer("dcn")?,
            layer("conv_out")?,
            groups,
        )?;
        if params.channels() != channels || params.k() != k {
            return Err(Error::Format(format!(
                "manifest says channels={channels}, k={k}; tensors say channels={}, k={}",
                params.channels(),
                params.k()
            )));
        }
        Ok(params)
    }
}
