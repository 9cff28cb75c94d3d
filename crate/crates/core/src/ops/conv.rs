use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Stride-1 zero-padded cross-correlation.
///
/// `input` is `[B, C, H, W]`, `kernel` is `[O, C, kh, kw]`, `bias` is `[O]`.
/// The output is `[B, O, H + 2*pad_h - kh + 1, W + 2*pad_w - kw + 1]`.
pub fn conv2d(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    padding: (usize, usize),
) -> Result<Tensor> {
    let geom = ConvGeometry::new(input, kernel, bias, padding)?;
    let ConvGeometry {
        batch,
        in_ch,
        out_ch,
        h,
        w,
        kh,
        kw,
        oh,
        ow,
        ..
    } = geom;
    let x = input.data();
    let k = kernel.data();
    let mut out = vec![0.0; batch * out_ch * oh * ow];

    for b in 0..batch {
        for o in 0..out_ch {
            let plane = &mut out[(b * out_ch + o) * oh * ow..][..oh * ow];
            plane.fill(bias.data()[o]);
            for c in 0..in_ch {
                let src = &x[(b * in_ch + c) * h * w..][..h * w];
                for ky in 0..kh {
                    let (oy0, oy1) = geom.valid_rows(ky);
                    for kx in 0..kw {
                        let wv = k[((o * in_ch + c) * kh + ky) * kw + kx];
                        let (ox0, ox1) = geom.valid_cols(kx);
                        for oy in oy0..oy1 {
                            let iy = oy + ky - geom.pad_h;
                            let row_out = &mut plane[oy * ow..(oy + 1) * ow];
                            let row_in = &src[iy * w..(iy + 1) * w];
                            for ox in ox0..ox1 {
                                row_out[ox] += wv * row_in[ox + kx - geom.pad_w];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![batch, out_ch, oh, ow], out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2dGrads {
    pub input: Tensor,
    pub kernel: Tensor,
    pub bias: Tensor,
}

/// Vector-Jacobian product of [`conv2d`] for an upstream gradient on its output.
pub fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    padding: (usize, usize),
    grad_out: &Tensor,
) -> Result<Conv2dGrads> {
    let bias = Tensor::zeros(&[kernel.shape().first().copied().unwrap_or(1)]);
    let geom = ConvGeometry::new(input, kernel, &bias, padding)?;
    let ConvGeometry {
        batch,
        in_ch,
        out_ch,
        h,
        w,
        kh,
        kw,
        oh,
        ow,
        ..
    } = geom;
    grad_out.expect_shape("conv2d_backward", "grad_out", &[batch, out_ch, oh, ow])?;

    let x = input.data();
    let k = kernel.data();
    let g = grad_out.data();
    let mut gx = vec![0.0; x.len()];
    let mut gk = vec![0.0; k.len()];
    let mut gb = vec![0.0; out_ch];

    for b in 0..batch {
        for o in 0..out_ch {
            let gplane = &g[(b * out_ch + o) * oh * ow..][..oh * ow];
            gb[o] += gplane.iter().sum::<f64>();
            for c in 0..in_ch {
                let base = (b * in_ch + c) * h * w;
                for ky in 0..kh {
                    let (oy0, oy1) = geom.valid_rows(ky);
                    for kx in 0..kw {
                        let widx = ((o * in_ch + c) * kh + ky) * kw + kx;
                        let wv = k[widx];
                        let (ox0, ox1) = geom.valid_cols(kx);
                        let mut acc = 0.0;
                        for oy in oy0..oy1 {
                            let iy = oy + ky - geom.pad_h;
                            for ox in ox0..ox1 {
                                let ix = ox + kx - geom.pad_w;
                                let gv = gplane[oy * ow + ox];
                                acc += gv * x[base + iy * w + ix];
                                gx[base + iy * w + ix] += wv * gv;
                            }
                        }
                        gk[widx] += acc;
                    }
                }
            }
        }
    }
    Ok(Conv2dGrads {
        input: Tensor::new(input.shape().to_vec(), gx)?,
        kernel: Tensor::new(kernel.shape().to_vec(), gk)?,
        bias: Tensor::new(vec![out_ch], gb)?,
    })
}

#[derive(Clone, Copy, Debug)]
struct ConvGeometry {
    batch: usize,
    in_ch: usize,
    out_ch: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    pad_h: usize,
    pad_w: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeometry {
    fn new(input: &Tensor, kernel: &Tensor, bias: &Tensor, padding: (usize, usize)) -> Result<Self> {
        let (batch, in_ch, h, w) = input.dims4("conv2d")?;
        let (out_ch, k_in, kh, kw) = kernel.dims4("conv2d")?;
        if k_in != in_ch {
            return Err(Error::shape("conv2d", "input channels (axis 1)", k_in, in_ch));
        }
        bias.expect_shape("conv2d", "bias", &[out_ch])?;
        let (pad_h, pad_w) = padding;
        if h + 2 * pad_h < kh {
            return Err(Error::shape("conv2d", "height (axis 2)", format!(">= {kh}"), h + 2 * pad_h));
        }
        if w + 2 * pad_w < kw {
            return Err(Error::shape("conv2d", "width (axis 3)", format!(">= {kw}"), w + 2 * pad_w));
        }
        Ok(ConvGeometry {
            batch,
            in_ch,
            out_ch,
            h,
            w,
            kh,
            kw,
            pad_h,
            pad_w,
            oh: h + 2 * pad_h - kh + 1,
            ow: w + 2 * pad_w - kw + 1,
        })
    }

    /// Output rows `oy` for which `oy + ky - pad_h` lands inside the input.
    fn valid_rows(&self, ky: usize) -> (usize, usize) {
        let lo = self.pad_h.saturating_sub(ky);
        let hi = (self.h + self.pad_h).saturating_sub(ky).min(self.oh);
        (lo, hi.max(lo))
    }

    fn valid_cols(&self, kx: usize) -> (usize, usize) {
        let lo = self.pad_w.saturating_sub(kx);
        let hi = (self.w + self.pad_w).saturating_sub(kx).min(self.ow);
        (lo, hi.max(lo))
    }
}

/// A convolution with its own weights and "same" padding (odd kernels only),
/// so the spatial extent is preserved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conv2dLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Conv2dLayer {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        let (out_ch, _, kh, kw) = weight.dims4("Conv2dLayer")?;
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::invalid(
                "Conv2dLayer",
                format!("kernel {kh}x{kw} has no centre tap"),
            ));
        }
        bias.expect_shape("Conv2dLayer", "bias", &[out_ch])?;
        Ok(Conv2dLayer { weight, bias })
    }

    pub fn zeros(out_ch: usize, in_ch: usize, k: usize) -> Self {
        Conv2dLayer::new(Tensor::zeros(&[out_ch, in_ch, k, k]), Tensor::zeros(&[out_ch]))
            .expect("odd kernel")
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel_size(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn padding(&self) -> (usize, usize) {
        let s = self.weight.shape();
        (s[2] / 2, s[3] / 2)
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        conv2d(input, &self.weight, &self.bias, self.padding())
    }

    pub fn backward(&self, input: &Tensor, grad_out: &Tensor) -> Result<Conv2dGrads> {
        conv2d_backward(input, &self.weight, self.padding(), grad_out)
    }

    pub fn zeros_like(&self) -> Self {
        Conv2dLayer {
            weight: Tensor::zeros(self.weight.shape()),
            bias: Tensor::zeros(self.bias.shape()),
        }
    }

    pub fn accumulate(&mut self, grads: &Conv2dGrads) -> Result<()> {
        self.weight.axpy(1.0, &grads.kernel)?;
        self.bias.axpy(1.0, &grads.bias)
    }
}
