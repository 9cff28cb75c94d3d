//! Offset prediction and modulated deformable convolution.

use crate::error::{Error, Result};
use crate::ops::{
    bilinear_taps, concat_channels, sigmoid, sigmoid_backward, split_channels, Conv2dGrads, Conv2dLayer,
};
use crate::tensor::Tensor;

use super::DgtfParams;

/// Sampling offsets `[B, 2k^2 G, H, W]` and activated mask `[B, k^2 G, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Offsets {
    pub delta: Tensor,
    pub mask: Tensor,
}

/// One convolution over `concat(x, h_prev)`; offsets raw, mask through a
/// sigmoid.
pub fn predict_offsets(x: &Tensor, h_prev: &Tensor, params: &DgtfParams) -> Result<Offsets> {
    h_prev.expect_shape("predict_offsets", "h_prev", x.shape())?;
    let raw = params.conv_offset.forward(&concat_channels(x, h_prev)?)?;
    let k2g = params.k() * params.k() * params.deformable_groups;
    let (delta, logits) = split_channels(&raw, 2 * k2g)?;
    Ok(Offsets {
        delta,
        mask: sigmoid(&logits),
    })
}

pub struct OffsetGrads {
    pub x: Tensor,
    pub h_prev: Tensor,
    pub conv_offset: Conv2dGrads,
}

/// Backward of [`predict_offsets`] given the forward result and upstream
/// gradients on the offsets and on the activated mask.
pub fn predict_offsets_backward(
    x: &Tensor,
    h_prev: &Tensor,
    params: &DgtfParams,
    offsets: &Offsets,
    grad_delta: &Tensor,
    grad_mask: &Tensor,
) -> Result<OffsetGrads> {
    let g_logits = sigmoid_backward(&offsets.mask, grad_mask)?;
    let g_raw = concat_channels(grad_delta, &g_logits)?;
    let input = concat_channels(x, h_prev)?;
    let grads = params.conv_offset.backward(&input, &g_raw)?;
    let (gx, gh) = split_channels(&grads.input, x.shape()[1])?;
    Ok(OffsetGrads {
        x: gx,
        h_prev: gh,
        conv_offset: grads,
    })
}

#[derive(Clone, Copy)]
struct DeformGeometry {
    batch: usize,
    channels: usize,
    h: usize,
    w: usize,
    k: usize,
    groups: usize,
}

impl DeformGeometry {
    fn new(h_prev: &Tensor, offsets: &Offsets, dcn: &Conv2dLayer, groups: usize) -> Result<Self> {
        const OP: &str = "dcn_align";
        let (batch, channels, h, w) = h_prev.dims4(OP)?;
        let k = dcn.kernel_size();
        if dcn.in_channels() != channels {
            return Err(Error::shape(OP, "dcn input channels", dcn.in_channels(), channels));
        }
        if groups == 0 || channels % groups != 0 {
            return Err(Error::invalid(OP, format!("{groups} groups do not divide {channels} channels")));
        }
        offsets
            .delta
            .expect_shape(OP, "delta_p", &[batch, 2 * k * k * groups, h, w])?;
        offsets.mask.expect_shape(OP, "mask", &[batch, k * k * groups, h, w])?;
        Ok(DeformGeometry {
            batch,
            channels,
            h,
            w,
            k,
            groups,
        })
    }

    fn taps(&self) -> usize {
        self.k * self.k
    }

    /// Where tap `q` of output pixel `p` samples, before interpolation.
    fn position(&self, offsets: &Offsets, b: usize, g: usize, q: usize, p: usize) -> (f64, f64) {
        let (kk, hw) = (self.taps(), self.h * self.w);
        let pad = (self.k / 2) as f64;
        let d = offsets.delta.data();
        let base = (b * 2 * kk * self.groups + g * 2 * kk + 2 * q) * hw + p;
        let (py, px) = ((p / self.w) as f64, (p % self.w) as f64);
        let (qy, qx) = ((q / self.k) as f64, (q % self.k) as f64);
        (py + qy - pad + d[base], px + qx - pad + d[base + hw])
    }

    fn mask_at(&self, offsets: &Offsets, b: usize, g: usize, q: usize, p: usize) -> f64 {
        let kk = self.taps();
        offsets.mask.data()[((b * self.groups + g) * kk + q) * self.h * self.w + p]
    }

    /// Modulated samples laid out `[B, C, k^2, H*W]`.
    fn columns(&self, h_prev: &Tensor, offsets: &Offsets) -> Vec<f64> {
        let (kk, hw, cpg) = (self.taps(), self.h * self.w, self.channels / self.groups);
        let x = h_prev.data();
        let mut cols = vec![0.0; self.batch * self.channels * kk * hw];
        for b in 0..self.batch {
            for g in 0..self.groups {
                for q in 0..kk {
                    for p in 0..hw {
                        let (y, xx) = self.position(offsets, b, g, q, p);
                        let m = self.mask_at(offsets, b, g, q, p);
                        for tap in bilinear_taps(self.h, self.w, y, xx) {
                            for c in g * cpg..(g + 1) * cpg {
                                cols[((b * self.channels + c) * kk + q) * hw + p] +=
                                    m * tap.weight * x[(b * self.channels + c) * hw + tap.index];
                            }
                        }
                    }
                }
            }
        }
        cols
    }
}

/// Modulated deformable convolution of `h_prev` with `params.dcn`.
///
/// Tap `q` of output pixel `p` reads `h_prev` bilinearly at
/// `p + grid(q) + delta_p(q, p)`, scaled by `mask(q, p)`; out-of-frame reads
/// are zero.
pub fn dcn_align(h_prev: &Tensor, offsets: &Offsets, params: &DgtfParams) -> Result<Tensor> {
    deform_conv(h_prev, offsets, &params.dcn, params.deformable_groups)
}

pub fn deform_conv(h_prev: &Tensor, offsets: &Offsets, dcn: &Conv2dLayer, groups: usize) -> Result<Tensor> {
    let geom = DeformGeometry::new(h_prev, offsets, dcn, groups)?;
    let cols = geom.columns(h_prev, offsets);
    let (kk, hw, c) = (geom.taps(), geom.h * geom.w, geom.channels);
    let out_ch = dcn.out_channels();
    let wt = dcn.weight.data();
    let mut out = vec![0.0; geom.batch * out_ch * hw];
    for b in 0..geom.batch {
        for o in 0..out_ch {
            let plane = &mut out[(b * out_ch + o) * hw..][..hw];
            plane.fill(dcn.bias.data()[o]);
            for ci in 0..c {
                for q in 0..kk {
                    let wv = wt[(o * c + ci) * kk + q];
                    let col = &cols[((b * c + ci) * kk + q) * hw..][..hw];
                    for (acc, &v) in plane.iter_mut().zip(col) {
                        *acc += wv * v;
                    }
                }
            }
        }
    }
    Tensor::new(vec![geom.batch, out_ch, geom.h, geom.w], out)
}

pub struct DeformGrads {
    pub h_prev: Tensor,
    pub delta: Tensor,
    pub mask: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn dcn_align_backward(h_prev: &Tensor, offsets: &Offsets, params: &DgtfParams, grad: &Tensor) -> Result<DeformGrads> {
    deform_conv_backward(h_prev, offsets, &params.dcn, params.deformable_groups, grad)
}

pub fn deform_conv_backward(
    h_prev: &Tensor,
    offsets: &Offsets,
    dcn: &Conv2dLayer,
    groups: usize,
    grad: &Tensor,
) -> Result<DeformGrads> {
    let geom = DeformGeometry::new(h_prev, offsets, dcn, groups)?;
    let (kk, hw, c, cpg) = (geom.taps(), geom.h * geom.w, geom.channels, geom.channels / geom.groups);
    let out_ch = dcn.out_channels();
    grad.expect_shape("dcn_align_backward", "grad", &[geom.batch, out_ch, geom.h, geom.w])?;
    let cols = geom.columns(h_prev, offsets);
    let (wt, g, x) = (dcn.weight.data(), grad.data(), h_prev.data());

    let mut gw = vec![0.0; wt.len()];
    let mut gb = vec![0.0; out_ch];
    let mut gcols = vec![0.0; cols.len()];
    for b in 0..geom.batch {
        for o in 0..out_ch {
            let gplane = &g[(b * out_ch + o) * hw..][..hw];
            gb[o] += gplane.iter().sum::<f64>();
            for ci in 0..c {
                for q in 0..kk {
                    let wi = (o * c + ci) * kk + q;
                    let ci_base = ((b * c + ci) * kk + q) * hw;
                    let col = &cols[ci_base..][..hw];
                    gw[wi] += gplane.iter().zip(col).map(|(a, v)| a * v).sum::<f64>();
                    let wv = wt[wi];
                    for (gc, &gv) in gcols[ci_base..][..hw].iter_mut().zip(gplane) {
                        *gc += wv * gv;
                    }
                }
            }
        }
    }

    let mut gx = vec![0.0; x.len()];
    let mut gdelta = vec![0.0; offsets.delta.len()];
    let mut gmask = vec![0.0; offsets.mask.len()];
    for b in 0..geom.batch {
        for gi in 0..geom.groups {
            for q in 0..kk {
                for p in 0..hw {
                    let (y, xx) = geom.position(offsets, b, gi, q, p);
                    let m = geom.mask_at(offsets, b, gi, q, p);
                    let (mut gm, mut gy, mut gxx) = (0.0, 0.0, 0.0);
                    for tap in bilinear_taps(geom.h, geom.w, y, xx) {
                        for ci in gi * cpg..(gi + 1) * cpg {
                            let gc = gcols[((b * c + ci) * kk + q) * hw + p];
                            let xi = (b * c + ci) * hw + tap.index;
                            gm += gc * tap.weight * x[xi];
                            gx[xi] += gc * m * tap.weight;
                            gy += gc * m * tap.dweight_dy * x[xi];
                            gxx += gc * m * tap.dweight_dx * x[xi];
                        }
                    }
                    gmask[((b * geom.groups + gi) * kk + q) * hw + p] += gm;
                    let d = (b * 2 * kk * geom.groups + gi * 2 * kk + 2 * q) * hw + p;
                    gdelta[d] += gy;
                    gdelta[d + hw] += gxx;
                }
            }
        }
    }

    Ok(DeformGrads {
        h_prev: Tensor::new(h_prev.shape().to_vec(), gx)?,
        delta: Tensor::new(offsets.delta.shape().to_vec(), gdelta)?,
        mask: Tensor::new(offsets.mask.shape().to_vec(), gmask)?,
        weight: Tensor::new(dcn.weight.shape().to_vec(), gw)?,
        bias: Tensor::new(vec![out_ch], gb)?,
    })
}
