//! Naive references shared by the integration tests. Everything here is
//! written as plain index loops over flat buffers and uses none of the
//! library's operators, so agreement with the library is meaningful.
#![allow(dead_code)]

use bevkit::dgtf::DgtfParams;
use bevkit::igdr::IgdrParams;
use bevkit::Tensor;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Cross-correlation with zero padding and stride 1.
pub fn conv_loop(input: &Tensor, weight: &Tensor, bias: &Tensor, pad: usize) -> Tensor {
    let s = input.shape();
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    let ws = weight.shape();
    let (o, kh, kw) = (ws[0], ws[2], ws[3]);
    let oh = h + 2 * pad + 1 - kh;
    let ow = w + 2 * pad + 1 - kw;
    let x = input.data();
    let k = weight.data();
    let mut out = vec![0.0; b * o * oh * ow];
    for n in 0..b {
        for oc in 0..o {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = bias.data()[oc];
                    for ic in 0..c {
                        for dy in 0..kh {
                            for dx in 0..kw {
                                let iy = y as isize + dy as isize - pad as isize;
                                let ix = xx as isize + dx as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += k[((oc * c + ic) * kh + dy) * kw + dx]
                                    * x[((n * c + ic) * h + iy as usize) * w + ix as usize];
                            }
                        }
                    }
                    out[((n * o + oc) * oh + y) * ow + xx] = acc;
                }
            }
        }
    }
    Tensor::new(vec![b, o, oh, ow], out).unwrap()
}

fn same_conv(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Tensor {
    conv_loop(input, weight, bias, weight.shape()[2] / 2)
}

/// Bilinear read of one `h x w` plane; corners outside the plane read zero.
pub fn bilinear(plane: &[f64], h: usize, w: usize, y: f64, x: f64) -> f64 {
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    let mut v = 0.0;
    for (cy, wy) in [(y0, 1.0 - fy), (y0 + 1.0, fy)] {
        for (cx, wx) in [(x0, 1.0 - fx), (x0 + 1.0, fx)] {
            if cy >= 0.0 && cx >= 0.0 && cy < h as f64 && cx < w as f64 {
                v += wy * wx * plane[cy as usize * w + cx as usize];
            }
        }
    }
    v
}

fn cat(a: &Tensor, b: &Tensor) -> Tensor {
    let s = a.shape();
    let (n, c, hw) = (s[0], s[1], s[2] * s[3]);
    let mut out = Vec::with_capacity(2 * a.len());
    for i in 0..n {
        out.extend_from_slice(&a.data()[i * c * hw..(i + 1) * c * hw]);
        out.extend_from_slice(&b.data()[i * c * hw..(i + 1) * c * hw]);
    }
    Tensor::new(vec![n, 2 * c, s[2], s[3]], out).unwrap()
}

/// Everything one temporal step computes.
pub struct StepReference {
    pub delta: Tensor,
    pub mask: Tensor,
    pub aligned: Tensor,
    pub hidden: Tensor,
    pub f_rc: Tensor,
}

/// One temporal step written out line by line: offsets and mask from the
/// stacked pair, modulated deformable sampling of the previous hidden
/// state, reset/candidate/update gates, blend, output convolution.
/// `h_prev = None` is the first frame, which fuses the frame with itself.
pub fn dgtf_step_reference(x: &Tensor, h_prev: Option<&Tensor>, p: &DgtfParams) -> StepReference {
    let hp = h_prev.unwrap_or(x);
    let s = x.shape();
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    let hw = h * w;
    let k = p.dcn.weight.shape()[2];
    let kk = k * k;
    let groups = p.deformable_groups;
    let cpg = c / groups;

    let raw = same_conv(&cat(x, hp), &p.conv_offset.weight, &p.conv_offset.bias);
    let r = raw.data();
    let n_delta = 2 * kk * groups;
    let n_raw = 3 * kk * groups;
    let mut delta = vec![0.0; b * n_delta * hw];
    let mut mask = vec![0.0; b * kk * groups * hw];
    for n in 0..b {
        for ch in 0..n_raw {
            for px in 0..hw {
                let v = r[(n * n_raw + ch) * hw + px];
                if ch < n_delta {
                    delta[(n * n_delta + ch) * hw + px] = v;
                } else {
                    mask[(n * kk * groups + ch - n_delta) * hw + px] = sigmoid(v);
                }
            }
        }
    }

    let wt = p.dcn.weight.data();
    let mut aligned = vec![0.0; b * c * hw];
    for n in 0..b {
        for o in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = p.dcn.bias.data()[o];
                    for ci in 0..c {
                        let g = ci / cpg;
                        let plane = &hp.data()[(n * c + ci) * hw..(n * c + ci + 1) * hw];
                        for q in 0..kk {
                            let px = y * w + xx;
                            let dy = delta[(n * n_delta + g * 2 * kk + 2 * q) * hw + px];
                            let dx = delta[(n * n_delta + g * 2 * kk + 2 * q + 1) * hw + px];
                            let m = mask[(n * kk * groups + g * kk + q) * hw + px];
                            let sy = y as f64 + (q / k) as f64 - (k / 2) as f64 + dy;
                            let sx = xx as f64 + (q % k) as f64 - (k / 2) as f64 + dx;
                            acc += wt[(o * c + ci) * kk + q] * m * bilinear(plane, h, w, sy, sx);
                        }
                    }
                    aligned[(n * c + o) * hw + y * w + xx] = acc;
                }
            }
        }
    }
    let aligned = Tensor::new(s.to_vec(), aligned).unwrap();

    let xh = cat(x, &aligned);
    let reset = same_conv(&xh, &p.conv_r.weight, &p.conv_r.bias);
    let update = same_conv(&xh, &p.conv_z.weight, &p.conv_z.bias);
    let gated: Vec<f64> = (0..b * c * hw)
        .map(|i| sigmoid(reset.data()[i]) * aligned.data()[i])
        .collect();
    let gated = Tensor::new(s.to_vec(), gated).unwrap();
    let cand = same_conv(&cat(x, &gated), &p.conv_h.weight, &p.conv_h.bias);
    let hidden: Vec<f64> = (0..b * c * hw)
        .map(|i| {
            let z = sigmoid(update.data()[i]);
            (1.0 - z) * x.data()[i] + z * cand.data()[i].tanh()
        })
        .collect();
    let hidden = Tensor::new(s.to_vec(), hidden).unwrap();
    let f_rc = same_conv(&hidden, &p.conv_out.weight, &p.conv_out.bias);

    StepReference {
        delta: Tensor::new(vec![b, n_delta, h, w], delta).unwrap(),
        mask: Tensor::new(vec![b, kk * groups, h, w], mask).unwrap(),
        aligned,
        hidden,
        f_rc,
    }
}

/// Everything the refinement block computes.
pub struct IgdrReference {
    pub e_proj: Vec<f64>,
    pub a_prob: Tensor,
    pub e_bev: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub gate: Tensor,
    pub f_final: Tensor,
}

/// Pool and project each RoI, softmax the scores over instances, mix the
/// prototypes per pixel, convolve to a scale and shift, gate on the summed
/// scores and blend.
pub fn igdr_reference(f_rc: &Tensor, e_features: &Tensor, s_bev: &Tensor, tau: f64, p: &IgdrParams) -> IgdrReference {
    let fs = f_rc.shape();
    let (b, c, h, w) = (fs[0], fs[1], fs[2], fs[3]);
    let hw = h * w;
    let es = e_features.shape();
    let (n_inst, ci, rh, rw) = (es[0], es[1], es[2], es[3]);

    let mut pooled = vec![0.0; n_inst * ci];
    for n in 0..n_inst {
        for ch in 0..ci {
            let mut sum = 0.0;
            for i in 0..rh * rw {
                sum += e_features.data()[(n * ci + ch) * rh * rw + i];
            }
            pooled[n * ci + ch] = sum / (rh * rw) as f64;
        }
    }
    let mut e_proj = vec![0.0; n_inst * ci];
    for n in 0..n_inst {
        for o in 0..ci {
            let mut acc = p.proj_bias.data()[o];
            for ch in 0..ci {
                acc += p.proj_weight.data()[o * ci + ch] * pooled[n * ci + ch];
            }
            e_proj[n * ci + o] = acc;
        }
    }

    let s = s_bev.data();
    let mut a = vec![0.0; b * n_inst * hw];
    for bb in 0..b {
        for px in 0..hw {
            let at = |n: usize| (bb * n_inst + n) * hw + px;
            let max = (0..n_inst).map(|n| s[at(n)]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for n in 0..n_inst {
                a[at(n)] = ((s[at(n)] - max) / tau).exp();
                z += a[at(n)];
            }
            for n in 0..n_inst {
                a[at(n)] /= z;
            }
        }
    }

    let mut e_bev = vec![0.0; b * ci * hw];
    for bb in 0..b {
        for ch in 0..ci {
            for px in 0..hw {
                let mut acc = 0.0;
                for n in 0..n_inst {
                    acc += a[(bb * n_inst + n) * hw + px] * e_proj[n * ci + ch];
                }
                e_bev[(bb * ci + ch) * hw + px] = acc;
            }
        }
    }
    let e_bev = Tensor::new(vec![b, ci, h, w], e_bev).unwrap();
    let gamma = same_conv(&e_bev, &p.conv_gamma.weight, &p.conv_gamma.bias);
    let beta = same_conv(&e_bev, &p.conv_beta.weight, &p.conv_beta.bias);

    let mut total = vec![0.0; b * hw];
    for bb in 0..b {
        for px in 0..hw {
            for n in 0..n_inst {
                total[bb * hw + px] += s[(bb * n_inst + n) * hw + px];
            }
        }
    }
    let total = Tensor::new(vec![b, 1, h, w], total).unwrap();
    let logit = same_conv(&total, &p.conv_gate.weight, &p.conv_gate.bias);
    let gate = Tensor::new(vec![b, 1, h, w], logit.data().iter().map(|&v| sigmoid(v)).collect()).unwrap();

    let mut out = vec![0.0; b * c * hw];
    for bb in 0..b {
        for ch in 0..c {
            for px in 0..hw {
                let i = (bb * c + ch) * hw + px;
                let g = gate.data()[bb * hw + px];
                let cal = f_rc.data()[i] * gamma.data()[i] + beta.data()[i];
                out[i] = (1.0 - g) * f_rc.data()[i] + g * cal;
            }
        }
    }

    IgdrReference {
        e_proj,
        a_prob: Tensor::new(vec![b, n_inst, h, w], a).unwrap(),
        e_bev,
        gamma,
        beta,
        gate,
        f_final: Tensor::new(fs.to_vec(), out).unwrap(),
    }
}

pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
