//! Every differentiable operation the gradient checker knows about.

use crate::dgtf::{
    deform_conv, gated_update, deform_conv_backward, dgtf_step_backward, dgtf_step_traced, gated_update_backward,
    gated_update_traced, predict_offsets, predict_offsets_backward, run_sequence_backward, run_sequence_traced,
    DgtfParams, DgtfState, Offsets,
};
use crate::error::Result;
use crate::igdr::*;
use crate::ops::*;
use crate::pdf::*;
use crate::rng::SeededRng;
use crate::tensor::Tensor;

use super::config::HarnessConfig;
use super::fixtures::{dgtf_fixture, igdr_fixture, pdf_fixture, random_prob};
use super::gradcheck::GradProblem;

pub struct Target {
    pub name: &'static str,
    /// Overrides the configured tolerance.
    pub tol: Option<f64>,
    pub build: fn(&HarnessConfig, &mut SeededRng) -> Result<GradProblem>,
}

const fn target(name: &'static str, build: fn(&HarnessConfig, &mut SeededRng) -> Result<GradProblem>) -> Target {
    Target { name, tol: None, build }
}

pub fn targets() -> Vec<Target> {
    vec![
        Target {
            name: "self.quadratic",
            tol: Some(1e-10),
            build: quadratic,
        },
        target("tensor.conv2d", t_conv2d),
        target("tensor.sigmoid", t_sigmoid),
        target("tensor.tanh", t_tanh),
        target("tensor.softplus", t_softplus),
        target("tensor.exp", t_exp),
        target("tensor.log", t_log),
        target("tensor.mul", t_mul),
        target("tensor.softmax", t_softmax),
        target("tensor.batched_matmul", t_bmm),
        target("tensor.global_avg_pool", t_gap),
        target("tensor.bilinear_sample", t_bilinear),
        target("pdf.kl_prob_loss", p_kl),
        target("pdf.expected_depth", p_expected),
        target("pdf.smooth_l1", p_smooth_l1),
        target("pdf.foundation_loss", p_found),
        target("pdf.pair_rank_loss", p_pair),
        target("pdf.relative_loss", p_relative),
        target("pdf.total_depth_loss", p_total),
        target("dgtf.predict_offsets", d_offsets),
        target("dgtf.dcn_align", d_dcn),
        target("dgtf.gated_update", d_gates),
        target("dgtf.dgtf_step", d_step),
        target("dgtf.dgtf_step_bootstrap", d_step_bootstrap),
        target("dgtf.run_sequence", d_sequence),
        target("igdr.pool_project", i_pool),
        target("igdr.softmax_assign", i_softmax),
        target("igdr.broadcast_prototypes", i_broadcast),
        target("igdr.gen_affine", i_affine),
        target("igdr.calibrate", i_calibrate),
        target("igdr.foreground_gate", i_gate),
        target("igdr.gated_fuse", i_fuse),
        target("igdr.igdr_forward", i_forward),
    ]
}

pub fn target_names() -> Vec<&'static str> {
    targets().into_iter().map(|t| t.name).collect()
}

fn named(items: Vec<(&str, Tensor)>) -> Vec<(String, Tensor)> {
    items.into_iter().map(|(n, t)| (n.to_string(), t)).collect()
}

fn quadratic(_: &HarnessConfig, _: &mut SeededRng) -> Result<GradProblem> {
    Ok(GradProblem::new(
        named(vec![("x", Tensor::scalar(3.0))]),
        |x| Ok(x[0].map(|v| v * v)),
        |x, w| Ok(vec![x[0].zip_map(w, |v, g| 2.0 * v * g)?]),
    ))
}

// tensor_core

fn t_conv2d(_: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    const PAD: (usize, usize) = (1, 0);
    Ok(GradProblem::new(
        named(vec![
            ("input", rng.normal_tensor(&[2, 3, 5, 5], 1.0)),
            ("kernel", rng.normal_tensor(&[2, 3, 3, 3], 0.5)),
            ("bias", rng.normal_tensor(&[2], 0.5)),
        ]),
        |x| conv2d(&x[0], &x[1], &x[2], PAD),
        |x, w| {
            let g = conv2d_backward(&x[0], &x[1], PAD, w)?;
            Ok(vec![g.input, g.kernel, g.bias])
        },
    ))
}

fn unary(
    x: Tensor,
    f: fn(&Tensor) -> Tensor,
    df: fn(&Tensor, &Tensor, &Tensor) -> Result<Tensor>,
) -> GradProblem {
    GradProblem::new(
        named(vec![("x", x)]),
        move |x| Ok(f(&x[0])),
        move |x, w| Ok(vec![df(&x[0], &f(&x[0]), w)?]),
    )
}

fn t_sigmoid(_: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    Ok(unary(rng.normal_tensor(&[3, 4], 2.0), sigmoid, |_, y, g| sigmoid_backward(y, g)))
}

fn t_tanh(_: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    Ok(unary(rng.normal_tensor(&[3, 4], 1.5), tanh, |_, y, g| tanh_backward(y, g)))
}

fn t_softplus(_: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    Ok(unary(rng.normal_tensor(&[3, 4], 3.0), softplus, |x, _, g| softplus_backward(x, g)))
}

fn t_exp(_: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    Ok(unary(rng.normal_tensor(&[3, 4], 1.0), exp, |_, y, g| exp_backward(y, g)))
}

fn t_log(_: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    Ok(GradProblem::new(
        named(vec![("x", rng.uniform_tensor(&[3, 4], 0.5, 2.0))]),
        |x| log(&x[0]),
        |x, w| Ok(vec![log_backward(&x[0], w)?]),
    ))
}

fn t_mul(_: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    Ok(GradProblem::new(
        named(vec![("a", rng.normal_tensor(&[2, 5], 1.0)), ("b", rng.normal_tensor(&[2, 5], 1.0))]),
        |x| mul(&x[0], &x[1]),
        |x, w| {
            let (ga, gb) = mul_backward(&x[0], &x[1], w)?;
            Ok(vec![ga, gb])
        },
    ))
}

fn t_softmax(_: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    const TEMP: f64 = 0.7;
    Ok(GradProblem::new(
        named(vec![("x", rng.normal_tensor(&[2, 4, 3], 1.0))]),
        |x| softmax(&x[0], 1, TEMP),
        |x, w| Ok(vec![softmax_backward(&softmax(&x[0], 1, TEMP)?, w, 1, TEMP)?]),
    ))
}

fn t_bmm(_: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    Ok(GradProblem::new(
        named(vec![("a", rng.normal_tensor(&[2, 3, 4], 1.0)), ("b", rng.normal_tensor(&[2, 4, 5], 1.0))]),
        |x| batched_matmul(&x[0], &x[1]),
        |x, w| {
            let (ga, gb) = batched_matmul_backward(&x[0], &x[1], w)?;
            Ok(vec![ga, gb])
        },
    ))
}

fn t_gap(_: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    Ok(GradProblem::new(
        named(vec![("x", rng.normal_tensor(&[2, 3, 4, 4], 1.0))]),
        |x| global_avg_pool(&x[0]),
        |x, w| Ok(vec![global_avg_pool_backward(x[0].shape(), w)?]),
    ))
}

fn t_bilinear(_: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    Ok(GradProblem::new(
        named(vec![
            ("feature", rng.normal_tensor(&[2, 4, 5], 1.0)),
            ("coords", Tensor::new(vec![2], vec![1.3, 2.6])?),
        ]),
        |x| bilinear_sample(&x[0], x[1].data()[0], x[1].data()[1]),
        |x, w| {
            let g = bilinear_sample_backward(&x[0], x[1].data()[0], x[1].data()[1], w)?;
            Ok(vec![g.feature, Tensor::new(vec![2], vec![g.y, g.x])?])
        },
    ))
}

// pdf_losses

/// Two bin widths: every target bin then carries mass above 1e-3, keeping
/// true gradients well above the difference quotient's roundoff.
const CHECK_SIGMA: f64 = 2.0;

fn p_kl(_: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    let (batch, bins) = pdf_fixture(rng)?;
    let sigma = CHECK_SIGMA;
    let prob = batch.prob.clone();
    let b2 = batch.clone();
    let bins2 = bins.clone();
    Ok(GradProblem::new(
        named(vec![("prob", prob)]),
        move |x| Ok(Tensor::scalar(kl_prob_loss(&batch.with_prob(x[0].clone())?, &bins, sigma)?.value)),
        move |x, w| Ok(vec![kl_prob_loss_backward(&b2.with_prob(x[0].clone())?, &bins2, sigma, w.item())?]),
    ))
}

fn p_expected(_: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    let (batch, bins) = pdf_fixture(rng)?;
    let bins2 = bins.clone();
    Ok(GradProblem::new(
        named(vec![("prob", batch.prob)]),
        move |x| expected_depth(&x[0], &bins),
        move |x, w| Ok(vec![expected_depth_backward(x[0].shape(), &bins2, w)?]),
    ))
}

fn p_smooth_l1(_: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    Ok(GradProblem::new(
        named(vec![("x", rng.uniform_tensor(&[16], -3.0, 3.0))]),
        |x| Ok(x[0].map(|v| smooth_l1(v, DEFAULT_BETA))),
        |x, w| Ok(vec![x[0].zip_map(w, |v, g| g * smooth_l1_grad(v, DEFAULT_BETA))?]),
    ))
}

fn p_found(cfg: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    let (batch, bins) = pdf_fixture(rng)?;
    let (la, ld) = (cfg.weights.lambda_abs, cfg.weights.lambda_dense);
    let (b2, bins2) = (batch.clone(), bins.clone());
    Ok(GradProblem::new(
        named(vec![("prob", batch.prob.clone())]),
        move |x| {
            let l = foundation_loss(&batch.with_prob(x[0].clone())?, &bins, DEFAULT_BETA, la, ld)?;
            Ok(Tensor::scalar(l.l_found))
        },
        move |x, w| {
            let g = foundation_loss_backward(&b2.with_prob(x[0].clone())?, &bins2, DEFAULT_BETA, la, ld)?;
            Ok(vec![g.map(|v| v * w.item())])
        },
    ))
}

fn p_pair(_: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    let gt = (rng.uniform_in(1.0, 5.0), rng.uniform_in(5.5, 9.0));
    Ok(GradProblem::new(
        named(vec![("dhat", rng.uniform_tensor(&[2], 2.0, 8.0))]),
        move |x| Ok(Tensor::scalar(pair_rank_loss(x[0].data()[0], x[0].data()[1], gt.0, gt.1))),
        move |x, w| {
            let (gi, gj) = pair_rank_loss_grad(x[0].data()[0], x[0].data()[1], gt.0, gt.1);
            Ok(vec![Tensor::new(vec![2], vec![gi * w.item(), gj * w.item()])?])
        },
    ))
}

fn p_relative(cfg: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    let (batch, bins) = pdf_fixture(rng)?;
    let dhat = expected_depth(&batch.prob, &bins)?;
    let ranking = cfg.ranking.clone();
    let (b2, r2) = (batch.clone(), ranking.clone());
    Ok(GradProblem::new(
        named(vec![("dhat", dhat)]),
        move |x| {
            let mut rng = SeededRng::new(ranking.rng_seed);
            Ok(Tensor::scalar(relative_loss(&x[0], &batch, &ranking, &mut rng)?.l_relative))
        },
        move |x, w| {
            let mut rng = SeededRng::new(r2.rng_seed);
            let loss = relative_loss(&x[0], &b2, &r2, &mut rng)?;
            Ok(vec![relative_loss_backward(&x[0], &b2, &r2, &loss, w.item())?])
        },
    ))
}

fn p_total(cfg: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    let (batch, bins) = pdf_fixture(rng)?;
    let sigma = CHECK_SIGMA;
    let (ranking, weights) = (cfg.ranking.clone(), cfg.weights.clone());
    let (b2, bins2, r2, w2) = (batch.clone(), bins.clone(), ranking.clone(), weights.clone());
    Ok(GradProblem::new(
        named(vec![("prob", batch.prob.clone())]),
        move |x| {
            let mut rng = SeededRng::new(ranking.rng_seed);
            let b = batch.with_prob(x[0].clone())?;
            let r = total_depth_loss(&b, &bins, &ranking, &weights, sigma, DEFAULT_BETA, &mut rng)?;
            Ok(Tensor::scalar(r.l_depth))
        },
        move |x, w| {
            let mut rng = SeededRng::new(r2.rng_seed);
            let b = b2.with_prob(x[0].clone())?;
            let (_, g) = total_depth_loss_backward(&b, &bins2, &r2, &w2, sigma, DEFAULT_BETA, &mut rng)?;
            Ok(vec![g.map(|v| v * w.item())])
        },
    ))
}

// dgtf

fn dgtf_named(p: &DgtfParams) -> Vec<(String, Tensor)> {
    p.tensors().into_iter().map(|(n, t)| (n, t.clone())).collect()
}

fn dgtf_with(base: &DgtfParams, tensors: &[Tensor]) -> DgtfParams {
    let mut p = base.clone();
    for ((_, slot), t) in p.tensors_mut().into_iter().zip(tensors) {
        *slot = t.clone();
    }
    p
}

fn dgtf_flat(p: &DgtfParams) -> Vec<Tensor> {
    p.tensors().into_iter().map(|(_, t)| t.clone()).collect()
}

fn d_offsets(_: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    let f = dgtf_fixture(rng, 2, 1, 5)?;
    let (p, p2) = (f.params.clone(), f.params);
    Ok(GradProblem::new(
        named(vec![
            ("x", f.x),
            ("h_prev", f.h_prev),
            ("conv_offset.weight", p.conv_offset.weight.clone()),
            ("conv_offset.bias", p.conv_offset.bias.clone()),
        ]),
        move |x| {
            let mut q = p.clone();
            q.conv_offset = Conv2dLayer::new(x[2].clone(), x[3].clone())?;
            let off = predict_offsets(&x[0], &x[1], &q)?;
            concat_channels(&off.delta, &off.mask)
        },
        move |x, w| {
            let mut q = p2.clone();
            q.conv_offset = Conv2dLayer::new(x[2].clone(), x[3].clone())?;
            let off = predict_offsets(&x[0], &x[1], &q)?;
            let (gd, gm) = split_channels(w, off.delta.shape()[1])?;
            let g = predict_offsets_backward(&x[0], &x[1], &q, &off, &gd, &gm)?;
            Ok(vec![g.x, g.h_prev, g.conv_offset.kernel, g.conv_offset.bias])
        },
    ))
}

fn d_dcn(_: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    const GROUPS: usize = 2;
    let (c, k, s) = (4, 3, 5);
    let taps = k * k * GROUPS;
    Ok(GradProblem::new(
        named(vec![
            ("h_prev", rng.normal_tensor(&[1, c, s, s], 1.0)),
            ("delta", rng.normal_tensor(&[1, 2 * taps, s, s], 0.7)),
            ("mask", rng.uniform_tensor(&[1, taps, s, s], 0.1, 0.9)),
            ("dcn.weight", rng.normal_tensor(&[c, c, k, k], 0.3)),
            ("dcn.bias", rng.normal_tensor(&[c], 0.3)),
        ]),
        |x| {
            let off = Offsets {
                delta: x[1].clone(),
                mask: x[2].clone(),
            };
            deform_conv(&x[0], &off, &Conv2dLayer::new(x[3].clone(), x[4].clone())?, GROUPS)
        },
        |x, w| {
            let off = Offsets {
                delta: x[1].clone(),
                mask: x[2].clone(),
            };
            let g = deform_conv_backward(&x[0], &off, &Conv2dLayer::new(x[3].clone(), x[4].clone())?, GROUPS, w)?;
            Ok(vec![g.h_prev, g.delta, g.mask, g.weight, g.bias])
        },
    ))
}

fn gate_params(base: &DgtfParams, x: &[Tensor]) -> Result<DgtfParams> {
    let mut p = base.clone();
    p.conv_r = Conv2dLayer::new(x[2].clone(), x[3].clone())?;
    p.conv_z = Conv2dLayer::new(x[4].clone(), x[5].clone())?;
    p.conv_h = Conv2dLayer::new(x[6].clone(), x[7].clone())?;
    Ok(p)
}

fn d_gates(_: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    let f = dgtf_fixture(rng, 2, 1, 5)?;
    let (p, p2) = (f.params.clone(), f.params);
    Ok(GradProblem::new(
        named(vec![
            ("x", f.x),
            ("h_aligned", f.h_prev),
            ("conv_r.weight", p.conv_r.weight.clone()),
            ("conv_r.bias", p.conv_r.bias.clone()),
            ("conv_z.weight", p.conv_z.weight.clone()),
            ("conv_z.bias", p.conv_z.bias.clone()),
            ("conv_h.weight", p.conv_h.weight.clone()),
            ("conv_h.bias", p.conv_h.bias.clone()),
        ]),
        move |x| gated_update(&x[0], &x[1], &gate_params(&p, x)?),
        move |x, w| {
            let q = gate_params(&p2, x)?;
            let trace = gated_update_traced(&x[0], &x[1], &q)?;
            let g = gated_update_backward(&x[0], &x[1], &q, &trace, w)?;
            Ok(vec![
                g.x,
                g.h_aligned,
                g.conv_r.kernel,
                g.conv_r.bias,
                g.conv_z.kernel,
                g.conv_z.bias,
                g.conv_h.kernel,
                g.conv_h.bias,
            ])
        },
    ))
}

/// Output is `concat(F_RC, H_t)` so the carried state's gradient is checked too.
fn step_problem(rng: &mut SeededRng, bootstrap: bool) -> Result<GradProblem> {
    let f = dgtf_fixture(rng, 2, 1, 6)?;
    let lead = if bootstrap { 1 } else { 2 };
    let mut inputs = named(vec![("x", f.x)]);
    if !bootstrap {
        inputs.extend(named(vec![("h_prev", f.h_prev)]));
    }
    inputs.extend(dgtf_named(&f.params));
    let (p, p2) = (f.params.clone(), f.params);
    let state = move |x: &[Tensor]| {
        if bootstrap {
            DgtfState::new()
        } else {
            DgtfState::with_hidden(x[1].clone())
        }
    };
    Ok(GradProblem::new(
        inputs,
        move |x| {
            let trace = dgtf_step_traced(&x[0], &state(x), &dgtf_with(&p, &x[lead..]))?;
            concat_channels(&trace.f_rc, trace.hidden())
        },
        move |x, w| {
            let q = dgtf_with(&p2, &x[lead..]);
            let trace = dgtf_step_traced(&x[0], &state(x), &q)?;
            let (gf, gh) = split_channels(w, q.channels())?;
            let g = dgtf_step_backward(&trace, &q, &gf, Some(&gh))?;
            let mut out = vec![g.x];
            if !bootstrap {
                out.push(g.h_prev);
            }
            out.extend(dgtf_flat(&g.params));
            Ok(out)
        },
    ))
}

fn d_step(_: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    step_problem(rng, false)
}

fn d_step_bootstrap(_: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    step_problem(rng, true)
}

fn stack(frames: &[Tensor]) -> Result<Tensor> {
    let mut shape = frames[0].shape().to_vec();
    shape[0] *= frames.len();
    Tensor::new(shape, frames.iter().flat_map(|f| f.data().iter().copied()).collect())
}

fn unstack(t: &Tensor, count: usize) -> Result<Vec<Tensor>> {
    let mut shape = t.shape().to_vec();
    shape[0] /= count;
    let per = t.len() / count;
    t.data().chunks_exact(per).map(|c| Tensor::new(shape.clone(), c.to_vec())).collect()
}

/// Five frames with gap 2: two interleaved recurrences of depth 3 and 2.
fn d_sequence(_: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    const FRAMES: usize = 5;
    const GAP: usize = 2;
    let params = DgtfParams::random(2, 3, 1, 0.3, rng)?;
    let mut inputs: Vec<(String, Tensor)> =
        (0..FRAMES).map(|t| (format!("frame{t}"), rng.normal_tensor(&[1, 2, 5, 5], 1.0))).collect();
    inputs.extend(dgtf_named(&params));
    let (p, p2) = (params.clone(), params);
    Ok(GradProblem::new(
        inputs,
        move |x| {
            let traces = run_sequence_traced(&x[..FRAMES], GAP, &dgtf_with(&p, &x[FRAMES..]))?;
            stack(&traces.into_iter().map(|t| t.f_rc).collect::<Vec<_>>())
        },
        move |x, w| {
            let q = dgtf_with(&p2, &x[FRAMES..]);
            let traces = run_sequence_traced(&x[..FRAMES], GAP, &q)?;
            let (gp, gframes) = run_sequence_backward(&traces, GAP, &q, &unstack(w, FRAMES)?)?;
            let mut out = gframes;
            out.extend(dgtf_flat(&gp));
            Ok(out)
        },
    ))
}

// igdr

fn igdr_named(p: &IgdrParams) -> Vec<(String, Tensor)> {
    p.tensors().into_iter().map(|(n, t)| (n, t.clone())).collect()
}

fn igdr_with(base: &IgdrParams, tensors: &[Tensor]) -> IgdrParams {
    let mut p = base.clone();
    for ((_, slot), t) in p.tensors_mut().into_iter().zip(tensors) {
        *slot = t.clone();
    }
    p
}

fn igdr_flat(p: &IgdrParams) -> Vec<Tensor> {
    p.tensors().into_iter().map(|(_, t)| t.clone()).collect()
}

fn i_pool(cfg: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    let (inputs, params) = igdr_fixture(rng, cfg.temperature)?;
    let e = inputs.instances.expect("fixture has instances").e_features;
    let (p, p2) = (params.clone(), params);
    Ok(GradProblem::new(
        named(vec![
            ("e_features", e),
            ("proj.weight", p.proj_weight.clone()),
            ("proj.bias", p.proj_bias.clone()),
        ]),
        move |x| {
            let mut q = p.clone();
            q.proj_weight = x[1].clone();
            q.proj_bias = x[2].clone();
            pool_project(&x[0], &q, 2)
        },
        move |x, w| {
            let mut q = p2.clone();
            q.proj_weight = x[1].clone();
            q.proj_bias = x[2].clone();
            let g = pool_project_backward(&x[0], &q, w)?;
            Ok(vec![g.e_features, g.proj_weight, g.proj_bias])
        },
    ))
}

fn i_softmax(cfg: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    let t = cfg.temperature;
    Ok(GradProblem::new(
        named(vec![("s_bev", rng.uniform_tensor(&[1, 3, 5, 5], 0.0, 2.0))]),
        move |x| softmax_assign(&x[0], t),
        move |x, w| Ok(vec![softmax_assign_backward(&softmax_assign(&x[0], t)?, w, t)?]),
    ))
}

fn i_broadcast(_: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    Ok(GradProblem::new(
        named(vec![
            ("a_prob", random_prob(&[1, 3, 5, 5], rng)?),
            ("e_proj", rng.normal_tensor(&[1, 3, 4], 1.0)),
        ]),
        |x| broadcast_prototypes(&x[0], &x[1]),
        |x, w| {
            let (ga, ge) = broadcast_prototypes_backward(&x[0], &x[1], w)?;
            Ok(vec![ga, ge])
        },
    ))
}

fn affine_params(base: &IgdrParams, x: &[Tensor]) -> Result<IgdrParams> {
    let mut p = base.clone();
    p.conv_gamma = Conv2dLayer::new(x[1].clone(), x[2].clone())?;
    p.conv_beta = Conv2dLayer::new(x[3].clone(), x[4].clone())?;
    Ok(p)
}

fn i_affine(cfg: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    let (_, params) = igdr_fixture(rng, cfg.temperature)?;
    let (p, p2) = (params.clone(), params);
    Ok(GradProblem::new(
        named(vec![
            ("e_bev", rng.normal_tensor(&[1, 4, 5, 5], 1.0)),
            ("conv_gamma.weight", p.conv_gamma.weight.clone()),
            ("conv_gamma.bias", p.conv_gamma.bias.clone()),
            ("conv_beta.weight", p.conv_beta.weight.clone()),
            ("conv_beta.bias", p.conv_beta.bias.clone()),
        ]),
        move |x| {
            let (g, b) = gen_affine(&x[0], &affine_params(&p, x)?)?;
            concat_channels(&g, &b)
        },
        move |x, w| {
            let q = affine_params(&p2, x)?;
            let (gg, gb) = split_channels(w, q.channels())?;
            let g = gen_affine_backward(&x[0], &q, &gg, &gb)?;
            Ok(vec![g.e_bev, g.conv_gamma.kernel, g.conv_gamma.bias, g.conv_beta.kernel, g.conv_beta.bias])
        },
    ))
}

fn i_calibrate(_: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    Ok(GradProblem::new(
        named(vec![
            ("f_rc", rng.normal_tensor(&[1, 2, 5, 5], 1.0)),
            ("gamma", rng.normal_tensor(&[1, 2, 5, 5], 1.0)),
            ("beta", rng.normal_tensor(&[1, 2, 5, 5], 1.0)),
        ]),
        |x| calibrate(&x[0], &x[1], &x[2]),
        |x, w| {
            let (gf, gg, gb) = calibrate_backward(&x[0], &x[1], w)?;
            Ok(vec![gf, gg, gb])
        },
    ))
}

fn i_gate(cfg: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    let (inputs, params) = igdr_fixture(rng, cfg.temperature)?;
    let s = inputs.instances.expect("fixture has instances").s_bev;
    let (p, p2) = (params.clone(), params);
    let with = |base: &IgdrParams, x: &[Tensor]| -> Result<IgdrParams> {
        let mut q = base.clone();
        q.conv_gate = Conv2dLayer::new(x[1].clone(), x[2].clone())?;
        Ok(q)
    };
    Ok(GradProblem::new(
        named(vec![
            ("s_bev", s),
            ("conv_gate.weight", p.conv_gate.weight.clone()),
            ("conv_gate.bias", p.conv_gate.bias.clone()),
        ]),
        move |x| foreground_gate(&x[0], &with(&p, x)?),
        move |x, w| {
            let q = with(&p2, x)?;
            let gate = foreground_gate(&x[0], &q)?;
            let (gs, conv) = foreground_gate_backward(&x[0], &q, &gate, w)?;
            Ok(vec![gs, conv.kernel, conv.bias])
        },
    ))
}

fn i_fuse(_: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    Ok(GradProblem::new(
        named(vec![
            ("f_rc", rng.normal_tensor(&[1, 2, 5, 5], 1.0)),
            ("f_calibrated", rng.normal_tensor(&[1, 2, 5, 5], 1.0)),
            ("g_bg", rng.uniform_tensor(&[1, 1, 5, 5], 0.05, 0.95)),
        ]),
        |x| gated_fuse(&x[0], &x[1], &x[2]),
        |x, w| {
            let (gf, gc, gg) = gated_fuse_backward(&x[0], &x[1], &x[2], w)?;
            Ok(vec![gf, gc, gg])
        },
    ))
}

fn i_forward(cfg: &HarnessConfig, rng: &mut SeededRng) -> Result<GradProblem> {
    let (inputs, params) = igdr_fixture(rng, cfg.temperature)?;
    let t = inputs.temperature;
    let inst = inputs.instances.expect("fixture has instances");
    let mut named_inputs = named(vec![("f_rc", inputs.f_rc), ("e_features", inst.e_features), ("s_bev", inst.s_bev)]);
    named_inputs.extend(igdr_named(&params));
    let (p, p2) = (params.clone(), params);
    let build = move |x: &[Tensor]| IgdrInputs::new(x[0].clone(), x[1].clone(), x[2].clone(), t);
    Ok(GradProblem::new(
        named_inputs,
        move |x| Ok(igdr_forward(&build(x)?, &igdr_with(&p, &x[3..]))?.f_final),
        move |x, w| {
            let q = igdr_with(&p2, &x[3..]);
            let inp = build(x)?;
            let out = igdr_forward(&inp, &q)?;
            let g = igdr_backward(&inp, &q, &out, w)?;
            let inst = g.instances.expect("instances present");
            let mut v = vec![g.f_rc, inst.e_features, inst.s_bev];
            v.extend(igdr_flat(&g.params));
            Ok(v)
        },
    ))
}
