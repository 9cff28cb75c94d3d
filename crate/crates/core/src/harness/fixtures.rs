//! Small fixed-shape instances shared by gradient checks, golden files and
//! property suites.

use crate::dgtf::DgtfParams;
use crate::error::Result;
use crate::igdr::{IgdrInputs, IgdrParams};
use crate::ops::softmax;
use crate::pdf::{DepthBinSpec, DepthSupervisionBatch};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// A per-pixel distribution over axis 1 from Gaussian logits.
pub fn random_prob(shape: &[usize], rng: &mut SeededRng) -> Result<Tensor> {
    softmax(&rng.normal_tensor(shape, 1.0), 1, 1.0)
}

/// Eight one-metre bins over `[1, 9]`.
pub fn small_bins() -> DepthBinSpec {
    DepthBinSpec::new(1.0, 9.0, 8).expect("valid bins")
}

/// `B = 2`, `D = 8`, `6 x 6`: a sloped background with one square object
/// per batch element, half the pixels sparse-supervised with noise.
pub fn pdf_fixture(rng: &mut SeededRng) -> Result<(DepthSupervisionBatch, DepthBinSpec)> {
    let bins = small_bins();
    let (b, h, w) = (2, 6, 6);
    let objects = [(1usize, 1usize, 2.0), (2, 2, 8.9)];
    let inside = |n: usize, y: usize, x: usize| {
        let (oy, ox, _) = objects[n];
        (oy..oy + 3).contains(&y) && (ox..ox + 3).contains(&x)
    };
    let dense = Tensor::from_fn(&[b, h, w], |i| {
        let (n, y, x) = (i / (h * w), (i / w) % h, i % w);
        if inside(n, y, x) {
            objects[n].2
        } else {
            5.0 + 0.5 * x as f64 + 0.25 * y as f64
        }
    });
    let masks = Tensor::from_fn(&[b, 1, h, w], |i| {
        let (n, y, x) = (i / (h * w), (i / w) % h, i % w);
        if inside(n, y, x) {
            1.0
        } else {
            0.0
        }
    });
    let mask_sparse = Tensor::from_fn(&[b, h, w], |_| if rng.uniform() < 0.5 { 1.0 } else { 0.0 });
    let noise = rng.normal_tensor(&[b, h, w], 0.3);
    let sparse = Tensor::from_fn(&[b, h, w], |i| {
        if mask_sparse.data()[i] > 0.5 {
            (dense.data()[i] + noise.data()[i]).clamp(bins.d_min(), bins.d_max())
        } else {
            0.0
        }
    });
    let prob = random_prob(&[b, bins.count(), h, w], rng)?;
    let batch = DepthSupervisionBatch::new(prob, sparse, mask_sparse, dense, Tensor::ones(&[b, h, w]), Some(masks))?;
    Ok((batch, bins))
}

/// Random temporal-cell parameters with a frame and a previous hidden state.
pub struct DgtfFixture {
    pub params: DgtfParams,
    pub x: Tensor,
    pub h_prev: Tensor,
}

pub fn dgtf_fixture(rng: &mut SeededRng, channels: usize, groups: usize, size: usize) -> Result<DgtfFixture> {
    let params = DgtfParams::random(channels, 3, groups, 0.3, rng)?;
    Ok(DgtfFixture {
        params,
        x: rng.normal_tensor(&[1, channels, size, size], 1.0),
        h_prev: rng.normal_tensor(&[1, channels, size, size], 1.0),
    })
}

/// `B = 1`, `N = 3`, `C = 2`, `C_inst = 4` on a `5 x 5` grid.
pub fn igdr_fixture(rng: &mut SeededRng, temperature: f64) -> Result<(IgdrInputs, IgdrParams)> {
    let (n, c, ci, hb) = (3, 2, 4, 5);
    let inputs = IgdrInputs::new(
        rng.normal_tensor(&[1, c, hb, hb], 1.0),
        rng.normal_tensor(&[n, ci, 3, 3], 1.0),
        rng.uniform_tensor(&[1, n, hb, hb], 0.0, 2.0),
        temperature,
    )?;
    let mut params = IgdrParams::random(c, ci, 0.3, rng);
    params.conv_gamma.bias.data_mut().iter_mut().for_each(|v| *v += 1.0);
    Ok((inputs, params))
}
