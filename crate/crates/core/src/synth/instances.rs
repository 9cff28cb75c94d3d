use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

use super::scene::Rect;

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceBev {
    /// `[1, N, Hb, Wb]`.
    pub s_bev: Tensor,
    /// `[N, C_inst, R, R]`.
    pub e_features: Tensor,
    /// Boxes after jitter.
    pub boxes: Vec<Rect>,
}

/// Moves each edge by an independent integer in `[-jitter, jitter]`, then
/// clamps into the grid keeping at least one pixel.
fn jitter_box(b: &Rect, grid: (usize, usize), jitter: usize, rng: &mut SeededRng) -> Rect {
    let mut edge = |v: usize, limit: usize| {
        let d = rng.below(2 * jitter + 1) as i64 - jitter as i64;
        (v as i64 + d).clamp(0, limit as i64) as usize
    };
    let top = edge(b.top, grid.0 - 1);
    let left = edge(b.left, grid.1 - 1);
    let bottom = edge(b.bottom, grid.0).max(top + 1);
    let right = edge(b.right, grid.1).max(left + 1);
    Rect {
        top,
        left,
        bottom,
        right,
    }
}

/// Box-shaped instance score maps and per-instance RoI features.
///
/// `S_BEV[n]` is `scores[n]` inside the jittered box `n` and zero elsewhere.
/// `E_features[n]` is a Gaussian pattern seeded by `(seed, n)`, so each
/// instance keeps its pattern regardless of the others. `roi` is
/// `(C_inst, R)`.
pub fn make_instance_bev(
    boxes: &[Rect],
    scores: &[f64],
    grid: (usize, usize),
    jitter: usize,
    seed: u64,
    roi: (usize, usize),
) -> Result<InstanceBev> {
    const OP: &str = "make_instance_bev";
    if boxes.is_empty() {
        return Err(Error::invalid(OP, "need at least one box"));
    }
    if scores.len() != boxes.len() {
        return Err(Error::shape(OP, "scores", boxes.len(), scores.len()));
    }
    if let Some(s) = scores.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
        return Err(Error::invalid(OP, format!("score {s} must be finite and >= 0")));
    }
    let (gh, gw) = grid;
    if gh == 0 || gw == 0 || roi.0 == 0 || roi.1 == 0 {
        return Err(Error::invalid(OP, "grid and RoI extents must be positive"));
    }
    let n = boxes.len();
    let mut rng = SeededRng::new(seed);
    let jittered: Vec<Rect> = boxes.iter().map(|b| jitter_box(b, grid, jitter, &mut rng)).collect();
    let s_bev = Tensor::from_fn(&[1, n, gh, gw], |i| {
        let (k, y, x) = (i / (gh * gw), (i / gw) % gh, i % gw);
        if jittered[k].contains(y, x) {
            scores[k]
        } else {
            0.0
        }
    });
    let (ci, r) = roi;
    let mut e = Vec::with_capacity(n * ci * r * r);
    for k in 0..n {
        e.extend(SeededRng::derive(seed, k as u64 + 1).normal_tensor(&[ci, r, r], 1.0).into_data());
    }
    Ok(InstanceBev {
        s_bev,
        e_features: Tensor::new(vec![n, ci, r, r], e)?,
        boxes: jittered,
    })
}
