use crate::error::Result;
use crate::tensor::Tensor;

/// One in-bounds neighbour of a bilinear sample: flat spatial index, its
/// interpolation weight and the weight's partial derivatives in y and x.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tap {
    pub index: usize,
    pub weight: f64,
    pub dweight_dy: f64,
    pub dweight_dx: f64,
}

/// Neighbours of `(y, x)` on an `h x w` grid. Neighbours outside the grid are
/// dropped, which is zero padding. At most four taps.
pub fn bilinear_taps(h: usize, w: usize, y: f64, x: f64) -> impl Iterator<Item = Tap> {
    let (y0, x0) = (y.floor(), x.floor());
    let (ly, lx) = (y - y0, x - x0);
    let (hy, hx) = (1.0 - ly, 1.0 - lx);
    let corners = [
        (0, 0, hy * hx, -hx, -hy),
        (0, 1, hy * lx, -lx, hy),
        (1, 0, ly * hx, hx, -ly),
        (1, 1, ly * lx, lx, ly),
    ];
    let finite = y.is_finite() && x.is_finite();
    corners
        .into_iter()
        .filter_map(move |(dy, dx, weight, dweight_dy, dweight_dx)| {
            if !finite {
                return None;
            }
            let yy = y0 + dy as f64;
            let xx = x0 + dx as f64;
            if yy < 0.0 || xx < 0.0 || yy >= h as f64 || xx >= w as f64 {
                return None;
            }
            Some(Tap {
                index: yy as usize * w + xx as usize,
                weight,
                dweight_dy,
                dweight_dx,
            })
        })
}

/// Bilinear interpolation of a `[C, H, W]` feature at `(y, x)`; returns `[C]`.
pub fn bilinear_sample(feature: &Tensor, y: f64, x: f64) -> Result<Tensor> {
    let (c, h, w) = feature.dims3("bilinear_sample")?;
    let data = feature.data();
    let mut out = vec![0.0; c];
    for tap in bilinear_taps(h, w, y, x) {
        for (ch, o) in out.iter_mut().enumerate() {
            *o += tap.weight * data[ch * h * w + tap.index];
        }
    }
    Tensor::new(vec![c], out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleGrads {
    pub feature: Tensor,
    pub y: f64,
    pub x: f64,
}

/// Vector-Jacobian product of [`bilinear_sample`]. On an integer coordinate
/// the coordinate derivative is the one-sided slope towards the next cell.
pub fn bilinear_sample_backward(
    feature: &Tensor,
    y: f64,
    x: f64,
    grad_out: &Tensor,
) -> Result<SampleGrads> {
    let (c, h, w) = feature.dims3("bilinear_sample_backward")?;
    grad_out.expect_shape("bilinear_sample_backward", "grad_out", &[c])?;
    let data = feature.data();
    let g = grad_out.data();
    let mut gf = vec![0.0; data.len()];
    let (mut gy, mut gx) = (0.0, 0.0);
    for tap in bilinear_taps(h, w, y, x) {
        for (ch, &gc) in g.iter().enumerate() {
            let i = ch * h * w + tap.index;
            gf[i] += tap.weight * gc;
            gy += tap.dweight_dy * data[i] * gc;
            gx += tap.dweight_dx * data[i] * gc;
        }
    }
    Ok(SampleGrads {
        feature: Tensor::new(feature.shape().to_vec(), gf)?,
        y: gy,
        x: gx,
    })
}
