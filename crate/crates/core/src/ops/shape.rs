use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Concatenates two `[B, C_i, H, W]` tensors along the channel axis.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (batch, ca, h, w) = a.dims4("concat_channels")?;
    let (bb, cb, hb, wb) = b.dims4("concat_channels")?;
    if (bb, hb, wb) != (batch, h, w) {
        return Err(Error::shape(
            "concat_channels",
            "batch/spatial extents",
            format!("{:?}", (batch, h, w)),
            format!("{:?}", (bb, hb, wb)),
        ));
    }
    let plane = h * w;
    let mut out = Vec::with_capacity(a.len() + b.len());
    for n in 0..batch {
        out.extend_from_slice(&a.data()[n * ca * plane..][..ca * plane]);
        out.extend_from_slice(&b.data()[n * cb * plane..][..cb * plane]);
    }
    Tensor::new(vec![batch, ca + cb, h, w], out)
}

/// Inverse of [`concat_channels`]: the first `first` channels, then the rest.
pub fn split_channels(x: &Tensor, first: usize) -> Result<(Tensor, Tensor)> {
    let (batch, c, h, w) = x.dims4("split_channels")?;
    if first == 0 || first >= c {
        return Err(Error::invalid(
            "split_channels",
            format!("split point {first} outside 1..{c}"),
        ));
    }
    let plane = h * w;
    let rest = c - first;
    let mut a = Vec::with_capacity(batch * first * plane);
    let mut b = Vec::with_capacity(batch * rest * plane);
    for n in 0..batch {
        let chunk = &x.data()[n * c * plane..][..c * plane];
        a.extend_from_slice(&chunk[..first * plane]);
        b.extend_from_slice(&chunk[first * plane..]);
    }
    Ok((
        Tensor::new(vec![batch, first, h, w], a)?,
        Tensor::new(vec![batch, rest, h, w], b)?,
    ))
}

/// Sums `[B, N, H, W]` over axis 1, keeping it: `[B, 1, H, W]`.
pub fn sum_channels(x: &Tensor) -> Result<Tensor> {
    let (batch, n, h, w) = x.dims4("sum_channels")?;
    let plane = h * w;
    let mut out = vec![0.0; batch * plane];
    for b in 0..batch {
        for k in 0..n {
            let src = &x.data()[(b * n + k) * plane..][..plane];
            for (o, &v) in out[b * plane..][..plane].iter_mut().zip(src) {
                *o += v;
            }
        }
    }
    Tensor::new(vec![batch, 1, h, w], out)
}

/// Backward of [`sum_channels`]: copies each `[B, 1, H, W]` plane `n` times.
pub fn broadcast_channels(x: &Tensor, n: usize) -> Result<Tensor> {
    let (batch, one, h, w) = x.dims4("broadcast_channels")?;
    if one != 1 {
        return Err(Error::shape("broadcast_channels", "channels (axis 1)", 1, one));
    }
    let plane = h * w;
    let mut out = Vec::with_capacity(batch * n * plane);
    for b in 0..batch {
        for _ in 0..n {
            out.extend_from_slice(&x.data()[b * plane..][..plane]);
        }
    }
    Tensor::new(vec![batch, n, h, w], out)
}
