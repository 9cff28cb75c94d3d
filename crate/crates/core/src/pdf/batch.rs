use crate::error::{Error, Result};
use crate::pdf::DepthBinSpec;
use crate::tensor::Tensor;

/// A predicted depth distribution with its sparse and dense supervision.
///
/// Masks are `{0, 1}` tensors; any value above one half counts as set.
/// `instance_masks` is `None` when the frame has no annotated instances.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthSupervisionBatch {
    /// `[B, D, H, W]`, a distribution over bins at each pixel.
    pub prob: Tensor,
    /// `[B, H, W]` metres.
    pub d_sparse: Tensor,
    pub mask_sparse: Tensor,
    /// `[B, H, W]` metres.
    pub d_dense: Tensor,
    pub mask_dense: Tensor,
    /// `[B, K, H, W]`.
    pub instance_masks: Option<Tensor>,
}

pub(crate) fn is_set(v: f64) -> bool {
    v > 0.5
}

impl DepthSupervisionBatch {
    pub fn new(
        prob: Tensor,
        d_sparse: Tensor,
        mask_sparse: Tensor,
        d_dense: Tensor,
        mask_dense: Tensor,
        instance_masks: Option<Tensor>,
    ) -> Result<Self> {
        const OP: &str = "DepthSupervisionBatch";
        let (b, _, h, w) = prob.dims4(OP)?;
        for (name, t) in [
            ("d_sparse", &d_sparse),
            ("mask_sparse", &mask_sparse),
            ("d_dense", &d_dense),
            ("mask_dense", &mask_dense),
        ] {
            t.expect_shape(OP, name, &[b, h, w])?;
        }
        if let Some(m) = &instance_masks {
            let (mb, _, mh, mw) = m.dims4(OP)?;
            if (mb, mh, mw) != (b, h, w) {
                return Err(Error::shape(
                    OP,
                    "instance_masks batch/spatial extents",
                    format!("{:?}", (b, h, w)),
                    format!("{:?}", (mb, mh, mw)),
                ));
            }
        }
        Ok(DepthSupervisionBatch {
            prob,
            d_sparse,
            mask_sparse,
            d_dense,
            mask_dense,
            instance_masks,
        })
    }

    /// `(B, H, W)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.prob.shape();
        (s[0], s[2], s[3])
    }

    pub fn instance_count(&self) -> usize {
        self.instance_masks.as_ref().map_or(0, |m| m.shape()[1])
    }

    pub fn with_prob(&self, prob: Tensor) -> Result<Self> {
        prob.expect_shape("with_prob", "prob", self.prob.shape())?;
        Ok(DepthSupervisionBatch {
            prob,
            ..self.clone()
        })
    }

    /// Checks the distribution and range contracts that the constructor does
    /// not enforce (gradient checks perturb `prob` off the simplex).
    pub fn validate(&self, bins: &DepthBinSpec) -> Result<()> {
        const OP: &str = "DepthSupervisionBatch::validate";
        let (b, h, w) = self.dims();
        let d = self.prob.shape()[1];
        if d != bins.count() {
            return Err(Error::shape(OP, "bins (axis 1)", bins.count(), d));
        }
        let p = self.prob.data();
        for n in 0..b {
            for px in 0..h * w {
                let mut total = 0.0;
                for k in 0..d {
                    let v = p[(n * d + k) * h * w + px];
                    if !(v >= 0.0) {
                        return Err(Error::invalid(OP, format!("negative probability {v}")));
                    }
                    total += v;
                }
                if (total - 1.0).abs() > 1e-6 {
                    return Err(Error::invalid(OP, format!("pixel {px} of batch {n} sums to {total}")));
                }
            }
        }
        for (depth, mask, name) in [
            (&self.d_sparse, &self.mask_sparse, "sparse"),
            (&self.d_dense, &self.mask_dense, "dense"),
        ] {
            for (&dv, &mv) in depth.data().iter().zip(mask.data()) {
                if is_set(mv) && !bins.contains(dv) {
                    return Err(Error::invalid(OP, format!("{name} depth {dv} outside bin range")));
                }
            }
        }
        Ok(())
    }
}
