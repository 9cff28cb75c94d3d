use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `[B, P, Q] x [B, Q, R] -> [B, P, R]`.
pub fn batched_matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (batch, p, q) = a.dims3("batched_matmul")?;
    let (b_batch, b_q, r) = b.dims3("batched_matmul")?;
    if b_batch != batch {
        return Err(Error::shape("batched_matmul", "batch (axis 0)", batch, b_batch));
    }
    if b_q != q {
        return Err(Error::shape("batched_matmul", "inner extent", q, b_q));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; batch * p * r];
    for n in 0..batch {
        let am = &ad[n * p * q..][..p * q];
        let bm = &bd[n * q * r..][..q * r];
        let om = &mut out[n * p * r..][..p * r];
        for i in 0..p {
            for k in 0..q {
                let av = am[i * q + k];
                if av == 0.0 {
                    continue;
                }
                for j in 0..r {
                    om[i * r + j] += av * bm[k * r + j];
                }
            }
        }
    }
    Tensor::new(vec![batch, p, r], out)
}

/// Swaps the last two axes of a rank-3 tensor.
pub fn transpose_last2(a: &Tensor) -> Result<Tensor> {
    let (batch, p, q) = a.dims3("transpose_last2")?;
    let d = a.data();
    let mut out = vec![0.0; d.len()];
    for n in 0..batch {
        for i in 0..p {
            for j in 0..q {
                out[(n * q + j) * p + i] = d[(n * p + i) * q + j];
            }
        }
    }
    Tensor::new(vec![batch, q, p], out)
}

pub fn batched_matmul_backward(a: &Tensor, b: &Tensor, grad: &Tensor) -> Result<(Tensor, Tensor)> {
    let (batch, p, _) = a.dims3("batched_matmul_backward")?;
    let r = b.dims3("batched_matmul_backward")?.2;
    grad.expect_shape("batched_matmul_backward", "grad", &[batch, p, r])?;
    let ga = batched_matmul(grad, &transpose_last2(b)?)?;
    let gb = batched_matmul(&transpose_last2(a)?, grad)?;
    Ok((ga, gb))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_by_hand() {
        let a = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(vec![1, 2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let c = batched_matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn identity_and_zero_row() {
        let mut a = Tensor::from_fn(&[2, 3, 3], |i| i as f64 - 4.0);
        for j in 0..3 {
            a.set(&[1, 2, j], 0.0);
        }
        let eye = Tensor::from_fn(&[2, 3, 3], |i| if (i % 9) % 4 == 0 { 1.0 } else { 0.0 });
        let c = batched_matmul(&a, &eye).unwrap();
        assert_eq!(c, a);
        let full = Tensor::from_fn(&[2, 3, 4], |i| i as f64 + 1.0);
        let d = batched_matmul(&a, &full).unwrap();
        assert!((0..4).all(|j| d.at(&[1, 2, j]) == 0.0));
    }

    #[test]
    fn inner_mismatch() {
        let a = Tensor::ones(&[1, 2, 3]);
        let b = Tensor::ones(&[1, 2, 3]);
        assert!(batched_matmul(&a, &b).is_err());
        assert!(batched_matmul(&a, &Tensor::ones(&[2, 3, 1])).is_err());
    }
}
