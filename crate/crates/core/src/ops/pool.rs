use crate::error::Result;
use crate::tensor::Tensor;

/// Per-channel spatial mean: `[N, C, H, W] -> [N, C]`.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = input.dims4("global_avg_pool")?;
    let area = (h * w) as f64;
    let out = input
        .data()
        .chunks_exact(h * w)
        .map(|plane| plane.iter().sum::<f64>() / area)
        .collect();
    Tensor::new(vec![n, c], out)
}

pub fn global_avg_pool_backward(input_shape: &[usize], grad: &Tensor) -> Result<Tensor> {
    let probe = Tensor::zeros(input_shape);
    let (n, c, h, w) = probe.dims4("global_avg_pool_backward")?;
    grad.expect_shape("global_avg_pool_backward", "grad", &[n, c])?;
    let area = (h * w) as f64;
    let data = grad
        .data()
        .iter()
        .flat_map(|&g| std::iter::repeat_n(g / area, h * w))
        .collect();
    Tensor::new(input_shape.to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_and_simple_mean() {
        let p = global_avg_pool(&Tensor::full(&[2, 3, 4, 5], 1.75)).unwrap();
        assert!(p.data().iter().all(|&v| (v - 1.75).abs() < 1e-15));
        let q = global_avg_pool(&Tensor::new(vec![1, 1, 2, 2], vec![0.0, 0.0, 2.0, 2.0]).unwrap()).unwrap();
        assert_eq!(q.item(), 1.0);
    }

    #[test]
    fn backward_spreads_evenly() {
        let g = global_avg_pool_backward(&[1, 2, 2, 2], &Tensor::new(vec![1, 2], vec![4.0, 8.0]).unwrap()).unwrap();
        assert_eq!(g.data(), &[1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
    }
}
