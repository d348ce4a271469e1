use rand::Rng;

use crate::autodiff::Tensor;

/// Glorot-uniform `fan_in x fan_out` matrix, bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::matrix(fan_in, fan_out, data).expect("shape matches data")
}

pub fn zeros_row(len: usize) -> Tensor {
    Tensor::zeros(&[1, len])
}
