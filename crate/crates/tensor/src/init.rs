//! Deterministic weight initialization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

/// Kaiming-uniform (fan-in, ReLU gain): U(-b, b) with b = sqrt(6 / fan_in).
pub fn kaiming_uniform(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = (6.0 / fan_in as f32).sqrt();
    uniform(shape, bound, rng)
}

/// U(-bound, bound).
pub fn uniform(shape: &[usize], bound: f32, rng: &mut ChaCha8Rng) -> Tensor {
    let numel: usize = shape.iter().product();
    let data = (0..numel)
        .map(|_| rng.gen_range(-bound..bound))
        .collect::<Vec<f32>>();
    Tensor::new(shape.to_vec(), data).expect("shape/data agree")
}

/// Standard-normal draws (Box-Muller), used for noise injection.
pub fn standard_normal(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let numel: usize = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    while data.len() < numel {
        let u1: f32 = rng.gen_range(f32::EPSILON..1.0);
        let u2: f32 = rng.gen_range(0.0..1.0);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f32::consts::PI * u2;
        data.push(r * theta.cos());
        if data.len() < numel {
            data.push(r * theta.sin());
        }
    }
    Tensor::new(shape.to_vec(), data).expect("shape/data agree")
}
