use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use super::tensor::Tensor;
use super::ModelError;

/// Bound of the He-uniform distribution, `sqrt(6 / fan_in)`.
pub fn he_uniform_limit(fan_in: usize) -> Result<f64, ModelError> {
    if fan_in == 0 {
        return Err(ModelError::InvalidFanIn);
    }
    Ok((6.0 / fan_in as f64).sqrt())
}

/// I.i.d. samples from `U(−L, L)` with `L = sqrt(6 / fan_in)`.
pub fn he_uniform_init(fan_in: usize, shape: &[usize], seed: u64) -> Result<Tensor, ModelError> {
    let limit = he_uniform_limit(fan_in)?;
    let dist = Uniform::new(-limit, limit).expect("limit is positive and finite");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| dist.sample(&mut rng)).collect())
}

/// Per-tensor seed derived from a model seed and the tensor's position.
pub(crate) fn tensor_seed(model_seed: u64, index: usize) -> u64 {
    // splitmix64 finaliser
    let mut z = model_seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
