use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::grid::GridImage;

/// Uniform `[-1, 1)` pixels, deterministic in `seed`.
pub fn random_image(m: usize, n: usize, channels: usize, seed: u64) -> GridImage {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let data = (0..m * n * channels)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    GridImage::new(m, n, channels, data).unwrap()
}

pub fn max_abs_diff(a: &GridImage, b: &GridImage) -> f64 {
    assert_eq!(a.shape_string(), b.shape_string());
    a.data()
        .iter()
        .zip(b.data())
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
