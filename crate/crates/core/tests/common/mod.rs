//! Synthetic textures shared by the integration suites.
#![allow(dead_code)]

use gaussian_sr_core::{conv2_periodic, draw_standard_noise, GridImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Uniform `[-1, 1)` noise, channel by channel.
pub fn random_image(m: usize, n: usize, channels: usize, seed: u64) -> GridImage {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let data = (0..m * n * channels).map(|_| rng.random_range(-1.0..1.0)).collect();
    GridImage::new(m, n, channels, data).unwrap()
}

fn torus_offset(i: usize, len: usize) -> f64 {
    let i = i as f64;
    let len = len as f64;
    if i > len / 2.0 {
        i - len
    } else {
        i
    }
}

/// Spot kernel of one of three families (anisotropic blob, windowed
/// grating, scattered spots), chosen by `seed`.
pub fn random_spot_kernel(m: usize, n: usize, channels: usize, seed: u64) -> GridImage {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed_cafe);
    let kind = seed % 3;
    let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let (s1, s2): (f64, f64) = (rng.random_range(0.7..3.0), rng.random_range(0.7..3.0));
    let freq: f64 = rng.random_range(0.08..0.35);
    let spots: Vec<(f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.random_range(-(m as f64) / 4.0..m as f64 / 4.0),
                rng.random_range(-(n as f64) / 4.0..n as f64 / 4.0),
                rng.random_range(-1.0..1.0),
            )
        })
        .collect();
    let tint: Vec<f64> = (0..channels).map(|_| rng.random_range(0.6..1.2)).collect();
    let base = GridImage::from_fn(m, n, |i, j| {
        let (y, x) = (torus_offset(i, m), torus_offset(j, n));
        let (u, v) = (x * angle.cos() + y * angle.sin(), -x * angle.sin() + y * angle.cos());
        let env = (-(u * u) / (2.0 * s1 * s1) - (v * v) / (2.0 * s2 * s2)).exp();
        match kind {
            0 => env,
            1 => env * (2.0 * std::f64::consts::PI * freq * u).cos(),
            _ => spots
                .iter()
                .map(|(a, b, w)| w * (-((y - a).powi(2) + (x - b).powi(2)) / (2.0 * s1 * s1)).exp())
                .sum(),
        }
    });
    let planes: Vec<GridImage> = tint.iter().map(|w| base.scaled(*w)).collect();
    GridImage::from_channels(&planes).unwrap()
}

/// A stationary texture on `[0, 255]`-ish values: `128 + (β ⋆ W)` rescaled
/// to standard deviation 35. `family` fixes the spot kernel, `seed` the noise.
pub fn synthetic_texture(m: usize, n: usize, channels: usize, family: u64, seed: u64) -> GridImage {
    let beta = random_spot_kernel(m, n, channels, family);
    let w = draw_standard_noise(m, n, seed);
    let x = conv2_periodic(&beta, &w).unwrap();
    let sd = (x.sum_of_squares() / x.data().len() as f64).sqrt();
    x.scaled(35.0 / sd).map(|v| v + 128.0)
}

pub fn rel_linf(a: &GridImage, b: &GridImage) -> f64 {
    let scale = b.max_abs().max(f64::MIN_POSITIVE);
    a.data()
        .iter()
        .zip(b.data())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

pub fn max_abs_diff(a: &GridImage, b: &GridImage) -> f64 {
    a.data().iter().zip(b.data()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn l2(a: &GridImage) -> f64 {
    a.sum_of_squares().sqrt()
}
