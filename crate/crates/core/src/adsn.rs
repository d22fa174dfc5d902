//! Asymptotic discrete spot noise: a stationary Gaussian texture `X = t ⋆ W`
//! driven by white noise `W` and a zero-sum texton `t`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::{conv2_periodic, flip, forward_plane, inverse_plane_real, GridImage};

/// Name of the noise generator, recorded in run manifests.
pub const NOISE_GENERATOR: &str =
    "ChaCha20 (rand_chacha 0.9, seed_from_u64) + ziggurat StandardNormal (rand_distr 0.5)";

/// Texton `t = (U - m) / sqrt(MN)` of a source image, with the removed mean.
#[derive(Clone, Debug, PartialEq)]
pub struct Texton {
    pub kernel: GridImage,
    pub source_mean: Vec<f64>,
}

impl Texton {
    pub fn dims(&self) -> (usize, usize) {
        self.kernel.dims()
    }

    pub fn channels(&self) -> usize {
        self.kernel.channels()
    }
}

pub fn compute_texton(u: &GridImage) -> Texton {
    let means = u.channel_means();
    let norm = 1.0 / (u.plane_len() as f64).sqrt();
    let neg: Vec<f64> = means.iter().map(|m| -m).collect();
    let mut kernel = u.offset_channels(&neg).scaled(norm);
    for (c, m) in means.iter().enumerate() {
        // A constant channel leaves only rounding error from the mean.
        let plane = kernel.channel_mut(c);
        let spread = plane.iter().fold(0.0f64, |a, v| a.max(v.abs())) / norm;
        if spread <= 1e-12 * m.abs() {
            plane.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Texton {
        kernel,
        source_mean: means,
    }
}

/// Covariance kernel `γ = t ⋆ flip(t)`, per channel.
pub fn adsn_covariance_kernel(t: &Texton) -> GridImage {
    conv2_periodic(&t.kernel, &flip(&t.kernel)).expect("same shape")
}

/// `X_c = t_c ⋆ w` for every channel `c`, all channels sharing one noise field.
pub fn adsn_sample(t: &Texton, w: &GridImage) -> Result<GridImage> {
    if w.channels() != 1 || w.dims() != t.dims() {
        return Err(Error::size(
            format!("{}x{}x1", t.dims().0, t.dims().1),
            w.shape_string(),
        ));
    }
    let (m, n) = w.dims();
    let w_hat = forward_plane(w.channel(0), m, n);
    let mut out = GridImage::zeros(m, n, t.channels());
    for c in 0..t.channels() {
        let mut s = forward_plane(t.kernel.channel(c), m, n);
        s.iter_mut().zip(&w_hat).for_each(|(a, b)| *a *= b);
        out.channel_mut(c)
            .copy_from_slice(&inverse_plane_real(&s, m, n));
    }
    Ok(out)
}

/// I.i.d. standard normal field, fully determined by `seed`.
pub fn draw_standard_noise(m: usize, n: usize, seed: u64) -> GridImage {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let data = (0..m * n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    GridImage::from_raw(m, n, 1, data)
}
