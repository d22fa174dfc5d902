//! Full-reference image quality: PSNR and SSIM.

use crate::error::{Error, Result};
use crate::grid::GridImage;

/// Side of the SSIM Gaussian window.
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub value: f64,
    pub per_channel: Vec<f64>,
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// PSNR over all channels pooled, in dB. Identical inputs give `+inf`.
pub fn psnr(a: &GridImage, b: &GridImage, peak: f64) -> Result<f64> {
    Ok(psnr_report(a, b, peak)?.value)
}

pub fn psnr_report(a: &GridImage, b: &GridImage, peak: f64) -> Result<MetricReport> {
    a.ensure_same_shape(b)?;
    let per_channel = (0..a.channels())
        .map(|c| psnr_from_mse(mse(a.channel(c), b.channel(c)), peak))
        .collect();
    Ok(MetricReport {
        value: psnr_from_mse(mse(a.data(), b.data()), peak),
        per_channel,
    })
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable periodic filtering by the normalized Gaussian window.
fn blur(plane: &[f64], m: usize, n: usize, w: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as isize;
    let mut rows = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            rows[i * n + j] = w
                .iter()
                .enumerate()
                .map(|(k, wk)| wk * plane[i * n + (j as isize + k as isize - half).rem_euclid(n as isize) as usize])
                .sum();
        }
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[i * n + j] = w
                .iter()
                .enumerate()
                .map(|(k, wk)| wk * rows[(i as isize + k as isize - half).rem_euclid(m as isize) as usize * n + j])
                .sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], m: usize, n: usize, peak: f64) -> f64 {
    let w = gaussian_window();
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mu_a = blur(a, m, n, &w);
    let mu_b = blur(b, m, n, &w);
    let aa = blur(&prod(a, a), m, n, &w);
    let bb = blur(&prod(b, b), m, n, &w);
    let ab = blur(&prod(a, b), m, n, &w);
    let mut total = 0.0;
    for p in 0..m * n {
        let (ma, mb) = (mu_a[p], mu_b[p]);
        let va = aa[p] - ma * ma;
        let vb = bb[p] - mb * mb;
        let cov = ab[p] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total / (m * n) as f64
}

/// Mean SSIM with an 11x11 Gaussian window (σ = 1.5) and periodic borders,
/// averaged over channels.
pub fn ssim(a: &GridImage, b: &GridImage, peak: f64) -> Result<f64> {
    Ok(ssim_report(a, b, peak)?.value)
}

pub fn ssim_report(a: &GridImage, b: &GridImage, peak: f64) -> Result<MetricReport> {
    a.ensure_same_shape(b)?;
    let (m, n) = a.dims();
    if m.min(n) < SSIM_WINDOW {
        return Err(Error::TooSmall {
            height: m,
            width: n,
            min: SSIM_WINDOW,
        });
    }
    let per_channel: Vec<f64> = (0..a.channels())
        .map(|c| ssim_plane(a.channel(c), b.channel(c), m, n, peak))
        .collect();
    Ok(MetricReport {
        value: per_channel.iter().sum::<f64>() / per_channel.len() as f64,
        per_channel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::random_image;
    use proptest::prelude::*;

    #[test]
    fn psnr_closed_forms() {
        let a = GridImage::zeros(4, 4, 1);
        let b = GridImage::constant(4, 4, 1, 1.0);
        assert!((psnr(&a, &b, 255.0).unwrap() - 48.130803608679106).abs() < 1e-9);
        assert_eq!(psnr(&a, &a, 255.0).unwrap(), f64::INFINITY);
        // A uniform error of 10% of the peak is 20 dB.
        let c = GridImage::constant(4, 4, 1, 25.5);
        assert!((psnr(&a, &c, 255.0).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn psnr_pools_channels() {
        let a = GridImage::zeros(2, 2, 3);
        let mut b = GridImage::zeros(2, 2, 3);
        b.channel_mut(1).iter_mut().for_each(|v| *v = 3.0);
        let r = psnr_report(&a, &b, 255.0).unwrap();
        assert!((r.value - 10.0 * (255.0f64 * 255.0 / 3.0).log10()).abs() < 1e-9);
        assert_eq!(r.per_channel[0], f64::INFINITY);
    }

    #[test]
    fn ssim_of_identical_is_one() {
        let a = random_image(16, 16, 3, 2).scaled(100.0);
        assert!((ssim(&a, &a, 255.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_of_constants_closed_form() {
        // Flat images: only the luminance term survives.
        let a = GridImage::constant(16, 16, 1, 100.0);
        let b = GridImage::constant(16, 16, 1, 110.0);
        let c1 = (0.01f64 * 255.0).powi(2);
        let expected = (2.0 * 100.0 * 110.0 + c1) / (100.0f64.powi(2) + 110.0f64.powi(2) + c1);
        assert!((ssim(&a, &b, 255.0).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = GridImage::zeros(10, 20, 1);
        assert!(matches!(ssim(&a, &a, 255.0), Err(Error::TooSmall { .. })));
        assert!(ssim(&a, &GridImage::zeros(10, 21, 1), 255.0).is_err());
    }

    #[test]
    fn window_is_normalized_and_symmetric() {
        let w = gaussian_window();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..SSIM_WINDOW {
            assert_eq!(w[i], w[SSIM_WINDOW - 1 - i]);
        }
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let a = random_image(12, 12, 1, 3).scaled(100.0);
        let n = random_image(12, 12, 1, 4);
        let mut last = f64::INFINITY;
        for s in [1.0, 2.0, 4.0, 8.0] {
            let p = psnr(&a, &a.add(&n.scaled(s)).unwrap(), 255.0).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    proptest! {
        #[test]
        fn ssim_symmetric_and_bounded(s1 in 0u64..1000, s2 in 0u64..1000) {
            let a = random_image(12, 13, 1, s1).scaled(120.0);
            let b = random_image(12, 13, 1, s2).scaled(120.0);
            let ab = ssim(&a, &b, 255.0).unwrap();
            let ba = ssim(&b, &a, 255.0).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ab <= 1.0 + 1e-12 && ab >= -1.0);
        }

        #[test]
        fn psnr_symmetric(s1 in 0u64..1000, s2 in 0u64..1000) {
            let a = random_image(5, 7, 3, s1);
            let b = random_image(5, 7, 3, s2);
            prop_assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
        }
    }
}
