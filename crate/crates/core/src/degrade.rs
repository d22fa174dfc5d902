//! Zoom-out operator `A = S C`: periodic separable antialiasing blur followed
//! by stride-`r` subsampling.
//!
//! Phase convention: low-resolution pixel `x` is centred on high-resolution
//! position `r·x + δ` with `δ = (r - 1) / 2`, the usual pixel-centre mapping
//! `(x + 0.5)·r - 0.5`. The 1-D taps are stored as sampling offsets, so that
//!
//! ```text
//! (A u)(x₁, x₂) = Σ_a Σ_b tap(a) tap(b) u(r·x₁ + a, r·x₂ + b)
//! ```
//!
//! which makes the convolution kernel of `C` the mirrored product
//! `c(y₁, y₂) = tap(-y₁) tap(-y₂)`. Boundaries are periodic, not edge-replicated.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{ensure_divisible, forward_plane, GridImage};

#[derive(Clone, Debug, PartialEq)]
pub struct DegradeOperator {
    r: usize,
    taps: Vec<(isize, f64)>,
}

/// Keys cubic convolution kernel with `a = -0.5`.
pub fn keys_cubic(s: f64) -> f64 {
    let x = s.abs();
    if x <= 1.0 {
        1.5 * x * x * x - 2.5 * x * x + 1.0
    } else if x < 2.0 {
        -0.5 * x * x * x + 2.5 * x * x - 4.0 * x + 2.0
    } else {
        0.0
    }
}

/// Bicubic antialiasing downscale by `r`.
pub fn build_downscale_kernel(r: usize) -> Result<DegradeOperator> {
    if r == 0 {
        return Err(Error::InvalidFactor(r));
    }
    let rf = r as f64;
    let delta = (rf - 1.0) / 2.0;
    let reach = 2 * r as isize + 1;
    let mut taps: Vec<(isize, f64)> = (-reach..=reach)
        .filter(|&j| (j as f64 - delta).abs() < 2.0 * rf)
        .map(|j| (j, keys_cubic((j as f64 - delta) / rf) / rf))
        .filter(|&(_, w)| w != 0.0)
        .collect();
    let total: f64 = taps.iter().map(|t| t.1).sum();
    taps.iter_mut().for_each(|t| t.1 /= total);
    Ok(DegradeOperator { r, taps })
}

impl DegradeOperator {
    /// Operator with explicit sampling-offset taps (normalized to unit sum).
    pub fn from_taps(r: usize, taps: Vec<(isize, f64)>) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidFactor(r));
        }
        let total: f64 = taps.iter().map(|t| t.1).sum();
        if taps.is_empty() || total == 0.0 || !total.is_finite() {
            return Err(Error::size("taps with non-zero sum", format!("{taps:?}")));
        }
        let taps = taps.into_iter().map(|(j, w)| (j, w / total)).collect();
        Ok(Self { r, taps })
    }

    pub fn factor(&self) -> usize {
        self.r
    }

    /// `(offset, weight)` pairs of the 1-D kernel, in sampling-offset form.
    pub fn taps(&self) -> &[(isize, f64)] {
        &self.taps
    }

    /// Convolution kernel `c` of `C` embedded on the `m x n` torus.
    pub fn kernel_2d(&self, m: usize, n: usize) -> GridImage {
        let mut c = GridImage::zeros(m, n, 1);
        for &(a, wa) in &self.taps {
            for &(b, wb) in &self.taps {
                let i = (-a).rem_euclid(m as isize) as usize;
                let j = (-b).rem_euclid(n as isize) as usize;
                let v = c.get(0, i, j) + wa * wb;
                c.set(0, i, j, v);
            }
        }
        c
    }

    /// DFT of [`Self::kernel_2d`].
    pub fn kernel_spectrum(&self, m: usize, n: usize) -> Vec<Complex64> {
        forward_plane(self.kernel_2d(m, n).channel(0), m, n)
    }
}

/// `A u`; channels are degraded independently.
pub fn apply_degrade(op: &DegradeOperator, u: &GridImage) -> Result<GridImage> {
    let (m, n) = u.dims();
    let r = op.r;
    ensure_divisible(m, n, r)?;
    let (ml, nl) = (m / r, n / r);
    let mut out = GridImage::zeros(ml, nl, u.channels());
    let mut rows = vec![0.0; m * nl];
    for c in 0..u.channels() {
        let plane = u.channel(c);
        for i in 0..m {
            let src = &plane[i * n..(i + 1) * n];
            for jl in 0..nl {
                rows[i * nl + jl] = op
                    .taps
                    .iter()
                    .map(|&(b, w)| w * src[(r as isize * jl as isize + b).rem_euclid(n as isize) as usize])
                    .sum();
            }
        }
        let dst = out.channel_mut(c);
        for il in 0..ml {
            for &(a, w) in &op.taps {
                let i = (r as isize * il as isize + a).rem_euclid(m as isize) as usize;
                let src = &rows[i * nl..(i + 1) * nl];
                for (d, s) in dst[il * nl..(il + 1) * nl].iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }
    Ok(out)
}

/// `Aᵀ y` for a declared high-resolution size: zero-insertion upsampling
/// followed by periodic correlation with `c`.
pub fn apply_degrade_adjoint(
    op: &DegradeOperator,
    y: &GridImage,
    hr_dims: (usize, usize),
) -> Result<GridImage> {
    let (m, n) = hr_dims;
    let r = op.r;
    ensure_divisible(m, n, r)?;
    let (ml, nl) = (m / r, n / r);
    if y.dims() != (ml, nl) {
        return Err(Error::size(format!("{ml}x{nl}"), format!("{}x{}", y.height(), y.width())));
    }
    let mut out = GridImage::zeros(m, n, y.channels());
    let mut rows = vec![0.0; m * nl];
    for c in 0..y.channels() {
        rows.iter_mut().for_each(|v| *v = 0.0);
        let src = y.channel(c);
        for il in 0..ml {
            for &(a, w) in &op.taps {
                let i = (r as isize * il as isize + a).rem_euclid(m as isize) as usize;
                for (d, s) in rows[i * nl..(i + 1) * nl].iter_mut().zip(&src[il * nl..(il + 1) * nl]) {
                    *d += w * s;
                }
            }
        }
        let dst = out.channel_mut(c);
        for i in 0..m {
            for jl in 0..nl {
                let v = rows[i * nl + jl];
                for &(b, w) in &op.taps {
                    let j = (r as isize * jl as isize + b).rem_euclid(n as isize) as usize;
                    dst[i * n + j] += w * v;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::flip;
    use crate::test_util::{max_abs_diff, random_image};

    #[test]
    fn identity_for_unit_factor() {
        let op = build_downscale_kernel(1).unwrap();
        assert_eq!(op.taps(), &[(0, 1.0)]);
        let u = random_image(5, 7, 3, 1);
        assert_eq!(apply_degrade(&op, &u).unwrap(), u);
        let y = random_image(5, 7, 1, 2);
        assert!(max_abs_diff(&apply_degrade_adjoint(&op, &y, (5, 7)).unwrap(), &y) < 1e-15);
    }

    #[test]
    fn factor_two_taps_match_cubic() {
        // k((j - 0.5) / 2) / 2 evaluated by hand for j = -3..=4; the raw taps
        // already sum to one.
        let expected = [
            (-3, -0.01171875),
            (-2, -0.03515625),
            (-1, 0.11328125),
            (0, 0.43359375),
            (1, 0.43359375),
            (2, 0.11328125),
            (3, -0.03515625),
            (4, -0.01171875),
        ];
        let op = build_downscale_kernel(2).unwrap();
        assert_eq!(op.taps().len(), 8);
        for (got, want) in op.taps().iter().zip(expected) {
            assert_eq!(got.0, want.0);
            assert!((got.1 - want.1).abs() < 1e-15);
        }
        for &(j, w) in op.taps() {
            let mirror = op.taps().iter().find(|t| t.0 == 1 - j).unwrap();
            assert_eq!(w, mirror.1);
        }
    }

    #[test]
    fn taps_sum_to_one_and_stay_in_support() {
        for r in 1..=16usize {
            let op = build_downscale_kernel(r).unwrap();
            let sum: f64 = op.taps().iter().map(|t| t.1).sum();
            assert!((sum - 1.0).abs() <= 1e-12, "r={r}");
            let delta = (r as f64 - 1.0) / 2.0;
            assert!(op.taps().iter().all(|&(j, _)| (j as f64 - delta).abs() < 2.0 * r as f64));
        }
        assert!(matches!(build_downscale_kernel(0), Err(Error::InvalidFactor(0))));
    }

    #[test]
    fn constant_maps_to_constant() {
        for r in [2, 3, 4] {
            let op = build_downscale_kernel(r).unwrap();
            let lr = apply_degrade(&op, &GridImage::constant(12 * r, 8 * r, 1, 17.0)).unwrap();
            assert_eq!(lr.dims(), (12, 8));
            assert!(lr.data().iter().all(|v| (v - 17.0).abs() < 1e-12));
        }
    }

    #[test]
    fn requires_divisible_size() {
        let op = build_downscale_kernel(4).unwrap();
        assert!(matches!(
            apply_degrade(&op, &GridImage::zeros(16, 10, 1)),
            Err(Error::NotDivisible { .. })
        ));
        assert!(apply_degrade_adjoint(&op, &GridImage::zeros(3, 3, 1), (16, 16)).is_err());
    }

    #[test]
    fn adjoint_identity() {
        for r in [2, 3, 4] {
            let op = build_downscale_kernel(r).unwrap();
            let u = random_image(8 * r, 4 * r, 1, r as u64);
            let y = random_image(8, 4, 1, 100 + r as u64);
            let au = apply_degrade(&op, &u).unwrap();
            let aty = apply_degrade_adjoint(&op, &y, (8 * r, 4 * r)).unwrap();
            let lhs: f64 = au.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
            let rhs: f64 = u.data().iter().zip(aty.data()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn adjoint_of_delta_is_mirrored_kernel() {
        let op = build_downscale_kernel(2).unwrap();
        let y = GridImage::delta(8, 8, 0, 0);
        let aty = apply_degrade_adjoint(&op, &y, (16, 16)).unwrap();
        assert!(max_abs_diff(&aty, &flip(&op.kernel_2d(16, 16))) < 1e-15);
    }

    #[test]
    fn matches_convolve_then_subsample() {
        let op = build_downscale_kernel(2).unwrap();
        let u = random_image(8, 8, 1, 3);
        let blurred = crate::grid::conv2_periodic(&u, &op.kernel_2d(8, 8)).unwrap();
        let expect = crate::grid::subsample(&blurred, 2).unwrap();
        assert!(max_abs_diff(&apply_degrade(&op, &u).unwrap(), &expect) < 1e-12);
    }

    #[test]
    fn separable_embedding() {
        let op = build_downscale_kernel(3).unwrap();
        let c = op.kernel_2d(24, 18);
        let tap = |j: isize| op.taps().iter().find(|t| t.0 == j).map_or(0.0, |t| t.1);
        for i in -8..8isize {
            for j in -8..8isize {
                assert!((c.at(0, i, j) - tap(-i) * tap(-j)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn translation_covariance_and_linearity() {
        let op = build_downscale_kernel(4).unwrap();
        let u = random_image(32, 16, 1, 8);
        let v = random_image(32, 16, 1, 9);
        let a = apply_degrade(&op, &u.shifted(8, 12)).unwrap();
        let b = apply_degrade(&op, &u).unwrap().shifted(2, 3);
        assert!(max_abs_diff(&a, &b) < 1e-12);
        let lin = apply_degrade(&op, &u.scaled(2.0).add(&v).unwrap()).unwrap();
        let sep = apply_degrade(&op, &u)
            .unwrap()
            .scaled(2.0)
            .add(&apply_degrade(&op, &v).unwrap())
            .unwrap();
        assert!(max_abs_diff(&lin, &sep) < 1e-12);
    }
}
