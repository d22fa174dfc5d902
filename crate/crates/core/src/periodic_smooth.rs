//! Periodic-plus-smooth decomposition (Moisan).
//!
//! An image `u` splits as `u = p + s` where `p` has no jumps across the torus
//! seams and `s` is a smooth, zero-mean correction. `s` solves the periodic
//! Poisson problem `Δ s = v`, where `v` collects the opposite-edge differences
//! of `u`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::grid::{forward_plane, inverse_plane_real, GridImage};

#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicSmoothPair {
    pub periodic: GridImage,
    pub smooth: GridImage,
}

/// Decomposes each channel independently.
pub fn periodic_smooth_decompose(u: &GridImage) -> PeriodicSmoothPair {
    let (m, n) = u.dims();
    let mut smooth = GridImage::zeros(m, n, u.channels());
    for c in 0..u.channels() {
        let s = smooth_plane(u.channel(c), m, n);
        smooth.channel_mut(c).copy_from_slice(&s);
    }
    let periodic = u.sub(&smooth).expect("same shape");
    PeriodicSmoothPair { periodic, smooth }
}

/// Periodic component only.
pub fn periodic_component(u: &GridImage) -> GridImage {
    periodic_smooth_decompose(u).periodic
}

fn boundary_image(u: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; m * n];
    for j in 0..n {
        let d = u[(m - 1) * n + j] - u[j];
        v[j] += d;
        v[(m - 1) * n + j] -= d;
    }
    for i in 0..m {
        let d = u[i * n + n - 1] - u[i * n];
        v[i * n] += d;
        v[i * n + n - 1] -= d;
    }
    v
}

fn smooth_plane(u: &[f64], m: usize, n: usize) -> Vec<f64> {
    let v = boundary_image(u, m, n);
    let mut spec = forward_plane(&v, m, n);
    let cos_m: Vec<f64> = (0..m).map(|q| 2.0 * (2.0 * PI * q as f64 / m as f64).cos()).collect();
    let cos_n: Vec<f64> = (0..n).map(|q| 2.0 * (2.0 * PI * q as f64 / n as f64).cos()).collect();
    for q1 in 0..m {
        for q2 in 0..n {
            let z = &mut spec[q1 * n + q2];
            // Eigenvalue of the periodic 5-point Laplacian; zero only at DC.
            let eig = cos_m[q1] + cos_n[q2] - 4.0;
            *z = if q1 == 0 && q2 == 0 {
                Complex64::default()
            } else {
                *z / eig
            };
        }
    }
    inverse_plane_real(&spec, m, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::dft2;
    use crate::test_util::{max_abs_diff, random_image};

    #[test]
    fn constant_image_is_already_periodic() {
        let u = GridImage::constant(7, 9, 1, 42.0);
        let d = periodic_smooth_decompose(&u);
        assert!(d.smooth.max_abs() < 1e-12);
        assert!(max_abs_diff(&d.periodic, &u) < 1e-12);
    }

    #[test]
    fn reconstruction_and_zero_mean() {
        let u = random_image(12, 10, 3, 7).scaled(100.0);
        let d = periodic_smooth_decompose(&u);
        assert!(max_abs_diff(&d.periodic.add(&d.smooth).unwrap(), &u) <= 1e-10);
        for (ms, (mp, mu)) in d
            .smooth
            .channel_means()
            .iter()
            .zip(d.periodic.channel_means().iter().zip(u.channel_means()))
        {
            assert!(ms.abs() <= 1e-10);
            assert!((mp - mu).abs() <= 1e-10);
        }
    }

    /// The periodic component is characterized by a periodic Laplacian equal
    /// to the Laplacian of `u` restricted to in-domain neighbours.
    #[test]
    fn periodic_laplacian_matches_interior_laplacian() {
        let u = random_image(16, 12, 1, 3).scaled(50.0);
        let p = periodic_component(&u);
        let (m, n) = u.dims();
        for i in 0..m as isize {
            for j in 0..n as isize {
                let mut per = -4.0 * p.at(0, i, j);
                let mut int = 0.0;
                for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                    per += p.at(0, i + di, j + dj);
                    let (a, b) = (i + di, j + dj);
                    if (0..m as isize).contains(&a) && (0..n as isize).contains(&b) {
                        int += u.at(0, a, b) - u.at(0, i, j);
                    }
                }
                assert!((per - int).abs() <= 1e-9 * u.max_abs());
            }
        }
    }

    /// A second pass still moves the image: the seams of `per(u)` are
    /// smaller than those of `u` but not zero.
    #[test]
    fn second_pass_shrinks_seams_further() {
        let seam = |x: &GridImage| {
            let (m, n) = x.dims();
            let rows: f64 = (0..n).map(|j| (x.get(0, 0, j) - x.get(0, m - 1, j)).abs()).sum();
            let cols: f64 = (0..m).map(|i| (x.get(0, i, 0) - x.get(0, i, n - 1)).abs()).sum();
            rows + cols
        };
        let u = random_image(16, 12, 1, 3).scaled(50.0);
        let p = periodic_component(&u);
        let pp = periodic_component(&p);
        assert!(seam(&p) < 0.6 * seam(&u));
        assert!(seam(&pp) < seam(&p));
        assert!(periodic_smooth_decompose(&p).smooth.max_abs() > 1e-3 * u.max_abs());
    }

    #[test]
    fn ramp_loses_seam_energy() {
        let u = GridImage::from_fn(8, 8, |_, j| j as f64);
        let d = periodic_smooth_decompose(&u);
        assert!(d.smooth.max_abs() > 0.1);
        let row_energy = |img: &GridImage| {
            let s = dft2(img);
            (1..8).map(|q| s.get(0, 0, q).norm_sqr()).sum::<f64>()
        };
        let before = row_energy(&u);
        let after = row_energy(&d.periodic);
        assert!(after < before, "periodic {after} vs input {before}");
        // The periodic part of a ramp has no jump across the seam larger than
        // its interior steps.
        let p = &d.periodic;
        let seam = (p.get(0, 3, 7) - p.get(0, 3, 0)).abs();
        assert!(seam < 1.0, "seam jump {seam}");
    }

    #[test]
    fn linear() {
        let a = random_image(9, 11, 1, 1);
        let b = random_image(9, 11, 1, 2);
        let combo = a.scaled(2.5).add(&b.scaled(-0.75)).unwrap();
        let lhs = periodic_component(&combo);
        let rhs = periodic_component(&a)
            .scaled(2.5)
            .add(&periodic_component(&b).scaled(-0.75))
            .unwrap();
        assert!(max_abs_diff(&lhs, &rhs) <= 1e-9);
    }
}
