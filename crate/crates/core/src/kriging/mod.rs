//! Spectral kriging kernels.
//!
//! The kriging matrix `Λ` solves `A Γ Aᵀ Λ = A Γ`. With a stationary texture
//! and the stride-`r` zoom-out, `Λᵀ` restricted to each of the `r²` subgrids
//! of the HR grid is a convolution on the LR torus, so `Λ` is fully described
//! by `r²` LR kernels `λ(k,l)`. Each solves `κ ⋆ λ(k,l) = b(k,l)` where
//! `κ = S(c ⋆ γ ⋆ č)` is the kernel of `A Γ Aᵀ` and
//! `b(k,l) = S((c ⋆ γ)(· - k, · - l))` is column `(k,l)` of `A Γ`. These are
//! pseudo-inverted frequency by frequency.

pub mod cache;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::adsn::Texton;
use crate::degrade::DegradeOperator;
use crate::error::{Error, Result};
use crate::grid::{
    ensure_divisible, forward_plane, inverse_plane_real, scatter_plane, GridImage, SpectralImage,
    SubgridIndex,
};
use crate::periodic_smooth::periodic_component;

/// Default relative cutoff on `|κ̂|` below which a frequency is left unsolved.
pub const DEFAULT_TOL_REL: f64 = 1e-10;

/// Covariance kernels shared by every kriging system of one model.
#[derive(Clone, Debug)]
pub struct KrigingPrecomputation {
    /// `γ = p ⋆ p̌` with `p` the texton kernel the model was built from.
    pub gamma: GridImage,
    /// `c ⋆ γ` on the HR grid.
    pub c_gamma: GridImage,
    /// `κ = S(c ⋆ γ ⋆ č)` on the LR grid.
    pub kappa: GridImage,
    r: usize,
}

impl KrigingPrecomputation {
    pub fn factor(&self) -> usize {
        self.r
    }
}

/// The `r²` LR kernels determining `Λ`, stored as spectra.
#[derive(Clone, Debug, PartialEq)]
pub struct KrigingKernels {
    pub(crate) r: usize,
    pub(crate) hr_dims: (usize, usize),
    pub(crate) tol_rel: f64,
    /// Indexed by [`SubgridIndex::linear`]; each holds every channel.
    pub(crate) lambda_hat: Vec<SpectralImage>,
    /// Per channel, true where `κ̂` was treated as zero.
    pub(crate) zero_mask: Vec<Vec<bool>>,
    pub(crate) kappa_hat: SpectralImage,
}

impl KrigingKernels {
    pub fn factor(&self) -> usize {
        self.r
    }

    pub fn hr_dims(&self) -> (usize, usize) {
        self.hr_dims
    }

    pub fn lr_dims(&self) -> (usize, usize) {
        (self.hr_dims.0 / self.r, self.hr_dims.1 / self.r)
    }

    pub fn channels(&self) -> usize {
        self.kappa_hat.channels()
    }

    pub fn tol_rel(&self) -> f64 {
        self.tol_rel
    }

    pub fn lambda_hat(&self, s: SubgridIndex) -> &SpectralImage {
        &self.lambda_hat[s.linear()]
    }

    pub fn zero_mask(&self, channel: usize) -> &[bool] {
        &self.zero_mask[channel]
    }

    pub fn kappa_hat(&self) -> &SpectralImage {
        &self.kappa_hat
    }

    /// Spatial kernel `λ(k,l)`, i.e. column `(k,l)` of `Λ` on the LR grid.
    pub fn lambda(&self, s: SubgridIndex) -> GridImage {
        let (ml, nl) = self.lr_dims();
        let spec = &self.lambda_hat[s.linear()];
        let planes: Vec<GridImage> = (0..self.channels())
            .map(|c| GridImage::from_raw(ml, nl, 1, inverse_plane_real(spec.channel(c), ml, nl)))
            .collect();
        GridImage::from_channels(&planes).expect("valid channel count")
    }

    /// `Tr(Λᵀ A Γ Aᵀ Λ)` per channel, from `Σ_{k,l} Σ_ξ |λ̂(k,l)(ξ)|² κ̂(ξ)`.
    pub fn explained_variance_trace(&self) -> Vec<f64> {
        (0..self.channels())
            .map(|c| {
                let kappa = self.kappa_hat.channel(c);
                self.lambda_hat
                    .iter()
                    .map(|l| {
                        l.channel(c)
                            .iter()
                            .zip(kappa)
                            .map(|(z, k)| z.norm_sqr() * k.re)
                            .sum::<f64>()
                    })
                    .sum()
            })
            .collect()
    }
}

/// Builds `γ`, `c ⋆ γ` and `κ` from the periodic component of the texton.
pub fn precompute_kernels(t: &Texton, op: &DegradeOperator) -> Result<KrigingPrecomputation> {
    precompute_from_kernel(&periodic_component(&t.kernel), op)
}

/// As [`precompute_kernels`] but uses `kernel` verbatim as the texton.
pub fn precompute_from_kernel(
    kernel: &GridImage,
    op: &DegradeOperator,
) -> Result<KrigingPrecomputation> {
    let (m, n) = kernel.dims();
    let r = op.factor();
    ensure_divisible(m, n, r)?;
    let c_hat = op.kernel_spectrum(m, n);
    let (ml, nl) = (m / r, n / r);
    let channels = kernel.channels();
    let mut gamma = GridImage::zeros(m, n, channels);
    let mut c_gamma = GridImage::zeros(m, n, channels);
    let mut kappa = GridImage::zeros(ml, nl, channels);
    for ch in 0..channels {
        let t_hat = forward_plane(kernel.channel(ch), m, n);
        let g_hat: Vec<Complex64> = t_hat.iter().map(|z| Complex64::new(z.norm_sqr(), 0.0)).collect();
        let cg_hat: Vec<Complex64> = g_hat.iter().zip(&c_hat).map(|(g, c)| g * c).collect();
        let full_kappa: Vec<Complex64> = g_hat
            .iter()
            .zip(&c_hat)
            .map(|(g, c)| g * c.norm_sqr())
            .collect();
        gamma
            .channel_mut(ch)
            .copy_from_slice(&inverse_plane_real(&g_hat, m, n));
        c_gamma
            .channel_mut(ch)
            .copy_from_slice(&inverse_plane_real(&cg_hat, m, n));
        let full = inverse_plane_real(&full_kappa, m, n);
        let dst = kappa.channel_mut(ch);
        for i in 0..ml {
            for j in 0..nl {
                dst[i * nl + j] = full[i * r * n + j * r];
            }
        }
    }
    Ok(KrigingPrecomputation {
        gamma,
        c_gamma,
        kappa,
        r,
    })
}

/// Right-hand side `b(k,l)(x) = (c ⋆ γ)(r·x - (k,l))` for one channel.
fn rhs_plane(c_gamma: &GridImage, ch: usize, s: SubgridIndex) -> Vec<f64> {
    let (m, n) = c_gamma.dims();
    let r = s.r();
    let (ml, nl) = (m / r, n / r);
    let plane = c_gamma.channel(ch);
    let mut out = Vec::with_capacity(ml * nl);
    for i in 0..ml {
        let row = (i * r + m - s.k()) % m;
        for j in 0..nl {
            let col = (j * r + n - s.l()) % n;
            out.push(plane[row * n + col]);
        }
    }
    out
}

/// Solves the `r²` per-subgrid systems by spectral pseudo-inversion.
pub fn solve_kriging_kernels(
    pre: &KrigingPrecomputation,
    op: &DegradeOperator,
    tol_rel: f64,
) -> Result<KrigingKernels> {
    let r = op.factor();
    if r != pre.r {
        return Err(Error::size(format!("factor {}", pre.r), format!("factor {r}")));
    }
    let hr_dims = pre.gamma.dims();
    let (ml, nl) = pre.kappa.dims();
    let channels = pre.kappa.channels();

    let mut kappa_hat = Vec::with_capacity(ml * nl * channels);
    let mut zero_mask = Vec::with_capacity(channels);
    for ch in 0..channels {
        let kh = forward_plane(pre.kappa.channel(ch), ml, nl);
        let max = kh.iter().fold(0.0f64, |a, z| a.max(z.norm()));
        if max == 0.0 || !max.is_finite() {
            return Err(Error::DegenerateModel);
        }
        zero_mask.push(kh.iter().map(|z| z.norm() <= tol_rel * max).collect::<Vec<_>>());
        kappa_hat.extend(kh);
    }
    let kappa_hat = SpectralImage::from_raw(ml, nl, channels, kappa_hat);

    let shifts: Vec<SubgridIndex> = SubgridIndex::all(r).collect();
    let lambda_hat: Vec<SpectralImage> = shifts
        .par_iter()
        .map(|&s| {
            let mut data = Vec::with_capacity(ml * nl * channels);
            for ch in 0..channels {
                let b_hat = forward_plane(&rhs_plane(&pre.c_gamma, ch, s), ml, nl);
                let kh = kappa_hat.channel(ch);
                let mask = &zero_mask[ch];
                let b_max = b_hat.iter().fold(0.0f64, |a, z| a.max(z.norm()));
                let leak = b_hat
                    .iter()
                    .zip(mask)
                    .filter(|(_, &m)| m)
                    .fold(0.0f64, |a, (z, _)| a.max(z.norm()));
                if leak > tol_rel.sqrt() * b_max {
                    log::warn!(
                        "kriging system ({}, {}) channel {ch}: right-hand side {leak:e} on \
                         frequencies where the covariance vanishes",
                        s.k(),
                        s.l()
                    );
                }
                data.extend(b_hat.iter().zip(kh).zip(mask).map(|((b, k), &m)| {
                    if m {
                        Complex64::default()
                    } else {
                        b / k.re
                    }
                }));
            }
            SpectralImage::from_raw(ml, nl, channels, data)
        })
        .collect();

    Ok(KrigingKernels {
        r,
        hr_dims,
        tol_rel,
        lambda_hat,
        zero_mask,
        kappa_hat,
    })
}

/// `Λᵀ y` restricted to subgrid `s`, from the spectrum of `y` (one channel).
pub(crate) fn kriging_patch(kk: &KrigingKernels, ch: usize, y_hat: &[Complex64], s: SubgridIndex) -> Vec<f64> {
    let (ml, nl) = kk.lr_dims();
    let lam = kk.lambda_hat[s.linear()].channel(ch);
    let prod: Vec<Complex64> = y_hat.iter().zip(lam).map(|(y, l)| y * l.conj()).collect();
    inverse_plane_real(&prod, ml, nl)
}

/// Kriging component `Λᵀ y` on the HR grid.
pub fn apply_kriging(kk: &KrigingKernels, y: &GridImage) -> Result<GridImage> {
    let (ml, nl) = kk.lr_dims();
    if y.dims() != (ml, nl) || y.channels() != kk.channels() {
        return Err(Error::size(
            format!("{ml}x{nl}x{}", kk.channels()),
            y.shape_string(),
        ));
    }
    let (m, n) = kk.hr_dims;
    let mut out = GridImage::zeros(m, n, y.channels());
    for ch in 0..y.channels() {
        let y_hat = forward_plane(y.channel(ch), ml, nl);
        let plane = out.channel_mut(ch);
        for s in SubgridIndex::all(kk.r) {
            scatter_plane(plane, n, &kriging_patch(kk, ch, &y_hat, s), s);
        }
    }
    Ok(out)
}
