//! Conditional sampling of super-resolved textures.
//!
//! A sample is `X_SR = Λᵀ y + (X̃ - Λᵀ A X̃) + m` where `y` is the LR input
//! with its per-channel mean `m` removed and `X̃` is a fresh draw from the
//! texture model. The data term and the innovation correction share a single
//! spectral pass on `ŷ - (A X̃)^`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::adsn::{compute_texton, draw_standard_noise, Texton};
use crate::degrade::{apply_degrade, build_downscale_kernel, DegradeOperator};
use crate::error::{Error, Result};
use crate::grid::{
    alias_fold, ensure_divisible, fft2_inplace, forward_plane, scatter_plane, GridImage, SubgridIndex,
};
use crate::kriging::{
    apply_kriging, kriging_patch, precompute_from_kernel, solve_kriging_kernels,
    KrigingKernels, KrigingPrecomputation, DEFAULT_TOL_REL,
};
use crate::oracle::Oracle;
use crate::periodic_smooth::periodic_component;

/// Largest HR grid for which [`mse_statistics`] also evaluates the dense trace.
pub const DENSE_TRACE_MAX_PIXELS: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelOptions {
    /// Relative cutoff on `|κ̂|` for the spectral pseudo-inverse.
    pub tol_rel: f64,
    /// Draw innovations from the periodic component of the texton, the same
    /// kernel the covariance is built from. When false the raw texton drives
    /// the innovations.
    pub consistent_texton: bool,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            tol_rel: DEFAULT_TOL_REL,
            consistent_texton: false,
        }
    }
}

/// Texture model, zoom-out operator and the kriging kernels solved for them.
#[derive(Clone, Debug)]
pub struct SRModel {
    texton: Texton,
    noise_kernel: GridImage,
    op: DegradeOperator,
    pre: KrigingPrecomputation,
    kernels: KrigingKernels,
    options: ModelOptions,
    /// Per channel, DFT of the innovation texton.
    noise_hat: Vec<Vec<Complex64>>,
    /// Per channel, DFT of `c ⋆ t` for the innovation texton.
    degraded_noise_hat: Vec<Vec<Complex64>>,
}

/// One conditional sample with its two components.
#[derive(Clone, Debug, PartialEq)]
pub struct SRSample {
    pub sr: GridImage,
    /// `Λᵀ (u_lr - m) + m`.
    pub kriging_part: GridImage,
    /// `sr - kriging_part`.
    pub innovation_part: GridImage,
    /// Per-channel LR mean that was removed and re-added.
    pub mean_offset: Vec<f64>,
    pub seed: u64,
}

/// Builds the model for SR with a reference image of the target HR size.
pub fn build_sr_model(
    reference: &GridImage,
    r: usize,
    hr_dims: (usize, usize),
    options: ModelOptions,
) -> Result<SRModel> {
    if reference.dims() != hr_dims {
        return Err(Error::size(
            format!("{}x{}", hr_dims.0, hr_dims.1),
            format!("{}x{}", reference.height(), reference.width()),
        ));
    }
    let op = build_downscale_kernel(r)?;
    SRModel::from_texton(compute_texton(reference), op, options)
}

impl SRModel {
    /// Runs the kernel solve for an explicit texton and operator.
    pub fn from_texton(texton: Texton, op: DegradeOperator, options: ModelOptions) -> Result<Self> {
        let (m, n) = texton.dims();
        ensure_divisible(m, n, op.factor())?;
        let periodic = periodic_component(&texton.kernel);
        let pre = precompute_from_kernel(&periodic, &op)?;
        let kernels = solve_kriging_kernels(&pre, &op, options.tol_rel)?;
        let noise_kernel = if options.consistent_texton {
            periodic
        } else {
            texton.kernel.clone()
        };
        let c_hat = op.kernel_spectrum(m, n);
        let noise_hat: Vec<Vec<Complex64>> = (0..texton.channels())
            .map(|c| forward_plane(noise_kernel.channel(c), m, n))
            .collect();
        let degraded_noise_hat = noise_hat
            .iter()
            .map(|t| t.iter().zip(&c_hat).map(|(a, b)| a * b).collect())
            .collect();
        Ok(Self {
            texton,
            noise_kernel,
            op,
            pre,
            kernels,
            options,
            noise_hat,
            degraded_noise_hat,
        })
    }

    pub fn texton(&self) -> &Texton {
        &self.texton
    }

    /// Kernel driving the innovation draws (raw or periodic texton).
    pub fn noise_kernel(&self) -> &GridImage {
        &self.noise_kernel
    }

    pub fn operator(&self) -> &DegradeOperator {
        &self.op
    }

    pub fn precomputation(&self) -> &KrigingPrecomputation {
        &self.pre
    }

    pub fn kernels(&self) -> &KrigingKernels {
        &self.kernels
    }

    pub fn options(&self) -> ModelOptions {
        self.options
    }

    pub fn hr_dims(&self) -> (usize, usize) {
        self.texton.dims()
    }

    pub fn lr_dims(&self) -> (usize, usize) {
        self.kernels.lr_dims()
    }

    pub fn channels(&self) -> usize {
        self.texton.channels()
    }

    /// Fixes the LR observation; the result draws samples for it.
    pub fn condition<'m>(&'m self, u_lr: &GridImage) -> Result<Conditioned<'m>> {
        if u_lr.channels() != self.channels() {
            return Err(Error::ChannelMismatch {
                expected: self.channels(),
                found: u_lr.channels(),
            });
        }
        let (ml, nl) = self.lr_dims();
        if u_lr.dims() != (ml, nl) {
            return Err(Error::size(format!("{ml}x{nl}"), format!("{}x{}", u_lr.height(), u_lr.width())));
        }
        let mean_offset = u_lr.channel_means();
        let neg: Vec<f64> = mean_offset.iter().map(|m| -m).collect();
        let y = u_lr.offset_channels(&neg);
        let y_hat = (0..y.channels())
            .map(|c| forward_plane(y.channel(c), ml, nl))
            .collect();
        let kriging_part = apply_kriging(&self.kernels, &y)?.offset_channels(&mean_offset);
        Ok(Conditioned {
            model: self,
            y_hat,
            mean_offset,
            kriging_part,
        })
    }
}

/// An [`SRModel`] paired with one LR observation.
#[derive(Clone, Debug)]
pub struct Conditioned<'m> {
    model: &'m SRModel,
    y_hat: Vec<Vec<Complex64>>,
    mean_offset: Vec<f64>,
    kriging_part: GridImage,
}

impl Conditioned<'_> {
    pub fn kriging_part(&self) -> &GridImage {
        &self.kriging_part
    }

    pub fn mean_offset(&self) -> &[f64] {
        &self.mean_offset
    }

    pub fn sample(&self, seed: u64) -> SRSample {
        let (m, n) = self.model.hr_dims();
        self.sample_with_noise(&draw_standard_noise(m, n, seed), seed)
            .expect("noise field has the model size")
    }

    /// Sample driven by an explicit white-noise field shared by all channels.
    pub fn sample_with_noise(&self, w: &GridImage, seed: u64) -> Result<SRSample> {
        let model = self.model;
        let (m, n) = model.hr_dims();
        if w.dims() != (m, n) || w.channels() != 1 {
            return Err(Error::size(format!("{m}x{n}x1"), w.shape_string()));
        }
        let r = model.op.factor();
        let (ml, nl) = model.lr_dims();
        let w_hat = forward_plane(w.channel(0), m, n);
        let mut sr = GridImage::zeros(m, n, model.channels());
        for ch in 0..model.channels() {
            let mut x_tilde: Vec<Complex64> = w_hat
                .iter()
                .zip(&model.noise_hat[ch])
                .map(|(a, b)| a * b)
                .collect();
            let cx: Vec<Complex64> = w_hat
                .iter()
                .zip(&model.degraded_noise_hat[ch])
                .map(|(a, b)| a * b)
                .collect();
            let x_lr_hat = alias_fold(&cx, m, n, r);
            fft2_inplace(&mut x_tilde, m, n, true);
            let scale = 1.0 / (m * n) as f64;

            let residual: Vec<Complex64> = self.y_hat[ch]
                .iter()
                .zip(&x_lr_hat)
                .map(|(y, x)| y - x)
                .collect();
            let plane = sr.channel_mut(ch);
            for s in SubgridIndex::all(r) {
                let mut patch = kriging_patch(&model.kernels, ch, &residual, s);
                for i in 0..ml {
                    let row = s.k() + i * r;
                    for j in 0..nl {
                        patch[i * nl + j] += x_tilde[row * n + s.l() + j * r].re * scale
                            + self.mean_offset[ch];
                    }
                }
                scatter_plane(plane, n, &patch, s);
            }
        }
        let innovation_part = sr.sub(&self.kriging_part)?;
        Ok(SRSample {
            sr,
            kriging_part: self.kriging_part.clone(),
            innovation_part,
            mean_offset: self.mean_offset.clone(),
            seed,
        })
    }
}

/// Draws one conditional sample of the HR image given `u_lr`.
pub fn sr_sample(model: &SRModel, u_lr: &GridImage, seed: u64) -> Result<SRSample> {
    Ok(model.condition(u_lr)?.sample(seed))
}

/// As [`sr_sample`] with an explicit noise field.
pub fn sr_sample_with_noise(model: &SRModel, u_lr: &GridImage, w: &GridImage, seed: u64) -> Result<SRSample> {
    model.condition(u_lr)?.sample_with_noise(w, seed)
}

/// One sample per seed, in seed order. Only the sampling step is repeated.
pub fn sr_sample_batch(model: &SRModel, u_lr: &GridImage, seeds: &[u64]) -> Result<Vec<SRSample>> {
    let cond = model.condition(u_lr)?;
    Ok(seeds.par_iter().map(|&s| cond.sample(s)).collect())
}

/// Monte Carlo check of the expected squared error of conditional samples.
#[derive(Clone, Debug, PartialEq)]
pub struct MseReport {
    /// `‖U - kriging_part‖²`.
    pub kriging_sq_error: f64,
    /// Monte Carlo mean of `‖U - X_SR‖²`.
    pub sample_sq_error_mean: f64,
    pub sample_sq_error_stderr: f64,
    /// Smallest observed `‖U - X_SR‖²`.
    pub sample_sq_error_min: f64,
    pub n_samples: usize,
    /// Trace of the innovation covariance from the spectral kernels.
    pub innovation_trace: f64,
    /// The same trace from explicit matrices, on small grids.
    pub innovation_trace_dense: Option<f64>,
    /// Whether `u_lr` equals `A u_hr` to 1e-6 relative.
    pub lr_consistent: bool,
}

impl MseReport {
    /// `‖U - Λᵀ U_LR‖² + Tr(innovation covariance)`.
    pub fn predicted_sample_sq_error(&self) -> f64 {
        self.kriging_sq_error + self.innovation_trace_dense.unwrap_or(self.innovation_trace)
    }

    /// Deviation of the Monte Carlo mean from the prediction, in standard errors.
    pub fn z_score(&self) -> f64 {
        (self.sample_sq_error_mean - self.predicted_sample_sq_error()) / self.sample_sq_error_stderr
    }
}

/// Trace of the covariance of `X̃ - Λᵀ A X̃` where `X̃ = t ⋆ W` with
/// `t` = `noise_kernel`, computed from the LR spectra:
/// `Tr Γₜ - 2 Re Σ conj(λ̂) b̂ₜ + Σ |λ̂|² κ̂ₜ`.
pub fn innovation_trace(kernels: &KrigingKernels, noise_kernel: &GridImage, op: &DegradeOperator) -> Result<f64> {
    let pre_t = precompute_from_kernel(noise_kernel, op)?;
    let (m, n) = noise_kernel.dims();
    let (ml, nl) = kernels.lr_dims();
    let r = op.factor();
    let mut total = 0.0;
    for ch in 0..noise_kernel.channels() {
        total += (m * n) as f64 * pre_t.gamma.get(ch, 0, 0);
        let kappa_t = forward_plane(pre_t.kappa.channel(ch), ml, nl);
        for s in SubgridIndex::all(r) {
            let lam = kernels.lambda_hat(s).channel(ch);
            let mut b = Vec::with_capacity(ml * nl);
            for i in 0..ml {
                let row = (i * r + m - s.k()) % m;
                for j in 0..nl {
                    let col = (j * r + n - s.l()) % n;
                    b.push(pre_t.c_gamma.get(ch, row, col));
                }
            }
            let b_hat = forward_plane(&b, ml, nl);
            for ((l, b), k) in lam.iter().zip(&b_hat).zip(&kappa_t) {
                total += -2.0 * (l.conj() * b).re + l.norm_sqr() * k.re;
            }
        }
    }
    Ok(total)
}

pub fn mse_statistics(
    model: &SRModel,
    u_hr: &GridImage,
    u_lr: &GridImage,
    n_samples: usize,
    seed: u64,
) -> Result<MseReport> {
    u_hr.ensure_same_shape(&GridImage::zeros(model.hr_dims().0, model.hr_dims().1, model.channels()))?;
    let degraded = apply_degrade(&model.op, u_hr)?;
    let diff = degraded.sub(u_lr)?.sum_of_squares().sqrt();
    let lr_consistent = diff <= 1e-6 * u_lr.sum_of_squares().sqrt().max(f64::MIN_POSITIVE);
    if !lr_consistent {
        log::warn!("LR input is not the degraded HR image (residual {diff:e})");
    }

    let cond = model.condition(u_lr)?;
    let kriging_sq_error = u_hr.sub(cond.kriging_part())?.sum_of_squares();
    let errors: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let s = cond.sample(seed.wrapping_add(i));
            u_hr.sub(&s.sr).expect("same shape").sum_of_squares()
        })
        .collect();
    let nf = n_samples as f64;
    let mean = errors.iter().sum::<f64>() / nf;
    let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (nf - 1.0).max(1.0);
    let min = errors.iter().copied().fold(f64::INFINITY, f64::min);

    let innovation = innovation_trace(&model.kernels, &model.noise_kernel, &model.op)?;
    let (m, n) = model.hr_dims();
    let dense = if m * n <= DENSE_TRACE_MAX_PIXELS {
        let oracle = Oracle::default();
        let a = oracle.dense_degrade_matrix(&model.op, m, n)?;
        let mut tr = 0.0;
        for ch in 0..model.channels() {
            let gamma = oracle.dense_circulant(&model.pre.gamma.channel_image(ch))?;
            let lambda = oracle.dense_solve_kriging(&a, &gamma)?;
            let gamma_noise = oracle.dense_covariance_matrix(&model.noise_kernel.channel_image(ch))?;
            tr += oracle.innovation_covariance(&a, &gamma_noise, &lambda)?.trace;
        }
        Some(tr)
    } else {
        None
    };

    Ok(MseReport {
        kriging_sq_error,
        sample_sq_error_mean: mean,
        sample_sq_error_stderr: (var / nf).sqrt(),
        sample_sq_error_min: min,
        n_samples,
        innovation_trace: innovation,
        innovation_trace_dense: dense,
        lr_consistent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adsn::adsn_sample;
    use crate::test_util::{max_abs_diff, random_image};

    fn model(m: usize, n: usize, channels: usize, r: usize, seed: u64, consistent: bool) -> SRModel {
        let reference = random_image(m, n, channels, seed).scaled(40.0).map(|v| v + 128.0);
        build_sr_model(
            &reference,
            r,
            (m, n),
            ModelOptions {
                consistent_texton: consistent,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn constant_reference_is_degenerate() {
        let reference = GridImage::constant(16, 16, 1, 90.0);
        assert!(matches!(
            build_sr_model(&reference, 2, (16, 16), ModelOptions::default()),
            Err(Error::DegenerateModel)
        ));
    }

    #[test]
    fn reference_size_must_match() {
        let reference = random_image(16, 16, 1, 1);
        assert!(build_sr_model(&reference, 2, (16, 8), ModelOptions::default()).is_err());
        assert!(matches!(
            build_sr_model(&reference, 3, (16, 16), ModelOptions::default()),
            Err(Error::NotDivisible { .. })
        ));
    }

    #[test]
    fn kernels_are_deterministic() {
        let a = model(16, 16, 3, 2, 5, false);
        let b = model(16, 16, 3, 2, 5, false);
        assert_eq!(a.kernels(), b.kernels());
        let c = model(16, 16, 3, 2, 6, false);
        assert_ne!(a.kernels(), c.kernels());
    }

    #[test]
    fn zero_noise_gives_kriging_only() {
        let mdl = model(16, 16, 1, 2, 3, false);
        let u_lr = random_image(8, 8, 1, 9).scaled(20.0);
        let s = sr_sample_with_noise(&mdl, &u_lr, &GridImage::zeros(16, 16, 1), 0).unwrap();
        assert!(max_abs_diff(&s.sr, &s.kriging_part) < 1e-12);
        assert!(s.innovation_part.max_abs() < 1e-12);
    }

    #[test]
    fn unit_factor_reproduces_input() {
        let mdl = model(12, 12, 3, 1, 4, false);
        let u_lr = random_image(12, 12, 3, 10).scaled(30.0).map(|v| v + 100.0);
        for seed in [0, 1, 99] {
            let s = sr_sample(&mdl, &u_lr, seed).unwrap();
            assert!(max_abs_diff(&s.sr, &u_lr) <= 1e-8);
            assert!(s.innovation_part.max_abs() <= 1e-8);
        }
    }

    #[test]
    fn components_add_up() {
        let mdl = model(16, 24, 3, 4, 7, false);
        let u_lr = random_image(4, 6, 3, 8).scaled(10.0).map(|v| v + 60.0);
        let s = sr_sample(&mdl, &u_lr, 42).unwrap();
        let sum = s.kriging_part.add(&s.innovation_part).unwrap();
        assert!(max_abs_diff(&sum, &s.sr) <= 1e-12);
        assert_eq!(s.mean_offset, u_lr.channel_means());
        assert_eq!(s.seed, 42);
    }

    #[test]
    fn channel_and_size_checks() {
        let mdl = model(16, 16, 1, 2, 1, false);
        assert!(matches!(
            sr_sample(&mdl, &GridImage::zeros(8, 8, 3), 0),
            Err(Error::ChannelMismatch { .. })
        ));
        assert!(matches!(
            sr_sample(&mdl, &GridImage::zeros(4, 8, 1), 0),
            Err(Error::SizeMismatch { .. })
        ));
    }

    #[test]
    fn batch_matches_single_draws() {
        let mdl = model(16, 16, 3, 2, 11, false);
        let u_lr = random_image(8, 8, 3, 12).scaled(50.0);
        let seeds = [5u64, 6, 7, 5];
        let batch = sr_sample_batch(&mdl, &u_lr, &seeds).unwrap();
        for (s, &seed) in batch.iter().zip(&seeds) {
            assert_eq!(*s, sr_sample(&mdl, &u_lr, seed).unwrap());
        }
        assert_eq!(batch[0], batch[3]);
        assert_ne!(batch[0].innovation_part, batch[1].innovation_part);
        assert_eq!(batch[0].kriging_part, batch[1].kriging_part);
    }

    #[test]
    fn samples_reproduce_the_observation() {
        for consistent in [false, true] {
            let mdl = model(32, 32, 3, 4, 13, consistent);
            let t = Texton {
                kernel: mdl.noise_kernel().clone(),
                source_mean: vec![0.0; 3],
            };
            let x = adsn_sample(&t, &draw_standard_noise(32, 32, 1000)).unwrap();
            let u_lr = apply_degrade(mdl.operator(), &x).unwrap().offset_channels(&[10.0, 20.0, 30.0]);
            let s = sr_sample(&mdl, &u_lr, 3).unwrap();
            let back = apply_degrade(mdl.operator(), &s.sr).unwrap();
            let err = back.sub(&u_lr).unwrap().sum_of_squares().sqrt();
            let centred = u_lr.offset_channels(&u_lr.channel_means().iter().map(|m| -m).collect::<Vec<_>>());
            assert!(err <= 1e-6 * centred.sum_of_squares().sqrt(), "{err:e}");
        }
    }

    #[test]
    fn innovations_share_one_noise_field() {
        // Scaling the noise scales every channel's innovation by the same factor.
        let mdl = model(16, 16, 3, 2, 14, false);
        let u_lr = random_image(8, 8, 3, 15);
        let cond = mdl.condition(&u_lr).unwrap();
        let w = draw_standard_noise(16, 16, 3);
        let a = cond.sample_with_noise(&w, 0).unwrap();
        let b = cond.sample_with_noise(&w.scaled(2.0), 0).unwrap();
        assert!(max_abs_diff(&b.innovation_part, &a.innovation_part.scaled(2.0)) < 1e-10);
    }

    #[test]
    fn spectral_trace_matches_dense_trace() {
        for consistent in [false, true] {
            let mdl = model(16, 16, 1, 2, 21, consistent);
            let u_hr = random_image(16, 16, 1, 22).scaled(30.0);
            let u_lr = apply_degrade(mdl.operator(), &u_hr).unwrap();
            let rep = mse_statistics(&mdl, &u_hr, &u_lr, 10, 0).unwrap();
            let dense = rep.innovation_trace_dense.unwrap();
            assert!(
                (rep.innovation_trace - dense).abs() <= 1e-8 * dense,
                "{} vs {dense}",
                rep.innovation_trace
            );
            assert!(rep.lr_consistent);
        }
    }

    #[test]
    fn unit_factor_mse_terms_coincide() {
        let mdl = model(12, 12, 1, 1, 30, false);
        let u_hr = random_image(12, 12, 1, 31).scaled(30.0);
        let rep = mse_statistics(&mdl, &u_hr, &u_hr, 20, 0).unwrap();
        assert!(rep.innovation_trace.abs() <= 1e-8 * mdl.precomputation().gamma.get(0, 0, 0) * 144.0);
        assert!((rep.sample_sq_error_mean - rep.kriging_sq_error).abs() <= 1e-8 * rep.kriging_sq_error.max(1.0));
    }
}
