//! Dense brute-force reference for the spectral fast path.
//!
//! Everything here materializes explicit matrices (`A`, `Γ`, `Λ`) over
//! vectorized images, with pixel `(i, j)` of an `M x N` grid at index
//! `i·N + j`. It is meant for grids of a few thousand pixels at most and is
//! deliberately independent of the FFT code: operators are built from their
//! spatial definitions, never by probing the fast implementation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::adsn::compute_texton;
use crate::degrade::{apply_degrade, apply_degrade_adjoint, build_downscale_kernel, DegradeOperator};
use crate::error::{Error, Result};
use crate::grid::{conv2_periodic, ensure_divisible, subsample, GridImage, SubgridIndex};
use crate::kriging::{apply_kriging, precompute_kernels, solve_kriging_kernels, KrigingKernels, DEFAULT_TOL_REL};
use crate::periodic_smooth::periodic_component;

/// Default cap on the number of HR pixels a dense operator may span.
pub const DEFAULT_MAX_PIXELS: usize = 4096;

/// Relative singular-value cutoff of the dense pseudo-inverse.
pub const SVD_CUTOFF_REL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseOperator {
    entries: DMatrix<f64>,
}

impl DenseOperator {
    pub fn new(entries: DMatrix<f64>) -> Self {
        Self { entries }
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn transpose(&self) -> DenseOperator {
        Self::new(self.entries.transpose())
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (&self.entries * DVector::from_column_slice(v)).as_slice().to_vec()
    }

    /// Applies the operator to a single-channel image, reshaping the result.
    pub fn apply_image(&self, u: &GridImage, out_dims: (usize, usize)) -> Result<GridImage> {
        if u.channels() != 1 || u.plane_len() != self.cols() || out_dims.0 * out_dims.1 != self.rows() {
            return Err(Error::size(
                format!("{} pixels in, {} out", self.cols(), self.rows()),
                u.shape_string(),
            ));
        }
        GridImage::new(out_dims.0, out_dims.1, 1, self.apply(u.channel(0)))
    }
}

/// `Γ - Λᵀ A Γ Aᵀ Λ` (or another innovation covariance) with its spectrum bounds.
#[derive(Clone, Debug)]
pub struct ConditionalCovariance {
    pub matrix: DenseOperator,
    pub trace: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct Oracle {
    max_pixels: usize,
}

impl Default for Oracle {
    fn default() -> Self {
        Self {
            max_pixels: DEFAULT_MAX_PIXELS,
        }
    }
}

fn wrap(v: isize, len: usize) -> usize {
    v.rem_euclid(len as isize) as usize
}

fn single_channel(u: &GridImage) -> Result<&[f64]> {
    if u.channels() != 1 {
        return Err(Error::size("single-channel image", u.shape_string()));
    }
    Ok(u.channel(0))
}

/// Periodic convolution by the `O(M²N²)` double sum.
pub fn direct_conv2_periodic(x: &GridImage, y: &GridImage) -> Result<GridImage> {
    x.ensure_same_shape(y)?;
    let (m, n) = x.dims();
    let mut out = GridImage::zeros(m, n, x.channels());
    for c in 0..x.channels() {
        for p1 in 0..m {
            for p2 in 0..n {
                let mut acc = 0.0;
                for q1 in 0..m {
                    for q2 in 0..n {
                        acc += x.at(c, p1 as isize - q1 as isize, p2 as isize - q2 as isize) * y.get(c, q1, q2);
                    }
                }
                out.set(c, p1, p2, acc);
            }
        }
    }
    Ok(out)
}

impl Oracle {
    pub fn with_max_pixels(max_pixels: usize) -> Self {
        Self { max_pixels }
    }

    pub fn max_pixels(&self) -> usize {
        self.max_pixels
    }

    fn check(&self, pixels: usize) -> Result<()> {
        if pixels > self.max_pixels {
            return Err(Error::TooLarge {
                pixels,
                cap: self.max_pixels,
            });
        }
        Ok(())
    }

    /// Matrix of `A = S C` over `m x n` images, assembled from the taps.
    pub fn dense_degrade_matrix(&self, op: &DegradeOperator, m: usize, n: usize) -> Result<DenseOperator> {
        self.check(m * n)?;
        let r = op.factor();
        ensure_divisible(m, n, r)?;
        let (ml, nl) = (m / r, n / r);
        let mut a = DMatrix::zeros(ml * nl, m * n);
        for i in 0..ml {
            for j in 0..nl {
                for &(da, wa) in op.taps() {
                    for &(db, wb) in op.taps() {
                        let p = wrap((r * i) as isize + da, m);
                        let q = wrap((r * j) as isize + db, n);
                        a[(i * nl + j, p * n + q)] += wa * wb;
                    }
                }
            }
        }
        Ok(DenseOperator::new(a))
    }

    /// Convolution matrix `B[p, q] = β(p - q)` of a single-channel kernel.
    pub fn dense_circulant(&self, beta: &GridImage) -> Result<DenseOperator> {
        let (m, n) = beta.dims();
        self.check(m * n)?;
        single_channel(beta)?;
        let mut b = DMatrix::zeros(m * n, m * n);
        for p1 in 0..m {
            for p2 in 0..n {
                for q1 in 0..m {
                    for q2 in 0..n {
                        b[(p1 * n + p2, q1 * n + q2)] =
                            beta.at(0, p1 as isize - q1 as isize, p2 as isize - q2 as isize);
                    }
                }
            }
        }
        Ok(DenseOperator::new(b))
    }

    /// `Γ = T Tᵀ` with `T` the convolution by a single-channel texton kernel.
    pub fn dense_covariance_matrix(&self, texton_kernel: &GridImage) -> Result<DenseOperator> {
        let t = self.dense_circulant(texton_kernel)?;
        Ok(DenseOperator::new(t.entries() * t.entries().transpose()))
    }

    /// Minimum-norm solution `Λ` of `A Γ Aᵀ Λ = A Γ` via a truncated SVD.
    /// `Λ` is `(LR pixels) x (HR pixels)`; `Λᵀ` maps LR to HR.
    pub fn dense_solve_kriging(&self, a: &DenseOperator, gamma: &DenseOperator) -> Result<DenseOperator> {
        self.check(gamma.rows())?;
        let ag = a.entries() * gamma.entries();
        let k = &ag * a.entries().transpose();
        let svd = k.svd(true, true);
        let max = svd.singular_values.max();
        let pinv = svd
            .pseudo_inverse(SVD_CUTOFF_REL * max)
            .map_err(|e| Error::size("pseudo-invertible system", e))?;
        Ok(DenseOperator::new(pinv * ag))
    }

    fn spectrum_summary(&self, matrix: DMatrix<f64>) -> ConditionalCovariance {
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        ConditionalCovariance {
            trace: matrix.trace(),
            min_eigenvalue: eig.eigenvalues.min(),
            max_eigenvalue: eig.eigenvalues.max(),
            matrix: DenseOperator::new(matrix),
        }
    }

    /// `Γ - Λᵀ A Γ Aᵀ Λ` for a solution `Λ` of the kriging equation.
    ///
    /// Evaluated as `(I - Λᵀ A) Γ (I - Λᵀ A)ᵀ`, which equals the difference
    /// whenever `A Γ Aᵀ Λ = A Γ`. The difference form cancels catastrophically
    /// once `A Γ Aᵀ` is ill-conditioned; the congruence stays semidefinite.
    pub fn conditional_covariance(
        &self,
        a: &DenseOperator,
        gamma: &DenseOperator,
        lambda: &DenseOperator,
    ) -> Result<ConditionalCovariance> {
        self.innovation_covariance(a, gamma, lambda)
    }

    /// Covariance `(I - Λᵀ A) Γₙ (I - Λᵀ A)ᵀ` of `X̃ - Λᵀ A X̃` for `X̃ ~ N(0, Γₙ)`.
    /// Equals [`Self::conditional_covariance`] when `Γₙ` is the kriging covariance.
    pub fn innovation_covariance(
        &self,
        a: &DenseOperator,
        gamma_noise: &DenseOperator,
        lambda: &DenseOperator,
    ) -> Result<ConditionalCovariance> {
        self.check(gamma_noise.rows())?;
        let n = gamma_noise.rows();
        let p = DMatrix::identity(n, n) - lambda.entries().transpose() * a.entries();
        let cov = &p * gamma_noise.entries() * p.transpose();
        Ok(self.spectrum_summary(cov))
    }

    /// Stride-`r` subsampling matrix `S`.
    pub fn dense_subsample_matrix(&self, m: usize, n: usize, r: usize) -> Result<DenseOperator> {
        self.check(m * n)?;
        ensure_divisible(m, n, r)?;
        let (ml, nl) = (m / r, n / r);
        let mut s = DMatrix::zeros(ml * nl, m * n);
        for i in 0..ml {
            for j in 0..nl {
                s[(i * nl + j, (r * i) * n + r * j)] = 1.0;
            }
        }
        Ok(DenseOperator::new(s))
    }

    /// Largest entry of `S B Sᵀ - conv(Sβ)` over the LR grid.
    pub fn lemma_discrepancy(&self, beta: &GridImage, r: usize) -> Result<f64> {
        let (m, n) = beta.dims();
        let s = self.dense_subsample_matrix(m, n, r)?;
        let b = self.dense_circulant(beta)?;
        let lhs = s.entries() * b.entries() * s.entries().transpose();
        let rhs = self.dense_circulant(&subsample(beta, r)?)?;
        Ok((lhs - rhs.entries()).abs().max())
    }

    /// True iff `S B Sᵀ` is the LR convolution by `Sβ` to 1e-10.
    pub fn verify_lemma_convolution_subsampling(&self, beta: &GridImage, r: usize) -> Result<bool> {
        Ok(self.lemma_discrepancy(beta, r)? <= 1e-10)
    }

    /// `Λᵀ` as realized by the fast path, probed column by column.
    pub fn fast_kriging_matrix(&self, kk: &KrigingKernels) -> Result<DenseOperator> {
        let (m, n) = kk.hr_dims();
        self.check(m * n)?;
        if kk.channels() != 1 {
            return Err(Error::ChannelMismatch {
                expected: 1,
                found: kk.channels(),
            });
        }
        let (ml, nl) = kk.lr_dims();
        let mut lt = DMatrix::zeros(m * n, ml * nl);
        for i in 0..ml {
            for j in 0..nl {
                let col = apply_kriging(kk, &GridImage::delta(ml, nl, i as isize, j as isize))?;
                lt.set_column(i * nl + j, &DVector::from_column_slice(col.channel(0)));
            }
        }
        Ok(DenseOperator::new(lt))
    }
}

/// Largest deviation of a dense `Λ` from block-circulant structure: column
/// `(k + i·r, l + j·r)` must equal column `(k, l)` shifted by `(i, j)` on the LR grid.
pub fn block_circulant_defect(lambda: &DenseOperator, hr_dims: (usize, usize), r: usize) -> f64 {
    let (m, n) = hr_dims;
    let (ml, nl) = (m / r, n / r);
    let l = lambda.entries();
    let mut worst: f64 = 0.0;
    for s in SubgridIndex::all(r) {
        let base = s.k() * n + s.l();
        for i in 0..ml {
            for j in 0..nl {
                let col = (s.k() + i * r) * n + s.l() + j * r;
                for a in 0..ml {
                    for b in 0..nl {
                        let shifted = l[(wrap(a as isize - i as isize, ml) * nl + wrap(b as isize - j as isize, nl), base)];
                        worst = worst.max((l[(a * nl + b, col)] - shifted).abs());
                    }
                }
            }
        }
    }
    worst
}

/// Outcome of one identity in the certification suite.
#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
}

impl CheckOutcome {
    fn new(name: &'static str, value: f64, tolerance: f64) -> Self {
        Self {
            name,
            passed: value <= tolerance,
            value,
            tolerance,
        }
    }
}

fn rel_linf(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

fn random_plane(m: usize, n: usize, rng: &mut rand_chacha::ChaCha20Rng) -> GridImage {
    use rand::Rng;
    GridImage::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
}

/// Runs the small-instance certification of the fast path on a random
/// `size x size` texture with zoom factor `r`.
pub fn run_certification(size: usize, r: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    use rand::SeedableRng;
    let oracle = Oracle::default();
    let (m, n) = (size, size);
    oracle.check(m * n)?;
    ensure_divisible(m, n, r)?;
    let (ml, nl) = (m / r, n / r);
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let op = build_downscale_kernel(r)?;
    let mut out = Vec::new();

    let u = random_plane(m, n, &mut rng);
    let a = oracle.dense_degrade_matrix(&op, m, n)?;
    let fast = apply_degrade(&op, &u)?;
    out.push(CheckOutcome::new(
        "degrade matches dense A",
        rel_linf(fast.channel(0), &a.apply(u.channel(0))),
        1e-10,
    ));

    let y = random_plane(ml, nl, &mut rng);
    let au = a.apply(u.channel(0));
    let aty = apply_degrade_adjoint(&op, &y, (m, n))?;
    let lhs: f64 = au.iter().zip(y.channel(0)).map(|(p, q)| p * q).sum();
    let rhs: f64 = u.channel(0).iter().zip(aty.channel(0)).map(|(p, q)| p * q).sum();
    out.push(CheckOutcome::new(
        "adjoint identity <Au, y> = <u, A^T y>",
        (lhs - rhs).abs() / lhs.abs().max(f64::MIN_POSITIVE),
        1e-10,
    ));

    let v = random_plane(m, n, &mut rng);
    out.push(CheckOutcome::new(
        "spectral convolution matches direct sum",
        rel_linf(
            conv2_periodic(&u, &v)?.channel(0),
            direct_conv2_periodic(&u, &v)?.channel(0),
        ),
        1e-10,
    ));

    let beta = random_plane(m, n, &mut rng);
    out.push(CheckOutcome::new(
        "convolution and subsampling lemma",
        oracle.lemma_discrepancy(&beta, r)?,
        1e-10,
    ));

    let texton = compute_texton(&random_plane(m, n, &mut rng).scaled(100.0));
    let periodic = periodic_component(&texton.kernel);
    let gamma = oracle.dense_covariance_matrix(&periodic)?;
    out.push(CheckOutcome::new(
        "covariance is symmetric",
        (gamma.entries() - gamma.entries().transpose()).abs().max(),
        1e-12 * gamma.entries().abs().max(),
    ));
    let eig = SymmetricEigen::new(gamma.entries().clone()).eigenvalues;
    out.push(CheckOutcome::new(
        "covariance is positive semidefinite",
        (-eig.min() / eig.max()).max(0.0),
        1e-8,
    ));

    let pre = precompute_kernels(&texton, &op)?;
    let dense_kappa = a.entries() * gamma.entries() * a.entries().transpose();
    out.push(CheckOutcome::new(
        "kappa matches dense A Gamma A^T",
        rel_linf(pre.kappa.channel(0), dense_kappa.column(0).as_slice()),
        1e-9,
    ));

    let kk = solve_kriging_kernels(&pre, &op, DEFAULT_TOL_REL)?;
    let lambda = oracle.dense_solve_kriging(&a, &gamma)?;
    let ag = a.entries() * gamma.entries();
    let residual = (&dense_kappa * lambda.entries() - &ag).norm() / ag.norm();
    out.push(CheckOutcome::new("dense kriging equation residual", residual, 1e-8));

    let lt = lambda.transpose();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let y = random_plane(ml, nl, &mut rng);
        let fast = apply_kriging(&kk, &y)?;
        worst = worst.max(rel_linf(fast.channel(0), &lt.apply(y.channel(0))));
    }
    out.push(CheckOutcome::new("fast kriging matches dense minimum-norm solution", worst, 1e-7));

    let fast_lt = oracle.fast_kriging_matrix(&kk)?;
    let fast_residual = (&dense_kappa * fast_lt.entries().transpose() - &ag).norm() / ag.norm();
    out.push(CheckOutcome::new("fast kernels satisfy the kriging equation", fast_residual, 1e-7));

    out.push(CheckOutcome::new(
        "kriging matrix is block circulant",
        block_circulant_defect(&lambda, (m, n), r) / lambda.entries().abs().max(),
        1e-7,
    ));

    let cond = oracle.conditional_covariance(&a, &gamma, &lambda)?;
    out.push(CheckOutcome::new(
        "innovation covariance is positive semidefinite",
        (-cond.min_eigenvalue / cond.max_eigenvalue).max(0.0),
        1e-8,
    ));
    let explained = kk.explained_variance_trace()[0];
    let spectral_trace = gamma.entries().trace() - explained;
    out.push(CheckOutcome::new(
        "innovation trace matches spectral formula",
        (spectral_trace - cond.trace).abs() / cond.trace.abs().max(f64::MIN_POSITIVE),
        1e-8,
    ));

    Ok(out)
}
