//! Periodic image containers and the Fourier machinery shared by every stage.
//!
//! Images live on the discrete torus: reading outside `[0, M) x [0, N)` wraps
//! around. Pixel data is stored channel-major, then row-major.
//!
//! The DFT is unnormalized in the forward direction,
//! `X̂(ξ) = Σ_x X(x) exp(-2iπ ξ₁x₁/M) exp(-2iπ ξ₂x₂/N)`, and carries the
//! `1/(MN)` factor on the inverse. All stored spectral kernels in this crate
//! use that convention so products of spectra compose without rescaling.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use once_cell::sync::Lazy;
use parking_lot::Mutex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Real-valued image on the `M x N` torus with one or three channels.
#[derive(Clone, Debug, PartialEq)]
pub struct GridImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

/// Full complex 2-D spectrum, same layout as [`GridImage`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<Complex64>,
}

/// Position `(k, l)` of a stride-`r` subgrid `{(k + ir, l + jr)}` of the HR grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SubgridIndex {
    k: usize,
    l: usize,
    r: usize,
}

fn check_channels(channels: usize) -> Result<()> {
    match channels {
        1 | 3 => Ok(()),
        c => Err(Error::InvalidChannels(c)),
    }
}

impl GridImage {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_channels(channels)?;
        if height == 0 || width == 0 {
            return Err(Error::size("non-empty image", format!("{height}x{width}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::size(height * width * channels, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub(crate) fn from_raw(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::constant(height, width, channels, 0.0)
    }

    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Self::from_raw(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
    }

    /// Single-channel image with `f(row, col)` at each pixel.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self::from_raw(height, width, 1, data)
    }

    /// Unit impulse at `(row, col)` (taken modulo the grid size).
    pub fn delta(height: usize, width: usize, row: isize, col: isize) -> Self {
        let mut img = Self::zeros(height, width, 1);
        let i = row.rem_euclid(height as isize) as usize;
        let j = col.rem_euclid(width as isize) as usize;
        img.data[i * width + j] = 1.0;
        img
    }

    /// Stacks single-channel images into one multi-channel image.
    pub fn from_channels(planes: &[GridImage]) -> Result<Self> {
        check_channels(planes.len())?;
        let (h, w) = planes[0].dims();
        let mut data = Vec::with_capacity(h * w * planes.len());
        for p in planes {
            if p.dims() != (h, w) || p.channels != 1 {
                return Err(Error::size(format!("{h}x{w}x1"), p.shape_string()));
            }
            data.extend_from_slice(&p.data);
        }
        Ok(Self::from_raw(h, w, planes.len(), data))
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Pixels per channel.
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn channel_image(&self, c: usize) -> GridImage {
        Self::from_raw(self.height, self.width, 1, self.channel(c).to_vec())
    }

    pub fn split_channels(&self) -> Vec<GridImage> {
        (0..self.channels).map(|c| self.channel_image(c)).collect()
    }

    pub fn get(&self, c: usize, row: usize, col: usize) -> f64 {
        self.data[c * self.plane_len() + row * self.width + col]
    }

    pub fn set(&mut self, c: usize, row: usize, col: usize, value: f64) {
        let n = self.plane_len();
        self.data[c * n + row * self.width + col] = value;
    }

    /// Periodic read: any integer coordinate is reduced modulo the grid size.
    pub fn at(&self, c: usize, row: isize, col: isize) -> f64 {
        let i = row.rem_euclid(self.height as isize) as usize;
        let j = col.rem_euclid(self.width as isize) as usize;
        self.get(c, i, j)
    }

    pub fn channel_means(&self) -> Vec<f64> {
        let n = self.plane_len() as f64;
        (0..self.channels)
            .map(|c| self.channel(c).iter().sum::<f64>() / n)
            .collect()
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> GridImage {
        Self::from_raw(
            self.height,
            self.width,
            self.channels,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn scaled(&self, s: f64) -> GridImage {
        self.map(|v| v * s)
    }

    /// Pixelwise combination of two images of identical shape.
    pub fn zip_map(&self, other: &GridImage, mut f: impl FnMut(f64, f64) -> f64) -> Result<GridImage> {
        self.ensure_same_shape(other)?;
        Ok(Self::from_raw(
            self.height,
            self.width,
            self.channels,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn add(&self, other: &GridImage) -> Result<GridImage> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridImage) -> Result<GridImage> {
        self.zip_map(other, |a, b| a - b)
    }

    /// Adds a per-channel offset.
    pub fn offset_channels(&self, offsets: &[f64]) -> GridImage {
        assert_eq!(offsets.len(), self.channels);
        let mut out = self.clone();
        for (c, &o) in offsets.iter().enumerate() {
            out.channel_mut(c).iter_mut().for_each(|v| *v += o);
        }
        out
    }

    /// Circular translation: `out(x) = self(x - (rows, cols))`.
    pub fn shifted(&self, rows: isize, cols: isize) -> GridImage {
        let (m, n) = self.dims();
        let mut out = Self::zeros(m, n, self.channels);
        for c in 0..self.channels {
            for i in 0..m {
                for j in 0..n {
                    let v = self.at(c, i as isize - rows, j as isize - cols);
                    out.set(c, i, j, v);
                }
            }
        }
        out
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.height, self.width, self.channels)
    }

    pub(crate) fn ensure_same_shape(&self, other: &GridImage) -> Result<()> {
        if self.dims() != other.dims() || self.channels != other.channels {
            return Err(Error::size(self.shape_string(), other.shape_string()));
        }
        Ok(())
    }
}

impl fmt::Display for GridImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GridImage({})", self.shape_string())
    }
}

impl SpectralImage {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<Complex64>) -> Result<Self> {
        check_channels(channels)?;
        if data.len() != height * width * channels {
            return Err(Error::size(height * width * channels, data.len()));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub(crate) fn from_raw(height: usize, width: usize, channels: usize, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[Complex64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, row: usize, col: usize) -> Complex64 {
        self.data[c * self.plane_len() + row * self.width + col]
    }

    /// Componentwise product, the spectral form of periodic convolution.
    pub fn hadamard(&self, other: &SpectralImage) -> Result<SpectralImage> {
        if self.dims() != other.dims() || self.channels != other.channels {
            return Err(Error::size(
                format!("{}x{}x{}", self.height, self.width, self.channels),
                format!("{}x{}x{}", other.height, other.width, other.channels),
            ));
        }
        Ok(Self::from_raw(
            self.height,
            self.width,
            self.channels,
            self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
        ))
    }

    pub fn conj(&self) -> SpectralImage {
        Self::from_raw(
            self.height,
            self.width,
            self.channels,
            self.data.iter().map(|z| z.conj()).collect(),
        )
    }
}

impl SubgridIndex {
    pub fn new(k: usize, l: usize, r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidFactor(r));
        }
        if k >= r || l >= r {
            return Err(Error::size(format!("offsets below {r}"), format!("({k}, {l})")));
        }
        Ok(Self { k, l, r })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Position of this subgrid in the row-major `r x r` enumeration.
    pub fn linear(&self) -> usize {
        self.k * self.r + self.l
    }

    /// All `r²` subgrids, `k` major.
    pub fn all(r: usize) -> impl Iterator<Item = SubgridIndex> {
        (0..r).flat_map(move |k| (0..r).map(move |l| SubgridIndex { k, l, r }))
    }
}

// ---------------------------------------------------------------------------
// FFT plans

struct Plan2 {
    rows_fwd: Arc<dyn Fft<f64>>,
    rows_inv: Arc<dyn Fft<f64>>,
    cols_fwd: Arc<dyn Fft<f64>>,
    cols_inv: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

static PLANS: Lazy<Mutex<(FftPlanner<f64>, HashMap<(usize, usize), Arc<Plan2>>)>> =
    Lazy::new(|| Mutex::new((FftPlanner::new(), HashMap::new())));

fn plan(m: usize, n: usize) -> Arc<Plan2> {
    let mut guard = PLANS.lock();
    let (planner, cache) = &mut *guard;
    if let Some(p) = cache.get(&(m, n)) {
        return p.clone();
    }
    let rows_fwd = planner.plan_fft_forward(n);
    let rows_inv = planner.plan_fft_inverse(n);
    let cols_fwd = planner.plan_fft_forward(m);
    let cols_inv = planner.plan_fft_inverse(m);
    let scratch_len = [&rows_fwd, &rows_inv, &cols_fwd, &cols_inv]
        .iter()
        .map(|f| f.get_inplace_scratch_len())
        .max()
        .unwrap_or(0);
    let p = Arc::new(Plan2 {
        rows_fwd,
        rows_inv,
        cols_fwd,
        cols_inv,
        scratch_len,
    });
    cache.insert((m, n), p.clone());
    p
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for i in 0..rows {
        for j in 0..cols {
            dst[j * rows + i] = src[i * cols + j];
        }
    }
}

/// Unnormalized in-place 2-D transform of one `m x n` plane. The inverse
/// direction is the conjugate transform; callers apply `1/(mn)`.
pub(crate) fn fft2_inplace(buf: &mut [Complex64], m: usize, n: usize, inverse: bool) {
    debug_assert_eq!(buf.len(), m * n);
    let p = plan(m, n);
    let (rows, cols) = if inverse {
        (&p.rows_inv, &p.cols_inv)
    } else {
        (&p.rows_fwd, &p.cols_fwd)
    };
    let mut scratch = vec![Complex64::default(); p.scratch_len];
    rows.process_with_scratch(buf, &mut scratch);
    if m > 1 {
        let mut t = vec![Complex64::default(); m * n];
        transpose(buf, &mut t, m, n);
        cols.process_with_scratch(&mut t, &mut scratch);
        transpose(&t, buf, n, m);
    }
}

pub(crate) fn forward_plane(plane: &[f64], m: usize, n: usize) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_inplace(&mut buf, m, n, false);
    buf
}

/// Inverse transform keeping only the real part.
pub(crate) fn inverse_plane_real(spec: &[Complex64], m: usize, n: usize) -> Vec<f64> {
    let mut buf = spec.to_vec();
    fft2_inplace(&mut buf, m, n, true);
    let s = 1.0 / (m * n) as f64;
    buf.iter().map(|z| z.re * s).collect()
}

/// Spectrum of `S u` (stride-`r` subsampling) from the spectrum of `u`:
/// `(1/r²) Σ_{a,b} û(ξ₁ + a·M/r, ξ₂ + b·N/r)`.
pub(crate) fn alias_fold(spec: &[Complex64], m: usize, n: usize, r: usize) -> Vec<Complex64> {
    let (ml, nl) = (m / r, n / r);
    let mut out = vec![Complex64::default(); ml * nl];
    for a in 0..r {
        for i in 0..ml {
            let src_row = &spec[(i + a * ml) * n..(i + a * ml + 1) * n];
            let dst_row = &mut out[i * nl..(i + 1) * nl];
            for b in 0..r {
                for (d, s) in dst_row.iter_mut().zip(&src_row[b * nl..(b + 1) * nl]) {
                    *d += s;
                }
            }
        }
    }
    let s = 1.0 / (r * r) as f64;
    out.iter_mut().for_each(|z| *z *= s);
    out
}

// ---------------------------------------------------------------------------
// Operations

/// Forward DFT of every channel.
pub fn dft2(img: &GridImage) -> SpectralImage {
    let (m, n) = img.dims();
    let mut data = Vec::with_capacity(img.data.len());
    for c in 0..img.channels {
        data.extend(forward_plane(img.channel(c), m, n));
    }
    SpectralImage::from_raw(m, n, img.channels, data)
}

/// Inverse DFT. Fails if the result carries an imaginary part that a
/// Hermitian spectrum could not have produced.
pub fn idft2(spec: &SpectralImage) -> Result<GridImage> {
    let (m, n) = spec.dims();
    let scale = 1.0 / (m * n) as f64;
    let mut data = Vec::with_capacity(spec.data.len());
    let mut residual: f64 = 0.0;
    let mut tolerance: f64 = 0.0;
    for c in 0..spec.channels {
        let mut buf = spec.channel(c).to_vec();
        // Upper bound on any output magnitude of this channel.
        let bound = buf.iter().map(|z| z.norm()).sum::<f64>() * scale;
        tolerance = tolerance.max(1e-8 * bound);
        fft2_inplace(&mut buf, m, n, true);
        for z in &buf {
            residual = residual.max((z.im * scale).abs());
            data.push(z.re * scale);
        }
    }
    if residual > tolerance {
        return Err(Error::NonHermitianSpectrum {
            residual,
            tolerance,
        });
    }
    GridImage::new(m, n, spec.channels, data)
}

/// Periodic convolution `(x ⋆ y)(p) = Σ_q x(p - q) y(q)`, computed spectrally.
///
/// Channels pair up one-to-one; a single-channel operand is broadcast
/// against a color one.
pub fn conv2_periodic(x: &GridImage, y: &GridImage) -> Result<GridImage> {
    if x.dims() != y.dims() {
        return Err(Error::size(x.shape_string(), y.shape_string()));
    }
    let channels = match (x.channels, y.channels) {
        (a, b) if a == b => a,
        (1, b) => b,
        (a, 1) => a,
        _ => return Err(Error::size(x.shape_string(), y.shape_string())),
    };
    let (m, n) = x.dims();
    let mut data = Vec::with_capacity(m * n * channels);
    for c in 0..channels {
        let xc = x.channel(c.min(x.channels - 1));
        let yc = y.channel(c.min(y.channels - 1));
        let mut xs = forward_plane(xc, m, n);
        let ys = forward_plane(yc, m, n);
        xs.iter_mut().zip(&ys).for_each(|(a, b)| *a *= b);
        data.extend(inverse_plane_real(&xs, m, n));
    }
    Ok(GridImage::from_raw(m, n, channels, data))
}

/// `out(x) = u(-x)` on the torus.
pub fn flip(u: &GridImage) -> GridImage {
    let (m, n) = u.dims();
    let mut out = GridImage::zeros(m, n, u.channels);
    for c in 0..u.channels {
        for i in 0..m {
            for j in 0..n {
                out.set(c, (m - i) % m, (n - j) % n, u.get(c, i, j));
            }
        }
    }
    out
}

pub(crate) fn ensure_divisible(m: usize, n: usize, r: usize) -> Result<()> {
    if r == 0 {
        return Err(Error::InvalidFactor(r));
    }
    if m % r != 0 || n % r != 0 {
        return Err(Error::NotDivisible {
            r,
            height: m,
            width: n,
        });
    }
    Ok(())
}

/// Stride-`r` subsampling, `out(x) = u(r·x)`.
pub fn subsample(u: &GridImage, r: usize) -> Result<GridImage> {
    gather_subgrid(u, SubgridIndex::new(0, 0, r)?)
}

/// Reads `u(k + i·r, l + j·r)` into an `(M/r) x (N/r)` image.
pub fn gather_subgrid(u: &GridImage, s: SubgridIndex) -> Result<GridImage> {
    let (m, n) = u.dims();
    ensure_divisible(m, n, s.r)?;
    let (ml, nl) = (m / s.r, n / s.r);
    let mut data = Vec::with_capacity(ml * nl * u.channels);
    for c in 0..u.channels {
        let plane = u.channel(c);
        for i in 0..ml {
            let row = &plane[(s.k + i * s.r) * n..(s.k + i * s.r + 1) * n];
            data.extend(row[s.l..].iter().step_by(s.r).take(nl));
        }
    }
    Ok(GridImage::from_raw(ml, nl, u.channels, data))
}

/// Writes `patch` onto the subgrid `s` of `u_hr`.
pub fn scatter_subgrid(u_hr: &mut GridImage, patch: &GridImage, s: SubgridIndex) -> Result<()> {
    let (m, n) = u_hr.dims();
    ensure_divisible(m, n, s.r)?;
    if patch.dims() != (m / s.r, n / s.r) || patch.channels != u_hr.channels {
        return Err(Error::size(
            format!("{}x{}x{}", m / s.r, n / s.r, u_hr.channels),
            patch.shape_string(),
        ));
    }
    for c in 0..u_hr.channels {
        scatter_plane(u_hr.channel_mut(c), n, patch.channel(c), s);
    }
    Ok(())
}

pub(crate) fn scatter_plane(hr: &mut [f64], n: usize, patch: &[f64], s: SubgridIndex) {
    let nl = n / s.r;
    for (i, prow) in patch.chunks_exact(nl).enumerate() {
        let row = &mut hr[(s.k + i * s.r) * n..(s.k + i * s.r + 1) * n];
        for (dst, &v) in row[s.l..].iter_mut().step_by(s.r).zip(prow) {
            *dst = v;
        }
    }
}
