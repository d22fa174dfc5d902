//! Python bindings. Images cross the boundary as `float64` NumPy arrays of
//! shape `(H, W)` for grayscale or `(H, W, 3)` for color.

use gaussian_sr_core as core;
use gaussian_sr_core::io::BitDepth;
use gaussian_sr_core::{Error, GridImage};
use numpy::ndarray::{Array2, Array3, ArrayViewD};
use numpy::{IntoPyArray, PyArrayDyn, PyReadonlyArrayDyn, PyUntypedArrayMethods};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(gaussian_sr, GaussianSrError, PyException, "Base class of library errors.");
create_exception!(
    gaussian_sr,
    DegenerateModelError,
    GaussianSrError,
    "The reference texture carries no variance to build a model from."
);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        Error::DegenerateModel => DegenerateModelError::new_err(e.to_string()),
        other => GaussianSrError::new_err(other.to_string()),
    }
}

fn to_grid(a: ArrayViewD<'_, f64>) -> PyResult<GridImage> {
    let shape = a.shape().to_vec();
    let (h, w, c) = match shape.as_slice() {
        [h, w] => (*h, *w, 1),
        [h, w, c] => (*h, *w, *c),
        _ => return Err(PyValueError::new_err(format!("expected a 2-D or 3-D array, got shape {shape:?}"))),
    };
    let mut data = vec![0.0; h * w * c];
    for (idx, v) in a.indexed_iter() {
        let ch = if shape.len() == 3 { idx[2] } else { 0 };
        data[ch * h * w + idx[0] * w + idx[1]] = *v;
    }
    GridImage::new(h, w, c, data).map_err(to_py)
}

fn from_grid<'py>(py: Python<'py>, u: &GridImage) -> Bound<'py, PyArrayDyn<f64>> {
    let (h, w) = u.dims();
    if u.channels() == 1 {
        Array2::from_shape_vec((h, w), u.channel(0).to_vec())
            .expect("plane length")
            .into_dyn()
            .into_pyarray(py)
    } else {
        let c = u.channels();
        Array3::from_shape_fn((h, w, c), |(i, j, k)| u.channel(k)[i * w + j])
            .into_dyn()
            .into_pyarray(py)
    }
}

fn image(a: &PyReadonlyArrayDyn<'_, f64>) -> PyResult<GridImage> {
    if a.ndim() == 0 {
        return Err(PyValueError::new_err("expected an image array"));
    }
    to_grid(a.as_array())
}

/// Texton of an image: the mean-free kernel scaled by `1/sqrt(HW)`.
#[pyclass(name = "Texton", frozen, module = "gaussian_sr")]
struct PyTexton {
    inner: core::Texton,
}

#[pymethods]
impl PyTexton {
    #[new]
    fn new(img: PyReadonlyArrayDyn<'_, f64>) -> PyResult<Self> {
        Ok(Self {
            inner: core::compute_texton(&image(&img)?),
        })
    }

    #[getter]
    fn kernel<'py>(&self, py: Python<'py>) -> Bound<'py, PyArrayDyn<f64>> {
        from_grid(py, &self.inner.kernel)
    }

    #[getter]
    fn source_mean(&self) -> Vec<f64> {
        self.inner.source_mean.clone()
    }

    /// Covariance kernel `t ⋆ flip(t)`.
    fn covariance<'py>(&self, py: Python<'py>) -> Bound<'py, PyArrayDyn<f64>> {
        from_grid(py, &core::adsn_covariance_kernel(&self.inner))
    }

    /// Unconditional texture sample `mean + t ⋆ W` with `W` drawn from `seed`.
    fn sample<'py>(&self, py: Python<'py>, seed: u64) -> PyResult<Bound<'py, PyArrayDyn<f64>>> {
        let (m, n) = self.inner.dims();
        let x = core::adsn_sample(&self.inner, &core::draw_standard_noise(m, n, seed)).map_err(to_py)?;
        Ok(from_grid(py, &x.offset_channels(&self.inner.source_mean)))
    }
}

/// Texture model and kriging kernels for one zoom factor.
#[pyclass(name = "SRModel", frozen, module = "gaussian_sr")]
struct PySRModel {
    inner: core::SRModel,
}

#[pymethods]
impl PySRModel {
    #[new]
    #[pyo3(signature = (reference, factor, consistent_texton = false, tol = core::DEFAULT_TOL_REL))]
    fn new(
        py: Python<'_>,
        reference: PyReadonlyArrayDyn<'_, f64>,
        factor: usize,
        consistent_texton: bool,
        tol: f64,
    ) -> PyResult<Self> {
        let reference = image(&reference)?;
        let options = core::ModelOptions {
            tol_rel: tol,
            consistent_texton,
        };
        let dims = reference.dims();
        let inner = py
            .detach(|| core::build_sr_model(&reference, factor, dims, options))
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn factor(&self) -> usize {
        self.inner.operator().factor()
    }

    #[getter]
    fn hr_shape(&self) -> (usize, usize) {
        self.inner.hr_dims()
    }

    #[getter]
    fn lr_shape(&self) -> (usize, usize) {
        self.inner.lr_dims()
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels()
    }

    /// Deterministic kriging component `E[X | A X = lr]`.
    fn kriging<'py>(&self, py: Python<'py>, lr: PyReadonlyArrayDyn<'_, f64>) -> PyResult<Bound<'py, PyArrayDyn<f64>>> {
        let lr = image(&lr)?;
        let k = py
            .detach(|| self.inner.condition(&lr).map(|c| c.kriging_part().clone()))
            .map_err(to_py)?;
        Ok(from_grid(py, &k))
    }

    /// One conditional sample.
    fn sample<'py>(
        &self,
        py: Python<'py>,
        lr: PyReadonlyArrayDyn<'_, f64>,
        seed: u64,
    ) -> PyResult<Bound<'py, PyArrayDyn<f64>>> {
        let lr = image(&lr)?;
        let s = py.detach(|| core::sr_sample(&self.inner, &lr, seed)).map_err(to_py)?;
        Ok(from_grid(py, &s.sr))
    }

    /// Sample with its parts: keys `sr`, `kriging`, `innovation`, `seed`.
    fn sample_components<'py>(
        &self,
        py: Python<'py>,
        lr: PyReadonlyArrayDyn<'_, f64>,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let lr = image(&lr)?;
        let s = py.detach(|| core::sr_sample(&self.inner, &lr, seed)).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("sr", from_grid(py, &s.sr))?;
        d.set_item("kriging", from_grid(py, &s.kriging_part))?;
        d.set_item("innovation", from_grid(py, &s.innovation_part))?;
        d.set_item("seed", s.seed)?;
        Ok(d)
    }

    /// One sample per seed, in order; the model is solved once.
    fn samples<'py>(
        &self,
        py: Python<'py>,
        lr: PyReadonlyArrayDyn<'_, f64>,
        seeds: Vec<u64>,
    ) -> PyResult<Vec<Bound<'py, PyArrayDyn<f64>>>> {
        let lr = image(&lr)?;
        let batch = py
            .detach(|| core::sr_sample_batch(&self.inner, &lr, &seeds))
            .map_err(to_py)?;
        Ok(batch.iter().map(|s| from_grid(py, &s.sr)).collect())
    }

    /// Writes the solved kernels in the binary cache format.
    fn save_kernels(&self, path: std::path::PathBuf) -> PyResult<()> {
        core::save_kernels(self.inner.kernels(), path).map_err(to_py)
    }
}

/// Zooms out by `factor` with the antialiased bicubic operator.
#[pyfunction]
fn degrade<'py>(py: Python<'py>, img: PyReadonlyArrayDyn<'_, f64>, factor: usize) -> PyResult<Bound<'py, PyArrayDyn<f64>>> {
    let u = image(&img)?;
    let op = core::build_downscale_kernel(factor).map_err(to_py)?;
    Ok(from_grid(py, &core::apply_degrade(&op, &u).map_err(to_py)?))
}

/// Adjoint of [`degrade`], mapping an LR image to `hr_shape`.
#[pyfunction]
fn degrade_adjoint<'py>(
    py: Python<'py>,
    img: PyReadonlyArrayDyn<'_, f64>,
    factor: usize,
    hr_shape: (usize, usize),
) -> PyResult<Bound<'py, PyArrayDyn<f64>>> {
    let y = image(&img)?;
    let op = core::build_downscale_kernel(factor).map_err(to_py)?;
    Ok(from_grid(py, &core::apply_degrade_adjoint(&op, &y, hr_shape).map_err(to_py)?))
}

/// Returns `(periodic, smooth)` with `periodic + smooth == img`.
#[pyfunction]
fn periodic_smooth<'py>(
    py: Python<'py>,
    img: PyReadonlyArrayDyn<'_, f64>,
) -> PyResult<(Bound<'py, PyArrayDyn<f64>>, Bound<'py, PyArrayDyn<f64>>)> {
    let d = core::periodic_smooth_decompose(&image(&img)?);
    Ok((from_grid(py, &d.periodic), from_grid(py, &d.smooth)))
}

#[pyfunction]
#[pyo3(signature = (a, b, peak = 255.0))]
fn psnr(a: PyReadonlyArrayDyn<'_, f64>, b: PyReadonlyArrayDyn<'_, f64>, peak: f64) -> PyResult<f64> {
    core::psnr(&image(&a)?, &image(&b)?, peak).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (a, b, peak = 255.0))]
fn ssim(a: PyReadonlyArrayDyn<'_, f64>, b: PyReadonlyArrayDyn<'_, f64>, peak: f64) -> PyResult<f64> {
    core::ssim(&image(&a)?, &image(&b)?, peak).map_err(to_py)
}

#[pyfunction]
fn load_image<'py>(py: Python<'py>, path: std::path::PathBuf) -> PyResult<Bound<'py, PyArrayDyn<f64>>> {
    Ok(from_grid(py, &core::load_image(path).map_err(to_py)?))
}

#[pyfunction]
#[pyo3(signature = (img, path, depth = 8))]
fn save_image(img: PyReadonlyArrayDyn<'_, f64>, path: std::path::PathBuf, depth: u32) -> PyResult<()> {
    let depth = BitDepth::from_bits(depth).map_err(to_py)?;
    core::save_image(&image(&img)?, path, depth).map_err(to_py)
}

/// Runs the dense-matrix certification; returns `(name, passed, value, tolerance)` rows.
#[pyfunction]
#[pyo3(signature = (size = 16, factor = 2, seed = 1))]
fn oracle_check(size: usize, factor: usize, seed: u64) -> PyResult<Vec<(String, bool, f64, f64)>> {
    let rows = core::oracle::run_certification(size, factor, seed).map_err(to_py)?;
    Ok(rows
        .into_iter()
        .map(|o| (o.name.to_string(), o.passed, o.value, o.tolerance))
        .collect())
}

#[pymodule]
fn gaussian_sr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("NOISE_GENERATOR", core::NOISE_GENERATOR)?;
    m.add("GaussianSrError", m.py().get_type::<GaussianSrError>())?;
    m.add("DegenerateModelError", m.py().get_type::<DegenerateModelError>())?;
    m.add_class::<PyTexton>()?;
    m.add_class::<PySRModel>()?;
    m.add_function(wrap_pyfunction!(degrade, m)?)?;
    m.add_function(wrap_pyfunction!(degrade_adjoint, m)?)?;
    m.add_function(wrap_pyfunction!(periodic_smooth, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(load_image, m)?)?;
    m.add_function(wrap_pyfunction!(save_image, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_check, m)?)?;
    Ok(())
}
