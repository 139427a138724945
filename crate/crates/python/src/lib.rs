use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qfi3d::oracle::{sld_qfi, DerivativeRoute, OracleGrid};
use qfi3d::overlap::overlap_data;
use qfi3d::sweep::{write_sweep, CSV_HEADER};
use qfi3d::verify::{run_suite, Suite};
use qfi3d::{BrightnessSplit, CenteringConvention, Error, PupilModel, QfiMatrix, QuadratureSpec, SeparationVector};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(msg) => PyOSError::new_err(msg),
        Error::InvalidInput(_) | Error::Config(_) | Error::PupilFormat(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn separation(l: [f64; 3]) -> PyResult<SeparationVector> {
    let l = SeparationVector::from_array(l);
    l.validate().map_err(to_py)?;
    Ok(l)
}

fn convention(name: &str) -> PyResult<CenteringConvention> {
    name.parse().map_err(to_py)
}

fn rows(h: &QfiMatrix) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| h.get(i, j)))
}

fn pupil_model(path: Option<PathBuf>) -> PyResult<PupilModel> {
    match path {
        Some(p) => PupilModel::load(&p).map_err(to_py),
        None => Ok(PupilModel::CircularClear),
    }
}

/// QFI evaluator for one pupil; the clear circular aperture unless a pupil grid file is given.
#[pyclass(name = "Evaluator")]
struct PyEvaluator {
    inner: qfi3d::QfiEvaluator,
}

#[pymethods]
impl PyEvaluator {
    #[new]
    #[pyo3(signature = (pupil=None))]
    fn new(pupil: Option<PathBuf>) -> PyResult<Self> {
        let inner = qfi3d::QfiEvaluator::new(pupil_model(pupil)?, QuadratureSpec::default()).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Closed-form QFI as a 3x3 nested list.
    #[pyo3(signature = (l, dp2, convention="centroid"))]
    fn qfi(&self, l: [f64; 3], dp2: f64, convention: &str) -> PyResult<[[f64; 3]; 3]> {
        let b = BrightnessSplit::from_dp2(dp2).map_err(to_py)?;
        let closed = self.inner.closed(&separation(l)?, &b, self::convention(convention)?).map_err(to_py)?;
        Ok(rows(&closed.qfi))
    }

    /// QFI assembled from the eigenvector coefficient tables.
    #[pyo3(signature = (l, dp2, convention="centroid"))]
    fn coefficient_path(&self, l: [f64; 3], dp2: f64, convention: &str) -> PyResult<[[f64; 3]; 3]> {
        let b = BrightnessSplit::from_dp2(dp2).map_err(to_py)?;
        let path = self.inner.coefficient_path(&separation(l)?, &b, self::convention(convention)?).map_err(to_py)?;
        Ok(rows(&path.qfi))
    }

    /// One sweep record as a dict keyed by the CSV header.
    #[pyo3(signature = (l, dp2, convention="centroid"))]
    fn point<'py>(&self, py: Python<'py>, l: [f64; 3], dp2: f64, convention: &str) -> PyResult<Bound<'py, PyDict>> {
        let r = qfi3d::run_point(&self.inner, &separation(l)?, dp2, self::convention(convention)?).map_err(to_py)?;
        let d = PyDict::new(py);
        let values = [r.dp2, r.l.x, r.l.y, r.l.z, r.delta, r.phi];
        let keys = CSV_HEADER.split(',');
        let numbers = values.into_iter().chain(r.h).chain(r.qcrb);
        for (k, v) in keys.zip(numbers) {
            d.set_item(k, v)?;
        }
        d.set_item("status", r.status.as_str())?;
        Ok(d)
    }
}

/// Diagonal of the inverse of a 3x3 QFI matrix.
#[pyfunction]
fn qcrb(h: [[f64; 3]; 3]) -> PyResult<(f64, f64, f64)> {
    let m = QfiMatrix::from_rows(h);
    let q = qfi3d::qcrb_from_qfi(&m).map_err(to_py)?;
    Ok((q.x, q.y, q.z))
}

/// Brute-force QFI on a polar grid with `n` radial nodes.
#[pyfunction]
#[pyo3(signature = (l, dp2, convention="centroid", n=256))]
fn oracle_qfi(py: Python<'_>, l: [f64; 3], dp2: f64, convention: &str, n: usize) -> PyResult<[[f64; 3]; 3]> {
    let l = separation(l)?;
    let b = BrightnessSplit::from_dp2(dp2).map_err(to_py)?;
    let conv = self::convention(convention)?;
    let result = py.detach(|| {
        let grid = OracleGrid::circular(n)?;
        sld_qfi(&l, &b, conv, &grid, DerivativeRoute::Analytic)
    });
    Ok(rows(&result.map_err(to_py)?.qfi))
}

/// `(delta, phi, d_delta, d_phi)` of the overlap integral for the clear circular aperture.
#[pyfunction]
fn overlap(l: [f64; 3]) -> PyResult<(f64, f64, [f64; 3], [f64; 3])> {
    let o = overlap_data(&separation(l)?, &PupilModel::CircularClear, &QuadratureSpec::default()).map_err(to_py)?;
    Ok((o.delta, o.phi, o.d_delta.into(), o.d_phi.into()))
}

#[pyfunction]
fn brightness_ratio(dp2: f64) -> PyResult<f64> {
    qfi3d::qfi::dp2_to_brightness_ratio(dp2).map_err(to_py)
}

/// Runs a sweep from a config file (or the defaults) and returns the record count.
#[pyfunction]
#[pyo3(signature = (out, config=None, resume=false))]
fn sweep(py: Python<'_>, out: PathBuf, config: Option<PathBuf>, resume: bool) -> PyResult<usize> {
    let cfg = match config {
        Some(path) => qfi3d::SweepConfig::load(&path).map_err(to_py)?,
        None => qfi3d::SweepConfig::default(),
    };
    let summary = py.detach(|| write_sweep(&cfg, &out, resume)).map_err(to_py)?;
    Ok(summary.total)
}

/// Runs a named verification suite; returns `(passed, report_lines)`.
#[pyfunction]
fn verify(py: Python<'_>, suite: &str) -> PyResult<(bool, Vec<String>)> {
    let suite: Suite = suite.parse().map_err(to_py)?;
    let report = py.detach(|| run_suite(suite)).map_err(to_py)?;
    Ok((report.passed(), report.checks.iter().map(|c| c.to_string()).collect()))
}

#[pymodule]
fn pyqfi3d(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEvaluator>()?;
    m.add_function(wrap_pyfunction!(qcrb, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_qfi, m)?)?;
    m.add_function(wrap_pyfunction!(overlap, m)?)?;
    m.add_function(wrap_pyfunction!(brightness_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add("CSV_HEADER", CSV_HEADER)?;
    Ok(())
}
