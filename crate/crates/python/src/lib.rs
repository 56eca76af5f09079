//! Python bindings.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use schottky_dilog::elliptic::{elliptic_d2 as elliptic_d2_rs, EllipticParams};
use schottky_dilog::exec::{Exec, ExecMode};
use schottky_dilog::moebius::{ComplexPoint, MoebiusMap};
use schottky_dilog::poincare::{self, SeriesIntegrand, WeightMode};
use schottky_dilog::polylog;
use schottky_dilog::psmeasure::{self, NayataniDensity, PSMeasure};
use schottky_dilog::schottky::{GeneratorSpec, GroupSpec, Letter, SchottkyGroup};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn point(z: Option<Complex64>) -> ComplexPoint {
    z.map(ComplexPoint::from).unwrap_or(ComplexPoint::Infinity)
}

fn unpoint(z: ComplexPoint) -> Option<Complex64> {
    z.finite()
}

fn exec(threads: usize, fast: bool) -> Exec {
    Exec { threads: threads.max(1), mode: if fast { ExecMode::Fast } else { ExecMode::Strict } }
}

fn weight_mode(mode: &str) -> PyResult<WeightMode> {
    match mode {
        "holomorphic" => Ok(WeightMode::Holomorphic),
        "absolute" => Ok(WeightMode::Absolute),
        other => Err(PyValueError::new_err(format!("weight must be 'holomorphic' or 'absolute', got {other:?}"))),
    }
}

/// `Li_n(z)`; returns `(value, error_bound)`.
#[pyfunction]
#[pyo3(signature = (n, z, tol = 1e-12))]
fn li(n: u32, z: Complex64, tol: f64) -> PyResult<(Complex64, f64)> {
    let r = polylog::li(n, z.into(), tol).map_err(value_error)?;
    Ok((r.value, r.error_bound))
}

/// Bloch-Wigner `D(z)`; `None` stands for infinity.
#[pyfunction]
fn bloch_wigner(z: Option<Complex64>) -> f64 {
    polylog::bloch_wigner(point(z))
}

#[pyfunction]
#[pyo3(signature = (m, z, tol = 1e-12))]
fn ramakrishnan_l(m: u32, z: Complex64, tol: f64) -> PyResult<(Complex64, f64)> {
    let r = polylog::ramakrishnan_l(m, z.into(), tol).map_err(value_error)?;
    Ok((r.value, r.error_bound))
}

#[pyfunction]
#[pyo3(signature = (m, z, tol = 1e-12))]
fn ramakrishnan_d(m: u32, z: Complex64, tol: f64) -> PyResult<(f64, f64)> {
    let r = polylog::ramakrishnan_d(m, z.into(), tol).map_err(value_error)?;
    Ok((r.value, r.error_bound))
}

#[pyfunction]
#[pyo3(signature = (q, x, tol = 1e-10))]
fn elliptic_d2(q: Complex64, x: Complex64, tol: f64) -> PyResult<(f64, f64)> {
    let p = EllipticParams::new(q, x.into(), tol).map_err(value_error)?;
    let r = elliptic_d2_rs(&p);
    Ok((r.value, r.error_bound))
}

#[pyclass(name = "Moebius", frozen, from_py_object)]
#[derive(Clone)]
struct PyMoebius(MoebiusMap);

#[pymethods]
impl PyMoebius {
    #[new]
    fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> PyResult<Self> {
        MoebiusMap::new(a, b, c, d).map(PyMoebius).map_err(value_error)
    }

    #[staticmethod]
    fn from_fixed_points(repelling: Option<Complex64>, attracting: Option<Complex64>, multiplier: Complex64) -> PyResult<Self> {
        MoebiusMap::from_fixed_points_multiplier(point(repelling), point(attracting), multiplier)
            .map(PyMoebius)
            .map_err(value_error)
    }

    fn entries(&self) -> [Complex64; 4] {
        self.0.entries()
    }

    fn apply(&self, z: Option<Complex64>) -> Option<Complex64> {
        unpoint(self.0.apply(point(z)))
    }

    fn compose(&self, other: &PyMoebius) -> Self {
        PyMoebius(self.0.compose(&other.0))
    }

    fn inverse(&self) -> Self {
        PyMoebius(self.0.inverse())
    }

    fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    fn classify(&self) -> String {
        format!("{:?}", self.0.classify()).to_lowercase()
    }

    /// `(repelling, attracting, multiplier)` of a loxodromic map.
    fn fixed_points(&self) -> PyResult<(Option<Complex64>, Option<Complex64>, Complex64)> {
        let fp = self.0.fixed_points_multiplier().map_err(value_error)?;
        Ok((unpoint(fp.repelling), unpoint(fp.attracting), fp.multiplier))
    }

    fn spherical_derivative(&self, z: Option<Complex64>) -> f64 {
        self.0.spherical_derivative(point(z))
    }

    fn __repr__(&self) -> String {
        let [a, b, c, d] = self.0.entries();
        format!("Moebius({a}, {b}, {c}, {d})")
    }
}

#[pyclass(name = "SchottkyGroup", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGroup(SchottkyGroup);

#[pymethods]
impl PyGroup {
    /// Group generated by the given loxodromic maps, with isometric circles.
    #[new]
    fn new(generators: Vec<PyMoebius>) -> PyResult<Self> {
        let spec = GroupSpec {
            generators: generators.into_iter().map(|g| GeneratorSpec::Matrix(g.0)).collect(),
            ..Default::default()
        };
        SchottkyGroup::build(&spec).map(PyGroup).map_err(value_error)
    }

    #[staticmethod]
    #[pyo3(signature = (radius = 0.5))]
    fn standard(radius: f64) -> PyResult<Self> {
        SchottkyGroup::standard_test_group(radius).map(PyGroup).map_err(value_error)
    }

    #[staticmethod]
    fn cyclic() -> Self {
        PyGroup(SchottkyGroup::cyclic_diagnostic_group())
    }

    #[staticmethod]
    fn trivial() -> Self {
        PyGroup(SchottkyGroup::trivial())
    }

    #[getter]
    fn rank(&self) -> usize {
        self.0.rank()
    }

    #[getter]
    fn kind(&self) -> String {
        format!("{:?}", self.0.kind())
    }

    fn generators(&self) -> Vec<PyMoebius> {
        self.0.generators().iter().copied().map(PyMoebius).collect()
    }

    /// `(center, radius)` of the image disk of each letter.
    fn disks(&self) -> Vec<(Complex64, f64)> {
        self.0.disks().iter().map(|d| (d.center, d.radius)).collect()
    }

    fn shell_size(&self, n: usize) -> u64 {
        self.0.shell_size(n)
    }

    /// Number of reduced words of length at most `max_len`.
    fn count_words(&self, max_len: usize) -> usize {
        self.0.enumerate(max_len).count()
    }

    #[pyo3(signature = (resolution = 0.005, max_depth = 10, threads = 1))]
    fn estimate_delta<'py>(&self, py: Python<'py>, resolution: f64, max_depth: usize, threads: usize) -> PyResult<Bound<'py, PyDict>> {
        let e = self.0.estimate_delta(resolution, max_depth, exec(threads, false)).map_err(value_error)?;
        let d = PyDict::new(py);
        d.set_item("delta", e.delta)?;
        d.set_item("bracket", e.bracket)?;
        d.set_item("shell_ratios", e.shell_ratios)?;
        Ok(d)
    }

    fn limit_set(&self, depth: usize) -> PyResult<Vec<Option<Complex64>>> {
        let s = self.0.limit_set(depth).map_err(value_error)?;
        Ok(s.points.into_iter().map(unpoint).collect())
    }

    /// Series of the Bloch-Wigner function at `z`.
    #[pyo3(signature = (z, weight = "holomorphic", max_len = 10, tol = 1e-6, threads = 1, fast = false))]
    #[allow(clippy::too_many_arguments)]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        z: Complex64,
        weight: &str,
        max_len: usize,
        tol: f64,
        threads: usize,
        fast: bool,
    ) -> PyResult<Bound<'py, PyDict>> {
        let ev = poincare::evaluate(
            &self.0,
            &SeriesIntegrand::bloch_wigner(),
            z.into(),
            weight_mode(weight)?,
            max_len,
            tol,
            exec(threads, fast),
        )
        .map_err(value_error)?;
        let d = PyDict::new(py);
        d.set_item("value", ev.value)?;
        d.set_item("tail_estimate", ev.tail_estimate)?;
        d.set_item("verdict", format!("{:?}", ev.verdict).to_lowercase())?;
        d.set_item("weight_sums", ev.weight_sums)?;
        d.set_item("terms", ev.terms)?;
        Ok(d)
    }

    /// Largest relative automorphy residual of `word` over `points`.
    #[pyo3(signature = (points, word, weight = "holomorphic", max_len = 8, tol = 1e-6))]
    fn automorphy_residual(&self, points: Vec<Complex64>, word: Vec<Letter>, weight: &str, max_len: usize, tol: f64) -> PyResult<f64> {
        let pts: Vec<ComplexPoint> = points.into_iter().map(ComplexPoint::from).collect();
        let r = poincare::automorphy_residual(
            &self.0,
            &SeriesIntegrand::bloch_wigner(),
            &pts,
            &word,
            weight_mode(weight)?,
            max_len,
            tol,
            Exec::default(),
        )
        .map_err(value_error)?;
        Ok(r.residual)
    }

    fn __repr__(&self) -> String {
        format!("SchottkyGroup(rank={}, kind={:?})", self.0.rank(), self.0.kind())
    }
}

#[pyclass(name = "PSMeasure", frozen)]
struct PyMeasure(PSMeasure);

#[pymethods]
impl PyMeasure {
    #[staticmethod]
    #[pyo3(signature = (group, delta, depth, threads = 1))]
    fn build(group: &PyGroup, delta: f64, depth: usize, threads: usize) -> PyResult<Self> {
        psmeasure::build_ps(&group.0, delta, depth, exec(threads, false)).map(PyMeasure).map_err(value_error)
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.0.delta()
    }

    #[getter]
    fn depth(&self) -> usize {
        self.0.depth()
    }

    fn atoms(&self) -> Vec<(Option<Complex64>, f64)> {
        self.0.atoms().iter().map(|a| (unpoint(a.point), a.weight)).collect()
    }

    fn total_mass(&self) -> f64 {
        self.0.total_mass()
    }

    fn residual(&self, group: &PyGroup) -> f64 {
        psmeasure::quasi_invariance_residual(&self.0, &group.0, &psmeasure::default_test_functions())
    }

    /// Monte-Carlo `∫ F^exponent |D| dA`; returns `(estimate, stderr, heavy_tail)`.
    #[pyo3(signature = (samples = 10000, seed = 0, exponent = None))]
    fn bers(&self, samples: usize, seed: u64, exponent: Option<f64>) -> PyResult<(f64, f64, bool)> {
        let density = NayataniDensity::new(self.0.clone());
        let b = poincare::bers_integral(&density, &SeriesIntegrand::bloch_wigner(), samples, seed, exponent, Exec::default())
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        Ok((b.estimate, b.stderr, b.heavy_tail))
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.0.write_csv(&mut buf).map_err(value_error)?;
        String::from_utf8(buf).map_err(value_error)
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        PSMeasure::read_csv(text.as_bytes()).map(PyMeasure).map_err(value_error)
    }
}

#[pymodule]
fn schottky_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(li, m)?)?;
    m.add_function(wrap_pyfunction!(bloch_wigner, m)?)?;
    m.add_function(wrap_pyfunction!(ramakrishnan_l, m)?)?;
    m.add_function(wrap_pyfunction!(ramakrishnan_d, m)?)?;
    m.add_function(wrap_pyfunction!(elliptic_d2, m)?)?;
    m.add_class::<PyMoebius>()?;
    m.add_class::<PyGroup>()?;
    m.add_class::<PyMeasure>()?;
    Ok(())
}
