//! Python bindings for `signflip_core`.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use signflip_core::eig::{self, EigOptions, SpectrumRecord};
use signflip_core::experiments::{self, SweepPlan};
use signflip_core::fem::{self, AssembledSystem, HalfPlaneLoad};
use signflip_core::material::{self, ContrastClass, MaterialContrast};
use signflip_core::mesh::{self, CanonicalMeshParams, Geometry, TriMesh};
use signflip_core::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Singular { .. }
        | Error::NoConvergence { .. }
        | Error::Sweep { .. }
        | Error::MassNotSpd { .. }
        | Error::DenseCap { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(name = "Contrast", frozen)]
#[derive(Clone)]
struct PyContrast(MaterialContrast);

#[pymethods]
impl PyContrast {
    #[new]
    fn new(sigma_plus: f64, sigma_minus: f64) -> PyResult<Self> {
        MaterialContrast::new(sigma_plus, sigma_minus).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn from_kappa(kappa: f64) -> PyResult<Self> {
        MaterialContrast::from_kappa(kappa).map(Self).map_err(to_py)
    }

    #[getter]
    fn sigma_plus(&self) -> f64 {
        self.0.sigma_plus()
    }

    #[getter]
    fn sigma_minus(&self) -> f64 {
        self.0.sigma_minus()
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.0.kappa()
    }

    /// One of "critical", "outside-critical", "limit-third", "forbidden".
    #[getter]
    fn class_name(&self) -> &'static str {
        match self.0.class() {
            ContrastClass::CriticalInterval => "critical",
            ContrastClass::OutsideCritical => "outside-critical",
            ContrastClass::LimitThird => "limit-third",
            ContrastClass::Forbidden => "forbidden",
        }
    }

    fn is_critical(&self) -> bool {
        self.0.is_critical()
    }

    fn mu(&self) -> PyResult<Complex64> {
        material::compute_mu(&self.0).map_err(to_py)
    }

    /// Period of the spectrum in `ln delta`.
    fn period(&self) -> PyResult<f64> {
        material::period_lndelta(&self.0).map_err(to_py)
    }

    fn lattice(&self, window: f64) -> PyResult<Vec<Complex64>> {
        material::lattice(&self.0, window).map_err(to_py)
    }

    fn delta_n(&self, n: u32) -> PyResult<f64> {
        material::delta_n(&self.0, n).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Contrast(sigma_plus={}, sigma_minus={})", self.0.sigma_plus(), self.0.sigma_minus())
    }
}

#[pyclass(name = "Mesh", frozen)]
struct PyMesh(TriMesh);

#[pymethods]
impl PyMesh {
    #[staticmethod]
    #[pyo3(signature = (delta, n_radial=32, n_angular_minus=16))]
    fn canonical(delta: f64, n_radial: usize, n_angular_minus: usize) -> PyResult<Self> {
        mesh::build_canonical(&CanonicalMeshParams::new(delta, n_radial, n_angular_minus))
            .map(Self)
            .map_err(to_py)
    }

    #[staticmethod]
    fn unit_square(n: usize) -> PyResult<Self> {
        TriMesh::unit_square(n).map(Self).map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (path, canonical=false))]
    fn read(path: std::path::PathBuf, canonical: bool) -> PyResult<Self> {
        let g = if canonical { Geometry::Canonical } else { Geometry::Generic };
        mesh::read_mesh_file(&path, g).map(Self).map_err(to_py)
    }

    fn write(&self, path: std::path::PathBuf) -> PyResult<()> {
        let f = std::fs::File::create(path).map_err(|e| to_py(e.into()))?;
        mesh::write_mesh(&self.0, std::io::BufWriter::new(f)).map_err(to_py)
    }

    #[getter]
    fn nodes(&self) -> Vec<(f64, f64)> {
        self.0.nodes.iter().map(|p| (p[0], p[1])).collect()
    }

    #[getter]
    fn triangles(&self) -> Vec<(usize, usize, usize)> {
        self.0.triangles.iter().map(|t| (t.nodes[0], t.nodes[1], t.nodes[2])).collect()
    }

    /// Region tag per triangle.
    #[getter]
    fn regions(&self) -> Vec<u8> {
        self.0.triangles.iter().map(|t| t.region.tag()).collect()
    }

    #[getter]
    fn boundary_nodes(&self) -> Vec<usize> {
        self.0.boundary_nodes.clone()
    }

    fn h_max(&self) -> f64 {
        self.0.h_max()
    }

    fn total_area(&self) -> f64 {
        self.0.total_area()
    }

    fn __len__(&self) -> usize {
        self.0.triangles.len()
    }
}

#[pyclass(name = "Spectrum", frozen, get_all)]
struct PySpectrum {
    delta: f64,
    eigenvalues: Vec<f64>,
    residuals: Vec<f64>,
    n_neg: usize,
    n_pos: usize,
    solver_tag: String,
    seed: u64,
}

impl From<SpectrumRecord> for PySpectrum {
    fn from(r: SpectrumRecord) -> Self {
        Self {
            delta: r.delta,
            eigenvalues: r.eigenvalues,
            residuals: r.residuals,
            n_neg: r.n_neg,
            n_pos: r.n_pos,
            solver_tag: r.solver_tag.to_string(),
            seed: r.seed,
        }
    }
}

#[pymethods]
impl PySpectrum {
    fn __repr__(&self) -> String {
        format!(
            "Spectrum(delta={}, n_neg={}, n_pos={}, solver={})",
            self.delta, self.n_neg, self.n_pos, self.solver_tag
        )
    }
}

/// Assembled pencil `(A, M)` on the free nodes of a mesh.
#[pyclass(name = "System", frozen)]
struct PySystem(AssembledSystem);

#[pymethods]
impl PySystem {
    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn bandwidth(&self) -> usize {
        self.0.bandwidth
    }

    /// `(negative, zero, positive)` eigenvalue counts relative to `shift`.
    #[pyo3(signature = (shift=0.0))]
    fn inertia(&self, shift: f64) -> (usize, usize, usize) {
        let i = eig::inertia(&self.0, shift);
        (i.negative, i.zero, i.positive)
    }

    #[pyo3(signature = (k=10, tol=eig::DEFAULT_TOL, seed=eig::DEFAULT_SEED, delta=f64::NAN))]
    fn smallest_modulus(&self, py: Python<'_>, k: usize, tol: f64, seed: u64, delta: f64) -> PyResult<PySpectrum> {
        let opts = EigOptions {
            k,
            tol,
            seed,
            ..EigOptions::default()
        };
        py.detach(|| eig::smallest_modulus(&self.0, &opts, delta))
            .map(Into::into)
            .map_err(to_py)
    }

    #[pyo3(signature = (k=10, delta=f64::NAN, cap=eig::DEFAULT_DENSE_CAP))]
    fn dense_smallest_modulus(&self, k: usize, delta: f64, cap: usize) -> PyResult<PySpectrum> {
        eig::dense_smallest_modulus(&self.0, k, delta, cap)
            .map(Into::into)
            .map_err(to_py)
    }

    fn min_eigenvalue(&self) -> Option<f64> {
        eig::min_eigenvalue(&self.0, 1e-10)
    }
}

#[pyfunction]
fn assemble(mesh: &PyMesh, contrast: &PyContrast) -> PyResult<PySystem> {
    fem::assemble(&mesh.0, &contrast.0).map(PySystem).map_err(to_py)
}

/// H^1_0 seminorm of the source solution on one mesh.
#[pyfunction]
#[pyo3(signature = (mesh, contrast, tol=1e-12))]
fn source_norm(mesh: &PyMesh, contrast: &PyContrast, tol: f64) -> PyResult<f64> {
    let system = fem::assemble(&mesh.0, &contrast.0).map_err(to_py)?;
    let rhs = fem::load_vector(&mesh.0, &HalfPlaneLoad::default());
    let u = eig::solve_source(&system, &rhs, tol).map_err(to_py)?;
    fem::h1_seminorm(&mesh.0, &u).map_err(to_py)
}

fn plan(
    contrast: &PyContrast,
    deltas: Vec<f64>,
    k: usize,
    n_radial: usize,
    n_angular_minus: usize,
    tol: f64,
    seed: u64,
) -> PyResult<SweepPlan> {
    let mut p = SweepPlan::new(
        contrast.0,
        deltas,
        CanonicalMeshParams::new(0.5, n_radial, n_angular_minus),
    );
    p.k = k;
    p.tol = tol;
    p.seed = seed;
    p.validate().map_err(to_py)?;
    Ok(p)
}

/// Spectra at each `delta`, in input order.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (contrast, deltas, k=10, n_radial=32, n_angular_minus=16, tol=eig::DEFAULT_TOL, seed=eig::DEFAULT_SEED))]
fn sweep(
    py: Python<'_>,
    contrast: &PyContrast,
    deltas: Vec<f64>,
    k: usize,
    n_radial: usize,
    n_angular_minus: usize,
    tol: f64,
    seed: u64,
) -> PyResult<Vec<PySpectrum>> {
    let p = plan(contrast, deltas, k, n_radial, n_angular_minus, tol, seed)?;
    let records = py.detach(|| experiments::run_sweep(&p)).map_err(|f| to_py(f.error))?;
    Ok(records.into_iter().map(Into::into).collect())
}

/// `(n, delta_predicted, delta_found)` for each crossing up to `n_max`.
#[pyfunction]
#[pyo3(signature = (contrast, n_max=3, n_radial=32, n_angular_minus=16))]
fn crossings(
    py: Python<'_>,
    contrast: &PyContrast,
    n_max: u32,
    n_radial: usize,
    n_angular_minus: usize,
) -> PyResult<Vec<(u32, f64, Option<f64>)>> {
    let grid = experiments::log_uniform_grid(-0.1, -2.5, 400).map_err(to_py)?;
    let p = plan(contrast, grid, 10, n_radial, n_angular_minus, eig::DEFAULT_TOL, eig::DEFAULT_SEED)?;
    let reports = py.detach(|| experiments::locate_crossings(&p, n_max)).map_err(to_py)?;
    Ok(reports
        .into_iter()
        .map(|r| (r.n, r.delta_predicted, r.delta_found))
        .collect())
}

#[pymodule]
fn signflip(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", signflip_core::VERSION)?;
    m.add_class::<PyContrast>()?;
    m.add_class::<PyMesh>()?;
    m.add_class::<PySystem>()?;
    m.add_class::<PySpectrum>()?;
    m.add_function(wrap_pyfunction!(assemble, m)?)?;
    m.add_function(wrap_pyfunction!(source_norm, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(crossings, m)?)?;
    Ok(())
}
