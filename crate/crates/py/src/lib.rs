//! Python bindings. Tensors cross the boundary as flat lists in the crate's
//! native layout: index `(i, j, k)` of a `w × h × n` tensor lives at
//! `(i·h + j)·n + k`.

use std::path::PathBuf;

use pyo3::exceptions::{PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use strpca::batch::{solve_batch as batch_solve, BatchConfig, Graphs};
use strpca::graph::GraphConfig;
use strpca::ingest::{load_sequence as ingest_load, synth as ingest_synth, SequenceSpec, SynthSpec};
use strpca::online::{solve_online as online_solve, BasisUpdate, OnlineConfig};
use strpca::segmentation::{binarize as seg_binarize, score as seg_score, Binarize, EvalReport, MaskSequence};
use strpca::tensor;
use strpca::{Error, Mode, Tensor3};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Argument(msg) => PyValueError::new_err(msg),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn mode(m: usize) -> PyResult<Mode> {
    Mode::from_index(m).map_err(to_py)
}

#[pyclass(name = "Tensor", module = "pystrpca", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyTensor {
    inner: Tensor3,
}

#[pymethods]
impl PyTensor {
    #[new]
    fn new(w: usize, h: usize, n: usize, data: Vec<f64>) -> PyResult<Self> {
        Ok(PyTensor {
            inner: Tensor3::from_vec((w, h, n), data).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn zeros(w: usize, h: usize, n: usize) -> PyResult<Self> {
        Ok(PyTensor {
            inner: Tensor3::zeros((w, h, n)).map_err(to_py)?,
        })
    }

    /// Builds a tensor from frames given as flat column-major `w × h` lists.
    #[staticmethod]
    fn from_frames(w: usize, h: usize, frames: Vec<Vec<f64>>) -> PyResult<Self> {
        let n = frames.len();
        for (k, f) in frames.iter().enumerate() {
            if f.len() != w * h {
                return Err(PyValueError::new_err(format!("frame {k} has {} values, expected {}", f.len(), w * h)));
            }
        }
        let t = Tensor3::from_fn((w, h, n), |i, j, k| frames[k][j * w + i]).map_err(to_py)?;
        Ok(PyTensor { inner: t })
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        self.inner.dims()
    }

    fn get(&self, i: usize, j: usize, k: usize) -> PyResult<f64> {
        let (w, h, n) = self.inner.dims();
        if i >= w || j >= h || k >= n {
            return Err(PyIndexError::new_err(format!("({i}, {j}, {k}) out of range for {w}x{h}x{n}")));
        }
        Ok(self.inner.get(i, j, k))
    }

    fn to_list(&self) -> Vec<f64> {
        self.inner.as_slice().to_vec()
    }

    /// Frame `k` as a column-major list.
    fn frame(&self, k: usize) -> PyResult<Vec<f64>> {
        if k >= self.inner.dims().2 {
            return Err(PyIndexError::new_err(format!("frame {k} out of range")));
        }
        Ok(self.inner.frame_vector(k))
    }

    /// Mode-`m` unfolding as a list of rows.
    fn unfold(&self, m: usize) -> PyResult<Vec<Vec<f64>>> {
        let u = self.inner.unfold(mode(m)?);
        Ok(u.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    fn norm_fro(&self) -> f64 {
        self.inner.norm_fro()
    }

    fn tnn(&self) -> PyResult<f64> {
        tensor::tnn(&self.inner).map_err(to_py)
    }

    fn __sub__(&self, other: &PyTensor) -> PyResult<PyTensor> {
        if self.inner.dims() != other.inner.dims() {
            return Err(PyValueError::new_err("tensor dims differ"));
        }
        Ok(PyTensor {
            inner: self.inner.sub(&other.inner),
        })
    }

    fn __repr__(&self) -> String {
        let (w, h, n) = self.inner.dims();
        format!("Tensor({w}x{h}x{n})")
    }
}

#[pyclass(name = "Masks", module = "pystrpca", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyMasks {
    inner: MaskSequence,
}

#[pymethods]
impl PyMasks {
    #[getter]
    fn frame_dims(&self) -> (usize, usize) {
        self.inner.frame_dims()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn count_ones(&self) -> usize {
        self.inner.count_ones()
    }

    /// `(frame index, column-major mask)` pairs.
    fn frames(&self) -> Vec<(usize, Vec<bool>)> {
        self.inner.frames().map(|(k, f)| (k, f.to_vec())).collect()
    }

    #[staticmethod]
    fn from_frames(w: usize, h: usize, frames: Vec<Vec<bool>>) -> PyResult<Self> {
        let mut m = MaskSequence::new(w, h);
        for (k, f) in frames.into_iter().enumerate() {
            m.push(k, f).map_err(to_py)?;
        }
        Ok(PyMasks { inner: m })
    }
}

#[pyclass(name = "Report", module = "pystrpca", frozen, get_all)]
pub struct PyReport {
    tp: u64,
    fp: u64,
    fn_: u64,
    precision: f64,
    recall: f64,
    f_measure: f64,
    macro_f_measure: f64,
    json: String,
}

impl From<EvalReport> for PyReport {
    fn from(r: EvalReport) -> Self {
        PyReport {
            tp: r.counts.tp,
            fp: r.counts.fp,
            fn_: r.counts.fn_,
            precision: r.precision,
            recall: r.recall,
            f_measure: r.f_measure,
            macro_f_measure: r.macro_f_measure,
            json: r.to_json(),
        }
    }
}

#[pymethods]
impl PyReport {
    fn __repr__(&self) -> String {
        format!(
            "Report(precision={:.4}, recall={:.4}, f_measure={:.4})",
            self.precision, self.recall, self.f_measure
        )
    }
}

#[pyclass(name = "Decomposition", module = "pystrpca", frozen, get_all)]
pub struct PyDecomposition {
    background: PyTensor,
    foreground: PyTensor,
    /// Iterations for the batch solver, total columns for the online one.
    iters: usize,
    converged: bool,
}

#[pyclass(name = "Synthetic", module = "pystrpca", frozen, get_all)]
pub struct PySynthetic {
    tensor: PyTensor,
    gt: PyMasks,
    impulses: PyMasks,
    background: PyTensor,
}

fn graph_config(k: usize, patch: usize) -> PyResult<GraphConfig> {
    let g = GraphConfig {
        k,
        patch,
        ..GraphConfig::default()
    };
    g.validate().map_err(to_py)?;
    Ok(g)
}

#[pyfunction]
fn tsvt(z: &PyTensor, tau: f64) -> PyResult<PyTensor> {
    Ok(PyTensor {
        inner: tensor::tsvt(&z.inner, tau).map_err(to_py)?,
    })
}

#[pyfunction]
fn tprod(a: &PyTensor, b: &PyTensor) -> PyResult<PyTensor> {
    Ok(PyTensor {
        inner: tensor::tprod(&a.inner, &b.inner).map_err(to_py)?,
    })
}

#[pyfunction]
#[pyo3(signature = (x, *, lambda_=None, gamma1=0.9, gamma2=1.5, mu0=0.01, mu_max=10.0, rho=1.2, zeta=1e-3, max_iters=500, k=10, patch=8, shared_spatial_graph=false))]
#[allow(clippy::too_many_arguments)]
fn solve_batch(
    py: Python<'_>,
    x: &PyTensor,
    lambda_: Option<f64>,
    gamma1: f64,
    gamma2: f64,
    mu0: f64,
    mu_max: f64,
    rho: f64,
    zeta: f64,
    max_iters: usize,
    k: usize,
    patch: usize,
    shared_spatial_graph: bool,
) -> PyResult<PyDecomposition> {
    let cfg = BatchConfig {
        lambda: lambda_,
        gamma1,
        gamma2,
        mu0,
        mu_max,
        rho,
        zeta,
        max_iters,
    };
    cfg.validate().map_err(to_py)?;
    let gcfg = graph_config(k, patch)?;
    let x = x.inner.clone();
    let d = py
        .detach(move || {
            let graphs = Graphs::build(&x, &cfg, &gcfg, shared_spatial_graph)?;
            batch_solve(&x, &cfg, &graphs)
        })
        .map_err(to_py)?;
    Ok(PyDecomposition {
        background: PyTensor { inner: d.background },
        foreground: PyTensor { inner: d.foreground },
        iters: d.iters,
        converged: d.converged,
    })
}

#[pyfunction]
#[pyo3(signature = (x, *, r=10, eta=0.01, lambda_=None, lambda2=0.5, gamma1=0.9, gamma2=1.5, omega=1e-6, window=10, basis_update="closed_form", max_inner=100, graph_init=false, seed=0, modes=vec![1, 2, 3], k=10, patch=8))]
#[allow(clippy::too_many_arguments)]
fn solve_online(
    py: Python<'_>,
    x: &PyTensor,
    r: usize,
    eta: f64,
    lambda_: Option<f64>,
    lambda2: f64,
    gamma1: f64,
    gamma2: f64,
    omega: f64,
    window: usize,
    basis_update: &str,
    max_inner: usize,
    graph_init: bool,
    seed: u64,
    modes: Vec<usize>,
    k: usize,
    patch: usize,
) -> PyResult<PyDecomposition> {
    let basis_update = match basis_update {
        "closed_form" => BasisUpdate::ClosedForm,
        "sgd" => BasisUpdate::Sgd,
        other => return Err(PyValueError::new_err(format!("basis_update must be closed_form or sgd, got {other:?}"))),
    };
    let cfg = OnlineConfig {
        r,
        eta,
        lambda: lambda_,
        lambda2,
        gamma1,
        gamma2,
        omega,
        window,
        basis_update,
        max_inner,
        graph_init,
        seed,
        modes: modes.into_iter().map(mode).collect::<PyResult<_>>()?,
    };
    let gcfg = graph_config(k, patch)?;
    let x = x.inner.clone();
    let d = py.detach(move || online_solve(&x, &cfg, &gcfg)).map_err(to_py)?;
    let columns = d.modes.iter().map(|m| m.columns).sum();
    let converged = d.modes.iter().all(|m| m.converged_columns == m.columns);
    Ok(PyDecomposition {
        background: PyTensor { inner: d.background },
        foreground: PyTensor { inner: d.foreground },
        iters: columns,
        converged,
    })
}

/// `threshold` is `"otsu"` or a fraction of max |F|.
#[pyfunction]
#[pyo3(signature = (foreground, threshold=None))]
fn binarize(foreground: &PyTensor, threshold: Option<&Bound<'_, PyAny>>) -> PyResult<PyMasks> {
    let method = match threshold {
        None => Binarize::Otsu,
        Some(obj) => {
            if let Ok(t) = obj.extract::<f64>() {
                Binarize::Fixed(t)
            } else {
                match obj.extract::<String>()?.as_str() {
                    "otsu" => Binarize::Otsu,
                    other => return Err(PyValueError::new_err(format!("unknown threshold {other:?}"))),
                }
            }
        }
    };
    Ok(PyMasks {
        inner: seg_binarize(&foreground.inner, method).map_err(to_py)?,
    })
}

#[pyfunction]
#[pyo3(signature = (pred, gt, roi=None))]
fn score(pred: &PyMasks, gt: &PyMasks, roi: Option<Vec<bool>>) -> PyResult<PyReport> {
    Ok(seg_score(&pred.inner, &gt.inner, roi.as_deref()).map_err(to_py)?.into())
}

#[pyfunction]
#[pyo3(signature = (preset, seed=0))]
fn synth(preset: &str, seed: u64) -> PyResult<PySynthetic> {
    let spec = SynthSpec::preset(preset, seed).map_err(to_py)?;
    let out = ingest_synth(&spec).map_err(to_py)?;
    Ok(PySynthetic {
        tensor: PyTensor { inner: out.tensor },
        gt: PyMasks { inner: out.gt },
        impulses: PyMasks { inner: out.impulses },
        background: PyTensor { inner: out.background },
    })
}

/// Loads a frame directory; returns `(tensor, ground truth or None, frame names)`.
#[pyfunction]
#[pyo3(signature = (path, resize=None))]
fn load_sequence(path: PathBuf, resize: Option<(usize, usize)>) -> PyResult<(PyTensor, Option<PyMasks>, Vec<String>)> {
    let mut spec = SequenceSpec::detect(&path);
    spec.resize = resize;
    let seq = ingest_load(&spec).map_err(to_py)?;
    Ok((
        PyTensor { inner: seq.tensor },
        seq.gt.map(|g| PyMasks { inner: g }),
        seq.names,
    ))
}

#[pymodule]
fn pystrpca(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_class::<PyMasks>()?;
    m.add_class::<PyReport>()?;
    m.add_class::<PyDecomposition>()?;
    m.add_class::<PySynthetic>()?;
    m.add_function(wrap_pyfunction!(tsvt, m)?)?;
    m.add_function(wrap_pyfunction!(tprod, m)?)?;
    m.add_function(wrap_pyfunction!(solve_batch, m)?)?;
    m.add_function(wrap_pyfunction!(solve_online, m)?)?;
    m.add_function(wrap_pyfunction!(binarize, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(load_sequence, m)?)?;
    Ok(())
}
