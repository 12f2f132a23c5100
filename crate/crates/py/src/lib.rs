//! Python bindings. Rationals cross the boundary as `"p/q"` strings; inputs may be
//! ints, floats (converted exactly), `fractions.Fraction` or such strings.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyFloat};

use rmline_core::bench::GeneratorKind;
use rmline_core::verify::check_all_lemmas;
use rmline_core::{offline, Instance as CoreInstance, Matching, Scalar};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_scalar(obj: &Bound<'_, PyAny>) -> PyResult<Scalar> {
    let text = if obj.is_instance_of::<PyFloat>() {
        let (p, q): (Bound<'_, PyAny>, Bound<'_, PyAny>) = obj.call_method0("as_integer_ratio")?.extract()?;
        format!("{}/{}", p.str()?, q.str()?)
    } else {
        obj.str()?.to_string()
    };
    text.trim().parse::<Scalar>().map_err(value_err)
}

fn to_scalars(items: &[Bound<'_, PyAny>]) -> PyResult<Vec<Scalar>> {
    items.iter().map(to_scalar).collect()
}

fn strings(v: &[Scalar]) -> Vec<String> {
    v.iter().map(Scalar::to_string).collect()
}

/// A validated matching instance.
#[pyclass(name = "Instance", module = "rmline", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Instance {
    inner: CoreInstance,
}

#[pymethods]
impl Instance {
    /// Points on the real line; requests arrive in list order.
    #[staticmethod]
    #[pyo3(signature = (servers, requests, t = None))]
    fn line(
        servers: Vec<Bound<'_, PyAny>>,
        requests: Vec<Bound<'_, PyAny>>,
        t: Option<Bound<'_, PyAny>>,
    ) -> PyResult<Self> {
        let t = match t {
            Some(t) => to_scalar(&t)?,
            None => Scalar::from(3),
        };
        let inner = CoreInstance::line(to_scalars(&servers)?, to_scalars(&requests)?, t).map_err(value_err)?;
        Ok(Instance { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        CoreInstance::from_json(text).map(|inner| Instance { inner }).map_err(|e| value_err(format!("{e:#}")))
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn t(&self) -> String {
        self.inner.t().to_string()
    }

    #[getter]
    fn servers(&self) -> PyResult<Vec<String>> {
        Ok(strings(self.inner.line_points().map_err(value_err)?.0))
    }

    #[getter]
    fn requests(&self) -> PyResult<Vec<String>> {
        Ok(strings(self.inner.line_points().map_err(value_err)?.1))
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("Instance(n={}, t={})", self.inner.n(), self.inner.t())
    }
}

fn pairs(m: &Matching) -> Vec<(usize, usize)> {
    m.pairs().collect()
}

/// Runs the online algorithm exactly. Returns costs as strings, the online edges
/// `(server, request)` in arrival order, and each phase's path class and t-net-cost.
#[pyfunction]
fn run_online<'py>(py: Python<'py>, instance: &Instance) -> PyResult<Bound<'py, PyDict>> {
    let tr = rmline_core::run_online(&instance.inner).map_err(value_err)?;
    let w_opt = offline::opt_cost(&instance.inner);
    let ratio = if w_opt.is_zero() { Scalar::one() } else { &tr.online_cost / &w_opt };
    let d = PyDict::new(py);
    d.set_item("w_online", tr.online_cost.to_string())?;
    d.set_item("w_opt", w_opt.to_string())?;
    d.set_item("ratio", ratio.to_string())?;
    d.set_item("online", tr.phases.iter().map(|p| (p.server, p.request)).collect::<Vec<_>>())?;
    d.set_item(
        "classes",
        tr.phases
            .iter()
            .map(|p| if p.class == rmline_core::PathClass::Short { "short" } else { "long" })
            .collect::<Vec<_>>(),
    )?;
    d.set_item("phi", tr.phases.iter().map(|p| p.path.t_net_cost.to_string()).collect::<Vec<_>>())?;
    Ok(d)
}

/// Runs the algorithm and the full check suite. Returns `{"passed": bool, "report": json}`.
#[pyfunction]
fn verify<'py>(py: Python<'py>, instance: &Instance) -> PyResult<Bound<'py, PyDict>> {
    let tr = rmline_core::run_online(&instance.inner).map_err(value_err)?;
    let rep = check_all_lemmas(&tr);
    let d = PyDict::new(py);
    d.set_item("passed", rep.passed)?;
    d.set_item("report", rep.to_json())?;
    Ok(d)
}

#[pyfunction]
fn optimal_line_matching(instance: &Instance) -> PyResult<Vec<(usize, usize)>> {
    Ok(pairs(&offline::optimal_line_matching(&instance.inner).map_err(value_err)?))
}

#[pyfunction]
fn exact_min_cost_matching(instance: &Instance) -> Vec<(usize, usize)> {
    pairs(&offline::exact_min_cost_matching(&instance.inner))
}

#[pyfunction]
fn interval_decomposition_cost(instance: &Instance) -> PyResult<String> {
    Ok(offline::interval_decomposition_cost(&instance.inner).map_err(value_err)?.0.to_string())
}

#[pyfunction]
fn greedy_online(instance: &Instance) -> PyResult<Vec<(usize, usize)>> {
    Ok(pairs(&rmline_core::bench::greedy_online(&instance.inner).map_err(value_err)?))
}

/// `kind` is one of `uniform`, `perturbed-permutation`, `cluster-gap`.
#[pyfunction]
fn generate(kind: &str, n: usize, seed: u64) -> PyResult<Instance> {
    let kind: GeneratorKind = kind.parse().map_err(value_err)?;
    let inner = rmline_core::bench::generate(kind, n, seed).map_err(value_err)?;
    Ok(Instance { inner })
}

#[pyfunction]
fn distance(instance: &Instance, server: usize, request: usize) -> PyResult<String> {
    Ok(rmline_core::distance(&instance.inner, server, request).map_err(value_err)?.to_string())
}

/// Cost of a matching given as `(server, request)` pairs.
#[pyfunction]
fn matching_cost(instance: &Instance, edges: Vec<(usize, usize)>) -> PyResult<String> {
    let m = Matching::from_pairs(edges).map_err(value_err)?;
    Ok(rmline_core::matching_cost(&instance.inner, &m).map_err(value_err)?.to_string())
}

#[pymodule]
fn rmline(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Instance>()?;
    m.add_function(wrap_pyfunction!(run_online, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_line_matching, m)?)?;
    m.add_function(wrap_pyfunction!(exact_min_cost_matching, m)?)?;
    m.add_function(wrap_pyfunction!(interval_decomposition_cost, m)?)?;
    m.add_function(wrap_pyfunction!(greedy_online, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(distance, m)?)?;
    m.add_function(wrap_pyfunction!(matching_cost, m)?)?;
    Ok(())
}
