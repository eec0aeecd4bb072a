use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use snc_core::bounds::{self, BoundError, BoundKind, HomogeneousTandem, Horizon};
use snc_core::envelope::{EnvelopeError, MmooParams, TrafficModel};
use snc_core::scenario::{self, ScenarioError};
use snc_core::sim::{self, SimError, SimScenario};

create_exception!(
    snc,
    UnstableError,
    PyValueError,
    "No theta satisfies the stability condition."
);

fn envelope_err(e: EnvelopeError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn bound_err(e: BoundError) -> PyErr {
    if e.is_instability() {
        UnstableError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn sim_err(e: SimError) -> PyErr {
    match e {
        SimError::Unstable { .. } | SimError::QueueOverflow { .. } => {
            UnstableError::new_err(e.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

fn scenario_err(e: ScenarioError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn horizon(slots: Option<u64>) -> Horizon {
    slots.map_or(Horizon::Infinite, Horizon::Finite)
}

/// Markov-modulated on-off source in per-slot units.
#[pyclass(name = "MmooParams", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMmoo(MmooParams);

#[pymethods]
impl PyMmoo {
    #[new]
    fn new(peak_rate: f64, on_to_off: f64, off_to_on: f64) -> PyResult<Self> {
        MmooParams::new(peak_rate, on_to_off, off_to_on)
            .map(Self)
            .map_err(envelope_err)
    }

    /// Builds the source from mean on and off times in slots.
    #[staticmethod]
    fn from_holding_times(peak_rate: f64, mean_on: f64, mean_off: f64) -> PyResult<Self> {
        MmooParams::from_holding_times(peak_rate, mean_on, mean_off)
            .map(Self)
            .map_err(envelope_err)
    }

    #[getter]
    fn peak_rate(&self) -> f64 {
        self.0.peak_rate()
    }

    #[getter]
    fn on_to_off(&self) -> f64 {
        self.0.on_to_off()
    }

    #[getter]
    fn off_to_on(&self) -> f64 {
        self.0.off_to_on()
    }

    fn mean_rate(&self) -> f64 {
        self.0.mean_rate()
    }

    fn effective_bandwidth(&self, theta: f64) -> PyResult<f64> {
        self.0.effective_bandwidth(theta).map_err(envelope_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "MmooParams(peak_rate={}, on_to_off={}, off_to_on={})",
            self.0.peak_rate(),
            self.0.on_to_off(),
            self.0.off_to_on()
        )
    }
}

#[pyclass(name = "BoundResult", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyBoundResult {
    kind: String,
    unit: String,
    value: f64,
    theta_star: f64,
    violation_probability: f64,
    stable: bool,
    at_search_boundary: bool,
}

impl From<bounds::BoundResult> for PyBoundResult {
    fn from(r: bounds::BoundResult) -> Self {
        Self {
            kind: r.kind.as_str().to_string(),
            unit: r.kind.unit().to_string(),
            value: r.value,
            theta_star: r.theta_star,
            violation_probability: r.violation_probability,
            stable: r.stable_at_theta_star,
            at_search_boundary: r.diagnostics.boundary.is_some(),
        }
    }
}

#[pymethods]
impl PyBoundResult {
    fn __repr__(&self) -> String {
        format!(
            "BoundResult(kind={:?}, value={} {}, theta_star={}, stable={})",
            self.kind, self.value, self.unit, self.theta_star, self.stable
        )
    }
}

/// `N` through flows over `H` identical hops, each shared with `M` cross flows.
#[pyclass(name = "Tandem", frozen)]
struct PyTandem(HomogeneousTandem);

#[pymethods]
impl PyTandem {
    #[new]
    #[pyo3(signature = (through_count, through, cross_count, cross, capacity, hops))]
    fn new(
        through_count: u32,
        through: PyRef<'_, PyMmoo>,
        cross_count: u32,
        cross: PyRef<'_, PyMmoo>,
        capacity: f64,
        hops: u32,
    ) -> PyResult<Self> {
        let t = HomogeneousTandem {
            through_count,
            through: TrafficModel::Mmoo(through.0),
            cross_count,
            cross: TrafficModel::Mmoo(cross.0),
            capacity,
            hops,
        };
        t.validate().map_err(bound_err)?;
        Ok(Self(t))
    }

    fn utilization(&self) -> f64 {
        self.0.utilization()
    }

    fn stability_margin(&self, theta: f64) -> PyResult<f64> {
        self.0.stability_margin(theta).map_err(bound_err)
    }

    /// Stationary delay bound in slots.
    fn closed_form_delay(&self, epsilon: f64) -> PyResult<PyBoundResult> {
        bounds::closed_form_delay(&self.0, epsilon, &self.0.default_search())
            .map(Into::into)
            .map_err(bound_err)
    }

    /// Stationary backlog bound in bits.
    fn closed_form_backlog(&self, epsilon: f64) -> PyResult<PyBoundResult> {
        bounds::closed_form_backlog(&self.0, epsilon, &self.0.default_search())
            .map(Into::into)
            .map_err(bound_err)
    }

    /// Integer delay bound from the per-hop sums; `horizon=None` means infinite.
    #[pyo3(signature = (epsilon, horizon=None))]
    fn delay_bound(&self, epsilon: f64, horizon: Option<u64>) -> PyResult<PyBoundResult> {
        let path = self.0.to_path().map_err(bound_err)?;
        bounds::delay_bound(
            &path,
            epsilon,
            self::horizon(horizon),
            &self.0.default_search(),
        )
        .map(Into::into)
        .map_err(bound_err)
    }

    #[pyo3(signature = (epsilon, horizon=None))]
    fn backlog_bound(&self, epsilon: f64, horizon: Option<u64>) -> PyResult<PyBoundResult> {
        let path = self.0.to_path().map_err(bound_err)?;
        bounds::backlog_bound(
            &path,
            epsilon,
            self::horizon(horizon),
            &self.0.default_search(),
        )
        .map(Into::into)
        .map_err(bound_err)
    }

    /// Tail bound on the delay exceeding `d` slots at a fixed `theta`.
    #[pyo3(signature = (d, theta, horizon=None))]
    fn delay_violation_at_theta(&self, d: u64, theta: f64, horizon: Option<u64>) -> PyResult<f64> {
        let path = self.0.to_path().map_err(bound_err)?;
        bounds::delay_violation_at_theta(&path, d, self::horizon(horizon), theta)
            .map(|v| v.bound)
            .map_err(bound_err)
    }

    #[pyo3(signature = (x, theta, horizon=None))]
    fn backlog_violation_at_theta(
        &self,
        x: f64,
        theta: f64,
        horizon: Option<u64>,
    ) -> PyResult<f64> {
        let path = self.0.to_path().map_err(bound_err)?;
        bounds::backlog_violation_at_theta(&path, x, self::horizon(horizon), theta)
            .map(|v| v.bound)
            .map_err(bound_err)
    }

    /// Simulates the tandem; peak rate and capacity must be whole bits per slot.
    #[pyo3(signature = (measure_slots, replications=1, seed=0, warmup_slots=None))]
    fn simulate(
        &self,
        py: Python<'_>,
        measure_slots: u64,
        replications: u32,
        seed: u64,
        warmup_slots: Option<u64>,
    ) -> PyResult<PySimResult> {
        let t = &self.0;
        let (TrafficModel::Mmoo(through), TrafficModel::Mmoo(cross)) = (&t.through, &t.cross)
        else {
            return Err(PyValueError::new_err("simulation needs on-off sources"));
        };
        if t.capacity.fract() != 0.0 {
            return Err(sim_err(SimError::FractionalBits {
                what: "capacity",
                value: t.capacity,
            }));
        }
        let mut s = SimScenario::new(
            t.hops,
            t.capacity as u64,
            t.through_count,
            t.cross_count,
            *through,
        );
        s.cross_source = Some(*cross);
        s.measure_slots = measure_slots;
        s.replications = replications;
        s.base_seed = seed;
        if let Some(w) = warmup_slots {
            s.warmup_slots = w;
        }
        let result = py.detach(|| sim::simulate_tandem(&s)).map_err(sim_err)?;
        Ok(PySimResult(result))
    }
}

#[pyclass(name = "SimResult", frozen)]
struct PySimResult(sim::SimResult);

impl PySimResult {
    fn samples(&self, kind: &str) -> PyResult<&sim::Histogram> {
        match kind {
            "delay" => Ok(&self.0.delay_samples),
            "backlog" => Ok(&self.0.backlog_samples),
            other => Err(PyValueError::new_err(format!(
                "kind must be 'delay' or 'backlog', got {other:?}"
            ))),
        }
    }
}

#[pymethods]
impl PySimResult {
    #[getter]
    fn samples_per_kind(&self) -> u64 {
        self.0.delay_samples.total()
    }

    /// `(frequency, upper 95% limit)` of samples strictly above `threshold`.
    fn tail(&self, kind: &str, threshold: f64) -> PyResult<(f64, f64)> {
        let t = sim::empirical_tail(self.samples(kind)?, threshold);
        Ok((t.frequency, t.upper_confidence))
    }

    /// Smallest value exceeded by at most an `epsilon` fraction of samples.
    fn quantile(&self, kind: &str, epsilon: f64) -> PyResult<u64> {
        self.samples(kind)?
            .quantile_above(epsilon)
            .ok_or_else(|| PyRuntimeError::new_err("no samples"))
    }
}

/// Parsed and validated scenario file.
#[pyclass(name = "Scenario", frozen)]
struct PyScenario(scenario::Scenario);

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        scenario::parse_scenario(text)
            .map(Self)
            .map_err(scenario_err)
    }

    #[getter]
    fn id(&self) -> String {
        self.0.id.clone()
    }

    #[getter]
    fn hops(&self) -> Vec<u32> {
        self.0.network.hops.clone()
    }

    #[getter]
    fn epsilons(&self) -> Vec<f64> {
        self.0
            .bound
            .as_ref()
            .map(|b| b.epsilon.clone())
            .unwrap_or_default()
    }

    fn flow_points(&self) -> Vec<(u32, u32)> {
        self.0.flow_points()
    }

    fn to_toml(&self) -> PyResult<String> {
        self.0.to_toml().map_err(scenario_err)
    }

    /// The tandem at hop count `hops` and the given flow counts (defaults from
    /// the traffic block).
    #[pyo3(signature = (hops, through=None, cross=None))]
    fn tandem(&self, hops: u32, through: Option<u32>, cross: Option<u32>) -> PyTandem {
        let n = through.unwrap_or(self.0.traffic.through);
        let m = cross.unwrap_or(self.0.traffic.cross);
        PyTandem(self.0.tandem(hops, n, m))
    }
}

/// Effective bandwidth of an on-off source at `theta`.
#[pyfunction]
fn mmoo_effective_bandwidth(params: PyRef<'_, PyMmoo>, theta: f64) -> PyResult<f64> {
    snc_core::mmoo_effective_bandwidth(&params.0, theta).map_err(envelope_err)
}

#[pyfunction]
fn parse_scenario(text: &str) -> PyResult<PyScenario> {
    PyScenario::parse(text)
}

#[pymodule]
fn snc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMmoo>()?;
    m.add_class::<PyTandem>()?;
    m.add_class::<PyBoundResult>()?;
    m.add_class::<PySimResult>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(mmoo_effective_bandwidth, m)?)?;
    m.add_function(wrap_pyfunction!(parse_scenario, m)?)?;
    m.add("UnstableError", m.py().get_type::<UnstableError>())?;
    m.add("DELAY", BoundKind::Delay.as_str())?;
    m.add("BACKLOG", BoundKind::Backlog.as_str())?;
    Ok(())
}
