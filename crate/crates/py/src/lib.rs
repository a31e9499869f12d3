//! Python bindings: tariffs, daily ledgers and cost allocation, visibility
//! graphs, percolation, ARIMA forecasting and full studies.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

use gridshare::billing;
use gridshare::fleet;
use gridshare::forecast::{self, ArimaOrder};
use gridshare::percolation;
use gridshare::study::{self, StudyConfig};
use gridshare::visibility;
use gridshare::{Error, ErrorClass};

fn to_py(e: Error) -> PyErr {
    match e.class() {
        ErrorClass::Numeric => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Time-of-use buy and sell prices ($/kWh) with the peak window.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Tariff(fleet::TariffSchedule);

#[pymethods]
impl Tariff {
    #[new]
    #[pyo3(signature = (lambda_h, lambda_l, mu_h, mu_l, peak_start_hour = 8, peak_end_hour = 20))]
    fn new(lambda_h: f64, lambda_l: f64, mu_h: f64, mu_l: f64, peak_start_hour: u32, peak_end_hour: u32) -> PyResult<Self> {
        fleet::TariffSchedule::new(lambda_h, lambda_l, mu_h, mu_l, peak_start_hour, peak_end_hour)
            .map(Tariff)
            .map_err(to_py)
    }

    #[staticmethod]
    fn reference() -> Self {
        Tariff(fleet::TariffSchedule::reference())
    }

    fn __repr__(&self) -> String {
        let t = &self.0;
        format!(
            "Tariff(lambda_h={}, lambda_l={}, mu_h={}, mu_l={}, peak={}..{})",
            t.peak_buy(),
            t.offpeak_buy(),
            t.peak_sell(),
            t.offpeak_sell(),
            t.peak_start_hour(),
            t.peak_end_hour()
        )
    }
}

/// One house-day: peak/off-peak consumption and generation, storage.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct DailyEnergy(fleet::DailyEnergy);

#[pymethods]
impl DailyEnergy {
    #[new]
    #[pyo3(signature = (house_id, peak_consumption, offpeak_consumption, peak_generation, offpeak_generation, storage, day = 0))]
    fn new(
        house_id: String,
        peak_consumption: f64,
        offpeak_consumption: f64,
        peak_generation: f64,
        offpeak_generation: f64,
        storage: f64,
        day: usize,
    ) -> PyResult<Self> {
        let quantities = [peak_consumption, offpeak_consumption, peak_generation, offpeak_generation, storage];
        if quantities.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(PyValueError::new_err("energy quantities must be finite and non-negative"));
        }
        Ok(DailyEnergy(fleet::DailyEnergy::new(
            house_id,
            day,
            peak_consumption,
            offpeak_consumption,
            peak_generation,
            offpeak_generation,
            storage,
        )))
    }

    #[getter]
    fn house_id(&self) -> String {
        self.0.house_id.clone()
    }
}

fn ledger(days: &[DailyEnergy]) -> Vec<fleet::DailyEnergy> {
    days.iter().map(|d| d.0.clone()).collect()
}

/// Net-metering cost of one house on its own.
#[pyfunction]
fn standalone_cost(day: &DailyEnergy, tariff: &Tariff) -> f64 {
    billing::standalone_cost(&day.0, &tariff.0).total
}

/// Cost of a coalition settling its aggregate energy with the grid.
#[pyfunction]
fn coalition_cost(days: Vec<DailyEnergy>, tariff: &Tariff) -> PyResult<f64> {
    billing::coalition_cost(&ledger(&days), &tariff.0)
        .map(|c| c.total)
        .map_err(to_py)
}

/// Per-house allocation of the coalition cost: `(allocations, branch, cost)`.
#[pyfunction]
fn allocate(days: Vec<DailyEnergy>, tariff: &Tariff) -> PyResult<(BTreeMap<String, f64>, String, f64)> {
    let result = billing::allocate(&ledger(&days), &tariff.0).map_err(to_py)?;
    Ok((
        result.per_house.into_iter().collect(),
        result.branch.to_string(),
        result.coalition_cost,
    ))
}

/// Natural visibility graph of a series.
#[pyclass(frozen)]
struct VisibilityGraph(visibility::VisibilityGraph);

#[pymethods]
impl VisibilityGraph {
    #[new]
    fn new(series: Vec<f64>) -> PyResult<Self> {
        visibility::build_visibility_fast(&series)
            .map(VisibilityGraph)
            .map_err(to_py)
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.0.node_count()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.0.edge_count()
    }

    fn edges(&self) -> Vec<(u32, u32)> {
        self.0.edges().to_vec()
    }

    fn degrees(&self) -> Vec<usize> {
        self.0.degrees()
    }

    #[pyo3(signature = (trials = percolation::DEFAULT_TRIALS, seed = 0))]
    fn percolation(&self, trials: usize, seed: u64) -> PyResult<PercolationCurve> {
        percolation::percolation_curve(&self.0, trials, seed)
            .map(PercolationCurve)
            .map_err(to_py)
    }
}

/// Percolation strength and susceptibility over the occupation grid.
#[pyclass(frozen)]
struct PercolationCurve(percolation::PercolationCurve);

#[pymethods]
impl PercolationCurve {
    #[getter]
    fn p_grid(&self) -> Vec<f64> {
        self.0.p_grid.clone()
    }

    #[getter]
    fn strength(&self) -> Vec<f64> {
        self.0.strength.clone()
    }

    #[getter]
    fn susceptibility(&self) -> Vec<f64> {
        self.0.susceptibility.clone()
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.0.threshold
    }

    fn to_csv(&self) -> String {
        self.0.to_csv()
    }
}

/// Percolation threshold of a series' visibility graph.
#[pyfunction]
#[pyo3(signature = (series, trials = percolation::DEFAULT_TRIALS, seed = 0))]
fn resilience(series: Vec<f64>, trials: usize, seed: u64) -> PyResult<f64> {
    percolation::resilience_of_series(&series, trials, seed).map_err(to_py)
}

/// Fitted ARIMA model.
#[pyclass(frozen)]
struct ArimaModel(forecast::ArimaModel);

#[pymethods]
impl ArimaModel {
    #[staticmethod]
    #[pyo3(signature = (series, p, d, q))]
    fn fit(series: Vec<f64>, p: usize, d: usize, q: usize) -> PyResult<Self> {
        let order = ArimaOrder::new(p, d, q).map_err(to_py)?;
        forecast::fit(&series, order).map(ArimaModel).map_err(to_py)
    }

    #[getter]
    fn order(&self) -> (usize, usize, usize) {
        let o = self.0.order;
        (o.p, o.d, o.q)
    }

    #[getter]
    fn phi(&self) -> Vec<f64> {
        self.0.phi.clone()
    }

    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.0.theta.clone()
    }

    #[getter]
    fn intercept(&self) -> f64 {
        self.0.intercept
    }

    #[getter]
    fn sigma2(&self) -> f64 {
        self.0.sigma2
    }

    fn forecast(&self, horizon: usize) -> PyResult<Vec<f64>> {
        forecast::forecast(&self.0, horizon).map_err(to_py)
    }
}

/// `(statistic, is_stationary)` of the augmented Dickey-Fuller test.
#[pyfunction]
fn adf_test(series: Vec<f64>) -> PyResult<(f64, bool)> {
    forecast::adf_test(&series)
        .map(|r| (r.statistic, r.is_stationary))
        .map_err(to_py)
}

/// `(p, d, q)` chosen by the ADF / ACF / PACF rules.
#[pyfunction]
fn select_order(series: Vec<f64>) -> PyResult<(usize, usize, usize)> {
    forecast::select_order(&series)
        .map(|o| (o.p, o.d, o.q))
        .map_err(to_py)
}

/// `(r2, rmse, mae)` of predictions against actuals.
#[pyfunction]
fn score(actual: Vec<f64>, predicted: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    forecast::score(&actual, &predicted)
        .map(|s| (s.r2, s.rmse, s.mae))
        .map_err(to_py)
}

/// Holdout forecast as JSON text (order, actual, predictions, score).
#[pyfunction]
fn forecast_holdout(series: Vec<f64>, train_len: usize, holdout_len: usize) -> PyResult<String> {
    let report = forecast::forecast_holdout(&series, train_len, holdout_len).map_err(to_py)?;
    serde_json_text(&report)
}

/// Runs a study from its JSON config and returns the report tables as JSON
/// text. Writes the bundle only when `write` is true.
#[pyfunction]
#[pyo3(signature = (config_json = "{}", write = false))]
fn run_study(py: Python<'_>, config_json: &str, write: bool) -> PyResult<String> {
    let config = StudyConfig::from_json(config_json).map_err(to_py)?;
    let report = py
        .detach(|| {
            if write {
                study::run_study(&config)
            } else {
                study::compute_study(&config)
            }
        })
        .map_err(to_py)?;
    serde_json_text(&(&report.rows, &report.pair_deltas, &report.forecast))
}

fn serde_json_text<T: serde::Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn pygridshare(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Tariff>()?;
    m.add_class::<DailyEnergy>()?;
    m.add_class::<VisibilityGraph>()?;
    m.add_class::<PercolationCurve>()?;
    m.add_class::<ArimaModel>()?;
    m.add_function(wrap_pyfunction!(standalone_cost, m)?)?;
    m.add_function(wrap_pyfunction!(coalition_cost, m)?)?;
    m.add_function(wrap_pyfunction!(allocate, m)?)?;
    m.add_function(wrap_pyfunction!(resilience, m)?)?;
    m.add_function(wrap_pyfunction!(adf_test, m)?)?;
    m.add_function(wrap_pyfunction!(select_order, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(forecast_holdout, m)?)?;
    m.add_function(wrap_pyfunction!(run_study, m)?)?;
    Ok(())
}
