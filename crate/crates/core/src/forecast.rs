//! ARIMA modelling of daily series: stationarity testing, order selection,
//! conditional-sum-of-squares fitting, forecasting and forecast scoring.
//!
//! Models use the backshift form
//!
//! ```text
//! (1 - phi_1 B - ... - phi_p B^p) (W_t - mu) = (1 - theta_1 B - ... - theta_q B^q) e_t
//! ```
//!
//! where `W_t` is the series differenced `d` times and `mu` its level. Note
//! the minus sign on the moving-average terms.

use std::fmt;

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 5% critical value of the Dickey-Fuller statistic, constant-only
/// regression, asymptotic.
pub const ADF_CRITICAL_5PCT: f64 = -2.86;
pub const MAX_AR_ORDER: usize = 5;
pub const MAX_MA_ORDER: usize = 5;
pub const MAX_DIFFERENCE: usize = 2;

const SIMPLEX_STEP: f64 = 0.1;
const SIMPLEX_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaOrder {
    pub fn new(p: usize, d: usize, q: usize) -> Result<Self> {
        if d > MAX_DIFFERENCE {
            return Err(Error::Config(format!("differencing order {d} exceeds {MAX_DIFFERENCE}")));
        }
        Ok(Self { p, d, q })
    }

    /// Number of coefficients to estimate, excluding the level.
    pub fn coefficient_count(&self) -> usize {
        self.p + self.q
    }
}

impl fmt::Display for ArimaOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p={},d={},q={}", self.p, self.d, self.q)
    }
}

/// Whether the level `mu` of the differenced series is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constant {
    /// Estimated for `d = 0`, fixed at zero otherwise.
    #[default]
    Auto,
    Include,
    Exclude,
}

impl Constant {
    fn included(self, d: usize) -> bool {
        match self {
            Constant::Auto => d == 0,
            Constant::Include => true,
            Constant::Exclude => false,
        }
    }
}

/// Fitted (or hand-specified) ARIMA model together with the training state
/// needed to forecast from the end of the training series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaModel {
    pub order: ArimaOrder,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    /// Level `mu` of the differenced series.
    pub intercept: f64,
    /// `CSS / (n - p - q)` with `n` the differenced length.
    pub sigma2: f64,
    pub training_length: usize,
    /// Conditional sum of squares at the returned coefficients.
    pub css: f64,
    /// Simplex iterations spent (zero when nothing was estimated).
    pub iterations: u64,
    differenced: Vec<f64>,
    /// Innovations aligned with `differenced`; the first `p` are zero.
    innovations: Vec<f64>,
    /// Last value of the `k`-th difference of the training series.
    tails: Vec<f64>,
}

impl ArimaModel {
    /// Builds a model with given coefficients on a training series,
    /// computing its innovations, CSS and residual variance.
    pub fn with_coefficients(
        series: &[f64],
        order: ArimaOrder,
        phi: Vec<f64>,
        theta: Vec<f64>,
        intercept: f64,
    ) -> Result<Self> {
        if phi.len() != order.p || theta.len() != order.q {
            return Err(Error::Input(format!(
                "order {order} needs {} AR and {} MA coefficients, got {} and {}",
                order.p,
                order.q,
                phi.len(),
                theta.len()
            )));
        }
        check_finite(series)?;
        if series.len() <= order.d + order.p {
            return Err(Error::Input(format!(
                "series of length {} is too short for order {order}",
                series.len()
            )));
        }
        let differenced = difference(series, order.d);
        let tails = (0..order.d)
            .map(|k| *difference(series, k).last().expect("length checked"))
            .collect();
        let mut innovations = Vec::new();
        let css = css_innovations(&differenced, intercept, &phi, &theta, &mut innovations);
        let dof = differenced.len().saturating_sub(order.p + order.q).max(1);
        Ok(Self {
            order,
            phi,
            theta,
            intercept,
            sigma2: css / dof as f64,
            training_length: series.len(),
            css,
            iterations: 0,
            differenced,
            innovations,
            tails,
        })
    }

    /// Training residuals (innovations from index `p` of the differenced
    /// series on).
    pub fn residuals(&self) -> &[f64] {
        &self.innovations[self.order.p..]
    }

    pub fn residual_summary(&self) -> ResidualSummary {
        ResidualSummary::of(self.residuals())
    }
}

/// Moments of the training residuals, reported as a normality check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub count: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

impl ResidualSummary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let moment = |k: i32| values.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n;
        let m2 = moment(2);
        let (skewness, excess_kurtosis) = if m2 > 0.0 {
            (moment(3) / m2.powf(1.5), moment(4) / (m2 * m2) - 3.0)
        } else {
            (0.0, 0.0)
        };
        Self {
            count: values.len(),
            mean,
            std_dev: m2.sqrt(),
            skewness,
            excess_kurtosis,
        }
    }
}

/// Outcome of the augmented Dickey-Fuller test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub statistic: f64,
    pub lags: usize,
    pub is_stationary: bool,
}

/// Forecast-quality metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastScore {
    pub r2: f64,
    pub rmse: f64,
    pub mae: f64,
}

/// Holdout forecast of a series: selected order, predictions against the
/// actual holdout, and their score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub order: ArimaOrder,
    pub train_len: usize,
    pub actual: Vec<f64>,
    pub predictions: Vec<f64>,
    pub score: ForecastScore,
    pub residuals: ResidualSummary,
    /// Percolation threshold of the predicted window, when computed.
    pub predicted_threshold: Option<f64>,
}

impl ForecastReport {
    /// `day_index,actual_kwh,predicted_kwh` rows followed by an
    /// `r2,rmse,mae` header and value line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("day_index,actual_kwh,predicted_kwh\n");
        for (i, (a, p)) in self.actual.iter().zip(&self.predictions).enumerate() {
            out.push_str(&format!("{},{a},{p}\n", self.train_len + i));
        }
        out.push_str("r2,rmse,mae\n");
        out.push_str(&format!("{},{},{}\n", self.score.r2, self.score.rmse, self.score.mae));
        out
    }
}

fn check_finite(series: &[f64]) -> Result<()> {
    match series.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Input(format!("sample {i} is not finite ({})", series[i]))),
        None => Ok(()),
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
}

/// `d`-fold first difference. Empty when `d >= len`.
pub fn difference(series: &[f64], d: usize) -> Vec<f64> {
    let mut out = series.to_vec();
    for _ in 0..d {
        if out.len() <= 1 {
            return Vec::new();
        }
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    out
}

/// First value of each difference level `0..d`, the starting points needed
/// by [`undifference`].
pub fn initial_values(series: &[f64], d: usize) -> Vec<f64> {
    (0..d).filter_map(|k| difference(series, k).first().copied()).collect()
}

/// Inverts [`difference`]: integrates `diffs` once per entry of `initial`,
/// innermost level last.
pub fn undifference(diffs: &[f64], initial: &[f64]) -> Vec<f64> {
    let mut out = diffs.to_vec();
    for &start in initial.iter().rev() {
        let mut level = start;
        let mut next = Vec::with_capacity(out.len() + 1);
        next.push(level);
        for v in &out {
            level += v;
            next.push(level);
        }
        out = next;
    }
    out
}

/// Innovations of the CSS recursion written into `out` (zeros for the first
/// `p` samples); returns their sum of squares.
fn css_innovations(w: &[f64], mu: f64, phi: &[f64], theta: &[f64], out: &mut Vec<f64>) -> f64 {
    out.clear();
    out.resize(w.len(), 0.0);
    let mut sum = 0.0;
    for t in phi.len()..w.len() {
        let mut e = w[t] - mu;
        for (i, f) in phi.iter().enumerate() {
            e -= f * (w[t - 1 - i] - mu);
        }
        for (j, th) in theta.iter().enumerate().take(t) {
            e += th * out[t - 1 - j];
        }
        out[t] = e;
        sum += e * e;
    }
    sum
}

/// Maps partial autocorrelations in `(-1, 1)` to the coefficients of a
/// polynomial `1 - c_1 B - ... - c_k B^k` with all roots outside the unit
/// circle (Durbin-Levinson step-up).
fn partials_to_coefficients(partials: &[f64]) -> Vec<f64> {
    let mut c: Vec<f64> = Vec::with_capacity(partials.len());
    for (k, &r) in partials.iter().enumerate() {
        let prev = c.clone();
        for j in 0..k {
            c[j] = prev[j] - r * prev[k - 1 - j];
        }
        c.push(r);
    }
    c
}

/// True when `1 - c_1 B - ... - c_k B^k` has every root strictly outside
/// the unit circle (step-down recursion).
pub fn roots_outside_unit_circle(coefficients: &[f64]) -> bool {
    let mut c = coefficients.to_vec();
    while let Some(&r) = c.last() {
        if !(r.abs() < 1.0) {
            return false;
        }
        let k = c.len();
        let denom = 1.0 - r * r;
        c = (0..k - 1).map(|j| (c[j] + r * c[k - 2 - j]) / denom).collect();
    }
    true
}

/// Augmented Dickey-Fuller test with a constant and
/// `floor((n - 1)^(1/3))` lagged differences.
pub fn adf_test(series: &[f64]) -> Result<AdfResult> {
    let n = series.len();
    if n < 20 {
        return Err(Error::Input(format!("ADF test needs at least 20 samples, got {n}")));
    }
    check_finite(series)?;
    if variance(series) == 0.0 {
        return Err(Error::Degenerate("ADF test on a constant series".into()));
    }
    let mut lags = 0;
    while (lags + 1usize).pow(3) < n {
        lags += 1;
    }
    let dy = difference(series, 1);
    let rows = dy.len() - lags;
    let cols = 2 + lags;
    let x = DMatrix::from_fn(rows, cols, |r, c| {
        let t = r + lags;
        match c {
            0 => 1.0,
            1 => series[t],
            _ => dy[t - (c - 1)],
        }
    });
    let y = DVector::from_fn(rows, |r, _| dy[r + lags]);

    let qr = x.clone().qr();
    let r = qr.r();
    let scale = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if r.diagonal().iter().any(|v| v.abs() <= 1e-10 * scale) {
        return Err(Error::Degenerate("ADF regressors are collinear".into()));
    }
    let qty = qr.q().transpose() * &y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Degenerate("ADF regression is singular".into()))?;
    let resid = &y - x * &beta;
    let s2 = resid.norm_squared() / (rows - cols) as f64;
    let r_inv = r
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("ADF regression is singular".into()))?;
    let var_gamma = s2 * r_inv.row(1).norm_squared();
    if !(var_gamma > 0.0) {
        return Err(Error::Degenerate("ADF regression fits exactly".into()));
    }
    let statistic = beta[1] / var_gamma.sqrt();
    Ok(AdfResult {
        statistic,
        lags,
        is_stationary: statistic < ADF_CRITICAL_5PCT,
    })
}

/// Sample autocorrelations for lags `0..=max_lag` from the biased
/// autocovariance.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n == 0 || 2 * max_lag >= n {
        return Err(Error::Input(format!("max lag {max_lag} must be below half the length {n}")));
    }
    check_finite(series)?;
    let m = mean(series);
    let autocov = |k: usize| (0..n - k).map(|t| (series[t] - m) * (series[t + k] - m)).sum::<f64>();
    let c0 = autocov(0);
    if c0 == 0.0 {
        return Err(Error::Degenerate("autocorrelation of a constant series".into()));
    }
    Ok((0..=max_lag).map(|k| if k == 0 { 1.0 } else { autocov(k) / c0 }).collect())
}

/// Sample partial autocorrelations for lags `0..=max_lag` (Durbin-Levinson).
pub fn pacf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let rho = acf(series, max_lag)?;
    let mut out = vec![1.0];
    let mut phi: Vec<f64> = Vec::new();
    for k in 1..=max_lag {
        let num = rho[k] - phi.iter().enumerate().map(|(j, f)| f * rho[k - 1 - j]).sum::<f64>();
        let den = 1.0 - phi.iter().enumerate().map(|(j, f)| f * rho[j + 1]).sum::<f64>();
        let r = if den.abs() > 0.0 { num / den } else { 0.0 };
        let prev = phi.clone();
        for j in 0..phi.len() {
            phi[j] = prev[j] - r * prev[k - 2 - j];
        }
        phi.push(r);
        out.push(r);
    }
    Ok(out)
}

/// Count of leading lags (from lag 1, at most `cap`) outside the band.
fn leading_significant(values: &[f64], band: f64, cap: usize) -> usize {
    values.iter().skip(1).take(cap).take_while(|v| v.abs() > band).count()
}

/// Chooses `d` as the smallest difference order whose series passes the ADF
/// test, then `p` and `q` as the number of leading PACF and ACF lags outside
/// the `2/sqrt(n)` band.
pub fn select_order(series: &[f64]) -> Result<ArimaOrder> {
    if series.len() < 50 {
        return Err(Error::Input(format!(
            "order selection needs at least 50 samples, got {}",
            series.len()
        )));
    }
    check_finite(series)?;
    for d in 0..=MAX_DIFFERENCE {
        let w = difference(series, d);
        if variance(&w) == 0.0 {
            // exact polynomial trend of degree d - 1
            return ArimaOrder::new(0, d, 0);
        }
        let stationary = match adf_test(&w) {
            Ok(r) => r.is_stationary,
            Err(Error::Degenerate(_)) => false,
            Err(e) => return Err(e),
        };
        if !stationary {
            continue;
        }
        let band = 2.0 / (w.len() as f64).sqrt();
        let max_lag = MAX_AR_ORDER.max(MAX_MA_ORDER).min((w.len() - 1) / 2);
        let p = leading_significant(&pacf(&w, max_lag)?, band, MAX_AR_ORDER);
        let q = leading_significant(&acf(&w, max_lag)?, band, MAX_MA_ORDER);
        return ArimaOrder::new(p, d, q);
    }
    Err(Error::OrderSelection(format!(
        "no differencing order up to {MAX_DIFFERENCE} passes the ADF test"
    )))
}

/// CSS objective on the standardized differenced series. Parameters are
/// unconstrained: `p + q` transformed partial autocorrelations, then the
/// standardized level when it is estimated.
#[derive(Clone, Copy)]
struct CssProblem<'a> {
    z: &'a [f64],
    p: usize,
    q: usize,
    fixed_level: Option<f64>,
}

impl CssProblem<'_> {
    fn unpack(&self, params: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let ar: Vec<f64> = params[..self.p].iter().map(|u| u.tanh()).collect();
        let ma: Vec<f64> = params[self.p..self.p + self.q].iter().map(|u| u.tanh()).collect();
        let level = self.fixed_level.unwrap_or_else(|| params[self.p + self.q]);
        (partials_to_coefficients(&ar), partials_to_coefficients(&ma), level)
    }

    fn objective(&self, params: &[f64]) -> f64 {
        let (phi, theta, level) = self.unpack(params);
        let mut scratch = Vec::new();
        css_innovations(self.z, level, &phi, &theta, &mut scratch) / (self.z.len() - self.p) as f64
    }
}

impl CostFunction for CssProblem<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, params: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.objective(params))
    }
}

/// Fits with the default constant policy ([`Constant::Auto`]).
pub fn fit(series: &[f64], order: ArimaOrder) -> Result<ArimaModel> {
    fit_with(series, order, Constant::Auto)
}

/// Conditional-sum-of-squares fit by Nelder-Mead from zero coefficients.
/// Stationarity and invertibility hold by construction: the search runs
/// over partial autocorrelations squashed into `(-1, 1)`.
pub fn fit_with(series: &[f64], order: ArimaOrder, constant: Constant) -> Result<ArimaModel> {
    let needed = 10 * (order.p + order.q + 1) + order.d;
    if series.len() < needed {
        return Err(Error::Input(format!(
            "order {order} needs at least {needed} samples, got {}",
            series.len()
        )));
    }
    check_finite(series)?;
    let w = difference(series, order.d);
    let include_level = constant.included(order.d);
    let center = mean(&w);
    let scale = variance(&w).sqrt();

    if scale == 0.0 || order.coefficient_count() == 0 {
        // Nothing to search: zero coefficients, level at its CSS optimum.
        let level = if include_level { center } else { 0.0 };
        return ArimaModel::with_coefficients(series, order, vec![0.0; order.p], vec![0.0; order.q], level);
    }

    let z: Vec<f64> = w.iter().map(|v| (v - center) / scale).collect();
    let problem = CssProblem {
        z: &z,
        p: order.p,
        q: order.q,
        fixed_level: (!include_level).then_some(-center / scale),
    };
    let dim = order.coefficient_count() + usize::from(include_level);
    let max_iters = 2000 + 1000 * dim as u64;

    let mut start = vec![0.0; dim];
    let mut iterations = 0;
    // One restart from the first optimum guards against a collapsed simplex.
    for _ in 0..2 {
        let (best, cost, used, converged) = nelder_mead(&problem, &start, max_iters)?;
        iterations += used;
        if !converged {
            return Err(Error::Fit {
                iterations: iterations as usize,
                best_objective: cost,
                best_params: best,
            });
        }
        start = best;
    }

    let (phi, theta, level_z) = problem.unpack(&start);
    let level = center + scale * level_z;
    let mut model = ArimaModel::with_coefficients(series, order, phi, theta, level)?;
    model.iterations = iterations;
    Ok(model)
}

fn nelder_mead(problem: &CssProblem<'_>, start: &[f64], max_iters: u64) -> Result<(Vec<f64>, f64, u64, bool)> {
    let mut simplex = vec![start.to_vec()];
    for i in 0..start.len() {
        let mut vertex = start.to_vec();
        vertex[i] += SIMPLEX_STEP;
        simplex.push(vertex);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(SIMPLEX_TOLERANCE)
        .map_err(|e| Error::Config(format!("simplex setup: {e}")))?;
    // The objective is infallible, so a run error means no usable state.
    let result = Executor::new(*problem, solver)
        .configure(|state| state.max_iters(max_iters))
        .run()
        .map_err(|_| Error::Fit {
            iterations: 0,
            best_objective: problem.objective(start),
            best_params: start.to_vec(),
        })?;
    let state = result.state();
    let best = state.get_best_param().cloned().unwrap_or_else(|| start.to_vec());
    let converged = matches!(
        state.get_termination_status(),
        TerminationStatus::Terminated(TerminationReason::SolverConverged)
    );
    Ok((best, state.get_best_cost(), state.get_iter(), converged))
}

/// Conditional-mean forecasts for steps `1..=horizon` after the training
/// series, future shocks set to zero.
pub fn forecast(model: &ArimaModel, horizon: usize) -> Result<Vec<f64>> {
    if horizon == 0 {
        return Err(Error::Input("forecast horizon must be at least 1".into()));
    }
    let mu = model.intercept;
    let mut w = model.differenced.clone();
    let mut e = model.innovations.clone();
    let start = w.len();
    for _ in 0..horizon {
        let t = w.len();
        let mut next = mu;
        for (i, f) in model.phi.iter().enumerate() {
            next += f * (w[t - 1 - i] - mu);
        }
        for (j, th) in model.theta.iter().enumerate().take(t) {
            next -= th * e[t - 1 - j];
        }
        w.push(next);
        e.push(0.0);
    }
    // Integrate from the end of the training series, outermost level last.
    let mut path = w.split_off(start);
    for &last in model.tails.iter().rev() {
        let mut level = last;
        for v in path.iter_mut() {
            level += *v;
            *v = level;
        }
    }
    Ok(path)
}

/// `r2 = 1 - SS_res / SS_tot`, root mean squared and mean absolute error.
pub fn score(actual: &[f64], predicted: &[f64]) -> Result<ForecastScore> {
    if actual.len() != predicted.len() || actual.len() < 2 {
        return Err(Error::Input(format!(
            "scoring needs two equal-length series of at least 2 values (got {} and {})",
            actual.len(),
            predicted.len()
        )));
    }
    check_finite(actual)?;
    check_finite(predicted)?;
    let n = actual.len() as f64;
    let m = mean(actual);
    let ss_tot: f64 = actual.iter().map(|a| (a - m) * (a - m)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Degenerate("r2 is undefined for constant actuals".into()));
    }
    let ss_res: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p) * (a - p)).sum();
    let abs: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p).abs()).sum();
    Ok(ForecastScore {
        r2: 1.0 - ss_res / ss_tot,
        rmse: (ss_res / n).sqrt(),
        mae: abs / n,
    })
}

/// Selects an order on the first `train_len` samples, fits it, forecasts
/// the next `holdout_len` and scores them. A drift (level of the
/// differenced series) is estimated whenever `d < 2`.
pub fn forecast_holdout(series: &[f64], train_len: usize, holdout_len: usize) -> Result<ForecastReport> {
    if holdout_len == 0 || train_len + holdout_len > series.len() {
        return Err(Error::Input(format!(
            "split {train_len} + {holdout_len} does not fit a series of length {}",
            series.len()
        )));
    }
    let train = &series[..train_len];
    let actual = series[train_len..train_len + holdout_len].to_vec();
    let order = select_order(train)?;
    let constant = if order.d < 2 { Constant::Include } else { Constant::Exclude };
    let model = fit_with(train, order, constant)?;
    let predictions = forecast(&model, holdout_len)?;
    let score = score(&actual, &predictions)?;
    Ok(ForecastReport {
        order,
        train_len,
        actual,
        predictions,
        score,
        residuals: model.residual_summary(),
        predicted_threshold: None,
    })
}
