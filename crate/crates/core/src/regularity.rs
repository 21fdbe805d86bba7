//! Empirical Hölder exponents of the occupation density via second-order
//! structure functions: regress `log E|Y(., x) - Y(., y)|^2` on the log
//! lag and read the exponent off half the slope.
//!
//! The estimators are calibrated on synthetic fields with known exponents
//! (Lipschitz, Brownian, white noise) before any simulation data is
//! trusted; at finite bandwidth and step the simulation estimates are
//! biased toward smoothness, which is documented rather than corrected.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::occupation::{DensityField, DensityTimeSeries, LatticeGrid};

/// Log-log fit of a second-order structure function.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StructureFunctionFit {
    pub lags: Vec<f64>,
    /// Mean squared increment at each lag.
    pub values: Vec<f64>,
    pub slope: f64,
    pub slope_se: f64,
    /// Implied Hölder exponent: slope / 2.
    pub exponent: f64,
    pub exponent_se: f64,
    pub r_squared: f64,
}

impl StructureFunctionFit {
    pub fn csv_header() -> &'static str {
        "lag,structure_value"
    }

    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{}", Self::csv_header())?;
        for (lag, v) in self.lags.iter().zip(&self.values) {
            writeln!(w, "{lag},{v}")?;
        }
        Ok(())
    }
}

fn fit_loglog(lags: &[f64], values: &[f64]) -> Result<StructureFunctionFit> {
    if lags.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "structure-function fit needs at least 4 lags, got {}",
            lags.len()
        )));
    }
    let span = lags.last().unwrap() / lags.first().unwrap();
    if span < 10.0 - 1e-9 {
        return Err(Error::InsufficientData(format!(
            "lag set must span at least one decade, got ratio {span:.2}"
        )));
    }
    if values.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InsufficientData(
            "degenerate structure function (non-positive increments)".into(),
        ));
    }
    let xs: Vec<f64> = lags.iter().map(|l| l.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - ybar) * (y - ybar)).sum();
    let dof = (xs.len() as f64 - 2.0).max(1.0);
    let slope_se = (ss_res / dof / sxx).sqrt();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(StructureFunctionFit {
        lags: lags.to_vec(),
        values: values.to_vec(),
        slope,
        slope_se,
        exponent: slope / 2.0,
        exponent_se: slope_se / 2.0,
        r_squared,
    })
}

/// Spatial structure function over replicate density fields: for each lag
/// (in grid-node offsets along the first axis) average the squared node
/// differences over replicates and node pairs, then fit log-log.
pub fn spatial_exponent(
    fields: &[DensityField],
    lag_nodes: &[usize],
) -> Result<StructureFunctionFit> {
    let Some(first) = fields.first() else {
        return Err(Error::InsufficientData("no density fields supplied".into()));
    };
    let grid = &first.grid;
    if fields.iter().any(|f| f.grid != *grid) {
        return Err(Error::Config("density fields live on different grids".into()));
    }
    let nx = grid.shape[0];
    if lag_nodes.iter().any(|&k| k == 0 || k >= nx) {
        return Err(Error::Config("spatial lags must be within the grid".into()));
    }
    let rows = grid.len() / nx;
    let mut lags = Vec::with_capacity(lag_nodes.len());
    let mut values = Vec::with_capacity(lag_nodes.len());
    for &k in lag_nodes {
        let mut acc = 0.0;
        let mut count = 0usize;
        for field in fields {
            for row in 0..rows {
                let base = row * nx;
                for i in 0..nx - k {
                    let diff = field.values[base + i + k] - field.values[base + i];
                    acc += diff * diff;
                    count += 1;
                }
            }
        }
        lags.push(k as f64 * grid.pitch[0]);
        values.push(acc / count.max(1) as f64);
    }
    fit_loglog(&lags, &values)
}

/// Temporal structure function over replicate density time series at fixed
/// nodes: for each lag (in retained-snapshot steps) average the squared
/// increments over replicates, nodes, and time pairs. Series should be
/// trimmed (see [`trim_series_before`]) so the deterministic start-up ramp
/// does not dominate.
pub fn temporal_exponent(
    series: &[DensityTimeSeries],
    lag_steps: &[usize],
) -> Result<StructureFunctionFit> {
    let Some(first) = series.first() else {
        return Err(Error::InsufficientData("no density time series supplied".into()));
    };
    let n_times = first.times.len();
    if n_times < 2 {
        return Err(Error::InsufficientData("time series too short".into()));
    }
    let step = first.times[1] - first.times[0];
    if lag_steps.iter().any(|&k| k == 0 || k >= n_times) {
        return Err(Error::Config("temporal lags must be within the series".into()));
    }
    let n_nodes = first.grid.len();
    let mut lags = Vec::with_capacity(lag_steps.len());
    let mut values = Vec::with_capacity(lag_steps.len());
    for &k in lag_steps {
        let mut acc = 0.0;
        let mut count = 0usize;
        for s in series {
            for j in 0..s.times.len().saturating_sub(k) {
                let a = &s.values[j];
                let b = &s.values[j + k];
                for node in 0..n_nodes {
                    let diff = b[node] - a[node];
                    acc += diff * diff;
                    count += 1;
                }
            }
        }
        lags.push(k as f64 * step);
        values.push(acc / count.max(1) as f64);
    }
    fit_loglog(&lags, &values)
}

/// Drop all rows of a density time series before `t_min`.
pub fn trim_series_before(series: &DensityTimeSeries, t_min: f64) -> DensityTimeSeries {
    let keep: Vec<usize> = (0..series.times.len())
        .filter(|&j| series.times[j] >= t_min - 1e-12)
        .collect();
    DensityTimeSeries {
        grid: series.grid.clone(),
        bandwidth: series.bandwidth,
        times: keep.iter().map(|&j| series.times[j]).collect(),
        values: keep.iter().map(|&j| series.values[j].clone()).collect(),
    }
}

/// Synthetic fields with known exponents, used to gate the estimators.
pub mod harness {
    use super::*;
    use rand_distr::StandardNormal;

    /// `f(x) = x`: Lipschitz, spatial exponent 1 (slope 2).
    pub fn lipschitz_field(grid: &LatticeGrid) -> DensityField {
        let values = (0..grid.len()).map(|i| grid.node(i)[0]).collect();
        DensityField { grid: grid.clone(), t: 0.0, bandwidth: 0.0, values }
    }

    /// Independent node noise: no spatial regularity (slope ~ 0).
    pub fn white_noise_fields<R: Rng + ?Sized>(
        grid: &LatticeGrid,
        n: usize,
        rng: &mut R,
    ) -> Vec<DensityField> {
        (0..n)
            .map(|_| DensityField {
                grid: grid.clone(),
                t: 0.0,
                bandwidth: 0.0,
                values: (0..grid.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
            })
            .collect()
    }

    /// Brownian slice along the axis: exponent 1/2 (slope 1).
    pub fn brownian_fields<R: Rng + ?Sized>(
        grid: &LatticeGrid,
        n: usize,
        rng: &mut R,
    ) -> Vec<DensityField> {
        let pitch = grid.pitch[0];
        (0..n)
            .map(|_| {
                let mut values = Vec::with_capacity(grid.len());
                let mut acc = 0.0;
                for _ in 0..grid.len() {
                    values.push(acc);
                    acc += pitch.sqrt() * rng.sample::<f64, _>(StandardNormal);
                }
                DensityField { grid: grid.clone(), t: 0.0, bandwidth: 0.0, values }
            })
            .collect()
    }

    /// Linear-in-time series: temporal exponent 1.
    pub fn linear_time_series(grid: &LatticeGrid, n_times: usize, dt: f64) -> DensityTimeSeries {
        let times: Vec<f64> = (0..n_times).map(|j| j as f64 * dt).collect();
        let values = times
            .iter()
            .map(|t| (0..grid.len()).map(|i| t * (1.0 + 0.1 * grid.node(i)[0])).collect())
            .collect();
        DensityTimeSeries { grid: grid.clone(), bandwidth: 0.0, times, values }
    }

    /// Constant-in-time series: degenerate increments.
    pub fn constant_time_series(grid: &LatticeGrid, n_times: usize, dt: f64) -> DensityTimeSeries {
        let times: Vec<f64> = (0..n_times).map(|j| j as f64 * dt).collect();
        let values = times.iter().map(|_| vec![1.0; grid.len()]).collect();
        DensityTimeSeries { grid: grid.clone(), bandwidth: 0.0, times, values }
    }

    /// Brownian motion in time at each node: temporal exponent 1/2.
    pub fn brownian_time_series<R: Rng + ?Sized>(
        grid: &LatticeGrid,
        n_times: usize,
        dt: f64,
        rng: &mut R,
    ) -> DensityTimeSeries {
        let times: Vec<f64> = (0..n_times).map(|j| j as f64 * dt).collect();
        let n = grid.len();
        let mut state = vec![0.0; n];
        let mut values = Vec::with_capacity(n_times);
        for _ in 0..n_times {
            values.push(state.clone());
            for s in &mut state {
                *s += dt.sqrt() * rng.sample::<f64, _>(StandardNormal);
            }
        }
        DensityTimeSeries { grid: grid.clone(), bandwidth: 0.0, times, values }
    }
}
