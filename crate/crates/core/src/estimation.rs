//! Maximum-likelihood estimation by expectation-maximization.
//!
//! The E-step is the exact clique-chain sweep; the M-step solves the normal
//! equations of the conditional model in closed form using a pseudoinverse,
//! so collinear or under-identified regressors degrade gracefully instead of
//! blowing up. `sigma` is held fixed throughout: at `sigma = 0` the latent
//! errors are fully determined by the data and the updates reproduce the
//! current parameters, so the observation noise is treated as a smoothing
//! knob rather than an estimated quantity.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::inference::{CliqueChain, SuffStats};
use crate::model::{
    Beta0Mode, CrossPredictor, ModelStructure, MultiModel, Parameters, SeriesModel,
};
use crate::series::{fill_in, fill_prefix, Collection, TimeSeries};

/// Knobs for one EM fit.
#[derive(Clone, Debug)]
pub struct EmConfig {
    /// Hard cap on EM iterations.
    pub max_iters: usize,
    /// Stop when the relative log-likelihood improvement falls below this.
    pub rel_tol: f64,
    /// Singular values below `pinv_cutoff * s_max` are treated as zero in
    /// the M-step solve.
    pub pinv_cutoff: f64,
    /// Lower clamp for the error-variance update.
    pub min_gamma: f64,
}

impl Default for EmConfig {
    fn default() -> EmConfig {
        EmConfig {
            max_iters: 200,
            rel_tol: 1e-6,
            pinv_cutoff: 1e-12,
            min_gamma: 1e-10,
        }
    }
}

/// Per-fit diagnostics.
#[derive(Clone, Debug)]
pub struct FitTrace {
    /// Monitored log-likelihood at the start of each iteration. Monotone
    /// non-decreasing by construction.
    pub log_likelihood: Vec<f64>,
    /// Number of inference sweeps performed.
    pub iterations: usize,
    pub converged: bool,
}

/// One exact inference sweep: expected sufficient statistics under the
/// current parameters.
pub fn e_step(
    structure: &ModelStructure,
    params: &Parameters,
    observations: &[Option<f64>],
    cross: &[Vec<f64>],
) -> Result<SuffStats> {
    CliqueChain::build(structure, params, observations, cross)?.posterior_moments()
}

/// Closed-form parameter update from expected sufficient statistics.
///
/// Solves the bordered normal equations for the coefficient stack and the
/// intercept jointly, then updates `gamma` from the expected squared errors.
/// `sigma` passes through unchanged.
pub fn m_step(stats: &SuffStats, sigma: f64, config: &EmConfig) -> Result<Parameters> {
    if stats.count == 0 {
        return Err(Error::DegenerateStats);
    }
    let k = stats.layout.dim();
    let n = stats.count as f64;

    let mut a = DMatrix::zeros(k + 1, k + 1);
    a.view_mut((0, 0), (k, k)).copy_from(&stats.sum_xx);
    for i in 0..k {
        a[(i, k)] = stats.sum_x[i];
        a[(k, i)] = stats.sum_x[i];
    }
    a[(k, k)] = n;

    let mut b = DVector::zeros(k + 1);
    match stats.layout.beta0_mode {
        Beta0Mode::FixedOne => {
            b.rows_mut(0, k).copy_from(&(&stats.sum_yx - &stats.sum_xe));
            b[k] = stats.sum_y - stats.sum_e;
        }
        Beta0Mode::Free => {
            b.rows_mut(0, k).copy_from(&stats.sum_yx);
            b[k] = stats.sum_y;
        }
    }

    let svd = a.svd(true, true);
    let s_max = svd.singular_values.max();
    let u = svd
        .solve(&b, config.pinv_cutoff * s_max)
        .map_err(|reason| Error::NumericalFailure { reason: reason.into() })?;

    let gamma = (stats.sum_e2 / n).max(config.min_gamma);
    let phi = u.rows(0, k).into_owned();
    Ok(stats.layout.parameters_from_phi(&phi, u[k], gamma, sigma))
}

/// Residuals of the normal equations at the given parameters: the
/// coefficient block, the intercept component, and the `gamma` component.
/// All three vanish at an M-step fixed point.
pub fn normal_eq_residual(stats: &SuffStats, params: &Parameters) -> (DVector<f64>, f64, f64) {
    let n = stats.count as f64;
    let phi = stats.layout.phi(params);
    let (r_phi, r_zeta) = match stats.layout.beta0_mode {
        Beta0Mode::FixedOne => (
            &stats.sum_yx - &stats.sum_xe - &stats.sum_xx * &phi - &stats.sum_x * params.zeta,
            stats.sum_y - stats.sum_e - stats.sum_x.dot(&phi) - n * params.zeta,
        ),
        Beta0Mode::Free => (
            &stats.sum_yx - &stats.sum_xx * &phi - &stats.sum_x * params.zeta,
            stats.sum_y - stats.sum_x.dot(&phi) - n * params.zeta,
        ),
    };
    let r_gamma = stats.sum_e2 / n - params.gamma;
    (r_phi, r_zeta, r_gamma)
}

/// Fits one series by EM from a deterministic zero start.
///
/// The monitored log-likelihood is checked every iteration: a drop beyond
/// `1e-6` is a bug and surfaces as [`Error::NonMonotone`]; a smaller
/// numerical dip stops the fit and reverts to the previous iterate, so the
/// reported trace is monotone.
pub fn fit_em(
    structure: &ModelStructure,
    data: &TimeSeries,
    cross: &[Vec<f64>],
    sigma: f64,
    config: &EmConfig,
) -> Result<(Parameters, FitTrace)> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument {
            name: "sigma".into(),
            reason: "must be positive: at sigma = 0 the M-step reproduces the current \
                     parameters and EM cannot make progress"
                .into(),
        });
    }
    let mut params = Parameters::init(structure, data, sigma);
    let mut trace = FitTrace { log_likelihood: Vec::new(), iterations: 0, converged: false };
    let mut prev_ll = f64::NEG_INFINITY;
    let mut prev_params = params.clone();

    for iter in 0..config.max_iters {
        let run = CliqueChain::build(structure, &params, &data.values, cross)?.run()?;
        trace.iterations = iter + 1;
        let ll = run.log_likelihood;
        if !ll.is_finite() {
            return Err(Error::NumericalFailure {
                reason: format!("log-likelihood became non-finite at iteration {}", iter + 1),
            });
        }
        if iter > 0 {
            let drop = prev_ll - ll;
            if drop > 1e-6 {
                return Err(Error::NonMonotone { iteration: iter + 1, drop });
            }
            if drop > 0.0 {
                // Round-off dip: keep the previous, better iterate.
                params = prev_params;
                trace.converged = true;
                break;
            }
            trace.log_likelihood.push(ll);
            if ll - prev_ll <= config.rel_tol * prev_ll.abs().max(1.0) {
                trace.converged = true;
                break;
            }
        } else {
            trace.log_likelihood.push(ll);
        }
        prev_ll = ll;
        prev_params = params.clone();
        params = m_step(&run.stats, sigma, config)?;
    }
    Ok((params, trace))
}

/// Report from a multi-series fit.
#[derive(Clone, Debug, Default)]
pub struct MultiFitReport {
    pub traces: BTreeMap<String, FitTrace>,
    /// `(target, source)` pairs where missing cross values were filled.
    pub cross_filled: Vec<(String, String)>,
}

/// Builds the cross-predictor input rows for one target series.
///
/// Row `t` (1-based) holds, for each predictor `k`, the source value at
/// `t - lag_k`; references before the start of the sources are zero. Values
/// are required only for rows `t > r`. With `fill` set, missing source
/// values are interpolated and the affected sources reported; otherwise a
/// missing required value is an error.
pub fn assemble_cross_rows(
    predictors: &[CrossPredictor],
    len: usize,
    r: usize,
    sources: &BTreeMap<String, Vec<Option<f64>>>,
    fill: bool,
) -> Result<(Vec<Vec<f64>>, Vec<String>)> {
    if predictors.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let mut filled: BTreeMap<&str, Vec<Option<f64>>> = BTreeMap::new();
    let mut used_fill: Vec<String> = Vec::new();
    let mut rows = vec![vec![0.0; predictors.len()]; len];
    for (k, xp) in predictors.iter().enumerate() {
        let values = sources.get(&xp.source).ok_or_else(|| Error::SchemaError {
            field: "cross_predictors".into(),
            reason: format!("unknown source series {:?}", xp.source),
        })?;
        if values.len() < len {
            return Err(Error::InvalidArgument {
                name: "cross_predictors".into(),
                reason: format!(
                    "source {:?} has {} values but {len} are needed",
                    xp.source,
                    values.len()
                ),
            });
        }
        for t in 1..=len {
            if t < xp.lag + 1 {
                continue; // before the sources start; stays zero
            }
            let idx = t - xp.lag - 1;
            let raw = values[idx];
            let value = match raw {
                Some(v) => Some(v),
                None if t <= r => None, // never used
                None if fill => {
                    let f = match filled.get(xp.source.as_str()) {
                        Some(f) => f,
                        None => {
                            let series = TimeSeries::new(&xp.source, values.clone());
                            let done = fill_in(&series)?;
                            used_fill.push(xp.source.clone());
                            filled.insert(xp.source.as_str(), done.values);
                            filled.get(xp.source.as_str()).expect("just inserted")
                        }
                    };
                    f[idx]
                }
                None => {
                    return Err(Error::MissingCrossValues {
                        source_id: xp.source.clone(),
                        lag: xp.lag,
                    })
                }
            };
            if let Some(v) = value {
                rows[t - 1][k] = v;
            }
        }
    }
    used_fill.sort();
    used_fill.dedup();
    Ok((rows, used_fill))
}

/// Fits one model per entry of `structures` against the training region of
/// `collection` (everything before the holdout tail). Cross-predictor inputs
/// come from the source series' training regions; `fill_cross` controls
/// whether missing source values are interpolated or rejected.
pub fn fit_multi(
    structures: &BTreeMap<String, ModelStructure>,
    collection: &Collection,
    sigma: f64,
    config: &EmConfig,
    fill_cross: bool,
) -> Result<(MultiModel, MultiFitReport)> {
    let mut models = BTreeMap::new();
    let mut report = MultiFitReport::default();
    for (id, structure) in structures {
        let series = collection.get(id).ok_or_else(|| Error::InvalidArgument {
            name: "series".into(),
            reason: format!("no series named {id:?} in the collection"),
        })?;
        let train_len = series.values.len().saturating_sub(collection.holdout_len);
        let r = structure.r();
        if train_len <= r {
            return Err(Error::TooShort {
                id: id.clone(),
                reason: format!("{train_len} training values for order {r}"),
            });
        }
        let mut train = series.clone();
        train.values.truncate(train_len);
        let train = fill_prefix(&train, r)?;

        let mut source_values = BTreeMap::new();
        for xp in &structure.cross_predictors {
            let src = collection.get(&xp.source).ok_or_else(|| Error::SchemaError {
                field: "cross_predictors".into(),
                reason: format!("unknown source series {:?}", xp.source),
            })?;
            let src_train = src.values.len().saturating_sub(collection.holdout_len);
            source_values.insert(xp.source.clone(), src.values[..src_train].to_vec());
        }
        let (cross, filled) = assemble_cross_rows(
            &structure.cross_predictors,
            train_len,
            r,
            &source_values,
            fill_cross,
        )?;
        for src in filled {
            report.cross_filled.push((id.clone(), src));
        }

        let (params, trace) = fit_em(structure, &train, &cross, sigma, config)?;
        let mut source_transforms = BTreeMap::new();
        for xp in &structure.cross_predictors {
            if let Some(t) = collection.get(&xp.source).and_then(|s| s.transform) {
                source_transforms.insert(xp.source.clone(), t);
            }
        }
        models.insert(
            id.clone(),
            SeriesModel {
                structure: structure.clone(),
                parameters: params,
                transform: series.transform,
                source_transforms,
            },
        );
        report.traces.insert(id.clone(), trace);
    }
    let model = MultiModel { series: models };
    model.check_cycles()?;
    Ok((model, report))
}
