//! Probabilistic forecasting.
//!
//! One-step prediction has a closed form whenever the trailing `p` series
//! values and the next step's cross inputs are all known: the predictive
//! mean stacks the posterior means of the trailing errors, and the variance
//! adds the quadratic form of the moving-average weights over their
//! posterior covariance. When any required input is unknown the same answer
//! comes from extending the clique chain by one step and reading the new
//! value's marginal; both paths are exposed so they can check each other.
//! Multi-step forecasts always extend the chain, appending one unobserved
//! step at a time and recording each marginal as it is created, which is
//! exact because later unobserved steps carry no evidence backwards.

use crate::error::{Error, Result};
use crate::gaussian::{log_normal_density, Var};
use crate::inference::ChainEngine;
use crate::model::{Beta0Mode, ModelStructure, Parameters};

/// A one-dimensional Gaussian predictive distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Predictive {
    pub mean: f64,
    pub variance: f64,
}

fn check_inputs(
    structure: &ModelStructure,
    params: &Parameters,
    history: &[Option<f64>],
    cross_hist: &[Vec<f64>],
    cross_next: &[Option<f64>],
) -> Result<()> {
    structure.validate()?;
    params.validate(structure)?;
    let r = structure.r();
    if history.len() < r {
        return Err(Error::ShortHistory { len: history.len(), required: r });
    }
    if structure.p > 0 {
        for s in (r + 1 - structure.p)..=r {
            if history[s - 1].is_none() {
                return Err(Error::InvalidArgument {
                    name: "history".into(),
                    reason: format!(
                        "value at position {s} is missing; fill the initial segment first"
                    ),
                });
            }
        }
    }
    let c = structure.n_cross();
    if cross_next.len() != c {
        return Err(Error::InvalidArgument {
            name: "cross_next".into(),
            reason: format!("{} values for {c} cross predictors", cross_next.len()),
        });
    }
    if c > 0 && cross_hist.len() != history.len() {
        return Err(Error::InvalidArgument {
            name: "cross_hist".into(),
            reason: format!("{} rows for {} history steps", cross_hist.len(), history.len()),
        });
    }
    Ok(())
}

/// Predicts the next value, choosing the closed form when every regressor
/// is known and the chain-extension path otherwise.
pub fn one_step(
    structure: &ModelStructure,
    params: &Parameters,
    history: &[Option<f64>],
    cross_hist: &[Vec<f64>],
    cross_next: &[Option<f64>],
) -> Result<Predictive> {
    check_inputs(structure, params, history, cross_hist, cross_next)?;
    let t_len = history.len();
    let tail_known = (1..=structure.p).all(|i| history[t_len - i].is_some());
    let cross_known = cross_next.iter().all(|c| c.is_some());
    if tail_known && cross_known {
        one_step_closed_form(structure, params, history, cross_hist, cross_next)
    } else {
        one_step_extended(structure, params, history, cross_hist, cross_next)
    }
}

/// Closed-form one-step predictive. Requires the trailing `p` values and all
/// next-step cross inputs to be known.
pub fn one_step_closed_form(
    structure: &ModelStructure,
    params: &Parameters,
    history: &[Option<f64>],
    cross_hist: &[Vec<f64>],
    cross_next: &[Option<f64>],
) -> Result<Predictive> {
    check_inputs(structure, params, history, cross_hist, cross_next)?;
    let t_len = history.len();
    let (p, q) = (structure.p, structure.q);
    for i in 1..=p {
        if history[t_len - i].is_none() {
            return Err(Error::InvalidArgument {
                name: "history".into(),
                reason: format!("value at position {} is missing", t_len - i + 1),
            });
        }
    }

    let mut engine = ChainEngine::start(structure, params, history, cross_hist);
    engine.run_training()?;
    // Posterior over the trailing errors E_{T-q+1}..E_T, oldest first.
    let e_vars: Vec<Var> = ((t_len + 1 - q)..=t_len).map(Var::E).collect();
    let (e_mean, e_cov) = engine.posterior_of(&e_vars);

    let beta0 = match structure.beta0_mode {
        Beta0Mode::FixedOne => 1.0,
        Beta0Mode::Free => params.beta0,
    };
    let mut mean = params.zeta;
    // Weight for position a (variable E_{T-q+1+a}) is beta_{q-a}.
    let mut weights = nalgebra::DVector::zeros(q);
    for a in 0..q {
        weights[a] = params.beta[q - a - 1];
        mean += weights[a] * e_mean[a];
    }
    for i in 1..=p {
        mean += params.alpha[i - 1] * history[t_len - i].expect("checked above");
    }
    for (k, c) in cross_next.iter().enumerate() {
        mean += params.eta[k]
            * c.ok_or_else(|| Error::InvalidArgument {
                name: "cross_next".into(),
                reason: format!("value {k} is missing"),
            })?;
    }
    let variance =
        params.sigma + beta0 * beta0 * params.gamma + (&weights.transpose() * &e_cov * &weights)[0];
    Ok(Predictive { mean, variance })
}

/// One-step predictive by extending the chain with an unobserved step.
/// Handles missing trailing values and unknown cross inputs, which become
/// independent standard-normal latents.
pub fn one_step_extended(
    structure: &ModelStructure,
    params: &Parameters,
    history: &[Option<f64>],
    cross_hist: &[Vec<f64>],
    cross_next: &[Option<f64>],
) -> Result<Predictive> {
    check_inputs(structure, params, history, cross_hist, cross_next)?;
    let mut engine = ChainEngine::start(structure, params, history, cross_hist);
    engine.run_training()?;
    let (mean, variance) = engine.extend(cross_next)?;
    Ok(Predictive { mean, variance })
}

/// Forecasts `steps` values past the end of the history. `cross_future`
/// holds one row per step when the model has cross predictors (entries may
/// be `None` for unknown future inputs); it must be empty otherwise.
pub fn multi_step(
    structure: &ModelStructure,
    params: &Parameters,
    history: &[Option<f64>],
    cross_hist: &[Vec<f64>],
    cross_future: &[Vec<Option<f64>>],
    steps: usize,
) -> Result<Vec<Predictive>> {
    if steps == 0 {
        return Err(Error::InvalidArgument {
            name: "steps".into(),
            reason: "must be at least 1".into(),
        });
    }
    let c = structure.n_cross();
    let none_row = vec![None; c];
    let first = cross_future.first().cloned().unwrap_or_else(|| none_row.clone());
    check_inputs(structure, params, history, cross_hist, &first)?;
    if c > 0 && !cross_future.is_empty() && cross_future.len() != steps {
        return Err(Error::InvalidArgument {
            name: "cross_future".into(),
            reason: format!("{} rows for {steps} steps", cross_future.len()),
        });
    }

    let mut engine = ChainEngine::start(structure, params, history, cross_hist);
    engine.run_training()?;
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        let row = cross_future.get(k).cloned().unwrap_or_else(|| none_row.clone());
        if row.len() != c {
            return Err(Error::InvalidArgument {
                name: "cross_future".into(),
                reason: format!("row {} has {} values for {c} predictors", k + 1, row.len()),
            });
        }
        let (mean, variance) = engine.extend(&row)?;
        out.push(Predictive { mean, variance });
    }
    Ok(out)
}

/// Log-density of `value` under the one-step predictive distribution.
pub fn predictive_density(
    structure: &ModelStructure,
    params: &Parameters,
    history: &[Option<f64>],
    cross_hist: &[Vec<f64>],
    cross_next: &[Option<f64>],
    value: f64,
) -> Result<f64> {
    let pred = one_step(structure, params, history, cross_hist, cross_next)?;
    log_normal_density(value, pred.mean, pred.variance)
}
