//! Deterministic ARMA error recursion and point prediction.
//!
//! The classic conditional-sum-of-squares view of an ARMA model: innovations
//! are reconstructed by the one-step-error recursion with zero
//! initialization over the conditioning prefix. Requires complete data,
//! which is exactly the limitation the latent-error model removes.

use crate::error::{Error, Result};
use crate::model::Parameters;

fn orders(params: &Parameters) -> Result<(usize, usize, usize)> {
    if !params.eta.is_empty() {
        return Err(Error::InvalidArgument {
            name: "parameters".into(),
            reason: "classic ARMA recursions take no cross predictors".into(),
        });
    }
    let p = params.alpha.len();
    let q = params.beta.len();
    Ok((p, q, p.max(q)))
}

/// Reconstructs the innovation sequence, with `e_t = 0` for the first
/// `max(p, q)` positions. Fails on any missing value.
pub fn arma_errors(params: &Parameters, values: &[Option<f64>], id: &str) -> Result<Vec<f64>> {
    let (p, q, r) = orders(params)?;
    if values.len() <= r {
        return Err(Error::TooShort {
            id: id.into(),
            reason: format!("{} values for order {r}", values.len()),
        });
    }
    let mut y = Vec::with_capacity(values.len());
    for (i, v) in values.iter().enumerate() {
        match v {
            Some(x) => y.push(*x),
            None => return Err(Error::MissingData { id: id.into(), position: i + 1 }),
        }
    }
    let mut e = vec![0.0; y.len()];
    for t in (r + 1)..=y.len() {
        let mut pred = params.zeta;
        for i in 1..=p {
            pred += params.alpha[i - 1] * y[t - i - 1];
        }
        for j in 1..=q {
            pred += params.beta[j - 1] * e[t - j - 1];
        }
        e[t - 1] = y[t - 1] - pred;
    }
    Ok(e)
}

/// Point prediction of the value following a complete history.
pub fn arma_one_step(params: &Parameters, history: &[f64]) -> Result<f64> {
    let (p, q, r) = orders(params)?;
    let t_len = history.len();
    if t_len < r || t_len == 0 {
        return Err(Error::ShortHistory { len: t_len, required: r.max(1) });
    }
    let values: Vec<Option<f64>> = history.iter().map(|&v| Some(v)).collect();
    let e = if t_len > r {
        arma_errors(params, &values, "history")?
    } else {
        vec![0.0; t_len]
    };
    let mut pred = params.zeta;
    for i in 1..=p {
        pred += params.alpha[i - 1] * history[t_len - i];
    }
    for j in 1..=q {
        pred += params.beta[j - 1] * e[t_len - j];
    }
    Ok(pred)
}
