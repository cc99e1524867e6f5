//! Model structures and parameters for the stochastic ARMA family, plus the
//! versioned JSON document that stores fitted multi-series models.
//!
//! A model for one series is the conditional
//! `Y_t ~ N(zeta + sum_j beta_j E_{t-j} + sum_i alpha_i Y_{t-i} + eta . C_t, sigma)`
//! with latent errors `E_t ~ N(0, gamma)`. Both `sigma` and `gamma` are
//! variances. `beta_0` is either pinned to one or estimated freely.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{StandardizeRecord, TimeSeries};

pub const MODEL_FILE_VERSION: u32 = 1;

/// Treatment of the coefficient on the current latent error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Beta0Mode {
    /// `beta_0 = 1`, the identifiable default.
    #[default]
    FixedOne,
    /// `beta_0` estimated like any other coefficient.
    Free,
}

/// One lagged input taken from another (or the same) series.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossPredictor {
    pub source: String,
    pub lag: usize,
}

/// Orders and wiring of a model for one series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelStructure {
    /// Autoregressive order.
    pub p: usize,
    /// Moving-average order.
    pub q: usize,
    /// Differencing passes applied before modeling.
    #[serde(default)]
    pub d: usize,
    pub beta0_mode: Beta0Mode,
    #[serde(default)]
    pub cross_predictors: Vec<CrossPredictor>,
}

impl ModelStructure {
    pub fn new(p: usize, q: usize, beta0_mode: Beta0Mode) -> ModelStructure {
        ModelStructure { p, q, d: 0, beta0_mode, cross_predictors: Vec::new() }
    }

    /// Largest lag the conditional reaches back: `max(p, q)`.
    pub fn r(&self) -> usize {
        self.p.max(self.q)
    }

    pub fn n_cross(&self) -> usize {
        self.cross_predictors.len()
    }

    pub fn validate(&self) -> Result<()> {
        for xp in &self.cross_predictors {
            if xp.lag == 0 {
                return Err(Error::InvalidArgument {
                    name: "cross_predictors".into(),
                    reason: format!("predictor from `{}` has lag 0; lags must be >= 1", xp.source),
                });
            }
        }
        Ok(())
    }
}

/// Numeric parameters matching a [`ModelStructure`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub zeta: f64,
    pub beta0: f64,
    /// MA coefficients `beta_1..beta_q`.
    pub beta: Vec<f64>,
    /// AR coefficients `alpha_1..alpha_p`.
    pub alpha: Vec<f64>,
    /// Cross-predictor coefficients, aligned with the structure's list.
    pub eta: Vec<f64>,
    /// Latent error variance.
    pub gamma: f64,
    /// Observation noise variance.
    pub sigma: f64,
}

impl Parameters {
    /// Zero-coefficient parameters sized for `structure`; `gamma` starts at
    /// the population variance of the observed values (1.0 when that is
    /// unavailable or degenerate).
    pub fn init(structure: &ModelStructure, data: &TimeSeries, sigma: f64) -> Parameters {
        let obs: Vec<f64> = data.values.iter().filter_map(|v| *v).collect();
        let gamma = if obs.len() >= 2 {
            let n = obs.len() as f64;
            let mean = obs.iter().sum::<f64>() / n;
            let var = obs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            if var > 0.0 {
                var
            } else {
                1.0
            }
        } else {
            1.0
        };
        Parameters {
            zeta: 0.0,
            beta0: 1.0,
            beta: vec![0.0; structure.q],
            alpha: vec![0.0; structure.p],
            eta: vec![0.0; structure.n_cross()],
            gamma,
            sigma,
        }
    }

    pub fn validate(&self, structure: &ModelStructure) -> Result<()> {
        let checks = [
            ("beta", self.beta.len(), structure.q),
            ("alpha", self.alpha.len(), structure.p),
            ("eta", self.eta.len(), structure.n_cross()),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::SchemaError {
                    field: name.into(),
                    reason: format!("length {got} does not match structure ({want})"),
                });
            }
        }
        if !(self.gamma > 0.0) {
            return Err(Error::SchemaError {
                field: "gamma".into(),
                reason: format!("{} is not positive", self.gamma),
            });
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::SchemaError {
                field: "sigma".into(),
                reason: format!("{} is negative", self.sigma),
            });
        }
        if structure.beta0_mode == Beta0Mode::FixedOne && self.beta0 != 1.0 {
            return Err(Error::SchemaError {
                field: "beta0".into(),
                reason: format!("{} but mode pins it to 1", self.beta0),
            });
        }
        Ok(())
    }
}

/// Fitted model for one series, with the preprocessing needed to map
/// forecasts back to original units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesModel {
    pub structure: ModelStructure,
    pub parameters: Parameters,
    /// Standardization applied to this series before fitting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<StandardizeRecord>,
    /// Standardizations of cross-predictor source series, keyed by id.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub source_transforms: BTreeMap<String, StandardizeRecord>,
}

impl SeriesModel {
    /// Model with no preprocessing transforms attached.
    pub fn new(structure: ModelStructure, parameters: Parameters) -> SeriesModel {
        SeriesModel {
            structure,
            parameters,
            transform: None,
            source_transforms: BTreeMap::new(),
        }
    }
}

/// Models for a set of series, keyed by series id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MultiModel {
    pub series: BTreeMap<String, SeriesModel>,
}

impl MultiModel {
    pub fn single(id: impl Into<String>, model: SeriesModel) -> MultiModel {
        let mut series = BTreeMap::new();
        series.insert(id.into(), model);
        MultiModel { series }
    }

    /// Checks parameter shapes and cross-predictor wiring. `extra_ids` lists
    /// series available from data files but not modeled here.
    pub fn validate(&self, extra_ids: &[String]) -> Result<()> {
        for (id, m) in &self.series {
            m.structure.validate()?;
            m.parameters.validate(&m.structure).map_err(|e| match e {
                Error::SchemaError { field, reason } => Error::SchemaError {
                    field: format!("series.{id}.parameters.{field}"),
                    reason,
                },
                other => other,
            })?;
            for xp in &m.structure.cross_predictors {
                let known = self.series.contains_key(&xp.source)
                    || extra_ids.iter().any(|x| x == &xp.source);
                if !known {
                    return Err(Error::SchemaError {
                        field: format!("series.{id}.structure.cross_predictors"),
                        reason: format!("unknown source series `{}`", xp.source),
                    });
                }
            }
        }
        self.check_cycles()
    }

    /// Rejects dependency cycles through lag-0 edges. Lags are required to be
    /// at least one, so this only fires on hand-built structures that bypass
    /// validation; simultaneous wiring has no generative order.
    pub(crate) fn check_cycles(&self) -> Result<()> {
        let ids: Vec<&String> = self.series.keys().collect();
        let mut indegree: BTreeMap<&str, usize> = ids.iter().map(|id| (id.as_str(), 0)).collect();
        let mut edges: Vec<(&str, &str)> = Vec::new();
        for (id, m) in &self.series {
            for xp in &m.structure.cross_predictors {
                if xp.lag == 0 && self.series.contains_key(&xp.source) {
                    edges.push((xp.source.as_str(), id.as_str()));
                    *indegree.get_mut(id.as_str()).expect("modeled id") += 1;
                }
            }
        }
        let mut queue: Vec<&str> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&id, _)| id)
            .collect();
        let mut seen = 0;
        while let Some(id) = queue.pop() {
            seen += 1;
            for &(src, dst) in &edges {
                if src == id {
                    let d = indegree.get_mut(dst).expect("modeled id");
                    *d -= 1;
                    if *d == 0 {
                        queue.push(dst);
                    }
                }
            }
        }
        if seen != self.series.len() {
            let stuck = indegree
                .iter()
                .find(|(_, &d)| d > 0)
                .map(|(&id, _)| id.to_string())
                .unwrap_or_default();
            return Err(Error::CyclicCrossPredictors { id: stuck });
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    series: BTreeMap<String, SeriesModel>,
}

/// Serializes a model to its versioned JSON document.
pub fn to_json(model: &MultiModel) -> String {
    let file = ModelFile { version: MODEL_FILE_VERSION, series: model.series.clone() };
    serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
}

/// Parses and validates a model document. Unknown versions and shape
/// mismatches are schema errors naming the offending field. Under the
/// pinned-`beta0` mode the stored value is forced back to one, so mutated
/// documents cannot smuggle in a different coefficient.
pub fn from_json(text: &str) -> Result<MultiModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::SchemaError {
        field: "document".into(),
        reason: e.to_string(),
    })?;
    if file.version != MODEL_FILE_VERSION {
        return Err(Error::SchemaError {
            field: "version".into(),
            reason: format!("{} is not supported (expected {MODEL_FILE_VERSION})", file.version),
        });
    }
    let mut model = MultiModel { series: file.series };
    for m in model.series.values_mut() {
        if m.structure.beta0_mode == Beta0Mode::FixedOne {
            m.parameters.beta0 = 1.0;
        }
    }
    model.validate(&[])?;
    Ok(model)
}
