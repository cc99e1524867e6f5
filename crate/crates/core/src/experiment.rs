//! Declarative evaluation experiments.
//!
//! An experiment spec names a data source, a holdout length, a grid of
//! missing-data rates, and a list of methods; the runner degrades the
//! training data at each rate, standardizes every series on its degraded
//! training region, fits each method per series, scores it by mean one-step
//! log predictive density over the observed holdout points, and compares
//! method pairs with the exact sign test. Series that a method cannot handle
//! are skipped with a warning rather than failing the whole run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{assemble_cross_rows, fit_em, EmConfig};
use crate::evaluation::{
    arma_sequential_score, fit_classic_arma, sequential_predictive_score, sign_test,
};
use crate::model::{Beta0Mode, ModelStructure};
use crate::search::{
    greedy, search_pq, search_xp, search_xp_fixed_pq, CandidateScorer, SearchConfig,
};
use crate::series::{
    apply_standardization, difference, fill_in, fill_prefix, mix_seed, Collection,
    StandardizeRecord, TimeSeries,
};
use crate::simulate::simulate;

fn default_holdout() -> usize {
    12
}
fn default_rates() -> Vec<f64> {
    vec![0.0]
}
fn default_sigma() -> f64 {
    0.01
}
fn default_alpha() -> f64 {
    0.05
}
fn default_xp_lags() -> Vec<usize> {
    vec![1, 12]
}

/// Where the experiment's series come from.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// A CSV collection on disk.
    File { path: String },
    /// Series sampled from a stored model document.
    Simulate { model_path: String, t_len: usize, seed: u64 },
}

/// Which predictive model a method uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodModel {
    /// Classic ARMA fitted by conditional sum of squares on filled data.
    Arma,
    /// The same fit scored with the observation noise added to its variance.
    SmoothedArma,
    /// The latent-error model fitted by EM.
    SigmaArma,
    /// The latent-error model with searched cross predictors (filled data).
    SigmaArmaXp,
}

/// Whether the latent-error model trains on the degraded series directly or
/// on an interpolated version.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainOn {
    #[default]
    Missing,
    Filled,
}

/// Fixed orders or greedy search.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureChoice {
    #[default]
    Search,
    Fixed {
        p: usize,
        q: usize,
    },
}

/// One method column of the experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub name: String,
    pub model: MethodModel,
    #[serde(default)]
    pub beta0: Beta0Mode,
    #[serde(default)]
    pub train_on: TrainOn,
    #[serde(default = "default_xp_lags")]
    pub xp_lags: Vec<usize>,
    #[serde(default)]
    pub structure: StructureChoice,
    #[serde(default)]
    pub max_order: Option<usize>,
}

/// A pairwise method comparison, tested one-sided: does `a` beat `b`?
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Comparison {
    pub a: String,
    pub b: String,
}

/// The whole experiment document.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub data: DataSource,
    #[serde(default = "default_holdout")]
    pub holdout_len: usize,
    #[serde(default = "default_rates")]
    pub missing_rates: Vec<f64>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    /// Differencing passes applied to every series before modeling.
    #[serde(default)]
    pub d: usize,
    /// Subset of series to evaluate; all of them when absent.
    #[serde(default)]
    pub series: Option<Vec<String>>,
    pub methods: Vec<MethodSpec>,
    #[serde(default)]
    pub comparisons: Vec<Comparison>,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<ExperimentSpec> {
        let spec: ExperimentSpec =
            serde_json::from_str(text).map_err(|e| Error::SpecError {
                path: "document".into(),
                reason: e.to_string(),
            })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.holdout_len == 0 {
            return Err(Error::SpecError {
                path: "holdout_len".into(),
                reason: "must be at least 1".into(),
            });
        }
        for (i, rate) in self.missing_rates.iter().enumerate() {
            if !(0.0..1.0).contains(rate) {
                return Err(Error::SpecError {
                    path: format!("missing_rates[{i}]"),
                    reason: format!("{rate} is outside [0, 1)"),
                });
            }
        }
        if !(self.sigma > 0.0) {
            return Err(Error::SpecError {
                path: "sigma".into(),
                reason: format!("{} must be positive", self.sigma),
            });
        }
        if !(0.0 < self.alpha && self.alpha < 1.0) {
            return Err(Error::SpecError {
                path: "alpha".into(),
                reason: format!("{} is not in (0, 1)", self.alpha),
            });
        }
        if self.methods.is_empty() {
            return Err(Error::SpecError {
                path: "methods".into(),
                reason: "at least one method is required".into(),
            });
        }
        let mut names: Vec<&str> = self.methods.iter().map(|m| m.name.as_str()).collect();
        names.sort();
        names.dedup();
        if names.len() != self.methods.len() {
            return Err(Error::SpecError {
                path: "methods".into(),
                reason: "method names must be unique".into(),
            });
        }
        if self.d > 0 && self.methods.iter().any(|m| m.model == MethodModel::SigmaArmaXp) {
            return Err(Error::SpecError {
                path: "d".into(),
                reason: "cross-predictor methods require d = 0; lag alignment across \
                         differenced series is not defined"
                    .into(),
            });
        }
        for (i, m) in self.methods.iter().enumerate() {
            for (j, lag) in m.xp_lags.iter().enumerate() {
                if *lag == 0 {
                    return Err(Error::SpecError {
                        path: format!("methods[{i}].xp_lags[{j}]"),
                        reason: "lags must be at least 1".into(),
                    });
                }
            }
        }
        for (i, cmp) in self.comparisons.iter().enumerate() {
            for side in [&cmp.a, &cmp.b] {
                if !self.methods.iter().any(|m| &m.name == side) {
                    return Err(Error::SpecError {
                        path: format!("comparisons[{i}]"),
                        reason: format!("unknown method {side:?}"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Mean score of one method at one missing rate.
#[derive(Clone, Debug, Serialize)]
pub struct CellSummary {
    pub method: String,
    pub missing_rate: f64,
    pub mean_score: f64,
    pub n_series: usize,
}

/// Score of one method on one series at one rate.
#[derive(Clone, Debug, Serialize)]
pub struct SeriesScore {
    pub method: String,
    pub missing_rate: f64,
    pub series: String,
    pub score: f64,
}

/// Sign-test outcome for one comparison at one rate.
#[derive(Clone, Debug, Serialize)]
pub struct ComparisonRow {
    pub a: String,
    pub b: String,
    pub missing_rate: f64,
    pub n_series: usize,
    pub wins_a: usize,
    pub wins_b: usize,
    pub ties: usize,
    pub p_value: Option<f64>,
    pub significant: bool,
}

/// Everything an experiment run produces.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub cells: Vec<CellSummary>,
    pub series_scores: Vec<SeriesScore>,
    pub comparisons: Vec<ComparisonRow>,
    pub warnings: Vec<String>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Two CSV blocks: per-cell mean scores, then the pairwise tests.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,missing_rate,mean_score,n_series\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                csv_field(&c.method),
                c.missing_rate,
                c.mean_score,
                c.n_series
            );
        }
        out.push('\n');
        out.push_str("a,b,missing_rate,n_series,wins_a,wins_b,ties,p_value,significant\n");
        for c in &self.comparisons {
            let p = c.p_value.map(|p| p.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                csv_field(&c.a),
                csv_field(&c.b),
                c.missing_rate,
                c.n_series,
                c.wins_a,
                c.wins_b,
                c.ties,
                p,
                c.significant
            );
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn resolve(base: &Path, path: &str) -> std::path::PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loads the experiment's data source. Relative paths resolve against
/// `base_dir`.
pub fn load_data(spec: &ExperimentSpec, base_dir: &Path) -> Result<Collection> {
    let mut collection = match &spec.data {
        DataSource::File { path } => crate::io::read_collection(&resolve(base_dir, path))?,
        DataSource::Simulate { model_path, t_len, seed } => {
            let text = std::fs::read_to_string(resolve(base_dir, model_path))?;
            let model = crate::model::from_json(&text)?;
            simulate(&model, *t_len, *seed)?
        }
    };
    collection.holdout_len = spec.holdout_len;
    Ok(collection)
}

/// Runs the whole experiment. Relative data paths resolve against
/// `base_dir`, normally the directory holding the experiment file.
pub fn run_experiment(spec: &ExperimentSpec, base_dir: &Path) -> Result<ExperimentReport> {
    spec.validate()?;
    let collection = load_data(spec, base_dir)?;
    run_on_collection(spec, &collection)
}

/// Runs the experiment against an already-loaded collection.
pub fn run_on_collection(spec: &ExperimentSpec, collection: &Collection) -> Result<ExperimentReport> {
    let targets: Vec<String> = match &spec.series {
        Some(ids) => {
            for id in ids {
                if collection.get(id).is_none() {
                    return Err(Error::SpecError {
                        path: "series".into(),
                        reason: format!("unknown series {id:?}"),
                    });
                }
            }
            ids.clone()
        }
        None => collection.ids(),
    };

    let mut report = ExperimentReport {
        name: spec.name.clone(),
        cells: Vec::new(),
        series_scores: Vec::new(),
        comparisons: Vec::new(),
        warnings: Vec::new(),
    };

    for (rate_idx, &rate) in spec.missing_rates.iter().enumerate() {
        let prepared = prepare(spec, collection, rate, rate_idx, &mut report.warnings)?;
        // scores[method name] -> series -> score
        let mut scores: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
        for method in &spec.methods {
            let mut per_series = BTreeMap::new();
            for id in &targets {
                match score_method(spec, method, id, &prepared) {
                    Ok(s) => {
                        per_series.insert(id.as_str(), s);
                        report.series_scores.push(SeriesScore {
                            method: method.name.clone(),
                            missing_rate: rate,
                            series: id.clone(),
                            score: s,
                        });
                    }
                    Err(e) => report.warnings.push(format!(
                        "method {:?} skipped series {:?} at rate {}: {}",
                        method.name, id, rate, e
                    )),
                }
            }
            if !per_series.is_empty() {
                let mean = per_series.values().sum::<f64>() / per_series.len() as f64;
                report.cells.push(CellSummary {
                    method: method.name.clone(),
                    missing_rate: rate,
                    mean_score: mean,
                    n_series: per_series.len(),
                });
            }
            scores.insert(method.name.as_str(), per_series);
        }
        for cmp in &spec.comparisons {
            let sa = &scores[cmp.a.as_str()];
            let sb = &scores[cmp.b.as_str()];
            let common: Vec<&str> =
                sa.keys().filter(|k| sb.contains_key(*k)).copied().collect();
            let a_vals: Vec<f64> = common.iter().map(|k| sa[*k]).collect();
            let b_vals: Vec<f64> = common.iter().map(|k| sb[*k]).collect();
            let test = sign_test(&a_vals, &b_vals, spec.alpha)?;
            report.comparisons.push(ComparisonRow {
                a: cmp.a.clone(),
                b: cmp.b.clone(),
                missing_rate: rate,
                n_series: common.len(),
                wins_a: test.wins_a,
                wins_b: test.wins_b,
                ties: test.ties,
                p_value: test.p_value,
                significant: test.significant,
            });
        }
    }
    Ok(report)
}

/// Per-rate preprocessed data: training-degraded, standardized on the
/// degraded training region, then differenced.
struct Prepared {
    diffed: BTreeMap<String, TimeSeries>,
    holdout_len: usize,
}

fn prepare(
    spec: &ExperimentSpec,
    collection: &Collection,
    rate: f64,
    rate_idx: usize,
    warnings: &mut Vec<String>,
) -> Result<Prepared> {
    let degraded =
        collection.degrade_training(rate, mix_seed(spec.seed, &format!("rate-{rate_idx}")))?;
    let mut diffed = BTreeMap::new();
    for s in &degraded.series {
        let train_len = s.len().saturating_sub(spec.holdout_len);
        let standardized = match StandardizeRecord::from_observed(&s.id, &s.values[..train_len]) {
            Ok(rec) => apply_standardization(s, rec),
            Err(e) => {
                warnings.push(format!(
                    "series {:?} at rate {} left unstandardized: {}",
                    s.id, rate, e
                ));
                s.clone()
            }
        };
        match difference(&standardized, spec.d) {
            Ok(d) => {
                diffed.insert(s.id.clone(), d);
            }
            Err(e) => warnings.push(format!(
                "series {:?} at rate {} dropped: {}",
                s.id, rate, e
            )),
        }
    }
    Ok(Prepared { diffed, holdout_len: spec.holdout_len })
}

/// Greedy-search scorer for the classic ARMA baseline: fit by conditional
/// sum of squares on the head, score the validation window.
struct ArmaScorer<'a> {
    id: &'a str,
    values: &'a [f64],
    validation_len: usize,
    extra_variance: f64,
}

impl CandidateScorer for ArmaScorer<'_> {
    fn score(&mut self, p: usize, q: usize, _cross: &[crate::model::CrossPredictor]) -> f64 {
        let result = (|| -> Result<f64> {
            let structure = ModelStructure::new(p, q, Beta0Mode::FixedOne);
            if self.values.len() <= self.validation_len {
                return Err(Error::TooShort {
                    id: self.id.into(),
                    reason: "no room for a validation window".into(),
                });
            }
            let split = self.values.len() - self.validation_len;
            let fit = fit_classic_arma(&self.values[..split], &structure)?;
            let targets: Vec<Option<f64>> = self.values.iter().map(|&v| Some(v)).collect();
            arma_sequential_score(
                &fit.parameters,
                self.values,
                &targets,
                split,
                self.extra_variance,
                self.id,
            )
        })();
        result.unwrap_or(f64::NEG_INFINITY)
    }
}

fn score_method(
    spec: &ExperimentSpec,
    method: &MethodSpec,
    id: &str,
    prep: &Prepared,
) -> Result<f64> {
    let series = prep.diffed.get(id).ok_or_else(|| Error::TooShort {
        id: id.into(),
        reason: "dropped during preprocessing".into(),
    })?;
    let n = series.len();
    if n <= prep.holdout_len {
        return Err(Error::TooShort {
            id: id.into(),
            reason: format!("{n} values for a holdout of {}", prep.holdout_len),
        });
    }
    let split = n - prep.holdout_len;
    let em = EmConfig::default();

    match method.model {
        MethodModel::Arma | MethodModel::SmoothedArma => {
            let extra =
                if method.model == MethodModel::SmoothedArma { spec.sigma } else { 0.0 };
            let train = fill_in(&TimeSeries::new(id, series.values[..split].to_vec()))?;
            let train_vals: Vec<f64> =
                train.values.iter().map(|v| v.expect("filled")).collect();
            let structure = match method.structure {
                StructureChoice::Fixed { p, q } => {
                    ModelStructure::new(p, q, Beta0Mode::FixedOne)
                }
                StructureChoice::Search => {
                    let mut scorer = ArmaScorer {
                        id,
                        values: &train_vals,
                        validation_len: 12,
                        extra_variance: extra,
                    };
                    let cap = method.max_order.unwrap_or(usize::MAX);
                    let (_, p, q, _) = greedy(&mut scorer, &[], cap);
                    ModelStructure::new(p, q, Beta0Mode::FixedOne)
                }
            };
            let fit = fit_classic_arma(&train_vals, &structure)?;
            let mut full = train_vals.clone();
            for pos in split..n {
                match series.values[pos] {
                    Some(v) => full.push(v),
                    None => {
                        return Err(Error::MissingData { id: id.into(), position: pos + 1 })
                    }
                }
            }
            arma_sequential_score(&fit.parameters, &full, &series.values, split, extra, id)
        }
        MethodModel::SigmaArma => {
            let mut train = TimeSeries::new(id, series.values[..split].to_vec());
            if method.train_on == TrainOn::Filled {
                train = fill_in(&train)?;
            }
            let structure = match method.structure {
                StructureChoice::Fixed { p, q } => ModelStructure::new(p, q, method.beta0),
                StructureChoice::Search => {
                    let config = SearchConfig {
                        em: em.clone(),
                        sigma: spec.sigma,
                        beta0_mode: method.beta0,
                        validation_len: 12,
                        max_order: method.max_order,
                        xp_lags: Vec::new(),
                    };
                    search_pq(&train, &config)?.structure
                }
            };
            let train = fill_prefix(&train, structure.r())?;
            let (params, _) = fit_em(&structure, &train, &[], spec.sigma, &em)?;
            let mut scoring = train.values.clone();
            scoring.extend_from_slice(&series.values[split..]);
            sequential_predictive_score(&structure, &params, &scoring, &[], split, id)
        }
        MethodModel::SigmaArmaXp => {
            let train = fill_in(&TimeSeries::new(id, series.values[..split].to_vec()))?;
            let mut train_series = Vec::new();
            for (sid, s) in &prep.diffed {
                if sid == id {
                    train_series.push(train.clone());
                    continue;
                }
                let head = TimeSeries::new(sid, s.values[..split.min(s.len())].to_vec());
                let head = fill_in(&head).unwrap_or(head);
                train_series.push(head);
            }
            let train_col = Collection { series: train_series, holdout_len: 0 };
            let config = SearchConfig {
                em: em.clone(),
                sigma: spec.sigma,
                beta0_mode: method.beta0,
                validation_len: 12,
                max_order: method.max_order,
                xp_lags: method.xp_lags.clone(),
            };
            let structure = match method.structure {
                StructureChoice::Search => search_xp(id, &train_col, &config)?.structure,
                StructureChoice::Fixed { p, q } => {
                    search_xp_fixed_pq(id, &train_col, &config, p, q)?.structure
                }
            };
            let train = fill_prefix(&train, structure.r())?;
            let mut sources = BTreeMap::new();
            let mut full_sources = BTreeMap::new();
            for s in &train_col.series {
                if s.id == id {
                    continue;
                }
                sources.insert(s.id.clone(), s.values.clone());
                let mut vals = s.values.clone();
                let orig = prep.diffed.get(&s.id).expect("built from the same map");
                vals.extend_from_slice(&orig.values[split.min(orig.len())..]);
                full_sources.insert(s.id.clone(), vals);
            }
            let (rows_train, _) = assemble_cross_rows(
                &structure.cross_predictors,
                split,
                structure.r(),
                &sources,
                true,
            )?;
            let (params, _) = fit_em(&structure, &train, &rows_train, spec.sigma, &em)?;
            let mut scoring = train.values.clone();
            scoring.extend_from_slice(&series.values[split..]);
            let (rows_full, _) = assemble_cross_rows(
                &structure.cross_predictors,
                n,
                structure.r(),
                &full_sources,
                true,
            )?;
            sequential_predictive_score(&structure, &params, &scoring, &rows_full, split, id)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MultiModel, Parameters, SeriesModel};

    fn ar1_collection(n_series: usize, t_len: usize, seed: u64) -> Collection {
        let structure = ModelStructure::new(1, 0, Beta0Mode::FixedOne);
        let params = Parameters {
            zeta: 0.0,
            beta0: 1.0,
            beta: vec![],
            alpha: vec![0.7],
            eta: vec![],
            gamma: 1.0,
            sigma: 0.01,
        };
        let mut series = BTreeMap::new();
        for i in 0..n_series {
            series.insert(
                format!("s{i:02}"),
                SeriesModel::new(structure.clone(), params.clone()),
            );
        }
        simulate(&MultiModel { series }, t_len, seed).unwrap()
    }

    fn base_spec() -> ExperimentSpec {
        ExperimentSpec {
            name: "test".into(),
            data: DataSource::File { path: "unused.csv".into() },
            holdout_len: 8,
            missing_rates: vec![0.0, 0.3],
            sigma: 0.01,
            alpha: 0.05,
            seed: 7,
            d: 0,
            series: None,
            methods: vec![
                MethodSpec {
                    name: "sigma-arma".into(),
                    model: MethodModel::SigmaArma,
                    beta0: Beta0Mode::FixedOne,
                    train_on: TrainOn::Missing,
                    xp_lags: vec![1],
                    structure: StructureChoice::Fixed { p: 1, q: 0 },
                    max_order: None,
                },
                MethodSpec {
                    name: "arma".into(),
                    model: MethodModel::Arma,
                    beta0: Beta0Mode::FixedOne,
                    train_on: TrainOn::Missing,
                    xp_lags: vec![1],
                    structure: StructureChoice::Fixed { p: 1, q: 0 },
                    max_order: None,
                },
            ],
            comparisons: vec![Comparison { a: "sigma-arma".into(), b: "arma".into() }],
        }
    }

    #[test]
    fn spec_validation_names_the_offending_path() {
        let mut spec = base_spec();
        spec.missing_rates = vec![0.0, 1.0];
        match spec.validate() {
            Err(Error::SpecError { path, .. }) => assert_eq!(path, "missing_rates[1]"),
            other => panic!("expected spec error, got {other:?}"),
        }

        let mut spec = base_spec();
        spec.comparisons.push(Comparison { a: "ghost".into(), b: "arma".into() });
        match spec.validate() {
            Err(Error::SpecError { path, .. }) => assert_eq!(path, "comparisons[1]"),
            other => panic!("expected spec error, got {other:?}"),
        }
    }

    #[test]
    fn spec_json_round_trips_with_defaults() {
        let text = r#"{
            "name": "demo",
            "data": {"type": "file", "path": "data.csv"},
            "methods": [{"name": "m", "model": "sigma_arma"}]
        }"#;
        let spec = ExperimentSpec::from_json(text).unwrap();
        assert_eq!(spec.holdout_len, 12);
        assert_eq!(spec.missing_rates, vec![0.0]);
        assert_eq!(spec.methods[0].structure, StructureChoice::Search);
        assert_eq!(spec.methods[0].train_on, TrainOn::Missing);
    }

    #[test]
    fn unknown_spec_fields_are_rejected() {
        let text = r#"{
            "name": "demo",
            "data": {"type": "file", "path": "data.csv"},
            "mehtods": []
        }"#;
        match ExperimentSpec::from_json(text) {
            Err(Error::SpecError { path, .. }) => assert_eq!(path, "document"),
            other => panic!("expected spec error, got {other:?}"),
        }
    }

    #[test]
    fn full_run_produces_cells_scores_and_tests() {
        let spec = base_spec();
        let collection = ar1_collection(6, 70, 3);
        let report = run_on_collection(&spec, &collection).unwrap();

        // Two rates x two methods, all six series usable at rate 0.
        let rate0: Vec<_> =
            report.cells.iter().filter(|c| c.missing_rate == 0.0).collect();
        assert_eq!(rate0.len(), 2);
        assert!(rate0.iter().all(|c| c.n_series == 6));
        assert_eq!(
            report
                .comparisons
                .iter()
                .filter(|c| c.a == "sigma-arma" && c.b == "arma")
                .count(),
            2
        );
        for c in &report.comparisons {
            assert_eq!(c.wins_a + c.wins_b + c.ties, c.n_series);
        }
        // Scores are finite log densities.
        for s in &report.series_scores {
            assert!(s.score.is_finite(), "{s:?}");
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let spec = base_spec();
        let collection = ar1_collection(4, 60, 11);
        let a = run_on_collection(&spec, &collection).unwrap();
        let b = run_on_collection(&spec, &collection).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn csv_report_has_both_blocks() {
        let spec = base_spec();
        let collection = ar1_collection(3, 60, 2);
        let report = run_on_collection(&spec, &collection).unwrap();
        let csv = report.to_csv();
        assert!(csv.starts_with("method,missing_rate,mean_score,n_series\n"));
        assert!(csv.contains("a,b,missing_rate,n_series,wins_a,wins_b,ties,p_value,significant"));
    }
}
