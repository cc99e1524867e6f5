//! Command-line interface: fit, forecast, search, eval, simulate, fill.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::estimation::{fit_multi, EmConfig};
use crate::experiment::{run_experiment, ExperimentSpec};
use crate::model::{Beta0Mode, CrossPredictor, ModelStructure, MultiModel};
use crate::search::{search_pq, search_xp, SearchConfig, SearchOutcome};
use crate::series::{
    apply_standardization, difference, fill_in, undifference_forecast, Collection,
    StandardizeRecord, TimeSeries,
};

#[derive(Parser)]
#[command(
    name = "sigma-arma",
    version,
    about = "Time-series modeling with latent shocks, exact inference under \
             missing data, and probabilistic forecasts"
)]
pub struct Cli {
    /// Print errors as a JSON object on stderr instead of plain text.
    #[arg(long, global = true)]
    pub json_errors: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Fit a model to one series of a CSV collection.
    Fit(FitArgs),
    /// Forecast future values from a stored model and its history.
    Forecast(ForecastArgs),
    /// Search model orders (and optionally cross predictors) greedily.
    Search(SearchArgs),
    /// Run a declarative evaluation experiment from a JSON spec.
    Eval(EvalArgs),
    /// Sample series from a stored model into a CSV collection.
    Simulate(SimulateArgs),
    /// Interpolate the missing entries of every series in a collection.
    Fill(FillArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Beta0Arg {
    /// The leading shock coefficient stays pinned at one.
    Fixed,
    /// The leading shock coefficient is estimated.
    Free,
}

impl From<Beta0Arg> for Beta0Mode {
    fn from(arg: Beta0Arg) -> Beta0Mode {
        match arg {
            Beta0Arg::Fixed => Beta0Mode::FixedOne,
            Beta0Arg::Free => Beta0Mode::Free,
        }
    }
}

#[derive(Args)]
pub struct FitArgs {
    /// CSV collection with one column per series.
    #[arg(long)]
    pub data: PathBuf,
    /// Which series to fit.
    #[arg(long)]
    pub series: String,
    /// Autoregressive order.
    #[arg(long, default_value_t = 0)]
    pub p: usize,
    /// Shock (moving-average) order.
    #[arg(long, default_value_t = 0)]
    pub q: usize,
    /// First-difference passes applied before fitting.
    #[arg(long, default_value_t = 0)]
    pub d: usize,
    #[arg(long, value_enum, default_value_t = Beta0Arg::Fixed)]
    pub beta0: Beta0Arg,
    /// Cross predictor as SOURCE:LAG; repeatable.
    #[arg(long = "xp")]
    pub xp: Vec<String>,
    /// Observation-noise variance (must be positive).
    #[arg(long, default_value_t = 0.01)]
    pub sigma: f64,
    /// Trailing values per series reserved for evaluation, excluded from
    /// fitting.
    #[arg(long, default_value_t = 0)]
    pub holdout: usize,
    /// Skip per-series standardization.
    #[arg(long)]
    pub raw: bool,
    /// Interpolate missing cross-predictor inputs instead of failing.
    #[arg(long)]
    pub fill_cross: bool,
    /// Where the fitted model JSON is written.
    #[arg(long)]
    pub out_model: PathBuf,
    /// Print fit diagnostics (log likelihood, iterations).
    #[arg(long)]
    pub trace: bool,
}

#[derive(Args)]
pub struct ForecastArgs {
    /// Model JSON produced by `fit` or `search`.
    #[arg(long)]
    pub model: PathBuf,
    /// CSV collection holding the history (original units).
    #[arg(long)]
    pub data: PathBuf,
    /// Which series to forecast.
    #[arg(long)]
    pub series: String,
    /// How many future values to predict.
    #[arg(long, default_value_t = 1)]
    pub steps: usize,
    /// Output CSV path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub series: String,
    /// Also search cross predictors over the other series.
    #[arg(long)]
    pub xp: bool,
    /// Comma-separated lags tried per cross-predictor source.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 12])]
    pub xp_lags: Vec<usize>,
    /// Upper bound on the autoregressive and shock orders.
    #[arg(long)]
    pub max_order: Option<usize>,
    /// Length of the structural validation window.
    #[arg(long, default_value_t = 12)]
    pub validation: usize,
    #[arg(long, default_value_t = 0.01)]
    pub sigma: f64,
    #[arg(long, value_enum, default_value_t = Beta0Arg::Fixed)]
    pub beta0: Beta0Arg,
    #[arg(long, default_value_t = 0)]
    pub holdout: usize,
    /// Skip per-series standardization.
    #[arg(long)]
    pub raw: bool,
    /// Refit the chosen structure on the full training data and write the
    /// model JSON here.
    #[arg(long)]
    pub out_model: Option<PathBuf>,
    /// Print every candidate evaluation.
    #[arg(long)]
    pub log: bool,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Experiment spec JSON.
    #[arg(long)]
    pub spec: PathBuf,
    /// Output prefix; the report is written to PREFIX.csv and PREFIX.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Model JSON describing the series to sample.
    #[arg(long)]
    pub model: PathBuf,
    /// Length of every sampled series.
    #[arg(long)]
    pub t_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct FillArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses the CLI and runs it; returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            if cli.json_errors {
                let payload = serde_json::json!({ "error": e.to_string() });
                eprintln!("{payload}");
            } else {
                eprintln!("error: {e}");
            }
            1
        }
    }
}

pub fn run(command: &Command) -> Result<()> {
    match command {
        Command::Fit(args) => cmd_fit(args),
        Command::Forecast(args) => cmd_forecast(args),
        Command::Search(args) => cmd_search(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fill(args) => cmd_fill(args),
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument {
            name: "sigma".into(),
            reason: "must be positive: with no observation noise the update step \
                     reproduces the current parameters and the fit cannot move"
                .into(),
        })
    }
}

fn parse_xp(specs: &[String]) -> Result<Vec<CrossPredictor>> {
    let mut out = Vec::with_capacity(specs.len());
    for spec in specs {
        let (source, lag) = spec.rsplit_once(':').ok_or_else(|| Error::InvalidArgument {
            name: "xp".into(),
            reason: format!("{spec:?} is not SOURCE:LAG"),
        })?;
        let lag: usize = lag.parse().map_err(|_| Error::InvalidArgument {
            name: "xp".into(),
            reason: format!("lag {lag:?} is not a non-negative integer"),
        })?;
        out.push(CrossPredictor { source: source.to_string(), lag });
    }
    Ok(out)
}

/// Standardizes the named series on their training regions (everything but
/// the trailing holdout), leaving the rest of the collection untouched.
fn standardize_training(collection: &mut Collection, ids: &[String]) -> Result<()> {
    for id in ids {
        let series = collection
            .series
            .iter_mut()
            .find(|s| &s.id == id)
            .ok_or_else(|| Error::InvalidArgument {
                name: "series".into(),
                reason: format!("no series named {id:?} in the collection"),
            })?;
        let train_len = series.len().saturating_sub(collection.holdout_len);
        let record = StandardizeRecord::from_observed(&series.id, &series.values[..train_len])?;
        *series = apply_standardization(series, record);
    }
    Ok(())
}

fn require_series<'a>(collection: &'a Collection, id: &str) -> Result<&'a TimeSeries> {
    collection.get(id).ok_or_else(|| Error::InvalidArgument {
        name: "series".into(),
        reason: format!("no series named {id:?} in the collection"),
    })
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    check_sigma(args.sigma)?;
    let cross_predictors = parse_xp(&args.xp)?;
    if args.d > 0 && !cross_predictors.is_empty() {
        return Err(Error::InvalidArgument {
            name: "d".into(),
            reason: "cross predictors require d = 0; lag alignment across \
                     differenced series is not defined"
                .into(),
        });
    }
    let structure = ModelStructure {
        p: args.p,
        q: args.q,
        d: args.d,
        beta0_mode: args.beta0.into(),
        cross_predictors,
    };
    structure.validate()?;

    let mut collection = crate::io::read_collection(&args.data)?;
    collection.holdout_len = args.holdout;
    require_series(&collection, &args.series)?;
    if !args.raw {
        let mut ids = vec![args.series.clone()];
        for xp in &structure.cross_predictors {
            if !ids.contains(&xp.source) {
                ids.push(xp.source.clone());
            }
        }
        standardize_training(&mut collection, &ids)?;
    }
    if args.d > 0 {
        let target = require_series(&collection, &args.series)?;
        let diffed = difference(target, args.d)?;
        let slot = collection
            .series
            .iter_mut()
            .find(|s| s.id == args.series)
            .expect("series present");
        *slot = diffed;
    }

    let mut structures = BTreeMap::new();
    structures.insert(args.series.clone(), structure);
    let (model, report) =
        fit_multi(&structures, &collection, args.sigma, &EmConfig::default(), args.fill_cross)?;
    for (id, src) in &report.cross_filled {
        eprintln!("note: filled missing values of cross source {src:?} for {id:?}");
    }
    if args.trace {
        for (id, trace) in &report.traces {
            let final_ll = trace.log_likelihood.last().copied().unwrap_or(f64::NAN);
            println!(
                "{id}: log_likelihood={:.6} iterations={} converged={}",
                final_ll, trace.iterations, trace.converged
            );
        }
    }
    std::fs::write(&args.out_model, crate::model::to_json(&model))?;
    println!("wrote model for {:?} to {}", args.series, args.out_model.display());
    Ok(())
}

fn load_model(path: &Path) -> Result<MultiModel> {
    let text = std::fs::read_to_string(path)?;
    crate::model::from_json(&text)
}

fn cmd_forecast(args: &ForecastArgs) -> Result<()> {
    if args.steps == 0 {
        return Err(Error::InvalidArgument {
            name: "steps".into(),
            reason: "must be at least 1".into(),
        });
    }
    let model = load_model(&args.model)?;
    let sm = model.series.get(&args.series).ok_or_else(|| Error::InvalidArgument {
        name: "series".into(),
        reason: format!("model has no series named {:?}", args.series),
    })?;
    let structure = &sm.structure;
    if structure.d > 0 && structure.n_cross() > 0 {
        return Err(Error::InvalidArgument {
            name: "model".into(),
            reason: "cross predictors require d = 0; lag alignment across \
                     differenced series is not defined"
                .into(),
        });
    }

    let collection = crate::io::read_collection(&args.data)?;
    let target = require_series(&collection, &args.series)?;
    let standardized = match sm.transform {
        Some(record) => apply_standardization(target, record),
        None => target.clone(),
    };
    let working = difference(&standardized, structure.d)?;
    let t_len = working.len();

    // Cross-predictor history and future rows, in model units.
    let mut sources = BTreeMap::new();
    for xp in &structure.cross_predictors {
        if sources.contains_key(&xp.source) {
            continue;
        }
        let src = require_series(&collection, &xp.source)?;
        let src = match sm.source_transforms.get(&xp.source) {
            Some(record) => apply_standardization(src, *record),
            None => src.clone(),
        };
        sources.insert(xp.source.clone(), src.values);
    }
    let (cross_hist, filled) = crate::estimation::assemble_cross_rows(
        &structure.cross_predictors,
        t_len,
        structure.r(),
        &sources,
        true,
    )?;
    for src in &filled {
        eprintln!("note: filled missing values of cross source {src:?}");
    }
    let mut cross_future = Vec::with_capacity(args.steps);
    for k in 1..=args.steps {
        let mut row = Vec::with_capacity(structure.n_cross());
        for xp in &structure.cross_predictors {
            let t = t_len + k;
            let value = if t > xp.lag {
                let idx = t - xp.lag - 1;
                sources.get(&xp.source).and_then(|v| v.get(idx).copied().flatten())
            } else {
                None
            };
            row.push(value);
        }
        cross_future.push(row);
    }

    let preds = crate::forecast::multi_step(
        structure,
        &sm.parameters,
        &working.values,
        &cross_hist,
        &cross_future,
        args.steps,
    )?;
    let pairs: Vec<(f64, f64)> = preds.iter().map(|p| (p.mean, p.variance)).collect();
    let leveled = undifference_forecast(&standardized, &pairs, structure.d)?;
    let original: Vec<(f64, f64)> = leveled
        .iter()
        .map(|&(m, v)| match sm.transform {
            Some(record) => record.invert_predictive(m, v),
            None => (m, v),
        })
        .collect();

    let mut out = String::from("step,mean,variance\n");
    for (k, (m, v)) in original.iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", k + 1, m, v));
    }
    match &args.out {
        Some(path) => {
            std::fs::write(path, out)?;
            println!("wrote {} forecasts for {:?} to {}", args.steps, args.series, path.display());
        }
        None => print!("{out}"),
    }
    Ok(())
}

fn cmd_search(args: &SearchArgs) -> Result<()> {
    check_sigma(args.sigma)?;
    let mut collection = crate::io::read_collection(&args.data)?;
    collection.holdout_len = args.holdout;
    require_series(&collection, &args.series)?;
    if !args.raw {
        let ids = if args.xp { collection.ids() } else { vec![args.series.clone()] };
        standardize_training(&mut collection, &ids)?;
    }
    // The search itself must not see the holdout.
    let mut training = Vec::with_capacity(collection.series.len());
    for s in &collection.series {
        let train_len = s.len().saturating_sub(args.holdout);
        let mut head = s.clone();
        head.values.truncate(train_len);
        training.push(head);
    }
    let train_col = Collection { series: training, holdout_len: 0 };

    let config = SearchConfig {
        em: EmConfig::default(),
        sigma: args.sigma,
        beta0_mode: args.beta0.into(),
        validation_len: args.validation,
        max_order: args.max_order,
        xp_lags: args.xp_lags.clone(),
    };
    let outcome: SearchOutcome = if args.xp {
        search_xp(&args.series, &train_col, &config)?
    } else {
        search_pq(require_series(&train_col, &args.series)?, &config)?
    };

    if args.log {
        for eval in &outcome.evaluations {
            let cross: Vec<String> =
                eval.cross.iter().map(|c| format!("{}:{}", c.source, c.lag)).collect();
            println!("candidate p={} q={} xp=[{}] score={}", eval.p, eval.q, cross.join(","), eval.score);
        }
    }
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    let cross: Vec<String> = outcome
        .structure
        .cross_predictors
        .iter()
        .map(|c| format!("{}:{}", c.source, c.lag))
        .collect();
    println!(
        "selected p={} q={} xp=[{}] validation_score={}",
        outcome.structure.p,
        outcome.structure.q,
        cross.join(","),
        outcome.score
    );

    if let Some(out_model) = &args.out_model {
        let mut structures = BTreeMap::new();
        structures.insert(args.series.clone(), outcome.structure.clone());
        let (model, _) =
            fit_multi(&structures, &collection, args.sigma, &EmConfig::default(), true)?;
        std::fs::write(out_model, crate::model::to_json(&model))?;
        println!("wrote model for {:?} to {}", args.series, out_model.display());
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.spec)?;
    let spec = ExperimentSpec::from_json(&text)?;
    let base_dir = args.spec.parent().unwrap_or_else(|| Path::new("."));
    let report = run_experiment(&spec, base_dir)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let csv_path = args.out.with_extension("csv");
    let json_path = args.out.with_extension("json");
    std::fs::write(&csv_path, report.to_csv())?;
    std::fs::write(&json_path, report.to_json())?;
    for cell in &report.cells {
        println!(
            "{} @ rate {}: mean_score={:.6} over {} series",
            cell.method, cell.missing_rate, cell.mean_score, cell.n_series
        );
    }
    for cmp in &report.comparisons {
        let p = cmp
            .p_value
            .map(|p| format!("{p:.6}"))
            .unwrap_or_else(|| "n/a".into());
        println!(
            "{} vs {} @ rate {}: wins {}-{} (ties {}), p={}, significant={}",
            cmp.a, cmp.b, cmp.missing_rate, cmp.wins_a, cmp.wins_b, cmp.ties, p, cmp.significant
        );
    }
    println!("wrote report to {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let collection = crate::simulate::simulate(&model, args.t_len, args.seed)?;
    crate::io::write_collection(&collection, &args.out)?;
    println!(
        "wrote {} series of length {} to {}",
        collection.series.len(),
        args.t_len,
        args.out.display()
    );
    Ok(())
}

fn cmd_fill(args: &FillArgs) -> Result<()> {
    let collection = crate::io::read_collection(&args.data)?;
    let mut filled = Vec::with_capacity(collection.series.len());
    for s in &collection.series {
        filled.push(fill_in(s)?);
    }
    let out = Collection { series: filled, holdout_len: collection.holdout_len };
    crate::io::write_collection(&out, &args.out)?;
    println!("wrote filled collection to {}", args.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xp_specs_parse_and_reject_garbage() {
        let parsed = parse_xp(&["other:3".into(), "a:b:2".into()]).unwrap();
        assert_eq!(parsed[0].source, "other");
        assert_eq!(parsed[0].lag, 3);
        assert_eq!(parsed[1].source, "a:b");
        assert_eq!(parsed[1].lag, 2);

        assert!(parse_xp(&["nolag".into()]).is_err());
        assert!(parse_xp(&["src:xyz".into()]).is_err());
    }

    #[test]
    fn zero_sigma_is_rejected_with_an_explanation() {
        match check_sigma(0.0) {
            Err(Error::InvalidArgument { name, reason }) => {
                assert_eq!(name, "sigma");
                assert!(reason.contains("cannot move"));
            }
            other => panic!("expected invalid argument, got {other:?}"),
        }
    }

    #[test]
    fn cli_parses_a_fit_command() {
        let cli = Cli::try_parse_from([
            "sigma-arma",
            "fit",
            "--data",
            "data.csv",
            "--series",
            "y",
            "--p",
            "2",
            "--q",
            "1",
            "--xp",
            "other:1",
            "--out-model",
            "model.json",
        ])
        .unwrap();
        match cli.command {
            Command::Fit(args) => {
                assert_eq!(args.p, 2);
                assert_eq!(args.q, 1);
                assert_eq!(args.xp, vec!["other:1".to_string()]);
            }
            _ => panic!("expected fit"),
        }
    }
}
