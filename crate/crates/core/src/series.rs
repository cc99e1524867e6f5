//! Time-series containers and the preprocessing transforms used ahead of
//! model fitting: standardization, differencing, masking, and fill-in.
//!
//! Standardization uses the population convention (divide by `n`), so a
//! two-point series maps to values at exactly plus and minus one.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Affine transform record: `standardized = (value - mean) / std`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizeRecord {
    pub mean: f64,
    pub std: f64,
}

impl StandardizeRecord {
    /// Computes mean and population standard deviation over the `Some`
    /// entries of `values`.
    pub fn from_observed(id: &str, values: &[Option<f64>]) -> Result<StandardizeRecord> {
        let obs: Vec<f64> = values.iter().filter_map(|v| *v).collect();
        if obs.len() < 2 {
            return Err(Error::TooShort {
                id: id.to_string(),
                reason: format!("{} observed values; standardization needs 2", obs.len()),
            });
        }
        let n = obs.len() as f64;
        let mean = obs.iter().sum::<f64>() / n;
        let var = obs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > 0.0) {
            return Err(Error::ConstantSeries { id: id.to_string() });
        }
        Ok(StandardizeRecord { mean, std })
    }

    pub fn apply(&self, value: f64) -> f64 {
        (value - self.mean) / self.std
    }

    pub fn invert(&self, value: f64) -> f64 {
        value * self.std + self.mean
    }

    /// Maps a predictive (mean, variance) pair back to the original scale.
    pub fn invert_predictive(&self, mean: f64, variance: f64) -> (f64, f64) {
        (self.invert(mean), variance * self.std * self.std)
    }
}

/// A single univariate series with optional missing values.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    pub id: String,
    pub values: Vec<Option<f64>>,
    /// Standardization applied to the values, when any.
    pub transform: Option<StandardizeRecord>,
    /// Number of differencing passes applied to the values.
    pub diff_order: usize,
}

impl TimeSeries {
    pub fn new(id: impl Into<String>, values: Vec<Option<f64>>) -> TimeSeries {
        TimeSeries {
            id: id.into(),
            values,
            transform: None,
            diff_order: 0,
        }
    }

    pub fn from_values(id: impl Into<String>, values: Vec<f64>) -> TimeSeries {
        TimeSeries::new(id, values.into_iter().map(Some).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn observed_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// A set of equal-length series observed over the same time axis.
#[derive(Clone, Debug, Default)]
pub struct Collection {
    /// Series in their on-disk column order.
    pub series: Vec<TimeSeries>,
    /// Number of trailing positions reserved for evaluation.
    pub holdout_len: usize,
}

impl Collection {
    pub fn get(&self, id: &str) -> Option<&TimeSeries> {
        self.series.iter().find(|s| s.id == id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.series.iter().map(|s| s.id.clone()).collect()
    }

    /// Masks each series' training region (everything before the holdout) at
    /// the given rate. Seeds are derived per series so the masks do not
    /// depend on column order.
    pub fn degrade_training(&self, rate: f64, seed: u64) -> Result<Collection> {
        let mut out = self.clone();
        for s in &mut out.series {
            let train_len = s.len().saturating_sub(self.holdout_len);
            let head = TimeSeries::new(s.id.clone(), s.values[..train_len].to_vec());
            let masked = make_missing(&head, rate, mix_seed(seed, &s.id))?;
            s.values[..train_len].copy_from_slice(&masked.values);
        }
        Ok(out)
    }
}

/// FNV-1a mix of a base seed with a series id, for order-independent
/// per-series randomness.
pub fn mix_seed(seed: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in id.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^ seed
}

/// Standardizes a series to zero mean and unit population standard deviation
/// over its observed values, recording the transform for inversion.
pub fn standardize(series: &TimeSeries) -> Result<TimeSeries> {
    if series.transform.is_some() {
        return Err(Error::InvalidArgument {
            name: "series".into(),
            reason: format!("series `{}` already carries a standardization", series.id),
        });
    }
    let record = StandardizeRecord::from_observed(&series.id, &series.values)?;
    Ok(apply_standardization(series, record))
}

/// Applies a precomputed standardization record to every observed value.
/// Lets callers compute the record on a training region and apply it to the
/// full series without leaking later values into the statistics.
pub fn apply_standardization(series: &TimeSeries, record: StandardizeRecord) -> TimeSeries {
    let values = series
        .values
        .iter()
        .map(|v| v.map(|x| record.apply(x)))
        .collect();
    TimeSeries {
        id: series.id.clone(),
        values,
        transform: Some(record),
        diff_order: series.diff_order,
    }
}

/// Inverts a standardization, restoring original units.
pub fn unstandardize(series: &TimeSeries) -> Result<TimeSeries> {
    let record = series.transform.ok_or_else(|| Error::InvalidArgument {
        name: "series".into(),
        reason: format!("series `{}` has no standardization to invert", series.id),
    })?;
    let values = series
        .values
        .iter()
        .map(|v| v.map(|x| record.invert(x)))
        .collect();
    Ok(TimeSeries {
        id: series.id.clone(),
        values,
        transform: None,
        diff_order: series.diff_order,
    })
}

/// Applies `d` first-difference passes. A missing operand makes the
/// difference missing. Length shrinks by one per pass.
pub fn difference(series: &TimeSeries, d: usize) -> Result<TimeSeries> {
    if series.len() <= d {
        return Err(Error::TooShort {
            id: series.id.clone(),
            reason: format!("length {} does not exceed difference order {d}", series.len()),
        });
    }
    let mut values = series.values.clone();
    for _ in 0..d {
        values = values
            .windows(2)
            .map(|w| match (w[0], w[1]) {
                (Some(a), Some(b)) => Some(b - a),
                _ => None,
            })
            .collect();
    }
    Ok(TimeSeries {
        id: series.id.clone(),
        values,
        transform: series.transform,
        diff_order: series.diff_order + d,
    })
}

/// Maps forecasts of a `d`-times differenced series back to level scale.
///
/// `base` is the undifferenced history the forecasts extend; its last `d`
/// values must be observed. Forecast variances accumulate across steps
/// because each level value is a running sum of differenced values.
pub fn undifference_forecast(
    base: &TimeSeries,
    forecasts: &[(f64, f64)],
    d: usize,
) -> Result<Vec<(f64, f64)>> {
    if d == 0 {
        return Ok(forecasts.to_vec());
    }
    if base.len() < d {
        return Err(Error::TooShort {
            id: base.id.clone(),
            reason: format!("length {} shorter than difference order {d}", base.len()),
        });
    }
    let tail_start = base.len() - d;
    let mut tail = Vec::with_capacity(d);
    for (offset, v) in base.values[tail_start..].iter().enumerate() {
        match v {
            Some(x) => tail.push(*x),
            None => return Err(Error::MissingBase { position: tail_start + offset }),
        }
    }
    // last_at_level[k] = final value of the k-times differenced history,
    // for the levels 0..d the integration below passes through.
    let mut last_at_level = vec![0.0; d];
    let mut row = tail;
    last_at_level[0] = *row.last().expect("tail non-empty");
    for (k, slot) in last_at_level.iter_mut().enumerate().skip(1) {
        row = row.windows(2).map(|w| w[1] - w[0]).collect();
        *slot = *row.last().unwrap_or_else(|| panic!("level {k} tail non-empty"));
    }

    let mut cur: Vec<(f64, f64)> = forecasts.to_vec();
    for k in (0..d).rev() {
        let mut out = Vec::with_capacity(cur.len());
        let mut level = last_at_level[k];
        let mut var_acc = 0.0;
        for &(m, v) in &cur {
            level += m;
            var_acc += v;
            out.push((level, var_acc));
        }
        cur = out;
    }
    Ok(cur)
}

/// Independently masks each value with probability `rate` using a seeded
/// generator, so identical inputs give identical masks.
pub fn make_missing(series: &TimeSeries, rate: f64, seed: u64) -> Result<TimeSeries> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument {
            name: "rate".into(),
            reason: format!("{rate} outside [0, 1)"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = series
        .values
        .iter()
        .map(|v| {
            let drop = rng.random::<f64>() < rate;
            if drop {
                None
            } else {
                *v
            }
        })
        .collect();
    Ok(TimeSeries {
        id: series.id.clone(),
        values,
        transform: series.transform,
        diff_order: series.diff_order,
    })
}

/// Replaces every missing value by the line through the two closest observed
/// points: interpolation between neighbors inside the observed range,
/// extrapolation from the two nearest points at the edges.
pub fn fill_in(series: &TimeSeries) -> Result<TimeSeries> {
    let obs: Vec<(usize, f64)> = series
        .values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|x| (i, x)))
        .collect();
    if obs.len() < 2 {
        return Err(Error::TooShort {
            id: series.id.clone(),
            reason: format!("{} observed values; fill-in needs 2", obs.len()),
        });
    }
    let line = |(x0, y0): (usize, f64), (x1, y1): (usize, f64), x: usize| -> f64 {
        let slope = (y1 - y0) / (x1 as f64 - x0 as f64);
        y0 + slope * (x as f64 - x0 as f64)
    };
    let mut values = series.values.clone();
    for (i, v) in values.iter_mut().enumerate() {
        if v.is_some() {
            continue;
        }
        let right = obs.iter().position(|&(j, _)| j > i);
        let left = obs.iter().rposition(|&(j, _)| j < i);
        let filled = match (left, right) {
            (Some(l), Some(r)) => line(obs[l], obs[r], i),
            (None, Some(_)) => line(obs[0], obs[1], i),
            (Some(_), None) => line(obs[obs.len() - 2], obs[obs.len() - 1], i),
            (None, None) => unreachable!("at least two observed points exist"),
        };
        *v = Some(filled);
    }
    Ok(TimeSeries {
        id: series.id.clone(),
        values,
        transform: series.transform,
        diff_order: series.diff_order,
    })
}

/// Fills only missing values among the first `r` positions, using the same
/// line rule as [`fill_in`]. Model fitting conditions on those positions, so
/// they must hold concrete values.
pub fn fill_prefix(series: &TimeSeries, r: usize) -> Result<TimeSeries> {
    let r = r.min(series.len());
    if series.values[..r].iter().all(|v| v.is_some()) {
        return Ok(series.clone());
    }
    let filled = fill_in(series)?;
    let mut out = series.clone();
    out.values[..r].copy_from_slice(&filled.values[..r]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn standardize_two_points() {
        // Population convention: mean 2, std 1, values at minus and plus one.
        let s = TimeSeries::from_values("a", vec![1.0, 3.0]);
        let z = standardize(&s).unwrap();
        let rec = z.transform.unwrap();
        assert_abs_diff_eq!(rec.mean, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rec.std, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(z.values[0].unwrap(), -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(z.values[1].unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn standardize_ignores_missing_and_round_trips() {
        let s = TimeSeries::new("a", vec![Some(2.0), None, Some(4.0), Some(6.0)]);
        let z = standardize(&s).unwrap();
        assert!(z.values[1].is_none());
        let rec = z.transform.unwrap();
        assert_abs_diff_eq!(rec.mean, 4.0, epsilon = 1e-12);
        let obs: Vec<f64> = z.values.iter().filter_map(|v| *v).collect();
        let m: f64 = obs.iter().sum::<f64>() / obs.len() as f64;
        let var: f64 = obs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / obs.len() as f64;
        assert_abs_diff_eq!(m, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(var, 1.0, epsilon = 1e-12);
        let back = unstandardize(&z).unwrap();
        assert_abs_diff_eq!(back.values[0].unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(back.values[3].unwrap(), 6.0, epsilon = 1e-12);
    }

    #[test]
    fn standardize_already_unit_scale_is_identity() {
        let vals = [-1.5, -0.5, 0.5, 1.5];
        let m: f64 = vals.iter().sum::<f64>() / 4.0;
        let var: f64 = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 4.0;
        let std = var.sqrt();
        let unit: Vec<f64> = vals.iter().map(|v| (v - m) / std).collect();
        let z = standardize(&TimeSeries::from_values("a", unit.clone())).unwrap();
        let rec = z.transform.unwrap();
        assert_abs_diff_eq!(rec.mean, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rec.std, 1.0, epsilon = 1e-12);
        for (got, want) in z.values.iter().zip(&unit) {
            assert_abs_diff_eq!(got.unwrap(), *want, epsilon = 1e-12);
        }
    }

    #[test]
    fn standardize_rejects_constant_and_short() {
        let c = TimeSeries::from_values("c", vec![5.0, 5.0, 5.0]);
        assert!(matches!(standardize(&c), Err(Error::ConstantSeries { .. })));
        let s = TimeSeries::new("s", vec![Some(1.0), None]);
        assert!(matches!(standardize(&s), Err(Error::TooShort { .. })));
    }

    #[test]
    fn difference_twice_by_hand() {
        // 1 4 9 16 -> 3 5 7 -> 2 2
        let s = TimeSeries::from_values("sq", vec![1.0, 4.0, 9.0, 16.0]);
        let d2 = difference(&s, 2).unwrap();
        assert_eq!(d2.diff_order, 2);
        assert_eq!(d2.values, vec![Some(2.0), Some(2.0)]);
    }

    #[test]
    fn difference_propagates_missing() {
        let s = TimeSeries::new("m", vec![Some(1.0), None, Some(4.0), Some(8.0)]);
        let d = difference(&s, 1).unwrap();
        assert_eq!(d.values, vec![None, None, Some(4.0)]);
    }

    #[test]
    fn difference_rejects_short() {
        let s = TimeSeries::from_values("s", vec![1.0, 2.0]);
        assert!(matches!(difference(&s, 2), Err(Error::TooShort { .. })));
    }

    #[test]
    fn undifference_second_order_by_hand() {
        // Level history ends (8, 10); forecasting the twice-differenced
        // series with mean 1 per step lifts back to 13, 17, 22.
        let base = TimeSeries::from_values("u", vec![2.0, 5.0, 8.0, 10.0]);
        let fc = vec![(1.0, 0.5), (1.0, 0.5), (1.0, 0.5)];
        let out = undifference_forecast(&base, &fc, 2).unwrap();
        let means: Vec<f64> = out.iter().map(|x| x.0).collect();
        assert_eq!(means, vec![13.0, 17.0, 22.0]);
        // Variances accumulate through both integration passes.
        assert_abs_diff_eq!(out[0].1, 0.5, epsilon = 1e-12);
        assert!(out[1].1 > out[0].1);
        assert!(out[2].1 > out[1].1);
    }

    #[test]
    fn undifference_round_trips_difference() {
        let vals = vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let base = TimeSeries::from_values("rt", vals[..5].to_vec());
        for d in 1..=2 {
            let full = TimeSeries::from_values("rt", vals.clone());
            let diffed = difference(&full, d).unwrap();
            let fc: Vec<(f64, f64)> = diffed.values[5 - d..]
                .iter()
                .map(|v| (v.unwrap(), 0.0))
                .collect();
            let lifted = undifference_forecast(&base, &fc, d).unwrap();
            for (got, want) in lifted.iter().zip(&vals[5..]) {
                assert_abs_diff_eq!(got.0, *want, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn undifference_requires_observed_base_tail() {
        let base = TimeSeries::new("b", vec![Some(1.0), None]);
        let err = undifference_forecast(&base, &[(1.0, 1.0)], 1);
        assert!(matches!(err, Err(Error::MissingBase { position: 1 })));
    }

    #[test]
    fn make_missing_is_seeded_and_calibrated() {
        let s = TimeSeries::from_values("mm", (0..10_000).map(|i| i as f64).collect());
        let a = make_missing(&s, 0.5, 7).unwrap();
        let b = make_missing(&s, 0.5, 7).unwrap();
        assert_eq!(a.values, b.values);
        let c = make_missing(&s, 0.5, 8).unwrap();
        assert_ne!(a.values, c.values);
        // Within three standard deviations of Binomial(10000, 0.5).
        let missing = a.values.iter().filter(|v| v.is_none()).count();
        assert!((4850..=5150).contains(&missing), "missing = {missing}");
        let zero = make_missing(&s, 0.0, 7).unwrap();
        assert_eq!(zero.observed_count(), 10_000);
    }

    #[test]
    fn fill_in_interpolates_and_extrapolates() {
        let s = TimeSeries::new(
            "f",
            vec![None, Some(2.0), Some(4.0)],
        );
        let f = fill_in(&s).unwrap();
        assert_eq!(f.values, vec![Some(0.0), Some(2.0), Some(4.0)]);

        let s2 = TimeSeries::new(
            "f2",
            vec![Some(1.0), None, None, Some(7.0), None],
        );
        let f2 = fill_in(&s2).unwrap();
        assert_abs_diff_eq!(f2.values[1].unwrap(), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f2.values[2].unwrap(), 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f2.values[4].unwrap(), 9.0, epsilon = 1e-12);
    }

    #[test]
    fn fill_in_needs_two_points() {
        let s = TimeSeries::new("f", vec![None, Some(1.0), None]);
        assert!(matches!(fill_in(&s), Err(Error::TooShort { .. })));
    }

    #[test]
    fn fill_prefix_touches_only_prefix() {
        let s = TimeSeries::new("p", vec![None, Some(2.0), None, Some(6.0)]);
        let f = fill_prefix(&s, 2).unwrap();
        assert!(f.values[0].is_some());
        assert!(f.values[2].is_none());
    }

    #[test]
    fn degrade_spares_holdout() {
        let mut col = Collection::default();
        col.series.push(TimeSeries::from_values("a", (0..40).map(|i| i as f64).collect()));
        col.holdout_len = 12;
        let deg = col.degrade_training(0.9, 3).unwrap();
        let s = &deg.series[0];
        assert!(s.values[28..].iter().all(|v| v.is_some()));
        assert!(s.values[..28].iter().any(|v| v.is_none()));
    }
}
