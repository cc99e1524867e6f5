//! Forward sampling of a multi-series model into a complete collection.
//!
//! Generation is time-major over series in id order, so output is a pure
//! function of (model, length, seed). Terms that would reach before the
//! first time step are treated as zero; there is no burn-in.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::MultiModel;
use crate::series::{Collection, TimeSeries};

/// Samples `t_len` steps of every series in the model.
pub fn simulate(model: &MultiModel, t_len: usize, seed: u64) -> Result<Collection> {
    let ids: Vec<String> = model.series.keys().cloned().collect();
    model.validate(&[])?;
    let max_r = model.series.values().map(|m| m.structure.r()).max().unwrap_or(0);
    if t_len <= max_r {
        return Err(Error::InvalidArgument {
            name: "t_len".into(),
            reason: format!("{t_len} does not exceed the largest max-lag {max_r}"),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut errors: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut values: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for id in &ids {
        errors.insert(id, Vec::with_capacity(t_len));
        values.insert(id, Vec::with_capacity(t_len));
    }

    // t is 1-based in the model equations; vectors are 0-based.
    for t in 1..=t_len {
        for id in &ids {
            let m = &model.series[id];
            let s = &m.structure;
            let p = &m.parameters;
            let z: f64 = StandardNormal.sample(&mut rng);
            let e_t = p.gamma.sqrt() * z;
            errors.get_mut(id.as_str()).expect("id present").push(e_t);

            let at = |v: &Vec<f64>, s: i64| -> f64 {
                if s >= 1 {
                    v[(s - 1) as usize]
                } else {
                    0.0
                }
            };
            let mut mu = p.zeta + p.beta0 * e_t;
            let own_e = &errors[id.as_str()];
            for (j, b) in p.beta.iter().enumerate() {
                mu += b * at(own_e, t as i64 - (j as i64 + 1));
            }
            let own_y = &values[id.as_str()];
            for (i, a) in p.alpha.iter().enumerate() {
                mu += a * at(own_y, t as i64 - (i as i64 + 1));
            }
            for (k, xp) in s.cross_predictors.iter().enumerate() {
                let src = values.get(xp.source.as_str()).ok_or_else(|| Error::SchemaError {
                    field: format!("series.{id}.structure.cross_predictors"),
                    reason: format!("unknown source series `{}`", xp.source),
                })?;
                mu += p.eta[k] * at(src, t as i64 - xp.lag as i64);
            }
            let w: f64 = StandardNormal.sample(&mut rng);
            let y_t = mu + p.sigma.sqrt() * w;
            values.get_mut(id.as_str()).expect("id present").push(y_t);
        }
    }

    let series = ids
        .iter()
        .map(|id| TimeSeries::from_values(id.clone(), values[id.as_str()].clone()))
        .collect();
    Ok(Collection { series, holdout_len: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Beta0Mode, CrossPredictor, ModelStructure, Parameters, SeriesModel};
    use approx::assert_relative_eq;

    fn plain(p: usize, q: usize, params: Parameters) -> SeriesModel {
        SeriesModel {
            structure: ModelStructure::new(p, q, Beta0Mode::FixedOne),
            parameters: params,
            transform: None,
            source_transforms: BTreeMap::new(),
        }
    }

    fn white_noise(gamma: f64, sigma: f64) -> SeriesModel {
        plain(
            0,
            0,
            Parameters {
                zeta: 0.0,
                beta0: 1.0,
                beta: vec![],
                alpha: vec![],
                eta: vec![],
                gamma,
                sigma,
            },
        )
    }

    #[test]
    fn deterministic_per_seed() {
        let model = MultiModel::single("a", white_noise(1.0, 0.01));
        let x = simulate(&model, 50, 9).unwrap();
        let y = simulate(&model, 50, 9).unwrap();
        assert_eq!(x.series[0].values, y.series[0].values);
        let z = simulate(&model, 50, 10).unwrap();
        assert_ne!(x.series[0].values, z.series[0].values);
    }

    #[test]
    fn noiseless_white_noise_variance_matches_gamma() {
        // With sigma = 0, Y_t = E_t exactly; the sample variance converges
        // to gamma.
        let model = MultiModel::single("a", white_noise(2.5, 0.0));
        let col = simulate(&model, 100_000, 1).unwrap();
        let vals: Vec<f64> = col.series[0].values.iter().map(|v| v.unwrap()).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
        assert_relative_eq!(var, 2.5, max_relative = 0.05);
    }

    #[test]
    fn early_terms_are_zeroed() {
        // AR(1) with gamma = 0 and sigma = 0 from a zero start stays at
        // zeta * (1 + alpha + alpha^2 ...): the first value has no Y_0 term.
        let m = plain(
            1,
            0,
            Parameters {
                zeta: 1.0,
                beta0: 1.0,
                beta: vec![],
                alpha: vec![0.5],
                eta: vec![],
                gamma: 1e-300,
                sigma: 0.0,
            },
        );
        let model = MultiModel::single("a", m);
        let col = simulate(&model, 3, 0).unwrap();
        let v: Vec<f64> = col.series[0].values.iter().map(|x| x.unwrap()).collect();
        assert_relative_eq!(v[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(v[1], 1.5, epsilon = 1e-9);
        assert_relative_eq!(v[2], 1.75, epsilon = 1e-9);
    }

    #[test]
    fn cross_predictors_feed_forward() {
        // b copies a at lag 1 with no noise of its own.
        let mut series = BTreeMap::new();
        series.insert("a".to_string(), white_noise(1.0, 0.0));
        let mut follower = white_noise(1e-300, 0.0);
        follower.structure.cross_predictors = vec![CrossPredictor { source: "a".into(), lag: 1 }];
        follower.parameters.eta = vec![1.0];
        series.insert("b".to_string(), follower);
        let model = MultiModel { series };
        let col = simulate(&model, 20, 4).unwrap();
        let a = &col.series[0];
        let b = &col.series[1];
        assert_eq!(a.id, "a");
        for t in 1..20 {
            assert_relative_eq!(
                b.values[t].unwrap(),
                a.values[t - 1].unwrap(),
                epsilon = 1e-7
            );
        }
        assert_relative_eq!(b.values[0].unwrap(), 0.0, epsilon = 1e-7);
    }

    #[test]
    fn rejects_too_short_horizon() {
        let model = MultiModel::single("a", plain(2, 0, Parameters {
            zeta: 0.0, beta0: 1.0, beta: vec![], alpha: vec![0.1, 0.1], eta: vec![],
            gamma: 1.0, sigma: 0.0,
        }));
        assert!(simulate(&model, 2, 0).is_err());
    }
}
