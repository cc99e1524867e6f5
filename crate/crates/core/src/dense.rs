//! Brute-force reference inference on the full joint Gaussian.
//!
//! Builds one dense covariance over every latent error and modeled series
//! value, conditions on all observed values in a single block step, and reads
//! the same quantities the clique chain produces. Deliberately independent of
//! the chain code path so the two can check each other; capped at 50 modeled
//! steps because the dense joint grows quadratically.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{Gaussian, Var, PIVOT_TOL};
use crate::inference::{ChainRun, Slot, SuffStats, XLayout};
use crate::model::{Beta0Mode, ModelStructure, Parameters};

/// Largest number of modeled steps the dense path accepts.
pub const DENSE_CAP: usize = 50;

/// Runs dense inference and returns the same bundle as the chain sweep.
pub fn dense_run(
    structure: &ModelStructure,
    params: &Parameters,
    observations: &[Option<f64>],
    cross: &[Vec<f64>],
) -> Result<ChainRun> {
    structure.validate()?;
    params.validate(structure)?;
    let t_len = observations.len();
    let r = structure.r();
    if t_len <= r {
        return Err(Error::ChainTooShort { len: t_len, r });
    }
    let steps = t_len - r;
    if steps > DENSE_CAP {
        return Err(Error::TooLarge { steps, cap: DENSE_CAP });
    }
    let (p, q, c) = (structure.p, structure.q, structure.n_cross());
    if p > 0 {
        for s in (r + 1 - p)..=r {
            if observations[s - 1].is_none() {
                return Err(Error::InvalidArgument {
                    name: "observations".into(),
                    reason: format!(
                        "value at position {s} is missing; fill the initial segment before inference"
                    ),
                });
            }
        }
    }
    if c > 0 && cross.len() != t_len {
        return Err(Error::InvalidArgument {
            name: "cross".into(),
            reason: format!("{} rows for {t_len} time steps", cross.len()),
        });
    }

    // Variable order: E_{r+1-q}..E_T, then Y_{r+1}..Y_T.
    let n_e = steps + q;
    let n = n_e + steps;
    let e_idx = |s: usize| s - (r + 1 - q);
    let y_idx = |t: usize| n_e + (t - (r + 1));

    let beta0 = match structure.beta0_mode {
        Beta0Mode::FixedOne => 1.0,
        Beta0Mode::Free => params.beta0,
    };

    let mut mean = DVector::zeros(n);
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n_e {
        cov[(i, i)] = params.gamma;
    }
    for t in (r + 1)..=t_len {
        let yi = y_idx(t);
        let mut a = DVector::zeros(n);
        let mut b = params.zeta;
        a[e_idx(t)] = beta0;
        for j in 1..=q {
            a[e_idx(t - j)] = params.beta[j - 1];
        }
        for i in 1..=p {
            let s = t - i;
            if s <= r {
                b += params.alpha[i - 1] * observations[s - 1].expect("validated prefix");
            } else {
                a[y_idx(s)] = params.alpha[i - 1];
            }
        }
        if c > 0 {
            for (k, x) in cross[t - 1].iter().enumerate().take(c) {
                b += params.eta[k] * x;
            }
        }
        mean[yi] = a.dot(&mean) + b;
        let col = &cov * &a;
        for j in 0..n {
            cov[(yi, j)] = col[j];
            cov[(j, yi)] = col[j];
        }
        cov[(yi, yi)] = a.dot(&col) + params.sigma;
    }

    // Condition on every observed value in one block.
    let observed: Vec<(usize, f64)> = ((r + 1)..=t_len)
        .filter_map(|t| observations[t - 1].map(|y| (y_idx(t), y)))
        .collect();
    let latent: Vec<usize> = {
        let mut keep = vec![true; n];
        for (i, _) in &observed {
            keep[*i] = false;
        }
        (0..n).filter(|&i| keep[i]).collect()
    };

    let mut log_likelihood = 0.0;
    let (post_mean, post_cov) = if observed.is_empty() {
        let m = DVector::from_fn(latent.len(), |i, _| mean[latent[i]]);
        let s = DMatrix::from_fn(latent.len(), latent.len(), |i, j| {
            cov[(latent[i], latent[j])]
        });
        (m, s)
    } else {
        let k = observed.len();
        let mu_o = DVector::from_fn(k, |i, _| mean[observed[i].0]);
        let y_o = DVector::from_fn(k, |i, _| observed[i].1);
        let s_oo = DMatrix::from_fn(k, k, |i, j| cov[(observed[i].0, observed[j].0)]);
        let s_lo = DMatrix::from_fn(latent.len(), k, |i, j| {
            cov[(latent[i], observed[j].0)]
        });
        let chol = Cholesky::new(s_oo.clone()).ok_or(Error::NumericalFailure {
            reason: "observed block is not positive definite".into(),
        })?;
        let diag = chol.l().diagonal();
        let dmax = diag.max();
        if diag.min() * diag.min() < PIVOT_TOL * dmax * dmax {
            return Err(Error::NumericalFailure {
                reason: "observed block is numerically singular".into(),
            });
        }
        let delta = &y_o - &mu_o;
        let solved_delta = chol.solve(&delta);
        let log_det = 2.0 * diag.iter().map(|d| d.ln()).sum::<f64>();
        log_likelihood = -0.5
            * (k as f64 * (2.0 * std::f64::consts::PI).ln()
                + log_det
                + delta.dot(&solved_delta));

        let mu_l = DVector::from_fn(latent.len(), |i, _| mean[latent[i]]);
        let s_ll = DMatrix::from_fn(latent.len(), latent.len(), |i, j| {
            cov[(latent[i], latent[j])]
        });
        let post_mean = &mu_l + &s_lo * &solved_delta;
        let solved_ol = chol.solve(&s_lo.transpose());
        let mut post_cov = &s_ll - &s_lo * &solved_ol;
        // Symmetrize against round-off.
        let sym = (&post_cov + post_cov.transpose()) * 0.5;
        post_cov = sym;
        (post_mean, post_cov)
    };

    // Map a variable to its position among the retained latents.
    let latent_pos = |orig: usize| latent.iter().position(|&i| i == orig);
    let moment_of = |v: Var| -> (Option<usize>, f64) {
        match v {
            Var::E(s) => {
                let pos = latent_pos(e_idx(s)).expect("errors are never observed");
                (Some(pos), post_mean[pos])
            }
            Var::Y(s) => {
                if s <= r || observations[s - 1].is_some() {
                    (None, observations[s - 1].expect("observed or prefix"))
                } else {
                    let pos = latent_pos(y_idx(s)).expect("missing Y stays latent");
                    (Some(pos), post_mean[pos])
                }
            }
            Var::C { t, k } => (None, cross[t - 1][k]),
        }
    };
    let cov_of = |a: (Option<usize>, f64), b: (Option<usize>, f64)| match (a.0, b.0) {
        (Some(i), Some(j)) => post_cov[(i, j)],
        _ => 0.0,
    };

    let layout = XLayout::from_structure(structure);
    let mut stats = SuffStats::zeros(layout);
    stats.count = steps;
    let slots = layout.slots();
    for t in (r + 1)..=t_len {
        let e = moment_of(Var::E(t));
        let y = moment_of(Var::Y(t));
        stats.sum_e += e.1;
        stats.sum_e2 += e.1 * e.1 + cov_of(e, e);
        stats.sum_y += y.1;
        let xs: Vec<(Option<usize>, f64)> = slots
            .iter()
            .map(|s| match *s {
                Slot::ELag(j) => moment_of(Var::E(t - j)),
                Slot::YLag(i) => moment_of(Var::Y(t - i)),
                Slot::Cross(k) => moment_of(Var::C { t, k }),
            })
            .collect();
        for (a, &xa) in xs.iter().enumerate() {
            stats.sum_x[a] += xa.1;
            stats.sum_yx[a] += y.1 * xa.1 + cov_of(y, xa);
            stats.sum_xe[a] += e.1 * xa.1 + cov_of(e, xa);
            for (b, &xb) in xs.iter().enumerate() {
                stats.sum_xx[(a, b)] += xa.1 * xb.1 + cov_of(xa, xb);
            }
        }
    }

    // Final-window joint, observed members as point masses.
    let mut vars = Vec::new();
    for s in (t_len + 1 - q)..=t_len {
        vars.push(Var::E(s));
    }
    for s in (t_len + 1 - p)..=t_len {
        vars.push(Var::Y(s));
    }
    let m = vars.len();
    let mut g_mean = DVector::zeros(m);
    let mut g_cov = DMatrix::zeros(m, m);
    let moments: Vec<(Option<usize>, f64)> = vars.iter().map(|&v| moment_of(v)).collect();
    for i in 0..m {
        g_mean[i] = moments[i].1;
        for j in 0..m {
            g_cov[(i, j)] = cov_of(moments[i], moments[j]);
        }
    }
    let last_marginal = Gaussian { vars, mean: g_mean, cov: g_cov };

    Ok(ChainRun { stats, last_marginal, log_likelihood })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::CliqueChain;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn compare_runs(a: &ChainRun, b: &ChainRun, tol: f64) {
        assert_relative_eq!(a.log_likelihood, b.log_likelihood, epsilon = tol, max_relative = tol);
        assert_eq!(a.stats.count, b.stats.count);
        assert_abs_diff_eq!(a.stats.sum_e, b.stats.sum_e, epsilon = tol);
        assert_abs_diff_eq!(a.stats.sum_e2, b.stats.sum_e2, epsilon = tol);
        assert_abs_diff_eq!(a.stats.sum_y, b.stats.sum_y, epsilon = tol);
        assert_abs_diff_eq!(&a.stats.sum_x, &b.stats.sum_x, epsilon = tol);
        assert_abs_diff_eq!(&a.stats.sum_yx, &b.stats.sum_yx, epsilon = tol);
        assert_abs_diff_eq!(&a.stats.sum_xe, &b.stats.sum_xe, epsilon = tol);
        assert_abs_diff_eq!(&a.stats.sum_xx, &b.stats.sum_xx, epsilon = tol);
        assert_eq!(a.last_marginal.vars, b.last_marginal.vars);
        assert_abs_diff_eq!(&a.last_marginal.mean, &b.last_marginal.mean, epsilon = tol);
        assert_abs_diff_eq!(&a.last_marginal.cov, &b.last_marginal.cov, epsilon = tol);
    }

    #[test]
    fn agrees_with_chain_on_mixed_missingness() {
        let mut structure = ModelStructure::new(2, 1, Beta0Mode::FixedOne);
        structure.cross_predictors = vec![crate::model::CrossPredictor {
            source: "x".into(),
            lag: 1,
        }];
        let params = Parameters {
            zeta: 0.15,
            beta0: 1.0,
            beta: vec![0.4],
            alpha: vec![0.5, -0.3],
            eta: vec![0.7],
            gamma: 0.9,
            sigma: 0.2,
        };
        let obs: Vec<Option<f64>> = vec![
            Some(0.3),
            Some(-0.6),
            Some(1.1),
            None,
            Some(0.2),
            None,
            None,
            Some(-0.9),
            Some(0.4),
        ];
        let cross: Vec<Vec<f64>> = (0..obs.len()).map(|i| vec![0.1 * i as f64]).collect();

        let chain = CliqueChain::build(&structure, &params, &obs, &cross)
            .unwrap()
            .run()
            .unwrap();
        let dense = dense_run(&structure, &params, &obs, &cross).unwrap();
        compare_runs(&chain, &dense, 1e-9);
    }

    #[test]
    fn agrees_with_chain_with_no_evidence() {
        let structure = ModelStructure::new(0, 2, Beta0Mode::FixedOne);
        let params = Parameters {
            zeta: 0.4,
            beta0: 1.0,
            beta: vec![0.3, -0.5],
            alpha: vec![],
            eta: vec![],
            gamma: 1.4,
            sigma: 0.1,
        };
        let obs: Vec<Option<f64>> = vec![None; 8];
        let chain = CliqueChain::build(&structure, &params, &obs, &[])
            .unwrap()
            .run()
            .unwrap();
        let dense = dense_run(&structure, &params, &obs, &[]).unwrap();
        assert_abs_diff_eq!(chain.log_likelihood, 0.0, epsilon = 1e-14);
        compare_runs(&chain, &dense, 1e-10);
    }

    #[test]
    fn rejects_oversized_problems() {
        let structure = ModelStructure::new(0, 0, Beta0Mode::FixedOne);
        let params = Parameters {
            zeta: 0.0,
            beta0: 1.0,
            beta: vec![],
            alpha: vec![],
            eta: vec![],
            gamma: 1.0,
            sigma: 0.1,
        };
        let obs: Vec<Option<f64>> = vec![Some(0.0); DENSE_CAP + 1];
        assert!(matches!(
            dense_run(&structure, &params, &obs, &[]),
            Err(Error::TooLarge { steps: 51, cap: 50 })
        ));
    }

    #[test]
    fn degenerate_sigma_with_duplicate_evidence_fails_loudly() {
        // A free shock loading pinned at zero with zero observation noise
        // gives every observed value an exactly zero-variance predictive
        // distribution; conditioning on it must fail loudly rather than
        // return junk.
        let structure = ModelStructure::new(0, 0, Beta0Mode::Free);
        let params = Parameters {
            zeta: 0.0,
            beta0: 0.0,
            beta: vec![],
            alpha: vec![],
            eta: vec![],
            gamma: 1.0,
            sigma: 0.0,
        };
        let obs: Vec<Option<f64>> = vec![Some(0.1), Some(0.2)];
        assert!(matches!(
            dense_run(&structure, &params, &obs, &[]),
            Err(Error::NumericalFailure { .. })
        ));
    }

    #[test]
    fn conditioning_never_inflates_variances() {
        let structure = ModelStructure::new(1, 1, Beta0Mode::FixedOne);
        let params = Parameters {
            zeta: 0.1,
            beta0: 1.0,
            beta: vec![0.5],
            alpha: vec![0.6],
            eta: vec![],
            gamma: 1.0,
            sigma: 0.3,
        };
        let base: Vec<Option<f64>> = vec![Some(0.2), None, None, None, Some(0.7), None];
        let mut more = base.clone();
        more[2] = Some(-0.4);
        let g_base = dense_run(&structure, &params, &base, &[]).unwrap().last_marginal;
        let g_more = dense_run(&structure, &params, &more, &[]).unwrap().last_marginal;
        for i in 0..g_base.dim() {
            assert!(g_more.cov[(i, i)] <= g_base.cov[(i, i)] + 1e-12);
        }
    }
}
