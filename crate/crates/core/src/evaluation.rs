//! Predictive evaluation: rolling scores, an exact sign test, and the
//! classic ARMA baseline fitted by conditional sum of squares.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arma::arma_one_step;
use crate::error::{Error, Result};
use crate::forecast::{predictive_density, Predictive};
use crate::gaussian::log_normal_density;
use crate::model::{ModelStructure, Parameters};

/// Mean one-step log predictive density over the observed holdout points.
///
/// Walks forward from `holdout_start` (0-based): each observed value is
/// scored against the model's one-step predictive given everything before
/// it, then revealed for later predictions. Missing holdout values are
/// skipped. `cross` must span the full length when the structure has cross
/// predictors.
pub fn sequential_predictive_score(
    structure: &ModelStructure,
    params: &Parameters,
    values: &[Option<f64>],
    cross: &[Vec<f64>],
    holdout_start: usize,
    id: &str,
) -> Result<f64> {
    if holdout_start >= values.len() {
        return Err(Error::EmptyHoldout { id: id.into() });
    }
    let c = structure.n_cross();
    let mut total = 0.0;
    let mut scored = 0usize;
    for pos in holdout_start..values.len() {
        let Some(y) = values[pos] else { continue };
        let history = &values[..pos];
        let (cross_hist, cross_next): (&[Vec<f64>], Vec<Option<f64>>) = if c > 0 {
            (&cross[..pos], cross[pos].iter().map(|&v| Some(v)).collect())
        } else {
            (&[], Vec::new())
        };
        total += predictive_density(structure, params, history, cross_hist, &cross_next, y)?;
        scored += 1;
    }
    if scored == 0 {
        return Err(Error::EmptyHoldout { id: id.into() });
    }
    Ok(total / scored as f64)
}

/// Outcome of the paired one-sided sign test.
#[derive(Clone, Debug, PartialEq)]
pub struct SignTestResult {
    pub wins_a: usize,
    pub wins_b: usize,
    pub ties: usize,
    /// `P(X >= wins_a)` for `X ~ Binomial(wins_a + wins_b, 1/2)`; `None`
    /// when every pair is tied.
    pub p_value: Option<f64>,
    pub significant: bool,
    pub alpha: f64,
}

/// One-sided exact sign test of "method A beats method B", counting the
/// pairs where `a[i] > b[i]` as wins for A and discarding exact ties.
pub fn sign_test(a: &[f64], b: &[f64], alpha: f64) -> Result<SignTestResult> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument {
            name: "scores".into(),
            reason: format!("paired samples differ in length: {} vs {}", a.len(), b.len()),
        });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument {
            name: "alpha".into(),
            reason: format!("{alpha} is not a probability"),
        });
    }
    let mut wins_a = 0usize;
    let mut wins_b = 0usize;
    let mut ties = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        if x > y {
            wins_a += 1;
        } else if y > x {
            wins_b += 1;
        } else {
            ties += 1;
        }
    }
    let n = wins_a + wins_b;
    let p_value = if n == 0 { None } else { Some(binomial_upper_tail_half(n, wins_a)) };
    let significant = p_value.map(|p| p <= alpha).unwrap_or(false);
    Ok(SignTestResult { wins_a, wins_b, ties, p_value, significant, alpha })
}

/// `P(X >= k)` for `X ~ Binomial(n, 1/2)`, exact for moderate `n` and in
/// log space beyond that.
fn binomial_upper_tail_half(n: usize, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    if n <= 120 {
        // Exact integer arithmetic: sum of C(n, i) over the tail.
        let mut tail = 0.0;
        let mut coeff: u128 = 1; // C(n, 0)
        let mut sum_below = 0u128;
        for i in 0..k {
            sum_below += coeff;
            coeff = coeff * (n as u128 - i as u128) / (i as u128 + 1);
        }
        let total = if n < 128 { 1u128 << n } else { 0 };
        if total > 0 {
            tail = (total - sum_below) as f64 / total as f64;
        }
        return tail;
    }
    // ln C(n, i) via ln-gamma-free running ratio.
    let ln_half_n = -(n as f64) * std::f64::consts::LN_2;
    let mut ln_coeff = 0.0; // ln C(n, k) built up from C(n, 0)
    for i in 0..k {
        ln_coeff += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
    }
    let mut sum = 0.0;
    let mut ln_c = ln_coeff;
    for i in k..=n {
        sum += (ln_half_n + ln_c).exp();
        if i < n {
            ln_c += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
        }
    }
    sum.min(1.0)
}

/// Classic ARMA fit by conditional sum of squares.
#[derive(Clone, Debug)]
pub struct ClassicArmaFit {
    /// `gamma` holds the innovation variance `SSR / (T - r)`; `sigma` is 0.
    pub parameters: Parameters,
    pub converged: bool,
    pub sse: f64,
}

/// Fits ARMA(p, q) coefficients by minimizing the conditional sum of squared
/// innovations with a damped Gauss-Newton search over three deterministic
/// starts. Requires complete data.
pub fn fit_classic_arma(values: &[f64], structure: &ModelStructure) -> Result<ClassicArmaFit> {
    if !structure.cross_predictors.is_empty() {
        return Err(Error::InvalidArgument {
            name: "structure".into(),
            reason: "the classic ARMA baseline takes no cross predictors".into(),
        });
    }
    let (p, q) = (structure.p, structure.q);
    let r = structure.r();
    let dim = 1 + p + q;
    if values.len() < r + dim + 1 {
        return Err(Error::TooShort {
            id: "arma".into(),
            reason: format!("{} values cannot identify {dim} coefficients of order {r}", values.len()),
        });
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;

    let mut starts: Vec<Vec<f64>> = Vec::new();
    let mut zero_start = vec![0.0; dim];
    zero_start[0] = mean;
    starts.push(zero_start.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(0x5A11_AB1E ^ dim as u64);
    for _ in 0..2 {
        let mut s = zero_start.clone();
        for v in s.iter_mut().skip(1) {
            *v = rng.random_range(-0.4..0.4);
        }
        starts.push(s);
    }

    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    for start in starts {
        if let Some((theta, sse, converged)) = css_minimize(values, p, q, &start) {
            let better = match &best {
                None => true,
                Some((_, best_sse, _)) => sse < *best_sse,
            };
            if better {
                best = Some((theta, sse, converged));
            }
        }
    }
    let (theta, sse, converged) = best.ok_or(Error::NumericalFailure {
        reason: "every optimization start diverged".into(),
    })?;

    let gamma = (sse / (values.len() - r) as f64).max(1e-12);
    let parameters = Parameters {
        zeta: theta[0],
        beta0: 1.0,
        alpha: theta[1..1 + p].to_vec(),
        beta: theta[1 + p..].to_vec(),
        eta: vec![],
        gamma,
        sigma: 0.0,
    };
    Ok(ClassicArmaFit { parameters, converged, sse })
}

/// Innovations and their gradients with respect to `theta = [zeta, alpha, beta]`.
/// Both use the zero-initialized recursion over the conditioning prefix.
fn css_residuals(
    values: &[f64],
    p: usize,
    q: usize,
    theta: &[f64],
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let r = p.max(q);
    let t_len = values.len();
    let dim = theta.len();
    let mut e = vec![0.0; t_len];
    let mut de = vec![vec![0.0; dim]; t_len];
    for t in (r + 1)..=t_len {
        let mut pred = theta[0];
        for i in 1..=p {
            pred += theta[i] * values[t - i - 1];
        }
        for j in 1..=q {
            pred += theta[p + j] * e[t - j - 1];
        }
        e[t - 1] = values[t - 1] - pred;
        // d e_t / d theta_m = -d pred / d theta_m, which recurses through
        // the lagged innovations the prediction depends on.
        for m in 0..dim {
            let mut d = if m == 0 {
                -1.0
            } else if m <= p {
                -values[t - m - 1]
            } else {
                -e[t - (m - p) - 1]
            };
            for j in 1..=q {
                d -= theta[p + j] * de[t - j - 1][m];
            }
            de[t - 1][m] = d;
        }
    }
    (e, de)
}

fn css_sse(e: &[f64], r: usize) -> f64 {
    e.iter().skip(r).map(|v| v * v).sum()
}

fn css_minimize(values: &[f64], p: usize, q: usize, start: &[f64]) -> Option<(Vec<f64>, f64, bool)> {
    use nalgebra::{Cholesky, DMatrix, DVector};
    let r = p.max(q);
    let dim = start.len();
    let mut theta = start.to_vec();
    let (mut e, mut de) = css_residuals(values, p, q, &theta);
    let mut sse = css_sse(&e, r);
    if !sse.is_finite() {
        return None;
    }
    let mut lambda: f64 = 1e-3;
    let mut converged = false;
    for _ in 0..200 {
        // Gradient and Gauss-Newton Hessian over the modeled steps.
        let mut g = DVector::<f64>::zeros(dim);
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        for t in (r + 1)..=values.len() {
            let row = &de[t - 1];
            for a in 0..dim {
                g[a] += e[t - 1] * row[a];
                for b in 0..dim {
                    h[(a, b)] += row[a] * row[b];
                }
            }
        }
        if g.amax() < 1e-10 * (1.0 + sse) {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let mut damped = h.clone();
            for i in 0..dim {
                damped[(i, i)] += lambda * h[(i, i)].max(1e-12);
            }
            let Some(chol) = Cholesky::new(damped) else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&g));
            let trial: Vec<f64> = theta.iter().zip(delta.iter()).map(|(t, d)| t + d).collect();
            let (e_new, de_new) = css_residuals(values, p, q, &trial);
            let sse_new = css_sse(&e_new, r);
            if sse_new.is_finite() && sse_new <= sse {
                let gain = sse - sse_new;
                theta = trial;
                e = e_new;
                de = de_new;
                sse = sse_new;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if gain <= 1e-12 * sse.max(1.0) {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No improving step even under heavy damping: numerically at a
            // stationary point.
            converged = true;
        }
        if converged {
            break;
        }
    }
    Some((theta, sse, converged))
}

/// One-step predictive of the smoothed ARMA baseline: the classic point
/// prediction with variance `gamma + sigma`.
pub fn smoothed_arma_predictive(
    params: &Parameters,
    history: &[f64],
    sigma: f64,
) -> Result<Predictive> {
    let mean = arma_one_step(params, history)?;
    Ok(Predictive { mean, variance: params.gamma + sigma })
}

/// Mean one-step log density for a classic or smoothed ARMA model over the
/// observed holdout points of a complete series.
pub fn arma_sequential_score(
    params: &Parameters,
    values: &[f64],
    targets: &[Option<f64>],
    holdout_start: usize,
    extra_variance: f64,
    id: &str,
) -> Result<f64> {
    if holdout_start >= values.len() || values.len() != targets.len() {
        return Err(Error::EmptyHoldout { id: id.into() });
    }
    let variance = params.gamma + extra_variance;
    let mut total = 0.0;
    let mut scored = 0usize;
    for pos in holdout_start..values.len() {
        let Some(y) = targets[pos] else { continue };
        let mean = arma_one_step(params, &values[..pos])?;
        total += log_normal_density(y, mean, variance)?;
        scored += 1;
    }
    if scored == 0 {
        return Err(Error::EmptyHoldout { id: id.into() });
    }
    Ok(total / scored as f64)
}
