//! Labeled multivariate Gaussians in moment form and the small linear-algebra
//! operations (extension, conditioning, marginalization) the inference chain
//! is built from.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative eigenvalue cutoff below which a direction of a covariance block is
/// treated as exactly degenerate.
pub const PIVOT_TOL: f64 = 1e-12;

/// Identity of a single scalar variable in the model's joint distribution.
///
/// Time indices are 1-based to match the generative equations.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub enum Var {
    /// Latent error `E_t`.
    E(usize),
    /// Series value `Y_t`.
    Y(usize),
    /// Cross-predictor input at time `t`, slot `k` in the predictor list.
    C { t: usize, k: usize },
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::E(t) => write!(f, "E@{t}"),
            Var::Y(t) => write!(f, "Y@{t}"),
            Var::C { t, k } => write!(f, "C@{t}#{k}"),
        }
    }
}

/// Multivariate Gaussian over labeled variables, in moment form.
///
/// Observed variables may appear as point masses (zero variance rows).
#[derive(Clone, Debug)]
pub struct Gaussian {
    pub vars: Vec<Var>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Gaussian {
    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    /// Position of `v` in the variable ordering.
    pub fn index_of(&self, v: Var) -> Option<usize> {
        self.vars.iter().position(|&x| x == v)
    }

    /// True when the covariance is symmetric and its eigenvalues are no more
    /// negative than `-tol * max(1, ||cov||_max)`.
    pub fn is_valid_covariance(&self, tol: f64) -> bool {
        let n = self.cov.nrows();
        if n != self.cov.ncols() || n != self.vars.len() {
            return false;
        }
        if n == 0 {
            return true;
        }
        let scale = self.cov.iter().fold(1.0_f64, |m, &x| m.max(x.abs()));
        for i in 0..n {
            for j in (i + 1)..n {
                if (self.cov[(i, j)] - self.cov[(j, i)]).abs() > tol * scale {
                    return false;
                }
            }
        }
        let eig = self.cov.clone().symmetric_eigen();
        eig.eigenvalues.iter().all(|&l| l >= -tol * scale)
    }
}

/// Natural-log density of `N(mean, var)` at `x`. Fails on `var <= 0`.
pub fn log_normal_density(x: f64, mean: f64, var: f64) -> Result<f64> {
    if !(var > 0.0) {
        return Err(Error::NumericalFailure {
            reason: format!("non-positive predictive variance {var:.3e}"),
        });
    }
    let z = x - mean;
    Ok(-0.5 * ((2.0 * std::f64::consts::PI * var).ln() + z * z / var))
}

/// Joint distribution over the latent variables tracked at one point of a
/// forward sweep. Observed variables never live here; they are folded in as
/// constants by the caller.
#[derive(Clone, Debug)]
pub struct LatentState {
    pub vars: Vec<Var>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl LatentState {
    pub fn empty() -> Self {
        LatentState {
            vars: Vec::new(),
            mean: DVector::zeros(0),
            cov: DMatrix::zeros(0, 0),
        }
    }

    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    pub fn index_of(&self, v: Var) -> Option<usize> {
        self.vars.iter().position(|&x| x == v)
    }

    fn symmetrize(&mut self) {
        let n = self.cov.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let s = 0.5 * (self.cov[(i, j)] + self.cov[(j, i)]);
                self.cov[(i, j)] = s;
                self.cov[(j, i)] = s;
            }
        }
    }

    /// Appends a variable independent of everything tracked so far.
    pub fn append_independent(&mut self, v: Var, mean: f64, variance: f64) {
        let n = self.dim();
        let mut m = DVector::zeros(n + 1);
        m.rows_mut(0, n).copy_from(&self.mean);
        m[n] = mean;
        let mut c = DMatrix::zeros(n + 1, n + 1);
        c.view_mut((0, 0), (n, n)).copy_from(&self.cov);
        c[(n, n)] = variance;
        self.vars.push(v);
        self.mean = m;
        self.cov = c;
    }

    /// Appends `v = intercept + sum coeff_i * state_i + noise`, with fresh
    /// independent noise of the given variance. Returns the marginal
    /// (mean, variance) of the new variable.
    pub fn append_linear(
        &mut self,
        v: Var,
        coeffs: &[(usize, f64)],
        intercept: f64,
        noise_var: f64,
    ) -> (f64, f64) {
        let n = self.dim();
        let mut a = DVector::zeros(n);
        for &(i, c) in coeffs {
            a[i] += c;
        }
        let new_mean = a.dot(&self.mean) + intercept;
        let cross = &self.cov * &a;
        let new_var = a.dot(&cross) + noise_var;

        let mut m = DVector::zeros(n + 1);
        m.rows_mut(0, n).copy_from(&self.mean);
        m[n] = new_mean;
        let mut c = DMatrix::zeros(n + 1, n + 1);
        c.view_mut((0, 0), (n, n)).copy_from(&self.cov);
        for i in 0..n {
            c[(i, n)] = cross[i];
            c[(n, i)] = cross[i];
        }
        c[(n, n)] = new_var;
        self.vars.push(v);
        self.mean = m;
        self.cov = c;
        (new_mean, new_var)
    }

    /// Conditions on `state[idx] = value` and removes the variable. Returns
    /// its (mean, variance) before conditioning. Fails when the variable has
    /// no positive variance to condition on.
    pub fn condition_on(&mut self, idx: usize, value: f64) -> Result<(f64, f64)> {
        let v = self.cov[(idx, idx)];
        if !(v > 0.0) {
            return Err(Error::NumericalFailure {
                reason: format!(
                    "conditioning on {} with non-positive variance {v:.3e}",
                    self.vars[idx]
                ),
            });
        }
        let prior_mean = self.mean[idx];
        let col = self.cov.column(idx).clone_owned();
        let gain = (value - prior_mean) / v;
        self.mean += &col * gain;
        self.cov -= &col * col.transpose() / v;
        self.remove(idx);
        self.symmetrize();
        Ok((prior_mean, v))
    }

    fn remove(&mut self, idx: usize) {
        self.vars.remove(idx);
        self.mean = self.mean.clone().remove_row(idx);
        self.cov = self.cov.clone().remove_row(idx).remove_column(idx);
    }

    /// Marginalizes down to the variables in `keep`, preserving their order.
    pub fn retain(&mut self, keep: &[Var]) {
        let idx: Vec<usize> = keep
            .iter()
            .map(|&v| self.index_of(v).expect("retained variable must be tracked"))
            .collect();
        let n = idx.len();
        let mut m = DVector::zeros(n);
        let mut c = DMatrix::zeros(n, n);
        for (a, &i) in idx.iter().enumerate() {
            m[a] = self.mean[i];
            for (b, &j) in idx.iter().enumerate() {
                c[(a, b)] = self.cov[(i, j)];
            }
        }
        self.vars = keep.to_vec();
        self.mean = m;
        self.cov = c;
    }

    /// Marginal (mean, cov) over a subset of tracked variables in the given
    /// order.
    pub fn marginal(&self, vars: &[Var]) -> (DVector<f64>, DMatrix<f64>) {
        let idx: Vec<usize> = vars
            .iter()
            .map(|&v| self.index_of(v).expect("marginal variable must be tracked"))
            .collect();
        let n = idx.len();
        let mut m = DVector::zeros(n);
        let mut c = DMatrix::zeros(n, n);
        for (a, &i) in idx.iter().enumerate() {
            m[a] = self.mean[i];
            for (b, &j) in idx.iter().enumerate() {
                c[(a, b)] = self.cov[(i, j)];
            }
        }
        (m, c)
    }

    /// Replaces the marginal over `sep` with `(sep_mean, sep_cov)` and
    /// propagates the change to the remaining variables through the joint's
    /// conditional structure. Used by the backward smoothing sweep, where the
    /// replacement marginal carries strictly more evidence.
    ///
    /// Degenerate directions of the current separator covariance (relative
    /// eigenvalue below `PIVOT_TOL`) are projected out; for covariance blocks
    /// arising from a valid joint, smoothed deviations have no component
    /// there, so this is exact rather than an approximation.
    pub fn replace_marginal(
        &mut self,
        sep: &[Var],
        sep_mean: &DVector<f64>,
        sep_cov: &DMatrix<f64>,
    ) {
        let s_idx: Vec<usize> = sep
            .iter()
            .map(|&v| self.index_of(v).expect("separator variable must be tracked"))
            .collect();
        let n = self.dim();
        let ns = s_idx.len();
        if ns == 0 {
            return;
        }
        let in_sep = |i: usize| s_idx.contains(&i);
        let u_idx: Vec<usize> = (0..n).filter(|&i| !in_sep(i)).collect();
        let nu = u_idx.len();

        let mut s_f = DMatrix::zeros(ns, ns);
        let mut mu_f = DVector::zeros(ns);
        for (a, &i) in s_idx.iter().enumerate() {
            mu_f[a] = self.mean[i];
            for (b, &j) in s_idx.iter().enumerate() {
                s_f[(a, b)] = self.cov[(i, j)];
            }
        }
        let mut c_us = DMatrix::zeros(nu, ns);
        for (a, &i) in u_idx.iter().enumerate() {
            for (b, &j) in s_idx.iter().enumerate() {
                c_us[(a, b)] = self.cov[(i, j)];
            }
        }

        // Regression of the non-separator block on the separator:
        // A = C_us * pinv(S_f), via symmetric eigendecomposition.
        let eig = s_f.clone().symmetric_eigen();
        let lmax = eig.eigenvalues.iter().fold(0.0_f64, |m, &l| m.max(l));
        let mut inv_l = DVector::zeros(ns);
        for i in 0..ns {
            let l = eig.eigenvalues[i];
            inv_l[i] = if l > PIVOT_TOL * lmax && l > 0.0 { 1.0 / l } else { 0.0 };
        }
        let q = &eig.eigenvectors;
        let pinv = q * DMatrix::from_diagonal(&inv_l) * q.transpose();
        let a = &c_us * &pinv;

        let delta = sep_mean - &mu_f;
        let mean_shift = &a * &delta;
        // Var[u](new) = Var[u] - A S_f A' + A S* A'; Cov[u, s](new) = A S*.
        let cov_uu_shift = &a * (sep_cov - &s_f) * a.transpose();
        let cov_us_new = &a * sep_cov;

        for (au, &i) in u_idx.iter().enumerate() {
            self.mean[i] += mean_shift[au];
            for (bu, &j) in u_idx.iter().enumerate() {
                self.cov[(i, j)] += cov_uu_shift[(au, bu)];
            }
            for (bs, &j) in s_idx.iter().enumerate() {
                self.cov[(i, j)] = cov_us_new[(au, bs)];
                self.cov[(j, i)] = cov_us_new[(au, bs)];
            }
        }
        for (a, &i) in s_idx.iter().enumerate() {
            self.mean[i] = sep_mean[a];
            for (b, &j) in s_idx.iter().enumerate() {
                self.cov[(i, j)] = sep_cov[(a, b)];
            }
        }
        self.symmetrize();
    }
}
