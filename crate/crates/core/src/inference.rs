//! Exact inference over the model's clique chain.
//!
//! Each modeled time step `t` in `r+1..=T` (with `r = max(p, q)`) owns a
//! clique over `{Y_t, E_t, E_{t-q}..E_{t-1}, Y_{t-p}..Y_{t-1}, C_t}`;
//! consecutive cliques share the separator `{E_{t-q+1}..E_t, Y_{t-p+1}..Y_t}`.
//! The forward sweep tracks the joint over the latent members in moment form:
//! observed values enter as exact constants (never as small-variance hacks),
//! each observed `Y_t` is conditioned on as it arrives, and the marginal is
//! then projected onto the separator. A backward sweep replaces each stored
//! clique's separator marginal with its smoothed version, which carries all
//! later evidence across the separator.
//!
//! Latent errors from before the first modeled step get independent
//! `N(0, gamma)` priors; series values from before it are conditioning
//! constants and must be present.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{log_normal_density, Gaussian, LatentState, Var};
use crate::model::{Beta0Mode, ModelStructure, Parameters};

/// Meaning of one entry of the regressor vector `X_t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    /// `E_{t-j}`; lag 0 appears only when `beta_0` is free.
    ELag(usize),
    /// `Y_{t-i}`, `i >= 1`.
    YLag(usize),
    /// Cross-predictor input `k` at time `t`.
    Cross(usize),
}

/// Layout of `X_t` and of the stacked coefficient vector `phi`.
///
/// Order: `E` lags (starting at lag 0 when `beta_0` is free, else lag 1),
/// then `Y` lags `1..=p`, then cross predictors in structure order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct XLayout {
    pub beta0_mode: Beta0Mode,
    pub p: usize,
    pub q: usize,
    pub n_cross: usize,
}

impl XLayout {
    pub fn from_structure(s: &ModelStructure) -> XLayout {
        XLayout { beta0_mode: s.beta0_mode, p: s.p, q: s.q, n_cross: s.n_cross() }
    }

    pub fn dim(&self) -> usize {
        let free = usize::from(self.beta0_mode == Beta0Mode::Free);
        free + self.q + self.p + self.n_cross
    }

    pub fn slots(&self) -> Vec<Slot> {
        let mut v = Vec::with_capacity(self.dim());
        if self.beta0_mode == Beta0Mode::Free {
            v.push(Slot::ELag(0));
        }
        for j in 1..=self.q {
            v.push(Slot::ELag(j));
        }
        for i in 1..=self.p {
            v.push(Slot::YLag(i));
        }
        for k in 0..self.n_cross {
            v.push(Slot::Cross(k));
        }
        v
    }

    /// Stacks the coefficients matching [`XLayout::slots`].
    pub fn phi(&self, params: &Parameters) -> DVector<f64> {
        let slots = self.slots();
        let mut v = DVector::zeros(slots.len());
        for (i, s) in slots.iter().enumerate() {
            v[i] = match *s {
                Slot::ELag(0) => params.beta0,
                Slot::ELag(j) => params.beta[j - 1],
                Slot::YLag(i) => params.alpha[i - 1],
                Slot::Cross(k) => params.eta[k],
            };
        }
        v
    }

    /// Unstacks a coefficient vector into named parameters.
    pub fn parameters_from_phi(
        &self,
        phi: &DVector<f64>,
        zeta: f64,
        gamma: f64,
        sigma: f64,
    ) -> Parameters {
        let mut params = Parameters {
            zeta,
            beta0: 1.0,
            beta: vec![0.0; self.q],
            alpha: vec![0.0; self.p],
            eta: vec![0.0; self.n_cross],
            gamma,
            sigma,
        };
        for (i, s) in self.slots().iter().enumerate() {
            match *s {
                Slot::ELag(0) => params.beta0 = phi[i],
                Slot::ELag(j) => params.beta[j - 1] = phi[i],
                Slot::YLag(l) => params.alpha[l - 1] = phi[i],
                Slot::Cross(k) => params.eta[k] = phi[i],
            }
        }
        params
    }
}

/// Expected sufficient statistics summed over the modeled steps
/// `t = r+1..=T`.
#[derive(Clone, Debug)]
pub struct SuffStats {
    pub layout: XLayout,
    /// Number of modeled steps, `T - r`.
    pub count: usize,
    /// `sum_t E[E_t]`.
    pub sum_e: f64,
    /// `sum_t E[E_t^2]`.
    pub sum_e2: f64,
    /// `sum_t E[Y_t]`.
    pub sum_y: f64,
    /// `sum_t E[X_t]`.
    pub sum_x: DVector<f64>,
    /// `sum_t E[Y_t X_t]`.
    pub sum_yx: DVector<f64>,
    /// `sum_t E[X_t X_t']`.
    pub sum_xx: DMatrix<f64>,
    /// `sum_t E[X_t E_t]`.
    pub sum_xe: DVector<f64>,
}

impl SuffStats {
    pub fn zeros(layout: XLayout) -> SuffStats {
        let k = layout.dim();
        SuffStats {
            layout,
            count: 0,
            sum_e: 0.0,
            sum_e2: 0.0,
            sum_y: 0.0,
            sum_x: DVector::zeros(k),
            sum_yx: DVector::zeros(k),
            sum_xx: DMatrix::zeros(k, k),
            sum_xe: DVector::zeros(k),
        }
    }
}

/// One clique of the chain: the time step it models and its variables.
#[derive(Clone, Debug)]
pub struct Clique {
    pub t: usize,
    pub vars: Vec<Var>,
}

/// Everything one full inference sweep produces.
#[derive(Clone, Debug)]
pub struct ChainRun {
    pub stats: SuffStats,
    pub last_marginal: Gaussian,
    pub log_likelihood: f64,
}

/// Clique-chain view of one series under fixed parameters.
pub struct CliqueChain<'a> {
    structure: &'a ModelStructure,
    params: &'a Parameters,
    observations: &'a [Option<f64>],
    cross: &'a [Vec<f64>],
    pub cliques: Vec<Clique>,
    pub evidence: BTreeMap<Var, f64>,
}

impl<'a> CliqueChain<'a> {
    /// Validates inputs and lays out the cliques. `cross` must hold one row
    /// per time step when the structure has cross predictors (earlier rows
    /// than `r+1` may hold anything); pass an empty slice otherwise.
    pub fn build(
        structure: &'a ModelStructure,
        params: &'a Parameters,
        observations: &'a [Option<f64>],
        cross: &'a [Vec<f64>],
    ) -> Result<CliqueChain<'a>> {
        let t_len = observations.len();
        let r = structure.r();
        if t_len <= r {
            return Err(Error::ChainTooShort { len: t_len, r });
        }
        validate_inputs(structure, params, observations, cross)?;

        let (p, q, c) = (structure.p, structure.q, structure.n_cross());
        let mut cliques = Vec::with_capacity(t_len - r);
        for t in (r + 1)..=t_len {
            let mut vars = vec![Var::Y(t), Var::E(t)];
            for s in (t - q)..t {
                vars.push(Var::E(s));
            }
            for s in (t - p)..t {
                vars.push(Var::Y(s));
            }
            for k in 0..c {
                vars.push(Var::C { t, k });
            }
            cliques.push(Clique { t, vars });
        }

        let mut evidence = BTreeMap::new();
        for (i, v) in observations.iter().enumerate() {
            if let Some(y) = v {
                evidence.insert(Var::Y(i + 1), *y);
            }
        }
        if c > 0 {
            for t in (r + 1)..=t_len {
                for (k, x) in cross[t - 1].iter().enumerate().take(c) {
                    evidence.insert(Var::C { t, k }, *x);
                }
            }
        }

        Ok(CliqueChain { structure, params, observations, cross, cliques, evidence })
    }

    fn engine(&self) -> ChainEngine<'a> {
        ChainEngine::start(self.structure, self.params, self.observations, self.cross)
    }

    /// Full sweep: sufficient statistics, the last clique's separator
    /// marginal, and the observed-data log-likelihood.
    pub fn run(&self) -> Result<ChainRun> {
        let mut engine = self.engine();
        engine.record_cliques();
        engine.run_training()?;
        let log_likelihood = engine.log_likelihood();
        let last_marginal = engine.last_marginal();
        let stats = engine.smooth_and_accumulate()?;
        Ok(ChainRun { stats, last_marginal, log_likelihood })
    }

    /// Smoothed expectations of every term the M-step needs.
    pub fn posterior_moments(&self) -> Result<SuffStats> {
        Ok(self.run()?.stats)
    }

    /// Joint posterior over `(E_{T-q+1}..E_T, Y_{T-p+1}..Y_T)`, observed
    /// members included as point masses.
    pub fn last_clique_marginal(&self) -> Result<Gaussian> {
        let mut engine = self.engine();
        engine.run_training()?;
        Ok(engine.last_marginal())
    }

    /// Log-density of the observed values given the conditioning prefix,
    /// from the forward prediction-error decomposition. Zero when nothing
    /// past the prefix is observed.
    pub fn log_likelihood(&self) -> Result<f64> {
        let mut engine = self.engine();
        engine.run_training()?;
        Ok(engine.log_likelihood())
    }
}

fn validate_inputs(
    structure: &ModelStructure,
    params: &Parameters,
    observations: &[Option<f64>],
    cross: &[Vec<f64>],
) -> Result<()> {
    structure.validate()?;
    params.validate(structure)?;
    let t_len = observations.len();
    let r = structure.r();
    if t_len < r {
        return Err(Error::ChainTooShort { len: t_len, r });
    }
    // Series values the first modeled step regresses on must be concrete.
    if structure.p > 0 {
        for s in (r + 1 - structure.p)..=r {
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
    let c = structure.n_cross();
    if c > 0 {
        if cross.len() != t_len {
            return Err(Error::InvalidArgument {
                name: "cross".into(),
                reason: format!("{} rows for {} time steps", cross.len(), t_len),
            });
        }
        for (i, row) in cross.iter().enumerate().skip(r) {
            if row.len() != c {
                return Err(Error::InvalidArgument {
                    name: "cross".into(),
                    reason: format!("row {} has {} values, expected {c}", i + 1, row.len()),
                });
            }
        }
    }
    Ok(())
}

/// Resolution of a referenced variable inside one clique: either a tracked
/// latent (by state index) or an exactly known constant.
#[derive(Clone, Copy)]
enum Ref {
    Latent(usize),
    Known(f64),
}

struct CliqueRecord {
    t: usize,
    /// Joint over the clique's latent members, with evidence up to `t`.
    filtered: LatentState,
    /// Latents passed onward to the next clique.
    separator: Vec<Var>,
}

/// Forward sweep state. Also drives forecast extensions past the observed
/// history.
pub(crate) struct ChainEngine<'a> {
    structure: &'a ModelStructure,
    params: &'a Parameters,
    observations: &'a [Option<f64>],
    cross: &'a [Vec<f64>],
    state: LatentState,
    t_done: usize,
    loglik: f64,
    records: Option<Vec<CliqueRecord>>,
}

impl<'a> ChainEngine<'a> {
    /// Starts a sweep. Inputs must already satisfy [`validate_inputs`]; the
    /// public entry points guarantee that.
    pub(crate) fn start(
        structure: &'a ModelStructure,
        params: &'a Parameters,
        observations: &'a [Option<f64>],
        cross: &'a [Vec<f64>],
    ) -> ChainEngine<'a> {
        let r = structure.r();
        let mut state = LatentState::empty();
        for s in (r + 1 - structure.q)..=r {
            state.append_independent(Var::E(s), 0.0, params.gamma);
        }
        ChainEngine {
            structure,
            params,
            observations,
            cross,
            state,
            t_done: r,
            loglik: 0.0,
            records: None,
        }
    }

    pub(crate) fn record_cliques(&mut self) {
        self.records = Some(Vec::new());
    }

    pub(crate) fn log_likelihood(&self) -> f64 {
        self.loglik
    }

    /// Runs every modeled step of the observed history.
    pub(crate) fn run_training(&mut self) -> Result<()> {
        let none_row: Vec<Option<f64>> = Vec::new();
        for t in (self.structure.r() + 1)..=self.observations.len() {
            let row: Vec<Option<f64>> = if self.structure.n_cross() > 0 {
                self.cross[t - 1].iter().map(|&v| Some(v)).collect()
            } else {
                none_row.clone()
            };
            self.step(t, self.observations.get(t - 1).copied().flatten(), &row)?;
        }
        Ok(())
    }

    /// Appends one modeled step past the current frontier with an unobserved
    /// `Y`; unknown cross inputs get independent standard-normal priors.
    /// Returns the new value's predictive (mean, variance).
    pub(crate) fn extend(&mut self, cross_row: &[Option<f64>]) -> Result<(f64, f64)> {
        let t = self.t_done + 1;
        self.step(t, None, cross_row)
    }

    fn step(&mut self, t: usize, y_obs: Option<f64>, cross_row: &[Option<f64>]) -> Result<(f64, f64)> {
        let p = self.structure.p;
        let q = self.structure.q;
        let params = self.params;

        self.state.append_independent(Var::E(t), 0.0, params.gamma);
        for (k, c) in cross_row.iter().enumerate() {
            if c.is_none() {
                self.state.append_independent(Var::C { t, k }, 0.0, 1.0);
            }
        }

        let mut coeffs: Vec<(usize, f64)> = Vec::new();
        let mut intercept = params.zeta;
        let beta0 = match self.structure.beta0_mode {
            Beta0Mode::FixedOne => 1.0,
            Beta0Mode::Free => params.beta0,
        };
        coeffs.push((self.state.index_of(Var::E(t)).expect("fresh error"), beta0));
        for j in 1..=q {
            let ix = self
                .state
                .index_of(Var::E(t - j))
                .expect("error window is retained");
            coeffs.push((ix, params.beta[j - 1]));
        }
        for i in 1..=p {
            match self.y_ref(t - i) {
                Ref::Known(v) => intercept += params.alpha[i - 1] * v,
                Ref::Latent(ix) => coeffs.push((ix, params.alpha[i - 1])),
            }
        }
        for (k, c) in cross_row.iter().enumerate() {
            match c {
                Some(v) => intercept += params.eta[k] * v,
                None => {
                    let ix = self
                        .state
                        .index_of(Var::C { t, k })
                        .expect("fresh cross input");
                    coeffs.push((ix, params.eta[k]));
                }
            }
        }

        let (pred_mean, pred_var) =
            self.state
                .append_linear(Var::Y(t), &coeffs, intercept, params.sigma);

        if let Some(y) = y_obs {
            self.loglik += log_normal_density(y, pred_mean, pred_var)?;
            let ix = self.state.index_of(Var::Y(t)).expect("just appended");
            self.state.condition_on(ix, y)?;
        }

        let separator = self.separator_vars(t);
        if let Some(records) = &mut self.records {
            records.push(CliqueRecord {
                t,
                filtered: self.state.clone(),
                separator: separator.clone(),
            });
        }
        self.state.retain(&separator);
        self.t_done = t;
        Ok((pred_mean, pred_var))
    }

    fn y_ref(&self, s: usize) -> Ref {
        if let Some(Some(v)) = self.observations.get(s - 1) {
            return Ref::Known(*v);
        }
        match self.state.index_of(Var::Y(s)) {
            Some(ix) => Ref::Latent(ix),
            None => unreachable!("unobserved Y@{s} must be tracked in the window"),
        }
    }

    /// Latents carried from clique `t` to clique `t+1`:
    /// `E_{t-q+1}..E_t` plus the unobserved members of `Y_{t-p+1}..Y_t`.
    fn separator_vars(&self, t: usize) -> Vec<Var> {
        let mut vars = Vec::new();
        for s in (t + 1 - self.structure.q)..=t {
            vars.push(Var::E(s));
        }
        for s in (t + 1 - self.structure.p)..=t {
            if self.state.index_of(Var::Y(s)).is_some() {
                vars.push(Var::Y(s));
            }
        }
        vars
    }

    /// Joint posterior over currently tracked latents.
    pub(crate) fn posterior_of(&self, vars: &[Var]) -> (DVector<f64>, DMatrix<f64>) {
        self.state.marginal(vars)
    }

    /// Posterior over the final separator variables with observed members as
    /// point masses.
    pub(crate) fn last_marginal(&self) -> Gaussian {
        let t = self.t_done;
        let mut vars = Vec::new();
        for s in (t + 1 - self.structure.q)..=t {
            vars.push(Var::E(s));
        }
        for s in (t + 1 - self.structure.p)..=t {
            vars.push(Var::Y(s));
        }
        let n = vars.len();
        let mut mean = DVector::zeros(n);
        let mut cov = DMatrix::zeros(n, n);
        let latent: Vec<Option<usize>> = vars.iter().map(|&v| self.state.index_of(v)).collect();
        for (a, v) in vars.iter().enumerate() {
            match latent[a] {
                Some(i) => {
                    mean[a] = self.state.mean[i];
                    for (b, _) in vars.iter().enumerate() {
                        if let Some(j) = latent[b] {
                            cov[(a, b)] = self.state.cov[(i, j)];
                        }
                    }
                }
                None => {
                    let Var::Y(s) = *v else {
                        unreachable!("only Y values can be observed")
                    };
                    mean[a] = self.observations[s - 1].expect("untracked Y must be observed");
                }
            }
        }
        Gaussian { vars, mean, cov }
    }

    /// Backward sweep over the recorded cliques, accumulating sufficient
    /// statistics from each smoothed clique joint.
    pub(crate) fn smooth_and_accumulate(&mut self) -> Result<SuffStats> {
        let records = self.records.take().expect("recording must be enabled");
        if records.is_empty() {
            return Err(Error::DegenerateStats);
        }
        let layout = XLayout::from_structure(self.structure);
        let mut stats = SuffStats::zeros(layout);
        stats.count = records.len();

        let mut smoothed = records.last().expect("non-empty").filtered.clone();
        self.accumulate(&mut stats, records.last().expect("non-empty").t, &smoothed);
        for rec in records.iter().rev().skip(1) {
            let (sep_mean, sep_cov) = smoothed.marginal(&rec.separator);
            let mut clique = rec.filtered.clone();
            clique.replace_marginal(&rec.separator, &sep_mean, &sep_cov);
            self.accumulate(&mut stats, rec.t, &clique);
            smoothed = clique;
        }
        Ok(stats)
    }

    fn resolve(&self, state: &LatentState, v: Var) -> Ref {
        if let Some(ix) = state.index_of(v) {
            return Ref::Latent(ix);
        }
        match v {
            Var::Y(s) => Ref::Known(self.observations[s - 1].expect("untracked Y is observed")),
            Var::C { t, k } => Ref::Known(self.cross[t - 1][k]),
            Var::E(_) => unreachable!("latent errors always live in their clique"),
        }
    }

    fn accumulate(&self, stats: &mut SuffStats, t: usize, state: &LatentState) {
        let mean = |r: Ref| match r {
            Ref::Latent(i) => state.mean[i],
            Ref::Known(v) => v,
        };
        let cov = |a: Ref, b: Ref| match (a, b) {
            (Ref::Latent(i), Ref::Latent(j)) => state.cov[(i, j)],
            _ => 0.0,
        };

        let e_ref = self.resolve(state, Var::E(t));
        let y_ref = self.resolve(state, Var::Y(t));
        stats.sum_e += mean(e_ref);
        stats.sum_e2 += mean(e_ref) * mean(e_ref) + cov(e_ref, e_ref);
        stats.sum_y += mean(y_ref);

        let slots = stats.layout.slots();
        let refs: Vec<Ref> = slots
            .iter()
            .map(|s| match *s {
                Slot::ELag(j) => self.resolve(state, Var::E(t - j)),
                Slot::YLag(i) => self.resolve(state, Var::Y(t - i)),
                Slot::Cross(k) => self.resolve(state, Var::C { t, k }),
            })
            .collect();
        for (a, &ra) in refs.iter().enumerate() {
            let ma = mean(ra);
            stats.sum_x[a] += ma;
            stats.sum_yx[a] += mean(y_ref) * ma + cov(y_ref, ra);
            stats.sum_xe[a] += mean(e_ref) * ma + cov(e_ref, ra);
            for (b, &rb) in refs.iter().enumerate() {
                stats.sum_xx[(a, b)] += ma * mean(rb) + cov(ra, rb);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn params_for(structure: &ModelStructure, gamma: f64, sigma: f64) -> Parameters {
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

    #[test]
    fn clique_layout_for_arma_2_2() {
        let structure = ModelStructure::new(2, 2, Beta0Mode::FixedOne);
        let params = params_for(&structure, 1.0, 0.01);
        let obs: Vec<Option<f64>> = (0..5).map(|i| Some(i as f64)).collect();
        let chain = CliqueChain::build(&structure, &params, &obs, &[]).unwrap();
        let ts: Vec<usize> = chain.cliques.iter().map(|c| c.t).collect();
        assert_eq!(ts, vec![3, 4, 5]);
        for c in &chain.cliques {
            let t = c.t;
            let mut want = vec![
                Var::Y(t),
                Var::E(t),
                Var::E(t - 2),
                Var::E(t - 1),
                Var::Y(t - 2),
                Var::Y(t - 1),
            ];
            want.sort();
            let mut got = c.vars.clone();
            got.sort();
            assert_eq!(got, want);
        }
        // Consecutive cliques share exactly the separator.
        for w in chain.cliques.windows(2) {
            let t = w[0].t;
            let shared: Vec<Var> = w[0]
                .vars
                .iter()
                .filter(|v| w[1].vars.contains(v))
                .cloned()
                .collect();
            let mut want = vec![Var::E(t - 1), Var::E(t), Var::Y(t - 1), Var::Y(t)];
            want.sort();
            let mut got = shared;
            got.sort();
            assert_eq!(got, want);
        }
        assert_eq!(chain.evidence.len(), 5);
    }

    #[test]
    fn degenerate_orders_give_singleton_cliques() {
        let structure = ModelStructure::new(0, 0, Beta0Mode::FixedOne);
        let params = params_for(&structure, 1.0, 0.01);
        let obs: Vec<Option<f64>> = vec![Some(1.0), Some(2.0)];
        let chain = CliqueChain::build(&structure, &params, &obs, &[]).unwrap();
        assert_eq!(chain.cliques.len(), 2);
        for c in &chain.cliques {
            assert_eq!(c.vars, vec![Var::Y(c.t), Var::E(c.t)]);
        }
    }

    #[test]
    fn too_short_series_is_rejected() {
        let structure = ModelStructure::new(2, 1, Beta0Mode::FixedOne);
        let params = params_for(&structure, 1.0, 0.01);
        let obs: Vec<Option<f64>> = vec![Some(1.0), Some(2.0)];
        assert!(matches!(
            CliqueChain::build(&structure, &params, &obs, &[]),
            Err(Error::ChainTooShort { .. })
        ));
    }

    #[test]
    fn missing_prefix_is_rejected() {
        let structure = ModelStructure::new(1, 1, Beta0Mode::FixedOne);
        let params = params_for(&structure, 1.0, 0.01);
        let obs: Vec<Option<f64>> = vec![None, Some(2.0), Some(3.0)];
        assert!(CliqueChain::build(&structure, &params, &obs, &[]).is_err());
    }

    #[test]
    fn no_evidence_returns_prior_moments() {
        let structure = ModelStructure::new(1, 1, Beta0Mode::FixedOne);
        let mut params = params_for(&structure, 1.7, 0.3);
        params.zeta = 0.0;
        let mut obs: Vec<Option<f64>> = vec![None; 12];
        obs[0] = Some(0.5); // conditioning prefix
        let chain = CliqueChain::build(&structure, &params, &obs, &[]).unwrap();
        let run = chain.run().unwrap();
        assert_abs_diff_eq!(run.log_likelihood, 0.0, epsilon = 1e-14);
        let n = run.stats.count as f64;
        assert_abs_diff_eq!(run.stats.sum_e / n, 0.0, epsilon = 1e-12);
        assert_relative_eq!(run.stats.sum_e2 / n, 1.7, epsilon = 1e-10);
    }

    #[test]
    fn independent_steps_match_scalar_density() {
        // p = q = 0, zeta = 0: each observed value is N(0, sigma + gamma).
        let structure = ModelStructure::new(0, 0, Beta0Mode::FixedOne);
        let params = params_for(&structure, 1.2, 0.3);
        let ys = [0.4, -1.1, 2.3, 0.0];
        let obs: Vec<Option<f64>> = ys.iter().map(|&y| Some(y)).collect();
        let chain = CliqueChain::build(&structure, &params, &obs, &[]).unwrap();
        let want: f64 = ys
            .iter()
            .map(|&y| log_normal_density(y, 0.0, 1.5).unwrap())
            .sum();
        assert_relative_eq!(chain.log_likelihood().unwrap(), want, epsilon = 1e-12);
    }

    #[test]
    fn small_sigma_recovers_recursive_residuals() {
        // Fully observed MA(1): as sigma -> 0 every observation becomes a
        // hard constraint, so the shock means obey the one-step-error
        // recursion e_t = y_t - zeta - beta_1 e_{t-1} exactly. The recursion
        // is affine in the prefix shock, e_t = c_t + (-beta_1)^{t-1} e_1,
        // and the posterior picks the e_1 minimizing sum of e_t^2 (all
        // shocks share the same prior variance).
        let structure = ModelStructure::new(0, 1, Beta0Mode::FixedOne);
        let mut params = params_for(&structure, 1.0, 1e-10);
        params.beta = vec![0.6];
        params.zeta = 0.2;
        let ys = [0.3, -0.5, 1.2, 0.8, -0.1, 0.4, -1.3, 0.9];
        let obs: Vec<Option<f64>> = ys.iter().map(|&y| Some(y)).collect();
        let chain = CliqueChain::build(&structure, &params, &obs, &[]).unwrap();
        let run = chain.run().unwrap();

        let t_len = ys.len();
        let mut c = vec![0.0; t_len];
        let mut m = vec![0.0; t_len];
        m[0] = 1.0;
        for t in 2..=t_len {
            c[t - 1] = ys[t - 1] - 0.2 - 0.6 * c[t - 2];
            m[t - 1] = -0.6 * m[t - 2];
        }
        let e1: f64 = -c.iter().zip(&m).map(|(a, b)| a * b).sum::<f64>()
            / m.iter().map(|v| v * v).sum::<f64>();
        // Modeled steps are t = 2..=T; the prefix shock is a latent input,
        // not a step, so it stays out of the sums.
        let sum_e: f64 = (2..=t_len).map(|t| c[t - 1] + m[t - 1] * e1).sum();
        assert_abs_diff_eq!(run.stats.sum_e, sum_e, epsilon = 1e-4);
    }

    #[test]
    fn observed_y_enters_stats_as_constant() {
        let structure = ModelStructure::new(1, 0, Beta0Mode::FixedOne);
        let mut params = params_for(&structure, 0.9, 0.2);
        params.alpha = vec![0.5];
        params.zeta = 0.1;
        let obs: Vec<Option<f64>> = vec![Some(1.0), Some(2.0), None, Some(0.5)];
        let chain = CliqueChain::build(&structure, &params, &obs, &[]).unwrap();
        let stats = chain.posterior_moments().unwrap();
        assert_eq!(stats.count, 3);
        // X_t for t = 2 is the observed Y_1 = 1.0; its contribution to
        // sum_xx is exactly 1.0 with nothing stochastic attached.
        assert!(stats.sum_xx[(0, 0)] >= 1.0);
        let g = chain.last_clique_marginal().unwrap();
        assert_eq!(g.vars, vec![Var::Y(4)]);
        assert_abs_diff_eq!(g.mean[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(g.cov[(0, 0)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn free_mode_uses_beta0_coefficient() {
        let mut structure = ModelStructure::new(0, 0, Beta0Mode::Free);
        structure.beta0_mode = Beta0Mode::Free;
        let mut params = params_for(&structure, 1.0, 0.5);
        params.beta0 = 2.0;
        let obs: Vec<Option<f64>> = vec![Some(0.7)];
        let chain = CliqueChain::build(&structure, &params, &obs, &[]).unwrap();
        // Y_1 = beta0 E_1 + noise: variance beta0^2 gamma + sigma = 4.5.
        let want = log_normal_density(0.7, 0.0, 4.5).unwrap();
        assert_relative_eq!(chain.log_likelihood().unwrap(), want, epsilon = 1e-12);
    }

    #[test]
    fn cross_inputs_shift_the_conditional_mean() {
        let mut structure = ModelStructure::new(0, 0, Beta0Mode::FixedOne);
        structure.cross_predictors = vec![crate::model::CrossPredictor {
            source: "other".into(),
            lag: 1,
        }];
        let mut params = params_for(&structure, 1.0, 0.5);
        params.eta = vec![2.0];
        let obs: Vec<Option<f64>> = vec![Some(1.0), Some(3.0)];
        let cross = vec![vec![0.5], vec![1.0]];
        let chain = CliqueChain::build(&structure, &params, &obs, &cross).unwrap();
        let want = log_normal_density(1.0, 1.0, 1.5).unwrap()
            + log_normal_density(3.0, 2.0, 1.5).unwrap();
        assert_relative_eq!(chain.log_likelihood().unwrap(), want, epsilon = 1e-12);
        assert_eq!(chain.evidence[&Var::C { t: 2, k: 0 }], 1.0);
    }

    #[test]
    fn last_marginal_is_positive_semidefinite() {
        let structure = ModelStructure::new(2, 2, Beta0Mode::FixedOne);
        let mut params = params_for(&structure, 1.3, 0.4);
        params.alpha = vec![0.3, -0.2];
        params.beta = vec![0.5, 0.1];
        params.zeta = -0.1;
        let obs: Vec<Option<f64>> = vec![
            Some(0.1),
            Some(-0.4),
            Some(0.9),
            None,
            Some(0.3),
            None,
            Some(-0.7),
        ];
        let chain = CliqueChain::build(&structure, &params, &obs, &[]).unwrap();
        let g = chain.last_clique_marginal().unwrap();
        assert_eq!(
            g.vars,
            vec![Var::E(6), Var::E(7), Var::Y(6), Var::Y(7)]
        );
        assert!(g.is_valid_covariance(1e-10));
    }
}
