//! Gibbs sampling for the three variance models.
//!
//! One sweep updates, in order, the area means `theta`, the sampling
//! variances `sigma2`, the regression coefficients `beta`, the between-area
//! variance `tau2`, the prior scale `gamma`, and (for `Stk2` only) the
//! variance-regression coefficients `eta` through a random-walk
//! Metropolis–Hastings step. Every block except `eta` is drawn exactly from
//! its full conditional.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{
    open_uniform, sample_gamma, sample_inverse_gamma, sample_mvn, sample_normal, standard_normal,
    GammaParams, InverseGammaParams, MvnParams,
};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, SquareMatrix};
use crate::model::{check_conditions, Dataset, ModelKind, ModelSpec};
use crate::posterior::PosteriorDraws;
use crate::real::{dot, Real};
use crate::rng::{seeded, RandomSource};

const VARIANCE_FLOOR: f64 = 1e-8;

/// One point of the Markov chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterState<T> {
    pub theta: Vec<T>,
    pub sigma2: Vec<T>,
    pub beta: Vec<T>,
    pub tau2: T,
    pub gamma: T,
    /// Empty unless the model is `Stk2`.
    pub eta: Vec<T>,
}

impl<T: Real> ParameterState<T> {
    /// Checks positivity and finiteness of every coordinate.
    pub fn is_valid(&self) -> bool {
        let finite = self
            .theta
            .iter()
            .chain(&self.sigma2)
            .chain(&self.beta)
            .chain(&self.eta)
            .all(|v| v.is_finite());
        finite
            && self.sigma2.iter().all(|&s| s > T::zero())
            && self.tau2 > T::zero()
            && self.tau2.is_finite()
            && self.gamma > T::zero()
            && self.gamma.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub burn_in: usize,
    pub n_draws: usize,
    pub thin: usize,
    /// Variance `c` of the random-walk proposal `N(eta, c I)`.
    pub mh_step_c: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            burn_in: 1_000,
            n_draws: 5_000,
            thin: 1,
            mh_step_c: 0.04,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_draws == 0 {
            return Err(Error::Parameter("n_draws must be positive".into()));
        }
        if self.thin == 0 {
            return Err(Error::Parameter("thin must be at least 1".into()));
        }
        if !(self.mh_step_c.is_finite() && self.mh_step_c > 0.0) {
            return Err(Error::Parameter("mh_step_c must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    /// Fraction of accepted `eta` proposals; `None` unless the model is `Stk2`.
    pub mh_accept_rate: Option<f64>,
    pub n_kept: usize,
}

/// Which blocks a sweep updates. Disabled blocks keep their current value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Blocks {
    pub theta: bool,
    pub sigma2: bool,
    pub beta: bool,
    pub tau2: bool,
    pub gamma: bool,
    pub eta: bool,
}

impl Blocks {
    pub const ALL: Blocks = Blocks {
        theta: true,
        sigma2: true,
        beta: true,
        tau2: true,
        gamma: true,
        eta: true,
    };

    pub const NONE: Blocks = Blocks {
        theta: false,
        sigma2: false,
        beta: false,
        tau2: false,
        gamma: false,
        eta: false,
    };
}

/// `sum_k weights[k] * components[k]`, with weights summing to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedMean<T> {
    pub weights: [T; 3],
    pub components: [T; 3],
}

impl<T: Real> WeightedMean<T> {
    pub fn value(&self) -> T {
        self.weights.iter().zip(&self.components).map(|(&w, &c)| w * c).sum()
    }
}

/// Full conditionals for one dataset and model, with the `Z'Z` factorization
/// cached.
#[derive(Debug, Clone)]
pub struct GibbsKernel<'a, T> {
    data: &'a Dataset<T>,
    spec: &'a ModelSpec<T>,
    gram_chol: Option<Cholesky<T>>,
    mh_step_c: T,
}

impl<'a, T: Real> GibbsKernel<'a, T> {
    /// Builds the kernel. Requires a valid spec for the data and a full-rank
    /// `Z`, but not the propriety conditions; `run_chain` enforces those.
    pub fn new(data: &'a Dataset<T>, spec: &'a ModelSpec<T>, mh_step_c: f64) -> Result<Self> {
        spec.validate_for(data)?;
        if !(mh_step_c.is_finite() && mh_step_c > 0.0) {
            return Err(Error::Parameter("mh_step_c must be positive".into()));
        }
        let gram_chol = if data.p() > 0 {
            Some(Cholesky::new(&SquareMatrix::gram(&data.z_rows(), data.p()))?)
        } else {
            None
        };
        Ok(Self {
            data,
            spec,
            gram_chol,
            mh_step_c: T::lit(mh_step_c),
        })
    }

    pub fn dataset(&self) -> &Dataset<T> {
        self.data
    }

    pub fn spec(&self) -> &ModelSpec<T> {
        self.spec
    }

    fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    fn fitted(&self, beta: &[T], i: usize) -> T {
        dot(&self.data.areas()[i].z, beta)
    }

    /// `b_i` for `Stk1`, `b_i exp(w_i' eta)` for `Stk2`.
    pub fn effective_b(&self, eta: &[T], i: usize) -> T {
        let b = self.spec.hyper.b[i];
        match self.kind() {
            ModelKind::Stk2 => b * dot(&self.data.areas()[i].w, eta).exp(),
            _ => b,
        }
    }

    /// Deterministic starting point: direct estimates for `theta`, `sigma2`,
    /// least squares for `beta`, residual variance for `tau2`, and the
    /// prior-mean inversion `gamma = mean(sigma2_i (a_i - 1) / b_i)`.
    pub fn init_state(&self) -> ParameterState<T> {
        let areas = self.data.areas();
        let m = areas.len();
        let floor = T::lit(VARIANCE_FLOOR);
        let theta: Vec<T> = areas.iter().map(|a| a.x).collect();
        let sigma2: Vec<T> = areas.iter().map(|a| a.s2).collect();
        let beta = self.least_squares(&theta);
        let resid: Vec<T> = (0..m).map(|i| theta[i] - self.fitted(&beta, i)).collect();
        let rbar = crate::real::mean(&resid);
        let ss: T = resid.iter().map(|&r| (r - rbar) * (r - rbar)).sum();
        let tau2 = (ss / T::count(m.saturating_sub(1).max(1))).max(floor);
        let hyper = &self.spec.hyper;
        let gamma = ((0..m)
            .map(|i| sigma2[i] * (hyper.a[i] - T::one()) / hyper.b[i])
            .sum::<T>()
            / T::count(m))
        .max(floor);
        let eta = match self.kind() {
            ModelKind::Stk2 => vec![T::zero(); self.data.q()],
            _ => Vec::new(),
        };
        ParameterState {
            theta,
            sigma2,
            beta,
            tau2,
            gamma,
            eta,
        }
    }

    /// `(Z'Z)^{-1} Z' y`.
    pub fn least_squares(&self, y: &[T]) -> Vec<T> {
        let Some(chol) = &self.gram_chol else {
            return Vec::new();
        };
        let p = self.data.p();
        let mut zty = vec![T::zero(); p];
        for (area, &yi) in self.data.areas().iter().zip(y) {
            for k in 0..p {
                zty[k] = zty[k] + area.z[k] * yi;
            }
        }
        chol.solve(&zty)
    }

    /// Conditional mean and variance of `theta_i`.
    pub fn theta_conditional(&self, state: &ParameterState<T>, i: usize) -> (T, T) {
        let area = &self.data.areas()[i];
        let (t2, s2) = (state.tau2, state.sigma2[i]);
        let total = t2 + s2;
        let mean = (t2 * area.x + s2 * self.fitted(&state.beta, i)) / total;
        (mean, t2 * s2 / total)
    }

    pub fn update_theta<R: Rng + ?Sized>(&self, state: &ParameterState<T>, rng: &mut R) -> Vec<T> {
        (0..self.data.m())
            .map(|i| {
                let (mean, var) = self.theta_conditional(state, i);
                sample_normal(mean, var, rng)
            })
            .collect()
    }

    /// Inverse-gamma full conditional of `sigma2_i` under the model's prior.
    pub fn sigma2_conditional(&self, state: &ParameterState<T>, i: usize) -> InverseGammaParams<T> {
        let area = &self.data.areas()[i];
        let half = T::lit(0.5);
        let n = T::count(area.n);
        let d = area.x - state.theta[i];
        let data_scale = half * d * d + half * (n - T::one()) * area.s2;
        let (shape, scale) = match self.kind() {
            ModelKind::Yc => (half * n, data_scale),
            ModelKind::Stk1 | ModelKind::Stk2 => (
                half * n + self.spec.hyper.a[i],
                data_scale + self.effective_b(&state.eta, i) * state.gamma,
            ),
        };
        InverseGammaParams::new(shape, scale).expect("sigma2 conditional has positive parameters")
    }

    /// Writes the conditional mean of `sigma2_i` as a weighted mean of
    /// `(X_i - theta_i)^2`, `S_i^2` and the prior mean `b_i gamma / (a_i - 1)`,
    /// with weights `1/2`, `(n_i - 1)/2`, `a_i - 1` over `n_i/2 + a_i - 1`.
    /// `None` for `Yc` or when `a_i <= 1` (no prior mean).
    pub fn sigma2_mean_decomposition(&self, state: &ParameterState<T>, i: usize) -> Option<WeightedMean<T>> {
        let a = self.spec.hyper.a[i];
        if self.kind() == ModelKind::Yc || a <= T::one() {
            return None;
        }
        let area = &self.data.areas()[i];
        let half = T::lit(0.5);
        let n = T::count(area.n);
        let total = half * n + a - T::one();
        let d = area.x - state.theta[i];
        let prior_mean = self.effective_b(&state.eta, i) * state.gamma / (a - T::one());
        Some(WeightedMean {
            weights: [half / total, half * (n - T::one()) / total, (a - T::one()) / total],
            components: [d * d, area.s2, prior_mean],
        })
    }

    pub fn update_sigma2<R: Rng + ?Sized>(&self, state: &ParameterState<T>, rng: &mut R) -> Vec<T> {
        (0..self.data.m())
            .map(|i| sample_inverse_gamma(&self.sigma2_conditional(state, i), rng))
            .collect()
    }

    /// `N_p((Z'Z)^{-1} Z' theta, tau2 (Z'Z)^{-1})`, returned as (mean, covariance).
    pub fn beta_conditional(&self, state: &ParameterState<T>) -> (Vec<T>, SquareMatrix<T>) {
        let p = self.data.p();
        let mean = self.least_squares(&state.theta);
        let cov = match &self.gram_chol {
            Some(chol) => {
                let mut inv = SquareMatrix::zeros(p);
                for j in 0..p {
                    let mut e = vec![T::zero(); p];
                    e[j] = T::one();
                    let col = chol.solve(&e);
                    for (i, v) in col.into_iter().enumerate() {
                        inv[(i, j)] = v;
                    }
                }
                inv.scaled(state.tau2)
            }
            None => SquareMatrix::zeros(0),
        };
        (mean, cov)
    }

    pub fn update_beta<R: Rng + ?Sized>(&self, state: &ParameterState<T>, rng: &mut R) -> Vec<T> {
        let Some(chol) = &self.gram_chol else {
            return Vec::new();
        };
        let mean = self.least_squares(&state.theta);
        // With Z'Z = L L', beta = mean + tau * L'^{-1} eps has covariance tau2 (Z'Z)^{-1}.
        let eps: Vec<T> = (0..self.data.p()).map(|_| standard_normal(rng)).collect();
        let dev = chol.solve_upper(&eps);
        let tau = state.tau2.sqrt();
        mean.into_iter().zip(dev).map(|(mu, d)| mu + tau * d).collect()
    }

    /// Draws `beta` through the generic MVN sampler; slower, kept as a
    /// cross-check for `update_beta`.
    pub fn update_beta_via_mvn<R: Rng + ?Sized>(
        &self,
        state: &ParameterState<T>,
        rng: &mut R,
    ) -> Result<Vec<T>> {
        let (mean, cov) = self.beta_conditional(state);
        Ok(sample_mvn(&MvnParams::new(mean, cov)?, rng))
    }

    pub fn tau2_conditional(&self, state: &ParameterState<T>) -> Result<InverseGammaParams<T>> {
        let m = self.data.m();
        let half = T::lit(0.5);
        let shape = half * T::count(m) - T::one();
        if !(shape > T::zero()) {
            return Err(Error::Precondition(format!(
                "tau2 conditional needs m > 2, got m = {m}"
            )));
        }
        let rss: T = (0..m)
            .map(|i| {
                let r = state.theta[i] - self.fitted(&state.beta, i);
                r * r
            })
            .sum();
        if !(rss > T::zero()) || !rss.is_finite() {
            return Err(Error::DegenerateState(format!(
                "residual sum of squares (theta - Z beta)'(theta - Z beta) = {rss}; tau2 conditional has no positive scale"
            )));
        }
        InverseGammaParams::new(shape, half * rss)
    }

    pub fn update_tau2<R: Rng + ?Sized>(&self, state: &ParameterState<T>, rng: &mut R) -> Result<T> {
        Ok(sample_inverse_gamma(&self.tau2_conditional(state)?, rng))
    }

    pub fn gamma_conditional(&self, state: &ParameterState<T>) -> GammaParams<T> {
        let shape = self.spec.hyper.a.iter().copied().sum::<T>() + T::one();
        let rate: T = (0..self.data.m())
            .map(|i| self.effective_b(&state.eta, i) / state.sigma2[i])
            .sum();
        GammaParams::new(shape, rate).expect("gamma conditional has positive parameters")
    }

    /// Draws `gamma`; under `Yc` the prior scale does not enter the model and
    /// the current value is returned unchanged.
    pub fn update_gamma<R: Rng + ?Sized>(&self, state: &ParameterState<T>, rng: &mut R) -> T {
        match self.kind() {
            ModelKind::Yc => state.gamma,
            _ => sample_gamma(&self.gamma_conditional(state), rng),
        }
    }

    /// Unnormalized log full conditional of `eta`:
    /// `sum_i a_i w_i' eta - b_i gamma exp(w_i' eta) / sigma2_i`.
    pub fn eta_log_conditional(&self, state: &ParameterState<T>, eta: &[T]) -> T {
        let hyper = &self.spec.hyper;
        self.data
            .areas()
            .iter()
            .enumerate()
            .map(|(i, area)| {
                let lin = dot(&area.w, eta);
                hyper.a[i] * lin - hyper.b[i] * state.gamma * lin.exp() / state.sigma2[i]
            })
            .sum()
    }

    /// Log acceptance ratio `log p(from, to)` of the random-walk proposal.
    pub fn eta_log_ratio(&self, state: &ParameterState<T>, from: &[T], to: &[T]) -> T {
        let hyper = &self.spec.hyper;
        self.data
            .areas()
            .iter()
            .enumerate()
            .map(|(i, area)| {
                let (l0, l1) = (dot(&area.w, from), dot(&area.w, to));
                hyper.a[i] * (l1 - l0)
                    - hyper.b[i] * state.gamma * (l1.exp() - l0.exp()) / state.sigma2[i]
            })
            .sum()
    }

    /// Random-walk Metropolis–Hastings step for `eta`; returns the new value
    /// and whether the proposal was accepted.
    pub fn mh_update_eta<R: Rng + ?Sized>(
        &self,
        state: &ParameterState<T>,
        rng: &mut R,
    ) -> (Vec<T>, bool) {
        let step = self.mh_step_c.sqrt();
        let proposal: Vec<T> = state
            .eta
            .iter()
            .map(|&e| e + step * standard_normal::<T, R>(rng))
            .collect();
        let log_ratio = self.eta_log_ratio(state, &state.eta, &proposal);
        let u: T = open_uniform(rng);
        if log_ratio >= T::zero() || u.ln() < log_ratio {
            (proposal, true)
        } else {
            (state.eta.clone(), false)
        }
    }
}

/// A running chain: kernel, current state, random source, MH counters.
pub struct Chain<'a, T, R = RandomSource> {
    kernel: GibbsKernel<'a, T>,
    state: ParameterState<T>,
    rng: R,
    accepted: u64,
    attempted: u64,
}

impl<'a, T: Real, R: Rng> Chain<'a, T, R> {
    pub fn new(kernel: GibbsKernel<'a, T>, state: ParameterState<T>, rng: R) -> Self {
        Self {
            kernel,
            state,
            rng,
            accepted: 0,
            attempted: 0,
        }
    }

    pub fn state(&self) -> &ParameterState<T> {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut ParameterState<T> {
        &mut self.state
    }

    pub fn kernel(&self) -> &GibbsKernel<'a, T> {
        &self.kernel
    }

    pub fn rng_mut(&mut self) -> &mut R {
        &mut self.rng
    }

    /// Accepted / attempted `eta` proposals so far, if any were attempted.
    pub fn accept_rate(&self) -> Option<f64> {
        (self.attempted > 0).then(|| self.accepted as f64 / self.attempted as f64)
    }

    /// One sweep in the fixed order theta, sigma2, beta, tau2, gamma, eta.
    pub fn sweep(&mut self, blocks: Blocks) -> Result<()> {
        let k = &self.kernel;
        if blocks.theta {
            self.state.theta = k.update_theta(&self.state, &mut self.rng);
        }
        if blocks.sigma2 {
            self.state.sigma2 = k.update_sigma2(&self.state, &mut self.rng);
        }
        if blocks.beta {
            self.state.beta = k.update_beta(&self.state, &mut self.rng);
        }
        if blocks.tau2 {
            self.state.tau2 = k.update_tau2(&self.state, &mut self.rng)?;
        }
        if blocks.gamma {
            self.state.gamma = k.update_gamma(&self.state, &mut self.rng);
        }
        if blocks.eta && k.kind() == ModelKind::Stk2 {
            let (eta, accepted) = k.mh_update_eta(&self.state, &mut self.rng);
            self.state.eta = eta;
            self.attempted += 1;
            self.accepted += u64::from(accepted);
        }
        Ok(())
    }

    /// Runs `burn_in + n_draws * thin` sweeps and keeps every `thin`-th
    /// post-burn-in state.
    pub fn run(
        &mut self,
        burn_in: usize,
        n_draws: usize,
        thin: usize,
        blocks: Blocks,
    ) -> Result<Vec<ParameterState<T>>> {
        for _ in 0..burn_in {
            self.sweep(blocks)?;
        }
        let mut kept = Vec::with_capacity(n_draws);
        for _ in 0..n_draws {
            for _ in 0..thin {
                self.sweep(blocks)?;
            }
            kept.push(self.state.clone());
        }
        Ok(kept)
    }
}

/// Runs one chain from the deterministic starting point.
pub fn run_chain<T: Real>(
    dataset: &Dataset<T>,
    spec: &ModelSpec<T>,
    config: &SamplerConfig,
) -> Result<(PosteriorDraws<T>, ChainDiagnostics)> {
    config.validate()?;
    spec.validate_for(dataset)?;
    let report = check_conditions(dataset, spec);
    if !report.proper {
        return Err(Error::Precondition(report.describe()));
    }
    let kernel = GibbsKernel::new(dataset, spec, config.mh_step_c)?;
    let init = kernel.init_state();
    let mut chain = Chain::new(kernel, init, seeded(config.seed));
    let states = chain.run(config.burn_in, config.n_draws, config.thin, Blocks::ALL)?;
    let diagnostics = ChainDiagnostics {
        mh_accept_rate: match spec.kind {
            ModelKind::Stk2 => Some(chain.accept_rate().unwrap_or(0.0)),
            _ => None,
        },
        n_kept: states.len(),
    };
    let draws = PosteriorDraws::new(states, spec.kind, dataset.m(), dataset.p(), dataset.q())?;
    Ok((draws, diagnostics))
}
