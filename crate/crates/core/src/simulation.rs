//! Monte Carlo comparison of the models on synthetic Fay–Herriot data.
//!
//! Each replication draws covariates, true means and true sampling
//! variances, simulates unit-level observations, reduces them to the direct
//! estimates `(X_i, S_i^2)`, and fits every method on that one dataset.
//! Point estimates are posterior means; intervals are equal-tailed.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{sample_inverse_gamma, sample_normal, InverseGammaParams};
use crate::error::{Error, Result};
use crate::model::{AreaObservation, Dataset, HyperParams, ModelKind, ModelSpec};
use crate::posterior::{interval_from_column, CredibleInterval, Param};
use crate::real::Real;
use crate::rng::{derive_seed, seeded};
use crate::sampler::{run_chain, SamplerConfig};

/// Stream id reserved for data generation; methods use their model id.
const DATA_STREAM: u64 = 0;

/// Distribution of the true sampling variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarianceRegime {
    /// `sigma2_i ~ IG(shape, scale_coef * exp(z_coef * z_i))` (shape–scale).
    InverseGamma { shape: f64, scale_coef: f64, z_coef: f64 },
    /// `sigma2_i ~ U(lo, hi)`.
    Uniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub m: usize,
    /// Per-area sample sizes (length `m`).
    pub n: Vec<usize>,
    pub beta0: f64,
    pub beta1: f64,
    /// Between-area variance; zero gives `theta_i = beta0 + beta1 z_i`.
    pub tau2: f64,
    pub regime: VarianceRegime,
    pub z_range: (f64, f64),
    pub replications: usize,
    pub seed: u64,
}

impl SimConfig {
    fn preset(regime: VarianceRegime, replications: usize, seed: u64) -> Self {
        Self {
            m: 30,
            n: vec![7; 30],
            beta0: 0.5,
            beta1: 0.8,
            tau2: 1.0,
            regime,
            z_range: (2.0, 8.0),
            replications,
            seed,
        }
    }

    /// Inverse-gamma variances, `IG(10, 5 exp(0.3 z))`.
    pub fn case_i(replications: usize, seed: u64) -> Self {
        Self::preset(
            VarianceRegime::InverseGamma { shape: 10.0, scale_coef: 5.0, z_coef: 0.3 },
            replications,
            seed,
        )
    }

    /// Uniform variances, `U(0.5, 5)`.
    pub fn case_ii(replications: usize, seed: u64) -> Self {
        Self::preset(VarianceRegime::Uniform { lo: 0.5, hi: 5.0 }, replications, seed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        if self.m == 0 {
            return bad("m must be at least 1".into());
        }
        if self.n.len() != self.m {
            return bad(format!("n has {} entries for m = {}", self.n.len(), self.m));
        }
        if let Some(i) = self.n.iter().position(|&n| n < 2) {
            return bad(format!("n_i>1 fails for area {}", i + 1));
        }
        if !(self.tau2.is_finite() && self.tau2 >= 0.0) {
            return bad(format!("tau2 must be non-negative, got {}", self.tau2));
        }
        if !(self.beta0.is_finite() && self.beta1.is_finite()) {
            return bad("beta0 and beta1 must be finite".into());
        }
        let (zl, zh) = self.z_range;
        if !(zl.is_finite() && zh.is_finite() && zl <= zh) {
            return bad(format!("z_range ({zl}, {zh}) is not ordered"));
        }
        match self.regime {
            VarianceRegime::InverseGamma { shape, scale_coef, z_coef } => {
                if !(shape > 0.0 && scale_coef > 0.0 && z_coef.is_finite()) {
                    return bad("inverse-gamma regime needs shape > 0 and scale_coef > 0".into());
                }
            }
            VarianceRegime::Uniform { lo, hi } => {
                if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                    return bad(format!("uniform regime needs 0 < lo < hi, got ({lo}, {hi})"));
                }
            }
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        Ok(())
    }

    /// Default-hyperparameter specs for `kinds`, sized for this config.
    pub fn default_methods<T: Real>(&self, kinds: &[ModelKind]) -> Vec<ModelSpec<T>> {
        kinds
            .iter()
            .map(|&k| ModelSpec::new(k, HyperParams::default_for_sizes(&self.n)))
            .collect()
    }
}

/// True area parameters of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth<T> {
    pub theta: Vec<T>,
    pub sigma2: Vec<T>,
}

/// Draws one synthetic dataset. Covariates are `z = (1, z_i)` and
/// `w = (z_i)`.
pub fn generate_replication<T: Real, R: Rng + ?Sized>(
    config: &SimConfig,
    rng: &mut R,
) -> Result<(Dataset<T>, Truth<T>)> {
    config.validate()?;
    let (zl, zh) = (T::lit(config.z_range.0), T::lit(config.z_range.1));
    let tau2 = T::lit(config.tau2);
    let mut areas = Vec::with_capacity(config.m);
    let mut truth = Truth { theta: Vec::with_capacity(config.m), sigma2: Vec::with_capacity(config.m) };
    for &n in &config.n {
        let z = zl + (zh - zl) * T::lit(rng.random::<f64>());
        let sigma2 = match config.regime {
            VarianceRegime::InverseGamma { shape, scale_coef, z_coef } => {
                let scale = T::lit(scale_coef) * (T::lit(z_coef) * z).exp();
                sample_inverse_gamma(&InverseGammaParams::new(T::lit(shape), scale)?, rng)
            }
            VarianceRegime::Uniform { lo, hi } => T::lit(lo + (hi - lo) * rng.random::<f64>()),
        };
        let mean = T::lit(config.beta0) + T::lit(config.beta1) * z;
        let theta = if config.tau2 > 0.0 { sample_normal(mean, tau2, rng) } else { mean };
        let nt = T::count(n);
        let unit_var = nt * sigma2;
        let units: Vec<T> = (0..n).map(|_| theta + sample_normal(T::zero(), unit_var, rng)).collect();
        let xbar = units.iter().copied().sum::<T>() / nt;
        let ss = units.iter().map(|&x| (x - xbar) * (x - xbar)).sum::<T>();
        let s2 = ss / (nt * (nt - T::one()));
        areas.push(AreaObservation::new(xbar, s2, n, vec![T::one(), z], vec![z])?);
        truth.theta.push(theta);
        truth.sigma2.push(sigma2);
    }
    Ok((Dataset::new(areas)?, truth))
}

/// 95% and 99% intervals for every `theta_i`.
pub type IntervalPair<T> = (Vec<CredibleInterval<T>>, Vec<CredibleInterval<T>>);

/// Point estimates and `theta` intervals from one fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationFit<T> {
    pub theta: Vec<T>,
    pub sigma2: Vec<T>,
    /// 95% and 99% intervals for each `theta_i`; `None` for point estimators.
    pub intervals: Option<IntervalPair<T>>,
}

/// One row of the experiment table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub mse_theta: f64,
    pub bias_theta: f64,
    pub mse_sigma2: f64,
    pub bias_sigma2: f64,
    /// Coverage of the 95% `theta` intervals, as a fraction.
    pub cp95: Option<f64>,
    pub cp99: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub replications: usize,
    pub m: usize,
    pub rows: Vec<MethodRow>,
}

impl ExperimentReport {
    pub fn row(&self, method: &str) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

struct ErrorStats {
    mse: f64,
    bias: f64,
}

fn error_stats<T: Real>(est: &[&[T]], truth: &[&[T]]) -> Result<ErrorStats> {
    let r = est.len();
    let m = truth.first().map_or(0, |t| t.len());
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut signed = vec![0.0; m];
    for (e, t) in est.iter().zip(truth) {
        for i in 0..m {
            let d = (e[i] - t[i]).as_f64();
            sq += d * d;
            abs += d.abs();
            signed[i] += d;
        }
    }
    let denom = (m * r) as f64;
    let bias = signed.iter().map(|s| s.abs()).sum::<f64>() / denom;
    let mean_abs = abs / denom;
    if bias > mean_abs * (1.0 + 1e-12) + f64::MIN_POSITIVE {
        return Err(Error::DegenerateState(format!(
            "bias {bias} exceeds mean absolute error {mean_abs}"
        )));
    }
    Ok(ErrorStats { mse: sq / denom, bias })
}

/// MSE, absolute bias, and coverage of one method over `R` replications:
///
/// ```text
/// MSE  = (mR)^-1 sum_i sum_r (est - truth)^2
/// Bias = (mR)^-1 sum_i | sum_r (est - truth) |
/// CP   = (mR)^-1 sum_i sum_r 1{theta_i in CI_i}
/// ```
pub fn evaluate<T: Real>(method: &str, fits: &[ReplicationFit<T>], truths: &[Truth<T>]) -> Result<MethodRow> {
    if fits.is_empty() {
        return Err(Error::Empty("no replications to evaluate".into()));
    }
    if fits.len() != truths.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} fits for {} truths",
            fits.len(),
            truths.len()
        )));
    }
    let m = truths[0].theta.len();
    let with_intervals = fits[0].intervals.is_some();
    for (r, (f, t)) in fits.iter().zip(truths).enumerate() {
        let mut ok = f.theta.len() == m && f.sigma2.len() == m && t.theta.len() == m && t.sigma2.len() == m;
        match &f.intervals {
            Some((a, b)) => ok &= with_intervals && a.len() == m && b.len() == m,
            None => ok &= !with_intervals,
        }
        if !ok {
            return Err(Error::DimensionMismatch(format!("replication {r} does not match m = {m}")));
        }
    }
    let collect = |get: fn(&ReplicationFit<T>) -> &[T]| fits.iter().map(get).collect::<Vec<_>>();
    let theta = error_stats(
        &collect(|f| &f.theta),
        &truths.iter().map(|t| t.theta.as_slice()).collect::<Vec<_>>(),
    )?;
    let sigma2 = error_stats(
        &collect(|f| &f.sigma2),
        &truths.iter().map(|t| t.sigma2.as_slice()).collect::<Vec<_>>(),
    )?;
    let (cp95, cp99) = if with_intervals {
        let (mut c95, mut c99) = (0usize, 0usize);
        for (f, t) in fits.iter().zip(truths) {
            let (i95, i99) = f.intervals.as_ref().expect("checked above");
            for i in 0..m {
                c95 += usize::from(i95[i].contains(t.theta[i]));
                c99 += usize::from(i99[i].contains(t.theta[i]));
            }
        }
        let denom = (m * fits.len()) as f64;
        (Some(c95 as f64 / denom), Some(c99 as f64 / denom))
    } else {
        (None, None)
    };
    Ok(MethodRow {
        method: method.to_string(),
        mse_theta: theta.mse,
        bias_theta: theta.bias,
        mse_sigma2: sigma2.mse,
        bias_sigma2: sigma2.bias,
        cp95,
        cp99,
    })
}

/// Fits one method and reduces the draws to posterior means and intervals.
pub fn fit_replication<T: Real>(
    dataset: &Dataset<T>,
    spec: &ModelSpec<T>,
    sampler: &SamplerConfig,
) -> Result<ReplicationFit<T>> {
    let (draws, _) = run_chain(dataset, spec, sampler)?;
    let m = dataset.m();
    let mean = |xs: &[T]| crate::real::mean(xs);
    let mut theta = Vec::with_capacity(m);
    let mut sigma2 = Vec::with_capacity(m);
    let mut ci95 = Vec::with_capacity(m);
    let mut ci99 = Vec::with_capacity(m);
    for i in 0..m {
        let th = draws.column(Param::Theta(i));
        theta.push(mean(&th));
        sigma2.push(mean(&draws.column(Param::Sigma2(i))));
        ci95.push(interval_from_column(&th, 0.95)?);
        ci99.push(interval_from_column(&th, 0.99)?);
    }
    Ok(ReplicationFit { theta, sigma2, intervals: Some((ci95, ci99)) })
}

/// Seed of the data stream of replication `r`.
pub fn data_seed(seed: u64, r: usize) -> u64 {
    derive_seed(seed, &[r as u64, DATA_STREAM])
}

/// Seed of the chain for `kind` in replication `r`.
pub fn method_seed(seed: u64, r: usize, kind: ModelKind) -> u64 {
    derive_seed(seed, &[r as u64, kind.id()])
}

/// Runs the full experiment on `jobs` threads (`0` uses rayon's default).
/// Replications are independent; results are aggregated in replication
/// order, so the report does not depend on `jobs`.
pub fn run_experiment<T: Real>(
    config: &SimConfig,
    methods: &[ModelSpec<T>],
    sampler: &SamplerConfig,
    jobs: usize,
) -> Result<ExperimentReport> {
    config.validate()?;
    sampler.validate()?;
    if methods.is_empty() {
        return Err(Error::Empty("no methods to compare".into()));
    }
    for spec in methods {
        if spec.hyper.len() != config.m {
            return Err(Error::DimensionMismatch(format!(
                "{} hyperparameters have length {} for m = {}",
                spec.kind,
                spec.hyper.len(),
                config.m
            )));
        }
    }
    let one = |r: usize| -> Result<(Truth<T>, Vec<ReplicationFit<T>>)> {
        let mut rng = seeded(data_seed(config.seed, r));
        let (data, truth) = generate_replication::<T, _>(config, &mut rng)?;
        let fits = methods
            .iter()
            .map(|spec| {
                let cfg = SamplerConfig { seed: method_seed(config.seed, r, spec.kind), ..*sampler };
                fit_replication(&data, spec, &cfg).map_err(|e| Error::Experiment {
                    replication: r,
                    method: spec.kind.name().to_string(),
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((truth, fits))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
    let results: Vec<(Truth<T>, Vec<ReplicationFit<T>>)> =
        pool.install(|| (0..config.replications).into_par_iter().map(one).collect::<Result<Vec<_>>>())?;

    let (truths, per_rep): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let mut by_method: Vec<Vec<ReplicationFit<T>>> = vec![Vec::with_capacity(truths.len()); methods.len()];
    for fits in per_rep {
        for (j, f) in fits.into_iter().enumerate() {
            by_method[j].push(f);
        }
    }
    let rows = methods
        .iter()
        .zip(&by_method)
        .map(|(spec, fits)| evaluate(spec.kind.name(), fits, &truths))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport { replications: config.replications, m: config.m, rows })
}
