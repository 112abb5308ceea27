//! Posterior summaries, credible intervals, and the deviance information
//! criterion.
//!
//! DIC uses the marginal likelihood of the model parameters `phi` with the
//! area means integrated out analytically and, for `Stk1`/`Stk2`, the
//! sampling variances integrated out numerically:
//!
//! ```text
//! L_i(phi) = ∫ N(X_i; z_i'beta, tau2 + s) Gamma(S_i^2; (n_i-1)/2, (n_i-1)/(2s)) IG(s; a_i, c_i) ds
//! ```
//!
//! with `c_i = b_i gamma` (times `exp(w_i' eta)` for `Stk2`). The integral
//! is taken over `u = ln s` by adaptive Gauss–Kronrod. `Yc` carries every
//! `sigma2_i` in `phi`, so no integral is needed.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{ln_gamma, logpdf_gamma, logpdf_normal, GammaParams};
use crate::error::{Error, Result};
use crate::model::{Dataset, ModelKind, ModelSpec};
use crate::quadrature::integrate_with_breaks;
use crate::real::{dot, Real};
use crate::sampler::ParameterState;

/// A scalar coordinate of the parameter state. Indices are zero-based; the
/// display names (`theta_1`, ...) are one-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Param {
    Theta(usize),
    Sigma2(usize),
    Beta(usize),
    Tau2,
    Gamma,
    Eta(usize),
}

impl Param {
    pub fn get<T: Real>(&self, s: &ParameterState<T>) -> T {
        match *self {
            Param::Theta(i) => s.theta[i],
            Param::Sigma2(i) => s.sigma2[i],
            Param::Beta(j) => s.beta[j],
            Param::Tau2 => s.tau2,
            Param::Gamma => s.gamma,
            Param::Eta(k) => s.eta[k],
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::Theta(i) => write!(f, "theta_{}", i + 1),
            Param::Sigma2(i) => write!(f, "sigma2_{}", i + 1),
            Param::Beta(j) => write!(f, "beta_{}", j + 1),
            Param::Tau2 => f.write_str("tau2"),
            Param::Gamma => f.write_str("gamma"),
            Param::Eta(k) => write!(f, "eta_{}", k + 1),
        }
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau2" => return Ok(Param::Tau2),
            "gamma" => return Ok(Param::Gamma),
            _ => {}
        }
        let bad = || Error::Parameter(format!("unknown parameter name {s:?}"));
        let (prefix, idx) = s.rsplit_once('_').ok_or_else(bad)?;
        let idx: usize = idx.parse().map_err(|_| bad())?;
        let i = idx.checked_sub(1).ok_or_else(bad)?;
        match prefix {
            "theta" => Ok(Param::Theta(i)),
            "sigma2" => Ok(Param::Sigma2(i)),
            "beta" => Ok(Param::Beta(i)),
            "eta" => Ok(Param::Eta(i)),
            _ => Err(bad()),
        }
    }
}

/// Retained post-burn-in states of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws<T> {
    states: Vec<ParameterState<T>>,
    kind: ModelKind,
    m: usize,
    p: usize,
    q: usize,
}

impl<T: Real> PosteriorDraws<T> {
    pub fn new(
        states: Vec<ParameterState<T>>,
        kind: ModelKind,
        m: usize,
        p: usize,
        q: usize,
    ) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Empty("posterior draws".into()));
        }
        let eta_len = if kind == ModelKind::Stk2 { q } else { 0 };
        for (d, s) in states.iter().enumerate() {
            if s.theta.len() != m || s.sigma2.len() != m || s.beta.len() != p || s.eta.len() != eta_len {
                return Err(Error::DimensionMismatch(format!(
                    "draw {d} does not match (m, p, q) = ({m}, {p}, {q})"
                )));
            }
        }
        Ok(Self { states, kind, m, p, q })
    }

    pub fn states(&self) -> &[ParameterState<T>] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.m, self.p, self.q)
    }

    /// Every scalar coordinate in output order: theta, sigma2, beta, tau2,
    /// gamma, eta.
    pub fn params(&self) -> Vec<Param> {
        let eta_len = self.states[0].eta.len();
        (0..self.m)
            .map(Param::Theta)
            .chain((0..self.m).map(Param::Sigma2))
            .chain((0..self.p).map(Param::Beta))
            .chain([Param::Tau2, Param::Gamma])
            .chain((0..eta_len).map(Param::Eta))
            .collect()
    }

    pub fn column(&self, param: Param) -> Vec<T> {
        self.states.iter().map(|s| param.get(s)).collect()
    }

    /// `(name, draws)` for every coordinate, in [`Self::params`] order.
    pub fn columns(&self) -> Vec<(String, Vec<T>)> {
        self.params()
            .into_iter()
            .map(|p| (p.to_string(), self.column(p)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileValue<T> {
    pub level: f64,
    pub value: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary<T> {
    pub name: String,
    pub mean: T,
    /// Sample standard deviation (n - 1 denominator; zero for a single draw).
    pub sd: T,
    pub quantiles: Vec<QuantileValue<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary<T> {
    pub n_draws: usize,
    pub parameters: Vec<ParamSummary<T>>,
}

impl<T: Real> Summary<T> {
    pub fn get(&self, name: &str) -> Option<&ParamSummary<T>> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CredibleInterval<T> {
    pub lower: T,
    pub upper: T,
    pub level: f64,
}

impl<T: Real> CredibleInterval<T> {
    pub fn contains(&self, v: T) -> bool {
        self.lower <= v && v <= self.upper
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("level must lie in (0, 1), got {level}")))
    }
}

/// Tail probabilities `((1 - level) / 2, (1 + level) / 2)` of an
/// equal-tailed interval.
pub fn tail_levels(level: f64) -> (f64, f64) {
    ((1.0 - level) / 2.0, (1.0 + level) / 2.0)
}

/// Quantile levels needed to report the median and the equal-tailed
/// intervals at each credible level.
pub fn summary_levels(credible_levels: &[f64]) -> Vec<f64> {
    let mut out = vec![0.5];
    for &l in credible_levels {
        let (lo, hi) = tail_levels(l);
        out.push(lo);
        out.push(hi);
    }
    out.sort_by(|a, b| a.total_cmp(b));
    out.dedup();
    out
}

/// Linear interpolation between order statistics: with `h = (n - 1) level`,
/// returns `x[floor h] + (h - floor h) (x[floor h + 1] - x[floor h])`.
pub fn quantile_sorted<T: Real>(sorted: &[T], level: f64) -> T {
    let n = sorted.len();
    let h = (n - 1) as f64 * level;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = T::lit(h - lo as f64);
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

fn sorted_copy<T: Real>(xs: &[T]) -> Vec<T> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("draws are finite"));
    v
}

pub fn summarize_column<T: Real>(name: &str, xs: &[T], levels: &[f64]) -> Result<ParamSummary<T>> {
    if xs.is_empty() {
        return Err(Error::Empty(format!("no draws for {name}")));
    }
    for &l in levels {
        if !(0.0..=1.0).contains(&l) {
            return Err(Error::Parameter(format!("quantile level must lie in [0, 1], got {l}")));
        }
    }
    let n = xs.len();
    let mean = crate::real::mean(xs);
    let sd = if n > 1 {
        (xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / T::count(n - 1)).sqrt()
    } else {
        T::zero()
    };
    let sorted = sorted_copy(xs);
    Ok(ParamSummary {
        name: name.to_string(),
        mean,
        sd,
        quantiles: levels
            .iter()
            .map(|&level| QuantileValue {
                level,
                value: quantile_sorted(&sorted, level),
            })
            .collect(),
    })
}

/// Summaries of named draw columns.
pub fn summarize_columns<T: Real>(columns: &[(String, Vec<T>)], levels: &[f64]) -> Result<Summary<T>> {
    let n_draws = columns.first().map(|(_, c)| c.len()).unwrap_or(0);
    if n_draws == 0 {
        return Err(Error::Empty("posterior draws".into()));
    }
    let parameters = columns
        .iter()
        .map(|(name, xs)| summarize_column(name, xs, levels))
        .collect::<Result<Vec<_>>>()?;
    Ok(Summary { n_draws, parameters })
}

pub fn summarize<T: Real>(draws: &PosteriorDraws<T>, levels: &[f64]) -> Result<Summary<T>> {
    summarize_columns(&draws.columns(), levels)
}

/// Equal-tailed interval from the empirical quantiles of one column.
pub fn interval_from_column<T: Real>(xs: &[T], level: f64) -> Result<CredibleInterval<T>> {
    check_level(level)?;
    if xs.is_empty() {
        return Err(Error::Empty("no draws".into()));
    }
    let sorted = sorted_copy(xs);
    let (lo, hi) = tail_levels(level);
    Ok(CredibleInterval {
        lower: quantile_sorted(&sorted, lo),
        upper: quantile_sorted(&sorted, hi),
        level,
    })
}

pub fn credible_interval<T: Real>(
    draws: &PosteriorDraws<T>,
    param: Param,
    level: f64,
) -> Result<CredibleInterval<T>> {
    interval_from_column(&draws.column(param), level)
}

/// The model parameters that DIC conditions on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phi<T> {
    pub beta: Vec<T>,
    pub tau2: T,
    /// `Stk1`/`Stk2` only.
    pub gamma: Option<T>,
    /// `Stk2` only (empty otherwise).
    pub eta: Vec<T>,
    /// `Yc` only.
    pub sigma2: Option<Vec<T>>,
}

impl<T: Real> Phi<T> {
    pub fn from_state(state: &ParameterState<T>, kind: ModelKind) -> Self {
        match kind {
            ModelKind::Stk1 => Self {
                beta: state.beta.clone(),
                tau2: state.tau2,
                gamma: Some(state.gamma),
                eta: Vec::new(),
                sigma2: None,
            },
            ModelKind::Stk2 => Self {
                beta: state.beta.clone(),
                tau2: state.tau2,
                gamma: Some(state.gamma),
                eta: state.eta.clone(),
                sigma2: None,
            },
            ModelKind::Yc => Self {
                beta: state.beta.clone(),
                tau2: state.tau2,
                gamma: None,
                eta: Vec::new(),
                sigma2: Some(state.sigma2.clone()),
            },
        }
    }

    /// Component-wise arithmetic mean (raw scale for every variance).
    pub fn mean_of(phis: &[Phi<T>]) -> Result<Self> {
        let first = phis.first().ok_or_else(|| Error::Empty("phi draws".into()))?;
        let n = T::count(phis.len());
        let avg_vec = |get: &dyn Fn(&Phi<T>) -> &[T]| -> Vec<T> {
            let len = get(first).len();
            (0..len)
                .map(|j| phis.iter().map(|p| get(p)[j]).sum::<T>() / n)
                .collect()
        };
        Ok(Self {
            beta: avg_vec(&|p| &p.beta),
            tau2: phis.iter().map(|p| p.tau2).sum::<T>() / n,
            gamma: first
                .gamma
                .map(|_| phis.iter().map(|p| p.gamma.unwrap_or_else(T::zero)).sum::<T>() / n),
            eta: avg_vec(&|p| &p.eta),
            sigma2: first
                .sigma2
                .as_ref()
                .map(|_| avg_vec(&|p| p.sigma2.as_deref().unwrap_or(&[]))),
        })
    }
}

/// Relative tolerance of each per-area integral.
pub const MARGINAL_REL_TOL: f64 = 1e-8;
const PRIOR_TAIL: f64 = 1e-12;
const TAIL_RATIO_LN: f64 = -32.236_191_301_916_64; // ln(1e-14)
const MAX_SEGMENTS: usize = 2_000;

#[derive(Debug, Clone)]
struct AreaConstants {
    // ln of the Gamma(a_i, 1) quantiles at PRIOR_TAIL and 1 - PRIOR_TAIL
    ln_g_lo: f64,
    ln_g_hi: f64,
}

/// Evaluates `log L(phi)` for a fixed dataset and model, caching the
/// per-area prior quantiles used to bracket each integral.
#[derive(Debug, Clone)]
pub struct MarginalLikelihood<'a, T> {
    data: &'a Dataset<T>,
    spec: &'a ModelSpec<T>,
    bounds: Vec<AreaConstants>,
}

impl<'a, T: Real> MarginalLikelihood<'a, T> {
    pub fn new(data: &'a Dataset<T>, spec: &'a ModelSpec<T>) -> Result<Self> {
        spec.validate_for(data)?;
        let bounds = if spec.kind == ModelKind::Yc {
            Vec::new()
        } else {
            spec.hyper
                .a
                .iter()
                .map(|&a| {
                    use statrs::distribution::{ContinuousCDF, Gamma};
                    let g = Gamma::new(a.as_f64(), 1.0)
                        .map_err(|e| Error::Parameter(format!("prior shape {a}: {e}")))?;
                    Ok(AreaConstants {
                        ln_g_lo: g.inverse_cdf(PRIOR_TAIL).ln(),
                        ln_g_hi: g.inverse_cdf(1.0 - PRIOR_TAIL).ln(),
                    })
                })
                .collect::<Result<Vec<_>>>()?
        };
        Ok(Self { data, spec, bounds })
    }

    fn check_phi(&self, phi: &Phi<T>) -> Result<()> {
        let (m, p) = (self.data.m(), self.data.p());
        let ok = phi.beta.len() == p
            && match self.spec.kind {
                ModelKind::Stk1 => phi.gamma.is_some() && phi.sigma2.is_none(),
                ModelKind::Stk2 => {
                    phi.gamma.is_some() && phi.eta.len() == self.data.q() && phi.sigma2.is_none()
                }
                ModelKind::Yc => phi.sigma2.as_ref().is_some_and(|s| s.len() == m),
            };
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "phi does not match the {} parameter set",
                self.spec.kind
            )))
        }
    }

    /// Sum over areas of the per-area log marginal likelihood.
    pub fn log_likelihood(&self, phi: &Phi<T>) -> Result<T> {
        self.check_phi(phi)?;
        let mut total = T::zero();
        for i in 0..self.data.m() {
            total = total + self.area_log_likelihood(phi, i)?;
        }
        Ok(total)
    }

    pub fn area_log_likelihood(&self, phi: &Phi<T>, i: usize) -> Result<T> {
        let area = &self.data.areas()[i];
        let mu = dot(&area.z, &phi.beta);
        let k = T::lit(0.5) * (T::count(area.n) - T::one());
        if let Some(sigma2) = &phi.sigma2 {
            let s = sigma2[i];
            let g = GammaParams::new(k, k / s)?;
            return Ok(logpdf_normal(area.x, mu, phi.tau2 + s) + logpdf_gamma(area.s2, &g));
        }
        let gamma = phi.gamma.expect("checked by check_phi");
        let mut scale = self.spec.hyper.b[i] * gamma;
        if self.spec.kind == ModelKind::Stk2 {
            scale = scale * dot(&area.w, &phi.eta).exp();
        }
        let a = self.spec.hyper.a[i];
        let consts = &self.bounds[i];
        self.integrate_area(i, area.x, mu, phi.tau2, area.s2, k, a, scale, consts)
    }

    #[allow(clippy::too_many_arguments)]
    fn integrate_area(
        &self,
        i: usize,
        x: T,
        mu: T,
        tau2: T,
        s2: T,
        k: T,
        a: T,
        scale: T,
        consts: &AreaConstants,
    ) -> Result<T> {
        let fail = |reason: String| Error::Quadrature { area: i + 1, reason };
        if !(scale.is_finite() && scale > T::zero() && tau2 > T::zero()) {
            return Err(fail(format!("invalid prior scale {scale} or tau2 {tau2}")));
        }
        let one = T::one();
        let gamma_const = k * k.ln() - ln_gamma(k) + (k - one) * s2.ln();
        let prior_const = a * scale.ln() - ln_gamma(a);
        let half = T::lit(0.5);
        let d2 = (x - mu) * (x - mu);
        let ln_2pi = T::TAU().ln();
        // log integrand over u = ln(sigma2), including the Jacobian e^u
        let log_f = |u: T| -> T {
            let s = u.exp();
            let inv = (-u).exp();
            let v = tau2 + s;
            let normal = -half * (ln_2pi + v.ln()) - half * d2 / v;
            let gamma_part = gamma_const - k * u - k * s2 * inv;
            let prior = prior_const - (a + one) * u - scale * inv;
            normal + gamma_part + prior + u
        };

        let ln_scale = scale.ln();
        let mut lo = ln_scale - T::lit(consts.ln_g_hi);
        let mut hi = ln_scale - T::lit(consts.ln_g_lo);
        // the data may put the mass outside the prior's bulk
        let ln_s2 = s2.ln();
        lo = lo.min(ln_s2 - T::lit(2.0));
        hi = hi.max(ln_s2 + T::lit(2.0));

        let (mut peak_u, mut peak) = grid_peak(&log_f, lo, hi, 96);
        let step = T::lit(2.0);
        let threshold = T::lit(TAIL_RATIO_LN);
        let mut widened = 0;
        loop {
            let (flo, fhi) = (log_f(lo), log_f(hi));
            if flo > peak {
                (peak_u, peak) = (lo, flo);
            }
            if fhi > peak {
                (peak_u, peak) = (hi, fhi);
            }
            let lo_ok = flo - peak < threshold || flo == T::neg_infinity();
            let hi_ok = fhi - peak < threshold || fhi == T::neg_infinity();
            if lo_ok && hi_ok {
                break;
            }
            widened += 1;
            if widened > 200 {
                return Err(fail("integrand tails do not decay".into()));
            }
            if !lo_ok {
                lo = lo - step;
            }
            if !hi_ok {
                hi = hi + step;
            }
        }
        (peak_u, peak) = golden_peak(&log_f, peak_u, (hi - lo) / T::lit(96.0), lo, hi, peak);
        if !peak.is_finite() {
            return Err(fail(format!("log integrand peak is {peak}")));
        }

        // curvature-based width for the initial partition
        let h = T::lit(1e-3);
        let curv = (log_f(peak_u + h) - T::lit(2.0) * peak + log_f(peak_u - h)) / (h * h);
        let mut breaks = vec![lo, hi, peak_u];
        if curv < T::zero() && curv.is_finite() {
            let sd = (-T::one() / curv).sqrt();
            for mult in [1.0, 3.0, 6.0, 12.0] {
                let off = sd * T::lit(mult);
                breaks.push(peak_u - off);
                breaks.push(peak_u + off);
            }
        }
        breaks.retain(|&b| b >= lo && b <= hi);
        breaks.sort_by(|a, b| a.partial_cmp(b).expect("finite breaks"));
        breaks.dedup();

        let rel_tol = T::lit(MARGINAL_REL_TOL).max(T::lit(64.0) * T::epsilon());
        let result = integrate_with_breaks(
            |u| (log_f(u) - peak).exp(),
            &breaks,
            rel_tol,
            T::zero(),
            MAX_SEGMENTS,
        )
        .map_err(|e| fail(e.0))?;
        if !(result.value > T::zero()) {
            return Err(fail(format!("integral is {}", result.value)));
        }
        Ok(peak + result.value.ln())
    }
}

fn grid_peak<T: Real, F: Fn(T) -> T>(f: &F, lo: T, hi: T, n: usize) -> (T, T) {
    let mut best = (lo, T::neg_infinity());
    for j in 0..=n {
        let u = lo + (hi - lo) * T::count(j) / T::count(n);
        let v = f(u);
        if v > best.1 {
            best = (u, v);
        }
    }
    best
}

/// Golden-section refinement of a maximum bracketed by `center ± radius`.
fn golden_peak<T: Real, F: Fn(T) -> T>(f: &F, center: T, radius: T, lo: T, hi: T, fc: T) -> (T, T) {
    let mut a = (center - radius).max(lo);
    let mut b = (center + radius).min(hi);
    let ratio = T::lit(0.618_033_988_749_894_8);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc_, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc_ > fd {
            b = d;
            d = c;
            fd = fc_;
            c = b - ratio * (b - a);
            fc_ = f(c);
        } else {
            a = c;
            c = d;
            fc_ = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
        if (b - a).abs() <= T::lit(1e-10) * (T::one() + center.abs()) {
            break;
        }
    }
    let (u, v) = if fc_ > fd { (c, fc_) } else { (d, fd) };
    if v > fc {
        (u, v)
    } else {
        (center, fc)
    }
}

/// Log marginal likelihood of `phi`; see the module docs.
pub fn marginal_log_likelihood<T: Real>(
    phi: &Phi<T>,
    dataset: &Dataset<T>,
    spec: &ModelSpec<T>,
) -> Result<T> {
    MarginalLikelihood::new(dataset, spec)?.log_likelihood(phi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DicResult<T> {
    pub dic: T,
    /// Posterior mean of the deviance `D(phi) = -2 log L(phi)`.
    pub mean_deviance: T,
    /// `D` at the component-wise posterior mean of `phi`.
    pub deviance_at_mean: T,
    /// `mean_deviance - deviance_at_mean`; may be negative.
    pub effective_parameters: T,
}

/// `DIC = 2 mean(D(phi)) - D(mean(phi))`. Per-draw deviances are evaluated
/// in parallel and summed in draw order.
pub fn dic<T: Real>(
    draws: &PosteriorDraws<T>,
    dataset: &Dataset<T>,
    spec: &ModelSpec<T>,
) -> Result<DicResult<T>> {
    if draws.len() < 2 {
        return Err(Error::Parameter(format!(
            "DIC needs at least 2 draws, got {}",
            draws.len()
        )));
    }
    if draws.kind() != spec.kind {
        return Err(Error::Parameter(format!(
            "draws come from {} but the spec is {}",
            draws.kind(),
            spec.kind
        )));
    }
    let eval = MarginalLikelihood::new(dataset, spec)?;
    let phis: Vec<Phi<T>> = draws
        .states()
        .iter()
        .map(|s| Phi::from_state(s, spec.kind))
        .collect();
    let deviances = phis
        .par_iter()
        .map(|phi| eval.log_likelihood(phi).map(|ll| -T::lit(2.0) * ll))
        .collect::<Result<Vec<T>>>()?;
    let mean_deviance = crate::real::mean(&deviances);
    let phi_bar = Phi::mean_of(&phis)?;
    let deviance_at_mean = -T::lit(2.0) * eval.log_likelihood(&phi_bar)?;
    Ok(DicResult {
        dic: T::lit(2.0) * mean_deviance - deviance_at_mean,
        mean_deviance,
        deviance_at_mean,
        effective_parameters: mean_deviance - deviance_at_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{sample_inverse_gamma, InverseGammaParams};
    use crate::model::{AreaObservation, HyperParams};
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;

    fn scalar_draws(xs: &[f64]) -> PosteriorDraws<f64> {
        let states = xs
            .iter()
            .map(|&x| ParameterState {
                theta: vec![x],
                sigma2: vec![1.0],
                beta: vec![],
                tau2: 1.0,
                gamma: 1.0,
                eta: vec![],
            })
            .collect();
        PosteriorDraws::new(states, ModelKind::Stk1, 1, 0, 0).unwrap()
    }

    fn normal_draws(n: usize, seed: u64) -> PosteriorDraws<f64> {
        let mut rng = seeded(seed);
        let xs: Vec<f64> = (0..n)
            .map(|_| crate::distributions::standard_normal(&mut rng))
            .collect();
        scalar_draws(&xs)
    }

    #[test]
    fn param_names_round_trip() {
        for p in [Param::Theta(0), Param::Sigma2(29), Param::Beta(1), Param::Tau2, Param::Gamma, Param::Eta(2)] {
            assert_eq!(p.to_string().parse::<Param>().unwrap(), p);
        }
        assert!("theta_0".parse::<Param>().is_err());
        assert!("delta_1".parse::<Param>().is_err());
    }

    #[test]
    fn constant_draws_summary() {
        let d = scalar_draws(&[2.5; 10]);
        let s = summarize(&d, &[0.025, 0.5, 0.975]).unwrap();
        let t = s.get("theta_1").unwrap();
        assert_eq!(t.sd, 0.0);
        assert!(t.quantiles.iter().all(|q| q.value == 2.5));
        let ci = credible_interval(&d, Param::Theta(0), 0.95).unwrap();
        assert_eq!(ci.lower, ci.upper);
    }

    #[test]
    fn interpolated_median() {
        let d = scalar_draws(&[3.0, 1.0, 4.0, 2.0]);
        let s = summarize(&d, &[0.5]).unwrap();
        assert_eq!(s.get("theta_1").unwrap().quantiles[0].value, 2.5);
    }

    #[test]
    fn normal_quantiles_and_intervals() {
        let d = normal_draws(100_000, 3);
        let s = summarize(&d, &[0.975]).unwrap();
        assert!((s.get("theta_1").unwrap().quantiles[0].value - 1.959_964).abs() < 0.02);
        let ci95 = credible_interval(&d, Param::Theta(0), 0.95).unwrap();
        assert!((ci95.lower + 1.959_964).abs() < 0.03 && (ci95.upper - 1.959_964).abs() < 0.03);
        let ci99 = credible_interval(&d, Param::Theta(0), 0.99).unwrap();
        assert!(ci99.lower <= ci95.lower && ci95.upper <= ci99.upper);
    }

    #[test]
    fn invalid_levels_and_empty_input() {
        let d = scalar_draws(&[1.0, 2.0]);
        for l in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(credible_interval(&d, Param::Theta(0), l).is_err());
        }
        assert!(summarize_columns::<f64>(&[], &[0.5]).is_err());
        assert!(PosteriorDraws::<f64>::new(vec![], ModelKind::Stk1, 1, 0, 0).is_err());
    }

    #[test]
    fn interval_endpoints_equal_summary_quantiles() {
        let d = normal_draws(1_001, 4);
        for level in [0.5, 0.8, 0.95, 0.99] {
            let (lo, hi) = tail_levels(level);
            let s = summarize(&d, &[lo, hi]).unwrap();
            let q = &s.get("theta_1").unwrap().quantiles;
            let ci = credible_interval(&d, Param::Theta(0), level).unwrap();
            assert_eq!(ci.lower, q[0].value);
            assert_eq!(ci.upper, q[1].value);
        }
    }

    proptest! {
        #[test]
        fn quantiles_are_monotone(xs in prop::collection::vec(-1e6..1e6f64, 1..200), l1 in 0.0..1.0f64, l2 in 0.0..1.0f64) {
            let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
            let s = summarize_column("x", &xs, &[lo, hi]).unwrap();
            prop_assert!(s.quantiles[0].value <= s.quantiles[1].value);
            prop_assert!(s.sd >= 0.0);
        }
    }

    fn one_area(x: f64, s2: f64, n: usize, z: Vec<f64>, w: Vec<f64>) -> AreaObservation<f64> {
        AreaObservation::new(x, s2, n, z, w).unwrap()
    }

    #[test]
    fn yc_closed_form() {
        let d = Dataset::new(vec![one_area(0.0, 0.8, 6, vec![1.0], vec![])]).unwrap();
        let spec = ModelSpec::with_defaults(ModelKind::Yc, &d);
        let phi = Phi {
            beta: vec![0.0],
            tau2: 0.4,
            gamma: None,
            eta: vec![],
            sigma2: Some(vec![0.6]),
        };
        let got = marginal_log_likelihood(&phi, &d, &spec).unwrap();
        let g = GammaParams::new(2.5, 2.5 / 0.6).unwrap();
        let want = logpdf_normal(0.0, 0.0, 1.0) + logpdf_gamma(0.8, &g);
        assert!((got - want).abs() < 1e-12 * want.abs());
        // direct density evaluation: S2 ~ Gamma(k, k/s) with k = (n-1)/2
        let k: f64 = 2.5;
        let rate: f64 = k / 0.6;
        let direct = -0.5 * (2.0 * std::f64::consts::PI).ln()
            + k * rate.ln() - statrs::function::gamma::ln_gamma(k) + (k - 1.0) * 0.8f64.ln() - rate * 0.8;
        assert!((got - direct).abs() < 1e-12 * direct.abs());
    }

    #[test]
    fn wrong_phi_shape_rejected() {
        let d = Dataset::new(vec![one_area(0.0, 0.8, 6, vec![1.0], vec![]); 3]).unwrap();
        let spec = ModelSpec::with_defaults(ModelKind::Stk1, &d);
        let phi = Phi { beta: vec![0.0], tau2: 1.0, gamma: None, eta: vec![], sigma2: Some(vec![1.0; 3]) };
        assert!(matches!(marginal_log_likelihood(&phi, &d, &spec), Err(Error::DimensionMismatch(_))));
    }

    /// Monte Carlo oracle: average of N(X; mu, tau2 + s) Gamma(S2; ...) over prior draws of s.
    fn mc_oracle(area: &AreaObservation<f64>, mu: f64, tau2: f64, a: f64, scale: f64, n: usize, seed: u64) -> (f64, f64) {
        let prior = InverseGammaParams::new(a, scale).unwrap();
        let k = 0.5 * (area.n as f64 - 1.0);
        let mut rng = seeded(seed);
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let s = sample_inverse_gamma(&prior, &mut rng);
            let g = GammaParams::new(k, k / s).unwrap();
            let v = (logpdf_normal(area.x, mu, tau2 + s) + logpdf_gamma(area.s2, &g)).exp();
            sum += v;
            sum2 += v * v;
        }
        let mean = sum / n as f64;
        let var = (sum2 / n as f64 - mean * mean) * n as f64 / (n as f64 - 1.0);
        (mean, (var / n as f64).sqrt())
    }

    #[test]
    fn stk1_quadrature_matches_monte_carlo() {
        let mut rng = seeded(77);
        for point in 0..3 {
            let n = 3 + point * 2;
            let area = one_area(rng.random_range(-2.0..2.0), rng.random_range(0.2..3.0), n, vec![1.0], vec![]);
            let d = Dataset::new(vec![area.clone()]).unwrap();
            let spec = ModelSpec::with_defaults(ModelKind::Stk1, &d);
            let (beta, tau2, gamma) = (rng.random_range(-1.0..1.0), rng.random_range(0.3..2.0), rng.random_range(1.0..10.0));
            let phi = Phi { beta: vec![beta], tau2, gamma: Some(gamma), eta: vec![], sigma2: None };
            let ll = marginal_log_likelihood(&phi, &d, &spec).unwrap();
            let (mc, se) = mc_oracle(&area, beta, tau2, 2.0, gamma / n as f64, 200_000, point as u64);
            assert!((ll.exp() - mc).abs() < 3.0 * se, "point {point}: quad {} mc {mc} se {se}", ll.exp());
        }
    }

    #[test]
    fn additive_over_areas() {
        let a1 = one_area(1.2, 0.7, 5, vec![1.0, 2.0], vec![0.5]);
        let a2 = one_area(-0.3, 2.1, 9, vec![1.0, 4.0], vec![1.5]);
        for kind in [ModelKind::Stk1, ModelKind::Stk2] {
            let both = Dataset::new(vec![a1.clone(), a2.clone()]).unwrap();
            let spec = ModelSpec::with_defaults(kind, &both);
            let phi = Phi { beta: vec![0.2, 0.3], tau2: 0.8, gamma: Some(3.0), eta: if kind == ModelKind::Stk2 { vec![0.4] } else { vec![] }, sigma2: None };
            let total = marginal_log_likelihood(&phi, &both, &spec).unwrap();
            let mut parts = 0.0;
            for (i, a) in [a1.clone(), a2.clone()].into_iter().enumerate() {
                let d = Dataset::new(vec![a]).unwrap();
                let s = ModelSpec::new(kind, HyperParams::new(vec![spec.hyper.a[i]], vec![spec.hyper.b[i]]).unwrap());
                let eval = MarginalLikelihood { data: &d, spec: &s, bounds: MarginalLikelihood::new(&both, &spec).unwrap().bounds[i..=i].to_vec() };
                parts += eval.area_log_likelihood(&phi, 0).unwrap();
            }
            assert!((total - parts).abs() < 1e-10, "{kind}: {total} vs {parts}");
        }
    }

    #[test]
    fn gamma_grid_is_smooth() {
        let d = Dataset::new(vec![one_area(0.5, 1.0, 7, vec![1.0], vec![])]).unwrap();
        let spec = ModelSpec::with_defaults(ModelKind::Stk1, &d);
        let vals: Vec<f64> = (1..40)
            .map(|j| {
                let phi = Phi { beta: vec![0.0], tau2: 1.0, gamma: Some(0.5 * j as f64), eta: vec![], sigma2: None };
                marginal_log_likelihood(&phi, &d, &spec).unwrap()
            })
            .collect();
        assert!(vals.iter().all(|v| v.is_finite()));
        // unimodal in gamma: increments change sign at most once
        let signs: Vec<bool> = vals.windows(2).map(|w| w[1] > w[0]).collect();
        let changes = signs.windows(2).filter(|s| s[0] != s[1]).count();
        assert!(changes <= 1, "{vals:?}");
    }

    #[test]
    fn sharp_likelihood_large_n() {
        let d = Dataset::new(vec![one_area(0.1, 1e-4, 20_000, vec![1.0], vec![])]).unwrap();
        let spec = ModelSpec::with_defaults(ModelKind::Stk1, &d);
        let phi = Phi { beta: vec![0.0], tau2: 0.5, gamma: Some(2.0), eta: vec![], sigma2: None };
        let v = marginal_log_likelihood(&phi, &d, &spec).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn dic_of_constant_draws_is_the_deviance() {
        let areas: Vec<_> = (0..6)
            .map(|i| one_area(i as f64 * 0.3, 0.5 + 0.1 * i as f64, 5, vec![1.0, i as f64], vec![]))
            .collect();
        let d = Dataset::new(areas).unwrap();
        let spec = ModelSpec::with_defaults(ModelKind::Stk1, &d);
        let state = ParameterState {
            theta: vec![0.0; 6],
            sigma2: vec![1.0; 6],
            beta: vec![0.1, 0.2],
            tau2: 0.7,
            gamma: 4.0,
            eta: vec![],
        };
        let draws = PosteriorDraws::new(vec![state.clone(); 5], ModelKind::Stk1, 6, 2, 0).unwrap();
        let r = dic(&draws, &d, &spec).unwrap();
        let dev = -2.0 * marginal_log_likelihood(&Phi::from_state(&state, ModelKind::Stk1), &d, &spec).unwrap();
        assert!((r.dic - dev).abs() < 1e-9 * dev.abs());
        assert!((r.mean_deviance - dev).abs() < 1e-9 * dev.abs());
        assert!(r.effective_parameters.abs() < 1e-9);
    }

    #[test]
    fn phi_mean_is_componentwise() {
        let s1 = ParameterState { theta: vec![0.0], sigma2: vec![1.0], beta: vec![1.0], tau2: 1.0, gamma: 2.0, eta: vec![] };
        let s2 = ParameterState { theta: vec![0.0], sigma2: vec![3.0], beta: vec![3.0], tau2: 3.0, gamma: 4.0, eta: vec![] };
        let yc = Phi::mean_of(&[Phi::from_state(&s1, ModelKind::Yc), Phi::from_state(&s2, ModelKind::Yc)]).unwrap();
        assert_eq!(yc.sigma2, Some(vec![2.0]));
        assert_eq!(yc.gamma, None);
        let stk = Phi::mean_of(&[Phi::from_state(&s1, ModelKind::Stk1), Phi::from_state(&s2, ModelKind::Stk1)]).unwrap();
        assert_eq!((stk.beta[0], stk.tau2, stk.gamma), (2.0, 2.0, Some(3.0)));
    }
}
