//! Sampling and log densities for the four families the model uses.
//!
//! Parameterizations:
//! - `Gamma(shape, rate)`: density proportional to `x^(shape-1) exp(-rate x)`.
//! - `InverseGamma(shape, scale)`: density proportional to `x^(-shape-1) exp(-scale / x)`.
//!   `X ~ IG(shape, scale)` iff `1/X ~ Gamma(shape, rate = scale)`.
//! - `Normal(mean, variance)`.
//! - `Mvn(mean, covariance)`.

use rand::Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, SquareMatrix};
use crate::real::Real;

fn positive_finite<T: Real>(what: &str, v: T) -> Result<T> {
    if v.is_finite() && v > T::zero() {
        Ok(v)
    } else {
        Err(Error::Parameter(format!("{what} must be positive and finite, got {v}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams<T> {
    shape: T,
    rate: T,
}

impl<T: Real> GammaParams<T> {
    pub fn new(shape: T, rate: T) -> Result<Self> {
        Ok(Self {
            shape: positive_finite("gamma shape", shape)?,
            rate: positive_finite("gamma rate", rate)?,
        })
    }

    pub fn shape(&self) -> T {
        self.shape
    }

    pub fn rate(&self) -> T {
        self.rate
    }

    pub fn mean(&self) -> T {
        self.shape / self.rate
    }

    pub fn variance(&self) -> T {
        self.shape / (self.rate * self.rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseGammaParams<T> {
    shape: T,
    scale: T,
}

impl<T: Real> InverseGammaParams<T> {
    pub fn new(shape: T, scale: T) -> Result<Self> {
        Ok(Self {
            shape: positive_finite("inverse gamma shape", shape)?,
            scale: positive_finite("inverse gamma scale", scale)?,
        })
    }

    pub fn shape(&self) -> T {
        self.shape
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    /// `scale / (shape - 1)`, or `None` when `shape <= 1`.
    pub fn mean(&self) -> Option<T> {
        (self.shape > T::one()).then(|| self.scale / (self.shape - T::one()))
    }

    /// The gamma law of the reciprocal.
    pub fn reciprocal(&self) -> GammaParams<T> {
        GammaParams {
            shape: self.shape,
            rate: self.scale,
        }
    }
}

/// Multivariate normal with a pre-factorized covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct MvnParams<T> {
    mean: Vec<T>,
    chol: Cholesky<T>,
}

impl<T: Real> MvnParams<T> {
    pub fn new(mean: Vec<T>, covariance: SquareMatrix<T>) -> Result<Self> {
        if covariance.dim() != mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "mean has length {} but covariance is {}x{}",
                mean.len(),
                covariance.dim(),
                covariance.dim()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("mvn mean must be finite".into()));
        }
        let tol = T::lit(1e-10).max(T::lit(16.0) * T::epsilon());
        if !covariance.is_symmetric(tol) {
            return Err(Error::Factorization("covariance is not symmetric".into()));
        }
        let chol = Cholesky::new(&covariance)?;
        Ok(Self { mean, chol })
    }

    /// Builds directly from a mean and a lower Cholesky factor of the covariance.
    pub fn from_cholesky(mean: Vec<T>, chol: Cholesky<T>) -> Self {
        Self { mean, chol }
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[inline]
pub fn standard_normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(rng.sample::<f64, _>(StandardNormal))
}

/// Uniform on the open interval (0, 1).
#[inline]
pub fn open_uniform<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(rng.sample::<f64, _>(Open01))
}

pub fn sample_normal<T: Real, R: Rng + ?Sized>(mean: T, variance: T, rng: &mut R) -> T {
    mean + variance.sqrt() * standard_normal::<T, R>(rng)
}

/// Gamma(shape, 1) by Marsaglia and Tsang's squeeze-rejection method; shapes
/// below one are boosted through `G(a) = G(a + 1) U^(1/a)`.
fn sample_unit_gamma<T: Real, R: Rng + ?Sized>(shape: T, rng: &mut R) -> T {
    if shape < T::one() {
        let boosted = sample_unit_gamma(shape + T::one(), rng);
        let u: T = open_uniform(rng);
        let v = boosted * (u.ln() / shape).exp();
        return v.max(T::min_positive_value());
    }
    let third = T::one() / T::lit(3.0);
    let d = shape - third;
    let c = third / d.sqrt();
    loop {
        let x: T = standard_normal(rng);
        let v = T::one() + c * x;
        if v <= T::zero() {
            continue;
        }
        let v = v * v * v;
        let u: T = open_uniform(rng);
        let x2 = x * x;
        if u < T::one() - T::lit(0.0331) * x2 * x2 {
            return d * v;
        }
        if u.ln() < T::lit(0.5) * x2 + d * (T::one() - v + v.ln()) {
            return d * v;
        }
    }
}

pub fn sample_gamma<T: Real, R: Rng + ?Sized>(params: &GammaParams<T>, rng: &mut R) -> T {
    sample_unit_gamma(params.shape, rng) / params.rate
}

pub fn sample_inverse_gamma<T: Real, R: Rng + ?Sized>(
    params: &InverseGammaParams<T>,
    rng: &mut R,
) -> T {
    T::one() / sample_gamma(&params.reciprocal(), rng)
}

pub fn sample_mvn<T: Real, R: Rng + ?Sized>(params: &MvnParams<T>, rng: &mut R) -> Vec<T> {
    let eps: Vec<T> = (0..params.dim()).map(|_| standard_normal(rng)).collect();
    params
        .chol
        .mul_lower(&eps)
        .into_iter()
        .zip(&params.mean)
        .map(|(dev, &mu)| mu + dev)
        .collect()
}

pub fn ln_gamma<T: Real>(x: T) -> T {
    T::lit(statrs::function::gamma::ln_gamma(x.as_f64()))
}

pub fn logpdf_normal<T: Real>(x: T, mean: T, variance: T) -> T {
    let half = T::lit(0.5);
    let d = x - mean;
    -half * (T::TAU() * variance).ln() - half * d * d / variance
}

pub fn logpdf_gamma<T: Real>(x: T, params: &GammaParams<T>) -> T {
    if !(x > T::zero()) || x.is_infinite() {
        return T::neg_infinity();
    }
    let (a, r) = (params.shape, params.rate);
    a * r.ln() - ln_gamma(a) + (a - T::one()) * x.ln() - r * x
}

pub fn logpdf_inverse_gamma<T: Real>(x: T, params: &InverseGammaParams<T>) -> T {
    if !(x > T::zero()) || x.is_infinite() {
        return T::neg_infinity();
    }
    let (a, b) = (params.shape, params.scale);
    a * b.ln() - ln_gamma(a) - (a + T::one()) * x.ln() - b / x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use crate::rng::seeded;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn gamma_with_unit_shape_is_exponential() {
        let p = GammaParams::new(1.0, 2.0).unwrap();
        let mut rng = seeded(1);
        let xs: Vec<f64> = (0..100_000).map(|_| sample_gamma(&p, &mut rng)).collect();
        let (mean, _) = moments(&xs);
        // sd of Exp(2) is 0.5
        let se = 0.5 / (xs.len() as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn gamma_moments() {
        let p = GammaParams::new(3.0, 1.5).unwrap();
        let mut rng = seeded(2);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_gamma(&p, &mut rng)).collect();
        let (mean, var) = moments(&xs);
        let true_var = 4.0 / 3.0;
        assert!((mean - 2.0).abs() < 4.0 * (true_var / n as f64).sqrt());
        // Var(s^2) ~= (mu4 - sigma^4) / n; gamma excess kurtosis is 6/shape.
        let mu4 = (3.0 + 6.0 / 3.0) * true_var * true_var;
        let se_var = ((mu4 - true_var * true_var) / n as f64).sqrt();
        assert!((var - true_var).abs() < 4.0 * se_var, "var {var}");
    }

    #[test]
    fn gamma_small_shape_mean() {
        let p = GammaParams::new(0.3, 1.0).unwrap();
        let mut rng = seeded(3);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_gamma(&p, &mut rng)).collect();
        assert!(xs.iter().all(|&x| x > 0.0));
        let (mean, _) = moments(&xs);
        assert!((mean - 0.3).abs() < 4.0 * (0.3_f64 / n as f64).sqrt());
    }

    #[test]
    fn invalid_gamma_parameters() {
        assert!(matches!(GammaParams::new(0.0, 1.0), Err(Error::Parameter(_))));
        assert!(GammaParams::new(1.0, f64::NAN).is_err());
        assert!(GammaParams::new(1.0, -2.0).is_err());
        assert!(InverseGammaParams::new(f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn inverse_gamma_mean_and_reciprocal() {
        let p = InverseGammaParams::new(2.0, 3.0).unwrap();
        let mut rng = seeded(4);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_inverse_gamma(&p, &mut rng)).collect();
        // IG(2, 3) has no finite variance, so the SE here is the sample one.
        let (mean, sample_var) = moments(&xs);
        let sample_se = (sample_var / n as f64).sqrt();
        let recips: Vec<f64> = xs.iter().map(|x| 1.0 / x).collect();
        let (rm, rv) = moments(&recips);
        let g = p.reciprocal();
        assert!((rm - g.mean()).abs() < 4.0 * (g.variance() / n as f64).sqrt());
        let mu4 = (3.0 + 6.0 / 2.0) * g.variance().powi(2);
        let se_var = ((mu4 - g.variance().powi(2)) / n as f64).sqrt();
        assert!((rv - g.variance()).abs() < 4.0 * se_var);
        assert!((mean - 3.0).abs() < 4.0 * sample_se, "mean {mean}");
    }

    #[test]
    fn inverse_gamma_mean_finite_variance_case() {
        let p = InverseGammaParams::new(6.0, 10.0).unwrap();
        let mut rng = seeded(5);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_inverse_gamma(&p, &mut rng)).collect();
        let (mean, _) = moments(&xs);
        let want = p.mean().unwrap();
        let var = want * want / (6.0 - 2.0);
        assert!((mean - want).abs() < 4.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn inverse_gamma_heavy_tail_still_samples() {
        let p = InverseGammaParams::new(0.5, 1.0).unwrap();
        assert_eq!(p.mean(), None);
        let mut rng = seeded(6);
        for _ in 0..10_000 {
            let x = sample_inverse_gamma(&p, &mut rng);
            assert!(x > 0.0);
        }
    }

    #[test]
    fn mvn_identity_moments() {
        let p = MvnParams::new(vec![0.0, 0.0], SquareMatrix::identity(2)).unwrap();
        let mut rng = seeded(7);
        let n = 100_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| sample_mvn(&p, &mut rng)).collect();
        let a: Vec<f64> = draws.iter().map(|d| d[0]).collect();
        let b: Vec<f64> = draws.iter().map(|d| d[1]).collect();
        let (_, va) = moments(&a);
        let (_, vb) = moments(&b);
        let cov = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / n as f64;
        // Var(s^2) = 2 / n for a standard normal; Var(xy) = 1.
        let se_var = (2.0 / n as f64).sqrt();
        assert!((va - 1.0).abs() < 4.0 * se_var);
        assert!((vb - 1.0).abs() < 4.0 * se_var);
        assert!(cov.abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn mvn_correlation() {
        let (v1, v2) = (2.0_f64, 0.5_f64);
        let c = 0.9 * (v1 * v2).sqrt();
        let cov = SquareMatrix::from_rows(&[vec![v1, c], vec![c, v2]]).unwrap();
        let p = MvnParams::new(vec![1.0, -1.0], cov).unwrap();
        let mut rng = seeded(8);
        let n = 100_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| sample_mvn(&p, &mut rng)).collect();
        let a: Vec<f64> = draws.iter().map(|d| d[0]).collect();
        let b: Vec<f64> = draws.iter().map(|d| d[1]).collect();
        let (ma, va) = moments(&a);
        let (mb, vb) = moments(&b);
        let cov = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / (n as f64 - 1.0);
        let corr = cov / (va * vb).sqrt();
        assert!((corr - 0.9).abs() < 0.02, "corr {corr}");
    }

    #[test]
    fn mvn_rejects_indefinite_covariance() {
        let cov = SquareMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(
            MvnParams::new(vec![0.0, 0.0], cov),
            Err(Error::Factorization(_))
        ));
        let asym = SquareMatrix::from_rows(&[vec![1.0, 0.2], vec![0.1, 1.0]]).unwrap();
        assert!(MvnParams::new(vec![0.0, 0.0], asym).is_err());
    }

    #[test]
    fn log_density_constants() {
        let v = logpdf_normal(0.0_f64, 0.0, 1.0);
        assert!((v + 0.918_938_533_204_672_7).abs() < 1e-15);
        for &r in &[0.5_f64, 1.0, 3.0] {
            let g = GammaParams::new(1.0, r).unwrap();
            for &x in &[0.1, 1.0, 4.0] {
                let want: f64 = r.ln() - r * x;
                assert!((logpdf_gamma(x, &g) - want).abs() < 1e-13);
            }
        }
        let ig = InverseGammaParams::new(2.0, 3.0).unwrap();
        assert_eq!(logpdf_inverse_gamma(-1.0, &ig), f64::NEG_INFINITY);
        assert_eq!(logpdf_inverse_gamma(0.0, &ig), f64::NEG_INFINITY);
        assert_eq!(logpdf_gamma(-1.0, &ig.reciprocal()), f64::NEG_INFINITY);
    }

    #[test]
    fn gamma_inverse_gamma_change_of_variables() {
        for &(s, r) in &[(0.5, 0.3), (2.0, 1.0), (7.5, 4.0), (30.0, 0.1)] {
            let g = GammaParams::new(s, r).unwrap();
            let ig = InverseGammaParams::new(s, r).unwrap();
            let mut x = 0.01_f64;
            while x < 50.0 {
                let lhs = logpdf_gamma(x, &g).exp();
                let rhs = logpdf_inverse_gamma(1.0 / x, &ig).exp() / (x * x);
                assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1e-300), "{s} {r} {x}");
                x *= 1.37;
            }
        }
    }

    #[test]
    fn densities_integrate_to_one() {
        let tol = 1e-6;
        let n = integrate(|x: f64| logpdf_normal(x, 1.5, 2.0).exp(), -40.0, 40.0, 1e-10, 1e-14, 400)
            .unwrap();
        assert!((n.value - 1.0).abs() < tol);
        // integrate in log space: x = e^u, dx = e^u du
        for &(s, r) in &[(0.7, 2.0), (3.0, 1.5), (12.0, 0.4)] {
            let g = GammaParams::new(s, r).unwrap();
            let v = integrate(|u: f64| (logpdf_gamma(u.exp(), &g) + u).exp(), -60.0, 10.0, 1e-10, 1e-14, 400)
                .unwrap();
            assert!((v.value - 1.0).abs() < tol, "gamma {s} {r}: {}", v.value);
            let ig = InverseGammaParams::new(s, r).unwrap();
            let v = integrate(|u: f64| (logpdf_inverse_gamma(u.exp(), &ig) + u).exp(), -10.0, 60.0, 1e-10, 1e-14, 400)
                .unwrap();
            assert!((v.value - 1.0).abs() < tol, "ig {s} {r}: {}", v.value);
        }
    }

    #[test]
    fn same_seed_same_draws() {
        let g = GammaParams::new(0.8, 1.0).unwrap();
        let a: Vec<f64> = {
            let mut rng = seeded(99);
            (0..100).map(|_| sample_gamma(&g, &mut rng)).collect()
        };
        let b: Vec<f64> = {
            let mut rng = seeded(99);
            (0..100).map(|_| sample_gamma(&g, &mut rng)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn f32_sampling_works() {
        let g = GammaParams::new(3.0_f32, 1.5).unwrap();
        let mut rng = seeded(10);
        let n = 50_000;
        let mean = (0..n).map(|_| sample_gamma(&g, &mut rng)).sum::<f32>() / n as f32;
        assert!((mean - 2.0).abs() < 0.03);
    }
}
