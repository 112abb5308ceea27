//! Area-level data, hyperparameters, and the posterior propriety checks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::numerical_rank;
use crate::real::Real;

/// Relative singular-value cutoff used to decide `rank(Z)`.
pub const RANK_REL_TOL: f64 = 1e-10;

/// Direct estimates and covariates for one small area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaObservation<T> {
    /// Direct estimate of the area mean.
    pub x: T,
    /// Direct estimate of the sampling variance of `x`.
    pub s2: T,
    /// Area sample size.
    pub n: usize,
    /// Mean covariates (length p).
    pub z: Vec<T>,
    /// Variance covariates (length q, possibly empty).
    pub w: Vec<T>,
}

impl<T: Real> AreaObservation<T> {
    pub fn new(x: T, s2: T, n: usize, z: Vec<T>, w: Vec<T>) -> Result<Self> {
        let area = Self { x, s2, n, z, w };
        area.validate()?;
        Ok(area)
    }

    fn validate(&self) -> Result<()> {
        if !self.x.is_finite() {
            return Err(Error::InvalidData(format!("x must be finite, got {}", self.x)));
        }
        if !(self.s2.is_finite() && self.s2 > T::zero()) {
            return Err(Error::InvalidData(format!(
                "s2 must be positive and finite, got {}",
                self.s2
            )));
        }
        if self.n < 2 {
            return Err(Error::InvalidData(format!(
                "sample size must satisfy n_i>1, got {}",
                self.n
            )));
        }
        if self.z.iter().chain(&self.w).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("covariates must be finite".into()));
        }
        Ok(())
    }
}

/// The observed data for all `m` areas.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset<T> {
    areas: Vec<AreaObservation<T>>,
    p: usize,
    q: usize,
}

impl<T: Real> Dataset<T> {
    pub fn new(areas: Vec<AreaObservation<T>>) -> Result<Self> {
        let first = areas
            .first()
            .ok_or_else(|| Error::InvalidData("dataset needs at least one area".into()))?;
        let (p, q) = (first.z.len(), first.w.len());
        for (i, area) in areas.iter().enumerate() {
            area.validate()
                .map_err(|e| Error::InvalidData(format!("area {}: {e}", i + 1)))?;
            if area.z.len() != p || area.w.len() != q {
                return Err(Error::DimensionMismatch(format!(
                    "area {} has (p, q) = ({}, {}), expected ({p}, {q})",
                    i + 1,
                    area.z.len(),
                    area.w.len()
                )));
            }
        }
        Ok(Self { areas, p, q })
    }

    pub fn areas(&self) -> &[AreaObservation<T>] {
        &self.areas
    }

    pub fn m(&self) -> usize {
        self.areas.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.areas.iter().map(|a| a.n).collect()
    }

    pub fn z_rows(&self) -> Vec<Vec<T>> {
        self.areas.iter().map(|a| a.z.clone()).collect()
    }

    pub fn w_rows(&self) -> Vec<Vec<T>> {
        self.areas.iter().map(|a| a.w.clone()).collect()
    }

    pub fn view(&self) -> DesignView<'_, T> {
        DesignView {
            sizes: self.sizes(),
            z: self.areas.iter().map(|a| a.z.as_slice()).collect(),
            w: self.areas.iter().map(|a| a.w.as_slice()).collect(),
            p: self.p,
            q: self.q,
        }
    }
}

/// Per-area prior constants `a_i`, `b_i` of `sigma_i^2 ~ IG(a_i, b_i * gamma)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams<T> {
    pub a: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Real> HyperParams<T> {
    pub fn new(a: Vec<T>, b: Vec<T>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "a has length {}, b has length {}",
                a.len(),
                b.len()
            )));
        }
        if a.iter().chain(&b).any(|v| !(v.is_finite() && *v > T::zero())) {
            return Err(Error::Parameter("hyperparameters a_i, b_i must be positive".into()));
        }
        Ok(Self { a, b })
    }

    /// `a_i = 2`, `b_i = 1 / n_i`.
    pub fn default_for_sizes(sizes: &[usize]) -> Self {
        Self {
            a: vec![T::lit(2.0); sizes.len()],
            b: sizes.iter().map(|&n| T::one() / T::count(n)).collect(),
        }
    }

    pub fn from_rule(a: f64, b: BRule, sizes: &[usize]) -> Result<Self> {
        let b = match b {
            BRule::InverseN => sizes.iter().map(|&n| T::one() / T::count(n)).collect(),
            BRule::Const(v) => vec![T::lit(v); sizes.len()],
        };
        Self::new(vec![T::lit(a); sizes.len()], b)
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

pub fn default_hyperparams<T: Real>(dataset: &Dataset<T>) -> HyperParams<T> {
    HyperParams::default_for_sizes(&dataset.sizes())
}

/// How `b_i` is derived from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BRule {
    /// `b_i = 1 / n_i`.
    InverseN,
    /// `b_i = v` for every area.
    Const(f64),
}

impl FromStr for BRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "inverse-n" {
            return Ok(BRule::InverseN);
        }
        if let Some(v) = s.strip_prefix("const:") {
            let v: f64 = v
                .parse()
                .map_err(|_| Error::Parameter(format!("bad b-rule constant {v:?}")))?;
            if v.is_finite() && v > 0.0 {
                return Ok(BRule::Const(v));
            }
        }
        Err(Error::Parameter(format!(
            "b-rule must be 'inverse-n' or 'const:<positive value>', got {s:?}"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Inverse-gamma variance prior with a common scale `gamma`.
    Stk1,
    /// As `Stk1`, with the prior scale modulated by `exp(w_i' eta)`.
    Stk2,
    /// Flat prior on each sampling variance (no variance shrinkage).
    Yc,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Stk1, ModelKind::Stk2, ModelKind::Yc];

    pub fn id(self) -> u64 {
        match self {
            ModelKind::Stk1 => 1,
            ModelKind::Stk2 => 2,
            ModelKind::Yc => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Stk1 => "stk1",
            ModelKind::Stk2 => "stk2",
            ModelKind::Yc => "yc",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name().to_uppercase())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stk1" => Ok(ModelKind::Stk1),
            "stk2" => Ok(ModelKind::Stk2),
            "yc" => Ok(ModelKind::Yc),
            _ => Err(Error::Parameter(format!(
                "unknown model {s:?} (expected stk1, stk2 or yc)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec<T> {
    pub kind: ModelKind,
    /// Ignored by `Yc`.
    pub hyper: HyperParams<T>,
}

impl<T: Real> ModelSpec<T> {
    pub fn new(kind: ModelKind, hyper: HyperParams<T>) -> Self {
        Self { kind, hyper }
    }

    pub fn with_defaults(kind: ModelKind, dataset: &Dataset<T>) -> Self {
        Self::new(kind, default_hyperparams(dataset))
    }

    /// Structural checks that make the model unusable regardless of the
    /// propriety conditions: hyperparameter length, and for `Stk2` a
    /// non-empty set of non-constant variance covariates (a constant column
    /// cannot be told apart from `gamma`).
    pub fn validate_for(&self, dataset: &Dataset<T>) -> Result<()> {
        if self.hyper.len() != dataset.m() {
            return Err(Error::DimensionMismatch(format!(
                "hyperparameters cover {} areas, dataset has {}",
                self.hyper.len(),
                dataset.m()
            )));
        }
        if self.kind == ModelKind::Stk2 {
            if dataset.q() == 0 {
                return Err(Error::InvalidData(
                    "STK2 needs at least one variance covariate (w1..wq)".into(),
                ));
            }
            for k in 0..dataset.q() {
                let first = dataset.areas()[0].w[k];
                if dataset.areas().iter().all(|a| a.w[k] == first) {
                    return Err(Error::InvalidData(format!(
                        "variance covariate w{} is constant; it is not identifiable against gamma",
                        k + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Borrowed design information, decoupled from `Dataset` so that inputs
/// which fail `Dataset` validation (e.g. `n_i = 1`) can still be diagnosed.
#[derive(Debug, Clone)]
pub struct DesignView<'a, T> {
    pub sizes: Vec<usize>,
    pub z: Vec<&'a [T]>,
    pub w: Vec<&'a [T]>,
    pub p: usize,
    pub q: usize,
}

/// One failed sufficient condition for posterior propriety or finite variance.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TooFewAreas { m: usize, p: usize },
    TooFewAreasForVariance { m: usize, p: usize },
    SampleSize { area: usize, n: usize },
    RankDeficient { rank: usize, p: usize },
    SignCondition { k: usize, t: i8 },
}

impl Violation {
    /// Short condition label, e.g. `"m>p+2"`.
    pub fn name(&self) -> &'static str {
        match self {
            Violation::TooFewAreas { .. } => "m>p+2",
            Violation::TooFewAreasForVariance { .. } => "m>p+6",
            Violation::SampleSize { .. } => "n_i>1",
            Violation::RankDeficient { .. } => "rank(Z)=p",
            Violation::SignCondition { .. } => "t_k=1",
        }
    }

    /// Whether this violation breaks propriety, or only the finite-variance guarantee.
    pub fn affects_propriety(&self) -> bool {
        !matches!(self, Violation::TooFewAreasForVariance { .. })
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewAreas { m, p } => write!(f, "m>p+2 fails: m = {m}, p = {p}"),
            Violation::TooFewAreasForVariance { m, p } => {
                write!(f, "m>p+6 fails: m = {m}, p = {p}")
            }
            Violation::SampleSize { area, n } => write!(f, "n_i>1 fails: area {area} has n = {n}"),
            Violation::RankDeficient { rank, p } => {
                write!(f, "rank(Z)=p fails: rank = {rank}, p = {p}")
            }
            Violation::SignCondition { k, t } => write!(f, "t_k=1 fails: t_{k} = {t}"),
        }
    }
}

impl Serialize for Violation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Violation", 2)?;
        st.serialize_field("condition", self.name())?;
        st.serialize_field("detail", &self.to_string())?;
        st.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub proper: bool,
    pub finite_variance: bool,
    pub violations: Vec<Violation>,
    /// Sign products `t_k` (empty unless the model is `Stk2`).
    pub t: Vec<i8>,
}

impl ConditionReport {
    pub fn has(&self, name: &str) -> bool {
        self.violations.iter().any(|v| v.name() == name)
    }

    pub fn describe(&self) -> String {
        if self.violations.is_empty() {
            return "all conditions hold".into();
        }
        self.violations
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("; ")
    }
}

fn sign<T: Real>(v: T) -> i8 {
    if v > T::zero() {
        1
    } else if v < T::zero() {
        -1
    } else {
        0
    }
}

/// `t_k = sgn(sum_i a_i w_ik) * sgn(sum_i n_i w_ik)` for each variance covariate.
pub fn compute_t_raw<T: Real>(a: &[T], sizes: &[usize], w: &[&[T]], q: usize) -> Vec<i8> {
    (0..q)
        .map(|k| {
            let aw: T = a.iter().zip(w).map(|(&ai, wi)| ai * wi[k]).sum();
            let nw: T = sizes.iter().zip(w).map(|(&ni, wi)| T::count(ni) * wi[k]).sum();
            sign(aw) * sign(nw)
        })
        .collect()
}

pub fn compute_t<T: Real>(dataset: &Dataset<T>, hyper: &HyperParams<T>) -> Vec<i8> {
    let view = dataset.view();
    compute_t_raw(&hyper.a, &view.sizes, &view.w, view.q)
}

/// Evaluates the sufficient conditions for propriety and finite posterior
/// variances on raw design inputs. Never fails; every broken condition is
/// listed in the report.
pub fn check_design<T: Real>(view: &DesignView<'_, T>, kind: ModelKind, a: &[T]) -> ConditionReport {
    let m = view.sizes.len();
    let p = view.p;
    let mut violations = Vec::new();
    if m <= p + 2 {
        violations.push(Violation::TooFewAreas { m, p });
    }
    if m <= p + 6 {
        violations.push(Violation::TooFewAreasForVariance { m, p });
    }
    for (i, &n) in view.sizes.iter().enumerate() {
        if n <= 1 {
            violations.push(Violation::SampleSize { area: i + 1, n });
        }
    }
    let z_rows: Vec<Vec<T>> = view.z.iter().map(|r| r.to_vec()).collect();
    let rank = if p == 0 { 0 } else { numerical_rank(&z_rows, p, RANK_REL_TOL) };
    if rank != p {
        violations.push(Violation::RankDeficient { rank, p });
    }
    let t = if kind == ModelKind::Stk2 {
        let t = compute_t_raw(a, &view.sizes, &view.w, view.q);
        for (k, &tk) in t.iter().enumerate() {
            if tk != 1 {
                violations.push(Violation::SignCondition { k: k + 1, t: tk });
            }
        }
        t
    } else {
        Vec::new()
    };
    let proper = !violations.iter().any(Violation::affects_propriety);
    let finite_variance = proper && violations.is_empty();
    ConditionReport {
        proper,
        finite_variance,
        violations,
        t,
    }
}

pub fn check_conditions<T: Real>(dataset: &Dataset<T>, spec: &ModelSpec<T>) -> ConditionReport {
    check_design(&dataset.view(), spec.kind, &spec.hyper.a)
}
