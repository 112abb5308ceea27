//! Globally adaptive Gauss–Kronrod (7/15) quadrature on a finite interval.

use std::collections::BinaryHeap;
use std::cmp::Ordering;

use crate::real::Real;

const KRONROD_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult<T> {
    pub value: T,
    pub error: T,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct QuadratureError(pub String);

struct Segment<T> {
    lo: T,
    hi: T,
    value: T,
    error: T,
}

impl<T: Real> PartialEq for Segment<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T: Real> Eq for Segment<T> {}
impl<T: Real> PartialOrd for Segment<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Segment<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .partial_cmp(&other.error)
            .unwrap_or(Ordering::Equal)
    }
}

fn gauss_kronrod<T: Real, F: FnMut(T) -> T>(f: &mut F, lo: T, hi: T) -> (T, T) {
    let half = T::lit(0.5);
    let center = half * (lo + hi);
    let radius = half * (hi - lo);
    let fc = f(center);
    let mut kronrod = fc * T::lit(KRONROD_WEIGHTS[7]);
    let mut gauss = fc * T::lit(GAUSS_WEIGHTS[3]);
    for j in 0..7 {
        let dx = radius * T::lit(KRONROD_NODES[j]);
        let pair = f(center - dx) + f(center + dx);
        kronrod = kronrod + pair * T::lit(KRONROD_WEIGHTS[j]);
        if j % 2 == 1 {
            gauss = gauss + pair * T::lit(GAUSS_WEIGHTS[j / 2]);
        }
    }
    let value = kronrod * radius;
    let error = ((kronrod - gauss) * radius).abs();
    (value, error)
}

/// Integrates `f` over `[lo, hi]`, bisecting the segment with the largest
/// error estimate until the total estimate is below
/// `max(abs_tol, rel_tol * |integral|)`.
pub fn integrate<T: Real, F: FnMut(T) -> T>(
    f: F,
    lo: T,
    hi: T,
    rel_tol: T,
    abs_tol: T,
    max_segments: usize,
) -> Result<QuadResult<T>, QuadratureError> {
    integrate_with_breaks(f, &[lo, hi], rel_tol, abs_tol, max_segments)
}

/// As [`integrate`], starting from the partition given by the sorted
/// `breaks` (first and last entries are the integration limits). Breaks at a
/// few widths either side of a sharp peak keep the first-pass rule from
/// stepping over it.
pub fn integrate_with_breaks<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    breaks: &[T],
    rel_tol: T,
    abs_tol: T,
    max_segments: usize,
) -> Result<QuadResult<T>, QuadratureError> {
    if breaks.len() < 2
        || breaks.iter().any(|b| !b.is_finite())
        || breaks.windows(2).any(|w| w[1] < w[0])
    {
        return Err(QuadratureError(format!(
            "breakpoints must be finite and sorted, got {} points",
            breaks.len()
        )));
    }
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    for w in breaks.windows(2) {
        if w[1] == w[0] {
            continue;
        }
        let (value, error) = gauss_kronrod(&mut f, w[0], w[1]);
        evaluations += 15;
        heap.push(Segment { lo: w[0], hi: w[1], value, error });
    }
    if heap.is_empty() {
        return Ok(QuadResult { value: T::zero(), error: T::zero(), evaluations });
    }
    let mut total: T = heap.iter().map(|s| s.value).sum();
    let mut total_err: T = heap.iter().map(|s| s.error).sum();
    loop {
        if !total.is_finite() || !total_err.is_finite() {
            return Err(QuadratureError(format!(
                "non-finite integrand estimate ({total} +/- {total_err})"
            )));
        }
        if total_err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(QuadResult {
                value: total,
                error: total_err,
                evaluations,
            });
        }
        if heap.len() >= max_segments {
            return Err(QuadratureError(format!(
                "no convergence after {max_segments} segments (estimate {total}, error {total_err})"
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = T::lit(0.5) * (worst.lo + worst.hi);
        let (lv, le) = gauss_kronrod(&mut f, worst.lo, mid);
        let (rv, re) = gauss_kronrod(&mut f, mid, worst.hi);
        evaluations += 30;
        total = total - worst.value + lv + rv;
        total_err = total_err - worst.error + le + re;
        heap.push(Segment { lo: worst.lo, hi: mid, value: lv, error: le });
        heap.push(Segment { lo: mid, hi: worst.hi, value: rv, error: re });
        // Running sums drift; resum occasionally.
        if heap.len() % 64 == 0 {
            total = heap.iter().map(|s| s.value).sum();
            total_err = heap.iter().map(|s| s.error).sum();
        }
    }
}
