//! Special functions and adaptive quadrature used by the analytic layer.
//!
//! Everything here is a pure function of its arguments. Accuracy targets:
//! `ln_gamma` ~1e-14 relative, `reg_lower_gamma` ~1e-14 absolute,
//! `exp_integral_ei` ~1e-14 relative on the negative axis.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

const INCGAMMA_MAX_ITER: usize = 100_000;
const FPMIN: f64 = 1e-300;

/// Natural log of the Gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("ln_gamma requires x > 0, got {x}")));
    }
    Ok(lgamma(x))
}

pub(crate) fn lgamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection keeps the Lanczos sum in its accurate range
        return (PI / (PI * x).sin()).ln() - lgamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized lower incomplete gamma `P(k, x) = γ(k, x) / Γ(k)`.
pub fn reg_lower_gamma(k: f64, x: f64) -> Result<f64> {
    check_incgamma_args(k, x)?;
    Ok(inc_gamma_pq(k, x).0)
}

/// Regularized upper incomplete gamma `Q(k, x) = 1 - P(k, x)`.
pub fn reg_upper_gamma(k: f64, x: f64) -> Result<f64> {
    check_incgamma_args(k, x)?;
    Ok(inc_gamma_pq(k, x).1)
}

fn check_incgamma_args(k: f64, x: f64) -> Result<()> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::Domain(format!("incomplete gamma requires k > 0, got {k}")));
    }
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("incomplete gamma requires x >= 0, got {x}")));
    }
    Ok(())
}

/// Returns `(P, Q)`. Series below `x = k + 1`, Lentz continued fraction above.
pub(crate) fn inc_gamma_pq(k: f64, x: f64) -> (f64, f64) {
    if x == 0.0 {
        return (0.0, 1.0);
    }
    if x.is_infinite() {
        return (1.0, 0.0);
    }
    let log_prefactor = -x + k * x.ln() - lgamma(k);
    if x < k + 1.0 {
        let mut ap = k;
        let mut del = 1.0 / k;
        let mut sum = del;
        for _ in 0..INCGAMMA_MAX_ITER {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * f64::EPSILON {
                break;
            }
        }
        let p = (sum.ln() + log_prefactor).exp().min(1.0);
        (p, 1.0 - p)
    } else {
        let mut b = x + 1.0 - k;
        let mut c = 1.0 / FPMIN;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..INCGAMMA_MAX_ITER {
            let an = -(i as f64) * (i as f64 - k);
            b += 2.0;
            d = an * d + b;
            if d.abs() < FPMIN {
                d = FPMIN;
            }
            c = b + an / c;
            if c.abs() < FPMIN {
                c = FPMIN;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < f64::EPSILON {
                break;
            }
        }
        let q = (h.ln() + log_prefactor).exp().min(1.0);
        (1.0 - q, q)
    }
}

/// Exponential integral `Ei(x)` on the negative real axis.
///
/// Uses `Ei(x) = -E1(-x)`. `E1` is evaluated by its convergent series for
/// `|x| <= 1`, a continued fraction on `(1, 40]` and the asymptotic expansion
/// beyond.
pub fn exp_integral_ei(x: f64) -> Result<f64> {
    if !(x < 0.0) {
        return Err(Error::Domain(format!(
            "exp_integral_ei is only defined here for x < 0, got {x}"
        )));
    }
    if x == f64::NEG_INFINITY {
        return Ok(-0.0);
    }
    Ok(-expint_e1(-x))
}

pub(crate) fn expint_e1(y: f64) -> f64 {
    if y <= 1.0 {
        e1_series(y)
    } else {
        scaled_e1(y) * (-y).exp()
    }
}

/// `exp(y) * E1(y)` for `y > 0`, computed without forming `exp(y)` when `y` is large.
pub(crate) fn scaled_e1(y: f64) -> f64 {
    debug_assert!(y > 0.0);
    if y <= 1.0 {
        e1_series(y) * y.exp()
    } else if y <= 40.0 {
        e1_continued_fraction(y)
    } else {
        e1_asymptotic(y)
    }
}

fn e1_series(y: f64) -> f64 {
    let mut sum = 0.0;
    let mut term = 1.0;
    for n in 1..200 {
        let nf = n as f64;
        term *= -y / nf;
        let contrib = term / nf;
        sum += contrib;
        if contrib.abs() < f64::EPSILON * sum.abs().max(1e-300) {
            break;
        }
    }
    -EULER_GAMMA - y.ln() - sum
}

// modified Lentz on E1(y) e^y = 1/(y+1- 1/(y+3- 4/(y+5- ...)))
fn e1_continued_fraction(y: f64) -> f64 {
    let mut b = y + 1.0;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let a = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (a * d + b);
        c = b + a / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < f64::EPSILON {
            break;
        }
    }
    h
}

fn e1_asymptotic(y: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    for n in 1..200 {
        let next = term * -(n as f64) / y;
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < f64::EPSILON * sum.abs() {
            break;
        }
    }
    sum / y
}

/// Tolerances for [`adaptive_quad`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_subdivisions: 2000,
        }
    }
}

impl QuadratureSpec {
    pub fn new(abs_tol: f64, rel_tol: f64, max_subdivisions: usize) -> Result<Self> {
        let spec = Self {
            abs_tol,
            rel_tol,
            max_subdivisions,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) {
            return Err(Error::Domain("quadrature tolerances must be > 0".into()));
        }
        if self.max_subdivisions < 1 {
            return Err(Error::Domain("max_subdivisions must be >= 1".into()));
        }
        Ok(())
    }
}

// Gauss-Kronrod 7/15 abscissae and weights (QUADPACK qk15).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    // ties broken on the left endpoint so the heap order is reproducible
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Segment> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        kronrod += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let value = kronrod * half;
    if !value.is_finite() {
        return Err(Error::Domain(format!(
            "integrand is not finite on [{a}, {b}]"
        )));
    }
    Ok(Segment {
        a,
        b,
        value,
        error: ((kronrod - gauss) * half).abs(),
    })
}

/// Globally adaptive Gauss-Kronrod (7/15) quadrature of `f` on `[a, b]`.
///
/// Stops once the summed error estimate is at most
/// `max(abs_tol, rel_tol * |result|)`.
pub fn adaptive_quad<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64> {
    spec.validate()?;
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Domain(format!(
            "adaptive_quad needs finite a < b, got [{a}, {b}]"
        )));
    }
    let first = gauss_kronrod(&f, a, b)?;
    let mut total = first.value;
    let mut total_err = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    // error of segments too narrow to split further
    let mut frozen_err = 0.0;
    let mut subdivisions = 1;

    loop {
        let target = spec.abs_tol.max(spec.rel_tol * total.abs());
        if total_err + frozen_err <= target {
            return Ok(total);
        }
        let Some(worst) = heap.pop() else {
            // everything left is at machine resolution
            return Ok(total);
        };
        let mid = 0.5 * (worst.a + worst.b);
        if !(worst.a < mid && mid < worst.b)
            || (worst.b - worst.a) <= 64.0 * f64::EPSILON * mid.abs().max(f64::MIN_POSITIVE)
        {
            frozen_err += worst.error;
            total_err -= worst.error;
            continue;
        }
        if subdivisions >= spec.max_subdivisions {
            heap.push(worst);
            return Err(Error::Convergence {
                estimate: total,
                error: total_err + frozen_err,
                subdivisions,
            });
        }
        let left = gauss_kronrod(&f, worst.a, mid)?;
        let right = gauss_kronrod(&f, mid, worst.b)?;
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        subdivisions += 1;
        if heap.len() > 64 && subdivisions % 64 == 0 {
            // re-sum to shed accumulated cancellation in the running totals
            total = heap.iter().map(|s| s.value).sum();
            total_err = heap.iter().map(|s| s.error).sum();
        }
    }
}

/// Integral of `f` over `[a, ∞)` through the map `x = a + t / (1 - t)`, `t ∈ [0, 1)`.
pub fn adaptive_quad_semi_infinite<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::Domain("lower limit must be finite".into()));
    }
    adaptive_quad(
        |t| {
            let one_minus = 1.0 - t;
            let x = a + t / one_minus;
            let v = f(x) / (one_minus * one_minus);
            if x.is_infinite() {
                0.0
            } else {
                v
            }
        },
        0.0,
        1.0,
        spec,
    )
}
