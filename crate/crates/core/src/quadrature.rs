//! Adaptive Gauss-Kronrod quadrature (7/15 point pair) with global
//! bisection, plus helpers for radial moments over the half line.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

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

/// Tolerances and budget for one adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            rel_tol: 1e-10,
            abs_tol: 0.0,
            max_intervals: 4000,
        }
    }
}

impl QuadOptions {
    pub fn rel(rel_tol: f64) -> Self {
        QuadOptions {
            rel_tol,
            ..Default::default()
        }
    }

    pub fn with_abs(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_limit(mut self, max_intervals: usize) -> Self {
        self.max_intervals = max_intervals;
        self
    }
}

/// Value and error estimate of a converged integral.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = resk * 0.5;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = resk * h;
    let resabs = resabs * h.abs();
    let resasc = resasc * h.abs();
    let mut err = ((resk - resg) * h).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    (value, err)
}

/// Integrate `f` over the finite interval `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<QuadResult> {
    let (res, converged) = integrate_best(f, a, b, opts)?;
    if !converged {
        return Err(Error::numerical(
            format!("quadrature did not converge on [{a:e}, {b:e}] within {} intervals", opts.max_intervals),
            res.error,
        ));
    }
    Ok(res)
}

/// Like [`integrate`] but returns the best estimate when the budget runs
/// out, flagged as not converged. Callers summing many pieces can then
/// judge the error against the total.
pub fn integrate_best<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<(QuadResult, bool)> {
    if a == b {
        return Ok((
            QuadResult {
                value: 0.0,
                error: 0.0,
                evaluations: 0,
            },
            true,
        ));
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::domain("integration limits must be finite"));
    }
    let (v, e) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment {
        a,
        b,
        value: v,
        error: e,
    });
    let mut total = v;
    let mut total_err = e;
    let mut evals = 15;
    loop {
        let tol = opts.abs_tol.max(opts.rel_tol * total.abs());
        if total_err <= tol {
            break;
        }
        if heap.len() >= opts.max_intervals {
            // Recompute sums from scratch to shed accumulated rounding.
            let err: f64 = heap.iter().map(|s| s.error).sum();
            let val: f64 = heap.iter().map(|s| s.value).sum();
            if err <= opts.abs_tol.max(opts.rel_tol * val.abs()) {
                total = val;
                total_err = err;
                break;
            }
            if !total_err.is_finite() || !total.is_finite() {
                return Err(Error::numerical("integrand is not finite", total_err));
            }
            return Ok((
                QuadResult {
                    value: val,
                    error: err,
                    evaluations: evals,
                },
                false,
            ));
        }
        let worst = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a.min(worst.b) || mid >= worst.a.max(worst.b) {
            // Interval cannot be split further; accept what we have.
            heap.push(worst);
            let err: f64 = heap.iter().map(|s| s.error).sum();
            let val: f64 = heap.iter().map(|s| s.value).sum();
            return Ok((
                QuadResult {
                    value: val,
                    error: err.max(val.abs() * f64::EPSILON),
                    evaluations: evals,
                },
                false,
            ));
        }
        let (v1, e1) = gk15(&f, worst.a, mid);
        let (v2, e2) = gk15(&f, mid, worst.b);
        evals += 30;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
        if heap.len() % 64 == 0 {
            total = heap.iter().map(|s| s.value).sum();
            total_err = heap.iter().map(|s| s.error).sum();
        }
    }
    if !total.is_finite() {
        return Err(Error::numerical("integrand is not finite", f64::INFINITY));
    }
    Ok((
        QuadResult {
            value: total,
            error: total_err.max(0.0),
            evaluations: evals,
        },
        true,
    ))
}

/// Integrate over `[a, b]` split at the supplied interior breakpoints.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, points: &[f64], opts: QuadOptions) -> Result<QuadResult> {
    let mut value = 0.0;
    let mut error = 0.0;
    let mut evaluations = 0;
    for w in points.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let r = integrate(&f, w[0], w[1], opts)?;
        value += r.value;
        error += r.error;
        evaluations += r.evaluations;
    }
    Ok(QuadResult {
        value,
        error,
        evaluations,
    })
}

/// `∫_0^∞ f(r) r^{n-1} dr`, using `r = 1/s` on `[1, ∞)`.
pub fn radial_moment<F: Fn(f64) -> f64>(f: F, n: u32, opts: QuadOptions) -> Result<QuadResult> {
    let m = n as i32;
    let inner = integrate(|r| f(r) * r.powi(m - 1), 0.0, 1.0, opts)?;
    let outer = integrate(
        |s| {
            if s <= 0.0 {
                0.0
            } else {
                f(1.0 / s) * s.powi(-m - 1)
            }
        },
        0.0,
        1.0,
        opts,
    )?;
    Ok(QuadResult {
        value: inner.value + outer.value,
        error: inner.error + outer.error,
        evaluations: inner.evaluations + outer.evaluations,
    })
}

/// Surface measure of the unit sphere in ℝⁿ, `2π^{n/2}/Γ(n/2)`.
pub fn sphere_area(n: u32) -> f64 {
    let h = n as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(h) / statrs::function::gamma::gamma(h)
}

/// `∫_{ℝⁿ} f(|y|) dy` for a radial integrand.
pub fn radial_integral<F: Fn(f64) -> f64>(f: F, n: u32, opts: QuadOptions) -> Result<QuadResult> {
    let w = sphere_area(n);
    let r = radial_moment(f, n, opts)?;
    Ok(QuadResult {
        value: w * r.value,
        error: w * r.error,
        evaluations: r.evaluations,
    })
}

/// Trapezoid rule for samples on a strictly increasing grid.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| x.powi(5) - 3.0 * x, -1.0, 2.0, QuadOptions::default()).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - 1.5 * (4.0 - 1.0);
        assert!((r.value - exact).abs() < 1e-13);
    }

    #[test]
    fn endpoint_singularity_converges() {
        let r = integrate(|x: f64| x.powf(-0.5), 0.0, 1.0, QuadOptions::rel(1e-9)).unwrap();
        assert!((r.value - 2.0).abs() < 1e-8);
    }

    #[test]
    fn radial_moment_of_power_decay() {
        // ∫_0^∞ r^2 (1+r^2)^{-3} dr = π/16
        let r = radial_moment(|r| (1.0 + r * r).powi(-3), 3, QuadOptions::rel(1e-12)).unwrap();
        assert!((r.value - std::f64::consts::PI / 16.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(2) - 2.0 * std::f64::consts::PI).abs() < 1e-14);
        assert!((sphere_area(3) - 4.0 * std::f64::consts::PI).abs() < 1e-13);
    }

    #[test]
    fn non_finite_integrand_errors() {
        let r = integrate(|x| 1.0 / x, 0.0, 1.0, QuadOptions::default().with_limit(50));
        assert!(r.is_err());
    }
}
