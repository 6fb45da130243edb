//! Scaling-parameter dynamics: the nonlinear tower law, its closed form, the
//! linear system for first-order corrections and their weighted norm.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constants::ConstantTable;
use crate::error::{Error, Result};
use crate::ode::{dopri5, OdeOptions};
use crate::quadrature::{integrate, QuadOptions};

/// Sampled scale parameters. `times` decrease away from the start time and
/// every per-index vector is aligned with it; index `j - 1` holds bubble `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterPath {
    pub times: Vec<f64>,
    pub mu0: Vec<Vec<f64>>,
    pub mudot0: Vec<Vec<f64>>,
    pub mu1: Vec<Vec<f64>>,
    pub mudot1: Vec<Vec<f64>>,
}

impl ParameterPath {
    pub fn k(&self) -> usize {
        self.mu0.len()
    }

    /// `λ_{0j}` at sample `i`, with `λ_{01} = μ_{01}`.
    pub fn lambda0(&self, j: usize, i: usize) -> f64 {
        if j == 1 {
            self.mu0[0][i]
        } else {
            self.mu0[j - 1][i] / self.mu0[j - 2][i]
        }
    }

    /// Closed-form path on the given times, with zero corrections.
    pub fn closed_form(table: &ConstantTable, times: &[f64]) -> Result<Self> {
        let k = table.k;
        let mut path = ParameterPath::zeros(k, times.to_vec());
        for (i, &t) in times.iter().enumerate() {
            let s = table.scales(t)?;
            for j in 1..=k {
                path.mu0[j - 1][i] = s.mu0(j);
                path.mudot0[j - 1][i] = s.mudot0(j);
            }
        }
        Ok(path)
    }

    fn zeros(k: usize, times: Vec<f64>) -> Self {
        let m = times.len();
        ParameterPath {
            times,
            mu0: vec![vec![0.0; m]; k],
            mudot0: vec![vec![0.0; m]; k],
            mu1: vec![vec![0.0; m]; k],
            mudot1: vec![vec![0.0; m]; k],
        }
    }
}

/// `count` times geometric in `-t` from `t_near` (closest to zero) down to `t_far`.
pub fn geometric_times(t_near: f64, t_far: f64, count: usize) -> Result<Vec<f64>> {
    if !(t_far < t_near && t_near < 0.0) || count < 2 {
        return Err(Error::domain("need t_far < t_near < 0 and at least two samples"));
    }
    let (a, b) = ((-t_near).ln(), (-t_far).ln());
    Ok((0..count)
        .map(|i| {
            if i == 0 {
                t_near
            } else if i == count - 1 {
                t_far
            } else {
                -(a + (b - a) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect())
}

/// `(μ_{0j}, μ̇_{0j})` for `j = 1..k`.
pub fn mu0_closed_form(table: &ConstantTable, t: f64) -> Result<Vec<(f64, f64)>> {
    if t >= 0.0 {
        return Err(Error::domain(format!("closed form requires t < 0, got {t}")));
    }
    let s = table.scales(t)?;
    Ok((1..=table.k).map(|j| (s.mu0(j), s.mudot0(j))).collect())
}

/// Integrate `μ_j μ̇_j = c_* (μ_j/μ_{j-1})^{(n-2)/2}`, `μ_1 ≡ 1`, from
/// `t_from` (where `init` is given) to `t_to`, sampling `samples` times
/// geometric in `-t`.
///
/// Either direction is accepted. Toward `-∞` the closed form attracts
/// nearby solutions; toward zero deviations grow like a power of `-t`, so
/// long forward runs amplify any initial error.
pub fn integrate_mu_ode(
    table: &ConstantTable,
    t_from: f64,
    t_to: f64,
    init: &[f64],
    step_tol: f64,
    samples: usize,
) -> Result<ParameterPath> {
    let k = table.k;
    if init.len() != k {
        return Err(Error::config(format!("expected {k} initial scales, got {}", init.len())));
    }
    if !(t_from < 0.0 && t_to < 0.0) || t_from == t_to {
        return Err(Error::domain("integration times must be distinct and negative"));
    }
    if t_from > table.params.t0 || t_to > table.params.t0 {
        return Err(Error::domain(format!("times must not exceed t0 = {}", table.params.t0)));
    }
    if init.iter().any(|&m| !(m > 0.0)) || init.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::domain("initial scales must be positive and strictly decreasing in j"));
    }
    if !(step_tol > 0.0) {
        return Err(Error::config("step tolerance must be positive"));
    }
    let nf = table.dim.nf();
    let (pa, pb) = (0.5 * (nf - 6.0), 0.5 * (nf - 2.0));
    let c = table.c_star;
    // State: v_j = ln μ_j for j = 2..k, independent variable u = ln(-t).
    let rhs = move |u: f64, v: &[f64], d: &mut [f64]| {
        for i in 0..v.len() {
            let prev = if i == 0 { 0.0 } else { v[i - 1] };
            d[i] = -c * (u + pa * v[i] - pb * prev).exp();
        }
    };
    let v0: Vec<f64> = init[1..].iter().map(|m| (m / init[0]).ln()).collect();
    let (u_from, u_to) = ((-t_from).ln(), (-t_to).ln());
    let times = geometric_times(t_from.max(t_to), t_from.min(t_to), samples.max(2))?;
    let ordered: Vec<f64> = if t_from > t_to { times.clone() } else { times.iter().rev().copied().collect() };
    let outs: Vec<f64> = ordered.iter().map(|t| (-t).ln()).collect();
    let opts = OdeOptions {
        rtol: step_tol,
        atol: step_tol * 1e-6,
        ..OdeOptions::default()
    };
    let _ = u_to;
    let sol = dopri5(rhs, u_from, &v0, &outs, opts)?;
    let mut path = ParameterPath::zeros(k, times.clone());
    for (idx, &t) in ordered.iter().enumerate() {
        let i = if t_from > t_to { idx } else { times.len() - 1 - idx };
        let v = &sol.states[idx + 1];
        path.mu0[0][i] = init[0];
        for j in 2..=k {
            let mu = init[0] * v[j - 2].exp();
            let prev = path.mu0[j - 2][i];
            if !(mu < prev) || !mu.is_finite() {
                return Err(Error::numerical(
                    format!("tower collapse: scale {j} reached scale {} at t = {t}", j - 1),
                    mu / prev,
                ));
            }
            path.mu0[j - 1][i] = mu;
            path.mudot0[j - 1][i] = c * (mu / prev).powf(pb) / mu;
        }
    }
    Ok(path)
}

pub type ForcingFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Forcing terms `M_j(t)` for `j = 1..k`.
#[derive(Clone)]
pub struct ReducedForcing {
    pub terms: Vec<ForcingFn>,
}

impl fmt::Debug for ReducedForcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ReducedForcing({} terms)", self.terms.len())
    }
}

impl ReducedForcing {
    pub fn zero(k: usize) -> Self {
        ReducedForcing {
            terms: (0..k).map(|_| Arc::new(|_: f64| 0.0) as ForcingFn).collect(),
        }
    }

    /// `M_j = amplitude·(-t)^{-α_j-1-σ}` for the selected indices (all when `None`).
    pub fn power_law(table: &ConstantTable, sigma: f64, only: Option<usize>) -> Self {
        let terms = (1..=table.k)
            .map(|j| {
                let e = -table.alpha(j) - 1.0 - sigma;
                let on = only.is_none_or(|o| o == j);
                Arc::new(move |t: f64| if on { (-t).powf(e) } else { 0.0 }) as ForcingFn
            })
            .collect();
        ReducedForcing { terms }
    }

    pub fn eval(&self, j: usize, t: f64) -> f64 {
        (self.terms[j - 1])(t)
    }
}

/// Fitted power of `-t` in `|M(t)|` between `t` and `100 t`, or `None` if zero.
fn forcing_exponent(m: &ForcingFn, t: f64) -> Option<f64> {
    let (a, b) = (m(10.0 * t).abs(), m(1000.0 * t).abs());
    if a == 0.0 && b == 0.0 {
        return None;
    }
    if a == 0.0 || b == 0.0 {
        return Some(f64::INFINITY);
    }
    Some((b / a).ln() / 100f64.ln())
}

/// First-order corrections `μ_{1j} = S_j[M]` on `times` (decreasing, starting
/// at `t0`): `μ_{11}(t) = ∫_{-∞}^t M_1`, and for `j ≥ 2` the solution of
/// `μ̇_{1j} + (n-4)/2·(α_j/t)μ_{1j} - (n-2)/2·(α_j/t)λ_{0j}μ_{1,j-1} = M_j`
/// vanishing at `t0`. The tower itself is the closed form.
pub fn solve_reduced_system(
    table: &ConstantTable,
    forcing: &ReducedForcing,
    t0: f64,
    times: &[f64],
) -> Result<ParameterPath> {
    let k = table.k;
    if forcing.terms.len() != k {
        return Err(Error::config(format!("expected {k} forcing terms, got {}", forcing.terms.len())));
    }
    if !(t0 < 0.0) || times.first() != Some(&t0) || times.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::domain("sample times must start at t0 < 0 and decrease"));
    }
    let nf = table.dim.nf();
    let mut tail_exponent = 0.0;
    for j in 1..=k {
        if let Some(e) = forcing_exponent(&forcing.terms[j - 1], t0) {
            let bound = -table.alpha(j) - 1.0;
            if e > bound - 1e-9 {
                return Err(Error::domain(format!(
                    "forcing {j} decays like (-t)^{e:.4}, slower than (-t)^{bound}; the contraction needs \
                     0 < sigma < 1 = min_j (n-6)alpha_j/2 with |M_j| <~ (-t)^(-alpha_j-1-sigma)"
                )));
            }
            if j == 1 {
                tail_exponent = e;
            }
        }
    }
    let alpha = table.alpha.clone();
    let ratio: Vec<f64> = (0..k).map(|i| if i == 0 { 0.0 } else { table.beta[i] / table.beta[i - 1] }).collect();
    let u0 = (-t0).ln();

    // y_1(u0) = ∫_{-∞}^{t0} M_1, with s = -e^w and an analytic power-law tail.
    let m1 = forcing.terms[0].clone();
    let y1_start = if tail_exponent == 0.0 {
        0.0
    } else {
        let w_cut = u0 + 6.0 * 10f64.ln();
        let body = integrate(|w| m1(-w.exp()) * w.exp(), u0, w_cut, QuadOptions::rel(1e-12).with_abs(1e-300))?.value;
        let t_cut = -w_cut.exp();
        body + m1(t_cut) * (-t_cut) / (-tail_exponent - 1.0)
    };

    let f = forcing.clone();
    let (pn4, pn2, pn6) = (0.5 * (nf - 4.0), 0.5 * (nf - 2.0), 0.5 * (nf - 6.0));
    let _ = pn4;
    // y_j = (-t)^{α_j} μ_{1j} as a function of u = ln(-t).
    let rhs = move |u: f64, y: &[f64], d: &mut [f64]| {
        let t = -u.exp();
        for i in 0..y.len() {
            let a = alpha[i];
            let forcing_term = -((a + 1.0) * u).exp() * (f.terms[i])(t);
            d[i] = if i == 0 {
                forcing_term
            } else {
                -pn6 * a * y[i] + pn2 * a * ratio[i] * y[i - 1] + forcing_term
            };
        }
    };
    let mut y0 = vec![0.0; k];
    y0[0] = y1_start;
    let outs: Vec<f64> = times[1..].iter().map(|t| (-t).ln()).collect();
    let scale = (1..=k)
        .map(|j| (((table.alpha(j) + 1.0) * u0).exp() * forcing.eval(j, t0)).abs())
        .fold(y1_start.abs(), f64::max)
        .max(1e-300);
    let sol = if outs.is_empty() {
        None
    } else {
        let opts = OdeOptions { rtol: 1e-11, atol: 1e-13 * scale, ..OdeOptions::default() };
        Some(dopri5(&rhs, u0, &y0, &outs, opts)?)
    };
    let mut path = ParameterPath::closed_form(table, times)?;
    for (i, &t) in times.iter().enumerate() {
        let y = if i == 0 { &y0 } else { &sol.as_ref().expect("outputs").states[i] };
        for j in 1..=k {
            path.mu1[j - 1][i] = y[j - 1] * (-t).powf(-table.alpha(j));
        }
        let s = table.scales(t)?;
        for j in 1..=k {
            let a = table.alpha(j);
            let m = forcing.eval(j, t);
            path.mudot1[j - 1][i] = if j == 1 {
                m
            } else {
                -0.5 * (nf - 4.0) * a / t * path.mu1[j - 1][i] + pn2 * a / t * s.lambda0(j) * path.mu1[j - 2][i] + m
            };
        }
    }
    Ok(path)
}

/// `Σ_j ‖μ̇_{1j}‖#_{1+α_j+σ} + ‖μ_{1j}‖#_{α_j+σ}` with `‖g‖#_b = sup |(-t)^b g|`
/// over the samples.
pub fn mu1_norm(table: &ConstantTable, path: &ParameterPath, sigma: f64) -> Result<f64> {
    if path.times.is_empty() {
        return Err(Error::domain("no samples to take a norm over"));
    }
    let mut total = 0.0;
    for j in 1..=path.k() {
        let a = table.alpha(j);
        let mut s1 = 0.0f64;
        let mut s0 = 0.0f64;
        for (i, &t) in path.times.iter().enumerate() {
            s1 = s1.max(((-t).powf(1.0 + a + sigma) * path.mudot1[j - 1][i]).abs());
            s0 = s0.max(((-t).powf(a + sigma) * path.mu1[j - 1][i]).abs());
        }
        total += s1 + s0;
    }
    Ok(total)
}

/// `∂_τ ν / (ν/(-τ))` along the closed-form path for
/// `ν = (-t)^{γ_j} μ_{0j}^{(n-2)/2}` and `τ = ∫ μ_{0j}^{-2}` normalized to vanish at `-∞`... in
/// the forward-time sense, i.e. `τ(t) = -∫_t^{0^-}`-type power law continued from the samples.
pub fn nu_condition_ratio(table: &ConstantTable, j: usize, times: &[f64]) -> Result<Vec<f64>> {
    if j == 0 || j > table.k {
        return Err(Error::domain(format!("index {j} outside [1, {}]", table.k)));
    }
    let m = table.dim.m();
    let a = table.alpha(j);
    let b = table.beta(j);
    let g = table.gamma(j);
    let ln_nu = |t: f64| -> Result<f64> { Ok(g * (-t).ln() + m * table.scales(t)?.mu0(j).ln()) };
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let h = 1e-6 * (-t);
        let dln = (ln_nu(t + h)? - ln_nu(t - h)?) / (2.0 * h);
        let mu = table.scales(t)?.mu0(j);
        // τ(t) = -∫_t^{t_ref} μ^{-2} ds - τ_ref with τ_ref from the power law at t_ref = t/2.
        let t_ref = 0.5 * t;
        let inner = integrate(|s| table.scales(s).map(|sc| sc.mu0(j).powi(-2)).unwrap_or(f64::NAN), t, t_ref, QuadOptions::rel(1e-12))?.value;
        let tau_ref = -(-t_ref).powf(2.0 * a + 1.0) / (b * b * (2.0 * a + 1.0));
        let tau = tau_ref - inner;
        out.push(dln * mu * mu * (-tau));
    }
    Ok(out)
}
