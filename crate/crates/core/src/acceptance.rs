//! The twelve end-to-end checks, runnable from the test suite and from the
//! command line. Each returns a verdict with the measured numbers.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta;

use crate::ansatz::{dominance_ratio, flow_residual, physical_grid, AnsatzState};
use crate::constants::{build_constant_table, integral_bubble_power, integral_kernel_sq, AnalyticParams, ConstantTable};
use crate::corrector::{default_corrector_grid, hbar, kernel_identity_residual, solvability_integral, solve_phibar};
use crate::duhamel::{run_catalog, DuhamelOptions, REFERENCE_TIMES};
use crate::error::Result;
use crate::grid::{RadialField, RadialGrid};
use crate::parameters::{geometric_times, integrate_mu_ode, mu0_closed_form, solve_reduced_system, ReducedForcing};
use crate::profiles::{bubble_value, kernel_zn1, scaled_bubble, Dimension};
use crate::quadrature::{radial_integral, sphere_area, QuadOptions};
use crate::simulator::{
    centre_scale, diagnose_series, evolve_inner_linear, evolve_nonlinear, fitted_slope, window_disagreement, EvolutionState,
    InnerControls, StepControls,
};

/// Checks that cannot pass at double precision on a desk machine; the
/// decisions ledger explains why.
pub const KNOWN_UNATTAINABLE: &[u8] = &[10];

/// Checks skipped by the reduced suite.
pub const SLOW: &[u8] = &[8, 10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {} {:<26} {} [{:.2} s]",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.detail,
            self.seconds
        )
    }
}

pub const TITLES: [&str; 12] = [
    "constants oracle",
    "kernel identity",
    "solvability",
    "corrector decay",
    "parameter dynamics",
    "reduced system",
    "residual smallness",
    "duhamel barriers",
    "simulator steady state",
    "tower rate",
    "inner decay",
    "dominance",
];

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn table(k: usize) -> Result<ConstantTable> {
    build_constant_table(7, k, AnalyticParams::defaults(7))
}

/// Closed forms through the Beta function: with `I(s, q) = ∫ r^{2q}(1+r²)^{-s} dx`
/// we have `I = ω/2 · B(n/2 + q, s - n/2 - q)`.
fn beta_moment(n: u32, s: f64, q: f64) -> f64 {
    let h = 0.5 * n as f64;
    0.5 * sphere_area(n) * beta(h + q, s - h - q)
}

fn bubble_power_closed_form(dim: Dimension) -> f64 {
    dim.alpha_n.powf(dim.p) * beta_moment(dim.n, 0.5 * (dim.nf() + 2.0), 0.0)
}

/// `Z = (n-2)/2 · α_n (1 - r²)(1 + r²)^{-n/2}`, so `Z² ∝ ((1+r²)² - 4r²)(1+r²)^{-n}`.
fn kernel_sq_closed_form(dim: Dimension) -> f64 {
    let c = dim.m() * dim.alpha_n;
    let nf = dim.nf();
    c * c * (beta_moment(dim.n, nf - 2.0, 0.0) - 4.0 * beta_moment(dim.n, nf, 1.0))
}

fn constants_oracle() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    let mut slowest = 0.0f64;
    for n in 7..=10 {
        let dim = Dimension::new(n)?;
        let clock = Instant::now();
        let up = integral_bubble_power(dim, 1e-12)?;
        let z2 = integral_kernel_sq(dim, 1e-12)?;
        slowest = slowest.max(clock.elapsed().as_secs_f64());
        worst = worst.max((up / bubble_power_closed_form(dim) - 1.0).abs());
        worst = worst.max((z2 / kernel_sq_closed_form(dim) - 1.0).abs());
    }
    Ok((
        worst <= 1e-8 && slowest < 1.0,
        format!("max rel err {worst:.2e} over n=7..10, slowest dimension {slowest:.3} s"),
    ))
}

fn kernel_identity(fast: bool) -> Result<(bool, String)> {
    let dim = Dimension::new(7)?;
    let sizes: &[usize] = if fast { &[2500, 5000] } else { &[2500, 5000, 10000] };
    let res = sizes
        .iter()
        .map(|&m| kernel_identity_residual(dim, &default_corrector_grid(m)?))
        .collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = res.windows(2).map(|w| w[0] / w[1]).collect();
    let mut ok = ratios.iter().all(|r| (3.5..=4.5).contains(r));
    if !fast {
        ok &= res[2] <= 1e-6;
    }
    Ok((ok, format!("residuals [{}], halving ratios {ratios:.3?}", sci(&res))))
}

fn solvability() -> Result<(bool, String)> {
    let t = table(2)?;
    let dim = t.dim;
    let h = hbar(dim, t.c_star);
    let pairing = solvability_integral(dim, &h)?;
    let u0 = bubble_value(dim, 0.0);
    let c = t.c_star;
    let h_sq = radial_integral(
        move |r| (u0 * crate::profiles::potential(dim, r) + c * kernel_zn1(dim, r)).powi(2),
        dim.n,
        QuadOptions::rel(1e-12),
    )?
    .value;
    let z_sq = integral_kernel_sq(dim, 1e-12)?;
    let bound = 1e-8 * h_sq.sqrt() * z_sq.sqrt();
    Ok((pairing.abs() <= bound, format!("|pairing| {:.3e} vs bound {bound:.3e}", pairing.abs())))
}

fn corrector_decay() -> Result<(bool, String)> {
    let sol = solve_phibar(&table(2)?, 4001)?;
    let e = sol.fit_tail_exponent(1e2, 1e3)?;
    Ok(((e + 2.0).abs() <= 0.05, format!("tail exponent {e:.4} on [1e2, 1e3]")))
}

fn parameter_dynamics() -> Result<(bool, String)> {
    let t = table(3)?;
    let clock = Instant::now();
    let init: Vec<f64> = mu0_closed_form(&t, -1e2)?.iter().map(|p| p.0).collect();
    let path = integrate_mu_ode(&t, -1e2, -1e6, &init, 1e-12, 81)?;
    let secs = clock.elapsed().as_secs_f64();
    let mut worst = 0.0f64;
    for (i, &time) in path.times.iter().enumerate() {
        let s = t.scales(time)?;
        for j in 1..=3 {
            worst = worst.max((path.mu0[j - 1][i] / s.mu0(j) - 1.0).abs());
        }
    }
    Ok((
        worst <= 1e-6 && secs < 5.0,
        format!("max rel err {worst:.2e} on [-1e6, -1e2], alpha = {:?}, {secs:.3} s", t.alpha),
    ))
}

/// Least-squares slope of `ln|v|` against `ln(-t)`, negated.
fn decay_exponent(times: &[f64], v: &[f64]) -> Result<f64> {
    let x: Vec<f64> = times.iter().map(|t| (-t).ln()).collect();
    let y: Vec<f64> = v.iter().map(|m| m.abs().ln()).collect();
    Ok(-fitted_slope(&x, &y)?)
}

fn reduced_system() -> Result<(bool, String)> {
    let t = table(3)?;
    let sigma = t.params.sigma;
    let times = geometric_times(-100.0, -1e9, 141)?;
    let mut ok = true;
    let mut found = vec![];
    for j in 1..=3 {
        let f = ReducedForcing::power_law(&t, sigma, Some(j));
        let path = solve_reduced_system(&t, &f, -100.0, &times)?;
        // Skip the transient near t0.
        let e = decay_exponent(&times[60..], &path.mu1[j - 1][60..])?;
        ok &= (e - t.alpha(j) - sigma).abs() <= 0.02;
        found.push(format!("j={j}: {e:.4} (want {:.4})", t.alpha(j) + sigma));
    }
    Ok((ok, found.join(", ")))
}

fn residual_smallness() -> Result<(bool, String)> {
    let narrow = table(2)?;
    let mut params = AnalyticParams::defaults(7);
    params.r_cut = 80.0;
    let wide = build_constant_table(7, 2, params)?;
    let phibar = Arc::new(solve_phibar(&narrow, 2000)?);
    let phibar_wide = Arc::new(solve_phibar(&wide, 2000)?);
    let mut ok = true;
    let mut last = f64::INFINITY;
    let mut seen = vec![];
    for t in [-1e3, -1e4, -1e5] {
        let e = flow_residual(&AnsatzState::leading_order(&narrow, phibar.clone(), t)?)?.eout_norm;
        let e80 = flow_residual(&AnsatzState::leading_order(&wide, phibar_wide.clone(), t)?)?.eout_norm;
        ok &= e.value.is_finite() && !e.unbounded && e.value <= 1.5 * last;
        ok &= e80.value <= e.value * (1.0 + 1e-9);
        last = e.value;
        seen.push(format!("t={t:.0e}: {:.3e} (R=80 {:.3e})", e.value, e80.value));
    }
    Ok((ok, seen.join(", ")))
}

fn duhamel_barriers(fast: bool) -> Result<(bool, String)> {
    let t = table(3)?;
    let per_time = if fast { 4 } else { 17 };
    let mut reports = run_catalog(&t, &[], &REFERENCE_TIMES, per_time, DuhamelOptions::default())?;
    if fast {
        reports = reports.into_iter().step_by(4).collect();
    }
    let worst = reports.iter().map(|r| r.drift).fold(0.0f64, f64::max);
    let fewest = reports.iter().map(|r| r.samples.len()).min().unwrap_or(0);
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    let ok = failed.is_empty() && (fast || (reports.len() >= 20 && fewest >= 50));
    Ok((
        ok,
        format!(
            "{} entries, fewest points {fewest}, worst drift x{worst:.3}, failing {failed:?}",
            reports.len()
        ),
    ))
}

fn steady_state(fast: bool) -> Result<(bool, String)> {
    let dim = Dimension::new(7)?;
    let grid = RadialGrid::mapped(0.5, 1e3, if fast { 20_000 } else { 100_000 })?;
    let u = RadialField::from_fn(grid, |r| bubble_value(dim, r));
    let controls = StepControls::default();
    let rep = evolve_nonlinear(EvolutionState::with_decaying_tail(dim, u, 0.0)?, 1.0, &controls)?;
    let drift = rep
        .state
        .u
        .radii()
        .iter()
        .zip(&rep.state.u.values)
        .map(|(&r, v)| (v - scaled_bubble(dim, 1.0, r)).abs())
        .fold(0.0, f64::max)
        / dim.alpha_n;
    let rise = rep
        .series
        .windows(2)
        .map(|w| (w[1].energy - w[0].energy) / w[0].energy.abs())
        .fold(f64::NEG_INFINITY, f64::max);
    let monotone = rise <= controls.energy_tol;
    let tol = if fast { 2e-3 } else { 1e-4 };
    Ok((
        rep.completed && drift <= tol && monotone && rep.state.rejected == 0,
        format!(
            "sup drift {drift:.3e} over unit time, {} steps, largest relative energy rise {rise:.1e}, rejected {}",
            rep.state.accepted, rep.state.rejected
        ),
    ))
}

/// Length of the tower run in units of the inner time `μ₂²`.
pub const TOWER_RUN_INNER_TIME: f64 = 1.0;

fn tower_rate(fast: bool) -> Result<(bool, String)> {
    let t = table(2)?;
    let phibar = Arc::new(solve_phibar(&t, 2000)?);
    let t_start = -1e4;
    let st = AnsatzState::leading_order(&t, phibar, t_start)?;
    let (mu1, mu2) = (st.mu[0], st.mu[1]);
    let lambda = mu2 / mu1;
    let predicted = 2.0 * t.c_star * lambda.powf(t.dim.m());
    let grid = RadialGrid::mapped(0.5 * mu2, 10.0 * (-t_start).sqrt(), if fast { 20_000 } else { 60_000 })?;
    let u = RadialField::from_fn(grid.clone(), |x| st.ustar(x));
    // The flow is autonomous; clock offsets from t_start keep steps of
    // size μ₂² ~ 1e-23 resolvable.
    let state = EvolutionState::with_decaying_tail(t.dim, u, 0.0)?;
    let span = TOWER_RUN_INNER_TIME * mu2 * mu2;
    let window = 0.02 * span;
    let controls = StepControls {
        dt_max: window / 20.0,
        snapshot_every: 4,
        ..StepControls::default()
    };
    let rep = evolve_nonlinear(state, span, &controls)?;
    let early: Vec<_> = rep.series.iter().filter(|s| s.t <= window * (1.0 + 1e-9)).collect();
    let times: Vec<f64> = early.iter().map(|s| s.t).collect();
    let squares = early
        .iter()
        .map(|s| centre_scale(t.dim, s.centre).map(|m| m * m))
        .collect::<Result<Vec<_>>>()?;
    let measured = fitted_slope(&times, &squares)?;
    let snaps: Vec<(f64, Vec<f64>)> = rep.snapshots.iter().filter(|s| s.0 <= window * (1.0 + 1e-9)).cloned().collect();
    let fit = diagnose_series(t.dim, &grid, &snaps, 2)?;
    let ratio = measured / predicted;
    Ok((
        (ratio - 1.0).abs() <= 0.25,
        format!(
            "d(mu2^2)/dt measured {measured:.3e} vs predicted {predicted:.3e} (ratio {ratio:.3e}); \
             lambda2 {lambda:.3e}; fitted outer scale {:.4} (mu01 {mu1:.4}); run completed {}",
            fit.scales.first().map_or(f64::NAN, |s| s[0]),
            rep.completed
        ),
    ))
}

fn inner_decay() -> Result<(bool, String)> {
    let dim = Dimension::new(7)?;
    let c = InnerControls::default();
    let a = c.a;
    let h = move |y: f64, tau: f64| (-tau).recip() * (1.0 + y * y).powf(-0.5 * (2.0 + a));
    let nu = |tau: f64| (-tau).recip();
    let late = evolve_inner_linear(dim, &h, &nu, &c)?;
    let early = evolve_inner_linear(
        dim,
        &h,
        &nu,
        &InnerControls {
            tau_start: 4.0 * c.tau_start,
            ..c
        },
    )?;
    let gap = window_disagreement(&early, &late)?;
    let bounded = [&early, &late].iter().all(|r| r.ratio.is_finite() && !r.projection_failed);
    Ok((
        bounded && gap <= 0.05,
        format!(
            "norm ratios {:.4e} / {:.4e}, window gap {gap:.2e}, kernel drift {:.2e}",
            late.ratio, early.ratio, early.ortho_drift
        ),
    ))
}

fn dominance() -> Result<(bool, String)> {
    let t = table(2)?;
    let phibar = Arc::new(solve_phibar(&t, 2000)?);
    let mut vals = vec![];
    for time in [-1e3, -1e4, -1e5] {
        let st = AnsatzState::leading_order(&t, phibar.clone(), time)?;
        vals.push(dominance_ratio(&st, &physical_grid(&t, time, 40)?));
    }
    Ok((vals.windows(2).all(|w| w[1] < w[0]), format!("sup |u*-Ubar|/Ubar = [{}]", sci(&vals))))
}

/// Run one check; `fast` shrinks grids and samples.
pub fn run_criterion(id: u8, fast: bool) -> CriterionOutcome {
    let clock = Instant::now();
    let result = match id {
        1 => constants_oracle(),
        2 => kernel_identity(fast),
        3 => solvability(),
        4 => corrector_decay(),
        5 => parameter_dynamics(),
        6 => reduced_system(),
        7 => residual_smallness(),
        8 => duhamel_barriers(fast),
        9 => steady_state(fast),
        10 => tower_rate(fast),
        11 => inner_decay(),
        12 => dominance(),
        _ => Err(crate::error::Error::config(format!("no criterion {id}"))),
    };
    let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionOutcome {
        id,
        title: (id as usize).checked_sub(1).and_then(|i| TITLES.get(i)).copied().unwrap_or("unknown").to_string(),
        passed,
        detail,
        seconds: clock.elapsed().as_secs_f64(),
    }
}

/// All checks in order; the reduced suite leaves out [`SLOW`].
pub fn run_all(fast: bool) -> Vec<CriterionOutcome> {
    (1..=12u8).filter(|id| !fast || !SLOW.contains(id)).map(|id| run_criterion(id, fast)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_forms_match_elementary_integrals() {
        // In ℝ³: ∫(1+r²)^{-2} dx = π² and ∫r²(1+r²)^{-3} dx = 3π²/4.
        let pi = std::f64::consts::PI;
        assert!((beta_moment(3, 2.0, 0.0) - pi * pi).abs() < 1e-12);
        assert!((beta_moment(3, 3.0, 1.0) - 0.75 * pi * pi).abs() < 1e-12);
    }

    #[test]
    fn unknown_criterion_fails_cleanly() {
        let o = run_criterion(13, true);
        assert!(!o.passed && o.detail.contains("no criterion"));
    }
}
