//! Method-of-lines evolution of the radial flow `u_t = Δu + |u|^{p-1}u`, of the
//! inner linear flow on `B_{8R}`, and bubble-scale extraction.
//!
//! Space is discretized by finite volumes: cell faces sit halfway between
//! nodes, so the discrete Laplacian is symmetric in the volume-weighted inner
//! product. With implicit diffusion and explicit reaction the step is a
//! convex splitting of the energy, which therefore decreases on every step.

use serde::{Deserialize, Serialize};

use crate::constants::ConstantTable;
use crate::error::{Error, Result};
use crate::grid::{RadialField, RadialGrid};
use crate::linalg::solve_tridiagonal;
use crate::profiles::{base_cutoff, bubble_value, kernel_zn1, potential, Dimension};
use crate::quadrature::sphere_area;

/// Closure at the outermost node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FarField {
    /// `u_r + (decay/r) u = 0`, exact for `r^{-decay}`.
    Robin { decay: f64 },
    /// `u = 0`.
    Dirichlet,
}

/// Conservative discretization of the radial Laplacian.
#[derive(Debug, Clone)]
pub struct RadialOperator {
    r: Vec<f64>,
    volume: Vec<f64>,
    /// `r_{i+1/2}^{n-1}/(r_{i+1} - r_i)` for faces `0..N-1`.
    conductance: Vec<f64>,
    /// Outflow coefficient of the Robin closure.
    boundary: f64,
    dirichlet: bool,
}

impl RadialOperator {
    pub fn new(n: u32, grid: &RadialGrid, far: FarField) -> Result<Self> {
        let r = grid.nodes().to_vec();
        if r[0] != 0.0 || r.len() < 3 {
            return Err(Error::config("evolution grids start at the origin and need three nodes"));
        }
        let nf = n as f64;
        let m = r.len();
        let faces: Vec<f64> = (0..m - 1).map(|i| 0.5 * (r[i] + r[i + 1])).collect();
        let mut volume = Vec::with_capacity(m);
        let mut lo = 0.0f64;
        for i in 0..m {
            let hi = faces.get(i).copied().unwrap_or(r[m - 1]);
            volume.push((hi.powf(nf) - lo.powf(nf)) / nf);
            lo = hi;
        }
        let conductance = (0..m - 1).map(|i| faces[i].powf(nf - 1.0) / (r[i + 1] - r[i])).collect();
        let (boundary, dirichlet) = match far {
            FarField::Robin { decay } => (decay * r[m - 1].powf(nf - 2.0), false),
            FarField::Dirichlet => (0.0, true),
        };
        Ok(RadialOperator {
            r,
            volume,
            conductance,
            boundary,
            dirichlet,
        })
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volume
    }

    /// Diagonals of `V·A` (symmetric).
    fn stiffness(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.len();
        let mut diag = vec![0.0; m];
        let mut off = vec![0.0; m];
        for i in 0..m - 1 {
            let c = self.conductance[i];
            diag[i] -= c;
            diag[i + 1] -= c;
            off[i] = c;
        }
        diag[m - 1] -= self.boundary;
        (diag, off)
    }

    /// `Δu` at every node.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let m = self.len();
        let (diag, off) = self.stiffness();
        let mut out: Vec<f64> = (0..m)
            .map(|i| {
                let mut v = diag[i] * u[i];
                if i > 0 {
                    v += off[i - 1] * u[i - 1];
                }
                if i + 1 < m {
                    v += off[i] * u[i + 1];
                }
                v / self.volume[i]
            })
            .collect();
        if self.dirichlet {
            out[m - 1] = 0.0;
        }
        out
    }

    /// Solve `(I - dt(Δ + V)) x = rhs`.
    pub fn implicit_solve(&self, dt: f64, potential: Option<&[f64]>, rhs: &[f64]) -> Result<Vec<f64>> {
        let m = self.len();
        let (diag, off) = self.stiffness();
        let mut a = vec![0.0; m];
        let mut b = vec![0.0; m];
        let mut c = vec![0.0; m];
        let mut d = vec![0.0; m];
        for i in 0..m {
            // Rows divided by the cell volume keep the pivots comparable.
            let w = self.volume[i];
            let pot = potential.map_or(0.0, |p| p[i]);
            b[i] = 1.0 - dt * (diag[i] / w + pot);
            if i > 0 {
                a[i] = -dt * off[i - 1] / w;
            }
            if i + 1 < m {
                c[i] = -dt * off[i] / w;
            }
            d[i] = rhs[i];
        }
        if self.dirichlet {
            a[m - 1] = 0.0;
            b[m - 1] = 1.0;
            d[m - 1] = 0.0;
            c[m - 2] = 0.0;
        }
        solve_tridiagonal(&a, &b, &c, &d)
    }

    /// `Σ V_i f_i g_i`.
    pub fn dot(&self, f: &[f64], g: &[f64]) -> f64 {
        self.volume.iter().zip(f).zip(g).map(|((w, a), b)| w * a * b).sum()
    }

    /// `½∫|∇u|²` in the discrete form matching the operator, per unit sphere.
    pub fn dirichlet_energy(&self, u: &[f64]) -> f64 {
        let m = self.len();
        let faces: f64 = (0..m - 1).map(|i| self.conductance[i] * (u[i + 1] - u[i]).powi(2)).sum();
        0.5 * (faces + self.boundary * u[m - 1] * u[m - 1])
    }
}

/// `J(u) = ∫ |∇u|²/2 - |u|^{p+1}/(p+1)` on the grid.
pub fn energy(dim: Dimension, op: &RadialOperator, u: &[f64]) -> f64 {
    let p = dim.p;
    let pot: f64 = op.volume.iter().zip(u).map(|(w, v)| w * v.abs().powf(p + 1.0)).sum::<f64>() / (p + 1.0);
    sphere_area(dim.n) * (op.dirichlet_energy(u) - pot)
}

/// Step-size policy for the nonlinear flow.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepControls {
    /// Upper bound on `max |u|^{p-1}·dt`.
    pub reaction_limit: f64,
    pub dt_max: f64,
    /// Below this the run stops with a stiffness event.
    pub dt_min: f64,
    pub max_steps: usize,
    /// Record a time sample every this many accepted steps.
    pub record_every: usize,
    /// Keep a full profile every this many accepted steps (0 keeps none).
    pub snapshot_every: usize,
    /// Relative energy rise that rejects a step.
    pub energy_tol: f64,
}

impl Default for StepControls {
    fn default() -> Self {
        StepControls {
            reaction_limit: 0.2,
            dt_max: 1e-2,
            dt_min: 1e-300,
            max_steps: 1_000_000,
            record_every: 1,
            snapshot_every: 0,
            energy_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionState {
    pub dim: Dimension,
    pub grid: RadialGrid,
    pub u: RadialField,
    pub t: f64,
    pub far: FarField,
    pub accepted: usize,
    pub rejected: usize,
    pub dt_last: f64,
    op: RadialOperator,
}

impl EvolutionState {
    pub fn new(dim: Dimension, u: RadialField, t: f64, far: FarField) -> Result<Self> {
        if u.values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::domain("initial data must be nonnegative and finite"));
        }
        let op = RadialOperator::new(dim.n, &u.grid, far)?;
        Ok(EvolutionState {
            dim,
            grid: u.grid.clone(),
            u,
            t,
            far,
            accepted: 0,
            rejected: 0,
            dt_last: 0.0,
            op,
        })
    }

    /// Robin closure matching the `r^{2-n}` tail.
    pub fn with_decaying_tail(dim: Dimension, u: RadialField, t: f64) -> Result<Self> {
        Self::new(dim, u, t, FarField::Robin { decay: dim.nf() - 2.0 })
    }

    pub fn operator(&self) -> &RadialOperator {
        &self.op
    }

    pub fn energy(&self) -> f64 {
        energy(self.dim, &self.op, &self.u.values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EvolutionEvent {
    /// A value turned negative.
    PositivityLoss { t: f64, x: f64, value: f64 },
    /// The admissible step fell below `dt_min` or below the clock resolution.
    Stiffness { t: f64, dt: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSample {
    pub t: f64,
    pub dt: f64,
    pub centre: f64,
    pub sup: f64,
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct EvolutionReport {
    pub state: EvolutionState,
    pub series: Vec<TimeSample>,
    pub snapshots: Vec<(f64, Vec<f64>)>,
    pub events: Vec<EvolutionEvent>,
    /// Whether `t_end` was reached.
    pub completed: bool,
}

fn sample(state: &EvolutionState, dt: f64, energy: f64) -> TimeSample {
    TimeSample {
        t: state.t,
        dt,
        centre: state.u.values[0],
        sup: state.u.sup_abs(),
        energy,
    }
}

/// Advance to `t_end` with implicit diffusion and explicit reaction.
pub fn evolve_nonlinear(mut state: EvolutionState, t_end: f64, controls: &StepControls) -> Result<EvolutionReport> {
    if !(t_end >= state.t) {
        return Err(Error::domain("only forward evolution is offered"));
    }
    let p = state.dim.p;
    let mut j = state.energy();
    let mut series = vec![sample(&state, 0.0, j)];
    let mut snapshots = vec![];
    if controls.snapshot_every > 0 {
        snapshots.push((state.t, state.u.values.clone()));
    }
    let mut events = vec![];
    let mut completed = true;
    let mut shrink = 1.0;
    while state.t < t_end {
        if state.accepted >= controls.max_steps {
            completed = false;
            break;
        }
        let u = &state.u.values;
        let stiff = u.iter().fold(0.0f64, |m, v| m.max(v.abs().powf(p - 1.0)));
        let mut dt = (controls.reaction_limit / stiff).min(controls.dt_max) * shrink;
        let last_step = t_end - state.t <= dt;
        if last_step {
            dt = t_end - state.t;
        }
        // The clock must still resolve the step.
        if dt < controls.dt_min || (!last_step && state.t + dt == state.t) {
            events.push(EvolutionEvent::Stiffness { t: state.t, dt });
            completed = false;
            break;
        }
        let rhs: Vec<f64> = u.iter().map(|&v| v + dt * v.abs().powf(p - 1.0) * v).collect();
        let next = state.op.implicit_solve(dt, None, &rhs)?;
        let j_next = energy(state.dim, &state.op, &next);
        if !j_next.is_finite() {
            events.push(EvolutionEvent::Stiffness { t: state.t, dt });
            completed = false;
            break;
        }
        if j_next > j + controls.energy_tol * j.abs().max(state.op.dirichlet_energy(&next)) {
            state.rejected += 1;
            shrink *= 0.5;
            continue;
        }
        shrink = (shrink * 2.0).min(1.0);
        state.t = if last_step { t_end } else { state.t + dt };
        state.u.values = next;
        state.accepted += 1;
        state.dt_last = dt;
        j = j_next;
        if state.accepted.is_multiple_of(controls.record_every.max(1)) || state.t >= t_end {
            series.push(sample(&state, dt, j));
        }
        if controls.snapshot_every > 0 && state.accepted.is_multiple_of(controls.snapshot_every) {
            snapshots.push((state.t, state.u.values.clone()));
        }
        if let Some(i) = state.u.values.iter().position(|v| !(*v >= 0.0)) {
            events.push(EvolutionEvent::PositivityLoss {
                t: state.t,
                x: state.grid.nodes()[i],
                value: state.u.values[i],
            });
            completed = false;
            break;
        }
    }
    Ok(EvolutionReport {
        state,
        series,
        snapshots,
        events,
        completed,
    })
}

/// Innermost scale from the centre value, `(α_n/u(0))^{2/(n-2)}`.
pub fn centre_scale(dim: Dimension, centre: f64) -> Result<f64> {
    if !(centre > 0.0) {
        return Err(Error::domain("centre value must be positive"));
    }
    Ok((dim.alpha_n / centre).powf(1.0 / dim.m()))
}

/// Fitted bubble scales of one profile, outermost first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleFit {
    pub mu: Vec<f64>,
    /// Root-mean-square misfit in `ln u`.
    pub residual_rms: f64,
    pub reliable: bool,
}

/// Misfit in `ln u` above which a fit is marked unreliable.
pub const FIT_THRESHOLD: f64 = 0.05;

fn tower_model(dim: Dimension, mu: &[f64], r: f64) -> f64 {
    mu.iter().map(|&m| m.powf(-dim.m()) * bubble_value(dim, r / m)).sum()
}

/// Solve a small dense system by Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col] == 0.0 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let pivot = a[col].clone();
        for row in col + 1..n {
            let f = a[row][col] / pivot[col];
            for (x, p) in a[row][col..].iter_mut().zip(&pivot[col..]) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|c| a[i][c] * x[c]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// Scales of a `k`-bubble tower in `(r, u)`: the innermost from the centre
/// value, the others by Levenberg-Marquardt on `ln u` with the innermost held.
pub fn extract_bubble_scales(dim: Dimension, grid: &RadialGrid, u: &[f64], k: usize) -> Result<BubbleFit> {
    if k == 0 || u.len() != grid.len() {
        return Err(Error::config("need k >= 1 and one value per node"));
    }
    if u.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::domain("scale extraction needs a positive profile"));
    }
    let r = grid.nodes();
    let m = dim.m();
    let inner = centre_scale(dim, u[0])?;
    // Starting guesses: local maxima of r^m u, which peak near each scale.
    let g: Vec<f64> = r.iter().zip(u).map(|(&x, &v)| x.powf(m) * v).collect();
    let mut peaks: Vec<f64> = (1..r.len() - 1)
        .filter(|&i| g[i] > g[i - 1] && g[i] >= g[i + 1] && r[i] > 2.0 * inner)
        .map(|i| r[i])
        .collect();
    peaks.sort_by(|a, b| b.total_cmp(a));
    let mut mu: Vec<f64> = (0..k - 1)
        .map(|j| peaks.get(j).copied().unwrap_or(inner * 10f64.powi((k - 1 - j) as i32 * 3)))
        .collect();
    mu.sort_by(|a, b| b.total_cmp(a));
    mu.push(inner);

    let pts: Vec<usize> = (0..r.len()).collect();
    let misfit = |mu: &[f64]| -> f64 {
        pts.iter().map(|&i| (u[i].ln() - tower_model(dim, mu, r[i]).ln()).powi(2)).sum::<f64>()
    };
    let free = k - 1;
    let mut cost = misfit(&mu);
    let mut damping = 1e-3;
    for _ in 0..200 {
        if free == 0 {
            break;
        }
        let mut jtj = vec![vec![0.0; free]; free];
        let mut jte = vec![0.0; free];
        for &i in &pts {
            let model = tower_model(dim, &mu, r[i]);
            let e = u[i].ln() - model.ln();
            // d(ln model)/d(ln μ_j) = -μ_j^{-m} Z(r/μ_j) / model.
            let jac: Vec<f64> = (0..free).map(|j| -mu[j].powf(-m) * kernel_zn1(dim, r[i] / mu[j]) / model).collect();
            for a in 0..free {
                jte[a] += jac[a] * e;
                for b in 0..free {
                    jtj[a][b] += jac[a] * jac[b];
                }
            }
        }
        let mut improved = false;
        while damping < 1e12 {
            let mut sys = jtj.clone();
            for (a, row) in sys.iter_mut().enumerate() {
                row[a] *= 1.0 + damping;
                row[a] += 1e-300;
            }
            let Some(step) = solve_dense(sys, jte.clone()) else {
                damping *= 10.0;
                continue;
            };
            let trial: Vec<f64> = mu
                .iter()
                .enumerate()
                .map(|(j, &v)| if j < free { v * step[j].exp() } else { v })
                .collect();
            let c = misfit(&trial);
            if c < cost {
                let gain = cost - c;
                mu = trial;
                cost = c;
                damping = (damping * 0.3).max(1e-12);
                improved = gain > 1e-15 * cost.max(1e-300);
                break;
            }
            damping *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let residual_rms = (cost / pts.len() as f64).sqrt();
    Ok(BubbleFit {
        mu,
        residual_rms,
        reliable: residual_rms < FIT_THRESHOLD,
    })
}

/// Scales along a run, with fitted `d(μ̂_j²)/dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleDiagnostics {
    pub times: Vec<f64>,
    /// `scales[i][j-1]` is `μ̂_j` at `times[i]`.
    pub scales: Vec<Vec<f64>>,
    /// Least-squares slope of `μ̂_j²` against time.
    pub square_rates: Vec<f64>,
    pub reliable: bool,
}

/// Least-squares slope of `y` against `x`.
pub fn fitted_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() < 2 || x.len() != y.len() {
        return Err(Error::config("a slope needs at least two paired samples"));
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::config("slope over a single abscissa"));
    }
    Ok(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / sxx)
}

/// Apply [`extract_bubble_scales`] to each snapshot and fit the square rates.
pub fn diagnose_series(dim: Dimension, grid: &RadialGrid, snapshots: &[(f64, Vec<f64>)], k: usize) -> Result<BubbleDiagnostics> {
    let fits = snapshots
        .iter()
        .map(|(_, u)| extract_bubble_scales(dim, grid, u, k))
        .collect::<Result<Vec<_>>>()?;
    let times: Vec<f64> = snapshots.iter().map(|s| s.0).collect();
    // Offsets keep the abscissa well conditioned for tiny steps.
    let x: Vec<f64> = times.iter().map(|t| t - times[0]).collect();
    let square_rates = (0..k)
        .map(|j| {
            let y: Vec<f64> = fits.iter().map(|f| f.mu[j] * f.mu[j]).collect();
            fitted_slope(&x, &y)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BubbleDiagnostics {
        times,
        reliable: fits.iter().all(|f| f.reliable),
        scales: fits.into_iter().map(|f| f.mu).collect(),
        square_rates,
    })
}

/// `τ(t) = τ₀ + ∫_{t₀}^t μ_{0j}(s)^{-2} ds` in closed form.
pub fn inner_time(table: &ConstantTable, j: usize, t0: f64, t: f64, tau0: f64) -> Result<f64> {
    if j == 0 || j > table.k || !(t0 < 0.0 && t < 0.0) {
        return Err(Error::domain("inner time needs 1 <= j <= k and negative times"));
    }
    let e = 2.0 * table.alpha(j) + 1.0;
    let beta = table.beta(j);
    Ok(tau0 + ((-t0).powf(e) - (-t).powf(e)) / (e * beta * beta))
}

/// Controls of the inner linear flow.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InnerControls {
    pub r_cut: f64,
    /// Decay exponent `a` of the norms.
    pub a: f64,
    pub nodes: usize,
    pub tau_start: f64,
    pub tau_end: f64,
    /// Step `dτ = step_fraction·|τ|`, capped below the resonance of the
    /// slowly growing truncation mode.
    pub step_fraction: f64,
    /// Replace `pU^{p-1}` by `pU^{p-1}(1 - χ(|y|/M))`, removing the potential on `B_M`.
    pub mask: Option<f64>,
    /// Largest tolerated kernel part removed in one step after warm-up,
    /// relative to the largest state norm so far.
    pub ortho_tol: f64,
    /// Profiles are kept for `τ` in this window.
    pub window: (f64, f64),
}

impl Default for InnerControls {
    fn default() -> Self {
        InnerControls {
            r_cut: 40.0,
            a: 0.75,
            nodes: 600,
            tau_start: -1e5,
            tau_end: -1e4,
            step_fraction: 5e-3,
            mask: None,
            ortho_tol: 0.1,
            window: (-2e4, -1e4),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InnerReport {
    pub grid: RadialGrid,
    pub taus: Vec<f64>,
    /// `‖φ(τ)‖^{in,*}` restricted to time `τ`.
    pub phi_norm: Vec<f64>,
    /// `∫|φ(τ)|²`.
    pub l2: Vec<f64>,
    /// `sup_τ ‖φ‖^{in,*} / sup_τ ‖h‖^{in}`.
    pub ratio: f64,
    pub h_norm: f64,
    pub window: Vec<(f64, Vec<f64>)>,
    pub final_phi: Vec<f64>,
    /// Largest unstable eigenvalue of the operator; its mode is projected out.
    pub unstable_eigenvalue: Option<f64>,
    pub ortho_drift: f64,
    pub projection_failed: bool,
}

/// Steps excluded from the orthogonality-drift flag.
pub const WARMUP_STEPS: usize = 10;

/// Step lattice built backward from `tau_end` with `dτ = min(f|τ|, cap)`,
/// so runs from different starts share nodes.
fn tau_lattice(controls: &InnerControls, cap: f64) -> Result<Vec<f64>> {
    let (s, e) = (controls.tau_start, controls.tau_end);
    if !(s < e && e < 0.0) || !(controls.step_fraction > 0.0) {
        return Err(Error::domain("inner flow needs tau_start < tau_end < 0 and a positive step"));
    }
    let mut taus = vec![e];
    let mut tau = e;
    while tau > s {
        tau -= (controls.step_fraction * -tau).min(cap);
        taus.push(tau);
    }
    taus.reverse();
    Ok(taus)
}

/// Remove the `V`-orthogonal projection on `mode`; returns the norm of the removed part.
fn project_out(op: &RadialOperator, v: &mut [f64], mode: &[f64], mode_sq: f64) -> f64 {
    let c = op.dot(v, mode) / mode_sq;
    v.iter_mut().zip(mode).for_each(|(x, z)| *x -= c * z);
    (c * mode_sq.sqrt()).abs()
}

/// Eigenpair of `Δ + V` (Dirichlet) nearest `shift` by inverse iteration,
/// optionally within the complement of `deflate`.
fn nearest_mode(op: &RadialOperator, pot: &[f64], shift: f64, deflate: Option<&[f64]>, iters: usize) -> Result<(f64, Vec<f64>)> {
    let m = op.len();
    let mut x: Vec<f64> = op.r.iter().map(|&r| 1.0 / (1.0 + r * r)).collect();
    x[m - 1] = 0.0;
    let mut lambda = 0.0;
    for _ in 0..iters {
        if let Some(d) = deflate {
            project_out(op, &mut x, d, op.dot(d, d));
        }
        // (Δ + V - s)y = x  ⇔  (I - dt(Δ + V))y = -dt·x with dt = 1/s.
        let dt = 1.0 / shift;
        let rhs: Vec<f64> = x.iter().map(|v| -dt * v).collect();
        let y = op.implicit_solve(dt, Some(pot), &rhs)?;
        let ny = op.dot(&y, &y).sqrt();
        x = y.iter().map(|v| v / ny).collect();
        let ax: Vec<f64> = op.apply(&x).iter().zip(&x).zip(pot).map(|((a, v), p)| a + p * v).collect();
        lambda = op.dot(&x, &ax);
    }
    Ok((lambda, x))
}

/// Evolve `φ_τ = Δφ + pU^{p-1}φ + h` on `B_{8R}` from zero data, with zero
/// boundary values, backward Euler steps and the kernel `Z_{n+1}` projected
/// out of forcing and state. The unstable ground state is projected out too:
/// the bounded ancient solution's component along it is fixed by future
/// forcing and cannot be reached by forward stepping.
pub fn evolve_inner_linear(
    dim: Dimension,
    h: &dyn Fn(f64, f64) -> f64,
    nu: &dyn Fn(f64) -> f64,
    controls: &InnerControls,
) -> Result<InnerReport> {
    let r_ball = 8.0 * controls.r_cut;
    let grid = RadialGrid::mapped(0.5, r_ball, controls.nodes)?;
    let op = RadialOperator::new(dim.n, &grid, FarField::Dirichlet)?;
    let r = grid.nodes();
    let pot: Vec<f64> = r
        .iter()
        .map(|&y| potential(dim, y) * controls.mask.map_or(1.0, |m| 1.0 - base_cutoff(y / m)))
        .collect();
    let z: Vec<f64> = r.iter().map(|&y| kernel_zn1(dim, y)).collect();
    let z_sq = op.dot(&z, &z);
    let (lambda0, ground) = nearest_mode(&op, &pot, 12.0, None, 60)?;
    let unstable = (lambda0 > 0.0).then_some(lambda0);
    let ground_sq = op.dot(&ground, &ground);
    // Truncating the ball turns the kernel into a slightly growing mode;
    // backward Euler must not step across its resonance `dτ = 1/λ`.
    let mut cap = f64::INFINITY;
    if unstable.is_some() {
        let (lambda1, _) = nearest_mode(&op, &pot, 1e-2, Some(&ground), 400)?;
        if lambda1 > 0.0 {
            cap = 0.5 / lambda1;
        }
    }
    let taus = tau_lattice(controls, cap)?;
    let nf = dim.nf();
    let a = controls.a;
    let phi_scale = controls.r_cut.powf(-(nf + 1.0 - a));

    let mut phi = vec![0.0; r.len()];
    let mut out_taus = vec![taus[0]];
    let mut phi_norm = vec![0.0];
    let mut l2 = vec![0.0];
    let mut h_norm = 0.0f64;
    let mut drift = 0.0f64;
    let mut largest = 0.0f64;
    let mut window = vec![];
    for w in taus.windows(2) {
        let (tau, dt) = (w[1], w[1] - w[0]);
        let mut hv: Vec<f64> = r.iter().map(|&y| h(y, tau)).collect();
        project_out(&op, &mut hv, &z, z_sq);
        let inv_nu = 1.0 / nu(tau);
        h_norm = h_norm.max(r.iter().zip(&hv).map(|(&y, v)| inv_nu * (1.0 + y * y).powf(0.5 * (2.0 + a)) * v.abs()).fold(0.0, f64::max));
        let rhs: Vec<f64> = phi.iter().zip(&hv).map(|(p, f)| p + dt * f).collect();
        phi = op.implicit_solve(dt, Some(&pot), &rhs)?;
        let removed = project_out(&op, &mut phi, &z, z_sq);
        // Starting from zero data the first steps are almost all kernel.
        largest = largest.max(op.dot(&phi, &phi).sqrt());
        if out_taus.len() > WARMUP_STEPS && largest > 0.0 {
            drift = drift.max(removed / largest);
        }
        if unstable.is_some() {
            project_out(&op, &mut phi, &ground, ground_sq);
        }
        let norm = phi_scale
            * inv_nu
            * r.iter().zip(&phi).map(|(&y, v)| (1.0 + y * y).powf(0.5 * (nf + 1.0)) * v.abs()).fold(0.0, f64::max);
        out_taus.push(tau);
        phi_norm.push(norm);
        l2.push(sphere_area(dim.n) * op.dot(&phi, &phi));
        if tau >= controls.window.0 && tau <= controls.window.1 {
            window.push((tau, phi.clone()));
        }
    }
    let sup_phi = phi_norm.iter().fold(0.0f64, |m, v| m.max(*v));
    Ok(InnerReport {
        grid,
        taus: out_taus,
        phi_norm,
        l2,
        ratio: if h_norm > 0.0 { sup_phi / h_norm } else { 0.0 },
        h_norm,
        window,
        final_phi: phi,
        unstable_eigenvalue: unstable,
        ortho_drift: drift,
        projection_failed: drift > controls.ortho_tol,
    })
}

/// Largest relative sup-difference of two runs over their common window samples.
pub fn window_disagreement(a: &InnerReport, b: &InnerReport) -> Result<f64> {
    let mut worst = 0.0f64;
    let mut common = 0;
    for (ta, pa) in &a.window {
        if let Some((_, pb)) = b.window.iter().find(|(tb, _)| (tb / ta - 1.0).abs() < 1e-12) {
            let scale = pa.iter().chain(pb).fold(0.0f64, |m, v| m.max(v.abs()));
            let diff = pa.iter().zip(pb).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            if scale > 0.0 {
                worst = worst.max(diff / scale);
            }
            common += 1;
        }
    }
    if common == 0 {
        return Err(Error::config("the two runs share no window samples"));
    }
    Ok(worst)
}
