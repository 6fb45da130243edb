//! The glued approximation `u_* = Ū + φ₀`, its flow residual and the
//! pieces of the inner-outer system built on top of it.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{ConstantTable, TowerScales};
use crate::corrector::CorrectorSolution;
use crate::error::{Error, Result};
use crate::grid::{CubicSpline, RadialField, RadialGrid};
use crate::parameters::ParameterPath;
use crate::profiles::{
    Dimension, bubble_d1, bubble_d2, bubble_value, dt_scaled_bubble, kernel_zn1, potential, radial_laplacian, scaled_bubble,
    CutoffFamily, CutoffJet,
};
use crate::quadrature::{integrate_pieces, QuadOptions};
use crate::weights::{weighted_norm, FieldSample, NormKind, NormReading};

/// Nodes per decade required below the innermost scale.
pub const MIN_NODES_PER_DECADE: usize = 16;

/// An outer field `Ψ(|x|)` at the current time.
#[derive(Clone)]
pub enum OuterField {
    Zero,
    Closure(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    /// Linear interpolation between samples, zero beyond the last node.
    Sampled(RadialField),
}

impl std::fmt::Debug for OuterField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OuterField::Zero => write!(f, "OuterField::Zero"),
            OuterField::Closure(_) => write!(f, "OuterField::Closure"),
            OuterField::Sampled(s) => write!(f, "OuterField::Sampled({} nodes)", s.values.len()),
        }
    }
}

impl OuterField {
    pub fn closure(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        OuterField::Closure(Arc::new(f))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            OuterField::Zero => 0.0,
            OuterField::Closure(f) => f(x),
            OuterField::Sampled(field) => {
                let r = field.radii();
                if x > r[r.len() - 1] || x < r[0] {
                    return 0.0;
                }
                let i = r.partition_point(|&v| v <= x).clamp(1, r.len() - 1);
                let (x0, x1) = (r[i - 1], r[i]);
                let w = (x - x0) / (x1 - x0);
                (1.0 - w) * field.values[i - 1] + w * field.values[i]
            }
        }
    }

    /// Largest radius where the field is known.
    pub fn reach(&self) -> f64 {
        match self {
            OuterField::Sampled(f) => f.grid.r_max(),
            _ => f64::INFINITY,
        }
    }
}

/// An inner field `φ_j(y)` on `B_{8R}` with spline derivatives.
#[derive(Debug, Clone)]
pub struct InnerField {
    pub field: RadialField,
    spline: CubicSpline,
}

impl InnerField {
    pub fn new(field: RadialField) -> Result<Self> {
        let r = field.radii().to_vec();
        let v = field.values.clone();
        let m = r.len();
        if m < 3 {
            return Err(Error::config("inner field needs at least three samples"));
        }
        let end_slope = (v[m - 1] - v[m - 2]) / (r[m - 1] - r[m - 2]);
        let spline = CubicSpline::clamped(r, v, 0.0, end_slope)?;
        Ok(InnerField { field, spline })
    }

    pub fn from_fn(grid: RadialGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        InnerField::new(RadialField::from_fn(grid, f))
    }

    /// Value and radial derivatives; zero outside the sampled ball.
    pub fn eval(&self, y: f64) -> [f64; 3] {
        if y > self.field.grid.r_max() {
            return [0.0; 3];
        }
        self.spline.eval(y)
    }
}

/// Everything needed to evaluate the approximation at one time.
#[derive(Debug, Clone)]
pub struct AnsatzState {
    pub table: ConstantTable,
    pub phibar: Arc<CorrectorSolution>,
    pub t: f64,
    /// `μ_j = μ_{0j} + μ_{1j}`, index `j-1`.
    pub mu: Vec<f64>,
    pub mudot: Vec<f64>,
    pub mu1: Vec<f64>,
    pub mudot1: Vec<f64>,
    pub inner: Option<Vec<InnerField>>,
    pub outer: Option<OuterField>,
    scales: TowerScales,
}

impl AnsatzState {
    /// Parameters at leading order, `μ = μ₀`.
    pub fn leading_order(table: &ConstantTable, phibar: Arc<CorrectorSolution>, t: f64) -> Result<Self> {
        let k = table.k;
        Self::with_perturbation(table, phibar, t, vec![0.0; k], vec![0.0; k])
    }

    /// Parameters `μ₀ + μ₁` with the perturbation given at time `t`.
    pub fn with_perturbation(table: &ConstantTable, phibar: Arc<CorrectorSolution>, t: f64, mu1: Vec<f64>, mudot1: Vec<f64>) -> Result<Self> {
        if t > table.params.t0 {
            return Err(Error::domain(format!("time {t} is later than t0 = {}", table.params.t0)));
        }
        let k = table.k;
        if mu1.len() != k || mudot1.len() != k {
            return Err(Error::config(format!("perturbation must have {k} components")));
        }
        let scales = table.scales(t)?;
        let mu: Vec<f64> = (1..=k).map(|j| scales.mu0(j) + mu1[j - 1]).collect();
        let mudot: Vec<f64> = (1..=k).map(|j| scales.mudot0(j) + mudot1[j - 1]).collect();
        if mu.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::domain("perturbed scales must stay positive"));
        }
        Ok(AnsatzState {
            table: table.clone(),
            phibar,
            t,
            mu,
            mudot,
            mu1,
            mudot1,
            inner: None,
            outer: None,
            scales,
        })
    }

    /// State at sample `i` of a parameter path.
    pub fn from_path(table: &ConstantTable, path: &ParameterPath, i: usize, phibar: Arc<CorrectorSolution>) -> Result<Self> {
        if path.k() != table.k || i >= path.times.len() {
            return Err(Error::config("parameter path does not match the table or the sample index"));
        }
        let mu1 = (0..table.k).map(|j| path.mu1[j][i]).collect();
        let mudot1 = (0..table.k).map(|j| path.mudot1[j][i]).collect();
        Self::with_perturbation(table, phibar, path.times[i], mu1, mudot1)
    }

    /// Attach inner fields `φ_j` on `B_{8R}`.
    pub fn with_inner(mut self, fields: Vec<InnerField>) -> Result<Self> {
        if fields.len() != self.table.k {
            return Err(Error::config(format!("expected {} inner fields", self.table.k)));
        }
        let ball = 8.0 * self.table.params.r_cut;
        if fields.iter().any(|f| f.field.grid.r_max() < ball * (1.0 - 1e-12)) {
            return Err(Error::config(format!("inner field grids must cover B_8R (radius {ball})")));
        }
        self.inner = Some(fields);
        Ok(self)
    }

    pub fn with_outer(mut self, psi: OuterField) -> Self {
        self.outer = Some(psi);
        self
    }

    pub fn k(&self) -> usize {
        self.table.k
    }

    pub fn scales(&self) -> &TowerScales {
        &self.scales
    }

    fn m(&self) -> f64 {
        self.table.dim.m()
    }

    /// `Ū(x) = Σ U_j`.
    pub fn ubar(&self, x: f64) -> f64 {
        self.mu.iter().map(|&mu| scaled_bubble(self.table.dim, mu, x)).sum()
    }

    /// `φ_{0j}`, its radial derivative, Laplacian, time derivative and
    /// `(Δ + pU_j^{p-1})φ_{0j}`.
    fn corrector_jet(&self, j: usize, x: f64) -> [f64; 5] {
        let m = self.m();
        let mu = self.mu[j - 1];
        let rate = self.mudot[j - 1] / mu;
        let amp = (m * (self.scales.lambda0(j) / mu).ln()).exp();
        let y = x / mu;
        let [v, d1, lap, op] = self.corrector_profile(y);
        let dt = amp * ((-m * rate + m * self.scales.lambda0_log_rate(j)) * v - rate * y * d1);
        let inv2 = 1.0 / (mu * mu);
        [amp * v, amp * d1 / mu, amp * lap * inv2, dt, amp * op * inv2]
    }

    /// `φ̄, φ̄'` and `Δφ̄` at `y`. Inside the solved range the Laplacian comes
    /// from the corrector equation: the spline's second derivative is too
    /// noisy next to the large kernel component of `φ̄`.
    /// The last entry is `Δφ̄ + pU^{p-1}φ̄`.
    fn corrector_profile(&self, y: f64) -> [f64; 4] {
        let dim = self.table.dim;
        let [v, d1, d2] = self.phibar.eval(y);
        let pot = potential(dim, y);
        if y > self.phibar.phi.grid.r_max() {
            let lap = radial_laplacian(dim.n, y, d1, d2);
            return [v, d1, lap, lap + pot * v];
        }
        let z = kernel_zn1(dim, y);
        let rhs = bubble_value(dim, 0.0) * pot + (self.table.c_star - self.phibar.projection_coeff) * z;
        [v, d1, -pot * v - rhs, -rhs]
    }

    /// `φ₀(x) = Σ_{j≥2} φ_{0j} χ_j`.
    pub fn phi0(&self, x: f64) -> f64 {
        (2..=self.k())
            .map(|j| {
                let chi = CutoffFamily::chi(&self.scales, j).expect("valid index").value(x);
                if chi == 0.0 {
                    0.0
                } else {
                    self.corrector_jet(j, x)[0] * chi
                }
            })
            .sum()
    }

    /// `u_* = Ū + φ₀`.
    pub fn ustar(&self, x: f64) -> f64 {
        self.ubar(x) + self.phi0(x)
    }
}

/// `|b+d|^{p-1}(b+d) - b^p - p b^{p-1} d` for `b > 0`, by series when `d/b` is small.
pub fn power_excess(base: f64, inc: f64, p: f64) -> f64 {
    let r = inc / base;
    let bp = base.powf(p);
    if r.abs() < 1e-3 {
        let mut c = p * (p - 1.0) / 2.0;
        let mut term = r * r;
        let mut sum = c * term;
        for k in 3..8 {
            c *= (p - (k as f64 - 1.0)) / k as f64;
            term *= r;
            sum += c * term;
        }
        return bp * sum;
    }
    let s = 1.0 + r;
    bp * (s.abs().powf(p - 1.0) * s - 1.0 - p * r)
}

/// Radii resolving every scale of the tower at time `t`: a global geometric
/// grid from below `μ_{0k}` to `10(-t)^{1/2}`, refined around each
/// transition radius `μ̄_{0j}`, plus the origin.
pub fn physical_grid(table: &ConstantTable, t: f64, per_decade: usize) -> Result<RadialGrid> {
    let s = table.scales(t)?;
    let inner = s.mu0(table.k);
    let mut grids = vec![RadialGrid::log_spaced(1e-3 * inner, 10.0 * (-t).sqrt(), per_decade)?];
    for j in 2..=table.k {
        let mb = s.mubar0(j);
        grids.push(RadialGrid::log_spaced(0.2 * mb, 1.2 * mb, 4 * per_decade)?);
    }
    let merged = RadialGrid::union(&grids)?;
    let mut nodes = vec![0.0];
    nodes.extend_from_slice(merged.nodes());
    RadialGrid::from_nodes(nodes)
}

/// Reject grids that under-resolve the innermost scale or a transition layer.
pub fn check_resolution(table: &ConstantTable, t: f64, grid: &RadialGrid) -> Result<()> {
    let s = table.scales(t)?;
    let inner = s.mu0(table.k);
    let have = grid.nodes_in_decade_below(inner);
    if have < MIN_NODES_PER_DECADE {
        return Err(Error::config(format!(
            "grid has {have} nodes in the decade below the innermost scale {inner:e}; need {MIN_NODES_PER_DECADE}"
        )));
    }
    for j in 2..=table.k {
        let mb = s.mubar0(j);
        let layer = grid.nodes().iter().filter(|&&r| r >= 0.5 * mb && r <= mb).count();
        if layer < 8 {
            return Err(Error::config(format!(
                "grid has {layer} nodes across the transition layer near {mb:e}; need 8"
            )));
        }
    }
    Ok(())
}

/// `u_*` sampled on `grid`.
pub fn assemble_ustar_on(state: &AnsatzState, grid: &RadialGrid) -> Result<RadialField> {
    check_resolution(&state.table, state.t, grid)?;
    let values = grid.nodes().par_iter().map(|&x| state.ustar(x)).collect();
    RadialField::new(grid.clone(), values)
}

/// `u_*` on the default physical grid.
pub fn assemble_ustar(state: &AnsatzState) -> Result<RadialField> {
    let grid = physical_grid(&state.table, state.t, 40)?;
    assemble_ustar_on(state, &grid)
}

/// Terms of the residual expansion at one radius.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualComponents {
    /// `-∂_t U_1`.
    pub leading: f64,
    /// `Σ_{j≥2} E_j χ_j`: the inner errors the correctors remove.
    pub inner: f64,
    /// Interaction error left outside the correction regions.
    pub interaction: f64,
    /// `Σ p(Ū^{p-1} - U_j^{p-1}) φ_{0j} χ_j`.
    pub potential: f64,
    /// Cutoff commutators and time derivative of the corrections.
    pub gluing: f64,
    /// `N_Ū[φ₀]`.
    pub nonlinear: f64,
}

impl ResidualComponents {
    pub fn sum(&self) -> f64 {
        self.leading + self.inner + self.interaction + self.potential + self.gluing + self.nonlinear
    }
}

/// One residual sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualSample {
    pub x: f64,
    pub ustar: f64,
    /// `S[u_*]` as the sum of its components.
    pub residual: f64,
    /// `S[u_*]` evaluated term by term. Loses all accuracy at the bubble
    /// cores, where `u_*^p` and `U_j^p` cancel.
    pub direct: f64,
    pub components: ResidualComponents,
    /// `S[u_*]` minus the modulation part `Σ μ_j^{-(n+2)/2} D_j η_j`.
    pub eout: f64,
    /// Size of the largest individual term, for round-off comparisons.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub t: f64,
    pub samples: Vec<ResidualSample>,
    /// `max |direct - Σ components| / scale`.
    pub identity_defect: f64,
    pub eout_norm: NormReading,
}

/// Modulation term `D_j[μ₁](y)` in the variables of bubble `j`.
pub fn modulation_term(state: &AnsatzState, j: usize, y: f64) -> Result<f64> {
    let k = state.k();
    if j == 0 || j > k {
        return Err(Error::domain(format!("modulation index {j} outside [1, {k}]")));
    }
    let dim = state.table.dim;
    let z = kernel_zn1(dim, y);
    if j == 1 {
        return Ok(state.mu[0] * state.mudot1[0] * z);
    }
    let s = &state.scales;
    let (mu0, mu0p) = (s.mu0(j), s.mu0(j - 1));
    let m = dim.m();
    let lead = (s.mudot0(j) * state.mu1[j - 1] + mu0 * state.mudot1[j - 1]) * z;
    let shift = state.mu1[j - 1] / mu0 - state.mu1[j - 2] / mu0p;
    Ok(lead + m * potential(dim, y) * bubble_value(dim, 0.0) * s.lambda0(j).powf(m) * shift)
}

/// `U(y) - U(0)` without cancellation near the centre.
fn bubble_drop(dim: Dimension, mu: f64, x: f64) -> f64 {
    let y = x / mu;
    mu.powf(-dim.m()) * dim.alpha_n * (-dim.m() * (y * y).ln_1p()).exp_m1()
}

/// `b^q - (b+d)^q`-style differences as `b^q((1 + d/b)^q - 1)`.
fn power_shift(base: f64, inc: f64, q: f64) -> f64 {
    base.powf(q) * (q * (inc / base).ln_1p()).exp_m1()
}

fn residual_at(state: &AnsatzState, x: f64, chis: &[CutoffFamily], etas: &[CutoffFamily]) -> ResidualSample {
    let dim = state.table.dim;
    let p = dim.p;
    let n = dim.n;
    let k = state.k();
    let u: Vec<f64> = state.mu.iter().map(|&mu| scaled_bubble(dim, mu, x)).collect();
    let dtu: Vec<f64> = (0..k)
        .map(|i| dt_scaled_bubble(dim, state.mu[i], state.mudot[i], x).expect("positive scale"))
        .collect();
    let ubar: f64 = u.iter().sum();
    let sum_up: f64 = u.iter().map(|v| v.powf(p)).sum();
    let jets: Vec<CutoffJet> = chis.iter().map(|c| c.jet(x)).collect();
    let chi = |j: usize| if j >= 2 { jets[j - 2].value } else { 0.0 };

    let mut c = ResidualComponents {
        leading: -dtu[0],
        ..Default::default()
    };

    // Expand Ū^p around the dominant bubble so the huge powers cancel exactly.
    let d = (0..k).max_by(|&a, &b| u[a].total_cmp(&u[b])).expect("k >= 1") + 1;
    let rest = ubar - u[d - 1];
    let pot_d = p * u[d - 1].powf(p - 1.0);
    // rest - χ_d U_{d-1}(0), split so that no large terms cancel.
    let mut shifted = rest;
    if d >= 2 {
        let others: f64 = (1..=k).filter(|&i| i != d && i != d - 1).map(|i| u[i - 1]).sum();
        shifted = bubble_drop(dim, state.mu[d - 2], x) + (1.0 - chi(d)) * scaled_bubble(dim, state.mu[d - 2], 0.0) + others;
    }
    let mut interaction = power_excess(u[d - 1], rest, p) + pot_d * shifted;
    interaction -= (1..=k).filter(|&i| i != d).map(|i| u[i - 1].powf(p)).sum::<f64>();
    let mut scale = ubar.powf(p) + sum_up + dtu[0].abs();

    let mut phi0 = 0.0;
    let mut lap_corr = 0.0;
    let mut dt_corr = 0.0;
    for j in 2..=k {
        let jet = jets[j - 2];
        let centre = p * u[j - 1].powf(p - 1.0) * scaled_bubble(dim, state.mu[j - 2], 0.0);
        if j != d {
            interaction -= centre * jet.value;
        }
        interaction -= (1.0 - jet.value) * dtu[j - 1];
        scale += centre.abs() + dtu[j - 1].abs();
        if jet.value == 0.0 && jet.d1 == 0.0 {
            continue;
        }
        let [v, d1, lap, dt, op] = state.corrector_jet(j, x);
        let lap_chi = radial_laplacian(n, x, jet.d1, jet.d2);
        c.inner += (op - dtu[j - 1] + centre) * jet.value;
        c.potential += p * power_shift(u[j - 1], ubar - u[j - 1], p - 1.0) * v * jet.value;
        c.gluing += 2.0 * d1 * jet.d1 + lap_chi * v - (dt * jet.value + v * jet.dt);
        phi0 += v * jet.value;
        lap_corr += lap * jet.value + 2.0 * d1 * jet.d1 + v * lap_chi;
        dt_corr += dt * jet.value + v * jet.dt;
        scale += (lap * jet.value).abs()
            + (2.0 * d1 * jet.d1).abs()
            + (v * lap_chi).abs()
            + (dt * jet.value).abs()
            + (v * jet.dt).abs()
            + (p * u[j - 1].powf(p - 1.0) * v).abs();
    }
    c.interaction = interaction;
    c.nonlinear = power_excess(ubar, phi0, p);
    let ustar = ubar + phi0;
    scale += ustar.abs().powf(p);
    let dt_total: f64 = dtu.iter().sum::<f64>() + dt_corr;
    // Term by term, using ΔU_j = -U_j^p.
    let direct = -dt_total - sum_up + lap_corr + ustar.abs().powf(p - 1.0) * ustar;
    let residual = c.sum();
    let modulation: f64 = (1..=k)
        .map(|j| {
            let eta = etas[j - 1].value(x);
            if eta == 0.0 {
                return 0.0;
            }
            let mu = state.mu[j - 1];
            mu.powf(-0.5 * (dim.nf() + 2.0)) * modulation_term(state, j, x / mu).expect("valid index") * eta
        })
        .sum();
    ResidualSample {
        x,
        ustar,
        residual,
        direct,
        components: c,
        eout: residual - modulation,
        scale,
    }
}

/// `S[u_*] = -∂_t u_* + Δu_* + |u_*|^{p-1}u_*` and its expansion on `grid`.
///
/// Time derivatives go through `(μ_j, μ̇_j)` analytically; bubble Laplacians
/// are exact and the corrector's come from its spline.
pub fn flow_residual_on(state: &AnsatzState, grid: &RadialGrid) -> Result<ResidualReport> {
    check_resolution(&state.table, state.t, grid)?;
    let k = state.k();
    let chis: Vec<CutoffFamily> = (2..=k).map(|j| CutoffFamily::chi(&state.scales, j)).collect::<Result<_>>()?;
    let etas: Vec<CutoffFamily> = (1..=k)
        .map(|j| CutoffFamily::eta(&state.scales, j, state.table.params.r_cut))
        .collect::<Result<_>>()?;
    let samples: Vec<ResidualSample> = grid.nodes().par_iter().map(|&x| residual_at(state, x, &chis, &etas)).collect();
    let identity_defect = samples
        .iter()
        .map(|s| (s.direct - s.residual).abs() / s.scale.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    let field: Vec<FieldSample> = samples
        .iter()
        .map(|s| FieldSample {
            x: s.x,
            t: state.t,
            value: s.eout,
        })
        .collect();
    let eout_norm = weighted_norm(&state.table, &field, NormKind::Out)?;
    Ok(ResidualReport {
        t: state.t,
        samples,
        identity_defect,
        eout_norm,
    })
}

pub fn flow_residual(state: &AnsatzState) -> Result<ResidualReport> {
    let grid = physical_grid(&state.table, state.t, 40)?;
    flow_residual_on(state, &grid)
}

/// Scaled inner error `Δφ̄ + pU^{p-1}φ̄ + h̄` of bubble `j ≥ 2` at leading order,
/// i.e. `E_j μ_j^{(n+2)/2} λ_{0j}^{-(n-2)/2}` as a function of `y`.
pub fn inner_error_profile(state: &AnsatzState, j: usize, y: f64) -> Result<f64> {
    if j < 2 || j > state.k() {
        return Err(Error::domain(format!("inner error index {j} outside [2, {}]", state.k())));
    }
    let mu = state.mu[j - 1];
    let x = y * mu;
    let dim = state.table.dim;
    let op = state.corrector_jet(j, x)[4];
    let u = scaled_bubble(dim, mu, x);
    let dtu = dt_scaled_bubble(dim, mu, state.mudot[j - 1], x)?;
    let centre = dim.p * u.powf(dim.p - 1.0) * scaled_bubble(dim, state.mu[j - 2], 0.0);
    let e = op - dtu + centre;
    Ok(e * mu.powf(0.5 * (dim.nf() + 2.0)) / state.scales.lambda0(j).powf(dim.m()))
}

fn ball_quad(f: impl Fn(f64) -> f64, breaks: &[f64], r_ball: f64, n: u32) -> Result<f64> {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|b| *b > 0.0 && *b < r_ball).collect();
    pts.push(0.0);
    pts.push(1.0f64.min(r_ball));
    pts.push(r_ball);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let nm1 = n as i32 - 1;
    Ok(integrate_pieces(|r| f(r) * r.powi(nm1), &pts, QuadOptions::rel(1e-11).with_abs(1e-300))?.value)
}

/// `∫_{B_{8R}} pU^{p-1}Z` and `∫_{B_{8R}} Z²` (radial parts).
pub fn ball_moments(state: &AnsatzState) -> Result<(f64, f64)> {
    let dim = state.table.dim;
    let rb = 8.0 * state.table.params.r_cut;
    let pz = ball_quad(|r| potential(dim, r) * kernel_zn1(dim, r), &[], rb, dim.n)?;
    let zz = ball_quad(|r| kernel_zn1(dim, r).powi(2), &[], rb, dim.n)?;
    Ok((pz, zz))
}

fn outer_or_zero(state: &AnsatzState) -> &OuterField {
    static ZERO: OuterField = OuterField::Zero;
    state.outer.as_ref().unwrap_or(&ZERO)
}

fn check_outer_reach(state: &AnsatzState, j: usize) -> Result<()> {
    let need = 8.0 * state.table.params.r_cut * state.mu[j - 1];
    let reach = outer_or_zero(state).reach();
    if reach < need * (1.0 - 1e-12) {
        return Err(Error::config(format!("outer field known up to {reach:e}, need {need:e}")));
    }
    Ok(())
}

/// `H_j(y) = μ_j^{(n-2)/2} ζ_j(μ_j y) pU(y)^{p-1} Ψ(μ_j y) + D_j[μ₁](y)` on `grid ⊂ [0, 8R]`.
pub fn inner_rhs_hj(state: &AnsatzState, j: usize, grid: &RadialGrid) -> Result<RadialField> {
    if j == 0 || j > state.k() {
        return Err(Error::domain(format!("inner index {j} outside [1, {}]", state.k())));
    }
    check_outer_reach(state, j)?;
    let dim = state.table.dim;
    let mu = state.mu[j - 1];
    let zeta = CutoffFamily::zeta(&state.scales, j, state.table.params.r_cut)?;
    let psi = outer_or_zero(state);
    let amp = mu.powf(dim.m());
    let values = grid
        .nodes()
        .iter()
        .map(|&y| {
            let z = zeta.value(mu * y);
            let coupling = if z == 0.0 { 0.0 } else { amp * z * potential(dim, y) * psi.eval(mu * y) };
            Ok(coupling + modulation_term(state, j, y)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    RadialField::new(grid.clone(), values)
}

fn zeta_breaks(state: &AnsatzState, j: usize) -> Vec<f64> {
    let r = state.table.params.r_cut;
    let q = state.scales.mu0(j) / state.mu[j - 1];
    vec![q / r, 2.0 * q / r, q * r, 2.0 * q * r]
}

/// `∫_{B_{8R}} ζ_j(μ_j y) pU^{p-1} Z Ψ(μ_j y) dy` (radial part).
fn coupling_projection(state: &AnsatzState, j: usize) -> Result<f64> {
    check_outer_reach(state, j)?;
    let dim = state.table.dim;
    let mu = state.mu[j - 1];
    let zeta = CutoffFamily::zeta(&state.scales, j, state.table.params.r_cut)?;
    let psi = outer_or_zero(state);
    if matches!(psi, OuterField::Zero) {
        return Ok(0.0);
    }
    ball_quad(
        |y| {
            let z = zeta.value(mu * y);
            if z == 0.0 {
                0.0
            } else {
                z * potential(dim, y) * kernel_zn1(dim, y) * psi.eval(mu * y)
            }
        },
        &zeta_breaks(state, j),
        8.0 * state.table.params.r_cut,
        dim.n,
    )
}

/// The forcing `M_j[Ψ, μ₁](t)` of the reduced parameter equations.
///
/// For `j ≥ 2` it includes the correction from truncating the projection
/// integrals to `B_{8R}`, which is of order `R^{-2}`.
pub fn orthogonality_forcing(state: &AnsatzState, j: usize) -> Result<f64> {
    let k = state.k();
    if j == 0 || j > k {
        return Err(Error::domain(format!("forcing index {j} outside [1, {k}]")));
    }
    let dim = state.table.dim;
    let (pz, zz) = ball_moments(state)?;
    let proj = coupling_projection(state, j)?;
    let mu = state.mu[j - 1];
    if j == 1 {
        return Ok(-mu.powf(dim.m()) / mu * proj / zz);
    }
    let s = &state.scales;
    let c_ball = -bubble_value(dim, 0.0) * pz / zz;
    let shift = state.mu1[j - 1] / s.mu0(j) - state.mu1[j - 2] / s.mu0(j - 1);
    let truncation = dim.m() * (c_ball / state.table.c_star - 1.0) * s.mudot0(j) * shift;
    Ok(-mu.powf(dim.m()) / s.mu0(j) * proj / zz + truncation)
}

/// Coefficient of `Z_{n+1}` in `H_j`: `∫_{B_{8R}} H_j Z / ∫_{B_{8R}} Z²`.
pub fn projection_coefficient(state: &AnsatzState, j: usize) -> Result<f64> {
    if j == 0 || j > state.k() {
        return Err(Error::domain(format!("projection index {j} outside [1, {}]", state.k())));
    }
    let dim = state.table.dim;
    let (_, zz) = ball_moments(state)?;
    let proj = coupling_projection(state, j)?;
    let modulation = ball_quad(
        |y| modulation_term(state, j, y).unwrap_or(f64::NAN) * kernel_zn1(dim, y),
        &[],
        8.0 * state.table.params.r_cut,
        dim.n,
    )?;
    Ok((state.mu[j - 1].powf(dim.m()) * proj + modulation) / zz)
}

/// Fields of the outer equation produced by the inner corrections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GluingReport {
    pub radii: Vec<f64>,
    /// `B[φ⃗]`: the sum of the three parts below.
    pub coupling: Vec<f64>,
    /// `Σ 2∇η_j·∇φ_j + (Δ - ∂_t)η_j φ_j`.
    pub commutator: Vec<f64>,
    /// `Σ p(u_*^{p-1} - U_j^{p-1}) φ_j η_j`.
    pub mismatch: Vec<f64>,
    /// `-Σ μ̇_j ∂_{μ_j}φ_j η_j`.
    pub dilation: Vec<f64>,
    /// `V = pu_*^{p-1} - Σ ζ_j pU_j^{p-1}`.
    pub potential: Vec<f64>,
    /// `N_{u_*}(Σ φ_j η_j + Ψ)`.
    pub nonlinear: Vec<f64>,
}

/// `B[φ⃗]`, `V` and `N` on `grid`. Missing inner fields count as zero.
pub fn gluing_terms(state: &AnsatzState, grid: &RadialGrid) -> Result<GluingReport> {
    let dim = state.table.dim;
    let (n, p, m) = (dim.n, dim.p, dim.m());
    let k = state.k();
    let r_cut = state.table.params.r_cut;
    let etas: Vec<CutoffFamily> = (1..=k).map(|j| CutoffFamily::eta(&state.scales, j, r_cut)).collect::<Result<_>>()?;
    let zetas: Vec<CutoffFamily> = (1..=k).map(|j| CutoffFamily::zeta(&state.scales, j, r_cut)).collect::<Result<_>>()?;
    let psi = outer_or_zero(state);
    let rows: Vec<([f64; 3], f64, f64)> = grid
        .nodes()
        .par_iter()
        .map(|&x| {
            let us = state.ustar(x);
            let mut parts = [0.0; 3];
            let mut pert = psi.eval(x);
            let mut v = p * us.abs().powf(p - 1.0);
            for j in 1..=k {
                let mu = state.mu[j - 1];
                let uj = scaled_bubble(dim, mu, x);
                v -= zetas[j - 1].value(x) * p * uj.powf(p - 1.0);
                let Some(fields) = &state.inner else { continue };
                let eta = etas[j - 1].jet(x);
                if eta.value == 0.0 && eta.d1 == 0.0 {
                    continue;
                }
                let y = x / mu;
                let [f, f1, _] = fields[j - 1].eval(y);
                let amp = mu.powf(-m);
                let (phi, dphi) = (amp * f, amp * f1 / mu);
                let dmu = -amp / mu * (m * f + y * f1);
                let lap_eta = radial_laplacian(n, x, eta.d1, eta.d2);
                parts[0] += 2.0 * eta.d1 * dphi + (-eta.dt + lap_eta) * phi;
                parts[1] += p * power_shift(uj, us - uj, p - 1.0) * phi * eta.value;
                parts[2] -= state.mudot[j - 1] * dmu * eta.value;
                pert += phi * eta.value;
            }
            (parts, v, power_excess(us, pert, p))
        })
        .collect();
    Ok(GluingReport {
        radii: grid.nodes().to_vec(),
        coupling: rows.iter().map(|r| r.0.iter().sum()).collect(),
        commutator: rows.iter().map(|r| r.0[0]).collect(),
        mismatch: rows.iter().map(|r| r.0[1]).collect(),
        dilation: rows.iter().map(|r| r.0[2]).collect(),
        potential: rows.iter().map(|r| r.1).collect(),
        nonlinear: rows.iter().map(|r| r.2).collect(),
    })
}

/// `sup |u_* - Ū| / Ū` over `grid`.
pub fn dominance_ratio(state: &AnsatzState, grid: &RadialGrid) -> f64 {
    grid.nodes()
        .par_iter()
        .map(|&x| (state.phi0(x) / state.ubar(x)).abs())
        .reduce(|| 0.0, f64::max)
}

/// Whether `U_j < U_{j+1}` on `|x| < μ̄_{j+1}` at every node, for every `j`.
pub fn bubble_ordering_holds(state: &AnsatzState, grid: &RadialGrid) -> bool {
    let dim = state.table.dim;
    (1..state.k()).all(|j| {
        let mb = (state.mu[j] * state.mu[j - 1]).sqrt();
        grid.nodes()
            .iter()
            .filter(|&&x| x < mb)
            .all(|&x| scaled_bubble(dim, state.mu[j - 1], x) < scaled_bubble(dim, state.mu[j], x))
    })
}

/// `max |φ₀| / Σ λ_i U_i χ_i` over nodes where the comparison field is positive.
pub fn corrector_size_ratio(state: &AnsatzState, grid: &RadialGrid) -> Result<f64> {
    let dim = state.table.dim;
    let chis: Vec<CutoffFamily> = (2..=state.k()).map(|j| CutoffFamily::chi(&state.scales, j)).collect::<Result<_>>()?;
    Ok(grid
        .nodes()
        .iter()
        .filter_map(|&x| {
            let cmp: f64 = (2..=state.k())
                .map(|i| state.mu[i - 1] / state.mu[i - 2] * scaled_bubble(dim, state.mu[i - 1], x) * chis[i - 2].value(x))
                .sum();
            (cmp > 0.0).then(|| state.phi0(x).abs() / cmp)
        })
        .fold(0.0, f64::max))
}

/// Bubble profile derivatives in the physical variable, used by the simulator.
pub fn scaled_bubble_jet(state: &AnsatzState, j: usize, x: f64) -> [f64; 3] {
    let dim = state.table.dim;
    let mu = state.mu[j - 1];
    let amp = mu.powf(-dim.m());
    let y = x / mu;
    [amp * bubble_value(dim, y), amp * bubble_d1(dim, y) / mu, amp * bubble_d2(dim, y) / (mu * mu)]
}
