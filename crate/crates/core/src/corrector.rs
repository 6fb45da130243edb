//! Radial solver for `Δφ + pU^{p-1}φ + h = 0` with decay at infinity.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constants::ConstantTable;
use crate::error::{Error, Result};
use crate::grid::{CubicSpline, RadialField, RadialGrid};
use crate::linalg::Tridiagonal;
use crate::profiles::{base_cutoff, bubble_value, kernel_zn1, potential, Dimension};
use crate::quadrature::{radial_integral, sphere_area, QuadOptions};

/// Right-hand side of the elliptic problem: a closed form or samples.
#[derive(Clone)]
pub enum RadialRhs {
    Closure(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    Sampled(RadialField),
}

impl fmt::Debug for RadialRhs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RadialRhs::Closure(_) => write!(f, "RadialRhs::Closure"),
            RadialRhs::Sampled(field) => write!(f, "RadialRhs::Sampled({} nodes)", field.values.len()),
        }
    }
}

impl RadialRhs {
    pub fn closure(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        RadialRhs::Closure(Arc::new(f))
    }

    fn on_grid(&self, grid: &RadialGrid) -> Result<Vec<f64>> {
        match self {
            RadialRhs::Closure(f) => Ok(grid.nodes().iter().map(|&r| f(r)).collect()),
            RadialRhs::Sampled(field) => {
                if field.grid.nodes() != grid.nodes() {
                    return Err(Error::config("sampled right-hand side must live on the solver grid"));
                }
                Ok(field.values.clone())
            }
        }
    }
}

/// `h̄ = pU(0)U^{p-1} + c_* Z_{n+1}`.
pub fn hbar(dim: Dimension, c_star: f64) -> RadialRhs {
    let u0 = bubble_value(dim, 0.0);
    RadialRhs::closure(move |r| u0 * potential(dim, r) + c_star * kernel_zn1(dim, r))
}

/// The elliptic problem on a mapped radial grid.
#[derive(Debug, Clone)]
pub struct EllipticProblem {
    pub dim: Dimension,
    pub rhs: RadialRhs,
    pub grid: RadialGrid,
    /// Expected decay exponent of the solution (−2 for the corrector class).
    pub far_field_order: f64,
}

impl EllipticProblem {
    pub fn new(dim: Dimension, rhs: RadialRhs, grid: RadialGrid) -> Self {
        EllipticProblem {
            dim,
            rhs,
            grid,
            far_field_order: -2.0,
        }
    }
}

/// Solution of the elliptic problem together with diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectorSolution {
    pub dim: Dimension,
    pub phi: RadialField,
    /// Multiple of `Z_{n+1}` removed from the right-hand side.
    pub projection_coeff: f64,
    /// Multiple of `Z_{n+1}` removed from the discrete solution.
    pub kernel_shift: f64,
    /// Fitted exponent of `|φ|` over the last decade of the grid.
    pub tail_exponent: f64,
    /// Max-norm of the continuous-operator residual of the discrete solution.
    pub residual_norm: f64,
    /// Right-hand side after projection, on the grid.
    pub rhs_projected: Vec<f64>,
    spline: CubicSpline,
    far_field_order: f64,
}

impl CorrectorSolution {
    /// Residual of the discrete solution at each grid node.
    pub fn residual_profile(&self) -> Vec<f64> {
        residual_profile(self.dim, &self.phi.grid, &self.phi.values, &self.rhs_projected)
    }

    /// `φ, φ', φ''` at radius `y`; beyond the grid the far-field power is used.
    pub fn eval(&self, y: f64) -> [f64; 3] {
        let r_max = self.spline.x_max();
        if y <= r_max {
            return self.spline.eval(y);
        }
        let q = self.far_field_order;
        let v = self.phi.values[self.phi.values.len() - 1] * (y / r_max).powf(q);
        [v, q * v / y, q * (q - 1.0) * v / (y * y)]
    }

    pub fn value(&self, y: f64) -> f64 {
        self.eval(y)[0]
    }

    /// Least-squares slope of `ln|φ|` against `ln r` over `[r_lo, r_hi]`.
    pub fn fit_tail_exponent(&self, r_lo: f64, r_hi: f64) -> Result<f64> {
        fit_log_slope(self.phi.radii(), &self.phi.values, r_lo, r_hi)
    }
}

/// Least-squares slope of `ln|v|` against `ln r` over nodes in `[r_lo, r_hi]`.
pub fn fit_log_slope(r: &[f64], v: &[f64], r_lo: f64, r_hi: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = r
        .iter()
        .zip(v)
        .filter(|(&ri, &vi)| ri >= r_lo && ri <= r_hi && vi != 0.0 && ri > 0.0)
        .map(|(&ri, &vi)| (ri.ln(), vi.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::domain("not enough nonzero samples for a slope fit"));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

fn tail_check(dim: Dimension, f: &(dyn Fn(f64) -> f64 + Send + Sync)) -> Result<()> {
    let (r1, r2) = (1e4, 1e6);
    let (h1, h2) = (f(r1).abs(), f(r2).abs());
    if h2 == 0.0 {
        return Ok(());
    }
    if h1 == 0.0 || !h2.is_finite() {
        return Err(Error::domain("right-hand side tail is not decaying"));
    }
    let e = (h2 / h1).ln() / (r2 / r1).ln();
    if e > -2.0 + 1e-3 {
        return Err(Error::domain(format!(
            "right-hand side decays like r^{e:.3}; the pairing with Z_(n+1) in dimension {} diverges",
            dim.n
        )));
    }
    Ok(())
}

/// `∫_{ℝⁿ} h Z_{n+1} dy`.
pub fn solvability_integral(dim: Dimension, h: &RadialRhs) -> Result<f64> {
    match h {
        RadialRhs::Closure(f) => {
            tail_check(dim, f.as_ref())?;
            let scale = radial_integral(|r| (f(r) * kernel_zn1(dim, r)).abs(), dim.n, QuadOptions::rel(1e-6))?.value;
            let opts = QuadOptions::rel(1e-13).with_abs(1e-15 * scale);
            Ok(radial_integral(|r| f(r) * kernel_zn1(dim, r), dim.n, opts)?.value)
        }
        RadialRhs::Sampled(field) => {
            let r = field.radii();
            let v = &field.values;
            let n = r.len();
            let slope = fit_log_slope(&r[n.saturating_sub(8)..], &v[n.saturating_sub(8)..], 0.0, f64::INFINITY);
            if let Ok(e) = slope {
                if e > -2.0 + 1e-3 && v[n - 1] != 0.0 {
                    return Err(Error::domain(format!("sampled right-hand side decays like r^{e:.3}; pairing diverges")));
                }
            }
            let w = sphere_area(dim.n);
            let g: Vec<f64> = r
                .iter()
                .zip(v)
                .map(|(&ri, &vi)| vi * kernel_zn1(dim, ri) * ri.powi(dim.n as i32 - 1))
                .collect();
            let mut s = crate::quadrature::trapezoid(r, &g);
            if let Ok(e) = slope {
                // Tail of h·Z·r^{n-1} ~ r^{e+1}.
                let rr = r[n - 1];
                s += -g[n - 1] * rr / (e + 2.0);
            }
            Ok(w * s)
        }
    }
}

fn operator_matrix(dim: Dimension, grid: &RadialGrid, potential_fn: &dyn Fn(f64) -> f64, robin: f64) -> Result<Tridiagonal> {
    let map = grid
        .map()
        .ok_or_else(|| Error::config("the elliptic solver needs a mapped (uniform in log) grid"))?;
    let r = grid.nodes();
    let n = r.len();
    let (ell, dxi) = (map.scale, map.dxi);
    let nf = dim.nf();
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    diag[0] = -2.0 * nf / (r[1] * r[1]) + potential_fn(0.0);
    sup[0] = 2.0 * nf / (r[1] * r[1]);
    for i in 1..n {
        let xi = i as f64 * dxi;
        let rp = ell * xi.cosh();
        let a2 = 1.0 / (dxi * dxi * rp * rp);
        let b1 = (-xi.tanh() / (rp * rp) + (nf - 1.0) / (r[i] * rp)) / (2.0 * dxi);
        sub[i] = a2 - b1;
        diag[i] = -2.0 * a2 + potential_fn(r[i]);
        sup[i] = a2 + b1;
    }
    // Ghost node from φ_r + (robin/r)φ = 0 at the outer boundary.
    let last = n - 1;
    let rr = r[last];
    let ghost = 2.0 * dxi * ell * (last as f64 * dxi).cosh() * robin / rr;
    sub[last] += sup[last];
    diag[last] -= sup[last] * ghost;
    sup[last] = 0.0;
    Ok(Tridiagonal { sub, diag, sup })
}

/// Discretization of `Δ + pU^{p-1}` with a Robin closure `φ' + (2/r)φ = 0`.
pub fn linearized_matrix(dim: Dimension, grid: &RadialGrid) -> Result<Tridiagonal> {
    operator_matrix(dim, grid, &|r| potential(dim, r), 2.0)
}

/// Fourth-order (in ξ) evaluation of `Δφ + pU^{p-1}φ` at interior nodes.
fn continuous_residual(dim: Dimension, grid: &RadialGrid, phi: &[f64], rhs: &[f64]) -> f64 {
    residual_profile(dim, grid, phi, rhs).iter().filter(|v| v.is_finite()).fold(0.0, |w, v| w.max(v.abs()))
}

/// Pointwise `Δφ + pU^{p-1}φ + h` from fourth-order differences in the
/// mapped variable; NaN on the two nodes at each end.
fn residual_profile(dim: Dimension, grid: &RadialGrid, phi: &[f64], rhs: &[f64]) -> Vec<f64> {
    let map = grid.map().expect("mapped grid");
    let r = grid.nodes();
    let (ell, dxi) = (map.scale, map.dxi);
    let nf = dim.nf();
    let mut out = vec![f64::NAN; r.len()];
    for i in 2..r.len().saturating_sub(2) {
        let d1 = (-phi[i + 2] + 8.0 * phi[i + 1] - 8.0 * phi[i - 1] + phi[i - 2]) / (12.0 * dxi);
        let d2 = (-phi[i + 2] + 16.0 * phi[i + 1] - 30.0 * phi[i] + 16.0 * phi[i - 1] - phi[i - 2]) / (12.0 * dxi * dxi);
        let xi = i as f64 * dxi;
        let rp = ell * xi.cosh();
        let lap = (d2 - xi.tanh() * d1) / (rp * rp) + (nf - 1.0) * d1 / (r[i] * rp);
        out[i] = lap + potential(dim, r[i]) * phi[i] + rhs[i];
    }
    out
}

/// Weighted inner product `∫ f g r^{n-1} dr` by the trapezoid rule.
fn radial_dot(r: &[f64], f: &[f64], g: &[f64], n: u32) -> f64 {
    let w: Vec<f64> = (0..r.len()).map(|i| f[i] * g[i] * r[i].powi(n as i32 - 1)).collect();
    crate::quadrature::trapezoid(r, &w)
}

/// Solve `Δφ + pU^{p-1}φ + h = 0` after projecting `h` off `Z_{n+1}`.
pub fn solve_corrector(prob: &EllipticProblem) -> Result<CorrectorSolution> {
    let dim = prob.dim;
    let grid = &prob.grid;
    if grid.nodes()[0] != 0.0 {
        return Err(Error::config("the corrector grid must start at the origin"));
    }
    let h = prob.rhs.on_grid(grid)?;
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("right-hand side is not finite on the grid"));
    }
    let z_sq = crate::constants::integral_kernel_sq(dim, 1e-13)?;
    let coeff = solvability_integral(dim, &prob.rhs)? / z_sq;
    let r = grid.nodes();
    let h_proj: Vec<f64> = r.iter().zip(&h).map(|(&ri, &hi)| hi - coeff * kernel_zn1(dim, ri)).collect();
    let a = linearized_matrix(dim, grid)?;
    let rhs: Vec<f64> = h_proj.iter().map(|v| -v).collect();
    let mut phi = a.solve(&rhs).map_err(|e| match e {
        Error::Numerical { estimate, .. } => Error::numerical(
            "discrete operator is singular on this grid (kernel resonance); project the right-hand side off Z_(n+1)",
            estimate,
        ),
        other => other,
    })?;
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("corrector solve produced non-finite values", f64::INFINITY));
    }
    // The truncated operator is nearly singular along Z_{n+1}; keep the
    // minimal-norm representative on [0, R_max].
    let z: Vec<f64> = r.iter().map(|&ri| kernel_zn1(dim, ri)).collect();
    let kernel_shift = radial_dot(r, &phi, &z, dim.n) / radial_dot(r, &z, &z, dim.n);
    phi.iter_mut().zip(&z).for_each(|(p, zi)| *p -= kernel_shift * zi);
    let r_max = grid.r_max();
    let tail_exponent = fit_log_slope(r, &phi, 0.1 * r_max, r_max).unwrap_or(f64::NAN);
    let residual_norm = continuous_residual(dim, grid, &phi, &h_proj);
    let last = *phi.last().expect("non-empty");
    let spline = CubicSpline::clamped(r.to_vec(), phi.clone(), 0.0, -2.0 * last / r_max)?;
    Ok(CorrectorSolution {
        dim,
        phi: RadialField::new(grid.clone(), phi)?,
        projection_coeff: coeff,
        kernel_shift,
        tail_exponent,
        residual_norm,
        rhs_projected: h_proj,
        spline,
        far_field_order: prob.far_field_order,
    })
}

/// Default grid for the corrector: `ℓ = 1/2`, `R_max = 10³`.
pub fn default_corrector_grid(nodes: usize) -> Result<RadialGrid> {
    RadialGrid::mapped(0.5, 1e3, nodes)
}

/// Max-norm of the second-order discrete `Δ + pU^{p-1}` applied to the exact
/// kernel `Z_{n+1}`, relative to the largest discrete `|ΔZ_{n+1}|`.
pub fn kernel_identity_residual(dim: Dimension, grid: &RadialGrid) -> Result<f64> {
    let lap = operator_matrix(dim, grid, &|_| 0.0, 2.0)?;
    let z: Vec<f64> = grid.nodes().iter().map(|&r| kernel_zn1(dim, r)).collect();
    let dz = lap.apply(&z);
    let n = z.len();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    // The last row carries the Robin closure, which Z_{n+1} does not satisfy.
    for i in 0..n - 1 {
        let r = grid.nodes()[i];
        worst = worst.max((dz[i] + potential(dim, r) * z[i]).abs());
        scale = scale.max(dz[i].abs());
    }
    Ok(worst / scale)
}

/// `φ̄` for the table's dimension on the default grid.
pub fn solve_phibar(table: &ConstantTable, nodes: usize) -> Result<CorrectorSolution> {
    let grid = default_corrector_grid(nodes)?;
    solve_corrector(&EllipticProblem::new(table.dim, hbar(table.dim, table.c_star), grid))
}

/// `φ_{0j}(·, t) = λ_{0j}(t)^{(n-2)/2} φ̄` on φ̄'s grid.
pub fn build_phi0j(table: &ConstantTable, phibar: &CorrectorSolution, j: usize, t: f64) -> Result<RadialField> {
    if j < 2 || j > table.k {
        return Err(Error::domain(format!("no corrector for index {j}; valid range is [2, {}]", table.k)));
    }
    let lam = table.scales(t)?.lambda0(j);
    Ok(phibar.phi.scaled(lam.powf(table.dim.m())))
}

/// `Q(φ, φ) = ∫ |∇φ|² - pU^{p-1}(1 - χ_M)φ²` for a compactly supported
/// sample, with `χ_M(y) = χ(|y| - M)`, integrated as a piecewise-linear field.
pub fn quadratic_form_positivity(dim: Dimension, mask_radius: f64, phi: &RadialField) -> Result<f64> {
    let r = phi.radii();
    let v = &phi.values;
    let n = r.len();
    if n < 3 {
        return Err(Error::domain("test function needs at least three samples"));
    }
    if v[n - 1] != 0.0 || v[n - 2] != 0.0 {
        return Err(Error::domain("test function must vanish near the outer edge of its grid"));
    }
    let w = sphere_area(dim.n);
    let ni = dim.n as i32;
    let mut q = 0.0;
    for i in 0..n - 1 {
        let (r0, r1) = (r[i], r[i + 1]);
        let h = r1 - r0;
        let slope = (v[i + 1] - v[i]) / h;
        // ∫ r^{n-1} dr over the cell, exact.
        let vol = (r1.powi(ni) - r0.powi(ni)) / dim.nf();
        q += slope * slope * vol;
        let pot = |x: f64, val: f64| potential(dim, x) * (1.0 - base_cutoff(x - mask_radius)) * val * val * x.powi(ni - 1);
        let xm = 0.5 * (r0 + r1);
        let vm = 0.5 * (v[i] + v[i + 1]);
        q -= h / 6.0 * (pot(r0, v[i]) + 4.0 * pot(xm, vm) + pot(r1, v[i + 1]));
    }
    Ok(w * q)
}

/// The eigenpair of the discretized `Δ + pU^{p-1}` (Robin closure) whose
/// eigenvalue is nearest to `shift`, by inverse iteration.
pub fn nearest_mode(dim: Dimension, grid: &RadialGrid, shift: f64, iterations: usize) -> Result<(f64, Vec<f64>)> {
    let a = linearized_matrix(dim, grid)?;
    let shifted = a.shifted(shift);
    let r = grid.nodes();
    let mut x: Vec<f64> = r.iter().map(|&ri| 1.0 / (1.0 + ri * ri)).collect();
    let norm = |v: &[f64]| radial_dot(r, v, v, dim.n).sqrt();
    let nx = norm(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let y = shifted.solve(&x)?;
        let ny = norm(&y);
        let next: Vec<f64> = y.iter().map(|v| v / ny).collect();
        let ax = a.apply(&next);
        lambda = radial_dot(r, &next, &ax, dim.n);
        x = next;
    }
    Ok((lambda, x))
}

/// Cosine similarity of two radial samples in `L²(r^{n-1}dr)`.
pub fn radial_cosine(grid: &RadialGrid, f: &[f64], g: &[f64], n: u32) -> f64 {
    let r = grid.nodes();
    radial_dot(r, f, g, n) / (radial_dot(r, f, f, n) * radial_dot(r, g, g, n)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{build_constant_table, compute_cstar, AnalyticParams};

    fn d7() -> Dimension {
        Dimension::new(7).unwrap()
    }

    fn cstar() -> f64 {
        compute_cstar(d7(), 1e-12).unwrap()
    }

    #[test]
    fn hbar_is_orthogonal_to_kernel() {
        let d = d7();
        let v = solvability_integral(d, &hbar(d, cstar())).unwrap();
        let z2 = crate::constants::integral_kernel_sq(d, 1e-12).unwrap();
        assert!(v.abs() < 1e-9 * z2 * cstar());
    }

    #[test]
    fn kernel_pairing_with_itself_positive() {
        let d = d7();
        let v = solvability_integral(d, &RadialRhs::closure(move |r| kernel_zn1(d, r))).unwrap();
        assert!(v > 0.0);
    }

    #[test]
    fn slow_tail_rejected() {
        let d = d7();
        let r = solvability_integral(d, &RadialRhs::closure(|r| (1.0 + r * r).powf(-0.5)));
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let d = d7();
        let grid = default_corrector_grid(801).unwrap();
        let sol = solve_corrector(&EllipticProblem::new(d, RadialRhs::closure(|_| 0.0), grid)).unwrap();
        assert!(sol.phi.sup_abs() == 0.0);
    }

    #[test]
    fn linear_in_rhs() {
        let d = d7();
        let c = cstar();
        let grid = default_corrector_grid(801).unwrap();
        let a = solve_corrector(&EllipticProblem::new(d, hbar(d, c), grid.clone())).unwrap();
        let u0 = bubble_value(d, 0.0);
        let twice = RadialRhs::closure(move |r| 2.0 * (u0 * potential(d, r) + c * kernel_zn1(d, r)));
        let b = solve_corrector(&EllipticProblem::new(d, twice, grid)).unwrap();
        for (x, y) in a.phi.values.iter().zip(&b.phi.values) {
            assert!((2.0 * x - y).abs() <= 1e-10 * y.abs().max(1e-12));
        }
    }

    #[test]
    fn mesh_convergence_second_order() {
        let d = d7();
        let c = cstar();
        let mut res = Vec::new();
        for nodes in [1001usize, 2001, 4001] {
            let g = default_corrector_grid(nodes).unwrap();
            res.push(solve_corrector(&EllipticProblem::new(d, hbar(d, c), g)).unwrap().residual_norm);
        }
        for w in res.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..=4.5).contains(&ratio), "ratio {ratio} from {res:?}");
        }
    }

    #[test]
    fn fredholm_consistency() {
        let d = d7();
        let c = cstar();
        let g = default_corrector_grid(2001).unwrap();
        let sol = solve_corrector(&EllipticProblem::new(d, hbar(d, c), g.clone())).unwrap();
        let field = RadialField::new(g, sol.rhs_projected.clone()).unwrap();
        let v = solvability_integral(d, &RadialRhs::Sampled(field)).unwrap();
        let z2 = crate::constants::integral_kernel_sq(d, 1e-12).unwrap();
        assert!(v.abs() < 1e-5 * z2 * c, "{v}");
    }

    #[test]
    fn phi0j_scaling_and_errors() {
        let table = build_constant_table(7, 2, AnalyticParams::defaults(7)).unwrap();
        let sol = solve_phibar(&table, 801).unwrap();
        assert!(matches!(build_phi0j(&table, &sol, 1, -100.0), Err(Error::Domain(_))));
        let f1 = build_phi0j(&table, &sol, 2, -1e3).unwrap();
        let f2 = build_phi0j(&table, &sol, 2, -1e4).unwrap();
        let lam = table.scales(-1e3).unwrap().lambda0(2).powf(2.5);
        for (a, b) in f1.values.iter().zip(&sol.phi.values) {
            if *b != 0.0 {
                assert!((a / b - lam).abs() < 1e-12 * lam);
            }
        }
        let slope = (f2.sup_abs() / f1.sup_abs()).ln() / 10f64.ln();
        assert!((slope + 5.0).abs() < 1e-9);
    }

    #[test]
    fn kernel_identity_second_order() {
        let d = d7();
        let res: Vec<f64> = [2500usize, 5000, 10000]
            .iter()
            .map(|&m| kernel_identity_residual(d, &default_corrector_grid(m).unwrap()).unwrap())
            .collect();
        for w in res.windows(2) {
            assert!((3.5..=4.5).contains(&(w[0] / w[1])), "{res:?}");
        }
        assert!(res[2] <= 1e-6, "{res:?}");
    }

    #[test]
    fn phibar_tail_decays_like_inverse_square() {
        let table = build_constant_table(7, 2, AnalyticParams::defaults(7)).unwrap();
        let sol = solve_phibar(&table, 4001).unwrap();
        let e = sol.fit_tail_exponent(1e2, 1e3).unwrap();
        assert!((e + 2.0).abs() <= 0.05, "{e}");
        let [v, d1, _] = sol.eval(2e3);
        assert!((d1 + 2.0 * v / 2e3).abs() <= 1e-12 * v.abs());
    }

    #[test]
    fn discrete_kernel_is_near_zn1() {
        let d = d7();
        let dxi = 1e-3;
        let mut last = f64::INFINITY;
        for r_max in [10.0, 100.0, 1e3] {
            let count = ((r_max / 0.5f64).asinh() / dxi) as usize + 1;
            let g = RadialGrid::mapped(0.5, r_max, count).unwrap();
            let (lam, v) = nearest_mode(d, &g, 0.0, 30).unwrap();
            assert!(lam.abs() < last, "{lam} after {last}");
            last = lam.abs();
            if r_max == 1e3 {
                let z: Vec<f64> = g.nodes().iter().map(|&r| kernel_zn1(d, r)).collect();
                let cos = radial_cosine(&g, &v, &z, 7).abs();
                assert!(cos >= 0.999, "cos {cos} lambda {lam}");
            }
        }
    }

    #[test]
    fn quadratic_form_examples() {
        let d = d7();
        let g = RadialGrid::mapped(0.5, 30.0, 3001).unwrap();
        let zero = RadialField::from_fn(g.clone(), |_| 0.0);
        assert_eq!(quadratic_form_positivity(d, 8.0, &zero).unwrap(), 0.0);
        let bump = RadialField::from_fn(g.clone(), |r| {
            if r > 10.0 && r < 12.0 {
                ((r - 10.0) * (12.0 - r)).powi(3)
            } else {
                0.0
            }
        });
        assert!(quadratic_form_positivity(d, 8.0, &bump).unwrap() > 0.0);
        let touching = RadialField::from_fn(g, |r| 1.0 / (1.0 + r));
        assert!(quadratic_form_positivity(d, 8.0, &touching).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]
        #[test]
        fn solution_and_pairing_are_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, e1 in 2.5f64..6.0, e2 in 2.5f64..6.0) {
            let d = d7();
            let h1 = move |r: f64| (1.0 + r * r).powf(-0.5 * e1);
            let h2 = move |r: f64| r * r * (1.0 + r * r).powf(-0.5 * e2 - 1.0);
            let mix = move |r: f64| a * h1(r) + b * h2(r);
            let s1 = solvability_integral(d, &RadialRhs::closure(h1)).unwrap();
            let s2 = solvability_integral(d, &RadialRhs::closure(h2)).unwrap();
            let sm = solvability_integral(d, &RadialRhs::closure(mix)).unwrap();
            let scale = a.abs() * s1.abs() + b.abs() * s2.abs();
            proptest::prop_assert!((sm - a * s1 - b * s2).abs() <= 1e-9 * scale.max(1e-300));
            let grid = default_corrector_grid(401).unwrap();
            let solve = |h: RadialRhs| solve_corrector(&EllipticProblem::new(d, h, grid.clone())).unwrap();
            let (p1, p2, pm) = (solve(RadialRhs::closure(h1)), solve(RadialRhs::closure(h2)), solve(RadialRhs::closure(mix)));
            let size = p1.phi.sup_abs() * a.abs() + p2.phi.sup_abs() * b.abs();
            for i in 0..grid.len() {
                let lin = a * p1.phi.values[i] + b * p2.phi.values[i];
                proptest::prop_assert!((pm.phi.values[i] - lin).abs() <= 1e-9 * size.max(1e-300));
            }
            let c = a * p1.projection_coeff + b * p2.projection_coeff;
            proptest::prop_assert!((pm.projection_coeff - c).abs() <= 1e-9 * (a.abs() * p1.projection_coeff.abs() + b.abs() * p2.projection_coeff.abs()).max(1e-300));
        }
    }
}
