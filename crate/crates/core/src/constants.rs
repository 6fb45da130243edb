//! Interaction constant, exponent tables and the per-time tower scales.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::{bubble_value, kernel_zn1, Dimension};
use crate::quadrature::{radial_integral, sphere_area, QuadOptions};

/// The small analytic parameters and the gluing constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticParams {
    /// Time decay margin σ.
    pub sigma: f64,
    /// Spatial decay exponent α of the outer weights.
    pub alpha_w: f64,
    /// Spatial decay exponent a of the inner norms.
    pub a: f64,
    /// Exponent δ of the outermost gluing radius `(-t)^δ`.
    pub delta: f64,
    /// Profile accuracy exponent ε.
    pub epsilon: f64,
    /// Inner cutoff radius R.
    pub r_cut: f64,
    /// Final time t₀ of the ancient regime.
    pub t0: f64,
}

impl AnalyticParams {
    /// Defaults for dimension `n`.
    pub fn defaults(n: u32) -> Self {
        let nf = n as f64;
        let alpha_w = 0.5;
        AnalyticParams {
            sigma: 0.01,
            alpha_w,
            a: 0.75,
            delta: default_delta(nf, alpha_w),
            epsilon: 0.001,
            r_cut: 40.0,
            t0: -100.0,
        }
    }

    /// Check every constraint; the error names the first one violated.
    pub fn validate(&self, n: u32) -> Result<()> {
        let nf = n as f64;
        let all = [self.sigma, self.alpha_w, self.a, self.delta, self.epsilon, self.r_cut, self.t0];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("all analytic parameters must be finite"));
        }
        if !(self.alpha_w > 0.0 && self.alpha_w < self.a && self.a < 1.0) {
            return Err(Error::config(format!(
                "constraint 0 < alpha < a < 1 violated (alpha = {}, a = {})",
                self.alpha_w, self.a
            )));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::config(format!("constraint 0 < sigma < 1 violated (sigma = {})", self.sigma)));
        }
        if !(self.delta > 0.0 && self.delta <= 0.5) {
            return Err(Error::config(format!("constraint 0 < delta <= 1/2 violated (delta = {})", self.delta)));
        }
        if self.delta > 1.0 / (nf - 2.0 - self.alpha_w) {
            return Err(Error::config(format!(
                "constraint delta <= 1/(n-2-alpha) violated (delta = {}, bound = {})",
                self.delta,
                1.0 / (nf - 2.0 - self.alpha_w)
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::config(format!("constraint 0 < eps < 1 violated (eps = {})", self.epsilon)));
        }
        if !(self.r_cut > 1.0) {
            return Err(Error::config(format!("constraint R > 1 violated (R = {})", self.r_cut)));
        }
        if !(self.t0 <= -1.0) {
            return Err(Error::config(format!("constraint t0 <= -1 violated (t0 = {})", self.t0)));
        }
        Ok(())
    }
}

/// `δ = min(1/2, 1/(n-2-α), 2/(n-2)²)`.
pub fn default_delta(nf: f64, alpha_w: f64) -> f64 {
    0.5f64.min(1.0 / (nf - 2.0 - alpha_w)).min(2.0 / ((nf - 2.0) * (nf - 2.0)))
}

fn check_tol(quad_tol: f64) -> Result<()> {
    if !(quad_tol > 0.0 && quad_tol <= 1e-4) {
        return Err(Error::domain(format!("quadrature tolerance {quad_tol} outside (0, 1e-4]")));
    }
    Ok(())
}

/// `∫_{ℝⁿ} U^p dy`.
pub fn integral_bubble_power(dim: Dimension, quad_tol: f64) -> Result<f64> {
    let p = dim.p;
    Ok(radial_integral(|r| bubble_value(dim, r).powf(p), dim.n, QuadOptions::rel(quad_tol))?.value)
}

/// `∫_{ℝⁿ} Z_{n+1}² dy`.
pub fn integral_kernel_sq(dim: Dimension, quad_tol: f64) -> Result<f64> {
    Ok(radial_integral(|r| kernel_zn1(dim, r).powi(2), dim.n, QuadOptions::rel(quad_tol))?.value)
}

/// `∫_{ℝⁿ} U^{p-1} Z_{n+1} dy`.
pub fn integral_potential_kernel(dim: Dimension, quad_tol: f64) -> Result<f64> {
    let e = dim.p - 1.0;
    Ok(radial_integral(
        |r| bubble_value(dim, r).powf(e) * kernel_zn1(dim, r),
        dim.n,
        QuadOptions::rel(quad_tol),
    )?
    .value)
}

fn cstar_once(dim: Dimension, tol: f64) -> Result<f64> {
    let num = integral_bubble_power(dim, tol)?;
    let den = integral_kernel_sq(dim, tol)?;
    Ok(bubble_value(dim, 0.0) * dim.m() * num / den)
}

/// The interaction constant `c_* = U(0)(n-2)/2 ∫U^p / ∫Z²`.
pub fn compute_cstar(dim: Dimension, quad_tol: f64) -> Result<f64> {
    check_tol(quad_tol)?;
    let c1 = cstar_once(dim, quad_tol)?;
    let c2 = cstar_once(dim, 0.5 * quad_tol)?;
    let diff = (c1 - c2).abs();
    if diff > quad_tol * c2.abs() {
        return Err(Error::numerical("c_* not stable under tolerance halving", diff));
    }
    if !(c2 > 0.0) {
        return Err(Error::numerical("c_* is not positive", c2));
    }
    Ok(c2)
}

/// Exponents, prefactors and analytic parameters of a k-bubble tower.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantTable {
    pub dim: Dimension,
    pub n: u32,
    pub k: usize,
    pub c_star: f64,
    /// Surface measure of the unit sphere in ℝⁿ.
    pub omega: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub gamma_star: Vec<f64>,
    pub params: AnalyticParams,
}

/// Tolerance used for `c_*` when building tables.
pub const TABLE_QUAD_TOL: f64 = 1e-12;

/// Build the table for an n-dimensional tower of height k.
pub fn build_constant_table(n: u32, k: usize, params: AnalyticParams) -> Result<ConstantTable> {
    let dim = Dimension::new(n)?;
    if k == 0 {
        return Err(Error::config("tower height k must be at least 1"));
    }
    params.validate(n)?;
    let c_star = compute_cstar(dim, TABLE_QUAD_TOL)?;
    Ok(table_from_cstar(dim, k, params, c_star))
}

/// Assemble the table from a known `c_*` (no quadrature).
pub fn table_from_cstar(dim: Dimension, k: usize, params: AnalyticParams, c_star: f64) -> ConstantTable {
    let nf = dim.nf();
    let q = (nf - 2.0) / (nf - 6.0);
    let alpha: Vec<f64> = (0..k).map(|i| 0.5 * q.powi(i as i32) - 0.5).collect();
    let mut beta = vec![1.0f64; k];
    for j in 1..k {
        beta[j] = (alpha[j] / c_star).powf(2.0 / (nf - 6.0)) * beta[j - 1].powf(q);
    }
    let sigma = params.sigma;
    let gamma: Vec<f64> = (0..k)
        .map(|i| if i == 0 { -1.0 - sigma } else { 0.5 * (nf - 2.0) * alpha[i - 1] - sigma })
        .collect();
    let gamma_star: Vec<f64> = (0..k)
        .map(|i| {
            if i == 0 {
                gamma[0] + (nf - 2.0 - params.alpha_w) * params.delta
            } else {
                (1.0 - 0.5 * nf) * alpha[i] - 0.5 * params.alpha_w * (alpha[i] - alpha[i - 1]) - sigma
            }
        })
        .collect();
    ConstantTable {
        dim,
        n: dim.n,
        k,
        c_star,
        omega: sphere_area(dim.n),
        alpha,
        beta,
        gamma,
        gamma_star,
        params,
    }
}

impl ConstantTable {
    /// α_j for 1-based j.
    pub fn alpha(&self, j: usize) -> f64 {
        self.alpha[j - 1]
    }
    pub fn beta(&self, j: usize) -> f64 {
        self.beta[j - 1]
    }
    pub fn gamma(&self, j: usize) -> f64 {
        self.gamma[j - 1]
    }
    pub fn gamma_star(&self, j: usize) -> f64 {
        self.gamma_star[j - 1]
    }

    /// Exponent e with `λ_{0j} ∝ (-t)^{-e}`.
    pub fn lambda_exponent(&self, j: usize) -> f64 {
        let nf = self.dim.nf();
        2.0 / (nf - 6.0) * ((nf - 2.0) / (nf - 6.0)).powi(j as i32 - 2)
    }

    /// Scales of the closed-form tower at time `t < 0`.
    pub fn scales(&self, t: f64) -> Result<TowerScales> {
        if !(t < 0.0) || !t.is_finite() {
            return Err(Error::domain(format!("time must be negative and finite, got {t}")));
        }
        let s = -t;
        let mu0: Vec<f64> = (1..=self.k).map(|j| self.beta(j) * s.powf(-self.alpha(j))).collect();
        let mudot0: Vec<f64> = (1..=self.k).map(|j| self.alpha(j) * mu0[j - 1] / s).collect();
        Ok(TowerScales {
            t,
            delta: self.params.delta,
            alpha: self.alpha.clone(),
            mu0,
            mudot0,
        })
    }
}

/// The closed-form scales `μ_{0j}`, their rates and the derived gluing
/// radii at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct TowerScales {
    pub t: f64,
    delta: f64,
    alpha: Vec<f64>,
    mu0: Vec<f64>,
    mudot0: Vec<f64>,
}

impl TowerScales {
    pub fn k(&self) -> usize {
        self.mu0.len()
    }
    pub fn mu0(&self, j: usize) -> f64 {
        self.mu0[j - 1]
    }
    pub fn mudot0(&self, j: usize) -> f64 {
        self.mudot0[j - 1]
    }
    /// `μ̇_{0j}/μ_{0j}`.
    pub fn mu0_log_rate(&self, j: usize) -> f64 {
        self.alpha[j - 1] / (-self.t)
    }
    /// `λ_{0j} = μ_{0j}/μ_{0,j-1}` for `j ≥ 2`.
    pub fn lambda0(&self, j: usize) -> f64 {
        self.mu0[j - 1] / self.mu0[j - 2]
    }
    /// `λ̇_{0j}/λ_{0j}`.
    pub fn lambda0_log_rate(&self, j: usize) -> f64 {
        (self.alpha[j - 1] - self.alpha[j - 2]) / (-self.t)
    }
    /// `μ̄_{01} = (-t)^δ`, `μ̄_{0j} = √(μ_{0j}μ_{0,j-1})`, `μ̄_{0,k+1} = 0`.
    pub fn mubar0(&self, j: usize) -> f64 {
        if j == 1 {
            (-self.t).powf(self.delta)
        } else if j <= self.k() {
            (self.mu0[j - 1] * self.mu0[j - 2]).sqrt()
        } else {
            0.0
        }
    }
    /// `d/dt ln μ̄_{0j}`.
    pub fn mubar0_log_rate(&self, j: usize) -> f64 {
        if j == 1 {
            -self.delta / (-self.t)
        } else if j <= self.k() {
            0.5 * (self.alpha[j - 1] + self.alpha[j - 2]) / (-self.t)
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(k: usize) -> ConstantTable {
        build_constant_table(7, k, AnalyticParams::defaults(7)).unwrap()
    }

    #[test]
    fn exponents_for_n7() {
        let t = table(3);
        assert_eq!(t.alpha, vec![0.0, 2.0, 12.0]);
        assert_eq!(t.beta[0], 1.0);
        assert_eq!(t.alpha(1), 0.0);
    }

    #[test]
    fn beta2_from_separable_equation() {
        let t = table(2);
        let oracle = (2.0 / t.c_star).powi(2);
        assert!((t.beta(2) - oracle).abs() < 1e-14 * oracle);
    }

    #[test]
    fn cstar_positive_all_dims() {
        for n in 7..=10 {
            let d = Dimension::new(n).unwrap();
            assert!(compute_cstar(d, 1e-10).unwrap() > 0.0);
        }
    }

    #[test]
    fn cstar_equivalent_forms() {
        let d = Dimension::new(7).unwrap();
        let c = compute_cstar(d, 1e-12).unwrap();
        let alt = -bubble_value(d, 0.0) * d.p * integral_potential_kernel(d, 1e-12).unwrap()
            / integral_kernel_sq(d, 1e-12).unwrap();
        assert!((c - alt).abs() < 1e-10 * c);
    }

    #[test]
    fn tolerance_out_of_range() {
        let d = Dimension::new(7).unwrap();
        assert!(matches!(compute_cstar(d, 1e-3), Err(Error::Domain(_))));
    }

    #[test]
    fn gamma_star_strictly_decreasing() {
        let t = table(3);
        for j in 1..3 {
            assert!(t.gamma_star[j] < t.gamma_star[j - 1]);
        }
        assert!((t.gamma(1) + 1.01).abs() < 1e-15);
        assert!((t.gamma(2) + 0.01).abs() < 1e-15);
    }

    #[test]
    fn ledger_violation_names_constraint() {
        let mut p = AnalyticParams::defaults(7);
        p.a = 0.4;
        match build_constant_table(7, 2, p) {
            Err(Error::Config(msg)) => assert!(msg.contains("alpha < a")),
            other => panic!("expected config error, got {other:?}"),
        }
        let mut p = AnalyticParams::defaults(7);
        p.delta = 0.3;
        assert!(matches!(build_constant_table(7, 2, p), Err(Error::Config(_))));
    }

    #[test]
    fn closed_form_satisfies_scale_dynamics() {
        let t = table(3);
        let m = t.dim.m();
        for &time in &[-1e2, -1e4, -1e6] {
            let s = t.scales(time).unwrap();
            for j in 2..=3 {
                let lhs = s.mu0(j) * s.mudot0(j);
                let rhs = t.c_star * s.lambda0(j).powf(m);
                assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs(), "j={j} t={time}");
            }
        }
    }

    #[test]
    fn lambda_exponent_by_fit() {
        let t = table(3);
        for j in 2..=3 {
            let (t1, t2) = (-1e3, -1e5);
            let l1 = t.scales(t1).unwrap().lambda0(j);
            let l2 = t.scales(t2).unwrap().lambda0(j);
            let slope = (l2 / l1).ln() / (100f64).ln();
            assert!((slope + t.lambda_exponent(j)).abs() < 1e-6);
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn tower_constants_obey_their_recursions(n in 7u32..=10, k in 1usize..=3, log_t in 2.0f64..8.0) {
            let tb = build_constant_table(n, k, AnalyticParams::defaults(n)).unwrap();
            let nf = n as f64;
            let m = tb.dim.m();
            let sigma = tb.params.sigma;
            let s = tb.scales(-(10f64.powf(log_t))).unwrap();
            proptest::prop_assert_eq!(tb.gamma(1), -1.0 - sigma);
            for j in 1..=k {
                let alpha = 0.5 * ((nf - 2.0) / (nf - 6.0)).powi(j as i32 - 1) - 0.5;
                proptest::prop_assert!((tb.alpha(j) - alpha).abs() <= 1e-12 * alpha.max(1.0));
                proptest::prop_assert!(s.mu0(j) > 0.0);
                if j >= 2 {
                    proptest::prop_assert!((tb.gamma(j) - (m * tb.alpha(j - 1) - sigma)).abs() < 1e-12);
                    // μ_{0j} μ̇_{0j} = c_* λ_{0j}^{(n-2)/2}.
                    let lhs = s.mu0(j) * s.mudot0(j);
                    let rhs = tb.c_star * (s.mu0(j) / s.mu0(j - 1)).powf(m);
                    proptest::prop_assert!((lhs / rhs - 1.0).abs() < 1e-10);
                    let earlier = tb.scales(-(10f64.powf(log_t + 1.0))).unwrap();
                    proptest::prop_assert!(earlier.lambda0(j) < s.lambda0(j));
                }
            }
        }
    }
}
