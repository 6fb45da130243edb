//! Closed-form bubble profiles, the scaling kernel, and cutoff functions.

use serde::{Deserialize, Serialize};

use crate::constants::TowerScales;
use crate::error::{Error, Result};

/// Spatial dimension together with the critical exponent and the bubble
/// normalization `α_n = [n(n-2)]^{(n-2)/4}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub n: u32,
    pub p: f64,
    pub alpha_n: f64,
}

impl Dimension {
    pub fn new(n: u32) -> Result<Self> {
        if n < 7 {
            return Err(Error::domain(format!("dimension n = {n} must be at least 7")));
        }
        let nf = n as f64;
        Ok(Dimension {
            n,
            p: (nf + 2.0) / (nf - 2.0),
            alpha_n: (nf * (nf - 2.0)).powf((nf - 2.0) / 4.0),
        })
    }

    pub fn nf(&self) -> f64 {
        self.n as f64
    }

    /// `(n-2)/2`, the scaling weight of the bubble.
    pub fn m(&self) -> f64 {
        0.5 * (self.nf() - 2.0)
    }
}

/// `U(r) = α_n (1+r²)^{-(n-2)/2}`.
pub fn bubble_value(dim: Dimension, r: f64) -> f64 {
    dim.alpha_n * (1.0 + r * r).powf(-dim.m())
}

/// `U'(r)`.
pub fn bubble_d1(dim: Dimension, r: f64) -> f64 {
    let m = dim.m();
    -2.0 * m * dim.alpha_n * r * (1.0 + r * r).powf(-m - 1.0)
}

/// `U''(r)`.
pub fn bubble_d2(dim: Dimension, r: f64) -> f64 {
    let m = dim.m();
    let q = 1.0 + r * r;
    dim.alpha_n * (-2.0 * m * q.powf(-m - 1.0) + 4.0 * m * (m + 1.0) * r * r * q.powf(-m - 2.0))
}

/// `p U^{p-1}(r) = p n(n-2) (1+r²)^{-2}`.
pub fn potential(dim: Dimension, r: f64) -> f64 {
    let nf = dim.nf();
    dim.p * nf * (nf - 2.0) / (1.0 + r * r).powi(2)
}

/// Radial Laplacian from first and second derivatives, with the origin
/// handled by `Δf(0) = n f''(0)`.
pub fn radial_laplacian(n: u32, r: f64, d1: f64, d2: f64) -> f64 {
    if r == 0.0 {
        n as f64 * d2
    } else {
        d2 + (n as f64 - 1.0) / r * d1
    }
}

/// `Z_{n+1}(r) = (n-2)/2·U + r U'`.
pub fn kernel_zn1(dim: Dimension, r: f64) -> f64 {
    let q = 1.0 + r * r;
    dim.alpha_n * dim.m() * (1.0 - r * r) * q.powf(-0.5 * dim.nf())
}

/// `Z_{n+1}'(r)`.
pub fn kernel_zn1_d1(dim: Dimension, r: f64) -> f64 {
    let nf = dim.nf();
    let q = 1.0 + r * r;
    -dim.alpha_n * dim.m() * r * ((nf + 2.0) + (2.0 - nf) * r * r) * q.powf(-0.5 * nf - 1.0)
}

/// `Z_{n+1}''(r)`.
pub fn kernel_zn1_d2(dim: Dimension, r: f64) -> f64 {
    let nf = dim.nf();
    let (a, b) = (nf + 2.0, 2.0 - nf);
    let e = 0.5 * nf + 1.0;
    let q = 1.0 + r * r;
    let r2 = r * r;
    -dim.alpha_n * dim.m() * ((a + 3.0 * b * r2) * q.powf(-e) - 2.0 * e * r2 * (a + b * r2) * q.powf(-e - 1.0))
}

/// `U_μ(r) = μ^{-(n-2)/2} U(r/μ)`.
pub fn scaled_bubble(dim: Dimension, mu: f64, r: f64) -> f64 {
    mu.powf(-dim.m()) * bubble_value(dim, r / mu)
}

/// `∂_t U_μ = -μ̇ μ^{-n/2} Z_{n+1}(r/μ)`.
pub fn dt_scaled_bubble(dim: Dimension, mu: f64, mudot: f64, r_phys: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::domain(format!("bubble scale must be positive, got {mu}")));
    }
    Ok(-mudot * mu.powf(-0.5 * dim.nf()) * kernel_zn1(dim, r_phys / mu))
}

fn bump(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        (-1.0 / u).exp()
    }
}

fn bump_d1(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        bump(u) / (u * u)
    }
}

fn bump_d2(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        bump(u) * (1.0 / u.powi(4) - 2.0 / u.powi(3))
    }
}

/// Base mollifier: 1 for `s ≤ 1`, 0 for `s ≥ 2`, exp-smoothstep between.
pub fn base_cutoff(s: f64) -> f64 {
    base_cutoff_jet(s)[0]
}

/// Value, first and second derivative of the base mollifier.
pub fn base_cutoff_jet(s: f64) -> [f64; 3] {
    if s <= 1.0 {
        return [1.0, 0.0, 0.0];
    }
    if s >= 2.0 {
        return [0.0, 0.0, 0.0];
    }
    let (a, b) = (bump(2.0 - s), bump(s - 1.0));
    let (a1, b1) = (-bump_d1(2.0 - s), bump_d1(s - 1.0));
    let (a2, b2) = (bump_d2(2.0 - s), bump_d2(s - 1.0));
    let d = a + b;
    let num = a1 * b - a * b1;
    let num1 = a2 * b - a * b2;
    [a / d, num / (d * d), num1 / (d * d) - 2.0 * num * (a1 + b1) / (d * d * d)]
}

/// Which of the three cutoff families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutoffKind {
    Chi,
    Eta,
    Zeta,
}

/// One term `sign·χ(|x|/scale)` of a cutoff, with the logarithmic rate
/// `ṡ/s` of its scale.
#[derive(Debug, Clone, Copy, PartialEq)]
struct CutoffTerm {
    sign: f64,
    scale: f64,
    log_rate: f64,
}

/// A cutoff function frozen at one time slice.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffFamily {
    pub kind: CutoffKind,
    pub j: usize,
    terms: Vec<CutoffTerm>,
}

/// Value and derivatives of a cutoff at one radius.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CutoffJet {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    pub dt: f64,
}

impl CutoffFamily {
    fn check_index(scales: &TowerScales, j: usize) -> Result<()> {
        if j == 0 || j > scales.k() {
            return Err(Error::domain(format!("cutoff index {j} outside [1, {}]", scales.k())));
        }
        Ok(())
    }

    /// `χ_j = χ(2|x|/μ̄_{0j}) - χ(2|x|/μ̄_{0,j+1})`, the second term absent for `j = k`.
    pub fn chi(scales: &TowerScales, j: usize) -> Result<Self> {
        Self::check_index(scales, j)?;
        let mut terms = vec![CutoffTerm {
            sign: 1.0,
            scale: 0.5 * scales.mubar0(j),
            log_rate: scales.mubar0_log_rate(j),
        }];
        if j < scales.k() {
            terms.push(CutoffTerm {
                sign: -1.0,
                scale: 0.5 * scales.mubar0(j + 1),
                log_rate: scales.mubar0_log_rate(j + 1),
            });
        }
        Ok(CutoffFamily {
            kind: CutoffKind::Chi,
            j,
            terms,
        })
    }

    /// `η_j = χ(|x|/(2Rμ_{0j}))`.
    pub fn eta(scales: &TowerScales, j: usize, r_cut: f64) -> Result<Self> {
        Self::check_index(scales, j)?;
        Ok(CutoffFamily {
            kind: CutoffKind::Eta,
            j,
            terms: vec![CutoffTerm {
                sign: 1.0,
                scale: 2.0 * r_cut * scales.mu0(j),
                log_rate: scales.mu0_log_rate(j),
            }],
        })
    }

    /// `ζ_j = χ(|x|/(Rμ_{0j})) - χ(R|x|/μ_{0j})`, the second term absent for `j = k`.
    pub fn zeta(scales: &TowerScales, j: usize, r_cut: f64) -> Result<Self> {
        Self::check_index(scales, j)?;
        let rate = scales.mu0_log_rate(j);
        let mut terms = vec![CutoffTerm {
            sign: 1.0,
            scale: r_cut * scales.mu0(j),
            log_rate: rate,
        }];
        if j < scales.k() {
            terms.push(CutoffTerm {
                sign: -1.0,
                scale: scales.mu0(j) / r_cut,
                log_rate: rate,
            });
        }
        Ok(CutoffFamily {
            kind: CutoffKind::Zeta,
            j,
            terms,
        })
    }

    pub fn value(&self, x: f64) -> f64 {
        cutoff_value(self, x)
    }

    /// Value, radial derivatives and time derivative at radius `x`.
    pub fn jet(&self, x: f64) -> CutoffJet {
        let mut out = CutoffJet::default();
        for term in &self.terms {
            let s = x / term.scale;
            let [v, d1, d2] = base_cutoff_jet(s);
            out.value += term.sign * v;
            out.d1 += term.sign * d1 / term.scale;
            out.d2 += term.sign * d2 / (term.scale * term.scale);
            out.dt += -term.sign * d1 * s * term.log_rate;
        }
        out
    }

    /// Radius beyond which the cutoff vanishes identically.
    pub fn outer_radius(&self) -> f64 {
        2.0 * self.terms[0].scale
    }
}

/// Evaluate a cutoff family at radius `x`.
pub fn cutoff_value(fam: &CutoffFamily, x: f64) -> f64 {
    fam.terms
        .iter()
        .map(|t| t.sign * base_cutoff(x / t.scale))
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d7() -> Dimension {
        Dimension::new(7).unwrap()
    }

    #[test]
    fn rejects_low_dimension() {
        assert!(Dimension::new(6).is_err());
    }

    #[test]
    fn bubble_at_origin() {
        let d = d7();
        assert!((bubble_value(d, 0.0) - 35f64.powf(1.25)).abs() < 1e-12);
    }

    #[test]
    fn bubble_far_field_coefficient() {
        let d = d7();
        let r = 1e6;
        assert!((bubble_value(d, r) * r.powi(5) / d.alpha_n - 1.0).abs() < 1e-10);
    }

    #[test]
    fn kernel_values() {
        let d = d7();
        assert!((kernel_zn1(d, 0.0) - 2.5 * d.alpha_n).abs() < 1e-12);
        assert_eq!(kernel_zn1(d, 1.0), 0.0);
        for &r in &[0.0, 0.3, 1.0, 2.7] {
            let z = d.m() * bubble_value(d, r) + r * bubble_d1(d, r);
            assert!((z - kernel_zn1(d, r)).abs() < 1e-11 * d.alpha_n);
        }
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let d = d7();
        let h = 1e-5;
        for &r in &[0.1, 0.8, 1.5, 4.0] {
            let fd1 = (bubble_value(d, r + h) - bubble_value(d, r - h)) / (2.0 * h);
            assert!((fd1 - bubble_d1(d, r)).abs() < 1e-6 * d.alpha_n);
            let fd2 = (bubble_d1(d, r + h) - bubble_d1(d, r - h)) / (2.0 * h);
            assert!((fd2 - bubble_d2(d, r)).abs() < 1e-6 * d.alpha_n);
            let gz1 = (kernel_zn1(d, r + h) - kernel_zn1(d, r - h)) / (2.0 * h);
            assert!((gz1 - kernel_zn1_d1(d, r)).abs() < 1e-6 * d.alpha_n);
            let gz2 = (kernel_zn1_d1(d, r + h) - kernel_zn1_d1(d, r - h)) / (2.0 * h);
            assert!((gz2 - kernel_zn1_d2(d, r)).abs() < 1e-6 * d.alpha_n);
        }
    }

    #[test]
    fn bubble_solves_elliptic_equation_pointwise() {
        let d = d7();
        for &r in &[0.0, 0.5, 1.0, 3.0, 10.0] {
            let lap = radial_laplacian(7, r, bubble_d1(d, r), bubble_d2(d, r));
            let u = bubble_value(d, r);
            assert!((lap + u.powf(d.p)).abs() < 1e-10 * u.powf(d.p).max(1.0));
            assert!((potential(d, r) - d.p * u.powf(d.p - 1.0)).abs() < 1e-10 * potential(d, r));
        }
    }

    #[test]
    fn dt_scaled_bubble_examples() {
        let d = d7();
        assert_eq!(dt_scaled_bubble(d, 2.0, 0.0, 0.7).unwrap(), 0.0);
        assert!(dt_scaled_bubble(d, 0.3, 1.7, 0.3).unwrap().abs() < 1e-12);
        let v = dt_scaled_bubble(d, 1.0, 1.0, 0.0).unwrap();
        assert!((v + 2.5 * 35f64.powf(1.25)).abs() < 1e-11);
        assert!(dt_scaled_bubble(d, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn dt_scaled_bubble_matches_scale_derivative() {
        let d = d7();
        let (mu, h, r) = (0.7, 1e-6, 0.9);
        let fd = (scaled_bubble(d, mu + h, r) - scaled_bubble(d, mu - h, r)) / (2.0 * h);
        let an = dt_scaled_bubble(d, mu, 1.0, r).unwrap();
        assert!((fd - an).abs() < 1e-6 * an.abs());
    }

    #[test]
    fn base_cutoff_shape() {
        assert_eq!(base_cutoff(0.5), 1.0);
        assert_eq!(base_cutoff(1.0), 1.0);
        assert_eq!(base_cutoff(2.0), 0.0);
        assert!((base_cutoff(1.5) - 0.5).abs() < 1e-15);
        let h = 1e-6;
        for &s in &[1.1, 1.4, 1.77, 1.95] {
            let [_, d1, d2] = base_cutoff_jet(s);
            let fd1 = (base_cutoff(s + h) - base_cutoff(s - h)) / (2.0 * h);
            let fd2 = (base_cutoff_jet(s + h)[1] - base_cutoff_jet(s - h)[1]) / (2.0 * h);
            assert!((fd1 - d1).abs() < 1e-7);
            assert!((fd2 - d2).abs() < 1e-6);
        }
    }

    proptest::proptest! {
        #[test]
        fn bubble_scaling_and_decay(mu in 1e-6f64..1e3, r in 0.0f64..1e4, dr in 1e-6f64..10.0) {
            let d = d7();
            let direct = mu.powf(-d.m()) * d.alpha_n * (1.0 + (r / mu).powi(2)).powf(-d.m());
            proptest::prop_assert!((scaled_bubble(d, mu, r) / direct - 1.0).abs() < 1e-12);
            proptest::prop_assert!(bubble_value(d, r + dr) < bubble_value(d, r));
            let far = 1e7 * mu;
            let tail = scaled_bubble(d, mu, far) * far.powf(d.nf() - 2.0);
            proptest::prop_assert!((tail / (d.alpha_n * mu.powf(d.m())) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn cutoffs_are_unit_valued_and_nested(log_t in 2.0f64..8.0, q in -12.0f64..2.0, j in 1usize..=3) {
            use crate::constants::{build_constant_table, AnalyticParams};
            let table = build_constant_table(7, 3, AnalyticParams::defaults(7)).unwrap();
            let scales = table.scales(-(10f64.powf(log_t))).unwrap();
            let x = 10f64.powf(q);
            let r_cut = table.params.r_cut;
            let chi = CutoffFamily::chi(&scales, j).unwrap().value(x);
            let eta = CutoffFamily::eta(&scales, j, r_cut).unwrap().value(x);
            let zeta = CutoffFamily::zeta(&scales, j, r_cut).unwrap().value(x);
            for v in [chi, eta, zeta] {
                proptest::prop_assert!((0.0..=1.0).contains(&v));
            }
            proptest::prop_assert_eq!(eta * zeta, zeta);
        }
    }
}
