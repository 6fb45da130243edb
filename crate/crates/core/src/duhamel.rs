//! The Duhamel operator of the heat equation on radial sources, its
//! gradient-type companion, and the catalog of barrier estimates.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::ConstantTable;
use crate::error::{Error, Result};
use crate::profiles::Dimension;
use crate::quadrature::{integrate, integrate_best, sphere_area, QuadOptions, QuadResult};
use crate::special::{bessel_i_reduced, bessel_i_scaled};
use crate::weights::{WeightFamily, WeightSpec};

/// Half-width of the Gaussian window in units of `√τ`.
const WINDOW: f64 = 16.0;
/// Largest `τ` integrated numerically, relative to the largest breakpoint.
const TAU_SPAN: f64 = 1e6;

/// A radial source `g(ρ, s)` for `s < 0`.
pub trait RadialSource: Sync {
    fn value(&self, rho: f64, s: f64) -> f64;
    /// `[lo, hi]` outside of which the source vanishes; `hi` may be infinite.
    fn support(&self, s: f64) -> (f64, f64);
    /// Radii where the source changes form.
    fn radial_scales(&self, s: f64) -> Vec<f64>;
    /// Power `a` of a possible `ρ^{-a}` singularity at the origin.
    fn origin_exponent(&self) -> f64 {
        0.0
    }
}

/// `c·|t|^b |x|^{-a} 1{c₁|t|^{d₁} ≤ |x| ≤ c₂|t|^{d₂}}`; `c₂ = ∞` drops the upper limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawSource {
    pub b: f64,
    pub a: f64,
    pub d1: f64,
    pub d2: f64,
    pub c1: f64,
    pub c2: f64,
    pub scale: f64,
}

/// Default bound on the indicator prefactors.
pub const C_MAX: f64 = 4.0;

impl PowerLawSource {
    pub fn new(b: f64, a: f64, d1: f64, d2: f64, c1: f64, c2: f64) -> Self {
        PowerLawSource {
            b,
            a,
            d1,
            d2,
            c1,
            c2,
            scale: 1.0,
        }
    }

    pub fn scaled(mut self, c: f64) -> Self {
        self.scale *= c;
        self
    }

    /// Hypotheses under which the Duhamel integral converges.
    pub fn check(&self, n: u32) -> Result<()> {
        let nf = n as f64;
        if !(self.a >= 0.0) {
            return Err(Error::domain(format!("space exponent a = {} must be >= 0", self.a)));
        }
        if self.c2.is_infinite() {
            if !(self.a / 2.0 - self.b > 1.0) {
                return Err(Error::domain(format!(
                    "outer source violates a/2 - b > 1 (a = {}, b = {})",
                    self.a, self.b
                )));
            }
            return Ok(());
        }
        if !(self.d1 <= self.d2 && self.d2 <= 0.5) {
            return Err(Error::domain(format!("need d1 <= d2 <= 1/2 (d1 = {}, d2 = {})", self.d1, self.d2)));
        }
        if !(self.c1 >= 0.0 && self.c1 <= C_MAX && self.c2 >= 0.0 && self.c2 <= C_MAX) {
            return Err(Error::domain(format!("need 0 <= c1, c2 <= {C_MAX}")));
        }
        if self.a < nf {
            let q = nf / 2.0 - self.b + self.d2 * (self.a - nf);
            if !(q > 1.0) {
                return Err(Error::domain(format!("violated n/2 - b + d2(a - n) > 1 (value {q})")));
            }
        } else {
            let q = nf / 2.0 - self.b + self.d1 * (self.a - nf);
            if !(q > 1.0) {
                return Err(Error::domain(format!("violated n/2 - b + d1(a - n) > 1 (value {q})")));
            }
            if self.c1 == 0.0 {
                return Err(Error::domain("a >= n needs c1 > 0 (non-integrable origin singularity)"));
            }
        }
        Ok(())
    }

    /// Hypotheses of the gradient-type estimate.
    pub fn check_gradient(&self, n: u32) -> Result<()> {
        let nf = n as f64;
        if !(self.d1 <= self.d2 && self.d2 <= 0.5) || self.c2.is_infinite() {
            return Err(Error::domain("need d1 <= d2 <= 1/2 and a bounded annulus"));
        }
        if self.a > nf {
            let q = nf / 2.0 - self.b - self.d1 * (nf - self.a);
            if !(q > 0.0) {
                return Err(Error::domain(format!("violated n/2 - b - d1(n - a) > 0 (value {q})")));
            }
            if self.c1 == 0.0 {
                return Err(Error::domain("a > n needs c1 > 0"));
            }
        } else {
            let q = nf / 2.0 - self.b - self.d2 * nf + self.d2 * self.a;
            if !(q > 0.0) {
                return Err(Error::domain(format!("violated n/2 - b - d2(n - a) > 0 (value {q})")));
            }
        }
        Ok(())
    }

    fn bounds(&self, s: f64) -> (f64, f64) {
        let m = -s;
        let lo = self.c1 * m.powf(self.d1);
        let hi = if self.c2.is_infinite() { f64::INFINITY } else { self.c2 * m.powf(self.d2) };
        (lo, hi)
    }
}

impl RadialSource for PowerLawSource {
    fn value(&self, rho: f64, s: f64) -> f64 {
        let (lo, hi) = self.bounds(s);
        if rho < lo || rho > hi || rho <= 0.0 && self.a > 0.0 {
            return 0.0;
        }
        self.scale * (-s).powf(self.b) * rho.powf(-self.a)
    }
    fn support(&self, s: f64) -> (f64, f64) {
        self.bounds(s)
    }
    fn radial_scales(&self, s: f64) -> Vec<f64> {
        let (lo, hi) = self.bounds(s);
        [lo, hi].into_iter().filter(|v| *v > 0.0 && v.is_finite()).collect()
    }
    fn origin_exponent(&self) -> f64 {
        if self.c1 == 0.0 {
            self.a
        } else {
            0.0
        }
    }
}

/// A weight of the outer problem used as a Duhamel source.
pub struct WeightSource(pub WeightSpec);

impl RadialSource for WeightSource {
    fn value(&self, rho: f64, s: f64) -> f64 {
        self.0.value(rho, s).unwrap_or(0.0)
    }
    fn support(&self, s: f64) -> (f64, f64) {
        self.0.support(s).unwrap_or((0.0, 0.0))
    }
    fn radial_scales(&self, s: f64) -> Vec<f64> {
        self.0.breakpoints(s).unwrap_or_default()
    }
}

/// Transition density in `ρ` of the radial heat flow in `ℝⁿ` from radius
/// `r` after time `τ`.
pub fn radial_heat_kernel(n: u32, tau: f64, r: f64, rho: f64) -> f64 {
    radial_heat_kernel_offset(n, tau, r, rho, rho - r)
}

/// The kernel with the offset `ρ - r` supplied exactly, for windows much
/// narrower than `r` where forming `ρ - r` would cancel.
fn radial_heat_kernel_offset(n: u32, tau: f64, r: f64, rho: f64, diff: f64) -> f64 {
    if rho <= 0.0 {
        return 0.0;
    }
    let nu = 0.5 * n as f64 - 1.0;
    let z = r * rho / (2.0 * tau);
    if z <= 30.0 {
        let ln = (rho / (2.0 * tau)).ln() + nu * (rho * rho / (4.0 * tau)).ln() - (r * r + rho * rho) / (4.0 * tau);
        ln.exp() * bessel_i_reduced(nu, z)
    } else {
        let ln = (rho / (2.0 * tau)).ln() + nu * (rho / r).ln() - diff * diff / (4.0 * tau);
        ln.exp() * bessel_i_scaled(nu, z)
    }
}

fn sorted_points(mut pts: Vec<f64>, lo: f64, hi: f64) -> Vec<f64> {
    pts.retain(|p| *p > lo && *p < hi && p.is_finite());
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup();
    pts
}

/// Running sum over quadrature pieces. A piece that exhausts its budget is
/// accepted when its error is negligible against the whole sum.
struct PieceSum {
    value: f64,
    error: f64,
    stalled: Option<(f64, f64)>,
    opts: QuadOptions,
}

impl PieceSum {
    fn new(opts: QuadOptions) -> Self {
        PieceSum {
            value: 0.0,
            error: 0.0,
            stalled: None,
            opts,
        }
    }

    fn add(&mut self, piece: (QuadResult, bool), a: f64, b: f64) {
        let (res, converged) = piece;
        self.value += res.value;
        self.error += res.error;
        if !converged && self.stalled.is_none() {
            self.stalled = Some((a, b));
        }
    }

    fn finish(self) -> Result<f64> {
        if let Some((a, b)) = self.stalled {
            let tol = self.opts.abs_tol.max(self.opts.rel_tol * self.value.abs());
            if !(self.error <= tol) {
                return Err(Error::numerical(
                    format!("quadrature did not converge on [{a:e}, {b:e}] within {} intervals", self.opts.max_intervals),
                    self.error,
                ));
            }
        }
        Ok(self.value)
    }
}

/// `∫_a^b f`, in `ln ρ` on wide intervals and with `ρ = b·u^q` from the origin.
fn integrate_radial_piece<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, q: f64, opts: QuadOptions) -> Result<(QuadResult, bool)> {
    if a == 0.0 {
        let g = |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            let rho = b * u.powf(q);
            f(rho) * b * q * u.powf(q - 1.0)
        };
        integrate_best(g, 0.0, 1.0, opts)
    } else if b / a > 4.0 {
        let g = |v: f64| {
            let rho = v.exp();
            f(rho) * rho
        };
        integrate_best(g, a.ln(), b.ln(), opts)
    } else {
        integrate_best(f, a, b, opts)
    }
}

fn integrate_radial_pieces<F: Fn(f64) -> f64>(f: &F, pts: &[f64], q: f64, opts: QuadOptions) -> Result<f64> {
    let mut sum = PieceSum::new(opts);
    for p in pts.windows(2) {
        sum.add(integrate_radial_piece(f, p[0], p[1], q, opts)?, p[0], p[1]);
    }
    sum.finish()
}

#[derive(Debug, Clone, Copy)]
pub struct DuhamelOptions {
    pub rel_tol: f64,
}

impl Default for DuhamelOptions {
    fn default() -> Self {
        DuhamelOptions { rel_tol: 1e-6 }
    }
}

fn inner_opts(tol: f64) -> QuadOptions {
    QuadOptions::rel((tol * 1e-2).max(1e-12)).with_abs(1e-300).with_limit(2000)
}

/// `∫ p(τ, r, ρ) g(ρ, t - τ) dρ`.
fn heat_slice(dim: Dimension, src: &dyn RadialSource, r: f64, t: f64, tau: f64, tol: f64) -> Result<f64> {
    let s = t - tau;
    let (lo, hi) = src.support(s);
    let w = WINDOW * tau.sqrt();
    let a = lo.max(r - w).max(0.0);
    let b = hi.min(r + w);
    if !(b > a) {
        return Ok(0.0);
    }
    let mut pts = src.radial_scales(s);
    pts.push(r);
    let pts = sorted_points(pts, a, b);
    if a > 0.5 * r && r > 0.0 {
        // Narrow window: integrate in the offset from r.
        let f = |u: f64| radial_heat_kernel_offset(dim.n, tau, r, r + u, u) * src.value(r + u, s);
        return integrate_offsets(&f, &pts, r, inner_opts(tol));
    }
    let q = (2.0 / (dim.nf() - src.origin_exponent())).max(1.0);
    let f = |rho: f64| radial_heat_kernel(dim.n, tau, r, rho) * src.value(rho, s);
    integrate_radial_pieces(&f, &pts, q, inner_opts(tol))
}

fn integrate_offsets<F: Fn(f64) -> f64>(f: &F, pts: &[f64], r: f64, opts: QuadOptions) -> Result<f64> {
    let mut sum = PieceSum::new(opts);
    for p in pts.windows(2) {
        sum.add(integrate_best(f, p[0] - r, p[1] - r, opts)?, p[0], p[1]);
    }
    sum.finish()
}

/// Integrate a slice function over `τ ∈ (0, ∞)` with breakpoints and a
/// fitted power-law tail.
fn integrate_in_time<F: Fn(f64) -> Result<f64> + Sync>(slice: F, mut breaks: Vec<f64>, tol: f64) -> Result<f64> {
    breaks.retain(|b| *b > 0.0 && b.is_finite());
    breaks.sort_by(|a, b| a.total_cmp(b));
    breaks.dedup_by(|a, b| (*a / *b - 1.0).abs() < 1e-9);
    let first = breaks[0];
    let tau_max = TAU_SPAN * breaks[breaks.len() - 1];
    breaks.push(tau_max);
    let opts = QuadOptions::rel(tol).with_abs(1e-300).with_limit(1000);
    let err = std::sync::Mutex::new(None);
    let guard = |v: Result<f64>| match v {
        Ok(x) => x,
        Err(e) => {
            err.lock().expect("lock").get_or_insert(e);
            0.0
        }
    };
    let head = integrate(
        |w| {
            if w <= 0.0 {
                0.0
            } else {
                guard(slice(first * w * w)) * 2.0 * first * w
            }
        },
        0.0,
        1.0,
        opts,
    )?
    .value;
    let mut total = head;
    for p in breaks.windows(2) {
        let v = integrate(
            |v| {
                let tau = v.exp();
                guard(slice(tau)) * tau
            },
            p[0].ln(),
            p[1].ln(),
            opts,
        )?
        .value;
        total += v;
    }
    if let Some(e) = err.lock().expect("lock").take() {
        return Err(e);
    }
    let end = slice(tau_max)?;
    if end != 0.0 {
        let before = slice(tau_max / 4.0)?;
        let q = -(end / before).ln() / 4f64.ln();
        if !(q > 1.0) {
            return Err(Error::numerical(
                format!("time integral does not converge: slice decays like tau^-{q:.3}"),
                end * tau_max,
            ));
        }
        total += end * tau_max / (q - 1.0);
    }
    Ok(total)
}

fn time_breaks(src: &dyn RadialSource, r: f64, t: f64) -> Vec<f64> {
    let mut b: Vec<f64> = src.radial_scales(t).iter().map(|x| x * x).collect();
    b.push(r * r);
    b.push(-t);
    b.push(1.0);
    b
}

/// `(4π)^{-n/2}∫_{-∞}^t (t-s)^{-n/2}∫ e^{-|x-y|²/(4(t-s))} g(y,s) dy ds` at `|x| = r`.
pub fn duhamel_eval(dim: Dimension, src: &dyn RadialSource, r: f64, t: f64, opts: DuhamelOptions) -> Result<f64> {
    if !(t < -1.0) {
        return Err(Error::domain(format!("evaluation time must satisfy t < -1, got {t}")));
    }
    let tol = opts.rel_tol;
    integrate_in_time(|tau| heat_slice(dim, src, r, t, tau, tol), time_breaks(src, r, t), tol)
}

/// Duhamel image of a power-law source, after checking its hypotheses.
pub fn duhamel_power_law(dim: Dimension, src: &PowerLawSource, r: f64, t: f64, opts: DuhamelOptions) -> Result<f64> {
    src.check(dim.n)?;
    duhamel_eval(dim, src, r, t, opts)
}

/// `∫_{S^{n-1}} e^{-|x-y|²/(4τ)} |x-y| dσ` for `|x| = r`, `|y| = ρ`.
fn sphere_gauss_distance(n: u32, tau: f64, r: f64, rho: f64, diff: f64, tol: f64) -> Result<f64> {
    let nf = n as f64;
    if r == 0.0 || rho == 0.0 {
        let d = r.max(rho);
        return Ok(sphere_area(n) * d * (-d * d / (4.0 * tau)).exp());
    }
    let omega = sphere_area(n - 1);
    let base = diff * diff;
    let c = 2.0 * r * rho;
    // Beyond this angle the Gaussian factor is below e^{-60}.
    let lim = 60.0 * 4.0 * tau / c;
    let theta_max = if lim >= 2.0 { PI } else { 2.0 * (0.5 * lim).sqrt().asin() };
    let f = |th: f64| {
        let h = 2.0 * (0.5 * th).sin().powi(2);
        let d2 = base + c * h;
        (-(c * h) / (4.0 * tau)).exp() * d2.sqrt() * th.sin().powf(nf - 2.0)
    };
    let v = integrate(f, 0.0, theta_max, QuadOptions::rel(tol).with_abs(1e-300))?.value;
    Ok(omega * (-base / (4.0 * tau)).exp() * v)
}

fn gradient_slice(dim: Dimension, src: &dyn RadialSource, r: f64, t: f64, tau: f64, tol: f64) -> Result<f64> {
    let s = t - tau;
    let (lo, hi) = src.support(s);
    let w = WINDOW * tau.sqrt();
    let a = lo.max(r - w).max(0.0);
    let b = hi.min(r + w);
    if !(b > a) {
        return Ok(0.0);
    }
    let mut pts = src.radial_scales(s);
    pts.push(r);
    let pts = sorted_points(pts, a, b);
    let q = (2.0 / (dim.nf() - src.origin_exponent())).max(1.0);
    let nf = dim.nf();
    let pre = tau.powf(-0.5 * nf - 1.0);
    let inner_tol = (tol * 1e-2).max(1e-10);
    let err = std::sync::Mutex::new(None);
    let f = |rho: f64, diff: f64| {
        let g = src.value(rho, s);
        if g == 0.0 {
            return 0.0;
        }
        match sphere_gauss_distance(dim.n, tau, r, rho, diff, inner_tol) {
            Ok(v) => pre * v * g * rho.powf(nf - 1.0),
            Err(e) => {
                err.lock().expect("lock").get_or_insert(e);
                0.0
            }
        }
    };
    let opts = QuadOptions::rel(inner_tol).with_abs(1e-300).with_limit(1000);
    let total = if a > 0.5 * r && r > 0.0 {
        integrate_offsets(&|u: f64| f(r + u, u), &pts, r, opts)?
    } else {
        integrate_radial_pieces(&|rho: f64| f(rho, rho - r), &pts, q, opts)?
    };
    if let Some(e) = err.into_inner().expect("lock") {
        return Err(e);
    }
    Ok(total)
}

/// `∫_{-∞}^t (t-s)^{-n/2-1}∫ e^{-|x-y|²/(4(t-s))}|x-y| g(y,s) dy ds` at `|x| = r`.
pub fn gradient_kernel_eval(dim: Dimension, src: &dyn RadialSource, r: f64, t: f64, opts: DuhamelOptions) -> Result<f64> {
    if !(t < -1.0) {
        return Err(Error::domain(format!("evaluation time must satisfy t < -1, got {t}")));
    }
    let tol = opts.rel_tol;
    integrate_in_time(|tau| gradient_slice(dim, src, r, t, tau, tol), time_breaks(src, r, t), tol)
}

/// Gradient-type operator on a power-law source, after checking its hypotheses.
pub fn gradient_power_law(dim: Dimension, src: &PowerLawSource, r: f64, t: f64, opts: DuhamelOptions) -> Result<f64> {
    src.check_gradient(dim.n)?;
    gradient_kernel_eval(dim, src, r, t, opts)
}


/// Which operator a catalog entry is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operator {
    Heat,
    Gradient,
}

/// Families of barrier estimates, used to select catalog entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BarrierTag {
    /// Value at the origin of an annular power-law source.
    Origin,
    /// Uniform and far-field bounds for an annular source.
    Annulus,
    /// Sources singular at the origin.
    Singular,
    /// Full piecewise profile of an annular source.
    Piecewise,
    /// Sources living outside the parabolic ball.
    Outer,
    /// Gradient-type operator.
    Gradient,
    /// Weights concentrated at the bubble scales.
    BubbleWeight,
    /// Weights on the necks between consecutive bubbles.
    NeckWeight,
    /// Weight of the far region.
    FarWeight,
}

impl BarrierTag {
    pub const ALL: [BarrierTag; 9] = [
        BarrierTag::Origin,
        BarrierTag::Annulus,
        BarrierTag::Singular,
        BarrierTag::Piecewise,
        BarrierTag::Outer,
        BarrierTag::Gradient,
        BarrierTag::BubbleWeight,
        BarrierTag::NeckWeight,
        BarrierTag::FarWeight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BarrierTag::Origin => "origin",
            BarrierTag::Annulus => "annulus",
            BarrierTag::Singular => "singular",
            BarrierTag::Piecewise => "piecewise",
            BarrierTag::Outer => "outer",
            BarrierTag::Gradient => "gradient",
            BarrierTag::BubbleWeight => "bubble-weight",
            BarrierTag::NeckWeight => "neck-weight",
            BarrierTag::FarWeight => "far-weight",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        BarrierTag::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::config(format!("unknown barrier tag '{s}'")))
    }
}

pub enum CatalogSource {
    Power(PowerLawSource),
    Weight(WeightSource),
}

impl CatalogSource {
    fn as_dyn(&self) -> &dyn RadialSource {
        match self {
            CatalogSource::Power(p) => p,
            CatalogSource::Weight(w) => w,
        }
    }
}

type Barrier = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type Region = Box<dyn Fn(f64) -> (f64, f64) + Send + Sync>;

/// A source, the claimed bound on its image, and where the bound is claimed.
pub struct BarrierCatalogEntry {
    pub name: String,
    pub tag: BarrierTag,
    pub operator: Operator,
    pub source: CatalogSource,
    /// Claimed bound at `(|x|, t)`, up to a constant.
    pub barrier: Barrier,
    /// Radii `[lo, hi]` at time `t` where the bound is claimed; `(0, 0)`
    /// means the origin only.
    pub region: Region,
}

impl BarrierCatalogEntry {
    pub fn origin_only(&self, t: f64) -> bool {
        (self.region)(t) == (0.0, 0.0)
    }

    pub fn in_region(&self, x: f64, t: f64) -> bool {
        let (lo, hi) = (self.region)(t);
        if (lo, hi) == (0.0, 0.0) {
            return x == 0.0;
        }
        x >= lo && x <= hi
    }
}

/// One evaluation point with the reference time of its group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    pub t_ref: f64,
    pub x: f64,
    pub t: f64,
}

/// Points per reference time: radii spread geometrically across the region
/// (with the origin when it belongs to it), or times in `[t, 2t]` at the
/// origin for origin-only entries.
pub fn sample_cloud(entry: &BarrierCatalogEntry, times: &[f64], per_time: usize) -> Vec<CloudPoint> {
    let mut out = Vec::new();
    let m = per_time.max(2);
    for &t in times {
        let (lo, hi) = (entry.region)(t);
        if (lo, hi) == (0.0, 0.0) {
            for i in 0..m {
                let ti = t * (1.0 + i as f64 / (m - 1) as f64);
                out.push(CloudPoint { t_ref: t, x: 0.0, t: ti });
            }
            continue;
        }
        let (start, count) = if lo == 0.0 {
            out.push(CloudPoint { t_ref: t, x: 0.0, t });
            (hi * 1e-4, m - 1)
        } else {
            (lo, m)
        };
        let ratio = hi / start;
        for i in 0..count {
            let f = if count == 1 { 0.0 } else { i as f64 / (count - 1) as f64 };
            let mut x = start * ratio.powf(f);
            if i == count - 1 {
                x = hi;
            }
            out.push(CloudPoint { t_ref: t, x, t });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierSample {
    pub t_ref: f64,
    pub x: f64,
    pub t: f64,
    pub value: f64,
    pub barrier: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierReport {
    pub name: String,
    pub tag: BarrierTag,
    pub samples: Vec<BarrierSample>,
    /// Largest ratio for each reference time.
    pub per_time: Vec<(f64, f64)>,
    /// Ratio of the largest to the smallest of `per_time`.
    pub drift: f64,
    pub skipped: usize,
    pub error: Option<String>,
}

/// Largest drift of the empirical constant tolerated across reference times.
pub const MAX_DRIFT: f64 = 4.0;

impl BarrierReport {
    pub fn passed(&self) -> bool {
        self.error.is_none()
            && !self.per_time.is_empty()
            && self.per_time.iter().all(|(_, r)| r.is_finite() && *r > 0.0)
            && self.drift <= MAX_DRIFT
    }
}

/// Evaluate `entry` on `cloud` in parallel and reduce to the worst ratio per
/// reference time.
pub fn barrier_check(dim: Dimension, entry: &BarrierCatalogEntry, cloud: &[CloudPoint], opts: DuhamelOptions) -> BarrierReport {
    let inside: Vec<CloudPoint> = cloud.iter().copied().filter(|p| entry.in_region(p.x, p.t) && p.t < -1.0).collect();
    let skipped = cloud.len() - inside.len();
    if skipped > 0 {
        eprintln!("note: {skipped} sample point(s) outside the region of '{}' skipped", entry.name);
    }
    let src = entry.source.as_dyn();
    let results: Vec<Result<BarrierSample>> = inside
        .par_iter()
        .map(|p| {
            let value = match entry.operator {
                Operator::Heat => duhamel_eval(dim, src, p.x, p.t, opts)?,
                Operator::Gradient => gradient_kernel_eval(dim, src, p.x, p.t, opts)?,
            };
            let barrier = (entry.barrier)(p.x, p.t);
            Ok(BarrierSample {
                t_ref: p.t_ref,
                x: p.x,
                t: p.t,
                value,
                barrier,
                ratio: value / barrier,
            })
        })
        .collect();
    let mut samples = Vec::with_capacity(results.len());
    let mut error = None;
    for r in results {
        match r {
            Ok(s) => samples.push(s),
            Err(e) => {
                error.get_or_insert(e.to_string());
            }
        }
    }
    let mut per_time: Vec<(f64, f64)> = Vec::new();
    for s in &samples {
        match per_time.iter_mut().find(|(t, _)| *t == s.t_ref) {
            Some(slot) => slot.1 = if s.ratio.is_nan() { f64::NAN } else { slot.1.max(s.ratio) },
            None => per_time.push((s.t_ref, s.ratio)),
        }
    }
    let hi = per_time.iter().fold(0.0f64, |m, (_, r)| m.max(*r));
    let lo = per_time.iter().fold(f64::INFINITY, |m, (_, r)| m.min(*r));
    let drift = if per_time.iter().any(|(_, r)| !r.is_finite()) { f64::INFINITY } else { hi / lo };
    BarrierReport {
        name: entry.name.clone(),
        tag: entry.tag,
        samples,
        per_time,
        drift,
        skipped,
        error,
    }
}

fn pow_entry(
    name: &str,
    tag: BarrierTag,
    src: PowerLawSource,
    barrier: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    region: impl Fn(f64) -> (f64, f64) + Send + Sync + 'static,
) -> BarrierCatalogEntry {
    BarrierCatalogEntry {
        name: name.to_string(),
        tag,
        operator: if tag == BarrierTag::Gradient { Operator::Gradient } else { Operator::Heat },
        source: CatalogSource::Power(src),
        barrier: Box::new(barrier),
        region: Box::new(region),
    }
}

fn origin(_: f64) -> (f64, f64) {
    (0.0, 0.0)
}

/// Radii sampled for entries claimed on all of space.
fn whole_space(t: f64) -> (f64, f64) {
    (0.0, 30.0 * (-t).sqrt())
}

/// Bound at the origin of the image of an annular source.
fn origin_bound(s: PowerLawSource, t: f64) -> f64 {
    let m = -t;
    let inner = s.c1 * m.powf(s.d1);
    let outer = s.c2 * m.powf(s.d2);
    let base = m.powf(s.b);
    if s.a > 2.0 {
        base * inner.powf(2.0 - s.a)
    } else if s.a == 2.0 {
        base * (outer / inner).ln()
    } else {
        base * outer.powf(2.0 - s.a)
    }
}

/// Piecewise profile for annular sources: flat core, optional `|x|^{2-a}`
/// layer, Newtonian decay to the parabolic radius, then self-similar decay.
fn annular_profile(n: f64, s: PowerLawSource, x: f64, t: f64) -> f64 {
    let m = -t;
    let root = m.sqrt();
    let (c, d) = if s.a > n { (s.c1, s.d1) } else { (s.c2, s.d2) };
    let edge = c * m.powf(d);
    let far = |x: f64| c.powf(n - s.a) * x.powf(2.0 * s.b + 2.0 * d * (n - s.a) + 2.0 - n);
    if x >= root {
        return far(x);
    }
    if x >= edge {
        return c.powf(n - s.a) * m.powf(s.b + d * (n - s.a)) * x.powf(2.0 - n);
    }
    if s.a < 2.0 {
        return s.c2.powf(2.0 - s.a) * m.powf(s.b + s.d2 * (2.0 - s.a));
    }
    let inner = s.c1 * m.powf(s.d1);
    if x <= inner {
        s.c1.powf(2.0 - s.a) * m.powf(s.b + s.d1 * (2.0 - s.a))
    } else {
        m.powf(s.b) * x.powf(2.0 - s.a)
    }
}

/// The catalog of barrier estimates for the constants in `table`.
pub fn barrier_catalog(table: &ConstantTable) -> Result<Vec<BarrierCatalogEntry>> {
    let n = table.dim.nf();
    let nn = table.dim.n;
    let mut out = Vec::new();
    let inf = f64::INFINITY;

    let origin_sources = [
        ("origin a>2", PowerLawSource::new(-1.1, 3.0, -0.5, 0.0, 1.0, 1.0)),
        ("origin a=2", PowerLawSource::new(-1.1, 2.0, -0.5, 0.0, 1.0, 1.0)),
        ("origin a<2", PowerLawSource::new(-1.1, 1.0, 0.0, 0.25, 0.0, 1.0)),
        ("origin a>n", PowerLawSource::new(-1.0, n + 1.0, -0.25, 0.0, 1.0, 1.0)),
    ];
    for (name, s) in origin_sources {
        s.check(nn)?;
        out.push(pow_entry(name, BarrierTag::Origin, s, move |_, t| origin_bound(s, t), origin));
    }

    let s = PowerLawSource::new(-1.1, 3.0, -0.5, 0.0, 1.0, 1.0);
    s.check(nn)?;
    out.push(pow_entry(
        "annulus sup a>2",
        BarrierTag::Annulus,
        s,
        move |_, t| s.c1.powf(2.0 - s.a) * (-t).powf(s.b + s.d1 * (2.0 - s.a)),
        whole_space,
    ));
    let s = PowerLawSource::new(-1.2, 1.0, 0.0, 0.25, 0.0, 1.0);
    s.check(nn)?;
    out.push(pow_entry(
        "annulus sup a<2",
        BarrierTag::Annulus,
        s,
        move |_, t| s.c2.powf(2.0 - s.a) * (-t).powf(s.b + s.d2 * (2.0 - s.a)),
        whole_space,
    ));
    let s = PowerLawSource::new(-1.5, 1.0, -0.25, 0.25, 1.0, 1.0);
    s.check(nn)?;
    out.push(pow_entry(
        "annulus far a<n",
        BarrierTag::Annulus,
        s,
        move |x, t| annular_profile(n, s, x, t),
        move |t| (2.0 * s.c2 * (-2.0 * t).powf(s.d2), 30.0 * (-t).sqrt()),
    ));
    let s = PowerLawSource::new(-1.0, n + 2.0, -0.25, 0.0, 1.0, 1.0);
    s.check(nn)?;
    out.push(pow_entry(
        "annulus far a>n",
        BarrierTag::Annulus,
        s,
        move |x, t| annular_profile(n, s, x, t),
        move |t| (2.0 * s.c1 * (-2.0 * t).powf(s.d1), 30.0 * (-t).sqrt()),
    ));

    for (name, s) in [
        ("singular a=3", PowerLawSource::new(-1.0, 3.0, 0.0, 0.0, 0.0, 1.0)),
        ("singular a=5", PowerLawSource::new(0.0, 5.0, 0.0, 0.25, 0.0, 1.0)),
    ] {
        s.check(nn)?;
        out.push(pow_entry(
            name,
            BarrierTag::Singular,
            s,
            move |x, t| (-t).powf(s.b) * x.powf(2.0 - s.a),
            move |t| {
                let hi = s.c2 * (-t).powf(s.d2);
                (1e-4 * hi, hi * (1.0 - 1e-9))
            },
        ));
    }

    for (name, s) in [
        ("piecewise a<2", PowerLawSource::new(-1.2, 1.0, 0.0, 0.25, 0.0, 1.0)),
        ("piecewise 2<a<n", PowerLawSource::new(-1.1, 4.0, -0.5, 0.0, 1.0, 1.0)),
        ("piecewise 2<a<n wide", PowerLawSource::new(-1.1, 4.0, -0.5, 0.25, 1.0, 1.0)),
        ("piecewise a>n", PowerLawSource::new(-1.0, n + 2.0, -0.25, 0.25, 1.0, 1.0)),
    ] {
        s.check(nn)?;
        out.push(pow_entry(name, BarrierTag::Piecewise, s, move |x, t| annular_profile(n, s, x, t), whole_space));
    }

    for (name, s) in [
        ("outer b<-1", PowerLawSource::new(-1.01, 5.0, 0.5, 0.5, 1.0, inf)),
        ("outer b=-1", PowerLawSource::new(-1.0, 5.0, 0.5, 0.5, 1.0, inf)),
        ("outer b>-1", PowerLawSource::new(-0.5, 6.0, 0.5, 0.5, 1.0, inf)),
    ] {
        s.check(nn)?;
        out.push(pow_entry(
            name,
            BarrierTag::Outer,
            s,
            move |x, t| {
                let m = -t;
                if x <= m.sqrt() {
                    m.powf(1.0 + s.b - 0.5 * s.a)
                } else if s.b < -1.0 {
                    x.powf(-s.a) * m.powf(1.0 + s.b)
                } else if s.b == -1.0 {
                    x.powf(-s.a) * (1.0 + (x * x / m).ln())
                } else {
                    x.powf(-s.a) * x.powf(2.0 + 2.0 * s.b)
                }
            },
            whole_space,
        ));
    }

    let s = PowerLawSource::new(-1.5, 0.0, -0.5, 0.0, 1.0, 1.0);
    s.check_gradient(nn)?;
    out.push(pow_entry(
        "gradient annulus",
        BarrierTag::Gradient,
        s,
        move |x, t| {
            let m = -t;
            let edge = m.powf(s.d2);
            let e = s.b + s.d2 * n;
            if x <= edge {
                m.powf(s.b + s.d2)
            } else if x <= m.sqrt() {
                m.powf(e) * x.powf(1.0 - n)
            } else {
                (x * x).powf(e) * x.powf(1.0 - n)
            }
        },
        whole_space,
    ));
    let s = PowerLawSource::new(-1.0, n + 2.0, -0.25, 0.0, 1.0, 1.0);
    s.check_gradient(nn)?;
    out.push(pow_entry(
        "gradient a>n",
        BarrierTag::Gradient,
        s,
        move |x, t| {
            let m = -t;
            let edge = m.powf(s.d1);
            let e = s.b + s.d1 * (n - s.a);
            if x <= edge {
                m.powf(s.b + s.d1 * (1.0 - s.a))
            } else if x <= m.sqrt() {
                m.powf(e) * x.powf(1.0 - n)
            } else {
                (x * x).powf(e) * x.powf(1.0 - n)
            }
        },
        whole_space,
    ));

    let k = table.k;
    let mut weight_pairs = vec![(WeightFamily::W1, WeightFamily::W1Star, 1, BarrierTag::BubbleWeight)];
    if k >= 2 {
        weight_pairs.push((WeightFamily::W1, WeightFamily::W1Star, 2, BarrierTag::BubbleWeight));
        weight_pairs.push((WeightFamily::W2, WeightFamily::W2Star, 1, BarrierTag::NeckWeight));
    }
    if k >= 3 {
        weight_pairs.push((WeightFamily::W2, WeightFamily::W2Star, 2, BarrierTag::NeckWeight));
    }
    weight_pairs.push((WeightFamily::W3, WeightFamily::W3Star, 1, BarrierTag::FarWeight));
    for (src_family, bar_family, j, tag) in weight_pairs {
        let src = WeightSpec::new(src_family, j, table)?;
        let bar = WeightSpec::new(bar_family, j, table)?;
        let tb = table.clone();
        let name = format!("{src_family:?}[{j}] -> {bar_family:?}[{j}]").to_lowercase();
        out.push(BarrierCatalogEntry {
            name,
            tag,
            operator: Operator::Heat,
            source: CatalogSource::Weight(WeightSource(src)),
            barrier: Box::new(move |x, t| bar.value(x, t).unwrap_or(f64::NAN)),
            region: Box::new(move |t| {
                let inner = tb.scales(t).map(|s| s.mu0(tb.k)).unwrap_or(1.0);
                (1e-2 * inner, 30.0 * (-t).sqrt())
            }),
        });
    }
    Ok(out)
}

/// Reference times of the barrier checks.
pub const REFERENCE_TIMES: [f64; 3] = [-1e2, -1e3, -1e4];

/// Run every entry whose tag is in `tags` (all when empty).
pub fn run_catalog(table: &ConstantTable, tags: &[BarrierTag], times: &[f64], per_time: usize, opts: DuhamelOptions) -> Result<Vec<BarrierReport>> {
    let catalog = barrier_catalog(table)?;
    Ok(catalog
        .iter()
        .filter(|e| tags.is_empty() || tags.contains(&e.tag))
        .map(|e| barrier_check(table.dim, e, &sample_cloud(e, times, per_time), opts))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d7() -> Dimension {
        Dimension::new(7).unwrap()
    }

    #[test]
    fn kernel_is_a_probability_density() {
        for &(tau, r) in &[(0.3, 0.0), (1.0, 2.0), (0.01, 5.0), (50.0, 1.0)] {
            let w = WINDOW * f64::sqrt(tau);
            let a = (r - w).max(0.0);
            let v = integrate(|rho| radial_heat_kernel(7, tau, r, rho), a, r + w, QuadOptions::rel(1e-12)).unwrap();
            assert!((v.value - 1.0).abs() < 1e-10, "tau={tau} r={r} {}", v.value);
        }
    }

    #[test]
    fn kernel_matches_gaussian_average_at_origin() {
        let (tau, rho) = (0.7f64, 1.3f64);
        let direct = 2.0 * rho.powi(6) * (4.0 * tau).powf(-3.5) * (-rho * rho / (4.0 * tau)).exp() / statrs::function::gamma::gamma(3.5);
        assert!((radial_heat_kernel(7, tau, 0.0, rho) / direct - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_branches_agree() {
        // z = rρ/(2τ) just below and above the switch.
        let tau = 1.0;
        let r = 7.0;
        for rho in [60.0 / 7.0 * (1.0 - 1e-9), 60.0 / 7.0 * (1.0 + 1e-9)] {
            let v = radial_heat_kernel(7, tau, r, rho);
            assert!(v.is_finite() && v > 0.0);
        }
        let a = radial_heat_kernel(7, tau, r, 60.0 / 7.0 * (1.0 - 1e-9));
        let b = radial_heat_kernel(7, tau, r, 60.0 / 7.0 * (1.0 + 1e-9));
        assert!((a / b - 1.0).abs() < 1e-8);
    }

    #[test]
    fn empty_indicator_gives_zero() {
        let s = PowerLawSource::new(-1.1, 3.0, 0.0, 0.0, 1.0, 1.0);
        let v = duhamel_power_law(d7(), &s, 0.0, -100.0, DuhamelOptions::default()).unwrap();
        assert_eq!(v, 0.0);
        let g = gradient_power_law(d7(), &PowerLawSource::new(-1.5, 0.0, 0.0, 0.0, 1.0, 1.0), 0.5, -100.0, DuhamelOptions::default()).unwrap();
        assert_eq!(g, 0.0);
    }

    #[test]
    fn linear_in_source() {
        let s = PowerLawSource::new(-1.1, 3.0, -0.5, 0.0, 1.0, 1.0);
        let o = DuhamelOptions { rel_tol: 1e-8 };
        let a = duhamel_power_law(d7(), &s, 0.3, -100.0, o).unwrap();
        let b = duhamel_power_law(d7(), &s.scaled(2.0), 0.3, -100.0, o).unwrap();
        assert!((b / a - 2.0).abs() < 1e-10);
    }

    #[test]
    fn ledger_violations_named() {
        let s = PowerLawSource::new(3.0, 1.0, 0.0, 0.5, 0.0, 1.0);
        match duhamel_power_law(d7(), &s, 0.0, -100.0, DuhamelOptions::default()) {
            Err(Error::Domain(m)) => assert!(m.contains("n/2 - b + d2(a - n) > 1")),
            other => panic!("{other:?}"),
        }
        let outer = PowerLawSource::new(0.0, 1.0, 0.5, 0.5, 1.0, f64::INFINITY);
        assert!(matches!(outer.check(7), Err(Error::Domain(_))));
    }

    #[test]
    fn constant_in_time_ball_source_at_origin_matches_closed_form() {
        // g = |t|^b 1{|x| ≤ 1}: the image at 0 is ∫ |t-τ|^b P(|B_τ| ≤ 1) dτ.
        let b = -2.0;
        let s = PowerLawSource::new(b, 0.0, 0.0, 0.0, 0.0, 1.0);
        let t = -10.0;
        let v = duhamel_power_law(d7(), &s, 0.0, t, DuhamelOptions { rel_tol: 1e-9 }).unwrap();
        // P(|B_τ| ≤ 1) = regularized lower gamma P(7/2, 1/(4τ)).
        let oracle = integrate(
            |u: f64| {
                let tau = u.exp();
                statrs::function::gamma::gamma_lr(3.5, 1.0 / (4.0 * tau)) * (-(t - tau)).powf(b) * tau
            },
            -30.0,
            30.0,
            QuadOptions::rel(1e-11),
        )
        .unwrap()
        .value;
        assert!((v / oracle - 1.0).abs() < 1e-7, "{v} {oracle}");
    }

    #[test]
    fn gradient_kernel_at_origin_matches_radial_formula() {
        // For x = 0 the angular integral is trivial.
        let n = 7u32;
        let v = sphere_gauss_distance(n, 0.5, 0.0, 1.2, 1.2, 1e-10).unwrap();
        let exact = sphere_area(n) * 1.2 * (-1.44f64 / 2.0).exp();
        assert!((v / exact - 1.0).abs() < 1e-12);
        // Tiny r reproduces the same limit.
        let near = sphere_gauss_distance(n, 0.5, 1e-7, 1.2, 1.2 - 1e-7, 1e-12).unwrap();
        assert!((near / exact - 1.0).abs() < 1e-6);
    }

    #[test]
    fn heat_equation_holds_inside_the_source() {
        // Outer source |t|^{-3/2}|x|^{-2} on |x| >= 1; check u_t - Δu = g at r = 3.
        let s = PowerLawSource::new(-1.5, 2.0, 0.0, 0.0, 1.0, f64::INFINITY);
        let o = DuhamelOptions { rel_tol: 1e-11 };
        let (r, t, h, k) = (3.0, -10.0, 0.05, 0.05);
        let u = |r: f64, t: f64| duhamel_power_law(d7(), &s, r, t, o).unwrap();
        let c = u(r, t);
        let ut = (u(r, t + k) - u(r, t - k)) / (2.0 * k);
        let (up, um) = (u(r + h, t), u(r - h, t));
        let lap = (up - 2.0 * c + um) / (h * h) + 6.0 / r * (up - um) / (2.0 * h);
        let g = s.value(r, t);
        assert!((ut - lap - g).abs() < 1e-3 * g, "{} vs {g}", ut - lap);
    }

    #[test]
    fn gradient_kernel_bounds_the_radial_derivative() {
        let s = PowerLawSource::new(-1.2, 1.0, 0.0, 0.0, 0.0, 1.0);
        let o = DuhamelOptions { rel_tol: 1e-10 };
        let pre = 0.5 * (4.0 * PI).powf(-3.5);
        for &r in &[0.3, 1.0, 2.5] {
            let h = 1e-3;
            let du = (duhamel_power_law(d7(), &s, r + h, -50.0, o).unwrap() - duhamel_power_law(d7(), &s, r - h, -50.0, o).unwrap()) / (2.0 * h);
            let bound = pre * gradient_power_law(d7(), &s, r, -50.0, o).unwrap();
            assert!(du < 0.0 && du.abs() <= bound, "r={r}: {du} vs {bound}");
            // The bound is not wildly loose.
            assert!(du.abs() > 0.05 * bound, "r={r}: {du} vs {bound}");
        }
    }

    #[test]
    fn decreasing_sources_peak_at_the_origin() {
        let s = PowerLawSource::new(-1.2, 1.0, 0.0, 0.0, 0.0, 1.0);
        let o = DuhamelOptions { rel_tol: 1e-8 };
        let vals: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 5.0].iter().map(|&r| duhamel_power_law(d7(), &s, r, -20.0, o).unwrap()).collect();
        for w in vals.windows(2) {
            assert!(w[1] < w[0], "{vals:?}");
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(8))]
        #[test]
        fn nonnegative_sources_give_nonnegative_linear_images(r in 0.0f64..5.0, log_t in 0.5f64..3.0, c in 0.1f64..10.0, a in 0.0f64..3.0) {
            let s = PowerLawSource::new(-1.1, a, 0.0, 0.0, 0.5, 2.0);
            let o = DuhamelOptions { rel_tol: 1e-8 };
            let t = -(10f64.powf(log_t));
            let u = duhamel_power_law(d7(), &s, r, t, o).unwrap();
            let v = duhamel_power_law(d7(), &s.scaled(c), r, t, o).unwrap();
            proptest::prop_assert!(u > 0.0);
            proptest::prop_assert!((v / u - c).abs() < 1e-9 * c);
        }
    }
}
