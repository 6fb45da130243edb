//! Radial meshes, sampled radial fields and a clamped cubic spline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the map `r = ℓ sinh ξ` with uniform spacing in ξ.
///
/// The map is odd, so even radial profiles stay even in ξ and centered
/// differences keep their order at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinhMap {
    pub scale: f64,
    pub dxi: f64,
}

/// Strictly increasing radial nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    map: Option<SinhMap>,
}

impl RadialGrid {
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::config("a radial grid needs at least two nodes"));
        }
        if nodes[0] < 0.0 || nodes.windows(2).any(|w| !(w[1] > w[0])) || nodes.iter().any(|r| !r.is_finite()) {
            return Err(Error::config("radial grid nodes must be finite, nonnegative and strictly increasing"));
        }
        Ok(RadialGrid { nodes, map: None })
    }

    /// `count` nodes `r_i = ℓ sinh(iΔξ)` from 0 to `r_max`: uniform near the
    /// origin on the length `ℓ`, geometric beyond it.
    pub fn mapped(scale: f64, r_max: f64, count: usize) -> Result<Self> {
        if !(scale > 0.0 && r_max > 0.0) || count < 3 {
            return Err(Error::config("mapped grid needs positive scale, positive r_max and >= 3 nodes"));
        }
        let xi_max = (r_max / scale).asinh();
        let dxi = xi_max / (count - 1) as f64;
        let mut nodes: Vec<f64> = (0..count).map(|i| scale * (i as f64 * dxi).sinh()).collect();
        nodes[count - 1] = r_max;
        Ok(RadialGrid {
            nodes,
            map: Some(SinhMap { scale, dxi }),
        })
    }

    /// Geometric nodes from `r_min` to `r_max`, `per_decade` per factor ten.
    pub fn log_spaced(r_min: f64, r_max: f64, per_decade: usize) -> Result<Self> {
        if !(r_min > 0.0 && r_max > r_min) || per_decade == 0 {
            return Err(Error::config("log grid needs 0 < r_min < r_max and per_decade > 0"));
        }
        let decades = (r_max / r_min).log10();
        let count = ((decades * per_decade as f64).ceil() as usize).max(1) + 1;
        let step = decades / (count - 1) as f64;
        let mut nodes: Vec<f64> = (0..count).map(|i| r_min * 10f64.powf(i as f64 * step)).collect();
        nodes[count - 1] = r_max;
        Ok(RadialGrid { nodes, map: None })
    }

    /// Sorted union of several grids (nodes closer than a relative 1e-12 merged).
    pub fn union(grids: &[RadialGrid]) -> Result<Self> {
        let mut all: Vec<f64> = grids.iter().flat_map(|g| g.nodes.iter().copied()).collect();
        all.sort_by(f64::total_cmp);
        let mut out: Vec<f64> = Vec::with_capacity(all.len());
        for r in all {
            match out.last() {
                Some(&last) if (r - last).abs() <= 1e-12 * r.abs().max(f64::MIN_POSITIVE) => {}
                _ => out.push(r),
            }
        }
        RadialGrid::from_nodes(out)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    pub fn map(&self) -> Option<SinhMap> {
        self.map
    }
    pub fn r_max(&self) -> f64 {
        *self.nodes.last().expect("non-empty grid")
    }

    /// Number of nodes per decade in `[x/10, x]` (counts nodes in that decade).
    pub fn nodes_in_decade_below(&self, x: f64) -> usize {
        self.nodes.iter().filter(|&&r| r > 0.1 * x && r <= x).count()
    }
}

/// A radial field sampled on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialField {
    pub grid: RadialGrid,
    pub values: Vec<f64>,
}

impl RadialField {
    pub fn new(grid: RadialGrid, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::config("field length does not match its grid"));
        }
        Ok(RadialField { grid, values })
    }

    pub fn from_fn(grid: RadialGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        RadialField { grid, values }
    }

    pub fn radii(&self) -> &[f64] {
        self.grid.nodes()
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> Self {
        RadialField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }
}

/// Cubic spline with prescribed end slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    /// Clamped spline through `(x_i, y_i)` with `y'(x_0) = s0`, `y'(x_N) = s1`.
    pub fn clamped(x: Vec<f64>, y: Vec<f64>, s0: f64, s1: f64) -> Result<Self> {
        let n = x.len();
        if n < 3 || y.len() != n {
            return Err(Error::config("spline needs at least three matching samples"));
        }
        // Solve for second derivatives m_i.
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let h0 = x[1] - x[0];
        b[0] = h0 / 3.0;
        c[0] = h0 / 6.0;
        d[0] = (y[1] - y[0]) / h0 - s0;
        for i in 1..n - 1 {
            let hl = x[i] - x[i - 1];
            let hr = x[i + 1] - x[i];
            a[i] = hl / 6.0;
            b[i] = (hl + hr) / 3.0;
            c[i] = hr / 6.0;
            d[i] = (y[i + 1] - y[i]) / hr - (y[i] - y[i - 1]) / hl;
        }
        let hn = x[n - 1] - x[n - 2];
        a[n - 1] = hn / 6.0;
        b[n - 1] = hn / 3.0;
        d[n - 1] = s1 - (y[n - 1] - y[n - 2]) / hn;
        let m = crate::linalg::solve_tridiagonal(&a, &b, &c, &d)?;
        Ok(CubicSpline { x, y, m })
    }

    fn locate(&self, t: f64) -> usize {
        let n = self.x.len();
        match self.x.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        }
    }

    /// Value, first and second derivative at `t` (cubic extension outside).
    pub fn eval(&self, t: f64) -> [f64; 3] {
        let i = self.locate(t);
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let a = (x1 - t) / h;
        let b = (t - x0) / h;
        let v = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let d1 = (y1 - y0) / h - (3.0 * a * a - 1.0) * h * m0 / 6.0 + (3.0 * b * b - 1.0) * h * m1 / 6.0;
        let d2 = a * m0 + b * m1;
        [v, d1, d2]
    }

    pub fn x_max(&self) -> f64 {
        *self.x.last().expect("non-empty spline")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mapped_grid_shape() {
        let g = RadialGrid::mapped(1.0, 1000.0, 101).unwrap();
        assert_eq!(g.nodes()[0], 0.0);
        assert_eq!(g.r_max(), 1000.0);
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_unsorted_nodes() {
        assert!(RadialGrid::from_nodes(vec![0.0, 2.0, 1.0]).is_err());
    }

    #[test]
    fn union_merges() {
        let a = RadialGrid::from_nodes(vec![0.0, 1.0, 2.0]).unwrap();
        let b = RadialGrid::from_nodes(vec![1.0, 1.5, 3.0]).unwrap();
        assert_eq!(RadialGrid::union(&[a, b]).unwrap().nodes(), &[0.0, 1.0, 1.5, 2.0, 3.0]);
    }

    #[test]
    fn log_grid_density() {
        let g = RadialGrid::log_spaced(1e-6, 1.0, 20).unwrap();
        assert!(g.nodes_in_decade_below(1e-3) >= 19);
    }

    #[test]
    fn spline_reproduces_cubic() {
        let x: Vec<f64> = (0..30).map(|i| (i as f64 * 0.1).powf(1.3)).collect();
        let f = |t: f64| t * t * t - 2.0 * t;
        let df = |t: f64| 3.0 * t * t - 2.0;
        let y = x.iter().map(|&t| f(t)).collect();
        let s = CubicSpline::clamped(x.clone(), y, df(x[0]), df(*x.last().unwrap())).unwrap();
        for &t in &[0.05, 0.77, 1.9, 3.1] {
            let [v, d1, d2] = s.eval(t);
            assert!((v - f(t)).abs() < 1e-10);
            assert!((d1 - df(t)).abs() < 1e-9);
            assert!((d2 - 6.0 * t).abs() < 1e-8);
        }
    }
}
