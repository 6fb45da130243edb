//! Banded linear solvers.

use crate::error::{Error, Result};

/// Solve a tridiagonal system with sub-diagonal `a`, diagonal `b`,
/// super-diagonal `c` (`a[0]` and `c[n-1]` ignored).
pub fn solve_tridiagonal(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    let scale = b.iter().chain(a.iter()).chain(c.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    let tiny = 1e-14 * scale.max(f64::MIN_POSITIVE);
    let mut piv = b[0];
    if piv.abs() <= tiny {
        return Err(Error::numerical("singular tridiagonal system (zero pivot)", piv.abs()));
    }
    cp[0] = c[0] / piv;
    dp[0] = d[0] / piv;
    for i in 1..n {
        piv = b[i] - a[i] * cp[i - 1];
        if piv.abs() <= tiny || !piv.is_finite() {
            return Err(Error::numerical("singular tridiagonal system (zero pivot)", piv.abs()));
        }
        cp[i] = if i + 1 < n { c[i] / piv } else { 0.0 };
        dp[i] = (d[i] - a[i] * dp[i - 1]) / piv;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    Ok(x)
}

/// A tridiagonal matrix stored by diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Tridiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * x[i];
                if i > 0 {
                    v += self.sub[i] * x[i - 1];
                }
                if i + 1 < n {
                    v += self.sup[i] * x[i + 1];
                }
                v
            })
            .collect()
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        solve_tridiagonal(&self.sub, &self.diag, &self.sup, rhs)
    }

    /// `I - dt·A`.
    pub fn implicit(&self, dt: f64) -> Tridiagonal {
        Tridiagonal {
            sub: self.sub.iter().map(|v| -dt * v).collect(),
            diag: self.diag.iter().map(|v| 1.0 - dt * v).collect(),
            sup: self.sup.iter().map(|v| -dt * v).collect(),
        }
    }

    /// `A - s·I`.
    pub fn shifted(&self, s: f64) -> Tridiagonal {
        Tridiagonal {
            sub: self.sub.clone(),
            diag: self.diag.iter().map(|v| v - s).collect(),
            sup: self.sup.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let m = Tridiagonal {
            sub: vec![0.0, 1.0, 1.0],
            diag: vec![4.0, 4.0, 4.0],
            sup: vec![1.0, 1.0, 0.0],
        };
        let x = vec![1.0, -2.0, 3.0];
        let b = m.apply(&x);
        let y = m.solve(&b).unwrap();
        for i in 0..3 {
            assert!((x[i] - y[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_pivot_is_error() {
        assert!(solve_tridiagonal(&[0.0, 0.0], &[0.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]).is_err());
    }
}
