//! Dormand-Prince 5(4) with step-size control, landing exactly on requested
//! output times.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-14,
            initial_step: None,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub accepted: usize,
    pub rejected: usize,
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrate `y' = f(t, y)` from `t0` through every time in `outputs`
/// (monotone in the direction of integration). The first stored state is
/// the initial one.
pub fn dopri5<F>(mut f: F, t0: f64, y0: &[f64], outputs: &[f64], opts: OdeOptions) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let dim = y0.len();
    let Some(&t_end) = outputs.last() else {
        return Err(Error::config("no output times requested"));
    };
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    if outputs.windows(2).any(|w| (w[1] - w[0]) * dir < 0.0) || (outputs[0] - t0) * dir < 0.0 {
        return Err(Error::config("output times must be monotone in the integration direction"));
    }
    let mut sol = OdeSolution {
        times: vec![t0],
        states: vec![y0.to_vec()],
        accepted: 0,
        rejected: 0,
    };
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0; dim]; 7];
    f(t, &y, &mut k[0]);
    let span = (t_end - t0).abs();
    let mut h = opts.initial_step.unwrap_or_else(|| {
        let norm = |v: &[f64]| {
            let s: f64 = v.iter().zip(&y).map(|(vi, yi)| (vi / (opts.atol + opts.rtol * yi.abs())).powi(2)).sum();
            (s / dim.max(1) as f64).sqrt()
        };
        let (d0, d1) = (norm(&y), norm(&k[0]));
        let h0 = if d0 > 1e-5 && d1 > 1e-5 { 0.01 * d0 / d1 } else { 1e-6 * span };
        h0.min(span)
    });
    let mut ytmp = vec![0.0; dim];
    let mut ynew = vec![0.0; dim];
    let mut next_out = 0;
    while next_out < outputs.len() && (outputs[next_out] - t) * dir <= 0.0 {
        sol.times.push(outputs[next_out]);
        sol.states.push(y.clone());
        next_out += 1;
    }
    let mut fac_old: f64 = 1e-4;
    while next_out < outputs.len() {
        if sol.accepted + sol.rejected >= opts.max_steps {
            return Err(Error::numerical(format!("ODE step budget exhausted at t = {t}"), (outputs[next_out] - t).abs()));
        }
        let target = outputs[next_out];
        let mut landing = false;
        let proposed = h;
        if (t + dir * h - target) * dir >= 0.0 {
            h = (target - t).abs();
            landing = true;
        }
        if h <= 1e-15 * t.abs().max(span) && !landing {
            return Err(Error::numerical(format!("ODE step size underflow at t = {t}"), h));
        }
        let hs = dir * h;
        for s in 1..7 {
            for i in 0..dim {
                let mut acc = 0.0;
                for (m, km) in k.iter().enumerate().take(s) {
                    acc += A[s][m] * km[i];
                }
                ytmp[i] = y[i] + hs * acc;
            }
            let (head, tail) = k.split_at_mut(s);
            let _ = head;
            f(t + C[s] * hs, &ytmp, &mut tail[0]);
            if s == 6 {
                ynew.copy_from_slice(&ytmp);
            }
        }
        let mut err = 0.0;
        for i in 0..dim {
            let mut e = 0.0;
            for (m, km) in k.iter().enumerate() {
                e += E[m] * km[i];
            }
            let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
            err += (hs * e / sc).powi(2);
        }
        let err = (err / dim.max(1) as f64).sqrt();
        if !err.is_finite() {
            sol.rejected += 1;
            h *= 0.2;
            continue;
        }
        if err <= 1.0 {
            t = if landing { target } else { t + hs };
            y.copy_from_slice(&ynew);
            k.swap(0, 6);
            sol.accepted += 1;
            while next_out < outputs.len() && (outputs[next_out] - t) * dir <= 0.0 {
                sol.times.push(outputs[next_out]);
                sol.states.push(y.clone());
                next_out += 1;
            }
            // PI step control.
            let fac = (0.9 * err.max(1e-10).powf(-0.17) * fac_old.powf(0.04)).clamp(0.2, 10.0);
            fac_old = err.max(1e-4);
            h = if landing { proposed.max(h * fac) } else { h * fac };
        } else {
            sol.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).max(0.2);
        }
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let outs = [0.5, 1.0, 2.0];
        let sol = dopri5(|_, y, d| d[0] = -y[0], 0.0, &[1.0], &outs, OdeOptions::default()).unwrap();
        for (t, y) in sol.times.iter().zip(&sol.states) {
            assert!((y[0] - (-t).exp()).abs() < 1e-9, "t={t}");
        }
        assert_eq!(sol.times, vec![0.0, 0.5, 1.0, 2.0]);
    }

    #[test]
    fn backward_harmonic() {
        let sol = dopri5(
            |_, y, d| {
                d[0] = y[1];
                d[1] = -y[0];
            },
            0.0,
            &[0.0, 1.0],
            &[-3.0],
            OdeOptions::default(),
        )
        .unwrap();
        let y = sol.states.last().unwrap();
        assert!((y[0] - (-3.0f64).sin()).abs() < 1e-8);
        assert!((y[1] - (-3.0f64).cos()).abs() < 1e-8);
    }

    #[test]
    fn rejects_unordered_outputs() {
        let r = dopri5(|_, _, d| d[0] = 0.0, 0.0, &[1.0], &[2.0, 1.0], OdeOptions::default());
        assert!(r.is_err());
    }
}
