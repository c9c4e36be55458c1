//! Adaptive Dormand–Prince 5(4) integrator for small fixed-size systems.
//!
//! The integrator lands exactly on every requested output time, so samples
//! never go through an interpolant.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (tolerance {tol} not met)")]
    StepUnderflow { t: f64, tol: f64 },
    #[error("step budget of {steps} exhausted at t = {t}")]
    TooManySteps { t: f64, steps: usize },
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
    #[error("output times must be non-decreasing and start at or after t0")]
    BadOutputTimes,
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Tolerance {
    pub fn uniform(tol: f64) -> Self {
        Self { rtol: tol, atol: tol, max_steps: 2_000_000 }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Fifth-order weights equal the last row of A (FSAL).
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
// Difference between fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = rhs(t, y)` from `(t0, y0)` and returns the state at each
/// time in `t_out` (non-decreasing, all `>= t0`).
pub fn integrate<const N: usize, F>(
    rhs: F,
    t0: f64,
    y0: [f64; N],
    t_out: &[f64],
    tol: Tolerance,
) -> Result<Vec<[f64; N]>, OdeError>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    if t_out.first().is_some_and(|&t| t < t0) || t_out.windows(2).any(|w| w[1] < w[0]) {
        return Err(OdeError::BadOutputTimes);
    }
    let mut out = Vec::with_capacity(t_out.len());
    let mut t = t0;
    let mut y = y0;
    let mut k1 = rhs(t, &y);
    let span = t_out.last().map_or(0.0, |&te| te - t0);
    let mut h = if span > 0.0 { (span * 1e-3).min(1e-2) } else { 1e-3 };
    let mut steps = 0usize;

    for &target in t_out {
        while t < target {
            if steps >= tol.max_steps {
                return Err(OdeError::TooManySteps { t, steps });
            }
            let remaining = target - t;
            let last = h >= remaining;
            let step = if last { remaining } else { h };
            let mut k = [[0.0; N]; 7];
            k[0] = k1;
            for s in 1..7 {
                let mut ys = y;
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        for i in 0..N {
                            ys[i] += step * a * kj[i];
                        }
                    }
                }
                k[s] = rhs(t + C[s] * step, &ys);
            }
            let mut y_new = y;
            let mut err = 0.0f64;
            for i in 0..N {
                let mut incr = 0.0;
                let mut e = 0.0;
                for s in 0..7 {
                    incr += B[s] * k[s][i];
                    e += E[s] * k[s][i];
                }
                y_new[i] = y[i] + step * incr;
                let scale = tol.atol + tol.rtol * y[i].abs().max(y_new[i].abs());
                err = err.max((step * e).abs() / scale);
            }
            if !y_new.iter().all(|v| v.is_finite()) {
                return Err(OdeError::NonFinite(t));
            }
            steps += 1;
            if err <= 1.0 {
                t = if last { target } else { t + step };
                y = y_new;
                k1 = k[6];
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // A step shortened to hit an output time does not shrink h.
                h = if last { h.max(step * grow) } else { step * grow };
            } else {
                h = step * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(OdeError::StepUnderflow { t, tol: tol.rtol });
                }
            }
        }
        out.push(y);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_period() {
        let ts: Vec<f64> = (0..=100).map(|i| i as f64 * 0.02 * std::f64::consts::PI).collect();
        let ys = integrate(|_, y: &[f64; 2]| [y[1], -y[0]], 0.0, [1.0, 0.0], &ts, Tolerance::uniform(1e-12))
            .unwrap();
        for (t, y) in ts.iter().zip(&ys) {
            assert!((y[0] - t.cos()).abs() < 1e-10);
            assert!((y[1] + t.sin()).abs() < 1e-10);
        }
    }

    #[test]
    fn exponential_growth_relative_accuracy() {
        let ys = integrate(|_, y: &[f64; 1]| [y[0]], 0.0, [1.0], &[10.0], Tolerance::uniform(1e-11)).unwrap();
        assert!((ys[0][0] / 10f64.exp() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn repeated_and_initial_output_times() {
        let ys = integrate(|_, _: &[f64; 1]| [1.0], 0.0, [0.0], &[0.0, 0.5, 0.5, 2.0], Tolerance::uniform(1e-10))
            .unwrap();
        assert_eq!(ys[0][0], 0.0);
        assert!((ys[2][0] - 0.5).abs() < 1e-14);
        assert!((ys[3][0] - 2.0).abs() < 1e-14);
        assert_eq!(
            integrate(|_, _: &[f64; 1]| [1.0], 1.0, [0.0], &[0.5], Tolerance::uniform(1e-10)),
            Err(OdeError::BadOutputTimes)
        );
    }

    #[test]
    fn step_budget_is_enforced() {
        let tol = Tolerance { rtol: 1e-12, atol: 1e-12, max_steps: 5 };
        let r = integrate(|_, y: &[f64; 2]| [y[1], -y[0]], 0.0, [1.0, 0.0], &[100.0], tol);
        assert!(matches!(r, Err(OdeError::TooManySteps { .. })));
    }
}
