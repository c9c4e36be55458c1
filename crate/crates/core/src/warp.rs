//! The convex warping profile `f'' = (a l0² / 2) f^(-a-1)`, `f(0) = 1`,
//! `f'(0) = 0`, and the circle warping `h = 2 f' / (a l0²)` derived from it.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{LeftEnd, RightEnd, WarpProfile};
use crate::ode::{self, OdeError, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstructionParams {
    /// Dimension of the totally geodesic slice; the ambient dimension is `n + 1`.
    pub n: usize,
    /// Radius of the round geodesic disc that is cut out.
    pub r2: f64,
    /// Target circle radius. The realized radius is reported by the glue stage.
    pub r1: f64,
    pub alpha: f64,
    pub lambda0: f64,
    /// Normal Ricci curvature prescribed along the slice.
    pub eps: f64,
    /// Integration horizon.
    #[serde(rename = "T")]
    pub horizon: f64,
    pub tol: f64,
    pub grid_points: usize,
}

impl Default for ConstructionParams {
    fn default() -> Self {
        Self {
            n: 4,
            r2: 0.5,
            r1: 0.1,
            alpha: 2.2,
            lambda0: 0.9,
            eps: 0.1,
            horizon: 10.0,
            tol: 1e-10,
            grid_points: 2001,
        }
    }
}

impl ConstructionParams {
    /// `a l0² / 2`, the coefficient of the ODE and `f''(0)`.
    pub fn ode_coefficient(&self) -> f64 {
        0.5 * self.alpha * self.lambda0 * self.lambda0
    }

    /// `2 / (a l0²)`, the factor relating `h` to `f'`.
    pub fn h_factor(&self) -> f64 {
        2.0 / (self.alpha * self.lambda0 * self.lambda0)
    }

    pub fn grid(&self) -> Vec<f64> {
        let m = self.grid_points;
        (0..m).map(|i| self.horizon * i as f64 / (m - 1) as f64).collect()
    }
}

/// One violated parameter window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamViolation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ParamViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WarpError {
    #[error("invalid parameters: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidParams(Vec<ParamViolation>),
    #[error("ODE tolerance not met: {0}")]
    OdeToleranceNotMet(#[from] OdeError),
    #[error("profile has no f samples")]
    MissingF,
}

/// Checks every parameter window and returns the full list of violations.
pub fn validate_params(p: &ConstructionParams) -> Result<(), Vec<ParamViolation>> {
    let mut v = Vec::new();
    let mut push = |field: &'static str, message: String| v.push(ParamViolation { field: field.into(), message });
    let finite = [p.r2, p.r1, p.alpha, p.lambda0, p.eps, p.horizon, p.tol].iter().all(|x| x.is_finite());
    if !finite {
        push("params", "all real parameters must be finite".into());
        return Err(v);
    }
    if p.n < 3 {
        push("n", format!("n = {} must be at least 3", p.n));
    }
    if !(p.r2 > 0.0 && p.r2 < FRAC_PI_2) {
        push("r2", format!("r2 = {} must lie in (0, pi/2)", p.r2));
    }
    if p.r1 <= 0.0 {
        push("r1", format!("r1 = {} must be positive", p.r1));
    }
    let cos_r2 = p.r2.cos();
    if !(p.lambda0 > cos_r2 && p.lambda0 < 1.0) {
        push("lambda0", format!("lambda0 = {} must lie in (cos r2, 1) = ({cos_r2}, 1)", p.lambda0));
    }
    if p.n >= 3 && p.lambda0 > 0.0 {
        let lo = p.n as f64 - 2.0;
        let hi = lo / (p.lambda0 * p.lambda0);
        if !(p.alpha > lo && p.alpha < hi) {
            push("alpha", format!("alpha = {} must lie in (n-2, (n-2)/lambda0^2) = ({lo}, {hi})", p.alpha));
        }
        let product = p.alpha * p.lambda0 * p.lambda0;
        if product >= lo {
            push("alpha", format!("alpha * lambda0^2 = {product} must be below n-2 = {lo}"));
        }
    }
    if p.eps <= 0.0 {
        push("eps", format!("eps = {} must be positive", p.eps));
    }
    if p.horizon <= 0.0 {
        push("T", format!("T = {} must be positive", p.horizon));
    }
    if !(p.tol > 0.0 && p.tol <= 1e-3) {
        push("tol", format!("tol = {} must lie in (0, 1e-3]", p.tol));
    }
    if p.grid_points < 3 {
        push("grid_points", format!("grid_points = {} must be at least 3", p.grid_points));
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

/// Right-hand side of the IVP as a first-order system in `(f, f')`.
pub fn ivp_rhs(coefficient: f64, alpha: f64) -> impl Fn(f64, &[f64; 2]) -> [f64; 2] {
    move |_, y| [y[1], coefficient * y[0].powf(-alpha - 1.0)]
}

/// Solves the IVP on the uniform grid over `[0, T]`. The `h` arrays are left
/// empty; see [`derive_h`].
pub fn solve_ivp(p: &ConstructionParams) -> Result<WarpProfile, WarpError> {
    validate_params(p).map_err(WarpError::InvalidParams)?;
    let grid = p.grid();
    let c = p.ode_coefficient();
    let states = ode::integrate(ivp_rhs(c, p.alpha), 0.0, [1.0, 0.0], &grid, Tolerance::uniform(p.tol))?;
    let f: Vec<f64> = states.iter().map(|s| s[0]).collect();
    let f1 = states.iter().map(|s| s[1]).collect();
    let f2 = f.iter().map(|&x| c * x.powf(-p.alpha - 1.0)).collect();
    Ok(WarpProfile {
        grid,
        f,
        f1,
        f2,
        h: Vec::new(),
        h1: Vec::new(),
        h2: Vec::new(),
        left_end: LeftEnd::CapClosure,
        right_end: RightEnd::Free,
    })
}

/// Third derivative of `f` from differentiating the ODE.
pub fn third_derivative(f: f64, f1: f64, alpha: f64, lambda0: f64) -> f64 {
    -0.5 * alpha * (alpha + 1.0) * lambda0 * lambda0 * f.powf(-alpha - 2.0) * f1
}

/// Populates `h = 2 f'/(a l0²)` with `h' = 2 f''/(a l0²)` and
/// `h'' = 2 f'''/(a l0²)`.
pub fn derive_h(profile: &WarpProfile, p: &ConstructionParams) -> Result<WarpProfile, WarpError> {
    if profile.f.is_empty() || profile.f1.len() != profile.f.len() || profile.f2.len() != profile.f.len() {
        return Err(WarpError::MissingF);
    }
    let k = p.h_factor();
    let mut out = profile.clone();
    out.h = profile.f1.iter().map(|d| k * d).collect();
    out.h1 = profile.f2.iter().map(|d| k * d).collect();
    out.h2 = profile
        .f
        .iter()
        .zip(&profile.f1)
        .map(|(&f, &f1)| k * third_derivative(f, f1, p.alpha, p.lambda0))
        .collect();
    Ok(out)
}

/// `max |f'² - l0² (1 - f^(-a))|` over the grid.
pub fn first_integral_residual(profile: &WarpProfile, p: &ConstructionParams) -> f64 {
    let l2 = p.lambda0 * p.lambda0;
    profile
        .f
        .iter()
        .zip(&profile.f1)
        .map(|(&f, &f1)| (f1 * f1 - l2 * (1.0 - f.powf(-p.alpha))).abs())
        .fold(0.0, f64::max)
}

/// Closure parity residuals at the left end: `(|f'(0)|, |h(0)|, |h'(0)-1|, |h''(0)|)`.
pub fn closure_residuals(profile: &WarpProfile) -> [f64; 4] {
    let get = |v: &Vec<f64>| v.first().copied().unwrap_or(f64::NAN);
    [
        get(&profile.f1).abs(),
        get(&profile.h).abs(),
        (get(&profile.h1) - 1.0).abs(),
        get(&profile.h2).abs(),
    ]
}

/// Taylor coefficients `a_0..=a_order` of the IVP solution about a point where
/// `f = f0`, `f' = f1`, obtained by power-series recursion for `f^(-a-1)`.
/// Also returns the coefficients of `f^(-a-1)`, which is `h'` along the
/// unmodified profile.
pub fn taylor_coefficients(f0: f64, f1: f64, alpha: f64, lambda0: f64, order: usize) -> (Vec<f64>, Vec<f64>) {
    let c = 0.5 * alpha * lambda0 * lambda0;
    let p = -alpha - 1.0;
    let mut a = vec![0.0; order + 3];
    let mut u = vec![0.0; order + 1];
    a[0] = f0;
    a[1] = f1;
    for k in 0..=order {
        u[k] = if k == 0 {
            f0.powf(p)
        } else {
            let s: f64 = (1..=k).map(|j| (p * j as f64 - (k - j) as f64) * a[j] * u[k - j]).sum();
            s / (k as f64 * f0)
        };
        a[k + 2] = c * u[k] / ((k + 1) * (k + 2)) as f64;
    }
    a.truncate(order + 1);
    (a, u)
}
