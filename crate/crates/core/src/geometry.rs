//! Curvature of doubly warped metrics `dt² + h(t)² dθ² + f(t)² ds²_{n-1}` and of
//! slab metrics `dt² + g_t` around a totally geodesic slice.
//!
//! Every formula here consumes warping functions together with their first and
//! second derivatives as carried by [`WarpProfile`]; nothing is differenced
//! except in [`second_fundamental_form`], whose input is a raw metric family.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when checking the smooth-closure conditions of a profile.
pub const CLOSURE_TOL: f64 = 1e-8;

/// Sign convention recorded in every curvature report.
pub const SECOND_FUNDAMENTAL_FORM_CONVENTION: &str = "unit normal d/dt, II = -1/2 dg_t/dt";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("grid has {0} points, need at least 3")]
    DegenerateGrid(usize),
    #[error("grid is not strictly increasing at index {0}")]
    NonMonotoneGrid(usize),
    #[error("array `{name}` has length {len}, grid has {grid}")]
    LengthMismatch { name: &'static str, len: usize, grid: usize },
    #[error("warping function {which} is not positive at t = {t} (value {value})")]
    NonPositiveWarping { which: char, t: f64, value: f64 },
    #[error("closure condition violated at the left end: {0}")]
    ClosureViolated(String),
    #[error("warping function h has not been populated")]
    MissingH,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dimension n = {0} is below 3")]
    DimensionTooSmall(usize),
    #[error("need three samples bracketing t = {0}")]
    GridTooCoarse(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeftEnd {
    /// `h` closes up smoothly: `h(t0) = 0`, `h'(t0) = 1`, `f'(t0) = 0`.
    CapClosure,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RightEnd {
    /// `f = sin t` and `h` constant near the right end.
    SphereMatch,
    Free,
}

/// Sampled warping functions with their exact first and second derivatives.
///
/// The `h` arrays may be empty, which means the circle warping has not been
/// derived yet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpProfile {
    pub grid: Vec<f64>,
    pub f: Vec<f64>,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    pub h: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub left_end: LeftEnd,
    pub right_end: RightEnd,
}

impl WarpProfile {
    /// Samples analytic functions `(f, f', f'')` and `(h, h', h'')` on `grid`.
    pub fn from_fns(
        grid: Vec<f64>,
        f: impl Fn(f64) -> [f64; 3],
        h: impl Fn(f64) -> [f64; 3],
    ) -> Self {
        let fs: Vec<[f64; 3]> = grid.iter().map(|&t| f(t)).collect();
        let hs: Vec<[f64; 3]> = grid.iter().map(|&t| h(t)).collect();
        Self {
            f: fs.iter().map(|v| v[0]).collect(),
            f1: fs.iter().map(|v| v[1]).collect(),
            f2: fs.iter().map(|v| v[2]).collect(),
            h: hs.iter().map(|v| v[0]).collect(),
            h1: hs.iter().map(|v| v[1]).collect(),
            h2: hs.iter().map(|v| v[2]).collect(),
            grid,
            left_end: LeftEnd::Free,
            right_end: RightEnd::Free,
        }
    }

    pub fn empty(left_end: LeftEnd, right_end: RightEnd) -> Self {
        Self {
            grid: Vec::new(),
            f: Vec::new(),
            f1: Vec::new(),
            f2: Vec::new(),
            h: Vec::new(),
            h1: Vec::new(),
            h2: Vec::new(),
            left_end,
            right_end,
        }
    }

    pub fn push(&mut self, t: f64, f: [f64; 3], h: [f64; 3]) {
        self.grid.push(t);
        self.f.push(f[0]);
        self.f1.push(f[1]);
        self.f2.push(f[2]);
        self.h.push(h[0]);
        self.h1.push(h[1]);
        self.h2.push(h[2]);
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn has_h(&self) -> bool {
        !self.h.is_empty()
    }

    pub fn t_start(&self) -> f64 {
        self.grid[0]
    }

    pub fn t_end(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    /// Checks the structural invariants: shared lengths, monotone grid,
    /// positive `f` in the interior and, for closing profiles, the closure
    /// conditions at the left end.
    pub fn validate(&self) -> Result<(), GeometryError> {
        let n = self.grid.len();
        if n < 3 {
            return Err(GeometryError::DegenerateGrid(n));
        }
        if let Some(i) = self.grid.windows(2).position(|w| w[1] <= w[0]) {
            return Err(GeometryError::NonMonotoneGrid(i + 1));
        }
        let mut arrays: Vec<(&'static str, &Vec<f64>)> =
            vec![("f", &self.f), ("f1", &self.f1), ("f2", &self.f2)];
        if self.has_h() {
            arrays.extend([("h", &self.h), ("h1", &self.h1), ("h2", &self.h2)]);
        }
        for (name, a) in arrays {
            if a.len() != n {
                return Err(GeometryError::LengthMismatch { name, len: a.len(), grid: n });
            }
        }
        for i in 1..n - 1 {
            if self.f[i] <= 0.0 {
                return Err(GeometryError::NonPositiveWarping {
                    which: 'f',
                    t: self.grid[i],
                    value: self.f[i],
                });
            }
        }
        if self.left_end == LeftEnd::CapClosure {
            if self.f1[0].abs() > CLOSURE_TOL {
                return Err(GeometryError::ClosureViolated(format!("f'(t0) = {}", self.f1[0])));
            }
            if self.has_h() {
                if self.h[0].abs() > CLOSURE_TOL {
                    return Err(GeometryError::ClosureViolated(format!("h(t0) = {}", self.h[0])));
                }
                if (self.h1[0] - 1.0).abs() > CLOSURE_TOL {
                    return Err(GeometryError::ClosureViolated(format!(
                        "h'(t0) = {}",
                        self.h1[0]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Cubic Hermite interpolation of `(f, f')` at `t`, clamped to the grid.
    pub fn eval_f(&self, t: f64) -> f64 {
        let i = self.bracket(t);
        let (t0, t1) = (self.grid[i], self.grid[i + 1]);
        hermite(t0, t1, self.f[i], self.f[i + 1], self.f1[i], self.f1[i + 1], t)
    }

    fn bracket(&self, t: f64) -> usize {
        let n = self.grid.len();
        match self.grid.partition_point(|&g| g <= t) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        }
    }

    /// CSV with columns `t,f,f1,f2,h,h1,h2` (17 significant digits).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,f,f1,f2,h,h1,h2\n");
        let get = |v: &Vec<f64>, i: usize| v.get(i).copied().unwrap_or(f64::NAN);
        for i in 0..self.grid.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                fmt17(self.grid[i]),
                fmt17(self.f[i]),
                fmt17(self.f1[i]),
                fmt17(self.f2[i]),
                fmt17(get(&self.h, i)),
                fmt17(get(&self.h1, i)),
                fmt17(get(&self.h2, i)),
            );
        }
        out
    }
}

fn hermite(t0: f64, t1: f64, y0: f64, y1: f64, d0: f64, d1: f64, t: f64) -> f64 {
    let dt = t1 - t0;
    let s = (t - t0) / dt;
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0
        + (s3 - 2.0 * s2 + s) * dt * d0
        + (-2.0 * s3 + 3.0 * s2) * y1
        + (s3 - s2) * dt * d1
}

/// Formats a float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Principal Ricci data of a closed fiber, modeled as a Riemannian product of
/// Einstein factors and written in a fixed orthogonal eigenbasis.
///
/// `ricci_diag[i]` is `Ric(e_i, e_i)` and `metric_diag[i]` is `g(e_i, e_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFiber {
    pub id: String,
    pub dim: usize,
    pub ricci_diag: Vec<f64>,
    pub metric_diag: Vec<f64>,
    pub scal: f64,
}

impl ModelFiber {
    /// Builds a fiber and fills in `scal` as the metric trace of the Ricci data.
    pub fn new(id: impl Into<String>, ricci_diag: Vec<f64>, metric_diag: Vec<f64>) -> Result<Self, GeometryError> {
        if ricci_diag.len() != metric_diag.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: metric_diag.len(),
                got: ricci_diag.len(),
            });
        }
        if ricci_diag.is_empty() {
            return Err(GeometryError::DimensionMismatch { expected: 1, got: 0 });
        }
        if let Some(&g) = metric_diag.iter().find(|&&g| g <= 0.0 || !g.is_finite()) {
            return Err(GeometryError::NonPositiveWarping { which: 'g', t: 0.0, value: g });
        }
        let scal = ricci_diag.iter().zip(&metric_diag).map(|(r, g)| r / g).sum();
        Ok(Self { id: id.into(), dim: ricci_diag.len(), ricci_diag, metric_diag, scal })
    }

    /// Round sphere `S^m` of the given radius.
    pub fn round_sphere(m: usize, radius: f64) -> Self {
        let g = radius * radius;
        Self::new(format!("S{m}({radius})"), vec![m as f64 - 1.0; m], vec![g; m])
            .expect("valid sphere data")
    }

    /// Flat torus `T^m`.
    pub fn flat(m: usize) -> Self {
        Self::new(format!("T{m}"), vec![0.0; m], vec![1.0; m]).expect("valid flat data")
    }

    /// Riemannian product of the given fibers.
    pub fn product(factors: &[ModelFiber]) -> Self {
        let id = factors.iter().map(|f| f.id.as_str()).collect::<Vec<_>>().join("x");
        let ricci = factors.iter().flat_map(|f| f.ricci_diag.iter().copied()).collect();
        let metric = factors.iter().flat_map(|f| f.metric_diag.iter().copied()).collect();
        Self::new(id, ricci, metric).expect("factors are valid")
    }

    /// Absolute difference between `scal` and the metric trace of the Ricci data.
    pub fn trace_defect(&self) -> f64 {
        let tr: f64 = self.ricci_diag.iter().zip(&self.metric_diag).map(|(r, g)| r / g).sum();
        (tr - self.scal).abs()
    }
}

/// Curvature of the doubly warped metric at one grid point, in unit directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureRecord {
    pub t: f64,
    pub ric_tt: f64,
    pub ric_circle: f64,
    pub ric_sphere: f64,
    pub scal_hyp: f64,
    /// Value obtained by one-sided quadratic extrapolation at a collapsed end.
    pub extrapolated: bool,
}

impl CurvatureRecord {
    pub fn min_ric(&self) -> f64 {
        self.ric_tt.min(self.ric_circle).min(self.ric_sphere)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureReport {
    pub n: usize,
    pub records: Vec<CurvatureRecord>,
    pub min_ric: f64,
    pub min_scal_hyp: f64,
    /// `min_t [scal_hyp - (n-1) f^(-a-2) (n-2-a l0^2)]`, when the bound applies.
    pub bound_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSummary {
    pub min_ric: f64,
    pub min_scal_hyp: f64,
    pub bound_residual: Option<f64>,
    pub flags: CurvatureFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureFlags {
    pub extrapolated_points: Vec<f64>,
    pub points: usize,
    pub convention: String,
}

impl CurvatureReport {
    fn from_records(n: usize, records: Vec<CurvatureRecord>) -> Self {
        let min_ric = records.iter().map(CurvatureRecord::min_ric).fold(f64::INFINITY, f64::min);
        let min_scal_hyp = records.iter().map(|r| r.scal_hyp).fold(f64::INFINITY, f64::min);
        Self { n, records, min_ric, min_scal_hyp, bound_residual: None }
    }

    /// Minimum Ricci component over records with `t` inside `[lo, hi]`.
    pub fn min_ric_on(&self, lo: f64, hi: f64) -> f64 {
        self.records
            .iter()
            .filter(|r| r.t >= lo && r.t <= hi)
            .map(CurvatureRecord::min_ric)
            .fold(f64::INFINITY, f64::min)
    }

    /// Attaches the hypersurface scalar-curvature lower bound
    /// `(n-1) f^(-a-2) (n-2 - a l0^2)`, valid for the unmodified IVP profile.
    pub fn attach_scalar_bound(&mut self, profile: &WarpProfile, alpha: f64, lambda0: f64) {
        let n = self.n;
        let residual = self
            .records
            .iter()
            .zip(&profile.f)
            .map(|(r, &f)| r.scal_hyp - scalar_lower_bound(f, n, alpha, lambda0))
            .fold(f64::INFINITY, f64::min);
        self.bound_residual = Some(residual);
    }

    pub fn summary(&self) -> CurvatureSummary {
        CurvatureSummary {
            min_ric: self.min_ric,
            min_scal_hyp: self.min_scal_hyp,
            bound_residual: self.bound_residual,
            flags: CurvatureFlags {
                extrapolated_points: self.records.iter().filter(|r| r.extrapolated).map(|r| r.t).collect(),
                points: self.records.len(),
                convention: SECOND_FUNDAMENTAL_FORM_CONVENTION.to_string(),
            },
        }
    }

    /// CSV with columns `t,ric_tt,ric_circle,ric_sphere,scal_hyp`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,ric_tt,ric_circle,ric_sphere,scal_hyp\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                fmt17(r.t),
                fmt17(r.ric_tt),
                fmt17(r.ric_circle),
                fmt17(r.ric_sphere),
                fmt17(r.scal_hyp)
            );
        }
        out
    }
}

/// Lower bound for the scalar curvature of `dt² + f² ds²_{n-1}` along the IVP
/// solution, using `f >= 1`.
pub fn scalar_lower_bound(f: f64, n: usize, alpha: f64, lambda0: f64) -> f64 {
    let nf = n as f64;
    (nf - 1.0) * f.powf(-alpha - 2.0) * (nf - 2.0 - alpha * lambda0 * lambda0)
}

/// Scalar curvature of `dt² + f(t)² ds²_{n-1}` from `(f, f', f'')`.
pub fn warped_scalar(n: usize, f: f64, f1: f64, f2: f64) -> f64 {
    let nf = n as f64;
    -2.0 * (nf - 1.0) * f2 / f + (nf - 1.0) * (nf - 2.0) * (1.0 - f1 * f1) / (f * f)
}

/// Unit-direction Ricci components `(tt, circle, sphere)` of the doubly
/// warped metric at a point where `f, h > 0`.
pub fn doubly_warped_ricci(n: usize, f: [f64; 3], h: [f64; 3]) -> [f64; 3] {
    let nf = n as f64;
    let [f0, f1, f2] = f;
    let [h0, h1, h2] = h;
    let mixed = h1 * f1 / (h0 * f0);
    let ric_tt = -h2 / h0 - (nf - 1.0) * f2 / f0;
    let ric_circle = -h2 / h0 - (nf - 1.0) * mixed;
    let ric_sphere = -f2 / f0 - mixed + (nf - 2.0) * (1.0 - f1 * f1) / (f0 * f0);
    [ric_tt, ric_circle, ric_sphere]
}

/// Ambient scalar curvature of the doubly warped metric via the general
/// multiply-warped formula
/// `Σ scal_i/w_i² - 2 Σ d_i w_i''/w_i - Σ_{i≠j} d_i d_j w_i' w_j'/(w_i w_j) - Σ d_i (d_i-1) w_i'²/w_i²`.
/// Used as an independent cross-check of the Ricci trace.
pub fn ambient_scalar_doubly_warped(n: usize, f: [f64; 3], h: [f64; 3]) -> f64 {
    let d = n as f64 - 1.0;
    // (dimension, fiber scalar curvature, w, w', w'')
    let factors = [(1.0, 0.0, h), (d, d * (d - 1.0), f)];
    let mut scal = 0.0;
    for (i, &(di, si, wi)) in factors.iter().enumerate() {
        scal += si / (wi[0] * wi[0]);
        scal -= 2.0 * di * wi[2] / wi[0];
        scal -= di * (di - 1.0) * wi[1] * wi[1] / (wi[0] * wi[0]);
        for (j, &(dj, _, wj)) in factors.iter().enumerate() {
            if i != j {
                scal -= di * dj * wi[1] * wj[1] / (wi[0] * wj[0]);
            }
        }
    }
    scal
}

/// Quadratic Lagrange extrapolation to `t` from three samples.
fn extrapolate3(t: f64, ts: [f64; 3], vs: [f64; 3]) -> f64 {
    let mut acc = 0.0;
    for i in 0..3 {
        let mut w = 1.0;
        for j in 0..3 {
            if i != j {
                w *= (t - ts[j]) / (ts[i] - ts[j]);
            }
        }
        acc += w * vs[i];
    }
    acc
}

/// Ricci components of `dt² + h² dθ² + f² ds²_{n-1}` and scalar curvature of
/// the slice `dt² + f² ds²_{n-1}` at every grid point.
///
/// End points where `f` or `h` vanishes are filled by quadratic extrapolation
/// from the three nearest interior points and flagged.
pub fn ricci_doubly_warped(profile: &WarpProfile, n: usize) -> Result<CurvatureReport, GeometryError> {
    if n < 3 {
        return Err(GeometryError::DimensionTooSmall(n));
    }
    profile.validate()?;
    if !profile.has_h() {
        return Err(GeometryError::MissingH);
    }
    let len = profile.len();
    let mut records = Vec::with_capacity(len);
    let mut collapsed = Vec::new();
    for i in 0..len {
        let t = profile.grid[i];
        let (f, h) = (profile.f[i], profile.h[i]);
        let end = i == 0 || i == len - 1;
        if f <= 0.0 || h <= 0.0 {
            if end {
                collapsed.push(i);
                records.push(CurvatureRecord {
                    t,
                    ric_tt: f64::NAN,
                    ric_circle: f64::NAN,
                    ric_sphere: f64::NAN,
                    scal_hyp: f64::NAN,
                    extrapolated: true,
                });
                continue;
            }
            let (which, value) = if f <= 0.0 { ('f', f) } else { ('h', h) };
            return Err(GeometryError::NonPositiveWarping { which, t, value });
        }
        let [ric_tt, ric_circle, ric_sphere] = doubly_warped_ricci(
            n,
            [f, profile.f1[i], profile.f2[i]],
            [h, profile.h1[i], profile.h2[i]],
        );
        records.push(CurvatureRecord {
            t,
            ric_tt,
            ric_circle,
            ric_sphere,
            scal_hyp: warped_scalar(n, f, profile.f1[i], profile.f2[i]),
            extrapolated: false,
        });
    }
    for &i in &collapsed {
        let idx: [usize; 3] = if i == 0 { [1, 2, 3] } else { [len - 2, len - 3, len - 4] };
        if idx.iter().any(|&j| j >= len || records[j].extrapolated) {
            return Err(GeometryError::DegenerateGrid(len));
        }
        let ts = idx.map(|j| records[j].t);
        let t = records[i].t;
        let pick = |g: fn(&CurvatureRecord) -> f64| extrapolate3(t, ts, idx.map(|j| g(&records[j])));
        let ric_tt = pick(|r| r.ric_tt);
        let ric_circle = pick(|r| r.ric_circle);
        let ric_sphere = pick(|r| r.ric_sphere);
        let scal_hyp = if profile.f[i] > 0.0 {
            warped_scalar(n, profile.f[i], profile.f1[i], profile.f2[i])
        } else {
            pick(|r| r.scal_hyp)
        };
        records[i] = CurvatureRecord { t, ric_tt, ric_circle, ric_sphere, scal_hyp, extrapolated: true };
    }
    Ok(CurvatureReport::from_records(n, records))
}

/// Scalar curvature of `dt² + f(t)² ds²_{n-1}` at each grid point.
pub fn scal_warped_hypersurface(profile: &WarpProfile, n: usize) -> Result<Vec<(f64, f64)>, GeometryError> {
    profile
        .grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let f = profile.f[i];
            if f <= 0.0 {
                return Err(GeometryError::NonPositiveWarping { which: 'f', t, value: f });
            }
            Ok((t, warped_scalar(n, f, profile.f1[i], profile.f2[i])))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceRicci {
    pub ric_tt: f64,
    /// `Ric(e_i, e_i)` in the fiber eigenbasis (bilinear, not normalized).
    pub ric_fiber: Vec<f64>,
}

/// Ricci data at `t = 0` of any metric `dt² + g_t` with `g_0` the fiber,
/// `g_0' = 0` and `g_0'' = g2` (diagonal in the fiber eigenbasis).
pub fn ricci_normal_slice(fiber: &ModelFiber, g2: &[f64]) -> Result<SliceRicci, GeometryError> {
    if g2.len() != fiber.dim {
        return Err(GeometryError::DimensionMismatch { expected: fiber.dim, got: g2.len() });
    }
    let trace: f64 = g2.iter().zip(&fiber.metric_diag).map(|(a, g)| a / g).sum();
    let ric_fiber = fiber.ricci_diag.iter().zip(g2).map(|(r, a)| r - 0.5 * a).collect();
    Ok(SliceRicci { ric_tt: -0.5 * trace, ric_fiber })
}

/// Symmetric bilinear form stored densely in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymForm {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl SymForm {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![0.0; dim * dim] }
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut s = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            s.data[i * d.len() + i] = v;
        }
        s
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|v| v * c).collect() }
    }

    pub fn add(&self, other: &SymForm) -> Self {
        Self { dim: self.dim, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondFundamentalForm {
    pub form: SymForm,
    /// `max |II_ij|`, zero for a totally geodesic slice.
    pub residual: f64,
}

/// `II = -1/2 dg_t/dt` at `t_star`, from samples of a metric family.
///
/// The derivative is the three-point Lagrange derivative through the samples
/// nearest to `t_star` (the centered difference on a uniform grid).
pub fn second_fundamental_form(
    times: &[f64],
    metrics: &[SymForm],
    t_star: f64,
) -> Result<SecondFundamentalForm, GeometryError> {
    let len = times.len();
    if len < 3 || metrics.len() != len {
        return Err(GeometryError::GridTooCoarse(t_star));
    }
    if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
        return Err(GeometryError::NonMonotoneGrid(i + 1));
    }
    if !(t_star > times[0] && t_star < times[len - 1]) {
        return Err(GeometryError::GridTooCoarse(t_star));
    }
    let dim = metrics[0].dim;
    if let Some(m) = metrics.iter().find(|m| m.dim != dim) {
        return Err(GeometryError::DimensionMismatch { expected: dim, got: m.dim });
    }
    // Center the stencil on the sample nearest to t_star.
    let nearest = (0..len)
        .min_by(|&a, &b| (times[a] - t_star).abs().total_cmp(&(times[b] - t_star).abs()))
        .expect("non-empty");
    let c = nearest.clamp(1, len - 2);
    let idx = [c - 1, c, c + 1];
    let ts = idx.map(|j| times[j]);
    // Derivative weights of the quadratic interpolant at t_star.
    let mut w = [0.0; 3];
    for i in 0..3 {
        let mut num = 0.0;
        let mut den = 1.0;
        for j in 0..3 {
            if j == i {
                continue;
            }
            den *= ts[i] - ts[j];
            let mut prod = 1.0;
            for k in 0..3 {
                if k != i && k != j {
                    prod *= t_star - ts[k];
                }
            }
            num += prod;
        }
        w[i] = num / den;
    }
    let mut form = SymForm::zeros(dim);
    for (k, v) in form.data.iter_mut().enumerate() {
        let d: f64 = (0..3).map(|i| w[i] * metrics[idx[i]].data[k]).sum();
        *v = -0.5 * d;
    }
    let residual = form.max_abs();
    Ok(SecondFundamentalForm { form, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn uniform(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    fn sin3(t: f64) -> [f64; 3] {
        [t.sin(), t.cos(), -t.sin()]
    }

    #[test]
    fn round_five_sphere_is_einstein() {
        let grid = uniform(0.05, PI / 2.0 - 0.05, 200);
        let p = WarpProfile::from_fns(grid, sin3, |t| [t.cos(), -t.sin(), -t.cos()]);
        let rep = ricci_doubly_warped(&p, 4).unwrap();
        for r in &rep.records {
            for v in [r.ric_tt, r.ric_circle, r.ric_sphere] {
                assert!((v - 4.0).abs() < 1e-12, "{v}");
            }
        }
    }

    #[test]
    fn product_region_is_only_nonnegative() {
        let grid = uniform(0.1, 3.0, 50);
        let p = WarpProfile::from_fns(grid, sin3, |_| [0.3, 0.0, 0.0]);
        let rep = ricci_doubly_warped(&p, 4).unwrap();
        for r in &rep.records {
            assert!((r.ric_tt - 3.0).abs() < 1e-12);
            assert_eq!(r.ric_circle, 0.0);
            assert!((r.ric_sphere - 3.0).abs() < 1e-12);
        }
        assert_eq!(rep.min_ric, 0.0);
    }

    #[test]
    fn hypersurface_scalar_oracles() {
        let grid = vec![PI / 8.0, PI / 4.0, PI / 3.0];
        let p = WarpProfile::from_fns(grid, sin3, |_| [1.0, 0.0, 0.0]);
        let s = scal_warped_hypersurface(&p, 4).unwrap();
        assert!((s[1].1 - 12.0).abs() < 1e-12);
        let flat = WarpProfile::from_fns(uniform(0.0, 1.0, 5), |_| [1.0, 0.0, 0.0], |_| [1.0, 0.0, 0.0]);
        for (_, v) in scal_warped_hypersurface(&flat, 4).unwrap() {
            assert_eq!(v, 6.0);
        }
    }

    #[test]
    fn trace_matches_multiply_warped_scalar() {
        let f = [1.3, 0.4, -0.2];
        let h = [0.7, 0.9, -0.35];
        for n in 3..7 {
            let [a, b, c] = doubly_warped_ricci(n, f, h);
            let trace = a + b + (n as f64 - 1.0) * c;
            assert!((trace - ambient_scalar_doubly_warped(n, f, h)).abs() < 1e-12);
        }
    }

    #[test]
    fn collapsed_end_is_extrapolated_and_flagged() {
        // Round S^5 with the circle collapsing at t = pi/2.
        let grid = uniform(0.3, PI / 2.0, 400);
        let p = WarpProfile::from_fns(grid, sin3, |t| [t.cos().max(0.0), -t.sin(), -t.cos()]);
        let mut p = p;
        let last = p.len() - 1;
        p.h[last] = 0.0;
        let rep = ricci_doubly_warped(&p, 4).unwrap();
        let r = rep.records[last];
        assert!(r.extrapolated);
        assert!((r.ric_circle - 4.0).abs() < 1e-6);
        assert_eq!(rep.summary().flags.extrapolated_points.len(), 1);
    }

    #[test]
    fn errors_on_bad_profiles() {
        let p = WarpProfile::from_fns(vec![0.0, 1.0], sin3, sin3);
        assert_eq!(ricci_doubly_warped(&p, 4), Err(GeometryError::DegenerateGrid(2)));
        let mut p = WarpProfile::from_fns(uniform(0.1, 1.0, 5), sin3, |_| [1.0, 0.0, 0.0]);
        p.f[2] = -0.1;
        assert!(matches!(
            ricci_doubly_warped(&p, 4),
            Err(GeometryError::NonPositiveWarping { which: 'f', .. })
        ));
        let p = WarpProfile::from_fns(uniform(0.1, 1.0, 5), sin3, |_| [1.0, 0.0, 0.0]);
        assert_eq!(ricci_doubly_warped(&p, 2), Err(GeometryError::DimensionTooSmall(2)));
    }

    #[test]
    fn normal_slice_oracles() {
        let s3 = ModelFiber::round_sphere(3, 1.0);
        let r = ricci_normal_slice(&s3, &[0.0; 3]).unwrap();
        assert_eq!(r.ric_tt, 0.0);
        assert_eq!(r.ric_fiber, s3.ricci_diag);

        let s2s1 = ModelFiber::product(&[ModelFiber::round_sphere(2, 1.0), ModelFiber::flat(1)]);
        assert_eq!(s2s1.scal, 2.0);
        let c = 0.4;
        let g2: Vec<f64> = s2s1.metric_diag.iter().map(|g| -c * g).collect();
        let r = ricci_normal_slice(&s2s1, &g2).unwrap();
        assert!((r.ric_tt - 1.5 * c).abs() < 1e-15);
        assert!(matches!(
            ricci_normal_slice(&s2s1, &[0.0; 2]),
            Err(GeometryError::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn second_fundamental_form_oracles() {
        let times = uniform(-0.1, 0.1, 21);
        let g = SymForm::diag(&[1.0, 2.0, 0.5]);
        let hh = SymForm::diag(&[-0.1, 0.3, 0.2]);
        let constant: Vec<SymForm> = times.iter().map(|_| g.clone()).collect();
        assert_eq!(second_fundamental_form(&times, &constant, 0.0).unwrap().residual, 0.0);

        let quad: Vec<SymForm> = times.iter().map(|t| g.add(&hh.scaled(t * t))).collect();
        assert!(second_fundamental_form(&times, &quad, 0.0).unwrap().residual < 1e-15);

        let lin: Vec<SymForm> = times.iter().map(|t| g.scaled(1.0 + t)).collect();
        let ii = second_fundamental_form(&times, &lin, 0.0).unwrap();
        for k in 0..9 {
            assert!((ii.form.data[k] + 0.5 * g.data[k]).abs() < 1e-12);
        }
        assert_eq!(
            second_fundamental_form(&times[..2], &lin[..2], 0.0),
            Err(GeometryError::GridTooCoarse(0.0))
        );
        assert!(second_fundamental_form(&times, &lin, 0.1).is_err());
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let grid = uniform(0.0, 2.0, 7);
        let p = WarpProfile::from_fns(grid, |t| [t * t * t - t, 3.0 * t * t - 1.0, 6.0 * t], |_| [1.0, 0.0, 0.0]);
        for t in [0.1, 0.77, 1.5, 1.99] {
            assert!((p.eval_f(t) - (t * t * t - t)).abs() < 1e-12);
        }
    }
}
