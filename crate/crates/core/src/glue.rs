//! Gluing the convex IVP profile to a round cap.
//!
//! Near a matching time `t1` the second derivative of `f` is blended from the
//! IVP value to that of a cap `N sin((t - t')/N)`, and `h'` is switched off
//! with the complementary smoothstep. Rescaling by `1/N` and shifting by
//! `t'/N` then turns the cap into `sin` with the right end at `r2`, while `h`
//! becomes a constant plateau.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, GeometryError, RightEnd, WarpProfile};
use crate::ode::{self, OdeError, Tolerance};
use crate::warp::{self, ConstructionParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GlueError {
    #[error("slope never reaches {required} on the horizon (sup f' = {achieved})")]
    HorizonTooShort { achieved: f64, required: f64 },
    #[error("slope f'(t1) = {0} is outside (0, 1)")]
    SlopeOutOfRange(f64),
    #[error("blend window {window} does not fit around t1 = {t1} inside the grid")]
    WindowOutOfRange { t1: f64, window: f64 },
    #[error("Ricci positivity lost after {attempts} attempts (min Ric {min_ric} at t = {at})")]
    PositivityLost { attempts: usize, min_ric: f64, at: f64 },
    #[error("cap starts at {cap_start} after rescaling, leaving less than {margin} before r2 = {r2}")]
    CapTooShort { cap_start: f64, r2: f64, margin: f64 },
    #[error("cap fit did not converge at the right seam (mismatch {0})")]
    CapFitStalled(f64),
    #[error("flat_order must be at least 4, got {0}")]
    FlatOrderTooLow(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// Matching data for the cap. `cap_scale` and `cap_shift` are the constants of
/// the cap profile `cap_scale * sin((t - cap_shift) / cap_scale)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlueSpec {
    pub t1: f64,
    pub window: f64,
    pub flat_order: usize,
    pub cap_scale: f64,
    pub cap_shift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlueOptions {
    /// Half-width of the blending window around `t1`.
    pub window: f64,
    pub flat_order: usize,
    /// Slope slack: `t1` is the first grid time with `f' >= cos r2 + delta`.
    pub delta: f64,
    /// Minimum length of cap that must remain before `r2` after rescaling.
    pub cap_margin: f64,
    /// Number of window halvings attempted when positivity fails.
    pub max_retries: usize,
    /// Allowed negative excursion of the circle Ricci component on the
    /// product region, where it vanishes identically.
    pub product_tol: f64,
}

impl Default for GlueOptions {
    fn default() -> Self {
        Self { window: 0.1, flat_order: 4, delta: 0.01, cap_margin: 0.005, max_retries: 6, product_tol: 1e-8 }
    }
}

/// Polynomial smoothstep `s` of degree `2K+1` on `[0, 1]` whose derivatives of
/// order `1..=K` vanish at both ends.
#[derive(Debug, Clone)]
pub struct Smoothstep {
    order: usize,
    // Monomial coefficients; entries `0..=order` are exactly zero.
    coeffs: Vec<f64>,
}

impl Smoothstep {
    pub fn new(order: usize) -> Self {
        let k = order;
        let mut coeffs = vec![0.0; 2 * k + 2];
        // s(x) = x^(K+1) * sum_j C(K+j, j) (1-x)^j
        for j in 0..=k {
            let cj = binomial(k + j, j);
            for l in 0..=j {
                let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
                coeffs[k + 1 + l] += cj * binomial(j, l) * sign;
            }
        }
        Self { order, coeffs }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn raw(&self, x: f64, d: usize) -> f64 {
        let mut acc = 0.0;
        for (m, &c) in self.coeffs.iter().enumerate().skip(d).rev() {
            let falling: f64 = (0..d).map(|i| (m - i) as f64).product();
            acc = acc * x + c * falling;
        }
        acc
    }

    /// `d`-th derivative of `s` at `x`, clamped outside `[0, 1]`.
    pub fn derivative(&self, x: f64, d: usize) -> f64 {
        if x <= 0.0 {
            return if d == 0 { 0.0 } else { self.raw(0.0, d) };
        }
        if x >= 1.0 {
            return if d == 0 { 1.0 } else { -sign(d) * self.raw(0.0, d) };
        }
        if x <= 0.5 {
            self.raw(x, d)
        } else if d == 0 {
            1.0 - self.raw(1.0 - x, 0)
        } else {
            -sign(d) * self.raw(1.0 - x, d)
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.derivative(x, 0)
    }

    /// `1 - s(x)`, computed without cancellation near `x = 1`.
    pub fn complement(&self, x: f64) -> f64 {
        self.value(1.0 - x)
    }
}

fn sign(d: usize) -> f64 {
    if d.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Smallest grid time with `f' >= cos r2 + delta`.
pub fn find_matching_time(profile: &WarpProfile, p: &ConstructionParams, delta: f64) -> Result<f64, GlueError> {
    let required = p.r2.cos() + delta;
    match profile.f1.iter().position(|&d| d >= required) {
        Some(i) => Ok(profile.grid[i]),
        None => Err(GlueError::HorizonTooShort {
            achieved: profile.f1.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            required,
        }),
    }
}

/// Cap `N sin((t - t')/N)` matching value `f` and slope `df` at `t`.
pub fn cap_through(t: f64, f: f64, df: f64) -> Result<(f64, f64), GlueError> {
    if !(df > 0.0 && df < 1.0) {
        return Err(GlueError::SlopeOutOfRange(df));
    }
    let sin_u = (1.0 - df * df).sqrt();
    let scale = f / sin_u;
    let shift = t - scale * sin_u.asin();
    Ok((scale, shift))
}

/// Fits the cap to the profile's value and slope at `t1`; returns
/// `(cap_scale, cap_shift)`.
pub fn fit_cap(profile: &WarpProfile, t1: f64) -> Result<(f64, f64), GlueError> {
    let i = grid_index(profile, t1).ok_or(GlueError::WindowOutOfRange { t1, window: 0.0 })?;
    cap_through(t1, profile.f[i], profile.f1[i])
}

/// `(f, f', f'')` of the cap at `t`.
pub fn cap_jet(scale: f64, shift: f64, t: f64) -> [f64; 3] {
    let u = (t - shift) / scale;
    [scale * u.sin(), u.cos(), -u.sin() / scale]
}

fn grid_index(profile: &WarpProfile, t: f64) -> Option<usize> {
    let i = profile.grid.partition_point(|&g| g < t);
    [i.checked_sub(1), Some(i), Some(i + 1)]
        .into_iter()
        .flatten()
        .filter(|&j| j < profile.len())
        .min_by(|&a, &b| (profile.grid[a] - t).abs().total_cmp(&(profile.grid[b] - t).abs()))
        .filter(|&j| (profile.grid[j] - t).abs() <= 1e-9 * t.abs().max(1.0))
}

/// Result of blending: the glued profile on the source grid plus the data
/// needed to rescale and audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blend {
    pub profile: WarpProfile,
    /// Cap constants refitted at the right seam.
    pub params: GlueSpec,
    /// Window actually used, `[seam_left, seam_right]`, both grid times.
    pub seam_left: f64,
    pub seam_right: f64,
    /// Constant value of `h` on the cap region.
    pub h_plateau: f64,
    /// `h^(j)` at the right seam for `j = 1..=flat_order`.
    pub h_seam_jet: Vec<f64>,
    /// `(|f - cap|, |f' - cap'|)` at the right seam.
    pub seam_mismatch: [f64; 2],
    /// Minimum Ricci component on `[t0, seam_right)`, where every component
    /// must be strictly positive.
    pub min_ric_modified: f64,
    /// Minimum of the circle component on the product region `[seam_right, end]`.
    pub min_ric_circle_product: f64,
    /// Minimum of the other two components on the product region.
    pub min_ric_other_product: f64,
    pub attempts: usize,
}

/// Blends the profile into the cap around `t1`, halving the window while
/// Ricci positivity fails.
pub fn blend_profiles(
    profile: &WarpProfile,
    p: &ConstructionParams,
    t1: f64,
    opts: &GlueOptions,
) -> Result<Blend, GlueError> {
    if opts.flat_order < 4 {
        return Err(GlueError::FlatOrderTooLow(opts.flat_order));
    }
    if !profile.has_h() {
        return Err(GeometryError::MissingH.into());
    }
    let mut window = opts.window;
    let mut last = (f64::NAN, f64::NAN);
    for attempt in 1..=opts.max_retries + 1 {
        let blend = blend_once(profile, p, t1, window, opts, attempt)?;
        let product_ok = blend.min_ric_circle_product >= -opts.product_tol && blend.min_ric_other_product > 0.0;
        if blend.min_ric_modified > 0.0 && product_ok {
            return Ok(blend);
        }
        last = (blend.min_ric_modified.min(blend.min_ric_other_product), blend.seam_right);
        window *= 0.5;
    }
    Err(GlueError::PositivityLost { attempts: opts.max_retries + 1, min_ric: last.0, at: last.1 })
}

fn blend_once(
    profile: &WarpProfile,
    p: &ConstructionParams,
    t1: f64,
    window: f64,
    opts: &GlueOptions,
    attempt: usize,
) -> Result<Blend, GlueError> {
    let i1 = grid_index(profile, t1).ok_or(GlueError::WindowOutOfRange { t1, window })?;
    let dt = profile.grid[1] - profile.grid[0];
    let half = (window / dt).round() as usize;
    if half < 2 || window >= t1 || i1 < half || i1 + half >= profile.len() {
        return Err(GlueError::WindowOutOfRange { t1, window });
    }
    let (ia, ib) = (i1 - half, i1 + half);
    let (a, b) = (profile.grid[ia], profile.grid[ib]);
    let width = b - a;
    let step = Smoothstep::new(opts.flat_order + 1);
    let c = p.ode_coefficient();
    let k = p.h_factor();
    let (alpha, lambda0) = (p.alpha, p.lambda0);
    let out_times: Vec<f64> = profile.grid[ia..=ib].to_vec();
    let y0 = [profile.f[ia], profile.f1[ia], profile.f[ia], profile.f1[ia], profile.h[ia]];

    let (mut scale, mut shift) = cap_through(t1, profile.f[i1], profile.f1[i1])?;
    let mut states = Vec::new();
    let mut mismatch = f64::INFINITY;
    for _ in 0..60 {
        let rhs = |t: f64, y: &[f64; 5]| {
            let x = (t - a) / width;
            let s = step.value(x);
            let sc = step.complement(x);
            let f2_src = c * y[0].powf(-alpha - 1.0);
            let f2_cap = cap_jet(scale, shift, t)[2];
            [y[1], f2_src, y[3], sc * f2_src + s * f2_cap, sc * k * f2_src]
        };
        states = ode::integrate(rhs, a, y0, &out_times, Tolerance::uniform(p.tol * 1e-2))?;
        let yb = states[states.len() - 1];
        let (ns, nsh) = cap_through(b, yb[2], yb[3])?;
        mismatch = (ns - scale).abs() / scale + (nsh - shift).abs();
        scale = ns;
        shift = nsh;
        if mismatch < 1e-14 {
            break;
        }
    }
    if mismatch > 1e-10 {
        return Err(GlueError::CapFitStalled(mismatch));
    }

    let mut out = profile.clone();
    for (j, y) in states.iter().enumerate() {
        let i = ia + j;
        let t = profile.grid[i];
        let x = (t - a) / width;
        let s = step.value(x);
        let sc = step.complement(x);
        let ds = step.derivative(x, 1) / width;
        let f2_src = c * y[0].powf(-alpha - 1.0);
        let h1_src = k * f2_src;
        let h2_src = k * warp::third_derivative(y[0], y[1], alpha, lambda0);
        out.f[i] = y[2];
        out.f1[i] = y[3];
        out.f2[i] = sc * f2_src + s * cap_jet(scale, shift, t)[2];
        out.h[i] = y[4];
        out.h1[i] = sc * h1_src;
        out.h2[i] = sc * h2_src - ds * h1_src;
    }
    let yb = states[states.len() - 1];
    let h_plateau = yb[4];
    let cap_b = cap_jet(scale, shift, b);
    let seam_mismatch = [(yb[2] - cap_b[0]).abs(), (yb[3] - cap_b[1]).abs()];

    // Cap region, cut before the cap turns over.
    let mut end = profile.len();
    for i in ib + 1..profile.len() {
        let t = profile.grid[i];
        if (t - shift) / scale >= 0.99 * std::f64::consts::PI {
            end = i;
            break;
        }
        let [f, f1, f2] = cap_jet(scale, shift, t);
        out.f[i] = f;
        out.f1[i] = f1;
        out.f2[i] = f2;
        out.h[i] = h_plateau;
        out.h1[i] = 0.0;
        out.h2[i] = 0.0;
    }
    for v in [&mut out.grid, &mut out.f, &mut out.f1, &mut out.f2, &mut out.h, &mut out.h1, &mut out.h2] {
        v.truncate(end);
    }
    out.right_end = RightEnd::Free;

    // h^(j)(b) = sum_i C(j-1, i) (1-s)^(i)(b) (h'_src)^(j-1-i)(b)
    let (_, u) = warp::taylor_coefficients(yb[0], yb[1], alpha, lambda0, opts.flat_order);
    let h1_src_derivs: Vec<f64> = (0..opts.flat_order)
        .map(|m| k * c * u[m] * (1..=m).map(|q| q as f64).product::<f64>())
        .collect();
    let h_seam_jet = (1..=opts.flat_order)
        .map(|j| {
            (0..j)
                .map(|i| {
                    let comp = if i == 0 { step.complement(1.0) } else { -step.derivative(1.0, i) / width.powi(i as i32) };
                    binomial(j - 1, i) * comp * h1_src_derivs[j - 1 - i]
                })
                .sum()
        })
        .collect();

    let report = geometry::ricci_doubly_warped(&out, p.n)?;
    let mut min_ric_modified = f64::INFINITY;
    let mut min_circle = f64::INFINITY;
    let mut min_other = f64::INFINITY;
    for r in &report.records {
        if r.t < b {
            min_ric_modified = min_ric_modified.min(r.min_ric());
        } else {
            min_circle = min_circle.min(r.ric_circle);
            min_other = min_other.min(r.ric_tt.min(r.ric_sphere));
        }
    }

    Ok(Blend {
        profile: out,
        params: GlueSpec { t1, window: width / 2.0, flat_order: opts.flat_order, cap_scale: scale, cap_shift: shift },
        seam_left: a,
        seam_right: b,
        h_plateau,
        h_seam_jet,
        seam_mismatch,
        min_ric_modified,
        min_ric_circle_product: min_circle,
        min_ric_other_product: min_other,
        attempts: attempt,
    })
}

/// Profile after `t -> (t - cap_shift)/cap_scale`, `f -> f/cap_scale`,
/// `h -> h/cap_scale`, ending at `r2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rescaled {
    pub profile: WarpProfile,
    /// Circle radius on the plateau, `h(seam)/cap_scale`.
    pub r1_realized: f64,
    /// Left end after the shift.
    pub t0: f64,
    /// Start of the cap region in the new coordinate.
    pub cap_start: f64,
    /// `r2 - cap_start`.
    pub cap_coverage: f64,
}

/// Rescales and shifts so that the cap becomes `sin` and the right end is
/// `r2`. `seam` is the time (in the old coordinate) where the cap region
/// begins. Grid points past the end of the source are filled from the cap.
pub fn rescale_and_shift(
    profile: &WarpProfile,
    cap_scale: f64,
    cap_shift: f64,
    seam: f64,
    p: &ConstructionParams,
    cap_margin: f64,
) -> Result<Rescaled, GlueError> {
    if !profile.has_h() {
        return Err(GeometryError::MissingH.into());
    }
    let n = cap_scale;
    let to_u = |t: f64| (t - cap_shift) / n;
    let cap_start = to_u(seam);
    if cap_start > p.r2 - cap_margin {
        return Err(GlueError::CapTooShort { cap_start, r2: p.r2, margin: cap_margin });
    }
    let is = grid_index(profile, seam).unwrap_or_else(|| profile.grid.partition_point(|&g| g < seam));
    let r1_realized = profile.h[is.min(profile.len() - 1)] / n;
    let du = (profile.grid[1] - profile.grid[0]) / n;

    let mut out = WarpProfile::empty(profile.left_end, RightEnd::SphereMatch);
    let tail = 0.25 * du;
    let mut last_u = f64::NEG_INFINITY;
    for i in 0..profile.len() {
        let u = to_u(profile.grid[i]);
        if u > p.r2 - tail {
            break;
        }
        out.push(
            u,
            [profile.f[i] / n, profile.f1[i], profile.f2[i] * n],
            [profile.h[i] / n, profile.h1[i], profile.h2[i] * n],
        );
        last_u = u;
    }
    if out.grid.is_empty() {
        return Err(GlueError::CapTooShort { cap_start, r2: p.r2, margin: cap_margin });
    }
    // Past the last source sample the cap is continued analytically.
    let plateau = [out.h[out.h.len() - 1], 0.0, 0.0];
    let mut u = last_u + du;
    while u <= p.r2 - tail {
        out.push(u, [u.sin(), u.cos(), -u.sin()], plateau);
        u += du;
    }
    out.push(p.r2, [p.r2.sin(), p.r2.cos(), -p.r2.sin()], plateau);
    let t0 = out.grid[0];
    out.validate()?;
    Ok(Rescaled { profile: out, r1_realized, t0, cap_start, cap_coverage: p.r2 - cap_start })
}

/// Residuals of the boundary conditions after rescaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryResiduals {
    /// `|h(r2) - r1_realized|`
    pub h_at_r2: f64,
    /// Largest `|h^(j)|`, `j = 1..=flat_order`, on the cap region.
    pub h_flatness: f64,
    /// Largest deviation of `(f, f', f'')` from `(sin, cos, -sin)` on the cap region.
    pub cap_deviation: f64,
    /// `|f'(t0)|`
    pub f1_t0: f64,
    /// `|h(t0)|`
    pub h_t0: f64,
    /// `|h'(t0) - 1|`
    pub h1_t0: f64,
    /// `|h''(t0)|`
    pub h2_t0: f64,
}

impl BoundaryResiduals {
    pub fn max(&self) -> f64 {
        [self.h_at_r2, self.h_flatness, self.cap_deviation, self.f1_t0, self.h_t0, self.h1_t0, self.h2_t0]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Measures the smooth-closure conditions at the left end and the matching
/// conditions on the cap region `[cap_start, r2]`.
///
/// Derivatives of `h` beyond the second are taken as divided differences of
/// the sampled `h''`.
pub fn verify_boundary_conditions(
    profile: &WarpProfile,
    cap_start: f64,
    r1_realized: f64,
    flat_order: usize,
) -> BoundaryResiduals {
    let last = profile.len() - 1;
    let cap: Vec<usize> = (0..profile.len()).filter(|&i| profile.grid[i] >= cap_start).collect();
    let mut cap_dev = 0.0f64;
    let mut flat = 0.0f64;
    for &i in &cap {
        let u = profile.grid[i];
        cap_dev = cap_dev
            .max((profile.f[i] - u.sin()).abs())
            .max((profile.f1[i] - u.cos()).abs())
            .max((profile.f2[i] + u.sin()).abs());
        flat = flat.max(profile.h1[i].abs()).max(profile.h2[i].abs());
    }
    // Newton divided differences of h'' give h^(j) / (j-2)! estimates.
    let ts: Vec<f64> = cap.iter().map(|&i| profile.grid[i]).collect();
    let mut dd: Vec<f64> = cap.iter().map(|&i| profile.h2[i]).collect();
    for order in 1..=flat_order.saturating_sub(2) {
        if dd.len() <= 1 {
            break;
        }
        dd = (0..dd.len() - 1).map(|j| (dd[j + 1] - dd[j]) / (ts[j + order] - ts[j])).collect();
        let fact: f64 = (1..=order).map(|q| q as f64).product();
        flat = dd.iter().fold(flat, |m, v| m.max((v * fact).abs()));
    }
    if cap.is_empty() {
        cap_dev = f64::INFINITY;
        flat = f64::INFINITY;
    }
    BoundaryResiduals {
        h_at_r2: (profile.h[last] - r1_realized).abs(),
        h_flatness: flat,
        cap_deviation: cap_dev,
        f1_t0: profile.f1[0].abs(),
        h_t0: profile.h[0].abs(),
        h1_t0: (profile.h1[0] - 1.0).abs(),
        h2_t0: profile.h2[0].abs(),
    }
}

/// Everything the glue stage produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlueOutcome {
    pub t1: f64,
    /// Cap fitted at `t1` before blending.
    pub initial_cap: (f64, f64),
    pub blend: Blend,
    pub rescaled: Rescaled,
    pub residuals: BoundaryResiduals,
}

/// Runs matching, blending, rescaling and the boundary audit.
pub fn glue(profile: &WarpProfile, p: &ConstructionParams, opts: &GlueOptions) -> Result<GlueOutcome, GlueError> {
    let t1 = find_matching_time(profile, p, opts.delta)?;
    let initial_cap = fit_cap(profile, t1)?;
    let blend = blend_profiles(profile, p, t1, opts)?;
    let rescaled = rescale_and_shift(
        &blend.profile,
        blend.params.cap_scale,
        blend.params.cap_shift,
        blend.seam_right,
        p,
        opts.cap_margin,
    )?;
    let residuals =
        verify_boundary_conditions(&rescaled.profile, rescaled.cap_start, rescaled.r1_realized, opts.flat_order);
    Ok(GlueOutcome { t1, initial_cap, blend, rescaled, residuals })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothstep_flatness_and_symmetry() {
        for k in 1..8 {
            let s = Smoothstep::new(k);
            assert_eq!(s.value(0.0), 0.0);
            assert_eq!(s.value(1.0), 1.0);
            assert!((s.value(0.5) - 0.5).abs() < 1e-14);
            for d in 1..=k {
                assert_eq!(s.derivative(0.0, d), 0.0);
                assert_eq!(s.derivative(1.0, d), 0.0);
            }
            assert!(s.derivative(0.0, k + 1).abs() > 0.0);
            for x in [0.1, 0.37, 0.8] {
                assert!((s.value(x) + s.value(1.0 - x) - 1.0).abs() < 1e-14);
                assert!(s.derivative(x, 1) > 0.0);
                let h = 1e-6;
                let fd = (s.value(x + h) - s.value(x - h)) / (2.0 * h);
                assert!((fd - s.derivative(x, 1)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn cap_fit_oracles() {
        let t1: f64 = 0.7;
        let (scale, shift) = cap_through(t1, t1.sin(), t1.cos()).unwrap();
        assert!((scale - 1.0).abs() < 1e-14);
        assert!(shift.abs() < 1e-14);

        let (scale, shift) = cap_through(3.0, 2.0, 0.6).unwrap();
        assert!((scale - 2.5).abs() < 1e-14);
        let [f, f1, f2] = cap_jet(scale, shift, 3.0);
        assert!((f - 2.0).abs() < 1e-12);
        assert!((f1 - 0.6).abs() < 1e-12);
        assert!((f2 + 2.0 / 6.25).abs() < 1e-12);

        assert_eq!(cap_through(1.0, 1.0, 1.0), Err(GlueError::SlopeOutOfRange(1.0)));
        assert_eq!(cap_through(1.0, 1.0, -0.1), Err(GlueError::SlopeOutOfRange(-0.1)));
    }

    #[test]
    fn identity_rescale_keeps_profile() {
        let p = ConstructionParams::default();
        let grid: Vec<f64> = (0..=100).map(|i| 0.1 + (p.r2 - 0.1) * i as f64 / 100.0).collect();
        let prof = WarpProfile::from_fns(grid, |t| [t.sin(), t.cos(), -t.sin()], |_| [0.2, 0.0, 0.0]);
        let r = rescale_and_shift(&prof, 1.0, 0.0, 0.1, &p, 0.0).unwrap();
        assert_eq!(r.profile.len(), prof.len());
        for i in 0..prof.len() {
            assert!((r.profile.grid[i] - prof.grid[i]).abs() < 1e-15);
            assert!((r.profile.f[i] - prof.f[i]).abs() < 1e-15);
            assert_eq!(r.profile.h[i], prof.h[i]);
        }
        assert_eq!(r.r1_realized, 0.2);
        let res = verify_boundary_conditions(&r.profile, r.cap_start, r.r1_realized, 4);
        assert!(res.cap_deviation < 1e-15 && res.h_flatness == 0.0 && res.h_at_r2 == 0.0);
    }
}
