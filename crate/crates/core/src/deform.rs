//! Totally geodesic slabs `dt² + g_N + t² h` with prescribed normal Ricci
//! curvature, and the checks that go with them.
//!
//! Fibers are products of Einstein factors in a fixed eigenbasis. The
//! deformation tensor is a constant multiple of the metric on each factor, so
//! `g_t` rescales factors homothetically and the intrinsic Ricci form of
//! `g_t` stays equal to that of `g_N`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, GeometryError, ModelFiber, SliceRicci};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeformError {
    #[error("fiber scalar curvature {0} is negative")]
    NegativeScalar(f64),
    #[error("eps = {0} must be positive")]
    NonPositiveEps(f64),
    #[error("no sampled slab width keeps the metric Ricci-positive")]
    NoPositiveWidth,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabMetric {
    pub fiber: ModelFiber,
    pub eps: f64,
    /// Diagonal of `h` in the fiber eigenbasis.
    pub h_tensor: Vec<f64>,
    /// Certified half-width; zero until [`certify_slab_width`] has run.
    pub delta: f64,
}

impl SlabMetric {
    /// Slab with `h = Ric - (scal + eps)/(n-1) g`.
    pub fn new(fiber: ModelFiber, eps: f64) -> Result<Self, DeformError> {
        let h_tensor = deformation_tensor(&fiber, eps)?;
        Ok(Self { fiber, eps, h_tensor, delta: 0.0 })
    }

    /// Slab with an arbitrary deformation tensor.
    pub fn with_tensor(fiber: ModelFiber, eps: f64, h_tensor: Vec<f64>) -> Result<Self, DeformError> {
        if h_tensor.len() != fiber.dim {
            return Err(GeometryError::DimensionMismatch { expected: fiber.dim, got: h_tensor.len() }.into());
        }
        Ok(Self { fiber, eps, h_tensor, delta: 0.0 })
    }

    /// `tr_g h`, which equals `-eps` for slabs built by [`deformation_tensor`].
    pub fn trace(&self) -> f64 {
        self.h_tensor.iter().zip(&self.fiber.metric_diag).map(|(h, g)| h / g).sum()
    }

    /// Diagonal of `g_t = g_N + t² h`.
    pub fn metric_at(&self, t: f64) -> Vec<f64> {
        self.fiber.metric_diag.iter().zip(&self.h_tensor).map(|(g, h)| g + t * t * h).collect()
    }
}

/// `h = Ric^{g_N} - ((scal + eps)/(n-1)) g_N` in the fiber eigenbasis.
pub fn deformation_tensor(fiber: &ModelFiber, eps: f64) -> Result<Vec<f64>, DeformError> {
    if fiber.scal < 0.0 {
        return Err(DeformError::NegativeScalar(fiber.scal));
    }
    if eps <= 0.0 || !eps.is_finite() {
        return Err(DeformError::NonPositiveEps(eps));
    }
    let c = (fiber.scal + eps) / fiber.dim as f64;
    Ok(fiber.ricci_diag.iter().zip(&fiber.metric_diag).map(|(r, g)| r - c * g).collect())
}

/// Ricci data at `t = 0`, evaluated through the general slice formula with
/// `g_0'' = 2h`.
pub fn slab_ricci(slab: &SlabMetric) -> Result<SliceRicci, DeformError> {
    let g2: Vec<f64> = slab.h_tensor.iter().map(|h| 2.0 * h).collect();
    Ok(geometry::ricci_normal_slice(&slab.fiber, &g2)?)
}

/// Ricci data of `dt² + g_t` at `t` for the diagonal family
/// `a_i(t) = g_i + t² h_i`:
///
/// `Ric(∂t,∂t) = -1/2 Σ a_i''/a_i + 1/4 Σ (a_i'/a_i)²`
/// `Ric(e_i,e_i) = Ric_i - 1/2 a_i'' + 1/2 a_i'²/a_i - 1/4 (Σ_j a_j'/a_j) a_i'`
///
/// Fiber entries are bilinear values `Ric(e_i, e_i)`.
pub fn slab_ricci_at(slab: &SlabMetric, t: f64) -> SliceRicci {
    let a = slab.metric_at(t);
    let a1: Vec<f64> = slab.h_tensor.iter().map(|h| 2.0 * t * h).collect();
    let a2: Vec<f64> = slab.h_tensor.iter().map(|h| 2.0 * h).collect();
    diagonal_family_ricci(&slab.fiber.ricci_diag, &a, &a1, &a2)
}

/// Ricci of `dt² + diag(a_i(t))` from the jets `(a, a', a'')` when the
/// intrinsic Ricci form of the fiber is `ric` at every `t`.
pub fn diagonal_family_ricci(ric: &[f64], a: &[f64], a1: &[f64], a2: &[f64]) -> SliceRicci {
    let log_trace: f64 = a1.iter().zip(a).map(|(d, v)| d / v).sum();
    let ric_tt = a.iter().zip(a1).zip(a2).map(|((v, d1), d2)| -0.5 * d2 / v + 0.25 * (d1 / v).powi(2)).sum();
    let ric_fiber = (0..a.len())
        .map(|i| ric[i] - 0.5 * a2[i] + 0.5 * a1[i] * a1[i] / a[i] - 0.25 * log_trace * a1[i])
        .collect();
    SliceRicci { ric_tt, ric_fiber }
}

fn slab_positive_at(slab: &SlabMetric, t: f64) -> bool {
    if slab.metric_at(t).iter().any(|&a| a <= 0.0) {
        return false;
    }
    let r = slab_ricci_at(slab, t);
    r.ric_tt > 0.0 && r.ric_fiber.iter().all(|&v| v > 0.0)
}

/// Largest width `delta_0 / 2^j` such that `g_t` is positive definite and
/// Ricci-positive at `samples` points per side of `(-delta, delta)`.
///
/// `delta_0` is the radius where the first shrinking direction of `g_t` would
/// degenerate (or 4 when no direction shrinks).
pub fn certify_slab_width(slab: &SlabMetric, samples: usize) -> Result<f64, DeformError> {
    let samples = samples.max(2);
    let degenerate = slab
        .fiber
        .metric_diag
        .iter()
        .zip(&slab.h_tensor)
        .filter(|(_, &h)| h < 0.0)
        .map(|(g, h)| (g / -h).sqrt())
        .fold(f64::INFINITY, f64::min);
    let mut delta = degenerate.min(4.0);
    for _ in 0..60 {
        let ok = (-(samples as i64) + 1..samples as i64)
            .map(|j| delta * j as f64 / samples as f64)
            .all(|t| slab_positive_at(slab, t));
        if ok {
            return Ok(delta);
        }
        delta *= 0.5;
    }
    Err(DeformError::NoPositiveWidth)
}

/// Runs [`certify_slab_width`] and stores the result in the slab.
pub fn certify(mut slab: SlabMetric, samples: usize) -> Result<SlabMetric, DeformError> {
    slab.delta = certify_slab_width(&slab, samples)?;
    Ok(slab)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NecessityOutcome {
    /// The data describes a slab with `Ric(∂t,∂t) = eps` and positive fiber Ricci.
    pub witness: bool,
    /// `eps > -scal`.
    pub inequality: bool,
}

/// Evaluates `eps = -1/2 tr g'' = Σ (Ric(e_i,e_i) - Ric^{g_0}(e_i,e_i)) > -scal`
/// on the supplied second jet.
pub fn necessity_outcome(fiber: &ModelFiber, eps: f64, g2: &[f64]) -> Result<NecessityOutcome, DeformError> {
    let slice = geometry::ricci_normal_slice(fiber, g2)?;
    let gain: f64 = slice
        .ric_fiber
        .iter()
        .zip(&fiber.ricci_diag)
        .zip(&fiber.metric_diag)
        .map(|((r, r0), g)| (r - r0) / g)
        .sum();
    let matches = (slice.ric_tt - eps).abs() <= 1e-12 * eps.abs().max(1.0);
    let positive = slice.ric_fiber.iter().all(|&v| v > 0.0);
    Ok(NecessityOutcome { witness: matches && positive, inequality: gain > -fiber.scal })
}

/// True when the jet is a Ricci-positive slab with normal curvature `eps`
/// and the necessary inequality `eps > -scal` holds for it.
pub fn necessity_check(fiber: &ModelFiber, eps: f64, g2: &[f64]) -> Result<bool, DeformError> {
    let o = necessity_outcome(fiber, eps, g2)?;
    Ok(o.witness && o.inequality)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NecessitySearch {
    pub trials: usize,
    pub witnesses: usize,
    /// Witnesses violating `eps > -scal`; must be zero.
    pub refutations: usize,
    pub seed: u64,
}

/// Random second jets with `-1/2 tr g'' = eps`, counting positive witnesses and
/// refutations of the necessary inequality.
///
/// Even trials perturb the jet `2(Ric - c g)`, `c = (scal + eps)/dim`, by a
/// relative amount; odd trials are drawn from a wide box.
pub fn necessity_search(fiber: &ModelFiber, eps: f64, trials: usize, seed: u64) -> Result<NecessitySearch, DeformError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wide = 4.0 * (1.0 + eps.abs() + fiber.ricci_diag.iter().fold(0.0f64, |m, r| m.max(r.abs())));
    let c = (fiber.scal + eps) / fiber.dim as f64;
    let center: Vec<f64> = fiber.ricci_diag.iter().zip(&fiber.metric_diag).map(|(r, g)| 2.0 * (r - c * g)).collect();
    let mut witnesses = 0;
    let mut refutations = 0;
    for trial in 0..trials {
        let mut g2: Vec<f64> = if trial % 2 == 0 {
            center
                .iter()
                .zip(&fiber.metric_diag)
                .map(|(a, g)| a + rng.gen_range(-1.0..1.0) * 2.0 * c.abs() * g)
                .collect()
        } else {
            (0..fiber.dim).map(|_| rng.gen_range(-wide..wide)).collect()
        };
        // Shift along g so that -1/2 tr g2 = eps.
        let tr: f64 = g2.iter().zip(&fiber.metric_diag).map(|(a, g)| a / g).sum();
        let shift = (-2.0 * eps - tr) / fiber.dim as f64;
        for (a, g) in g2.iter_mut().zip(&fiber.metric_diag) {
            *a += shift * g;
        }
        let o = necessity_outcome(fiber, eps, &g2)?;
        if o.witness {
            witnesses += 1;
            if !o.inequality {
                refutations += 1;
            }
        }
    }
    Ok(NecessitySearch { trials, witnesses, refutations, seed })
}

/// One point on the linear path between two second jets at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub tau: f64,
    pub ric_tt: f64,
    /// Smallest normalized fiber Ricci value `Ric(e_i,e_i)/g(e_i,e_i)`.
    pub ric_fiber_min: f64,
}

/// Interpolates the second jet from `g2_from` (an existing Ricci-positive
/// metric with the same totally geodesic slice) to the slab jet `2h`, with
/// `steps + 1` evaluations. First jets vanish along the whole path.
pub fn deformation_path(slab: &SlabMetric, g2_from: &[f64], steps: usize) -> Result<Vec<PathPoint>, DeformError> {
    let steps = steps.max(1);
    (0..=steps)
        .map(|j| {
            let tau = j as f64 / steps as f64;
            let g2: Vec<f64> =
                g2_from.iter().zip(&slab.h_tensor).map(|(a, h)| (1.0 - tau) * a + tau * 2.0 * h).collect();
            let r = geometry::ricci_normal_slice(&slab.fiber, &g2)?;
            let ric_fiber_min =
                r.ric_fiber.iter().zip(&slab.fiber.metric_diag).map(|(v, g)| v / g).fold(f64::INFINITY, f64::min);
            Ok(PathPoint { tau, ric_tt: r.ric_tt, ric_fiber_min })
        })
        .collect()
}

/// Serialized slab certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabReport {
    pub eps: f64,
    pub delta: f64,
    pub fiber_id: String,
    pub ric_tt: f64,
    pub ric_fiber_min: f64,
}

impl SlabReport {
    pub fn from_slab(slab: &SlabMetric) -> Result<Self, DeformError> {
        let r = slab_ricci(slab)?;
        let ric_fiber_min =
            r.ric_fiber.iter().zip(&slab.fiber.metric_diag).map(|(v, g)| v / g).fold(f64::INFINITY, f64::min);
        Ok(Self { eps: slab.eps, delta: slab.delta, fiber_id: slab.fiber.id.clone(), ric_tt: r.ric_tt, ric_fiber_min })
    }
}
