//! Laplace spectra of round spheres and of warped products
//! `dt² + f(t)² g_{S^m}` over an interval, and the Morse index of `Δ + ε`.
//!
//! The warped problem is separated into spherical degrees `k`; each radial
//! Sturm–Liouville problem is discretized with cell-centred finite volumes
//! and symmetrized by the measure weight `f^m`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::fmt17;
use crate::tridiag::SymTridiagonal;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("grid too coarse: {requested} modes per degree need at least {needed} cells, have {cells}")]
    GridTooCoarse { requested: usize, needed: usize, cells: usize },
    #[error("eigenvalue {lambda} within {tol:e} of eps = {eps}")]
    UnresolvedGap { eps: f64, lambda: f64, tol: f64 },
    #[error("lambda_1 lower bound {lambda1_lower} not separated from lambda_0 = {lambda0}")]
    NoGap { lambda0: f64, lambda1_lower: f64 },
    #[error("eps = {eps} outside the resolved range (complete below {complete_below})")]
    OutsideResolvedRange { eps: f64, complete_below: f64 },
    #[error("eps must be positive, got {0}")]
    NonPositiveEps(f64),
    #[error("warping function not positive at t = {t} (value {value})")]
    NonPositiveProfile { t: f64, value: f64 },
    #[error("empty or degenerate interval [{0}, {1}]")]
    BadInterval(f64, f64),
    #[error("fiber dimension must be at least 1")]
    BadFiberDim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Neumann,
    Dirichlet,
}

impl std::fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Neumann => "neumann",
            Self::Dirichlet => "dirichlet",
        })
    }
}

/// One eigenvalue of the separated problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub value: f64,
    pub radial: usize,
    pub degree: usize,
    pub multiplicity: usize,
    /// Richardson estimate of the discretization error; zero for closed forms.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    /// Sorted by (value, degree, radial index).
    pub modes: Vec<Mode>,
    pub bc: BoundaryCondition,
    pub fiber_dim: usize,
    /// Every eigenvalue strictly below this bound is listed in `modes`.
    pub complete_below: f64,
    pub grid: Option<usize>,
}

/// Dimension of degree-`k` spherical harmonics on `S^m`.
pub fn harmonic_multiplicity(m: usize, k: usize) -> usize {
    fn binom(n: usize, r: usize) -> usize {
        let mut acc: u128 = 1;
        for i in 0..r {
            acc = acc * (n - i) as u128 / (i + 1) as u128;
        }
        acc as usize
    }
    if k == 0 {
        return 1;
    }
    let a = binom(k + m, m);
    let b = if k >= 2 { binom(k + m - 2, m) } else { 0 };
    a - b
}

/// `k(k + m - 1)`, the degree-`k` eigenvalue of the unit `S^m`.
pub fn sphere_eigenvalue(m: usize, k: usize) -> f64 {
    (k * (k + m - 1)) as f64
}

fn sort_modes(modes: &mut [Mode]) {
    modes.sort_by(|a, b| {
        a.value
            .total_cmp(&b.value)
            .then(a.degree.cmp(&b.degree))
            .then(a.radial.cmp(&b.radial))
    });
}

/// Closed-form spectrum of the round unit `S^m` up to degree `k_max`.
pub fn sphere_spectrum(m: usize, k_max: usize) -> SpectrumResult {
    assert!(m >= 1, "sphere dimension must be at least 1");
    let modes = (0..=k_max)
        .map(|k| Mode {
            value: sphere_eigenvalue(m, k),
            radial: 0,
            degree: k,
            multiplicity: harmonic_multiplicity(m, k),
            error: 0.0,
        })
        .collect();
    SpectrumResult {
        modes,
        bc: BoundaryCondition::Neumann,
        fiber_dim: m,
        complete_below: sphere_eigenvalue(m, k_max + 1),
        grid: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralOptions {
    pub k_max: usize,
    pub modes_per_k: usize,
    /// Number of finite-volume cells on the fine grid.
    pub grid: usize,
    pub bc: BoundaryCondition,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self { k_max: 8, modes_per_k: 12, grid: 2001, bc: BoundaryCondition::Neumann }
    }
}

/// The discretized radial operator for one spherical degree.
#[derive(Debug, Clone)]
pub struct RadialOperator {
    pub centers: Vec<f64>,
    /// `f^m` at the cell centres.
    pub weight: Vec<f64>,
    pub matrix: SymTridiagonal,
}

impl RadialOperator {
    pub fn new<F: Fn(f64) -> f64>(
        f: &F,
        interval: (f64, f64),
        m: usize,
        k: usize,
        cells: usize,
        bc: BoundaryCondition,
    ) -> Result<Self, SpectralError> {
        let (a, b) = interval;
        if !(b > a) || cells < 2 {
            return Err(SpectralError::BadInterval(a, b));
        }
        if m == 0 {
            return Err(SpectralError::BadFiberDim);
        }
        let dt = (b - a) / cells as f64;
        let mu = sphere_eigenvalue(m, k);
        let centers: Vec<f64> = (0..cells).map(|i| a + (i as f64 + 0.5) * dt).collect();
        let mut fc = Vec::with_capacity(cells);
        for &t in &centers {
            let v = f(t);
            if !(v > 0.0) {
                return Err(SpectralError::NonPositiveProfile { t, value: v });
            }
            fc.push(v);
        }
        let weight: Vec<f64> = fc.iter().map(|v| v.powi(m as i32)).collect();
        let face_weight = |t: f64| f(t).max(0.0).powi(m as i32);
        let faces: Vec<f64> = (1..cells).map(|i| face_weight(a + i as f64 * dt)).collect();
        let dt2 = dt * dt;
        let mut diag = vec![0.0; cells];
        let mut off = vec![0.0; cells - 1];
        for i in 0..cells {
            let left = if i > 0 { faces[i - 1] } else { 0.0 };
            let right = if i + 1 < cells { faces[i] } else { 0.0 };
            diag[i] = (left + right) / (dt2 * weight[i]) + mu / (fc[i] * fc[i]);
        }
        if bc == BoundaryCondition::Dirichlet {
            diag[0] += 2.0 * face_weight(a) / (dt2 * weight[0]);
            diag[cells - 1] += 2.0 * face_weight(b) / (dt2 * weight[cells - 1]);
        }
        for i in 0..cells - 1 {
            off[i] = -faces[i] / (dt2 * (weight[i] * weight[i + 1]).sqrt());
        }
        Ok(Self { centers, weight, matrix: SymTridiagonal::new(diag, off) })
    }

    pub fn eigenvalues(&self, count: usize) -> Vec<f64> {
        self.matrix.lowest(count)
    }

    /// Eigenfunction values at the cell centres, normalized in `L²(f^m dt)`.
    pub fn eigenfunction(&self, lambda: f64) -> Vec<f64> {
        let psi = self.matrix.eigenvector(lambda);
        let dt = self.centers.get(1).map_or(1.0, |c| c - self.centers[0]);
        psi.iter().zip(&self.weight).map(|(p, w)| p / (w * dt).sqrt()).collect()
    }
}

fn needed_cells(modes_per_k: usize) -> usize {
    3 * modes_per_k
}

fn radial_modes<F: Fn(f64) -> f64>(
    f: &F,
    interval: (f64, f64),
    m: usize,
    k: usize,
    opts: &SpectralOptions,
) -> Result<(Vec<Mode>, f64), SpectralError> {
    let coarse = opts.grid / 2;
    let fine_op = RadialOperator::new(f, interval, m, k, opts.grid, opts.bc)?;
    let coarse_op = RadialOperator::new(f, interval, m, k, coarse, opts.bc)?;
    let fine = fine_op.eigenvalues(opts.modes_per_k);
    let rough = coarse_op.eigenvalues(opts.modes_per_k);
    let step_ratio = opts.grid as f64 / coarse as f64;
    let factor = step_ratio * step_ratio - 1.0;
    let mult = harmonic_multiplicity(m, k);
    let modes: Vec<Mode> = fine
        .iter()
        .zip(&rough)
        .enumerate()
        .map(|(r, (&v, &c))| Mode {
            value: v,
            radial: r,
            degree: k,
            multiplicity: mult,
            error: (v - c).abs() / factor,
        })
        .collect();
    let top = modes.last().map_or(f64::INFINITY, |md| md.value - md.error);
    Ok((modes, top))
}

/// Spectrum of `Δ` on `dt² + f(t)² g_{S^m}` over `interval`, degrees `0..=k_max`.
///
/// Endpoints where `f` vanishes are treated as regular poles (zero flux).
pub fn warped_interval_spectrum<F>(
    f: &F,
    interval: (f64, f64),
    m: usize,
    opts: &SpectralOptions,
) -> Result<SpectrumResult, SpectralError>
where
    F: Fn(f64) -> f64 + Sync,
{
    if m == 0 {
        return Err(SpectralError::BadFiberDim);
    }
    let needed = needed_cells(opts.modes_per_k);
    if opts.grid / 2 < needed {
        return Err(SpectralError::GridTooCoarse {
            requested: opts.modes_per_k,
            needed: 2 * needed,
            cells: opts.grid,
        });
    }
    let run = |k: usize| radial_modes(f, interval, m, k, opts);
    #[cfg(feature = "parallel")]
    let per_k: Vec<Result<(Vec<Mode>, f64), SpectralError>> = {
        use rayon::prelude::*;
        (0..=opts.k_max).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_k: Vec<Result<(Vec<Mode>, f64), SpectralError>> = (0..=opts.k_max).map(run).collect();

    let mut modes = Vec::new();
    let mut complete_below = f64::INFINITY;
    for r in per_k {
        let (ms, top) = r?;
        complete_below = complete_below.min(top);
        modes.extend(ms);
    }
    // Degrees above k_max start no lower than mu / max f².
    let (a, b) = interval;
    let samples = 4 * opts.grid;
    let fmax = (0..=samples)
        .map(|i| f(a + (b - a) * i as f64 / samples as f64))
        .fold(0.0f64, f64::max);
    complete_below = complete_below.min(sphere_eigenvalue(m, opts.k_max + 1) / (fmax * fmax));
    sort_modes(&mut modes);
    Ok(SpectrumResult { modes, bc: opts.bc, fiber_dim: m, complete_below, grid: Some(opts.grid) })
}

/// Separation tolerance used when comparing eps against an eigenvalue.
pub fn gap_tolerance(mode: &Mode) -> f64 {
    (1e-9 * mode.value.abs().max(1.0)).max(mode.error)
}

impl SpectrumResult {
    /// Eigenvalues repeated according to multiplicity.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.modes.iter().flat_map(|m| std::iter::repeat_n(m.value, m.multiplicity)).collect()
    }

    pub fn lambda0(&self) -> Option<&Mode> {
        self.modes.first()
    }

    pub fn lambda1(&self) -> Option<&Mode> {
        self.modes.get(1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("radial,degree,multiplicity,eigenvalue,error_estimate\n");
        for m in &self.modes {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                m.radial,
                m.degree,
                m.multiplicity,
                fmt17(m.value),
                fmt17(m.error)
            ));
        }
        s
    }
}

/// Number of eigenvalues of `Δ` below `eps`, counted with multiplicity,
/// which is the Morse index of `Δ + eps` on a totally geodesic slice with
/// normal Ricci curvature `eps`.
pub fn morse_index(spectrum: &SpectrumResult, eps: f64) -> Result<usize, SpectralError> {
    if !(eps > 0.0) {
        return Err(SpectralError::NonPositiveEps(eps));
    }
    if eps >= spectrum.complete_below {
        return Err(SpectralError::OutsideResolvedRange { eps, complete_below: spectrum.complete_below });
    }
    let mut count = 0;
    for m in &spectrum.modes {
        let tol = gap_tolerance(m);
        if (m.value - eps).abs() <= tol {
            return Err(SpectralError::UnresolvedGap { eps, lambda: m.value, tol });
        }
        if m.value < eps {
            count += m.multiplicity;
        }
    }
    Ok(count)
}

/// Open interval of eps for which the Morse index is one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsWindow {
    pub lower: f64,
    pub upper: f64,
    pub lambda1: f64,
    pub lambda1_error: f64,
}

impl EpsWindow {
    pub fn contains(&self, eps: f64) -> bool {
        eps > self.lower && eps < self.upper
    }
}

pub fn certify_index_one(spectrum: &SpectrumResult) -> Result<EpsWindow, SpectralError> {
    let l0 = spectrum.lambda0().ok_or(SpectralError::NoGap { lambda0: f64::NAN, lambda1_lower: f64::NAN })?;
    let l1 = spectrum.lambda1().ok_or(SpectralError::NoGap { lambda0: l0.value, lambda1_lower: f64::NAN })?;
    let tol0 = gap_tolerance(l0);
    let lower = if l0.value.abs() <= tol0 { 0.0 } else { l0.value + tol0 };
    let upper = (l1.value - gap_tolerance(l1)).min(spectrum.complete_below);
    if l0.multiplicity != 1 || !(upper > lower) {
        return Err(SpectralError::NoGap { lambda0: l0.value, lambda1_lower: upper });
    }
    Ok(EpsWindow { lower, upper, lambda1: l1.value, lambda1_error: l1.error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn harmonic_multiplicities() {
        assert_eq!((0..5).map(|k| harmonic_multiplicity(1, k)).collect::<Vec<_>>(), [1, 2, 2, 2, 2]);
        assert_eq!((0..5).map(|k| harmonic_multiplicity(2, k)).collect::<Vec<_>>(), [1, 3, 5, 7, 9]);
        assert_eq!((0..5).map(|k| harmonic_multiplicity(3, k)).collect::<Vec<_>>(), [1, 4, 9, 16, 25]);
    }

    #[test]
    fn sphere_spectra() {
        let s2: Vec<f64> = sphere_spectrum(2, 3).modes.iter().map(|m| m.value).collect();
        assert_eq!(s2, [0.0, 2.0, 6.0, 12.0]);
        let s3: Vec<f64> = sphere_spectrum(3, 3).modes.iter().map(|m| m.value).collect();
        assert_eq!(s3, [0.0, 3.0, 8.0, 15.0]);
        for m in 1..6 {
            assert_eq!(sphere_spectrum(m, 2).modes[1].value, m as f64);
        }
    }

    #[test]
    fn sphere_indices() {
        let s = sphere_spectrum(3, 8);
        assert_eq!(morse_index(&s, 0.5).unwrap(), 1);
        assert_eq!(morse_index(&s, 5.0).unwrap(), 5);
        assert!(matches!(morse_index(&s, 3.0), Err(SpectralError::UnresolvedGap { .. })));
        assert!(matches!(morse_index(&s, 1e3), Err(SpectralError::OutsideResolvedRange { .. })));
        let w = certify_index_one(&s).unwrap();
        assert_eq!(w.lower, 0.0);
        assert!((w.upper - 3.0).abs() < 1e-8);
    }

    #[test]
    fn product_cylinder_matches_closed_form() {
        let opts = SpectralOptions { k_max: 3, modes_per_k: 6, grid: 2000, bc: BoundaryCondition::Neumann };
        let s = warped_interval_spectrum(&|_| 1.0, (-PI, PI), 2, &opts).unwrap();
        for md in &s.modes {
            let exact = (md.radial as f64 / 2.0).powi(2) + (md.degree * (md.degree + 1)) as f64;
            assert!((md.value - exact).abs() < 1e-4 * exact.max(1.0), "{md:?}");
        }
        let w = certify_index_one(&s).unwrap();
        assert!((w.upper - 0.25).abs() < 1e-5, "{w:?}");
    }

    #[test]
    fn constant_ground_state() {
        let op = RadialOperator::new(&|t: f64| t.cos(), (-PI / 2.0, PI / 2.0), 2, 0, 4001, BoundaryCondition::Neumann)
            .unwrap();
        let lam = op.eigenvalues(1)[0];
        assert!(lam.abs() < 1e-8, "{lam}");
        let phi = op.eigenfunction(lam);
        let mean = phi.iter().sum::<f64>() / phi.len() as f64;
        let dev = phi.iter().map(|p| (p - mean).abs()).fold(0.0, f64::max) / mean.abs();
        assert!(dev < 1e-6, "{dev}");
    }

    #[test]
    fn dirichlet_cylinder() {
        let opts = SpectralOptions { k_max: 1, modes_per_k: 4, grid: 1000, bc: BoundaryCondition::Dirichlet };
        let s = warped_interval_spectrum(&|_| 1.0, (0.0, PI), 1, &opts).unwrap();
        assert!((s.modes[0].value - 1.0).abs() < 1e-5);
        assert!(s.modes[0].error > 0.0);
    }

    #[test]
    fn too_coarse_is_rejected() {
        let opts = SpectralOptions { k_max: 1, modes_per_k: 12, grid: 40, bc: BoundaryCondition::Neumann };
        assert!(matches!(
            warped_interval_spectrum(&|_| 1.0, (0.0, 1.0), 2, &opts),
            Err(SpectralError::GridTooCoarse { .. })
        ));
    }
}
