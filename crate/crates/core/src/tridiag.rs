//! Symmetric tridiagonal eigenvalues by Sturm-sequence bisection, and
//! eigenvectors by inverse iteration.

#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    /// Sub-diagonal, length `diag.len() - 1`.
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len().max(1), "off-diagonal length");
        Self { diag, off }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Gershgorin interval containing the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 } + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        let tiny = f64::MIN_POSITIVE.sqrt();
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..self.len() {
            let e2 = if i > 0 { self.off[i - 1] * self.off[i - 1] } else { 0.0 };
            q = self.diag[i] - x - if i > 0 { e2 / q } else { 0.0 };
            if q.abs() < tiny {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `k`-th smallest eigenvalue (0-based).
    pub fn eigenvalue(&self, k: usize) -> f64 {
        assert!(k < self.len(), "eigenvalue index out of range");
        let (mut lo, mut hi) = self.gershgorin();
        let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            let tol = 2.0 * f64::EPSILON * lo.abs().max(hi.abs()) + 1e-3 * f64::EPSILON * scale;
            if mid <= lo || mid >= hi || hi - lo <= tol {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// The `count` smallest eigenvalues in ascending order.
    pub fn lowest(&self, count: usize) -> Vec<f64> {
        (0..count.min(self.len())).map(|k| self.eigenvalue(k)).collect()
    }

    /// Unit eigenvector for an eigenvalue estimate, by inverse iteration.
    pub fn eigenvector(&self, lambda: f64) -> Vec<f64> {
        let n = self.len();
        let (lo, hi) = self.gershgorin();
        let shift = lambda + 1e-10 * lo.abs().max(hi.abs()).max(1.0);
        let mut x = vec![1.0 / (n as f64).sqrt(); n];
        for (i, v) in x.iter_mut().enumerate() {
            // Break symmetry with any accidental orthogonality.
            *v += 1e-3 * ((i * 7919) % 13) as f64 / 13.0;
        }
        for _ in 0..4 {
            x = self.solve_shifted(shift, &x);
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in &mut x {
                *v /= norm;
            }
        }
        x
    }

    /// Solves `(T - s I) y = b` by Gaussian elimination with partial pivoting.
    fn solve_shifted(&self, s: f64, b: &[f64]) -> Vec<f64> {
        let n = self.len();
        if n == 1 {
            let d = self.diag[0] - s;
            return vec![b[0] / if d == 0.0 { f64::EPSILON } else { d }];
        }
        let mut dl: Vec<f64> = self.off.clone();
        let mut d: Vec<f64> = self.diag.iter().map(|v| v - s).collect();
        let mut du: Vec<f64> = self.off.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut y = b.to_vec();
        for i in 0..n - 1 {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = f64::EPSILON;
                }
                let m = dl[i] / d[i];
                d[i + 1] -= m * du[i];
                y[i + 1] -= m * y[i];
                dl[i] = 0.0;
            } else {
                let m = d[i] / dl[i];
                d[i] = dl[i];
                let tmp = d[i + 1];
                d[i + 1] = du[i] - m * tmp;
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -m;
                }
                du[i] = tmp;
                y.swap(i, i + 1);
                y[i + 1] -= m * y[i];
            }
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = f64::EPSILON;
        }
        y[n - 1] /= d[n - 1];
        y[n - 2] = (y[n - 2] - du[n - 2] * y[n - 1]) / d[n - 2];
        for i in (0..n.saturating_sub(2)).rev() {
            y[i] = (y[i] - du[i] * y[i + 1] - du2[i] * y[i + 2]) / d[i];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn laplacian(n: usize) -> SymTridiagonal {
        SymTridiagonal::new(vec![2.0; n], vec![-1.0; n - 1])
    }

    #[test]
    fn dirichlet_laplacian_closed_form() {
        let n = 50;
        let t = laplacian(n);
        for (k, lam) in t.lowest(10).iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((lam - exact).abs() < 1e-13, "{k}: {lam} vs {exact}");
        }
    }

    #[test]
    fn inverse_iteration_recovers_sine_mode() {
        let n = 40;
        let t = laplacian(n);
        let lam = t.eigenvalue(0);
        let v = t.eigenvector(lam);
        let s: Vec<f64> = (1..=n).map(|i| (i as f64 * std::f64::consts::PI / (n + 1) as f64).sin()).collect();
        let norm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
        let dot: f64 = v.iter().zip(&s).map(|(a, b)| a * b / norm).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-10);
    }

    fn dense_eigs(t: &SymTridiagonal) -> Vec<f64> {
        // Jacobi rotations on the dense matrix.
        let n = t.len();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = t.diag[i];
            if i + 1 < n {
                a[i][i + 1] = t.off[i];
                a[i + 1][i] = t.off[i];
            }
        }
        for _ in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    off += a[p][q] * a[p][q];
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let tt = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let tt = if theta == 0.0 { 1.0 } else { tt };
                    let c = 1.0 / (tt * tt + 1.0).sqrt();
                    let s = tt * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
            if off < 1e-28 {
                break;
            }
        }
        let mut e: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
        e.sort_by(f64::total_cmp);
        e
    }

    proptest! {
        #[test]
        fn bisection_agrees_with_jacobi(
            diag in proptest::collection::vec(-5.0f64..5.0, 2..12),
            seed in proptest::collection::vec(-2.0f64..2.0, 11),
        ) {
            let n = diag.len();
            let t = SymTridiagonal::new(diag, seed[..n - 1].to_vec());
            let want = dense_eigs(&t);
            let got = t.lowest(n);
            for (a, b) in got.iter().zip(&want) {
                prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }
}
