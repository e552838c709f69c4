//! Slow reference computations with no structure exploitation.
//!
//! Everything here is written straight from the defining formulas (explicit
//! Kronecker products, dense inverses, brute-force candidate enumeration,
//! numerical quadrature) and shares no code with the fast paths it checks,
//! apart from the steering-vector and DFT constructors.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::signal_model::{delay_shift_matrix, dft_matrix, steering_vector};
use crate::C64;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(k: &DMatrix<C64>) -> Vec<f64> {
    let mut e: Vec<f64> = nalgebra::SymmetricEigen::new(k.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    e.sort_by(|a, b| a.total_cmp(b));
    e
}

/// `K = σ_SI² F_nt^H X^H X F_nt + σ_s² I` with `F_nt = F I_nt` formed densely.
pub fn dense_k(x: &DMatrix<C64>, delay: usize, si: f64, noise: f64) -> DMatrix<C64> {
    let n = x.ncols();
    let f = dft_matrix(n);
    let shift = delay_shift_matrix(n, delay).expect("delay < N").map(c);
    let f_nt = &f * shift;
    let b = x * &f_nt;
    b.adjoint() * &b * c(si) + DMatrix::identity(n, n) * c(noise)
}

/// GLRT from the vectorised model: `2 |h^H C⁻¹ y|² / (h^H C⁻¹ h)` with
/// `C = Kᵀ ⊗ I_M`, `h = ((X F)ᵀ ⊗ I_M) (a ⊗ a)` and explicit inverses.
pub fn dense_glrt(
    received: &DMatrix<C64>,
    x: &DMatrix<C64>,
    theta: f64,
    spacing_ratio: f64,
    delay: usize,
    si: f64,
    noise: f64,
) -> f64 {
    let (m, n) = x.shape();
    let f = dft_matrix(n);
    let k = dense_k(x, delay, si, noise);
    let cov = k.transpose().kronecker(&DMatrix::<C64>::identity(m, m));
    let cov_inv = cov.try_inverse().expect("covariance invertible");
    let a = steering_vector(theta, m, spacing_ratio).expect("valid angle");
    let a_ext = a.kronecker(&a);
    let h = (x * f).transpose().kronecker(&DMatrix::<C64>::identity(m, m)) * a_ext;
    let y = DVector::from_column_slice(received.as_slice());
    let num = (h.adjoint() * &cov_inv * y)[(0, 0)].norm_sqr();
    let den = (h.adjoint() * &cov_inv * &h)[(0, 0)].re;
    2.0 * num / den
}

/// `aᵀ X F K⁻¹ F^H X^H a*` with a dense inverse.
pub fn dense_rho_objective(x: &DMatrix<C64>, a: &DVector<C64>, delay: usize, si: f64, noise: f64) -> f64 {
    let n = x.ncols();
    let f = dft_matrix(n);
    let k_inv = dense_k(x, delay, si, noise).try_inverse().expect("K invertible");
    let row = a.transpose() * x * &f;
    (&row * k_inv * row.adjoint())[(0, 0)].re
}

/// Inputs of the precoder subproblem, spelled out for the dense oracles.
pub struct DenseXProblem<'a> {
    pub channels: &'a [DMatrix<C64>],
    pub symbols: &'a DMatrix<C64>,
    pub lambda: &'a DMatrix<C64>,
    pub steering: &'a DVector<C64>,
    pub delay: usize,
    pub si: f64,
    pub noise: f64,
    pub y: &'a DVector<C64>,
    pub varrho: f64,
}

impl DenseXProblem<'_> {
    fn dims(&self) -> (usize, usize, usize) {
        (self.steering.len(), self.symbols.nrows(), self.symbols.ncols())
    }

    /// `(y_nt* y_ntᵀ ⊗ I) + ϱ blkdiag(H_n^H H_n) + η I` and `ω`, densely.
    pub fn system(&self, eta: f64) -> (DMatrix<C64>, DVector<C64>) {
        let (m, _, n) = self.dims();
        let f = dft_matrix(n);
        let shift = delay_shift_matrix(n, self.delay).expect("delay < N").map(c);
        let y_nt = (&f * shift * self.y) * c(self.si.sqrt());
        let mut a = (y_nt.map(|v| v.conj()) * y_nt.transpose()).kronecker(&DMatrix::<C64>::identity(m, m));
        let mut omega_mat = self.steering.map(|v| v.conj()) * (&f * self.y).adjoint();
        for (i, h) in self.channels.iter().enumerate() {
            let block = h.adjoint() * h * c(self.varrho);
            a.view_mut((i * m, i * m), (m, m)).add_assign(&block);
            let target = self.lambda.column(i).component_mul(&self.symbols.column(i));
            let rhs = h.adjoint() * target * c(self.varrho);
            let mut col = omega_mat.column_mut(i);
            col += rhs;
        }
        a += DMatrix::<C64>::identity(m * n, m * n) * c(eta);
        (a, DVector::from_column_slice(omega_mat.as_slice()))
    }

    /// Solution of the stationarity equation at multiplier `eta` by LU.
    pub fn solve(&self, eta: f64) -> DMatrix<C64> {
        let (m, _, n) = self.dims();
        let (a, omega) = self.system(eta);
        let x = a.lu().solve(&omega).expect("dense system solvable");
        DMatrix::from_column_slice(m, n, x.as_slice())
    }

    /// The minimisation objective with explicit `K` and `F` matrices.
    pub fn objective(&self, x: &DMatrix<C64>) -> f64 {
        let n = self.symbols.ncols();
        let f = dft_matrix(n);
        let mut pen = 0.0;
        for (i, h) in self.channels.iter().enumerate() {
            let target = self.lambda.column(i).component_mul(&self.symbols.column(i));
            pen += (h * x.column(i) - target).norm_squared();
        }
        let lin = (self.y.adjoint() * f.adjoint() * x.adjoint() * self.steering.map(|v| v.conj()))[(0, 0)];
        let k = dense_k(x, self.delay, self.si, self.noise);
        let quad = (self.y.adjoint() * k * self.y)[(0, 0)].re;
        self.varrho * pen - 2.0 * lin.re + quad
    }
}

use std::ops::AddAssign;

/// Closest point of `{λ : |Im λ| <= tan φ (Re λ - t)}` by enumerating the
/// candidates of a convex projection onto a closed cone: the point itself,
/// the clamped projections onto both boundary rays, and the apex.
pub fn project_cone_oracle(lambda_hat: C64, t: f64, phi: f64) -> C64 {
    let feasible = |z: C64| z.im.abs() <= phi.tan() * (z.re - t) + 1e-12;
    if feasible(lambda_hat) {
        return lambda_hat;
    }
    let apex = C64::new(t, 0.0);
    let mut best = apex;
    for dir in [C64::from_polar(1.0, phi), C64::from_polar(1.0, -phi)] {
        let rel = lambda_hat - apex;
        let s = (rel.re * dir.re + rel.im * dir.im).max(0.0);
        let cand = apex + dir * s;
        if (cand - lambda_hat).norm() < (best - lambda_hat).norm() {
            best = cand;
        }
    }
    best
}

/// Brute-force polar grid search for the same projection (coarse; only
/// used to sanity-check [`project_cone_oracle`]).
pub fn project_cone_grid(lambda_hat: C64, t: f64, phi: f64, radius: f64, steps: usize) -> C64 {
    let mut best = C64::new(t, 0.0);
    let mut best_d = (best - lambda_hat).norm();
    for i in 0..=steps {
        let r = radius * i as f64 / steps as f64;
        for j in 0..=steps {
            let ang = -phi + 2.0 * phi * j as f64 / steps as f64;
            let z = C64::new(t, 0.0) + C64::from_polar(r, ang);
            let d = (z - lambda_hat).norm();
            if d < best_d {
                best_d = d;
                best = z;
            }
        }
    }
    best
}

/// `e^{-z} I0(z)`: power series for small arguments, Hankel asymptotic
/// expansion for large ones.
pub fn bessel_i0_scaled(z: f64) -> f64 {
    if z < 40.0 {
        i0_series_scaled(z)
    } else {
        i0_asymptotic_scaled(z)
    }
}

fn i0_series_scaled(z: f64) -> f64 {
    let q = 0.25 * z * z;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > 1e-18 * sum {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum * (-z).exp()
}

fn i0_asymptotic_scaled(z: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..30 {
        let odd = (2 * k - 1) as f64;
        term *= odd * odd / (k as f64 * 8.0 * z);
        sum += term;
        if term < 1e-17 {
            break;
        }
    }
    sum / (2.0 * PI * z).sqrt()
}

fn rician_density(x: f64, a: f64) -> f64 {
    // x exp(-(x^2 + a^2)/2) I0(a x) = x exp(-(x - a)^2 / 2) e^{-ax} I0(ax)
    x * (-0.5 * (x - a) * (x - a)).exp() * bessel_i0_scaled(a * x)
}

fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, depth)
}

/// `Q1(a, b) = ∫_b^∞ x exp(-(x² + a²)/2) I0(a x) dx` by adaptive Simpson
/// over unit-width panels; the integrand is negligible beyond
/// `max(a, b) + 40`.
pub fn marcum_q1_quadrature(a: f64, b: f64) -> f64 {
    let end = a.max(b) + 40.0;
    let mut lo = b;
    let mut total = 0.0;
    while lo < end {
        let hi = (lo + 1.0).min(end);
        total += adaptive_simpson(&|x| rician_density(x, a), lo, hi, 1e-15, 40);
        lo = hi;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    // Q1(a, b) = exp(-(a^2+b^2)/2) sum_k (a/b)^k I_k(ab)
    fn bessel_series_q1(a: f64, b: f64) -> f64 {
        let z = a * b;
        let bessel_ik = |k: usize| -> f64 {
            let mut term = (0.5 * z).powi(k as i32) / (1..=k).map(|v| v as f64).product::<f64>();
            let mut sum = term;
            for j in 1..200 {
                term *= 0.25 * z * z / (j as f64 * (j + k) as f64);
                sum += term;
            }
            sum
        };
        let mut total = 0.0;
        for k in 0..80 {
            total += (a / b).powi(k) * bessel_ik(k as usize);
        }
        (-(a * a + b * b) / 2.0).exp() * total
    }

    #[test]
    fn quadrature_matches_bessel_series() {
        let q = marcum_q1_quadrature(1.0, 1.0);
        assert!((q - bessel_series_q1(1.0, 1.0)).abs() < 1e-10);
        assert!((q - 0.7328798037968202).abs() < 1e-10);
        assert!((marcum_q1_quadrature(0.0, 3.0) - (-4.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn i0_branches_agree() {
        for z in [40.0, 45.0, 60.0] {
            let (a, b) = (i0_series_scaled(z), i0_asymptotic_scaled(z));
            assert!((a - b).abs() / b < 1e-12, "{z}: {a} {b}");
        }
        // mpmath
        assert!((bessel_i0_scaled(40.0) - 0.06327827987523533).abs() < 1e-15);
    }

    #[test]
    fn cone_oracles_agree() {
        let cases = [
            (C64::new(1.0, 2.0), 1.0),
            (C64::new(-1.0, 0.3), 0.5),
            (C64::new(3.0, -5.0), 0.2),
        ];
        for (lh, t) in cases {
            let a = project_cone_oracle(lh, t, PI / 4.0);
            let b = project_cone_grid(lh, t, PI / 4.0, 10.0, 2000);
            assert!((a - b).norm() < 1e-2, "{a} vs {b}");
        }
    }
}
