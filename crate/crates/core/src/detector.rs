//! Sensing receiver: SI-plus-noise covariance, prewhitened GLRT, DoA grid
//! search and the Neyman-Pearson detection probability.
//!
//! The noise on `vec(Y_s)` has covariance `Kᵀ ⊗ I_M` with
//! `K = σ_SI² (X F I_{n_t})^H (X F I_{n_t}) + σ_s² I_N`. Only the `N x N`
//! factor `K = L L^H` is ever formed. For a probed direction `θ` let
//! `v = (X F)^H a*(θ)`; then
//!
//! ```text
//! L(θ) = 2 |a^H Y_s K⁻¹ v|² / (M v^H K⁻¹ v)
//! ```
//!
//! which is exactly χ²₂ under H0 and χ²₂(ρ) under H1 with
//! `ρ = 2 M |β|² v^H K⁻¹ v`, for circular noise with `E|z|² = σ²`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::signal_model::{dft_matrix, shift_columns, Ula};
use crate::statkit::{self, Noncentrality, Probability};
use crate::C64;

/// Denominators below this are treated as "no energy toward θ".
pub const DEGENERATE_CUTOFF: f64 = 1e-30;

/// Factorised SI-plus-noise covariance bound to one precoder.
#[derive(Clone)]
pub struct WhitenedStatCache {
    k_mat: DMatrix<C64>,
    chol: Cholesky<C64, Dyn>,
    xf: DMatrix<C64>,
    /// `L⁻¹ (X F)^H`, `N x M`.
    whitened_tx: DMatrix<C64>,
}

impl std::fmt::Debug for WhitenedStatCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WhitenedStatCache")
            .field("antennas", &self.xf.nrows())
            .field("subcarriers", &self.xf.ncols())
            .finish()
    }
}

/// Builds `K` for precoder `x` and factorises it.
pub fn si_covariance(x: &DMatrix<C64>, delay: usize, si_variance: f64, radar_noise: f64) -> Result<WhitenedStatCache> {
    let n = x.ncols();
    si_covariance_with_dft(x, &dft_matrix(n), delay, si_variance, radar_noise)
}

/// Same as [`si_covariance`] with a caller-supplied DFT matrix.
pub fn si_covariance_with_dft(
    x: &DMatrix<C64>,
    dft: &DMatrix<C64>,
    delay: usize,
    si_variance: f64,
    radar_noise: f64,
) -> Result<WhitenedStatCache> {
    let n = x.ncols();
    if !(radar_noise > 0.0) {
        return Err(Error::Domain(format!("radar noise variance {radar_noise} must be > 0")));
    }
    if delay >= n {
        return Err(Error::Domain(format!("delay {delay} >= N = {n}")));
    }
    if dft.shape() != (n, n) {
        return Err(Error::Structural("DFT size does not match precoder".into()));
    }
    let xf = x * dft;
    let mut k_mat = DMatrix::<C64>::identity(n, n) * C64::new(radar_noise, 0.0);
    if si_variance > 0.0 {
        let shifted = shift_columns(&xf, delay);
        k_mat += shifted.ad_mul(&shifted) * C64::new(si_variance, 0.0);
    }
    // enforce exact Hermitian symmetry before factorising
    let k_mat = (&k_mat + k_mat.adjoint()) * C64::new(0.5, 0.0);
    let chol =
        Cholesky::new(k_mat.clone()).ok_or_else(|| Error::Numerical("Cholesky of the SI covariance failed".into()))?;
    let mut whitened_tx = xf.adjoint();
    chol.l_dirty().solve_lower_triangular_mut(&mut whitened_tx);
    Ok(WhitenedStatCache {
        k_mat,
        chol,
        xf,
        whitened_tx,
    })
}

impl WhitenedStatCache {
    pub fn k_matrix(&self) -> &DMatrix<C64> {
        &self.k_mat
    }

    pub fn cholesky(&self) -> &Cholesky<C64, Dyn> {
        &self.chol
    }

    /// `X F`.
    pub fn xf(&self) -> &DMatrix<C64> {
        &self.xf
    }

    pub fn antennas(&self) -> usize {
        self.xf.nrows()
    }

    pub fn subcarriers(&self) -> usize {
        self.xf.ncols()
    }

    /// `K⁻¹ b` by two triangular solves.
    pub fn solve(&self, b: &DVector<C64>) -> DVector<C64> {
        self.chol.solve(b)
    }

    /// `aᵀ X F K⁻¹ F^H X^H a*` for steering vector `a`.
    pub fn quadratic_form(&self, a: &DVector<C64>) -> f64 {
        let w = &self.whitened_tx * a.map(|v| v.conj());
        w.norm_squared()
    }

    /// Whitens a received block once so many directions can be probed.
    pub fn whiten_received(&self, received: &DMatrix<C64>) -> Result<WhitenedReceive> {
        if received.shape() != self.xf.shape() {
            return Err(Error::Structural(format!(
                "received block is {:?}, expected {:?}",
                received.shape(),
                self.xf.shape()
            )));
        }
        let mut v = received.adjoint();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut v);
        Ok(WhitenedReceive { whitened_rx: v })
    }

    /// GLRT value for a pre-whitened received block.
    pub fn statistic(&self, rx: &WhitenedReceive, a: &DVector<C64>) -> Result<f64> {
        let m = a.len() as f64;
        let q = &self.whitened_tx * a.map(|v| v.conj());
        let denom = m * q.norm_squared();
        if !(denom >= DEGENERATE_CUTOFF) {
            return Err(Error::DegenerateIllumination(denom));
        }
        let p = &rx.whitened_rx * a;
        let num = p.dotc(&q).norm_sqr();
        Ok(2.0 * num / denom)
    }
}

/// `L⁻¹ Y_s^H` for one received block.
#[derive(Debug, Clone)]
pub struct WhitenedReceive {
    whitened_rx: DMatrix<C64>,
}

/// GLRT statistic at direction `theta`.
pub fn glrt_statistic(received: &DMatrix<C64>, ula: &Ula, theta: f64, cache: &WhitenedStatCache) -> Result<f64> {
    let rx = cache.whiten_received(received)?;
    cache.statistic(&rx, &ula.steering(theta)?)
}

/// Uniform grid `lo, lo + step, ..., hi` (both ends included).
pub fn doa_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(hi >= lo) {
        return Err(Error::Domain(format!("bad DoA grid [{lo}, {hi}] step {step}")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| (lo + i as f64 * step).min(hi)).collect())
}

const GOLDEN_ITERS: usize = 40;

/// Grid maximiser of `L(θ)` with an optional golden-section polish inside
/// the neighbouring grid cells. Degenerate grid points are skipped.
pub fn doa_search(
    received: &DMatrix<C64>,
    ula: &Ula,
    cache: &WhitenedStatCache,
    grid: &[f64],
    refine: bool,
) -> Result<(f64, f64)> {
    if grid.is_empty() {
        return Err(Error::Domain("empty DoA grid".into()));
    }
    let rx = cache.whiten_received(received)?;
    let eval = |theta: f64| -> Result<f64> { cache.statistic(&rx, &ula.steering(theta)?) };
    let mut best: Option<(usize, f64)> = None;
    let mut last_err = None;
    for (i, &theta) in grid.iter().enumerate() {
        match eval(theta) {
            Ok(l) => {
                if best.is_none_or(|(_, b)| l > b) {
                    best = Some((i, l));
                }
            }
            Err(e @ Error::DegenerateIllumination(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    let (idx, l_best) = best.ok_or_else(|| last_err.unwrap_or(Error::DegenerateIllumination(0.0)))?;
    let theta_best = grid[idx];
    if !refine || grid.len() == 1 {
        return Ok((theta_best, l_best));
    }
    let lo = grid[idx.saturating_sub(1)];
    let hi = grid[(idx + 1).min(grid.len() - 1)];
    let (theta_ref, l_ref) = golden_max(|t| eval(t).unwrap_or(f64::NEG_INFINITY), lo, hi);
    if l_ref > l_best {
        Ok((theta_ref, l_ref))
    } else {
        Ok((theta_best, l_best))
    }
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..GOLDEN_ITERS {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Neyman-Pearson threshold `δ = -2 ln P_FA`.
pub fn np_threshold(p_fa: f64) -> Result<f64> {
    if !(p_fa > 0.0 && p_fa < 1.0) {
        return Err(Error::Domain(format!("false-alarm probability {p_fa} not in (0, 1)")));
    }
    statkit::chi2_2_inv_cdf(Probability::from_parts(1.0 - p_fa, p_fa))
}

/// `ρ = 2 M |β|² aᵀ X F K⁻¹ F^H X^H a*`.
pub fn noncentrality(ula: &Ula, theta: f64, beta: C64, cache: &WhitenedStatCache) -> Result<Noncentrality> {
    let a = ula.steering(theta)?;
    let m = ula.antennas as f64;
    let form = cache.quadratic_form(&a);
    if !(m * form >= DEGENERATE_CUTOFF) {
        return Err(Error::DegenerateIllumination(m * form));
    }
    Noncentrality::new(2.0 * m * beta.norm_sqr() * form)
}

/// `P_D = Q1(sqrt(ρ), sqrt(δ))`.
pub fn predict_pd(rho: Noncentrality, p_fa: f64) -> Result<Probability> {
    let delta = np_threshold(p_fa)?;
    statkit::marcum_q1(rho.get().sqrt(), delta.sqrt())
}

/// Outcome of one detection attempt.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DetectionReport {
    pub l_star: f64,
    pub theta_hat: f64,
    pub decided_h1: bool,
    pub delta: f64,
    pub rho: f64,
    pub p_d_theory: f64,
}

/// Grid search, thresholding, and the theoretical fields evaluated at the
/// estimated direction for an assumed attenuation `beta`.
pub fn detect(
    received: &DMatrix<C64>,
    ula: &Ula,
    cache: &WhitenedStatCache,
    grid: &[f64],
    refine: bool,
    p_fa: f64,
    beta: C64,
) -> Result<DetectionReport> {
    let delta = np_threshold(p_fa)?;
    let (theta_hat, l_star) = doa_search(received, ula, cache, grid, refine)?;
    let rho = noncentrality(ula, theta_hat, beta, cache)?;
    let p_d = predict_pd(rho, p_fa)?;
    Ok(DetectionReport {
        l_star,
        theta_hat,
        decided_h1: l_star > delta,
        delta,
        rho: rho.get(),
        p_d_theory: p_d.get(),
    })
}

/// Empirical threshold: the `(1 - P_FA)` quantile of H0 statistics.
pub fn calibrate_threshold(h0_samples: &[f64], p_fa: f64) -> Result<f64> {
    if h0_samples.is_empty() {
        return Err(Error::Domain("no H0 samples to calibrate from".into()));
    }
    if !(p_fa > 0.0 && p_fa < 1.0) {
        return Err(Error::Domain(format!("false-alarm probability {p_fa} not in (0, 1)")));
    }
    let mut sorted = h0_samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    // smallest threshold with at most floor(p_fa * n) exceedances
    let allowed = (p_fa * n as f64).floor() as usize;
    let idx = n - 1 - allowed.min(n - 1);
    Ok(sorted[idx])
}
