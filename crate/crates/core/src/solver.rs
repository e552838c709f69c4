//! Detection-maximising symbol-level precoder.
//!
//! The problem is
//!
//! ```text
//! max_{X, Λ}  aᵀ X F K(X)⁻¹ F^H X^H a*
//! s.t.        ‖X‖_F² <= P_T,  H_n x[n] = λ_n ⊙ s_n,  λ_{k,n} in the constructive region
//! ```
//!
//! The equalities are moved into a quadratic penalty with weight `ϱ` (outer
//! loop, [`penalty_solve`]) and the fractional term is linearised with an
//! auxiliary vector `y` (quadratic transform). The resulting minimisation
//!
//! ```text
//! f(y, X, Λ) = ϱ Σ_n ‖H_n x[n] - λ_n ⊙ s_n‖² - 2 Re{y^H F^H X^H a*} + y^H K(X) y
//! ```
//!
//! is solved by cyclic exact block minimisation ([`bcd_solve`]).
//!
//! `penalty_solve` works on a nondimensionalised copy of the problem
//! (power budget 1, radar noise 1, smallest `Γ_k` equal to 1) so that the
//! penalty schedule and tolerances are unit-free; every reported quantity is
//! mapped back to physical units.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::detector::si_covariance_with_dft;
use crate::error::{Error, Result};
use crate::signal_model::{complex_gaussian_matrix, delay_samples, dft_matrix, shift_columns};
use crate::statkit::illinois;
use crate::C64;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// One instance of the precoding problem.
#[derive(Debug, Clone)]
pub struct Problem {
    /// `H_n`, each `K x M`.
    pub channels: Vec<DMatrix<C64>>,
    /// `s_{k,n}`, `K x N`, unit modulus.
    pub symbols: DMatrix<C64>,
    /// Design steering vector `a`.
    pub steering: DVector<C64>,
    pub delay: usize,
    pub si_variance: f64,
    pub radar_noise: f64,
    pub power_budget: f64,
    /// `Γ_k`.
    pub thresholds: Vec<f64>,
    pub phi: f64,
    dft: DMatrix<C64>,
    grams: Vec<GramEigen>,
}

impl Problem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        channels: Vec<DMatrix<C64>>,
        symbols: DMatrix<C64>,
        steering: DVector<C64>,
        delay: usize,
        si_variance: f64,
        radar_noise: f64,
        power_budget: f64,
        thresholds: Vec<f64>,
        phi: f64,
    ) -> Result<Self> {
        let (k, n) = symbols.shape();
        let m = steering.len();
        if channels.len() != n {
            return Err(Error::Structural(format!(
                "{} channels for {n} subcarriers",
                channels.len()
            )));
        }
        if let Some(h) = channels.iter().find(|h| h.shape() != (k, m)) {
            return Err(Error::Structural(format!(
                "channel is {:?}, expected ({k}, {m})",
                h.shape()
            )));
        }
        if thresholds.len() != k {
            return Err(Error::Structural(format!(
                "{} thresholds for {k} users",
                thresholds.len()
            )));
        }
        if delay >= n {
            return Err(Error::Domain(format!("delay {delay} >= N = {n}")));
        }
        if !(radar_noise > 0.0) || !(power_budget > 0.0) || si_variance < 0.0 {
            return Err(Error::Domain(
                "noise and power must be positive, SI variance nonnegative".into(),
            ));
        }
        if !(phi > 0.0 && phi < std::f64::consts::FRAC_PI_2) {
            return Err(Error::Domain(format!("phi = {phi} outside (0, pi/2)")));
        }
        if thresholds.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::Domain("thresholds must be nonnegative".into()));
        }
        Ok(Self {
            grams: gram_eigens(&channels),
            channels,
            symbols,
            steering,
            delay,
            si_variance,
            radar_noise,
            power_budget,
            thresholds,
            phi,
            dft: dft_matrix(n),
        })
    }

    pub fn antennas(&self) -> usize {
        self.steering.len()
    }

    pub fn users(&self) -> usize {
        self.symbols.nrows()
    }

    pub fn subcarriers(&self) -> usize {
        self.symbols.ncols()
    }

    pub fn dft(&self) -> &DMatrix<C64> {
        &self.dft
    }

    /// Copy with a different SI variance (used by the benchmark schemes).
    pub fn with_si_variance(&self, si_variance: f64) -> Self {
        Self {
            si_variance,
            ..self.clone()
        }
    }

    fn scales(&self) -> Scales {
        let gamma_ref = self
            .thresholds
            .iter()
            .copied()
            .filter(|t| *t > 0.0)
            .fold(f64::INFINITY, f64::min);
        let gamma_ref = if gamma_ref.is_finite() { gamma_ref } else { 1.0 };
        Scales {
            amplitude: self.power_budget.sqrt(),
            lambda: gamma_ref,
            objective: self.power_budget / self.radar_noise,
            noise: self.radar_noise,
        }
    }

    /// Unit-free copy: `X̃ = X/√P_T`, `λ̃ = λ/Γ_ref`, `K̃ = K/σ_s²`.
    fn normalized(&self, s: &Scales) -> Self {
        let h_scale = c(s.amplitude / s.lambda);
        let channels: Vec<DMatrix<C64>> = self.channels.iter().map(|h| h * h_scale).collect();
        Self {
            grams: gram_eigens(&channels),
            channels,
            symbols: self.symbols.clone(),
            steering: self.steering.clone(),
            delay: self.delay,
            si_variance: self.si_variance * self.power_budget / self.radar_noise,
            radar_noise: 1.0,
            power_budget: 1.0,
            thresholds: self.thresholds.iter().map(|t| t / s.lambda).collect(),
            phi: self.phi,
            dft: self.dft.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Scales {
    amplitude: f64,
    lambda: f64,
    objective: f64,
    noise: f64,
}

impl Scales {
    /// Physical `ϱ` equivalent to a normalised one.
    fn varrho(&self, normalized: f64) -> f64 {
        normalized * self.objective / (self.lambda * self.lambda)
    }
}

/// Starting point of the block iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Every column along `a*` at full power, slacks projected.
    MatchedBeam,
    /// Minimum-norm solution of `H_n x[n] = Γ ⊙ s_n`, scaled into the budget.
    ZeroForcing,
    /// Gaussian at full power.
    Random,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SolverOptions {
    /// Initial penalty weight of the normalised problem (power budget 1).
    pub varrho0: f64,
    pub c_varrho: f64,
    /// Feasibility tolerance as a fraction of `min_k Γ_k`.
    pub eps_p: f64,
    pub max_outer: usize,
    pub bcd_tol: f64,
    pub max_bcd: usize,
    /// Relative tolerance of the power-multiplier root search.
    pub eta_tol: f64,
    pub init_mode: InitMode,
    pub seed: u64,
    /// Keep per-iteration diagnostics (objective after every block update).
    pub record_iterations: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            varrho0: 1.0,
            c_varrho: 5.0,
            eps_p: 1e-4,
            max_outer: 12,
            bcd_tol: 1e-7,
            max_bcd: 300,
            eta_tol: 1e-14,
            init_mode: InitMode::MatchedBeam,
            seed: 0,
            record_iterations: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_varrho > 1.0) {
            return Err(Error::Domain(format!("penalty growth {} must exceed 1", self.c_varrho)));
        }
        for (name, v) in [
            ("varrho0", self.varrho0),
            ("eps_p", self.eps_p),
            ("bcd_tol", self.bcd_tol),
            ("eta_tol", self.eta_tol),
        ] {
            if !(v > 0.0) {
                return Err(Error::Domain(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.max_outer == 0 || self.max_bcd == 0 {
            return Err(Error::Domain("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

/// Objective after each block update of one BCD iteration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct IterationRecord {
    pub after_y: f64,
    /// `ϱ Σ‖H_n x[n] - λ_n ⊙ s_n‖²` at the point where `y` was updated.
    pub penalty_after_y: f64,
    /// `aᵀ X F K⁻¹ F^H X^H a*` at the same point.
    pub rho_after_y: f64,
    pub after_x: f64,
    pub after_lambda: f64,
    pub eta: f64,
}

/// Result of one inner BCD run.
#[derive(Debug, Clone)]
pub struct BcdRun {
    pub x: DMatrix<C64>,
    pub lambda: DMatrix<C64>,
    pub y: DVector<C64>,
    /// Objective before the first iteration.
    pub initial_objective: f64,
    /// Objective at the end of each iteration.
    pub trace: Vec<f64>,
    pub records: Vec<IterationRecord>,
    pub iterations: usize,
    pub converged: bool,
}

/// Per-outer-iteration summary.
#[derive(Debug, Clone, serde::Serialize)]
pub struct OuterRecord {
    pub varrho: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
    pub trace: Vec<f64>,
    #[serde(skip)]
    pub records: Vec<IterationRecord>,
}

#[derive(Debug, Clone)]
pub struct PrecodeSolution {
    pub x: DMatrix<C64>,
    pub lambda: DMatrix<C64>,
    pub y: DVector<C64>,
    /// Objective trace of the last inner run.
    pub objective_trace: Vec<f64>,
    pub outer: Vec<OuterRecord>,
    /// `max_n ‖H_n x[n] - λ_n ⊙ s_n‖`.
    pub feasibility_residual: f64,
    /// `aᵀ X F K⁻¹ F^H X^H a*` of the returned `X` under the problem's SI.
    pub rho_value: f64,
    pub final_varrho: f64,
    pub feasible: bool,
}

fn comm_targets(p: &Problem, lambda: &DMatrix<C64>) -> Vec<DVector<C64>> {
    (0..p.subcarriers())
        .map(|n| lambda.column(n).component_mul(&p.symbols.column(n)))
        .collect()
}

/// `(Σ_n ‖r_n‖², max_n ‖r_n‖)` for `r_n = H_n x[n] - λ_n ⊙ s_n`.
pub fn comm_residual(p: &Problem, x: &DMatrix<C64>, lambda: &DMatrix<C64>) -> (f64, f64) {
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for (n, target) in comm_targets(p, lambda).into_iter().enumerate() {
        let r = (&p.channels[n] * x.column(n) - target).norm_squared();
        sum += r;
        max = max.max(r.sqrt());
    }
    (sum, max)
}

/// The minimisation objective `f(y, X, Λ)` for penalty weight `varrho`.
pub fn objective_13a(p: &Problem, x: &DMatrix<C64>, lambda: &DMatrix<C64>, y: &DVector<C64>, varrho: f64) -> f64 {
    let (pen, _) = comm_residual(p, x, lambda);
    let xf = x * &p.dft;
    let lin = (p.steering.transpose() * &xf * y)[(0, 0)].re;
    let si = (&xf * delay_samples(y, p.delay)).norm_squared();
    varrho * pen - 2.0 * lin + p.si_variance * si + p.radar_noise * y.norm_squared()
}

/// `aᵀ X F K⁻¹ F^H X^H a*`, through the detector's factorised covariance.
pub fn rho_objective(p: &Problem, x: &DMatrix<C64>) -> Result<f64> {
    let cache = si_covariance_with_dft(x, &p.dft, p.delay, p.si_variance, p.radar_noise)?;
    Ok(cache.quadratic_form(&p.steering))
}

/// `y = K⁻¹ F^H X^H a*`.
pub fn update_y(p: &Problem, x: &DMatrix<C64>) -> Result<DVector<C64>> {
    let cache = si_covariance_with_dft(x, &p.dft, p.delay, p.si_variance, p.radar_noise)?;
    let v = cache.xf().adjoint() * p.steering.map(|v| v.conj());
    Ok(cache.solve(&v))
}

/// Eigendecomposition `H_n^H H_n = V diag(d) V^H`, range directions first.
#[derive(Debug, Clone)]
pub struct GramEigen {
    basis: DMatrix<C64>,
    values: Vec<f64>,
    rank: usize,
}

impl GramEigen {
    fn new(h: &DMatrix<C64>) -> Self {
        let eig = nalgebra::SymmetricEigen::new(h.ad_mul(h));
        let m = h.ncols();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let top = eig.eigenvalues[order[0]].max(0.0);
        let mut basis = DMatrix::zeros(m, m);
        let mut values = Vec::with_capacity(m);
        for (j, &i) in order.iter().enumerate() {
            basis.set_column(j, &eig.eigenvectors.column(i));
            let d = eig.eigenvalues[i];
            values.push(if d > 1e-12 * top { d } else { 0.0 });
        }
        let rank = values.iter().filter(|d| **d > 0.0).count();
        Self { basis, values, rank }
    }

    fn range(&self) -> nalgebra::DMatrixView<'_, C64> {
        self.basis.columns(0, self.rank)
    }

    fn null(&self) -> nalgebra::DMatrixView<'_, C64> {
        self.basis.columns(self.rank, self.basis.ncols() - self.rank)
    }
}

fn gram_eigens(channels: &[DMatrix<C64>]) -> Vec<GramEigen> {
    channels.iter().map(GramEigen::new).collect()
}

/// The linear system of the precoder subproblem at fixed `(y, Λ, ϱ)`:
/// `[D(η) + U U^H] x = ω` with `D(η) = ϱ blkdiag(H_n^H H_n) + η I` and
/// `U = y_nt* ⊗ I_M`, `y_nt = σ_SI F I_{n_t} y`.
///
/// Each block of `D(η)` is diagonal in the eigenbasis of `H_n^H H_n`, so
/// for a given `η` only the `M x M` capacitance matrix
/// `I + Σ_n |u_n|² D_n(η)⁻¹` has to be factorised.
pub struct XSystem<'a> {
    problem: &'a Problem,
    /// `y_nt` entries.
    u: DVector<C64>,
    /// `ω` blocks.
    omega: Vec<DVector<C64>>,
    /// `ω` blocks in the eigenbases.
    omega_t: Vec<DVector<C64>>,
    /// `Σ_n |u_n|² Π_n` over the null-space projectors.
    null_sum: DMatrix<C64>,
    rank_deficient: bool,
    varrho: f64,
}

impl<'a> XSystem<'a> {
    pub fn new(p: &'a Problem, y: &DVector<C64>, lambda: &DMatrix<C64>, varrho: f64) -> Self {
        let m = p.antennas();
        let u = (&p.dft * delay_samples(y, p.delay)) * c(p.si_variance.sqrt());
        let fy = &p.dft * y;
        let a_conj = p.steering.map(|v| v.conj());
        let targets = comm_targets(p, lambda);
        let omega: Vec<DVector<C64>> = p
            .channels
            .iter()
            .zip(targets.iter())
            .enumerate()
            .map(|(n, (h, t))| &a_conj * fy[n].conj() + h.ad_mul(t) * c(varrho))
            .collect();
        let omega_t = omega.iter().zip(&p.grams).map(|(w, g)| g.basis.ad_mul(w)).collect();
        let mut null_sum = DMatrix::zeros(m, m);
        for (g, un) in p.grams.iter().zip(u.iter()) {
            if g.rank < m {
                let v0 = g.null();
                null_sum += (v0 * v0.adjoint()) * c(un.norm_sqr());
            }
        }
        Self {
            problem: p,
            rank_deficient: p.grams.iter().any(|g| g.rank < m),
            u,
            omega,
            omega_t,
            null_sum,
            varrho,
        }
    }

    fn inverse_diag(&self, g: &GramEigen, eta: f64) -> DVector<f64> {
        DVector::from_iterator(g.values.len(), g.values.iter().map(|d| 1.0 / (self.varrho * d + eta)))
    }

    /// Capacitance correction `w` and the per-block inverse spectra, or
    /// `None` when `D(η)` is singular.
    fn correction(&self, eta: f64) -> Option<(DVector<C64>, Vec<DVector<f64>>)> {
        if !(eta >= 0.0) || (eta == 0.0 && self.rank_deficient) {
            return None;
        }
        let m = self.problem.antennas();
        let mut capacitance = DMatrix::<C64>::identity(m, m);
        if self.rank_deficient {
            capacitance += &self.null_sum * c(1.0 / eta);
        }
        let mut rhs = DVector::<C64>::zeros(m);
        let mut spectra = Vec::with_capacity(self.omega.len());
        for (i, g) in self.problem.grams.iter().enumerate() {
            let e = self.inverse_diag(g, eta);
            let weight = self.u[i].norm_sqr();
            let vr = g.range();
            let mut scaled = vr.clone_owned();
            for j in 0..g.rank {
                scaled.column_mut(j).scale_mut(weight * e[j]);
            }
            capacitance += scaled * vr.adjoint();
            let zt = self.omega_t[i].zip_map(&e, |w, ej| w * ej);
            rhs += (&g.basis * zt) * self.u[i];
            spectra.push(e);
        }
        let w = Cholesky::new(capacitance)?.solve(&rhs);
        Some((w, spectra))
    }

    /// `x(η)` from the eigenbases plus an `M x M` Woodbury correction.
    /// `None` when some block `ϱ H_n^H H_n + η I` is singular.
    pub fn solve(&self, eta: f64) -> Option<DMatrix<C64>> {
        self.solve_with_correction(eta, 1.0)
    }

    /// [`Self::solve`] with the Woodbury correction term scaled by `gain`
    /// (1 is exact). Exists so the validation suite can confirm that the
    /// dense comparison notices a wrong correction.
    #[doc(hidden)]
    pub fn solve_with_correction(&self, eta: f64, gain: f64) -> Option<DMatrix<C64>> {
        let (w, spectra) = self.correction(eta)?;
        let m = self.problem.antennas();
        let mut x = DMatrix::zeros(m, self.omega.len());
        for (i, g) in self.problem.grams.iter().enumerate() {
            let coef = c(gain) * self.u[i].conj();
            let t = (&self.omega_t[i] - g.basis.ad_mul(&w) * coef).zip_map(&spectra[i], |v, e| v * e);
            x.set_column(i, &(&g.basis * t));
        }
        Some(x)
    }

    /// `‖ω‖`.
    pub fn rhs_norm(&self) -> f64 {
        self.omega.iter().map(|w| w.norm_squared()).sum::<f64>().sqrt()
    }

    /// `‖x(η)‖²` without forming `x` (the eigenbases are unitary).
    pub fn power(&self, eta: f64) -> Option<f64> {
        let (w, spectra) = self.correction(eta)?;
        let mut total = 0.0;
        for (i, g) in self.problem.grams.iter().enumerate() {
            let t = &self.omega_t[i] - g.basis.ad_mul(&w) * self.u[i].conj();
            total += t
                .iter()
                .zip(spectra[i].iter())
                .map(|(v, e)| v.norm_sqr() * e * e)
                .sum::<f64>();
        }
        Some(total)
    }

    /// `‖[D(η) + U U^H] x - ω‖ / (1 + ‖ω‖)`, applied block-wise.
    pub fn stationarity_residual(&self, eta: f64, x: &DMatrix<C64>) -> f64 {
        let m = self.problem.antennas();
        let mix: DVector<C64> = (0..x.ncols()).fold(DVector::zeros(m), |acc, i| acc + x.column(i) * self.u[i]);
        let mut res = 0.0;
        let mut omega_norm = 0.0;
        for (i, h) in self.problem.channels.iter().enumerate() {
            let ax = h.ad_mul(&(h * x.column(i))) * c(self.varrho) + x.column(i) * c(eta) + &mix * self.u[i].conj();
            res += (ax - &self.omega[i]).norm_squared();
            omega_norm += self.omega[i].norm_squared();
        }
        res.sqrt() / (1.0 + omega_norm.sqrt())
    }
}

/// Result of the precoder update.
#[derive(Debug, Clone)]
pub struct XUpdate {
    pub x: DMatrix<C64>,
    pub eta: f64,
}

/// Exact minimiser of the objective over `X` with the power budget: `η = 0`
/// if the unconstrained solution fits, otherwise the root of
/// `‖x(η)‖² = P_T`.
pub fn update_x(p: &Problem, y: &DVector<C64>, lambda: &DMatrix<C64>, varrho: f64, eta_tol: f64) -> Result<XUpdate> {
    if !(varrho > 0.0) {
        return Err(Error::Domain(format!("penalty weight {varrho} must be > 0")));
    }
    let sys = XSystem::new(p, y, lambda, varrho);
    let budget = p.power_budget;
    // with K < M every block is rank deficient at η = 0
    if p.users() == p.antennas() {
        if let Some(x) = sys.solve(0.0) {
            if x.norm_squared() <= budget {
                return Ok(XUpdate { x, eta: 0.0 });
            }
        }
    }
    // 1/‖x(η)‖ is close to affine in η, which suits regula falsi
    let gap = |eta: f64| match sys.power(eta) {
        Some(power) => (budget / power).sqrt() - 1.0,
        None => -1.0,
    };
    // (D(η) + U U^H) ⪰ η I, so this η already meets the budget
    let hi = (sys.rhs_norm() / budget.sqrt()).max(f64::MIN_POSITIVE);
    let bracket = illinois(gap, 0.0, hi, eta_tol, 400).map_err(|e| e.context("power multiplier search"))?;
    let mut eta = bracket.root;
    if bracket.root_value < -eta_tol.max(1e-12) {
        // stopped on bracket width while still over budget
        eta = bracket.hi;
    }
    let x = sys
        .solve(eta)
        .ok_or_else(|| Error::Numerical(format!("precoder system singular at eta = {eta}")))?;
    Ok(XUpdate { x, eta })
}

/// Euclidean projection onto `{λ : |Im λ| <= tan φ (Re λ - t)}`.
pub fn project_lambda(lambda_hat: C64, t: f64, phi: f64) -> C64 {
    let (re, im) = (lambda_hat.re - t, lambda_hat.im);
    let (s, cs) = phi.sin_cos();
    let tan = phi.tan();
    if im.abs() <= tan * re {
        // inside the region
        lambda_hat
    } else if re <= -tan * im.abs() {
        // behind the apex
        C64::new(t, 0.0)
    } else if im > 0.0 {
        C64::new(
            lambda_hat.re * cs * cs + im * cs * s + t * s * s,
            re * cs * s + im * s * s,
        )
    } else {
        C64::new(
            lambda_hat.re * cs * cs - im * cs * s + t * s * s,
            -re * cs * s + im * s * s,
        )
    }
}

/// `λ_{k,n} = proj(λ̂_{k,n})` with `λ̂_n = H_n x[n] ⊙ s_n*`.
pub fn update_lambda(p: &Problem, x: &DMatrix<C64>) -> DMatrix<C64> {
    let (k, n) = p.symbols.shape();
    let mut lambda = DMatrix::zeros(k, n);
    for col in 0..n {
        let hx = &p.channels[col] * x.column(col);
        for row in 0..k {
            let hat = hx[row] * p.symbols[(row, col)].conj();
            lambda[(row, col)] = project_lambda(hat, p.thresholds[row], p.phi);
        }
    }
    lambda
}

/// True when `λ` satisfies the constructive-region constraint to `tol`.
pub fn in_constructive_region(lambda: C64, t: f64, phi: f64, tol: f64) -> bool {
    lambda.im.abs() <= phi.tan() * (lambda.re - t) + tol
}

/// Minimum-norm solution of `H_n x[n] = Γ ⊙ s_n`, the centre of every
/// constructive region; the instance is feasible whenever its power fits
/// the budget.
pub fn zero_forcing(p: &Problem) -> Result<DMatrix<C64>> {
    let mut x = DMatrix::zeros(p.antennas(), p.subcarriers());
    for col in 0..p.subcarriers() {
        let h = &p.channels[col];
        let target = DVector::from_fn(p.users(), |k, _| p.symbols[(k, col)] * p.thresholds[k]);
        let sol = (h * h.adjoint())
            .lu()
            .solve(&target)
            .ok_or_else(|| Error::Numerical("zero-forcing: singular channel".into()))?;
        x.set_column(col, &(h.adjoint() * sol));
    }
    Ok(x)
}

/// Initial `(X, Λ)` of the requested kind, at full power.
pub fn initial_point(p: &Problem, mode: InitMode, seed: u64) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    let (m, n) = (p.antennas(), p.subcarriers());
    let x = match mode {
        InitMode::MatchedBeam => {
            let col = p.steering.map(|v| v.conj()) * c((p.power_budget / (m * n) as f64).sqrt());
            DMatrix::from_fn(m, n, |r, _| col[r])
        }
        InitMode::ZeroForcing => {
            let mut x = zero_forcing(p)?;
            let power = x.norm_squared();
            if power > p.power_budget {
                x *= c((p.power_budget / power).sqrt());
            }
            x
        }
        InitMode::Random => {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let x = complex_gaussian_matrix(&mut rng, m, n, 1.0);
            let power = x.norm_squared();
            x * c((p.power_budget / power).sqrt())
        }
    };
    let lambda = update_lambda(p, &x);
    Ok((x, lambda))
}

fn monotone_slack(value: f64) -> f64 {
    1e-12 * (1.0 + value.abs())
}

/// Cyclic `y → X → Λ` updates at fixed `ϱ` until the relative objective
/// change drops below `bcd_tol` or `max_bcd` iterations elapse.
pub fn bcd_solve(
    p: &Problem,
    opts: &SolverOptions,
    varrho: f64,
    start: (&DMatrix<C64>, &DMatrix<C64>),
) -> Result<BcdRun> {
    let mut x = start.0.clone();
    let mut lambda = start.1.clone();
    let mut y = update_y(p, &x)?;
    let initial_objective = objective_13a(p, &x, &lambda, &y, varrho);
    let mut prev = initial_objective;
    let mut trace = Vec::new();
    let mut records = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    let check = |stage: &str, before: f64, after: f64, it: usize| -> Result<()> {
        if after > before + monotone_slack(before) {
            return Err(Error::Invariant(format!(
                "objective increased in the {stage} update at iteration {it}: {before:e} -> {after:e}"
            )));
        }
        Ok(())
    };

    while iterations < opts.max_bcd {
        iterations += 1;
        y = update_y(p, &x)?;
        let after_y = objective_13a(p, &x, &lambda, &y, varrho);
        check("y", prev, after_y, iterations)?;
        let (penalty_after_y, rho_after_y) = if opts.record_iterations {
            (varrho * comm_residual(p, &x, &lambda).0, rho_objective(p, &x)?)
        } else {
            (f64::NAN, f64::NAN)
        };

        let xu = update_x(p, &y, &lambda, varrho, opts.eta_tol)?;
        x = xu.x;
        let after_x = objective_13a(p, &x, &lambda, &y, varrho);
        check("X", after_y, after_x, iterations)?;

        lambda = update_lambda(p, &x);
        let after_lambda = objective_13a(p, &x, &lambda, &y, varrho);
        check("lambda", after_x, after_lambda, iterations)?;

        if opts.record_iterations {
            records.push(IterationRecord {
                after_y,
                penalty_after_y,
                rho_after_y,
                after_x,
                after_lambda,
                eta: xu.eta,
            });
        }
        trace.push(after_lambda);
        let change = (prev - after_lambda).abs();
        prev = after_lambda;
        if change <= opts.bcd_tol * after_lambda.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    let y = update_y(p, &x)?;
    Ok(BcdRun {
        x,
        lambda,
        y,
        initial_objective,
        trace,
        records,
        iterations,
        converged,
    })
}

/// Quadratic-penalty outer loop: run BCD, stop once the equality residual
/// is within `eps_p · min_k Γ_k`, otherwise grow `ϱ` by `c_varrho` and warm
/// start the next BCD run.
pub fn penalty_solve(p: &Problem, opts: &SolverOptions) -> Result<PrecodeSolution> {
    opts.validate()?;
    let scales = p.scales();
    let q = p.normalized(&scales);
    let (mut x, mut lambda) = initial_point(&q, opts.init_mode, opts.seed)?;
    let mut varrho = opts.varrho0;
    let mut outer = Vec::new();
    let mut last: Option<BcdRun> = None;
    let mut feasible = false;
    for _ in 0..opts.max_outer {
        let run = bcd_solve(&q, opts, varrho, (&x, &lambda))?;
        let (_, residual) = comm_residual(&q, &run.x, &run.lambda);
        outer.push(OuterRecord {
            varrho: scales.varrho(varrho),
            iterations: run.iterations,
            converged: run.converged,
            residual: residual * scales.lambda,
            trace: run.trace.iter().map(|v| v * scales.objective).collect(),
            records: run
                .records
                .iter()
                .map(|r| IterationRecord {
                    after_y: r.after_y * scales.objective,
                    penalty_after_y: r.penalty_after_y * scales.objective,
                    rho_after_y: r.rho_after_y * scales.objective,
                    after_x: r.after_x * scales.objective,
                    after_lambda: r.after_lambda * scales.objective,
                    eta: r.eta * scales.objective / scales.amplitude.powi(2),
                })
                .collect(),
        });
        x = run.x.clone();
        lambda = run.lambda.clone();
        last = Some(run);
        if residual <= opts.eps_p {
            feasible = true;
            break;
        }
        varrho *= opts.c_varrho;
    }
    let run = last.expect("max_outer >= 1");
    let x_phys = &run.x * c(scales.amplitude);
    let lambda_phys = &run.lambda * c(scales.lambda);
    let y_phys = &run.y * c(scales.amplitude / scales.noise);
    let (_, residual) = comm_residual(p, &x_phys, &lambda_phys);
    let rho_value = rho_objective(p, &x_phys)?;
    let solution = PrecodeSolution {
        objective_trace: outer.last().map(|o| o.trace.clone()).unwrap_or_default(),
        final_varrho: outer.last().map(|o| o.varrho).unwrap_or(0.0),
        x: x_phys,
        lambda: lambda_phys,
        y: y_phys,
        outer,
        feasibility_residual: residual,
        rho_value,
        feasible,
    };
    verify_solution(p, &solution, opts)?;
    Ok(solution)
}

/// Post-hoc check of the power budget and constructive-region membership;
/// a solution flagged feasible must also meet the residual tolerance.
pub fn verify_solution(p: &Problem, s: &PrecodeSolution, opts: &SolverOptions) -> Result<()> {
    let power = s.x.norm_squared();
    if power > p.power_budget * (1.0 + 1e-9) {
        return Err(Error::Invariant(format!(
            "power {power:e} exceeds budget {:e}",
            p.power_budget
        )));
    }
    for ((row, _), l) in s
        .lambda
        .iter()
        .enumerate()
        .map(|(i, v)| ((i % p.users(), i / p.users()), v))
    {
        let t = p.thresholds[row];
        if !in_constructive_region(*l, t, p.phi, 1e-9 * t.max(f64::MIN_POSITIVE)) {
            return Err(Error::Invariant(format!(
                "slack {l} outside the constructive region (t = {t:e})"
            )));
        }
    }
    let gamma_min = p
        .thresholds
        .iter()
        .copied()
        .filter(|t| *t > 0.0)
        .fold(f64::INFINITY, f64::min);
    let gamma_min = if gamma_min.is_finite() { gamma_min } else { 1.0 };
    if s.feasible && s.feasibility_residual > opts.eps_p * gamma_min * (1.0 + 1e-9) {
        return Err(Error::Invariant(format!(
            "flagged feasible with residual {:e}",
            s.feasibility_residual
        )));
    }
    Ok(())
}

/// `Ã` in the shifted domain, used by the validation suite: `X F I_{n_t}`.
pub fn shifted_transmit(p: &Problem, x: &DMatrix<C64>) -> DMatrix<C64> {
    shift_columns(&(x * &p.dft), p.delay)
}
