//! OFDM/MIMO signal model: steering vectors, the unitary conjugate DFT,
//! delay operators, channel/symbol samplers and radar echo synthesis.
//!
//! Matrices are column-major and `vec` stacks columns, so the Kronecker
//! identity `vec(A X B) = (B^T ⊗ A) vec(X)` holds as written everywhere.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::C64;

/// How the dB value of the reference path term `C0` maps to a linear factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GainConvention {
    /// `10^(C0/20)`, an amplitude gain.
    Amplitude,
    /// `10^(C0/10)`, a power gain.
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaPhase {
    Zero,
    Random,
}

/// Frequency-selectivity model for the downlink channels.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelModel {
    /// Independent Rayleigh draws per subcarrier.
    Iid,
    /// Tapped delay line with an exponential power-delay profile
    /// (`taps` taps, power ratio `decay` between consecutive taps).
    Tdl { taps: usize, decay: f64 },
}

/// Scenario constants. All powers and variances are linear watts.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SystemConfig {
    pub antennas: usize,
    pub users: usize,
    pub subcarriers: usize,
    /// Subcarrier spacing (Hz).
    pub subcarrier_spacing: f64,
    pub tx_power: f64,
    pub comm_noise: f64,
    pub radar_noise: f64,
    pub si_variance: f64,
    /// Per-user SINR requirements (linear).
    pub sinr_targets: Vec<f64>,
    /// Constructive-region half-angle (rad).
    pub phi: f64,
    pub c0_db: f64,
    pub c0_convention: GainConvention,
    pub path_loss_exponent: f64,
    /// Target distance (m).
    pub target_distance: f64,
    /// Prior interval for the target DoA (rad).
    pub theta_min: f64,
    pub theta_max: f64,
    pub user_radius: f64,
    pub user_min_radius: f64,
    pub speed_of_light: f64,
    /// Antenna spacing over wavelength.
    pub spacing_ratio: f64,
    pub beta_phase: BetaPhase,
    pub channel_model: ChannelModel,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Domain(msg));
        if self.antennas == 0 || self.users == 0 || self.subcarriers == 0 {
            return fail("antenna, user and subcarrier counts must be positive".into());
        }
        if self.users > self.antennas {
            return fail(format!("users ({}) exceed antennas ({})", self.users, self.antennas));
        }
        if !self.subcarriers.is_power_of_two() {
            return fail(format!("subcarrier count {} is not a power of two", self.subcarriers));
        }
        for (name, v) in [
            ("tx_power", self.tx_power),
            ("comm_noise", self.comm_noise),
            ("radar_noise", self.radar_noise),
            ("subcarrier_spacing", self.subcarrier_spacing),
            ("speed_of_light", self.speed_of_light),
            ("spacing_ratio", self.spacing_ratio),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return fail(format!("{name} must be strictly positive, got {v}"));
            }
        }
        if !(self.si_variance >= 0.0) || !self.si_variance.is_finite() {
            return fail(format!("si_variance must be nonnegative, got {}", self.si_variance));
        }
        if self.sinr_targets.len() != self.users {
            return fail(format!(
                "{} SINR targets given for {} users",
                self.sinr_targets.len(),
                self.users
            ));
        }
        if self.sinr_targets.iter().any(|g| !(*g > 0.0)) {
            return fail("SINR targets must be positive".into());
        }
        if !(self.phi > 0.0 && self.phi < PI / 2.0) {
            return fail(format!("phi = {} must lie in (0, pi/2)", self.phi));
        }
        if !(self.theta_min <= self.theta_max) || self.theta_min.abs() >= PI / 2.0 || self.theta_max.abs() >= PI / 2.0 {
            return fail("DoA prior must be an ordered interval inside (-pi/2, pi/2)".into());
        }
        if !(self.user_min_radius >= 0.0 && self.user_min_radius < self.user_radius) {
            return fail("need 0 <= user_min_radius < user_radius".into());
        }
        if let ChannelModel::Tdl { taps, decay } = self.channel_model {
            if taps == 0 || !(decay > 0.0) {
                return fail("TDL needs at least one tap and a positive decay".into());
            }
        }
        Ok(())
    }

    /// OFDM sample duration `1 / (N Δf)`.
    pub fn symbol_duration(&self) -> f64 {
        1.0 / (self.subcarriers as f64 * self.subcarrier_spacing)
    }

    /// Constructive-region offsets `Γ_k = sqrt(γ_k σ_c²)`.
    pub fn thresholds(&self) -> Vec<f64> {
        self.sinr_targets.iter().map(|g| (g * self.comm_noise).sqrt()).collect()
    }

    pub fn ula(&self) -> Ula {
        Ula {
            antennas: self.antennas,
            spacing_ratio: self.spacing_ratio,
        }
    }

    /// Centre of the DoA prior, used as the nominal design direction.
    pub fn nominal_theta(&self) -> f64 {
        0.5 * (self.theta_min + self.theta_max)
    }

    /// Linear factor for `C0` under the configured convention.
    pub fn c0_linear(&self) -> f64 {
        match self.c0_convention {
            GainConvention::Amplitude => 10f64.powf(self.c0_db / 20.0),
            GainConvention::Power => 10f64.powf(self.c0_db / 10.0),
        }
    }
}

/// Uniform linear array geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ula {
    pub antennas: usize,
    pub spacing_ratio: f64,
}

impl Ula {
    pub fn steering(&self, theta: f64) -> Result<DVector<C64>> {
        steering_vector(theta, self.antennas, self.spacing_ratio)
    }
}

/// `a(θ)_m = exp(-j 2π (d/λ) m sin θ)`, `m = 0..M-1`.
pub fn steering_vector(theta: f64, antennas: usize, spacing_ratio: f64) -> Result<DVector<C64>> {
    if !(theta.abs() < PI / 2.0) {
        return Err(Error::Domain(format!("DoA {theta} rad outside (-pi/2, pi/2)")));
    }
    let step = -2.0 * PI * spacing_ratio * theta.sin();
    Ok(DVector::from_fn(antennas, |m, _| {
        if m == 0 {
            C64::new(1.0, 0.0)
        } else {
            C64::from_polar(1.0, step * m as f64)
        }
    }))
}

/// `a(θ) ⊗ a(θ)`.
pub fn extended_steering(theta: f64, antennas: usize, spacing_ratio: f64) -> Result<DVector<C64>> {
    let a = steering_vector(theta, antennas, spacing_ratio)?;
    Ok(a.kronecker(&a))
}

/// Unitary conjugate DFT: `F[m, n] = exp(+j 2π m n / N) / sqrt(N)`.
pub fn dft_matrix(n: usize) -> DMatrix<C64> {
    let scale = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |r, c| {
        // reduce the product mod N first so large N keeps full phase accuracy
        let k = (r * c) % n;
        C64::from_polar(scale, 2.0 * PI * k as f64 / n as f64)
    })
}

/// `I_{n_t}`: ones on the `n_t`-th subdiagonal.
pub fn delay_shift_matrix(n: usize, delay: usize) -> Result<DMatrix<f64>> {
    if delay >= n {
        return Err(Error::Domain(format!("delay {delay} >= window length {n}")));
    }
    Ok(DMatrix::from_fn(n, n, |r, c| if r == c + delay { 1.0 } else { 0.0 }))
}

/// `I_{n_t} v`: delays a length-N sequence by `delay` samples, zero-filled.
pub fn delay_samples(v: &DVector<C64>, delay: usize) -> DVector<C64> {
    let n = v.len();
    DVector::from_fn(n, |i, _| if i >= delay { v[i - delay] } else { C64::new(0.0, 0.0) })
}

/// `A I_{n_t}`: column `j` of the result is column `j + delay` of `A`, with
/// the last `delay` columns zero.
pub fn shift_columns(a: &DMatrix<C64>, delay: usize) -> DMatrix<C64> {
    let (rows, n) = a.shape();
    let mut out = DMatrix::zeros(rows, n);
    for j in 0..n.saturating_sub(delay) {
        out.set_column(j, &a.column(j + delay));
    }
    out
}

/// `n_t = floor((2 d / v_c) N Δf)`.
pub fn normalized_delay(distance: f64, cfg: &SystemConfig) -> Result<usize> {
    if !(distance >= 0.0) {
        return Err(Error::Domain(format!("target distance {distance} must be >= 0")));
    }
    let tau = 2.0 * distance / cfg.speed_of_light;
    let nt = (tau / cfg.symbol_duration()).floor();
    if nt >= cfg.subcarriers as f64 {
        return Err(Error::Domain(format!(
            "target at {distance} m gives delay {nt} samples, not below N = {}",
            cfg.subcarriers
        )));
    }
    Ok(nt as usize)
}

/// Round-trip attenuation `β = (C0 d^{-α})²`, with a uniform phase when the
/// configuration asks for one.
pub fn attenuation<R: Rng + ?Sized>(distance: f64, cfg: &SystemConfig, rng: &mut R) -> Result<C64> {
    let magnitude = attenuation_magnitude(distance, cfg)?;
    let phase = match cfg.beta_phase {
        BetaPhase::Zero => 0.0,
        BetaPhase::Random => rng.random::<f64>() * 2.0 * PI,
    };
    Ok(C64::from_polar(magnitude, phase))
}

pub fn attenuation_magnitude(distance: f64, cfg: &SystemConfig) -> Result<f64> {
    if !(distance >= 1.0) {
        return Err(Error::Domain(format!(
            "target distance {distance} m is inside the 1 m reference distance"
        )));
    }
    Ok((cfg.c0_linear() * distance.powf(-cfg.path_loss_exponent)).powi(2))
}

/// Large-scale power gain `10^{-(140.7 + 36.7 log10(d_km))/10}`.
pub fn path_gain(distance_m: f64) -> f64 {
    let loss_db = 140.7 + 36.7 * (distance_m / 1000.0).log10();
    10f64.powf(-loss_db / 10.0)
}

/// Circular complex Gaussian with `E|z|^2 = variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(s * re, s * im)
}

pub fn complex_gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, variance: f64) -> DMatrix<C64> {
    // filled column by column so the draw order is the storage order
    let mut m = DMatrix::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            m[(r, c)] = complex_gaussian(rng, variance);
        }
    }
    m
}

/// One draw of the downlink and residual-SI channels.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// Per-subcarrier downlink channels, each `K x M`.
    pub downlink: Vec<DMatrix<C64>>,
    /// Residual SI channel, `M x M`.
    pub si: DMatrix<C64>,
    pub user_distances: Vec<f64>,
}

pub fn sample_channels<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> ChannelRealization {
    let (m, k, n) = (cfg.antennas, cfg.users, cfg.subcarriers);
    let r0sq = cfg.user_min_radius * cfg.user_min_radius;
    let r1sq = cfg.user_radius * cfg.user_radius;
    let user_distances: Vec<f64> = (0..k)
        .map(|_| (r0sq + rng.random::<f64>() * (r1sq - r0sq)).sqrt())
        .collect();
    let gains: Vec<f64> = user_distances.iter().map(|&d| path_gain(d)).collect();

    let downlink = match cfg.channel_model {
        ChannelModel::Iid => (0..n)
            .map(|_| {
                let mut h = complex_gaussian_matrix(rng, k, m, 1.0);
                for (row, g) in gains.iter().enumerate() {
                    h.row_mut(row).scale_mut(g.sqrt());
                }
                h
            })
            .collect(),
        ChannelModel::Tdl { taps, decay } => {
            let norm: f64 = (0..taps).map(|l| decay.powi(l as i32)).sum();
            let tap_mats: Vec<DMatrix<C64>> = (0..taps)
                .map(|l| {
                    let mut h = complex_gaussian_matrix(rng, k, m, decay.powi(l as i32) / norm);
                    for (row, g) in gains.iter().enumerate() {
                        h.row_mut(row).scale_mut(g.sqrt());
                    }
                    h
                })
                .collect();
            (0..n)
                .map(|sc| {
                    let mut h = DMatrix::zeros(k, m);
                    for (l, tap) in tap_mats.iter().enumerate() {
                        let w = C64::from_polar(1.0, -2.0 * PI * ((sc * l) % n) as f64 / n as f64);
                        h += tap * w;
                    }
                    h
                })
                .collect()
        }
    };
    let si = complex_gaussian_matrix(rng, m, m, cfg.si_variance);
    ChannelRealization {
        downlink,
        si,
        user_distances,
    }
}

/// Unit-modulus PSK symbols, `K x N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlock {
    pub symbols: DMatrix<C64>,
}

/// Alphabet of the PSK constellation whose constructive half-angle is `phi`
/// (`phi = π/4` gives QPSK at odd multiples of `π/4`).
pub fn psk_alphabet(phi: f64) -> Vec<C64> {
    let order = (PI / phi).round() as usize;
    (0..order)
        .map(|i| C64::from_polar(1.0, PI / order as f64 + 2.0 * PI * i as f64 / order as f64))
        .collect()
}

pub fn sample_symbols<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> SymbolBlock {
    let alphabet = psk_alphabet(cfg.phi);
    let mut s = DMatrix::zeros(cfg.users, cfg.subcarriers);
    for c in 0..cfg.subcarriers {
        for r in 0..cfg.users {
            s[(r, c)] = alphabet[rng.random_range(0..alphabet.len())];
        }
    }
    SymbolBlock { symbols: s }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    /// H0: no target, beta forced to zero.
    Absent,
    /// H1: target present.
    Present,
}

/// Parameters of one radar echo.
#[derive(Debug, Clone)]
pub struct EchoParams<'a> {
    pub beta: C64,
    pub theta: f64,
    pub delay: usize,
    pub si: &'a DMatrix<C64>,
    pub radar_noise: f64,
    pub spacing_ratio: f64,
    pub hypothesis: Hypothesis,
}

#[derive(Debug, Clone)]
pub struct RadarSnapshot {
    /// `M x N` receive block starting at the target delay.
    pub received: DMatrix<C64>,
    pub delay: usize,
    pub beta: C64,
}

/// `Y_s = β a aᵀ X F + H_SI X F I_{n_t} + Z_s`.
pub fn synthesize_radar_rx<R: Rng + ?Sized>(
    x: &DMatrix<C64>,
    params: &EchoParams<'_>,
    rng: &mut R,
) -> Result<RadarSnapshot> {
    let (m, n) = x.shape();
    if params.si.shape() != (m, m) {
        return Err(Error::Structural(format!(
            "SI channel is {:?}, precoder has {m} antennas",
            params.si.shape()
        )));
    }
    if params.delay >= n {
        return Err(Error::Domain(format!("delay {} >= N = {n}", params.delay)));
    }
    let xf = x * dft_matrix(n);
    let beta = match params.hypothesis {
        Hypothesis::Absent => C64::new(0.0, 0.0),
        Hypothesis::Present => params.beta,
    };
    let a = steering_vector(params.theta, m, params.spacing_ratio)?;
    let target_row = a.transpose() * &xf;
    let mut y = (&a * target_row) * beta;
    y += params.si * shift_columns(&xf, params.delay);
    if params.radar_noise > 0.0 {
        y += complex_gaussian_matrix(rng, m, n, params.radar_noise);
    }
    Ok(RadarSnapshot {
        received: y,
        delay: params.delay,
        beta,
    })
}

/// `y_c[n] = H_n x[n] + z_c[n]`.
pub fn comm_rx<R: Rng + ?Sized>(
    h: &DMatrix<C64>,
    x: &DVector<C64>,
    comm_noise: f64,
    rng: &mut R,
) -> Result<DVector<C64>> {
    if h.ncols() != x.len() {
        return Err(Error::Structural(format!(
            "channel has {} columns, precoder column has {} entries",
            h.ncols(),
            x.len()
        )));
    }
    let mut y = h * x;
    if comm_noise > 0.0 {
        for v in y.iter_mut() {
            *v += complex_gaussian(rng, comm_noise);
        }
    }
    Ok(y)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    pub(crate) fn test_config() -> SystemConfig {
        SystemConfig {
            antennas: 4,
            users: 2,
            subcarriers: 8,
            subcarrier_spacing: 120e3,
            tx_power: 1.0,
            comm_noise: 1e-12,
            radar_noise: 1e-12,
            si_variance: 1e-11,
            sinr_targets: vec![10.0; 2],
            phi: PI / 4.0,
            c0_db: 20.0,
            c0_convention: GainConvention::Amplitude,
            path_loss_exponent: 2.0,
            target_distance: 1000.0,
            theta_min: 29f64.to_radians(),
            theta_max: 31f64.to_radians(),
            user_radius: 100.0,
            user_min_radius: 1.0,
            speed_of_light: 299_792_458.0,
            spacing_ratio: 0.5,
            beta_phase: BetaPhase::Zero,
            channel_model: ChannelModel::Iid,
        }
    }

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn steering_examples() {
        let a = steering_vector(0.0, 4, 0.5).unwrap();
        assert!(a.iter().all(|v| close(*v, C64::new(1.0, 0.0), 0.0)));
        let a = steering_vector(30f64.to_radians(), 2, 0.5).unwrap();
        assert_eq!(a[0], C64::new(1.0, 0.0));
        assert!(close(a[1], C64::new(0.0, -1.0), 1e-15));
        assert!(steering_vector(PI / 2.0, 4, 0.5).is_err());
    }

    #[test]
    fn steering_norm_on_degree_grid() {
        for deg in -89..=89 {
            let a = steering_vector((deg as f64).to_radians(), 16, 0.5).unwrap();
            assert!((a.norm_squared() - 16.0).abs() < 1e-12);
        }
    }

    #[test]
    fn extended_steering_examples() {
        let e = extended_steering(0.0, 2, 0.5).unwrap();
        assert!(e.iter().all(|v| close(*v, C64::new(1.0, 0.0), 0.0)));
        let e = extended_steering(30f64.to_radians(), 2, 0.5).unwrap();
        let want = [
            C64::new(1.0, 0.0),
            C64::new(0.0, -1.0),
            C64::new(0.0, -1.0),
            C64::new(-1.0, 0.0),
        ];
        for (g, w) in e.iter().zip(want) {
            assert!(close(*g, w, 1e-15));
        }
        let e = extended_steering(0.4, 5, 0.5).unwrap();
        assert!((e.norm_squared() - 25.0).abs() < 1e-11);
    }

    #[test]
    fn dft_examples_and_unitarity() {
        assert!(close(dft_matrix(1)[(0, 0)], C64::new(1.0, 0.0), 0.0));
        let f2 = dft_matrix(2);
        let s = 1.0 / 2f64.sqrt();
        assert!(close(f2[(1, 1)], C64::new(-s, 0.0), 1e-15));
        assert!(close(f2[(0, 1)], C64::new(s, 0.0), 1e-15));
        let mut n = 1;
        while n <= 512 {
            let f = dft_matrix(n);
            let err = (&f * f.adjoint() - DMatrix::<C64>::identity(n, n)).camax();
            assert!(err <= 1e-12, "N={n} err={err}");
            n *= 2;
        }
        // conjugate of the forward DFT: positive exponent
        let f4 = dft_matrix(4);
        assert!(close(f4[(1, 1)], C64::new(0.0, 0.5), 1e-15));
    }

    #[test]
    fn delay_shift_examples() {
        let i0 = delay_shift_matrix(5, 0).unwrap();
        assert_eq!(i0, DMatrix::identity(5, 5));
        let i1 = delay_shift_matrix(3, 1).unwrap();
        assert_eq!(i1[(1, 0)], 1.0);
        assert_eq!(i1[(2, 1)], 1.0);
        assert_eq!(i1.sum(), 2.0);
        let s = delay_shift_matrix(7, 3).unwrap();
        let g = s.transpose() * &s;
        assert_eq!(g.sum(), 4.0);
        assert!(g.iter().all(|v| *v == 0.0 || *v == 1.0));
        assert!(delay_shift_matrix(4, 4).is_err());
    }

    #[test]
    fn shift_helpers_match_matrix_products() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for n in [1usize, 2, 5, 16] {
            for delay in 0..n {
                let x = complex_gaussian_matrix(&mut rng, 3, n, 1.0);
                let xf = &x * dft_matrix(n);
                let shift = delay_shift_matrix(n, delay).unwrap().map(|v| C64::new(v, 0.0));
                let direct = &xf * &shift;
                assert!((shift_columns(&xf, delay) - &direct).camax() < 1e-14);
                // column-shifted with zero fill
                for j in 0..n {
                    for r in 0..3 {
                        let want = if j + delay < n {
                            xf[(r, j + delay)]
                        } else {
                            C64::new(0.0, 0.0)
                        };
                        assert_eq!(direct[(r, j)], want);
                    }
                }
                let v = complex_gaussian_matrix(&mut rng, n, 1, 1.0).column(0).into_owned();
                assert!((delay_samples(&v, delay) - &shift * &v).camax() < 1e-15);
            }
        }
    }

    #[test]
    fn delay_examples() {
        let mut cfg = test_config();
        cfg.subcarriers = 256;
        assert_eq!(normalized_delay(0.0, &cfg).unwrap(), 0);
        assert_eq!(normalized_delay(1000.0, &cfg).unwrap(), 204);
        assert_eq!(normalized_delay(10.0, &cfg).unwrap(), 2);
        let err = normalized_delay(2000.0, &cfg).unwrap_err();
        assert!(err.to_string().contains("2000"));
    }

    #[test]
    fn attenuation_examples() {
        let cfg = test_config();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let b1 = attenuation(1.0, &cfg, &mut rng).unwrap();
        assert!((b1.re - cfg.c0_linear().powi(2)).abs() < 1e-12 && b1.im == 0.0);
        let r = attenuation_magnitude(400.0, &cfg).unwrap() / attenuation_magnitude(200.0, &cfg).unwrap();
        assert!((r - 2f64.powf(-2.0 * cfg.path_loss_exponent)).abs() < 1e-15);
        let b = attenuation_magnitude(1000.0, &cfg).unwrap();
        assert!((b - 1e-10).abs() < 1e-22);
        assert!(attenuation(0.5, &cfg, &mut rng).is_err());
        let mut power = cfg.clone();
        power.c0_convention = GainConvention::Power;
        assert!((power.c0_linear() - 100.0).abs() < 1e-12);
        let mut random = cfg.clone();
        random.beta_phase = BetaPhase::Random;
        let b = attenuation(1000.0, &random, &mut rng).unwrap();
        assert!((b.norm() - 1e-10).abs() < 1e-22);
    }

    #[test]
    fn zero_si_variance_gives_zero_channel() {
        let mut cfg = test_config();
        cfg.si_variance = 0.0;
        let ch = sample_channels(&cfg, &mut ChaCha20Rng::seed_from_u64(1));
        assert!(ch.si.iter().all(|v| *v == C64::new(0.0, 0.0)));
    }

    #[test]
    fn channel_shapes_and_si_moment() {
        let cfg = test_config();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let mut acc = 0.0;
        let mut count = 0usize;
        while count < 100_000 {
            let ch = sample_channels(&cfg, &mut rng);
            assert_eq!(ch.downlink.len(), cfg.subcarriers);
            assert!(ch.downlink.iter().all(|h| h.shape() == (2, 4)));
            assert_eq!(ch.si.shape(), (4, 4));
            assert!(ch.user_distances.iter().all(|d| *d >= 1.0 && *d <= 100.0));
            acc += ch.si.iter().map(|v| v.norm_sqr()).sum::<f64>();
            count += 16;
        }
        let mean = acc / count as f64;
        assert!((mean / cfg.si_variance - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn downlink_power_follows_path_loss() {
        let mut cfg = test_config();
        cfg.user_min_radius = 99.999_999;
        cfg.users = 1;
        cfg.sinr_targets = vec![10.0];
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut acc = 0.0;
        let mut count = 0usize;
        while count < 100_000 {
            let ch = sample_channels(&cfg, &mut rng);
            for h in &ch.downlink {
                acc += h.iter().map(|v| v.norm_sqr()).sum::<f64>();
                count += h.len();
            }
        }
        let want = 10f64.powf(-(140.7 + 36.7 * 0.1f64.log10()) / 10.0);
        assert!((acc / count as f64 / want - 1.0).abs() < 0.03);
    }

    #[test]
    fn tdl_channels_have_same_average_power() {
        let mut cfg = test_config();
        cfg.user_min_radius = 99.999_999;
        cfg.channel_model = ChannelModel::Tdl { taps: 4, decay: 0.5 };
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let mut acc = 0.0;
        let mut count = 0usize;
        for _ in 0..3000 {
            let ch = sample_channels(&cfg, &mut rng);
            for h in &ch.downlink {
                acc += h.iter().map(|v| v.norm_sqr()).sum::<f64>();
                count += h.len();
            }
        }
        let want = path_gain(100.0);
        assert!((acc / count as f64 / want - 1.0).abs() < 0.05);
    }

    #[test]
    fn symbols_are_qpsk_and_uniform() {
        let mut cfg = test_config();
        cfg.users = 4;
        cfg.subcarriers = 256;
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let alphabet = psk_alphabet(cfg.phi);
        assert_eq!(alphabet.len(), 4);
        assert!(close(alphabet[0], C64::from_polar(1.0, PI / 4.0), 1e-15));
        let mut counts = [0usize; 4];
        let mut total = 0;
        while total < 100_000 {
            let s = sample_symbols(&cfg, &mut rng);
            for v in s.symbols.iter() {
                assert!((v.norm() - 1.0).abs() < 1e-15);
                let idx = alphabet.iter().position(|a| close(*a, *v, 1e-12)).unwrap();
                counts[idx] += 1;
                total += 1;
            }
        }
        for c in counts {
            assert!((c as f64 / total as f64 - 0.25).abs() < 0.02 * 0.25);
        }
        let again = sample_symbols(&cfg, &mut ChaCha20Rng::seed_from_u64(4));
        assert_eq!(again, sample_symbols(&cfg, &mut ChaCha20Rng::seed_from_u64(4)));
    }

    #[test]
    fn samplers_are_seed_deterministic() {
        let cfg = test_config();
        let a = sample_channels(&cfg, &mut ChaCha20Rng::seed_from_u64(9));
        let b = sample_channels(&cfg, &mut ChaCha20Rng::seed_from_u64(9));
        assert_eq!(a.si, b.si);
        assert_eq!(a.downlink, b.downlink);
        assert_eq!(a.user_distances, b.user_distances);
    }

    #[test]
    fn radar_synthesis_cases() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let x = complex_gaussian_matrix(&mut rng, 4, 8, 1.0);
        let zero_si = DMatrix::zeros(4, 4);
        let mut params = EchoParams {
            beta: C64::new(0.0, 0.0),
            theta: 0.0,
            delay: 2,
            si: &zero_si,
            radar_noise: 0.0,
            spacing_ratio: 0.5,
            hypothesis: Hypothesis::Present,
        };
        let y = synthesize_radar_rx(&x, &params, &mut rng).unwrap();
        assert_eq!(y.received.camax(), 0.0);

        params.beta = C64::new(1.0, 0.0);
        let y = synthesize_radar_rx(&x, &params, &mut rng).unwrap();
        let sv = y.received.singular_values();
        assert!(sv[1] <= 1e-12 * sv[0], "rank > 1: {sv}");

        params.hypothesis = Hypothesis::Absent;
        let y = synthesize_radar_rx(&x, &params, &mut rng).unwrap();
        assert_eq!(y.received.camax(), 0.0);

        let si = complex_gaussian_matrix(&mut rng, 4, 4, 1e-3);
        let full = EchoParams {
            beta: C64::new(0.3, 0.1),
            theta: 0.5,
            delay: 3,
            si: &si,
            radar_noise: 0.1,
            spacing_ratio: 0.5,
            hypothesis: Hypothesis::Present,
        };
        let a = synthesize_radar_rx(&x, &full, &mut ChaCha20Rng::seed_from_u64(77)).unwrap();
        let b = synthesize_radar_rx(&x, &full, &mut ChaCha20Rng::seed_from_u64(77)).unwrap();
        assert_eq!(a.received, b.received);

        let bad_si = DMatrix::zeros(3, 3);
        let bad = EchoParams {
            si: &bad_si,
            ..full.clone()
        };
        assert!(matches!(
            synthesize_radar_rx(&x, &bad, &mut rng),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn comm_rx_cases() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let h = complex_gaussian_matrix(&mut rng, 2, 4, 1.0);
        let zero = DVector::zeros(4);
        assert_eq!(comm_rx(&h, &zero, 0.0, &mut rng).unwrap().camax(), 0.0);
        let x = complex_gaussian_matrix(&mut rng, 4, 1, 1.0).column(0).into_owned();
        assert_eq!(comm_rx(&h, &x, 0.0, &mut rng).unwrap(), &h * &x);
        assert!(comm_rx(&h, &DVector::zeros(3), 0.0, &mut rng).is_err());
        let mut acc = 0.0;
        let draws = 50_000;
        for _ in 0..draws {
            let y = comm_rx(&h, &zero, 0.25, &mut rng).unwrap();
            acc += y.norm_squared();
        }
        assert!((acc / (2 * draws) as f64 / 0.25 - 1.0).abs() < 0.02);
    }
}
