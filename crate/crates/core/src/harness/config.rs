//! Experiment specification and the `key = value` configuration format.
//!
//! ```text
//! # comments run to end of line
//! system.antennas   = 8
//! system.tx_power   = 30 dBm
//! system.theta_min  = 29 deg
//! solver.bcd_tol    = 1e-7
//! experiment.pfa_grid = 0.05, 0.1, 0.2, 0.5
//! ```
//!
//! Keys are listed in [`KEYS`]. Power-like values accept `dBm`, `mW` or `W`
//! (bare numbers are watts), angles `deg` or `rad` (bare numbers are
//! degrees), frequencies `Hz`, `kHz`, `MHz`, distances `m` or `km`, and
//! ratios `dB` or a bare linear value.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::signal_model::{normalized_delay, BetaPhase, ChannelModel, GainConvention, SystemConfig};
use crate::solver::{InitMode, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// SI-aware design, evaluated with SI.
    Proposed,
    /// SI-free design in an SI-free world.
    Wosi,
    /// SI-blind design, evaluated with SI.
    Wisi,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Proposed, Scheme::Wosi, Scheme::Wisi];

    pub fn tag(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Wosi => "wosi",
            Scheme::Wisi => "wisi",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.tag() == s)
    }

    /// Whether the precoder is designed against the configured SI.
    pub fn designs_with_si(self) -> bool {
        self == Scheme::Proposed
    }

    /// Whether the SI is present when the design is evaluated.
    pub fn evaluates_with_si(self) -> bool {
        self != Scheme::Wosi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Roc,
    Sweep,
    Solve,
    Validate,
}

/// Direction search used for ROC statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RocSearch {
    /// Statistic evaluated at the true direction only.
    Point,
    /// Maximum over the prior grid.
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `M = 8, K = 2, N = 32`; minutes on a laptop.
    Desk,
    /// `M = 32, K = 8, N = 256`, 100 realizations, 10⁴ GLRT draws.
    Paper,
}

impl Profile {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "desk" => Some(Profile::Desk),
            "paper" => Some(Profile::Paper),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectorSettings {
    /// False-alarm probability of the distance sweep.
    pub p_fa: f64,
    pub roc_search: RocSearch,
    /// DoA grid spacing (rad).
    pub grid_step: f64,
    pub refine: bool,
    /// Also report detection rates at thresholds calibrated from the H0
    /// draws of the same run.
    pub calibrated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub experiment: ExperimentKind,
    pub config: SystemConfig,
    pub solver: SolverOptions,
    pub detector: DetectorSettings,
    pub schemes: Vec<Scheme>,
    /// Channel realizations.
    pub trials: usize,
    /// GLRT draws per realization and hypothesis.
    pub mc_glrt_trials: usize,
    pub pfa_grid: Vec<f64>,
    /// Target distances (m) of the sweep.
    pub distance_grid: Vec<f64>,
    pub seed: u64,
    pub output_path: Option<String>,
    /// Suppress generated receiver noise and SI (the receiver still whitens
    /// with the nominal noise level).
    pub noiseless: bool,
    /// Force `β = 0` in the H1 draws.
    pub beta_zero: bool,
    /// Gain on the Woodbury correction inside the validation suite; 1 is
    /// the correct solver.
    #[serde(skip)]
    pub woodbury_gain: f64,
}

fn dbm(v: f64) -> f64 {
    10f64.powf((v - 30.0) / 10.0)
}

fn db(v: f64) -> f64 {
    10f64.powf(v / 10.0)
}

impl ExperimentSpec {
    pub fn profile(profile: Profile, experiment: ExperimentKind) -> Self {
        let config = SystemConfig {
            antennas: 8,
            users: 2,
            subcarriers: 32,
            subcarrier_spacing: 120e3,
            tx_power: dbm(30.0),
            comm_noise: dbm(-90.0),
            radar_noise: dbm(-90.0),
            si_variance: dbm(-80.0),
            sinr_targets: vec![db(10.0); 2],
            phi: PI / 4.0,
            c0_db: 54.0,
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
        };
        let mut spec = Self {
            experiment,
            config,
            solver: SolverOptions::default(),
            detector: DetectorSettings {
                p_fa: 0.1,
                roc_search: RocSearch::Point,
                grid_step: 0.05f64.to_radians(),
                refine: true,
                calibrated: false,
            },
            schemes: Scheme::ALL.to_vec(),
            trials: 10,
            mc_glrt_trials: 2000,
            pfa_grid: vec![0.05, 0.1, 0.2, 0.5],
            distance_grid: vec![200.0, 500.0, 1000.0],
            seed: 1,
            output_path: None,
            noiseless: false,
            beta_zero: false,
            woodbury_gain: 1.0,
        };
        if profile == Profile::Paper {
            spec.config.antennas = 32;
            spec.config.users = 8;
            spec.config.subcarriers = 256;
            spec.config.sinr_targets = vec![db(10.0); 8];
            spec.config.c0_db = 20.0;
            spec.trials = 100;
            spec.mc_glrt_trials = 10_000;
            spec.pfa_grid = vec![0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9];
            spec.distance_grid = vec![200.0, 400.0, 600.0, 800.0, 1000.0];
        }
        spec
    }

    /// Checks every invariant; failures are configuration errors.
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::config(key, 0, msg));
        if let Err(e) = self.config.validate() {
            return bad("system", e.to_string());
        }
        if let Err(e) = self.solver.validate() {
            return bad("solver", e.to_string());
        }
        if self.trials == 0 {
            return bad("experiment.trials", "must be at least 1".into());
        }
        if self.trials > super::experiment::MAX_REALIZATIONS {
            return bad(
                "experiment.trials",
                format!("at most {}", super::experiment::MAX_REALIZATIONS),
            );
        }
        if self.mc_glrt_trials > super::experiment::MAX_DRAWS {
            return bad(
                "experiment.glrt_trials",
                format!("at most {}", super::experiment::MAX_DRAWS),
            );
        }
        if self.distance_grid.len() > 256 {
            return bad("experiment.distance_grid", "at most 256 points".into());
        }
        if self.mc_glrt_trials == 0 {
            return bad("experiment.glrt_trials", "must be at least 1".into());
        }
        if self.schemes.is_empty() {
            return bad("experiment.schemes", "no schemes selected".into());
        }
        check_grid("experiment.pfa_grid", &self.pfa_grid)?;
        if let Some(p) = self.pfa_grid.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return bad("experiment.pfa_grid", format!("{p} outside (0, 1)"));
        }
        check_grid("experiment.distance_grid", &self.distance_grid)?;
        if !(self.detector.p_fa > 0.0 && self.detector.p_fa < 1.0) {
            return bad("detector.p_fa", format!("{} outside (0, 1)", self.detector.p_fa));
        }
        if !(self.detector.grid_step > 0.0) {
            return bad("detector.grid_step", "must be positive".into());
        }
        let distances: Vec<f64> = match self.experiment {
            ExperimentKind::Sweep => self.distance_grid.clone(),
            _ => vec![self.config.target_distance],
        };
        for d in distances {
            if let Err(e) = normalized_delay(d, &self.config) {
                return bad("system.target_distance", e.to_string());
            }
            if d < 1.0 {
                return bad(
                    "system.target_distance",
                    format!("{d} m is inside the 1 m reference distance"),
                );
            }
        }
        Ok(())
    }
}

fn check_grid(key: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::config(key, 0, "grid is empty"));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::config(key, 0, "grid must be strictly ascending"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unit {
    Power,
    Angle,
    Frequency,
    Distance,
    Ratio,
    Decibel,
    Plain,
}

/// Every accepted key with its value kind and meaning.
pub const KEYS: &[(&str, &str)] = &[
    ("system.antennas", "M, transmit/receive antennas"),
    ("system.users", "K, downlink users (K <= M)"),
    ("system.subcarriers", "N, power of two"),
    ("system.subcarrier_spacing", "Hz | kHz | MHz"),
    ("system.tx_power", "P_T, dBm | mW | W"),
    ("system.comm_noise", "user noise variance, dBm | mW | W"),
    ("system.radar_noise", "radar receiver noise variance, dBm | mW | W"),
    ("system.si_variance", "residual SI channel variance, dBm | mW | W"),
    ("system.sinr_target", "per-user SINR requirement, dB | linear"),
    ("system.phi", "constructive-region half-angle, deg | rad"),
    ("system.c0", "reference path term at 1 m, dB"),
    ("system.c0_convention", "amplitude | power"),
    ("system.path_loss_exponent", "alpha"),
    ("system.target_distance", "m | km"),
    ("system.theta_min", "DoA prior lower end, deg | rad"),
    ("system.theta_max", "DoA prior upper end, deg | rad"),
    ("system.user_radius", "m | km"),
    ("system.user_min_radius", "m | km"),
    ("system.spacing_ratio", "antenna spacing over wavelength"),
    ("system.speed_of_light", "m/s"),
    ("system.beta_phase", "zero | random"),
    ("system.channel_model", "iid | tdl"),
    ("system.tdl_taps", "taps of the tdl model"),
    ("system.tdl_decay", "power ratio between consecutive taps, dB | linear"),
    ("solver.varrho0", "initial penalty weight (unit power budget)"),
    ("solver.c_varrho", "penalty growth factor (> 1)"),
    ("solver.eps_p", "feasibility tolerance relative to min Gamma_k"),
    ("solver.max_outer", "penalty iterations"),
    ("solver.bcd_tol", "relative objective change that ends a BCD run"),
    ("solver.max_bcd", "BCD iterations per penalty iteration"),
    ("solver.eta_tol", "power multiplier root-search tolerance"),
    ("solver.init", "matched_beam | zero_forcing | random"),
    ("detector.p_fa", "false-alarm probability of the sweep"),
    ("detector.roc_search", "point | grid"),
    ("detector.grid_step", "DoA grid spacing, deg | rad"),
    (
        "detector.refine",
        "golden-section polish of the grid maximum, true | false",
    ),
    (
        "detector.calibrated",
        "also report rates at empirical thresholds, true | false",
    ),
    ("experiment.trials", "channel realizations"),
    ("experiment.glrt_trials", "GLRT draws per realization and hypothesis"),
    ("experiment.pfa_grid", "comma-separated, ascending, in (0, 1)"),
    ("experiment.distance_grid", "comma-separated, ascending, m | km"),
    ("experiment.schemes", "comma-separated subset of proposed, wosi, wisi"),
    ("experiment.seed", "64-bit master seed"),
    ("experiment.output", "output path"),
    ("experiment.noiseless", "suppress generated noise and SI, true | false"),
    ("experiment.beta_zero", "force beta = 0 in H1 draws, true | false"),
];

fn unit_of(key: &str) -> Unit {
    match key {
        "system.tx_power" | "system.comm_noise" | "system.radar_noise" | "system.si_variance" => Unit::Power,
        "system.phi" | "system.theta_min" | "system.theta_max" | "detector.grid_step" => Unit::Angle,
        "system.subcarrier_spacing" => Unit::Frequency,
        "system.target_distance" | "system.user_radius" | "system.user_min_radius" | "experiment.distance_grid" => {
            Unit::Distance
        }
        "system.sinr_target" | "system.tdl_decay" => Unit::Ratio,
        "system.c0" => Unit::Decibel,
        _ => Unit::Plain,
    }
}

fn parse_quantity(key: &str, line: usize, raw: &str) -> Result<f64> {
    let raw = raw.trim();
    let split = raw
        .char_indices()
        .find(|(_, ch)| ch.is_ascii_alphabetic() && !matches!(ch, 'e' | 'E'))
        .map(|(i, _)| i);
    // "inf"/"nan" and exponents are handled by the numeric parse below
    let (num, unit) = match split {
        Some(i) => (raw[..i].trim(), raw[i..].trim()),
        None => (raw, ""),
    };
    let value: f64 = num
        .parse()
        .map_err(|_| Error::config(key, line, format!("cannot parse '{raw}' as a number")))?;
    if !value.is_finite() {
        return Err(Error::config(key, line, format!("'{raw}' is not finite")));
    }
    let wrong = || Error::config(key, line, format!("unit '{unit}' not accepted here"));
    let out = match (unit_of(key), unit) {
        (Unit::Angle, "") => value.to_radians(),
        (_, "") => value,
        (Unit::Power, "dBm") => dbm(value),
        (Unit::Power, "mW") => value * 1e-3,
        (Unit::Power, "W") => value,
        (Unit::Angle, "deg") => value.to_radians(),
        (Unit::Angle, "rad") => value,
        (Unit::Frequency, "Hz") => value,
        (Unit::Frequency, "kHz") => value * 1e3,
        (Unit::Frequency, "MHz") => value * 1e6,
        (Unit::Distance, "m") => value,
        (Unit::Distance, "km") => value * 1e3,
        (Unit::Ratio, "dB") => db(value),
        (Unit::Decibel, "dB") => value,
        _ => return Err(wrong()),
    };
    Ok(out)
}

fn parse_count(key: &str, line: usize, raw: &str) -> Result<usize> {
    raw.trim()
        .parse()
        .map_err(|_| Error::config(key, line, format!("'{raw}' is not a nonnegative integer")))
}

fn parse_bool(key: &str, line: usize, raw: &str) -> Result<bool> {
    match raw.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::config(key, line, format!("'{other}' is not a boolean"))),
    }
}

fn parse_list(key: &str, line: usize, raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_quantity(key, line, s))
        .collect()
}

/// Applies the assignments in `text` on top of `base` and validates.
pub fn parse_config(text: &str, mut spec: ExperimentSpec) -> Result<ExperimentSpec> {
    let mut seen = HashSet::new();
    let mut tdl: (Option<usize>, Option<f64>, Option<bool>) = (None, None, None);
    let mut sinr: Option<f64> = None;
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::config(content, line, "expected 'key = value'"))?;
        let key = key.trim();
        let value = value.trim();
        if !KEYS.iter().any(|(k, _)| *k == key) && key != "validate.woodbury_gain" {
            return Err(Error::config(key, line, "unknown key"));
        }
        if !seen.insert(key.to_string()) {
            return Err(Error::config(key, line, "key given twice"));
        }
        let q = || parse_quantity(key, line, value);
        let n = || parse_count(key, line, value);
        let b = || parse_bool(key, line, value);
        let choice = |opts: &[&str]| -> Result<String> {
            if opts.contains(&value) {
                Ok(value.to_string())
            } else {
                Err(Error::config(
                    key,
                    line,
                    format!("'{value}' is not one of {}", opts.join(", ")),
                ))
            }
        };
        let cfg = &mut spec.config;
        match key {
            "system.antennas" => cfg.antennas = n()?,
            "system.users" => cfg.users = n()?,
            "system.subcarriers" => cfg.subcarriers = n()?,
            "system.subcarrier_spacing" => cfg.subcarrier_spacing = q()?,
            "system.tx_power" => cfg.tx_power = q()?,
            "system.comm_noise" => cfg.comm_noise = q()?,
            "system.radar_noise" => cfg.radar_noise = q()?,
            "system.si_variance" => cfg.si_variance = q()?,
            "system.sinr_target" => sinr = Some(q()?),
            "system.phi" => cfg.phi = q()?,
            "system.c0" => cfg.c0_db = q()?,
            "system.c0_convention" => {
                cfg.c0_convention = match choice(&["amplitude", "power"])?.as_str() {
                    "amplitude" => GainConvention::Amplitude,
                    _ => GainConvention::Power,
                }
            }
            "system.path_loss_exponent" => cfg.path_loss_exponent = q()?,
            "system.target_distance" => cfg.target_distance = q()?,
            "system.theta_min" => cfg.theta_min = q()?,
            "system.theta_max" => cfg.theta_max = q()?,
            "system.user_radius" => cfg.user_radius = q()?,
            "system.user_min_radius" => cfg.user_min_radius = q()?,
            "system.spacing_ratio" => cfg.spacing_ratio = q()?,
            "system.speed_of_light" => cfg.speed_of_light = q()?,
            "system.beta_phase" => {
                cfg.beta_phase = match choice(&["zero", "random"])?.as_str() {
                    "zero" => BetaPhase::Zero,
                    _ => BetaPhase::Random,
                }
            }
            "system.channel_model" => tdl.2 = Some(choice(&["iid", "tdl"])? == "tdl"),
            "system.tdl_taps" => tdl.0 = Some(n()?),
            "system.tdl_decay" => tdl.1 = Some(q()?),
            "solver.varrho0" => spec.solver.varrho0 = q()?,
            "solver.c_varrho" => spec.solver.c_varrho = q()?,
            "solver.eps_p" => spec.solver.eps_p = q()?,
            "solver.max_outer" => spec.solver.max_outer = n()?,
            "solver.bcd_tol" => spec.solver.bcd_tol = q()?,
            "solver.max_bcd" => spec.solver.max_bcd = n()?,
            "solver.eta_tol" => spec.solver.eta_tol = q()?,
            "solver.init" => {
                spec.solver.init_mode = match choice(&["matched_beam", "zero_forcing", "random"])?.as_str() {
                    "matched_beam" => InitMode::MatchedBeam,
                    "zero_forcing" => InitMode::ZeroForcing,
                    _ => InitMode::Random,
                }
            }
            "detector.p_fa" => spec.detector.p_fa = q()?,
            "detector.roc_search" => {
                spec.detector.roc_search = match choice(&["point", "grid"])?.as_str() {
                    "point" => RocSearch::Point,
                    _ => RocSearch::Grid,
                }
            }
            "detector.grid_step" => spec.detector.grid_step = q()?,
            "detector.refine" => spec.detector.refine = b()?,
            "detector.calibrated" => spec.detector.calibrated = b()?,
            "experiment.trials" => spec.trials = n()?,
            "experiment.glrt_trials" => spec.mc_glrt_trials = n()?,
            "experiment.pfa_grid" => spec.pfa_grid = parse_list(key, line, value)?,
            "experiment.distance_grid" => spec.distance_grid = parse_list(key, line, value)?,
            "experiment.schemes" => {
                let mut schemes = Vec::new();
                for s in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let scheme =
                        Scheme::parse(s).ok_or_else(|| Error::config(key, line, format!("unknown scheme '{s}'")))?;
                    if !schemes.contains(&scheme) {
                        schemes.push(scheme);
                    }
                }
                schemes.sort();
                spec.schemes = schemes;
            }
            "experiment.seed" => {
                spec.seed = value
                    .parse()
                    .map_err(|_| Error::config(key, line, format!("'{value}' is not a 64-bit unsigned integer")))?
            }
            "experiment.output" => spec.output_path = Some(value.to_string()),
            "experiment.noiseless" => spec.noiseless = b()?,
            "experiment.beta_zero" => spec.beta_zero = b()?,
            "validate.woodbury_gain" => spec.woodbury_gain = q()?,
            _ => unreachable!("key list and match arms disagree on {key}"),
        }
    }
    let cfg = &mut spec.config;
    if let Some(g) = sinr {
        cfg.sinr_targets = vec![g; cfg.users];
    } else if cfg.sinr_targets.len() != cfg.users {
        let g = cfg.sinr_targets.first().copied().unwrap_or(db(10.0));
        cfg.sinr_targets = vec![g; cfg.users];
    }
    let tdl_on = tdl.2.unwrap_or(matches!(cfg.channel_model, ChannelModel::Tdl { .. }));
    cfg.channel_model = if tdl_on {
        let (taps0, decay0) = match cfg.channel_model {
            ChannelModel::Tdl { taps, decay } => (taps, decay),
            ChannelModel::Iid => (4, 0.5),
        };
        ChannelModel::Tdl {
            taps: tdl.0.unwrap_or(taps0),
            decay: tdl.1.unwrap_or(decay0),
        }
    } else {
        ChannelModel::Iid
    };
    spec.validate()?;
    Ok(spec)
}

/// Reads and parses a configuration file over the given profile.
pub fn load_config_with(path: &Path, profile: Profile, experiment: ExperimentKind) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text, ExperimentSpec::profile(profile, experiment))
}

/// [`load_config_with`] over the desk profile, for the ROC experiment.
pub fn load_config(path: &Path) -> Result<ExperimentSpec> {
    load_config_with(path, Profile::Desk, ExperimentKind::Roc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk() -> ExperimentSpec {
        ExperimentSpec::profile(Profile::Desk, ExperimentKind::Roc)
    }

    #[test]
    fn dbm_and_units() {
        let s = parse_config(
            "system.tx_power = 30 dBm\nsystem.radar_noise = -90 dBm\nsystem.si_variance=-80dBm",
            desk(),
        )
        .unwrap();
        assert!((s.config.tx_power - 1.0).abs() < 1e-15);
        assert!((s.config.radar_noise - 1e-12).abs() < 1e-27);
        assert!((s.config.si_variance - 1e-11).abs() < 1e-26);
        let s = parse_config(
            "system.theta_min = 0.5 rad\nsystem.theta_max = 35\nsystem.subcarrier_spacing = 0.12 MHz",
            desk(),
        )
        .unwrap();
        assert_eq!(s.config.theta_min, 0.5);
        assert!((s.config.theta_max - 35f64.to_radians()).abs() < 1e-15);
        assert!((s.config.subcarrier_spacing - 120e3).abs() < 1e-9);
        let s = parse_config("system.sinr_target = 10 dB", desk()).unwrap();
        assert!(s.config.sinr_targets.iter().all(|g| (g - 10.0).abs() < 1e-12));
    }

    #[test]
    fn full_scale_file_matches_profile() {
        let text = include_str!("../../configs/paper.conf");
        let s = parse_config(text, ExperimentSpec::profile(Profile::Desk, ExperimentKind::Roc)).unwrap();
        let c = &s.config;
        assert_eq!((c.antennas, c.users, c.subcarriers), (32, 8, 256));
        assert!((c.tx_power - 1.0).abs() < 1e-12);
        assert!((c.comm_noise - 1e-12).abs() < 1e-24 && (c.radar_noise - 1e-12).abs() < 1e-24);
        assert!((c.si_variance - 1e-11).abs() < 1e-23);
        assert!(c.sinr_targets.iter().all(|g| (g - 10.0).abs() < 1e-12));
        assert_eq!(c.subcarrier_spacing, 120e3);
        assert_eq!(c.user_radius, 100.0);
        assert_eq!((c.c0_db, c.path_loss_exponent, c.target_distance), (20.0, 2.0, 1000.0));
        assert_eq!((s.trials, s.mc_glrt_trials), (100, 10_000));
    }

    #[test]
    fn rejects_bad_input_with_location() {
        let e = parse_config("system.users = 9\n", desk()).unwrap_err();
        assert!(e.is_config());
        let e = parse_config("# ok\nsystem.bogus = 1\n", desk()).unwrap_err();
        assert!(
            matches!(e, Error::Config { ref key, line: 2, .. } if key == "system.bogus"),
            "{e}"
        );
        let e = parse_config("system.tx_power = 3 deg", desk()).unwrap_err();
        assert!(matches!(e, Error::Config { line: 1, .. }));
        assert!(parse_config("experiment.pfa_grid = 0.5, 0.1", desk()).is_err());
        assert!(parse_config("experiment.pfa_grid = 0.1, 1.0", desk()).is_err());
        assert!(parse_config("experiment.trials = 0", desk()).is_err());
        let s = parse_config("experiment.distance_grid = 100, 5 km", desk()).unwrap();
        assert_eq!(s.distance_grid, vec![100.0, 5000.0]);
        assert!(parse_config("experiment.distance_grid = 100, 5 deg", desk())
            .unwrap_err()
            .is_config());
        assert!(parse_config("system.antennas = 8\nsystem.antennas = 8", desk()).is_err());
        assert!(parse_config("no equals sign", desk()).is_err());
    }

    #[test]
    fn every_key_is_handled() {
        let mut s = desk();
        s.experiment = ExperimentKind::Solve;
        for (key, _) in KEYS {
            let value = match *key {
                "system.c0_convention" => "amplitude",
                "system.beta_phase" => "zero",
                "system.channel_model" => "iid",
                "solver.init" => "matched_beam",
                "detector.roc_search" => "point",
                "detector.refine" | "detector.calibrated" | "experiment.noiseless" | "experiment.beta_zero" => "false",
                "experiment.schemes" => "proposed",
                "experiment.output" => "out.csv",
                _ => continue,
            };
            let text = format!("{key} = {value}");
            parse_config(&text, s.clone()).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }

    #[test]
    fn schemes_and_tdl() {
        let s = parse_config(
            "experiment.schemes = wisi, proposed\nsystem.channel_model = tdl\nsystem.tdl_taps = 3",
            desk(),
        )
        .unwrap();
        assert_eq!(s.schemes, vec![Scheme::Proposed, Scheme::Wisi]);
        assert!(matches!(s.config.channel_model, ChannelModel::Tdl { taps: 3, .. }));
    }
}
