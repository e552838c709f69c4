//! Cross-module consistency checks against the dense oracles and the
//! reference distributions. Each check reports its worst residual and the
//! tolerance it is held to; a check that errors is reported as failed.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use super::config::{ExperimentSpec, Scheme};
use super::experiment::{
    build_problem, certified_instances, design_schemes, draw_instance, evaluation_si, trial_rng, Evaluator, RunOutcome,
};
use super::table::ExperimentTable;
use crate::detector::{self, WhitenedStatCache};
use crate::error::{Error, Result};
use crate::oracle::{self, DenseXProblem};
use crate::signal_model::{
    attenuation_magnitude, complex_gaussian_matrix, normalized_delay, psk_alphabet, steering_vector,
    synthesize_radar_rx, EchoParams, Hypothesis,
};
use crate::solver::{self, penalty_solve, Problem, SolverOptions, XSystem};
use crate::statkit::{self, Noncentrality};
use crate::C64;

const PURPOSE_VALIDATE: u64 = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub residual: f64,
    pub tolerance: f64,
    pub cases: usize,
}

impl Check {
    pub fn pass(&self) -> bool {
        self.residual <= self.tolerance
    }

    fn failed(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            residual: f64::INFINITY,
            tolerance,
            cases: 0,
        }
    }
}

fn rng(seed: u64, purpose: usize) -> ChaCha20Rng {
    trial_rng(seed, 0, purpose, 0, PURPOSE_VALIDATE)
}

fn unit_problem(rng: &mut ChaCha20Rng, m: usize, k: usize, n: usize) -> Result<Problem> {
    let channels = (0..n).map(|_| complex_gaussian_matrix(rng, k, m, 1.0)).collect();
    let alphabet = psk_alphabet(std::f64::consts::FRAC_PI_4);
    let symbols = DMatrix::from_fn(k, n, |_, _| alphabet[rng.random_range(0..alphabet.len())]);
    let steering = steering_vector(rng.random_range(-1.0..1.0), m, 0.5)?;
    let delay = rng.random_range(0..n);
    Problem::new(
        channels,
        symbols,
        steering,
        delay,
        rng.random_range(0.1..3.0),
        1.0,
        1.0,
        vec![0.3; k],
        std::f64::consts::FRAC_PI_4,
    )
}

/// Structured precoder solve against a dense `(MN) x (MN)` LU solve.
pub fn check_woodbury(seed: u64, gain: f64) -> Result<Check> {
    let mut worst = 0.0f64;
    let mut cases = 0;
    let mut r = rng(seed, 1);
    for (m, k, n) in [(2, 1, 2), (4, 2, 4)] {
        for _ in 0..10 {
            let p = unit_problem(&mut r, m, k, n)?;
            let lambda = complex_gaussian_matrix(&mut r, k, n, 1.0);
            let y = complex_gaussian_matrix(&mut r, n, 1, 1.0).column(0).into_owned();
            let varrho = 10f64.powf(r.random_range(-2.0..3.0));
            let sys = XSystem::new(&p, &y, &lambda, varrho);
            let dense = DenseXProblem {
                channels: &p.channels,
                symbols: &p.symbols,
                lambda: &lambda,
                steering: &p.steering,
                delay: p.delay,
                si: p.si_variance,
                noise: p.radar_noise,
                y: &y,
                varrho,
            };
            for eta in [1e-3, 0.1, 10.0] {
                let fast = sys
                    .solve_with_correction(eta, gain)
                    .ok_or_else(|| Error::Numerical("structured solve failed".into()))?;
                let slow = dense.solve(eta);
                worst = worst.max((&fast - &slow).norm() / slow.norm());
                cases += 1;
            }
        }
    }
    Ok(Check {
        name: "woodbury",
        residual: worst,
        tolerance: 1e-9,
        cases,
    })
}

/// Closed-form slack projection against candidate enumeration.
pub fn check_projection(seed: u64, count: usize) -> Check {
    let mut r = rng(seed, 2);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let hat = C64::new(r.random_range(-10.0..10.0), r.random_range(-10.0..10.0));
        let t = r.random_range(0.0..5.0);
        let phi = r.random_range(0.01..1.56);
        let got = solver::project_lambda(hat, t, phi);
        let want = oracle::project_cone_oracle(hat, t, phi);
        worst = worst.max((got - want).norm() / (1.0 + hat.norm()));
    }
    Check {
        name: "projection",
        residual: worst,
        tolerance: 1e-9,
        cases: count,
    }
}

/// Poisson-sum Marcum Q against quadrature of the Rician density on a
/// 20 x 20 grid over `[0.5, 10]²`.
pub fn check_marcum() -> Result<Check> {
    let pts: Vec<f64> = (1..=20).map(|i| 0.5 * i as f64).collect();
    let pairs: Vec<(f64, f64)> = pts.iter().flat_map(|a| pts.iter().map(move |b| (*a, *b))).collect();
    let errs: Vec<f64> = pairs
        .par_iter()
        .map(|&(a, b)| Ok((statkit::marcum_q1(a, b)?.get() - oracle::marcum_q1_quadrature(a, b)).abs()))
        .collect::<Result<_>>()?;
    Ok(Check {
        name: "marcum",
        residual: errs.into_iter().fold(0.0, f64::max),
        tolerance: 1e-8,
        cases: pairs.len(),
    })
}

/// Whitened GLRT against the explicit `C = Kᵀ ⊗ I` formula.
pub fn check_glrt_dense(seed: u64) -> Result<Check> {
    let mut r = rng(seed, 3);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for n in [2usize, 4, 8, 16] {
        for _ in 0..5 {
            let m = r.random_range(2..5);
            let x = complex_gaussian_matrix(&mut r, m, n, 1.0);
            let y = complex_gaussian_matrix(&mut r, m, n, 1.0);
            let delay = r.random_range(0..n);
            let si = r.random_range(0.0..2.0);
            let noise = r.random_range(0.2..2.0);
            let theta = r.random_range(-1.2..1.2);
            let ula = crate::signal_model::Ula {
                antennas: m,
                spacing_ratio: 0.5,
            };
            let cache = detector::si_covariance(&x, delay, si, noise)?;
            let fast = detector::glrt_statistic(&y, &ula, theta, &cache)?;
            let slow = oracle::dense_glrt(&y, &x, theta, 0.5, delay, si, noise);
            worst = worst.max(((fast - slow) / slow).abs());
            cases += 1;
        }
    }
    Ok(Check {
        name: "glrt_dense",
        residual: worst,
        tolerance: 1e-10,
        cases,
    })
}

/// `δ(P_FA) = -2 ln P_FA`.
pub fn check_threshold() -> Result<Check> {
    let mut worst = 0.0f64;
    let grid = [0.5, 0.1, 0.01, 1e-4];
    for p in grid {
        worst = worst.max((detector::np_threshold(p)? + 2.0 * p.ln()).abs());
    }
    Ok(Check {
        name: "threshold",
        residual: worst,
        tolerance: 1e-12,
        cases: grid.len(),
    })
}

/// GLRT statistics at a fixed direction for one scheme's design on
/// realization 0 of `spec`, with the SI channel and noise redrawn per
/// trial. Returns the statistics and the noncentrality of the H1 law.
pub fn fixed_direction_statistics(
    spec: &ExperimentSpec,
    scheme: Scheme,
    hypothesis: Hypothesis,
    count: usize,
) -> Result<(Vec<f64>, f64)> {
    let cfg = &spec.config;
    let inst = draw_instance(spec, 0);
    let delay = normalized_delay(cfg.target_distance, cfg)?;
    let mut one = spec.clone();
    one.schemes = vec![scheme];
    let design = design_schemes(&one, &inst, delay, 0)?.remove(0).1;
    let eval_si = evaluation_si(scheme, spec);
    let cache = detector::si_covariance(&design.x, delay, eval_si, cfg.radar_noise)?;
    let theta = cfg.nominal_theta();
    let ula = cfg.ula();
    let beta = C64::new(attenuation_magnitude(cfg.target_distance, cfg)?, 0.0);
    let rho = detector::noncentrality(&ula, theta, beta, &cache)?.get();
    let purpose = match hypothesis {
        Hypothesis::Present => 10,
        Hypothesis::Absent => 11,
    };
    let stats = (0..count)
        .into_par_iter()
        .map(|j| {
            let mut r = trial_rng(spec.seed, 0, j, 0, purpose);
            let si = complex_gaussian_matrix(&mut r, cfg.antennas, cfg.antennas, eval_si);
            let params = EchoParams {
                beta,
                theta,
                delay,
                si: &si,
                radar_noise: cfg.radar_noise,
                spacing_ratio: cfg.spacing_ratio,
                hypothesis,
            };
            let snap = synthesize_radar_rx(&design.x, &params, &mut r)?;
            detector::glrt_statistic(&snap.received, &ula, theta, &cache)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((stats, rho))
}

/// KS distance of H0 statistics against `χ²₂` and the false-alarm rate at
/// `P_FA = 0.1`.
pub fn check_h0(spec: &ExperimentSpec, count: usize) -> Result<(Check, Check)> {
    let (l0, _) = fixed_direction_statistics(spec, Scheme::Proposed, Hypothesis::Absent, count)?;
    let ks = statkit::ks_distance(&l0, |x| statkit::chi2_2_cdf(x).map(|p| p.get()).unwrap_or(f64::NAN));
    let delta = detector::np_threshold(0.1)?;
    let rate = l0.iter().filter(|l| **l > delta).count() as f64 / l0.len() as f64;
    Ok((
        Check {
            name: "ks_h0",
            residual: ks,
            tolerance: 0.02,
            cases: count,
        },
        Check {
            name: "pfa_h0",
            residual: (rate - 0.1).abs(),
            tolerance: 0.015,
            cases: count,
        },
    ))
}

/// KS distance of H1 statistics against `χ²₂(ρ)`.
pub fn check_h1(spec: &ExperimentSpec, count: usize) -> Result<(Check, f64)> {
    let (l1, rho) = fixed_direction_statistics(spec, Scheme::Proposed, Hypothesis::Present, count)?;
    let nc = Noncentrality::new(rho)?;
    let ks = statkit::ks_distance(&l1, |x| {
        statkit::noncentral_chi2_2_cdf(x, nc)
            .map(|p| p.get())
            .unwrap_or(f64::NAN)
    });
    Ok((
        Check {
            name: "ks_h1",
            residual: ks,
            tolerance: 0.03,
            cases: count,
        },
        rho,
    ))
}

/// Small desk-physics instances (`M = 4, K = 2, N = 8`).
pub fn small_spec(spec: &ExperimentSpec) -> ExperimentSpec {
    let mut s = spec.clone();
    s.config.antennas = 4;
    s.config.users = 2;
    s.config.subcarriers = 8;
    s.config.sinr_targets = vec![s.config.sinr_targets[0]; 2];
    s
}

/// Small instances with a known feasible point, see [`certified_instances`].
pub fn certified_problems(spec: &ExperimentSpec, first: usize, count: usize) -> Result<Vec<(usize, Problem)>> {
    let s = small_spec(spec);
    let delay = normalized_delay(s.config.target_distance, &s.config)?;
    certified_instances(&s, delay, first, count)?
        .into_iter()
        .map(|(i, inst)| Ok((i, build_problem(&s, &inst, delay, s.config.si_variance)?)))
        .collect()
}

/// After every `y` update the objective equals the penalty minus the
/// radar objective.
pub fn check_tightness(spec: &ExperimentSpec, solves: usize) -> Result<Check> {
    let opts = SolverOptions {
        record_iterations: true,
        ..spec.solver.clone()
    };
    let worst = certified_problems(spec, 1000, solves)?
        .into_par_iter()
        .map(|(_, p)| {
            let sol = penalty_solve(&p, &opts)?;
            let mut worst = 0.0f64;
            for outer in &sol.outer {
                for rec in &outer.records {
                    let want = rec.penalty_after_y - rec.rho_after_y;
                    let scale = rec.after_y.abs().max(want.abs()).max(rec.rho_after_y.abs());
                    worst = worst.max((rec.after_y - want).abs() / scale);
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(Check {
        name: "tightness",
        residual: worst,
        tolerance: 1e-9,
        cases: solves,
    })
}

/// Outcome of the solver over a batch of seeded instances.
#[derive(Debug, Clone, Default)]
pub struct SolverBatch {
    /// Block updates that increased the objective beyond the slack.
    pub monotonicity_violations: usize,
    /// Instances whose final residual, slack region or power check failed.
    pub infeasible: usize,
    pub worst_residual_ratio: f64,
    pub errors: Vec<String>,
    pub instances: usize,
}

/// Runs `penalty_solve` on `count` certified-feasible instances, re-checking every inner
/// iteration for descent and the returned point for feasibility.
pub fn solver_batch(spec: &ExperimentSpec, count: usize) -> SolverBatch {
    let opts = SolverOptions {
        record_iterations: true,
        ..spec.solver.clone()
    };
    let problems = match certified_problems(spec, 0, count) {
        Ok(p) => p,
        Err(e) => {
            return SolverBatch {
                instances: count,
                infeasible: count,
                worst_residual_ratio: f64::INFINITY,
                errors: vec![e.to_string()],
                ..Default::default()
            }
        }
    };
    let per: Vec<(usize, usize, f64, Option<String>)> = problems
        .into_par_iter()
        .map(|(_, p)| match penalty_solve(&p, &opts) {
            Ok(sol) => {
                let slack = |v: f64| 1e-12 * (1.0 + v.abs());
                let mut violations = 0;
                for outer in &sol.outer {
                    let mut prev = f64::INFINITY;
                    for rec in &outer.records {
                        for v in [rec.after_y, rec.after_x, rec.after_lambda] {
                            if v > prev + slack(prev) {
                                violations += 1;
                            }
                            prev = v;
                        }
                    }
                }
                let gamma = p.thresholds.iter().copied().fold(f64::INFINITY, f64::min);
                let ratio = sol.feasibility_residual / gamma;
                let in_region = sol.lambda.iter().enumerate().all(|(idx, l)| {
                    let t = p.thresholds[idx % p.users()];
                    solver::in_constructive_region(*l, t, p.phi, 1e-12 * t)
                });
                let power_ok = sol.x.norm_squared() <= p.power_budget * (1.0 + 1e-9);
                let bad = usize::from(!(ratio <= 1e-4 && in_region && power_ok));
                (violations, bad, ratio, None)
            }
            Err(e @ Error::Invariant(_)) => (1, 1, f64::INFINITY, Some(e.to_string())),
            Err(e) => (0, 1, f64::INFINITY, Some(e.to_string())),
        })
        .collect();
    let mut out = SolverBatch {
        instances: count,
        ..Default::default()
    };
    for (v, bad, ratio, err) in per {
        out.monotonicity_violations += v;
        out.infeasible += bad;
        out.worst_residual_ratio = out.worst_residual_ratio.max(ratio);
        out.errors.extend(err);
    }
    out
}

/// Per-instance scheme orderings on paired desk-scale designs.
#[derive(Debug, Clone, Copy, Default)]
pub struct SicBenefit {
    pub instances: usize,
    /// Instances with proposed `ρ` ≥ WiSI `ρ`, both under the true SI.
    pub rho_order: usize,
    /// Instances with WoSI `P_D` ≥ proposed `P_D` ≥ WiSI `P_D`.
    pub pd_order: usize,
}

/// Designs all three schemes on `count` certified-feasible instances of
/// `spec` and counts how often the expected orderings hold, with `P_D`
/// predicted at `p_fa` for the nominal direction.
pub fn sic_benefit(spec: &ExperimentSpec, count: usize, p_fa: f64) -> Result<SicBenefit> {
    let mut spec = spec.clone();
    spec.schemes = vec![Scheme::Proposed, Scheme::Wosi, Scheme::Wisi];
    let cfg = &spec.config;
    let distance = cfg.target_distance;
    let delay = normalized_delay(distance, cfg)?;
    let beta = C64::new(attenuation_magnitude(distance, cfg)?, 0.0);
    let theta = cfg.nominal_theta();
    let per = certified_instances(&spec, delay, 0, count)?
        .into_par_iter()
        .map(|(r, inst)| {
            let designs = design_schemes(&spec, &inst, delay, r)?;
            let mut rho = [0.0; 3];
            let mut pd = [0.0; 3];
            for (i, (scheme, sol)) in designs.iter().enumerate() {
                rho[i] = sol.rho_value;
                let nc = Evaluator::new(&spec, *scheme, &sol.x, distance, 0)?.rho(theta, beta)?;
                pd[i] = detector::predict_pd(nc, p_fa)?.get();
            }
            Ok((rho[0] >= rho[2], pd[1] >= pd[0] && pd[0] >= pd[2]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SicBenefit {
        instances: per.len(),
        rho_order: per.iter().filter(|o| o.0).count(),
        pd_order: per.iter().filter(|o| o.1).count(),
    })
}

/// `L = ρ` without noise and SI, at the true direction.
pub fn check_noiseless(spec: &ExperimentSpec, count: usize) -> Result<Check> {
    let cfg = &spec.config;
    let mut r = rng(spec.seed, 4);
    let ula = cfg.ula();
    let mut worst = 0.0f64;
    let zero_si = DMatrix::zeros(cfg.antennas, cfg.antennas);
    for _ in 0..count {
        let x = complex_gaussian_matrix(&mut r, cfg.antennas, cfg.subcarriers, 1.0);
        let x = &x * C64::new((cfg.tx_power / x.norm_squared()).sqrt(), 0.0);
        let theta = r.random_range(cfg.theta_min..=cfg.theta_max);
        let delay = r.random_range(0..cfg.subcarriers);
        let beta = C64::from_polar(r.random_range(1e-7..1e-6), r.random_range(0.0..std::f64::consts::TAU));
        let cache: WhitenedStatCache = detector::si_covariance(&x, delay, cfg.si_variance, cfg.radar_noise)?;
        let params = EchoParams {
            beta,
            theta,
            delay,
            si: &zero_si,
            radar_noise: 0.0,
            spacing_ratio: cfg.spacing_ratio,
            hypothesis: Hypothesis::Present,
        };
        let snap = synthesize_radar_rx(&x, &params, &mut r)?;
        let l = detector::glrt_statistic(&snap.received, &ula, theta, &cache)?;
        let rho = detector::noncentrality(&ula, theta, beta, &cache)?.get();
        worst = worst.max(((l - rho) / rho).abs());
    }
    Ok(Check {
        name: "noiseless",
        residual: worst,
        tolerance: 1e-6,
        cases: count,
    })
}

fn check_row(table: &mut ExperimentTable, c: &Check) -> Result<()> {
    table.add(
        "validate",
        0.0,
        &format!("{}.residual", c.name),
        c.residual,
        0.0,
        c.cases as u64,
    )?;
    table.add(
        "validate",
        0.0,
        &format!("{}.pass", c.name),
        f64::from(u8::from(c.pass())),
        0.0,
        c.cases as u64,
    )
}

/// Every check, as `<check>.residual` / `<check>.pass` rows.
pub fn run_validate(spec: &ExperimentSpec) -> Result<RunOutcome> {
    let mut checks = Vec::new();
    let mut push =
        |r: Result<Check>, name: &'static str, tol: f64| checks.push(r.unwrap_or_else(|_| Check::failed(name, tol)));
    push(check_woodbury(spec.seed, spec.woodbury_gain), "woodbury", 1e-9);
    push(Ok(check_projection(spec.seed, 10_000)), "projection", 1e-9);
    push(check_marcum(), "marcum", 1e-8);
    push(check_glrt_dense(spec.seed), "glrt_dense", 1e-10);
    push(check_threshold(), "threshold", 1e-12);
    match check_h0(spec, 10_000) {
        Ok((ks, pfa)) => {
            push(Ok(ks), "ks_h0", 0.02);
            push(Ok(pfa), "pfa_h0", 0.015);
        }
        Err(_) => {
            push(Err(Error::Numerical(String::new())), "ks_h0", 0.02);
            push(Err(Error::Numerical(String::new())), "pfa_h0", 0.015);
        }
    }
    push(check_h1(spec, 10_000).map(|(c, _)| c), "ks_h1", 0.03);
    push(check_tightness(spec, 20), "tightness", 1e-9);
    push(check_noiseless(spec, 50), "noiseless", 1e-6);
    let batch = solver_batch(spec, 100);
    push(
        Ok(Check {
            name: "monotone",
            residual: batch.monotonicity_violations as f64,
            tolerance: 0.0,
            cases: batch.instances,
        }),
        "monotone",
        0.0,
    );
    push(
        Ok(Check {
            name: "feasible",
            residual: batch.infeasible as f64,
            tolerance: 0.0,
            cases: batch.instances,
        }),
        "feasible",
        0.0,
    );
    let mut table = ExperimentTable::new();
    for c in &checks {
        check_row(&mut table, c)?;
    }
    table.sort();
    Ok(RunOutcome { table, failure: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_checks_pass_and_detect_perturbation() {
        assert!(check_woodbury(1, 1.0).unwrap().pass());
        assert!(!check_woodbury(1, 1.0 + 1e-3).unwrap().pass());
        assert!(check_projection(1, 2000).pass());
        assert!(check_glrt_dense(1).unwrap().pass());
        assert!(check_threshold().unwrap().pass());
    }

    #[test]
    fn failed_check_is_reported_not_raised() {
        let c = Check::failed("x", 1.0);
        assert!(!c.pass());
        let mut t = ExperimentTable::new();
        check_row(&mut t, &c).unwrap();
        assert_eq!(t.get("validate", 0.0, "x.pass").unwrap().value, 0.0);
    }

    #[test]
    fn unit_problem_is_well_formed() {
        let mut r = rng(3, 0);
        let p = unit_problem(&mut r, 3, 2, 4).unwrap();
        assert_eq!(p.channels.len(), 4);
    }
}
