//! Seeded Monte Carlo experiments.
//!
//! Every random object comes from its own ChaCha20 stream selected by
//! `(realization, draw, grid point, purpose)`, so results do not depend on
//! scheduling, worker count, or which schemes are enabled. Within a draw
//! all schemes see the same direction, attenuation, SI channel and noise.

use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use super::config::{ExperimentSpec, RocSearch, Scheme};
use super::table::ExperimentTable;
use crate::detector::{self, WhitenedStatCache};
use crate::error::{Error, Result};
use crate::signal_model::{
    attenuation, complex_gaussian_matrix, normalized_delay, sample_channels, sample_symbols, synthesize_radar_rx,
    ChannelRealization, EchoParams, Hypothesis, SymbolBlock, Ula,
};
use crate::solver::{penalty_solve, rho_objective, zero_forcing, PrecodeSolution, Problem};
use crate::statkit::Noncentrality;
use crate::C64;

const PURPOSE_INSTANCE: u64 = 1;
const PURPOSE_H1: u64 = 2;
const PURPOSE_H0: u64 = 3;
const PURPOSE_SOLVER: u64 = 4;

pub const MAX_REALIZATIONS: usize = 1 << 24;
pub const MAX_DRAWS: usize = 1 << 28;

/// Generator for one `(realization, draw, point, purpose)` cell.
pub fn trial_rng(seed: u64, realization: usize, draw: usize, point: usize, purpose: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((realization as u64) << 40) | ((draw as u64) << 12) | (((point as u64) & 0xff) << 4) | purpose);
    rng
}

/// Channels and symbols of one realization.
#[derive(Debug, Clone)]
pub struct Instance {
    pub channels: ChannelRealization,
    pub symbols: SymbolBlock,
}

pub fn draw_instance(spec: &ExperimentSpec, realization: usize) -> Instance {
    let mut rng = trial_rng(spec.seed, realization, 0, 0, PURPOSE_INSTANCE);
    let channels = sample_channels(&spec.config, &mut rng);
    let symbols = sample_symbols(&spec.config, &mut rng);
    Instance { channels, symbols }
}

/// The first `count` realizations from `first` on whose zero-forcing
/// precoder fits the power budget, i.e. instances with a known feasible
/// point. The scan stops after `50 · count` candidates.
pub fn certified_instances(
    spec: &ExperimentSpec,
    delay: usize,
    first: usize,
    count: usize,
) -> Result<Vec<(usize, Instance)>> {
    let mut out = Vec::with_capacity(count);
    let limit = first + 50 * count.max(1);
    for index in first..limit {
        if out.len() == count {
            break;
        }
        let inst = draw_instance(spec, index);
        let p = build_problem(spec, &inst, delay, 0.0)?;
        if zero_forcing(&p)?.norm_squared() <= p.power_budget {
            out.push((index, inst));
        }
    }
    if out.len() < count {
        return Err(Error::Numerical(format!(
            "only {} of {count} realizations in {first}..{limit} are certified feasible",
            out.len()
        )));
    }
    Ok(out)
}

/// Precoding problem for an instance, designed toward the centre of the
/// DoA prior.
pub fn build_problem(spec: &ExperimentSpec, inst: &Instance, delay: usize, si_variance: f64) -> Result<Problem> {
    let cfg = &spec.config;
    Problem::new(
        inst.channels.downlink.clone(),
        inst.symbols.symbols.clone(),
        cfg.ula().steering(cfg.nominal_theta())?,
        delay,
        si_variance,
        cfg.radar_noise,
        cfg.tx_power,
        cfg.thresholds(),
        cfg.phi,
    )
}

/// SI variance a scheme is evaluated under.
pub fn evaluation_si(scheme: Scheme, spec: &ExperimentSpec) -> f64 {
    if scheme.evaluates_with_si() {
        spec.config.si_variance
    } else {
        0.0
    }
}

fn design_si(scheme: Scheme, spec: &ExperimentSpec) -> f64 {
    if scheme.designs_with_si() {
        spec.config.si_variance
    } else {
        0.0
    }
}

fn solve_for(
    spec: &ExperimentSpec,
    inst: &Instance,
    delay: usize,
    si: f64,
    realization: usize,
) -> Result<PrecodeSolution> {
    let problem = build_problem(spec, inst, delay, si)?;
    let mut opts = spec.solver.clone();
    opts.seed = trial_rng(spec.seed, realization, 0, 0, PURPOSE_SOLVER).next_u64();
    penalty_solve(&problem, &opts)
}

fn reevaluate(
    spec: &ExperimentSpec,
    inst: &Instance,
    delay: usize,
    scheme: Scheme,
    mut sol: PrecodeSolution,
) -> Result<PrecodeSolution> {
    let eval = evaluation_si(scheme, spec);
    if eval != design_si(scheme, spec) {
        sol.rho_value = rho_objective(&build_problem(spec, inst, delay, eval)?, &sol.x)?;
    }
    Ok(sol)
}

/// One scheme's precoder; `rho_value` is reported under the scheme's
/// evaluation SI.
pub fn run_scheme(scheme: Scheme, inst: &Instance, delay: usize, spec: &ExperimentSpec) -> Result<PrecodeSolution> {
    run_scheme_at(scheme, inst, delay, spec, 0)
}

fn run_scheme_at(
    scheme: Scheme,
    inst: &Instance,
    delay: usize,
    spec: &ExperimentSpec,
    realization: usize,
) -> Result<PrecodeSolution> {
    let sol = solve_for(spec, inst, delay, design_si(scheme, spec), realization)
        .map_err(|e| e.context(format!("{} design", scheme.tag())))?;
    reevaluate(spec, inst, delay, scheme, sol)
}

/// All requested schemes on one instance; designs with equal SI
/// assumptions are solved once.
pub fn design_schemes(
    spec: &ExperimentSpec,
    inst: &Instance,
    delay: usize,
    realization: usize,
) -> Result<Vec<(Scheme, PrecodeSolution)>> {
    let mut solved: Vec<(u64, PrecodeSolution)> = Vec::new();
    let mut out = Vec::new();
    for &scheme in &spec.schemes {
        let si = design_si(scheme, spec);
        let sol = match solved.iter().find(|(bits, _)| *bits == si.to_bits()) {
            Some((_, s)) => s.clone(),
            None => {
                let s = solve_for(spec, inst, delay, si, realization)
                    .map_err(|e| e.context(format!("{} design, realization {realization}", scheme.tag())))?;
                solved.push((si.to_bits(), s.clone()));
                s
            }
        };
        out.push((scheme, reevaluate(spec, inst, delay, scheme, sol)?));
    }
    Ok(out)
}

/// One simulated receive block with its ground truth.
#[derive(Debug, Clone)]
pub struct Draw {
    pub received: DMatrix<C64>,
    pub theta: f64,
    pub beta: C64,
}

/// Receiver side of one scheme at one target distance.
pub struct Evaluator<'a> {
    spec: &'a ExperimentSpec,
    x: &'a DMatrix<C64>,
    pub cache: WhitenedStatCache,
    pub ula: Ula,
    eval_si: f64,
    delay: usize,
    distance: f64,
    point: usize,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        spec: &'a ExperimentSpec,
        scheme: Scheme,
        x: &'a DMatrix<C64>,
        distance: f64,
        point: usize,
    ) -> Result<Self> {
        let delay = normalized_delay(distance, &spec.config)?;
        let eval_si = evaluation_si(scheme, spec);
        let cache = detector::si_covariance(x, delay, eval_si, spec.config.radar_noise)?;
        Ok(Self {
            spec,
            x,
            cache,
            ula: spec.config.ula(),
            eval_si,
            delay,
            distance,
            point,
        })
    }

    /// Draw `draw` of realization `realization`. The SI channel is redrawn
    /// every time so that its contribution has exactly the covariance the
    /// receiver whitens with.
    pub fn draw(&self, realization: usize, draw: usize, hypothesis: Hypothesis) -> Result<Draw> {
        let purpose = match hypothesis {
            Hypothesis::Present => PURPOSE_H1,
            Hypothesis::Absent => PURPOSE_H0,
        };
        let cfg = &self.spec.config;
        let mut rng = trial_rng(self.spec.seed, realization, draw, self.point, purpose);
        let theta = cfg.theta_min + rng.random::<f64>() * (cfg.theta_max - cfg.theta_min);
        let mut beta = attenuation(self.distance, cfg, &mut rng)?;
        if self.spec.beta_zero {
            beta = C64::new(0.0, 0.0);
        }
        let unit_si = complex_gaussian_matrix(&mut rng, cfg.antennas, cfg.antennas, 1.0);
        let si = if self.spec.noiseless {
            DMatrix::zeros(cfg.antennas, cfg.antennas)
        } else {
            unit_si * C64::new(self.eval_si.sqrt(), 0.0)
        };
        let params = EchoParams {
            beta,
            theta,
            delay: self.delay,
            si: &si,
            radar_noise: if self.spec.noiseless { 0.0 } else { cfg.radar_noise },
            spacing_ratio: cfg.spacing_ratio,
            hypothesis,
        };
        let snap = synthesize_radar_rx(self.x, &params, &mut rng)?;
        Ok(Draw {
            received: snap.received,
            theta,
            beta: snap.beta,
        })
    }

    /// Noncentrality at the true direction.
    pub fn rho(&self, theta: f64, beta: C64) -> Result<Noncentrality> {
        detector::noncentrality(&self.ula, theta, beta, &self.cache)
    }

    pub fn statistic_at(&self, d: &Draw) -> Result<f64> {
        detector::glrt_statistic(&d.received, &self.ula, d.theta, &self.cache)
    }

    pub fn search(&self, d: &Draw, grid: &[f64]) -> Result<(f64, f64)> {
        detector::doa_search(&d.received, &self.ula, &self.cache, grid, self.spec.detector.refine)
    }
}

/// Table produced by a run, plus the first realization failure if any.
#[derive(Debug)]
pub struct RunOutcome {
    pub table: ExperimentTable,
    pub failure: Option<Error>,
}

fn binomial_stderr(p: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (p * (1.0 - p) / n as f64).max(0.0).sqrt()
    }
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Root-mean-square of `errors` with a delta-method standard error.
fn rmse_stderr(errors: &[f64]) -> (f64, f64) {
    let sq: Vec<f64> = errors.iter().map(|e| e * e).collect();
    let (mse, se) = mean_stderr(&sq);
    let rmse = mse.sqrt();
    let se = if rmse > 0.0 { se / (2.0 * rmse) } else { 0.0 };
    (rmse, se)
}

fn fraction_above(values: &[f64], threshold: f64) -> f64 {
    values.iter().filter(|v| **v > threshold).count() as f64 / values.len() as f64
}

fn doa_grid_for(spec: &ExperimentSpec) -> Result<Vec<f64>> {
    detector::doa_grid(spec.config.theta_min, spec.config.theta_max, spec.detector.grid_step)
}

fn record_failures(table: &mut ExperimentTable, sweep_value: f64, failures: usize, total: usize) -> Result<()> {
    if failures > 0 {
        table.add(
            "all",
            sweep_value,
            "failed_realizations",
            failures as f64,
            0.0,
            total as u64,
        )?;
    }
    Ok(())
}

fn split_results<T>(results: Vec<Result<T>>) -> (Vec<T>, Vec<Error>) {
    let mut ok = Vec::new();
    let mut err = Vec::new();
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => err.push(e),
        }
    }
    (ok, err)
}

struct RocSamples {
    h1: Vec<f64>,
    h0: Vec<f64>,
    rho: Vec<f64>,
}

fn roc_realization(spec: &ExperimentSpec, r: usize, grid: &[f64]) -> Result<Vec<(Scheme, RocSamples)>> {
    let inst = draw_instance(spec, r);
    let distance = spec.config.target_distance;
    let delay = normalized_delay(distance, &spec.config)?;
    let designs = design_schemes(spec, &inst, delay, r)?;
    designs
        .iter()
        .map(|(scheme, sol)| {
            let ev = Evaluator::new(spec, *scheme, &sol.x, distance, 0)?;
            let stat = |d: &Draw| -> Result<f64> {
                match spec.detector.roc_search {
                    RocSearch::Point => ev.statistic_at(d),
                    RocSearch::Grid => Ok(ev.search(d, grid)?.1),
                }
            };
            let h1: Vec<(f64, f64)> = (0..spec.mc_glrt_trials)
                .into_par_iter()
                .map(|j| {
                    let d = ev.draw(r, j, Hypothesis::Present)?;
                    Ok((stat(&d)?, ev.rho(d.theta, d.beta)?.get()))
                })
                .collect::<Result<_>>()?;
            let h0: Vec<f64> = (0..spec.mc_glrt_trials)
                .into_par_iter()
                .map(|j| stat(&ev.draw(r, j, Hypothesis::Absent)?))
                .collect::<Result<_>>()?;
            let (h1, rho) = h1.into_iter().unzip();
            Ok((*scheme, RocSamples { h1, h0, rho }))
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.context(format!("realization {r}")))
}

/// Empirical and theoretical ROC points for every scheme and `P_FA`.
pub fn run_roc(spec: &ExperimentSpec) -> Result<RunOutcome> {
    spec.validate()?;
    let grid = doa_grid_for(spec)?;
    let results: Vec<Result<Vec<(Scheme, RocSamples)>>> = (0..spec.trials)
        .into_par_iter()
        .map(|r| roc_realization(spec, r, &grid))
        .collect();
    let (ok, errors) = split_results(results);
    let mut table = ExperimentTable::new();
    for &scheme in &spec.schemes {
        let mut h1 = Vec::new();
        let mut h0 = Vec::new();
        let mut rho = Vec::new();
        for real in &ok {
            if let Some((_, s)) = real.iter().find(|(sc, _)| *sc == scheme) {
                h1.extend_from_slice(&s.h1);
                h0.extend_from_slice(&s.h0);
                rho.extend_from_slice(&s.rho);
            }
        }
        if h1.is_empty() {
            continue;
        }
        for &p_fa in &spec.pfa_grid {
            let delta = detector::np_threshold(p_fa)?;
            let pd = fraction_above(&h1, delta);
            let pfa = fraction_above(&h0, delta);
            let theory = rho
                .iter()
                .map(|r| Ok(detector::predict_pd(Noncentrality::new(*r)?, p_fa)?.get()))
                .collect::<Result<Vec<f64>>>()?;
            let theory = theory.iter().sum::<f64>() / theory.len() as f64;
            let tag = scheme.tag();
            table.add(
                tag,
                p_fa,
                "pd_empirical",
                pd,
                binomial_stderr(pd, h1.len()),
                h1.len() as u64,
            )?;
            table.add(
                tag,
                p_fa,
                "pd_theory",
                theory,
                binomial_stderr(theory, rho.len()),
                rho.len() as u64,
            )?;
            table.add(
                tag,
                p_fa,
                "pfa_empirical",
                pfa,
                binomial_stderr(pfa, h0.len()),
                h0.len() as u64,
            )?;
            if spec.detector.calibrated {
                let thr = detector::calibrate_threshold(&h0, p_fa)?;
                let pd_c = fraction_above(&h1, thr);
                table.add(
                    tag,
                    p_fa,
                    "pd_calibrated",
                    pd_c,
                    binomial_stderr(pd_c, h1.len()),
                    h1.len() as u64,
                )?;
            }
        }
    }
    record_failures(&mut table, 0.0, errors.len(), spec.trials)?;
    table.sort();
    Ok(RunOutcome {
        table,
        failure: errors.into_iter().next(),
    })
}

struct SweepSamples {
    errors_deg: Vec<f64>,
    l_star: Vec<f64>,
    rho: Vec<f64>,
}

fn sweep_realization(
    spec: &ExperimentSpec,
    r: usize,
    point: usize,
    grid: &[f64],
) -> Result<Vec<(Scheme, SweepSamples)>> {
    let inst = draw_instance(spec, r);
    let distance = spec.distance_grid[point];
    let delay = normalized_delay(distance, &spec.config)?;
    let designs = design_schemes(spec, &inst, delay, r)?;
    designs
        .iter()
        .map(|(scheme, sol)| {
            let ev = Evaluator::new(spec, *scheme, &sol.x, distance, point)?;
            let out: Vec<(f64, f64, f64)> = (0..spec.mc_glrt_trials)
                .into_par_iter()
                .map(|j| {
                    let d = ev.draw(r, j, Hypothesis::Present)?;
                    let (theta_hat, l_star) = ev.search(&d, grid)?;
                    let rho = if spec.beta_zero {
                        0.0
                    } else {
                        ev.rho(d.theta, d.beta)?.get()
                    };
                    Ok(((theta_hat - d.theta).to_degrees(), l_star, rho))
                })
                .collect::<Result<_>>()?;
            let mut s = SweepSamples {
                errors_deg: Vec::with_capacity(out.len()),
                l_star: Vec::with_capacity(out.len()),
                rho: Vec::with_capacity(out.len()),
            };
            for (e, l, rho) in out {
                s.errors_deg.push(e);
                s.l_star.push(l);
                s.rho.push(rho);
            }
            Ok((*scheme, s))
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.context(format!("distance {distance} m, realization {r}")))
}

/// DoA RMSE and detection rate against target distance.
pub fn run_distance_sweep(spec: &ExperimentSpec) -> Result<RunOutcome> {
    spec.validate()?;
    let grid = doa_grid_for(spec)?;
    let delta = detector::np_threshold(spec.detector.p_fa)?;
    let cells: Vec<(usize, usize)> = (0..spec.distance_grid.len())
        .flat_map(|p| (0..spec.trials).map(move |r| (p, r)))
        .collect();
    let results: Vec<Result<Vec<(Scheme, SweepSamples)>>> = cells
        .par_iter()
        .map(|&(p, r)| sweep_realization(spec, r, p, &grid))
        .collect();
    let mut table = ExperimentTable::new();
    let mut first_failure = None;
    let mut per_point: Vec<Vec<Vec<(Scheme, SweepSamples)>>> =
        (0..spec.distance_grid.len()).map(|_| Vec::new()).collect();
    let mut failures = vec![0usize; spec.distance_grid.len()];
    for (&(p, _), res) in cells.iter().zip(results) {
        match res {
            Ok(v) => per_point[p].push(v),
            Err(e) => {
                failures[p] += 1;
                first_failure.get_or_insert(e);
            }
        }
    }
    for (p, reals) in per_point.iter().enumerate() {
        let distance = spec.distance_grid[p];
        for &scheme in &spec.schemes {
            let mut errors = Vec::new();
            let mut l_star = Vec::new();
            let mut rho = Vec::new();
            for real in reals {
                if let Some((_, s)) = real.iter().find(|(sc, _)| *sc == scheme) {
                    errors.extend_from_slice(&s.errors_deg);
                    l_star.extend_from_slice(&s.l_star);
                    rho.extend_from_slice(&s.rho);
                }
            }
            if errors.is_empty() {
                continue;
            }
            let tag = scheme.tag();
            let n = errors.len();
            let (rmse, rmse_se) = rmse_stderr(&errors);
            table.add(tag, distance, "rmse_deg", rmse, rmse_se, n as u64)?;
            let pd = fraction_above(&l_star, delta);
            table.add(tag, distance, "pd_empirical", pd, binomial_stderr(pd, n), n as u64)?;
            let theory = rho
                .iter()
                .map(|r| Ok(detector::predict_pd(Noncentrality::new(*r)?, spec.detector.p_fa)?.get()))
                .collect::<Result<Vec<f64>>>()?;
            let theory = theory.iter().sum::<f64>() / n as f64;
            table.add(tag, distance, "pd_theory", theory, binomial_stderr(theory, n), n as u64)?;
        }
        record_failures(&mut table, distance, failures[p], spec.trials)?;
    }
    table.sort();
    Ok(RunOutcome {
        table,
        failure: first_failure,
    })
}

/// Per-realization solver outcome summaries at the configured distance.
pub fn run_solve(spec: &ExperimentSpec) -> Result<RunOutcome> {
    spec.validate()?;
    let distance = spec.config.target_distance;
    let delay = normalized_delay(distance, &spec.config)?;
    type Summary = (Scheme, [f64; 8]);
    let results: Vec<Result<Vec<Summary>>> = (0..spec.trials)
        .into_par_iter()
        .map(|r| {
            let inst = draw_instance(spec, r);
            let designs = design_schemes(spec, &inst, delay, r)?;
            designs
                .into_iter()
                .map(|(scheme, sol)| {
                    let ev = Evaluator::new(spec, scheme, &sol.x, distance, 0)?;
                    let beta = crate::signal_model::attenuation_magnitude(distance, &spec.config)?;
                    let rho = ev.rho(spec.config.nominal_theta(), C64::new(beta, 0.0))?;
                    let pd = detector::predict_pd(rho, spec.detector.p_fa)?.get();
                    let bcd: usize = sol.outer.iter().map(|o| o.iterations).sum();
                    Ok((
                        scheme,
                        [
                            sol.rho_value,
                            rho.get(),
                            pd,
                            sol.feasibility_residual,
                            sol.x.norm_squared(),
                            sol.outer.len() as f64,
                            bcd as f64,
                            if sol.feasible { 1.0 } else { 0.0 },
                        ],
                    ))
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.context(format!("realization {r}")))
        })
        .collect();
    let (ok, errors) = split_results(results);
    const METRICS: [&str; 8] = [
        "rho_objective",
        "noncentrality",
        "pd_theory",
        "feasibility_residual",
        "power",
        "outer_iterations",
        "bcd_iterations",
        "feasible",
    ];
    let mut table = ExperimentTable::new();
    for &scheme in &spec.schemes {
        let rows: Vec<[f64; 8]> = ok
            .iter()
            .filter_map(|real| real.iter().find(|(sc, _)| *sc == scheme).map(|(_, v)| *v))
            .collect();
        if rows.is_empty() {
            continue;
        }
        for (i, metric) in METRICS.iter().enumerate() {
            let vals: Vec<f64> = rows.iter().map(|r| r[i]).collect();
            let (mean, se) = mean_stderr(&vals);
            table.add(scheme.tag(), distance, metric, mean, se, vals.len() as u64)?;
        }
    }
    record_failures(&mut table, distance, errors.len(), spec.trials)?;
    table.sort();
    Ok(RunOutcome {
        table,
        failure: errors.into_iter().next(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{ExperimentKind, Profile};

    fn tiny(kind: ExperimentKind) -> ExperimentSpec {
        let mut s = ExperimentSpec::profile(Profile::Desk, kind);
        s.config.antennas = 4;
        s.config.subcarriers = 16;
        s.trials = 2;
        s.mc_glrt_trials = 50;
        s.distance_grid = vec![200.0, 1000.0];
        s
    }

    #[test]
    fn streams_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for r in 0..3 {
            for j in 0..3 {
                for p in 0..3 {
                    for purpose in 1..5 {
                        assert!(seen.insert(trial_rng(7, r, j, p, purpose).next_u64()));
                    }
                }
            }
        }
    }

    #[test]
    fn schemes_coincide_without_si() {
        let mut s = tiny(ExperimentKind::Solve);
        s.config.si_variance = 0.0;
        let inst = draw_instance(&s, 0);
        let delay = normalized_delay(s.config.target_distance, &s.config).unwrap();
        let d = design_schemes(&s, &inst, delay, 0).unwrap();
        let r0 = d[0].1.rho_value;
        for (_, sol) in &d {
            assert!(((sol.rho_value - r0) / r0).abs() <= 1e-9);
        }
        let single = run_scheme(Scheme::Wisi, &inst, delay, &s).unwrap();
        assert!(((single.rho_value - r0) / r0).abs() <= 1e-9);
    }

    #[test]
    fn adding_a_scheme_leaves_others_unchanged() {
        let mut a = tiny(ExperimentKind::Roc);
        a.schemes = vec![Scheme::Proposed];
        let mut b = a.clone();
        b.schemes = vec![Scheme::Proposed, Scheme::Wisi];
        let ta = run_roc(&a).unwrap().table;
        let tb = run_roc(&b).unwrap().table;
        for row in ta.rows() {
            assert_eq!(tb.get(&row.scheme, row.sweep_value, &row.metric), Some(row));
        }
    }

    #[test]
    fn roc_rows_are_complete_and_monotone() {
        let s = tiny(ExperimentKind::Roc);
        let out = run_roc(&s).unwrap();
        assert!(out.failure.is_none());
        assert_eq!(out.table.len(), 3 * 4 * 3);
        for scheme in ["proposed", "wosi", "wisi"] {
            let pd: Vec<f64> = s
                .pfa_grid
                .iter()
                .map(|p| out.table.get(scheme, *p, "pd_empirical").unwrap().value)
                .collect();
            assert!(pd.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn beta_zero_gives_false_alarm_rate() {
        let mut s = tiny(ExperimentKind::Roc);
        s.beta_zero = true;
        s.mc_glrt_trials = 1000;
        s.schemes = vec![Scheme::Proposed];
        let out = run_roc(&s).unwrap();
        for &p in &s.pfa_grid {
            let row = out.table.get("proposed", p, "pd_empirical").unwrap();
            let sigma = (p * (1.0 - p) / row.n as f64).sqrt();
            assert!((row.value - p).abs() <= 3.0 * sigma, "pfa {p}: {}", row.value);
        }
    }

    #[test]
    fn noiseless_sweep_recovers_direction() {
        let mut s = tiny(ExperimentKind::Sweep);
        s.noiseless = true;
        s.mc_glrt_trials = 10;
        let out = run_distance_sweep(&s).unwrap();
        for row in out.table.rows().iter().filter(|r| r.metric == "rmse_deg") {
            assert!(row.value <= 1e-6, "{row:?}");
        }
    }

    #[test]
    fn sweep_rejects_far_targets_before_compute() {
        let mut s = tiny(ExperimentKind::Sweep);
        s.distance_grid = vec![200.0, 1e5];
        assert!(run_distance_sweep(&s).unwrap_err().is_config());
    }

    #[test]
    fn solve_reports_feasible_designs() {
        let mut s = tiny(ExperimentKind::Solve);
        s.config.user_radius = 30.0;
        let out = run_solve(&s).unwrap();
        assert!(out.failure.is_none());
        for scheme in ["proposed", "wosi", "wisi"] {
            let feasible = out.table.get(scheme, s.config.target_distance, "feasible").unwrap();
            assert_eq!(feasible.value, 1.0);
            let res = out
                .table
                .get(scheme, s.config.target_distance, "feasibility_residual")
                .unwrap();
            assert!(res.value <= 1e-4 * s.config.thresholds()[0]);
            let power = out.table.get(scheme, s.config.target_distance, "power").unwrap();
            assert!(power.value <= s.config.tx_power * (1.0 + 1e-9));
        }
    }
}
