use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AlgorithmChoice, ExperimentConfig, HarnessError, InstanceSource};
use crate::model::{sample_stream, validate_instance, Instance};
use crate::offline::{
    compute_gammas, factor_revealing_t, measure_of_feasibility, solve_expected, tau, GammaReport,
    OfflineError,
};
use crate::online::{run_alg_a, run_alg_a1, run_alg_a2, run_ptilde, RunOptions, RunTrace};

/// Offline quantities every trial of one experiment shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub w_e: f64,
    pub xi_star: f64,
    pub tau: f64,
    /// `None` when `E(τ)` is infeasible.
    pub w_tau: Option<f64>,
    pub t_star: Option<f64>,
    pub gammas: GammaReport,
}

impl OracleSummary {
    pub fn compute(inst: &Instance, epsilon: f64, gamma_c: f64) -> Result<Self, HarnessError> {
        let oracle_err = |e: OfflineError| HarnessError::OracleInfeasible(e.to_string());
        let w_e = solve_expected(inst, 0.0).map_err(oracle_err)?.w_beta;
        let xi_star = measure_of_feasibility(inst).map_err(oracle_err)?.xi_star;
        let tau = tau(epsilon);
        let w_tau = solve_expected(inst, tau).ok().map(|s| s.w_beta);
        let t_star = factor_revealing_t(inst, epsilon).ok();
        Ok(OracleSummary {
            w_e,
            xi_star,
            tau,
            w_tau,
            t_star,
            gammas: compute_gammas(inst, epsilon, gamma_c),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub seed: u64,
    pub revenue: f64,
    /// `revenue / W_E`; absent when `W_E = 0`.
    pub ratio: Option<f64>,
    pub feasible: bool,
    pub lower_violated: Vec<bool>,
    pub upper_violated: Vec<bool>,
    pub failure: Option<String>,
}

/// Experiment-level numbers. Undefined or infinite quantities are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub algorithm: String,
    pub epsilon: f64,
    pub trials: usize,
    pub base_seed: u64,
    pub resources: usize,
    pub horizon: usize,
    pub w_e: f64,
    pub w_tau: Option<f64>,
    pub xi_star: f64,
    pub tau: f64,
    pub gamma: Option<f64>,
    pub gamma1: Option<f64>,
    pub gamma1_capped: Option<f64>,
    pub gamma2: Option<f64>,
    pub gamma_threshold: f64,
    pub within_regime: bool,
    pub t_star: Option<f64>,
    pub mean_revenue: Option<f64>,
    pub mean_ratio: Option<f64>,
    pub median_ratio: Option<f64>,
    pub infeasibility_frequency: Option<f64>,
    pub failure_probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub aggregates: Aggregates,
    pub trials: Vec<TrialRow>,
}

fn finite(x: Option<f64>) -> Option<f64> {
    x.filter(|v| v.is_finite())
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

/// Runs one trial of the configured algorithm on the stream drawn with `seed`.
pub fn run_trial(
    inst: &Instance,
    config: &ExperimentConfig,
    oracle: &OracleSummary,
    seed: u64,
) -> Result<RunTrace, HarnessError> {
    let stream = sample_stream(inst, seed);
    let eps = config.epsilon;
    let opts = RunOptions::default();
    let gamma1 = || {
        oracle.gammas.gamma1_effective().ok_or_else(|| {
            HarnessError::OracleInfeasible("gamma1 is undefined for this instance".into())
        })
    };
    let trace = match config.algorithm {
        AlgorithmChoice::PTilde => run_ptilde(inst, &stream, eps)?,
        AlgorithmChoice::AlgA => {
            let w_tau = oracle.w_tau.ok_or_else(|| {
                HarnessError::OracleInfeasible(format!("E(τ) infeasible for τ = {}", oracle.tau))
            })?;
            run_alg_a(inst, &stream, eps, w_tau, &opts)?
        }
        AlgorithmChoice::AlgA1 => {
            let xi = config.xi.unwrap_or(oracle.xi_star);
            run_alg_a1(inst, &stream, eps, gamma1()?, xi, &opts)?
        }
        AlgorithmChoice::AlgA2 => {
            run_alg_a2(inst, &stream, eps, gamma1()?, oracle.gammas.gamma2, &opts)?
        }
        AlgorithmChoice::OfflineOnly => {
            return Err(HarnessError::Config("offline-only runs no trials".into()))
        }
    };
    Ok(trace)
}

fn trial_row(seed: u64, w_e: f64, trace: &RunTrace) -> TrialRow {
    let out = &trace.outcome;
    TrialRow {
        seed,
        revenue: out.revenue,
        ratio: (w_e > 0.0).then(|| out.revenue / w_e),
        feasible: out.feasible,
        lower_violated: out.lower_ok.iter().map(|ok| !ok).collect(),
        upper_violated: out.upper_ok.iter().map(|ok| !ok).collect(),
        failure: trace.failure.as_ref().map(|f| f.to_string()),
    }
}

/// Runs `config.trials` independent trials with seeds
/// `config.seed .. config.seed + trials`, in parallel, and aggregates them.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricsReport, HarnessError> {
    config.validate()?;
    let inst = config.instance.resolve()?;
    let issues = validate_instance(&inst);
    if !issues.is_empty() {
        return Err(HarnessError::Config(format!("invalid instance: {issues}")));
    }
    let oracle = OracleSummary::compute(&inst, config.epsilon, config.gamma_c)?;

    let trials: Vec<TrialRow> = if config.algorithm == AlgorithmChoice::OfflineOnly {
        Vec::new()
    } else {
        (0..config.trials as u64)
            .into_par_iter()
            .map(|i| {
                let seed = config.seed.wrapping_add(i);
                run_trial(&inst, config, &oracle, seed).map(|t| trial_row(seed, oracle.w_e, &t))
            })
            .collect::<Result<_, _>>()?
    };

    let revenues: Vec<f64> = trials.iter().map(|t| t.revenue).collect();
    let ratios: Vec<f64> = trials.iter().filter_map(|t| t.ratio).collect();
    let n = trials.len() as f64;
    let frequency = |count: usize| (!trials.is_empty()).then(|| count as f64 / n);
    let g = &oracle.gammas;
    let aggregates = Aggregates {
        algorithm: config.algorithm.name().to_string(),
        epsilon: config.epsilon,
        trials: trials.len(),
        base_seed: config.seed,
        resources: inst.num_resources(),
        horizon: inst.horizon(),
        w_e: oracle.w_e,
        w_tau: oracle.w_tau,
        xi_star: oracle.xi_star,
        tau: oracle.tau,
        gamma: finite(g.gamma),
        gamma1: finite(g.gamma1),
        gamma1_capped: finite(g.gamma1_capped),
        gamma2: finite(Some(g.gamma2)),
        gamma_threshold: g.threshold,
        within_regime: g.within_regime,
        t_star: finite(oracle.t_star),
        mean_revenue: mean(&revenues),
        mean_ratio: mean(&ratios),
        median_ratio: median(&ratios),
        infeasibility_frequency: frequency(trials.iter().filter(|t| !t.feasible).count()),
        failure_probability: frequency(trials.iter().filter(|t| t.failure.is_some()).count()),
    };
    Ok(MetricsReport { aggregates, trials })
}

/// One point of an `(ε, T)` sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub epsilon: f64,
    pub horizon: usize,
    pub xi_star: f64,
    pub within_regime: bool,
    pub mean_ratio: Option<f64>,
    pub median_ratio: Option<f64>,
    pub infeasibility_frequency: Option<f64>,
    pub failure_probability: Option<f64>,
}

/// Reruns `base` for every `(ε, T)` pair; bounds scale with `T`.
pub fn run_bench(
    base: &ExperimentConfig,
    epsilons: &[f64],
    horizons: &[usize],
) -> Result<Vec<BenchRow>, HarnessError> {
    let inst = base.instance.resolve()?;
    let mut rows = Vec::with_capacity(epsilons.len() * horizons.len());
    for &horizon in horizons {
        let scaled = inst.with_horizon(horizon);
        for &epsilon in epsilons {
            let mut config = base.clone();
            config.epsilon = epsilon;
            config.instance = InstanceSource::Inline(scaled.clone());
            let a = run_experiment(&config)?.aggregates;
            rows.push(BenchRow {
                epsilon,
                horizon,
                xi_star: a.xi_star,
                within_regime: a.within_regime,
                mean_ratio: a.mean_ratio,
                median_ratio: a.median_ratio,
                infeasibility_frequency: a.infeasibility_frequency,
                failure_probability: a.failure_probability,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GeneratorParams;

    fn generated(algorithm: AlgorithmChoice, trials: usize) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(
            InstanceSource::Generator(GeneratorParams {
                horizon: 400,
                seed: 3,
                ..Default::default()
            }),
            algorithm,
            0.1,
        );
        c.trials = trials;
        c.seed = 100;
        c
    }

    #[test]
    fn offline_only_has_no_rows() {
        let report = run_experiment(&generated(AlgorithmChoice::OfflineOnly, 1)).unwrap();
        assert!(report.trials.is_empty());
        assert!(report.aggregates.w_e > 0.0);
        assert!(report.aggregates.xi_star > 0.0);
        assert!(report.aggregates.mean_ratio.is_none());
    }

    #[test]
    fn seeds_are_consecutive_and_ratios_share_w_e() {
        let report = run_experiment(&generated(AlgorithmChoice::PTilde, 5)).unwrap();
        let seeds: Vec<u64> = report.trials.iter().map(|t| t.seed).collect();
        assert_eq!(seeds, vec![100, 101, 102, 103, 104]);
        let w_e = solve_expected(&generated(AlgorithmChoice::PTilde, 1).instance.resolve().unwrap(), 0.0)
            .unwrap()
            .w_beta;
        assert_eq!(report.aggregates.w_e.to_bits(), w_e.to_bits());
        for t in &report.trials {
            assert_eq!(t.ratio.unwrap(), t.revenue / w_e);
        }
    }

    #[test]
    fn trial_depends_only_on_its_seed() {
        let a = run_experiment(&generated(AlgorithmChoice::AlgA, 4)).unwrap();
        let mut single = generated(AlgorithmChoice::AlgA, 1);
        single.seed = 102;
        let b = run_experiment(&single).unwrap();
        assert_eq!(a.trials[2], b.trials[0]);
    }

    #[test]
    fn failure_probability_counts_failed_trials() {
        let mut c = generated(AlgorithmChoice::AlgA1, 3);
        // A margin barely above ε makes Z_r tiny but still runs.
        c.xi = Some(0.1 + 1e-3);
        let report = run_experiment(&c).unwrap();
        let failed = report.trials.iter().filter(|t| t.failure.is_some()).count();
        assert_eq!(report.aggregates.failure_probability, Some(failed as f64 / 3.0));
    }

    #[test]
    fn infeasible_oracle_is_reported() {
        let inst = Instance::with_service_channels(
            vec![1.0],
            vec![("c1", vec![1.0], vec![vec![1.0]])],
            vec![50.0],
            vec![60.0],
            40,
        );
        let c = ExperimentConfig::new(InstanceSource::Inline(inst), AlgorithmChoice::PTilde, 0.1);
        let err = run_experiment(&c).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn median_of_even_count() {
        assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
