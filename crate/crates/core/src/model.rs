//! Allocation instances, request streams and realized outcomes.
//!
//! Channel index 0 is always the no-service channel: zero revenue and zero
//! consumption for every request type. All algorithms may pick it.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of the no-service channel.
pub const NO_SERVICE: usize = 0;

/// Tolerance on `Σ p = 1`.
pub const PROB_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("decision length ≠ T (expected {expected}, got {got})")]
    DecisionLength { expected: usize, got: usize },
    #[error("channel index {channel} out of range at position {position}")]
    InvalidChannel { position: usize, channel: usize },
    #[error("request type {ty} out of range at position {position}")]
    InvalidType { position: usize, ty: usize },
    #[error("cannot read instance {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed instance JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// On-disk layout of an instance. `a_bar`/`w_bar` are derived and never read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct InstanceFile {
    #[serde(rename = "K")]
    num_resources: usize,
    #[serde(rename = "J")]
    num_types: usize,
    #[serde(rename = "T")]
    horizon: usize,
    channels: Vec<String>,
    p: Vec<f64>,
    w: Vec<Vec<f64>>,
    a: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "L")]
    lower: Vec<f64>,
    #[serde(rename = "U")]
    upper: Vec<f64>,
}

/// `(name, w[j], a[j][k])` of one serving channel.
pub type ServiceChannel<'a> = (&'a str, Vec<f64>, Vec<Vec<f64>>);

/// Full problem data for one two-sided allocation instance.
///
/// `revenue[i][j]` is `w_ij`, `consumption[i][j][k]` is `a_ijk`. The maxima
/// `a_bar[k]` and `w_bar` are recomputed on every construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "InstanceFile", into = "InstanceFile")]
pub struct Instance {
    num_resources: usize,
    channels: Vec<String>,
    num_types: usize,
    probs: Vec<f64>,
    revenue: Vec<Vec<f64>>,
    consumption: Vec<Vec<Vec<f64>>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    horizon: usize,
    a_bar: Vec<f64>,
    w_bar: f64,
}

impl From<InstanceFile> for Instance {
    fn from(f: InstanceFile) -> Self {
        Instance::from_parts(
            f.num_resources,
            f.channels,
            f.num_types,
            f.p,
            f.w,
            f.a,
            f.lower,
            f.upper,
            f.horizon,
        )
    }
}

impl From<Instance> for InstanceFile {
    fn from(inst: Instance) -> Self {
        InstanceFile {
            num_resources: inst.num_resources,
            num_types: inst.num_types,
            horizon: inst.horizon,
            channels: inst.channels,
            p: inst.probs,
            w: inst.revenue,
            a: inst.consumption,
            lower: inst.lower,
            upper: inst.upper,
        }
    }
}

impl Instance {
    /// Builds an instance without validating it; see [`validate_instance`].
    ///
    /// Ragged shapes are tolerated here so that validation can report them.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        num_resources: usize,
        channels: Vec<String>,
        num_types: usize,
        probs: Vec<f64>,
        revenue: Vec<Vec<f64>>,
        consumption: Vec<Vec<Vec<f64>>>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        horizon: usize,
    ) -> Self {
        let a_bar = (0..num_resources)
            .map(|k| {
                consumption
                    .iter()
                    .flatten()
                    .filter_map(|per_k| per_k.get(k).copied())
                    .fold(0.0, f64::max)
            })
            .collect();
        let w_bar = revenue.iter().flatten().copied().fold(0.0, f64::max);
        Instance {
            num_resources,
            channels,
            num_types,
            probs,
            revenue,
            consumption,
            lower,
            upper,
            horizon,
            a_bar,
            w_bar,
        }
    }

    /// Convenience constructor: `named` holds the serving channels only, each
    /// as `(name, w[j], a[j][k])`; the no-service channel is prepended.
    pub fn with_service_channels(
        probs: Vec<f64>,
        named: Vec<ServiceChannel<'_>>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        horizon: usize,
    ) -> Self {
        let num_types = probs.len();
        let num_resources = lower.len();
        let mut channels = vec!["none".to_string()];
        let mut revenue = vec![vec![0.0; num_types]];
        let mut consumption = vec![vec![vec![0.0; num_resources]; num_types]];
        for (name, w, a) in named {
            channels.push(name.to_string());
            revenue.push(w);
            consumption.push(a);
        }
        Instance::from_parts(
            num_resources,
            channels,
            num_types,
            probs,
            revenue,
            consumption,
            lower,
            upper,
            horizon,
        )
    }

    pub fn from_json_str(s: &str) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serialization cannot fail")
    }

    pub fn num_resources(&self) -> usize {
        self.num_resources
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channels
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn revenue(&self, channel: usize, ty: usize) -> f64 {
        self.revenue[channel][ty]
    }

    /// Per-resource consumption of serving a type-`ty` request on `channel`.
    pub fn consumption(&self, channel: usize, ty: usize) -> &[f64] {
        &self.consumption[channel][ty]
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn a_bar(&self) -> &[f64] {
        &self.a_bar
    }

    pub fn w_bar(&self) -> f64 {
        self.w_bar
    }

    /// Same instance over a different horizon, with both bound vectors
    /// scaled linearly in `T`.
    pub fn with_horizon(&self, horizon: usize) -> Self {
        let scale = horizon as f64 / self.horizon as f64;
        let mut out = self.clone();
        out.horizon = horizon;
        out.lower.iter_mut().for_each(|l| *l *= scale);
        out.upper.iter_mut().for_each(|u| *u *= scale);
        out
    }

    pub fn with_bounds(&self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        let mut out = self.clone();
        out.lower = lower;
        out.upper = upper;
        out
    }
}

/// Every violated invariant of an instance, one message per breach.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.issues.iter().any(|m| m.contains(needle))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return write!(f, "instance is valid");
        }
        for (n, issue) in self.issues.iter().enumerate() {
            if n > 0 {
                writeln!(f)?;
            }
            write!(f, "- {issue}")?;
        }
        Ok(())
    }
}

pub fn validate_instance(inst: &Instance) -> ValidationReport {
    let mut issues = Vec::new();
    let (k_count, j_count, i_count) = (inst.num_resources, inst.num_types, inst.channels.len());

    if k_count == 0 {
        issues.push("no resources (K = 0)".to_string());
    }
    if j_count == 0 {
        issues.push("no request types (J = 0)".to_string());
    }
    if i_count < 2 {
        issues.push("need the no-service channel plus at least one serving channel".to_string());
    }
    if inst.horizon == 0 {
        issues.push("horizon T must be positive".to_string());
    }
    if inst.probs.len() != j_count {
        issues.push(format!("p has length {}, expected J={j_count}", inst.probs.len()));
    }
    if inst.lower.len() != k_count {
        issues.push(format!("L has length {}, expected K={k_count}", inst.lower.len()));
    }
    if inst.upper.len() != k_count {
        issues.push(format!("U has length {}, expected K={k_count}", inst.upper.len()));
    }
    if inst.revenue.len() != i_count {
        issues.push(format!("w has {} rows, expected {i_count} channels", inst.revenue.len()));
    }
    if inst.consumption.len() != i_count {
        issues.push(format!("a has {} rows, expected {i_count} channels", inst.consumption.len()));
    }
    let shapes_ok = issues.is_empty()
        && inst.revenue.iter().all(|row| row.len() == j_count)
        && inst
            .consumption
            .iter()
            .all(|row| row.len() == j_count && row.iter().all(|ks| ks.len() == k_count));
    if issues.is_empty() && !shapes_ok {
        issues.push("w must be I×J and a must be I×J×K".to_string());
    }
    if !shapes_ok {
        return ValidationReport { issues };
    }

    if inst.probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        issues.push("probabilities must be finite and non-negative".to_string());
    }
    let total: f64 = inst.probs.iter().sum();
    if (total - 1.0).abs() > PROB_SUM_TOL {
        issues.push(format!("probabilities do not sum to 1 (sum = {total})"));
    }
    for i in 0..i_count {
        for j in 0..j_count {
            let w = inst.revenue[i][j];
            if !w.is_finite() || w < 0.0 {
                issues.push(format!("w[{i}][{j}] = {w} must be finite and non-negative"));
            }
            for (k, &a) in inst.consumption[i][j].iter().enumerate() {
                if !a.is_finite() || a < 0.0 {
                    issues.push(format!("a[{i}][{j}][{k}] = {a} must be finite and non-negative"));
                }
            }
        }
    }
    let no_service_clean = inst.revenue[NO_SERVICE].iter().all(|&w| w == 0.0)
        && inst.consumption[NO_SERVICE].iter().flatten().all(|&a| a == 0.0);
    if !no_service_clean {
        issues.push("channel 0 (no service) must have zero revenue and consumption".to_string());
    }
    for k in 0..k_count {
        let (l, u) = (inst.lower[k], inst.upper[k]);
        if !l.is_finite() || !u.is_finite() {
            issues.push(format!("bounds for k={k} must be finite"));
            continue;
        }
        if l < 0.0 {
            issues.push(format!("L is negative for k={k}"));
        }
        if l > u {
            issues.push(format!("L exceeds U for k={k}"));
        }
        // Every rate constant divides by the per-resource maximum.
        if inst.a_bar[k] <= 0.0 {
            issues.push(format!("resource k={k} is never consumed (a_bar = 0)"));
        }
    }
    ValidationReport { issues }
}

/// A seeded i.i.d. sequence of request-type indices of length `T`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestStream {
    pub types: Vec<usize>,
    pub seed: u64,
}

impl RequestStream {
    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }
}

/// Normalized cumulative distribution of the request types.
fn cumulative(probs: &[f64]) -> Vec<f64> {
    let total: f64 = probs.iter().sum();
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = probs
        .iter()
        .map(|p| {
            acc += p;
            acc / total
        })
        .collect();
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    cdf
}

/// Draws `n` types by inverse CDF from a ChaCha stream keyed by `seed`.
pub fn sample_types(probs: &[f64], n: usize, seed: u64) -> Vec<usize> {
    let cdf = cumulative(probs);
    let last = cdf.len().saturating_sub(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            cdf.partition_point(|&c| c <= u).min(last)
        })
        .collect()
}

pub fn sample_stream(inst: &Instance, seed: u64) -> RequestStream {
    RequestStream {
        types: sample_types(&inst.probs, inst.horizon, seed),
        seed,
    }
}

/// Realized consumption, revenue and constraint status of a decision vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationOutcome {
    pub decisions: Vec<usize>,
    pub consumption: Vec<f64>,
    pub revenue: f64,
    pub lower_ok: Vec<bool>,
    pub upper_ok: Vec<bool>,
    pub feasible: bool,
}

pub fn evaluate_outcome(
    inst: &Instance,
    stream: &RequestStream,
    decisions: &[usize],
) -> Result<AllocationOutcome, ModelError> {
    if decisions.len() != inst.horizon || stream.types.len() != inst.horizon {
        return Err(ModelError::DecisionLength {
            expected: inst.horizon,
            got: if decisions.len() != inst.horizon {
                decisions.len()
            } else {
                stream.types.len()
            },
        });
    }
    let mut consumption = vec![0.0; inst.num_resources];
    let mut revenue = 0.0;
    for (position, (&channel, &ty)) in decisions.iter().zip(&stream.types).enumerate() {
        if channel >= inst.channels.len() {
            return Err(ModelError::InvalidChannel { position, channel });
        }
        if ty >= inst.num_types {
            return Err(ModelError::InvalidType { position, ty });
        }
        revenue += inst.revenue[channel][ty];
        for (total, a) in consumption.iter_mut().zip(&inst.consumption[channel][ty]) {
            *total += a;
        }
    }
    let lower_ok: Vec<bool> = consumption.iter().zip(&inst.lower).map(|(c, l)| c >= l).collect();
    let upper_ok: Vec<bool> = consumption.iter().zip(&inst.upper).map(|(c, u)| c <= u).collect();
    let feasible = lower_ok.iter().chain(&upper_ok).all(|&ok| ok);
    Ok(AllocationOutcome {
        decisions: decisions.to_vec(),
        consumption,
        revenue,
        lower_ok,
        upper_ok,
        feasible,
    })
}

/// Parameters of the random instance generator.
///
/// An interior policy is drawn first; `L_k` is placed `lower_margin·T·ā_k`
/// below its expected consumption (clipped at zero) and `U_k` is placed
/// `upper_margin·T·ā_k` above it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub resources: usize,
    pub types: usize,
    /// Serving channels, not counting the no-service channel.
    pub channels: usize,
    pub horizon: usize,
    #[serde(default = "default_margin")]
    pub lower_margin: f64,
    #[serde(default = "default_margin")]
    pub upper_margin: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_margin() -> f64 {
    0.1
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            resources: 2,
            types: 3,
            channels: 2,
            horizon: 1000,
            lower_margin: default_margin(),
            upper_margin: default_margin(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedInstance {
    pub instance: Instance,
    /// The interior policy `x[i][j]` the bounds were built around.
    pub policy: Vec<Vec<f64>>,
    /// A certified lower bound on the measure of feasibility.
    pub xi_lower_bound: f64,
}

pub fn generate_instance(params: &GeneratorParams) -> GeneratedInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (kc, jc, ic) = (params.resources, params.types, params.channels + 1);
    let t = params.horizon as f64;

    let weights: Vec<f64> = (0..jc).map(|_| rng.gen_range(0.2..1.0)).collect();
    let wsum: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / wsum).collect();

    let mut revenue = vec![vec![0.0; jc]; ic];
    let mut consumption = vec![vec![vec![0.0; kc]; jc]; ic];
    for i in 1..ic {
        for j in 0..jc {
            revenue[i][j] = rng.gen_range(0.0..1.0);
            for k in 0..kc {
                consumption[i][j][k] = rng.gen_range(0.0..1.0);
            }
        }
    }

    let mut policy = vec![vec![0.0; jc]; ic];
    for j in 0..jc {
        let mass: f64 = rng.gen_range(0.5..0.9);
        let split: Vec<f64> = (1..ic).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = split.iter().sum();
        for i in 1..ic {
            policy[i][j] = mass * split[i - 1] / total;
        }
    }

    let a_bar: Vec<f64> = (0..kc)
        .map(|k| {
            consumption
                .iter()
                .flatten()
                .map(|ks| ks[k])
                .fold(0.0, f64::max)
        })
        .collect();
    let mut lower = vec![0.0; kc];
    let mut upper = vec![0.0; kc];
    let mut xi_lower_bound = f64::INFINITY;
    for k in 0..kc {
        let expected: f64 = (0..ic)
            .flat_map(|i| (0..jc).map(move |j| (i, j)))
            .map(|(i, j)| t * probs[j] * consumption[i][j][k] * policy[i][j])
            .sum();
        lower[k] = (expected - params.lower_margin * t * a_bar[k]).max(0.0);
        upper[k] = expected + params.upper_margin * t * a_bar[k];
        let slack = (expected - lower[k]) / (t * a_bar[k]);
        xi_lower_bound = xi_lower_bound.min(slack);
    }

    let mut channels = vec!["none".to_string()];
    channels.extend((1..ic).map(|i| format!("c{i}")));
    let instance = Instance::from_parts(
        kc,
        channels,
        jc,
        probs,
        revenue,
        consumption,
        lower,
        upper,
        params.horizon,
    );
    GeneratedInstance {
        instance,
        policy,
        xi_lower_bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_instance(t: usize) -> Instance {
        Instance::with_service_channels(
            vec![1.0],
            vec![("c1", vec![1.0], vec![vec![1.0]])],
            vec![0.0],
            vec![t as f64],
            t,
        )
    }

    #[test]
    fn unit_instance_is_valid() {
        let report = validate_instance(&unit_instance(5));
        assert!(report.is_empty(), "{report}");
    }

    #[test]
    fn lower_above_upper_is_reported() {
        let inst = unit_instance(5);
        let bad = inst.with_bounds(vec![6.0], vec![5.0]);
        assert!(validate_instance(&bad).contains("L exceeds U for k=0"));
    }

    #[test]
    fn probabilities_must_sum_to_one() {
        let inst = Instance::with_service_channels(
            vec![0.5],
            vec![("c1", vec![1.0], vec![vec![1.0]])],
            vec![0.0],
            vec![5.0],
            5,
        );
        assert!(validate_instance(&inst).contains("probabilities do not sum to 1"));
    }

    #[test]
    fn dirty_no_service_channel_and_negative_entries() {
        let inst = Instance::from_parts(
            1,
            vec!["none".into(), "c1".into()],
            1,
            vec![1.0],
            vec![vec![0.5], vec![-1.0]],
            vec![vec![vec![0.0]], vec![vec![f64::NAN]]],
            vec![0.0],
            vec![1.0],
            1,
        );
        let report = validate_instance(&inst);
        assert!(report.contains("no service"));
        assert!(report.contains("w[1][0]"));
        assert!(report.contains("a[1][0][0]"));
    }

    #[test]
    fn ragged_shapes_are_reported_not_panicking() {
        let inst = Instance::from_parts(
            2,
            vec!["none".into(), "c1".into()],
            1,
            vec![1.0],
            vec![vec![0.0], vec![1.0]],
            vec![vec![vec![0.0, 0.0]], vec![vec![1.0]]],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            1,
        );
        assert!(validate_instance(&inst).contains("I×J×K"));
    }

    #[test]
    fn maxima_are_recomputed() {
        let inst = Instance::with_service_channels(
            vec![0.5, 0.5],
            vec![
                ("c1", vec![0.3, 2.0], vec![vec![1.0, 0.0], vec![0.5, 4.0]]),
                ("c2", vec![1.5, 0.1], vec![vec![3.0, 0.2], vec![0.0, 0.0]]),
            ],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            10,
        );
        assert_eq!(inst.a_bar(), &[3.0, 4.0]);
        assert_eq!(inst.w_bar(), 2.0);
    }

    #[test]
    fn json_roundtrip_ignores_derived_fields() {
        let inst = unit_instance(7);
        let text = inst.to_json_string();
        assert!(text.contains("\"K\""));
        assert!(!text.contains("a_bar"));
        let back = Instance::from_json_str(&text).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn point_mass_stream() {
        let inst = unit_instance(5);
        assert_eq!(sample_stream(&inst, 123).types, vec![0; 5]);
    }

    #[test]
    fn stream_is_deterministic_in_seed() {
        let probs = [0.2, 0.3, 0.5];
        assert_eq!(sample_types(&probs, 1000, 9), sample_types(&probs, 1000, 9));
        assert_ne!(sample_types(&probs, 1000, 9), sample_types(&probs, 1000, 10));
    }

    #[test]
    fn zero_probability_types_never_drawn() {
        let types = sample_types(&[0.0, 0.5, 0.0, 0.5, 0.0], 20_000, 3);
        assert!(types.iter().all(|&t| t == 1 || t == 3));
    }

    #[test]
    fn fair_coin_frequency() {
        let types = sample_types(&[0.5, 0.5], 100_000, 7);
        let freq = types.iter().filter(|&&t| t == 0).count() as f64 / 1e5;
        assert!((freq - 0.5).abs() <= 0.01, "freq = {freq}");
    }

    #[test]
    fn all_no_service_outcome() {
        let inst = unit_instance(4);
        let stream = sample_stream(&inst, 0);
        let out = evaluate_outcome(&inst, &stream, &[NO_SERVICE; 4]).unwrap();
        assert_eq!(out.revenue, 0.0);
        assert_eq!(out.consumption, vec![0.0]);
        assert!(out.feasible);

        let strict = inst.with_bounds(vec![1.0], vec![4.0]);
        let out = evaluate_outcome(&strict, &stream, &[NO_SERVICE; 4]).unwrap();
        assert!(!out.feasible);
        assert_eq!(out.lower_ok, vec![false]);
    }

    #[test]
    fn direct_sum_outcome() {
        let inst = unit_instance(3);
        let stream = sample_stream(&inst, 0);
        let out = evaluate_outcome(&inst, &stream, &[1, 0, 1]).unwrap();
        assert_eq!(out.revenue, 2.0);
        assert_eq!(out.consumption, vec![2.0]);
    }

    #[test]
    fn decision_length_mismatch() {
        let inst = unit_instance(3);
        let stream = sample_stream(&inst, 0);
        let err = evaluate_outcome(&inst, &stream, &[1, 0]).unwrap_err();
        assert!(err.to_string().contains("decision length ≠ T"));
        assert!(matches!(
            evaluate_outcome(&inst, &stream, &[1, 0, 5]),
            Err(ModelError::InvalidChannel { position: 2, channel: 5 })
        ));
    }

    #[test]
    fn generator_produces_valid_instances() {
        for seed in 0..20 {
            let g = generate_instance(&GeneratorParams {
                seed,
                ..GeneratorParams::default()
            });
            let report = validate_instance(&g.instance);
            assert!(report.is_empty(), "seed {seed}: {report}");
            assert!(g.xi_lower_bound > 0.0);
        }
    }
}
