//! Monte Carlo execution of the 4-step certification protocol against
//! configurable honest and adversarial sources.
//!
//! Every trial derives its RNG from `(master_seed, trial_index)` via
//! independent ChaCha streams, so estimates do not depend on worker count or
//! scheduling order.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{
    soundness_conditional_bound, soundness_joint_bound, BoundValue, ProtocolParams,
};
use crate::gaussian::{GaussianState, NullifierSampler};
use crate::graph::{NoiseModel, WeightedGraph};
use crate::{Error, Result};

/// Family of register sequences a (possibly dishonest) source can emit.
/// All variants are permutation-invariant in distribution. Shifts are
/// p-quadrature displacements, length n per register.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SourceModel {
    /// i.i.d. finitely squeezed graph states.
    Honest { sigma: f64 },
    /// Every register displaced by the same shift vector.
    DisplacedIID { sigma: f64, shift: Vec<f64> },
    /// Each register independently bad (shifted) with probability `bad_fraction`.
    Mixture {
        sigma: f64,
        bad_fraction: f64,
        bad_shift: Vec<f64>,
    },
    /// Exactly `bad_count` shifted registers at uniformly random positions.
    PermutedBlock {
        sigma: f64,
        bad_count: u64,
        bad_shift: Vec<f64>,
    },
}

impl SourceModel {
    pub fn sigma(&self) -> f64 {
        match self {
            Self::Honest { sigma }
            | Self::DisplacedIID { sigma, .. }
            | Self::Mixture { sigma, .. }
            | Self::PermutedBlock { sigma, .. } => *sigma,
        }
    }

    fn validate(&self, n: usize, n_total: u64) -> Result<()> {
        if !(self.sigma() > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "source sigma must be positive, got {}",
                self.sigma()
            )));
        }
        let check_shift = |s: &Vec<f64>| -> Result<()> {
            if s.len() != n {
                return Err(Error::InvalidParameter(format!(
                    "shift vector length {} does not match n={n}",
                    s.len()
                )));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(
                    "shift vector must be finite".into(),
                ));
            }
            Ok(())
        };
        match self {
            Self::Honest { .. } => Ok(()),
            Self::DisplacedIID { shift, .. } => check_shift(shift),
            Self::Mixture {
                bad_fraction,
                bad_shift,
                ..
            } => {
                if !(0.0..=1.0).contains(bad_fraction) {
                    return Err(Error::InvalidParameter(format!(
                        "bad_fraction must be in [0, 1], got {bad_fraction}"
                    )));
                }
                check_shift(bad_shift)
            }
            Self::PermutedBlock {
                bad_count,
                bad_shift,
                ..
            } => {
                if *bad_count > n_total {
                    return Err(Error::InvalidParameter(format!(
                        "bad_count {bad_count} exceeds N_total {n_total}"
                    )));
                }
                check_shift(bad_shift)
            }
        }
    }

    /// True when this register (index drawn fresh per run) carries the bad
    /// shift. Mixture uses an independent coin; PermutedBlock marks the
    /// first `bad_count` positions before the global shuffle.
    fn is_shifted_slot(&self, slot: u64, rng: &mut impl Rng) -> bool {
        match self {
            Self::Honest { .. } => false,
            Self::DisplacedIID { .. } => true,
            Self::Mixture { bad_fraction, .. } => rng.gen::<f64>() < *bad_fraction,
            Self::PermutedBlock { bad_count, .. } => slot < *bad_count,
        }
    }

    fn shift(&self) -> Option<&[f64]> {
        match self {
            Self::Honest { .. } => None,
            Self::DisplacedIID { shift, .. } => Some(shift),
            Self::Mixture { bad_shift, .. } | Self::PermutedBlock { bad_shift, .. } => {
                Some(bad_shift)
            }
        }
    }
}

/// Descriptor of one register as emitted by the source.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegisterDescriptor {
    pub sigma: f64,
    /// p-displacement per mode; `None` means the zero vector.
    pub shift: Option<Vec<f64>>,
}

/// One measurement record: nullifier index, register id, outcome, pass draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasurementRecord {
    pub nullifier: usize,
    pub register: u64,
    pub outcome: f64,
    pub passed: bool,
}

/// Result of one full protocol run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub accepted: bool,
    pub n_pass: u64,
    pub threshold: u64,
    pub measurements: Vec<MeasurementRecord>,
    pub kept_registers: Vec<RegisterDescriptor>,
    pub seed: u64,
}

/// Monte Carlo estimate paired with its closed-form bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub trials: u64,
    /// Accepting runs (equals `trials` for unconditional estimates).
    pub accepting_runs: u64,
    pub bound: BoundValue,
    pub violated: bool,
}

/// Eigenvalue of the acceptance POVM on a displaced graph state:
/// `prod_j eps/sqrt(eps^2 + delta_j^2 + 1/sigma^2) * exp(-s_j^2/(eps^2 + delta_j^2 + 1/sigma^2))`.
///
/// `sigma = f64::INFINITY` is permitted here (ideal-state closed form).
pub fn register_pass_probability(
    shift: &[f64],
    sigma: f64,
    epsilon: f64,
    delta_vec: &[f64],
) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if shift.len() != delta_vec.len() {
        return Err(Error::InvalidParameter(format!(
            "shift length {} does not match delta length {}",
            shift.len(),
            delta_vec.len()
        )));
    }
    let inv_sigma_sq = if sigma.is_finite() {
        1.0 / (sigma * sigma)
    } else {
        0.0
    };
    let mut prob = 1.0;
    for (&s, &d) in shift.iter().zip(delta_vec) {
        let denom = epsilon * epsilon + d * d + inv_sigma_sq;
        prob *= epsilon / denom.sqrt() * (-s * s / denom).exp();
    }
    Ok(prob)
}

fn pass_probability_of(desc: &RegisterDescriptor, epsilon: f64, delta_vec: &[f64]) -> Result<f64> {
    let zero;
    let shift: &[f64] = match &desc.shift {
        Some(s) => s,
        None => {
            zero = vec![0.0; delta_vec.len()];
            &zero
        }
    };
    register_pass_probability(shift, desc.sigma, epsilon, delta_vec)
}

/// Prepared per-graph sampling machinery, reused across trials.
struct RunContext {
    samplers: Vec<NullifierSampler>,
    delta_vec: Vec<f64>,
    threshold: u64,
    n: usize,
    n_test: u64,
    n_total: u64,
    epsilon: f64,
    k: u64,
}

impl RunContext {
    fn prepare(
        graph: &WeightedGraph,
        params: &ProtocolParams,
        noise: &NoiseModel,
        source: &SourceModel,
        k: u64,
    ) -> Result<Self> {
        if graph.n() != params.n {
            return Err(Error::InvalidParameter(format!(
                "graph has {} vertices but params.n = {}",
                graph.n(),
                params.n
            )));
        }
        source.validate(params.n, params.n_total)?;
        let tests = params.n as u64 * params.n_test;
        if params.n_total < tests + k {
            return Err(Error::Insufficient(format!(
                "N_total={} cannot cover {} test slots plus k={k} kept registers",
                params.n_total, tests
            )));
        }
        let state = GaussianState::graph_state(graph, source.sigma())?;
        let samplers = (1..=graph.n())
            .map(|i| {
                let spec = graph.nullifier_coefficients(i)?;
                NullifierSampler::prepare(&state, &spec, noise)
            })
            .collect::<Result<Vec<_>>>()?;
        let delta_vec = graph.combined_noise_vector(noise);
        let threshold = ((1.0 - params.f) * tests as f64).ceil() as u64;
        Ok(Self {
            samplers,
            delta_vec,
            threshold,
            n: params.n,
            n_test: params.n_test,
            n_total: params.n_total,
            epsilon: params.epsilon,
            k,
        })
    }

    /// One protocol run. Slot randomization: registers are shuffled once,
    /// then the first n*N_test feed the test slots and the next k are kept.
    fn run(
        &self,
        source: &SourceModel,
        rng: &mut ChaCha12Rng,
        seed: u64,
        record: bool,
    ) -> RunOutcome {
        let mut order: Vec<u64> = (0..self.n_total).collect();
        order.shuffle(rng);
        let shifted: Vec<bool> = order
            .iter()
            .map(|&slot| source.is_shifted_slot(slot, rng))
            .collect();

        let mut n_pass = 0u64;
        let mut measurements = Vec::new();
        if record {
            measurements.reserve(self.n * self.n_test as usize);
        }
        let mut idx = 0usize;
        for nullifier in 1..=self.n {
            let sampler = &self.samplers[nullifier - 1];
            for _ in 0..self.n_test {
                let p_shift = if shifted[idx] {
                    source.shift().map_or(0.0, |s| s[nullifier - 1])
                } else {
                    0.0
                };
                let g = sampler.sample_shifted(rng, p_shift);
                let accept_prob = (-g * g / (self.epsilon * self.epsilon)).exp();
                let passed = rng.gen::<f64>() < accept_prob;
                if passed {
                    n_pass += 1;
                }
                if record {
                    measurements.push(MeasurementRecord {
                        nullifier,
                        register: order[idx],
                        outcome: g,
                        passed,
                    });
                }
                idx += 1;
            }
        }
        let kept_registers = (0..self.k as usize)
            .map(|j| RegisterDescriptor {
                sigma: source.sigma(),
                shift: if shifted[idx + j] {
                    source.shift().map(|s| s.to_vec())
                } else {
                    None
                },
            })
            .collect();
        RunOutcome {
            accepted: n_pass >= self.threshold,
            n_pass,
            threshold: self.threshold,
            measurements,
            kept_registers,
            seed,
        }
    }
}

fn trial_rng(master_seed: u64, trial: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}

/// Executes one full protocol run with per-measurement records.
pub fn run_protocol(
    graph: &WeightedGraph,
    params: &ProtocolParams,
    noise: &NoiseModel,
    source: &SourceModel,
    k: u64,
    seed: u64,
) -> Result<RunOutcome> {
    let ctx = RunContext::prepare(graph, params, noise, source, k)?;
    let mut rng = trial_rng(seed, 0);
    Ok(ctx.run(source, &mut rng, seed, true))
}

/// Estimates `P[accept AND some kept register bad]` and compares it to the
/// joint soundness bound.
///
/// Kept registers are scored by the exact pass-probability eigenvalue
/// (analytic, variance-reduced) instead of a second sampling layer.
pub fn estimate_joint_failure(
    graph: &WeightedGraph,
    params: &ProtocolParams,
    noise: &NoiseModel,
    source: &SourceModel,
    k: u64,
    trials: u64,
    seed: u64,
) -> Result<JointEstimate> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let ctx = RunContext::prepare(graph, params, noise, source, k)?;
    let contributions: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let outcome = ctx.run(source, &mut rng, seed, false);
            if !outcome.accepted {
                return 0.0;
            }
            let pass: f64 = outcome
                .kept_registers
                .iter()
                .map(|d| pass_probability_of(d, ctx.epsilon, &ctx.delta_vec).expect("validated"))
                .product();
            1.0 - pass
        })
        .collect();
    let estimate = contributions.iter().sum::<f64>() / trials as f64;
    let stderr = (estimate * (1.0 - estimate) / trials as f64)
        .max(0.0)
        .sqrt();
    let bound = soundness_joint_bound(params, k)?;
    Ok(JointEstimate {
        estimate,
        stderr,
        trials,
        accepting_runs: trials,
        bound,
        violated: estimate - 3.0 * stderr > bound.value,
    })
}

/// Estimates `E[all kept registers pass | accepted]` against the conditional
/// soundness lower bound, with the empirical acceptance rate as prior.
pub fn estimate_conditional_pass(
    graph: &WeightedGraph,
    params: &ProtocolParams,
    noise: &NoiseModel,
    source: &SourceModel,
    k: u64,
    trials: u64,
    seed: u64,
) -> Result<JointEstimate> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let ctx = RunContext::prepare(graph, params, noise, source, k)?;
    let per_run: Vec<Option<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let outcome = ctx.run(source, &mut rng, seed, false);
            if !outcome.accepted {
                return None;
            }
            let pass: f64 = outcome
                .kept_registers
                .iter()
                .map(|d| pass_probability_of(d, ctx.epsilon, &ctx.delta_vec).expect("validated"))
                .product();
            Some(pass)
        })
        .collect();
    let accepting: Vec<f64> = per_run.iter().flatten().copied().collect();
    if accepting.is_empty() {
        return Err(Error::Insufficient(format!(
            "no accepting runs among {trials} trials; conditional estimate undefined"
        )));
    }
    let accepting_runs = accepting.len() as u64;
    let p_acc_empirical = accepting_runs as f64 / trials as f64;
    let estimate = accepting.iter().sum::<f64>() / accepting_runs as f64;
    let stderr = (estimate * (1.0 - estimate) / accepting_runs as f64)
        .max(0.0)
        .sqrt();
    let bound = soundness_conditional_bound(params, k, p_acc_empirical)?;
    Ok(JointEstimate {
        estimate,
        stderr,
        trials,
        accepting_runs,
        bound,
        violated: estimate + 3.0 * stderr < bound.value,
    })
}

/// Empirical acceptance rate over independent protocol runs.
pub fn acceptance_rate(
    graph: &WeightedGraph,
    params: &ProtocolParams,
    noise: &NoiseModel,
    source: &SourceModel,
    k: u64,
    trials: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let ctx = RunContext::prepare(graph, params, noise, source, k)?;
    let accepted: u64 = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            u64::from(ctx.run(source, &mut rng, seed, false).accepted)
        })
        .sum();
    let rate = accepted as f64 / trials as f64;
    let stderr = (rate * (1.0 - rate) / trials as f64).sqrt();
    Ok((rate, stderr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{acceptance_probability, p_null_gaussian};

    fn two_mode() -> WeightedGraph {
        WeightedGraph::new(2, &[(1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn pass_probability_formula_cases() {
        // Zero shift, ideal sigma: (eps/sqrt(eps^2+d^2))^n.
        let p = register_pass_probability(&[0.0, 0.0], f64::INFINITY, 1.0, &[0.5, 0.5]).unwrap();
        assert!((p - (1.0f64 / 1.25f64.sqrt()).powi(2)).abs() < 1e-14);
        // Huge shift kills it.
        let p = register_pass_probability(&[1e6], f64::INFINITY, 1.0, &[0.0]).unwrap();
        assert_eq!(p, 0.0);
        // n=1, s=1, eps=1, delta=0, ideal sigma: e^{-1}.
        let p = register_pass_probability(&[1.0], f64::INFINITY, 1.0, &[0.0]).unwrap();
        assert!((p - (-1.0f64).exp()).abs() < 1e-15);
        // Finite sigma folds 1/sigma^2 into the width.
        let p = register_pass_probability(&[0.0], 1.0, 1.0, &[0.0]).unwrap();
        assert!((p - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14);
    }

    #[test]
    fn pass_probability_rejects_mismatch() {
        assert!(register_pass_probability(&[0.0], 1.0, 1.0, &[0.0, 0.0]).is_err());
        assert!(register_pass_probability(&[0.0], 1.0, 0.0, &[0.0]).is_err());
    }

    fn small_params(epsilon: f64, f: f64) -> ProtocolParams {
        ProtocolParams::new(2, 50, 4.0, f, epsilon, 0.01, 0.0).unwrap()
    }

    #[test]
    fn same_seed_reproduces_run() {
        let g = two_mode();
        let params = small_params(1.0, 0.1);
        let noise = NoiseModel::noiseless();
        let source = SourceModel::Honest { sigma: 5.0 };
        let a = run_protocol(&g, &params, &noise, &source, 2, 42).unwrap();
        let b = run_protocol(&g, &params, &noise, &source, 2, 42).unwrap();
        assert_eq!(a, b);
        let c = run_protocol(&g, &params, &noise, &source, 2, 43).unwrap();
        assert_ne!(a.measurements, c.measurements);
    }

    #[test]
    fn outcome_shape_invariants() {
        let g = two_mode();
        let params = small_params(1.0, 0.1);
        let noise = NoiseModel::new(0.05, 0.05).unwrap();
        let source = SourceModel::Honest { sigma: 5.0 };
        let out = run_protocol(&g, &params, &noise, &source, 3, 7).unwrap();
        assert_eq!(out.measurements.len(), 100);
        assert_eq!(out.kept_registers.len(), 3);
        assert!(out.n_pass <= 100);
        assert_eq!(out.accepted, out.n_pass >= out.threshold);
        assert_eq!(
            out.n_pass,
            out.measurements.iter().filter(|m| m.passed).count() as u64
        );
    }

    #[test]
    fn insufficient_registers_rejected() {
        let g = two_mode();
        // N_total = 210, tests = 200, k = 11 does not fit.
        let params = ProtocolParams::new(2, 100, 2.1, 0.1, 1.0, 0.01, 0.0).unwrap();
        let noise = NoiseModel::noiseless();
        let source = SourceModel::Honest { sigma: 5.0 };
        assert!(matches!(
            run_protocol(&g, &params, &noise, &source, 11, 0),
            Err(Error::Insufficient(_))
        ));
        assert!(run_protocol(&g, &params, &noise, &source, 10, 0).is_ok());
    }

    #[test]
    fn honest_acceptance_matches_closed_form() {
        let g = two_mode();
        let sigma = 2.0;
        let params = ProtocolParams::new(2, 50, 4.0, 0.2, 2.0, 0.01, 0.0).unwrap();
        let noise = NoiseModel::noiseless();
        let source = SourceModel::Honest { sigma };
        let trials = 400;
        let (rate, stderr) = acceptance_rate(&g, &params, &noise, &source, 1, trials, 11).unwrap();
        let p_null = p_null_gaussian(sigma, 0.0, params.epsilon).unwrap();
        let expect = acceptance_probability(p_null, 2, 50, 0.2)
            .unwrap()
            .probability;
        assert!(
            (rate - expect).abs() <= 3.0 * stderr.max(0.01),
            "rate {rate} vs closed form {expect}"
        );
    }

    #[test]
    fn all_bad_source_always_rejected() {
        let g = two_mode();
        let params = ProtocolParams::new(2, 50, 4.0, 0.05, 0.5, 0.01, 0.0).unwrap();
        let noise = NoiseModel::noiseless();
        let source = SourceModel::Mixture {
            sigma: 5.0,
            bad_fraction: 1.0,
            bad_shift: vec![50.0, 50.0],
        };
        let rejected = (0..200)
            .filter(|&s| {
                !run_protocol(&g, &params, &noise, &source, 1, s)
                    .unwrap()
                    .accepted
            })
            .count();
        assert!(rejected >= 199, "only {rejected}/200 rejected");
    }

    #[test]
    fn joint_failure_never_violates_on_mixture() {
        let g = two_mode();
        let params = ProtocolParams::new(2, 200, 4.0, 0.05, 1.0, 0.02, 0.0).unwrap();
        let noise = NoiseModel::noiseless();
        for q in [0.1, 0.5, 0.9] {
            let source = SourceModel::Mixture {
                sigma: 5.0,
                bad_fraction: q,
                bad_shift: vec![5.0, 5.0],
            };
            let est = estimate_joint_failure(&g, &params, &noise, &source, 1, 300, 99).unwrap();
            assert!(!est.violated, "violated at q={q}: {est:?}");
        }
    }

    #[test]
    fn conditional_pass_near_ideal() {
        let g = two_mode();
        let sigma = 50.0;
        let params = ProtocolParams::new(2, 50, 4.0, 0.1, 5.0, 0.02, 0.0).unwrap();
        let noise = NoiseModel::noiseless();
        let source = SourceModel::Honest { sigma };
        let k = 2u64;
        let est = estimate_conditional_pass(&g, &params, &noise, &source, k, 200, 5).unwrap();
        let p_null = p_null_gaussian(sigma, 0.0, params.epsilon).unwrap();
        let expect = p_null.powi((params.n as u64 * k) as i32);
        assert!(
            (est.estimate - expect).abs() <= 3.0 * est.stderr.max(1e-3),
            "estimate {} vs {}",
            est.estimate,
            expect
        );
        assert!(!est.violated);
    }

    #[test]
    fn conditional_requires_accepting_runs() {
        let g = two_mode();
        let params = ProtocolParams::new(2, 50, 4.0, 0.01, 0.5, 0.02, 0.0).unwrap();
        let noise = NoiseModel::noiseless();
        let source = SourceModel::Mixture {
            sigma: 5.0,
            bad_fraction: 1.0,
            bad_shift: vec![100.0, 100.0],
        };
        assert!(matches!(
            estimate_conditional_pass(&g, &params, &noise, &source, 1, 50, 0),
            Err(Error::Insufficient(_))
        ));
    }

    #[test]
    fn zero_trials_rejected() {
        let g = two_mode();
        let params = small_params(1.0, 0.1);
        let noise = NoiseModel::noiseless();
        let source = SourceModel::Honest { sigma: 5.0 };
        assert!(estimate_joint_failure(&g, &params, &noise, &source, 1, 0, 0).is_err());
    }

    #[test]
    fn permuted_block_validates_count() {
        let g = two_mode();
        let params = small_params(1.0, 0.1);
        let noise = NoiseModel::noiseless();
        let source = SourceModel::PermutedBlock {
            sigma: 5.0,
            bad_count: params.n_total + 1,
            bad_shift: vec![1.0, 1.0],
        };
        assert!(run_protocol(&g, &params, &noise, &source, 1, 0).is_err());
    }
}
