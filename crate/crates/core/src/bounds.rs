//! Closed-form completeness, soundness, overlap, and concentration bounds.
//!
//! Every evaluator is a pure function. Probabilities are clamped to `[0, 1]`
//! but the raw value is always retained, and bounds that clamp from outside
//! the interval carry an explicit `vacuous` flag so callers can distinguish
//! "holds trivially" from "informative".

use serde::Serialize;
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;

use crate::{Error, Result};

/// A probability-valued bound with clamping transparency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundValue {
    /// Value exactly as the formula produced it.
    pub raw: f64,
    /// Raw value clamped to `[0, 1]`.
    pub value: f64,
    /// True when the raw value fell outside `[0, 1]` (or was NaN).
    pub vacuous: bool,
}

impl BoundValue {
    pub fn clamped(raw: f64) -> Self {
        let value = raw.clamp(0.0, 1.0);
        let vacuous = !(0.0..=1.0).contains(&raw);
        Self {
            raw,
            value: if value.is_nan() { 0.0 } else { value },
            vacuous,
        }
    }
}

/// All certification knobs. `mu_ratio` is the register ratio
/// `N_total / N_test` (not to be confused with the x-measurement noise
/// width, a separate quantity; see [`crate::graph::NoiseModel`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProtocolParams {
    /// Mode count of the target graph state.
    pub n: usize,
    /// Measurements per nullifier.
    pub n_test: u64,
    /// Register ratio mu = N_total / N_test; must exceed n.
    pub mu_ratio: f64,
    /// Failure-fraction threshold in [0, 1].
    pub f: f64,
    /// Acceptance width of the probabilistic accept rule exp(-g^2/eps^2).
    pub epsilon: f64,
    /// Concentration slack nu.
    pub nu: f64,
    /// Worst-case nullifier measurement-noise width delta.
    pub delta: f64,
    /// Total registers, ceil(mu * N_test).
    pub n_total: u64,
}

impl ProtocolParams {
    pub fn new(
        n: usize,
        n_test: u64,
        mu_ratio: f64,
        f: f64,
        epsilon: f64,
        nu: f64,
        delta: f64,
    ) -> Result<Self> {
        if n == 0 || n_test == 0 {
            return Err(Error::InvalidParameter(
                "n and N_test must be positive".into(),
            ));
        }
        if !(mu_ratio > n as f64) {
            return Err(Error::InvalidParameter(format!(
                "mu ratio must exceed the mode count: mu={mu_ratio}, n={n}"
            )));
        }
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::InvalidParameter(format!(
                "f must be in [0, 1], got {f}"
            )));
        }
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(nu >= 0.0) || !(delta >= 0.0) {
            return Err(Error::InvalidParameter(
                "nu and delta must be non-negative".into(),
            ));
        }
        let n_total = (mu_ratio * n_test as f64).ceil() as u64;
        Ok(Self {
            n,
            n_test,
            mu_ratio,
            f,
            epsilon,
            nu,
            delta,
            n_total,
        })
    }

    /// Concentration feasibility: `mu/n >= 1 + mu f + mu nu`.
    pub fn serfling_feasible(&self) -> bool {
        self.mu_ratio / self.n as f64 >= 1.0 + self.mu_ratio * self.f + self.mu_ratio * self.nu
    }

    /// Number of good registers the concentration statement certifies:
    /// `N = n N_test (mu/n - 1 - mu f - mu nu)`.
    pub fn certified_good_count(&self) -> f64 {
        let mu = self.mu_ratio;
        self.n as f64 * self.n_test as f64 * (mu / self.n as f64 - 1.0 - mu * self.f - mu * self.nu)
    }

    /// Unmeasured registers `(mu - n) N_test`.
    pub fn remaining_registers(&self) -> f64 {
        (self.mu_ratio - self.n as f64) * self.n_test as f64
    }
}

/// Probability that the finitely squeezed graph state passes one nullifier
/// test: `(1 + (delta^2 + 1/sigma^2)/eps^2)^(-1/2)`.
pub fn p_null_gaussian(sigma: f64, delta: f64, epsilon: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if !(delta >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must be non-negative, got {delta}"
        )));
    }
    let noise_sq = delta * delta + 1.0 / (sigma * sigma);
    Ok((1.0 + noise_sq / (epsilon * epsilon)).powf(-0.5))
}

/// How a binomial tail was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TailMethod {
    /// Regularized incomplete beta, exact up to function accuracy.
    ExactBeta,
    /// Normal approximation with continuity correction (used above 10^6
    /// trials, where the full-scale planner counts live).
    NormalApprox,
}

/// Result of a binomial acceptance-tail evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AcceptanceProbability {
    pub probability: f64,
    pub threshold: u64,
    pub method: TailMethod,
}

const EXACT_TAIL_LIMIT: u64 = 1_000_000;

/// `P(X >= ceil((1-f) n N_test))` for `X ~ Binomial(n N_test, p_null)`.
pub fn acceptance_probability(
    p_null: f64,
    n: usize,
    n_test: u64,
    f: f64,
) -> Result<AcceptanceProbability> {
    if !(0.0..=1.0).contains(&p_null) {
        return Err(Error::InvalidParameter(format!(
            "p_null must be in [0, 1], got {p_null}"
        )));
    }
    let total = n as u64 * n_test;
    if total == 0 {
        return Err(Error::InvalidParameter(
            "n * N_test must be at least 1".into(),
        ));
    }
    let threshold = ((1.0 - f) * total as f64).ceil() as u64;
    Ok(binomial_tail_at_least(total, p_null, threshold))
}

/// `P(X >= threshold)` for `X ~ Binomial(total, p)`, switching from the
/// incomplete-beta form to a continuity-corrected normal approximation for
/// very large trial counts.
pub fn binomial_tail_at_least(total: u64, p: f64, threshold: u64) -> AcceptanceProbability {
    if threshold == 0 {
        return AcceptanceProbability {
            probability: 1.0,
            threshold,
            method: TailMethod::ExactBeta,
        };
    }
    if threshold > total {
        return AcceptanceProbability {
            probability: 0.0,
            threshold,
            method: TailMethod::ExactBeta,
        };
    }
    if total <= EXACT_TAIL_LIMIT {
        // P(X >= k) = I_p(k, total - k + 1).
        let k = threshold as f64;
        let probability = if p == 0.0 {
            0.0
        } else if p == 1.0 {
            1.0
        } else {
            beta_reg(k, (total - threshold) as f64 + 1.0, p)
        };
        AcceptanceProbability {
            probability,
            threshold,
            method: TailMethod::ExactBeta,
        }
    } else {
        let mean = total as f64 * p;
        let var = total as f64 * p * (1.0 - p);
        let probability = if var == 0.0 {
            if mean >= threshold as f64 {
                1.0
            } else {
                0.0
            }
        } else {
            let z = (mean - threshold as f64 + 0.5) / var.sqrt();
            0.5 * erfc(-z / std::f64::consts::SQRT_2)
        };
        AcceptanceProbability {
            probability,
            threshold,
            method: TailMethod::NormalApprox,
        }
    }
}

/// Which written form of the overlap-completeness lower bound to evaluate.
/// The two differ in the second exponential; the derivation establishes the
/// `Derivation` form, so it is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OverlapBoundVariant {
    /// `exp(-(d+D)/e) * (1 - eta - 2 exp(-e(d+D)/(m+D)^2))`.
    Derivation,
    /// `exp(-(d+D)/e) * (1 - eta - 2 exp(-e/(m+D)))`.
    Statement,
}

/// Lower bound on the single-test pass probability for any state with
/// overlap at least `1 - eta` at envelope width `Delta`.
pub fn p_null_lower_from_overlap(
    delta_env: f64,
    eta: f64,
    delta_meas: f64,
    mu_x_noise: f64,
    epsilon: f64,
    variant: OverlapBoundVariant,
) -> Result<BoundValue> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!(
            "eta must be in [0, 1], got {eta}"
        )));
    }
    if !(delta_env >= 0.0) || !(delta_meas >= 0.0) || !(mu_x_noise >= 0.0) {
        return Err(Error::InvalidParameter(
            "widths must be non-negative".into(),
        ));
    }
    let total_width = delta_meas + delta_env;
    let noise_env = mu_x_noise + delta_env;
    let tail = match variant {
        OverlapBoundVariant::Derivation => {
            if noise_env > 0.0 {
                (-epsilon * total_width / (noise_env * noise_env)).exp()
            } else {
                0.0
            }
        }
        OverlapBoundVariant::Statement => {
            if noise_env > 0.0 {
                (-epsilon / noise_env).exp()
            } else {
                0.0
            }
        }
    };
    let raw = (-total_width / epsilon).exp() * (1.0 - eta - 2.0 * tail);
    Ok(BoundValue::clamped(raw))
}

/// Outcome of the concentration (sampling-without-replacement) statement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SerflingBound {
    pub bound: BoundValue,
    /// Good-register count `N` the statement certifies.
    pub certified_good_count: f64,
}

/// `n exp(-nu^2 N_test / (1 + 1/(mu - n)))`, subject to
/// `mu/n >= 1 + mu f + mu nu`.
pub fn serfling_bound(params: &ProtocolParams) -> Result<SerflingBound> {
    if !params.serfling_feasible() {
        return Err(Error::Infeasible(format!(
            "mu/n >= 1 + mu f + mu nu violated: {:.6} < 1 + {:.6} + {:.6}",
            params.mu_ratio / params.n as f64,
            params.mu_ratio * params.f,
            params.mu_ratio * params.nu
        )));
    }
    Ok(SerflingBound {
        bound: BoundValue::clamped(serfling_raw(params)),
        certified_good_count: params.certified_good_count(),
    })
}

fn serfling_raw(params: &ProtocolParams) -> f64 {
    let denom = 1.0 + 1.0 / (params.mu_ratio - params.n as f64);
    params.n as f64 * (-params.nu * params.nu * params.n_test as f64 / denom).exp()
}

/// Variant with the weaker constant the derivation passes through:
/// `n exp(-nu^2 N_test / 2)`.
pub fn serfling_bound_weak_constant(params: &ProtocolParams) -> Result<SerflingBound> {
    if !params.serfling_feasible() {
        return Err(Error::Infeasible(
            "mu/n >= 1 + mu f + mu nu violated".into(),
        ));
    }
    let raw = params.n as f64 * (-params.nu * params.nu * params.n_test as f64 / 2.0).exp();
    Ok(SerflingBound {
        bound: BoundValue::clamped(raw),
        certified_good_count: params.certified_good_count(),
    })
}

fn check_k(params: &ProtocolParams, k: u64) -> Result<()> {
    let remaining = params.remaining_registers();
    if k == 0 || (k as f64) > remaining {
        return Err(Error::InvalidParameter(format!(
            "kept count k={k} outside 1..=(mu-n)N_test={remaining}"
        )));
    }
    Ok(())
}

/// Binomial-ratio factor `1 - k n N_test mu (f + nu) / ((mu - n) N_test - k + 1)`.
fn kept_ratio_factor(params: &ProtocolParams, k: u64) -> f64 {
    let nf = params.n as f64;
    let nt = params.n_test as f64;
    let mu = params.mu_ratio;
    1.0 - (k as f64 * nf * nt * mu * (params.f + params.nu)) / ((mu - nf) * nt - k as f64 + 1.0)
}

/// Upper bound on the joint probability of accepting while any of the `k`
/// kept registers fails its nullifier tests.
pub fn soundness_joint_bound(params: &ProtocolParams, k: u64) -> Result<BoundValue> {
    check_k(params, k)?;
    if !params.serfling_feasible() {
        return Err(Error::Infeasible(
            "mu/n >= 1 + mu f + mu nu violated".into(),
        ));
    }
    let ratio = kept_ratio_factor(params, k);
    let raw = 1.0 - ratio * (1.0 - serfling_raw(params));
    let mut bound = BoundValue::clamped(raw);
    if ratio <= 0.0 {
        bound.vacuous = true;
    }
    Ok(bound)
}

/// Conditional lower bound on all `k` kept registers passing, given the
/// protocol accepted with prior probability `p_acc_prior`.
pub fn soundness_conditional_bound(
    params: &ProtocolParams,
    k: u64,
    p_acc_prior: f64,
) -> Result<BoundValue> {
    check_k(params, k)?;
    if !(p_acc_prior > 0.0 && p_acc_prior <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "p_acc_prior must be in (0, 1], got {p_acc_prior}"
        )));
    }
    if !params.serfling_feasible() {
        return Err(Error::Infeasible(
            "mu/n >= 1 + mu f + mu nu violated".into(),
        ));
    }
    let serf = serfling_raw(params);
    let ratio = kept_ratio_factor(params, k);
    let raw = ratio * (1.0 - serf / p_acc_prior);
    let mut bound = BoundValue::clamped(raw);
    if serf >= p_acc_prior || ratio <= 0.0 {
        bound.vacuous = true;
    }
    Ok(bound)
}

/// Certified overlap: envelope width `sqrt(eps^2 + delta^2)` together with
/// the conditional lower bound (the overlap statement's right-hand side
/// coincides with the conditional soundness form).
pub fn overlap_lower_bound(
    params: &ProtocolParams,
    k: u64,
    p_acc_prior: f64,
) -> Result<(f64, BoundValue)> {
    let delta_certified = (params.epsilon * params.epsilon + params.delta * params.delta).sqrt();
    let lower = soundness_conditional_bound(params, k, p_acc_prior)?;
    Ok((delta_certified, lower))
}

/// Simplified joint bound under the lambda parametrization
/// (`mu = 2n`, `nu = f = 1/lambda`, `N_test = ceil((2 ln n + 2 ln l) l^2)`).
pub fn simplified_bound_lambda(n: usize, lambda: f64, k: u64) -> Result<BoundValue> {
    let nf = n as f64;
    if !(lambda > 4.0 * nf) {
        return Err(Error::InvalidParameter(format!(
            "lambda must exceed 4n: lambda={lambda}, n={n}"
        )));
    }
    if (k as f64) >= lambda * lambda {
        return Err(Error::InvalidParameter(format!(
            "k={k} must be below lambda^2"
        )));
    }
    let raw = if k == 1 {
        (4.0 * nf + 1.0) / lambda
    } else {
        let kf = k as f64;
        1.0 - (1.0 - (4.0 * nf / lambda) * kf / (1.0 - kf / (lambda * lambda)))
            * (1.0 - 1.0 / lambda)
    };
    Ok(BoundValue::clamped(raw))
}

/// Noiseless nullifier concentration: `P[|g| <= x] >= 1 - eta - exp(-x^2/D^2)`.
pub fn concentration_exact(x: f64, delta_env: f64, eta: f64) -> Result<BoundValue> {
    if !(x > 0.0) || !(delta_env > 0.0) {
        return Err(Error::InvalidParameter(
            "x and Delta must be positive".into(),
        ));
    }
    Ok(BoundValue::clamped(
        1.0 - eta - (-x * x / (delta_env * delta_env)).exp(),
    ))
}

/// The three noisy concentration bounds and their best applicable value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoisyConcentration {
    /// `(1-eta) sqrt(1-(m/D)^2) - exp(-x^2/(D^2-m^2))`; only applies for m < D.
    pub v1: Option<BoundValue>,
    /// `1 - eta - exp(-x^2/4D^2) - (2m/x) exp(-x^2/4m^2)`.
    pub v2: BoundValue,
    /// `1 - eta - (1 + (m+D)/x) exp(-x^2/(m+D)^2)`.
    pub v3: BoundValue,
    /// Max over the applicable clamped bounds.
    pub best: f64,
}

/// Concentration of `|g + noise|` for Gaussian noise of width `mu_noise`.
pub fn concentration_noisy(
    x: f64,
    delta_env: f64,
    eta: f64,
    mu_noise: f64,
) -> Result<NoisyConcentration> {
    if !(x > 0.0) || !(delta_env > 0.0) || !(mu_noise >= 0.0) {
        return Err(Error::InvalidParameter(
            "require x > 0, Delta > 0, mu >= 0".into(),
        ));
    }
    let d2 = delta_env * delta_env;
    let m2 = mu_noise * mu_noise;
    let v1 = if mu_noise < delta_env {
        let raw = (1.0 - eta) * (1.0 - m2 / d2).sqrt() - (-x * x / (d2 - m2)).exp();
        Some(BoundValue::clamped(raw))
    } else {
        None
    };
    let noise_term = if mu_noise == 0.0 {
        0.0
    } else {
        (2.0 * mu_noise / x) * (-x * x / (4.0 * m2)).exp()
    };
    let v2 = BoundValue::clamped(1.0 - eta - (-x * x / (4.0 * d2)).exp() - noise_term);
    let s = mu_noise + delta_env;
    let v3 = BoundValue::clamped(1.0 - eta - (1.0 + s / x) * (-x * x / (s * s)).exp());
    let best = [v1.map(|b| b.value), Some(v2.value), Some(v3.value)]
        .into_iter()
        .flatten()
        .fold(0.0, f64::max);
    Ok(NoisyConcentration { v1, v2, v3, best })
}

/// Union-bound tail for a sum of `m` nullifier terms:
/// `P[|g_1 + .. + g_m| <= t] >= 1 - m eta - m exp(-t^2/(m^2 D^2))`.
/// Reduces to the two-summand display at m = 2 and to the noiseless
/// concentration at m = 1.
pub fn nullifier_sum_tail(m: usize, t: f64, delta_env: f64, eta: f64) -> Result<BoundValue> {
    if m == 0 || !(t > 0.0) || !(delta_env > 0.0) {
        return Err(Error::InvalidParameter(
            "require m >= 1, t > 0, Delta > 0".into(),
        ));
    }
    let mf = m as f64;
    let raw = 1.0 - mf * eta - mf * (-t * t / (mf * mf * delta_env * delta_env)).exp();
    Ok(BoundValue::clamped(raw))
}

/// Evaluated bound collection for one parameter set, with per-field
/// provenance descriptions.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub params: ProtocolParams,
    pub sigma: f64,
    pub k: u64,
    pub p_null: f64,
    pub p_acc: AcceptanceProbability,
    pub serfling: SerflingBound,
    pub soundness_joint_k: BoundValue,
    pub overlap_envelope_width: f64,
    pub overlap_lower_k: BoundValue,
    pub p_acc_prior: f64,
    pub feasible: bool,
    pub provenance: Vec<(String, String)>,
}

/// Evaluates the full bound suite for one parameter set. `p_acc_prior`
/// defaults to the computed honest acceptance probability.
pub fn evaluate_report(
    params: &ProtocolParams,
    sigma: f64,
    k: u64,
    p_acc_prior: Option<f64>,
) -> Result<BoundReport> {
    let p_null = p_null_gaussian(sigma, params.delta, params.epsilon)?;
    let p_acc = acceptance_probability(p_null, params.n, params.n_test, params.f)?;
    let prior = p_acc_prior
        .unwrap_or(p_acc.probability)
        .max(f64::MIN_POSITIVE);
    let serfling = serfling_bound(params)?;
    let soundness_joint_k = soundness_joint_bound(params, k)?;
    let (overlap_envelope_width, overlap_lower_k) = overlap_lower_bound(params, k, prior)?;
    let provenance = vec![
        (
            "p_null".into(),
            "gaussian completeness: single-test pass probability".into(),
        ),
        (
            "p_acc".into(),
            "binomial acceptance tail over n*N_test tests".into(),
        ),
        (
            "serfling".into(),
            "sampling-without-replacement concentration on good registers".into(),
        ),
        (
            "soundness_joint_k".into(),
            "joint accept-and-bad-kept-registers upper bound".into(),
        ),
        (
            "overlap_lower_k".into(),
            "certified overlap lower bound at envelope sqrt(eps^2+delta^2)".into(),
        ),
    ];
    Ok(BoundReport {
        params: *params,
        sigma,
        k,
        p_null,
        p_acc,
        serfling,
        soundness_joint_k,
        overlap_envelope_width,
        overlap_lower_k,
        p_acc_prior: prior,
        feasible: params.serfling_feasible(),
        provenance,
    })
}
