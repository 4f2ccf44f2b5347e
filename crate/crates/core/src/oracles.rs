//! Independent verification oracles: brute-force lemma checks, sampling
//! experiments, and numerical quadrature of the acceptance integral.
//!
//! None of this code shares formula implementations with the bounds or
//! protocol modules, so agreement between the two is evidence rather than
//! tautology.

// The dynamic-programming passes index several aligned tables at once;
// iterator rewrites would obscure the recurrences.
#![allow(clippy::needless_range_loop)]

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::{Error, Result};

/// Outcome of one lemma verification suite.
#[derive(Debug, Clone, Serialize)]
pub struct LemmaCheckReport {
    pub lemma: String,
    pub cases_tested: u64,
    /// Largest observed violation; at or below tolerance means the lemma holds.
    pub max_violation: f64,
    /// Echo of the worst-case input.
    pub worst_case: String,
}

const MAX_EXHAUSTIVE_N: usize = 24;

/// `L_N^n = sum over outcomes with at least N successes of
/// prod lambda_k^{i_k} (1-lambda_k)^{1-i_k}`, by exhaustive enumeration of
/// all 2^n outcomes.
pub fn l_n_n(lambdas: &[f64], n_at_least: usize) -> Result<f64> {
    let n = lambdas.len();
    if n == 0 || n > MAX_EXHAUSTIVE_N {
        return Err(Error::InvalidParameter(format!(
            "need 1..={MAX_EXHAUSTIVE_N} probabilities, got {n}"
        )));
    }
    if lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(Error::InvalidParameter("lambdas must lie in [0, 1]".into()));
    }
    let mut total = 0.0;
    for mask in 0u64..(1u64 << n) {
        let successes = mask.count_ones() as usize;
        if successes < n_at_least {
            continue;
        }
        let mut p = 1.0;
        for (k, &l) in lambdas.iter().enumerate() {
            p *= if mask >> k & 1 == 1 { l } else { 1.0 - l };
        }
        total += p;
    }
    Ok(total)
}

/// All tail sums `L_N^n` for `N = 0..=n` in one pass, via the success-count
/// distribution (polynomial product).
fn tail_sums(lambdas: &[f64]) -> Vec<f64> {
    let n = lambdas.len();
    let mut pmf = vec![0.0; n + 1];
    pmf[0] = 1.0;
    for (used, &l) in lambdas.iter().enumerate() {
        for j in (0..=used + 1).rev() {
            let stay = if j <= used { pmf[j] * (1.0 - l) } else { 0.0 };
            let up = if j > 0 { pmf[j - 1] * l } else { 0.0 };
            pmf[j] = stay + up;
        }
    }
    let mut tails = vec![0.0; n + 2];
    for j in (0..=n).rev() {
        tails[j] = tails[j + 1] + pmf[j];
    }
    tails.truncate(n + 1);
    tails
}

/// Elementary symmetric sums `e_k(lambda)` for `k = 0..=n`.
fn elementary_symmetric(lambdas: &[f64]) -> Vec<f64> {
    let n = lambdas.len();
    let mut e = vec![0.0; n + 1];
    e[0] = 1.0;
    for (used, &l) in lambdas.iter().enumerate() {
        for k in (1..=used + 1).rev() {
            e[k] += e[k - 1] * l;
        }
    }
    e
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut out = 1.0;
    for i in 0..k {
        out = out * (n - i) as f64 / (i + 1) as f64;
    }
    out
}

/// Checks `C(N, k) L_N^n <= e_k(lambda)` over random probability vectors
/// for every dimension up to `n_max` and every `(N, k)` pair.
pub fn check_lnn_inequalities(n_max: usize, trials: u64, seed: u64) -> Result<LemmaCheckReport> {
    if n_max == 0 || n_max > 12 {
        return Err(Error::InvalidParameter(format!(
            "n_max must be in 1..=12, got {n_max}"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut max_violation = f64::NEG_INFINITY;
    let mut worst_case = String::new();
    let mut cases = 0u64;
    for trial in 0..trials {
        let n = rng.gen_range(1..=n_max);
        let lambdas: Vec<f64> = match trial % 4 {
            // Edge-heavy draws exercise the equality cases.
            0 => (0..n)
                .map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 })
                .collect(),
            1 => (0..n).map(|_| rng.gen_range(0.9..=1.0)).collect(),
            2 => (0..n).map(|_| rng.gen_range(0.0..=0.1)).collect(),
            _ => (0..n).map(|_| rng.gen::<f64>()).collect(),
        };
        let tails = tail_sums(&lambdas);
        let e = elementary_symmetric(&lambdas);
        for big_n in 0..=n {
            for k in 0..=n {
                let lhs = binomial(big_n, k) * tails[big_n];
                let violation = lhs - e[k];
                cases += 1;
                if violation > max_violation {
                    max_violation = violation;
                    worst_case = format!("n={n}, N={big_n}, k={k}, lambdas={lambdas:?}");
                }
            }
        }
        // Spot-check the fast tail against exhaustive enumeration.
        if trial % 997 == 0 && n <= 10 {
            let big_n = rng.gen_range(0..=n);
            let exact = l_n_n(&lambdas, big_n)?;
            if (exact - tails[big_n]).abs() > 1e-12 {
                return Err(Error::Numerical(format!(
                    "tail-sum mismatch: {exact} vs {} at N={big_n}",
                    tails[big_n]
                )));
            }
        }
    }
    Ok(LemmaCheckReport {
        lemma: "k-fold product tail inequality".into(),
        cases_tested: cases,
        max_violation,
        worst_case,
    })
}

/// The six binary population shapes exercised by the sampling check.
fn population_shapes(n_pop: usize) -> Vec<(&'static str, Vec<u8>)> {
    let mut shapes: Vec<(&'static str, Vec<u8>)> = Vec::new();
    shapes.push(("all-zeros", vec![0; n_pop]));
    shapes.push(("all-ones", vec![1; n_pop]));
    let mut balanced = vec![0; n_pop];
    for (i, v) in balanced.iter_mut().enumerate() {
        *v = (i % 2) as u8;
    }
    shapes.push(("balanced", balanced));
    let mut skew = vec![0; n_pop];
    for v in skew.iter_mut().take(n_pop / 4) {
        *v = 1;
    }
    shapes.push(("quarter-ones", skew));
    let mut heavy = vec![1; n_pop];
    for v in heavy.iter_mut().take(n_pop / 4) {
        *v = 0;
    }
    shapes.push(("three-quarter-ones", heavy));
    let mut single = vec![0; n_pop];
    single[0] = 1;
    shapes.push(("single-one", single));
    shapes
}

/// Empirically checks the sampling-without-replacement tail bound
/// `P[complement mean >= sample mean + nu] <= exp(-2 nu^2 n k^2 / ((n+k)(k+1)))`
/// with `n` the sample size and `k` the complement size, over six
/// adversarial binary population shapes.
pub fn check_serfling_sampling(
    n_pop: usize,
    n_sample: usize,
    trials: u64,
    nu: f64,
    seed: u64,
) -> Result<LemmaCheckReport> {
    if n_sample == 0 || n_sample >= n_pop {
        return Err(Error::InvalidParameter(format!(
            "need 0 < n_sample < N_pop, got {n_sample} of {n_pop}"
        )));
    }
    if !(nu > 0.0) || trials == 0 {
        return Err(Error::InvalidParameter(
            "require nu > 0 and trials >= 1".into(),
        ));
    }
    let n = n_sample as f64;
    let k = (n_pop - n_sample) as f64;
    let bound = (-2.0 * nu * nu * n * k * k / ((n + k) * (k + 1.0))).exp();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut max_violation = f64::NEG_INFINITY;
    let mut worst_case = String::new();
    let mut cases = 0u64;
    for (name, mut pop) in population_shapes(n_pop) {
        let mut hits = 0u64;
        for _ in 0..trials {
            pop.shuffle(&mut rng);
            let sample_sum: u32 = pop[..n_sample].iter().map(|&v| v as u32).sum();
            let rest_sum: u32 = pop[n_sample..].iter().map(|&v| v as u32).sum();
            let sample_mean = sample_sum as f64 / n;
            let rest_mean = rest_sum as f64 / k;
            if rest_mean >= sample_mean + nu {
                hits += 1;
            }
        }
        let freq = hits as f64 / trials as f64;
        let stderr = (freq * (1.0 - freq) / trials as f64).sqrt();
        let violation = freq - (bound + 3.0 * stderr);
        cases += trials;
        if violation > max_violation {
            max_violation = violation;
            worst_case = format!("shape={name}, freq={freq:.6}, bound={bound:.6}");
        }
    }
    Ok(LemmaCheckReport {
        lemma: "sampling-without-replacement tail".into(),
        cases_tested: cases,
        max_violation,
        worst_case,
    })
}

/// Numerically integrates the acceptance probability of a Gaussian nullifier
/// outcome of width `w` centered at `s`:
/// `integral of exp(-g^2/eps^2) * (1/(w sqrt(pi))) exp(-(g-s)^2/w^2) dg`,
/// by adaptive Simpson refinement to absolute tolerance 1e-12.
pub fn povm_integral_oracle(width: f64, epsilon: f64, shift: f64) -> Result<f64> {
    if !(width >= 0.0) || !(epsilon > 0.0) || !shift.is_finite() {
        return Err(Error::InvalidParameter(
            "require width >= 0, epsilon > 0, finite shift".into(),
        ));
    }
    if width == 0.0 {
        // Delta-function limit.
        return Ok((-shift * shift / (epsilon * epsilon)).exp());
    }
    let norm = 1.0 / (width * std::f64::consts::PI.sqrt());
    let f = move |g: f64| {
        (-g * g / (epsilon * epsilon)).exp()
            * norm
            * (-(g - shift) * (g - shift) / (width * width)).exp()
    };
    let lo = (-8.0 * epsilon).min(shift - 8.0 * width) - 1.0;
    let hi = (8.0 * epsilon).max(shift + 8.0 * width) + 1.0;
    adaptive_simpson(&f, lo, hi, 1e-12, 60)
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> Result<f64> {
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let left = simpson(f, a, m);
        let right = simpson(f, m, b);
        let err = left + right - whole;
        if err.abs() <= 15.0 * tol {
            return Ok(left + right + err / 15.0);
        }
        if depth == 0 {
            return Err(Error::Numerical(format!(
                "quadrature failed to converge on [{a}, {b}]"
            )));
        }
        Ok(recurse(f, a, m, left, 0.5 * tol, depth - 1)?
            + recurse(f, m, b, right, 0.5 * tol, depth - 1)?)
    }
    recurse(f, a, b, simpson(f, a, b), tol, depth)
}
