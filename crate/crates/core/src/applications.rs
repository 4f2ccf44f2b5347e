//! Downstream uses of a certified state: teleportation deviation statistics,
//! measurement-based computing noise recurrences, and the metrology Fisher
//! information lower bound.

use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bounds::{concentration_noisy, BoundValue};
use crate::gaussian::{GaussianState, WidthConvention};
use crate::graph::{NoiseModel, WeightedGraph};
use crate::{Error, Result};

/// One noise accumulator: exact Gaussian form while only Gaussian gates have
/// been applied, empirical sample cloud afterwards.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum NoiseDescriptor {
    Gaussian { mean: f64, width: f64 },
    SampleCloud(Vec<f64>),
}

impl NoiseDescriptor {
    pub fn width(&self) -> Option<f64> {
        match self {
            Self::Gaussian { width, .. } => Some(*width),
            Self::SampleCloud(_) => None,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Gaussian { mean, width } => {
                if *width == 0.0 {
                    *mean
                } else {
                    mean + Normal::new(0.0, WidthConvention::std_dev(*width))
                        .expect("finite std")
                        .sample(rng)
                }
            }
            Self::SampleCloud(cloud) => cloud[rng.gen_range(0..cloud.len())],
        }
    }
}

/// Noise state of one quadrature: the distribution descriptor plus the
/// bookkeeping the tail-bound composition needs — the scale factor of every
/// accumulated graph-noise summand and the width of the accumulated Gaussian
/// measurement-noise part.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureNoise {
    pub descriptor: NoiseDescriptor,
    /// Scale factors of Delta-certified graph-noise summands.
    pub graph_scales: Vec<f64>,
    /// Width of the accumulated Gaussian measurement-noise part.
    pub meas_width: f64,
}

impl QuadratureNoise {
    fn clean() -> Self {
        Self {
            descriptor: NoiseDescriptor::Gaussian {
                mean: 0.0,
                width: 0.0,
            },
            graph_scales: Vec::new(),
            meas_width: 0.0,
        }
    }
}

/// Accumulated noise on the logical wire after a sequence of gates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoisePropagationState {
    pub x: QuadratureNoise,
    pub p: QuadratureNoise,
    /// True while only Gaussian gates have been applied.
    pub gaussian_track: bool,
    /// Set once a cubic gate makes the noise non-Gaussian and potentially
    /// unbounded in variance.
    pub unbounded: bool,
}

impl NoisePropagationState {
    /// Fresh wire with no accumulated noise.
    pub fn initial() -> Self {
        Self {
            x: QuadratureNoise::clean(),
            p: QuadratureNoise::clean(),
            gaussian_track: true,
            unbounded: false,
        }
    }
}

/// Gates the wire supports. `s` is the gate parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Gate {
    /// Displacement e^{isx}.
    XShift { s: f64 },
    /// Shear e^{isx^2/2}.
    Shear { s: f64 },
    /// Cubic phase e^{isx^3/3}.
    Cubic { s: f64 },
}

impl Gate {
    pub fn parameter(&self) -> f64 {
        match self {
            Self::XShift { s } | Self::Shear { s } | Self::Cubic { s } => *s,
        }
    }
}

/// Per-step noise context for gate application.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GateContext {
    /// Homodyne measurement-noise width (delta_m).
    pub measurement_width: f64,
    /// Fresh-mode squeezing-noise width (delta_g).
    pub squeezing_width: f64,
    /// Width of the signal amplitude x_1 the cubic gate couples to; cubic
    /// gates fail without it, no default is assumed.
    pub cubic_signal_width: Option<f64>,
    /// Cloud size when a cubic gate forces sample form.
    pub cloud_samples: usize,
}

impl GateContext {
    pub fn gaussian(measurement_width: f64, squeezing_width: f64) -> Self {
        Self {
            measurement_width,
            squeezing_width,
            cubic_signal_width: None,
            cloud_samples: 100_000,
        }
    }
}

fn quad_sum(widths: &[f64]) -> f64 {
    widths.iter().map(|w| w * w).sum::<f64>().sqrt()
}

/// Applies one gate's noise recurrence.
///
/// Gaussian track (XShift/Shear) composes widths in quadrature, assuming
/// the summands are independent; a cubic gate converts both quadratures to
/// sample clouds and flags the unbounded regime.
pub fn mbqc_apply_gate<R: Rng + ?Sized>(
    state: &NoisePropagationState,
    gate: &Gate,
    ctx: &GateContext,
    rng: &mut R,
) -> Result<NoisePropagationState> {
    if !gate.parameter().is_finite() {
        return Err(Error::InvalidParameter(
            "gate parameter must be finite".into(),
        ));
    }
    if !(ctx.measurement_width >= 0.0) || !(ctx.squeezing_width >= 0.0) {
        return Err(Error::InvalidParameter(
            "noise widths must be non-negative".into(),
        ));
    }
    let (w_m, w_g) = (ctx.measurement_width, ctx.squeezing_width);
    match (gate, state.gaussian_track) {
        (Gate::XShift { .. }, true) => {
            let (w_x, w_p) = gaussian_widths(state)?;
            Ok(NoisePropagationState {
                x: QuadratureNoise {
                    descriptor: gaussian(quad_sum(&[w_p, w_m])),
                    graph_scales: state.p.graph_scales.clone(),
                    meas_width: quad_sum(&[state.p.meas_width, w_m]),
                },
                p: QuadratureNoise {
                    descriptor: gaussian(quad_sum(&[w_x, w_g])),
                    graph_scales: with_fresh_summand(&state.x.graph_scales, w_g),
                    meas_width: state.x.meas_width,
                },
                gaussian_track: true,
                unbounded: state.unbounded,
            })
        }
        (Gate::Shear { s }, true) => {
            let (w_x, w_p) = gaussian_widths(state)?;
            let mut x_scales = state.p.graph_scales.clone();
            x_scales.extend(
                state
                    .x
                    .graph_scales
                    .iter()
                    .map(|c| c * s)
                    .filter(|c| *c != 0.0),
            );
            Ok(NoisePropagationState {
                x: QuadratureNoise {
                    descriptor: gaussian(quad_sum(&[w_p, w_m, s.abs() * w_x])),
                    graph_scales: x_scales,
                    meas_width: quad_sum(&[state.p.meas_width, w_m, s.abs() * state.x.meas_width]),
                },
                p: QuadratureNoise {
                    descriptor: gaussian(quad_sum(&[w_x, w_g])),
                    graph_scales: with_fresh_summand(&state.x.graph_scales, w_g),
                    meas_width: state.x.meas_width,
                },
                gaussian_track: true,
                unbounded: state.unbounded,
            })
        }
        // Cloud form, or a cubic gate forcing it: propagate samplewise.
        _ => apply_samplewise(state, gate, ctx, rng),
    }
}

fn gaussian(width: f64) -> NoiseDescriptor {
    NoiseDescriptor::Gaussian { mean: 0.0, width }
}

fn with_fresh_summand(scales: &[f64], w_g: f64) -> Vec<f64> {
    let mut out = scales.to_vec();
    if w_g > 0.0 {
        out.push(1.0);
    }
    out
}

fn gaussian_widths(state: &NoisePropagationState) -> Result<(f64, f64)> {
    match (state.x.descriptor.width(), state.p.descriptor.width()) {
        (Some(wx), Some(wp)) => Ok((wx, wp)),
        _ => Err(Error::InvalidParameter(
            "gaussian_track state carries a sample cloud".into(),
        )),
    }
}

fn apply_samplewise<R: Rng + ?Sized>(
    state: &NoisePropagationState,
    gate: &Gate,
    ctx: &GateContext,
    rng: &mut R,
) -> Result<NoisePropagationState> {
    let count = match (&state.x.descriptor, &state.p.descriptor) {
        (NoiseDescriptor::SampleCloud(c), _) | (_, NoiseDescriptor::SampleCloud(c)) => c.len(),
        _ => ctx.cloud_samples,
    };
    if count == 0 {
        return Err(Error::InvalidParameter(
            "cloud_samples must be positive".into(),
        ));
    }
    let signal_std = if let Gate::Cubic { .. } = gate {
        let w = ctx.cubic_signal_width.ok_or_else(|| {
            Error::InvalidParameter("cubic gate requires an explicit signal-amplitude width".into())
        })?;
        if !(w >= 0.0) {
            return Err(Error::InvalidParameter(
                "signal width must be non-negative".into(),
            ));
        }
        Some(WidthConvention::std_dev(w))
    } else {
        None
    };
    let meas = gaussian(ctx.measurement_width);
    let squeeze = gaussian(ctx.squeezing_width);
    let mut new_x = Vec::with_capacity(count);
    let mut new_p = Vec::with_capacity(count);
    for _ in 0..count {
        let dx = state.x.descriptor.sample(rng);
        let dp = state.p.descriptor.sample(rng);
        let dm = meas.sample(rng);
        let dg = squeeze.sample(rng);
        let x_next = match gate {
            Gate::XShift { .. } => dp + dm,
            Gate::Shear { s } => dp + dm + s * dx,
            Gate::Cubic { s } => {
                let amp = signal_std
                    .map(|std| {
                        if std == 0.0 {
                            0.0
                        } else {
                            rng.sample(Normal::new(0.0, std).unwrap())
                        }
                    })
                    .unwrap_or(0.0);
                dp + dm + s * dx * dx + 2.0 * s * amp * dx
            }
        };
        new_x.push(x_next);
        new_p.push(dx + dg);
    }
    let cubic = matches!(gate, Gate::Cubic { .. });
    Ok(NoisePropagationState {
        x: QuadratureNoise {
            descriptor: NoiseDescriptor::SampleCloud(new_x),
            graph_scales: Vec::new(),
            meas_width: 0.0,
        },
        p: QuadratureNoise {
            descriptor: NoiseDescriptor::SampleCloud(new_p),
            graph_scales: Vec::new(),
            meas_width: 0.0,
        },
        gaussian_track: false,
        unbounded: state.unbounded || cubic,
    })
}

const MIN_CLOUD_FOR_TAIL: usize = 10_000;

/// Lower bound on `P[|x-noise| <= t AND |p-noise| <= t]`.
///
/// Gaussian track: per-quadrature union bound splitting `t` equally over the
/// graph-noise summands (each bounded by the certified `(Delta, eta)`
/// concentration, scaled) and the Gaussian measurement part; with `m` unit
/// scales and no Gaussian part this reduces exactly to
/// [`crate::bounds::nullifier_sum_tail`]. Sample clouds: empirical fractions
/// with a Wilson lower confidence limit.
pub fn mbqc_tail_bound(
    state: &NoisePropagationState,
    t: f64,
    eta: f64,
    delta_env: f64,
) -> Result<BoundValue> {
    if !(t > 0.0) || !(delta_env > 0.0) || !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(
            "require t > 0, Delta > 0, eta in [0, 1]".into(),
        ));
    }
    if state.gaussian_track {
        let fx = quadrature_failure(&state.x, t, eta, delta_env);
        let fp = quadrature_failure(&state.p, t, eta, delta_env);
        Ok(BoundValue::clamped(1.0 - fx - fp))
    } else {
        let fx = cloud_failure(&state.x.descriptor, t)?;
        let fp = cloud_failure(&state.p.descriptor, t)?;
        Ok(BoundValue::clamped(1.0 - fx - fp))
    }
}

fn quadrature_failure(quad: &QuadratureNoise, t: f64, eta: f64, delta_env: f64) -> f64 {
    let scales: Vec<f64> = quad
        .graph_scales
        .iter()
        .copied()
        .filter(|c| *c != 0.0)
        .collect();
    let has_meas = quad.meas_width > 0.0;
    let parts = scales.len() + usize::from(has_meas);
    if parts == 0 {
        return 0.0;
    }
    let t_each = t / parts as f64;
    let mut failure = 0.0;
    for c in &scales {
        let x = t_each / c.abs();
        failure += eta + (-x * x / (delta_env * delta_env)).exp();
    }
    if has_meas {
        // Gaussian tail: P[|N| > a] = erfc(a/w) <= exp(-a^2/w^2).
        failure += (-t_each * t_each / (quad.meas_width * quad.meas_width)).exp();
    }
    failure
}

fn cloud_failure(descriptor: &NoiseDescriptor, t: f64) -> Result<f64> {
    let cloud = match descriptor {
        NoiseDescriptor::SampleCloud(c) => c,
        NoiseDescriptor::Gaussian { .. } => {
            return Err(Error::InvalidParameter(
                "mixed descriptor forms in cloud state".into(),
            ))
        }
    };
    if cloud.len() < MIN_CLOUD_FOR_TAIL {
        return Err(Error::Insufficient(format!(
            "sample cloud has {} points, need at least {MIN_CLOUD_FOR_TAIL}",
            cloud.len()
        )));
    }
    let within = cloud.iter().filter(|v| v.abs() <= t).count();
    Ok(1.0 - wilson_lower(within, cloud.len(), 1.96))
}

/// Wilson score lower confidence limit for a binomial proportion.
fn wilson_lower(successes: usize, n: usize, z: f64) -> f64 {
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = p + z2 / (2.0 * nf);
    let margin = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((center - margin) / denom).max(0.0)
}

/// Teleportation run configuration.
#[derive(Debug, Clone, Serialize)]
pub struct TeleportationConfig {
    pub sigma: f64,
    pub noise: NoiseModel,
    pub input_mean: (f64, f64),
    pub trials: u64,
    pub seed: u64,
    pub thresholds: Vec<f64>,
    /// Envelope width of the concentration bound swept alongside.
    pub delta_env: f64,
    pub eta: f64,
    /// Retain the raw deviation samples (for distribution tests).
    pub keep_samples: bool,
}

/// Teleportation deviation summary.
#[derive(Debug, Clone, Serialize)]
pub struct TeleportationStats {
    pub sigma: f64,
    pub trials: u64,
    pub seed: u64,
    pub x_deviation_mean: f64,
    pub x_deviation_width: f64,
    pub p_deviation_mean: f64,
    pub p_deviation_width: f64,
    /// Quadrature-sum prediction sqrt(nullifier_width^2 + mu_x^2).
    pub predicted_width: f64,
    pub threshold_sweep: Vec<ThresholdPoint>,
    /// Raw (x, p) deviation samples when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<(Vec<f64>, Vec<f64>)>,
}

/// Within-threshold fractions for one swept `t`, with the analytic bound.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ThresholdPoint {
    pub t: f64,
    pub x_within: f64,
    pub p_within: f64,
    pub stderr: f64,
    pub bound: f64,
}

/// Simulates teleportation through a certified 2-mode graph state:
/// `x' = x_in - g_1 + d_b`, `p' = p_in + g_2 + d_a` with classical noises of
/// width `noise.x_width`. `(delta_env, eta)` parametrize the concentration
/// bound evaluated alongside each swept threshold.
pub fn simulate_teleportation(cfg: &TeleportationConfig) -> Result<TeleportationStats> {
    let TeleportationConfig {
        sigma,
        noise,
        input_mean,
        trials,
        seed,
        ref thresholds,
        delta_env,
        eta,
        keep_samples,
    } = *cfg;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    if !(delta_env > 0.0) || !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(
            "require Delta > 0 and eta in [0, 1]".into(),
        ));
    }
    let graph = WeightedGraph::new(2, &[(1, 2, 1.0)])?;
    let state = GaussianState::graph_state(&graph, sigma)?;
    // Joint covariance of the two nullifiers from the 4x4 state covariance.
    let c1 = nullifier_vector(&graph, 1)?;
    let c2 = nullifier_vector(&graph, 2)?;
    let cov = state.covariance();
    let a = (c1.transpose() * cov * &c1)[(0, 0)];
    let b = (c1.transpose() * cov * &c2)[(0, 0)];
    let c = (c2.transpose() * cov * &c2)[(0, 0)];
    let l11 = a.sqrt();
    let (l21, l22) = if l11 > 0.0 {
        (b / l11, (c - b * b / a).max(0.0).sqrt())
    } else {
        (0.0, c.sqrt())
    };
    let nullifier_width = WidthConvention::width_from_variance(a);
    let classical_std = WidthConvention::std_dev(noise.x_width);

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut x_dev = Vec::with_capacity(trials as usize);
    let mut p_dev = Vec::with_capacity(trials as usize);
    for _ in 0..trials {
        let z1: f64 = normal.sample(&mut rng);
        let z2: f64 = normal.sample(&mut rng);
        let g1 = l11 * z1;
        let g2 = l21 * z1 + l22 * z2;
        let d_b = classical_std * normal.sample(&mut rng);
        let d_a = classical_std * normal.sample(&mut rng);
        let x_out = input_mean.0 - g1 + d_b;
        let p_out = input_mean.1 + g2 + d_a;
        x_dev.push(x_out - input_mean.0);
        p_dev.push(p_out - input_mean.1);
    }
    let stats = |v: &[f64]| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64;
        (mean, WidthConvention::width_from_variance(var))
    };
    let (xm, xw) = stats(&x_dev);
    let (pm, pw) = stats(&p_dev);
    let threshold_sweep = thresholds
        .iter()
        .map(|&t| {
            let xf = x_dev.iter().filter(|v| v.abs() <= t).count() as f64 / trials as f64;
            let pf = p_dev.iter().filter(|v| v.abs() <= t).count() as f64 / trials as f64;
            let f = xf.min(pf);
            let bound = concentration_noisy(t, delta_env, eta, noise.x_width)
                .map(|c| c.v3.value)
                .unwrap_or(0.0);
            ThresholdPoint {
                t,
                x_within: xf,
                p_within: pf,
                stderr: (f * (1.0 - f) / trials as f64).sqrt(),
                bound,
            }
        })
        .collect();
    Ok(TeleportationStats {
        sigma,
        trials,
        seed,
        x_deviation_mean: xm,
        x_deviation_width: xw,
        p_deviation_mean: pm,
        p_deviation_width: pw,
        predicted_width: quad_sum(&[nullifier_width, noise.x_width]),
        threshold_sweep,
        samples: keep_samples.then_some((x_dev, p_dev)),
    })
}

fn nullifier_vector(graph: &WeightedGraph, vertex: usize) -> Result<DVector<f64>> {
    let n = graph.n();
    let spec = graph.nullifier_coefficients(vertex)?;
    let mut v = DVector::zeros(2 * n);
    v[n + vertex - 1] = spec.p_coefficient;
    for &(j, coeff) in &spec.x_coefficients {
        v[j - 1] = coeff;
    }
    Ok(v)
}

/// Overlap deficit of the honest sigma-squeezed n-mode graph state at
/// envelope width `Delta`: eta = 1 - (Delta/sqrt(Delta^2 + 1/sigma^2))^n.
pub fn honest_overlap_eta(sigma: f64, delta_env: f64, n_modes: usize) -> Result<f64> {
    if !(sigma > 0.0) || !(delta_env > 0.0) {
        return Err(Error::InvalidParameter(
            "require sigma > 0 and Delta > 0".into(),
        ));
    }
    let per_mode = delta_env / (delta_env * delta_env + 1.0 / (sigma * sigma)).sqrt();
    Ok(1.0 - per_mode.powi(n_modes as i32))
}

/// Metrology lower bound on the quantum Fisher information.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetrologyBound {
    pub theta: f64,
    /// Probe displacement (mu + Delta) sqrt(ln(2/theta)).
    pub p_star: f64,
    pub fisher_lower: f64,
}

/// Result of the Fisher bound: the ideal zero-noise case diverges and is
/// reported explicitly rather than as a number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum FisherInfo {
    Unbounded,
    Bound(MetrologyBound),
}

/// `Q >= (1 - eta - theta) / ((mu + Delta)^2 ln(2/theta))` with
/// `p* = (mu + Delta) sqrt(ln(2/theta))`.
pub fn fisher_lower_bound(
    eta: f64,
    mu_noise: f64,
    delta_env: f64,
    theta: f64,
) -> Result<FisherInfo> {
    if !(theta > 0.0 && theta < 2.0) {
        return Err(Error::InvalidParameter(format!(
            "theta must be in (0, 2), got {theta}"
        )));
    }
    if !(eta >= 0.0) || eta + theta >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "require eta >= 0 and eta + theta < 1, got eta={eta}, theta={theta}"
        )));
    }
    if !(mu_noise >= 0.0) || !(delta_env >= 0.0) {
        return Err(Error::InvalidParameter(
            "widths must be non-negative".into(),
        ));
    }
    let s = mu_noise + delta_env;
    if s == 0.0 {
        return Ok(FisherInfo::Unbounded);
    }
    let log_term = (2.0 / theta).ln();
    Ok(FisherInfo::Bound(MetrologyBound {
        theta,
        p_star: s * log_term.sqrt(),
        fisher_lower: (1.0 - eta - theta) / (s * s * log_term),
    }))
}

/// Maximizes the Fisher bound over theta by golden-section search.
pub fn optimize_fisher(eta: f64, mu_noise: f64, delta_env: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!(
            "eta must be in [0, 1), got {eta}"
        )));
    }
    let s = mu_noise + delta_env;
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(
            "mu + Delta must be positive for a finite optimum".into(),
        ));
    }
    let q = |theta: f64| (1.0 - eta - theta) / (s * s * (2.0 / theta).ln());
    let (mut lo, mut hi) = (1e-9, 1.0 - eta - 1e-9);
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut qc, mut qd) = (q(c), q(d));
    while (hi - lo) > 1e-8 * hi.max(1.0) {
        if qc >= qd {
            hi = d;
            d = c;
            qd = qc;
            c = hi - inv_phi * (hi - lo);
            qc = q(c);
        } else {
            lo = c;
            c = d;
            qc = qd;
            d = lo + inv_phi * (hi - lo);
            qd = q(d);
        }
    }
    let theta_star = 0.5 * (lo + hi);
    Ok((theta_star, q(theta_star)))
}
