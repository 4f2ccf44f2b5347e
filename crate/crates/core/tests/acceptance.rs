//! End-to-end acceptance suite. Each test prints one pass/fail line for its
//! criterion; assertions fire after the line is printed so the verdict is
//! always visible in the log.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use statrs::function::erf::erfc;

use cvcert_core::applications::{
    mbqc_apply_gate, optimize_fisher, simulate_teleportation, Gate, GateContext,
    NoisePropagationState, TeleportationConfig,
};
use cvcert_core::bounds::{
    concentration_exact, concentration_noisy, p_null_gaussian, ProtocolParams,
};
use cvcert_core::gaussian::WidthConvention;
use cvcert_core::graph::{NoiseModel, WeightedGraph};
use cvcert_core::oracles::{check_lnn_inequalities, check_serfling_sampling, povm_integral_oracle};
use cvcert_core::planner::{
    epsilon_over_delta, matches_display_rounding, relative_diff, solve_p_stab, table1,
};
use cvcert_core::protocol::{acceptance_rate, estimate_joint_failure, SourceModel};

fn verdict(criterion: u32, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Two-sided KS statistic of `samples` against a centered normal with the
/// given standard deviation.
fn ks_statistic(samples: &[f64], std_dev: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, v) in sorted.iter().enumerate() {
        let cdf = normal_cdf(v / std_dev);
        d = d.max((cdf - i as f64 / n).abs());
        d = d.max((cdf - (i as f64 + 1.0) / n).abs());
    }
    d
}

/// Large-sample KS critical value at significance 0.01.
fn ks_critical(n: usize) -> f64 {
    ks_critical_alpha(n, 0.01)
}

/// Large-sample KS critical value at an arbitrary significance level.
fn ks_critical_alpha(n: usize, alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt() / (n as f64).sqrt()
}

#[test]
fn criterion_1_reference_table_reproduction() {
    let start = Instant::now();
    let rows = table1().expect("table must evaluate");
    let mut pass = rows.len() == 5;
    let mut detail = String::new();
    for row in &rows {
        let n = row.plan.n as f64;
        let lambda_exact = row.plan.lambda == (4.0 * n + 1.0) / 0.1;
        // Counts must match to 5% or to the published value's own display
        // rounding (the n=10 row rounds 2796762 up to 3e6, a 6.8% gap).
        let nt_ok = relative_diff(row.plan.n_test as f64, row.published_n_test) <= 0.05
            || matches_display_rounding(row.plan.n_test as f64, row.published_n_test);
        let ntot_ok = relative_diff(row.plan.n_total as f64, row.published_n_total) <= 0.05
            || matches_display_rounding(row.plan.n_total as f64, row.published_n_total);
        let p_ok = (row.plan.p_stab - row.published_p_stab).abs() <= 1e-3;
        let ratio_ok = (row.plan.eps_over_delta - row.published_eps_over_delta).abs() <= 1.0;
        // The n=100 row's published lambda (4020) departs from the formula
        // value (4010); it must carry an explicit discrepancy note.
        let discrepancy_reported = row.plan.lambda == row.published_lambda
            || row.notes.iter().any(|s| s.contains("discrepancy"));
        let row_ok = lambda_exact && nt_ok && ntot_ok && p_ok && ratio_ok && discrepancy_reported;
        if !row_ok {
            detail.push_str(&format!(
                "n={} lambda_exact={lambda_exact} nt={nt_ok} ntot={ntot_ok} p={p_ok} ratio={ratio_ok} noted={discrepancy_reported}; ",
                row.plan.n
            ));
        }
        pass &= row_ok;
    }
    let elapsed = start.elapsed().as_secs_f64();
    pass &= elapsed < 10.0;
    verdict(
        1,
        pass,
        &format!("5 rows checked against published figures in {elapsed:.2}s {detail}"),
    );
}

#[test]
fn criterion_2_pass_probability_oracle_equivalence() {
    let start = Instant::now();
    let sigmas = [0.5, 1.0, 2.0, 5.0, 10.0];
    let deltas = [0.0, 0.2, 0.5, 1.0, 2.0];
    let epsilons = [0.3, 0.7, 1.0, 2.0, 5.0];
    let mut worst = 0.0f64;
    let mut cases = 0;
    for &sigma in &sigmas {
        for &delta in &deltas {
            for &eps in &epsilons {
                let closed = p_null_gaussian(sigma, delta, eps).unwrap();
                let width = (delta * delta + 1.0 / (sigma * sigma)).sqrt();
                let numeric = povm_integral_oracle(width, eps, 0.0).unwrap();
                worst = worst.max((closed - numeric).abs());
                cases += 1;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = cases == 125 && worst <= 1e-10 && elapsed < 5.0;
    verdict(
        2,
        pass,
        &format!("{cases} grid points, max |closed - quadrature| = {worst:.2e}, {elapsed:.2}s"),
    );
}

#[test]
fn criterion_3_completeness_at_desk_scale() {
    let start = Instant::now();
    let mut pass = true;
    let mut detail = String::new();
    for n in [1usize, 2] {
        let plan = cvcert_core::planner::plan_parameters(n, 0.1, 0.9).unwrap();
        // 100x-reduced test count with the matching re-solved pass
        // probability; the binomial relation is what is being checked.
        let n_test = plan.n_test / 100;
        let total = n as u64 * n_test;
        let threshold = ((1.0 - plan.f) * total as f64).ceil() as u64;
        let p_stab = solve_p_stab(total, threshold, 0.9).unwrap();
        let epsilon = epsilon_over_delta(p_stab).unwrap();
        let params = ProtocolParams::new(
            n,
            n_test,
            2.0 * n as f64,
            plan.f,
            epsilon,
            1.0 / plan.lambda,
            1.0,
        )
        .unwrap();
        let graph = if n == 1 {
            WeightedGraph::new(1, &[]).unwrap()
        } else {
            WeightedGraph::new(2, &[(1, 2, 1.0)]).unwrap()
        };
        // sigma = 1/delta = 1 with uniform measurement noise delta_i = 1.
        let noise = NoiseModel::new(1.0, 0.0).unwrap();
        let source = SourceModel::Honest { sigma: 1.0 };
        let (rate, stderr) =
            acceptance_rate(&graph, &params, &noise, &source, 1, 200, 42 + n as u64).unwrap();
        let ok = rate >= 0.9 - 3.0 * stderr.max(1e-6);
        detail.push_str(&format!(
            "n={n}: rate={rate:.3} (target 0.9, stderr {stderr:.3}); "
        ));
        pass &= ok;
    }
    let elapsed = start.elapsed().as_secs_f64();
    pass &= elapsed < 300.0;
    verdict(3, pass, &format!("{detail}{elapsed:.1}s"));
}

#[test]
fn criterion_4_soundness_never_violated() {
    let start = Instant::now();
    // Three reduced parameter sets with informative (non-vacuous) joint
    // bounds at desk scale.
    let param_sets = [
        ProtocolParams::new(1, 500, 4.0, 0.05, 5.0, 0.10, 1.0).unwrap(),
        ProtocolParams::new(1, 1000, 6.0, 0.02, 5.0, 0.08, 1.0).unwrap(),
        ProtocolParams::new(2, 600, 6.0, 0.03, 5.0, 0.06, 1.0).unwrap(),
    ];
    let sigma = 5.0;
    let noise = NoiseModel::new(1.0, 0.0).unwrap();
    let mut pass = true;
    let mut cells = 0;
    let mut worst_margin = f64::NEG_INFINITY;
    let mut detail = String::new();
    for (si, params) in param_sets.iter().enumerate() {
        let graph = if params.n == 1 {
            WeightedGraph::new(1, &[]).unwrap()
        } else {
            WeightedGraph::new(2, &[(1, 2, 1.0)]).unwrap()
        };
        let shift_vec = |c: f64| vec![c * params.epsilon; params.n];
        let mut sources = Vec::new();
        for &q in &[0.1, 0.3, 0.5, 0.9] {
            for &c in &[2.0, 5.0, 10.0] {
                sources.push(SourceModel::Mixture {
                    sigma,
                    bad_fraction: q,
                    bad_shift: shift_vec(c),
                });
            }
        }
        sources.push(SourceModel::PermutedBlock {
            sigma,
            bad_count: params.n_total / 20,
            bad_shift: shift_vec(5.0),
        });
        sources.push(SourceModel::PermutedBlock {
            sigma,
            bad_count: params.n_total / 4,
            bad_shift: shift_vec(10.0),
        });
        for (ci, source) in sources.iter().enumerate() {
            let est = estimate_joint_failure(
                &graph,
                params,
                &noise,
                source,
                1,
                300,
                1000 + (si * 100 + ci) as u64,
            )
            .unwrap();
            let margin = est.estimate - 3.0 * est.stderr - est.bound.value;
            worst_margin = worst_margin.max(margin);
            if est.violated {
                pass = false;
                detail.push_str(&format!("set {si} config {ci} violated; "));
            }
            cells += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    pass &= cells == 42 && elapsed < 600.0;
    verdict(
        4,
        pass,
        &format!(
            "{cells} adversary cells, worst (estimate - 3se - bound) = {worst_margin:.3}, {elapsed:.1}s {detail}"
        ),
    );
}

#[test]
fn criterion_5_inequality_oracle_suites() {
    let start = Instant::now();
    let lnn = check_lnn_inequalities(12, 10_000, 2024).unwrap();
    let serf = check_serfling_sampling(200, 100, 100_000, 0.1, 2025).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let pass = lnn.max_violation <= 1e-12 && serf.max_violation <= 0.0 && elapsed < 120.0;
    verdict(
        5,
        pass,
        &format!(
            "tail-product max violation {:.2e} over {} cases; sampling max violation {:.2e} over {} draws; {elapsed:.1}s",
            lnn.max_violation, lnn.cases_tested, serf.max_violation, serf.cases_tested
        ),
    );
}

#[test]
fn criterion_6_concentration_bounds_monte_carlo() {
    let start = Instant::now();
    // Extremal admissible nullifier distribution: probability eta of an
    // arbitrarily large escape is modeled as a far point mass, and the
    // remaining mass saturates the envelope tail P[|g| > t] = e^{-t^2/D^2}.
    let xs = [0.5, 1.0, 1.5, 2.0, 3.0];
    let deltas = [0.5, 1.0, 2.0];
    let etas = [0.0, 0.05, 0.2];
    let mus = [0.0, 0.3, 1.0];
    let samples = 20_000usize;
    let mut rng = ChaCha12Rng::seed_from_u64(606);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut points = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut pass = true;
    let mut detail = String::new();
    for &delta_env in &deltas {
        for &eta in &etas {
            for &mu in &mus {
                for &x in &xs {
                    let noise_std = WidthConvention::std_dev(mu);
                    let mut within = 0usize;
                    for _ in 0..samples {
                        let g = if rng.gen::<f64>() < eta {
                            1e9
                        } else {
                            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                            let mag = delta_env * (-u.ln()).sqrt();
                            if rng.gen_bool(0.5) {
                                mag
                            } else {
                                -mag
                            }
                        };
                        let observed = g + if mu > 0.0 {
                            noise_std * normal.sample(&mut rng)
                        } else {
                            0.0
                        };
                        if observed.abs() <= x {
                            within += 1;
                        }
                    }
                    let freq = within as f64 / samples as f64;
                    let stderr = (freq * (1.0 - freq) / samples as f64).sqrt();
                    let allowance = freq + 3.0 * stderr;
                    let nb = concentration_noisy(x, delta_env, eta, mu).unwrap();
                    let mut bounds = vec![nb.v2.value, nb.v3.value];
                    if let Some(v1) = nb.v1 {
                        bounds.push(v1.value);
                    }
                    if mu == 0.0 {
                        bounds.push(concentration_exact(x, delta_env, eta).unwrap().value);
                    }
                    for b in bounds {
                        let violation = b - allowance;
                        worst = worst.max(violation);
                        if violation > 0.0 {
                            pass = false;
                            detail.push_str(&format!(
                                "x={x} D={delta_env} eta={eta} mu={mu}: bound {b:.4} > freq+3se {allowance:.4}; "
                            ));
                        }
                    }
                    points += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    pass &= points >= 100 && elapsed < 300.0;
    verdict(
        6,
        pass,
        &format!("{points} grid points, worst bound excess {worst:.4}, {elapsed:.1}s {detail}"),
    );
}

#[test]
fn criterion_7_teleportation_and_mbqc_distributions() {
    let start = Instant::now();
    let mut pass = true;
    let mut detail = String::new();

    // Teleportation deviations against the quadrature-sum width.
    let stats = simulate_teleportation(&TeleportationConfig {
        sigma: 2.0,
        noise: NoiseModel::new(0.0, 0.4).unwrap(),
        input_mean: (0.7, -1.2),
        trials: 100_000,
        seed: 77,
        thresholds: vec![1.0],
        delta_env: 1.0,
        eta: 0.0,
        keep_samples: true,
    })
    .unwrap();
    let (x_dev, p_dev) = stats.samples.as_ref().unwrap();
    let predicted_std = WidthConvention::std_dev(stats.predicted_width);
    let crit = ks_critical(x_dev.len());
    let dx = ks_statistic(x_dev, predicted_std);
    let dp = ks_statistic(p_dev, predicted_std);
    detail.push_str(&format!(
        "teleport KS x={dx:.4} p={dp:.4} (crit {crit:.4}); "
    ));
    pass &= dx < crit && dp < crit;

    // 20 random Gaussian gate programs: every recurrence step's analytic
    // output widths against an independent Monte Carlo draw of that step
    // (inputs sampled at the analytic marginal widths, fresh gate noise).
    // Verdicts use a Bonferroni-corrected family-wise KS level of 0.01.
    let cloud = 20_000usize;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut worst_d = 0.0f64;
    let mut step_stats: Vec<(u64, usize, f64, f64)> = Vec::new();
    for program in 0..20u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(9000 + program);
        let depth = rng.gen_range(1..=10);
        let ctx = GateContext::gaussian(rng.gen_range(0.1..0.5), rng.gen_range(0.1..0.5));
        let m_std = WidthConvention::std_dev(ctx.measurement_width);
        let g_std = WidthConvention::std_dev(ctx.squeezing_width);
        let gates: Vec<Gate> = (0..depth)
            .map(|_| {
                let s = rng.gen_range(-2.0..2.0);
                if rng.gen_bool(0.5) {
                    Gate::XShift { s }
                } else {
                    Gate::Shear { s }
                }
            })
            .collect();
        let mut state = NoisePropagationState::initial();
        for (step, gate) in gates.iter().enumerate() {
            let x_in_std = WidthConvention::std_dev(state.x.descriptor.width().unwrap());
            let p_in_std = WidthConvention::std_dev(state.p.descriptor.width().unwrap());
            state = mbqc_apply_gate(&state, gate, &ctx, &mut rng).unwrap();
            let wx_out = state.x.descriptor.width().unwrap();
            let wp_out = state.p.descriptor.width().unwrap();
            let mut xs = Vec::with_capacity(cloud);
            let mut ps = Vec::with_capacity(cloud);
            for _ in 0..cloud {
                let dx_i = x_in_std * normal.sample(&mut rng);
                let dp_i = p_in_std * normal.sample(&mut rng);
                let dm = m_std * normal.sample(&mut rng);
                let dg = g_std * normal.sample(&mut rng);
                xs.push(match gate {
                    Gate::XShift { .. } => dp_i + dm,
                    Gate::Shear { s } => dp_i + dm + s * dx_i,
                    Gate::Cubic { .. } => unreachable!("gaussian programs only"),
                });
                ps.push(dx_i + dg);
            }
            let dx = ks_statistic(&xs, WidthConvention::std_dev(wx_out));
            let dp = ks_statistic(&ps, WidthConvention::std_dev(wp_out));
            worst_d = worst_d.max(dx).max(dp);
            step_stats.push((program, step, dx, dp));
        }
    }
    let family = 2 * step_stats.len();
    let mc_crit = ks_critical_alpha(cloud, 0.01 / family as f64);
    for (program, step, dx, dp) in &step_stats {
        if *dx >= mc_crit || *dp >= mc_crit {
            pass = false;
            detail.push_str(&format!(
                "program {program} step {step}: KS x={dx:.4} p={dp:.4}; "
            ));
        }
    }
    detail.push_str(&format!(
        "20 programs, {family} step tests, worst KS {worst_d:.4} (crit {mc_crit:.4}); "
    ));
    let elapsed = start.elapsed().as_secs_f64();
    pass &= elapsed < 300.0;
    verdict(7, pass, &format!("{detail}{elapsed:.1}s"));
}

#[test]
fn criterion_8_metrology_optimum() {
    let start = Instant::now();
    let etas = [0.0, 0.1, 0.3];
    let mus = [0.0, 0.5, 1.0];
    let deltas = [0.5, 1.0, 2.0];
    let grid_points = 100_000usize;
    let mut worst_rel = 0.0f64;
    let mut worst_hom = 0.0f64;
    let mut pass = true;
    for &eta in &etas {
        for &mu in &mus {
            for &delta_env in &deltas {
                let (theta_star, q_star) = optimize_fisher(eta, mu, delta_env).unwrap();
                // Dense grid search over the same theta range.
                let s = mu + delta_env;
                let (lo, hi) = (1e-9, 1.0 - eta - 1e-9);
                let mut q_grid = f64::NEG_INFINITY;
                for i in 0..grid_points {
                    let theta = lo + (hi - lo) * (i as f64 + 0.5) / grid_points as f64;
                    let q = (1.0 - eta - theta) / (s * s * (2.0 / theta).ln());
                    q_grid = q_grid.max(q);
                }
                let rel = (q_star - q_grid).abs() / q_grid.abs();
                worst_rel = worst_rel.max(rel);
                pass &= rel <= 1e-6;
                assert!(theta_star > 0.0 && theta_star < 1.0 - eta);

                // Homogeneity: scaling both widths by c divides Q* by c^2.
                let c = 3.7;
                let (_, q_scaled) = optimize_fisher(eta, c * mu, c * delta_env).unwrap();
                let hom = (q_scaled - q_star / (c * c)).abs() / (q_star / (c * c));
                worst_hom = worst_hom.max(hom);
                pass &= hom <= 1e-9;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    pass &= elapsed < 60.0;
    verdict(
        8,
        pass,
        &format!(
            "27 grid cells, worst grid-search gap {worst_rel:.2e}, worst homogeneity residual {worst_hom:.2e}, {elapsed:.1}s"
        ),
    );
}
