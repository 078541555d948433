//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line (run with `--nocapture` to see them). Every tolerance is pinned in
//! the assertions. All experiments are seeded and deterministic.

use std::sync::Arc;

use mcre_core::conditions::{lyapunov_exponent, MatrixNorm};
use mcre_core::coupling::{coalescence_curve, run_coupling, CurveOptions};
use mcre_core::environment::{
    EnvironmentKind, EnvironmentRealization, EnvironmentSpec, IidDistribution,
};
use mcre_core::goodtimes::{find_constants, good_time_density, good_times, GoodTimeOptions};
use mcre_core::kernel::{finite_residual_row, kernel_step, DriftSpec, State};
use mcre_core::models::{const_coef, make_finite, make_tarx, CoefFn, EtaConvention, NoiseSpec};
use mcre_core::oracle::{self, exact_coupled_matrix, CoupledIndex, DistributionVector};
use mcre_core::stationary::{backward_exact, forward_convergence_exact, invariance_check};
use mcre_core::stats;
use mcre_core::stream::StreamKey;
use mcre_core::{EnvPoint, ModelBundle};
use nalgebra::DMatrix;
use rayon::prelude::*;

fn verdict(id: u32, name: &str, pass: bool, detail: &str) -> bool {
    println!(
        "acceptance {id:02} {name}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

fn iid_normal_spec() -> EnvironmentSpec {
    EnvironmentSpec {
        kind: EnvironmentKind::Iid {
            dist: IidDistribution::Normal { mean: 0.0, sd: 1.0 },
        },
        dim: 1,
        ergodic: true,
        mixing: true,
    }
}

fn symmetric_tarx(a: f64, noise_sd: f64) -> ModelBundle {
    make_tarx(
        const_coef(a),
        const_coef(0.0),
        const_coef(a),
        const_coef(0.0),
        const_coef(0.0),
        NoiseSpec::gaussian(noise_sd),
        EtaConvention::Tight,
    )
    .unwrap()
}

/// 4-state kernels for a 3-label environment, all with positive column
/// minima and strong row-to-row contraction.
fn four_state_three_label() -> ModelBundle {
    make_finite(vec![
        DMatrix::from_row_slice(
            4,
            4,
            &[
                0.4, 0.3, 0.2, 0.1, 0.3, 0.4, 0.2, 0.1, 0.2, 0.3, 0.4, 0.1, 0.1, 0.3, 0.2, 0.4,
            ],
        ),
        DMatrix::from_row_slice(
            4,
            4,
            &[
                0.55, 0.15, 0.15, 0.15, 0.15, 0.55, 0.15, 0.15, 0.15, 0.15, 0.55, 0.15, 0.15,
                0.15, 0.15, 0.55,
            ],
        ),
        DMatrix::from_row_slice(
            4,
            4,
            &[
                0.25, 0.25, 0.25, 0.25, 0.4, 0.2, 0.2, 0.2, 0.2, 0.4, 0.2, 0.2, 0.2, 0.2, 0.4,
                0.2,
            ],
        ),
    ])
    .unwrap()
}

fn three_label_env_spec() -> EnvironmentSpec {
    EnvironmentSpec {
        kind: EnvironmentKind::FiniteMarkov {
            transition: vec![
                vec![0.6, 0.3, 0.1],
                vec![0.2, 0.5, 0.3],
                vec![0.3, 0.3, 0.4],
            ],
            initial: 0,
        },
        dim: 1,
        ergodic: true,
        mixing: true,
    }
}

#[test]
fn criterion_01_oracle_exactness_two_state() {
    let p = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]);
    let mut worst = 0.0f64;
    {
        // n = 0: the Dirac masses are at distance 1 = 0.7^0.
        let a = DistributionVector::dirac(2, 0).unwrap();
        let b = DistributionVector::dirac(2, 1).unwrap();
        worst = worst.max((oracle::exact_tv(&a, &b).unwrap() - 1.0).abs());
    }
    for n in 1..=50usize {
        let mats: Vec<&DMatrix<f64>> = std::iter::repeat(&p).take(n).collect();
        let a = oracle::exact_backward(&mats, 0).unwrap();
        let b = oracle::exact_backward(&mats, 1).unwrap();
        let tv = oracle::exact_tv(&a, &b).unwrap();
        worst = worst.max((tv - 0.7f64.powi(n as i32)).abs());
    }
    let pass = verdict(
        1,
        "oracle exactness (two-state geometric TV)",
        worst < 1e-12,
        &format!("max |tv - 0.7^n| = {worst:.3e} for n <= 50"),
    );
    assert!(pass);
}

#[test]
fn criterion_02_coupling_marginal_law() {
    let bundle = four_state_three_label();
    let opts = GoodTimeOptions::default();
    let n_max = 30i64;
    let env = EnvironmentRealization::realize(
        &three_label_env_spec(),
        42,
        -n_max - opts.horizon as i64,
        0,
    )
    .unwrap();
    let lambda = bundle.drift.lambda.clone();
    let bfn = bundle.drift.b.clone();
    let constants = find_constants(&env, &*lambda, &*bfn, &bundle.minorization, &opts).unwrap();
    let gti = good_times(
        &env,
        constants,
        (-n_max, 0),
        &*lambda,
        &*bfn,
        &bundle.minorization,
        &opts,
    )
    .unwrap();
    let r_level = gti.r();

    // Exact: scheduled coupled-matrix products, both marginals vs the plain
    // forward products, for every n <= 30.
    let mf = bundle.kernel.matrix.clone().unwrap();
    let nu_density = bundle.minorization.nu_density.clone().unwrap();
    let idx = CoupledIndex { n: 4 };
    let (z, z_bar) = (0usize, 3usize);
    let mut worst_exact = 0.0f64;
    for n in 1..=n_max {
        let mut coupled =
            DistributionVector::dirac(idx.total(), idx.pair(z, z_bar)).unwrap();
        let mut fwd_z = DistributionVector::dirac(4, z).unwrap();
        let mut fwd_zb = DistributionVector::dirac(4, z_bar).unwrap();
        for t in (-n + 1)..=0 {
            let x = env.value(t - 1).unwrap();
            let p = mf(x).unwrap();
            let eta = if gti.contains(t - 1) {
                (bundle.minorization.eta)(r_level, x)
            } else {
                0.0
            };
            let nu = DistributionVector::new(
                (0..4).map(|j| nu_density(r_level, x, &State::Label(j))).collect(),
            )
            .unwrap();
            let m = exact_coupled_matrix(&p, eta, &nu, &|_| true).unwrap();
            coupled = coupled.propagate(&m).unwrap();
            fwd_z = fwd_z.propagate(&p).unwrap();
            fwd_zb = fwd_zb.propagate(&p).unwrap();
        }
        let m0 = idx.marginal(&coupled, 0).unwrap();
        let m1 = idx.marginal(&coupled, 1).unwrap();
        worst_exact = worst_exact
            .max(oracle::exact_tv(&m0, &fwd_z).unwrap())
            .max(oracle::exact_tv(&m1, &fwd_zb).unwrap());
    }

    // Monte Carlo replication at n = 20.
    let n_mc = 20usize;
    let labels: Vec<usize> = (0..100_000usize)
        .into_par_iter()
        .map(|rep| {
            let key = StreamKey::root(777).child(rep as u64);
            let trace = run_coupling(
                &bundle,
                &env,
                &State::Label(z),
                &State::Label(z_bar),
                n_mc,
                &gti,
                r_level,
                &key,
            )
            .unwrap();
            trace.final_state().y.label().unwrap()
        })
        .collect();
    let mut counts = [0usize; 4];
    for l in labels {
        counts[l] += 1;
    }
    let mut fwd = DistributionVector::dirac(4, z).unwrap();
    for t in (-(n_mc as i64) + 1)..=0 {
        fwd = fwd.propagate(&mf(env.value(t - 1).unwrap()).unwrap()).unwrap();
    }
    let tv_mc: f64 = counts
        .iter()
        .zip(fwd.masses())
        .map(|(c, p)| (*c as f64 / 100_000.0 - p).abs())
        .sum::<f64>()
        / 2.0;

    let pass = verdict(
        2,
        "coupling marginal law (finite oracle + MC)",
        worst_exact < 1e-10 && tv_mc < 0.02,
        &format!("exact max TV {worst_exact:.3e}, MC TV {tv_mc:.4}"),
    );
    assert!(pass);
}

#[test]
fn criterion_03_geometric_coalescence_tarx() {
    let bundle = symmetric_tarx(0.5, 1.0);
    let ns: Vec<usize> = (1..=10).map(|k| 10 * k).collect();
    // The coupling runs at level R = 1, where the minorization mass
    // 2 R inf f = 2 phi(1.5) ~ 0.259 is well conditioned; the good-time
    // level 2 c1 (2 c1 + 1) = 20 has Gaussian floor ~6e-195 and would show
    // no coalescence at any feasible replica count.
    let fit = coalescence_curve(
        &bundle,
        &iid_normal_spec(),
        &State::scalar(1.0),
        &State::scalar(-1.0),
        &ns,
        10_000,
        20_260_114,
        &CurveOptions {
            r_level: Some(1.0),
            good_times: GoodTimeOptions::default(),
        },
    )
    .unwrap();
    let pass = verdict(
        3,
        "geometric coalescence decay (threshold AR, Gaussian noise)",
        !fit.degenerate && fit.kappa_hat < 1.0 && fit.r_squared > 0.9,
        &format!(
            "kappa_hat = {:.4}, r^2 = {:.4}, fractions {:?}",
            fit.kappa_hat,
            fit.r_squared,
            fit.curve
                .iter()
                .map(|c| c.non_coalesced_fraction)
                .collect::<Vec<_>>()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_return_time_moment_bounds() {
    // Homogeneous specialization: constant environment, lambda = 0.5 and
    // b = 1 declared for the drift (E|eps| = 1.25 sqrt(2/pi) ~ 0.997 <= 1),
    // c1 = 2, R = 20, eta = 4/3, D = 15.
    let bundle = symmetric_tarx(0.5, 1.25);
    let drift = DriftSpec {
        v: bundle.drift.v.clone(),
        lambda: const_coef(0.5) as CoefFn,
        b: const_coef(1.0) as CoefFn,
        p: 1,
    };
    let spec = EnvironmentSpec {
        kind: EnvironmentKind::DeterministicCycle { values: vec![vec![0.0]] },
        dim: 1,
        ergodic: true,
        mixing: true,
    };
    let opts = GoodTimeOptions::default();
    let n = 60usize;
    let env =
        EnvironmentRealization::realize(&spec, 0, -(n as i64) - opts.horizon as i64, 0).unwrap();
    let constants =
        find_constants(&env, &*drift.lambda, &*drift.b, &bundle.minorization, &opts).unwrap();
    assert_eq!(constants.c1, 2);
    let gti = good_times(
        &env,
        constants,
        (-(n as i64), 0),
        &*drift.lambda,
        &*drift.b,
        &bundle.minorization,
        &opts,
    )
    .unwrap();
    assert_eq!(gti.r(), 20.0);
    let traces: Vec<_> = (0..10_000usize)
        .into_par_iter()
        .map(|rep| {
            run_coupling(
                &bundle,
                &env,
                &State::scalar(15.0),
                &State::scalar(-15.0),
                n,
                &gti,
                gti.r(),
                &StreamKey::root(4).child(rep as u64),
            )
            .unwrap()
        })
        .collect();
    let rep = mcre_core::coupling::return_time_moments(&traces, constants.c1, gti.r()).unwrap();
    let eta_exact = (rep.eta - 4.0 / 3.0).abs() < 1e-15 && (rep.d - 15.0).abs() < 1e-15;
    let first = rep.first_return.expect("start has W = 30 > R");
    let gaps = rep.gaps.expect("returns occur");
    let pass = verdict(
        4,
        "return-time moment bounds (eta = 4/3, D = 15)",
        eta_exact && first.satisfied && gaps.satisfied,
        &format!(
            "E[eta^rho1] = {:.3} <= {} (+3se {:.3}), E[eta^gap] = {:.3} <= {} (+3se {:.3}), censored {}",
            first.empirical_mean,
            first.bound,
            3.0 * first.se,
            gaps.empirical_mean,
            gaps.bound,
            3.0 * gaps.se,
            rep.censored_first
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_05_lyapunov_estimator() {
    // Scalar constant 0.5 at n = 1000, exact to 1e-9.
    let env = EnvironmentRealization::realize(&iid_normal_spec(), 1, -1001, 0).unwrap();
    let g_const = lyapunov_exponent(
        |_| DMatrix::from_element(1, 1, 0.5),
        &env,
        1000,
        MatrixNorm::L1Induced,
    )
    .unwrap();
    let const_ok = (g_const - 0.5f64.ln()).abs() < 1e-9;

    // iid log-normal lambda with E log lambda = -0.2 at n = 1e5: within 0.02.
    let n = 100_000usize;
    let env = EnvironmentRealization::realize(&iid_normal_spec(), 5, -(n as i64) - 1, 0).unwrap();
    let g_ln = lyapunov_exponent(
        |x| DMatrix::from_element(1, 1, (x.x0() - 0.2).exp()),
        &env,
        n,
        MatrixNorm::L1Induced,
    )
    .unwrap();
    let ln_ok = (g_ln + 0.2).abs() < 0.02;
    let pass = verdict(
        5,
        "Lyapunov estimator (scalar exact + log-normal)",
        const_ok && ln_ok,
        &format!(
            "constant: {:.2e} error; log-normal: {:.4} vs -0.2",
            (g_const - 0.5f64.ln()).abs(),
            g_ln
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_backward_convergence_and_invariance() {
    let bundle = four_state_three_label();
    let env = EnvironmentRealization::realize(&three_label_env_spec(), 7, -160, 1).unwrap();
    // Max over start pairs of the exact backward TV at n = 50.
    let mut worst = 0.0f64;
    for z in 0..4usize {
        for zp in (z + 1)..4 {
            let a = backward_exact(&bundle.kernel, &env, z, 50).unwrap();
            let b = backward_exact(&bundle.kernel, &env, zp, 50).unwrap();
            worst = worst.max(oracle::exact_tv(&a, &b).unwrap());
        }
    }
    let inv = invariance_check(&bundle.kernel, &env, 60, 0, None, &StreamKey::root(0)).unwrap();
    let pass = verdict(
        6,
        "backward convergence + invariance (finite oracle)",
        worst < 1e-6 && inv.exact && inv.value < 1e-10,
        &format!("max pair TV at n=50: {worst:.3e}; invariance residual at n=60: {:.3e}", inv.value),
    );
    assert!(pass);
}

#[test]
fn criterion_07_forward_to_stationary() {
    let bundle = four_state_three_label();
    let spec = three_label_env_spec();
    let d0 = forward_convergence_exact(&bundle.kernel, &spec, 0, 0).unwrap();
    let d50 = forward_convergence_exact(&bundle.kernel, &spec, 0, 50).unwrap();
    // Decay along the way (sampled at a few t).
    let mut monotone = true;
    let mut prev = d0;
    for t in [5usize, 10, 20, 35, 50] {
        let d = forward_convergence_exact(&bundle.kernel, &spec, 0, t).unwrap();
        monotone &= d <= prev + 1e-12;
        prev = d;
    }
    let pass = verdict(
        7,
        "forward-to-stationary decay (exact joint chain)",
        d0 > 0.0 && monotone && d50 < 1e-6,
        &format!("d(0) = {d0:.4}, d(50) = {d50:.3e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_08_lln_two_seed_agreement_and_scaling() {
    let bundle = symmetric_tarx(0.5, 1.0);
    let f = |y: &State| f64::from(y.x0().unwrap().abs() <= 1.0);
    let n_backward = 1_000usize;
    let spec = iid_normal_spec();
    let run = |seed: u64, n: usize| -> (f64, Vec<f64>) {
        let env = EnvironmentRealization::realize(
            &spec,
            seed,
            -(n_backward as i64) - 2,
            n as i64 + 1,
        )
        .unwrap();
        let path = mcre_core::stationary::stationary_path_sample(
            &bundle.kernel,
            &env,
            1,
            n as i64,
            n_backward,
            &StreamKey::root(seed).child(1),
        )
        .unwrap();
        let vals: Vec<f64> = path.iter().map(f).collect();
        (vals.iter().sum::<f64>() / n as f64, vals)
    };

    // Two independent seeds at n = 1e5 agree within 3 pooled (batch-means) SE.
    let n = 100_000usize;
    let (a1, p1) = run(1001, n);
    let (a2, p2) = run(2002, n);
    let pooled = (stats::batch_means_se(&p1, 1000).unwrap().powi(2)
        + stats::batch_means_se(&p2, 1000).unwrap().powi(2))
    .sqrt();
    let agree = (a1 - a2).abs() <= 3.0 * pooled;

    // Across-seed spread at n vs 4n over 20 seed pairs: the ratio sits in
    // [1.6, 2.5] (ideal 2 by CLT scaling).
    let master = 31_337u64;
    let spread = |n: usize, salt: u64| -> f64 {
        let diffs: Vec<f64> = (0..20u64)
            .into_par_iter()
            .map(|k| {
                let s1 = mcre_core::stream::derive_seed(master, salt, 2 * k);
                let s2 = mcre_core::stream::derive_seed(master, salt, 2 * k + 1);
                run(s1, n).0 - run(s2, n).0
            })
            .collect();
        (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt()
    };
    let s_n = spread(n, 10);
    let s_4n = spread(4 * n, 11);
    let ratio = s_n / s_4n;
    let pass = verdict(
        8,
        "LLN seed agreement and 1/sqrt(n) scaling",
        agree && ratio >= 1.6 && ratio <= 2.5,
        &format!(
            "averages {a1:.5} vs {a2:.5} (3 pooled se {:.5}); spread ratio {ratio:.2}",
            3.0 * pooled
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_good_time_density_ar1() {
    // Gaussian AR(1) environment (unit marginal variance) driving a
    // threshold AR with lambda(x) = 0.7 exp(-0.3 |x|): E log lambda =
    // log 0.7 - 0.3 E|X| ~ -0.596 < 0.
    let coeff = 0.7f64;
    let spec = EnvironmentSpec {
        kind: EnvironmentKind::GaussianAr1 {
            coeff,
            innovation_sd: (1.0 - coeff * coeff).sqrt(),
            mean: 0.0,
        },
        dim: 1,
        ergodic: true,
        mixing: true,
    };
    let a_fn: CoefFn = Arc::new(|x: &EnvPoint| 0.7 * (-0.3 * x.x0().abs()).exp());
    let bundle = make_tarx(
        a_fn.clone(),
        const_coef(0.0),
        a_fn,
        const_coef(0.0),
        const_coef(0.0),
        NoiseSpec::gaussian(0.95),
        EtaConvention::Tight,
    )
    .unwrap();
    let opts = GoodTimeOptions::default();
    let n_big = 100_000usize;
    let env = EnvironmentRealization::realize(
        &spec,
        2_001,
        -(n_big as i64) - opts.horizon as i64,
        0,
    )
    .unwrap();
    // The contraction condition the model is declared to satisfy.
    let e_log_lambda = env
        .birkhoff_average(|x| (bundle.drift.lambda)(x).ln(), 50_000)
        .unwrap();
    assert!(e_log_lambda < 0.0, "E log lambda = {e_log_lambda}");

    let lambda = bundle.drift.lambda.clone();
    let bfn = bundle.drift.b.clone();
    let constants = find_constants(&env, &*lambda, &*bfn, &bundle.minorization, &opts).unwrap();
    let gti = good_times(
        &env,
        constants,
        (-(n_big as i64), 0),
        &*lambda,
        &*bfn,
        &bundle.minorization,
        &opts,
    )
    .unwrap();

    // Index invariants: spacing, the level formula, and the minorization
    // floor at every listed good time.
    let c1 = constants.c1;
    let spacing_ok = gti.tau.windows(2).all(|w| w[1] - w[0] >= c1 as i64);
    let r_formula_ok = gti.r() == 2.0 * c1 as f64 * (2.0 * c1 as f64 + 1.0);
    let floor = constants.eta_floor();
    let eta_ok = gti
        .tau
        .iter()
        .all(|t| (bundle.minorization.eta)(gti.r(), env.value(*t).unwrap()) >= floor);

    let d_half = good_time_density(&env, constants, 50_000, &*lambda, &*bfn, &bundle.minorization, &opts)
        .unwrap();
    let d_full = good_time_density(&env, constants, n_big, &*lambda, &*bfn, &bundle.minorization, &opts)
        .unwrap();
    let stable = d_half > 0.0 && d_full > 0.0 && (d_half - d_full).abs() <= 0.1 * d_full;
    let pass = verdict(
        9,
        "good-time density (AR(1) environment)",
        spacing_ok && r_formula_ok && eta_ok && stable,
        &format!(
            "c1 = {c1}, c2 = {:.3e}, density {d_half:.4} @ 5e4 vs {d_full:.4} @ 1e5",
            constants.c2
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_residual_kernel() {
    // Rejection acceptance rate over 1e5 proposals equals 1 - eta within
    // 3 binomial SE.
    let bundle = symmetric_tarx(0.5, 1.0);
    let r_level = 1.0;
    let x = EnvPoint::scalar(0.2);
    let y = State::scalar(-0.4);
    let eta = (bundle.minorization.eta)(r_level, &x);
    let density = bundle.kernel.density.clone().unwrap();
    let nu_density = bundle.minorization.nu_density.clone().unwrap();
    let n = 100_000usize;
    let mut rng = StreamKey::root(10_001).rng();
    let mut accepted = 0usize;
    use rand::Rng;
    for _ in 0..n {
        let w = kernel_step(&bundle.kernel, &x, &y, &mut rng).unwrap();
        let pw = density(&x, &y, &w);
        let margin = pw - eta * nu_density(r_level, &x, &w);
        if rng.gen::<f64>() * pw < margin.max(0.0) {
            accepted += 1;
        }
    }
    let rate = accepted as f64 / n as f64;
    let se = ((1.0 - eta) * eta / n as f64).sqrt();
    let rate_ok = (rate - (1.0 - eta)).abs() <= 3.0 * se;

    // Finite residual rows match the closed form within 1e-12.
    let finite = make_finite(vec![DMatrix::from_row_slice(
        2,
        2,
        &[0.9, 0.1, 0.2, 0.8],
    )])
    .unwrap();
    let xf = EnvPoint::scalar(0.0);
    let eta_f = 0.3;
    let nu = [2.0 / 3.0, 1.0 / 3.0];
    let p = [[0.9, 0.1], [0.2, 0.8]];
    let mut worst = 0.0f64;
    for (i, row) in p.iter().enumerate() {
        let got =
            finite_residual_row(&finite.kernel, &finite.minorization, 1.0, &xf, &State::Label(i))
                .unwrap();
        for j in 0..2 {
            let want = (row[j] - eta_f * nu[j]) / (1.0 - eta_f);
            worst = worst.max((got[j] - want).abs());
        }
    }
    let pass = verdict(
        10,
        "residual kernel (acceptance rate + closed-form rows)",
        rate_ok && worst < 1e-12,
        &format!(
            "rate {rate:.4} vs 1 - eta = {:.4} (3se {:.4}); row error {worst:.2e}",
            1.0 - eta,
            3.0 * se
        ),
    );
    assert!(pass);
}
