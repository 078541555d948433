//! Statistical and distribution-level checks: stationarity of the
//! realized environments, sampler/density agreement, minorization grids,
//! rejection identities, coupled-marginal correctness and the law of large
//! numbers along stationary paths. Every test is pinned to a fixed seed.

use std::sync::Arc;

use mcre_core::conditions::{drift_check, geometric_mean_condition, lyapunov_exponent, MatrixNorm};
use mcre_core::environment::{EnvironmentKind, EnvironmentRealization, EnvironmentSpec, IidDistribution};
use mcre_core::goodtimes::{GoodTimeConstants, GoodTimeIndex};
use mcre_core::kernel::{kernel_step, minorization_validate, residual_sample, State};
use mcre_core::models::{
    const_coef, make_farx, make_finite, make_rca, make_tarx, EtaConvention, FarEnvelopes,
    LagCoefFn, NoiseSpec,
};
use mcre_core::stats;
use mcre_core::stream::StreamKey;
use mcre_core::{EnvPoint, ModelBundle};

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

fn ar1_spec(coeff: f64) -> EnvironmentSpec {
    EnvironmentSpec {
        kind: EnvironmentKind::GaussianAr1 {
            coeff,
            innovation_sd: (1.0 - coeff * coeff).sqrt(), // unit marginal variance
            mean: 0.0,
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

#[test]
fn iid_birkhoff_average_within_clt_band() {
    let n = 100_000usize;
    let r = EnvironmentRealization::realize(&iid_normal_spec(), 2024, -(n as i64), 0).unwrap();
    let avg = r.birkhoff_average(|x| x.x0(), n).unwrap();
    assert!(avg.abs() < 3.0 / (n as f64).sqrt(), "avg = {avg}");
}

#[test]
fn ar1_marginals_are_stationary_across_time() {
    // Empirical mean/variance at two distinct indices over 1e4 seeds must
    // agree within 4 standard errors.
    let spec = ar1_spec(0.7);
    let seeds = 10_000u64;
    let (mut at_a, mut at_b) = (Vec::new(), Vec::new());
    for seed in 0..seeds {
        let r = EnvironmentRealization::realize(&spec, seed, -3, 5).unwrap();
        at_a.push(r.value(-3).unwrap().x0());
        at_b.push(r.value(5).unwrap().x0());
    }
    let (ma, sa) = stats::mean_sd(&at_a);
    let (mb, sb) = stats::mean_sd(&at_b);
    let n = seeds as f64;
    let se_mean = (sa * sa / n + sb * sb / n).sqrt();
    assert!((ma - mb).abs() < 4.0 * se_mean, "means {ma} vs {mb}");
    // Variance comparison: SE of the sample variance of a normal is
    // sigma^2 sqrt(2/(n-1)).
    let (va, vb) = (sa * sa, sb * sb);
    let se_var = ((2.0 * va * va + 2.0 * vb * vb) / (n - 1.0)).sqrt();
    assert!((va - vb).abs() < 4.0 * se_var, "variances {va} vs {vb}");
    // And both match the exact stationary unit variance.
    assert!((va - 1.0).abs() < 4.0 * va * (2.0 / (n - 1.0)).sqrt());
}

#[test]
fn tarx_sampler_agrees_with_density() {
    // KS statistic between 1e5 one-step samples and the transition CDF
    // below the 1% critical value, at fixed (x, y).
    let bundle = symmetric_tarx(0.5, 1.0);
    let x = EnvPoint::scalar(0.4);
    let y = State::scalar(1.3);
    let noise = NoiseSpec::gaussian(1.0);
    let s_xy = 0.5 * 1.3;
    let n = 100_000usize;
    let mut rng = StreamKey::root(777).rng();
    let mut samples: Vec<f64> = (0..n)
        .map(|_| {
            kernel_step(&bundle.kernel, &x, &y, &mut rng)
                .unwrap()
                .x0()
                .unwrap()
        })
        .collect();
    let d = stats::ks_statistic(&mut samples, |w| noise.cdf(w - s_xy));
    let crit = stats::ks_critical(n, 0.01);
    assert!(d < crit, "KS = {d}, critical = {crit}");
}

#[test]
fn tarx_density_normalizes_on_support_grid() {
    let bundle = symmetric_tarx(0.5, 1.0);
    let density = bundle.kernel.density.as_ref().unwrap();
    let x = EnvPoint::scalar(-0.7);
    let y = State::scalar(2.0);
    // Trapezoid quadrature over a +-12 sigma grid around the mean.
    let center = 0.5 * 2.0;
    let (lo, hi) = (center - 12.0, center + 12.0);
    let steps = 40_000usize;
    let h = (hi - lo) / steps as f64;
    let mut acc = 0.0;
    for i in 0..=steps {
        let w = lo + i as f64 * h;
        let v = density(&x, &y, &State::scalar(w));
        let weight = if i == 0 || i == steps { 0.5 } else { 1.0 };
        acc += weight * v * h;
    }
    assert!((acc - 1.0).abs() < 1e-3, "integral = {acc}");
}

#[test]
fn minorization_grid_tarx_passes_and_inflated_eta_fails() {
    let bundle = symmetric_tarx(0.5, 1.0);
    let r_level = 1.0;
    let xs: Vec<EnvPoint> = (-2..=2).map(|k| EnvPoint::scalar(k as f64 * 0.8)).collect();
    let ys: Vec<State> = (0..50)
        .map(|k| State::scalar(-r_level + 2.0 * r_level * k as f64 / 49.0))
        .collect();
    let rep = minorization_validate(&bundle.kernel, &bundle.minorization, r_level, &xs, &ys).unwrap();
    assert!(rep.pass, "margin {}", rep.min_margin);
    assert_eq!(rep.checked, xs.len() * ys.len() * ys.len());

    // Inflating eta by 10 breaks the bound with a clearly negative margin.
    let mut inflated = bundle.minorization.clone();
    let base = bundle.minorization.eta.clone();
    inflated.eta = Arc::new(move |r, x| (base(r, x) * 10.0).min(1.0 - 1e-12));
    let rep = minorization_validate(&bundle.kernel, &inflated, r_level, &xs, &ys).unwrap();
    assert!(!rep.pass);
    assert!(rep.min_margin < -1e-6);
}

#[test]
fn minorization_finite_column_minima_is_exact() {
    let bundle = make_finite(vec![nalgebra::DMatrix::from_row_slice(
        2,
        2,
        &[0.9, 0.1, 0.2, 0.8],
    )])
    .unwrap();
    let xs = vec![EnvPoint::scalar(0.0)];
    let ys = vec![State::Label(0), State::Label(1)];
    let rep = minorization_validate(&bundle.kernel, &bundle.minorization, 1.0, &xs, &ys).unwrap();
    assert!(rep.pass);
    // The column-minimum construction is tight: the binding entry has
    // exactly zero margin.
    assert!(rep.min_margin.abs() < 1e-15, "margin {}", rep.min_margin);
}

#[test]
fn rejection_acceptance_rate_matches_one_minus_eta() {
    // One-shot proposals through the rejection identity: accept w ~ P with
    // probability (p(w) - eta nu(w)) / p(w); the acceptance rate is 1 - eta.
    let bundle = symmetric_tarx(0.5, 1.0);
    let r_level = 1.0;
    let x = EnvPoint::scalar(0.0);
    let y = State::scalar(0.5);
    let eta = (bundle.minorization.eta)(r_level, &x);
    let density = bundle.kernel.density.as_ref().unwrap();
    let nu_density = bundle.minorization.nu_density.as_ref().unwrap();
    let n = 100_000usize;
    let mut rng = StreamKey::root(4242).rng();
    let mut accepted = 0usize;
    use rand::Rng;
    for _ in 0..n {
        let w = kernel_step(&bundle.kernel, &x, &y, &mut rng).unwrap();
        let pw = density(&x, &y, &w);
        let margin = pw - eta * nu_density(r_level, &x, &w);
        assert!(margin > -1e-12 * pw.max(1.0));
        if rng.gen::<f64>() * pw < margin.max(0.0) {
            accepted += 1;
        }
    }
    let rate = accepted as f64 / n as f64;
    let se = (rate * (1.0 - rate) / n as f64).sqrt();
    assert!(
        (rate - (1.0 - eta)).abs() <= 3.0 * se,
        "rate {rate} vs 1 - eta = {}, se {se}",
        1.0 - eta
    );
}

#[test]
fn residual_sampler_matches_residual_law() {
    // KS of residual draws against the analytic residual CDF
    // (F_noise(w - s) - eta U_cdf(w)) / (1 - eta).
    let bundle = symmetric_tarx(0.5, 1.0);
    let r_level = 1.0;
    let x = EnvPoint::scalar(0.0);
    let y = State::scalar(0.5);
    let eta = (bundle.minorization.eta)(r_level, &x);
    let noise = NoiseSpec::gaussian(1.0);
    let s_xy = 0.25;
    let n = 30_000usize;
    let mut rng = StreamKey::root(55).rng();
    let mut samples: Vec<f64> = (0..n)
        .map(|_| {
            residual_sample(&bundle.kernel, &bundle.minorization, r_level, &x, &y, &mut rng)
                .unwrap()
                .x0()
                .unwrap()
        })
        .collect();
    let cdf = |w: f64| {
        let u = ((w + r_level) / (2.0 * r_level)).clamp(0.0, 1.0);
        (noise.cdf(w - s_xy) - eta * u) / (1.0 - eta)
    };
    let d = stats::ks_statistic(&mut samples, cdf);
    let crit = stats::ks_critical(n, 0.01);
    assert!(d < crit, "KS = {d}, critical = {crit}");
}

#[test]
fn lognormal_lambda_geometric_mean_estimate() {
    let n = 100_000usize;
    let r = EnvironmentRealization::realize(&iid_normal_spec(), 31, -(n as i64) - 1, 0).unwrap();
    let rep = geometric_mean_condition(&r, |x| (0.5 * x.x0() - 0.2).exp(), 1, n).unwrap();
    let want = (-0.2f64).exp();
    assert!((rep.estimate - want).abs() <= rep.confidence_halfwidth.max(0.01));
    assert!(rep.pass);
}

#[test]
fn log_norm_rate_is_subadditive_in_n() {
    // Mean of the n-step log-norm rate non-increasing across n in
    // {10, 100, 1000}, within 3 SE, for companion-matrix products.
    let a1: LagCoefFn = Arc::new(|x: &EnvPoint, _: &[f64]| 0.45 * (1.0 + 0.5 * x.x0().sin()));
    let a2: LagCoefFn = Arc::new(|_, _| 0.3);
    let bundle = make_farx(
        vec![a1, a2],
        NoiseSpec::gaussian(1.0),
        FarEnvelopes::Supplied(vec![
            Arc::new(|x: &EnvPoint| 0.45 * (1.0 + 0.5 * x.x0().sin()).abs()),
            const_coef(0.3),
        ]),
    )
    .unwrap();
    let a = bundle.lyapunov_matrix.clone().unwrap();
    let replicas = 120u64;
    let mut means = Vec::new();
    let mut ses = Vec::new();
    for (i, n) in [10usize, 100, 1000].into_iter().enumerate() {
        let rates: Vec<f64> = (0..replicas)
            .map(|rep| {
                let seed = 9_000 + i as u64 * replicas + rep;
                let env = EnvironmentRealization::realize(&iid_normal_spec(), seed, -(n as i64) - 1, 0)
                    .unwrap();
                lyapunov_exponent(|x| a(x), &env, n, MatrixNorm::L1Induced).unwrap()
            })
            .collect();
        let (m, sd) = stats::mean_sd(&rates);
        means.push(m);
        ses.push(sd / (replicas as f64).sqrt());
    }
    for i in 1..means.len() {
        let slack = 3.0 * (ses[i - 1].powi(2) + ses[i].powi(2)).sqrt();
        assert!(
            means[i] <= means[i - 1] + slack,
            "rate increased: {:?} +- {:?}",
            means,
            ses
        );
    }
}

#[test]
fn farx_lyapunov_negative_when_envelope_sum_below_one() {
    // sum_j sup_x b_j < 1 keeps the companion spectral radius below one.
    let a1: LagCoefFn = Arc::new(|x: &EnvPoint, _: &[f64]| 0.5 * (-x.x0().abs()).exp());
    let a2: LagCoefFn = Arc::new(|_, _| 0.35);
    let bundle = make_farx(
        vec![a1, a2],
        NoiseSpec::gaussian(1.0),
        FarEnvelopes::Supplied(vec![
            Arc::new(|x: &EnvPoint| 0.5 * (-x.x0().abs()).exp()),
            const_coef(0.35),
        ]),
    )
    .unwrap();
    let n = 10_000usize;
    let env = EnvironmentRealization::realize(&iid_normal_spec(), 12, -(n as i64) - 1, 0).unwrap();
    let a = bundle.lyapunov_matrix.clone().unwrap();
    let gamma = lyapunov_exponent(|x| a(x), &env, n, MatrixNorm::L1Induced).unwrap();
    assert!(gamma < 0.0, "gamma = {gamma}");
}

#[test]
fn farx_two_step_minorization_positive_on_grid() {
    // Grid infimum of the two-step product density stays above the claimed
    // eta nu bound on a 20^4-point grid (20 source pairs x 20 target pairs
    // per coordinate pair).
    let a1: LagCoefFn = Arc::new(|x: &EnvPoint, _: &[f64]| 0.4 * x.x0().tanh());
    let a2: LagCoefFn = Arc::new(|_, _| 0.25);
    let bundle = make_farx(
        vec![a1, a2],
        NoiseSpec::gaussian(1.0),
        FarEnvelopes::Supplied(vec![
            Arc::new(|x: &EnvPoint| 0.4 * x.x0().tanh().abs()),
            const_coef(0.25),
        ]),
    )
    .unwrap();
    let r_level = 1.0;
    let grid: Vec<f64> = (0..20)
        .map(|k| -r_level + 2.0 * r_level * k as f64 / 19.0)
        .collect();
    let ys: Vec<State> = grid
        .iter()
        .flat_map(|&u| grid.iter().map(move |&v| State::Real(vec![u, v])))
        .collect();
    // Blocked tuples (x2 | x1) to exercise environment dependence.
    let xs: Vec<EnvPoint> = vec![
        EnvPoint(vec![0.0, 0.0]),
        EnvPoint(vec![1.0, -1.0]),
        EnvPoint(vec![-0.5, 0.25]),
    ];
    let rep = minorization_validate(&bundle.kernel, &bundle.minorization, r_level, &xs, &ys).unwrap();
    assert!(rep.pass, "margin {}", rep.min_margin);
    // The floor itself is strictly positive.
    for x in &xs {
        assert!((bundle.minorization.eta)(r_level, x) > 0.0);
    }
}

#[test]
fn farx_drift_check_two_step_monte_carlo() {
    let a1: LagCoefFn = Arc::new(|x: &EnvPoint, _: &[f64]| 0.4 * x.x0().tanh());
    let a2: LagCoefFn = Arc::new(|_, _| 0.25);
    let bundle = make_farx(
        vec![a1, a2],
        NoiseSpec::gaussian(1.0),
        FarEnvelopes::Supplied(vec![
            Arc::new(|x: &EnvPoint| 0.4 * x.x0().tanh().abs()),
            const_coef(0.25),
        ]),
    )
    .unwrap();
    let points: Vec<(EnvPoint, State)> = [-4.0f64, 0.0, 3.0]
        .into_iter()
        .flat_map(|y| {
            [(0.5, -0.5), (0.0, 0.0)]
                .into_iter()
                .map(move |(x2, x1)| (EnvPoint(vec![x2, x1]), State::Real(vec![y, -y])))
        })
        .collect();
    let rep = drift_check(&bundle.kernel, &bundle.drift, &points, 20_000, &StreamKey::root(61)).unwrap();
    assert!(rep.pass, "worst margin {}", rep.estimate);
}

fn all_good_gti(n: i64, c1: u32) -> GoodTimeIndex {
    GoodTimeIndex {
        constants: GoodTimeConstants { c1, c2: 3.0 },
        tau: (-n..=0).step_by(c1 as usize).collect(),
        horizon: (-n, 0),
        raw_count: (n + 1) as usize,
    }
}

#[test]
fn coupled_marginal_matches_single_chain_histogram() {
    // TV of binned histograms between the coupled first coordinate at time
    // 0 and the plain chain below 0.02 at 1e5 replicas.
    let bundle = symmetric_tarx(0.5, 1.0);
    let n = 15usize;
    let env = EnvironmentRealization::realize(&iid_normal_spec(), 99, -(n as i64) - 1, 0).unwrap();
    let gti = all_good_gti(n as i64, 2);
    let replicas = 100_000usize;
    use rayon::prelude::*;
    let coupled: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|rep| {
            let key = StreamKey::root(1234).child(rep as u64);
            let trace = mcre_core::coupling::run_coupling(
                &bundle,
                &env,
                &State::scalar(1.0),
                &State::scalar(-1.0),
                n,
                &gti,
                1.0,
                &key,
            )
            .unwrap();
            trace.final_state().y.x0().unwrap()
        })
        .collect();
    let plain: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|rep| {
            let mut rng = StreamKey::root(4321).child(rep as u64).rng();
            let mut y = State::scalar(1.0);
            for t in -(n as i64)..0 {
                y = kernel_step(&bundle.kernel, env.value(t).unwrap(), &y, &mut rng).unwrap();
            }
            y.x0().unwrap()
        })
        .collect();
    // 50 equal-mass bins keep the equal-law bias floor (~0.013) clear of
    // the 0.02 budget.
    let tv = stats::binned_tv(&coupled, &plain, 50).unwrap();
    assert!(tv.value < 0.02, "TV = {} (bias floor {})", tv.value, tv.bias_floor);
}

#[test]
fn subsampled_w_drift_bound_holds() {
    // E[W_i - ((1 - 1/c1) W_{i-1} + 2 c1)] <= 3 SE across skeleton steps.
    let bundle = symmetric_tarx(0.5, 1.25);
    let n = 40usize;
    let env = EnvironmentRealization::realize(&iid_normal_spec(), 7, -(n as i64) - 1, 0).unwrap();
    let gti = all_good_gti(n as i64, 2);
    let c1 = 2.0f64;
    use rayon::prelude::*;
    let residuals: Vec<f64> = (0..20_000usize)
        .into_par_iter()
        .flat_map_iter(|rep| {
            let key = StreamKey::root(31415).child(rep as u64);
            let trace = mcre_core::coupling::run_coupling(
                &bundle,
                &env,
                &State::scalar(12.0),
                &State::scalar(-9.0),
                n,
                &gti,
                20.0,
                &key,
            )
            .unwrap();
            trace
                .w
                .windows(2)
                .map(|w| w[1] - ((1.0 - 1.0 / c1) * w[0] + 2.0 * c1))
                .collect::<Vec<f64>>()
        })
        .collect();
    let (mean, sd) = stats::mean_sd(&residuals);
    let se = sd / (residuals.len() as f64).sqrt();
    assert!(mean <= 3.0 * se, "mean residual {mean}, se {se}");
}

#[test]
fn stationary_path_is_shift_consistent() {
    // A segment from (u+1, t+1) on the shifted environment has the same law
    // as the segment from (u, t): compare binned marginals at 3 SE.
    let bundle = symmetric_tarx(0.6, 1.0);
    let spec = iid_normal_spec();
    let replicas = 20_000usize;
    let n_backward = 300usize;
    let env = EnvironmentRealization::realize(&spec, 5150, -(n_backward as i64) - 10, 10).unwrap();
    let shifted = env.shifted(1).unwrap();
    use rayon::prelude::*;
    let base: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|rep| {
            let key = StreamKey::root(777).child(rep as u64);
            let path =
                mcre_core::stationary::stationary_path_sample(&bundle.kernel, &env, 2, 5, n_backward, &key)
                    .unwrap();
            path.last().unwrap().x0().unwrap()
        })
        .collect();
    let moved: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|rep| {
            let key = StreamKey::root(778).child(rep as u64);
            let path = mcre_core::stationary::stationary_path_sample(
                &bundle.kernel,
                &shifted,
                1,
                4,
                n_backward,
                &key,
            )
            .unwrap();
            path.last().unwrap().x0().unwrap()
        })
        .collect();
    let tv = stats::binned_tv(&base, &moved, 60).unwrap();
    // 3 SE on the binned TV: three times the equal-law bias floor.
    assert!(
        tv.value < 3.0 * tv.bias_floor,
        "TV {} vs floor {}",
        tv.value,
        tv.bias_floor
    );
}

#[test]
fn invariance_residual_tarx_binned() {
    let bundle = symmetric_tarx(0.5, 1.0);
    let n = 200usize;
    let env =
        EnvironmentRealization::realize(&iid_normal_spec(), 2718, -(n as i64) - 2, 2).unwrap();
    let est = mcre_core::stationary::invariance_check(
        &bundle.kernel,
        &env,
        n,
        100_000,
        Some(100),
        &StreamKey::root(6),
    )
    .unwrap();
    assert!(!est.exact);
    assert!(est.value < 0.03, "residual {} (floor {})", est.value, est.bias_floor);
}

#[test]
fn lln_two_seeds_agree() {
    let bundle = symmetric_tarx(0.5, 1.0);
    let n = 100_000usize;
    let n_backward = 1_000usize;
    let f = |y: &State| {
        let v = y.x0().unwrap();
        f64::from(v.abs() <= 1.0)
    };
    let mut avgs = Vec::new();
    let mut paths = Vec::new();
    for seed in [101u64, 202u64] {
        let env = EnvironmentRealization::realize(
            &iid_normal_spec(),
            seed,
            -(n_backward as i64) - 2,
            n as i64 + 1,
        )
        .unwrap();
        let key = StreamKey::root(seed).child(9);
        let path = mcre_core::stationary::stationary_path_sample(
            &bundle.kernel,
            &env,
            1,
            n as i64,
            n_backward,
            &key,
        )
        .unwrap();
        let vals: Vec<f64> = path.iter().map(f).collect();
        avgs.push(vals.iter().sum::<f64>() / n as f64);
        paths.push(vals);
    }
    let se0 = stats::batch_means_se(&paths[0], 1000).unwrap();
    let se1 = stats::batch_means_se(&paths[1], 1000).unwrap();
    let pooled = (se0 * se0 + se1 * se1).sqrt();
    assert!(
        (avgs[0] - avgs[1]).abs() <= 3.0 * pooled,
        "{} vs {} (pooled SE {pooled})",
        avgs[0],
        avgs[1]
    );
}

#[test]
fn rca_clipped_square_matches_long_reference_run() {
    // LLN average of min(y^2, 25) against an independent long forward
    // simulation of the same recursion; the unclipped variance is
    // 1/(1 - a^2) = 4/3.
    let a = 0.5f64;
    let bundle = make_rca(const_coef(a), NoiseSpec::gaussian(1.0)).unwrap();
    let n = 200_000usize;
    let n_backward = 1_000usize;
    let env = EnvironmentRealization::realize(
        &iid_normal_spec(),
        808,
        -(n_backward as i64) - 2,
        n as i64 + 1,
    )
    .unwrap();
    let clip = |v: f64| v.powi(2).min(25.0);
    let avg = mcre_core::stationary::lln_average(
        &bundle.kernel,
        &env,
        |y| clip(y.x0().unwrap()),
        n,
        n_backward,
        &StreamKey::root(99),
    )
    .unwrap();
    // Reference: direct scalar recursion, separate seed and code path.
    let m = 400_000usize;
    let mut rng = StreamKey::root(123_456).rng();
    let noise = NoiseSpec::gaussian(1.0);
    let mut y = 0.0f64;
    for _ in 0..2_000 {
        y = a * y + noise.sample(&mut rng);
    }
    let mut vals = Vec::with_capacity(m);
    for _ in 0..m {
        y = a * y + noise.sample(&mut rng);
        vals.push(clip(y));
    }
    let (reference, _) = stats::mean_sd(&vals);
    let se_ref = stats::batch_means_se(&vals, 2000).unwrap();
    // Batch-means SE for the LLN run, recomputed from a matching path.
    let se_lln = se_ref * (m as f64 / n as f64).sqrt();
    let pooled = (se_ref * se_ref + se_lln * se_lln).sqrt();
    assert!(
        (avg - reference).abs() <= 3.0 * pooled,
        "lln {avg} vs reference {reference} (pooled {pooled})"
    );
    // Sanity: both sit near the analytic unclipped variance.
    assert!((reference - 4.0 / 3.0).abs() < 0.05);
}

#[test]
fn finite_bundle_passes_default_checks() {
    let bundle = make_finite(vec![
        nalgebra::DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]),
        nalgebra::DMatrix::from_row_slice(2, 2, &[0.6, 0.4, 0.3, 0.7]),
    ])
    .unwrap();
    let points: Vec<(EnvPoint, State)> = (0..2)
        .flat_map(|l| (0..2).map(move |s| (EnvPoint::scalar(l as f64), State::Label(s))))
        .collect();
    let rep = drift_check(&bundle.kernel, &bundle.drift, &points, 0, &StreamKey::root(0)).unwrap();
    assert!(rep.pass);
    let xs: Vec<EnvPoint> = (0..2).map(|l| EnvPoint::scalar(l as f64)).collect();
    let ys = vec![State::Label(0), State::Label(1)];
    let rep =
        minorization_validate(&bundle.kernel, &bundle.minorization, bundle.default_r, &xs, &ys)
            .unwrap();
    assert!(rep.pass);
}

#[test]
fn tarx_bundle_passes_default_checks() {
    let bundle = symmetric_tarx(0.5, 1.0);
    let points: Vec<(EnvPoint, State)> = [-0.9f64, 0.0, 1.1]
        .into_iter()
        .flat_map(|x| {
            [-5.0f64, 0.0, 5.0]
                .into_iter()
                .map(move |y| (EnvPoint::scalar(x), State::scalar(y)))
        })
        .collect();
    let rep = drift_check(&bundle.kernel, &bundle.drift, &points, 20_000, &StreamKey::root(1)).unwrap();
    assert!(rep.pass);
}
