//! Numerical checks of the drift inequalities, the geometric-mean
//! contraction of the environment coefficients, the weighted coefficient
//! series, and Lyapunov exponents of random matrix products.
//!
//! Almost-sure limit conditions are evaluated at finite horizons; a report
//! carries the dyadic trajectory of the estimate alongside the verdict so
//! the stability of the limit can be judged, but the pass flag itself is a
//! function of (estimate, halfwidth, threshold) only.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::environment::{EnvPoint, EnvironmentRealization};
use crate::error::{CoreError, Result};
use crate::kernel::{compose, split_blocked, DriftSpec, KernelFamily, State};
use crate::models::l1_operator_norm;
use crate::stats;
use crate::stream::StreamKey;

/// Per-point diagnostic attached to a report.
#[derive(Clone, Debug, Serialize)]
pub struct Diagnostic {
    pub label: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Outcome of one condition check.
#[derive(Clone, Debug, Serialize)]
pub struct ConditionReport {
    pub name: String,
    pub estimate: f64,
    pub confidence_halfwidth: f64,
    pub threshold: f64,
    pub pass: bool,
    pub details: Vec<Diagnostic>,
    /// (horizon, estimate) pairs at dyadic horizons, oldest first.
    pub trajectory: Vec<(u64, f64)>,
}

impl ConditionReport {
    fn decide(name: &str, estimate: f64, halfwidth: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            estimate,
            confidence_halfwidth: halfwidth,
            threshold,
            pass: estimate + halfwidth < threshold,
            details: Vec::new(),
            trajectory: Vec::new(),
        }
    }
}

/// Check (composed) P V(y) <= lambda(x) V(y) + b(x) at each supplied point.
///
/// Exact matrix evaluation is used whenever the family carries matrices;
/// otherwise P V is estimated with `n_mc` samples and the inequality is
/// tested with a one-sided three-standard-error allowance. Points carry the
/// blocked environment tuple (newest value first) matching `drift.p`.
pub fn drift_check(
    family: &KernelFamily,
    drift: &DriftSpec,
    points: &[(EnvPoint, State)],
    n_mc: usize,
    stream: &StreamKey,
) -> Result<ConditionReport> {
    if points.is_empty() {
        return Err(CoreError::Argument("drift check needs points".into()));
    }
    let exact = family.matrix.is_some();
    if !exact && n_mc < 1_000 {
        return Err(CoreError::Argument(format!(
            "Monte Carlo drift check needs n_mc >= 1000, got {n_mc}"
        )));
    }
    let results: Vec<Result<(f64, f64, f64)>> = points
        .par_iter()
        .enumerate()
        .map(|(i, (x, y))| {
            let seq = split_blocked(x, family.env_dim, drift.p)?;
            let vy = (drift.v)(y);
            let bound = (drift.lambda)(x) * vy + (drift.b)(x);
            if exact {
                let composed = compose(family, &seq)?;
                let m = composed.matrix().ok_or_else(|| {
                    CoreError::Capability("matrix disappeared under composition".into())
                })?;
                let row = y.label()?;
                let mut pv = 0.0;
                for j in 0..m.ncols() {
                    pv += m[(row, j)] * (drift.v)(&State::Label(j));
                }
                Ok((pv, 0.0, bound))
            } else {
                let mut rng = stream.child(i as u64).rng();
                let composed = compose(family, &seq)?;
                let mut vals = Vec::with_capacity(n_mc);
                for _ in 0..n_mc {
                    let w = composed.sample(y, &mut rng)?;
                    let vw = (drift.v)(&w);
                    if !vw.is_finite() {
                        return Err(CoreError::Numeric(format!(
                            "non-finite V along sampled path from point {i}"
                        )));
                    }
                    vals.push(vw);
                }
                let (mean, sd) = stats::mean_sd(&vals);
                Ok((mean, sd / (n_mc as f64).sqrt(), bound))
            }
        })
        .collect();

    let mut details = Vec::with_capacity(points.len());
    let mut worst_margin = f64::NEG_INFINITY;
    let mut worst_allow = 0.0;
    for (i, r) in results.into_iter().enumerate() {
        let (pv, se, bound) = r?;
        let allow = if exact { 1e-12 * bound.abs().max(1.0) } else { 3.0 * se };
        let margin = pv - bound;
        details.push(Diagnostic {
            label: format!("point {i}"),
            value: pv,
            bound: bound + allow,
            pass: margin <= allow,
        });
        if margin > worst_margin {
            worst_margin = margin;
            worst_allow = allow;
        }
    }
    let pass = details.iter().all(|d| d.pass);
    Ok(ConditionReport {
        name: "drift".into(),
        estimate: worst_margin,
        confidence_halfwidth: worst_allow,
        threshold: 0.0,
        pass,
        details,
        trajectory: Vec::new(),
    })
}

/// n-th geometric mean of lambda along the past: for p = 1 the product runs
/// over X_{-1} .. X_{-n}; for p > 1 over the non-overlapping blocks ending
/// at -1 - kp, newest value first within each block.
pub fn geometric_mean_condition(
    r: &EnvironmentRealization,
    lambda: impl Fn(&EnvPoint) -> f64,
    p: usize,
    n: usize,
) -> Result<ConditionReport> {
    if n == 0 {
        return Err(CoreError::Argument("need n >= 1".into()));
    }
    let blocked;
    let src = if p > 1 {
        blocked = r.blocked(p)?;
        &blocked
    } else {
        r
    };
    let mut logs = Vec::with_capacity(n);
    let mut first = None;
    let mut constant = true;
    for k in 0..n as i64 {
        let t = -1 - k * p as i64;
        let lam = lambda(src.value(t)?);
        if !(lam > 0.0) || !lam.is_finite() {
            return Err(CoreError::Numeric(format!(
                "lambda = {lam} at block {k}: log undefined"
            )));
        }
        match first {
            None => first = Some(lam),
            Some(f) => constant &= f == lam,
        }
        logs.push(lam.ln());
    }
    // A constant sequence's geometric mean is that constant; bypass the
    // exp/ln round trip.
    let estimate = if constant {
        first.unwrap()
    } else {
        let (mean, _) = stats::mean_sd(&logs);
        mean.exp()
    };
    let (_, sd_log) = stats::mean_sd(&logs);
    let halfwidth = estimate * (3.0 * sd_log / (n as f64).sqrt());

    let mut report = ConditionReport::decide("geometric-mean", estimate, halfwidth, 1.0);
    // Dyadic trajectory for the stability of the finite-horizon limit.
    let mut h = n;
    let mut traj = Vec::new();
    while h >= 2 {
        let (mean, _) = stats::mean_sd(&logs[..h]);
        traj.push((h as u64, mean.exp()));
        h /= 2;
    }
    traj.reverse();
    if constant {
        for e in traj.iter_mut() {
            e.1 = estimate;
        }
    }
    report.trajectory = traj;
    Ok(report)
}

/// Truncated evaluation of the weighted coefficient series
/// b(X_{-1}) + sum_{i>=2} lambda(X_{-1})...lambda(X_{-i+1}) b(X_{-i}).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SeriesBound {
    pub sum: f64,
    /// Estimated bound on the truncated tail (infinite when diverged).
    pub truncation_bound: f64,
    pub terms: usize,
    pub diverged: bool,
}

pub fn series_bound(
    r: &EnvironmentRealization,
    lambda: impl Fn(&EnvPoint) -> f64,
    b: impl Fn(&EnvPoint) -> f64,
    max_terms: usize,
    tol: f64,
) -> Result<SeriesBound> {
    if max_terms == 0 {
        return Err(CoreError::Argument("need max_terms >= 1".into()));
    }
    let mut lams = Vec::with_capacity(max_terms);
    let mut bs = Vec::with_capacity(max_terms);
    for i in 1..=max_terms as i64 {
        let x = r.value(-i)?;
        lams.push(lambda(x));
        bs.push(b(x));
    }
    Ok(series_partial(&lams, &bs, tol))
}

/// Shared core of the series evaluation: `lams[i]` and `bs[i]` are the
/// coefficients at distance i+1 into the past. Truncation happens once the
/// running lambda-product times the trailing b-envelope falls below `tol`;
/// the reported bound closes the geometric tail at the running-mean ratio.
pub(crate) fn series_partial(lams: &[f64], bs: &[f64], tol: f64) -> SeriesBound {
    let mut sum = bs[0];
    let mut prod = 1.0f64;
    let mut b_env = bs[0].abs();
    let mut terms = 1usize;
    for i in 2..=lams.len() {
        prod *= lams[i - 2];
        sum += prod * bs[i - 1];
        b_env = b_env.max(bs[i - 1].abs());
        terms = i;
        if prod * b_env < tol {
            let ratio = prod.powf(1.0 / (i - 1) as f64);
            if ratio < 1.0 {
                return SeriesBound {
                    sum,
                    truncation_bound: (prod * b_env * ratio / (1.0 - ratio)).max(prod * b_env),
                    terms,
                    diverged: false,
                };
            }
        }
    }
    let ratio = prod.powf(1.0 / (terms.max(2) - 1) as f64);
    let diverged = ratio >= 1.0;
    SeriesBound {
        sum,
        truncation_bound: if diverged {
            f64::INFINITY
        } else {
            (prod * b_env * ratio / (1.0 - ratio)).max(prod * b_env)
        },
        terms,
        diverged,
    }
}

/// Choice of sub-multiplicative matrix norm for the Lyapunov estimator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MatrixNorm {
    /// Operator norm induced by the l1 vector norm (max column sum).
    #[default]
    L1Induced,
    /// Operator norm induced by the sup norm (max row sum).
    LInfInduced,
    Frobenius,
}

impl MatrixNorm {
    fn eval(&self, m: &DMatrix<f64>) -> f64 {
        match self {
            MatrixNorm::L1Induced => l1_operator_norm(m),
            MatrixNorm::LInfInduced => (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)].abs()).sum::<f64>())
                .fold(0.0, f64::max),
            MatrixNorm::Frobenius => m.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }
}

/// n^{-1} log || A(X_{-1}) ... A(X_{-n}) || with periodic renormalization of
/// the running product to avoid under/overflow. A vanished product reports
/// negative infinity explicitly.
pub fn lyapunov_exponent(
    a: impl Fn(&EnvPoint) -> DMatrix<f64>,
    r: &EnvironmentRealization,
    n: usize,
    norm: MatrixNorm,
) -> Result<f64> {
    if n == 0 {
        return Err(CoreError::Argument("need n >= 1".into()));
    }
    let mut m = a(r.value(-1)?);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::Numeric("non-finite matrix entry".into()));
    }
    let mut log_acc = 0.0f64;
    for i in 2..=n as i64 {
        let next = a(r.value(-i)?);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::Numeric(format!("non-finite matrix entry at -{i}")));
        }
        m *= next;
        let nrm = norm.eval(&m);
        if nrm == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        if !(1e-120..=1e120).contains(&nrm) {
            log_acc += nrm.ln();
            m /= nrm;
        }
    }
    let nrm = norm.eval(&m);
    if nrm == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok((log_acc + nrm.ln()) / n as f64)
}

/// Heuristic finiteness check of E[log^+ gamma(X_0)] for a coefficient
/// gamma: the empirical mean of log^+ gamma over the past must be finite
/// and stable across dyadic horizons.
pub fn log_plus_moment(
    r: &EnvironmentRealization,
    gamma: impl Fn(&EnvPoint) -> f64,
    n: usize,
) -> Result<ConditionReport> {
    if n < 4 {
        return Err(CoreError::Argument("need n >= 4".into()));
    }
    let mut vals = Vec::with_capacity(n);
    for i in 1..=n as i64 {
        let g = gamma(r.value(-i)?);
        if !g.is_finite() {
            return Err(CoreError::Numeric(format!("non-finite gamma at -{i}")));
        }
        vals.push(g.max(1.0).ln());
    }
    let (mean, sd) = stats::mean_sd(&vals);
    let halfwidth = 3.0 * sd / (n as f64).sqrt();
    let (m_half, _) = stats::mean_sd(&vals[..n / 2]);
    let (m_quarter, _) = stats::mean_sd(&vals[..n / 4]);
    let stable = (mean - m_half).abs() <= 3.0 * halfwidth.max(1e-12)
        && (m_half - m_quarter).abs() <= 6.0 * halfwidth.max(1e-12);
    let mut rep = ConditionReport {
        name: "log-plus-moment (heuristic)".into(),
        estimate: mean,
        confidence_halfwidth: halfwidth,
        threshold: f64::INFINITY,
        pass: mean.is_finite() && stable,
        details: vec![Diagnostic {
            label: "dyadic stability".into(),
            value: (mean - m_half).abs(),
            bound: 3.0 * halfwidth.max(1e-12),
            pass: stable,
        }],
        trajectory: vec![
            (n as u64 / 4, m_quarter.exp()),
            (n as u64 / 2, m_half.exp()),
            (n as u64, mean.exp()),
        ],
    };
    rep.trajectory.sort_by_key(|e| e.0);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{EnvironmentKind, EnvironmentSpec, IidDistribution};
    use crate::models::{const_coef, make_finite, make_tarx, EtaConvention, NoiseSpec};
    use std::sync::Arc;

    fn iid_env(n_back: i64) -> EnvironmentRealization {
        let spec = EnvironmentSpec {
            kind: EnvironmentKind::Iid {
                dist: IidDistribution::Normal { mean: 0.0, sd: 1.0 },
            },
            dim: 1,
            ergodic: true,
            mixing: true,
        };
        EnvironmentRealization::realize(&spec, 17, -n_back, 0).unwrap()
    }

    #[test]
    fn tarx_drift_passes_on_grid() {
        let bundle = make_tarx(
            const_coef(0.5),
            const_coef(0.1),
            const_coef(-0.4),
            const_coef(0.0),
            const_coef(0.0),
            NoiseSpec::gaussian(1.0),
            EtaConvention::Tight,
        )
        .unwrap();
        let points: Vec<(EnvPoint, State)> = (-3..=3)
            .flat_map(|y| {
                [-1.0, 0.0, 1.0]
                    .into_iter()
                    .map(move |x| (EnvPoint::scalar(x), State::scalar(y as f64 * 2.0)))
            })
            .collect();
        let rep = drift_check(
            &bundle.kernel,
            &bundle.drift,
            &points,
            20_000,
            &StreamKey::root(3),
        )
        .unwrap();
        assert!(rep.pass, "worst margin {}", rep.estimate);
    }

    #[test]
    fn deliberately_halved_lambda_fails() {
        let bundle = make_tarx(
            const_coef(0.8),
            const_coef(0.0),
            const_coef(0.8),
            const_coef(0.0),
            const_coef(0.0),
            NoiseSpec::gaussian(1.0),
            EtaConvention::Tight,
        )
        .unwrap();
        let mut drift = bundle.drift.clone();
        drift.lambda = Arc::new(|_| 0.4); // half the true contraction
        let points = vec![(EnvPoint::scalar(0.0), State::scalar(50.0))];
        let rep = drift_check(&bundle.kernel, &drift, &points, 20_000, &StreamKey::root(4)).unwrap();
        assert!(!rep.pass);
    }

    #[test]
    fn finite_drift_is_exact() {
        let bundle = make_finite(vec![nalgebra::DMatrix::from_row_slice(
            2,
            2,
            &[0.9, 0.1, 0.2, 0.8],
        )])
        .unwrap();
        let points = vec![
            (EnvPoint::scalar(0.0), State::Label(0)),
            (EnvPoint::scalar(0.0), State::Label(1)),
        ];
        let rep = drift_check(&bundle.kernel, &bundle.drift, &points, 0, &StreamKey::root(0)).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.confidence_halfwidth, 1e-12);
    }

    #[test]
    fn geometric_mean_constant_is_exact() {
        let r = iid_env(4000);
        for lam in [0.9, 1.1] {
            for n in [1usize, 7, 100, 1000] {
                let rep = geometric_mean_condition(&r, |_| lam, 1, n).unwrap();
                assert_eq!(rep.estimate, lam);
                assert_eq!(rep.pass, lam < 1.0);
            }
        }
    }

    #[test]
    fn geometric_mean_lognormal_matches_birkhoff() {
        let n = 100_000;
        let r = iid_env(n as i64 + 1);
        // lambda = exp(x - 0.2): E log lambda = -0.2.
        let lam = |x: &EnvPoint| (x.x0() - 0.2).exp();
        let rep = geometric_mean_condition(&r, lam, 1, n).unwrap();
        let want = (-0.2f64).exp();
        assert!(
            (rep.estimate - want).abs() <= rep.confidence_halfwidth,
            "estimate {} vs {} +- {}",
            rep.estimate,
            want,
            rep.confidence_halfwidth
        );
        assert!(rep.pass);
        // The estimate is exactly the exponentiated Birkhoff average.
        let birkhoff = r.birkhoff_average(|x| x.x0() - 0.2, n).unwrap();
        assert!((rep.estimate - birkhoff.exp()).abs() < 1e-12);
    }

    #[test]
    fn geometric_mean_zero_lambda_errors() {
        let r = iid_env(50);
        let e = geometric_mean_condition(&r, |_| 0.0, 1, 10).unwrap_err();
        assert!(matches!(e, CoreError::Numeric(_)));
    }

    #[test]
    fn series_geometric() {
        let r = iid_env(4000);
        let s = series_bound(&r, |_| 0.5, |_| 1.0, 2000, 1e-9).unwrap();
        assert!(!s.diverged);
        assert!((s.sum - 2.0).abs() < 1e-8, "sum = {}", s.sum);
        assert!(s.truncation_bound < 1e-9);
        let d = series_bound(&r, |_| 1.1, |_| 1.0, 200, 1e-9).unwrap();
        assert!(d.diverged);
        assert!(d.truncation_bound.is_infinite());
    }

    #[test]
    fn lyapunov_scalar_and_diagonal() {
        let r = iid_env(2000);
        let g = lyapunov_exponent(
            |_| DMatrix::from_element(1, 1, 0.5),
            &r,
            1000,
            MatrixNorm::L1Induced,
        )
        .unwrap();
        assert!((g - 0.5f64.ln()).abs() < 1e-9, "gamma = {g}");
        let g = lyapunov_exponent(
            |_| DMatrix::from_partial_diagonal(2, 2, &[0.5, 0.25]),
            &r,
            500,
            MatrixNorm::L1Induced,
        )
        .unwrap();
        assert!((g - 0.5f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn lyapunov_zero_product_reports_neg_infinity() {
        let r = iid_env(50);
        let g = lyapunov_exponent(
            |_| DMatrix::from_element(1, 1, 0.0),
            &r,
            10,
            MatrixNorm::L1Induced,
        )
        .unwrap();
        assert_eq!(g, f64::NEG_INFINITY);
    }

    #[test]
    fn renormalized_matches_naive_short_horizon() {
        let r = iid_env(64);
        let a = |x: &EnvPoint| {
            let c = x.x0();
            DMatrix::from_row_slice(2, 2, &[0.4 * c.cos(), 0.3, 0.2, 0.5 * c.sin()])
        };
        for n in [1usize, 5, 17, 30] {
            let renorm = lyapunov_exponent(a, &r, n, MatrixNorm::L1Induced).unwrap();
            // Naive product without renormalization.
            let mut m = a(r.value(-1).unwrap());
            for i in 2..=n as i64 {
                m *= a(r.value(-i).unwrap());
            }
            let naive = l1_operator_norm(&m).ln() / n as f64;
            assert!((renorm - naive).abs() < 1e-8, "n={n}: {renorm} vs {naive}");
        }
    }

    #[test]
    fn log_plus_moment_runs() {
        let r = iid_env(4096);
        let rep = log_plus_moment(&r, |x| x.x0().exp(), 4096).unwrap();
        assert!(rep.pass);
        assert!(rep.estimate.is_finite());
    }
}
