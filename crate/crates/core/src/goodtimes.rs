//! Extraction of good times: environment-measurable time points at which
//! the drift products of the past, the weighted coefficient series and the
//! minorization floor are simultaneously under control.
//!
//! A time t is *raw good* for constants (c1, c2) when, writing lam_i and
//! b_i for the coefficients at distance i into the past of t,
//!
//! ```text
//! sup_{j >= c1} prod_{i=1..j} lam_i <= 1 - 1/c1,
//! b_1 + sum_{i>=2} lam_1 ... lam_{i-1} b_i <= c1,
//! eta(R, X_t) >= 1/(c2 + 1),          R = 2 c1 (2 c1 + 1)
//! ```
//!
//! The emitted sequence tau keeps every c1-th raw good time, which
//! guarantees spacing tau_i - tau_{i-1} >= c1 and hence a subsampled drift
//! with coefficients (1 - 1/c1, c1). The sup and the series are truncated
//! at a configurable horizon; eligibility additionally requires the running
//! product to have decayed below the series tolerance by the horizon, so a
//! truncated sup cannot silently hide later violations.

use serde::Serialize;

use crate::environment::{EnvPoint, EnvironmentRealization};
use crate::error::{CoreError, Result};
use crate::kernel::MinorizationSpec;

/// Search caps and truncation controls.
#[derive(Clone, Copy, Debug)]
pub struct GoodTimeOptions {
    pub c1_max: u32,
    /// Cap on c2. c2 is integer-valued but stored as f64: thin-tailed noise
    /// makes the minorization floor at R = 2 c1 (2 c1 + 1) small enough
    /// that the matching c2 overflows any machine integer.
    pub c2_max: f64,
    /// Truncation horizon for the sup and the series.
    pub horizon: usize,
    pub series_tol: f64,
}

impl Default for GoodTimeOptions {
    fn default() -> Self {
        Self {
            c1_max: 64,
            c2_max: 1e306,
            horizon: 256,
            series_tol: 1e-12,
        }
    }
}

/// The admissible pair found by the smallest-first search.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GoodTimeConstants {
    pub c1: u32,
    /// Integer-valued; see [`GoodTimeOptions::c2_max`].
    pub c2: f64,
}

impl GoodTimeConstants {
    /// Small-set level tied to the constants.
    pub fn r(&self) -> f64 {
        let c = self.c1 as f64;
        2.0 * c * (2.0 * c + 1.0)
    }

    /// Minorization floor guaranteed at good times.
    pub fn eta_floor(&self) -> f64 {
        1.0 / (self.c2 + 1.0)
    }
}

/// The subsampled good-time sequence over a horizon.
#[derive(Clone, Debug)]
pub struct GoodTimeIndex {
    pub constants: GoodTimeConstants,
    /// Every c1-th raw good time, increasing.
    pub tau: Vec<i64>,
    pub horizon: (i64, i64),
    pub raw_count: usize,
}

impl GoodTimeIndex {
    pub fn r(&self) -> f64 {
        self.constants.r()
    }

    pub fn contains(&self, t: i64) -> bool {
        self.tau.binary_search(&t).is_ok()
    }

    /// L_n: number of subsampled good times in [-n, -1].
    pub fn count_in_past(&self, n: usize) -> usize {
        self.tau
            .iter()
            .filter(|t| **t >= -(n as i64) && **t <= -1)
            .count()
    }
}

/// Per-time eligibility data computed once over a scan range.
struct CoefficientCache {
    t_min: i64,
    lams: Vec<f64>,
    log_lams: Vec<f64>,
    bs: Vec<f64>,
}

impl CoefficientCache {
    fn build(
        r: &EnvironmentRealization,
        lambda: &dyn Fn(&EnvPoint) -> f64,
        b: &dyn Fn(&EnvPoint) -> f64,
        t_min: i64,
        t_max: i64,
    ) -> Result<Self> {
        let n = (t_max - t_min + 1) as usize;
        let mut lams = Vec::with_capacity(n);
        let mut log_lams = Vec::with_capacity(n);
        let mut bs = Vec::with_capacity(n);
        for t in t_min..=t_max {
            let x = r.value(t)?;
            let lam = lambda(x);
            if !(lam > 0.0) || !lam.is_finite() {
                return Err(CoreError::Numeric(format!("lambda = {lam} at t = {t}")));
            }
            let bv = b(x);
            if !bv.is_finite() || bv < 0.0 {
                return Err(CoreError::Numeric(format!("b = {bv} at t = {t}")));
            }
            lams.push(lam);
            log_lams.push(lam.ln());
            bs.push(bv);
        }
        Ok(Self {
            t_min,
            lams,
            log_lams,
            bs,
        })
    }

    /// Both product-control inequalities of the raw good-time definition,
    /// evaluated on the past of `t` at the given truncation horizon. The
    /// truncated sup only certifies the inequality when the product has
    /// decayed into the tolerance by the horizon, so later terms cannot
    /// silently violate it.
    fn drift_past_controlled(&self, t: i64, c1: u32, horizon: usize, tol: f64) -> bool {
        let base = (t - self.t_min) as usize;
        debug_assert!(base >= horizon);
        let c1f = c1 as f64;
        let bound = (1.0 - 1.0 / c1f).ln();
        let log_tol = tol.ln();
        let mut log_prod = 0.0f64;
        for i in 1..=horizon {
            log_prod += self.log_lams[base - i];
            if i as u32 >= c1 && log_prod > bound {
                return false;
            }
        }
        if log_prod > log_tol {
            return false;
        }
        // Weighted series, nearest coefficients first, with the same
        // truncation rule as `series_bound`.
        let mut sum = self.bs[base - 1];
        let mut prod = 1.0f64;
        let mut b_env = sum.abs();
        for i in 2..=horizon {
            prod *= self.lams[base - (i - 1)];
            sum += prod * self.bs[base - i];
            if sum > c1f {
                return false;
            }
            b_env = b_env.max(self.bs[base - i].abs());
            if prod * b_env < tol {
                break;
            }
        }
        sum <= c1f
    }
}

/// Smallest-first search for (c1, c2) at the window origin: the smallest c1
/// whose two product inequalities hold on the past of time 0, then the
/// smallest c2 with eta(2 c1 (2 c1 + 1), X_0) >= 1/(c2 + 1).
pub fn find_constants(
    r: &EnvironmentRealization,
    lambda: &dyn Fn(&EnvPoint) -> f64,
    b: &dyn Fn(&EnvPoint) -> f64,
    m: &MinorizationSpec,
    opts: &GoodTimeOptions,
) -> Result<GoodTimeConstants> {
    let (w_min, w_max) = r.window();
    if w_max < 0 || w_min > -(opts.horizon as i64) {
        return Err(CoreError::Range(format!(
            "window [{w_min}, {w_max}] does not cover the origin's past at horizon {}",
            opts.horizon
        )));
    }
    let cache = CoefficientCache::build(r, lambda, b, -(opts.horizon as i64), 0)?;
    let mut c1_found = None;
    for c1 in 1..=opts.c1_max {
        if cache.drift_past_controlled(0, c1, opts.horizon, opts.series_tol) {
            c1_found = Some(c1);
            break;
        }
    }
    let c1 = c1_found.ok_or_else(|| {
        CoreError::NoGoodConstant(format!(
            "no c1 <= {} controls the drift products at the origin",
            opts.c1_max
        ))
    })?;
    let r_level = {
        let c = c1 as f64;
        2.0 * c * (2.0 * c + 1.0)
    };
    let eta = (m.eta)(r_level, r.value(0)?);
    if !(eta > 0.0) {
        return Err(CoreError::NoGoodConstant(format!(
            "minorization floor eta({r_level}, X_0) = {eta}; the eta inequality is unsatisfiable"
        )));
    }
    let mut c2 = (1.0 / eta - 1.0).ceil().max(1.0);
    // Guard the ceiling against floating-point boundary cases.
    while 1.0 / (c2 + 1.0) > eta {
        c2 += 1.0;
    }
    if c2 > opts.c2_max {
        return Err(CoreError::NoGoodConstant(format!(
            "smallest admissible c2 = {c2:e} exceeds cap {:e}",
            opts.c2_max
        )));
    }
    Ok(GoodTimeConstants { c1, c2 })
}

/// Scan mechanism shared by the real eligibility predicate and tests:
/// collect raw good times over the horizon and keep every c1-th.
pub fn subsample_good_times(
    mut raw: impl FnMut(i64) -> Result<bool>,
    c1: u32,
    horizon: (i64, i64),
) -> Result<(Vec<i64>, usize)> {
    let mut taus = Vec::new();
    let mut raw_count = 0usize;
    for t in horizon.0..=horizon.1 {
        if raw(t)? {
            if raw_count % c1 as usize == 0 {
                taus.push(t);
            }
            raw_count += 1;
        }
    }
    Ok((taus, raw_count))
}

/// Good times over `horizon` for known constants. Eligibility at time t
/// evaluates both product inequalities on the past of t and the eta
/// inequality at X_t, so the past window `[horizon.0 - opts.horizon, t)`
/// must lie inside the realized window.
pub fn good_times(
    r: &EnvironmentRealization,
    constants: GoodTimeConstants,
    horizon: (i64, i64),
    lambda: &dyn Fn(&EnvPoint) -> f64,
    b: &dyn Fn(&EnvPoint) -> f64,
    m: &MinorizationSpec,
    opts: &GoodTimeOptions,
) -> Result<GoodTimeIndex> {
    if horizon.0 > horizon.1 {
        return Err(CoreError::Argument("empty horizon".into()));
    }
    let (w_min, w_max) = r.window();
    let need_min = horizon.0 - opts.horizon as i64;
    if need_min < w_min || horizon.1 > w_max {
        return Err(CoreError::Range(format!(
            "eligibility over [{}, {}] needs window [{need_min}, {}], realized [{w_min}, {w_max}]",
            horizon.0, horizon.1, horizon.1
        )));
    }
    let cache = CoefficientCache::build(r, lambda, b, need_min, horizon.1)?;
    let r_level = constants.r();
    let eta_floor = constants.eta_floor();
    let (tau, raw_count) = subsample_good_times(
        |t| {
            if !cache.drift_past_controlled(t, constants.c1, opts.horizon, opts.series_tol) {
                return Ok(false);
            }
            Ok((m.eta)(r_level, r.value(t)?) >= eta_floor)
        },
        constants.c1,
        horizon,
    )?;
    if tau.is_empty() {
        return Err(CoreError::NoGoodTime(format!(
            "no good time in [{}, {}] for c1={}, c2={:e}",
            horizon.0, horizon.1, constants.c1, constants.c2
        )));
    }
    Ok(GoodTimeIndex {
        constants,
        tau,
        horizon,
        raw_count,
    })
}

/// Density L_n / n of subsampled good times over [-n, 0], where
/// L_n counts the tau_i in [-n, -1].
pub fn good_time_density(
    r: &EnvironmentRealization,
    constants: GoodTimeConstants,
    n: usize,
    lambda: &dyn Fn(&EnvPoint) -> f64,
    b: &dyn Fn(&EnvPoint) -> f64,
    m: &MinorizationSpec,
    opts: &GoodTimeOptions,
) -> Result<f64> {
    let gti = good_times(r, constants, (-(n as i64), 0), lambda, b, m, opts)?;
    Ok(gti.count_in_past(n) as f64 / n as f64)
}
