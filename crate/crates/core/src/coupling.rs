//! The three-branch coupled transition and its experiments.
//!
//! Two copies of the chain move together once equal; while unequal they
//! move independently outside the level set {V <= R}, and inside it — at
//! good times only — they coalesce with probability eta(R, x) onto one draw
//! from nu_R, otherwise moving independently under the residual kernel.
//! Every branch preserves the one-step marginal law P_x of each coordinate,
//! so the probability of non-coalescence upper-bounds the total variation
//! distance between the two laws.
//!
//! Between good times the unequal pair always takes independent draws, even
//! inside the level set: the minorization floor is only guaranteed at good
//! times, and the return-time analysis subsamples the pair there.

use rayon::prelude::*;
use serde::Serialize;

use crate::environment::{EnvironmentRealization, EnvironmentSpec};
use crate::error::{CoreError, Result};
use crate::goodtimes::{find_constants, good_times, GoodTimeIndex, GoodTimeOptions};
use crate::kernel::{kernel_step, residual_sample, KernelFamily, MinorizationSpec, State, StateFn};
use crate::models::ModelBundle;
use crate::stats;
use crate::stream::{derive_seed, tag, StreamKey};

/// Joint state of the two copies.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledState {
    pub y: State,
    pub y_bar: State,
    /// Set once the copies have merged; absorbing along any trajectory.
    pub coalesced: bool,
}

impl CoupledState {
    pub fn start(z: State, z_bar: State) -> Self {
        let coalesced = z == z_bar;
        Self {
            y: z,
            y_bar: z_bar,
            coalesced,
        }
    }
}

/// Which branch a coupled step took.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepBranch {
    /// Equal states move together.
    Together,
    /// Unequal, outside the level set (or between good times): independent.
    Independent,
    /// Unequal inside the level set at a good time; carries whether the
    /// minorization draw merged the copies.
    Minorization { merged: bool },
}

pub struct StepOutcome {
    pub state: CoupledState,
    pub branch: StepBranch,
}

/// One coupled transition under kernel P_x at small-set level `r_level`.
/// Each step consumes its own stream: branch choices and the second
/// coordinate's draw use distinct substreams, so trajectories are
/// reproducible regardless of branch history.
pub fn coupled_step(
    family: &KernelFamily,
    m: &MinorizationSpec,
    v: &StateFn,
    r_level: f64,
    x: &crate::environment::EnvPoint,
    s: &CoupledState,
    key: &StreamKey,
) -> Result<StepOutcome> {
    use rand::Rng;
    if s.coalesced || s.y == s.y_bar {
        let mut rng = key.child(1).rng();
        let w = kernel_step(family, x, &s.y, &mut rng)?;
        return Ok(StepOutcome {
            state: CoupledState {
                y: w.clone(),
                y_bar: w,
                coalesced: true,
            },
            branch: StepBranch::Together,
        });
    }
    let inside = v(&s.y).max(v(&s.y_bar)) <= r_level;
    if !inside {
        let mut r1 = key.child(1).rng();
        let mut r2 = key.child(2).rng();
        let w = kernel_step(family, x, &s.y, &mut r1)?;
        let w_bar = kernel_step(family, x, &s.y_bar, &mut r2)?;
        return Ok(StepOutcome {
            state: CoupledState {
                y: w,
                y_bar: w_bar,
                coalesced: false,
            },
            branch: StepBranch::Independent,
        });
    }
    let eta = (m.eta)(r_level, x);
    if !(0.0..=1.0).contains(&eta) {
        return Err(CoreError::Argument(format!("eta(R, x) = {eta} outside [0, 1]")));
    }
    let mut coin = key.child(0).rng();
    if coin.gen::<f64>() < eta {
        let mut rng = key.child(1).rng();
        let w = (m.nu_sample)(r_level, x, &mut rng);
        Ok(StepOutcome {
            state: CoupledState {
                y: w.clone(),
                y_bar: w,
                coalesced: true,
            },
            branch: StepBranch::Minorization { merged: true },
        })
    } else {
        let mut r1 = key.child(1).rng();
        let mut r2 = key.child(2).rng();
        let w = residual_sample(family, m, r_level, x, &s.y, &mut r1)?;
        let w_bar = residual_sample(family, m, r_level, x, &s.y_bar, &mut r2)?;
        Ok(StepOutcome {
            state: CoupledState {
                y: w,
                y_bar: w_bar,
                coalesced: false,
            },
            branch: StepBranch::Minorization { merged: false },
        })
    }
}

/// A realized coupled path from time -n to 0, with the subsampled skeleton
/// bookkeeping used by the return-time analysis.
#[derive(Clone, Debug)]
pub struct CouplingTrace {
    /// States indexed t = -n .. 0.
    pub states: Vec<CoupledState>,
    pub t_start: i64,
    /// First time with merged copies, if any.
    pub coalescence_time: Option<i64>,
    /// Times of the subsampled skeleton: the start, then the good times
    /// inside the horizon.
    pub skeleton_times: Vec<i64>,
    /// W_i = V(Y) + V(Y_bar) at the skeleton times.
    pub w: Vec<f64>,
    /// Skeleton indices of successive returns into {W <= R}.
    pub rho: Vec<usize>,
    /// Level used for branch selection, minorization and the returns.
    pub r_level: f64,
}

impl CouplingTrace {
    pub fn state_at(&self, t: i64) -> Option<&CoupledState> {
        let idx = t - self.t_start;
        if idx < 0 {
            return None;
        }
        self.states.get(idx as usize)
    }

    pub fn final_state(&self) -> &CoupledState {
        self.states.last().expect("non-empty trace")
    }
}

/// Run the coupled chain from (z, z_bar) at time -n to time 0. The
/// minorization branch is available exactly at the good times of `gti`;
/// `r_level` sets the small-set level for the branches and the return-time
/// bookkeeping (the good-time level `gti.r()` is the canonical choice for
/// the moment checks; coalescence experiments may prefer a level with more
/// minorization mass).
pub fn run_coupling(
    bundle: &ModelBundle,
    env: &EnvironmentRealization,
    z: &State,
    z_bar: &State,
    n: usize,
    gti: &GoodTimeIndex,
    r_level: f64,
    key: &StreamKey,
) -> Result<CouplingTrace> {
    let t_start = -(n as i64);
    let mut states = Vec::with_capacity(n + 1);
    states.push(CoupledState::start(z.clone(), z_bar.clone()));
    let mut coalescence_time = if states[0].coalesced { Some(t_start) } else { None };
    for t in (t_start + 1)..=0 {
        let x = env.value(t - 1)?;
        let at_good_time = gti.contains(t - 1);
        let level = if at_good_time { r_level } else { f64::NEG_INFINITY };
        let out = coupled_step(
            &bundle.kernel,
            &bundle.minorization,
            &bundle.drift.v,
            level,
            x,
            states.last().unwrap(),
            &key.child_i64(t),
        )?;
        if out.state.coalesced && coalescence_time.is_none() {
            coalescence_time = Some(t);
        }
        states.push(out.state);
    }

    let mut skeleton_times = vec![t_start];
    skeleton_times.extend(gti.tau.iter().copied().filter(|t| *t > t_start && *t <= 0));
    let v = &bundle.drift.v;
    let w: Vec<f64> = skeleton_times
        .iter()
        .map(|t| {
            let s = &states[(t - t_start) as usize];
            v(&s.y) + v(&s.y_bar)
        })
        .collect();
    let rho: Vec<usize> = w
        .iter()
        .enumerate()
        .filter(|(_, wi)| **wi <= r_level)
        .map(|(i, _)| i)
        .collect();
    Ok(CouplingTrace {
        states,
        t_start,
        coalescence_time,
        skeleton_times,
        w,
        rho,
        r_level,
    })
}

/// One point of a coalescence curve.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CurvePoint {
    pub n: usize,
    pub replicas: usize,
    pub non_coalesced_fraction: f64,
    pub se: f64,
}

/// Least-squares geometric fit of the non-coalescence fractions.
#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    /// Fitted per-step decay rate, in (0, 1].
    pub kappa_hat: f64,
    /// Fitted prefactor.
    pub f_hat: f64,
    pub r_squared: f64,
    pub curve: Vec<CurvePoint>,
    /// Set when the fraction counts degenerate (all zero, or fewer than two
    /// positive points); `kappa_hat` is then an upper bound from the zero
    /// count rather than a regression slope.
    pub degenerate: bool,
}

/// Controls for [`coalescence_curve`].
#[derive(Clone, Debug, Default)]
pub struct CurveOptions {
    /// Small-set level for the coupling; defaults to the good-time level
    /// `2 c1 (2 c1 + 1)` of each replica's constants.
    pub r_level: Option<f64>,
    pub good_times: GoodTimeOptions,
}

/// Estimate the non-coalescence fraction at each horizon in `ns`, with a
/// fresh environment and coupling randomness per replica, and fit the
/// geometric decay on the positive fractions.
pub fn coalescence_curve(
    bundle: &ModelBundle,
    env_spec: &EnvironmentSpec,
    z: &State,
    z_bar: &State,
    ns: &[usize],
    replicas: usize,
    master_seed: u64,
    opts: &CurveOptions,
) -> Result<DecayFit> {
    if replicas < 1_000 {
        return Err(CoreError::Argument(format!(
            "coalescence curve needs >= 1000 replicas, got {replicas}"
        )));
    }
    if ns.windows(2).any(|w| w[0] >= w[1]) || ns.is_empty() {
        return Err(CoreError::Argument("ns must be increasing and non-empty".into()));
    }
    let margin = opts.good_times.horizon as i64;
    let mut curve = Vec::with_capacity(ns.len());
    for (ni, &n) in ns.iter().enumerate() {
        let results: Vec<Result<bool>> = (0..replicas)
            .into_par_iter()
            .map(|rep| {
                let idx = (ni * replicas + rep) as u64;
                let env_seed = derive_seed(master_seed, tag::REPLICA, idx);
                let env = EnvironmentRealization::realize(env_spec, env_seed, -(n as i64) - margin, 0)?;
                let constants = find_constants(
                    &env,
                    &*bundle.drift.lambda,
                    &*bundle.drift.b,
                    &bundle.minorization,
                    &opts.good_times,
                )?;
                let gti = good_times(
                    &env,
                    constants,
                    (-(n as i64), 0),
                    &*bundle.drift.lambda,
                    &*bundle.drift.b,
                    &bundle.minorization,
                    &opts.good_times,
                )?;
                let r_level = opts.r_level.unwrap_or_else(|| gti.r());
                let key = StreamKey::root(master_seed).child(tag::COUPLING).child(idx);
                let trace = run_coupling(bundle, &env, z, z_bar, n, &gti, r_level, &key)?;
                let last = trace.final_state();
                Ok(last.y != last.y_bar)
            })
            .collect();
        let mut not_coalesced = 0usize;
        for r in results {
            if r? {
                not_coalesced += 1;
            }
        }
        let frac = not_coalesced as f64 / replicas as f64;
        curve.push(CurvePoint {
            n,
            replicas,
            non_coalesced_fraction: frac,
            se: (frac * (1.0 - frac) / replicas as f64).sqrt(),
        });
    }
    Ok(fit_decay(curve))
}

/// Fit log(fraction) = log F + n log kappa over the positive fractions.
pub fn fit_decay(curve: Vec<CurvePoint>) -> DecayFit {
    let pts: Vec<(f64, f64)> = curve
        .iter()
        .filter(|c| c.non_coalesced_fraction > 0.0)
        .map(|c| (c.n as f64, c.non_coalesced_fraction.ln()))
        .collect();
    if pts.len() < 2 {
        // All replicas coalesced (almost) everywhere: report the rule-of-three
        // upper bound from the zero count at the smallest fully-zero horizon.
        let first = curve.first();
        let (kappa, f_hat) = match (pts.first(), first) {
            (Some((n, lf)), _) => ((lf / n).exp().min(1.0), 1.0),
            (None, Some(c)) => {
                let p_up = 3.0 / c.replicas as f64;
                (p_up.powf(1.0 / c.n as f64).min(1.0), 1.0)
            }
            _ => (1.0, 1.0),
        };
        return DecayFit {
            kappa_hat: kappa,
            f_hat,
            r_squared: 0.0,
            curve,
            degenerate: true,
        };
    }
    let n = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    DecayFit {
        kappa_hat: slope.exp().min(1.0),
        f_hat: intercept.exp(),
        r_squared,
        curve,
        degenerate: false,
    }
}

/// One side of a return-time moment check.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MomentCheck {
    pub empirical_mean: f64,
    pub se: f64,
    pub bound: f64,
    /// empirical mean <= bound + 3 se
    pub satisfied: bool,
    pub count: usize,
}

/// Empirical check of the exponential return-time moments of the
/// subsampled pair: with eta = 2 / (2 - 1/c1) and D = 1 + (1 - 1/c1) R + 2 c1,
///
/// - E[eta^{rho_1}] <= V(z) + V(z_bar) when the start is outside {W <= R};
/// - E[eta^{rho_{j+1} - rho_j}] <= D eta.
#[derive(Clone, Debug, Serialize)]
pub struct ReturnTimeReport {
    pub eta: f64,
    pub d: f64,
    pub w_start: f64,
    pub first_return: Option<MomentCheck>,
    pub gaps: Option<MomentCheck>,
    /// Traces whose first return (resp. next gap) was never completed; they
    /// are counted rather than silently dropped, since dropping them would
    /// bias the moment upward toward easy paths.
    pub censored_first: usize,
    pub censored_gaps: usize,
}

pub fn return_time_moments(traces: &[CouplingTrace], c1: u32, r_level: f64) -> Result<ReturnTimeReport> {
    if traces.is_empty() {
        return Err(CoreError::Argument("no traces".into()));
    }
    let c1f = c1 as f64;
    let eta = 2.0 / (2.0 - 1.0 / c1f);
    let d = 1.0 + (1.0 - 1.0 / c1f) * r_level + 2.0 * c1f;
    let w_start = traces[0].w.first().copied().unwrap_or(f64::NAN);
    for t in traces {
        if (t.w.first().copied().unwrap_or(f64::NAN) - w_start).abs() > 1e-9 {
            return Err(CoreError::Argument("traces must share the initial pair".into()));
        }
        if (t.r_level - r_level).abs() > 1e-9 {
            return Err(CoreError::Argument("traces must share the level R".into()));
        }
    }

    let mut first_vals = Vec::new();
    let mut censored_first = 0usize;
    let mut gap_vals = Vec::new();
    let mut censored_gaps = 0usize;
    for t in traces {
        match t.rho.first() {
            Some(r1) => first_vals.push(eta.powi(*r1 as i32)),
            None => censored_first += 1,
        }
        for pair in t.rho.windows(2) {
            gap_vals.push(eta.powi((pair[1] - pair[0]) as i32));
        }
        // An open gap at the end of the skeleton is censored.
        if !t.rho.is_empty() && *t.rho.last().unwrap() + 1 < t.w.len() {
            censored_gaps += 1;
        }
    }

    let first_return = if w_start > r_level && !first_vals.is_empty() {
        let (mean, sd) = stats::mean_sd(&first_vals);
        let se = sd / (first_vals.len() as f64).sqrt();
        Some(MomentCheck {
            empirical_mean: mean,
            se,
            bound: w_start,
            satisfied: mean <= w_start + 3.0 * se,
            count: first_vals.len(),
        })
    } else {
        None
    };
    let gaps = if gap_vals.is_empty() {
        None
    } else {
        let (mean, sd) = stats::mean_sd(&gap_vals);
        let se = sd / (gap_vals.len() as f64).sqrt();
        Some(MomentCheck {
            empirical_mean: mean,
            se,
            bound: d * eta,
            satisfied: mean <= d * eta + 3.0 * se,
            count: gap_vals.len(),
        })
    };
    Ok(ReturnTimeReport {
        eta,
        d,
        w_start,
        first_return,
        gaps,
        censored_first,
        censored_gaps,
    })
}
