//! Backward-iteration approximation of the randomly invariant laws, the
//! stationary path sampler, and the law of large numbers along stationary
//! paths.
//!
//! The backward law of depth n at anchor time 0 is
//! `delta_z P_{X_{-n}} ... P_{X_{-1}}`, simulated forward from z placed at
//! time -n; as n grows it forgets z and approximates the randomly invariant
//! law attached to the environment's past. On finite models the same object
//! is computed exactly as an ordered matrix product.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::environment::{EnvWindowId, EnvironmentRealization, EnvironmentSpec};
use crate::error::{CoreError, Result};
use crate::kernel::{kernel_step, KernelFamily, State, StateSpace};
use crate::models::ModelBundle;
use crate::oracle::{self, DistributionVector};
use crate::stats::{self, Estimate};
use crate::stream::{derive_seed, tag, StreamKey};

/// An approximation of a randomly invariant law: exact probability vector
/// on finite models, a sample set otherwise.
#[derive(Clone, Debug)]
pub enum MeasureRepr {
    Exact(DistributionVector),
    Samples(Vec<State>),
}

#[derive(Clone, Debug)]
pub struct RandomMeasureEstimate {
    pub repr: MeasureRepr,
    pub n_backward: usize,
    pub env_window: EnvWindowId,
}

impl RandomMeasureEstimate {
    pub fn exact(&self) -> Result<&DistributionVector> {
        match &self.repr {
            MeasureRepr::Exact(v) => Ok(v),
            MeasureRepr::Samples(_) => Err(CoreError::Capability("estimate is sample-based".into())),
        }
    }
}

/// One draw from `delta_z P_{X_{-n}} ... P_{X_{-1}}` by forward simulation
/// started at z at time -n. n = 0 returns z itself.
pub fn backward_sample(
    family: &KernelFamily,
    env: &EnvironmentRealization,
    z: &State,
    n: usize,
    key: &StreamKey,
) -> Result<State> {
    let mut y = z.clone();
    let mut rng = key.rng();
    for t in -(n as i64)..0 {
        y = kernel_step(family, env.value(t)?, &y, &mut rng)?;
    }
    Ok(y)
}

/// Exact backward law on a finite model: delta_z times the ordered product
/// of the matrices selected by X_{-n} .. X_{-1}.
pub fn backward_exact(
    family: &KernelFamily,
    env: &EnvironmentRealization,
    z: usize,
    n: usize,
) -> Result<DistributionVector> {
    let mf = family
        .matrix
        .as_ref()
        .ok_or_else(|| CoreError::Capability("exact backward needs matrices".into()))?;
    let len = match family.state_space {
        StateSpace::Finite { len } => len,
        _ => return Err(CoreError::Capability("exact backward needs a finite state space".into())),
    };
    let mut v = DistributionVector::dirac(len, z)?;
    for t in -(n as i64)..0 {
        let m = mf(env.value(t)?)?;
        v = v.propagate(&m)?;
    }
    Ok(v)
}

/// Backward estimate of the randomly invariant law (anchor time 0): exact
/// vector when matrices exist, otherwise `replicas` independent samples.
pub fn backward_estimate(
    family: &KernelFamily,
    env: &EnvironmentRealization,
    z: &State,
    n: usize,
    replicas: usize,
    key: &StreamKey,
) -> Result<RandomMeasureEstimate> {
    let repr = if family.matrix.is_some() {
        MeasureRepr::Exact(backward_exact(family, env, z.label()?, n)?)
    } else {
        let samples: Vec<State> = (0..replicas)
            .into_par_iter()
            .map(|rep| backward_sample(family, env, z, n, &key.child(rep as u64)))
            .collect::<Result<_>>()?;
        MeasureRepr::Samples(samples)
    };
    Ok(RandomMeasureEstimate {
        repr,
        n_backward: n,
        env_window: env.window_id(),
    })
}

/// Modes for [`backward_tv_pair`].
pub enum TvPairMode<'a> {
    /// Exact total variation between the two backward laws (finite models).
    Exact,
    /// Monte Carlo coupling bound P(Y_0 != Y_bar_0), which upper-bounds the
    /// total variation by the coupling inequality.
    Coupling {
        bundle: &'a ModelBundle,
        replicas: usize,
        /// Small-set level; defaults to the good-time level of the found
        /// constants.
        r_level: Option<f64>,
        good_times: crate::goodtimes::GoodTimeOptions,
        master_seed: u64,
    },
}

/// Distance (exact or coupling-bounded) between the backward laws of depth
/// n from two starts, on the environment realization `env`.
pub fn backward_tv_pair(
    family: &KernelFamily,
    env: &EnvironmentRealization,
    z: &State,
    z_prime: &State,
    n: usize,
    mode: TvPairMode<'_>,
) -> Result<Estimate> {
    match mode {
        TvPairMode::Exact => {
            if family.matrix.is_none() {
                return Err(CoreError::Capability("exact mode needs matrices".into()));
            }
            let a = backward_exact(family, env, z.label()?, n)?;
            let b = backward_exact(family, env, z_prime.label()?, n)?;
            Ok(Estimate::exact(oracle::exact_tv(&a, &b)?))
        }
        TvPairMode::Coupling {
            bundle,
            replicas,
            r_level,
            good_times,
            master_seed,
        } => {
            if z == z_prime {
                return Ok(Estimate::exact(0.0));
            }
            let constants = crate::goodtimes::find_constants(
                env,
                &*bundle.drift.lambda,
                &*bundle.drift.b,
                &bundle.minorization,
                &good_times,
            )?;
            let gti = crate::goodtimes::good_times(
                env,
                constants,
                (-(n as i64), 0),
                &*bundle.drift.lambda,
                &*bundle.drift.b,
                &bundle.minorization,
                &good_times,
            )?;
            let level = r_level.unwrap_or_else(|| gti.r());
            let root = StreamKey::root(master_seed).child(tag::COUPLING);
            let unequal: usize = (0..replicas)
                .into_par_iter()
                .map(|rep| {
                    let trace = crate::coupling::run_coupling(
                        bundle,
                        env,
                        z,
                        z_prime,
                        n,
                        &gti,
                        level,
                        &root.child(rep as u64),
                    )?;
                    let s = trace.final_state();
                    Ok(usize::from(s.y != s.y_bar))
                })
                .collect::<Result<Vec<usize>>>()?
                .into_iter()
                .sum();
            let p = unequal as f64 / replicas as f64;
            Ok(Estimate {
                value: p,
                se: (p * (1.0 - p) / replicas as f64).sqrt(),
            })
        }
    }
}

/// A continuous-state TV estimate with its binning bias floor.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct TvEstimate {
    pub value: f64,
    /// Expected estimator value under equal laws (equal-mass binning bias).
    pub bias_floor: f64,
    pub bins: usize,
    pub exact: bool,
}

/// Residual of the invariance property: TV(pi_{-1} P_{X_0}, pi_0), where
/// pi_{-1} is the depth-n backward estimate anchored at time 0 and pi_0 the
/// one anchored at time 1 (same depth, environment shifted by one). Exact
/// on finite models, binned-histogram estimate otherwise.
pub fn invariance_check(
    family: &KernelFamily,
    env: &EnvironmentRealization,
    n: usize,
    replicas: usize,
    bins: Option<usize>,
    key: &StreamKey,
) -> Result<TvEstimate> {
    let shifted = env.shifted(1)?;
    if family.matrix.is_some() {
        let z = 0usize;
        let prev = backward_exact(family, env, z, n)?;
        let mf = family.matrix.as_ref().unwrap();
        let m0 = mf(env.value(0)?)?;
        let pushed = prev.propagate(&m0)?;
        let next = backward_exact(family, &shifted, z, n)?;
        return Ok(TvEstimate {
            value: oracle::exact_tv(&pushed, &next)?,
            bias_floor: 0.0,
            bins: 0,
            exact: true,
        });
    }
    if !matches!(family.state_space, StateSpace::Real { dim: 1 }) {
        return Err(CoreError::Capability(
            "binned invariance check supports scalar states".into(),
        ));
    }
    let z = State::scalar(0.0);
    let x0 = env.value(0)?;
    let pushed: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|rep| {
            let sub = key.child(0).child(rep as u64);
            let y = backward_sample(family, env, &z, n, &sub)?;
            let mut rng = sub.child(u64::MAX).rng();
            kernel_step(family, x0, &y, &mut rng)?.x0()
        })
        .collect::<Result<_>>()?;
    let direct: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|rep| {
            backward_sample(family, &shifted, &z, n, &key.child(1).child(rep as u64))?.x0()
        })
        .collect::<Result<_>>()?;
    let nbins = bins.unwrap_or_else(|| (replicas as f64).sqrt().ceil() as usize);
    let tv = stats::binned_tv(&pushed, &direct, nbins)?;
    Ok(TvEstimate {
        value: tv.value,
        bias_floor: tv.bias_floor,
        bins: tv.bins,
        exact: false,
    })
}

/// Exact joint-chain computation of d_TV(law of Y_t from z, marginal
/// stationary law), available when both the state space and the environment
/// are finite. The environment chain and the conditional kernel combine
/// into one finite chain on pairs (x, y); the stationary marginal is the
/// power-iteration limit.
pub fn forward_convergence_exact(
    family: &KernelFamily,
    env_spec: &EnvironmentSpec,
    z: usize,
    t: usize,
) -> Result<f64> {
    let mf = family
        .matrix
        .as_ref()
        .ok_or_else(|| CoreError::Capability("exact mode needs matrices".into()))?;
    let (env_t, n_labels) = match &env_spec.kind {
        crate::environment::EnvironmentKind::FiniteMarkov { transition, .. } => {
            (transition.clone(), transition.len())
        }
        _ => {
            return Err(CoreError::Capability(
                "exact forward convergence needs a finite-markov environment".into(),
            ))
        }
    };
    let n_states = match family.state_space {
        StateSpace::Finite { len } => len,
        _ => return Err(CoreError::Capability("finite state space required".into())),
    };
    // Joint chain on (x, y): x moves by the environment transition, y by
    // P_x, independently given (x, y).
    let dim = n_labels * n_states;
    let mut joint = DMatrix::zeros(dim, dim);
    for x in 0..n_labels {
        let p = mf(&crate::environment::EnvPoint::scalar(x as f64))?;
        for y in 0..n_states {
            for x2 in 0..n_labels {
                for y2 in 0..n_states {
                    joint[(x * n_states + y, x2 * n_states + y2)] = env_t[x][x2] * p[(y, y2)];
                }
            }
        }
    }
    // Environment stationary law.
    let env_mat = DMatrix::from_fn(n_labels, n_labels, |i, j| env_t[i][j]);
    let (mu, _) = oracle::power_stationary(&env_mat, 100_000)?;
    // Start: X_0 ~ mu, Y_0 = z.
    let mut start = vec![0.0; dim];
    for x in 0..n_labels {
        start[x * n_states + z] = mu.masses()[x];
    }
    let start = DistributionVector::new(start)?;
    let mut at_t = start.clone();
    for _ in 0..t {
        at_t = at_t.propagate(&joint)?;
    }
    let (joint_stat, residual) = oracle::power_stationary(&joint, 200_000)?;
    if residual > 1e-12 {
        return Err(CoreError::Numeric(format!(
            "joint stationary law did not converge (residual {residual:e})"
        )));
    }
    let marginal = |d: &DistributionVector| -> Result<DistributionVector> {
        let mut out = vec![0.0; n_states];
        for x in 0..n_labels {
            for y in 0..n_states {
                out[y] += d.masses()[x * n_states + y];
            }
        }
        DistributionVector::new(out)
    };
    oracle::exact_tv(&marginal(&at_t)?, &marginal(&joint_stat)?)
}

/// Monte Carlo estimate of d_TV(law of Y_t from z averaged over fresh
/// environments, pi_infinity), where pi_infinity is estimated by averaging
/// backward samples across `env_draws` independent environment
/// realizations.
#[allow(clippy::too_many_arguments)]
pub fn forward_convergence_mc(
    family: &KernelFamily,
    env_spec: &EnvironmentSpec,
    z: &State,
    t: usize,
    replicas: usize,
    env_draws: usize,
    n_backward: usize,
    bins: Option<usize>,
    master_seed: u64,
) -> Result<TvEstimate> {
    if !matches!(family.state_space, StateSpace::Real { dim: 1 }) {
        return Err(CoreError::Capability("MC mode supports scalar states".into()));
    }
    let forward: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|rep| {
            let env_seed = derive_seed(master_seed, tag::REPLICA, rep as u64);
            let env = EnvironmentRealization::realize(env_spec, env_seed, -1, t as i64)?;
            let key = StreamKey::root(master_seed).child(tag::PATH).child(rep as u64);
            let mut rng = key.rng();
            let mut y = z.clone();
            for s in 0..t as i64 {
                y = kernel_step(family, env.value(s - 1)?, &y, &mut rng)?;
            }
            y.x0()
        })
        .collect::<Result<_>>()?;
    let per_env = replicas.div_ceil(env_draws).max(1);
    let backward: Vec<f64> = (0..env_draws)
        .into_par_iter()
        .flat_map_iter(|e| {
            let env_seed = derive_seed(master_seed, tag::BACKWARD, e as u64);
            let key = StreamKey::root(master_seed)
                .child(tag::BACKWARD)
                .child(e as u64);
            let z = z.clone();
            (0..per_env).map(move |rep| {
                let env =
                    EnvironmentRealization::realize(env_spec, env_seed, -(n_backward as i64), 0)?;
                backward_sample(family, &env, &z, n_backward, &key.child(rep as u64))?.x0()
            })
        })
        .collect::<Result<_>>()?;
    let nbins = bins.unwrap_or_else(|| (replicas as f64).sqrt().ceil() as usize);
    let tv = stats::binned_tv(&forward, &backward, nbins)?;
    Ok(TvEstimate {
        value: tv.value,
        bias_floor: tv.bias_floor,
        bins: tv.bins,
        exact: false,
    })
}

/// Approximate one stationary path segment (y_u, ..., y_t): y_u is drawn
/// from the depth-`n_backward` backward law anchored at u, then the path
/// runs forward through P_{X_u} .. P_{X_{t-1}}.
pub fn stationary_path_sample(
    family: &KernelFamily,
    env: &EnvironmentRealization,
    u: i64,
    t: i64,
    n_backward: usize,
    key: &StreamKey,
) -> Result<Vec<State>> {
    if u > t {
        return Err(CoreError::Argument("need u <= t".into()));
    }
    let anchor = anchor_state(family);
    let at_u = backward_sample(family, &env.shifted(u)?, &anchor, n_backward, &key.child(0))?;
    let mut path = Vec::with_capacity((t - u + 1) as usize);
    path.push(at_u);
    let mut rng = key.child(1).rng();
    for s in u..t {
        let next = kernel_step(family, env.value(s)?, path.last().unwrap(), &mut rng)?;
        path.push(next);
    }
    Ok(path)
}

/// Start state for backward iterations; the limit does not depend on it.
fn anchor_state(family: &KernelFamily) -> State {
    match family.state_space {
        StateSpace::Finite { .. } => State::Label(0),
        StateSpace::Real { dim } => State::Real(vec![0.0; dim]),
    }
}

/// n^{-1} sum_{t=1..n} f(Y_t) along one stationary path sample.
pub fn lln_average(
    family: &KernelFamily,
    env: &EnvironmentRealization,
    f: impl Fn(&State) -> f64,
    n: usize,
    n_backward: usize,
    key: &StreamKey,
) -> Result<f64> {
    let path = stationary_path_sample(family, env, 1, n as i64, n_backward, key)?;
    let mut acc = 0.0;
    for (i, y) in path.iter().enumerate() {
        let v = f(y);
        if !v.is_finite() {
            return Err(CoreError::Numeric(format!("non-finite f at path index {i}")));
        }
        acc += v;
    }
    Ok(acc / n as f64)
}

/// Running averages of the same path at each checkpoint in `ns` (used by
/// the CLI to emit convergence curves with one pass).
pub fn lln_running(
    family: &KernelFamily,
    env: &EnvironmentRealization,
    f: impl Fn(&State) -> f64,
    n: usize,
    every: usize,
    n_backward: usize,
    key: &StreamKey,
) -> Result<Vec<(usize, f64)>> {
    let path = stationary_path_sample(family, env, 1, n as i64, n_backward, key)?;
    let mut out = Vec::new();
    let mut acc = 0.0;
    for (i, y) in path.iter().enumerate() {
        let v = f(y);
        if !v.is_finite() {
            return Err(CoreError::Numeric(format!("non-finite f at path index {i}")));
        }
        acc += v;
        let t = i + 1;
        if t % every == 0 || t == n {
            out.push((t, acc / t as f64));
        }
    }
    Ok(out)
}
