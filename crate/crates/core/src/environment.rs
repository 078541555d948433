//! Stationary environment realizations.
//!
//! The exogenous process `X` is realized on a finite two-sided window with
//! full seed reproducibility. Generation is *per time index*: the value at
//! absolute index `t` is a pure function of `(spec, seed, t)`, so extending
//! the window in either direction leaves previously generated indices
//! unchanged, and disjoint replicas can be generated concurrently.
//!
//! - `iid`: one stream per index.
//! - `gaussian-ar1`: the exact stationary causal solution, evaluated as a
//!   moving average of per-index innovations truncated where the remaining
//!   weight is below 1e-18 (unobservable in f64); the marginal is the exact
//!   stationary normal law.
//! - `finite-markov`: coupling from the past over per-index uniforms; once
//!   the grand coupling coalesces before the window, the realized labels do
//!   not depend on the start, hence are window-extension consistent. Chains
//!   whose grand coupling never coalesces (e.g. permutation transitions)
//!   fall back to a long run from the declared initial label.
//! - `deterministic-cycle`: values repeat with their period.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::stream::{tag, StreamKey};

/// A point of the environment state space `F` (or `F^p` after blocking):
/// real coordinates; finite labels are carried as a single rounded
/// coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvPoint(pub Vec<f64>);

impl EnvPoint {
    pub fn scalar(x: f64) -> Self {
        EnvPoint(vec![x])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    /// First coordinate, the common case for scalar environments.
    pub fn x0(&self) -> f64 {
        self.0[0]
    }

    /// Interpret the point as a finite label.
    pub fn label(&self) -> Result<usize> {
        let x = self.0[0];
        if !x.is_finite() || x < -0.5 {
            return Err(CoreError::Argument(format!("not a label: {x}")));
        }
        Ok(x.round() as usize)
    }
}

/// Marginal distribution of an iid environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "kebab-case")]
pub enum IidDistribution {
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
}

/// Kind-specific parameters of the exogenous process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvironmentKind {
    Iid {
        #[serde(flatten)]
        dist: IidDistribution,
    },
    GaussianAr1 {
        coeff: f64,
        #[serde(default = "default_one")]
        innovation_sd: f64,
        #[serde(default)]
        mean: f64,
    },
    FiniteMarkov {
        transition: Vec<Vec<f64>>,
        initial: usize,
    },
    DeterministicCycle {
        values: Vec<Vec<f64>>,
    },
}

fn default_one() -> f64 {
    1.0
}

/// Full environment specification. `ergodic` and `mixing` are declared
/// metadata: they are never inferred from data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    #[serde(flatten)]
    pub kind: EnvironmentKind,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_true")]
    pub ergodic: bool,
    #[serde(default = "default_true")]
    pub mixing: bool,
}

fn default_dim() -> usize {
    1
}

fn default_true() -> bool {
    true
}

const ROW_SUM_TOL: f64 = 1e-12;

impl EnvironmentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(CoreError::Config("environment dim must be >= 1".into()));
        }
        match &self.kind {
            EnvironmentKind::Iid { dist } => match dist {
                IidDistribution::Normal { sd, .. } if *sd <= 0.0 => {
                    Err(CoreError::Config("iid normal sd must be positive".into()))
                }
                IidDistribution::Uniform { lo, hi } if !(lo < hi) => {
                    Err(CoreError::Config("iid uniform needs lo < hi".into()))
                }
                _ => Ok(()),
            },
            EnvironmentKind::GaussianAr1 {
                coeff,
                innovation_sd,
                ..
            } => {
                if !(coeff.abs() < 1.0) {
                    return Err(CoreError::Config(format!(
                        "gaussian-ar1 coefficient must satisfy |coeff| < 1, got {coeff}"
                    )));
                }
                if *innovation_sd <= 0.0 {
                    return Err(CoreError::Config("innovation sd must be positive".into()));
                }
                Ok(())
            }
            EnvironmentKind::FiniteMarkov {
                transition,
                initial,
            } => {
                let n = transition.len();
                if n == 0 {
                    return Err(CoreError::Config("empty transition matrix".into()));
                }
                for (i, row) in transition.iter().enumerate() {
                    if row.len() != n {
                        return Err(CoreError::Config(format!("transition row {i} has wrong length")));
                    }
                    if row.iter().any(|p| *p < 0.0 || !p.is_finite()) {
                        return Err(CoreError::Config(format!("transition row {i} has negative mass")));
                    }
                    let s: f64 = row.iter().sum();
                    if (s - 1.0).abs() > ROW_SUM_TOL {
                        return Err(CoreError::Config(format!(
                            "transition row {i} sums to {s}, not 1 within {ROW_SUM_TOL:e}"
                        )));
                    }
                }
                if *initial >= n {
                    return Err(CoreError::Config(format!("initial label {initial} out of range")));
                }
                Ok(())
            }
            EnvironmentKind::DeterministicCycle { values } => {
                if values.is_empty() {
                    return Err(CoreError::Config("deterministic cycle needs values".into()));
                }
                if values.iter().any(|v| v.len() != self.dim) {
                    return Err(CoreError::Config("cycle value dimension mismatch".into()));
                }
                Ok(())
            }
        }
    }

    /// Number of labels for a finite environment, if applicable.
    pub fn label_count(&self) -> Option<usize> {
        match &self.kind {
            EnvironmentKind::FiniteMarkov { transition, .. } => Some(transition.len()),
            _ => None,
        }
    }
}

/// Identifies the realized window an estimate was computed on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvWindowId {
    pub seed: u64,
    pub t_min: i64,
    pub t_max: i64,
}

/// A realized, immutable window of the environment. Shifting is O(1) and
/// shares the underlying data.
#[derive(Clone, Debug)]
pub struct EnvironmentRealization {
    spec: EnvironmentSpec,
    seed: u64,
    t_min: i64,
    t_max: i64,
    /// value(t) = data[t + shift - data_t_min]
    shift: i64,
    data_t_min: i64,
    data: Arc<Vec<EnvPoint>>,
    /// Block width p: values live in F^p (concatenated, newest first).
    width: usize,
}

/// Lookback used by the finite-markov coupling-from-the-past construction
/// before the first doubling.
const CFTP_INITIAL_LOOKBACK: i64 = 1 << 10;
const CFTP_MAX_LOOKBACK: i64 = 1 << 17;

impl EnvironmentRealization {
    /// Realize the window `[t_min, t_max]`. Same `(spec, seed, window)`
    /// reproduces identical values bit-for-bit; windows containing a common
    /// index agree there.
    pub fn realize(spec: &EnvironmentSpec, seed: u64, t_min: i64, t_max: i64) -> Result<Self> {
        spec.validate()?;
        if t_min > t_max {
            return Err(CoreError::Argument(format!(
                "window [{t_min}, {t_max}] is empty"
            )));
        }
        let root = StreamKey::root(seed).child(tag::ENVIRONMENT);
        let len = (t_max - t_min + 1) as usize;
        let data: Vec<EnvPoint> = match &spec.kind {
            EnvironmentKind::Iid { dist } => (t_min..=t_max)
                .map(|t| {
                    let mut rng = root.child_i64(t).rng();
                    let coords = (0..spec.dim)
                        .map(|_| match dist {
                            IidDistribution::Normal { mean, sd } => {
                                let z: f64 = rng.sample(StandardNormal);
                                mean + sd * z
                            }
                            IidDistribution::Uniform { lo, hi } => rng.gen_range(*lo..*hi),
                        })
                        .collect();
                    EnvPoint(coords)
                })
                .collect(),
            EnvironmentKind::GaussianAr1 {
                coeff,
                innovation_sd,
                mean,
            } => Self::realize_ar1(&root, spec.dim, *coeff, *innovation_sd, *mean, t_min, t_max),
            EnvironmentKind::FiniteMarkov {
                transition,
                initial,
            } => Self::realize_finite(&root, transition, *initial, t_min, t_max),
            EnvironmentKind::DeterministicCycle { values } => {
                let period = values.len() as i64;
                (t_min..=t_max)
                    .map(|t| EnvPoint(values[t.rem_euclid(period) as usize].clone()))
                    .collect()
            }
        };
        debug_assert_eq!(data.len(), len);
        Ok(Self {
            spec: spec.clone(),
            seed,
            t_min,
            t_max,
            shift: 0,
            data_t_min: t_min,
            data: Arc::new(data),
            width: 1,
        })
    }

    /// Exact stationary AR(1): X_t = mean + sd * sum_j phi^j eps_{t-j},
    /// truncated once phi^J <= 1e-18 (the dropped tail is below one ulp of
    /// the marginal standard deviation). Each innovation is keyed by its
    /// absolute index, so the value at t is window-independent.
    fn realize_ar1(
        root: &StreamKey,
        dim: usize,
        coeff: f64,
        sd: f64,
        mean: f64,
        t_min: i64,
        t_max: i64,
    ) -> Vec<EnvPoint> {
        let lookback = if coeff == 0.0 {
            0
        } else {
            ((-18.0 * std::f64::consts::LN_10) / coeff.abs().ln()).ceil() as i64
        };
        // Innovation rows for [t_min - lookback, t_max].
        let innov: Vec<Vec<f64>> = (t_min - lookback..=t_max)
            .map(|u| {
                let mut rng = root.child_i64(u).rng();
                (0..dim).map(|_| rng.sample(StandardNormal)).collect()
            })
            .collect();
        (t_min..=t_max)
            .map(|t| {
                let hi = (t - (t_min - lookback)) as usize;
                let coords = (0..dim)
                    .map(|c| {
                        // Horner over j = lookback..0 keeps the summation
                        // order fixed regardless of the window.
                        let mut acc = 0.0;
                        for j in (0..=lookback as usize).rev() {
                            acc = coeff * acc + innov[hi - j][c];
                        }
                        mean + sd * acc
                    })
                    .collect();
                EnvPoint(coords)
            })
            .collect()
    }

    /// Coupling from the past: apply the inverse-CDF update map of all
    /// states simultaneously with per-index uniforms, doubling the lookback
    /// until the grand coupling coalesces before the window. Conditional on
    /// coalescence the labels are start-independent, hence exact stationary
    /// draws and window-extension consistent.
    fn realize_finite(
        root: &StreamKey,
        transition: &[Vec<f64>],
        initial: usize,
        t_min: i64,
        t_max: i64,
    ) -> Vec<EnvPoint> {
        let n = transition.len();
        let step = |state: usize, u: f64| -> usize {
            let row = &transition[state];
            let mut acc = 0.0;
            for (j, p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    return j;
                }
            }
            n - 1
        };
        let uniform_at = |t: i64| -> f64 { root.child_i64(t).rng().gen::<f64>() };

        let mut lookback = CFTP_INITIAL_LOOKBACK;
        loop {
            let start = t_min - lookback;
            let mut map: Vec<usize> = (0..n).collect();
            let mut coalesced_before_window = false;
            let mut out = Vec::with_capacity((t_max - t_min + 1) as usize);
            for t in start..=t_max {
                if t > start {
                    let u = uniform_at(t);
                    for s in map.iter_mut() {
                        *s = step(*s, u);
                    }
                }
                if t < t_min {
                    coalesced_before_window |= map.iter().all(|s| *s == map[0]);
                } else {
                    if t == t_min {
                        coalesced_before_window |= map.iter().all(|s| *s == map[0]);
                    }
                    out.push(map[initial]);
                }
            }
            if coalesced_before_window || lookback >= CFTP_MAX_LOOKBACK {
                // Either the value is start-independent, or we anchor at the
                // declared initial label after the maximal burn-in.
                return out
                    .into_iter()
                    .map(|label| EnvPoint::scalar(label as f64))
                    .collect();
            }
            lookback *= 2;
        }
    }

    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn window(&self) -> (i64, i64) {
        (self.t_min, self.t_max)
    }

    /// Width p of the value tuples (1 unless blocked).
    pub fn block_width(&self) -> usize {
        self.width
    }

    /// Dimension of one value point (spec dim times block width).
    pub fn point_dim(&self) -> usize {
        self.spec.dim * self.width
    }

    pub fn window_id(&self) -> EnvWindowId {
        EnvWindowId {
            seed: self.seed,
            t_min: self.t_min,
            t_max: self.t_max,
        }
    }

    /// Value at absolute time t.
    pub fn value(&self, t: i64) -> Result<&EnvPoint> {
        if t < self.t_min || t > self.t_max {
            return Err(CoreError::Range(format!(
                "index {t} outside realized window [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        Ok(&self.data[(t + self.shift - self.data_t_min) as usize])
    }

    /// Shifted realization: shift(r, k).value(t) = r.value(t + k). O(1),
    /// shares data; inverse shifts restore the original values.
    pub fn shifted(&self, k: i64) -> Result<Self> {
        let mut out = self.clone();
        out.t_min -= k;
        out.t_max -= k;
        out.shift += k;
        Ok(out)
    }

    /// Process of overlapping p-tuples U_t = (X_t, ..., X_{t-p+1}),
    /// concatenated newest first; the blocked window is [t_min + p - 1, t_max].
    pub fn blocked(&self, p: usize) -> Result<Self> {
        if p < 1 {
            return Err(CoreError::Argument("block width must be >= 1".into()));
        }
        if self.width != 1 {
            return Err(CoreError::Argument("realization is already blocked".into()));
        }
        if p == 1 {
            return Ok(self.clone());
        }
        let new_min = self.t_min + (p as i64 - 1);
        if new_min > self.t_max {
            return Err(CoreError::Range(format!(
                "window too short to form {p}-tuples"
            )));
        }
        let mut data = Vec::with_capacity((self.t_max - new_min + 1) as usize);
        for t in new_min..=self.t_max {
            let mut coords = Vec::with_capacity(self.point_dim() * p);
            for j in 0..p as i64 {
                coords.extend_from_slice(self.value(t - j)?.coords());
            }
            data.push(EnvPoint(coords));
        }
        Ok(Self {
            spec: self.spec.clone(),
            seed: self.seed,
            t_min: new_min,
            t_max: self.t_max,
            shift: 0,
            data_t_min: new_min,
            data: Arc::new(data),
            width: p,
        })
    }

    /// Birkhoff average n^{-1} sum_{i=1..n} f(X_{-i}).
    pub fn birkhoff_average(&self, f: impl Fn(&EnvPoint) -> f64, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(CoreError::Argument("birkhoff average needs n >= 1".into()));
        }
        let mut acc = 0.0;
        for i in 1..=n as i64 {
            let v = f(self.value(-i)?);
            if !v.is_finite() {
                return Err(CoreError::Numeric(format!(
                    "non-finite value {v} at index {}",
                    -i
                )));
            }
            acc += v;
        }
        Ok(acc / n as f64)
    }
}
