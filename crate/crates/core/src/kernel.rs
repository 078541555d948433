//! The random kernel family x -> P_x and its drift / minorization data.
//!
//! A `KernelFamily` always knows how to sample one transition; it may
//! additionally expose a transition density with respect to a declared
//! reference measure, and (for finite state spaces driven by finite
//! environments) the exact row-stochastic matrix per environment value.
//! All sampling state lives in caller-provided streams; the family itself
//! is immutable and freely shareable.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand_chacha::ChaCha12Rng;

use crate::environment::EnvPoint;
use crate::error::{CoreError, Result};
use crate::oracle::validate_stochastic;

/// A point of the chain's state space E.
#[derive(Clone, Debug, PartialEq)]
pub enum State {
    Real(Vec<f64>),
    Label(usize),
}

impl State {
    pub fn scalar(x: f64) -> Self {
        State::Real(vec![x])
    }

    /// First real coordinate.
    pub fn x0(&self) -> Result<f64> {
        match self {
            State::Real(v) => Ok(v[0]),
            State::Label(_) => Err(CoreError::Argument("state is a label".into())),
        }
    }

    pub fn coords(&self) -> Result<&[f64]> {
        match self {
            State::Real(v) => Ok(v),
            State::Label(_) => Err(CoreError::Argument("state is a label".into())),
        }
    }

    pub fn label(&self) -> Result<usize> {
        match self {
            State::Label(l) => Ok(*l),
            State::Real(_) => Err(CoreError::Argument("state is not a label".into())),
        }
    }
}

/// Descriptor of E.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StateSpace {
    /// Real vectors of the given dimension.
    Real { dim: usize },
    /// Finite label set of the given size.
    Finite { len: usize },
}

pub type SampleFn = Arc<dyn Fn(&EnvPoint, &State, &mut ChaCha12Rng) -> Result<State> + Send + Sync>;
pub type DensityFn = Arc<dyn Fn(&EnvPoint, &State, &State) -> f64 + Send + Sync>;
/// Density of the p-step composed kernel, taking the blocked environment
/// tuple (newest value first, like the drift coefficients).
pub type MultiDensityFn = Arc<dyn Fn(&EnvPoint, &State, &State) -> f64 + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&EnvPoint) -> Result<Arc<DMatrix<f64>>> + Send + Sync>;
pub type StateFn = Arc<dyn Fn(&State) -> f64 + Send + Sync>;
pub type EnvFn = Arc<dyn Fn(&EnvPoint) -> f64 + Send + Sync>;
pub type EtaFn = Arc<dyn Fn(f64, &EnvPoint) -> f64 + Send + Sync>;
pub type NuSampleFn = Arc<dyn Fn(f64, &EnvPoint, &mut ChaCha12Rng) -> State + Send + Sync>;
pub type NuDensityFn = Arc<dyn Fn(f64, &EnvPoint, &State) -> f64 + Send + Sync>;

/// The map x -> P_x.
#[derive(Clone)]
pub struct KernelFamily {
    pub state_space: StateSpace,
    /// Dimension of a single (unblocked) environment point.
    pub env_dim: usize,
    pub sample: SampleFn,
    /// One-step transition density w.r.t. the declared reference measure.
    pub density: Option<DensityFn>,
    /// p-step transition density (present when the model's minorization is
    /// multi-step and a closed form exists), with the step count.
    pub multi_density: Option<(usize, MultiDensityFn)>,
    /// Exact matrix per environment value (finite E, finite F only).
    pub matrix: Option<MatrixFn>,
}

impl std::fmt::Debug for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelFamily")
            .field("state_space", &self.state_space)
            .field("env_dim", &self.env_dim)
            .field("has_density", &self.density.is_some())
            .field("has_matrix", &self.matrix.is_some())
            .finish()
    }
}

/// Drift data (V, lambda, b) for the p-step composed kernel; p = 1 is the
/// one-step condition. `lambda` and `b` take the blocked environment tuple,
/// newest value first.
#[derive(Clone)]
pub struct DriftSpec {
    pub v: StateFn,
    pub lambda: EnvFn,
    pub b: EnvFn,
    pub p: usize,
}

impl std::fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DriftSpec").field("p", &self.p).finish()
    }
}

/// Minorization data: P_x(y, .) >= eta(R, x) nu_R(x, .) for V(y) <= R.
/// `nu` is always a probability measure; any unnormalized dominating
/// measure is converted by moving its total mass into eta.
#[derive(Clone)]
pub struct MinorizationSpec {
    pub eta: EtaFn,
    pub nu_sample: NuSampleFn,
    pub nu_density: Option<NuDensityFn>,
    /// Identifier of the common reference measure (documentation only).
    pub reference: String,
    pub p: usize,
}

impl std::fmt::Debug for MinorizationSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MinorizationSpec")
            .field("reference", &self.reference)
            .field("p", &self.p)
            .finish()
    }
}

/// Split a blocked environment tuple (newest first) into its p constituent
/// points in *application order* (oldest kernel first).
pub fn split_blocked(x: &EnvPoint, env_dim: usize, p: usize) -> Result<Vec<EnvPoint>> {
    if x.coords().len() != env_dim * p {
        return Err(CoreError::Argument(format!(
            "blocked point has {} coords, expected {}",
            x.coords().len(),
            env_dim * p
        )));
    }
    Ok((0..p)
        .rev()
        .map(|i| EnvPoint(x.coords()[i * env_dim..(i + 1) * env_dim].to_vec()))
        .collect())
}

/// One transition: a draw from P_x(y, .).
pub fn kernel_step(
    family: &KernelFamily,
    x: &EnvPoint,
    y: &State,
    rng: &mut ChaCha12Rng,
) -> Result<State> {
    (family.sample)(x, y, rng)
}

/// The ordered product of the kernels selected by `xs` (first entry applied
/// first). When matrices exist the product matrix is materialized eagerly;
/// otherwise sampling chains the per-step samplers.
pub struct ComposedKernel<'a> {
    family: &'a KernelFamily,
    xs: Vec<EnvPoint>,
    matrix: Option<DMatrix<f64>>,
}

impl<'a> ComposedKernel<'a> {
    pub fn sample(&self, y: &State, rng: &mut ChaCha12Rng) -> Result<State> {
        let mut cur = y.clone();
        for x in &self.xs {
            cur = (self.family.sample)(x, &cur, rng)?;
        }
        Ok(cur)
    }

    pub fn matrix(&self) -> Option<&DMatrix<f64>> {
        self.matrix.as_ref()
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

pub fn compose<'a>(family: &'a KernelFamily, xs: &[EnvPoint]) -> Result<ComposedKernel<'a>> {
    if xs.is_empty() {
        return Err(CoreError::Argument("compose needs at least one kernel".into()));
    }
    let matrix = match &family.matrix {
        Some(mf) => {
            let mut acc: Option<DMatrix<f64>> = None;
            for x in xs {
                let m = mf(x).map_err(|e| {
                    CoreError::Capability(format!("cannot combine matrix representation: {e}"))
                })?;
                validate_stochastic(&m)?;
                acc = Some(match acc {
                    None => (*m).clone(),
                    Some(a) => a * &*m,
                });
            }
            acc
        }
        None => None,
    };
    Ok(ComposedKernel {
        family,
        xs: xs.to_vec(),
        matrix,
    })
}

/// Tolerance below which residual mass is considered a genuine violation
/// rather than floating-point noise.
pub const RESIDUAL_TOL: f64 = -1e-9;

const MAX_REJECTIONS: usize = 1_000_000;

/// One draw from the residual kernel Q_x(y, .) = (P_x - eta nu_R) / (1 - eta).
///
/// Finite case: the residual row is formed explicitly and sampled directly.
/// Density case: rejection — propose w ~ P_x(y, .), accept with probability
/// (p(w) - eta nu(w)) / p(w); the expected acceptance rate is 1 - eta.
/// For p-step minorizations `x` is the blocked tuple (newest first) and
/// proposals come from the composed kernel.
pub fn residual_sample(
    family: &KernelFamily,
    m: &MinorizationSpec,
    r_level: f64,
    x: &EnvPoint,
    y: &State,
    rng: &mut ChaCha12Rng,
) -> Result<State> {
    let eta = (m.eta)(r_level, x);
    if !(0.0..1.0).contains(&eta) {
        return Err(CoreError::Argument(format!(
            "eta(R, x) = {eta} outside [0, 1)"
        )));
    }
    if eta == 0.0 {
        // Q_x = P_x exactly.
        return if m.p == 1 {
            kernel_step(family, x, y, rng)
        } else {
            compose(family, &split_blocked(x, family.env_dim, m.p)?)?.sample(y, rng)
        };
    }

    // Finite path: explicit residual row.
    if matches!(
        (&family.matrix, family.state_space),
        (Some(_), StateSpace::Finite { .. })
    ) && m.p == 1
    {
        let row = finite_residual_row(family, m, r_level, x, y)?;
        let total: f64 = row.iter().sum();
        use rand::Rng;
        let u: f64 = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        for (j, q) in row.iter().enumerate() {
            acc += q;
            if u < acc {
                return Ok(State::Label(j));
            }
        }
        return Ok(State::Label(row.len() - 1));
    }

    // Density path: rejection sampling.
    let density: Box<dyn Fn(&State) -> f64> = if m.p == 1 {
        let d = family
            .density
            .clone()
            .ok_or_else(|| CoreError::Capability("residual sampling needs a density".into()))?;
        let (x, y) = (x.clone(), y.clone());
        Box::new(move |w: &State| d(&x, &y, w))
    } else {
        let (p, d) = family
            .multi_density
            .clone()
            .ok_or_else(|| CoreError::Capability("residual sampling needs a p-step density".into()))?;
        if p != m.p {
            return Err(CoreError::Capability(format!(
                "p-step density is for p={p}, minorization has p={}",
                m.p
            )));
        }
        let (x, y) = (x.clone(), y.clone());
        Box::new(move |w: &State| d(&x, &y, w))
    };
    let nu_d = m
        .nu_density
        .clone()
        .ok_or_else(|| CoreError::Capability("residual sampling needs nu_density".into()))?;

    let seq = if m.p > 1 {
        Some(split_blocked(x, family.env_dim, m.p)?)
    } else {
        None
    };
    use rand::Rng;
    for _ in 0..MAX_REJECTIONS {
        let w = match &seq {
            None => kernel_step(family, x, y, rng)?,
            Some(seq) => {
                let mut cur = y.clone();
                for xi in seq {
                    cur = (family.sample)(xi, &cur, rng)?;
                }
                cur
            }
        };
        let pw = density(&w);
        if pw <= 0.0 {
            // Proposal landed where the density vanishes; cannot happen for
            // a correct density, treat as violation of the pair.
            return Err(CoreError::Numeric(format!("proposal density {pw} <= 0")));
        }
        let margin = pw - eta * nu_d(r_level, x, &w);
        if margin < RESIDUAL_TOL * pw.max(1.0) {
            return Err(CoreError::MinorizationViolation {
                margin,
                context: "rejection sampler".into(),
            });
        }
        if rng.gen::<f64>() * pw < margin.max(0.0) {
            return Ok(w);
        }
    }
    Err(CoreError::Numeric(format!(
        "residual sampler starved: > {MAX_REJECTIONS} rejections (eta = {eta})"
    )))
}

/// The explicit residual row (P_x(y, .) - eta nu) / (1 - eta) of a finite
/// family, with negative floating-point dust clamped to zero.
pub fn finite_residual_row(
    family: &KernelFamily,
    m: &MinorizationSpec,
    r_level: f64,
    x: &EnvPoint,
    y: &State,
) -> Result<Vec<f64>> {
    let mf = family
        .matrix
        .as_ref()
        .ok_or_else(|| CoreError::Capability("finite residual needs matrices".into()))?;
    let nu_d = m
        .nu_density
        .as_ref()
        .ok_or_else(|| CoreError::Capability("finite residual needs nu_density".into()))?;
    let eta = (m.eta)(r_level, x);
    if !(0.0..1.0).contains(&eta) {
        return Err(CoreError::Argument(format!("eta(R, x) = {eta} outside [0, 1)")));
    }
    let mat = mf(x)?;
    let row_idx = y.label()?;
    let n = mat.ncols();
    let mut row = Vec::with_capacity(n);
    let mut worst = 0.0f64;
    for j in 0..n {
        let q = (mat[(row_idx, j)] - eta * nu_d(r_level, x, &State::Label(j))) / (1.0 - eta);
        worst = worst.min(q);
        row.push(q.max(0.0));
    }
    if worst < RESIDUAL_TOL {
        return Err(CoreError::MinorizationViolation {
            margin: worst,
            context: format!("residual row {row_idx}"),
        });
    }
    Ok(row)
}

/// Outcome of a minorization grid check.
#[derive(Clone, Debug, serde::Serialize)]
pub struct MinorizationReport {
    pub min_margin: f64,
    pub pass: bool,
    pub checked: usize,
    /// (x index, source index, target index) attaining the minimum margin.
    pub worst: Option<(usize, usize, usize)>,
}

/// Evaluate min over the grid of p_x(y, y') - eta(R, x) nu(y'); the claim
/// holds when the minimum is >= -1e-9.
pub fn minorization_validate(
    family: &KernelFamily,
    m: &MinorizationSpec,
    r_level: f64,
    xs: &[EnvPoint],
    ys: &[State],
) -> Result<MinorizationReport> {
    let nu_d = m
        .nu_density
        .as_ref()
        .ok_or_else(|| CoreError::Capability("validation needs nu_density".into()))?;
    let density: Option<&DensityFn> = family.density.as_ref();
    let multi = family.multi_density.as_ref();
    let mut min_margin = f64::INFINITY;
    let mut worst = None;
    let mut checked = 0usize;
    for (xi, x) in xs.iter().enumerate() {
        let eta = (m.eta)(r_level, x);
        for (yi, y) in ys.iter().enumerate() {
            for (zi, z) in ys.iter().enumerate() {
                let p = if m.p == 1 {
                    if let Some(mf) = &family.matrix {
                        let mat = mf(x)?;
                        mat[(y.label()?, z.label()?)]
                    } else if let Some(d) = density {
                        d(x, y, z)
                    } else {
                        return Err(CoreError::Capability(
                            "validation needs a density or matrix".into(),
                        ));
                    }
                } else {
                    let (pp, d) = multi.ok_or_else(|| {
                        CoreError::Capability("validation needs a p-step density".into())
                    })?;
                    if *pp != m.p {
                        return Err(CoreError::Capability("p mismatch".into()));
                    }
                    d(x, y, z)
                };
                let margin = p - eta * nu_d(r_level, x, z);
                checked += 1;
                if margin < min_margin {
                    min_margin = margin;
                    worst = Some((xi, yi, zi));
                }
            }
        }
    }
    Ok(MinorizationReport {
        min_margin,
        pass: min_margin >= RESIDUAL_TOL,
        checked,
        worst,
    })
}
