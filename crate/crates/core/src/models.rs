//! Example model builders: each returns a bundle pairing a kernel family
//! with the drift and minorization data under which the chain's stationary
//! behaviour can be analysed and simulated.
//!
//! - threshold autoregression with environment-dependent coefficients
//!   ([`make_tarx`]),
//! - functional-coefficient autoregression in companion form
//!   ([`make_farx`]),
//! - random-coefficient AR(1) ([`make_rca`]), a special case of the above,
//! - exact finite-state families for oracle testing ([`make_finite`]).

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::environment::EnvPoint;
use crate::error::{CoreError, Result};
use crate::kernel::{
    DriftSpec, EnvFn, KernelFamily, MinorizationSpec, SampleFn, State, StateFn, StateSpace,
};
use crate::oracle::validate_stochastic;

/// Coefficient function of the environment.
pub type CoefFn = Arc<dyn Fn(&EnvPoint) -> f64 + Send + Sync>;
/// Functional coefficient a_j(x, y_1..y_p) with lags ordered newest first.
pub type LagCoefFn = Arc<dyn Fn(&EnvPoint, &[f64]) -> f64 + Send + Sync>;

pub fn const_coef(c: f64) -> CoefFn {
    Arc::new(move |_| c)
}

/// Noise family with a positive, continuous, closed-form density — hence
/// lower-bounded on every compact interval, with the bound attained at the
/// interval edge by symmetry and unimodality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum NoiseFamily {
    Gaussian,
    Laplace,
    StudentT { df: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub family: NoiseFamily,
    pub scale: f64,
}

impl NoiseSpec {
    pub fn gaussian(scale: f64) -> Self {
        Self {
            family: NoiseFamily::Gaussian,
            scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(CoreError::Config(format!("noise scale must be positive, got {}", self.scale)));
        }
        if let NoiseFamily::StudentT { df } = self.family {
            if !(df > 1.0) {
                return Err(CoreError::Config(format!(
                    "student-t noise requires df > 1 for a finite mean, got {df}"
                )));
            }
        }
        Ok(())
    }

    pub fn density(&self, u: f64) -> f64 {
        let z = u / self.scale;
        let base = match self.family {
            NoiseFamily::Gaussian => (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            NoiseFamily::Laplace => 0.5 * (-z.abs()).exp(),
            NoiseFamily::StudentT { df } => {
                let lg = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)
                    - 0.5 * (df * std::f64::consts::PI).ln();
                (lg - (df + 1.0) / 2.0 * (1.0 + z * z / df).ln()).exp()
            }
        };
        base / self.scale
    }

    /// Infimum of the density over [-j, j]: f(j) by symmetry/unimodality.
    pub fn density_floor(&self, j: f64) -> f64 {
        self.density(j.abs())
    }

    /// E|eps|, in closed form.
    pub fn mean_abs(&self) -> f64 {
        match self.family {
            NoiseFamily::Gaussian => self.scale * (2.0 / std::f64::consts::PI).sqrt(),
            NoiseFamily::Laplace => self.scale,
            NoiseFamily::StudentT { df } => {
                // 2 sqrt(df) Gamma((df+1)/2) / (sqrt(pi) (df-1) Gamma(df/2))
                let lg = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0);
                self.scale * 2.0 * df.sqrt() * lg.exp()
                    / (std::f64::consts::PI.sqrt() * (df - 1.0))
            }
        }
    }

    pub fn sample(&self, rng: &mut rand_chacha::ChaCha12Rng) -> f64 {
        let z: f64 = match self.family {
            NoiseFamily::Gaussian => rng.sample(StandardNormal),
            NoiseFamily::Laplace => {
                let u: f64 = rng.gen_range(-0.5..0.5);
                -u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            NoiseFamily::StudentT { df } => StudentT::new(df).unwrap().sample(rng),
        };
        self.scale * z
    }

    /// CDF, used by sampler/density agreement tests.
    pub fn cdf(&self, u: f64) -> f64 {
        let z = u / self.scale;
        match self.family {
            NoiseFamily::Gaussian => {
                use statrs::distribution::ContinuousCDF;
                statrs::distribution::Normal::new(0.0, 1.0).unwrap().cdf(z)
            }
            NoiseFamily::Laplace => {
                if z < 0.0 {
                    0.5 * z.exp()
                } else {
                    1.0 - 0.5 * (-z).exp()
                }
            }
            NoiseFamily::StudentT { df } => {
                use statrs::distribution::ContinuousCDF;
                statrs::distribution::StudentsT::new(0.0, 1.0, df).unwrap().cdf(z)
            }
        }
    }
}

/// A model packaged with the data every downstream check consumes.
#[derive(Clone)]
pub struct ModelBundle {
    pub name: String,
    pub kernel: KernelFamily,
    pub drift: DriftSpec,
    pub minorization: MinorizationSpec,
    /// A small-set level at which the minorization mass is well
    /// conditioned; used as the default for coupling experiments.
    pub default_r: f64,
    /// Matrix map for Lyapunov-exponent estimation (companion matrix for
    /// the functional-coefficient model, |lambda| for scalar models).
    pub lyapunov_matrix: Option<Arc<dyn Fn(&EnvPoint) -> DMatrix<f64> + Send + Sync>>,
}

impl std::fmt::Debug for ModelBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelBundle")
            .field("name", &self.name)
            .field("default_r", &self.default_r)
            .finish()
    }
}

/// Guard keeping eta strictly below 1.
const ETA_CEIL: f64 = 1.0 - 1e-12;

/// How the minorization constant is scaled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum EtaConvention {
    /// Tight constant for the normalized uniform reference measure:
    /// eta = min(2R * inf f, 1 - 1e-12). Valid for every R.
    #[default]
    Tight,
    /// The looser unscaled density infimum, kept for comparison; only a
    /// valid lower bound when 2R >= 1.
    PaperInfimum,
}

/// Threshold autoregression
/// `Y_t = (b1 + a1 Y_{t-1}) 1_{Y_{t-1} <= r} + (b2 + a2 Y_{t-1}) 1_{Y_{t-1} > r} + eps_t`
/// with all five coefficient functions evaluated on X_{t-1}.
///
/// Drift: V(y) = |y|, lambda(x) = max(|a1|, |a2|), b(x) = |b1| + |b2| + E|eps|.
/// Minorization at level R: nu_R = uniform on [-R, R]; the density floor is
/// taken over the reachable offset band |y' - s(x, y)| <= J(x) with
/// J(x) = R + max|b_i(x)| + max|a_i(x)| R.
pub fn make_tarx(
    a1: CoefFn,
    b1: CoefFn,
    a2: CoefFn,
    b2: CoefFn,
    threshold: CoefFn,
    noise: NoiseSpec,
    eta_convention: EtaConvention,
) -> Result<ModelBundle> {
    noise.validate()?;
    let s_fn = {
        let (a1, b1, a2, b2, threshold) = (a1.clone(), b1.clone(), a2.clone(), b2.clone(), threshold);
        Arc::new(move |x: &EnvPoint, y: f64| -> f64 {
            if y <= threshold(x) {
                b1(x) + a1(x) * y
            } else {
                b2(x) + a2(x) * y
            }
        })
    };

    let sample: SampleFn = {
        let s_fn = s_fn.clone();
        let noise = noise.clone();
        Arc::new(move |x, y, rng| {
            let y0 = y.x0()?;
            let m = s_fn(x, y0);
            if !m.is_finite() {
                return Err(CoreError::Kernel(format!("non-finite conditional mean at y={y0}")));
            }
            Ok(State::scalar(m + noise.sample(rng)))
        })
    };
    let density = {
        let s_fn = s_fn.clone();
        let noise = noise.clone();
        Arc::new(move |x: &EnvPoint, y: &State, z: &State| {
            let (y0, z0) = (y.x0().unwrap_or(f64::NAN), z.x0().unwrap_or(f64::NAN));
            noise.density(z0 - s_fn(x, y0))
        })
    };

    let lambda: EnvFn = {
        let (a1, a2) = (a1.clone(), a2.clone());
        Arc::new(move |x| a1(x).abs().max(a2(x).abs()))
    };
    let b_env: EnvFn = {
        let (b1, b2) = (b1.clone(), b2.clone());
        let mean_abs = noise.mean_abs();
        Arc::new(move |x| b1(x).abs() + b2(x).abs() + mean_abs)
    };
    let v: StateFn = Arc::new(|y: &State| match y {
        State::Real(c) => c.iter().map(|v| v.abs()).sum(),
        State::Label(_) => f64::NAN,
    });

    let eta: crate::kernel::EtaFn = {
        let (a1, a2, b1, b2) = (a1.clone(), a2.clone(), b1.clone(), b2.clone());
        let noise = noise.clone();
        Arc::new(move |r: f64, x: &EnvPoint| {
            let j = r + b1(x).abs().max(b2(x).abs()) + a1(x).abs().max(a2(x).abs()) * r;
            let floor = noise.density_floor(j);
            let raw = match eta_convention {
                EtaConvention::Tight => 2.0 * r * floor,
                EtaConvention::PaperInfimum => floor,
            };
            raw.min(ETA_CEIL)
        })
    };
    let nu_sample: crate::kernel::NuSampleFn =
        Arc::new(|r, _x, rng| State::scalar(rng.gen_range(-r..r)));
    let nu_density: crate::kernel::NuDensityFn = Arc::new(|r, _x, z: &State| {
        let z0 = z.x0().unwrap_or(f64::NAN);
        if z0.abs() <= r {
            1.0 / (2.0 * r)
        } else {
            0.0
        }
    });

    let lam_for_matrix = lambda.clone();
    Ok(ModelBundle {
        name: "tarx".into(),
        kernel: KernelFamily {
            state_space: StateSpace::Real { dim: 1 },
            env_dim: usize::MAX, // patched by callers that know the env; see `with_env_dim`
            sample,
            density: Some(density),
            multi_density: None,
            matrix: None,
        },
        drift: DriftSpec {
            v,
            lambda,
            b: b_env,
            p: 1,
        },
        minorization: MinorizationSpec {
            eta,
            nu_sample,
            nu_density: Some(nu_density),
            reference: "uniform[-R,R]".into(),
            p: 1,
        },
        default_r: 1.0,
        lyapunov_matrix: Some(Arc::new(move |x| {
            DMatrix::from_element(1, 1, lam_for_matrix(x))
        })),
    }
    .with_env_dim(1))
}

impl ModelBundle {
    /// Set the dimension of a single environment point consumed by the
    /// coefficient functions.
    pub fn with_env_dim(mut self, d: usize) -> Self {
        self.kernel.env_dim = d;
        self
    }
}

/// Random-coefficient AR(1): `Y_t = a(X_{t-1}) Y_{t-1} + eps_t`, the
/// two-regime model with both regimes equal and no intercepts; lambda(x)
/// reduces to |a(x)|.
pub fn make_rca(a: CoefFn, noise: NoiseSpec) -> Result<ModelBundle> {
    let mut bundle = make_tarx(
        a.clone(),
        const_coef(0.0),
        a,
        const_coef(0.0),
        const_coef(0.0),
        noise,
        EtaConvention::Tight,
    )?;
    bundle.name = "rca".into();
    Ok(bundle)
}

/// Coefficient envelopes b_j(x) >= sup over lags |a_j(x, .)| for the
/// functional-coefficient model.
pub enum FarEnvelopes {
    /// Closed-form envelopes supplied by the caller.
    Supplied(Vec<CoefFn>),
    /// Numerical sup of |a_j| over a grid on the lag box [-radius, radius]^p.
    GridSup { radius: f64, points_per_dim: usize },
}

/// Functional-coefficient autoregression
/// `Y_t = sum_j a_j(X_{t-1}, Y_{t-1}..Y_{t-p}) Y_{t-j} + eps_t`,
/// realized as a one-step kernel on the companion state (Y_t, ..., Y_{t-p+1}).
///
/// The p-step drift uses V = l1 norm, lambda = the l1-induced norm of the
/// ordered companion product and the norm series for b. The minorization is
/// p-step; a closed form ships for p <= 2 (uniform reference on [-R, R]^p
/// with the dimensionally consistent (2R)^p scaling of the density floor).
pub fn make_farx(
    coeffs: Vec<LagCoefFn>,
    noise: NoiseSpec,
    envelopes: FarEnvelopes,
) -> Result<ModelBundle> {
    noise.validate()?;
    let p = coeffs.len();
    if p == 0 {
        return Err(CoreError::Config("need at least one lag coefficient".into()));
    }
    if p > 2 {
        return Err(CoreError::Capability(
            "closed-form multi-step minorization is only available for p <= 2".into(),
        ));
    }
    let env_fns: Vec<CoefFn> = match envelopes {
        FarEnvelopes::Supplied(fns) => {
            if fns.len() != p {
                return Err(CoreError::Config("need one envelope per lag".into()));
            }
            fns
        }
        FarEnvelopes::GridSup {
            radius,
            points_per_dim,
        } => {
            if !(radius > 0.0) || points_per_dim < 2 {
                return Err(CoreError::Config("invalid lag box for the envelope grid".into()));
            }
            coeffs
                .iter()
                .cloned()
                .map(|a| -> CoefFn {
                    let pp = p;
                    Arc::new(move |x: &EnvPoint| {
                        let mut sup = 0.0f64;
                        let mut lags = vec![0.0; pp];
                        let npts = points_per_dim.pow(pp as u32);
                        for idx in 0..npts {
                            let mut rem = idx;
                            for l in lags.iter_mut() {
                                let k = rem % points_per_dim;
                                rem /= points_per_dim;
                                *l = -radius + 2.0 * radius * k as f64 / (points_per_dim - 1) as f64;
                            }
                            sup = sup.max(a(x, &lags).abs());
                        }
                        sup
                    })
                })
                .collect()
        }
    };

    // g(x, lags) = sum_j a_j(x, lags) lags[j-1], lags newest first.
    let g = {
        let coeffs = coeffs.clone();
        Arc::new(move |x: &EnvPoint, lags: &[f64]| -> f64 {
            coeffs
                .iter()
                .enumerate()
                .map(|(j, a)| a(x, lags) * lags[j])
                .sum()
        })
    };

    let sample: SampleFn = {
        let g = g.clone();
        let noise = noise.clone();
        Arc::new(move |x, y, rng| {
            let lags = y.coords()?;
            let m = g(x, lags);
            if !m.is_finite() {
                return Err(CoreError::Kernel("non-finite conditional mean".into()));
            }
            let mut next = Vec::with_capacity(lags.len());
            next.push(m + noise.sample(rng));
            next.extend_from_slice(&lags[..lags.len() - 1]);
            Ok(State::Real(next))
        })
    };

    // Companion matrix from the envelopes: first row (b_1 .. b_p), identity
    // sub-block, zero last column.
    let companion = {
        let env_fns = env_fns.clone();
        Arc::new(move |x: &EnvPoint| -> DMatrix<f64> {
            let mut m = DMatrix::zeros(p, p);
            for (j, bf) in env_fns.iter().enumerate() {
                m[(0, j)] = bf(x);
            }
            for i in 1..p {
                m[(i, i - 1)] = 1.0;
            }
            m
        })
    };

    let v: StateFn = Arc::new(|y: &State| match y {
        State::Real(c) => c.iter().map(|v| v.abs()).sum(),
        State::Label(_) => f64::NAN,
    });
    // Blocked tuple (newest first) = (x_p, ..., x_1); the product
    // A(x_p)...A(x_1) follows the tuple order directly.
    let lambda: EnvFn = {
        let companion = companion.clone();
        Arc::new(move |blocked: &EnvPoint| {
            let pts = blocked_points(blocked, p);
            let mut m = companion(&pts[0]);
            for x in &pts[1..] {
                m *= companion(x);
            }
            l1_operator_norm(&m)
        })
    };
    let b_env: EnvFn = {
        let companion = companion.clone();
        let c_norm = noise.mean_abs();
        Arc::new(move |blocked: &EnvPoint| {
            let pts = blocked_points(blocked, p);
            // ||c|| + sum_{j=2..p} ||A(x_p)|| ... ||A(x_{p-j+2})|| ||c||
            let mut acc = c_norm;
            let mut prod = 1.0;
            for x in pts.iter().take(p - 1) {
                prod *= l1_operator_norm(&companion(x));
                acc += prod * c_norm;
            }
            acc
        })
    };

    let multi_density = if p == 2 {
        let g = g.clone();
        let noise = noise.clone();
        let f: crate::kernel::MultiDensityFn =
            Arc::new(move |blocked: &EnvPoint, y: &State, z: &State| {
                // blocked = (x2 | x1), newest first, each of env dim d.
                let d = blocked.coords().len() / 2;
                let x2 = EnvPoint(blocked.coords()[..d].to_vec());
                let x1 = EnvPoint(blocked.coords()[d..].to_vec());
                let (y, z) = match (y.coords(), z.coords()) {
                    (Ok(a), Ok(b)) => (a, b),
                    _ => return 0.0,
                };
                // First step from (y0, y1) with x1 produces intermediate z1;
                // the second step with x2 produces z0.
                noise.density(z[1] - g(&x1, y)) * noise.density(z[0] - g(&x2, &[z[1], y[0]]))
            });
        Some((2usize, f))
    } else {
        None
    };

    let eta: crate::kernel::EtaFn = {
        let env_fns = env_fns.clone();
        let noise = noise.clone();
        Arc::new(move |r: f64, blocked: &EnvPoint| {
            let pts = blocked_points(blocked, p);
            if p == 1 {
                let j = r * (1.0 + env_fns[0](&pts[0]));
                (2.0 * r * noise.density_floor(j)).min(ETA_CEIL)
            } else {
                // Per-factor reachable band: |v - g| <= R + (b1 + b2) R.
                let mut acc = (2.0 * r).powi(p as i32);
                for x in &pts {
                    let j = r * (1.0 + env_fns[0](x) + env_fns[1](x));
                    acc *= noise.density_floor(j);
                }
                acc.min(ETA_CEIL)
            }
        })
    };
    let nu_sample: crate::kernel::NuSampleFn = Arc::new(move |r, _x, rng| {
        State::Real((0..p).map(|_| rng.gen_range(-r..r)).collect())
    });
    let nu_density: crate::kernel::NuDensityFn = Arc::new(move |r, _x, z: &State| {
        match z.coords() {
            Ok(c) if c.iter().all(|v| v.abs() <= r) => (2.0 * r).powi(-(p as i32)),
            _ => 0.0,
        }
    });

    let density = if p == 1 {
        let g = g.clone();
        let noise = noise.clone();
        let f: crate::kernel::DensityFn = Arc::new(move |x: &EnvPoint, y: &State, z: &State| {
            match (y.coords(), z.coords()) {
                (Ok(a), Ok(b)) => noise.density(b[0] - g(x, a)),
                _ => 0.0,
            }
        });
        Some(f)
    } else {
        None
    };

    Ok(ModelBundle {
        name: "farx".into(),
        kernel: KernelFamily {
            state_space: StateSpace::Real { dim: p },
            env_dim: 1,
            sample,
            density,
            multi_density,
            matrix: None,
        },
        drift: DriftSpec {
            v,
            lambda,
            b: b_env,
            p,
        },
        minorization: MinorizationSpec {
            eta,
            nu_sample,
            nu_density: Some(nu_density),
            reference: format!("uniform[-R,R]^{p}"),
            p,
        },
        default_r: 1.0,
        lyapunov_matrix: Some(companion),
    })
}

fn blocked_points(blocked: &EnvPoint, p: usize) -> Vec<EnvPoint> {
    let d = blocked.coords().len() / p;
    (0..p)
        .map(|i| EnvPoint(blocked.coords()[i * d..(i + 1) * d].to_vec()))
        .collect()
}

/// l1-induced operator norm: maximum absolute column sum.
pub fn l1_operator_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Exact finite family: one row-stochastic matrix per environment label.
///
/// Drift data uses V = 1 with lambda(x) the total-variation contraction
/// coefficient of the label's matrix (maximum TV distance between rows) and
/// b = 1 - lambda. Minorization: eta = the matrix's minimum column mass
/// with nu the normalized column minima, independent of the level R since
/// the whole space is the level set.
pub fn make_finite(transition_by_env_label: Vec<DMatrix<f64>>) -> Result<ModelBundle> {
    if transition_by_env_label.is_empty() {
        return Err(CoreError::Config("need at least one matrix".into()));
    }
    let n = transition_by_env_label[0].nrows();
    for m in &transition_by_env_label {
        validate_stochastic(m)?;
        if m.nrows() != n {
            return Err(CoreError::Config("matrices must share dimensions".into()));
        }
    }
    let mats: Vec<Arc<DMatrix<f64>>> = transition_by_env_label.into_iter().map(Arc::new).collect();

    let contraction: Vec<f64> = mats.iter().map(|m| dobrushin_coefficient(m)).collect();
    let (etas, nus): (Vec<f64>, Vec<Vec<f64>>) = mats
        .iter()
        .map(|m| {
            let mins: Vec<f64> = (0..n)
                .map(|j| (0..n).map(|i| m[(i, j)]).fold(f64::INFINITY, f64::min))
                .collect();
            let eta: f64 = mins.iter().sum();
            let nu = if eta > 0.0 {
                mins.iter().map(|v| v / eta).collect()
            } else {
                vec![1.0 / n as f64; n]
            };
            (eta.min(ETA_CEIL), nu)
        })
        .unzip();

    let sample: SampleFn = {
        let mats = mats.clone();
        Arc::new(move |x, y, rng| {
            let label = x.label()?;
            let m = mats
                .get(label)
                .ok_or_else(|| CoreError::Kernel(format!("no matrix for label {label}")))?;
            let row = y.label()?;
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for j in 0..m.ncols() {
                acc += m[(row, j)];
                if u < acc {
                    return Ok(State::Label(j));
                }
            }
            Ok(State::Label(m.ncols() - 1))
        })
    };
    let density: crate::kernel::DensityFn = {
        let mats = mats.clone();
        Arc::new(move |x: &EnvPoint, y: &State, z: &State| {
            match (x.label(), y.label(), z.label()) {
                (Ok(l), Ok(i), Ok(j)) => mats[l][(i, j)],
                _ => 0.0,
            }
        })
    };
    let matrix: crate::kernel::MatrixFn = {
        let mats = mats.clone();
        Arc::new(move |x: &EnvPoint| {
            let label = x.label()?;
            mats.get(label)
                .cloned()
                .ok_or_else(|| CoreError::Kernel(format!("no matrix for label {label}")))
        })
    };

    let lam_vec = contraction.clone();
    let lambda: EnvFn = Arc::new(move |x| lam_vec[x.label().unwrap_or(0)]);
    let b_vec = contraction;
    let b_env: EnvFn = Arc::new(move |x| 1.0 - b_vec[x.label().unwrap_or(0)]);
    let v: StateFn = Arc::new(|_| 1.0);

    let eta_by_label = etas.clone();
    let eta: crate::kernel::EtaFn = Arc::new(move |_r, x| eta_by_label[x.label().unwrap_or(0)]);
    let nus2 = nus.clone();
    let nu_sample: crate::kernel::NuSampleFn = Arc::new(move |_r, x, rng| {
        let nu = &nus2[x.label().unwrap_or(0)];
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (j, w) in nu.iter().enumerate() {
            acc += w;
            if u < acc {
                return State::Label(j);
            }
        }
        State::Label(nu.len() - 1)
    });
    let nu_density: crate::kernel::NuDensityFn = Arc::new(move |_r, x, z: &State| {
        match z.label() {
            Ok(j) => nus[x.label().unwrap_or(0)][j],
            Err(_) => 0.0,
        }
    });

    Ok(ModelBundle {
        name: "finite".into(),
        kernel: KernelFamily {
            state_space: StateSpace::Finite { len: n },
            env_dim: 1,
            sample,
            density: Some(density),
            multi_density: None,
            matrix: Some(matrix),
        },
        drift: DriftSpec {
            v,
            lambda,
            b: b_env,
            p: 1,
        },
        minorization: MinorizationSpec {
            eta,
            nu_sample,
            nu_density: Some(nu_density),
            reference: "counting".into(),
            p: 1,
        },
        default_r: 1.0,
        lyapunov_matrix: None,
    })
}

/// Maximum total-variation distance between rows; contraction coefficient
/// of the kernel acting on probability vectors.
pub fn dobrushin_coefficient(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for k in (i + 1)..n {
            let tv: f64 = (0..n).map(|j| (m[(i, j)] - m[(k, j)]).abs()).sum::<f64>() * 0.5;
            worst = worst.max(tv);
        }
    }
    worst
}
