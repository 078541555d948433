//! Subcommand implementations. Every run writes its data files plus a JSON
//! summary embedding the fully resolved config, so outputs are
//! self-describing; identical config and seed produce byte-identical files.

use std::fs;
use std::path::Path;

use mcre_core::conditions::{
    drift_check, geometric_mean_condition, lyapunov_exponent, MatrixNorm,
};
use mcre_core::coupling::{coalescence_curve, CurveOptions};
use mcre_core::environment::EnvironmentRealization;
use mcre_core::goodtimes::{find_constants, good_times, GoodTimeOptions};
use mcre_core::kernel::{kernel_step, minorization_validate, State, StateSpace};
use mcre_core::stationary::{backward_tv_pair, lln_running, TvPairMode};
use mcre_core::stream::StreamKey;
use mcre_core::{expr, EnvPoint, ModelBundle};
use serde::{Deserialize, Serialize};

use crate::config::{build_model, experiment, FileConfig};
use crate::CliError;

pub const SCHEMA_VERSION: &str = "1";

fn runtime(module: &str) -> impl Fn(mcre_core::CoreError) -> CliError + '_ {
    move |e| CliError::Runtime {
        module: module.to_string(),
        message: e.to_string(),
    }
}

fn require_model(cfg: &FileConfig) -> Result<ModelBundle, CliError> {
    let section = cfg
        .model
        .as_ref()
        .ok_or_else(|| CliError::Config("this subcommand needs a [model] section".into()))?;
    build_model(section, cfg.environment.dim)
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    schema_version: &'static str,
    subcommand: &'a str,
    seed: u64,
    config: &'a FileConfig,
    results: T,
}

fn write_json<T: Serialize>(
    out: &Path,
    name: &str,
    cfg: &FileConfig,
    sub: &str,
    results: T,
) -> Result<(), CliError> {
    let s = Summary {
        schema_version: SCHEMA_VERSION,
        subcommand: sub,
        seed: cfg.seed,
        config: cfg,
        results,
    };
    let text = serde_json::to_string_pretty(&s).map_err(|e| CliError::Config(e.to_string()))?;
    fs::write(out.join(name), text + "\n").map_err(CliError::from)
}

fn csv_writer(out: &Path, name: &str) -> Result<csv::Writer<fs::File>, CliError> {
    let f = fs::File::create(out.join(name))?;
    Ok(csv::Writer::from_writer(f))
}

/// Initial state from the experiment config.
fn initial_state(bundle: &ModelBundle, y0: &[f64], y0_label: Option<usize>) -> Result<State, CliError> {
    match bundle.kernel.state_space {
        StateSpace::Finite { len } => {
            let l = y0_label
                .ok_or_else(|| CliError::Config("finite models need y0_label".into()))?;
            if l >= len {
                return Err(CliError::Config(format!("y0_label {l} out of range {len}")));
            }
            Ok(State::Label(l))
        }
        StateSpace::Real { dim } => {
            if y0.len() != dim {
                return Err(CliError::Config(format!(
                    "y0 has {} coordinates, the state space has {dim}",
                    y0.len()
                )));
            }
            Ok(State::Real(y0.to_vec()))
        }
    }
}

fn state_coords(s: &State) -> Vec<f64> {
    match s {
        State::Real(v) => v.clone(),
        State::Label(l) => vec![*l as f64],
    }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateParams {
    steps: usize,
    #[serde(default)]
    y0: Vec<f64>,
    #[serde(default)]
    y0_label: Option<usize>,
    #[serde(default = "one")]
    output_every: usize,
}

fn one() -> usize {
    1
}

pub fn simulate(cfg: &FileConfig, out: &Path) -> Result<(), CliError> {
    let p: SimulateParams = experiment(&cfg.experiment)?;
    let bundle = require_model(cfg)?;
    let env = EnvironmentRealization::realize(&cfg.environment, cfg.seed, 0, p.steps as i64)
        .map_err(runtime("environment"))?;
    let mut y = initial_state(&bundle, &p.y0, p.y0_label)?;
    let mut w = csv_writer(out, "simulate.csv")?;
    let state_dim = state_coords(&y).len();
    let mut header = vec!["t".to_string()];
    header.extend((0..state_dim).map(|i| format!("y{i}")));
    header.extend((0..cfg.environment.dim).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    let mut rng = StreamKey::root(cfg.seed).child(mcre_core::stream::tag::PATH).rng();
    for t in 0..=p.steps as i64 {
        if t > 0 {
            y = kernel_step(&bundle.kernel, env.value(t - 1).map_err(runtime("environment"))?, &y, &mut rng)
                .map_err(runtime("kernel"))?;
        }
        if t as usize % p.output_every == 0 || t as usize == p.steps {
            let mut rec = vec![t.to_string()];
            rec.extend(state_coords(&y).iter().map(|v| v.to_string()));
            rec.extend(
                env.value(t)
                    .map_err(runtime("environment"))?
                    .coords()
                    .iter()
                    .map(|v| v.to_string()),
            );
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    write_json(out, "simulate.json", cfg, "simulate", serde_json::json!({ "rows": p.steps + 1 }))
}

// ---------------------------------------------------------------------------
// couple
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoupleParams {
    ns: Vec<usize>,
    replicas: usize,
    z: Vec<f64>,
    z_bar: Vec<f64>,
    #[serde(default)]
    z_label: Option<usize>,
    #[serde(default)]
    z_bar_label: Option<usize>,
    /// Small-set level for the coupling; defaults to the good-time level.
    #[serde(default)]
    r_level: Option<f64>,
}

pub fn couple(cfg: &FileConfig, out: &Path) -> Result<(), CliError> {
    let p: CoupleParams = experiment(&cfg.experiment)?;
    let bundle = require_model(cfg)?;
    let z = initial_state(&bundle, &p.z, p.z_label)?;
    let z_bar = initial_state(&bundle, &p.z_bar, p.z_bar_label)?;
    let fit = coalescence_curve(
        &bundle,
        &cfg.environment,
        &z,
        &z_bar,
        &p.ns,
        p.replicas,
        cfg.seed,
        &CurveOptions {
            r_level: p.r_level,
            good_times: GoodTimeOptions::default(),
        },
    )
    .map_err(runtime("coupling"))?;
    let mut w = csv_writer(out, "couple_curve.csv")?;
    w.write_record(["n", "replicas", "non_coalesced_fraction", "se"])?;
    for c in &fit.curve {
        w.write_record([
            c.n.to_string(),
            c.replicas.to_string(),
            c.non_coalesced_fraction.to_string(),
            c.se.to_string(),
        ])?;
    }
    w.flush()?;
    write_json(out, "couple.json", cfg, "couple", &fit)
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
enum TvMode {
    Exact,
    Coupling,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BackwardParams {
    ns: Vec<usize>,
    mode: TvMode,
    z: Vec<f64>,
    z_prime: Vec<f64>,
    #[serde(default)]
    z_label: Option<usize>,
    #[serde(default)]
    z_prime_label: Option<usize>,
    #[serde(default = "default_replicas")]
    replicas: usize,
    #[serde(default)]
    r_level: Option<f64>,
}

fn default_replicas() -> usize {
    10_000
}

pub fn backward(cfg: &FileConfig, out: &Path) -> Result<(), CliError> {
    let p: BackwardParams = experiment(&cfg.experiment)?;
    let bundle = require_model(cfg)?;
    let z = initial_state(&bundle, &p.z, p.z_label)?;
    let z_prime = initial_state(&bundle, &p.z_prime, p.z_prime_label)?;
    let n_max = *p.ns.iter().max().unwrap_or(&0) as i64;
    let margin = GoodTimeOptions::default().horizon as i64;
    let env = EnvironmentRealization::realize(&cfg.environment, cfg.seed, -n_max - margin, 0)
        .map_err(runtime("environment"))?;
    let mut w = csv_writer(out, "backward.csv")?;
    w.write_record(["n", "tv", "se"])?;
    let mut rows = Vec::new();
    for &n in &p.ns {
        let est = match p.mode {
            TvMode::Exact => backward_tv_pair(&bundle.kernel, &env, &z, &z_prime, n, TvPairMode::Exact),
            TvMode::Coupling => backward_tv_pair(
                &bundle.kernel,
                &env,
                &z,
                &z_prime,
                n,
                TvPairMode::Coupling {
                    bundle: &bundle,
                    replicas: p.replicas,
                    r_level: p.r_level,
                    good_times: GoodTimeOptions::default(),
                    master_seed: cfg.seed,
                },
            ),
        }
        .map_err(runtime("stationary"))?;
        w.write_record([n.to_string(), est.value.to_string(), est.se.to_string()])?;
        rows.push(serde_json::json!({ "n": n, "tv": est.value, "se": est.se }));
    }
    w.flush()?;
    write_json(out, "backward.json", cfg, "backward", serde_json::json!({ "points": rows }))
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckParams {
    #[serde(default = "default_n_mc")]
    n_mc: usize,
    #[serde(default = "default_gm_n")]
    geometric_mean_n: usize,
    #[serde(default)]
    r_level: Option<f64>,
    #[serde(default = "default_grid")]
    y_grid: usize,
    #[serde(default = "default_radius")]
    y_radius: f64,
    #[serde(default = "default_x_count")]
    x_samples: usize,
}

fn default_n_mc() -> usize {
    10_000
}
fn default_gm_n() -> usize {
    10_000
}
fn default_grid() -> usize {
    21
}
fn default_radius() -> f64 {
    5.0
}
fn default_x_count() -> usize {
    5
}

pub fn check(cfg: &FileConfig, out: &Path) -> Result<(), CliError> {
    let p: CheckParams = experiment(&cfg.experiment)?;
    let bundle = require_model(cfg)?;
    let n_env = (p.geometric_mean_n as i64) * bundle.drift.p as i64 + 2;
    let env = EnvironmentRealization::realize(&cfg.environment, cfg.seed, -n_env, 0)
        .map_err(runtime("environment"))?;

    // Environment points sampled from the realization; state grid by space.
    let xs: Vec<EnvPoint> = (0..p.x_samples)
        .map(|i| env.value(-(1 + i as i64)).map(|x| x.clone()))
        .collect::<mcre_core::Result<_>>()
        .map_err(runtime("environment"))?;
    // Blocked tuples for multi-step drift data.
    let blocked: Vec<EnvPoint> = if bundle.drift.p > 1 {
        let b = env.blocked(bundle.drift.p).map_err(runtime("environment"))?;
        (0..p.x_samples)
            .map(|i| b.value(-(1 + i as i64)).map(|x| x.clone()))
            .collect::<mcre_core::Result<_>>()
            .map_err(runtime("environment"))?
    } else {
        xs.clone()
    };
    let ys: Vec<State> = match bundle.kernel.state_space {
        StateSpace::Finite { len } => (0..len).map(State::Label).collect(),
        StateSpace::Real { dim } => (0..p.y_grid)
            .map(|k| {
                let v = -p.y_radius + 2.0 * p.y_radius * k as f64 / (p.y_grid - 1).max(1) as f64;
                State::Real(vec![v; dim])
            })
            .collect(),
    };
    let points: Vec<(EnvPoint, State)> = blocked
        .iter()
        .flat_map(|x| ys.iter().map(move |y| (x.clone(), y.clone())))
        .collect();
    let drift = drift_check(
        &bundle.kernel,
        &bundle.drift,
        &points,
        p.n_mc,
        &StreamKey::root(cfg.seed).child(mcre_core::stream::tag::CHECK),
    )
    .map_err(runtime("conditions"))?;

    let lambda = bundle.drift.lambda.clone();
    let gm = geometric_mean_condition(&env, move |x| lambda(x), bundle.drift.p, p.geometric_mean_n)
        .map_err(runtime("conditions"))?;

    let r_level = p.r_level.unwrap_or(bundle.default_r);
    let grid_states: Vec<State> = match bundle.kernel.state_space {
        StateSpace::Finite { len } => (0..len).map(State::Label).collect(),
        StateSpace::Real { dim } => (0..p.y_grid)
            .map(|k| {
                let v = -r_level + 2.0 * r_level * k as f64 / (p.y_grid - 1).max(1) as f64;
                State::Real(vec![v; dim])
            })
            .collect(),
    };
    let minor = minorization_validate(&bundle.kernel, &bundle.minorization, r_level, &blocked, &grid_states)
        .map_err(runtime("kernel"))?;

    write_json(
        out,
        "check.json",
        cfg,
        "check",
        serde_json::json!({
            "drift": drift,
            "geometric_mean": gm,
            "minorization": { "r_level": r_level, "report": minor },
        }),
    )
}

// ---------------------------------------------------------------------------
// goodtimes
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GoodTimesParams {
    n: usize,
    #[serde(default = "default_c1_max")]
    c1_max: u32,
    #[serde(default = "default_c2_max")]
    c2_max: f64,
    #[serde(default = "default_horizon")]
    horizon: usize,
    #[serde(default = "default_tol")]
    series_tol: f64,
}

fn default_c1_max() -> u32 {
    64
}
fn default_c2_max() -> f64 {
    1e306
}
fn default_horizon() -> usize {
    256
}
fn default_tol() -> f64 {
    1e-12
}

pub fn goodtimes(cfg: &FileConfig, out: &Path) -> Result<(), CliError> {
    let p: GoodTimesParams = experiment(&cfg.experiment)?;
    let bundle = require_model(cfg)?;
    let opts = GoodTimeOptions {
        c1_max: p.c1_max,
        c2_max: p.c2_max,
        horizon: p.horizon,
        series_tol: p.series_tol,
    };
    let env = EnvironmentRealization::realize(
        &cfg.environment,
        cfg.seed,
        -(p.n as i64) - opts.horizon as i64,
        0,
    )
    .map_err(runtime("environment"))?;
    let lambda = bundle.drift.lambda.clone();
    let bfn = bundle.drift.b.clone();
    let constants = find_constants(&env, &*lambda, &*bfn, &bundle.minorization, &opts)
        .map_err(runtime("goodtimes"))?;
    let gti = good_times(
        &env,
        constants,
        (-(p.n as i64), 0),
        &*lambda,
        &*bfn,
        &bundle.minorization,
        &opts,
    )
    .map_err(runtime("goodtimes"))?;
    let mut w = csv_writer(out, "goodtimes.csv")?;
    w.write_record(["i", "tau_i"])?;
    for (i, tau) in gti.tau.iter().enumerate() {
        w.write_record([i.to_string(), tau.to_string()])?;
    }
    w.flush()?;
    let density = gti.count_in_past(p.n) as f64 / p.n as f64;
    write_json(
        out,
        "goodtimes.json",
        cfg,
        "goodtimes",
        serde_json::json!({
            "c1": constants.c1,
            "c2": constants.c2,
            "r": constants.r(),
            "density": density,
            "raw_count": gti.raw_count,
            "kept": gti.tau.len(),
        }),
    )
}

// ---------------------------------------------------------------------------
// lyapunov
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LyapunovParams {
    n: usize,
    #[serde(default = "default_norm")]
    norm: String,
}

fn default_norm() -> String {
    "l1".into()
}

pub fn lyapunov(cfg: &FileConfig, out: &Path) -> Result<(), CliError> {
    let p: LyapunovParams = experiment(&cfg.experiment)?;
    let bundle = require_model(cfg)?;
    let a = bundle
        .lyapunov_matrix
        .clone()
        .ok_or_else(|| CliError::Config("this model has no matrix map for Lyapunov estimation".into()))?;
    let norm = match p.norm.as_str() {
        "l1" => MatrixNorm::L1Induced,
        "linf" => MatrixNorm::LInfInduced,
        "frobenius" => MatrixNorm::Frobenius,
        other => return Err(CliError::Config(format!("unknown norm {other:?}"))),
    };
    let env = EnvironmentRealization::realize(&cfg.environment, cfg.seed, -(p.n as i64) - 1, 0)
        .map_err(runtime("environment"))?;
    let mut trajectory = Vec::new();
    let mut h = p.n;
    while h >= 2 {
        trajectory.push(h);
        h /= 2;
    }
    trajectory.reverse();
    let mut traj_out = Vec::new();
    for h in trajectory {
        let g = lyapunov_exponent(|x| a(x), &env, h, norm).map_err(runtime("conditions"))?;
        traj_out.push(serde_json::json!({ "n": h, "estimate": g }));
    }
    let estimate = lyapunov_exponent(|x| a(x), &env, p.n, norm).map_err(runtime("conditions"))?;
    write_json(
        out,
        "lyapunov.json",
        cfg,
        "lyapunov",
        serde_json::json!({ "estimate": estimate, "n": p.n, "trajectory": traj_out }),
    )
}

// ---------------------------------------------------------------------------
// lln
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LlnParams {
    n: usize,
    /// Bounded statistic, an expression over the state coordinates.
    f: String,
    #[serde(default = "default_n_backward")]
    n_backward: usize,
    #[serde(default = "default_every")]
    output_every: usize,
}

fn default_n_backward() -> usize {
    1_000
}
fn default_every() -> usize {
    100
}

pub fn lln(cfg: &FileConfig, out: &Path) -> Result<(), CliError> {
    let p: LlnParams = experiment(&cfg.experiment)?;
    let bundle = require_model(cfg)?;
    let f_expr = expr::parse(&p.f).map_err(|e| CliError::Config(e.to_string()))?;
    let env = EnvironmentRealization::realize(
        &cfg.environment,
        cfg.seed,
        -(p.n_backward as i64) - 2,
        p.n as i64 + 1,
    )
    .map_err(runtime("environment"))?;
    let f = move |s: &State| {
        let coords = state_coords(s);
        f_expr.eval(&coords)
    };
    let rows = lln_running(
        &bundle.kernel,
        &env,
        f,
        p.n,
        p.output_every,
        p.n_backward,
        &StreamKey::root(cfg.seed).child(mcre_core::stream::tag::PATH),
    )
    .map_err(runtime("stationary"))?;
    let mut w = csv_writer(out, "lln.csv")?;
    w.write_record(["t", "average"])?;
    for (t, avg) in &rows {
        w.write_record([t.to_string(), avg.to_string()])?;
    }
    w.flush()?;
    let final_avg = rows.last().map(|r| r.1);
    write_json(
        out,
        "lln.json",
        cfg,
        "lln",
        serde_json::json!({ "n": p.n, "average": final_avg }),
    )
}
