//! Config file parsing and model construction.
//!
//! The config is TOML with three sections: `environment`, `model`, and a
//! subcommand-specific `experiment` table, plus a top-level `seed`.
//! Unknown keys are rejected everywhere. Coefficient functions are given
//! as arithmetic expressions over the environment coordinates `x0, x1, ...`.

use std::sync::Arc;

use mcre_core::environment::EnvironmentSpec;
use mcre_core::expr;
use mcre_core::models::{
    make_farx, make_finite, make_rca, make_tarx, CoefFn, EtaConvention, FarEnvelopes, LagCoefFn,
    NoiseSpec,
};
use mcre_core::{EnvPoint, ModelBundle};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: u64,
    pub environment: EnvironmentSpec,
    #[serde(default)]
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub experiment: toml::Table,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSection {
    Tarx {
        a1: String,
        b1: String,
        a2: String,
        b2: String,
        threshold: String,
        noise: NoiseSpec,
    },
    Rca {
        a: String,
        noise: NoiseSpec,
    },
    Farx {
        /// One expression per lag; evaluated on the environment only.
        coeffs: Vec<String>,
        noise: NoiseSpec,
    },
    Finite {
        transition_by_env_label: Vec<Vec<Vec<f64>>>,
    },
}

pub fn parse_config(text: &str) -> Result<FileConfig, CliError> {
    let raw: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    reject_unknown_keys(&raw)?;
    let cfg: FileConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.environment
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

/// Strict key validation for the sections whose serde representation uses
/// `flatten` (where `deny_unknown_fields` cannot apply). Typed experiment
/// structs reject their own unknown keys.
fn reject_unknown_keys(raw: &toml::Table) -> Result<(), CliError> {
    let check = |table: &toml::Table, allowed: &[&str], path: &str| -> Result<(), CliError> {
        for key in table.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(CliError::Config(format!(
                    "unknown key `{key}` in [{path}] (expected one of: {})",
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    };
    if let Some(toml::Value::Table(env)) = raw.get("environment") {
        let kind = env.get("kind").and_then(|v| v.as_str()).unwrap_or("");
        let common = ["kind", "dim", "ergodic", "mixing"];
        let specific: &[&str] = match kind {
            "iid" => &["dist", "mean", "sd", "lo", "hi"],
            "gaussian-ar1" => &["coeff", "innovation_sd", "mean"],
            "finite-markov" => &["transition", "initial"],
            "deterministic-cycle" => &["values"],
            _ => &[],
        };
        let allowed: Vec<&str> = common.iter().chain(specific).copied().collect();
        check(env, &allowed, "environment")?;
    }
    if let Some(toml::Value::Table(model)) = raw.get("model") {
        if let Some(toml::Value::Table(noise)) = model.get("noise") {
            check(noise, &["family", "scale", "df"], "model.noise")?;
        }
    }
    Ok(())
}

fn coef(src: &str, env_dim: usize) -> Result<CoefFn, CliError> {
    let e = expr::parse(src).map_err(|err| CliError::Config(err.to_string()))?;
    if let Some(v) = e.max_var() {
        if v >= env_dim {
            return Err(CliError::Config(format!(
                "expression {src:?} references x{v} but the environment has dim {env_dim}"
            )));
        }
    }
    Ok(e.into_env_fn())
}

pub fn build_model(section: &ModelSection, env_dim: usize) -> Result<ModelBundle, CliError> {
    let bundle = match section {
        ModelSection::Tarx {
            a1,
            b1,
            a2,
            b2,
            threshold,
            noise,
        } => make_tarx(
            coef(a1, env_dim)?,
            coef(b1, env_dim)?,
            coef(a2, env_dim)?,
            coef(b2, env_dim)?,
            coef(threshold, env_dim)?,
            noise.clone(),
            EtaConvention::Tight,
        )
        .map(|b| b.with_env_dim(env_dim)),
        ModelSection::Rca { a, noise } => {
            make_rca(coef(a, env_dim)?, noise.clone()).map(|b| b.with_env_dim(env_dim))
        }
        ModelSection::Farx { coeffs, noise } => {
            let fns: Vec<CoefFn> = coeffs
                .iter()
                .map(|c| coef(c, env_dim))
                .collect::<Result<_, _>>()?;
            let lag_fns: Vec<LagCoefFn> = fns
                .iter()
                .cloned()
                .map(|f| -> LagCoefFn { Arc::new(move |x: &EnvPoint, _: &[f64]| f(x)) })
                .collect();
            let envelopes: Vec<CoefFn> = fns
                .into_iter()
                .map(|f| -> CoefFn { Arc::new(move |x: &EnvPoint| f(x).abs()) })
                .collect();
            make_farx(lag_fns, noise.clone(), FarEnvelopes::Supplied(envelopes))
                .map(|b| b.with_env_dim(env_dim))
        }
        ModelSection::Finite {
            transition_by_env_label,
        } => {
            let mats = transition_by_env_label
                .iter()
                .map(|rows| {
                    let n = rows.len();
                    nalgebra::DMatrix::from_fn(n, n, |i, j| rows[i][j])
                })
                .collect();
            make_finite(mats)
        }
    };
    bundle.map_err(|e| CliError::Config(e.to_string()))
}

/// Re-parse the experiment table into a typed, unknown-key-rejecting struct.
pub fn experiment<'de, T: Deserialize<'de>>(table: &toml::Table) -> Result<T, CliError> {
    T::deserialize(table.clone()).map_err(|e| CliError::Config(format!("[experiment] {e}")))
}
