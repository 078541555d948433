//! Shared fixtures for the benchmark suite.

use std::sync::Arc;

use mcre_core::environment::{EnvironmentKind, EnvironmentSpec, IidDistribution};
use mcre_core::goodtimes::{GoodTimeConstants, GoodTimeIndex};
use mcre_core::models::{const_coef, make_tarx, EtaConvention, NoiseSpec};
use mcre_core::{EnvPoint, ModelBundle};

pub fn iid_normal_spec() -> EnvironmentSpec {
    EnvironmentSpec {
        kind: EnvironmentKind::Iid {
            dist: IidDistribution::Normal { mean: 0.0, sd: 1.0 },
        },
        dim: 1,
        ergodic: true,
        mixing: true,
    }
}

pub fn ar1_spec(coeff: f64) -> EnvironmentSpec {
    EnvironmentSpec {
        kind: EnvironmentKind::GaussianAr1 {
            coeff,
            innovation_sd: (1.0 - coeff * coeff).sqrt(),
            mean: 0.0,
        },
        dim: 1,
        ergodic: true,
        mixing: true,
    }
}

pub fn tarx_bundle() -> ModelBundle {
    make_tarx(
        const_coef(0.5),
        const_coef(0.0),
        const_coef(0.5),
        const_coef(0.0),
        const_coef(0.0),
        NoiseSpec::gaussian(1.0),
        EtaConvention::Tight,
    )
    .unwrap()
}

pub fn varying_tarx_bundle() -> ModelBundle {
    let a: mcre_core::models::CoefFn = Arc::new(|x: &EnvPoint| 0.7 * (-0.3 * x.x0().abs()).exp());
    make_tarx(
        a.clone(),
        const_coef(0.0),
        a,
        const_coef(0.0),
        const_coef(0.0),
        NoiseSpec::gaussian(0.95),
        EtaConvention::Tight,
    )
    .unwrap()
}

/// Every second index good over [-n, 0] with spacing 2.
pub fn all_good_gti(n: i64) -> GoodTimeIndex {
    GoodTimeIndex {
        constants: GoodTimeConstants { c1: 2, c2: 3.0 },
        tau: (-n..=0).step_by(2).collect(),
        horizon: (-n, 0),
        raw_count: (n + 1) as usize,
    }
}
