use std::sync::Arc;
use mcre_core::environment::*;
use mcre_core::goodtimes::*;
use mcre_core::models::*;
use mcre_core::EnvPoint;

fn main() {
    let coeff = 0.7f64;
    let spec = EnvironmentSpec {
        kind: EnvironmentKind::GaussianAr1 { coeff, innovation_sd: (1.0 - coeff*coeff).sqrt(), mean: 0.0 },
        dim: 1, ergodic: true, mixing: true,
    };
    let a_fn: CoefFn = Arc::new(|x: &EnvPoint| 0.7 * (-0.3 * x.x0().abs()).exp());
    let bundle = make_tarx(a_fn.clone(), const_coef(0.0), a_fn, const_coef(0.0), const_coef(0.0),
        NoiseSpec::gaussian(0.95), EtaConvention::Tight).unwrap();
    let opts = GoodTimeOptions::default();
    for seed in 2000..2100u64 {
        let env = EnvironmentRealization::realize(&spec, seed, -(100_000i64) - opts.horizon as i64, 0).unwrap();
        let lam = bundle.drift.lambda.clone();
        let b = bundle.drift.b.clone();
        let c = match find_constants(&env, &*lam, &*b, &bundle.minorization, &opts) {
            Ok(c) if c.c1 == 2 => c,
            _ => continue,
        };
        let d1 = good_time_density(&env, c, 50_000, &*lam, &*b, &bundle.minorization, &opts);
        let d2 = good_time_density(&env, c, 100_000, &*lam, &*b, &bundle.minorization, &opts);
        if let (Ok(d1), Ok(d2)) = (d1, d2) {
            if d1 > 0.05 && (d1 - d2).abs() <= 0.05 * d2 {
                println!("seed {seed}: c2 = {:.3e}, density {d1:.4} / {d2:.4}, rel {:.3}", c.c2, (d1-d2).abs()/d2);
            }
        }
    }
}
