//! Sweep the Debye length against the doping gradient size and tabulate the
//! condition margins next to the fitted decay rates.
//!
//! ```sh
//! cargo run --release --example parameter_sweep
//! ```

use qhd1d::analysis::{stability_sweep, SweepAxes, SweepConfig};
use qhd1d::model::ModelParams;

fn main() {
    let cfg = SweepConfig {
        base: ModelParams {
            nu: 0.2,
            epsilon: 0.1,
            tau: 0.5,
            mu: 1.0,
            lambda: 0.5,
            j_b: 1e-4,
            v_b: 0.0,
            sigma: 0.0,
        },
        grid_n: 101,
        dt: 5e-4,
        t_end: 1.5,
        sample_every: 40,
        workers: 4,
        ..SweepConfig::default()
    };
    let axes = SweepAxes {
        lambda: vec![0.3, 0.5, 1.0],
        delta0: vec![0.01, 0.03, 0.05],
        ..SweepAxes::default()
    };

    let out = stability_sweep(&axes, &cfg);
    println!(" id  lambda  delta0   a2-margin  cond5-margin  bound-ratio   rate      r2      status");
    for r in &out.rows {
        println!(
            "{:3}  {:6.2}  {:6.3}  {:>10}  {:>12}  {:>11}  {:>8}  {:>7}  {}",
            r.id,
            r.lambda,
            r.delta0_target,
            r.a2_margin.map(|v| format!("{v:.3}")).unwrap_or_default(),
            r.cond5_margin.map(|v| format!("{v:.3}")).unwrap_or_default(),
            r.bound_ratio.map(|v| format!("{v:.4}")).unwrap_or_default(),
            r.sigma1_hat.map(|v| format!("{v:.3}")).unwrap_or_default(),
            r.r2.map(|v| format!("{v:.4}")).unwrap_or_default(),
            r.status,
        );
    }
    println!(
        "\nsufficiency counterexamples (conditions hold, data small, no decay): {:?}",
        out.counterexamples
    );
}
