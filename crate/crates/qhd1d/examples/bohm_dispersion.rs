//! The quantum dispersion term two ways: the expanded third-order form used
//! throughout the solvers against a direct discretization of the factored
//! self-potential gradient, converging at second order.
//!
//! ```sh
//! cargo run --release --example bohm_dispersion
//! ```

use qhd1d::grid::{diff, Field, Grid};
use qhd1d::model::{bohm_term, ModelParams};

fn main() -> qhd1d::Result<()> {
    let params = ModelParams {
        epsilon: 0.1,
        ..ModelParams::default()
    };
    let e2 = params.epsilon * params.epsilon;
    println!("   n      max |expanded - factored|");
    let mut prev: Option<f64> = None;
    for n in [101usize, 201, 401, 801] {
        let grid = Grid::new(n)?;
        let density = Field::from_fn(&grid, |x| {
            1.0 + 0.5 * (2.0 * std::f64::consts::PI * x).sin()
        });
        let expanded = bohm_term(&density, &params)?;
        let sq = density.map(f64::sqrt);
        let sxx = diff(&sq, 2)?;
        let ratio = sq.binary(&sxx, |s, d| d / s);
        let dratio = diff(&ratio, 1)?;
        let factored = density.binary(&dratio, |nv, dr| e2 / 9.0 * nv * dr);
        let d = expanded.axpy(-1.0, &factored);
        let err = d.values()[4..n - 4]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        match prev {
            Some(p) => println!("{n:5}   {err:.6e}   (order {:.2})", (p / err).log2()),
            None => println!("{n:5}   {err:.6e}"),
        }
        prev = Some(err);
    }
    Ok(())
}
