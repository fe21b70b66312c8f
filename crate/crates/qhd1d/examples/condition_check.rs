//! Evaluate the closed-form sufficient conditions over a small grid of
//! Debye lengths and print the margins.
//!
//! ```sh
//! cargo run --release --example condition_check
//! ```

use qhd1d::analysis::check_conditions;
use qhd1d::grid::Grid;
use qhd1d::model::{DopingProfile, ModelParams};

fn main() -> qhd1d::Result<()> {
    let grid = Grid::new(201)?;
    let profile = DopingProfile::sine(1.0, 1.0, 1)?.with_delta0(0.03, &grid)?;

    println!("lambda   existence-margin   satisfiable   decay-margin");
    for lambda in [0.1, 0.3, 0.5, 1.0, 2.0, 4.0] {
        let params = ModelParams {
            nu: 0.2,
            epsilon: 0.1,
            tau: 0.5,
            mu: 1.0,
            lambda,
            j_b: 1e-4,
            v_b: 0.0,
            sigma: 0.0,
        };
        let r = check_conditions(&profile, &params, &grid)?;
        println!(
            "{lambda:6.2}   {:16.4}   {:11}   {:12.4}",
            r.a2_margin, r.a2_satisfiable, r.cond5_margin
        );
    }
    Ok(())
}
