//! Compute the steady state over a sine doping profile with the contraction
//! map and print the construction diagnostics.
//!
//! ```sh
//! cargo run --release --example steady_state
//! ```

use qhd1d::grid::Grid;
use qhd1d::model::{DopingProfile, ModelParams};
use qhd1d::steady::{steady_bound_ratio, SteadySystem};

fn main() -> qhd1d::Result<()> {
    let grid = Grid::new(201)?;
    let profile = DopingProfile::sine(1.0, 1.0, 1)?.with_delta0(0.05, &grid)?;
    let params = ModelParams {
        nu: 0.2,
        epsilon: 0.1,
        tau: 0.5,
        mu: 1.0,
        lambda: 0.5,
        j_b: 1e-3,
        v_b: 0.0,
        sigma: 0.0,
    };

    let system = SteadySystem::new(&grid, &profile, &params);
    let state = system.picard_solve(1e-10, 200)?;
    let d = &state.diagnostics;

    println!("delta0                 = {:.6e}", profile.delta0(&grid)?);
    println!("iterations             = {}", d.iterations);
    println!("final update norm      = {:.3e}", d.final_update_norm);
    println!("contraction factors    = {:?}", d.contraction_factors);
    println!("|q - nu p_x|_inf       = {:.3e}", d.relation_infnorm);
    println!(
        "V_x at the walls       = ({:.3e}, {:.3e})   [reported, not imposed]",
        d.neumann_residual.0, d.neumann_residual.1
    );
    println!(
        "right current offset   = {:.3e}   [the unpinnable boundary datum]",
        d.current_mismatch_right
    );
    println!("bound ratio |w|^2/d0^2 = {:.6}", steady_bound_ratio(&state, &profile)?);

    println!("\n   x        n*           J*           E*           V*");
    for i in (0..grid.len()).step_by(25) {
        println!(
            "{:5.2}  {:+.6e}  {:+.6e}  {:+.6e}  {:+.6e}",
            grid.x(i),
            state.n_star.values()[i],
            state.j_star.values()[i],
            state.e_star.values()[i],
            state.vstar.values()[i],
        );
    }
    Ok(())
}
