//! Integrate a small perturbation of the steady state and fit the
//! exponential decay rate of the composite stability norm.
//!
//! ```sh
//! cargo run --release --example transient_decay
//! ```

use qhd1d::analysis::check_conditions;
use qhd1d::grid::Grid;
use qhd1d::model::{DopingProfile, ModelParams};
use qhd1d::steady::SteadySystem;
use qhd1d::transient::{fit_decay_rate, PerturbationState, TransientSystem};

fn main() -> qhd1d::Result<()> {
    let grid = Grid::new(201)?;
    let profile = DopingProfile::sine(1.0, 1.0, 1)?.with_delta0(0.02, &grid)?;
    let params = ModelParams {
        nu: 0.2,
        epsilon: 0.1,
        tau: 0.5,
        mu: 1.0,
        lambda: 0.5,
        j_b: 1e-4,
        v_b: 0.0,
        sigma: 0.0,
    };

    let report = check_conditions(&profile, &params, &grid)?;
    println!(
        "existence margin {:.3} (needs > 1), decay margin {:.3} (needs > 0)",
        report.a2_margin, report.cond5_margin
    );

    let steady = SteadySystem::new(&grid, &profile, &params)
        .picard_solve(1e-10, 200)?
        .full_state();
    let init = PerturbationState::smooth_seed(&grid, &params, 1e-6, 42)?;
    let system = TransientSystem::new(&steady, &params, 1e-4)?;
    let (trajectory, _) = system.evolve(init, 3.0, 200)?;

    println!("\n    t       composite     upsilon2     running max");
    for s in trajectory.samples.iter().step_by(15) {
        println!(
            "{:7.3}  {:.6e}  {:.6e}  {:.6e}",
            s.t, s.composite, s.upsilon2, s.delta_running
        );
    }

    let (rate, r2) = fit_decay_rate(&trajectory.times(), &trajectory.composites(), 0.5)?;
    println!("\nfitted decay rate = {rate:.4}  (r^2 = {r2:.8})");
    println!("truncated = {}", trajectory.truncated);
    Ok(())
}
