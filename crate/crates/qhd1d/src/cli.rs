//! Subcommand front end: configuration parsing, dispatch, report emission
//! and exit-code mapping. Exit codes: 0 success, 2 validation error,
//! 3 numerical failure (diverged iteration or density collapse), 4 a failed
//! verification criterion under `selftest`, 1 i/o trouble.

use crate::analysis::{check_conditions, stability_sweep};
use crate::config::RunConfig;
use crate::error::{QhdError, Result};
use crate::grid::{Field, Grid};
use crate::model::residual_full;
use crate::report::{
    fmt_float, fmt_opt, write_csv, write_json, write_steady_csv, write_trajectory_csv,
};
use crate::steady::{steady_bound_ratio, SteadyState, SteadySystem};
use crate::transient::{
    fit_decay_rate, sigma_study, uniqueness_probe, PerturbationState, TransientSystem,
};
use std::path::{Path, PathBuf};

const USAGE: &str = "usage: qhd1d <steady|evolve|check|sweep|sigma-study|unique-probe|selftest> [--config FILE] [--out DIR]";

/// Entry point shared by the binary and the test harness.
pub fn run(args: &[String]) -> i32 {
    match dispatch(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: code={} msg=\"{}\"", e.code(), e);
            e.exit_code()
        }
    }
}

fn dispatch(args: &[String]) -> Result<i32> {
    let mut sub = None;
    let mut config_path = None;
    let mut out_override = None;
    let mut it = args.iter();
    while let Some(a) = it.next() {
        match a.as_str() {
            "--config" => {
                config_path = Some(PathBuf::from(it.next().ok_or_else(|| {
                    QhdError::Config("--config needs a path".into())
                })?));
            }
            "--out" => {
                out_override = Some(it.next().ok_or_else(|| {
                    QhdError::Config("--out needs a directory".into())
                })?.clone());
            }
            s if sub.is_none() && !s.starts_with('-') => sub = Some(s.to_string()),
            other => {
                return Err(QhdError::Config(format!(
                    "unexpected argument `{other}`; {USAGE}"
                )))
            }
        }
    }
    let sub = sub.ok_or_else(|| QhdError::Config(USAGE.into()))?;

    let cfg = match &config_path {
        Some(p) => RunConfig::parse_file(p)?,
        None => {
            if sub != "selftest" {
                return Err(QhdError::Config(format!(
                    "`{sub}` needs --config FILE; {USAGE}"
                )));
            }
            RunConfig::parse_str("")?
        }
    };
    // precedence: env override, then --out, then the config block
    let outdir = std::env::var("QHD1D_OUT")
        .ok()
        .or(out_override)
        .unwrap_or_else(|| cfg.output.dir.clone());
    let outdir = PathBuf::from(outdir);
    std::fs::create_dir_all(&outdir)?;

    match sub.as_str() {
        "check" => cmd_check(&cfg, &outdir),
        "steady" => cmd_steady(&cfg, &outdir),
        "evolve" => cmd_evolve(&cfg, &outdir),
        "sigma-study" => cmd_sigma_study(&cfg, &outdir),
        "unique-probe" => cmd_unique_probe(&cfg, &outdir),
        "sweep" => cmd_sweep(&cfg, &outdir),
        "selftest" => cmd_selftest(&outdir),
        other => Err(QhdError::Config(format!(
            "unknown subcommand `{other}`; {USAGE}"
        ))),
    }
}

fn solve_steady(cfg: &RunConfig) -> Result<(std::sync::Arc<Grid>, crate::model::DopingProfile, crate::model::ModelParams, SteadyState)> {
    let grid = Grid::new(cfg.grid_n)?;
    let profile = cfg.build_profile(&grid)?;
    let params = cfg.resolved_params();
    let sys = SteadySystem::new(&grid, &profile, &params);
    let state = match sys.picard_solve(cfg.steady.tol, cfg.steady.max_iter) {
        Ok(s) => s,
        Err(QhdError::DivergedIteration { .. }) | Err(QhdError::MaxIterExceeded { .. }) => {
            sys.continuation_solve(cfg.steady.theta_step, cfg.steady.tol)?
        }
        Err(e) => return Err(e),
    };
    Ok((grid, profile, params, state))
}

fn cmd_check(cfg: &RunConfig, outdir: &Path) -> Result<i32> {
    cfg.require(&["model", "profile", "grid"])?;
    let grid = Grid::new(cfg.grid_n)?;
    let profile = cfg.build_profile(&grid)?;
    let params = cfg.resolved_params();
    let report = check_conditions(&profile, &params, &grid)?;
    write_json(&outdir.join("check.json"), &report)?;
    println!(
        "a1_ok={} min_rho={} a2_margin={} (satisfiable: {}) cond5_margin={} delta0={} j_b={}",
        report.a1_ok,
        fmt_float(report.min_rho),
        fmt_float(report.a2_margin),
        report.a2_satisfiable,
        fmt_float(report.cond5_margin),
        fmt_float(report.delta0),
        fmt_float(report.j_b),
    );
    Ok(0)
}

fn cmd_steady(cfg: &RunConfig, outdir: &Path) -> Result<i32> {
    cfg.require(&["model", "profile", "grid", "steady"])?;
    let (grid, profile, params, state) = solve_steady(cfg)?;
    if cfg.output.csv {
        write_steady_csv(&outdir.join("steady.csv"), &state)?;
    }
    let delta0 = profile.delta0(&grid)?;
    let bound_ratio = if delta0 > 0.0 {
        Some(steady_bound_ratio(&state, &profile)?)
    } else {
        None
    };
    let (rn, rj, re, rv) = residual_full(&state.full_state(), &profile, &params)?;
    let report = check_conditions(&profile, &params, &grid)?;
    if !cfg.output.json {
        println!(
            "steady: iterations={} bound_ratio={} relation={}",
            state.diagnostics.iterations,
            fmt_opt(bound_ratio),
            fmt_float(state.diagnostics.relation_infnorm)
        );
        return Ok(0);
    }
    write_json(
        &outdir.join("steady.json"),
        &serde_json::json!({
            "diagnostics": state.diagnostics,
            "bound_ratio": bound_ratio,
            "delta0": delta0,
            "conditions": report,
            "residual_max": {
                "continuity": rn.max_abs(),
                "momentum": rj.max_abs(),
                "energy": re.max_abs(),
                "poisson": rv.max_abs(),
            },
        }),
    )?;
    println!(
        "steady: iterations={} bound_ratio={} relation={}",
        state.diagnostics.iterations,
        fmt_opt(bound_ratio),
        fmt_float(state.diagnostics.relation_infnorm)
    );
    Ok(0)
}

fn cmd_evolve(cfg: &RunConfig, outdir: &Path) -> Result<i32> {
    cfg.require(&["model", "profile", "grid", "steady", "transient"])?;
    let (grid, _, params, steady) = solve_steady(cfg)?;
    let t = &cfg.transient;
    let init = PerturbationState::smooth_seed(&grid, &params, t.init_composite, t.seed)?;
    let sys = TransientSystem::new(&steady.full_state(), &params, t.dt)?;
    let (traj, _) = sys.evolve(init, t.t_end, t.sample_every)?;
    if cfg.output.csv {
        write_trajectory_csv(&outdir.join("trajectory.csv"), &traj)?;
    }
    let fit = fit_decay_rate(&traj.times(), &traj.composites(), t.tail_fraction).ok();
    write_json(
        &outdir.join("trajectory.json"),
        &serde_json::json!({
            "sigma1_hat": fit.map(|f| f.0),
            "r_squared": fit.map(|f| f.1),
            "truncated": traj.truncated,
            "delta_tstar": traj.delta_tstar(),
            "weights": traj.weights,
        }),
    )?;
    if traj.truncated {
        eprintln!("error: code=DensityCollapse msg=\"density collapsed; partial trajectory written\"");
        return Ok(3);
    }
    match fit {
        Some((rate, r2)) => println!(
            "evolve: samples={} sigma1_hat={} r2={}",
            traj.samples.len(),
            fmt_float(rate),
            fmt_float(r2)
        ),
        None => println!("evolve: samples={} (no decay fit)", traj.samples.len()),
    }
    Ok(0)
}

fn cmd_sigma_study(cfg: &RunConfig, outdir: &Path) -> Result<i32> {
    cfg.require(&["model", "profile", "grid", "steady", "transient"])?;
    let (grid, _, params, steady) = solve_steady(cfg)?;
    let t = &cfg.transient;
    let init = PerturbationState::smooth_seed(&grid, &params, t.init_composite, t.seed)?;
    let study = sigma_study(
        &init,
        &steady.full_state(),
        &params,
        &t.sigmas,
        t.t_end,
        t.dt,
        t.sample_every,
    )?;
    let mut rows = Vec::new();
    for (i, gap) in study.consecutive_gaps.iter().enumerate() {
        rows.push(vec![
            fmt_float(study.sigmas[i]),
            fmt_float(study.sigmas[i + 1]),
            fmt_float(*gap),
        ]);
    }
    rows.push(vec![
        fmt_float(*study.sigmas.last().unwrap()),
        fmt_float(0.0),
        fmt_float(study.zero_gap),
    ]);
    write_csv(
        &outdir.join("sigma_study.csv"),
        &["sigma_hi", "sigma_lo", "sup_distance"],
        &rows,
    )?;
    write_json(&outdir.join("sigma_study.json"), &study)?;
    println!(
        "sigma-study: gaps={:?} zero_gap={}",
        study
            .consecutive_gaps
            .iter()
            .map(|v| fmt_float(*v))
            .collect::<Vec<_>>(),
        fmt_float(study.zero_gap)
    );
    Ok(0)
}

fn cmd_unique_probe(cfg: &RunConfig, outdir: &Path) -> Result<i32> {
    cfg.require(&["model", "profile", "grid", "steady", "transient"])?;
    let (grid, _, params, steady) = solve_steady(cfg)?;
    let t = &cfg.transient;
    let a = PerturbationState::smooth_seed(&grid, &params, t.init_composite, t.seed)?;
    let bump = Field::from_fn(&grid, |x| t.separation * (std::f64::consts::PI * x).sin());
    let b = PerturbationState {
        nt: a.nt.binary(&bump, |x, y| x + y),
        jt: a.jt.clone(),
        et: a.et.clone(),
        vt: a.vt.clone(),
        t: 0.0,
    };
    let full = steady.full_state();
    let trace = uniqueness_probe(&a, &b, &full, &params, t.t_end, t.dt, t.sample_every)?;
    let rows: Vec<Vec<String>> = trace
        .times
        .iter()
        .zip(trace.separation.iter())
        .map(|(&tt, &s)| vec![fmt_float(tt), fmt_float(s)])
        .collect();
    write_csv(&outdir.join("separation.csv"), &["t", "separation"], &rows)?;
    let growth = trace.fitted_growth().ok();
    let sep0 = trace.separation.first().copied().unwrap_or(0.0);
    let sep_end = trace.separation.last().copied().unwrap_or(0.0);
    write_json(
        &outdir.join("unique_probe.json"),
        &serde_json::json!({
            "fitted_growth": growth,
            "growth_cap": t.growth_cap,
            "within_cap": growth.map(|g| g < t.growth_cap),
            "initial_separation": sep0,
            "final_separation": sep_end,
            "decayed": sep_end < sep0,
        }),
    )?;
    println!(
        "unique-probe: growth={} cap={} decayed={}",
        fmt_opt(growth),
        fmt_float(t.growth_cap),
        sep_end < sep0
    );
    Ok(0)
}

fn cmd_sweep(cfg: &RunConfig, outdir: &Path) -> Result<i32> {
    cfg.require(&["model", "profile", "grid", "steady", "transient", "sweep"])?;
    let out = stability_sweep(&cfg.sweep.axes, &cfg.sweep_config());
    let rows: Vec<Vec<String>> = out
        .rows
        .iter()
        .map(|r| {
            vec![
                r.id.to_string(),
                fmt_float(r.nu),
                fmt_float(r.tau),
                fmt_float(r.mu),
                fmt_float(r.lambda),
                fmt_float(r.delta0_target),
                fmt_float(r.j_b),
                fmt_opt(r.a2_margin),
                fmt_opt(r.cond5_margin),
                fmt_opt(r.delta0),
                fmt_opt(r.bound_ratio),
                fmt_opt(r.sigma1_hat),
                fmt_opt(r.r2),
                r.status.clone(),
            ]
        })
        .collect();
    write_csv(
        &outdir.join("sweep.csv"),
        &[
            "id",
            "nu",
            "tau",
            "mu",
            "lambda",
            "delta0_target",
            "j_b",
            "a2_margin",
            "cond5_margin",
            "delta0",
            "bound_ratio",
            "sigma1_hat",
            "r2",
            "status",
        ],
        &rows,
    )?;
    write_json(&outdir.join("sweep.json"), &out)?;
    println!(
        "sweep: points={} counterexamples={:?}",
        out.rows.len(),
        out.counterexamples
    );
    Ok(0)
}

fn cmd_selftest(outdir: &Path) -> Result<i32> {
    let results = crate::selftest::run_all(outdir)?;
    let mut failed = false;
    for r in &results {
        println!("{}", r.line());
        failed |= !r.pass;
    }
    if failed {
        eprintln!("error: code=AcceptanceViolation msg=\"one or more criteria failed\"");
        Ok(4)
    } else {
        Ok(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_cfg(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("run.cfg");
        std::fs::write(&p, body).unwrap();
        p
    }

    const SMALL: &str = "
[model]
nu = 0.2
epsilon = 0.1
tau = 0.5
mu = 1.0
lambda = 0.5
j_b = 0.0
[profile]
kind = sine
rho_b = 1.0
delta0 = 0.02
k = 1
[grid]
n = 101
[steady]
tol = 1e-10
[transient]
dt = 1e-3
t_end = 0.5
sample_every = 20
";

    fn run_in(dir: &Path, args: &[&str]) -> i32 {
        let mut full: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        full.push("--out".into());
        full.push(dir.join("out").to_string_lossy().into_owned());
        run(&full)
    }

    #[test]
    fn validation_errors_exit_2() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_cfg(dir.path(), "[grid]\nn = 3\n");
        assert_eq!(
            run_in(dir.path(), &["check", "--config", cfg.to_str().unwrap()]),
            2
        );
        let cfg = write_cfg(dir.path(), "[model]\nnu = 0.1\n");
        // missing sections for the chosen subcommand
        assert_eq!(
            run_in(dir.path(), &["steady", "--config", cfg.to_str().unwrap()]),
            2
        );
        assert_eq!(run(&["bogus".to_string()]), 2);
    }

    #[test]
    fn check_and_steady_produce_deterministic_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_cfg(dir.path(), SMALL);
        let code = run_in(dir.path(), &["check", "--config", cfg.to_str().unwrap()]);
        assert_eq!(code, 0);
        let code = run_in(dir.path(), &["steady", "--config", cfg.to_str().unwrap()]);
        assert_eq!(code, 0);
        let first = std::fs::read(dir.path().join("out/steady.csv")).unwrap();
        let code = run_in(dir.path(), &["steady", "--config", cfg.to_str().unwrap()]);
        assert_eq!(code, 0);
        let second = std::fs::read(dir.path().join("out/steady.csv")).unwrap();
        assert_eq!(first, second);
        let json: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("out/steady.json")).unwrap(),
        )
        .unwrap();
        assert!(json["bound_ratio"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn evolve_collapse_exits_3_with_truncated_artifact() {
        let dir = tempfile::tempdir().unwrap();
        // an absurdly large initial perturbation collapses the density
        let body = format!("{SMALL}\ninit_composite = 1e10\nseed = 10\n");
        let cfg = write_cfg(dir.path(), &body);
        let code = run_in(dir.path(), &["evolve", "--config", cfg.to_str().unwrap()]);
        assert_eq!(code, 3);
        let json: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("out/trajectory.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(json["truncated"], serde_json::Value::Bool(true));
        assert!(dir.path().join("out/trajectory.csv").exists());
    }

    #[test]
    fn evolve_stable_run_exits_0() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_cfg(dir.path(), SMALL);
        let code = run_in(dir.path(), &["evolve", "--config", cfg.to_str().unwrap()]);
        assert_eq!(code, 0);
        let text = std::fs::read_to_string(dir.path().join("out/trajectory.csv")).unwrap();
        let k = text.lines().count();
        assert!(k >= 10, "{k} lines");
        assert!(text.starts_with("t,H3_n,"));
    }
}
