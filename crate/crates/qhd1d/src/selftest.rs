//! The verification suite behind the `selftest` subcommand: every checkable
//! claim of the laboratory is exercised at a pinned tolerance, one criterion
//! at a time, with deterministic artifacts written to the output directory.
//! The `acceptance` integration test drives exactly this suite and adds the
//! byte-determinism check on top.

use crate::analysis::check_conditions;
use crate::error::Result;
use crate::grid::{diff, sobolev_norm, solve_poisson, Field, Grid};
use crate::model::{
    bohm_term, coeffs_at, forcing_g, lin2_at, lin3_at, nonlinear_f, quantum_rhs_at,
    residual_full, steady_jets, steady_residual, DopingProfile, FullState, ModelParams, RhoJet,
};
use crate::report::{fmt_float, write_csv, write_json};
use crate::steady::{steady_bound_ratio, SteadySystem};
use crate::transient::{
    diffusion_decay_probe, fit_decay_rate, sigma_study, uniqueness_probe, PerturbationState,
    TransientSystem,
};
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, Clone, serde::Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {:<28} {} ({})",
            self.id,
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.detail
        )
    }
}

fn base_params() -> ModelParams {
    ModelParams {
        nu: 0.2,
        epsilon: 0.1,
        tau: 0.5,
        mu: 1.0,
        lambda: 0.5,
        j_b: 0.0,
        v_b: 0.0,
        sigma: 0.0,
    }
}

fn slope(errs: &[f64]) -> Vec<f64> {
    errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// Criterion 1: expanded vs factored Bohm term, slope 2 +- 0.3.
fn c1_bohm(outdir: &Path) -> Result<CriterionResult> {
    let pr = ModelParams {
        epsilon: 0.1,
        ..base_params()
    };
    let e2s = pr.epsilon * pr.epsilon;
    let mut errs = Vec::new();
    let mut rows = Vec::new();
    for n in [101usize, 201, 401] {
        let g = Grid::new(n)?;
        let nf = Field::from_fn(&g, |x| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * x).sin());
        let expanded = bohm_term(&nf, &pr)?;
        let sq = nf.map(f64::sqrt);
        let sxx = diff(&sq, 2)?;
        let ratio = Field::from_values(
            &g,
            (0..n).map(|i| sxx.values()[i] / sq.values()[i]).collect(),
        );
        let dratio = diff(&ratio, 1)?;
        let factored = Field::from_values(
            &g,
            (0..n)
                .map(|i| e2s / 9.0 * nf.values()[i] * dratio.values()[i])
                .collect(),
        );
        // measured away from the one-sided boundary windows, where the
        // composed factored-form stencils are first-order by construction
        let err = interior_max(&expanded.axpy(-1.0, &factored), 4);
        rows.push(vec![n.to_string(), fmt_float(err)]);
        errs.push(err);
    }
    write_csv(&outdir.join("bohm_convergence.csv"), &["n", "max_diff"], &rows)?;
    let slopes = slope(&errs);
    let pass = slopes.iter().all(|s| (s - 2.0).abs() <= 0.3);
    Ok(CriterionResult {
        id: 1,
        name: "bohm-identity-slope",
        pass,
        detail: format!("slopes {:.3?} target 2 +- 0.3", slopes),
    })
}

/// Criterion 2: f2, f3, g1, g2 identically zero at zero arguments.
fn c2_nullity(outdir: &Path) -> Result<CriterionResult> {
    let g = Grid::new(201)?;
    let profile = DopingProfile::sine(1.0, 1.0, 1)?.with_delta0(0.05, &g)?;
    let pr = ModelParams {
        j_b: 1e-3,
        ..base_params()
    };
    let z = Field::zeros(&g);
    let (f2, f3) = nonlinear_f(&z, &z, &z, &z, &profile, &pr)?;
    let steady = FullState {
        n: profile.field(&g, 0),
        j: Field::from_fn(&g, |_| pr.j_b),
        e: profile.field(&g, 0).scale(1.5),
        v: Field::from_fn(&g, |x| pr.v_b * x),
    };
    let (g1, g2) = forcing_g(&steady, (&z, &z, &z, &z), &pr, true)?;
    let worst = f2
        .max_abs()
        .max(f3.max_abs())
        .max(g1.max_abs())
        .max(g2.max_abs());
    write_json(
        &outdir.join("forcing_nullity.json"),
        &serde_json::json!({
            "f2_max": f2.max_abs(),
            "f3_max": f3.max_abs(),
            "g1_max": g1.max_abs(),
            "g2_max": g2.max_abs(),
        }),
    )?;
    Ok(CriterionResult {
        id: 2,
        name: "forcing-nullity",
        pass: worst <= 1e-14,
        detail: format!("max |forcing| at origin = {worst:.3e} <= 1e-14"),
    })
}

fn interior_max(f: &Field, skip: usize) -> f64 {
    let n = f.len();
    f.values()[skip..n - skip]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Momentum and energy residual rows evaluated with chain-rule-expanded
/// products of per-field derivatives (the composite-field route lives in
/// `residual_full` / `forcing_g`; this is its independent counterpart).
fn chain_residual_rows(state: &FullState, pr: &ModelParams) -> Result<(Field, Field)> {
    let g = state.grid();
    let n = g.len();
    let e2s = pr.epsilon * pr.epsilon;
    let nx = diff(&state.n, 1)?;
    let nxx = diff(&state.n, 2)?;
    let nxxx = diff(&state.n, 3)?;
    let jx = diff(&state.j, 1)?;
    let jxx = diff(&state.j, 2)?;
    let ex = diff(&state.e, 1)?;
    let exx = diff(&state.e, 2)?;
    let vx = diff(&state.v, 1)?;
    let mut rj = vec![0.0; n];
    let mut re = vec![0.0; n];
    for i in 0..n {
        let (nv, n1, n2, n3) = (
            state.n.values()[i],
            nx.values()[i],
            nxx.values()[i],
            nxxx.values()[i],
        );
        let (jv, j1, j2) = (state.j.values()[i], jx.values()[i], jxx.values()[i]);
        let (ev, e1, e2) = (state.e.values()[i], ex.values()[i], exx.values()[i]);
        let v1 = vx.values()[i];
        let bohm = e2s / 18.0 * n3 - e2s / 9.0 * n1 * n2 / nv
            + e2s / 18.0 * n1 * n1 * n1 / (nv * nv);
        rj[i] = -pr.nu * j2 + jv / pr.tau
            + (2.0 / 3.0) * (2.0 * jv * j1 / nv - jv * jv * n1 / (nv * nv))
            + (2.0 / 3.0) * e1
            - bohm
            - nv * v1
            + pr.mu * n1;
        let qflux = j1 * n2 / nv + jv * n3 / nv
            - jv * n2 * n1 / (nv * nv)
            - j1 * n1 * n1 / (nv * nv)
            - 2.0 * jv * n1 * n2 / (nv * nv)
            + 2.0 * jv * n1 * n1 * n1 / (nv * nv * nv);
        re[i] = -pr.nu * e2 + (2.0 / pr.tau) * (ev - 1.5 * nv)
            + pr.mu * j1
            + (5.0 / 3.0) * ((j1 * ev + jv * e1) / nv - jv * ev * n1 / (nv * nv))
            - (1.0 / 3.0) * (3.0 * jv * jv * j1 / (nv * nv) - 2.0 * jv * jv * jv * n1 / (nv * nv * nv))
            - e2s / 18.0 * qflux
            - jv * v1;
    }
    Ok((
        Field::from_values(g, rj),
        Field::from_values(g, re),
    ))
}

/// Criterion 3: decomposition oracles for (f2, f3) and (g1, g2) via an
/// independent composite-field discretization, slope-2 refinement.
fn c3_oracles(outdir: &Path) -> Result<CriterionResult> {
    let pr = ModelParams {
        j_b: 2e-3,
        ..base_params()
    };
    let pi = std::f64::consts::PI;
    let mut errs_f = Vec::new();
    let mut errs_g = Vec::new();
    let mut rows = Vec::new();
    for n in [101usize, 201, 401] {
        let g = Grid::new(n)?;
        let profile = DopingProfile::sine(1.0, 0.06, 1)?;
        // --- f-oracle: smooth (p, r, V) with the current slaved to nu p_x
        let pfun = |x: f64| 0.02 * (2.0 * pi * x).sin() + 0.01 * x * (1.0 - x);
        let pxfun = |x: f64| 0.04 * pi * (2.0 * pi * x).cos() + 0.01 * (1.0 - 2.0 * x);
        let p = Field::from_fn(&g, pfun);
        // slaved to the viscous relation q = nu n*_x, the manifold on which
        // the reformulation routes the quantum terms through the current
        let q = Field::from_fn(&g, |x| pr.nu * (pxfun(x) + profile.eval(x, 1)));
        let r = Field::from_fn(&g, |x| -0.015 * (pi * x).sin());
        let v = Field::from_fn(&g, |x| 0.01 * (pi * x).sin());
        let vx = diff(&v, 1)?;
        let (f2, f3) = nonlinear_f(&p, &q, &r, &vx, &profile, &pr)?;
        // composite-field residual route
        let rho0 = profile.field(&g, 0);
        let nst = p.binary(&rho0, |a, b| a + b);
        let jst = q.map(|x| x + pr.j_b);
        let est = r.binary(&rho0, |a, b| a + 1.5 * b);
        let full = FullState {
            n: nst.clone(),
            j: jst.clone(),
            e: est.clone(),
            v: v.clone(),
        };
        let (_, r_j, r_e, _) = residual_full(&full, &profile, &pr)?;
        let jets = steady_jets(&p, &q, &r, &vx)?;
        let mut df = vec![0.0; n];
        let mut df3 = vec![0.0; n];
        for i in 0..n {
            let rho = RhoJet::at(&profile, g.x(i));
            let c = coeffs_at(rho, &pr);
            let lin2 = lin2_at(&jets[i], &c, rho.r0, &pr);
            let lin3 = lin3_at(&jets[i], &c, rho.r0, &pr);
            let qf = quantum_rhs_at(&jets[i], rho.r0, &pr);
            let f2_oracle = lin2 - c.a2 - r_j.values()[i];
            let f3_oracle = lin3 - c.a3 - qf - r_e.values()[i];
            df[i] = f2.values()[i] - f2_oracle;
            df3[i] = f3.values()[i] - f3_oracle;
        }
        let err_f = interior_max(&Field::from_values(&g, df), 4)
            .max(interior_max(&Field::from_values(&g, df3), 4));
        errs_f.push(err_f);

        // --- g-oracle around a manufactured steady state
        let steady = FullState {
            n: Field::from_fn(&g, |x| 1.0 + 0.08 * (pi * x).sin().powi(2)),
            j: Field::from_fn(&g, |x| pr.j_b + 0.01 * (pi * x).sin()),
            e: Field::from_fn(&g, |x| 1.5 + 0.02 * (2.0 * pi * x).sin()),
            v: Field::from_fn(&g, |x| 0.05 * x * (1.0 - x)),
        };
        let nt = Field::from_fn(&g, |x| 0.01 * (pi * x).sin());
        let jt = Field::from_fn(&g, |x| 0.008 * (2.0 * pi * x).sin());
        let et = Field::from_fn(&g, |x| -0.012 * (pi * x).sin());
        let (vt, _) = solve_poisson(&nt, pr.lambda, 0.0, 0.0)?;
        let (g1, g2) = forcing_g(&steady, (&nt, &jt, &et, &vt), &pr, true)?;
        let pert_full = FullState {
            n: steady.n.binary(&nt, |a, b| a + b),
            j: steady.j.binary(&jt, |a, b| a + b),
            e: steady.e.binary(&et, |a, b| a + b),
            v: steady.v.binary(&vt, |a, b| a + b),
        };
        // chain-expanded momentum/energy residuals: a discretization route
        // independent of the composite-field grouping inside forcing_g
        let (rj_s, re_s) = chain_residual_rows(&steady, &pr)?;
        let (rj_p, re_p) = chain_residual_rows(&pert_full, &pr)?;
        // linear parts of the perturbation rows
        let ntx = diff(&nt, 1)?;
        let nt3 = diff(&nt, 3)?;
        let jtxx = diff(&jt, 2)?;
        let jtx = diff(&jt, 1)?;
        let etx = diff(&et, 1)?;
        let etxx = diff(&et, 2)?;
        let vtx = diff(&vt, 1)?;
        let e2s = pr.epsilon * pr.epsilon;
        let mut dg1 = vec![0.0; n];
        let mut dg2 = vec![0.0; n];
        for i in 0..n {
            let lin_j = -pr.nu * jtxx.values()[i] + jt.values()[i] / pr.tau
                - e2s / 18.0 * nt3.values()[i]
                + 2.0 / 3.0 * etx.values()[i]
                - steady.n.values()[i] * vtx.values()[i]
                + pr.mu * ntx.values()[i];
            let g1_oracle = lin_j - (rj_p.values()[i] - rj_s.values()[i]);
            dg1[i] = g1.values()[i] - g1_oracle;
            let lin_e = -pr.nu * etxx.values()[i] + 2.0 / pr.tau * et.values()[i]
                - 3.0 / pr.tau * nt.values()[i]
                + (pr.mu + 2.5) * jtx.values()[i];
            let g2_oracle = lin_e - (re_p.values()[i] - re_s.values()[i]);
            dg2[i] = g2.values()[i] - g2_oracle;
        }
        let err_g = interior_max(&Field::from_values(&g, dg1), 4)
            .max(interior_max(&Field::from_values(&g, dg2), 4));
        errs_g.push(err_g);
        rows.push(vec![n.to_string(), fmt_float(err_f), fmt_float(err_g)]);
    }
    write_csv(
        &outdir.join("oracle_slopes.csv"),
        &["n", "f_oracle_maxdiff", "g_oracle_maxdiff"],
        &rows,
    )?;
    let sf = slope(&errs_f);
    let sg = slope(&errs_g);
    let pass = sf.iter().chain(sg.iter()).all(|s| (s - 2.0).abs() <= 0.4);
    Ok(CriterionResult {
        id: 3,
        name: "residual-subtraction-oracles",
        pass,
        detail: format!("f-slopes {sf:.3?}, g-slopes {sg:.3?} target 2 +- 0.4"),
    })
}

/// Criterion 4: the trivial instance converges immediately to zero.
fn c4_trivial(outdir: &Path) -> Result<CriterionResult> {
    let g = Grid::new(201)?;
    let profile = DopingProfile::constant(1.0)?;
    let sys = SteadySystem::new(&g, &profile, &base_params());
    let s = sys.picard_solve(1e-10, 50)?;
    let size = (sobolev_norm(&s.p, 2)?.powi(2)
        + sobolev_norm(&s.q, 2)?.powi(2)
        + sobolev_norm(&s.r, 2)?.powi(2)
        + sobolev_norm(&s.vstar, 2)?.powi(2))
    .sqrt();
    write_json(
        &outdir.join("steady_trivial.json"),
        &serde_json::json!({
            "iterations": s.diagnostics.iterations,
            "state_norm": size,
        }),
    )?;
    Ok(CriterionResult {
        id: 4,
        name: "trivial-steady-state",
        pass: s.diagnostics.iterations <= 2 && size <= 1e-12,
        detail: format!(
            "iterations {} <= 2, |w| = {size:.3e} <= 1e-12",
            s.diagnostics.iterations
        ),
    })
}

/// Dense LU with partial pivoting; the Newton oracle's own solver, kept
/// separate from the production banded elimination.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[piv][col] == 0.0 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let m = a[row][col] / a[col][col];
            if m != 0.0 {
                for k in col..n {
                    a[row][k] -= m * a[col][k];
                }
                b[row] -= m * b[col];
            }
        }
    }
    for col in (0..n).rev() {
        b[col] /= a[col][col];
        let x = b[col];
        for row in 0..col {
            b[row] -= a[row][col] * x;
        }
    }
    Some(b)
}

/// Nonlinear residual of the canonical steady problem in the solver's row
/// layout, for the Newton cross-check.
fn newton_residual(
    w: &[f64],
    grid: &Arc<Grid>,
    profile: &DopingProfile,
    pr: &ModelParams,
) -> Result<Vec<f64>> {
    let n = grid.len();
    let pick = |c: usize| Field::from_values(grid, (0..n).map(|i| w[4 * i + c]).collect());
    let (p, q, r, v) = (pick(0), pick(1), pick(2), pick(3));
    let rows = steady_residual(&p, &q, &r, &v, profile, pr)?;
    let px = diff(&p, 1)?;
    let mut out = vec![0.0; 4 * n];
    for i in 0..n {
        out[4 * i + 1] = rows[0].values()[i]; // relation everywhere
    }
    out[0] = w[0];
    out[4 * (n - 1)] = w[4 * (n - 1)];
    out[4] = px.values()[0]; // q(0) = 0 via the endpoint slope
    for i in 2..n - 1 {
        out[4 * i] = rows[1].values()[i];
    }
    for i in 1..n - 1 {
        out[4 * i + 2] = rows[2].values()[i];
        out[4 * i + 3] = rows[3].values()[i];
    }
    out[2] = w[2];
    out[4 * (n - 1) + 2] = w[4 * (n - 1) + 2];
    out[3] = w[3];
    out[4 * (n - 1) + 3] = w[4 * (n - 1) + 3] - pr.v_b;
    Ok(out)
}

/// Criterion 5: contraction solve vs damped Newton with finite-difference
/// Jacobian, nodewise agreement within 1e-8.
fn c5_newton(outdir: &Path) -> Result<CriterionResult> {
    let g = Grid::new(201)?;
    let profile = DopingProfile::sine(1.0, 1.0, 1)?.with_delta0(0.05, &g)?;
    let pr = ModelParams {
        j_b: 1e-3,
        ..base_params()
    };
    let sys = SteadySystem::new(&g, &profile, &pr);
    let picard = sys.picard_solve(1e-11, 300)?;

    let n4 = 4 * g.len();
    let mut w = vec![0.0; n4];
    let mut converged = false;
    for _ in 0..40 {
        let f = newton_residual(&w, &g, &profile, &pr)?;
        let fnorm = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if fnorm < 1e-12 {
            converged = true;
            break;
        }
        let mut jac = vec![vec![0.0; n4]; n4];
        for j in 0..n4 {
            let dx = 1e-7 * (1.0 + w[j].abs());
            let mut wp = w.clone();
            wp[j] += dx;
            let fp = newton_residual(&wp, &g, &profile, &pr)?;
            for i in 0..n4 {
                jac[i][j] = (fp[i] - f[i]) / dx;
            }
        }
        let delta = match dense_solve(jac, f.clone()) {
            Some(d) => d,
            None => break,
        };
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = w.iter().zip(&delta).map(|(a, d)| a - t * d).collect();
            let ft = newton_residual(&trial, &g, &profile, &pr)?;
            let fn2 = ft.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if fn2 < fnorm || t < 1e-6 {
                w = trial;
                break;
            }
            t /= 2.0;
        }
    }
    let mut worst = 0.0f64;
    for i in 0..g.len() {
        worst = worst
            .max((picard.p.values()[i] - w[4 * i]).abs())
            .max((picard.q.values()[i] - w[4 * i + 1]).abs())
            .max((picard.r.values()[i] - w[4 * i + 2]).abs())
            .max((picard.vstar.values()[i] - w[4 * i + 3]).abs());
    }
    write_json(
        &outdir.join("steady_oracle.json"),
        &serde_json::json!({
            "newton_converged": converged,
            "nodewise_gap": worst,
            "picard_iterations": picard.diagnostics.iterations,
        }),
    )?;
    Ok(CriterionResult {
        id: 5,
        name: "steady-newton-agreement",
        pass: converged && worst <= 1e-8,
        detail: format!("nodewise gap {worst:.3e} <= 1e-8, newton converged {converged}"),
    })
}

/// Criteria 6 and 7 share the delta0 sweep: the bound-ratio law, the
/// contraction-factor scaling, and the relation check on every solve.
fn c6_c7_delta0_law(outdir: &Path) -> Result<(CriterionResult, CriterionResult)> {
    let tol = 1e-10;
    let mut ratios = Vec::new();
    let mut factors = Vec::new();
    let mut relation_ok = true;
    let mut relation_detail = String::new();
    let mut rows = Vec::new();
    for delta0 in [0.08, 0.04, 0.02, 0.01] {
        let g = Grid::new(201)?;
        let profile = DopingProfile::sine(1.0, 1.0, 1)?.with_delta0(delta0, &g)?;
        let sys = SteadySystem::new(&g, &profile, &base_params());
        let s = sys.picard_solve(tol, 200)?;
        let ratio = steady_bound_ratio(&s, &profile)?;
        let lead = s.diagnostics.contraction_factors.first().copied().unwrap_or(f64::NAN);
        ratios.push(ratio);
        factors.push(lead);
        let bound = 10.0 * tol * (1.0 + sobolev_norm(&s.p, 1)?);
        if s.diagnostics.relation_infnorm > bound {
            relation_ok = false;
        }
        relation_detail = format!(
            "last |q - nu p_x| = {:.3e} vs bound {:.3e}",
            s.diagnostics.relation_infnorm, bound
        );
        rows.push(vec![
            fmt_float(delta0),
            fmt_float(ratio),
            fmt_float(lead),
            fmt_float(s.diagnostics.relation_infnorm),
        ]);
    }
    write_csv(
        &outdir.join("delta0_sweep.csv"),
        &["delta0", "bound_ratio", "leading_factor", "relation_infnorm"],
        &rows,
    )?;
    let rmax = ratios.iter().fold(0.0f64, |m, &v| m.max(v));
    let rmin = ratios.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let ratio_ok = rmax / rmin <= 2.0;
    let factor_ok = factors
        .windows(2)
        .all(|w| (1.6..=2.6).contains(&(w[0] / w[1])));
    let c6 = CriterionResult {
        id: 6,
        name: "delta0-squared-law",
        pass: ratio_ok && factor_ok,
        detail: format!(
            "bound-ratio spread {:.3} <= 2, factor ratios {:.3?} in [1.6, 2.6]",
            rmax / rmin,
            factors.windows(2).map(|w| w[0] / w[1]).collect::<Vec<_>>()
        ),
    };
    let c7 = CriterionResult {
        id: 7,
        name: "current-density-relation",
        pass: relation_ok,
        detail: relation_detail,
    };
    Ok((c6, c7))
}

/// Criterion 8: the zero perturbation is an exact fixed point over 1e4 steps.
fn c8_equilibrium(outdir: &Path) -> Result<CriterionResult> {
    let g = Grid::new(201)?;
    let profile = DopingProfile::constant(1.0)?;
    let h = g.h();
    let pr = ModelParams {
        sigma: 1e-4 * h * h,
        ..base_params()
    };
    let steady = SteadySystem::new(&g, &profile, &pr)
        .picard_solve(1e-12, 50)?
        .full_state();
    let sys = TransientSystem::new(&steady, &pr, 1e-4)?;
    let mut state = PerturbationState::zero(&g);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        state = sys.step(&state)?;
        worst = worst
            .max(state.nt.max_abs())
            .max(state.jt.max_abs())
            .max(state.et.max_abs())
            .max(state.vt.max_abs());
    }
    write_json(
        &outdir.join("equilibrium.json"),
        &serde_json::json!({ "max_abs_over_run": worst, "steps": 10_000 }),
    )?;
    Ok(CriterionResult {
        id: 8,
        name: "transient-equilibrium",
        pass: worst == 0.0,
        detail: format!("max |state| over 1e4 steps = {worst:.1e} (exact zero required)"),
    })
}

/// Criterion 9: decoupled heat mode against the analytic kernel, first order
/// in dt and second order in h.
fn c9_heat(outdir: &Path) -> Result<CriterionResult> {
    let pi = std::f64::consts::PI;
    let nu = 0.3;
    let t_end = 0.25;
    let run = |n: usize, dt: f64| -> Result<f64> {
        let g = Grid::new(n)?;
        let init = Field::from_fn(&g, |x| (pi * x).sin());
        let steps = (t_end / dt).round() as usize;
        let out = diffusion_decay_probe(&init, nu, 0.0, dt, steps)?;
        let exact = Field::from_fn(&g, |x| (-nu * pi * pi * t_end).exp() * (pi * x).sin());
        Ok(out.axpy(-1.0, &exact).max_abs())
    };
    let e_dt1 = run(101, 2e-3)?;
    let e_dt2 = run(101, 1e-3)?;
    let e_h1 = run(51, 2e-5)?;
    let e_h2 = run(101, 2e-5)?;
    let dt_ratio = e_dt1 / e_dt2;
    let h_ratio = e_h1 / e_h2;
    write_csv(
        &outdir.join("heat_mode.csv"),
        &["case", "error"],
        &[
            vec!["n101_dt2e-3".into(), fmt_float(e_dt1)],
            vec!["n101_dt1e-3".into(), fmt_float(e_dt2)],
            vec!["n51_dt2e-5".into(), fmt_float(e_h1)],
            vec!["n101_dt2e-5".into(), fmt_float(e_h2)],
        ],
    )?;
    let pass = (1.5..=2.5).contains(&dt_ratio) && (3.2..=4.8).contains(&h_ratio);
    Ok(CriterionResult {
        id: 9,
        name: "heat-mode-kernel",
        pass,
        detail: format!("dt-halving ratio {dt_ratio:.3} in [1.5, 2.5], h-halving ratio {h_ratio:.3} in [3.2, 4.8]"),
    })
}

/// The stable configuration used by criteria 10-12: margins clear the 0.1
/// guard and the decay is fast enough to cross two decades by T = 5.
fn stable_setup() -> Result<(Arc<Grid>, DopingProfile, ModelParams, FullState)> {
    let g = Grid::new(201)?;
    let profile = DopingProfile::sine(1.0, 1.0, 1)?.with_delta0(0.02, &g)?;
    let pr = ModelParams {
        j_b: 1e-4,
        ..base_params()
    };
    let steady = SteadySystem::new(&g, &profile, &pr)
        .picard_solve(1e-10, 200)?
        .full_state();
    Ok((g, profile, pr, steady))
}

/// Criterion 10: exponential decay of the composite norm on a parameter set
/// passing both conditions with margin.
fn c10_decay(outdir: &Path) -> Result<CriterionResult> {
    let (g, profile, pr, steady) = stable_setup()?;
    let report = check_conditions(&profile, &pr, &g)?;
    let margins_ok = report.a2_margin > 1.1 && report.cond5_margin > 0.1;
    let init = PerturbationState::smooth_seed(&g, &pr, 1e-6, 42)?;
    let sys = TransientSystem::new(&steady, &pr, 1e-4)?;
    let (traj, _) = sys.evolve(init, 5.0, 100)?;
    let times = traj.times();
    let comps = traj.composites();
    let (rate, r2) = fit_decay_rate(&times, &comps, 0.5)?;
    let drop = comps.last().unwrap() / comps[0];
    crate::report::write_trajectory_csv(&outdir.join("decay.csv"), &traj)?;
    write_json(
        &outdir.join("decay.json"),
        &serde_json::json!({
            "a2_margin": report.a2_margin,
            "cond5_margin": report.cond5_margin,
            "sigma1_hat": rate,
            "r_squared": r2,
            "terminal_over_initial": drop,
            "truncated": traj.truncated,
        }),
    )?;
    let pass = margins_ok && rate > 0.0 && r2 > 0.99 && drop < 1e-2 && !traj.truncated;
    Ok(CriterionResult {
        id: 10,
        name: "exponential-decay",
        pass,
        detail: format!(
            "rate {rate:.4} > 0, r2 {r2:.6} > 0.99, terminal/initial {drop:.2e} < 1e-2, margins ({:.2}, {:.2})",
            report.a2_margin, report.cond5_margin
        ),
    })
}

/// Criterion 11: vanishing-regularization study.
fn c11_sigma(outdir: &Path) -> Result<CriterionResult> {
    let (g, _, pr, steady) = stable_setup()?;
    let init = PerturbationState::smooth_seed(&g, &pr, 1e-6, 42)?;
    let study = sigma_study(&init, &steady, &pr, &[1e-2, 1e-3, 1e-4], 0.2, 1e-4, 40)?;
    write_json(&outdir.join("sigma_study.json"), &study)?;
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
    let decreasing = study
        .consecutive_gaps
        .windows(2)
        .all(|w| w[1] < w[0]);
    let last_gap = *study.consecutive_gaps.last().unwrap();
    let zero_ok = study.zero_gap < 10.0 * last_gap;
    Ok(CriterionResult {
        id: 11,
        name: "sigma-refinement",
        pass: decreasing && zero_ok,
        detail: format!(
            "gaps {:?} strictly decreasing, zero-gap {:.3e} < 10 x {:.3e}",
            study
                .consecutive_gaps
                .iter()
                .map(|v| format!("{v:.3e}"))
                .collect::<Vec<_>>(),
            study.zero_gap,
            last_gap
        ),
    })
}

/// Criterion 12: the uniqueness probe.
fn c12_uniqueness(outdir: &Path) -> Result<CriterionResult> {
    let (g, _, pr, steady) = stable_setup()?;
    let a = PerturbationState::smooth_seed(&g, &pr, 1e-6, 42)?;
    let same = uniqueness_probe(&a, &a, &steady, &pr, 0.4, 1e-4, 100)?;
    let identical = same.separation.iter().all(|&v| v == 0.0);
    let bump = Field::from_fn(&g, |x| 1e-8 * (std::f64::consts::PI * x).sin());
    let b = PerturbationState {
        nt: a.nt.binary(&bump, |x, y| x + y),
        ..a.clone()
    };
    let trace = uniqueness_probe(&a, &b, &steady, &pr, 1.5, 1e-4, 100)?;
    let cap = 5.0;
    let sep0 = trace.separation[0];
    let growth = trace.fitted_growth()?;
    let bounded = trace
        .times
        .iter()
        .zip(trace.separation.iter())
        .all(|(&t, &s)| s <= sep0 * (cap * t).exp() * (1.0 + 1e-9));
    let decayed = *trace.separation.last().unwrap() < sep0;
    let rows: Vec<Vec<String>> = trace
        .times
        .iter()
        .zip(trace.separation.iter())
        .map(|(&t, &s)| vec![fmt_float(t), fmt_float(s)])
        .collect();
    write_csv(&outdir.join("uniqueness.csv"), &["t", "separation"], &rows)?;
    write_json(
        &outdir.join("uniqueness.json"),
        &serde_json::json!({
            "identical_inits_zero": identical,
            "fitted_growth": growth,
            "growth_cap": cap,
            "bounded_by_cap": bounded,
            "decayed_by_horizon": decayed,
        }),
    )?;
    let pass = identical && growth < cap && bounded && decayed;
    Ok(CriterionResult {
        id: 12,
        name: "uniqueness-probe",
        pass,
        detail: format!(
            "identical-inits zero {identical}, fitted growth {growth:.3} < {cap}, decayed {decayed}"
        ),
    })
}

/// Criterion 13: Poisson manufactured solution, slope 2 +- 0.2, Neumann
/// diagnostics reported.
fn c13_poisson(outdir: &Path) -> Result<CriterionResult> {
    let pi = std::f64::consts::PI;
    let mut errs = Vec::new();
    let mut rows = Vec::new();
    for n in [101usize, 201, 401] {
        let g = Grid::new(n)?;
        let rhs = Field::from_fn(&g, |x| (pi * x).sin());
        let (v, neumann) = solve_poisson(&rhs, 1.0, 0.0, 0.0)?;
        let exact = Field::from_fn(&g, |x| -(pi * x).sin() / (pi * pi));
        let err = v.axpy(-1.0, &exact).max_abs();
        errs.push(err);
        rows.push(vec![
            n.to_string(),
            fmt_float(err),
            fmt_float(neumann.0),
            fmt_float(neumann.1),
        ]);
    }
    write_csv(
        &outdir.join("poisson_mms.csv"),
        &["n", "max_error", "vx_left", "vx_right"],
        &rows,
    )?;
    let slopes = slope(&errs);
    let pass = slopes.iter().all(|s| (s - 2.0).abs() <= 0.2);
    Ok(CriterionResult {
        id: 13,
        name: "poisson-manufactured",
        pass,
        detail: format!("slopes {slopes:.3?} target 2 +- 0.2"),
    })
}

/// Run criteria 1-13, writing artifacts under `outdir`; criterion 14
/// (byte-determinism of this very suite) is checked by the caller running
/// the suite twice.
pub fn run_all(outdir: &Path) -> Result<Vec<CriterionResult>> {
    std::fs::create_dir_all(outdir)?;
    let mut results = Vec::new();
    results.push(c1_bohm(outdir)?);
    results.push(c2_nullity(outdir)?);
    results.push(c3_oracles(outdir)?);
    results.push(c4_trivial(outdir)?);
    results.push(c5_newton(outdir)?);
    let (c6, c7) = c6_c7_delta0_law(outdir)?;
    results.push(c6);
    results.push(c7);
    results.push(c8_equilibrium(outdir)?);
    results.push(c9_heat(outdir)?);
    results.push(c10_decay(outdir)?);
    results.push(c11_sigma(outdir)?);
    results.push(c12_uniqueness(outdir)?);
    results.push(c13_poisson(outdir)?);
    write_json(&outdir.join("summary.json"), &results)?;
    Ok(results)
}
