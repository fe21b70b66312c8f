//! Model closed forms: parameters, doping profiles, the Bohm dispersion,
//! the steady-system coefficient functions and quadratic remainders, the
//! perturbation forcings, and the full-system residuals.
//!
//! The steady reformulation writes the momentum and energy rows around the
//! background (rho, J_b, 3/2 rho) in shifted unknowns p = n - rho,
//! q = J - J_b, r = E - 3/2 rho, with every quantum density derivative
//! routed through the current by the viscous relation (n_xx -> q_x / nu,
//! n_xxx -> q_xx / nu). With that convention the decomposition
//!
//! ```text
//! row = linear part (coefficient functions) - constant forcing - quadratic remainder
//! ```
//!
//! is a pointwise algebraic identity in the node values, which is what makes
//! the fixed-point solver, the Newton cross-check and the residual
//! subtraction oracles agree to solver tolerance rather than to O(h^2).
//! The coefficient closed forms below were derived (and the printed variants
//! audited) by an offline computer-algebra pass.

use crate::error::{QhdError, Result};
use crate::grid::{diff, sobolev_norm, Field, Grid};
use std::sync::Arc;

/// Physical/scaling constants of the scaled system.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelParams {
    /// Scaled viscosity, > 0.
    pub nu: f64,
    /// Scaled Planck constant, > 0.
    pub epsilon: f64,
    /// Relaxation time, > 0.
    pub tau: f64,
    /// Interaction constant (any sign).
    pub mu: f64,
    /// Scaled Debye length, > 0.
    pub lambda: f64,
    /// Boundary current J(0) = J(1).
    pub j_b: f64,
    /// Boundary potential V(1).
    pub v_b: f64,
    /// Fourth-order regularization strength, >= 0.
    pub sigma: f64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("nu", self.nu),
            ("epsilon", self.epsilon),
            ("tau", self.tau),
            ("lambda", self.lambda),
        ];
        for (name, v) in pos {
            if !(v > 0.0) {
                return Err(QhdError::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.sigma >= 0.0) {
            return Err(QhdError::Config(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

impl Default for ModelParams {
    fn default() -> Self {
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
}

/// Doping profile family. Each family is closed form with analytic
/// derivatives through order 4 and equal boundary values rho(0) = rho(1);
/// sine and bump additionally have rho_x(0) = rho_x(1) = 0 so the boundary
/// compatibility of the shifted unknowns holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileKind {
    Constant,
    /// rho_b + amplitude * sin^2(k pi x).
    Sine { amplitude: f64, k: u32 },
    /// rho_b + amplitude * x^4 (1-x)^4 (s0 + s1 x + s2 x^2), stored expanded.
    Bump { amplitude: f64, s: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DopingProfile {
    pub rho_b: f64,
    pub kind: ProfileKind,
    /// Expanded polynomial coefficients for the bump family.
    poly: Option<Vec<f64>>,
}

impl DopingProfile {
    pub fn constant(rho_b: f64) -> Result<DopingProfile> {
        let p = DopingProfile {
            rho_b,
            kind: ProfileKind::Constant,
            poly: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn sine(rho_b: f64, amplitude: f64, k: u32) -> Result<DopingProfile> {
        if k == 0 {
            return Err(QhdError::Config("sine profile needs k >= 1".into()));
        }
        let p = DopingProfile {
            rho_b,
            kind: ProfileKind::Sine { amplitude, k },
            poly: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn bump(rho_b: f64, amplitude: f64, s: [f64; 3]) -> Result<DopingProfile> {
        // x^4 (1-x)^4 = x^4 - 4x^5 + 6x^6 - 4x^7 + x^8, times s0 + s1 x + s2 x^2
        let base = [1.0, -4.0, 6.0, -4.0, 1.0];
        let mut poly = vec![0.0; 11];
        for (i, &b) in base.iter().enumerate() {
            for (j, &sj) in s.iter().enumerate() {
                poly[4 + i + j] += amplitude * b * sj;
            }
        }
        let p = DopingProfile {
            rho_b,
            kind: ProfileKind::Bump { amplitude, s },
            poly: Some(poly),
        };
        p.validate()?;
        Ok(p)
    }

    /// Scale the family amplitude so the discrete H^3 norm of rho_x equals
    /// `delta0` on `grid` (the norm is linear in the amplitude).
    pub fn with_delta0(self, delta0: f64, grid: &Arc<Grid>) -> Result<DopingProfile> {
        let unit = match &self.kind {
            ProfileKind::Constant => {
                if delta0 == 0.0 {
                    return Ok(self);
                }
                return Err(QhdError::Config(
                    "constant profile cannot match a nonzero delta0".into(),
                ));
            }
            ProfileKind::Sine { k, .. } => DopingProfile::sine(self.rho_b, 1.0, *k)?,
            ProfileKind::Bump { s, .. } => DopingProfile::bump(self.rho_b, 1.0, *s)?,
        };
        let per_unit = unit.delta0(grid)?;
        if per_unit == 0.0 {
            return Err(QhdError::Config("profile shape has zero gradient".into()));
        }
        let amp = delta0 / per_unit;
        match self.kind {
            ProfileKind::Sine { k, .. } => DopingProfile::sine(self.rho_b, amp, k),
            ProfileKind::Bump { s, .. } => DopingProfile::bump(self.rho_b, amp, s),
            ProfileKind::Constant => unreachable!(),
        }
    }

    fn validate(&self) -> Result<()> {
        // positivity on a dense sample; the families are smooth enough that
        // 2048 points bound the minimum well
        let mut min = f64::INFINITY;
        for i in 0..=2048 {
            let x = i as f64 / 2048.0;
            min = min.min(self.eval(x, 0));
        }
        if min <= 0.0 {
            return Err(QhdError::Config(format!(
                "doping profile must stay positive on [0,1], min ~ {min:.3e}"
            )));
        }
        Ok(())
    }

    /// rho^(order)(x) for order 0..=4, closed form.
    pub fn eval(&self, x: f64, order: usize) -> f64 {
        assert!(order <= 4);
        match &self.kind {
            ProfileKind::Constant => {
                if order == 0 {
                    self.rho_b
                } else {
                    0.0
                }
            }
            ProfileKind::Sine { amplitude, k } => {
                // A sin^2(k pi x) = A/2 (1 - cos(2 k pi x))
                let w = 2.0 * *k as f64 * std::f64::consts::PI;
                let a = amplitude / 2.0;
                match order {
                    0 => self.rho_b + a * (1.0 - (w * x).cos()),
                    1 => a * w * (w * x).sin(),
                    2 => a * w * w * (w * x).cos(),
                    3 => -a * w * w * w * (w * x).sin(),
                    _ => -a * w * w * w * w * (w * x).cos(),
                }
            }
            ProfileKind::Bump { .. } => {
                let poly = self.poly.as_ref().expect("bump stores coefficients");
                let mut c: Vec<f64> = poly.clone();
                for _ in 0..order {
                    c = c
                        .iter()
                        .enumerate()
                        .skip(1)
                        .map(|(i, &v)| i as f64 * v)
                        .collect();
                }
                let mut acc = 0.0;
                for &v in c.iter().rev() {
                    acc = acc * x + v;
                }
                if order == 0 {
                    acc + self.rho_b
                } else {
                    acc
                }
            }
        }
    }

    /// Nodal samples of rho^(order).
    pub fn field(&self, grid: &Arc<Grid>, order: usize) -> Field {
        Field::from_fn(grid, |x| self.eval(x, order))
    }

    /// delta0 = discrete H^3 norm of rho_x on `grid`.
    pub fn delta0(&self, grid: &Arc<Grid>) -> Result<f64> {
        sobolev_norm(&self.field(grid, 1), 3)
    }
}

/// The eleven nodal coefficient functions of the linearized steady rows.
#[derive(Debug, Clone)]
pub struct SteadyCoeffs {
    pub a2: Field,
    pub b2: Field,
    pub c2: Field,
    pub d2: Field,
    pub e2: Field,
    pub a3: Field,
    pub b3: Field,
    pub c3: Field,
    pub d3: Field,
    pub e3: Field,
    pub h3: Field,
}

/// Pointwise values of the coefficient functions at one node.
#[derive(Debug, Clone, Copy, Default)]
pub struct CoeffPoint {
    pub a2: f64,
    pub b2: f64,
    pub c2: f64,
    pub d2: f64,
    pub e2: f64,
    pub a3: f64,
    pub b3: f64,
    pub c3: f64,
    pub d3: f64,
    pub e3: f64,
    pub h3: f64,
}

/// Jet of the doping profile at one node.
#[derive(Debug, Clone, Copy)]
pub struct RhoJet {
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
}

impl RhoJet {
    pub fn at(profile: &DopingProfile, x: f64) -> RhoJet {
        RhoJet {
            r0: profile.eval(x, 0),
            r1: profile.eval(x, 1),
            r2: profile.eval(x, 2),
        }
    }
}

/// Jet of the shifted unknowns at one node; only the derivatives that the
/// canonical rows actually consume.
#[derive(Debug, Clone, Copy, Default)]
pub struct SteadyJet {
    pub p: f64,
    pub p1: f64,
    pub q: f64,
    pub q1: f64,
    pub q2: f64,
    pub r: f64,
    pub r1: f64,
    pub r2: f64,
    pub v1: f64,
}

/// Coefficient functions at one node.
pub fn coeffs_at(rho: RhoJet, pr: &ModelParams) -> CoeffPoint {
    let (r0, r1) = (rho.r0, rho.r1);
    let (jb, tau, mu, nu) = (pr.j_b, pr.tau, pr.mu, pr.nu);
    let e2s = pr.epsilon * pr.epsilon;
    let r0_2 = r0 * r0;
    let r0_3 = r0_2 * r0;
    let r0_4 = r0_3 * r0;
    CoeffPoint {
        a2: (2.0 / 3.0) * jb * jb * r1 / r0_2 - jb / tau + e2s / 18.0 * r1 * r1 * r1 / r0_2
            - (1.0 + mu) * r1,
        b2: 1.0 / tau - (4.0 / 3.0) * jb * r1 / r0_2,
        c2: r1 * (12.0 * jb * jb + e2s * r1 * r1) / (9.0 * r0_3),
        d2: mu - (2.0 / 3.0) * jb * jb / r0_2 - e2s / 6.0 * r1 * r1 / r0_2,
        e2: (4.0 / 3.0) * jb / r0 + e2s / (9.0 * nu) * r1 / r0,
        a3: jb * r1 * (e2s * r1 * r1 - 6.0 * jb * jb) / (9.0 * r0_3) + 1.5 * pr.nu * rho.r2,
        b3: 2.0 / tau - (5.0 / 3.0) * jb * r1 / r0_2,
        c3: -3.0 / tau + 2.5 * jb * r1 / r0_2 - 2.0 * jb * jb * jb * r1 / r0_4
            + e2s / 3.0 * jb * r1 * r1 * r1 / r0_4,
        d3: jb * (4.0 * jb * jb - 2.0 * e2s * r1 * r1 - 15.0 * r0_2) / (6.0 * r0_3),
        e3: mu + 2.5 - jb * jb / r0_2
            + e2s / (6.0 * nu) * jb * r1 / r0_2
            + e2s / 18.0 * r1 * r1 / r0_2,
        h3: r1 * (18.0 * jb * jb - e2s * r1 * r1) / (9.0 * r0_3),
    }
}

/// Linear momentum row applied to a jet: the operator that the banded
/// system assembles, evaluated pointwise.
pub fn lin2_at(j: &SteadyJet, c: &CoeffPoint, rho0: f64, pr: &ModelParams) -> f64 {
    let e2s = pr.epsilon * pr.epsilon;
    -(pr.nu + e2s / (18.0 * pr.nu)) * j.q2
        + c.b2 * j.q
        + c.c2 * j.p
        + c.d2 * j.p1
        + c.e2 * j.q1
        + (2.0 / 3.0) * j.r1
        - rho0 * j.v1
}

/// Linear energy row applied to a jet (the quantum q_xx coupling is not part
/// of the operator; it rides on the right-hand side, see [`quantum_rhs_at`]).
pub fn lin3_at(j: &SteadyJet, c: &CoeffPoint, rho0: f64, pr: &ModelParams) -> f64 {
    -pr.nu * j.r2
        + c.b3 * j.r
        + c.c3 * j.p
        + c.d3 * j.p1
        + c.e3 * j.q1
        + c.h3 * j.q
        + (5.0 / 3.0) * (pr.j_b / rho0) * j.r1
        - pr.j_b * j.v1
}

/// Quantum fixed-point term (eps^2 / 18 nu) q_xx (q + J_b) / (p + rho).
pub fn quantum_rhs_at(j: &SteadyJet, rho0: f64, pr: &ModelParams) -> f64 {
    let e2s = pr.epsilon * pr.epsilon;
    e2s / (18.0 * pr.nu) * j.q2 * (j.q + pr.j_b) / (j.p + rho0)
}

/// Canonical nonlinear momentum row at one node (quantum terms in q-form).
pub fn s2_at(j: &SteadyJet, rho: RhoJet, pr: &ModelParams) -> f64 {
    let e2s = pr.epsilon * pr.epsilon;
    let n = j.p + rho.r0;
    let n1 = j.p1 + rho.r1;
    let cur = j.q + pr.j_b;
    -pr.nu * j.q2
        + cur / pr.tau
        + (2.0 / 3.0) * (2.0 * cur * j.q1 / n - cur * cur * n1 / (n * n))
        + (2.0 / 3.0) * j.r1
        + rho.r1
        - e2s / (18.0 * pr.nu) * j.q2
        + e2s / (9.0 * pr.nu) * (n1 / n) * j.q1
        - e2s / 18.0 * n1 * n1 * n1 / (n * n)
        - n * j.v1
        + pr.mu * n1
}

/// Canonical nonlinear energy row at one node (quantum flux in q-form,
/// including the fixed-point q_xx term).
pub fn s3_at(j: &SteadyJet, rho: RhoJet, pr: &ModelParams) -> f64 {
    let e2s = pr.epsilon * pr.epsilon;
    let nu = pr.nu;
    let n = j.p + rho.r0;
    let n1 = j.p1 + rho.r1;
    let cur = j.q + pr.j_b;
    let en = j.r + 1.5 * rho.r0;
    let en1 = j.r1 + 1.5 * rho.r1;
    let n2 = n * n;
    let n3 = n2 * n;
    let qf = e2s / 18.0
        * (j.q1 * j.q1 / (nu * n) + cur * j.q2 / (nu * n)
            - cur * j.q1 * n1 / (nu * n2)
            - j.q1 * n1 * n1 / n2
            - 2.0 * cur * n1 * j.q1 / (nu * n2)
            + 2.0 * cur * n1 * n1 * n1 / n3);
    -nu * (j.r2 + 1.5 * rho.r2) + (2.0 / pr.tau) * (en - 1.5 * n)
        + pr.mu * j.q1
        + (5.0 / 3.0) * ((j.q1 * en + cur * en1) / n - cur * en * n1 / n2)
        - (1.0 / 3.0) * (3.0 * cur * cur * j.q1 / n2 - 2.0 * cur * cur * cur * n1 / n3)
        - qf
        - cur * j.v1
}

/// Quadratic remainder of the momentum row: f2 = lin2 - a2 - S2, a pointwise
/// identity, so it vanishes at the origin and decays quadratically.
pub fn f2_at(j: &SteadyJet, rho: RhoJet, c: &CoeffPoint, pr: &ModelParams) -> f64 {
    lin2_at(j, c, rho.r0, pr) - c.a2 - s2_at(j, rho, pr)
}

/// Quadratic remainder of the energy row: f3 = lin3 - a3 - Qf - S3.
pub fn f3_at(j: &SteadyJet, rho: RhoJet, c: &CoeffPoint, pr: &ModelParams) -> f64 {
    lin3_at(j, c, rho.r0, pr) - c.a3 - quantum_rhs_at(j, rho.r0, pr) - s3_at(j, rho, pr)
}

fn check_shifted_density(p: &Field, rho: &Field) -> Result<()> {
    let (min, node) = p.binary(rho, |a, b| a + b).min();
    if min <= 0.0 {
        return Err(QhdError::DegenerateDensity { min, node });
    }
    Ok(())
}

/// Nodal coefficient functions over the grid.
pub fn steady_coeffs(grid: &Arc<Grid>, profile: &DopingProfile, pr: &ModelParams) -> SteadyCoeffs {
    let n = grid.len();
    let mut f = vec![vec![0.0; n]; 11];
    for i in 0..n {
        let x = grid.x(i);
        let c = coeffs_at(RhoJet::at(profile, x), pr);
        let vals = [
            c.a2, c.b2, c.c2, c.d2, c.e2, c.a3, c.b3, c.c3, c.d3, c.e3, c.h3,
        ];
        for (k, v) in vals.into_iter().enumerate() {
            f[k][i] = v;
        }
    }
    let mut it = f.into_iter().map(|v| Field::from_values(grid, v));
    SteadyCoeffs {
        a2: it.next().unwrap(),
        b2: it.next().unwrap(),
        c2: it.next().unwrap(),
        d2: it.next().unwrap(),
        e2: it.next().unwrap(),
        a3: it.next().unwrap(),
        b3: it.next().unwrap(),
        c3: it.next().unwrap(),
        d3: it.next().unwrap(),
        e3: it.next().unwrap(),
        h3: it.next().unwrap(),
    }
}

/// Collect the nodal jets of (p, q, r, V_x) that the steady rows consume.
pub fn steady_jets(
    p: &Field,
    q: &Field,
    r: &Field,
    vstar_x: &Field,
) -> Result<Vec<SteadyJet>> {
    let p1 = diff(p, 1)?;
    let q1 = diff(q, 1)?;
    let q2 = diff(q, 2)?;
    let r1 = diff(r, 1)?;
    let r2 = diff(r, 2)?;
    Ok((0..p.len())
        .map(|i| SteadyJet {
            p: p.values()[i],
            p1: p1.values()[i],
            q: q.values()[i],
            q1: q1.values()[i],
            q2: q2.values()[i],
            r: r.values()[i],
            r1: r1.values()[i],
            r2: r2.values()[i],
            v1: vstar_x.values()[i],
        })
        .collect())
}

/// Nodal quadratic remainders (f2, f3) of the steady reformulation.
/// Inside the formulas n* = p + rho, J* = q + J_b, E* = r + 3/2 rho.
pub fn nonlinear_f(
    p: &Field,
    q: &Field,
    r: &Field,
    vstar_x: &Field,
    profile: &DopingProfile,
    pr: &ModelParams,
) -> Result<(Field, Field)> {
    let grid = p.grid();
    let rho0 = profile.field(grid, 0);
    check_shifted_density(p, &rho0)?;
    let jets = steady_jets(p, q, r, vstar_x)?;
    let mut f2 = vec![0.0; p.len()];
    let mut f3 = vec![0.0; p.len()];
    for (i, jet) in jets.iter().enumerate() {
        let rho = RhoJet::at(profile, grid.x(i));
        let c = coeffs_at(rho, pr);
        f2[i] = f2_at(jet, rho, &c, pr);
        f3[i] = f3_at(jet, rho, &c, pr);
    }
    Ok((
        Field::from_values(grid, f2),
        Field::from_values(grid, f3),
    ))
}

/// Nodal quantum fixed-point term of the energy row.
pub fn quantum_rhs(
    p: &Field,
    q: &Field,
    profile: &DopingProfile,
    pr: &ModelParams,
) -> Result<Field> {
    let grid = p.grid();
    let rho0 = profile.field(grid, 0);
    check_shifted_density(p, &rho0)?;
    let q2 = diff(q, 2)?;
    let e2s = pr.epsilon * pr.epsilon;
    let vals = (0..p.len())
        .map(|i| {
            e2s / (18.0 * pr.nu) * q2.values()[i] * (q.values()[i] + pr.j_b)
                / (p.values()[i] + rho0.values()[i])
        })
        .collect();
    Ok(Field::from_values(grid, vals))
}

/// Canonical steady residual rows (S1..S4) on nodal fields; the solver's
/// fixed point drives all four to zero at the nodes where they are imposed.
pub fn steady_residual(
    p: &Field,
    q: &Field,
    r: &Field,
    v: &Field,
    profile: &DopingProfile,
    pr: &ModelParams,
) -> Result<[Field; 4]> {
    let grid = p.grid();
    let rho0 = profile.field(grid, 0);
    check_shifted_density(p, &rho0)?;
    let vx = diff(v, 1)?;
    let vxx = diff(v, 2)?;
    let p1f = diff(p, 1)?;
    let jets = steady_jets(p, q, r, &vx)?;
    let n = p.len();
    let mut s1 = vec![0.0; n];
    let mut s2 = vec![0.0; n];
    let mut s3 = vec![0.0; n];
    let mut s4 = vec![0.0; n];
    for (i, jet) in jets.iter().enumerate() {
        let rho = RhoJet::at(profile, grid.x(i));
        s1[i] = q.values()[i] - pr.nu * p1f.values()[i];
        s2[i] = s2_at(jet, rho, pr);
        s3[i] = s3_at(jet, rho, pr);
        s4[i] = -pr.lambda * pr.lambda * vxx.values()[i] + p.values()[i];
    }
    Ok([
        Field::from_values(grid, s1),
        Field::from_values(grid, s2),
        Field::from_values(grid, s3),
        Field::from_values(grid, s4),
    ])
}

/// Expanded Bohm dispersion, the analytic equal of the factored
/// self-potential gradient (eps^2/9) n ((sqrt n)_xx / sqrt n)_x:
/// (eps^2/18) n_xxx - (eps^2/9) n_x n_xx / n + (eps^2/18) n_x^3 / n^2.
pub fn bohm_term(n: &Field, pr: &ModelParams) -> Result<Field> {
    let (min, node) = n.min();
    if min <= 0.0 {
        return Err(QhdError::NonPositiveDensity { min, node });
    }
    let e2s = pr.epsilon * pr.epsilon;
    let n1 = diff(n, 1)?;
    let n2 = diff(n, 2)?;
    let n3 = diff(n, 3)?;
    let vals = (0..n.len())
        .map(|i| {
            let (v, v1, v2, v3) = (
                n.values()[i],
                n1.values()[i],
                n2.values()[i],
                n3.values()[i],
            );
            e2s / 18.0 * v3 - e2s / 9.0 * v1 * v2 / v + e2s / 18.0 * v1 * v1 * v1 / (v * v)
        })
        .collect();
    Ok(Field::from_values(n.grid(), vals))
}

/// Full nodal state (n, J, E, V) on a shared grid.
#[derive(Debug, Clone)]
pub struct FullState {
    pub n: Field,
    pub j: Field,
    pub e: Field,
    pub v: Field,
}

impl FullState {
    pub fn grid(&self) -> &Arc<Grid> {
        self.n.grid()
    }

    pub fn check_positive(&self) -> Result<()> {
        let (min, node) = self.n.min();
        if min <= 0.0 {
            return Err(QhdError::NonPositiveDensity { min, node });
        }
        Ok(())
    }
}

/// Steady residuals of the full system, time derivatives dropped; quantum
/// terms in n-form (expanded Bohm, energy quantum flux as a composite field
/// derivative). The continuity row measures J_x - nu (n - rho)_xx: the
/// background profile is diffusion-free in this model, so the constructed
/// steady state zeroes all four rows.
pub fn residual_full(
    state: &FullState,
    profile: &DopingProfile,
    pr: &ModelParams,
) -> Result<(Field, Field, Field, Field)> {
    state.check_positive()?;
    let grid = state.grid();
    let rho = profile.field(grid, 0);
    let e2s = pr.epsilon * pr.epsilon;

    let nmr = state.n.axpy(-1.0, &rho);
    let r_n = diff(&state.j, 1)?.axpy(-pr.nu, &diff(&nmr, 2)?);

    let bohm = bohm_term(&state.n, pr)?;
    let jj_over_n = state
        .j
        .binary(&state.n, |j, n| j * j / n);
    let djj = diff(&jj_over_n, 1)?;
    let jx = diff(&state.j, 1)?;
    let ex = diff(&state.e, 1)?;
    let nx = diff(&state.n, 1)?;
    let vx = diff(&state.v, 1)?;
    let jxx = diff(&state.j, 2)?;
    let n = state.n.values();
    let j = state.j.values();
    let e = state.e.values();
    let r_j_vals: Vec<f64> = (0..grid.len())
        .map(|i| {
            -pr.nu * jxx.values()[i]
                + j[i] / pr.tau
                + (2.0 / 3.0) * djj.values()[i]
                + (2.0 / 3.0) * ex.values()[i]
                - bohm.values()[i]
                - n[i] * vx.values()[i]
                + pr.mu * nx.values()[i]
        })
        .collect();
    let r_j = Field::from_values(grid, r_j_vals);

    let nxx = diff(&state.n, 2)?;
    let qflux_inner: Vec<f64> = (0..grid.len())
        .map(|i| j[i] * nxx.values()[i] / n[i] - j[i] * nx.values()[i] * nx.values()[i] / (n[i] * n[i]))
        .collect();
    let qflux = diff(&Field::from_values(grid, qflux_inner), 1)?;
    let je_over_n: Vec<f64> = (0..grid.len()).map(|i| j[i] * e[i] / n[i]).collect();
    let d_je = diff(&Field::from_values(grid, je_over_n), 1)?;
    let j3_over_n2: Vec<f64> = (0..grid.len())
        .map(|i| j[i] * j[i] * j[i] / (n[i] * n[i]))
        .collect();
    let d_j3 = diff(&Field::from_values(grid, j3_over_n2), 1)?;
    let exx = diff(&state.e, 2)?;
    let r_e_vals: Vec<f64> = (0..grid.len())
        .map(|i| {
            -pr.nu * exx.values()[i]
                + (2.0 / pr.tau) * (e[i] - 1.5 * n[i])
                + pr.mu * jx.values()[i]
                + (5.0 / 3.0) * d_je.values()[i]
                - (1.0 / 3.0) * d_j3.values()[i]
                - e2s / 18.0 * qflux.values()[i]
                - j[i] * vx.values()[i]
        })
        .collect();
    let r_e = Field::from_values(grid, r_e_vals);

    let vxx = diff(&state.v, 2)?;
    let r_v_vals: Vec<f64> = (0..grid.len())
        .map(|i| pr.lambda * pr.lambda * vxx.values()[i] - (n[i] - rho.values()[i]))
        .collect();
    let r_v = Field::from_values(grid, r_v_vals);

    Ok((r_n, r_j, r_e, r_v))
}

/// Perturbation forcings (g1, g2) of the evolution system around a steady
/// state, in the regularized-system form (the same formulas serve sigma = 0;
/// the printed unregularized variant carries typographical slips, so the
/// `regularized` flag selects nothing and is kept for interface parity).
pub fn forcing_g(
    steady: &FullState,
    pert: (&Field, &Field, &Field, &Field),
    pr: &ModelParams,
    _regularized: bool,
) -> Result<(Field, Field)> {
    let (nt, jt, et, vt) = pert;
    let grid = steady.grid();
    let n_full = steady.n.binary(nt, |a, b| a + b);
    let (min, node) = n_full.min();
    if min <= 0.0 {
        return Err(QhdError::DegenerateDensity { min, node });
    }
    let j_full = steady.j.binary(jt, |a, b| a + b);
    let e_full = steady.e.binary(et, |a, b| a + b);
    let e2s = pr.epsilon * pr.epsilon;

    let d1 = |f: &Field| diff(f, 1);
    let d2 = |f: &Field| diff(f, 2);

    let ns_x = d1(&steady.n)?;
    let ns_xx = d2(&steady.n)?;
    let nf_x = d1(&n_full)?;
    let nf_xx = d2(&n_full)?;
    let vs_x = d1(&steady.v)?;
    let vt_x = d1(vt)?;
    let jt_x = d1(jt)?;

    // g1: quantum middle+cubic differences (pointwise), convective flux
    // difference (composite field then d/dx), potential coupling.
    let conv1: Vec<f64> = (0..grid.len())
        .map(|i| {
            let jf = j_full.values()[i];
            let js = steady.j.values()[i];
            jf * jf / n_full.values()[i] - js * js / steady.n.values()[i]
        })
        .collect();
    let conv1_x = d1(&Field::from_values(grid, conv1))?;
    let g1_vals: Vec<f64> = (0..grid.len())
        .map(|i| {
            let (nf, ns) = (n_full.values()[i], steady.n.values()[i]);
            let (nfx, nsx) = (nf_x.values()[i], ns_x.values()[i]);
            let (nfxx, nsxx) = (nf_xx.values()[i], ns_xx.values()[i]);
            let quantum = -e2s / 18.0
                * (2.0 * (nfx * nfxx / nf - nsx * nsxx / ns)
                    - (nfx * nfx * nfx / (nf * nf) - nsx * nsx * nsx / (ns * ns)));
            quantum - (2.0 / 3.0) * conv1_x.values()[i]
                + vs_x.values()[i] * nt.values()[i]
                + nt.values()[i] * vt_x.values()[i]
        })
        .collect();

    // g2: convective and quantum flux differences as composite fields.
    let conv_je: Vec<f64> = (0..grid.len())
        .map(|i| {
            j_full.values()[i] * e_full.values()[i] / n_full.values()[i]
                - steady.j.values()[i] * steady.e.values()[i] / steady.n.values()[i]
        })
        .collect();
    let conv_je_x = d1(&Field::from_values(grid, conv_je))?;
    let conv_j3: Vec<f64> = (0..grid.len())
        .map(|i| {
            let (jf, js) = (j_full.values()[i], steady.j.values()[i]);
            let (nf, ns) = (n_full.values()[i], steady.n.values()[i]);
            jf * jf * jf / (nf * nf) - js * js * js / (ns * ns)
        })
        .collect();
    let conv_j3_x = d1(&Field::from_values(grid, conv_j3))?;
    let qflux: Vec<f64> = (0..grid.len())
        .map(|i| {
            let (jf, js) = (j_full.values()[i], steady.j.values()[i]);
            let (nf, ns) = (n_full.values()[i], steady.n.values()[i]);
            let (nfx, nsx) = (nf_x.values()[i], ns_x.values()[i]);
            let (nfxx, nsxx) = (nf_xx.values()[i], ns_xx.values()[i]);
            (jf * nfxx / nf - jf * nfx * nfx / (nf * nf))
                - (js * nsxx / ns - js * nsx * nsx / (ns * ns))
        })
        .collect();
    let qflux_x = d1(&Field::from_values(grid, qflux))?;
    let g2_vals: Vec<f64> = (0..grid.len())
        .map(|i| {
            -(5.0 / 3.0) * conv_je_x.values()[i]
                + 2.5 * jt_x.values()[i]
                + (1.0 / 3.0) * conv_j3_x.values()[i]
                + vs_x.values()[i] * jt.values()[i]
                + jt.values()[i] * vt_x.values()[i]
                + steady.j.values()[i] * vt_x.values()[i]
                + e2s / 18.0 * qflux_x.values()[i]
        })
        .collect();

    Ok((
        Field::from_values(grid, g1_vals),
        Field::from_values(grid, g2_vals),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{diff_stencil, Grid};

    fn params() -> ModelParams {
        ModelParams {
            nu: 0.3,
            epsilon: 0.2,
            tau: 1.7,
            mu: 0.4,
            lambda: 1.0,
            j_b: 0.02,
            v_b: 0.0,
            sigma: 0.0,
        }
    }

    #[test]
    fn coefficients_match_symbolic_oracle() {
        // frozen values from the offline computer-algebra derivation:
        // rho = 1 + 0.07 sin^2(2 pi x), nu=0.3 eps=0.2 tau=1.7 mu=0.4
        // j_b=0.02, evaluated at x = 0.3
        let profile = DopingProfile::sine(1.0, 0.07, 2).unwrap();
        let pr = params();
        let x = 0.3;
        let c = coeffs_at(RhoJet::at(&profile, x), &pr);
        let expect: [(&str, f64, f64); 11] = [
            ("a2", c.a2, 0.35007040057287006508),
            ("b2", c.b2, 0.59433264178827348576),
            ("c2", c.c2, -0.00017855906820231530250),
            ("d2", c.d2, 0.39937007159228676591),
            ("e2", c.e2, 0.021476896678655848471),
            ("a3", c.a3, -2.0121389080505557160),
            ("b3", c.b3, 1.1840922728235771513),
            ("c3", c.c3, -1.7761387777458391750),
            ("d3", c.d3, -0.047033116136224134805),
            ("e3", c.e3, 2.8996759535602136079),
            ("h3", c.h3, -0.00010815485287750171820),
        ];
        for (name, got, want) in expect {
            let tol = 1e-12 * want.abs().max(1e-3);
            assert!((got - want).abs() < tol, "{name}: {got} vs {want}");
        }
    }

    #[test]
    fn constant_profile_reduces_coefficients() {
        let pr = ModelParams {
            j_b: 0.01,
            tau: 2.0,
            mu: 0.4,
            ..params()
        };
        let c = coeffs_at(RhoJet { r0: 1.0, r1: 0.0, r2: 0.0 }, &pr);
        assert_eq!(c.a2, -0.005);
        assert_eq!(c.b2, 0.5);
        assert_eq!(c.c2, 0.0);
        assert!((c.d2 - (0.4 - 2.0 / 3.0 * 1e-4)).abs() < 1e-18);
        assert!((c.e2 - 4.0 / 3.0 * 0.01).abs() < 1e-18);
        // j_b = 0 on top of constant rho: the full reduction
        let pr0 = ModelParams { j_b: 0.0, ..pr };
        let c0 = coeffs_at(RhoJet { r0: 1.0, r1: 0.0, r2: 0.0 }, &pr0);
        assert_eq!(c0.a2, 0.0);
        assert_eq!(c0.b2, 0.5);
        assert_eq!(c0.c2, 0.0);
        assert_eq!(c0.d2, 0.4);
        assert_eq!(c0.e2, 0.0);
        assert_eq!(c0.a3, 0.0);
        assert_eq!(c0.b3, 1.0);
        assert_eq!(c0.c3, -1.5);
        assert_eq!(c0.d3, 0.0);
        assert!((c0.e3 - 2.9).abs() < 1e-15);
        assert_eq!(c0.h3, 0.0);
    }

    #[test]
    fn nonlinear_f_vanishes_at_origin() {
        let g = Grid::new(101).unwrap();
        let profile = DopingProfile::sine(1.0, 0.1, 1).unwrap();
        let z = Field::zeros(&g);
        let (f2, f3) = nonlinear_f(&z, &z, &z, &z, &profile, &params()).unwrap();
        assert!(f2.max_abs() < 1e-14, "{}", f2.max_abs());
        assert!(f3.max_abs() < 1e-14, "{}", f3.max_abs());
    }

    #[test]
    fn nonlinear_f_decays_quadratically() {
        let g = Grid::new(201).unwrap();
        let profile = DopingProfile::sine(1.0, 0.08, 1).unwrap();
        let pi = std::f64::consts::PI;
        let p0 = Field::from_fn(&g, |x| 0.05 * (pi * x).sin());
        let q0 = Field::from_fn(&g, |x| 0.03 * (2.0 * pi * x).sin());
        let r0 = Field::from_fn(&g, |x| -0.04 * (pi * x).sin());
        let v0 = Field::from_fn(&g, |x| 0.02 * (pi * x).cos());
        let mut norms = Vec::new();
        for s in [1.0, 0.5, 0.25] {
            let (f2, f3) = nonlinear_f(
                &p0.scale(s),
                &q0.scale(s),
                &r0.scale(s),
                &v0.scale(s),
                &profile,
                &params(),
            )
            .unwrap();
            norms.push((f2.max_abs(), f3.max_abs()));
        }
        for w in norms.windows(2) {
            for pick in [|t: (f64, f64)| t.0, |t: (f64, f64)| t.1] {
                let ratio = pick(w[0]) / pick(w[1]);
                assert!(
                    (3.5..=4.5).contains(&ratio),
                    "quadratic-decay ratio {ratio} outside [3.5, 4.5] ({norms:?})"
                );
            }
        }
    }

    #[test]
    fn degenerate_density_is_reported() {
        let g = Grid::new(64).unwrap();
        let profile = DopingProfile::constant(1.0).unwrap();
        let p = Field::from_fn(&g, |_| -1.5);
        let z = Field::zeros(&g);
        match nonlinear_f(&p, &z, &z, &z, &profile, &params()) {
            Err(QhdError::DegenerateDensity { .. }) => {}
            other => panic!("expected DegenerateDensity, got {other:?}"),
        }
    }

    #[test]
    fn bohm_term_vanishes_on_constant_and_exponential() {
        let g = Grid::new(201).unwrap();
        let pr = params();
        let c = Field::from_fn(&g, |_| 2.0);
        assert!(bohm_term(&c, &pr).unwrap().max_abs() < 1e-18);
        // (sqrt n)_xx / sqrt n = a^2/4 constant for n = e^{a x}
        let expgrow = Field::from_fn(&g, |x| (0.8 * x).exp());
        let b = bohm_term(&expgrow, &pr).unwrap();
        assert!(b.max_abs() < 2e-7, "{}", b.max_abs());
    }

    #[test]
    fn bohm_expanded_matches_factored_form_pointwise() {
        // factored (eps^2/9) n ((sqrt n)_xx / sqrt n)_x on a refined grid
        let pr = ModelParams {
            epsilon: 0.1,
            ..params()
        };
        let nfun = |x: f64| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * x).sin();
        let gf = Grid::new(4001).unwrap();
        let sqrt_n = Field::from_fn(&gf, |x| nfun(x).sqrt());
        let ratio_vals: Vec<f64> = {
            let sxx = diff(&sqrt_n, 2).unwrap();
            (0..gf.len())
                .map(|i| sxx.values()[i] / sqrt_n.values()[i])
                .collect()
        };
        let ratio = Field::from_values(&gf, ratio_vals);
        let dratio = diff(&ratio, 1).unwrap();
        let e2s = pr.epsilon * pr.epsilon;
        // value at x = 0.25 (node 1000 of the refined grid)
        let i = 1000;
        let factored = e2s / 9.0 * nfun(gf.x(i)) * dratio.values()[i];

        let g = Grid::new(201).unwrap();
        let n = Field::from_fn(&g, nfun);
        let b = bohm_term(&n, &pr).unwrap();
        let coarse = b.values()[50]; // x = 0.25
        assert!(
            (coarse - factored).abs() < 5e-5,
            "{coarse} vs {factored}"
        );
    }

    #[test]
    fn residual_full_zero_at_global_equilibrium() {
        let g = Grid::new(101).unwrap();
        let profile = DopingProfile::constant(1.3).unwrap();
        let pr = ModelParams {
            j_b: 0.0,
            v_b: 0.0,
            ..params()
        };
        let state = FullState {
            n: Field::from_fn(&g, |_| 1.3),
            j: Field::zeros(&g),
            e: Field::from_fn(&g, |_| 1.5 * 1.3),
            v: Field::zeros(&g),
        };
        let (rn, rj, re, rv) = residual_full(&state, &profile, &pr).unwrap();
        for (name, f) in [("n", rn), ("J", rj), ("E", re), ("V", rv)] {
            assert_eq!(f.max_abs(), 0.0, "residual {name} not exactly zero");
        }
    }

    #[test]
    fn residual_full_matches_analytic_evaluation() {
        // manufactured smooth state; every term evaluated from closed-form
        // derivatives at one point as the independent oracle
        let pr = ModelParams {
            nu: 0.3,
            epsilon: 0.2,
            tau: 1.1,
            mu: 0.7,
            lambda: 0.9,
            j_b: 0.0,
            v_b: 0.0,
            sigma: 0.0,
        };
        let profile = DopingProfile::constant(1.0).unwrap();
        let pi = std::f64::consts::PI;
        let nf = |x: f64| 1.2 + 0.3 * (pi * x).sin();
        let jf = |x: f64| 0.1 * (2.0 * pi * x).sin();
        let ef = |x: f64| 1.8 + 0.2 * (pi * x).cos();
        let vf = |x: f64| 0.05 * x * x * (1.0 - x);
        let mut errs = Vec::new();
        for n in [201usize, 401] {
            let g = Grid::new(n).unwrap();
            let state = FullState {
                n: Field::from_fn(&g, nf),
                j: Field::from_fn(&g, jf),
                e: Field::from_fn(&g, ef),
                v: Field::from_fn(&g, vf),
            };
            let (_, rj, _, _) = residual_full(&state, &profile, &pr).unwrap();
            let x: f64 = 0.4;
            let i = ((n - 1) as f64 * x).round() as usize;
            let (s, c) = ((pi * x).sin(), (pi * x).cos());
            let (s2, c2) = ((2.0 * pi * x).sin(), (2.0 * pi * x).cos());
            let nv = 1.2 + 0.3 * s;
            let n1 = 0.3 * pi * c;
            let n2 = -0.3 * pi * pi * s;
            let n3 = -0.3 * pi * pi * pi * c;
            let jv = 0.1 * s2;
            let j1 = 0.2 * pi * c2;
            let j2 = -0.4 * pi * pi * s2;
            let e1 = -0.2 * pi * s;
            let v1 = 0.05 * (2.0 * x - 3.0 * x * x);
            let e2s = pr.epsilon * pr.epsilon;
            let bohm = e2s / 18.0 * n3 - e2s / 9.0 * n1 * n2 / nv
                + e2s / 18.0 * n1 * n1 * n1 / (nv * nv);
            let exact = -pr.nu * j2
                + jv / pr.tau
                + 2.0 / 3.0 * (2.0 * jv * j1 / nv - jv * jv * n1 / (nv * nv))
                + 2.0 / 3.0 * e1
                - bohm
                - nv * v1
                + pr.mu * n1;
            errs.push((rj.values()[i] - exact).abs());
        }
        assert!(errs[0] < 2e-3, "{errs:?}");
        let ratio = errs[0] / errs[1];
        assert!((3.0..=5.2).contains(&ratio), "{errs:?} ratio {ratio}");
    }

    #[test]
    fn forcing_vanishes_at_zero_perturbation() {
        let g = Grid::new(101).unwrap();
        let profile = DopingProfile::sine(1.0, 0.05, 1).unwrap();
        let pr = params();
        let steady = FullState {
            n: profile.field(&g, 0),
            j: Field::from_fn(&g, |_| pr.j_b),
            e: profile.field(&g, 0).scale(1.5),
            v: Field::from_fn(&g, |x| 0.01 * x * (1.0 - x)),
        };
        let z = Field::zeros(&g);
        for flag in [false, true] {
            let (g1, g2) = forcing_g(&steady, (&z, &z, &z, &z), &pr, flag).unwrap();
            assert_eq!(g1.max_abs(), 0.0);
            assert_eq!(g2.max_abs(), 0.0);
        }
    }

    #[test]
    fn forcing_flag_selects_identical_formulas() {
        let g = Grid::new(101).unwrap();
        let profile = DopingProfile::sine(1.0, 0.05, 1).unwrap();
        let pr = params();
        let steady = FullState {
            n: profile.field(&g, 0),
            j: Field::from_fn(&g, |_| pr.j_b),
            e: profile.field(&g, 0).scale(1.5),
            v: Field::zeros(&g),
        };
        let pi = std::f64::consts::PI;
        let nt = Field::from_fn(&g, |x| 1e-3 * (pi * x).sin());
        let jt = Field::from_fn(&g, |x| 2e-3 * (2.0 * pi * x).sin());
        let et = Field::from_fn(&g, |x| -1e-3 * (pi * x).sin());
        let vt = Field::from_fn(&g, |x| 1e-3 * (pi * x).sin());
        let (a1, a2) = forcing_g(&steady, (&nt, &jt, &et, &vt), &pr, false).unwrap();
        let (b1, b2) = forcing_g(&steady, (&nt, &jt, &et, &vt), &pr, true).unwrap();
        assert_eq!(a1.axpy(-1.0, &b1).max_abs(), 0.0);
        assert_eq!(a2.axpy(-1.0, &b2).max_abs(), 0.0);
    }

    #[test]
    fn forcing_reduces_to_convective_difference_when_only_current_perturbed() {
        // eps = 0, nt = vt = 0: g1 = -(2/3) [ ((J*+Jt)^2 - J*^2)/n* ]_x
        let g = Grid::new(201).unwrap();
        let profile = DopingProfile::sine(1.0, 0.05, 1).unwrap();
        // epsilon = 0 fails ModelParams::validate but the pointwise formulas
        // accept it; construct directly.
        let pr = ModelParams {
            epsilon: 0.0,
            ..params()
        };
        let steady = FullState {
            n: profile.field(&g, 0),
            j: Field::from_fn(&g, |_| 0.02),
            e: profile.field(&g, 0).scale(1.5),
            v: Field::zeros(&g),
        };
        let z = Field::zeros(&g);
        let jt = Field::from_fn(&g, |x| 0.01 * (std::f64::consts::PI * x).sin());
        let (g1, _) = forcing_g(&steady, (&z, &jt, &z, &z), &pr, true).unwrap();
        let inner: Vec<f64> = (0..g.len())
            .map(|i| {
                let js = steady.j.values()[i];
                let jf = js + jt.values()[i];
                (jf * jf - js * js) / steady.n.values()[i]
            })
            .collect();
        let oracle = diff(&Field::from_values(&g, inner), 1)
            .unwrap()
            .scale(-2.0 / 3.0);
        assert!(g1.axpy(-1.0, &oracle).max_abs() < 1e-13);
    }

    #[test]
    fn profiles_satisfy_boundary_compatibility() {
        // endpoint values agree and derivative data match across the ends;
        // odd sine derivatives and all bump derivatives through order 3
        // vanish there outright
        let profiles = [
            DopingProfile::sine(1.0, 0.2, 3).unwrap(),
            DopingProfile::bump(0.8, 5.0, [1.0, 0.5, -0.5]).unwrap(),
        ];
        for p in &profiles {
            assert!((p.eval(0.0, 0) - p.rho_b).abs() < 1e-14);
            assert!((p.eval(1.0, 0) - p.rho_b).abs() < 1e-14);
            for k in 1..=3 {
                let (l, r) = (p.eval(0.0, k), p.eval(1.0, k));
                assert!((l - r).abs() < 1e-9, "{:?} k={k}: {l} vs {r}", p.kind);
            }
            for k in [1, 3] {
                assert!(p.eval(0.0, k).abs() < 1e-9, "{:?} k={k}", p.kind);
            }
        }
        let bump = &profiles[1];
        for k in 1..=3 {
            assert!(bump.eval(0.0, k).abs() < 1e-12);
            assert!(bump.eval(1.0, k).abs() < 1e-9);
        }
    }

    #[test]
    fn bump_derivatives_match_finite_differences() {
        let p = DopingProfile::bump(1.0, 40.0, [1.0, -0.3, 0.3]).unwrap();
        let h = 1e-5;
        for x in [0.2, 0.5, 0.77] {
            for k in 1..=2usize {
                let exact = p.eval(x, k);
                let approx = if k == 1 {
                    (p.eval(x + h, 0) - p.eval(x - h, 0)) / (2.0 * h)
                } else {
                    (p.eval(x + h, 0) - 2.0 * p.eval(x, 0) + p.eval(x - h, 0)) / (h * h)
                };
                assert!(
                    (exact - approx).abs() < 1e-4 * exact.abs().max(1.0),
                    "x={x} k={k}: {exact} vs {approx}"
                );
            }
        }
    }

    #[test]
    fn delta0_scaling_hits_target() {
        let g = Grid::new(201).unwrap();
        let p = DopingProfile::sine(1.0, 1.0, 1)
            .unwrap()
            .with_delta0(0.05, &g)
            .unwrap();
        assert!((p.delta0(&g).unwrap() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn diff_stencils_have_exact_zero_row_sum_effect() {
        // guards the subtract-center evaluation in grid::diff that makes
        // residual_full exactly zero on constants
        let g = Grid::new(41).unwrap();
        for k in 1..=4 {
            let f = Field::from_fn(&g, |_| std::f64::consts::E);
            assert_eq!(diff(&f, k).unwrap().max_abs(), 0.0, "k={k}");
        }
        // and the stencil generator still sees the true weights
        let (_, w) = diff_stencil(41, 1.0 / 40.0, 20, 2);
        assert!((w.iter().sum::<f64>()).abs() < 1e-9);
    }
}
