//! Steady-state construction: assemble the linearized banded operator of the
//! reformulated system, iterate the contraction map, and fall back to a
//! theta-homotopy when the plain fixed point diverges.
//!
//! Unknowns are interleaved per node as (p_i, q_i, r_i, V_i), band halfwidth
//! 9. The continuity row is carried in its integrated form: the q-slot of
//! every node holds q - nu p_x = 0 with the same stencils as `grid::diff`,
//! so the current-density relation is exact at the converged state rather
//! than O(h^2). The p-slot holds Dirichlet rows at the ends, the endpoint
//! slope condition p_x(0) = 0 at the first interior node (this pins the
//! integration constant of the relation, equivalently q(0) = 0), and the
//! momentum row elsewhere. Energy and Poisson rows fill the r- and V-slots.
//!
//! The boundary list of the continuum problem is over-determined by one
//! scalar beyond the potential's Neumann pair: with the relation and q(0)=0
//! enforced, the right-end current offset q(1) = nu p_x(1) cannot also be
//! pinned. It is reported as a diagnostic next to the Neumann residuals; it
//! vanishes for symmetric instances with J_b = 0 and scales with J_b.

use crate::band::BandMatrix;
use crate::error::{QhdError, Result};
use crate::grid::{diff, diff_stencil, sobolev_norm, Field, Grid};
use crate::model::{
    nonlinear_f, quantum_rhs, steady_coeffs, DopingProfile, FullState, ModelParams, SteadyCoeffs,
};
use std::sync::Arc;

const KL: usize = 9;
const KU: usize = 9;

/// Solver context: everything fixed for one (grid, profile, params) triple.
pub struct SteadySystem {
    pub grid: Arc<Grid>,
    pub profile: DopingProfile,
    pub params: ModelParams,
    pub coeffs: SteadyCoeffs,
    rho: Field,
}

/// The stacked shifted unknowns of one iterate.
#[derive(Debug, Clone)]
pub struct SteadyIterate {
    pub p: Field,
    pub q: Field,
    pub r: Field,
    pub v: Field,
}

impl SteadyIterate {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        SteadyIterate {
            p: Field::zeros(grid),
            q: Field::zeros(grid),
            r: Field::zeros(grid),
            v: Field::zeros(grid),
        }
    }

    fn from_packed(grid: &Arc<Grid>, w: &[f64]) -> Self {
        let n = grid.len();
        let pick = |c: usize| Field::from_values(grid, (0..n).map(|i| w[4 * i + c]).collect());
        SteadyIterate {
            p: pick(0),
            q: pick(1),
            r: pick(2),
            v: pick(3),
        }
    }

    /// Interleaved stacking (p_i, q_i, r_i, V_i), the operator's ordering.
    pub fn packed(&self) -> Vec<f64> {
        let n = self.p.len();
        let mut w = vec![0.0; 4 * n];
        for i in 0..n {
            w[4 * i] = self.p.values()[i];
            w[4 * i + 1] = self.q.values()[i];
            w[4 * i + 2] = self.r.values()[i];
            w[4 * i + 3] = self.v.values()[i];
        }
        w
    }

    /// Composite iteration norm: discrete H^2 on each component.
    pub fn h2_norm(&self) -> Result<f64> {
        let a = sobolev_norm(&self.p, 2)?;
        let b = sobolev_norm(&self.q, 2)?;
        let c = sobolev_norm(&self.r, 2)?;
        let d = sobolev_norm(&self.v, 2)?;
        Ok((a * a + b * b + c * c + d * d).sqrt())
    }

    fn delta_norm(&self, other: &SteadyIterate) -> Result<f64> {
        SteadyIterate {
            p: self.p.axpy(-1.0, &other.p),
            q: self.q.axpy(-1.0, &other.q),
            r: self.r.axpy(-1.0, &other.r),
            v: self.v.axpy(-1.0, &other.v),
        }
        .h2_norm()
    }
}

/// Converged steady state with its derived full-variable fields and the
/// solve diagnostics.
#[derive(Debug, Clone)]
pub struct SteadyState {
    pub p: Field,
    pub q: Field,
    pub r: Field,
    pub vstar: Field,
    pub n_star: Field,
    pub j_star: Field,
    pub e_star: Field,
    pub diagnostics: SteadyDiagnostics,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SteadyDiagnostics {
    pub iterations: usize,
    pub final_update_norm: f64,
    pub contraction_factors: Vec<f64>,
    /// max over nodes of |q - nu p_x|; structurally at roundoff level.
    pub relation_infnorm: f64,
    /// (V_x(0), V_x(1)): the over-determined Neumann data, reported.
    pub neumann_residual: (f64, f64),
    /// q(1) = nu p_x(1): the unpinnable right-end current offset.
    pub current_mismatch_right: f64,
    /// theta values visited by the continuation path (empty for plain Picard).
    pub theta_path: Vec<f64>,
}

impl SteadyState {
    pub fn full_state(&self) -> FullState {
        FullState {
            n: self.n_star.clone(),
            j: self.j_star.clone(),
            e: self.e_star.clone(),
            v: self.vstar.clone(),
        }
    }
}

impl SteadySystem {
    pub fn new(grid: &Arc<Grid>, profile: &DopingProfile, params: &ModelParams) -> SteadySystem {
        SteadySystem {
            grid: grid.clone(),
            profile: profile.clone(),
            params: *params,
            coeffs: steady_coeffs(grid, profile, params),
            rho: profile.field(grid, 0),
        }
    }

    /// The reformulated operator of the steady system.
    pub fn assemble_l(&self) -> BandMatrix {
        let n = self.grid.len();
        let h = self.grid.h();
        let pr = &self.params;
        let e2s = pr.epsilon * pr.epsilon;
        let mut m = BandMatrix::new(4 * n, KL, KU);
        // Dirichlet rows for p, r, V at both ends
        for i in [0, n - 1] {
            for c in [0usize, 2, 3] {
                m.add(4 * i + c, 4 * i + c, 1.0);
            }
        }
        // q-slot: the integrated continuity relation at every node
        for i in 0..n {
            let row = 4 * i + 1;
            m.add(row, 4 * i + 1, 1.0);
            let (s1, w1) = diff_stencil(n, h, i, 1);
            for (j, &c) in w1.iter().enumerate() {
                m.add(row, 4 * (s1 + j), -pr.nu * c);
            }
        }
        // p-slot at the first interior node: p_x(0) = 0, i.e. q(0) = 0
        {
            let (sb, wb) = diff_stencil(n, h, 0, 1);
            for (j, &c) in wb.iter().enumerate() {
                m.add(4, 4 * (sb + j), c);
            }
        }
        // p-slot: momentum rows
        for i in 2..n - 1 {
            let row = 4 * i;
            let (s1, w1) = diff_stencil(n, h, i, 1);
            let (s2, w2) = diff_stencil(n, h, i, 2);
            for (j, &c) in w2.iter().enumerate() {
                m.add(row, 4 * (s2 + j) + 1, -(pr.nu + e2s / (18.0 * pr.nu)) * c);
            }
            m.add(row, 4 * i + 1, self.coeffs.b2.values()[i]);
            m.add(row, 4 * i, self.coeffs.c2.values()[i]);
            for (j, &c) in w1.iter().enumerate() {
                m.add(row, 4 * (s1 + j), self.coeffs.d2.values()[i] * c);
                m.add(row, 4 * (s1 + j) + 1, self.coeffs.e2.values()[i] * c);
                m.add(row, 4 * (s1 + j) + 2, (2.0 / 3.0) * c);
                m.add(row, 4 * (s1 + j) + 3, -self.rho.values()[i] * c);
            }
        }
        // r-slot: energy rows
        for i in 1..n - 1 {
            let row = 4 * i + 2;
            let (s1, w1) = diff_stencil(n, h, i, 1);
            let (s2, w2) = diff_stencil(n, h, i, 2);
            for (j, &c) in w2.iter().enumerate() {
                m.add(row, 4 * (s2 + j) + 2, -pr.nu * c);
            }
            m.add(row, 4 * i + 2, self.coeffs.b3.values()[i]);
            m.add(row, 4 * i, self.coeffs.c3.values()[i]);
            m.add(row, 4 * i + 1, self.coeffs.h3.values()[i]);
            let conv = 5.0 / 3.0 * pr.j_b / self.rho.values()[i];
            for (j, &c) in w1.iter().enumerate() {
                m.add(row, 4 * (s1 + j), self.coeffs.d3.values()[i] * c);
                m.add(row, 4 * (s1 + j) + 1, self.coeffs.e3.values()[i] * c);
                m.add(row, 4 * (s1 + j) + 2, conv * c);
                m.add(row, 4 * (s1 + j) + 3, -pr.j_b * c);
            }
        }
        // V-slot: Poisson rows
        for i in 1..n - 1 {
            let row = 4 * i + 3;
            let (s2, w2) = diff_stencil(n, h, i, 2);
            for (j, &c) in w2.iter().enumerate() {
                m.add(row, 4 * (s2 + j) + 3, -pr.lambda * pr.lambda * c);
            }
            m.add(row, 4 * i, 1.0);
        }
        m
    }

    /// The homotopy base operator: -w_xx + w per component at interior
    /// nodes, Dirichlet rows for all four components at the ends.
    pub fn assemble_l0(&self) -> BandMatrix {
        let n = self.grid.len();
        let h = self.grid.h();
        let mut m = BandMatrix::new(4 * n, KL, KU);
        for i in [0, n - 1] {
            for c in 0..4 {
                m.add(4 * i + c, 4 * i + c, 1.0);
            }
        }
        for i in 1..n - 1 {
            let (s2, w2) = diff_stencil(n, h, i, 2);
            for c in 0..4 {
                let row = 4 * i + c;
                for (j, &wj) in w2.iter().enumerate() {
                    m.add(row, 4 * (s2 + j) + c, -wj);
                }
                m.add(row, row, 1.0);
            }
        }
        m
    }

    /// Convex blend theta * L + (1 - theta) * L0.
    pub fn assemble_l_theta(&self, theta: f64) -> BandMatrix {
        assert!((0.0..=1.0).contains(&theta));
        self.assemble_l()
            .blend(&self.assemble_l0(), theta, 1.0 - theta)
    }

    /// Fixed-point right-hand side (0, a2 + f2(u), a3 + f3(u) + Qf(u), 0)
    /// with the boundary data in the endpoint rows.
    pub fn rhs_from(&self, u: &SteadyIterate) -> Result<Vec<f64>> {
        let n = self.grid.len();
        let vx = diff(&u.v, 1)?;
        let (f2, f3) = nonlinear_f(&u.p, &u.q, &u.r, &vx, &self.profile, &self.params)?;
        let qf = quantum_rhs(&u.p, &u.q, &self.profile, &self.params)?;
        let mut rhs = vec![0.0; 4 * n];
        for i in 2..n - 1 {
            rhs[4 * i] = self.coeffs.a2.values()[i] + f2.values()[i];
        }
        for i in 1..n - 1 {
            rhs[4 * i + 2] = self.coeffs.a3.values()[i] + f3.values()[i] + qf.values()[i];
        }
        rhs[4 * (n - 1) + 3] = self.params.v_b;
        Ok(rhs)
    }

    fn check_density(&self, w: &SteadyIterate) -> Result<()> {
        let (min, node) = w.p.binary(&self.rho, |a, b| a + b).min();
        if min <= 0.0 {
            return Err(QhdError::DegenerateDensity { min, node });
        }
        Ok(())
    }

    fn finish(&self, w: SteadyIterate, diag: SteadyDiagnostics) -> Result<SteadyState> {
        self.check_density(&w)?;
        let n_star = w.p.binary(&self.rho, |a, b| a + b);
        let j_star = w.q.map(|v| v + self.params.j_b);
        let e_star = w.r.binary(&self.rho, |a, b| a + 1.5 * b);
        Ok(SteadyState {
            p: w.p,
            q: w.q,
            r: w.r,
            vstar: w.v,
            n_star,
            j_star,
            e_star,
            diagnostics: diag,
        })
    }

    fn diagnostics_for(
        &self,
        w: &SteadyIterate,
        iterations: usize,
        final_update_norm: f64,
        contraction_factors: Vec<f64>,
        theta_path: Vec<f64>,
    ) -> Result<SteadyDiagnostics> {
        let px = diff(&w.p, 1)?;
        let relation = w.q.axpy(-self.params.nu, &px).max_abs();
        let vx = diff(&w.v, 1)?;
        let nlen = self.grid.len();
        Ok(SteadyDiagnostics {
            iterations,
            final_update_norm,
            contraction_factors,
            relation_infnorm: relation,
            neumann_residual: (vx.values()[0], vx.values()[nlen - 1]),
            current_mismatch_right: w.q.values()[nlen - 1],
            theta_path,
        })
    }

    /// Contraction iteration from a caller-supplied initial iterate; the
    /// multi-start uniqueness check uses nonzero seeds, everything else zero.
    pub fn picard_solve_from(
        &self,
        start: SteadyIterate,
        tol: f64,
        max_iter: usize,
    ) -> Result<SteadyState> {
        assert!(tol > 0.0);
        let lu = self.assemble_l().factor()?;
        let mut w = start;
        self.check_density(&w)?;
        let mut factors = Vec::new();
        let mut prev_delta: Option<f64> = None;
        let mut growth = 0usize;
        for it in 1..=max_iter {
            let rhs = self.rhs_from(&w)?;
            let next = SteadyIterate::from_packed(&self.grid, &lu.solve(&rhs));
            self.check_density(&next)?;
            let delta = next.delta_norm(&w)?;
            if let Some(prev) = prev_delta {
                if prev > 0.0 && delta > 1e-14 {
                    factors.push(delta / prev);
                }
                if delta > prev {
                    growth += 1;
                    if growth >= 3 {
                        return Err(QhdError::DivergedIteration {
                            iterations: it,
                            norm: delta,
                        });
                    }
                } else {
                    growth = 0;
                }
            }
            prev_delta = Some(delta);
            w = next;
            if delta < tol * (1.0 + w.h2_norm()?) {
                let diag = self.diagnostics_for(&w, it, delta, factors, Vec::new())?;
                return self.finish(w, diag);
            }
        }
        Err(QhdError::MaxIterExceeded {
            max_iter,
            norm: prev_delta.unwrap_or(f64::NAN),
        })
    }

    /// The contraction map from the zero iterate.
    pub fn picard_solve(&self, tol: f64, max_iter: usize) -> Result<SteadyState> {
        self.picard_solve_from(SteadyIterate::zeros(&self.grid), tol, max_iter)
    }

    /// Homotopy solve: march theta from 0 to 1; at each step the blended
    /// operator is refactored and the nonlinear fixed point is iterated,
    /// seeded by the previous step's solution. (Iterating with the previous
    /// step's factorization plus a (theta0 - theta)(L - L0) correction, the
    /// proof's device, loses contraction near theta = 1 on the discrete
    /// operator; refactoring is cheap for a banded system.)
    pub fn continuation_solve(&self, theta_step: f64, tol: f64) -> Result<SteadyState> {
        assert!(theta_step > 0.0 && theta_step <= 1.0);
        const STEP_FLOOR: f64 = 1.0 / 64.0;
        const INNER_MAX: usize = 400;

        let mut theta0 = 0.0;
        let mut theta_path = vec![0.0];
        // solve the theta = 0 problem first
        let lu0 = self.assemble_l0().factor()?;
        let mut w =
            self.inner_fixed_point(&lu0, SteadyIterate::zeros(&self.grid), tol, INNER_MAX)?;

        let mut step = theta_step.min(1.0);
        let mut total_steps = 0usize;
        while theta0 < 1.0 {
            let theta = (theta0 + step).min(1.0);
            let base = self.assemble_l_theta(theta).factor()?;
            match self.inner_fixed_point(&base, w.clone(), tol, INNER_MAX) {
                Ok(next) => {
                    w = next;
                    theta0 = theta;
                    theta_path.push(theta);
                    total_steps += 1;
                }
                Err(QhdError::DivergedIteration { .. }) | Err(QhdError::MaxIterExceeded { .. }) => {
                    step /= 2.0;
                    if step < STEP_FLOOR {
                        return Err(QhdError::ContinuationStalled {
                            theta: theta0,
                            floor: STEP_FLOOR,
                        });
                    }
                }
                Err(e) => return Err(e),
            }
        }
        // polish at theta = 1 with the plain contraction map
        let polished = self.picard_solve_from(w, tol, 200)?;
        let mut diag = polished.diagnostics.clone();
        diag.theta_path = theta_path;
        diag.iterations += total_steps;
        let iterate = SteadyIterate {
            p: polished.p.clone(),
            q: polished.q.clone(),
            r: polished.r.clone(),
            v: polished.vstar.clone(),
        };
        self.finish(iterate, diag)
    }

    fn inner_fixed_point(
        &self,
        base: &crate::band::BandLu,
        start: SteadyIterate,
        tol: f64,
        max_iter: usize,
    ) -> Result<SteadyIterate> {
        let mut w = start;
        let mut prev: Option<f64> = None;
        let mut growth = 0usize;
        for _ in 1..=max_iter {
            let rhs = self.rhs_from(&w)?;
            let next = SteadyIterate::from_packed(&self.grid, &base.solve(&rhs));
            self.check_density(&next)?;
            let delta = next.delta_norm(&w)?;
            w = next;
            if delta < tol * (1.0 + w.h2_norm()?) {
                return Ok(w);
            }
            if let Some(p) = prev {
                if delta > p {
                    growth += 1;
                    if growth >= 3 {
                        return Err(QhdError::DivergedIteration {
                            iterations: max_iter,
                            norm: delta,
                        });
                    }
                } else {
                    growth = 0;
                }
            }
            prev = Some(delta);
        }
        Err(QhdError::MaxIterExceeded {
            max_iter,
            norm: prev.unwrap_or(f64::NAN),
        })
    }
}

/// Ratio (|p|_3^2 + |q|_2^2 + |r|_2^2 + |V*|_5^2) / delta0^2 measuring the
/// delta0-squared law of the steady construction.
pub fn steady_bound_ratio(steady: &SteadyState, profile: &DopingProfile) -> Result<f64> {
    let grid = steady.p.grid();
    let delta0 = profile.delta0(grid)?;
    if delta0 == 0.0 {
        return Err(QhdError::ZeroDelta0);
    }
    let np = sobolev_norm(&steady.p, 3)?;
    let nq = sobolev_norm(&steady.q, 2)?;
    let nr = sobolev_norm(&steady.r, 2)?;
    let nv = sobolev_norm(&steady.vstar, 5)?;
    Ok((np * np + nq * nq + nr * nr + nv * nv) / (delta0 * delta0))
}
