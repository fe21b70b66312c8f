//! Uniform mesh on [0,1], finite-difference derivatives up to order 4,
//! discrete Sobolev norms and the tridiagonal Poisson solver.
//!
//! Derivative stencils are generated by Fornberg's weight algorithm: centered
//! windows in the interior, shifted windows of the same length at the
//! boundary. A window of `k + 3` points (odd, centered) in the interior and
//! `k + 2` points at the edges gives second-order accuracy everywhere and
//! exactness on polynomials of degree <= k + 1.

use crate::band::solve_tridiagonal;
use crate::error::{QhdError, Result};
use std::sync::Arc;

/// Uniform grid x_i = i * h on [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n: usize,
    h: f64,
}

impl Grid {
    /// A grid needs at least 9 nodes so every stencil in the crate fits.
    pub const MIN_NODES: usize = 9;

    pub fn new(n: usize) -> Result<Arc<Grid>> {
        if n < Self::MIN_NODES {
            return Err(QhdError::GridTooCoarse {
                needed: Self::MIN_NODES,
                have: n,
                what: "grid construction",
            });
        }
        Ok(Arc::new(Grid {
            n,
            h: 1.0 / (n - 1) as f64,
        }))
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.n - 1 {
            1.0
        } else {
            i as f64 * self.h
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.x(i))
    }
}

/// Nodal real-valued function on a shared [`Grid`].
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>) -> Field {
        Field {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Field {
        assert_eq!(values.len(), grid.len(), "field length must match grid");
        Field {
            grid: grid.clone(),
            values,
        }
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64) -> f64) -> Field {
        let values = grid.nodes().map(f).collect();
        Field {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> (f64, usize) {
        let mut min = f64::INFINITY;
        let mut arg = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v < min {
                min = v;
                arg = i;
            }
        }
        (min, arg)
    }

    /// self + a * other, nodewise.
    pub fn axpy(&self, a: f64, other: &Field) -> Field {
        assert_eq!(self.len(), other.len());
        let values = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(x, y)| x + a * y)
            .collect();
        Field {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn scale(&self, a: f64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    pub fn binary(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        assert_eq!(self.len(), other.len());
        let values = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Field {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Fornberg weights for the m-th derivative at `z` from nodes `xs`.
/// Exact on polynomials of degree xs.len() - 1.
pub fn fornberg_weights(z: f64, xs: &[f64], m: usize) -> Vec<f64> {
    let nd = xs.len();
    let mut c = vec![vec![0.0; m + 1]; nd];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    c[0][0] = 1.0;
    for i in 1..nd {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// Stencil description for the k-th derivative at node i of an N-node grid:
/// (start node of the window, weights already divided by h^k).
pub fn diff_stencil(n: usize, h: f64, i: usize, k: usize) -> (usize, Vec<f64>) {
    assert!((1..=4).contains(&k), "derivative order must be 1..=4");
    let hw = k.div_ceil(2); // centered halfwidth
    let (start, width) = if i >= hw && i + hw < n {
        (i - hw, 2 * hw + 1)
    } else {
        // shifted window of k + 2 points, second-order one-sided
        let width = k + 2;
        let start = if i < hw { 0 } else { n - width };
        (start, width)
    };
    let xs: Vec<f64> = (0..width).map(|j| (start + j) as f64 * h).collect();
    let w = fornberg_weights(i as f64 * h, &xs, k);
    (start, w)
}

/// k-th derivative of `f`, second-order accurate, one-sided near boundaries.
pub fn diff(f: &Field, k: usize) -> Result<Field> {
    let n = f.len();
    if n < 2 * k + 3 {
        return Err(QhdError::GridTooCoarse {
            needed: 2 * k + 3,
            have: n,
            what: "derivative stencil",
        });
    }
    let h = f.grid().h();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let (start, w) = diff_stencil(n, h, i, k);
        // subtract-center evaluation: constants are annihilated exactly,
        // which keeps every residual identically zero at flat states
        let fi = f.values()[i];
        out[i] = w
            .iter()
            .enumerate()
            .map(|(j, &c)| c * (f.values()[start + j] - fi))
            .sum();
    }
    Ok(Field::from_values(f.grid(), out))
}

/// Composite trapezoid quadrature of a nodal function over [0,1].
pub fn trapezoid(f: &Field) -> f64 {
    let v = f.values();
    let n = v.len();
    let h = f.grid().h();
    let mut acc = 0.5 * (v[0] + v[n - 1]);
    for &x in &v[1..n - 1] {
        acc += x;
    }
    acc * h
}

/// Discrete Sobolev norm of order m: sqrt of the sum over j <= m of the
/// trapezoid integral of (d^j f)^2. Order 5 composes diff(diff(f,4),1),
/// the documented accuracy trade made for the fifth-order potential norm.
pub fn sobolev_norm(f: &Field, m: usize) -> Result<f64> {
    assert!(m <= 5, "sobolev order must be 0..=5");
    let mut acc = trapezoid(&f.binary(f, |a, b| a * b));
    for j in 1..=m {
        let d = if j <= 4 {
            diff(f, j)?
        } else {
            diff(&diff(f, 4)?, 1)?
        };
        acc += trapezoid(&d.binary(&d, |a, b| a * b));
    }
    Ok(acc.sqrt())
}

/// Solution of the Dirichlet Poisson problem lambda^2 V_xx = rhs with the
/// Neumann residuals (V_x(0), V_x(1)) reported as diagnostics: the continuum
/// boundary list is over-determined and the extra conditions encode a charge
/// balance better surfaced than silently enforced.
pub fn solve_poisson(
    rhs: &Field,
    lambda: f64,
    bc_left: f64,
    bc_right: f64,
) -> Result<(Field, (f64, f64))> {
    assert!(lambda > 0.0, "lambda must be positive");
    let n = rhs.len();
    let h = rhs.grid().h();
    let l2h2 = lambda * lambda / (h * h);
    let mut sub = vec![l2h2; n - 1];
    let mut sup = vec![l2h2; n - 1];
    let mut diag = vec![-2.0 * l2h2; n];
    let mut b = rhs.values().to_vec();
    // Dirichlet rows
    diag[0] = 1.0;
    sup[0] = 0.0;
    b[0] = bc_left;
    diag[n - 1] = 1.0;
    sub[n - 2] = 0.0;
    b[n - 1] = bc_right;
    let v = solve_tridiagonal(&sub, &diag, &sup, b)?;
    let v = Field::from_values(rhs.grid(), v);
    let vx = diff(&v, 1)?;
    let neumann = (vx.values()[0], vx.values()[n - 1]);
    Ok((v, neumann))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> Arc<Grid> {
        Grid::new(n).unwrap()
    }

    #[test]
    fn grid_endpoints_are_exact() {
        for n in [9, 101, 201, 256] {
            let g = grid(n);
            assert_eq!(g.x(0), 0.0);
            assert_eq!(g.x(n - 1), 1.0);
            assert!((g.h() * (n - 1) as f64 - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let g = grid(33);
        let f = Field::from_fn(&g, |_| 4.25);
        for k in 1..=4 {
            let d = diff(&f, k).unwrap();
            assert!(d.max_abs() < 1e-9, "k={k}: {}", d.max_abs());
        }
    }

    #[test]
    fn second_derivative_exact_on_quadratic() {
        let g = grid(21);
        let f = Field::from_fn(&g, |x| x * x);
        let d = diff(&f, 2).unwrap();
        for &v in d.values() {
            assert!((v - 2.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn stencils_exact_on_degree_k_plus_1() {
        let g = grid(31);
        for k in 1..=4usize {
            let deg = k + 1;
            let f = Field::from_fn(&g, |x| x.powi(deg as i32));
            let d = diff(&f, k).unwrap();
            // d^k/dx^k x^(k+1) = (k+1)! x
            let fact: f64 = (2..=deg).product::<usize>() as f64;
            for (i, &v) in d.values().iter().enumerate() {
                let exact = fact * g.x(i);
                assert!((v - exact).abs() < 1e-6, "k={k} i={i}: {v} vs {exact}");
            }
        }
    }

    #[test]
    fn third_derivative_converges_at_order_two() {
        let mut errs = Vec::new();
        for n in [65usize, 129, 257] {
            let g = grid(n);
            let f = Field::from_fn(&g, |x| (2.0 * std::f64::consts::PI * x).sin());
            let d = diff(&f, 3).unwrap();
            let tp = 2.0 * std::f64::consts::PI;
            let exact = Field::from_fn(&g, |x| -tp.powi(3) * (tp * x).cos());
            let err = d.axpy(-1.0, &exact).max_abs();
            errs.push(err);
        }
        for w in errs.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!(
                (slope - 2.0).abs() <= 0.3,
                "slope {slope} outside 2 +- 0.3 ({errs:?})"
            );
        }
    }

    #[test]
    fn composed_first_derivatives_match_second() {
        // measured away from the one-sided boundary stencils, where the
        // composition error degrades to O(h) by design
        let mut errs = Vec::new();
        for n in [65usize, 129, 257] {
            let g = grid(n);
            let f = Field::from_fn(&g, |x| (3.0 * x).sin() + x * x);
            let d11 = diff(&diff(&f, 1).unwrap(), 1).unwrap();
            let d2 = diff(&f, 2).unwrap();
            let delta = d11.axpy(-1.0, &d2);
            let interior = delta.values()[3..n - 3]
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            errs.push(interior);
        }
        for w in errs.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!((slope - 2.0).abs() <= 0.4, "slope {slope} ({errs:?})");
        }
    }

    #[test]
    fn sobolev_norm_of_constant_is_its_magnitude() {
        let g = grid(51);
        let f = Field::from_fn(&g, |_| -3.0);
        for m in [0, 3] {
            let n = sobolev_norm(&f, m).unwrap();
            assert!((n - 3.0).abs() < 1e-9, "m={m}: {n}");
        }
    }

    #[test]
    fn sobolev_h1_of_sine_matches_analytic_integral() {
        let g = grid(201);
        let tp = 2.0 * std::f64::consts::PI;
        let f = Field::from_fn(&g, |x| (tp * x).sin());
        let exact = (0.5 + tp * tp * 0.5).sqrt();
        let n = sobolev_norm(&f, 1).unwrap();
        assert!((n - exact).abs() < 2e-3, "{n} vs {exact}");
    }

    #[test]
    fn poisson_linear_potential_is_exact() {
        let g = grid(41);
        let rhs = Field::zeros(&g);
        let (v, _) = solve_poisson(&rhs, 0.7, 0.0, 2.5).unwrap();
        for (i, &val) in v.values().iter().enumerate() {
            assert!((val - 2.5 * g.x(i)).abs() < 1e-11);
        }
    }

    #[test]
    fn poisson_manufactured_sine_solution() {
        let g = grid(201);
        let pi = std::f64::consts::PI;
        let rhs = Field::from_fn(&g, |x| (pi * x).sin());
        let (v, _) = solve_poisson(&rhs, 1.0, 0.0, 0.0).unwrap();
        let exact = Field::from_fn(&g, |x| -(pi * x).sin() / (pi * pi));
        assert!(v.axpy(-1.0, &exact).max_abs() < 1e-4);
    }

    #[test]
    fn poisson_neumann_residuals_detect_charge_balance() {
        // rhs = cos(2 pi x): zero mean AND zero mean primitive -> V_x(0) -> 0.
        // rhs = sin(2 pi x): zero mean but biased primitive -> V_x(0) -> 1/(2 pi lambda^2).
        let tp = 2.0 * std::f64::consts::PI;
        let mut balanced = Vec::new();
        let mut biased = Vec::new();
        for n in [101usize, 201, 401] {
            let g = grid(n);
            let c = Field::from_fn(&g, |x| (tp * x).cos());
            let s = Field::from_fn(&g, |x| (tp * x).sin());
            let (_, nc) = solve_poisson(&c, 1.0, 0.0, 0.0).unwrap();
            let (_, ns) = solve_poisson(&s, 1.0, 0.0, 0.0).unwrap();
            balanced.push(nc.0.abs() + nc.1.abs());
            biased.push(ns.0.abs() + ns.1.abs());
        }
        assert!(balanced[2] < balanced[0] / 2.0, "balanced: {balanced:?}");
        let expect = 1.0 / tp;
        for &b in &biased {
            assert!((b - 2.0 * expect).abs() < 0.05, "biased: {biased:?}");
        }
    }

    #[test]
    fn poisson_identity_discrete_poincare() {
        let g = grid(201);
        let rhs = Field::from_fn(&g, |x| (std::f64::consts::PI * x).sin() * 0.3);
        let lambda = 0.8;
        let (v, _) = solve_poisson(&rhs, lambda, 0.0, 0.0).unwrap();
        let vxx = diff(&v, 2).unwrap();
        let lhs = sobolev_norm(&vxx, 0).unwrap();
        let r = sobolev_norm(&rhs, 0).unwrap() / (lambda * lambda);
        assert!((lhs - r).abs() < 1e-3 * r.max(1.0), "{lhs} vs {r}");
        let vn = sobolev_norm(&v, 0).unwrap();
        let vx = diff(&v, 1).unwrap();
        let vxn = sobolev_norm(&vx, 0).unwrap();
        assert!(vn <= vxn * (1.0 + 10.0 * g.h()));
    }

    proptest! {
        #[test]
        fn diff_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, k in 1usize..=4) {
            let g = grid(33);
            let f = Field::from_fn(&g, |x| (2.0 * x).sin());
            let gfield = Field::from_fn(&g, |x| x * x * x);
            let combo = f.scale(a).axpy(b, &gfield);
            let lhs = diff(&combo, k).unwrap();
            let rhs = diff(&f, k).unwrap().scale(a).axpy(b, &diff(&gfield, k).unwrap());
            // roundoff bound scales with the stencil conditioning 1/h^k
            let tol = 1e-14 * (1.0 + a.abs() + b.abs()) / g.h().powi(k as i32);
            prop_assert!(lhs.axpy(-1.0, &rhs).max_abs() <= tol);
        }
    }
}
