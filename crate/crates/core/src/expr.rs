//! Closed-form space-time expressions with exact derivatives.
//!
//! An [`Expr`] is a finite sum of terms
//! `c · Π x_i^{a_i} · t^b · e^{λt} · cos(k·x + ωt + φ)`.
//! The family is closed under `∂/∂x_i`, `∂/∂t`, multiplication by `x_n` or
//! `t`, substitution `x_n = c`, and antidifferentiation in `x_n`, which is
//! all the generators need to build exact divergence-form pairs.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::field::{MatrixField, ScalarField, VectorField};
use crate::geometry::{Grid, Point};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    pub x_pow: Vec<u32>,
    pub t_pow: u32,
    /// `λ` in `e^{λt}`.
    pub rate: f64,
    pub k: Vec<f64>,
    pub omega: f64,
    pub phase: f64,
}

impl Term {
    pub fn constant(n: usize, c: f64) -> Self {
        Self { coeff: c, x_pow: vec![0; n], t_pow: 0, rate: 0.0, k: vec![0.0; n], omega: 0.0, phase: 0.0 }
    }

    /// `c · x^a · t^b` (a pure monomial).
    pub fn monomial(c: f64, x_pow: Vec<u32>, t_pow: u32) -> Self {
        let n = x_pow.len();
        Self { coeff: c, x_pow, t_pow, rate: 0.0, k: vec![0.0; n], omega: 0.0, phase: 0.0 }
    }

    /// `c · e^{λt} cos(k·x + ωt + φ)`.
    pub fn wave(c: f64, k: Vec<f64>, omega: f64, phase: f64, rate: f64) -> Self {
        let n = k.len();
        Self { coeff: c, x_pow: vec![0; n], t_pow: 0, rate, k, omega, phase }
    }

    pub fn n(&self) -> usize {
        self.x_pow.len()
    }

    fn oscillates(&self) -> bool {
        self.omega != 0.0 || self.phase != 0.0 || self.k.iter().any(|&k| k != 0.0)
    }

    pub fn value(&self, x: &[f64], t: f64) -> f64 {
        let mut v = self.coeff;
        for (xi, &a) in x.iter().zip(&self.x_pow) {
            if a > 0 {
                v *= xi.powi(a as i32);
            }
        }
        if self.t_pow > 0 {
            v *= t.powi(self.t_pow as i32);
        }
        if self.rate != 0.0 {
            v *= (self.rate * t).exp();
        }
        if self.oscillates() {
            let theta: f64 = self.k.iter().zip(x).map(|(k, xi)| k * xi).sum::<f64>() + self.omega * t + self.phase;
            v *= theta.cos();
        }
        v
    }

    fn with_phase_shift(&self, factor: f64, shift: f64) -> Self {
        Self { coeff: self.coeff * factor, phase: self.phase + shift, ..self.clone() }
    }

    fn dx(&self, i: usize, out: &mut Vec<Term>) {
        let a = self.x_pow[i];
        if a > 0 {
            let mut t = self.clone();
            t.coeff *= a as f64;
            t.x_pow[i] = a - 1;
            out.push(t);
        }
        if self.k[i] != 0.0 {
            out.push(self.with_phase_shift(self.k[i], FRAC_PI_2));
        }
    }

    fn dt(&self, out: &mut Vec<Term>) {
        if self.t_pow > 0 {
            let mut t = self.clone();
            t.coeff *= self.t_pow as f64;
            t.t_pow -= 1;
            out.push(t);
        }
        if self.rate != 0.0 {
            out.push(Self { coeff: self.coeff * self.rate, ..self.clone() });
        }
        if self.omega != 0.0 {
            out.push(self.with_phase_shift(self.omega, FRAC_PI_2));
        }
    }

    /// A primitive in `x_n` (any constant of integration).
    fn primitive_last(&self, out: &mut Vec<Term>) {
        let i = self.n() - 1;
        let a = self.x_pow[i];
        let k = self.k[i];
        if k == 0.0 {
            let mut t = self.clone();
            t.coeff /= (a + 1) as f64;
            t.x_pow[i] = a + 1;
            out.push(t);
            return;
        }
        // ∫ x^a cos(kx + θ) = x^a cos(kx + θ - π/2)/k - (a/k) ∫ x^{a-1} cos(kx + θ - π/2)
        let shifted = self.with_phase_shift(1.0 / k, -FRAC_PI_2);
        out.push(shifted.clone());
        if a > 0 {
            let mut rest = shifted;
            rest.coeff *= -(a as f64);
            rest.x_pow[i] = a - 1;
            rest.primitive_last(out);
        }
    }

    fn substitute_last(&self, c: f64) -> Self {
        let i = self.n() - 1;
        let mut t = self.clone();
        t.coeff *= c.powi(self.x_pow[i] as i32);
        t.x_pow[i] = 0;
        t.phase += self.k[i] * c;
        t.k[i] = 0.0;
        t
    }
}

/// Sum of [`Term`]s in `n` space dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expr {
    pub n: usize,
    pub terms: Vec<Term>,
}

impl Expr {
    pub fn zero(n: usize) -> Self {
        Self { n, terms: Vec::new() }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self { n, terms: vec![Term::constant(n, c)] }.pruned()
    }

    /// The coordinate function `x_i`.
    pub fn coordinate(n: usize, i: usize) -> Self {
        let mut a = vec![0; n];
        a[i] = 1;
        Self { n, terms: vec![Term::monomial(1.0, a, 0)] }
    }

    pub fn time(n: usize) -> Self {
        Self { n, terms: vec![Term::monomial(1.0, vec![0; n], 1)] }
    }

    pub fn from_terms(n: usize, terms: Vec<Term>) -> Self {
        assert!(terms.iter().all(|t| t.n() == n), "term dimension");
        Self { n, terms }.pruned()
    }

    fn pruned(mut self) -> Self {
        self.terms.retain(|t| t.coeff != 0.0);
        self
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn value(&self, x: &[f64], t: f64) -> f64 {
        self.terms.iter().map(|term| term.value(x, t)).sum()
    }

    pub fn dx(&self, i: usize) -> Self {
        let mut out = Vec::new();
        for t in &self.terms {
            t.dx(i, &mut out);
        }
        Self { n: self.n, terms: out }.pruned()
    }

    pub fn dt(&self) -> Self {
        let mut out = Vec::new();
        for t in &self.terms {
            t.dt(&mut out);
        }
        Self { n: self.n, terms: out }.pruned()
    }

    /// `∫_{lower}^{x_n} self(x', s, t) ds`.
    pub fn integral_last_from(&self, lower: f64) -> Self {
        let mut prim = Vec::new();
        for t in &self.terms {
            t.primitive_last(&mut prim);
        }
        let at_lower: Vec<Term> = prim.iter().map(|t| t.with_phase_shift(-1.0, 0.0).substitute_last(lower)).collect();
        prim.extend(at_lower);
        Self { n: self.n, terms: prim }.pruned()
    }

    /// `self` with `x_n` replaced by the constant `c`.
    pub fn substitute_last(&self, c: f64) -> Self {
        Self { n: self.n, terms: self.terms.iter().map(|t| t.substitute_last(c)).collect() }.pruned()
    }

    pub fn mul_last(&self) -> Self {
        let i = self.n - 1;
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let mut t = t.clone();
                t.x_pow[i] += 1;
                t
            })
            .collect();
        Self { n: self.n, terms }
    }

    pub fn mul_time(&self) -> Self {
        let terms = self.terms.iter().map(|t| Term { t_pow: t.t_pow + 1, ..t.clone() }).collect();
        Self { n: self.n, terms }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let terms = self.terms.iter().map(|t| Term { coeff: t.coeff * c, ..t.clone() }).collect();
        Self { n: self.n, terms }.pruned()
    }

    pub fn add(&self, other: &Expr) -> Self {
        assert_eq!(self.n, other.n, "dimension mismatch");
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self { n: self.n, terms }.pruned()
    }

    pub fn sub(&self, other: &Expr) -> Self {
        self.add(&other.scaled(-1.0))
    }
}

/// A function with exact first derivatives, spatial Hessian, and time derivative.
pub trait SmoothFunction: Send + Sync {
    fn n(&self) -> usize;
    fn value(&self, x: &[f64], t: f64) -> f64;
    fn gradient(&self, x: &[f64], t: f64, out: &mut [f64]);
    fn time_derivative(&self, x: &[f64], t: f64) -> f64;
    /// Row-major `n × n` spatial Hessian.
    fn hessian(&self, x: &[f64], t: f64, out: &mut [f64]);
}

/// An [`Expr`] together with its precomputed derivatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Analytic {
    pub expr: Expr,
    grad: Vec<Expr>,
    hess: Vec<Expr>,
    ut: Expr,
}

impl Analytic {
    pub fn new(expr: Expr) -> Self {
        let n = expr.n;
        let grad: Vec<Expr> = (0..n).map(|i| expr.dx(i)).collect();
        let hess = (0..n * n).map(|ij| grad[ij / n].dx(ij % n)).collect();
        let ut = expr.dt();
        Self { expr, grad, hess, ut }
    }

    pub fn grad_expr(&self, i: usize) -> &Expr {
        &self.grad[i]
    }

    pub fn time_derivative_expr(&self) -> &Expr {
        &self.ut
    }
}

impl SmoothFunction for Analytic {
    fn n(&self) -> usize {
        self.expr.n
    }

    fn value(&self, x: &[f64], t: f64) -> f64 {
        self.expr.value(x, t)
    }

    fn gradient(&self, x: &[f64], t: f64, out: &mut [f64]) {
        for (o, g) in out.iter_mut().zip(&self.grad) {
            *o = g.value(x, t);
        }
    }

    fn time_derivative(&self, x: &[f64], t: f64) -> f64 {
        self.ut.value(x, t)
    }

    fn hessian(&self, x: &[f64], t: f64, out: &mut [f64]) {
        for (o, g) in out.iter_mut().zip(&self.hess) {
            *o = g.value(x, t);
        }
    }
}

/// `(4πτ)^{-n/2} exp(-|x - x0|² / 4τ)` with `τ = t - t0 + shift`; zero,
/// with zero derivatives, where `τ ≤ 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatKernel {
    pub x0: Vec<f64>,
    pub t0: f64,
    pub shift: f64,
}

impl HeatKernel {
    pub fn new(z0: &Point, shift: f64) -> Self {
        Self { x0: z0.x.clone(), t0: z0.t, shift }
    }

    pub fn tau(&self, t: f64) -> f64 {
        t - self.t0 + self.shift
    }
}

impl SmoothFunction for HeatKernel {
    fn n(&self) -> usize {
        self.x0.len()
    }

    fn value(&self, x: &[f64], t: f64) -> f64 {
        let tau = self.tau(t);
        if tau <= 0.0 {
            return 0.0;
        }
        let sq: f64 = x.iter().zip(&self.x0).map(|(a, b)| (a - b) * (a - b)).sum();
        (4.0 * PI * tau).powf(-(self.n() as f64) / 2.0) * (-sq / (4.0 * tau)).exp()
    }

    fn gradient(&self, x: &[f64], t: f64, out: &mut [f64]) {
        let u = self.value(x, t);
        let tau = self.tau(t);
        if u == 0.0 {
            out.fill(0.0);
            return;
        }
        for ((o, xi), x0) in out.iter_mut().zip(x).zip(&self.x0) {
            *o = -(xi - x0) / (2.0 * tau) * u;
        }
    }

    fn time_derivative(&self, x: &[f64], t: f64) -> f64 {
        let u = self.value(x, t);
        if u == 0.0 {
            return 0.0;
        }
        let tau = self.tau(t);
        let sq: f64 = x.iter().zip(&self.x0).map(|(a, b)| (a - b) * (a - b)).sum();
        (sq / (4.0 * tau * tau) - self.n() as f64 / (2.0 * tau)) * u
    }

    fn hessian(&self, x: &[f64], t: f64, out: &mut [f64]) {
        let n = self.n();
        let u = self.value(x, t);
        if u == 0.0 {
            out.fill(0.0);
            return;
        }
        let tau = self.tau(t);
        for i in 0..n {
            for j in 0..n {
                let yi = x[i] - self.x0[i];
                let yj = x[j] - self.x0[j];
                let delta = if i == j { 1.0 / (2.0 * tau) } else { 0.0 };
                out[i * n + j] = (yi * yj / (4.0 * tau * tau) - delta) * u;
            }
        }
    }
}

/// Samples of a [`SmoothFunction`] and its derivatives at cell centers.
pub fn sample_value(f: &dyn SmoothFunction, grid: &Grid) -> ScalarField {
    ScalarField::from_fn(grid, |x, t| f.value(x, t))
}

pub fn sample_gradient(f: &dyn SmoothFunction, grid: &Grid) -> VectorField {
    VectorField::from_fn(grid, grid.n(), |x, t, out| f.gradient(x, t, out))
}

pub fn sample_time_derivative(f: &dyn SmoothFunction, grid: &Grid) -> ScalarField {
    ScalarField::from_fn(grid, |x, t| f.time_derivative(x, t))
}

pub fn sample_hessian(f: &dyn SmoothFunction, grid: &Grid) -> MatrixField {
    let n = grid.n();
    let mut entries = vec![vec![0.0; grid.len()]; n * n];
    let mut x = vec![0.0; n];
    let mut buf = vec![0.0; n * n];
    for c in 0..grid.len() {
        let t = grid.center_into(c, &mut x);
        f.hessian(&x, t, &mut buf);
        for (e, v) in entries.iter_mut().zip(&buf) {
            e[c] = *v;
        }
    }
    MatrixField::new(grid, n, entries).expect("entry count matches grid")
}
