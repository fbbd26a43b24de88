//! Test weights, exact divergence-form pairs, and smooth `W^{2,1}` samples.
//!
//! Pairs are described by grid-independent [`PairSpec`]s so the same battery
//! can be sampled at several resolutions.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::{Provenance, SolutionPair};
use crate::error::{Error, Result};
use crate::expr::{sample_gradient, sample_value, Analytic, Expr, HeatKernel, SmoothFunction, Term};
use crate::field::{ScalarField, VectorField};
use crate::geometry::{cells_of, parabolic_distance_raw, Grid, ParabolicRegion, Point};
use crate::weights::WeightField;

/// Multiplier in the declared residual tolerance
/// `factor · h² · (max|u| + max|G|) / ℓ²`.
pub const TOLERANCE_FACTOR: f64 = 10.0;

/// `min(6, 1/(4h))`.
pub fn default_kmax(h: f64) -> f64 {
    (1.0 / (4.0 * h)).min(6.0)
}

/// Grid-independent description of a generated pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum PairSpec {
    Constant { value: f64 },
    HeatKernel { x0: Vec<f64>, t0: f64, shift: f64 },
    Fourier { seed: u64, modes: usize, kmax: f64 },
    Antiderivative { seed: u64, terms: usize, kmax: f64 },
    ZeroTrace { seed: u64, modes: usize, kmax: f64 },
    ZeroInitial { seed: u64, modes: usize, kmax: f64 },
}

impl PairSpec {
    pub fn id(&self) -> &'static str {
        match self {
            PairSpec::Constant { .. } => "constant",
            PairSpec::HeatKernel { .. } => "heat_kernel",
            PairSpec::Fourier { .. } => "fourier",
            PairSpec::Antiderivative { .. } => "antiderivative",
            PairSpec::ZeroTrace { .. } => "zero_trace",
            PairSpec::ZeroInitial { .. } => "zero_initial",
        }
    }

    pub fn build(&self, grid: &Grid, region: &ParabolicRegion) -> Result<SolutionPair> {
        match self {
            PairSpec::Constant { value } => constant_solution(grid, region, *value),
            PairSpec::HeatKernel { x0, t0, shift } => {
                heat_kernel_solution(grid, region, &Point::new(x0.clone(), *t0), *shift)
            }
            PairSpec::Fourier { seed, modes, kmax } => fourier_heat_solution(grid, region, *seed, *modes, *kmax),
            PairSpec::Antiderivative { seed, terms, kmax } => {
                antiderivative_solution(grid, region, *seed, *terms, *kmax)
            }
            PairSpec::ZeroTrace { seed, modes, kmax } => zero_trace_solution(grid, region, *seed, *modes, *kmax),
            PairSpec::ZeroInitial { seed, modes, kmax } => zero_initial_solution(grid, region, *seed, *modes, *kmax),
        }
    }
}

fn region_lower(region: &ParabolicRegion) -> (Vec<f64>, Vec<f64>) {
    region.bounds()
}

/// `factor · h² · scale / ℓ²` with `ℓ` no larger than the battery's
/// smallest test-function half width.
pub fn declared_tolerance(grid: &Grid, region: &ParabolicRegion, scale: f64, feature: f64) -> f64 {
    let bump = 0.2 * region.nominal_r;
    let ell = feature.min(bump).max(grid.h());
    TOLERANCE_FACTOR * grid.h() * grid.h() * scale / (ell * ell)
}

fn finish(
    label: String,
    grid: &Grid,
    region: &ParabolicRegion,
    u: ScalarField,
    du: VectorField,
    g: VectorField,
    provenance: Provenance,
    feature: f64,
) -> Result<SolutionPair> {
    if feature < grid.h() {
        return Err(Error::UnderResolved(format!("feature length {feature:.3e} below h = {:.3e}", grid.h())));
    }
    let cells = cells_of(grid, region)?;
    let scale = u.max_abs_over(&cells) + g.max_norm_over(&cells);
    let tol = declared_tolerance(grid, region, scale, feature);
    SolutionPair::gated(label, u, du, g, region.clone(), provenance, tol)
}

pub fn constant_solution(grid: &Grid, region: &ParabolicRegion, value: f64) -> Result<SolutionPair> {
    let n = grid.n();
    let mut params = BTreeMap::new();
    params.insert("value".into(), value);
    let provenance = Provenance { generator: "constant".into(), seed: 0, params };
    let u = ScalarField::constant(grid, value);
    let tol = grid.h() * grid.h() * (value.abs() + 1e-300) * TOLERANCE_FACTOR;
    let battery = crate::calculus::test_battery(region, crate::calculus::GATE_BATTERY, crate::calculus::GATE_SEED)?;
    let residual = crate::calculus::divergence_residual(&u, &VectorField::zeros(grid, n), region, &battery)?.worst;
    if residual > tol {
        return Err(Error::ResidualGate { label: "constant".into(), residual, tolerance: tol });
    }
    Ok(SolutionPair {
        label: format!("constant({value})"),
        u,
        du: VectorField::zeros(grid, n),
        g: VectorField::zeros(grid, n),
        region: region.clone(),
        provenance,
        tolerance: tol,
        residual,
    })
}

/// Heat kernel started at `z0` and shifted by `shift` in time; `G = Du`.
pub fn heat_kernel_solution(grid: &Grid, region: &ParabolicRegion, z0: &Point, shift: f64) -> Result<SolutionPair> {
    let n = grid.n();
    if z0.n() != n {
        return Err(Error::InvalidParameter("kernel center dimension".into()));
    }
    let t_low = region.bounds().0[n];
    let tau_min = t_low - z0.t + shift;
    let width = (2.0 * tau_min.max(0.0)).sqrt();
    if !(tau_min > 0.0) || width < 4.0 * grid.h() {
        return Err(Error::UnderResolved(format!("heat kernel width {width:.3e} below 4h = {:.3e}", 4.0 * grid.h())));
    }
    let k = HeatKernel::new(z0, shift);
    let u = sample_value(&k, grid);
    let du = sample_gradient(&k, grid);
    let mut params = BTreeMap::new();
    for (i, x) in z0.x.iter().enumerate() {
        params.insert(format!("x0_{i}"), *x);
    }
    params.insert("t0".into(), z0.t);
    params.insert("shift".into(), shift);
    let provenance = Provenance { generator: "heat_kernel".into(), seed: 0, params };
    finish(format!("heat({:?},{},{shift})", z0.x, z0.t), grid, region, u, du.clone(), du, provenance, width)
}

/// One Fourier heat mode `c e^{-|k|²(t - t_ref)} cos(k·x + φ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub amplitude: f64,
    pub k: Vec<f64>,
    pub phase: f64,
}

fn random_wavevector(rng: &mut ChaCha8Rng, n: usize, kmax: f64) -> Vec<f64> {
    if kmax <= 0.0 {
        return vec![0.0; n];
    }
    loop {
        let k: Vec<f64> = (0..n).map(|_| rng.gen_range(-kmax..=kmax)).collect();
        if k.iter().map(|v| v * v).sum::<f64>() <= kmax * kmax {
            return k;
        }
    }
}

pub fn random_modes(n: usize, seed: u64, modes: usize, kmax: f64) -> Vec<Mode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..modes)
        .map(|_| Mode {
            amplitude: rng.gen_range(-1.0..1.0),
            k: random_wavevector(&mut rng, n, kmax),
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
        })
        .collect()
}

/// `Σ c e^{-|k|²(t - t_ref)} cos(k·x + φ)`, an exact heat solution.
pub fn fourier_expr(n: usize, modes: &[Mode], t_ref: f64) -> Expr {
    let terms = modes
        .iter()
        .map(|m| {
            let k2: f64 = m.k.iter().map(|v| v * v).sum();
            Term::wave(m.amplitude * (k2 * t_ref).exp(), m.k.clone(), 0.0, m.phase, -k2)
        })
        .collect();
    Expr::from_terms(n, terms)
}

fn feature_length(kmax: f64) -> f64 {
    if kmax > 0.0 {
        1.0 / kmax
    } else {
        f64::INFINITY
    }
}

pub fn fourier_from_modes(
    grid: &Grid,
    region: &ParabolicRegion,
    modes: &[Mode],
    label: String,
    seed: u64,
) -> Result<SolutionPair> {
    let n = grid.n();
    let t_ref = region_lower(region).0[n];
    let a = Analytic::new(fourier_expr(n, modes, t_ref));
    let u = sample_value(&a, grid);
    let du = sample_gradient(&a, grid);
    let kmax = modes.iter().map(|m| m.k.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
    let mut params = BTreeMap::new();
    params.insert("modes".into(), modes.len() as f64);
    params.insert("kmax".into(), kmax);
    let provenance = Provenance { generator: "fourier".into(), seed, params };
    finish(label, grid, region, u, du.clone(), du, provenance, feature_length(kmax))
}

pub fn fourier_heat_solution(
    grid: &Grid,
    region: &ParabolicRegion,
    seed: u64,
    modes: usize,
    kmax: f64,
) -> Result<SolutionPair> {
    let m = random_modes(grid.n(), seed, modes, kmax);
    fourier_from_modes(grid, region, &m, format!("fourier(seed={seed})"), seed)
}

/// Random trigonometric polynomial in `(x, t)`; not a heat solution.
pub fn random_trig_expr(n: usize, seed: u64, terms: usize, kmax: f64) -> Expr {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(terms + 1);
    out.push(Term::constant(n, rng.gen_range(-1.0..1.0)));
    for _ in 0..terms {
        let k = random_wavevector(&mut rng, n, kmax);
        let omega = rng.gen_range(-kmax..=kmax);
        out.push(Term::wave(rng.gen_range(-1.0..1.0), k, omega, rng.gen_range(0.0..std::f64::consts::TAU), 0.0));
    }
    Expr::from_terms(n, out)
}

/// `G = (0, …, 0, ∫_{lower}^{x_n} u_t ds)`, so `div G = u_t` exactly.
pub fn antiderivative_flux(u: &Expr, lower: f64) -> Vec<Expr> {
    let n = u.n;
    let mut g = vec![Expr::zero(n); n];
    g[n - 1] = u.dt().integral_last_from(lower);
    g
}

fn sample_exprs(grid: &Grid, exprs: &[Expr]) -> VectorField {
    VectorField::from_fn(grid, exprs.len(), |x, t, out| {
        for (o, e) in out.iter_mut().zip(exprs) {
            *o = e.value(x, t);
        }
    })
}

/// Pair `(u, G)` from an arbitrary expression with the antiderivative flux.
pub fn pair_from_expr(
    grid: &Grid,
    region: &ParabolicRegion,
    u: &Expr,
    lower: f64,
    label: String,
    provenance: Provenance,
    feature: f64,
) -> Result<SolutionPair> {
    let a = Analytic::new(u.clone());
    let g = sample_exprs(grid, &antiderivative_flux(u, lower));
    finish(label, grid, region, sample_value(&a, grid), sample_gradient(&a, grid), g, provenance, feature)
}

pub fn antiderivative_solution(
    grid: &Grid,
    region: &ParabolicRegion,
    seed: u64,
    terms: usize,
    kmax: f64,
) -> Result<SolutionPair> {
    let n = grid.n();
    let u = random_trig_expr(n, seed, terms, kmax);
    let lower = region_lower(region).0[n - 1];
    let mut params = BTreeMap::new();
    params.insert("terms".into(), terms as f64);
    params.insert("kmax".into(), kmax);
    let provenance = Provenance { generator: "antiderivative".into(), seed, params };
    pair_from_expr(grid, region, &u, lower, format!("antiderivative(seed={seed})"), provenance, feature_length(kmax))
}

/// `u = x_n · v` with `v` a random Fourier pattern; vanishes on `{x_n = 0}`.
pub fn zero_trace_solution(
    grid: &Grid,
    region: &ParabolicRegion,
    seed: u64,
    modes: usize,
    kmax: f64,
) -> Result<SolutionPair> {
    let n = grid.n();
    let t_ref = region_lower(region).0[n];
    let mut m = random_modes(n, seed, modes, kmax);
    m.push(Mode { amplitude: 1.0, k: vec![0.0; n], phase: 0.0 });
    let u = fourier_expr(n, &m, t_ref).mul_last();
    let mut params = BTreeMap::new();
    params.insert("modes".into(), modes as f64);
    params.insert("kmax".into(), kmax);
    let provenance = Provenance { generator: "zero_trace".into(), seed, params };
    pair_from_expr(grid, region, &u, 0.0, format!("zero_trace(seed={seed})"), provenance, feature_length(kmax))
}

/// `u = (t - t_start) · v`; vanishes at the initial time of `region`.
pub fn zero_initial_solution(
    grid: &Grid,
    region: &ParabolicRegion,
    seed: u64,
    modes: usize,
    kmax: f64,
) -> Result<SolutionPair> {
    let n = grid.n();
    let (lo, _) = region_lower(region);
    let t_start = lo[n];
    let mut m = random_modes(n, seed, modes, kmax);
    m.push(Mode { amplitude: 1.0, k: vec![0.0; n], phase: 0.0 });
    let v = fourier_expr(n, &m, t_start);
    let u = v.mul_time().sub(&v.scaled(t_start));
    let mut params = BTreeMap::new();
    params.insert("modes".into(), modes as f64);
    params.insert("kmax".into(), kmax);
    let provenance = Provenance { generator: "zero_initial".into(), seed, params };
    pair_from_expr(grid, region, &u, lo[n - 1], format!("zero_initial(seed={seed})"), provenance, feature_length(kmax))
}

/// `w(z) = max(d_p(z, z0), h/2)^a`.
pub fn power_weight(grid: &Grid, a: f64, z0: &Point) -> Result<WeightField> {
    let floor = grid.h() / 2.0;
    let f = ScalarField::from_fn(grid, |x, t| parabolic_distance_raw(x, t, &z0.x, z0.t).max(floor).powf(a));
    WeightField::new(f, format!("power({a})"))
}

/// A smooth function with every derivative the gradient theorems need.
pub fn w21_function(n: usize, seed: u64, terms: usize, kmax: f64) -> Analytic {
    Analytic::new(random_trig_expr(n, seed, terms, kmax))
}

/// Sampled `u`, `Du`, `D²u` (row-major), and `u_t` of a smooth function.
#[derive(Clone, Debug, PartialEq)]
pub struct W21Sample {
    pub u: ScalarField,
    pub du: VectorField,
    pub d2u: crate::field::MatrixField,
    pub ut: ScalarField,
}

impl W21Sample {
    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            u: self.u.scaled(lambda),
            du: self.du.scaled(lambda),
            d2u: self.d2u.scaled(lambda),
            ut: self.ut.scaled(lambda),
        }
    }
}

pub fn sample_w21(f: &dyn SmoothFunction, grid: &Grid) -> W21Sample {
    W21Sample {
        u: sample_value(f, grid),
        du: sample_gradient(f, grid),
        d2u: crate::expr::sample_hessian(f, grid),
        ut: crate::expr::sample_time_derivative(f, grid),
    }
}

/// The standard mixed battery: heat kernels, Fourier modes, and
/// antiderivative pairs in rotation.
/// Generator families available to a standard battery.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Constant,
    HeatKernel,
    Fourier,
    Antiderivative,
}

/// Battery cycling through `generators`; entry `i` uses `generators[i % len]`.
pub fn battery(
    generators: &[GeneratorKind],
    region: &ParabolicRegion,
    count: usize,
    seed: u64,
    kmax: f64,
) -> Vec<PairSpec> {
    if generators.is_empty() {
        return Vec::new();
    }
    let n = region.n();
    let r = region.nominal_r;
    let (lo, hi) = region.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = generators.len();
    (0..count)
        .map(|i| {
            let s = rng.gen::<u64>();
            let size = 1 + (i / len) % 4;
            match generators[i % len] {
                GeneratorKind::Constant => PairSpec::Constant { value: rng.gen_range(-2.0..2.0) },
                GeneratorKind::HeatKernel => {
                    let x0 = (0..n).map(|a| rng.gen_range(lo[a] - r / 2.0..hi[a] + r / 2.0)).collect();
                    PairSpec::HeatKernel { x0, t0: lo[n], shift: rng.gen_range(r * r..3.0 * r * r) }
                }
                GeneratorKind::Fourier => PairSpec::Fourier { seed: s, modes: size, kmax },
                GeneratorKind::Antiderivative => PairSpec::Antiderivative { seed: s, terms: size, kmax },
            }
        })
        .collect()
}

/// Heat-kernel, Fourier, and antiderivative pairs in rotation.
pub fn standard_battery(region: &ParabolicRegion, count: usize, seed: u64, kmax: f64) -> Vec<PairSpec> {
    battery(
        &[GeneratorKind::HeatKernel, GeneratorKind::Fourier, GeneratorKind::Antiderivative],
        region,
        count,
        seed,
        kmax,
    )
}

pub fn zero_trace_battery(count: usize, seed: u64, kmax: f64) -> Vec<PairSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|i| PairSpec::ZeroTrace { seed: rng.gen(), modes: 1 + i % 3, kmax }).collect()
}

pub fn zero_initial_battery(count: usize, seed: u64, kmax: f64) -> Vec<PairSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|i| PairSpec::ZeroInitial { seed: rng.gen(), modes: 1 + i % 3, kmax }).collect()
}

/// One materialized battery entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub label: String,
    pub spec: PairSpec,
    pub tolerance: f64,
    pub residual: f64,
    pub files: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryManifest {
    pub schema_version: u32,
    pub grid: Grid,
    pub region: ParabolicRegion,
    pub entries: Vec<ManifestEntry>,
}
