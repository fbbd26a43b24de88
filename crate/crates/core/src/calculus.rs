//! Finite differences, the distributional residual of `u_t = div G`, and the
//! odd/even reflection operators across `{x_n = 0}`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{MatrixField, ScalarField, VectorField};
use crate::geometry::{cells_of, Grid, ParabolicRegion, Point};

fn check_resolution(grid: &Grid) -> Result<()> {
    let dims = grid.dims();
    if (0..grid.axes()).any(|a| dims[a] < 3) {
        return Err(Error::GridTooSmall("finite differences need at least 3 cells per axis".into()));
    }
    Ok(())
}

/// Derivative along `axis`: central in the interior, second-order one-sided
/// at the two edge layers, so quadratics are differentiated exactly.
fn difference(values: &[f64], grid: &Grid, axis: usize) -> Vec<f64> {
    let dims = grid.dims();
    let stride = grid.strides()[axis];
    let len = dims[axis];
    let step = grid.step(axis);
    let mut out = vec![0.0; values.len()];
    for (c, o) in out.iter_mut().enumerate() {
        let j = (c / stride) % len;
        *o = if j == 0 {
            (-3.0 * values[c] + 4.0 * values[c + stride] - values[c + 2 * stride]) / (2.0 * step)
        } else if j == len - 1 {
            (3.0 * values[c] - 4.0 * values[c - stride] + values[c - 2 * stride]) / (2.0 * step)
        } else {
            (values[c + stride] - values[c - stride]) / (2.0 * step)
        };
    }
    out
}

pub fn spatial_gradient(u: &ScalarField) -> Result<VectorField> {
    let grid = u.grid();
    check_resolution(grid)?;
    VectorField::new(grid, (0..grid.n()).map(|a| difference(u.values(), grid, a)).collect())
}

pub fn time_derivative(u: &ScalarField) -> Result<ScalarField> {
    let grid = u.grid();
    check_resolution(grid)?;
    ScalarField::new(grid, difference(u.values(), grid, grid.n()))
}

/// `D(Du)` by repeated differencing; symmetric because the per-axis
/// difference operators commute.
pub fn hessian(u: &ScalarField) -> Result<MatrixField> {
    let grid = u.grid();
    check_resolution(grid)?;
    let n = grid.n();
    let mut entries = Vec::with_capacity(n * n);
    for i in 0..n {
        let di = difference(u.values(), grid, i);
        for j in 0..n {
            entries.push(difference(&di, grid, j));
        }
    }
    MatrixField::new(grid, n, entries)
}

/// `Π (1 - s_a²)³` over the space-time box `center ± half`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    /// `(x_1, …, x_n, t)`.
    pub center: Vec<f64>,
    /// Half widths, the last one in time units.
    pub half: Vec<f64>,
}

impl TestFunction {
    pub fn new(center: Vec<f64>, half: Vec<f64>) -> Result<Self> {
        if center.len() != half.len() || half.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::InvalidParameter("test function needs positive half widths per axis".into()));
        }
        Ok(Self { center, half })
    }

    pub fn n(&self) -> usize {
        self.center.len() - 1
    }

    pub fn support(&self) -> (Vec<f64>, Vec<f64>) {
        let lo = self.center.iter().zip(&self.half).map(|(c, h)| c - h).collect();
        let hi = self.center.iter().zip(&self.half).map(|(c, h)| c + h).collect();
        (lo, hi)
    }

    /// The support box as a region (for cell enumeration).
    pub fn support_region(&self) -> ParabolicRegion {
        let n = self.n();
        let mut radii = self.half[..n].to_vec();
        radii.push(self.half[n].sqrt());
        ParabolicRegion {
            shape: crate::geometry::Shape::Box,
            center: Point::new(self.center[..n].to_vec(), self.center[n]),
            radii,
            alpha: 1.0,
            nominal_r: self.half[0],
            clip: None,
        }
    }

    /// Writes `Dφ` into `grad` and returns `(φ, φ_t)`.
    pub fn eval(&self, x: &[f64], t: f64, grad: &mut [f64]) -> (f64, f64) {
        let n = self.n();
        let mut f = [0.0f64; 4];
        let mut df = [0.0f64; 4];
        for a in 0..=n {
            let coord = if a == n { t } else { x[a] };
            let s = (coord - self.center[a]) / self.half[a];
            if s.abs() >= 1.0 {
                grad.iter_mut().for_each(|g| *g = 0.0);
                return (0.0, 0.0);
            }
            let q = 1.0 - s * s;
            f[a] = q * q * q;
            df[a] = -6.0 * s * q * q / self.half[a];
        }
        let all: f64 = f[..=n].iter().product();
        let partial = |skip: usize| -> f64 { (0..=n).filter(|&b| b != skip).map(|b| f[b]).product::<f64>() * df[skip] };
        for (a, g) in grad.iter_mut().enumerate().take(n) {
            *g = partial(a);
        }
        (all, partial(n))
    }
}

/// `count` bumps on random boxes strictly inside `region`, fixed by `seed`.
///
/// Half widths are drawn in `[0.2, 0.5]` of the region's half widths.
pub fn test_battery(region: &ParabolicRegion, count: usize, seed: u64) -> Result<Vec<TestFunction>> {
    region.validate()?;
    let n = region.n();
    let (lo, hi) = region.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > 10_000 * count.max(1) {
            return Err(Error::InvalidRegion("could not place test functions inside region".into()));
        }
        let mut center = Vec::with_capacity(n + 1);
        let mut half = Vec::with_capacity(n + 1);
        for a in 0..=n {
            let width = (hi[a] - lo[a]) / 2.0;
            let hw = width * rng.gen_range(0.2..0.5);
            let c = rng.gen_range(lo[a] + hw..hi[a] - hw);
            center.push(c);
            half.push(hw);
        }
        let phi = TestFunction { center, half };
        let (slo, shi) = phi.support();
        if region.contains_closed_box(&slo, &shi) {
            out.push(phi);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Largest normalized residual over the battery.
    pub worst: f64,
    pub per_function: Vec<f64>,
}

/// `max_φ |Σ u φ_t − Σ G·Dφ| h^{n+2} / Σ (|φ_t| + |Dφ|) h^{n+2}`.
pub fn divergence_residual(
    u: &ScalarField,
    g: &VectorField,
    region: &ParabolicRegion,
    battery: &[TestFunction],
) -> Result<ResidualReport> {
    let grid = u.grid();
    u.check_grid(g.grid())?;
    let n = grid.n();
    if g.dim() != n {
        return Err(Error::InvalidParameter(format!("G has {} components, expected {n}", g.dim())));
    }
    let mut per_function = Vec::with_capacity(battery.len());
    let mut x = vec![0.0; n];
    let mut grad = vec![0.0; n];
    for phi in battery {
        let (lo, hi) = phi.support();
        if phi.n() != n || !region.contains_closed_box(&lo, &hi) {
            return Err(Error::SupportOutsideRegion);
        }
        let cells = match cells_of(grid, &phi.support_region()) {
            Ok(c) => c,
            Err(Error::EmptyRegion) => Vec::new(),
            Err(e) => return Err(e),
        };
        let (mut lhs, mut rhs, mut scale) = (0.0, 0.0, 0.0);
        for &c in &cells {
            let t = grid.center_into(c, &mut x);
            let (_, phi_t) = phi.eval(&x, t, &mut grad);
            lhs += u.values()[c] * phi_t;
            let mut dot = 0.0;
            let mut norm = 0.0;
            for (i, gi) in grad.iter().enumerate() {
                dot += g.component(i)[c] * gi;
                norm += gi * gi;
            }
            rhs += dot;
            scale += phi_t.abs() + norm.sqrt();
        }
        if scale == 0.0 {
            return Err(Error::UnderResolved("test function support holds no cell".into()));
        }
        per_function.push((lhs - rhs).abs() / scale);
    }
    let worst = per_function.iter().cloned().fold(0.0, f64::max);
    Ok(ResidualReport { worst, per_function })
}

fn require_symmetric(grid: &Grid) -> Result<()> {
    if grid.symmetric_in_last_space_axis() {
        Ok(())
    } else {
        Err(Error::InvalidGrid("reflection needs the grid centered on x_n = 0".into()))
    }
}

fn reflect(v: &[f64], grid: &Grid, sign: f64) -> Vec<f64> {
    let mut x = vec![0.0; grid.n()];
    let last = grid.n() - 1;
    (0..grid.len())
        .map(|c| {
            grid.center_into(c, &mut x);
            if x[last] > 0.0 {
                v[c]
            } else {
                sign * v[grid.reflect_last_space(c)]
            }
        })
        .collect()
}

/// `ṽ`: values on `{x_n > 0}` kept, `ṽ(x', -x_n) = -v(x', x_n)`.
pub fn odd_extension(v: &ScalarField) -> Result<ScalarField> {
    require_symmetric(v.grid())?;
    ScalarField::new(v.grid(), reflect(v.values(), v.grid(), -1.0))
}

/// `v̄`: values on `{x_n > 0}` kept, `v̄(x', -x_n) = v(x', x_n)`.
pub fn even_extension(v: &ScalarField) -> Result<ScalarField> {
    require_symmetric(v.grid())?;
    ScalarField::new(v.grid(), reflect(v.values(), v.grid(), 1.0))
}

/// `G* = (g̃_1, …, g̃_{n-1}, ḡ_n)`.
pub fn extend_g_star(g: &VectorField) -> Result<VectorField> {
    let grid = g.grid();
    require_symmetric(grid)?;
    let n = g.dim();
    let comps = (0..n).map(|i| reflect(g.component(i), grid, if i + 1 == n { 1.0 } else { -1.0 })).collect();
    VectorField::new(grid, comps)
}

/// Gradient of the odd extension: tangential parts odd, normal part even.
pub fn extend_odd_gradient(du: &VectorField) -> Result<VectorField> {
    extend_g_star(du)
}

/// Gradient of the even extension: tangential parts even, normal part odd.
pub fn extend_even_gradient(du: &VectorField) -> Result<VectorField> {
    let grid = du.grid();
    require_symmetric(grid)?;
    let n = du.dim();
    let comps = (0..n).map(|i| reflect(du.component(i), grid, if i + 1 == n { -1.0 } else { 1.0 })).collect();
    VectorField::new(grid, comps)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub seed: u64,
    pub params: BTreeMap<String, f64>,
}

/// A sampled pair `(u, G)` claimed to solve `u_t = div G` in `region`,
/// with `Du` carried along.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionPair {
    pub label: String,
    pub u: ScalarField,
    pub du: VectorField,
    pub g: VectorField,
    pub region: ParabolicRegion,
    pub provenance: Provenance,
    /// Declared bound on the normalized residual.
    pub tolerance: f64,
    /// Measured residual over the construction battery.
    pub residual: f64,
}

/// Battery size used by the construction gate.
pub const GATE_BATTERY: usize = 20;
/// Seed of the construction-gate battery.
pub const GATE_SEED: u64 = 0x5eed;

impl SolutionPair {
    /// Builds the pair and measures its residual against a fixed battery;
    /// fails when the residual exceeds `tolerance`.
    pub fn gated(
        label: impl Into<String>,
        u: ScalarField,
        du: VectorField,
        g: VectorField,
        region: ParabolicRegion,
        provenance: Provenance,
        tolerance: f64,
    ) -> Result<Self> {
        let label = label.into();
        let battery = test_battery(&region, GATE_BATTERY, GATE_SEED)?;
        let residual = divergence_residual(&u, &g, &region, &battery)?.worst;
        if !(residual <= tolerance) {
            return Err(Error::ResidualGate { label, residual, tolerance });
        }
        Ok(Self { label, u, du, g, region, provenance, tolerance, residual })
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    /// `(λu, λDu, λG)`.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            label: format!("{}*{lambda}", self.label),
            u: self.u.scaled(lambda),
            du: self.du.scaled(lambda),
            g: self.g.scaled(lambda),
            tolerance: self.tolerance * lambda.abs(),
            residual: self.residual * lambda.abs(),
            ..self.clone()
        }
    }

    /// The same fields bookkept against another region.
    pub fn on_region(&self, region: ParabolicRegion) -> Self {
        Self { region, ..self.clone() }
    }

    pub fn field_scale(&self) -> f64 {
        self.u.max_abs() + self.g.max_norm()
    }
}

/// Cells of `region` in the first layer above `{x_n = 0}`.
fn trace_layer(grid: &Grid, region: &ParabolicRegion) -> Result<Vec<usize>> {
    let cells = cells_of(grid, region)?;
    let last = grid.n() - 1;
    let mut x = vec![0.0; grid.n()];
    Ok(cells
        .into_iter()
        .filter(|&c| {
            grid.center_into(c, &mut x);
            x[last] > 0.0 && x[last] < grid.h()
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Zero-trace gate: `max |u|` on the first layer `≤ Lip(u)·h/2·safety`,
/// with `Lip(u) = max |Du|` over the region.
pub fn trace_gate(u: &ScalarField, du: &VectorField, region: &ParabolicRegion, safety: f64) -> Result<GateReport> {
    let grid = u.grid();
    let layer = trace_layer(grid, region)?;
    if layer.is_empty() {
        return Err(Error::TraceGate("no cells next to the flat boundary".into()));
    }
    let measured = u.max_abs_over(&layer);
    let lip = du.max_norm_over(&cells_of(grid, region)?);
    let bound = lip * grid.h() / 2.0 * safety;
    Ok(GateReport { measured, bound, pass: measured <= bound })
}

/// Time-averaged `∫|u| dx` over the first `layers` time layers of `region`.
pub fn initial_layer_mass(u: &ScalarField, region: &ParabolicRegion, layers: usize) -> Result<f64> {
    let grid = u.grid();
    let cells = cells_of(grid, region)?;
    let n = grid.n();
    let first = cells.iter().map(|&c| grid.unravel(c)[n]).min().ok_or(Error::EmptyRegion)?;
    let sum: f64 = cells.iter().filter(|&&c| grid.unravel(c)[n] < first + layers).map(|&c| u.values()[c].abs()).sum();
    Ok(sum * grid.h().powi(n as i32) / layers as f64)
}

/// Zero-initial gate: the first-layer mass is at most
/// `max|u_t| · layers·h² · |K_r| · safety`, i.e. `u` starts from zero.
pub fn initial_gate(u: &ScalarField, region: &ParabolicRegion, layers: usize, safety: f64) -> Result<GateReport> {
    let grid = u.grid();
    let measured = initial_layer_mass(u, region, layers)?;
    let ut = time_derivative(u)?;
    let cells = cells_of(grid, region)?;
    let n = grid.n();
    let first = cells.iter().map(|&c| grid.unravel(c)[n]).min().ok_or(Error::EmptyRegion)?;
    let slice = cells.iter().filter(|&&c| grid.unravel(c)[n] == first).count() as f64;
    let base = slice * grid.h().powi(n as i32);
    let bound = ut.max_abs_over(&cells) * layers as f64 * grid.dt() * base * safety;
    Ok(GateReport { measured, bound, pass: measured <= bound })
}
