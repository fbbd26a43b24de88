//! Parabolic Muckenhoupt machinery on lattice-aligned cubes.
//!
//! Every cube used here is centered on a lattice vertex with radius `m·h`,
//! so it is an exact union of `(2m)^n · 2m²` cells and its box sums come
//! straight out of a summed-area table.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{cells_of, Grid, Index, ParabolicRegion, Point, MAX_AXES};
use crate::sat::SummedAreaTable;

/// Smallest value a weight may take.
pub const WEIGHT_FLOOR: f64 = 1e-300;

/// Strictly positive, finite weight sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightField {
    field: ScalarField,
    label: String,
}

impl WeightField {
    /// Values below [`WEIGHT_FLOOR`] are raised to it; negative or
    /// non-finite samples are rejected.
    pub fn new(field: ScalarField, label: impl Into<String>) -> Result<Self> {
        let mut field = field;
        for v in field.values_mut() {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::InvalidWeight(format!("sample {v} is not a finite nonnegative number")));
            }
            if *v < WEIGHT_FLOOR {
                *v = WEIGHT_FLOOR;
            }
        }
        Ok(Self { field, label: label.into() })
    }

    pub fn constant(grid: &Grid, c: f64) -> Result<Self> {
        Self::new(ScalarField::constant(grid, c), format!("const({c})"))
    }

    pub fn unit(grid: &Grid) -> Self {
        Self { field: ScalarField::constant(grid, 1.0), label: "unit".into() }
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    pub fn grid(&self) -> &Grid {
        self.field.grid()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.field.scaled(c), format!("{}*{c}", self.label))
    }

    /// `w(cells) = Σ w · h^{n+2}`.
    pub fn measure_of_cells(&self, cells: &[usize]) -> f64 {
        let v = self.values();
        cells.iter().map(|&c| v[c]).sum::<f64>() * self.grid().cell_measure()
    }
}

/// `w(E) = ∫_E w dz` by the midpoint rule.
pub fn weighted_measure(w: &WeightField, region: &ParabolicRegion) -> Result<f64> {
    let cells = cells_of(w.grid(), region)?;
    Ok(w.measure_of_cells(&cells))
}

/// A lattice cube: vertex center and radius in cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeWitness {
    pub center: Point,
    pub radius: f64,
    pub vertex: Vec<usize>,
    pub m: usize,
}

impl CubeWitness {
    fn new(grid: &Grid, v: &Index, m: usize) -> Self {
        Self { center: grid.vertex_point(v), radius: m as f64 * grid.h(), vertex: v[..grid.axes()].to_vec(), m }
    }

    pub fn region(&self) -> ParabolicRegion {
        ParabolicRegion::cube(self.center.clone(), self.radius)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    pub p: f64,
    pub value: f64,
    pub witness: CubeWitness,
    pub cube_count: usize,
}

/// Largest `m` with `m·h ≤ max_radius`.
pub fn max_cells(grid: &Grid, max_radius: f64) -> usize {
    (max_radius / grid.h() + 1e-9).floor().max(0.0) as usize
}

/// Calls `f(vertex, m, lo, hi)` for every lattice cube of radius `m·h`,
/// `1 ≤ m ≤ max_m`, lying inside the grid; returns the number of cubes.
pub fn for_each_lattice_cube(grid: &Grid, max_m: usize, mut f: impl FnMut(&Index, usize, &Index, &Index)) -> usize {
    let axes = grid.axes();
    let dims = grid.dims();
    let mut count = 0;
    for m in 1..=max_m {
        let mut half = [0usize; MAX_AXES];
        for (a, s) in half.iter_mut().enumerate().take(axes) {
            *s = if a == grid.n() { m * m } else { m };
        }
        if (0..axes).any(|a| 2 * half[a] > dims[a]) {
            continue;
        }
        let mut v = [0usize; MAX_AXES];
        v[..axes].copy_from_slice(&half[..axes]);
        loop {
            let mut lo = [0usize; MAX_AXES];
            let mut hi = [1usize; MAX_AXES];
            for a in 0..axes {
                lo[a] = v[a] - half[a];
                hi[a] = v[a] + half[a];
            }
            f(&v, m, &lo, &hi);
            count += 1;
            let mut a = axes;
            let mut done = true;
            while a > 0 {
                a -= 1;
                v[a] += 1;
                if v[a] + half[a] <= dims[a] {
                    done = false;
                    break;
                }
                v[a] = half[a];
            }
            if done {
                break;
            }
        }
    }
    count
}

fn cube_cells(n: usize, m: usize) -> f64 {
    (2.0 * m as f64).powi(n as i32) * 2.0 * (m * m) as f64
}

/// Computes A_p characteristics of one weight, caching one summed-area
/// table per exponent.
pub struct ApCalculator<'a> {
    w: &'a WeightField,
    sat_w: SummedAreaTable,
    dual: HashMap<u64, SummedAreaTable>,
}

impl<'a> ApCalculator<'a> {
    pub fn new(w: &'a WeightField) -> Self {
        let grid = w.grid();
        let sat_w = SummedAreaTable::new(&grid.dims()[..grid.axes()], w.values());
        Self { w, sat_w, dual: HashMap::new() }
    }

    pub fn weight(&self) -> &WeightField {
        self.w
    }

    fn dual_table(&mut self, p: f64) -> &SummedAreaTable {
        let w = self.w;
        self.dual.entry(p.to_bits()).or_insert_with(|| {
            let e = -1.0 / (p - 1.0);
            let vals: Vec<f64> = w.values().iter().map(|v| v.powf(e)).collect();
            let grid = w.grid();
            SummedAreaTable::new(&grid.dims()[..grid.axes()], &vals)
        })
    }

    /// `sup_Q (⨍_Q w)(⨍_Q w^{-1/(p-1)})^{p-1}` over lattice cubes of radius
    /// at most `max_radius`.
    pub fn characteristic(&mut self, p: f64, max_radius: f64) -> Result<ApReport> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::InvalidExponent(format!("A_p needs p > 1, got {p}")));
        }
        let grid = self.w.grid().clone();
        let max_m = max_cells(&grid, max_radius);
        self.dual_table(p);
        let sat_s = &self.dual[&p.to_bits()];
        let sat_w = &self.sat_w;
        let n = grid.n();
        let mut best = f64::NEG_INFINITY;
        let mut best_cube = None;
        let count = for_each_lattice_cube(&grid, max_m, |v, m, lo, hi| {
            let cells = cube_cells(n, m);
            let mw = sat_w.box_sum(lo, hi) / cells;
            let ms = sat_s.box_sum(lo, hi) / cells;
            let prod = mw * ms.powf(p - 1.0);
            if prod > best {
                best = prod;
                best_cube = Some((*v, m));
            }
        });
        let (v, m) = best_cube
            .ok_or_else(|| Error::GridTooSmall(format!("no lattice cube of radius ≤ {max_radius} fits the grid")))?;
        Ok(ApReport { p, value: best, witness: CubeWitness::new(&grid, &v, m), cube_count: count })
    }
}

/// One-shot [`ApCalculator::characteristic`].
pub fn ap_characteristic(w: &WeightField, p: f64, max_radius: f64) -> Result<ApReport> {
    ApCalculator::new(w).characteristic(p, max_radius)
}

/// Largest spatial half-width of the grid; the default cube radius bound.
pub fn domain_radius(grid: &Grid) -> f64 {
    (0..grid.n()).map(|a| grid.space_extent(a)).fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublingReport {
    pub worst_ratio: f64,
    pub bound: f64,
    pub worst_index: usize,
}

/// `max w(Q_{2r}) / w(Q_r)` over the given cubes, with the bound
/// `[w]_p · 2^{p(n+2)}`.
pub fn doubling_check(w: &WeightField, p: f64, ap_value: f64, cubes: &[ParabolicRegion]) -> Result<DoublingReport> {
    let grid = w.grid();
    let n = grid.n();
    let mut worst = 0.0;
    let mut worst_index = 0;
    for (i, q) in cubes.iter().enumerate() {
        let doubled = ParabolicRegion::cube(q.center.clone(), 2.0 * q.nominal_r);
        let (lo, hi) = doubled.bounds();
        let inside = (0..grid.axes()).all(|a| {
            lo[a] >= grid.lower(a) - 1e-12 && hi[a] <= grid.lower(a) + grid.dims()[a] as f64 * grid.step(a) + 1e-12
        });
        if !inside {
            return Err(Error::InvalidRegion(format!("doubled cube {i} leaves the domain")));
        }
        let ratio = weighted_measure(w, &doubled)? / weighted_measure(w, q)?;
        if ratio > worst {
            worst = ratio;
            worst_index = i;
        }
    }
    Ok(DoublingReport { worst_ratio: worst, bound: ap_value * 2f64.powf(p * (n as f64 + 2.0)), worst_index })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubregionCheck {
    /// `w(Q) / w(A)`.
    pub ratio: f64,
    /// `[w]_p (|Q| / |A|)^p`.
    pub bound: f64,
    /// The A_p product of the enclosing cube alone.
    pub cube_product: f64,
}

impl SubregionCheck {
    pub fn holds(&self) -> bool {
        self.ratio >= 1.0 && self.ratio <= self.bound
    }
}

/// Compares `w(Q)/w(A)` for `A ⊂ Q` with `[w]_p (|Q|/|A|)^p`.
pub fn subregion_ratio_check(
    w: &WeightField,
    p: f64,
    ap_value: f64,
    cube: &ParabolicRegion,
    sub: &ParabolicRegion,
) -> Result<SubregionCheck> {
    let grid = w.grid();
    let q_cells = cells_of(grid, cube)?;
    let a_cells = cells_of(grid, sub)?;
    if a_cells.iter().any(|c| q_cells.binary_search(c).is_err()) {
        return Err(Error::Containment);
    }
    let ratio = w.measure_of_cells(&q_cells) / w.measure_of_cells(&a_cells);
    let size_ratio = q_cells.len() as f64 / a_cells.len() as f64;
    let v = w.values();
    let nq = q_cells.len() as f64;
    let mw = q_cells.iter().map(|&c| v[c]).sum::<f64>() / nq;
    let ms = q_cells.iter().map(|&c| v[c].powf(-1.0 / (p - 1.0))).sum::<f64>() / nq;
    Ok(SubregionCheck { ratio, bound: ap_value * size_ratio.powf(p), cube_product: mw * ms.powf(p - 1.0) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AqIndex {
    pub q: f64,
    pub value: f64,
    /// Set when no candidate met the budget and `q = p` was returned.
    pub fallback: bool,
    pub budget: f64,
    pub scanned: Vec<(f64, f64)>,
}

/// Default candidates `1 + (p-1)/2^j`, `j = 1..=8`, ascending.
pub fn default_q_candidates(p: f64) -> Vec<f64> {
    let mut q: Vec<f64> = (1..=8).map(|j| 1.0 + (p - 1.0) / 2f64.powi(j)).collect();
    q.reverse();
    q
}

/// Smallest candidate `q ∈ (max(1, p/(n+2)), p)` with `[w]_q ≤ budget`
/// (default `4·[w]_p`).
pub fn find_aq_index(
    w: &WeightField,
    p: f64,
    candidates: Option<&[f64]>,
    budget: Option<f64>,
    max_radius: f64,
) -> Result<AqIndex> {
    let n = w.grid().n() as f64;
    let mut calc = ApCalculator::new(w);
    let ap = calc.characteristic(p, max_radius)?;
    let budget = budget.unwrap_or(4.0 * ap.value);
    let mut qs: Vec<f64> = match candidates {
        Some(c) => c.to_vec(),
        None => default_q_candidates(p),
    };
    qs.retain(|&q| q > 1.0 && q < p && q > p / (n + 2.0));
    qs.sort_by(|a, b| a.total_cmp(b));
    let mut scanned = Vec::new();
    for q in qs {
        let value = calc.characteristic(q, max_radius)?.value;
        scanned.push((q, value));
        if value <= budget {
            return Ok(AqIndex { q, value, fallback: false, budget, scanned });
        }
    }
    Ok(AqIndex { q: p, value: ap.value, fallback: true, budget, scanned })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReverseHolder {
    pub eps0: f64,
    pub c: f64,
    /// False when even the smallest scanned exponent needs `c` above budget.
    pub admissible: bool,
    pub scan: Vec<(f64, f64)>,
}

/// Default exponent scan `0.05·j`, `j = 1..=100`.
pub fn default_eps_scan() -> Vec<f64> {
    (1..=100).map(|j| 0.05 * j as f64).collect()
}

/// Largest scanned `ε0` such that `(⨍ w^{1+ε0})^{1/(1+ε0)} ≤ c ⨍ w` on every
/// lattice cube of radius ≤ `max_radius`, with `c ≤ c_budget`.
pub fn reverse_holder_exponent(
    w: &WeightField,
    max_radius: f64,
    scan: Option<&[f64]>,
    c_budget: f64,
) -> Result<ReverseHolder> {
    let grid = w.grid();
    let axes = grid.axes();
    let dims = grid.dims();
    let max_m = max_cells(grid, max_radius);
    let sat_w = SummedAreaTable::new(&dims[..axes], w.values());
    let scan: Vec<f64> = scan.map(|s| s.to_vec()).unwrap_or_else(default_eps_scan);
    let mut out = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    for &eps in &scan {
        let powered: Vec<f64> = w.values().iter().map(|v| v.powf(1.0 + eps)).collect();
        let sat_p = SummedAreaTable::new(&dims[..axes], &powered);
        let mut c = 0.0f64;
        let count = for_each_lattice_cube(grid, max_m, |_, _, lo, hi| {
            // cell counts cancel except inside the power
            let cells: usize = (0..axes).map(|a| hi[a] - lo[a]).product();
            let mean_w = sat_w.box_sum(lo, hi) / cells as f64;
            let mean_p = sat_p.box_sum(lo, hi) / cells as f64;
            c = c.max(mean_p.powf(1.0 / (1.0 + eps)) / mean_w);
        });
        if count == 0 {
            return Err(Error::GridTooSmall("no lattice cube fits the grid".into()));
        }
        out.push((eps, c));
        if c <= c_budget {
            best = Some((eps, c));
        } else {
            break;
        }
    }
    Ok(match best {
        Some((eps0, c)) => ReverseHolder { eps0, c, admissible: true, scan: out },
        None => ReverseHolder { eps0: out[0].0, c: out[0].1, admissible: false, scan: out },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceGapReport {
    pub label: String,
    pub p: f64,
    pub parabolic: f64,
    /// Largest spatial A_p product over all time slices.
    pub slice_max: f64,
    pub worst_slice_time: f64,
    pub gap_ratio: f64,
}

/// Spatial A_p product sup of every time slice `x ↦ w(x, t)` against the
/// parabolic `[w]_p` of the same weight.
pub fn slice_ap_gap(w: &WeightField, p: f64, max_radius: f64) -> Result<SliceGapReport> {
    let parabolic = ap_characteristic(w, p, max_radius)?.value;
    let grid = w.grid();
    let n = grid.n();
    let dims = grid.dims();
    let nt = dims[n];
    let space_len: usize = dims[..n].iter().product();
    let max_m = max_cells(grid, max_radius);
    let e = -1.0 / (p - 1.0);
    let v = w.values();
    let mut slice_max = 0.0f64;
    let mut worst_t = 0;
    let mut slice_w = vec![0.0; space_len];
    let mut slice_s = vec![0.0; space_len];
    for it in 0..nt {
        for s in 0..space_len {
            let val = v[s * nt + it];
            slice_w[s] = val;
            slice_s[s] = val.powf(e);
        }
        let sat_w = SummedAreaTable::new(&dims[..n], &slice_w);
        let sat_s = SummedAreaTable::new(&dims[..n], &slice_s);
        let mut best = 0.0f64;
        for m in 1..=max_m {
            if (0..n).any(|a| 2 * m > dims[a]) {
                continue;
            }
            let mut c = [0usize; MAX_AXES];
            for slot in c.iter_mut().take(n) {
                *slot = m;
            }
            let cells = (2.0 * m as f64).powi(n as i32);
            loop {
                let mut lo = [0usize; MAX_AXES];
                let mut hi = [1usize; MAX_AXES];
                for a in 0..n {
                    lo[a] = c[a] - m;
                    hi[a] = c[a] + m;
                }
                let prod = (sat_w.box_sum(&lo, &hi) / cells) * (sat_s.box_sum(&lo, &hi) / cells).powf(p - 1.0);
                best = best.max(prod);
                let mut a = n;
                let mut done = true;
                while a > 0 {
                    a -= 1;
                    c[a] += 1;
                    if c[a] + m <= dims[a] {
                        done = false;
                        break;
                    }
                    c[a] = m;
                }
                if done {
                    break;
                }
            }
        }
        if best > slice_max {
            slice_max = best;
            worst_t = it;
        }
    }
    Ok(SliceGapReport {
        label: w.label().to_string(),
        p,
        parabolic,
        slice_max,
        worst_slice_time: grid.axis_center(n, worst_t),
        gap_ratio: slice_max / parabolic,
    })
}

/// Outcome of a search over a weight family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceGapSearch {
    pub reports: Vec<SliceGapReport>,
    /// Index of the best report with `parabolic ≤ max_parabolic` and
    /// `gap_ratio ≥ min_gap`, largest gap first.
    pub found: Option<usize>,
    pub max_parabolic: f64,
    pub min_gap: f64,
}

/// Scans a family of weights for a large slice/parabolic gap.
pub fn search_slice_gap(
    family: &[WeightField],
    p: f64,
    max_radius: f64,
    max_parabolic: f64,
    min_gap: f64,
) -> Result<SliceGapSearch> {
    let mut reports = Vec::with_capacity(family.len());
    for w in family {
        reports.push(slice_ap_gap(w, p, max_radius)?);
    }
    let found = reports
        .iter()
        .enumerate()
        .filter(|(_, r)| r.parabolic <= max_parabolic && r.gap_ratio >= min_gap)
        .max_by(|a, b| a.1.gap_ratio.total_cmp(&b.1.gap_ratio))
        .map(|(i, _)| i);
    Ok(SliceGapSearch { reports, found, max_parabolic, min_gap })
}
