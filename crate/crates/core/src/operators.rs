//! Parabolic maximal function, caloric Riesz potential, weighted norms.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{cells_of, Grid, Index, ParabolicRegion, MAX_AXES};
use crate::sat::SummedAreaTable;
use crate::weights::WeightField;

/// Largest window index `m` worth scanning: the window then covers the grid.
fn max_window(grid: &Grid) -> usize {
    let dims = grid.dims();
    let space = (0..grid.n()).map(|a| dims[a]).max().unwrap_or(1);
    let time = (dims[grid.n()] as f64).sqrt().ceil() as usize;
    space.max(time).max(1)
}

/// `Mf(z) = sup_m ⨍_{Q_{mh}(z)} |f|` at every cell center, `f` extended by zero.
///
/// The window of index `m` holds the cells with offsets `|j| < m` in space
/// and `|j| < m²` in time.
pub fn parabolic_maximal(f: &ScalarField) -> ScalarField {
    let grid = f.grid();
    let axes = grid.axes();
    let n = grid.n();
    let dims = grid.dims();
    let abs: Vec<f64> = f.values().iter().map(|v| v.abs()).collect();
    let sat = SummedAreaTable::new(&dims[..axes], &abs);
    let big_m = max_window(grid);
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|c| {
            let idx = grid.unravel(c);
            let mut best = 0.0f64;
            for m in 1..=big_m {
                let mut lo = [0isize; MAX_AXES];
                let mut hi = [1isize; MAX_AXES];
                let mut count = 1.0;
                for a in 0..axes {
                    let half = if a == n { (m * m - 1) as isize } else { (m - 1) as isize };
                    lo[a] = idx[a] as isize - half;
                    hi[a] = idx[a] as isize + half + 1;
                    count *= (2 * half + 1) as f64;
                }
                best = best.max(sat.box_sum_clipped(&lo, &hi) / count);
            }
            best
        })
        .collect();
    ScalarField::new(grid, values).expect("same grid")
}

/// Tabulated caloric Riesz kernel `d_p^{-(n+2-β)} · h^{n+2}` indexed by
/// per-axis absolute cell offsets.
///
/// Offsets with `|Δx|_∞ ≤ near` and `|Δt| ≤ near²` (in cells) hold the
/// cell average of the kernel rather than its midpoint value; the zero
/// offset always does.
#[derive(Clone, Debug)]
pub struct PotentialKernel {
    n: usize,
    h: f64,
    beta: f64,
    near: usize,
    dims: Index,
    strides: Index,
    table: Vec<f64>,
}

/// Sub-points per axis for near-field cell averages.
const NEAR_POINTS: usize = 16;

/// Default near-field radius in cells.
pub const DEFAULT_NEAR_FIELD: usize = 4;

impl PotentialKernel {
    pub fn new(grid: &Grid, beta: f64) -> Result<Self> {
        Self::with_near_field(grid, beta, DEFAULT_NEAR_FIELD)
    }

    pub fn with_near_field(grid: &Grid, beta: f64, near: usize) -> Result<Self> {
        let n = grid.n();
        let hom = (n + 2) as f64;
        if !(beta > 0.0 && beta <= hom) {
            return Err(Error::InvalidExponent(format!("β = {beta} not in (0, {hom}]")));
        }
        let axes = grid.axes();
        let dims = grid.dims();
        let mut strides = [0usize; MAX_AXES];
        let mut acc = 1;
        for a in (0..axes).rev() {
            strides[a] = acc;
            acc *= dims[a];
        }
        let mut k = Self { n, h: grid.h(), beta, near, dims, strides, table: vec![0.0; acc] };
        let scale = grid.h().powf(beta);
        let mut off = [0usize; MAX_AXES];
        for slot in 0..acc {
            let mut rem = slot;
            for a in (0..axes).rev() {
                off[a] = rem % dims[a];
                rem /= dims[a];
            }
            k.table[slot] = scale * k.cell_units(&off);
        }
        Ok(k)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    fn exponent(&self) -> f64 {
        (self.n + 2) as f64 - self.beta
    }

    /// `ρ^{-s}` in cell units, with `ρ = max(|Δx|, sqrt|Δt|)`.
    fn rho_pow(&self, rho: f64) -> f64 {
        let s = self.exponent();
        if s == s.round() {
            rho.powi(-(s as i32))
        } else {
            rho.powf(-s)
        }
    }

    fn midpoint(&self, off: &Index) -> f64 {
        let sq: f64 = (0..self.n).map(|a| (off[a] * off[a]) as f64).sum();
        let rho = sq.sqrt().max((off[self.n] as f64).sqrt());
        self.rho_pow(rho)
    }

    fn in_near_field(&self, off: &Index) -> bool {
        (0..self.n).all(|a| off[a] <= self.near) && off[self.n] <= self.near * self.near
    }

    fn cell_units(&self, off: &Index) -> f64 {
        if (0..=self.n).all(|a| off[a] == 0) {
            self.diagonal_units()
        } else if self.in_near_field(off) {
            self.cell_average(off)
        } else {
            self.midpoint(off)
        }
    }

    /// Mean of `ρ^{-s}` over the cell at offset `off` by midpoint quadrature.
    fn cell_average(&self, off: &Index) -> f64 {
        let n = self.n;
        let q = NEAR_POINTS;
        let total = q.pow(n as u32 + 1);
        let mut sum = 0.0;
        for i in 0..total {
            let mut rem = i;
            let mut sq = 0.0;
            let mut dt = 0.0;
            for a in (0..=n).rev() {
                let u = off[a] as f64 - 0.5 + ((rem % q) as f64 + 0.5) / q as f64;
                rem /= q;
                if a == n {
                    dt = u.abs();
                } else {
                    sq += u * u;
                }
            }
            sum += self.rho_pow(sq.sqrt().max(dt.sqrt()));
        }
        sum / total as f64
    }

    /// `∫_{[-1/2,1/2]^{n+1}} ρ^{-s}`.
    ///
    /// The integrand is parabolically homogeneous of degree `-s`, so the
    /// integral over the half-scaled inner box is `2^{-β}` times the whole;
    /// only the bounded shell `cell ∖ inner` is integrated numerically.
    pub fn diagonal_units(&self) -> f64 {
        let n = self.n;
        let qs = 32usize;
        let qt = 64usize;
        let total = qs.pow(n as u32) * qt;
        let mut shell = 0.0;
        for i in 0..total {
            let mut rem = i;
            let ti = rem % qt;
            rem /= qt;
            let dt = -0.5 + (ti as f64 + 0.5) / qt as f64;
            let mut inner = dt.abs() < 0.125;
            let mut sq = 0.0;
            for _ in 0..n {
                let xi = -0.5 + ((rem % qs) as f64 + 0.5) / qs as f64;
                rem /= qs;
                inner &= xi.abs() < 0.25;
                sq += xi * xi;
            }
            if !inner {
                shell += self.rho_pow(sq.sqrt().max(dt.abs().sqrt()));
            }
        }
        shell /= total as f64;
        shell / (1.0 - 2f64.powf(-self.beta))
    }

    /// Table entry for per-axis offsets (signs ignored); zero outside the table.
    pub fn entry(&self, off: &[isize]) -> f64 {
        let mut slot = 0;
        for a in 0..=self.n {
            let o = off[a].unsigned_abs();
            if o >= self.dims[a] {
                return 0.0;
            }
            slot += o * self.strides[a];
        }
        self.table[slot]
    }

    /// `h^β · ρ^{-s}` without any near-field correction.
    pub fn midpoint_entry(&self, off: &[isize]) -> f64 {
        let mut o = [0usize; MAX_AXES];
        for a in 0..=self.n {
            o[a] = off[a].unsigned_abs();
        }
        self.h.powf(self.beta) * self.midpoint(&o)
    }

    pub fn near_field(&self) -> usize {
        self.near
    }

    /// `I_β f` at the given cells (zero elsewhere).
    pub fn apply_on(&self, f: &ScalarField, cells: &[usize]) -> Result<ScalarField> {
        let grid = f.grid();
        if grid.n() != self.n || grid.h() != self.h || grid.dims() != self.dims {
            return Err(Error::GridMismatch);
        }
        let axes = grid.axes();
        let sources: Vec<(Index, f64)> =
            f.values().iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(c, v)| (grid.unravel(c), *v)).collect();
        let results: Vec<f64> = cells
            .par_iter()
            .map(|&c| {
                let idx = grid.unravel(c);
                let mut sum = 0.0;
                for (src, v) in &sources {
                    let mut slot = 0;
                    for a in 0..axes {
                        slot += idx[a].abs_diff(src[a]) * self.strides[a];
                    }
                    sum += v * self.table[slot];
                }
                sum
            })
            .collect();
        let mut out = vec![0.0; grid.len()];
        for (&c, v) in cells.iter().zip(results) {
            out[c] = v;
        }
        ScalarField::new(grid, out)
    }

    /// `I_β f` at every cell.
    pub fn apply(&self, f: &ScalarField) -> Result<ScalarField> {
        let all: Vec<usize> = (0..f.grid().len()).collect();
        self.apply_on(f, &all)
    }
}

/// `I_β f(z) = Σ f(z̃) K(z - z̃)` at every cell.
pub fn caloric_riesz(f: &ScalarField, beta: f64) -> Result<ScalarField> {
    PotentialKernel::new(f.grid(), beta)?.apply(f)
}

/// `(Σ_{cells} |f|^p w h^{n+2})^{1/p}` over the cells of `region`.
pub fn weighted_lp_norm(f: &ScalarField, w: &WeightField, p: f64, region: &ParabolicRegion) -> Result<f64> {
    let cells = cells_of(f.grid(), region)?;
    weighted_lp_norm_cells(f, w, p, &cells)
}

pub fn weighted_lp_norm_cells(f: &ScalarField, w: &WeightField, p: f64, cells: &[usize]) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidExponent(format!("norm needs p ≥ 1, got {p}")));
    }
    f.check_grid(w.grid())?;
    let (fv, wv) = (f.values(), w.values());
    let sum: f64 = cells.iter().map(|&c| fv[c].abs().powf(p) * wv[c]).sum();
    Ok((sum * f.grid().cell_measure()).powf(1.0 / p))
}

/// `‖Mf‖_{L^p_w} / ‖f‖_{L^p_w}` over the whole grid.
pub fn maximal_boundedness_ratio(f: &ScalarField, w: &WeightField, p: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::InvalidExponent(format!("maximal bound needs p > 1, got {p}")));
    }
    let all: Vec<usize> = (0..f.grid().len()).collect();
    let den = weighted_lp_norm_cells(f, w, p, &all)?;
    if den == 0.0 {
        return Err(Error::InvalidParameter("f vanishes identically".into()));
    }
    let mf = parabolic_maximal(f);
    Ok(weighted_lp_norm_cells(&mf, w, p, &all)? / den)
}
