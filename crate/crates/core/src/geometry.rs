//! Space-time lattice, parabolic distance and parabolic regions.
//!
//! Cells are indexed row-major over the axes `(x_1, …, x_n, t)` with time
//! varying fastest. Spatial cells have width `h`, time cells have height
//! `h²`. A cell belongs to a region iff its center lies in the (open) region.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;

pub const MAX_SPACE_DIM: usize = 3;
pub const MAX_AXES: usize = MAX_SPACE_DIM + 1;

/// Multi-index of a cell or a lattice vertex. Entries past `n + 1` are unused.
pub type Index = [usize; MAX_AXES];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: Vec<f64>,
    pub t: f64,
}

impl Point {
    pub fn new(x: Vec<f64>, t: f64) -> Self {
        Self { x, t }
    }

    pub fn origin(n: usize) -> Self {
        Self { x: vec![0.0; n], t: 0.0 }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }
}

/// `max(|x1 - x2|, sqrt|t1 - t2|)` with the Euclidean norm in space.
pub fn parabolic_distance(a: &Point, b: &Point) -> f64 {
    parabolic_distance_raw(&a.x, a.t, &b.x, b.t)
}

pub(crate) fn parabolic_distance_raw(x1: &[f64], t1: f64, x2: &[f64], t2: f64) -> f64 {
    let sq: f64 = x1.iter().zip(x2).map(|(p, q)| (p - q) * (p - q)).sum();
    sq.sqrt().max((t1 - t2).abs().sqrt())
}

/// Uniform cell-centered space-time grid with time step `h²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    h: f64,
    space_half_cells: Vec<usize>,
    time_half_steps: usize,
    origin: Point,
}

impl Grid {
    /// Domain `origin ± (space_half_cells·h, time_half_steps·h²)`.
    pub fn new(n: usize, h: f64, space_half_cells: Vec<usize>, time_half_steps: usize, origin: Point) -> Result<Self> {
        if n == 0 || n > MAX_SPACE_DIM {
            return Err(Error::InvalidGrid(format!("spatial dimension {n} not in 1..={MAX_SPACE_DIM}")));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidGrid(format!("step {h} must be positive")));
        }
        if space_half_cells.len() != n || origin.n() != n {
            return Err(Error::InvalidGrid("axis count does not match n".into()));
        }
        if space_half_cells.contains(&0) || time_half_steps == 0 {
            return Err(Error::InvalidGrid("extents must be positive".into()));
        }
        Ok(Self { n, h, space_half_cells, time_half_steps, origin })
    }

    /// Grid covering exactly the parabolic cube `Q_r(0)`; `r/h` must be an integer.
    pub fn cube_domain(n: usize, h: f64, r: f64) -> Result<Self> {
        let m = cells_in(r, h)?;
        Self::new(n, h, vec![m; n], m * m, Point::origin(n))
    }

    /// Grid centered at the origin with spatial half-width `space_extent` on
    /// every axis and time half-length `time_extent`.
    pub fn from_extents(n: usize, h: f64, space_extent: f64, time_extent: f64) -> Result<Self> {
        let m = cells_in(space_extent, h)?;
        let mt = cells_in(time_extent, h * h)?;
        Self::new(n, h, vec![m; n], mt, Point::origin(n))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn axes(&self) -> usize {
        self.n + 1
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dt(&self) -> f64 {
        self.h * self.h
    }

    pub fn cell_measure(&self) -> f64 {
        self.h.powi(self.n as i32 + 2)
    }

    pub fn origin(&self) -> &Point {
        &self.origin
    }

    pub fn space_half_cells(&self) -> &[usize] {
        &self.space_half_cells
    }

    pub fn time_half_steps(&self) -> usize {
        self.time_half_steps
    }

    pub fn space_extent(&self, axis: usize) -> f64 {
        self.space_half_cells[axis] as f64 * self.h
    }

    pub fn time_extent(&self) -> f64 {
        self.time_half_steps as f64 * self.dt()
    }

    /// Cells per axis; unused trailing axes have length 1.
    pub fn dims(&self) -> Index {
        let mut d = [1; MAX_AXES];
        for (a, c) in self.space_half_cells.iter().enumerate() {
            d[a] = 2 * c;
        }
        d[self.n] = 2 * self.time_half_steps;
        d
    }

    pub fn strides(&self) -> Index {
        let d = self.dims();
        let mut s = [0; MAX_AXES];
        let mut acc = 1;
        for a in (0..self.axes()).rev() {
            s[a] = acc;
            acc *= d[a];
        }
        s
    }

    pub fn len(&self) -> usize {
        self.dims()[..self.axes()].iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ravel(&self, idx: &Index) -> usize {
        let s = self.strides();
        (0..self.axes()).map(|a| idx[a] * s[a]).sum()
    }

    pub fn unravel(&self, mut flat: usize) -> Index {
        let d = self.dims();
        let mut idx = [0; MAX_AXES];
        for a in (0..self.axes()).rev() {
            idx[a] = flat % d[a];
            flat /= d[a];
        }
        idx
    }

    /// Step along `axis`: `h` in space, `h²` in time.
    pub fn step(&self, axis: usize) -> f64 {
        if axis == self.n {
            self.dt()
        } else {
            self.h
        }
    }

    /// Coordinate of the lower domain boundary along `axis`.
    pub fn lower(&self, axis: usize) -> f64 {
        if axis == self.n {
            self.origin.t - self.time_half_steps as f64 * self.dt()
        } else {
            self.origin.x[axis] - self.space_half_cells[axis] as f64 * self.h
        }
    }

    /// Center coordinate of cell `j` along `axis`.
    pub fn axis_center(&self, axis: usize, j: usize) -> f64 {
        self.lower(axis) + (j as f64 + 0.5) * self.step(axis)
    }

    /// Coordinate of lattice vertex `v` along `axis`.
    pub fn axis_vertex(&self, axis: usize, v: usize) -> f64 {
        self.lower(axis) + v as f64 * self.step(axis)
    }

    /// Writes the spatial center of cell `flat` into `x` and returns its time.
    pub fn center_into(&self, flat: usize, x: &mut [f64]) -> f64 {
        let idx = self.unravel(flat);
        for (a, xa) in x.iter_mut().enumerate().take(self.n) {
            *xa = self.axis_center(a, idx[a]);
        }
        self.axis_center(self.n, idx[self.n])
    }

    pub fn cell_center(&self, flat: usize) -> Point {
        let mut x = vec![0.0; self.n];
        let t = self.center_into(flat, &mut x);
        Point { x, t }
    }

    pub fn vertex_point(&self, v: &Index) -> Point {
        Point { x: (0..self.n).map(|a| self.axis_vertex(a, v[a])).collect(), t: self.axis_vertex(self.n, v[self.n]) }
    }

    /// The parabolic cube of radius `m·h` centered on lattice vertex `v`.
    pub fn vertex_cube(&self, v: &Index, m: usize) -> ParabolicRegion {
        ParabolicRegion::cube(self.vertex_point(v), m as f64 * self.h)
    }

    /// The whole domain as a rectangle region.
    pub fn domain_region(&self) -> ParabolicRegion {
        let mut radii: Vec<f64> = (0..self.n).map(|a| self.space_extent(a)).collect();
        radii.push(self.time_extent().sqrt());
        let nominal = radii.iter().cloned().fold(0.0, f64::max);
        ParabolicRegion {
            shape: Shape::Box,
            center: self.origin.clone(),
            radii,
            alpha: 1.0,
            nominal_r: nominal,
            clip: None,
        }
    }

    /// True when cells straddle `x_n = 0` symmetrically.
    pub fn symmetric_in_last_space_axis(&self) -> bool {
        self.origin.x[self.n - 1] == 0.0
    }

    /// Mirror image of a cell under `x_n -> -x_n`.
    pub fn reflect_last_space(&self, flat: usize) -> usize {
        let d = self.dims();
        let mut idx = self.unravel(flat);
        let a = self.n - 1;
        idx[a] = d[a] - 1 - idx[a];
        self.ravel(&idx)
    }

    /// Range of cell indices along `axis` whose centers may lie in `(lo, hi)`.
    fn candidate_range(&self, axis: usize, lo: f64, hi: f64) -> (usize, usize) {
        let d = self.dims()[axis];
        let step = self.step(axis);
        let base = self.lower(axis);
        let a = ((lo - base) / step - 0.5).floor() - 1.0;
        let b = ((hi - base) / step - 0.5).ceil() + 1.0;
        let a = a.max(0.0) as usize;
        let b = if b < 0.0 { 0 } else { (b as usize + 1).min(d) };
        (a.min(d), b)
    }
}

fn cells_in(extent: f64, step: f64) -> Result<usize> {
    let q = extent / step;
    let m = q.round();
    if m < 1.0 || (q - m).abs() > 1e-9 * q.max(1.0) {
        return Err(Error::InvalidGrid(format!("extent {extent} is not a positive integer multiple of step {step}")));
    }
    Ok(m as usize)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Product of spatial intervals and a time interval.
    Box,
    /// Spatial Euclidean ball times a time interval.
    Cylinder,
}

/// Half-space used to clip a region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HalfSpace {
    /// `{x_n > 0}`, used by the flat-boundary results.
    UpperSpace,
    /// `{t > 0}`.
    UpperTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    Cube,
    Rectangle,
    Cylinder,
    HalfCube,
    HalfCylinder,
}

/// α-parabolic rectangle, cube or cylinder, optionally clipped to a half space.
///
/// `radii` holds `(r_1, …, r_n, r_{n+1})`; the time interval is
/// `(t - α r_{n+1}², t + α r_{n+1}²)`. Cylinders use `r_1` as ball radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParabolicRegion {
    pub shape: Shape,
    pub center: Point,
    pub radii: Vec<f64>,
    pub alpha: f64,
    /// The `r` the region is bookkept against (`r/2 ≤ 𝐫 ≤ 2r` for rectangles).
    pub nominal_r: f64,
    pub clip: Option<HalfSpace>,
}

impl ParabolicRegion {
    pub fn cube(center: Point, r: f64) -> Self {
        let n = center.n();
        Self { shape: Shape::Box, center, radii: vec![r; n + 1], alpha: 1.0, nominal_r: r, clip: None }
    }

    pub fn cube_alpha(center: Point, r: f64, alpha: f64) -> Self {
        Self { alpha, ..Self::cube(center, r) }
    }

    pub fn rectangle(center: Point, radii: Vec<f64>, alpha: f64, nominal_r: f64) -> Result<Self> {
        if radii.len() != center.n() + 1 {
            return Err(Error::InvalidRegion("rectangle needs n + 1 radii".into()));
        }
        let region = Self { shape: Shape::Box, center, radii, alpha, nominal_r, clip: None };
        region.validate()?;
        Ok(region)
    }

    pub fn cylinder(center: Point, r: f64, alpha: f64) -> Self {
        let n = center.n();
        Self { shape: Shape::Cylinder, center, radii: vec![r; n + 1], alpha, nominal_r: r, clip: None }
    }

    /// `Q_r(z) ∩ {x_n > 0}`.
    pub fn half_cube(center: Point, r: f64) -> Self {
        Self::cube(center, r).clipped(HalfSpace::UpperSpace)
    }

    /// `C_r(z) ∩ {x_n > 0}`.
    pub fn half_cylinder(center: Point, r: f64) -> Self {
        Self::cylinder(center, r, 1.0).clipped(HalfSpace::UpperSpace)
    }

    pub fn clipped(mut self, half: HalfSpace) -> Self {
        self.clip = Some(half);
        self
    }

    pub fn unclipped(&self) -> Self {
        Self { clip: None, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.radii.iter().all(|r| r.is_finite() && *r > 0.0)
            && self.alpha.is_finite()
            && self.alpha > 0.0
            && self.nominal_r > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidRegion("radii and alpha must be positive".into()))
        }
    }

    pub fn n(&self) -> usize {
        self.center.n()
    }

    pub fn kind(&self) -> RegionKind {
        let uniform = self.radii.iter().all(|&r| r == self.radii[0]) && self.alpha == 1.0;
        match (self.shape, self.clip.is_some()) {
            (Shape::Box, false) if uniform => RegionKind::Cube,
            (Shape::Box, false) => RegionKind::Rectangle,
            (Shape::Cylinder, false) => RegionKind::Cylinder,
            (Shape::Box, true) => RegionKind::HalfCube,
            (Shape::Cylinder, true) => RegionKind::HalfCylinder,
        }
    }

    pub fn time_half_length(&self) -> f64 {
        let rt = self.radii[self.n()];
        self.alpha * rt * rt
    }

    pub fn contains(&self, x: &[f64], t: f64) -> bool {
        let n = self.n();
        if (t - self.center.t).abs() >= self.time_half_length() {
            return false;
        }
        let inside = match self.shape {
            Shape::Box => (0..n).all(|i| (x[i] - self.center.x[i]).abs() < self.radii[i]),
            Shape::Cylinder => {
                let sq: f64 = (0..n).map(|i| (x[i] - self.center.x[i]).powi(2)).sum();
                sq < self.radii[0] * self.radii[0]
            }
        };
        inside
            && match self.clip {
                None => true,
                Some(HalfSpace::UpperSpace) => x[n - 1] > 0.0,
                Some(HalfSpace::UpperTime) => t > 0.0,
            }
    }

    pub fn contains_point(&self, z: &Point) -> bool {
        self.contains(&z.x, z.t)
    }

    /// Bounding box `(lo, hi)` over the axes `(x_1, …, x_n, t)`.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let mut lo = Vec::with_capacity(n + 1);
        let mut hi = Vec::with_capacity(n + 1);
        for i in 0..n {
            let r = match self.shape {
                Shape::Box => self.radii[i],
                Shape::Cylinder => self.radii[0],
            };
            lo.push(self.center.x[i] - r);
            hi.push(self.center.x[i] + r);
        }
        let tl = self.time_half_length();
        lo.push(self.center.t - tl);
        hi.push(self.center.t + tl);
        match self.clip {
            Some(HalfSpace::UpperSpace) => lo[n - 1] = lo[n - 1].max(0.0),
            Some(HalfSpace::UpperTime) => lo[n] = lo[n].max(0.0),
            None => {}
        }
        (lo, hi)
    }

    /// True when the closed box `[lo, hi]` lies inside the open region.
    pub fn contains_closed_box(&self, lo: &[f64], hi: &[f64]) -> bool {
        let n = self.n();
        let tl = self.time_half_length();
        if lo[n] <= self.center.t - tl || hi[n] >= self.center.t + tl {
            return false;
        }
        let spatial = match self.shape {
            Shape::Box => {
                (0..n).all(|i| lo[i] > self.center.x[i] - self.radii[i] && hi[i] < self.center.x[i] + self.radii[i])
            }
            Shape::Cylinder => {
                let far: f64 = (0..n)
                    .map(|i| {
                        let d = (lo[i] - self.center.x[i]).abs().max((hi[i] - self.center.x[i]).abs());
                        d * d
                    })
                    .sum();
                far < self.radii[0] * self.radii[0]
            }
        };
        spatial
            && match self.clip {
                None => true,
                Some(HalfSpace::UpperSpace) => lo[n - 1] > 0.0,
                Some(HalfSpace::UpperTime) => lo[n] > 0.0,
            }
    }

    /// Lebesgue measure of the unclipped continuum region.
    pub fn continuum_measure(&self) -> f64 {
        let n = self.n();
        let time = 2.0 * self.time_half_length();
        match self.shape {
            Shape::Box => self.radii[..n].iter().map(|r| 2.0 * r).product::<f64>() * time,
            Shape::Cylinder => unit_ball_volume(n) * self.radii[0].powi(n as i32) * time,
        }
    }
}

/// Volume of the unit ball in `R^n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / n as f64 * unit_ball_volume(n - 2),
    }
}

/// Sorted flat indices of the cells whose centers lie in `region`.
pub fn cells_of(grid: &Grid, region: &ParabolicRegion) -> Result<Vec<usize>> {
    if region.n() != grid.n() {
        return Err(Error::InvalidRegion("region dimension differs from grid".into()));
    }
    region.validate()?;
    let axes = grid.axes();
    let (lo, hi) = region.bounds();
    let mut ranges = [(0usize, 1usize); MAX_AXES];
    for a in 0..axes {
        ranges[a] = grid.candidate_range(a, lo[a], hi[a]);
        if ranges[a].0 >= ranges[a].1 {
            return Err(Error::EmptyRegion);
        }
    }
    let mut out = Vec::new();
    let mut x = vec![0.0; grid.n()];
    let mut idx = [0usize; MAX_AXES];
    for a in 0..MAX_AXES {
        idx[a] = ranges[a].0;
    }
    // Odometer over the candidate box; the last axis is innermost so output is sorted.
    'outer: loop {
        for a in 0..grid.n() {
            x[a] = grid.axis_center(a, idx[a]);
        }
        let t = grid.axis_center(grid.n(), idx[grid.n()]);
        if region.contains(&x, t) {
            out.push(grid.ravel(&idx));
        }
        let mut a = axes;
        loop {
            if a == 0 {
                break 'outer;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < ranges[a].1 {
                break;
            }
            idx[a] = ranges[a].0;
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyRegion);
    }
    Ok(out)
}

/// Cell count times `h^{n+2}`.
pub fn region_measure(grid: &Grid, region: &ParabolicRegion) -> Result<f64> {
    Ok(cells_of(grid, region)?.len() as f64 * grid.cell_measure())
}

/// Midpoint-rule mean of `field` over `region`.
pub fn mean(field: &ScalarField, region: &ParabolicRegion) -> Result<f64> {
    let cells = cells_of(field.grid(), region)?;
    Ok(mean_over(field.values(), &cells))
}

/// Arithmetic mean of `values` over the listed cells, summed in list order.
/// Mean shifted by the first sample, so a constant field has its value as
/// mean exactly.
pub fn mean_over(values: &[f64], cells: &[usize]) -> f64 {
    let Some(&first) = cells.first() else {
        return f64::NAN;
    };
    let shift = values[first];
    let sum: f64 = cells.iter().map(|&c| values[c] - shift).sum();
    shift + sum / cells.len() as f64
}

/// The faces of `T_r = Q_r ∩ {x_n = 0}` as pairs `(upper cell, lower cell)`.
#[derive(Clone, Debug)]
pub struct FlatBoundary {
    pub r: f64,
    pub faces: Vec<(usize, usize)>,
}

impl FlatBoundary {
    /// Faces of the flat part of `region` (a cube or cylinder centered on
    /// `x_n = 0`, clipped or not).
    pub fn new(grid: &Grid, region: &ParabolicRegion) -> Result<Self> {
        if !grid.symmetric_in_last_space_axis() {
            return Err(Error::InvalidGrid("grid must straddle x_n = 0 symmetrically".into()));
        }
        let full = region.unclipped();
        let n = grid.n();
        let mid = grid.dims()[n - 1] / 2;
        let mut faces = Vec::new();
        let mut x = vec![0.0; n];
        for c in cells_of(grid, &full)? {
            let idx = grid.unravel(c);
            if idx[n - 1] != mid {
                continue;
            }
            let t = grid.center_into(c, &mut x);
            x[n - 1] = 0.0;
            if full.contains(&x, t) {
                faces.push((c, grid.reflect_last_space(c)));
            }
        }
        Ok(Self { r: region.nominal_r, faces })
    }
}
