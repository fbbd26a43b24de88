//! N-dimensional summed-area tables.
//!
//! Prefix sums are carried in double-double form (`hi + lo`) so box sums
//! of small boxes deep inside large tables keep close to full precision.

use crate::geometry::{Index, MAX_AXES};

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[derive(Clone, Debug)]
pub struct SummedAreaTable {
    axes: usize,
    cells: Index,
    strides: Index,
    hi: Vec<f64>,
    lo: Vec<f64>,
}

impl SummedAreaTable {
    /// Builds the table for a row-major array with the given per-axis lengths.
    pub fn new(dims: &[usize], values: &[f64]) -> Self {
        let axes = dims.len();
        assert!((1..=MAX_AXES).contains(&axes), "1..={MAX_AXES} axes supported");
        assert_eq!(values.len(), dims.iter().product::<usize>(), "value count");
        let mut cells = [1; MAX_AXES];
        cells[..axes].copy_from_slice(dims);
        let mut tdims = [1; MAX_AXES];
        for a in 0..axes {
            tdims[a] = cells[a] + 1;
        }
        let mut strides = [0; MAX_AXES];
        let mut acc = 1;
        for a in (0..axes).rev() {
            strides[a] = acc;
            acc *= tdims[a];
        }
        let total = acc;
        let mut hi = vec![0.0; total];
        let mut lo = vec![0.0; total];

        // scatter values to offset (1, …, 1)
        let mut idx = [0usize; MAX_AXES];
        for &v in values {
            let t: usize = (0..axes).map(|a| (idx[a] + 1) * strides[a]).sum();
            hi[t] = v;
            for a in (0..axes).rev() {
                idx[a] += 1;
                if idx[a] < cells[a] {
                    break;
                }
                idx[a] = 0;
            }
        }

        // running sums along each axis in turn
        for a in 0..axes {
            let s = strides[a];
            for t in 0..total {
                let coord = (t / s) % tdims[a];
                if coord == 0 {
                    continue;
                }
                let (sum, err) = two_sum(hi[t], hi[t - s]);
                hi[t] = sum;
                lo[t] += lo[t - s] + err;
            }
        }
        Self { axes, cells, strides, hi, lo }
    }

    pub fn axes(&self) -> usize {
        self.axes
    }

    /// Per-axis cell counts of the source array.
    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.axes]
    }

    /// Sum over the half-open box `[lo, hi)` (cell indices).
    pub fn box_sum(&self, lo: &Index, hi: &Index) -> f64 {
        let corners = 1usize << self.axes;
        let (mut s, mut e) = (0.0, 0.0);
        for mask in 0..corners {
            let mut t = 0;
            let mut negative = false;
            for a in 0..self.axes {
                if mask & (1 << a) != 0 {
                    t += lo[a] * self.strides[a];
                    negative = !negative;
                } else {
                    t += hi[a] * self.strides[a];
                }
            }
            let (h, l) = if negative { (-self.hi[t], -self.lo[t]) } else { (self.hi[t], self.lo[t]) };
            let (sum, err) = two_sum(s, h);
            s = sum;
            e += err + l;
        }
        s + e
    }

    /// Box sum with the box clipped to the table; cells outside count as zero.
    pub fn box_sum_clipped(&self, lo: &[isize; MAX_AXES], hi: &[isize; MAX_AXES]) -> f64 {
        let mut l = [0usize; MAX_AXES];
        let mut h = [0usize; MAX_AXES];
        for a in 0..self.axes {
            let n = self.cells[a] as isize;
            let a0 = lo[a].clamp(0, n);
            let a1 = hi[a].clamp(0, n);
            if a1 <= a0 {
                return 0.0;
            }
            l[a] = a0 as usize;
            h[a] = a1 as usize;
        }
        self.box_sum(&l, &h)
    }

    /// Sum of the whole array.
    pub fn total(&self) -> f64 {
        let lo = [0; MAX_AXES];
        self.box_sum(&lo, &self.cells)
    }
}
