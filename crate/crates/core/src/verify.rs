//! Numerical verification of the Poincaré and Sobolev-Poincaré family of
//! inequalities, admissible-exponent scans, and the chain construction.
//!
//! Every verifier returns both sides of its inequality; ratios, not pass or
//! fail, are the primitive output.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::calculus::{extend_g_star, extend_odd_gradient, initial_gate, odd_extension, trace_gate, SolutionPair};
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::generators::W21Sample;
use crate::geometry::{cells_of, mean_over, unit_ball_volume, Grid, HalfSpace, ParabolicRegion, Point, Shape};
use crate::operators::PotentialKernel;
use crate::weights::WeightField;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Safety factor of the zero-trace and zero-initial gates.
pub const GATE_SAFETY: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremId {
    Poincare,
    SobolevPoincare,
    RieszLemma,
    HigherIntegrability,
    BoundaryFlat,
    BoundaryInitial,
    GradientSp,
    GradientBoundary,
}

impl TheoremId {
    pub fn as_str(&self) -> &'static str {
        match self {
            TheoremId::Poincare => "poincare",
            TheoremId::SobolevPoincare => "sobolev_poincare",
            TheoremId::RieszLemma => "riesz_lemma",
            TheoremId::HigherIntegrability => "higher_integrability",
            TheoremId::BoundaryFlat => "boundary_flat",
            TheoremId::BoundaryInitial => "boundary_initial",
            TheoremId::GradientSp => "gradient_sp",
            TheoremId::GradientBoundary => "gradient_boundary",
        }
    }
}

/// One evaluated inequality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub schema_version: u32,
    pub theorem: TheoremId,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub n: usize,
    pub p: f64,
    /// `k` or `γ`, whichever the inequality uses.
    pub exponent: f64,
    pub r: f64,
    pub alpha: f64,
    pub weight: String,
    pub solution: String,
    pub budget: Option<f64>,
    pub pass: bool,
    pub extra: BTreeMap<String, f64>,
}

/// Column order of the aggregate CSV.
pub const CSV_COLUMNS: [&str; 10] = ["theorem", "n", "p", "exponent", "r", "weight", "solution", "lhs", "rhs", "ratio"];

impl InequalityReport {
    fn new(
        theorem: TheoremId,
        lhs: f64,
        rhs: f64,
        n: usize,
        p: f64,
        exponent: f64,
        region: &ParabolicRegion,
        weight: &str,
        solution: &str,
    ) -> Result<Self> {
        let ratio = if lhs == 0.0 {
            0.0
        } else if rhs > 0.0 {
            lhs / rhs
        } else {
            return Err(Error::Violation { lhs });
        };
        Ok(Self {
            schema_version: REPORT_SCHEMA_VERSION,
            theorem,
            lhs,
            rhs,
            ratio,
            n,
            p,
            exponent,
            r: region.nominal_r,
            alpha: region.alpha,
            weight: weight.to_string(),
            solution: solution.to_string(),
            budget: None,
            pass: true,
            extra: BTreeMap::new(),
        })
    }

    /// Sets the budget and the pass flag `ratio ≤ budget`.
    pub fn with_budget(mut self, budget: f64) -> Self {
        self.budget = Some(budget);
        self.pass = self.ratio <= budget;
        self
    }

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.theorem.as_str().to_string(),
            self.n.to_string(),
            self.p.to_string(),
            self.exponent.to_string(),
            self.r.to_string(),
            self.weight.clone(),
            self.solution.clone(),
            self.lhs.to_string(),
            self.rhs.to_string(),
            self.ratio.to_string(),
        ]
    }
}

/// `(Σ v^q w / Σ w)^{1/q}` over `cells`.
fn weighted_power_mean(cells: &[usize], w: &[f64], q: f64, v: impl Fn(usize) -> f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for &c in cells {
        num += v(c).powf(q) * w[c];
        den += w[c];
    }
    (num / den).powf(1.0 / q)
}

fn check_exponents(p: f64, k: f64) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidExponent(format!("p = {p}")));
    }
    if !(k >= 1.0 && k.is_finite()) {
        return Err(Error::InvalidExponent(format!("k = {k} must be ≥ 1")));
    }
    Ok(())
}

fn check_region(region: &ParabolicRegion) -> Result<()> {
    region.validate()?;
    if region.shape == Shape::Box {
        let r = region.nominal_r;
        let ok = region.radii.iter().all(|&ri| ri >= r / 2.0 - 1e-12 && ri <= 2.0 * r + 1e-12);
        if !ok {
            return Err(Error::InvalidRegion("rectangle radii must satisfy r/2 ≤ 𝐫 ≤ 2r".into()));
        }
    }
    Ok(())
}

/// `⨍|u − (u)_C| ≤ c r ⨍|Du| + c α r ⨍|G|`; reports `rhs = r ⨍|Du| + α r ⨍|G|`.
pub fn verify_poincare(pair: &SolutionPair, region: &ParabolicRegion) -> Result<InequalityReport> {
    check_region(region)?;
    let grid = pair.grid();
    let cells = cells_of(grid, region)?;
    let u = pair.u.values();
    let mu = mean_over(u, &cells);
    let lhs = cells.iter().map(|&c| (u[c] - mu).abs()).sum::<f64>() / cells.len() as f64;
    let du = cells.iter().map(|&c| pair.du.norm_at(c)).sum::<f64>() / cells.len() as f64;
    let g = cells.iter().map(|&c| pair.g.norm_at(c)).sum::<f64>() / cells.len() as f64;
    let r = region.nominal_r;
    let rhs = r * du + region.alpha * r * g;
    let mut rep =
        InequalityReport::new(TheoremId::Poincare, lhs, rhs, grid.n(), 1.0, 1.0, region, "unit", &pair.label)?;
    rep.extra.insert("mean_du".into(), du);
    rep.extra.insert("mean_g".into(), g);
    Ok(rep)
}

/// Sobolev-Poincaré sides from raw fields; `subtract_mean` selects
/// `u − (u)_Q` (unweighted mean) or `u` itself.
fn sp_sides(
    u: &ScalarField,
    du: &VectorField,
    g: &VectorField,
    w: &WeightField,
    p: f64,
    k: f64,
    cells: &[usize],
    r: f64,
    subtract_mean: bool,
) -> (f64, f64) {
    let uv = u.values();
    let mu = if subtract_mean { mean_over(uv, cells) } else { 0.0 };
    let wv = w.values();
    let lhs = weighted_power_mean(cells, wv, p * k, |c| (uv[c] - mu).abs());
    let rhs = r * weighted_power_mean(cells, wv, p, |c| du.norm_at(c) + g.norm_at(c));
    (lhs, rhs)
}

/// `(w(Q)^{-1} ∫|u − (u)_Q|^{pk} w)^{1/pk} ≤ c r (w(Q)^{-1} ∫(|Du| + |G|)^p w)^{1/p}`.
pub fn verify_sobolev_poincare(
    pair: &SolutionPair,
    w: &WeightField,
    p: f64,
    k: f64,
    region: &ParabolicRegion,
) -> Result<InequalityReport> {
    check_exponents(p, k)?;
    check_region(region)?;
    pair.u.check_grid(w.grid())?;
    let cells = cells_of(pair.grid(), region)?;
    let (lhs, rhs) = sp_sides(&pair.u, &pair.du, &pair.g, w, p, k, &cells, region.nominal_r, true);
    InequalityReport::new(TheoremId::SobolevPoincare, lhs, rhs, pair.grid().n(), p, k, region, w.label(), &pair.label)
}

/// `(w(Q)^{-1} ∫_Q [I_1|f|]^{pk} w)^{1/pk} ≤ c r (w(Q)^{-1} ∫_Q |f|^p w)^{1/p}`
/// for `f` vanishing off `Q`.
pub fn verify_riesz_lemma(
    f: &ScalarField,
    label: &str,
    w: &WeightField,
    p: f64,
    k: f64,
    region: &ParabolicRegion,
    kernel: &PotentialKernel,
) -> Result<InequalityReport> {
    check_exponents(p, k)?;
    f.check_grid(w.grid())?;
    if kernel.beta() != 1.0 {
        return Err(Error::InvalidParameter("the lemma uses the order-1 potential".into()));
    }
    let grid = f.grid();
    let cells = cells_of(grid, region)?;
    let mut inside = vec![false; grid.len()];
    for &c in &cells {
        inside[c] = true;
    }
    let outside = f.values().iter().zip(&inside).filter(|(v, i)| **v != 0.0 && !**i).count();
    if outside > 0 {
        return Err(Error::UnsupportedOutsideRegion(outside));
    }
    let abs = f.abs();
    let potential = kernel.apply_on(&abs, &cells)?;
    let wv = w.values();
    let pv = potential.values();
    let av = abs.values();
    let lhs = weighted_power_mean(&cells, wv, p * k, |c| pv[c]);
    let rhs = region.nominal_r * weighted_power_mean(&cells, wv, p, |c| av[c]);
    InequalityReport::new(TheoremId::RieszLemma, lhs, rhs, grid.n(), p, k, region, w.label(), label)
}

/// Admissible `γ` interval `(1, γ_max)` for `1 < (k−1)γ/(k−γ) < 1 + ε0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaInterval {
    pub lower: f64,
    pub upper: f64,
    pub gamma: f64,
}

impl GammaInterval {
    pub fn new(k: f64, eps0: f64) -> Result<Self> {
        if !(k > 1.0 && eps0 > 0.0 && k.is_finite() && eps0.is_finite()) {
            return Err(Error::EmptyGammaInterval { k, eps0 });
        }
        let upper = (1.0 + eps0) * k / (k + eps0);
        Ok(Self { lower: 1.0, upper, gamma: 0.5 * (1.0 + upper) })
    }

    /// `(k−1)γ/(k−γ)`.
    pub fn holder_exponent(k: f64, gamma: f64) -> f64 {
        (k - 1.0) * gamma / (k - gamma)
    }
}

/// `(|Q|^{-1}∫[|u − (u)_Q|^p w]^γ)^{1/pγ} ≤ c r (|Q|^{-1}∫(|Du|^p + |G|^p) w)^{1/p}`
/// evaluated at the midpoint of the admissible `γ` interval.
pub fn verify_higher_integrability(
    pair: &SolutionPair,
    w: &WeightField,
    p: f64,
    k: f64,
    eps0: f64,
    region: &ParabolicRegion,
) -> Result<InequalityReport> {
    check_exponents(p, k)?;
    check_region(region)?;
    pair.u.check_grid(w.grid())?;
    let gi = GammaInterval::new(k, eps0)?;
    let gamma = gi.gamma;
    let cells = cells_of(pair.grid(), region)?;
    let u = pair.u.values();
    let wv = w.values();
    let mu = mean_over(u, &cells);
    let count = cells.len() as f64;
    let lhs_sum: f64 = cells.iter().map(|&c| ((u[c] - mu).abs().powf(p) * wv[c]).powf(gamma)).sum();
    let lhs = (lhs_sum / count).powf(1.0 / (p * gamma));
    let rhs_sum: f64 = cells.iter().map(|&c| (pair.du.norm_at(c).powf(p) + pair.g.norm_at(c).powf(p)) * wv[c]).sum();
    let rhs = region.nominal_r * (rhs_sum / count).powf(1.0 / p);
    let mut rep = InequalityReport::new(
        TheoremId::HigherIntegrability,
        lhs,
        rhs,
        pair.grid().n(),
        p,
        gamma,
        region,
        w.label(),
        &pair.label,
    )?;
    rep.extra.insert("k".into(), k);
    rep.extra.insert("eps0".into(), eps0);
    rep.extra.insert("gamma_upper".into(), gi.upper);
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// `u = 0` on the flat piece `{x_n = 0}`; region is the upper half.
    Flat,
    /// `u` starts from zero at the initial time; region is the full cube.
    Initial,
}

/// Cross-check through the odd extension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtensionCheck {
    pub lhs_half: f64,
    pub lhs_full: f64,
    /// `w(Q) / w(Q⁺)`.
    pub weight_ratio: f64,
    /// `lhs_full · (w(Q)/w(Q⁺))^{1/pk}`.
    pub bound: f64,
    pub holds: bool,
    pub full: InequalityReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub report: InequalityReport,
    pub extension: Option<ExtensionCheck>,
}

/// Odd extension of a pair: `(ũ, Dũ, G*)`.
pub fn extend_pair(pair: &SolutionPair) -> Result<SolutionPair> {
    Ok(SolutionPair {
        label: format!("{}~", pair.label),
        u: odd_extension(&pair.u)?,
        du: extend_odd_gradient(&pair.du)?,
        g: extend_g_star(&pair.g)?,
        region: pair.region.unclipped(),
        ..pair.clone()
    })
}

/// `(w(Q⁺)^{-1} ∫|u|^{pk} w)^{1/pk} ≤ c r (w(Q⁺)^{-1} ∫(|Du| + |G|)^p w)^{1/p}`.
///
/// Flat mode expects a region clipped to `{x_n > 0}` and also runs the
/// extension cross-check on the unclipped region. Initial mode expects an
/// unclipped region.
pub fn verify_boundary(
    pair: &SolutionPair,
    w: &WeightField,
    p: f64,
    k: f64,
    region: &ParabolicRegion,
    mode: BoundaryMode,
) -> Result<BoundaryReport> {
    check_exponents(p, k)?;
    pair.u.check_grid(w.grid())?;
    let grid = pair.grid();
    match mode {
        BoundaryMode::Flat => {
            if region.clip != Some(HalfSpace::UpperSpace) {
                return Err(Error::InvalidRegion("flat mode needs the {x_n > 0} half".into()));
            }
            let gate = trace_gate(&pair.u, &pair.du, region, GATE_SAFETY)?;
            if !gate.pass {
                return Err(Error::TraceGate(format!(
                    "first-layer max {:.3e} exceeds {:.3e}",
                    gate.measured, gate.bound
                )));
            }
        }
        BoundaryMode::Initial => {
            if region.clip.is_some() {
                return Err(Error::InvalidRegion("initial mode uses the full region".into()));
            }
            let gate = initial_gate(&pair.u, region, 1, GATE_SAFETY)?;
            if !gate.pass {
                return Err(Error::TraceGate(format!(
                    "initial-layer mass {:.3e} exceeds {:.3e}",
                    gate.measured, gate.bound
                )));
            }
        }
    }
    let cells = cells_of(grid, region)?;
    let (lhs, rhs) = sp_sides(&pair.u, &pair.du, &pair.g, w, p, k, &cells, region.nominal_r, false);
    let theorem = match mode {
        BoundaryMode::Flat => TheoremId::BoundaryFlat,
        BoundaryMode::Initial => TheoremId::BoundaryInitial,
    };
    let report = InequalityReport::new(theorem, lhs, rhs, grid.n(), p, k, region, w.label(), &pair.label)?;
    let extension = match mode {
        BoundaryMode::Initial => None,
        BoundaryMode::Flat => {
            let ext = extend_pair(pair)?;
            let full_region = region.unclipped();
            let full_cells = cells_of(grid, &full_region)?;
            let full = verify_sobolev_poincare(&ext, w, p, k, &full_region)?;
            let weight_ratio = w.measure_of_cells(&full_cells) / w.measure_of_cells(&cells);
            let bound = full.lhs * weight_ratio.powf(1.0 / (p * k));
            Some(ExtensionCheck {
                lhs_half: lhs,
                lhs_full: full.lhs,
                weight_ratio,
                bound,
                holds: lhs <= bound * (1.0 + 1e-12),
                full,
            })
        }
    };
    Ok(BoundaryReport { report, extension })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub direct: InequalityReport,
    /// One Sobolev-Poincaré report per `v_i = u_{x_i}`, `G^i = u_t e_i`.
    pub componentwise: Vec<InequalityReport>,
    /// Largest gap between a proof-path lhs and the same component
    /// evaluated straight from `Du`.
    pub agreement: f64,
}

/// `(w(Q)^{-1}∫|Du − (Du)_Q|^{pk} w)^{1/pk} ≤ c r (w(Q)^{-1}∫(|D²u|^p + |u_t|^p) w)^{1/p}`.
pub fn verify_gradient_sp(
    s: &W21Sample,
    label: &str,
    w: &WeightField,
    p: f64,
    k: f64,
    region: &ParabolicRegion,
) -> Result<GradientReport> {
    check_exponents(p, k)?;
    check_region(region)?;
    let grid = s.u.grid();
    s.u.check_grid(w.grid())?;
    let n = grid.n();
    let cells = cells_of(grid, region)?;
    let wv = w.values();
    let means: Vec<f64> = (0..n).map(|i| mean_over(s.du.component(i), &cells)).collect();
    let dev = |c: usize| -> f64 { (0..n).map(|i| (s.du.component(i)[c] - means[i]).powi(2)).sum::<f64>().sqrt() };
    let lhs = weighted_power_mean(&cells, wv, p * k, dev);
    let ut = s.ut.values();
    let rhs_inner = {
        let mut num = 0.0;
        let mut den = 0.0;
        for &c in &cells {
            num += (s.d2u.norm_at(c).powf(p) + ut[c].abs().powf(p)) * wv[c];
            den += wv[c];
        }
        (num / den).powf(1.0 / p)
    };
    let rhs = region.nominal_r * rhs_inner;
    let direct = InequalityReport::new(TheoremId::GradientSp, lhs, rhs, n, p, k, region, w.label(), label)?;

    let mut componentwise = Vec::with_capacity(n);
    let mut agreement: f64 = 0.0;
    for i in 0..n {
        let vi = s.du.component_field(i);
        let dvi = s.d2u.row(i);
        let mut gi = VectorField::zeros(grid, n);
        gi.components_mut()[i] = ut.to_vec();
        let pair = SolutionPair {
            label: format!("{label}:d{i}"),
            u: vi,
            du: dvi,
            g: gi,
            region: region.clone(),
            provenance: Default::default(),
            tolerance: f64::INFINITY,
            residual: 0.0,
        };
        let rep = verify_sobolev_poincare(&pair, w, p, k, region)?;
        let direct_i = weighted_power_mean(&cells, wv, p * k, |c| (s.du.component(i)[c] - means[i]).abs());
        let scale = direct_i.abs().max(f64::MIN_POSITIVE);
        agreement = agreement.max((rep.lhs - direct_i).abs() / scale);
        componentwise.push(rep);
    }
    Ok(GradientReport { direct, componentwise, agreement })
}

/// Flat-boundary gradient inequality: tangential derivatives without mean,
/// `u_{x_n} − (u_{x_n})_{Q⁺}` for the normal one.
pub fn verify_gradient_boundary(
    s: &W21Sample,
    label: &str,
    w: &WeightField,
    p: f64,
    k: f64,
    region: &ParabolicRegion,
) -> Result<InequalityReport> {
    check_exponents(p, k)?;
    if region.clip != Some(HalfSpace::UpperSpace) {
        return Err(Error::InvalidRegion("needs the {x_n > 0} half".into()));
    }
    let grid = s.u.grid();
    s.u.check_grid(w.grid())?;
    let gate = trace_gate(&s.u, &s.du, region, GATE_SAFETY)?;
    if !gate.pass {
        return Err(Error::TraceGate(format!("first-layer max {:.3e} exceeds {:.3e}", gate.measured, gate.bound)));
    }
    let n = grid.n();
    let cells = cells_of(grid, region)?;
    let wv = w.values();
    let mn = mean_over(s.du.component(n - 1), &cells);
    let lhs = weighted_power_mean(&cells, wv, p * k, |c| {
        (0..n - 1).map(|i| s.du.component(i)[c].abs()).sum::<f64>() + (s.du.component(n - 1)[c] - mn).abs()
    });
    let ut = s.ut.values();
    let rhs = region.nominal_r
        * weighted_power_mean(&cells, wv, 1.0, |c| s.d2u.norm_at(c).powf(p) + ut[c].abs().powf(p)).powf(1.0 / p);
    InequalityReport::new(TheoremId::GradientBoundary, lhs, rhs, n, p, k, region, w.label(), label)
}

/// Element of the nested chain from `C_r` (or `Q_r`) down to `z̃`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainElement {
    pub index: usize,
    pub region: ParabolicRegion,
    pub rho: f64,
    pub alpha: f64,
    pub y: Vec<f64>,
    pub tau: f64,
    /// `r_j = 2^{1−j} r`.
    pub r_j: f64,
}

impl ChainElement {
    /// Continuum measure of the element.
    pub fn measure(&self) -> f64 {
        self.region.continuum_measure()
    }
}

/// `κ(n) = ω_n / 2^{n+1}`: the element measures satisfy `|C̃_j| ≥ κ r_j^{n+2}`.
pub fn chain_kappa(n: usize) -> f64 {
    unit_ball_volume(n) / 2f64.powi(n as i32 + 1)
}

/// Builds the chain for `z̃ ∈ region`, stopping before `r_j < 4h`.
///
/// Cylinder regions use the explicit `ρ_j, α_j, y_j, τ_j` of the
/// construction; cube regions use `Q_{r_j}(z̃) ∩ Q_r`.
pub fn chain_decomposition(z: &Point, region: &ParabolicRegion, h: f64) -> Result<Vec<ChainElement>> {
    region.validate()?;
    if !region.contains_point(z) || region.clip.is_some() {
        return Err(Error::PointOutsideRegion);
    }
    let n = region.n();
    let r = region.nominal_r;
    let c = &region.center;
    let xt: Vec<f64> = z.x.iter().zip(&c.x).map(|(a, b)| a - b).collect();
    let tt = z.t - c.t;
    let mut out = vec![ChainElement {
        index: 0,
        region: region.clone(),
        rho: r,
        alpha: 1.0,
        y: c.x.clone(),
        tau: c.t,
        r_j: 2.0 * r,
    }];
    let min_r = 4.0 * h;
    match region.shape {
        Shape::Box => {
            let (lo, hi) = region.bounds();
            let mut j = 1;
            loop {
                let rj = 2f64.powi(1 - j as i32) * r;
                if rj < min_r {
                    break;
                }
                let mut center = Vec::with_capacity(n);
                let mut radii = Vec::with_capacity(n + 1);
                for a in 0..n {
                    let l = (z.x[a] - rj).max(lo[a]);
                    let u = (z.x[a] + rj).min(hi[a]);
                    center.push(0.5 * (l + u));
                    radii.push(0.5 * (u - l));
                }
                let l = (z.t - rj * rj).max(lo[n]);
                let u = (z.t + rj * rj).min(hi[n]);
                let tau = 0.5 * (l + u);
                radii.push((0.5 * (u - l)).sqrt());
                let reg = ParabolicRegion {
                    shape: Shape::Box,
                    center: Point::new(center.clone(), tau),
                    radii,
                    alpha: 1.0,
                    nominal_r: rj,
                    clip: None,
                };
                out.push(ChainElement { index: j, region: reg, rho: rj, alpha: 1.0, y: center, tau, r_j: rj });
                j += 1;
            }
        }
        Shape::Cylinder => {
            if region.alpha != 1.0 {
                return Err(Error::InvalidRegion("chains are built in C_r with α = 1".into()));
            }
            let xn = xt.iter().map(|v| v * v).sum::<f64>().sqrt();
            let at = tt.abs();
            let rj_of = |j: usize| 2f64.powi(1 - j as i32) * r;
            let inside = |rj: f64| xn + rj <= r && at + rj * rj <= r * r;
            let mut j0 = 0;
            while !inside(rj_of(j0 + 1)) {
                j0 += 1;
            }
            let mut j = 1;
            loop {
                let rj = rj_of(j);
                if rj < min_r {
                    break;
                }
                let (rho, alpha, y, tau) = if j <= j0 {
                    let rho = if rj > r - xn { 0.5 * (rj + r - xn) } else { rj };
                    let alpha = if rj * rj > r * r - at {
                        (rj * rj + r * r - at) / (2.0 * rho * rho)
                    } else {
                        rj * rj / (rho * rho)
                    };
                    let y: Vec<f64> =
                        if rj > r - xn { xt.iter().map(|v| (r - rho) * v / xn).collect() } else { xt.clone() };
                    let tau = if rj * rj > r * r - at { (r * r - alpha * rho * rho) * tt.signum() } else { tt };
                    (rho, alpha, y, tau)
                } else {
                    (rj, 1.0, xt.clone(), tt)
                };
                let y_abs: Vec<f64> = y.iter().zip(&c.x).map(|(a, b)| a + b).collect();
                let reg = ParabolicRegion::cylinder(Point::new(y_abs.clone(), tau + c.t), rho, alpha);
                out.push(ChainElement { index: j, region: reg, rho, alpha, y: y_abs, tau: tau + c.t, r_j: rj });
                j += 1;
            }
        }
    }
    Ok(out)
}

/// Outcome of checking every chain invariant.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainCheck {
    pub elements: usize,
    pub failures: Vec<String>,
}

fn subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|c| b.binary_search(c).is_ok())
}

fn cells_or_empty(grid: &Grid, region: &ParabolicRegion) -> Result<Vec<usize>> {
    match cells_of(grid, region) {
        Ok(c) => Ok(c),
        Err(Error::EmptyRegion) => Ok(Vec::new()),
        Err(e) => Err(e),
    }
}

/// Checks radius and scaling bounds, containment in `C_{r_j}(z̃) ∩ C_r`
/// and nesting by brute-force cell membership, and the measure bound.
pub fn check_chain(chain: &[ChainElement], z: &Point, region: &ParabolicRegion, grid: &Grid) -> Result<ChainCheck> {
    let n = region.n();
    let kappa = chain_kappa(n);
    let cylinder = region.shape == Shape::Cylinder;
    let base = cells_or_empty(grid, region)?;
    let mut failures = Vec::new();
    let mut prev: Option<Vec<usize>> = None;
    for e in chain {
        let j = e.index;
        if j > 0 && cylinder {
            if !(0.5 * e.r_j <= e.rho * (1.0 + 1e-12) && e.rho <= e.r_j * (1.0 + 1e-12)) {
                failures.push(format!("j={j}: rho {} outside [r_j/2, r_j]", e.rho));
            }
            if !(0.5 - 1e-12 <= e.alpha && e.alpha <= 4.0 + 1e-12) {
                failures.push(format!("j={j}: alpha {} outside [1/2, 4]", e.alpha));
            }
        }
        let cells = cells_or_empty(grid, &e.region)?;
        if j > 0 {
            let big = match region.shape {
                Shape::Cylinder => ParabolicRegion::cylinder(z.clone(), e.r_j, 1.0),
                Shape::Box => ParabolicRegion::cube(z.clone(), e.r_j),
            };
            let around = cells_or_empty(grid, &big)?;
            if !subset(&cells, &around) || !subset(&cells, &base) {
                failures.push(format!("j={j}: element leaves C_{{r_j}}(z) ∩ C_r"));
            }
        }
        if let Some(p) = &prev {
            if !subset(&cells, p) {
                failures.push(format!("j={j}: not nested in element {}", j - 1));
            }
        }
        if e.measure() < kappa * e.r_j.powi(n as i32 + 2) * (1.0 - 1e-12) {
            failures.push(format!("j={j}: measure {} below κ r_j^(n+2)", e.measure()));
        }
        prev = Some(cells);
    }
    Ok(ChainCheck { elements: chain.len(), failures })
}

/// Telescoping sum of consecutive means along a chain; reported only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelescopeReport {
    /// `Σ_j |(u)_{C̃_{j+1}} − (u)_{C̃_j}|`.
    pub sum: f64,
    /// `|(u)_{C̃_J} − (u)_{C_r}|`.
    pub endpoint_gap: f64,
    pub means: Vec<f64>,
}

pub fn telescoping_report(u: &ScalarField, chain: &[ChainElement]) -> Result<TelescopeReport> {
    let mut means = Vec::with_capacity(chain.len());
    for e in chain {
        let cells = cells_of(u.grid(), &e.region)?;
        means.push(mean_over(u.values(), &cells));
    }
    let sum = means.windows(2).map(|m| (m[1] - m[0]).abs()).sum();
    let endpoint_gap = (means[means.len() - 1] - means[0]).abs();
    Ok(TelescopeReport { sum, endpoint_gap, means })
}

/// `k = q(n+2)/(q(n+2) − p)` and `δ = k − (n+2)/(n+1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KFormula {
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub k: f64,
    pub delta: f64,
}

pub fn predicted_k(n: usize, p: f64, q: f64) -> Result<KFormula> {
    let hom = (n + 2) as f64;
    let den = q * hom - p;
    if !(den > 0.0) {
        return Err(Error::InvalidExponent(format!("q(n+2) − p = {den} must be positive")));
    }
    let k = q * hom / den;
    Ok(KFormula { n, p, q, k, delta: k - hom / (n as f64 + 1.0) })
}

/// Upper end of the `k` scan: `2(n+2)/(n+2−p)` when `p < n+2`, else 5.
pub fn k_scan_max(n: usize, p: f64) -> f64 {
    let hom = (n + 2) as f64;
    if p < hom {
        2.0 * hom / (hom - p)
    } else {
        5.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KScan {
    /// Largest admissible `k`, or `None` when even `k = 1` breaks the budget.
    pub k_admissible: Option<f64>,
    pub k_max: f64,
    pub budget: f64,
    /// `(k, battery sup)` in evaluation order.
    pub evaluations: Vec<(f64, f64)>,
}

/// Bisection for the largest `k ∈ [1, k_max]` with `sup_k ≤ budget`;
/// `sup` must be nondecreasing in `k`.
pub fn scan_admissible_k(
    mut sup: impl FnMut(f64) -> Result<f64>,
    k_max: f64,
    budget: f64,
    tolerance: f64,
) -> Result<KScan> {
    let mut evaluations = Vec::new();
    let at_one = sup(1.0)?;
    evaluations.push((1.0, at_one));
    if at_one > budget {
        return Ok(KScan { k_admissible: None, k_max, budget, evaluations });
    }
    let at_max = sup(k_max)?;
    evaluations.push((k_max, at_max));
    if at_max <= budget {
        return Ok(KScan { k_admissible: Some(k_max), k_max, budget, evaluations });
    }
    let (mut lo, mut hi) = (1.0, k_max);
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        let v = sup(mid)?;
        evaluations.push((mid, v));
        if v <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(KScan { k_admissible: Some(lo), k_max, budget, evaluations })
}

/// Battery supremum of the Sobolev-Poincaré ratio at exponent `k`.
pub fn sobolev_poincare_sup(
    pairs: &[SolutionPair],
    w: &WeightField,
    p: f64,
    k: f64,
    region: &ParabolicRegion,
) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for pair in pairs {
        sup = sup.max(verify_sobolev_poincare(pair, w, p, k, region)?.ratio);
    }
    Ok(sup)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    pub theorem: Option<TheoremId>,
    /// Battery supremum of the ratios.
    pub c: f64,
    pub cases: usize,
    pub argmax: Option<usize>,
}

pub fn estimate_constant(reports: &[InequalityReport]) -> ConstantEstimate {
    let mut c = 0.0;
    let mut argmax = None;
    for (i, r) in reports.iter().enumerate() {
        if argmax.is_none() || r.ratio > c {
            c = r.ratio;
            argmax = Some(i);
        }
    }
    ConstantEstimate { theorem: reports.first().map(|r| r.theorem), c, cases: reports.len(), argmax }
}
