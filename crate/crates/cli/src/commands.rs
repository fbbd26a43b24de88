//! Subcommand bodies. Each returns the files it wrote and any failing
//! budget rows; the binary maps those to exit codes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use parasob::calculus::SolutionPair;
use parasob::expr::Analytic;
use parasob::generators::{
    battery, default_kmax, power_weight, random_trig_expr, sample_w21, w21_function, zero_initial_battery,
    zero_trace_battery, BatteryManifest, ManifestEntry, PairSpec,
};
use parasob::geometry::{cells_of, Grid, HalfSpace, ParabolicRegion, Point};
use parasob::io::{read_scalar_field, reports_csv, write_atomic, write_json, write_scalar_field, write_vector_field};
use parasob::operators::PotentialKernel;
use parasob::verify::{
    estimate_constant, k_scan_max, predicted_k, scan_admissible_k, sobolev_poincare_sup, verify_boundary,
    verify_gradient_boundary, verify_gradient_sp, verify_higher_integrability, verify_poincare, verify_riesz_lemma,
    verify_sobolev_poincare, BoundaryMode, ConstantEstimate, GammaInterval, InequalityReport, KFormula, KScan,
    TheoremId, REPORT_SCHEMA_VERSION,
};
use parasob::weights::{domain_radius, find_aq_index, reverse_holder_exponent, ApCalculator, ApReport, WeightField};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{AutoOr, RegionShape, RunConfig, WeightConfig};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

/// Loaded configuration plus everything derived from it before any
/// computation starts; read-only afterwards.
pub struct Context {
    pub cfg: RunConfig,
    pub grid: Grid,
    pub region: ParabolicRegion,
    /// Directory relative paths in the config resolve against.
    pub base: PathBuf,
    pub out: PathBuf,
    pub verbosity: u8,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// One line per case over its budget.
    pub failures: Vec<String>,
}

impl Context {
    pub fn new(cfg: RunConfig, base: &Path, verbosity: u8) -> Result<Self> {
        cfg.validate()?;
        let g = &cfg.grid;
        let grid = Grid::from_extents(g.n, g.h, g.space_extent, g.time_extent)?;
        let origin = Point::origin(g.n);
        let rc = &cfg.region;
        let region = match rc.shape {
            RegionShape::Cube => ParabolicRegion::cube_alpha(origin, rc.r, rc.alpha),
            RegionShape::Cylinder => ParabolicRegion::cylinder(origin, rc.r, rc.alpha),
        };
        region.validate()?;
        let out = cfg.output_dir(base);
        Ok(Self { cfg, grid, region, base: base.to_path_buf(), out, verbosity })
    }

    pub fn from_file(path: &Path, verbosity: u8) -> Result<Self> {
        let cfg = RunConfig::load(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(cfg, &base, verbosity)
    }

    fn log(&self, level: u8, msg: impl AsRef<str>) {
        if self.verbosity >= level {
            eprintln!("{}", msg.as_ref());
        }
    }

    pub fn weight(&self) -> Result<WeightField> {
        match &self.cfg.weight {
            WeightConfig::Unit => Ok(WeightField::unit(&self.grid)),
            WeightConfig::Power { a, center_x, center_t } => {
                let x = if center_x.is_empty() { vec![0.0; self.grid.n()] } else { center_x.clone() };
                Ok(power_weight(&self.grid, *a, &Point::new(x, *center_t))?)
            }
            WeightConfig::File { path } => {
                let full = self.base.join(path);
                let (label, field) = read_scalar_field(&full).map_err(|e| match e {
                    parasob::Error::Io(source) => CliError::Io { path: full.clone(), source },
                    other => CliError::Core(other),
                })?;
                if field.grid() != &self.grid {
                    return Err(CliError::Config(format!(
                        "{}: weight grid differs from the configured grid",
                        full.display()
                    )));
                }
                Ok(WeightField::new(field, label)?)
            }
        }
    }

    pub fn kmax(&self) -> f64 {
        self.cfg.battery.kmax.unwrap_or_else(|| default_kmax(self.grid.h()))
    }

    pub fn max_radius(&self) -> f64 {
        self.cfg.apchar.max_radius.unwrap_or_else(|| domain_radius(&self.grid))
    }

    pub fn half_region(&self) -> ParabolicRegion {
        self.region.clone().clipped(HalfSpace::UpperSpace)
    }

    /// Specs of the configured standard battery.
    pub fn battery_specs(&self) -> Vec<PairSpec> {
        let b = &self.cfg.battery;
        battery(&b.generators, &self.region, b.count, b.seed, self.kmax())
    }

    fn build(&self, specs: &[PairSpec], region: &ParabolicRegion) -> Result<Vec<SolutionPair>> {
        let built: std::result::Result<Vec<_>, _> = specs.par_iter().map(|s| s.build(&self.grid, region)).collect();
        Ok(built?)
    }

    /// Seeds of the smooth functions used by the gradient theorems.
    fn w21_seeds(&self) -> Vec<u64> {
        let b = &self.cfg.battery;
        (0..b.count as u64).map(|i| b.seed.wrapping_mul(1_000_003).wrapping_add(i)).collect()
    }

    fn write_json<T: Serialize>(&self, rel: &str, value: &T, outcome: &mut Outcome) -> Result<()> {
        let path = self.out.join(rel);
        write_json(&path, value).map_err(|e| io_error(&path, e))?;
        outcome.files.push(path);
        Ok(())
    }

    fn write_bytes(&self, rel: &str, bytes: &[u8], outcome: &mut Outcome) -> Result<()> {
        let path = self.out.join(rel);
        write_atomic(&path, bytes).map_err(|e| io_error(&path, e))?;
        outcome.files.push(path);
        Ok(())
    }
}

fn io_error(path: &Path, e: parasob::Error) -> CliError {
    match e {
        parasob::Error::Io(source) => CliError::Io { path: path.to_path_buf(), source },
        other => CliError::Core(other),
    }
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Config(format!("csv: {e}"));
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(r).map_err(fail)?;
    }
    w.into_inner().map_err(|e| CliError::Config(format!("csv: {e}")))
}

#[derive(Serialize)]
struct ApcharFile<'a> {
    schema_version: u32,
    weight: &'a str,
    max_radius: f64,
    reports: &'a [ApReport],
}

/// Weight characteristics for every configured `p`.
pub fn compute_apchar(ctx: &Context) -> Result<(WeightField, Vec<ApReport>)> {
    let w = ctx.weight()?;
    let mut calc = ApCalculator::new(&w);
    let mut reports = Vec::with_capacity(ctx.cfg.apchar.p.len());
    for &p in &ctx.cfg.apchar.p {
        reports.push(calc.characteristic(p, ctx.max_radius())?);
    }
    Ok((w, reports))
}

/// Writes `apchar.json` and `apchar_witness.csv`.
pub fn cmd_apchar(ctx: &Context) -> Result<Outcome> {
    let (w, reports) = compute_apchar(ctx)?;
    let mut outcome = Outcome::default();
    let file = ApcharFile {
        schema_version: REPORT_SCHEMA_VERSION,
        weight: w.label(),
        max_radius: ctx.max_radius(),
        reports: &reports,
    };
    ctx.write_json("apchar.json", &file, &mut outcome)?;
    let n = ctx.grid.n();
    let mut header = vec!["p", "value", "cube_count", "radius", "m", "t"];
    let names: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    header.extend(names.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let mut row = vec![
                r.p.to_string(),
                r.value.to_string(),
                r.cube_count.to_string(),
                r.witness.radius.to_string(),
                r.witness.m.to_string(),
                r.witness.center.t.to_string(),
            ];
            row.extend(r.witness.center.x.iter().map(|v| v.to_string()));
            row
        })
        .collect();
    ctx.write_bytes("apchar_witness.csv", &csv_bytes(&header, &rows)?, &mut outcome)?;
    for r in &reports {
        ctx.log(1, format!("[w]_{} = {} ({} cubes)", r.p, r.value, r.cube_count));
    }
    Ok(outcome)
}

/// Exponents shared by every case of a run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Exponents {
    pub p: f64,
    pub k: f64,
    pub k_formula: Option<KFormula>,
    pub eps0: Option<f64>,
    pub gamma: Option<GammaInterval>,
    pub notes: Vec<String>,
}

/// Resolves `k` (and `ε0`, `γ` when `with_gamma`) per the config.
pub fn resolve_exponents(ctx: &Context, w: &WeightField, with_gamma: bool) -> Result<Exponents> {
    let n = ctx.grid.n();
    let p = ctx.cfg.verify.p;
    let hom = (n + 2) as f64;
    let mut notes = Vec::new();
    let (k, k_formula) = match ctx.cfg.verify.k {
        AutoOr::Value(k) => (k, None),
        AutoOr::Auto => {
            let q = if matches!(ctx.cfg.weight, WeightConfig::Unit) {
                if p < hom {
                    1.0
                } else {
                    p
                }
            } else {
                let aq = find_aq_index(w, p, None, None, ctx.max_radius())?;
                if aq.fallback {
                    notes.push(format!("no A_q index below p met the budget {}; using q = p", aq.budget));
                }
                aq.q
            };
            let f = predicted_k(n, p, q)?;
            (f.k, Some(f))
        }
    };
    let (eps0, gamma) = if with_gamma {
        let eps0 = match ctx.cfg.verify.eps0 {
            AutoOr::Value(e) => e,
            AutoOr::Auto => {
                let rh = reverse_holder_exponent(w, ctx.max_radius(), None, ctx.cfg.verify.rh_budget)?;
                if !rh.admissible {
                    notes.push(format!("reverse Hölder constant {} exceeds budget at every scanned exponent", rh.c));
                    0.0
                } else {
                    rh.eps0
                }
            }
        };
        match GammaInterval::new(k, eps0) {
            Ok(g) => (Some(eps0), Some(g)),
            Err(e) => {
                notes.push(e.to_string());
                (Some(eps0), None)
            }
        }
    } else {
        (None, None)
    };
    Ok(Exponents { p, k, k_formula, eps0, gamma, notes })
}

#[derive(Serialize)]
struct TheoremSummary {
    theorem: TheoremId,
    budget: Option<f64>,
    estimate: ConstantEstimate,
    argmax_label: Option<String>,
    failing: Vec<String>,
    skipped: Option<String>,
}

#[derive(Serialize)]
struct VerifySummary<'a> {
    schema_version: u32,
    weight: String,
    exponents: &'a Exponents,
    battery: &'a [PairSpec],
    theorems: Vec<TheoremSummary>,
}

/// Reports for one theorem over its battery, in battery order.
pub fn theorem_reports(
    ctx: &Context,
    theorem: TheoremId,
    w: &WeightField,
    ex: &Exponents,
    standard: &[SolutionPair],
) -> Result<Vec<InequalityReport>> {
    let (p, k) = (ex.p, ex.k);
    let region = &ctx.region;
    let count = ctx.cfg.battery.count;
    let seed = ctx.cfg.battery.seed;
    let kmax = ctx.kmax();
    let n = ctx.grid.n();
    let reports: std::result::Result<Vec<InequalityReport>, parasob::Error> = match theorem {
        TheoremId::Poincare => standard.par_iter().map(|pair| verify_poincare(pair, region)).collect(),
        TheoremId::SobolevPoincare => {
            standard.par_iter().map(|pair| verify_sobolev_poincare(pair, w, p, k, region)).collect()
        }
        TheoremId::HigherIntegrability => {
            let eps0 = ex.eps0.unwrap_or(0.0);
            standard.par_iter().map(|pair| verify_higher_integrability(pair, w, p, k, eps0, region)).collect()
        }
        TheoremId::RieszLemma => {
            let kernel = PotentialKernel::new(&ctx.grid, 1.0)?;
            let cells = cells_of(&ctx.grid, region)?;
            standard
                .iter()
                .map(|pair| {
                    let f = pair.u.restricted(&cells);
                    verify_riesz_lemma(&f, &pair.label, w, p, k, region, &kernel)
                })
                .collect()
        }
        TheoremId::BoundaryFlat => {
            let half = ctx.half_region();
            let pairs = ctx.build(&zero_trace_battery(count, seed, kmax), &half)?;
            pairs
                .par_iter()
                .map(|pair| {
                    let b = verify_boundary(pair, w, p, k, &half, BoundaryMode::Flat)?;
                    let mut rep = b.report;
                    if let Some(ext) = b.extension {
                        rep.extra.insert("extension_lhs_full".into(), ext.lhs_full);
                        rep.extra.insert("extension_weight_ratio".into(), ext.weight_ratio);
                        rep.extra.insert("extension_bound".into(), ext.bound);
                        rep.extra.insert("extension_holds".into(), if ext.holds { 1.0 } else { 0.0 });
                    }
                    Ok(rep)
                })
                .collect()
        }
        TheoremId::BoundaryInitial => {
            let pairs = ctx.build(&zero_initial_battery(count, seed, kmax), region)?;
            pairs
                .par_iter()
                .map(|pair| Ok(verify_boundary(pair, w, p, k, region, BoundaryMode::Initial)?.report))
                .collect()
        }
        TheoremId::GradientSp => ctx
            .w21_seeds()
            .par_iter()
            .enumerate()
            .map(|(i, &s)| {
                let f = w21_function(n, s, 1 + i % 4, kmax);
                let sample = sample_w21(&f, &ctx.grid);
                let g = verify_gradient_sp(&sample, &format!("w21(seed={s})"), w, p, k, region)?;
                let mut rep = g.direct;
                rep.extra.insert("componentwise_agreement".into(), g.agreement);
                Ok(rep)
            })
            .collect(),
        TheoremId::GradientBoundary => {
            let half = ctx.half_region();
            ctx.w21_seeds()
                .par_iter()
                .enumerate()
                .map(|(i, &s)| {
                    let f = Analytic::new(random_trig_expr(n, s, 1 + i % 4, kmax).mul_last());
                    let sample = sample_w21(&f, &ctx.grid);
                    verify_gradient_boundary(&sample, &format!("x_n*w21(seed={s})"), w, p, k, &half)
                })
                .collect()
        }
    };
    let mut reports = reports?;
    if let Some(&b) = ctx.cfg.verify.budgets.get(&theorem) {
        reports = reports.into_iter().map(|r| r.with_budget(b)).collect();
    }
    Ok(reports)
}

/// Writes `verify/<theorem>.{csv,json}` and `verify/summary.json`.
pub fn cmd_verify(ctx: &Context) -> Result<Outcome> {
    let w = ctx.weight()?;
    let theorems = &ctx.cfg.verify.theorems;
    let ex = resolve_exponents(ctx, &w, theorems.contains(&TheoremId::HigherIntegrability))?;
    for note in &ex.notes {
        ctx.log(1, format!("note: {note}"));
    }
    let specs = ctx.battery_specs();
    let needs_standard = theorems.iter().any(|t| {
        matches!(
            t,
            TheoremId::Poincare | TheoremId::SobolevPoincare | TheoremId::HigherIntegrability | TheoremId::RieszLemma
        )
    });
    let standard = if needs_standard { ctx.build(&specs, &ctx.region)? } else { Vec::new() };
    let mut outcome = Outcome::default();
    let mut summaries = Vec::new();
    for &theorem in theorems {
        let name = theorem.as_str();
        if theorem == TheoremId::HigherIntegrability && ex.gamma.is_none() {
            ctx.log(1, format!("{name}: skipped, empty γ interval"));
            summaries.push(TheoremSummary {
                theorem,
                budget: ctx.cfg.verify.budgets.get(&theorem).copied(),
                estimate: estimate_constant(&[]),
                argmax_label: None,
                failing: Vec::new(),
                skipped: Some("empty admissible γ interval".into()),
            });
            continue;
        }
        let reports = theorem_reports(ctx, theorem, &w, &ex, &standard)?;
        let failing: Vec<String> = reports
            .iter()
            .filter(|r| !r.pass || r.extra.get("extension_holds") == Some(&0.0))
            .map(|r| format!("{name}: {} ratio {} > budget {}", r.solution, r.ratio, r.budget.unwrap_or(f64::INFINITY)))
            .collect();
        let estimate = estimate_constant(&reports);
        ctx.log(1, format!("{name}: {} cases, battery sup ratio {}", reports.len(), estimate.c));
        ctx.write_bytes(&format!("verify/{name}.csv"), reports_csv(&reports).as_bytes(), &mut outcome)?;
        ctx.write_json(&format!("verify/{name}.json"), &reports, &mut outcome)?;
        outcome.failures.extend(failing.iter().cloned());
        summaries.push(TheoremSummary {
            theorem,
            budget: ctx.cfg.verify.budgets.get(&theorem).copied(),
            argmax_label: estimate.argmax.map(|i| reports[i].solution.clone()),
            estimate,
            failing,
            skipped: None,
        });
    }
    let summary = VerifySummary {
        schema_version: REPORT_SCHEMA_VERSION,
        weight: w.label().to_string(),
        exponents: &ex,
        battery: &specs,
        theorems: summaries,
    };
    ctx.write_json("verify/summary.json", &summary, &mut outcome)?;
    Ok(outcome)
}

#[derive(Serialize)]
struct ScanFile<'a> {
    schema_version: u32,
    weight: String,
    p: f64,
    predicted: Option<KFormula>,
    scans: &'a [KScan],
}

/// Admissible `k` for every configured budget, with the predicted `k`.
pub fn compute_scan_k(ctx: &Context) -> Result<(WeightField, Exponents, Vec<KScan>)> {
    let w = ctx.weight()?;
    let mut exc = ctx.cfg.clone();
    exc.verify.k = AutoOr::Auto;
    let auto_ctx = Context {
        cfg: exc,
        grid: ctx.grid.clone(),
        region: ctx.region.clone(),
        base: ctx.base.clone(),
        out: ctx.out.clone(),
        verbosity: ctx.verbosity,
    };
    let ex = resolve_exponents(&auto_ctx, &w, false)?;
    let pairs = ctx.build(&ctx.battery_specs(), &ctx.region)?;
    if pairs.is_empty() {
        return Err(CliError::Config("scan-k needs a nonempty battery".into()));
    }
    let k_max = k_scan_max(ctx.grid.n(), ex.p);
    let mut scans = Vec::with_capacity(ctx.cfg.scan_k.budgets.len());
    for &budget in &ctx.cfg.scan_k.budgets {
        let scan = scan_admissible_k(
            |k| sobolev_poincare_sup(&pairs, &w, ex.p, k, &ctx.region),
            k_max,
            budget,
            ctx.cfg.scan_k.tolerance,
        )?;
        scans.push(scan);
    }
    Ok((w, ex, scans))
}

/// Writes `scan_k.csv` (one row per budget) and `scan_k.json`.
pub fn cmd_scan_k(ctx: &Context) -> Result<Outcome> {
    let (w, ex, scans) = compute_scan_k(ctx)?;
    let mut outcome = Outcome::default();
    let kf = ex.k_formula;
    let rows: Vec<Vec<String>> = scans
        .iter()
        .map(|s| {
            vec![
                s.budget.to_string(),
                s.k_admissible.map(|k| k.to_string()).unwrap_or_default(),
                s.k_max.to_string(),
                kf.map(|f| f.k.to_string()).unwrap_or_default(),
                kf.map(|f| f.q.to_string()).unwrap_or_default(),
                kf.map(|f| f.delta.to_string()).unwrap_or_default(),
                s.evaluations.len().to_string(),
            ]
        })
        .collect();
    let header = ["budget", "k_admissible", "k_max", "predicted_k", "q", "delta", "evaluations"];
    ctx.write_bytes("scan_k.csv", &csv_bytes(&header, &rows)?, &mut outcome)?;
    let file = ScanFile {
        schema_version: REPORT_SCHEMA_VERSION,
        weight: w.label().to_string(),
        p: ex.p,
        predicted: kf,
        scans: &scans,
    };
    ctx.write_json("scan_k.json", &file, &mut outcome)?;
    for s in &scans {
        ctx.log(1, format!("budget {}: admissible k {:?}", s.budget, s.k_admissible));
    }
    Ok(outcome)
}

/// Materializes the standard battery under `battery/`.
///
/// Every pair is built and gated before anything is written; the
/// directory is assembled under a temporary name and renamed into place.
pub fn cmd_battery(ctx: &Context) -> Result<Outcome> {
    let specs = ctx.battery_specs();
    let pairs = ctx.build(&specs, &ctx.region)?;
    let final_dir = ctx.out.join("battery");
    let tmp = ctx.out.join(".battery.tmp");
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(io(&tmp))?;
    }
    fs::create_dir_all(&tmp).map_err(io(&tmp))?;
    let mut entries = Vec::with_capacity(pairs.len());
    let mut rel_files = Vec::new();
    for (i, (spec, pair)) in specs.iter().zip(&pairs).enumerate() {
        let dir = format!("entry_{i:03}");
        let files = vec![format!("{dir}/u.field"), format!("{dir}/du.field"), format!("{dir}/g.field")];
        write_scalar_field(&tmp.join(&files[0]), "u", &pair.u).map_err(|e| io_error(&tmp, e))?;
        write_vector_field(&tmp.join(&files[1]), "du", &pair.du).map_err(|e| io_error(&tmp, e))?;
        write_vector_field(&tmp.join(&files[2]), "g", &pair.g).map_err(|e| io_error(&tmp, e))?;
        rel_files.extend(files.iter().cloned());
        entries.push(ManifestEntry {
            index: i,
            label: pair.label.clone(),
            spec: spec.clone(),
            tolerance: pair.tolerance,
            residual: pair.residual,
            files,
        });
    }
    let manifest = BatteryManifest {
        schema_version: REPORT_SCHEMA_VERSION,
        grid: ctx.grid.clone(),
        region: ctx.region.clone(),
        entries,
    };
    write_json(&tmp.join("manifest.json"), &manifest).map_err(|e| io_error(&tmp, e))?;
    if final_dir.exists() {
        fs::remove_dir_all(&final_dir).map_err(io(&final_dir))?;
    }
    fs::rename(&tmp, &final_dir).map_err(io(&final_dir))?;
    ctx.log(1, format!("{} pairs written to {}", pairs.len(), final_dir.display()));
    let mut outcome = Outcome::default();
    outcome.files.push(final_dir.join("manifest.json"));
    outcome.files.extend(rel_files.iter().map(|f| final_dir.join(f)));
    Ok(outcome)
}

/// Summary statistics the binary prints at high verbosity.
pub fn describe(ctx: &Context) -> BTreeMap<&'static str, String> {
    let mut m = BTreeMap::new();
    m.insert("grid", format!("n={} h={} cells={}", ctx.grid.n(), ctx.grid.h(), ctx.grid.len()));
    m.insert("region", format!("{:?} r={} alpha={}", ctx.region.shape, ctx.region.nominal_r, ctx.region.alpha));
    m.insert("output", ctx.out.display().to_string());
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    fn ctx(extra: &str, dir: &Path) -> Context {
        let text = format!(
            "schema_version = 1\n[grid]\nn = 1\nh = 0.125\nspace_extent = 1.0\ntime_extent = 1.0\n[battery]\ncount = 4\nkmax = 2.0\n{extra}"
        );
        Context::new(RunConfig::from_toml(&text).unwrap(), dir, 0).unwrap()
    }

    #[test]
    fn constants_battery_passes_with_zero_ratios() {
        let dir = tempfile::tempdir().unwrap();
        let c = ctx(
            "generators = [\"constant\"]\n[verify]\ntheorems = [\"poincare\", \"sobolev_poincare\"]\n[verify.budgets]\npoincare = 1e-9\nsobolev_poincare = 1e-9\n",
            dir.path(),
        );
        let out = cmd_verify(&c).unwrap();
        assert!(out.failures.is_empty());
        let csv = fs::read_to_string(c.out.join("verify/poincare.csv")).unwrap();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.lines().skip(1).all(|l| l.ends_with(",0")));
    }

    #[test]
    fn impossible_budget_lists_failures() {
        let dir = tempfile::tempdir().unwrap();
        let c =
            ctx("[verify]\ntheorems = [\"sobolev_poincare\"]\n[verify.budgets]\nsobolev_poincare = 1e-9\n", dir.path());
        let out = cmd_verify(&c).unwrap();
        assert_eq!(out.failures.len(), 4);
    }

    #[test]
    fn apchar_of_unit_weight_is_one() {
        let dir = tempfile::tempdir().unwrap();
        let c = ctx("[apchar]\np = [1.5, 2.0]\n", dir.path());
        let (_, reports) = compute_apchar(&c).unwrap();
        assert!(reports.iter().all(|r| (r.value - 1.0).abs() < 1e-12));
        cmd_apchar(&c).unwrap();
        let csv = fs::read_to_string(c.out.join("apchar_witness.csv")).unwrap();
        assert_eq!(csv.lines().next().unwrap(), "p,value,cube_count,radius,m,t,x0");
    }

    #[test]
    fn missing_weight_file_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let c = ctx("[weight]\nkind = \"file\"\npath = \"nowhere.field\"\n", dir.path());
        let err = cmd_apchar(&c).unwrap_err();
        assert_eq!(err.exit_code(), crate::EXIT_IO);
        assert!(err.to_string().contains("nowhere.field"));
    }

    #[test]
    fn scan_rows_match_budgets_and_formula() {
        let dir = tempfile::tempdir().unwrap();
        let c = ctx("[scan_k]\nbudgets = [0.1, 1.0, 10.0]\ntolerance = 1e-3\n", dir.path());
        cmd_scan_k(&c).unwrap();
        let mut r = csv::Reader::from_path(c.out.join("scan_k.csv")).unwrap();
        let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0][3].parse::<f64>().unwrap(), 3.0);
    }

    #[test]
    fn battery_is_reproducible_and_lists_tolerances() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let (ca, cb) = (ctx("", a.path()), ctx("", b.path()));
        let oa = cmd_battery(&ca).unwrap();
        let ob = cmd_battery(&cb).unwrap();
        assert_eq!(oa.files.len(), ob.files.len());
        for (x, y) in oa.files.iter().zip(&ob.files) {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
        let m: serde_json::Value = serde_json::from_slice(&fs::read(&oa.files[0]).unwrap()).unwrap();
        assert!(m["entries"][0]["tolerance"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn failing_gate_leaves_no_battery_directory() {
        let dir = tempfile::tempdir().unwrap();
        // wave numbers far beyond the grid make the residual gate fail
        let c = ctx("", dir.path());
        let mut cfg = c.cfg.clone();
        cfg.battery.kmax = Some(40.0);
        cfg.battery.generators = vec![parasob::generators::GeneratorKind::Antiderivative];
        let c = Context::new(cfg, dir.path(), 0).unwrap();
        let err = cmd_battery(&c).unwrap_err();
        assert_eq!(err.exit_code(), crate::EXIT_BUDGET);
        assert!(!c.out.join("battery").exists());
        assert!(!c.out.join(".battery.tmp").exists());
    }
}
