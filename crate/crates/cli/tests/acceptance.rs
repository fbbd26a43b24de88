//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Unmet criteria print FAIL with their measurements; the process still
//! exits 0 so the rest of the workspace tests stay meaningful. Panics and
//! setup errors exit nonzero.

#![allow(clippy::needless_range_loop, clippy::type_complexity)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use parasob::calculus::{divergence_residual, test_battery, trace_gate, SolutionPair};
use parasob::expr::Analytic;
use parasob::field::ScalarField;
use parasob::generators::{
    power_weight, random_trig_expr, sample_w21, standard_battery, w21_function, zero_initial_battery,
    zero_trace_battery, PairSpec, W21Sample,
};
use parasob::geometry::{cells_of, Grid, ParabolicRegion, Point};
use parasob::operators::PotentialKernel;
use parasob::verify::{
    chain_decomposition, check_chain, extend_pair, predicted_k, verify_boundary, verify_gradient_boundary,
    verify_gradient_sp, verify_higher_integrability, verify_poincare, verify_riesz_lemma, verify_sobolev_poincare,
    BoundaryMode, GammaInterval, InequalityReport,
};
use parasob::weights::{
    ap_characteristic, domain_radius, find_aq_index, reverse_holder_exponent, search_slice_gap, WeightField,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), parasob::Error>;

const H: f64 = 1.0 / 16.0;
const H_FINE: f64 = 1.0 / 32.0;
const KMAX: f64 = 4.0;

fn rel_change(coarse: f64, fine: f64) -> f64 {
    if coarse == fine {
        0.0
    } else {
        (fine / coarse - 1.0).abs()
    }
}

fn sup(reports: &[InequalityReport]) -> f64 {
    reports.iter().map(|r| r.ratio).fold(0.0, f64::max)
}

fn all_finite(reports: &[InequalityReport]) -> bool {
    reports.iter().all(|r| r.ratio.is_finite() && r.lhs.is_finite() && r.rhs.is_finite())
}

fn build(specs: &[PairSpec], g: &Grid, region: &ParabolicRegion) -> Result<Vec<SolutionPair>, parasob::Error> {
    specs.iter().map(|s| s.build(g, region)).collect()
}

fn grid1(h: f64) -> Grid {
    Grid::from_extents(1, h, 1.0, 1.0).unwrap()
}

fn origin_cube(r: f64) -> ParabolicRegion {
    ParabolicRegion::cube(Point::origin(1), r)
}

/// `q` and `k` from the `A_q` index search on the coarse grid.
fn weighted_k(w: &WeightField, p: f64, radius: f64) -> Result<(f64, f64), parasob::Error> {
    let aq = find_aq_index(w, p, None, None, radius)?;
    let k = predicted_k(w.grid().n(), p, aq.q)?.k;
    Ok((aq.q, k))
}

fn criterion_1() -> Outcome {
    let g = Grid::cube_domain(1, H, 1.0)?;
    let r = domain_radius(&g);
    let unit = WeightField::unit(&g);
    let mut worst_unit: f64 = 0.0;
    for p in [1.5, 2.0, 4.0] {
        worst_unit = worst_unit.max((ap_characteristic(&unit, p, r)?.value - 1.0).abs());
    }
    let mut weights = Vec::new();
    for a in [-1.0, 0.5, 1.5] {
        weights.push(power_weight(&g, a, &Point::origin(1))?);
    }
    weights.push(WeightField::new(ScalarField::from_fn(&g, |_, t| if t > 0.0 { 4.0 } else { 1.0 }), "step")?);
    weights.push(WeightField::new(
        ScalarField::from_fn(&g, |x, t| (x[0] * 7.0).sin().exp() * (t * 5.0).cos().exp()),
        "lognormal",
    )?);
    let mut worst_scale: f64 = 0.0;
    let mut monotone = true;
    for w in &weights {
        let base = ap_characteristic(w, 2.0, r)?.value;
        for c in [1e-3, 7.5] {
            let scaled = ap_characteristic(&w.scaled(c)?, 2.0, r)?.value;
            worst_scale = worst_scale.max((scaled - base).abs() / base);
        }
        let vals: Vec<f64> = [1.5, 2.0, 3.0, 4.0]
            .iter()
            .map(|&p| ap_characteristic(w, p, r).map(|a| a.value))
            .collect::<Result<_, _>>()?;
        monotone &= vals.windows(2).all(|v| v[1] <= v[0] * (1.0 + 1e-12));
    }
    let pass = worst_unit <= 1e-12 && worst_scale <= 1e-12 && monotone;
    Ok((
        pass,
        format!(
            "|[1]_p - 1| max {worst_unit:.1e}; scale drift {worst_scale:.1e}; monotone in p on 5 weights: {monotone}"
        ),
    ))
}

/// Potential at the center of `target` by refined quadrature of the
/// piecewise-constant `f`: sources on the `h/4` grid, the ones next to the
/// target subdivided 8 more times per axis.
fn refined_potential(g: &Grid, f: &ScalarField, sources: &[usize], target: usize) -> f64 {
    let n = g.n();
    let h = g.h();
    let (fh, ft) = (h / 4.0, h * h / 16.0);
    let z = g.cell_center(target);
    let sub = 8usize;
    let mut lo = vec![0.0; n];
    let mut total = 0.0;
    let spatial_counts = 4usize.pow(n as u32);
    for &c in sources {
        let v = f.values()[c];
        let center = g.cell_center(c);
        for a in 0..n {
            lo[a] = center.x[a] - h / 2.0;
        }
        let t_lo = center.t - h * h / 2.0;
        for s in 0..spatial_counts {
            let mut idx = s;
            let mut xc = vec![0.0; n];
            for a in 0..n {
                xc[a] = lo[a] + ((idx % 4) as f64 + 0.5) * fh;
                idx /= 4;
            }
            for j in 0..16 {
                let tc = t_lo + (j as f64 + 0.5) * ft;
                let near = (0..n).all(|a| (xc[a] - z.x[a]).abs() <= 2.0 * fh) && (tc - z.t).abs() <= 4.0 * ft;
                if !near {
                    let dx2: f64 = (0..n).map(|a| (xc[a] - z.x[a]).powi(2)).sum();
                    let rho = dx2.sqrt().max((tc - z.t).abs().sqrt());
                    total += v * rho.powi(-(n as i32 + 1)) * fh.powi(n as i32) * ft;
                    continue;
                }
                let (sh, st) = (fh / sub as f64, ft / sub as f64);
                let mut acc = 0.0;
                let points = sub.pow(n as u32 + 1);
                for q in 0..points {
                    let mut idx = q;
                    let mut dx2 = 0.0;
                    for a in 0..n {
                        let x = xc[a] - fh / 2.0 + ((idx % sub) as f64 + 0.5) * sh;
                        dx2 += (x - z.x[a]).powi(2);
                        idx /= sub;
                    }
                    let t = tc - ft / 2.0 + (idx as f64 + 0.5) * st;
                    let rho = dx2.sqrt().max((t - z.t).abs().sqrt());
                    acc += rho.powi(-(n as i32 + 1));
                }
                total += v * acc * sh.powi(n as i32) * st;
            }
        }
    }
    total
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for (n, fields, stride) in [(1usize, 10usize, 1usize), (2, 3, 60)] {
        let g = Grid::cube_domain(n, H, 0.5)?;
        let kernel = PotentialKernel::new(&g, 1.0)?;
        let support = ParabolicRegion::cube(Point::origin(n), 0.25);
        let window = ParabolicRegion::cube(Point::origin(n), 0.375);
        let targets: Vec<usize> = cells_of(&g, &window)?.into_iter().step_by(stride).collect();
        for i in 0..fields {
            let fi = i as f64;
            let inside = if i % 3 == 2 {
                let c = Point::new(vec![0.1; n], 0.02);
                ParabolicRegion::cube(c, 0.125)
            } else {
                support.clone()
            };
            let f = ScalarField::from_fn(&g, |x, t| {
                if !inside.contains(x, t) {
                    return 0.0;
                }
                let phase: f64 =
                    x.iter().enumerate().map(|(a, v)| (2.0 + fi + a as f64) * v).sum::<f64>() + 5.0 * fi * t;
                phase.cos() + 0.5 * (i % 3) as f64
            });
            let sources: Vec<usize> = (0..g.len()).filter(|&c| f.values()[c] != 0.0).collect();
            let ours = kernel.apply_on(&f, &targets)?;
            let (mut num, mut den) = (0.0, 0.0);
            for &t in &targets {
                let oracle = refined_potential(&g, &f, &sources, t);
                num += (ours.values()[t] - oracle).powi(2);
                den += oracle * oracle;
            }
            worst = worst.max((num / den).sqrt());
            cases += 1;
        }
    }
    Ok((worst <= 0.05, format!("{cases} fields, worst relative l2 gap {:.2}% (limit 5%)", 100.0 * worst)))
}

fn criterion_3() -> Outcome {
    let cover = origin_cube(1.0);
    let specs = standard_battery(&cover, 50, 3, KMAX);
    let mut configs = Vec::new();
    for rx in [0.25, 0.5, 1.0] {
        for rt in [0.25, 0.5] {
            for alpha in [0.5, 1.0, 4.0] {
                configs.push(ParabolicRegion::rectangle(Point::origin(1), vec![rx, rt], alpha, 0.5)?);
            }
        }
    }
    let mut sups = Vec::new();
    let mut finite = true;
    for h in [H, H_FINE] {
        let g = grid1(h);
        let pairs = build(&specs, &g, &cover)?;
        let mut s = Vec::new();
        for region in &configs {
            let reports: Vec<InequalityReport> =
                pairs.iter().map(|p| verify_poincare(p, region)).collect::<Result<_, _>>()?;
            finite &= all_finite(&reports);
            s.push(sup(&reports));
        }
        sups.push(s);
    }
    let worst = sups[0].iter().zip(&sups[1]).map(|(a, b)| rel_change(*a, *b)).fold(0.0, f64::max);
    let top = sups[1].iter().cloned().fold(0.0, f64::max);
    Ok((
        finite && worst < 0.10,
        format!(
            "50 pairs x {} rectangles; sup ratio {top:.3}; worst refinement change {:.2}%",
            configs.len(),
            100.0 * worst
        ),
    ))
}

fn criterion_4() -> Outcome {
    let q1 = origin_cube(1.0);
    let c1 = ParabolicRegion::cylinder(Point::origin(1), 1.0, 1.0);
    let specs = standard_battery(&q1, 24, 4, KMAX);
    let coarse = grid1(H);
    let mut cases: Vec<(String, Option<f64>, f64)> = vec![("unit".into(), None, 3.0)];
    for a in [-1.0, 1.0] {
        let w = power_weight(&coarse, a, &Point::origin(1))?;
        let (_, k) = weighted_k(&w, 2.0, 1.0)?;
        cases.push((format!("power({a})"), Some(a), k));
    }
    let mut worst: f64 = 0.0;
    let mut finite = true;
    let mut detail = Vec::new();
    for (label, a, k) in &cases {
        for (shape, region) in [("cube", &q1), ("cylinder", &c1)] {
            let mut s = Vec::new();
            for h in [H, H_FINE] {
                let g = grid1(h);
                let w = match a {
                    None => WeightField::unit(&g),
                    Some(a) => power_weight(&g, *a, &Point::origin(1))?,
                };
                let pairs = build(&specs, &g, region)?;
                let reports: Vec<InequalityReport> =
                    pairs.iter().map(|p| verify_sobolev_poincare(p, &w, 2.0, *k, region)).collect::<Result<_, _>>()?;
                finite &= all_finite(&reports);
                s.push(sup(&reports));
            }
            let change = rel_change(s[0], s[1]);
            worst = worst.max(change);
            detail.push(format!("{label}/{shape} k={k:.3} sup {:.3} ({:+.1}%)", s[1], 100.0 * (s[1] / s[0] - 1.0)));
        }
    }
    Ok((finite && worst < 0.10, detail.join("; ")))
}

fn criterion_5() -> Outcome {
    let region = origin_cube(0.5);
    let specs = standard_battery(&region, 8, 5, KMAX);
    let coarse = Grid::cube_domain(1, H, 0.5)?;
    let wc = power_weight(&coarse, 1.0, &Point::origin(1))?;
    let (_, kw) = weighted_k(&wc, 2.0, 0.5)?;
    let mut sups = [Vec::new(), Vec::new()];
    let mut finite = true;
    for h in [H, H_FINE] {
        let g = Grid::cube_domain(1, h, 0.5)?;
        let kernel = PotentialKernel::new(&g, 1.0)?;
        let cells = cells_of(&g, &region)?;
        let pairs = build(&specs, &g, &region)?;
        let unit = WeightField::unit(&g);
        let pw = power_weight(&g, 1.0, &Point::origin(1))?;
        let (mut su, mut sw) = (0.0f64, 0.0f64);
        for pair in &pairs {
            let f = pair.u.restricted(&cells);
            let a = verify_riesz_lemma(&f, &pair.label, &unit, 2.0, 3.0, &region, &kernel)?;
            let b = verify_riesz_lemma(&f, &pair.label, &pw, 2.0, kw, &region, &kernel)?;
            finite &= a.ratio.is_finite() && b.ratio.is_finite();
            su = su.max(a.ratio);
            sw = sw.max(b.ratio);
        }
        sups[0].push(su);
        sups[1].push(sw);
    }
    let change = rel_change(sups[0][0], sups[0][1]).max(rel_change(sups[1][0], sups[1][1]));

    // cube against cylinder on shared data supported in the cylinder
    let g2 = Grid::cube_domain(2, 1.0 / 8.0, 0.5)?;
    let kernel2 = PotentialKernel::new(&g2, 1.0)?;
    let cube2 = ParabolicRegion::cube(Point::origin(2), 0.5);
    let cyl2 = ParabolicRegion::cylinder(Point::origin(2), 0.5, 1.0);
    let cyl_cells = cells_of(&g2, &cyl2)?;
    let specs2 = standard_battery(&cube2, 4, 55, 2.0);
    let pairs2 = build(&specs2, &g2, &cube2)?;
    let mut worst_factor_use: f64 = 0.0;
    for w in [WeightField::unit(&g2), power_weight(&g2, 1.0, &Point::origin(2))?] {
        let ap = ap_characteristic(&w, 2.0, 0.5)?.value;
        let factor = ap.sqrt() * 2f64.powf(4.0 / 2.0);
        for pair in &pairs2 {
            let f = pair.u.restricted(&cyl_cells);
            let a = verify_riesz_lemma(&f, &pair.label, &w, 2.0, 2.0, &cube2, &kernel2)?.ratio;
            let b = verify_riesz_lemma(&f, &pair.label, &w, 2.0, 2.0, &cyl2, &kernel2)?.ratio;
            worst_factor_use = worst_factor_use.max((b / a).max(a / b) / factor);
        }
    }
    let pass = finite && change < 0.10 && worst_factor_use <= 1.0;
    Ok((
        pass,
        format!(
            "sup unit {:.3} / power(1) {:.3} (k={kw:.3}); refinement change {:.2}%; cube/cylinder gap uses {:.0}% of the allowed factor",
            sups[0][1],
            sups[1][1],
            100.0 * change,
            100.0 * worst_factor_use
        ),
    ))
}

fn criterion_6() -> Outcome {
    let q1 = origin_cube(1.0);
    let specs = standard_battery(&q1, 24, 6, KMAX);
    let coarse = grid1(H);
    let mut detail = Vec::new();
    let mut pass = true;
    for a in [None, Some(-1.0), Some(1.0)] {
        let wc = match a {
            None => WeightField::unit(&coarse),
            Some(a) => power_weight(&coarse, a, &Point::origin(1))?,
        };
        let k = match a {
            None => 3.0,
            Some(_) => weighted_k(&wc, 2.0, 1.0)?.1,
        };
        let rh = reverse_holder_exponent(&wc, 1.0, None, 10.0)?;
        let gi = match GammaInterval::new(k, rh.eps0) {
            Ok(gi) if rh.admissible => gi,
            _ => {
                pass = false;
                detail.push(format!("{}: empty γ interval (eps0 {})", wc.label(), rh.eps0));
                continue;
            }
        };
        let mut s = Vec::new();
        for h in [H, H_FINE] {
            let g = grid1(h);
            let w = match a {
                None => WeightField::unit(&g),
                Some(a) => power_weight(&g, a, &Point::origin(1))?,
            };
            let pairs = build(&specs, &g, &q1)?;
            let reports: Vec<InequalityReport> = pairs
                .iter()
                .map(|p| verify_higher_integrability(p, &w, 2.0, k, rh.eps0, &q1))
                .collect::<Result<_, _>>()?;
            pass &= all_finite(&reports);
            s.push(sup(&reports));
        }
        let change = rel_change(s[0], s[1]);
        pass &= change < 0.15;
        detail.push(format!(
            "{}: eps0 {:.2}, γ in (1, {:.3}) used {:.3}, sup {:.3} ({:+.1}%)",
            wc.label(),
            rh.eps0,
            gi.upper,
            gi.gamma,
            s[1],
            100.0 * (s[1] / s[0] - 1.0)
        ));
    }
    Ok((pass, detail.join("; ")))
}

fn criterion_7() -> Outcome {
    let q1 = origin_cube(1.0);
    let half = ParabolicRegion::half_cube(Point::origin(1), 1.0);
    let trace_specs = zero_trace_battery(20, 7, KMAX);
    let initial_specs = zero_initial_battery(10, 8, KMAX);
    let mut gates = true;
    let mut identity = true;
    let mut cross = true;
    let mut worst_identity: f64 = 0.0;
    let mut flat_sups = Vec::new();
    let mut init_sups = Vec::new();
    let mut finite = true;
    for h in [H, H_FINE] {
        let g = grid1(h);
        let w = WeightField::unit(&g);
        let pairs = build(&trace_specs, &g, &half)?;
        let half_tests = test_battery(&half, 20, 71)?;
        let full_tests = test_battery(&q1, 20, 72)?;
        let mut reports = Vec::new();
        for pair in &pairs {
            gates &= trace_gate(&pair.u, &pair.du, &half, 2.0)?.pass;
            if h == H {
                let ext = extend_pair(pair)?;
                let full = divergence_residual(&ext.u, &ext.g, &q1, &full_tests)?.worst;
                let part = divergence_residual(&pair.u, &pair.g, &half, &half_tests)?.worst;
                let bound = 10.0 * (part + h * pair.field_scale());
                identity &= full <= bound;
                worst_identity = worst_identity.max(full / bound);
            }
            let b = verify_boundary(pair, &w, 2.0, 3.0, &half, BoundaryMode::Flat)?;
            cross &= b.extension.map(|e| e.holds).unwrap_or(false);
            reports.push(b.report);
        }
        finite &= all_finite(&reports);
        flat_sups.push(sup(&reports));
        let ipairs = build(&initial_specs, &g, &q1)?;
        let ireports: Vec<InequalityReport> = ipairs
            .iter()
            .map(|p| verify_boundary(p, &w, 2.0, 3.0, &q1, BoundaryMode::Initial).map(|b| b.report))
            .collect::<Result<_, _>>()?;
        finite &= all_finite(&ireports);
        init_sups.push(sup(&ireports));
    }
    let cf = rel_change(flat_sups[0], flat_sups[1]);
    let ci = rel_change(init_sups[0], init_sups[1]);
    let pass = gates && identity && cross && finite && cf < 0.10 && ci < 0.10;
    Ok((
        pass,
        format!(
            "trace gates {gates}; extension residual at most {:.0}% of its bound; half<=full cross-check {cross}; flat sup {:.3} ({:+.1}%); initial sup {:.3} ({:+.1}%)",
            100.0 * worst_identity,
            flat_sups[1],
            100.0 * (flat_sups[1] / flat_sups[0] - 1.0),
            init_sups[1],
            100.0 * (init_sups[1] / init_sups[0] - 1.0)
        ),
    ))
}

fn criterion_8() -> Outcome {
    let q1 = origin_cube(1.0);
    let half = ParabolicRegion::half_cube(Point::origin(1), 1.0);
    let coarse = grid1(H);
    let mut cases: Vec<(Option<f64>, f64)> = vec![(None, 3.0)];
    for a in [-1.0, 1.0] {
        let w = power_weight(&coarse, a, &Point::origin(1))?;
        cases.push((Some(a), weighted_k(&w, 2.0, 1.0)?.1));
    }
    let funcs: Vec<Analytic> = (0..12u64).map(|i| w21_function(1, 800 + i, 1 + (i as usize) % 4, KMAX)).collect();
    let bfuncs: Vec<Analytic> = (0..12u64)
        .map(|i| Analytic::new(random_trig_expr(1, 900 + i, 1 + (i as usize) % 4, KMAX).mul_last()))
        .collect();
    let mut pass = true;
    let mut agreement: f64 = 0.0;
    let mut detail = Vec::new();
    for (a, k) in &cases {
        let mut s = Vec::new();
        let mut sb = Vec::new();
        for h in [H, H_FINE] {
            let g = grid1(h);
            let w = match a {
                None => WeightField::unit(&g),
                Some(a) => power_weight(&g, *a, &Point::origin(1))?,
            };
            let mut top: f64 = 0.0;
            for f in &funcs {
                let rep = verify_gradient_sp(&sample_w21(f, &g), "w21", &w, 2.0, *k, &q1)?;
                pass &= rep.direct.ratio.is_finite();
                agreement = agreement.max(rep.agreement);
                // n = 1: the single component is the whole gradient
                agreement = agreement
                    .max((rep.componentwise[0].lhs - rep.direct.lhs).abs() / rep.direct.lhs.max(f64::MIN_POSITIVE));
                top = top.max(rep.direct.ratio);
            }
            s.push(top);
            let mut btop: f64 = 0.0;
            for f in &bfuncs {
                let rep = verify_gradient_boundary(&sample_w21(f, &g), "x_n*w21", &w, 2.0, *k, &half)?;
                pass &= rep.ratio.is_finite();
                btop = btop.max(rep.ratio);
            }
            sb.push(btop);
        }
        let c = rel_change(s[0], s[1]).max(rel_change(sb[0], sb[1]));
        pass &= c < 0.10;
        let label = a.map(|a| format!("power({a})")).unwrap_or_else(|| "unit".into());
        detail.push(format!(
            "{label} k={k:.3}: interior sup {:.3}, boundary sup {:.3}, change {:.2}%",
            s[1],
            sb[1],
            100.0 * c
        ));
    }
    pass &= agreement <= 1e-10;
    detail.push(format!("componentwise agreement {agreement:.1e}"));
    Ok((pass, detail.join("; ")))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut failures = 0;
    let mut elements = 0;
    let mut first = None;
    for (n, h, count, rmin) in [(1usize, H_FINE, 800usize, 0.25), (2, 1.0 / 8.0, 200, 0.5)] {
        let g = Grid::from_extents(n, h, 1.0, 1.0)?;
        for _ in 0..count {
            let r = rng.gen_range(rmin..1.0);
            let region = ParabolicRegion::cylinder(Point::origin(n), r, 1.0);
            let z = loop {
                let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-r..r)).collect();
                let t = rng.gen_range(-r * r..r * r);
                let z = Point::new(x, t);
                if region.contains_point(&z) {
                    break z;
                }
            };
            let chain = chain_decomposition(&z, &region, h)?;
            let check = check_chain(&chain, &z, &region, &g)?;
            elements += check.elements;
            if !check.failures.is_empty() {
                failures += 1;
                first.get_or_insert_with(|| check.failures[0].clone());
            }
        }
    }
    let mut detail = format!("1000 chains, {elements} elements, {failures} failing chains");
    if let Some(f) = first {
        detail.push_str(&format!("; first: {f}"));
    }
    Ok((failures == 0, detail))
}

fn scaled_pair(pair: &SolutionPair, lambda: f64) -> SolutionPair {
    pair.scaled(lambda)
}

fn scaled_sample(s: &W21Sample, lambda: f64) -> W21Sample {
    s.scaled(lambda)
}

fn homogeneity() -> Result<f64, parasob::Error> {
    let g = grid1(H);
    let q1 = origin_cube(1.0);
    let half = ParabolicRegion::half_cube(Point::origin(1), 1.0);
    let w = power_weight(&g, 1.0, &Point::new(vec![0.2], 0.1))?;
    let kernel = PotentialKernel::new(&g, 1.0)?;
    let cells = cells_of(&g, &q1)?;
    let pairs = build(&standard_battery(&q1, 3, 10, KMAX), &g, &q1)?;
    let tpairs = build(&zero_trace_battery(2, 11, KMAX), &g, &half)?;
    let ipairs = build(&zero_initial_battery(2, 12, KMAX), &g, &q1)?;
    let sample = sample_w21(&w21_function(1, 13, 3, KMAX), &g);
    let bsample = sample_w21(&Analytic::new(random_trig_expr(1, 14, 2, KMAX).mul_last()), &g);
    let mut worst: f64 = 0.0;
    let mut cmp = |a: f64, b: f64| worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE));
    for lambda in [-3.7, 1e-3, 250.0] {
        for p in &pairs {
            let s = scaled_pair(p, lambda);
            cmp(verify_poincare(p, &q1)?.ratio, verify_poincare(&s, &q1)?.ratio);
            cmp(
                verify_sobolev_poincare(p, &w, 2.0, 3.0, &q1)?.ratio,
                verify_sobolev_poincare(&s, &w, 2.0, 3.0, &q1)?.ratio,
            );
            cmp(
                verify_higher_integrability(p, &w, 2.0, 3.0, 0.5, &q1)?.ratio,
                verify_higher_integrability(&s, &w, 2.0, 3.0, 0.5, &q1)?.ratio,
            );
            let f = p.u.restricted(&cells);
            cmp(
                verify_riesz_lemma(&f, "f", &w, 2.0, 3.0, &q1, &kernel)?.ratio,
                verify_riesz_lemma(&f.scaled(lambda), "f", &w, 2.0, 3.0, &q1, &kernel)?.ratio,
            );
        }
        for p in &tpairs {
            let s = scaled_pair(p, lambda);
            cmp(
                verify_boundary(p, &w, 2.0, 3.0, &half, BoundaryMode::Flat)?.report.ratio,
                verify_boundary(&s, &w, 2.0, 3.0, &half, BoundaryMode::Flat)?.report.ratio,
            );
        }
        for p in &ipairs {
            let s = scaled_pair(p, lambda);
            cmp(
                verify_boundary(p, &w, 2.0, 3.0, &q1, BoundaryMode::Initial)?.report.ratio,
                verify_boundary(&s, &w, 2.0, 3.0, &q1, BoundaryMode::Initial)?.report.ratio,
            );
        }
        cmp(
            verify_gradient_sp(&sample, "s", &w, 2.0, 3.0, &q1)?.direct.ratio,
            verify_gradient_sp(&scaled_sample(&sample, lambda), "s", &w, 2.0, 3.0, &q1)?.direct.ratio,
        );
        cmp(
            verify_gradient_boundary(&bsample, "b", &w, 2.0, 3.0, &half)?.ratio,
            verify_gradient_boundary(&scaled_sample(&bsample, lambda), "b", &w, 2.0, 3.0, &half)?.ratio,
        );
    }
    Ok(worst)
}

const CLI_CONFIG: &str = r#"schema_version = 1

[grid]
n = 1
h = 0.0625
space_extent = 1.0
time_extent = 1.0

[weight]
kind = "power"
a = 1.0

[battery]
count = 6
seed = 42
kmax = 4.0

[verify]
theorems = ["poincare", "sobolev_poincare", "riesz_lemma", "higher_integrability", "boundary_flat", "boundary_initial", "gradient_sp", "gradient_boundary"]

[apchar]
p = [1.5, 2.0, 3.0]

[scan_k]
budgets = [0.5, 1.0, 2.0]
tolerance = 1e-3
"#;

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Runs every subcommand into `root` and returns the files written.
fn cli_run(config: &Path, root: &Path, threads: usize) -> BTreeMap<PathBuf, Vec<u8>> {
    for cmd in ["apchar", "verify", "scan-k", "battery"] {
        let status = Command::new(env!("CARGO_BIN_EXE_parasob"))
            .args([cmd, "--config"])
            .arg(config)
            .args(["--threads", &threads.to_string(), "--quiet"])
            .env("PARASOB_OUTPUT_ROOT", root)
            .status()
            .expect("binary runs");
        assert!(status.success(), "{cmd} exited with {status}");
    }
    files_under(root)
}

fn determinism() -> Result<(bool, String), parasob::Error> {
    let dir = tempfile::tempdir()?;
    let config = dir.path().join("run.toml");
    fs::write(&config, CLI_CONFIG)?;
    let a = cli_run(&config, &dir.path().join("a"), 1);
    let b = cli_run(&config, &dir.path().join("b"), 2);
    let identical = a == b && !a.is_empty();

    // CLI numbers against direct library calls
    let g = grid1(H);
    let q1 = origin_cube(1.0);
    let w = power_weight(&g, 1.0, &Point::origin(1))?;
    let (_, k) = weighted_k(&w, 2.0, 1.0)?;
    let specs = parasob::generators::battery(
        &[
            parasob::generators::GeneratorKind::HeatKernel,
            parasob::generators::GeneratorKind::Fourier,
            parasob::generators::GeneratorKind::Antiderivative,
        ],
        &q1,
        6,
        42,
        4.0,
    );
    let direct: Vec<InequalityReport> = build(&specs, &g, &q1)?
        .iter()
        .map(|p| verify_sobolev_poincare(p, &w, 2.0, k, &q1))
        .collect::<Result<_, _>>()?;
    let from_cli: Vec<InequalityReport> =
        serde_json::from_slice(&a[&PathBuf::from("parasob-out/verify/sobolev_poincare.json")])
            .map_err(parasob::Error::from)?;
    let ap_direct = ap_characteristic(&w, 2.0, 1.0)?.value;
    let ap_file: serde_json::Value =
        serde_json::from_slice(&a[&PathBuf::from("parasob-out/apchar.json")]).map_err(parasob::Error::from)?;
    let ap_cli = ap_file["reports"][1]["value"].as_f64().unwrap_or(f64::NAN);
    let exact = direct == from_cli && ap_direct == ap_cli;
    Ok((identical && exact, format!("{} files byte-identical across reruns (1 vs 2 threads): {identical}; CLI equals library bit-exactly: {exact}", a.len())))
}

fn criterion_10() -> Outcome {
    let worst = homogeneity()?;
    let (det, detail) = determinism()?;
    Ok((worst <= 1e-12 && det, format!("ratio drift under u -> λu {worst:.1e} (limit 1e-12); {detail}")))
}

fn criterion_11() -> Outcome {
    let g = grid1(H_FINE);
    let family: Vec<WeightField> =
        (0..8).map(|i| power_weight(&g, 1.0 + 0.25 * i as f64, &Point::origin(1))).collect::<Result<_, _>>()?;
    let search = search_slice_gap(&family, 2.0, 1.0, 20.0, 10.0)?;
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let path = dir.join("slice_gap.json");
    parasob::io::write_json(&path, &search)?;
    let detail = match search.found {
        Some(i) => {
            let r = &search.reports[i];
            format!(
                "{}: parabolic [w]_2 {:.2}, worst slice A_2 product {:.1} at t = {:.4} ({:.1}x); report {}",
                r.label,
                r.parabolic,
                r.slice_max,
                r.worst_slice_time,
                r.gap_ratio,
                path.display()
            )
        }
        None => format!("no weight in the family met the thresholds; report {}", path.display()),
    };
    Ok((search.found.is_some(), detail))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("A_p exactness", criterion_1),
        ("Riesz oracle equivalence", criterion_2),
        ("Poincaré lemma", criterion_3),
        ("main theorem", criterion_4),
        ("Riesz lemma", criterion_5),
        ("higher integrability", criterion_6),
        ("boundary theorem", criterion_7),
        ("gradient theorems", criterion_8),
        ("chain construction", criterion_9),
        ("homogeneity and determinism", criterion_10),
        ("slice-gap demonstration", criterion_11),
    ];
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut passed = 0;
    let mut run = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        run += 1;
        let start = Instant::now();
        let (ok, detail) = match f() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        passed += ok as usize;
        println!(
            "{} {id:>2} {name}: {detail} [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {passed}/{run} criteria pass");
}
