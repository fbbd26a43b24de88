use parasob::calculus::SolutionPair;
use parasob::field::{ScalarField, VectorField};
use parasob::generators::{antiderivative_solution, fourier_heat_solution};
use parasob::geometry::{cells_of, Grid, ParabolicRegion, Point};
use parasob::operators::parabolic_maximal;
use parasob::sat::SummedAreaTable;
use parasob::verify::{
    chain_decomposition, check_chain, predicted_k, verify_higher_integrability, verify_poincare,
    verify_sobolev_poincare, GammaInterval,
};
use parasob::weights::{ap_characteristic, WeightField};
use proptest::prelude::*;

fn small_grid() -> Grid {
    Grid::cube_domain(1, 0.25, 1.0).unwrap()
}

fn weight_from(values: &[f64], g: &Grid) -> WeightField {
    let v: Vec<f64> = (0..g.len()).map(|i| values[i % values.len()]).collect();
    WeightField::new(ScalarField::new(g, v).unwrap(), "random").unwrap()
}

fn pair_on(g: &Grid, q: &ParabolicRegion, seed: u64, which: u8) -> SolutionPair {
    if which.is_multiple_of(2) {
        fourier_heat_solution(g, q, seed, 2, 3.0).unwrap()
    } else {
        antiderivative_solution(g, q, seed, 2, 3.0).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sat_box_sums_match_brute_force(
        vals in prop::collection::vec(-10.0f64..10.0, 60),
        a in 0usize..5, b in 0usize..12, da in 1usize..2, db in 1usize..1000,
    ) {
        let dims = [5usize, 12];
        let sat = SummedAreaTable::new(&dims, &vals);
        let hi0 = (a + da).min(5);
        let hi1 = (b + db).min(12);
        let mut brute = 0.0;
        for i in a..hi0 {
            for j in b..hi1 {
                brute += vals[i * 12 + j];
            }
        }
        let got = sat.box_sum(&[a, b, 0, 0], &[hi0, hi1, 0, 0]);
        prop_assert!((got - brute).abs() <= 1e-12 * (1.0 + brute.abs()));
    }

    #[test]
    fn ap_is_scale_invariant_at_least_one_and_monotone(
        vals in prop::collection::vec(0.05f64..20.0, 7..40),
        c in 0.01f64..100.0,
    ) {
        let g = small_grid();
        let w = weight_from(&vals, &g);
        let r = 1.0;
        let a2 = ap_characteristic(&w, 2.0, r).unwrap().value;
        let a3 = ap_characteristic(&w, 3.0, r).unwrap().value;
        let a15 = ap_characteristic(&w, 1.5, r).unwrap().value;
        prop_assert!(a15 >= 1.0 - 1e-12);
        prop_assert!(a3 <= a2 * (1.0 + 1e-12) && a2 <= a15 * (1.0 + 1e-12));
        let scaled = ap_characteristic(&w.scaled(c).unwrap(), 2.0, r).unwrap().value;
        prop_assert!((scaled - a2).abs() <= 1e-12 * a2);
    }

    #[test]
    fn maximal_function_dominates_and_scales(
        vals in prop::collection::vec(-5.0f64..5.0, 11..50),
        lambda in -4.0f64..4.0,
    ) {
        let g = small_grid();
        let f = ScalarField::new(&g, (0..g.len()).map(|i| vals[i % vals.len()]).collect()).unwrap();
        let m = parabolic_maximal(&f);
        for (mv, fv) in m.values().iter().zip(f.values()) {
            prop_assert!(*mv >= fv.abs() * (1.0 - 1e-12));
        }
        let ms = parabolic_maximal(&f.scaled(lambda));
        for (a, b) in ms.values().iter().zip(m.values()) {
            prop_assert!((a - lambda.abs() * b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn verifier_ratios_are_homogeneous(seed in 0u64..1000, which in 0u8..2, lambda in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0]) {
        let g = Grid::cube_domain(1, 1.0 / 8.0, 1.0).unwrap();
        let q = ParabolicRegion::cube(Point::origin(1), 1.0);
        let w = WeightField::new(ScalarField::from_fn(&g, |x, t| 1.0 + x[0].abs() + t * t), "q").unwrap();
        let pair = pair_on(&g, &q, seed, which);
        let scaled = pair.scaled(lambda);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300);
        let (a, b) = (verify_poincare(&pair, &q).unwrap(), verify_poincare(&scaled, &q).unwrap());
        prop_assert!(close(a.ratio, b.ratio));
        let (a, b) = (
            verify_sobolev_poincare(&pair, &w, 2.0, 3.0, &q).unwrap(),
            verify_sobolev_poincare(&scaled, &w, 2.0, 3.0, &q).unwrap(),
        );
        prop_assert!(close(a.ratio, b.ratio));
        let (a, b) = (
            verify_higher_integrability(&pair, &w, 2.0, 3.0, 0.5, &q).unwrap(),
            verify_higher_integrability(&scaled, &w, 2.0, 3.0, 0.5, &q).unwrap(),
        );
        prop_assert!(close(a.ratio, b.ratio));
    }

    #[test]
    fn sobolev_poincare_lhs_is_nondecreasing_in_k(seed in 0u64..1000, which in 0u8..2) {
        let g = Grid::cube_domain(1, 1.0 / 8.0, 1.0).unwrap();
        let q = ParabolicRegion::cube(Point::origin(1), 1.0);
        let w = WeightField::new(ScalarField::from_fn(&g, |x, _| 0.5 + x[0] * x[0]), "q").unwrap();
        let pair = pair_on(&g, &q, seed, which);
        let l: Vec<f64> = [1.0, 2.0, 3.0]
            .iter()
            .map(|&k| verify_sobolev_poincare(&pair, &w, 2.0, k, &q).unwrap().lhs)
            .collect();
        prop_assert!(l[0] <= l[1] * (1.0 + 1e-12) && l[1] <= l[2] * (1.0 + 1e-12));
    }

    #[test]
    fn predicted_k_exceeds_one(n in 1usize..4, p in 1.01f64..6.0, frac in 0.01f64..0.99) {
        let lo = (p / (n as f64 + 2.0)).max(1.0);
        let q = lo + frac * (p - lo);
        let kf = predicted_k(n, p, q).unwrap();
        prop_assert!(kf.k > 1.0);
        prop_assert!((kf.delta - (kf.k - (n as f64 + 2.0) / (n as f64 + 1.0))).abs() < 1e-15);
    }

    #[test]
    fn gamma_midpoint_is_admissible(k in 1.001f64..10.0, eps in 0.001f64..10.0) {
        let gi = GammaInterval::new(k, eps).unwrap();
        let e = GammaInterval::holder_exponent(k, gi.gamma);
        prop_assert!(gi.gamma > 1.0 && gi.gamma < k);
        prop_assert!(e > 1.0 && e < 1.0 + eps);
    }

    #[test]
    fn cylinder_chains_satisfy_invariants(
        u in 0.0f64..1.0, dir in 0.0f64..std::f64::consts::TAU, s in -0.999f64..0.999, r in 0.3f64..1.0,
    ) {
        let h = 1.0 / 32.0;
        let g = Grid::from_extents(2, h, 1.0, 1.0).unwrap();
        let region = ParabolicRegion::cylinder(Point::origin(2), r, 1.0);
        let rad = 0.999 * r * u.sqrt();
        let z = Point::new(vec![rad * dir.cos(), rad * dir.sin()], s * r * r);
        let chain = chain_decomposition(&z, &region, h).unwrap();
        prop_assert!(chain.last().unwrap().r_j >= 4.0 * h);
        let check = check_chain(&chain, &z, &region, &g).unwrap();
        prop_assert!(check.failures.is_empty(), "{:?}", check.failures);
    }
}

#[test]
fn unit_weight_reproduces_unweighted_display() {
    let g = Grid::cube_domain(1, 1.0 / 16.0, 1.0).unwrap();
    let q = ParabolicRegion::cube(Point::origin(1), 1.0);
    let pair = fourier_heat_solution(&g, &q, 3, 2, 3.0).unwrap();
    let rep = verify_sobolev_poincare(&pair, &WeightField::unit(&g), 2.0, 3.0, &q).unwrap();
    let cells = cells_of(&g, &q).unwrap();
    let u = pair.u.values();
    let mean = cells.iter().map(|&c| u[c]).sum::<f64>() / cells.len() as f64;
    let n = cells.len() as f64;
    let lhs = (cells.iter().map(|&c| (u[c] - mean).abs().powi(6)).sum::<f64>() / n).powf(1.0 / 6.0);
    let rhs = (cells.iter().map(|&c| (pair.du.norm_at(c) + pair.g.norm_at(c)).powi(2)).sum::<f64>() / n).sqrt();
    assert!((rep.lhs - lhs).abs() <= 1e-12 * lhs);
    assert!((rep.rhs - rhs).abs() <= 1e-12 * rhs);
    let _ = VectorField::zeros(&g, 1);
}
