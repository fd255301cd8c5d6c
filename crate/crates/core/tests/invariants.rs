use painleve::catalogue::liouville2d;
use painleve::conformal::{yamabe_grid_solve, GridProblem};
use painleve::expr::{differentiate, evaluate, parse, Binding};
use painleve::killing::killing_tensors;
use painleve::report::{run, RunOptions, Suite};
use painleve::sampling::halton_box;
use painleve::specfile::{spec_from_json, spec_to_json};
use painleve::stackel::{Chart, Geometry, PainleveSpec};
use painleve::tolerances::{Check, Tolerances};
use proptest::prelude::*;

fn atom() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("x".to_string()),
        Just("y".to_string()),
        (1u32..9).prop_map(|k| format!("{}", k as f64 / 4.0)),
    ]
}

fn expression() -> impl Strategy<Value = String> {
    atom().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}*{b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a})/(2 + ({b})^2)")),
            inner.clone().prop_map(|a| format!("sin({a})")),
            inner.clone().prop_map(|a| format!("exp(0.3*{a})")),
            inner.clone().prop_map(|a| format!("atan({a})")),
            (inner, 2u32..4).prop_map(|(a, k)| format!("({a})^{k}")),
        ]
    })
}

fn vars() -> Vec<String> {
    vec!["x".into(), "y".into()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printing_round_trips(text in expression(), x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let e = parse(&text).unwrap();
        let back = parse(&e.to_string()).unwrap();
        let b = Binding::from_slices(&vars(), &[x, y]);
        let (u, v) = (evaluate(&e, &b).unwrap(), evaluate(&back, &b).unwrap());
        prop_assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0), "{} vs {}", e, back);
    }

    #[test]
    fn derivative_is_linear_and_symmetric(f in expression(), g in expression(), k in -2.0f64..2.0, x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let (f, g) = (parse(&f).unwrap(), parse(&g).unwrap());
        let b = Binding::from_slices(&vars(), &[x, y]);
        let combo = &f + g.clone() * k;
        let lhs = evaluate(&differentiate(&combo, "x"), &b).unwrap();
        let rhs = evaluate(&differentiate(&f, "x"), &b).unwrap() + k * evaluate(&differentiate(&g, "x"), &b).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
        let xy = evaluate(&differentiate(&differentiate(&f, "x"), "y"), &b).unwrap();
        let yx = evaluate(&differentiate(&differentiate(&f, "y"), "x"), &b).unwrap();
        prop_assert!((xy - yx).abs() <= 1e-10 * xy.abs().max(1.0));
    }

    #[test]
    fn halton_points_stay_in_box(lo in -3.0f64..0.0, width in 0.1f64..4.0, count in 1usize..40, seed in 0u64..1000) {
        let pts = halton_box(&[(lo, lo + width), (0.0, 1.0), (-1.0, 1.0)], count, seed);
        prop_assert_eq!(pts.len(), count);
        prop_assert!(pts.iter().all(|p| p[0] >= lo && p[0] <= lo + width && (0.0..=1.0).contains(&p[1])));
        prop_assert_eq!(pts, halton_box(&[(lo, lo + width), (0.0, 1.0), (-1.0, 1.0)], count, seed));
    }

    #[test]
    fn tolerances_scale_uniformly(k in 0.01f64..100.0) {
        let t = Tolerances::scaled(k);
        for c in [Check::MetricAlgebra, Check::Robertson, Check::Commutator, Check::Drift, Check::GridPipeline] {
            prop_assert!((t.get(c) - k * c.base()).abs() <= 1e-15 * k * c.base());
        }
    }
}

fn liouville(a: f64, b: f64, c: f64, d: f64) -> PainleveSpec {
    let f1 = parse(&format!("{a} + {b}*sin(x1)")).unwrap();
    let f2 = parse(&format!("{c} + {d}*x2^2")).unwrap();
    liouville2d(&f1, &f2, vec![(-1.0, 1.0), (-1.0, 1.0)]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn liouville_family_is_separable(a in 1.5f64..3.0, b in -1.0f64..1.0, c in 0.5f64..2.0, d in 0.0f64..1.0) {
        let spec = liouville(a, b, c, d);
        let opts = RunOptions { samples: 8, ..RunOptions::default() };
        let doc = run(&spec, &[Suite::Validate, Suite::Robertson, Suite::Ricci, Suite::Killing], &opts).unwrap();
        for ch in &doc.checks {
            prop_assert!(ch.verdict != painleve::report::Verdict::Fail, "{:?}", ch);
        }
    }

    #[test]
    fn first_killing_tensor_is_inverse_metric(a in 1.5f64..3.0, b in -1.0f64..1.0, c in 0.5f64..2.0, d in 0.0f64..1.0) {
        let geom = Geometry::new(liouville(a, b, c, d)).unwrap();
        let set = killing_tensors(&geom).unwrap();
        for p in geom.chart().sample(4, 1) {
            let m = geom.metric_at(&p, 0).unwrap();
            let k = set.get(0).jet(&p).unwrap().value;
            prop_assert!((k - &m.ginv).amax() < 1e-12);
            let v = geom.stackel_eval(&p).unwrap();
            prop_assert!(v.adjugate_defect() < 1e-12 * v.det.abs().max(1.0));
        }
    }

    #[test]
    fn spec_json_preserves_metric(a in 1.5f64..3.0, b in -1.0f64..1.0, c in 0.5f64..2.0, d in 0.0f64..1.0) {
        let spec = liouville(a, b, c, d);
        let back = spec_from_json(&spec_to_json(&spec)).unwrap();
        let (g1, g2) = (Geometry::new(spec).unwrap(), Geometry::new(back).unwrap());
        for p in g1.chart().sample(4, 2) {
            prop_assert!((g1.metric_at(&p, 0).unwrap().g - g2.metric_at(&p, 0).unwrap().g).amax() < 1e-14);
        }
    }

    #[test]
    fn grid_solution_is_monotone_and_bracketed(lift in 0.8f64..1.5, bump in 0.0f64..0.5, f0 in 0.5f64..3.0) {
        let solve = |l: f64| {
            let prob = GridProblem::flat(vec![0.0, 0.0], vec![1.0, 1.0], 17, 5.0, |p| f0 + p[1], |p| l + bump * p[0] * p[1]).unwrap();
            yamabe_grid_solve(&prob, 1.0).unwrap()
        };
        let (low, high) = (solve(lift), solve(lift + 0.1));
        prop_assert!(low.w.iter().zip(&high.w).all(|(u, v)| v >= u));
        let (eps, cap) = low.bracket;
        prop_assert!(low.w.iter().all(|&v| v > 0.0 && v >= eps - 1e-12 && v <= cap + 1e-12));
        prop_assert!(low.residual < 1e-10);
    }
}

#[test]
fn chart_rejects_bad_partitions() {
    let v = |s: &[&str]| s.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    assert!(Chart::new(v(&["x1", "x2"]), vec![v(&["x1"])], vec![(-1.0, 1.0); 2]).is_err());
    assert!(Chart::new(v(&["x1", "x2"]), vec![v(&["x1"]), v(&["x1"])], vec![(-1.0, 1.0); 2]).is_err());
    assert!(Chart::new(v(&["x1", "x2"]), vec![v(&["x1"]), v(&["x2"])], vec![(1.0, -1.0), (-1.0, 1.0)]).is_err());
}
