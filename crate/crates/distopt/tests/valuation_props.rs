use distopt::participation::Power;
use distopt::transform::Identity;
use distopt::valuation::{best_of, delta_s, delta_v, mapping_registry, s_value, v_value, BaseStats, Regime, Scored};
use distopt::{Distribution, Point, PointIncrement};
use proptest::prelude::*;

fn pts(prefix: &'static str, lo: usize, hi: usize) -> impl Strategy<Value = Vec<(Point, f64)>> {
    prop::collection::vec((0.01..10.0f64, 0.0..5.0f64, 0.01..5.0f64), lo..hi).prop_map(move |v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (c, p, w))| (Point::new(format!("{prefix}{i}"), c, p), w))
            .collect()
    })
}

fn power() -> impl Strategy<Value = Power> {
    (0.1..5.0f64, 0.05..=1.0f64).prop_map(|(z, a)| Power::new(z, a).unwrap())
}

proptest! {
    #[test]
    fn closed_form_matches_direct(m in power(), base in pts("a", 1, 8), extra in pts("b", 1, 5)) {
        let d = Distribution::from_points(base).unwrap();
        let dp = d.combine(&Distribution::from_points(extra).unwrap());
        let direct = v_value(&dp, &m, &Identity).unwrap() - v_value(&d, &m, &Identity).unwrap();
        let closed = delta_v(&d, &dp, &m, &Identity).unwrap();
        let scale = v_value(&dp, &m, &Identity).unwrap().abs().max(v_value(&d, &m, &Identity).unwrap().abs()).max(1.0);
        prop_assert!((closed - direct).abs() <= 1e-10 * scale);
        let back = delta_v(&dp, &d, &m, &Identity).unwrap();
        prop_assert!((back + closed).abs() <= 1e-10 * scale);
    }

    #[test]
    fn regimes_agree_with_direct_s(m in power(), base in pts("a", 1, 8), extra in pts("b", 1, 5)) {
        let d = Distribution::from_points(base).unwrap();
        let dp = d.combine(&Distribution::from_points(extra).unwrap());
        let vd = delta_s(&d, &dp, &m, &Identity).unwrap();
        let direct = s_value(&dp, &m, &Identity).unwrap() - s_value(&d, &m, &Identity).unwrap();
        let scale = direct.abs().max(1.0);
        prop_assert!((vd.delta_s - direct).abs() <= 1e-9 * scale);
        if vd.regime == Regime::AtOrAboveDStar {
            prop_assert_eq!(vd.delta_s, vd.delta_v);
        }
        if vd.regime == Regime::BelowDStar {
            let y = dp.remove_subdistribution(&d).unwrap();
            let h = y.t_total(&Identity).unwrap();
            prop_assert!(h == 0.0 || (vd.delta_s > 0.0) == (h > 0.0));
        }
    }

    #[test]
    fn mappings_share_the_argmax(m in power(), base in pts("a", 1, 8), cands in pts("x", 2, 12)) {
        let d = Distribution::from_points(base).unwrap();
        let stats = BaseStats::of(&d, &m, &Identity).unwrap();
        let reg = mapping_registry();
        let pick = |name: &str| {
            let f = reg.lookup(name).unwrap();
            let scored: Vec<Scored<'_>> = cands
                .iter()
                .map(|(p, _)| Scored { score: f.score(&stats, p.c, p.p, 1.0, &m), c: p.c, tp: p.p, id: p.id.as_str() })
                .collect();
            best_of(&scored).unwrap()
        };
        let by_dv = pick("delta_v");
        prop_assert_eq!(pick("xi"), by_dv);
        prop_assert_eq!(pick("upsilon"), by_dv);
        // Xi and the change in V differ by V(D) for a unit candidate.
        let (p, _) = &cands[by_dv];
        let f = |name: &str| reg.lookup(name).unwrap().score(&stats, p.c, p.p, 1.0, &m);
        prop_assert!((f("xi") - f("delta_v") - stats.v()).abs() <= 1e-9 * stats.v().abs().max(1.0));
        let dp = d.apply_increment(&PointIncrement::new(p.clone(), 1.0)).unwrap();
        prop_assert!((f("delta_v") - delta_v(&d, &dp, &m, &Identity).unwrap()).abs() <= 1e-9 * stats.v().abs().max(1.0));
    }

    #[test]
    fn dominating_candidate_is_never_ranked_lower(
        m in power(),
        base in pts("a", 1, 8),
        c in 0.01..10.0f64,
        p in 0.0..5.0f64,
        dc in 0.0..3.0f64,
        dp in 0.0..3.0f64,
        w in 0.01..5.0f64,
    ) {
        prop_assume!(dc > 0.0 || dp > 0.0);
        let d = Distribution::from_points(base).unwrap();
        let stats = BaseStats::of(&d, &m, &Identity).unwrap();
        for name in ["delta_v", "xi", "upsilon"] {
            let f = mapping_registry().lookup(name).unwrap();
            let strong = Scored { score: f.score(&stats, c + dc, p + dp, w, &m), c: c + dc, tp: p + dp, id: "z" };
            let weak = Scored { score: f.score(&stats, c, p, w, &m), c, tp: p, id: "a" };
            prop_assert_ne!(strong.preference(&weak), std::cmp::Ordering::Less);
        }
    }
}
