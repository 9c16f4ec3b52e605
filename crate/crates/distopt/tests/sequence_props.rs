use distopt::oracle::greedy_prefixes;
use distopt::participation::Power;
use distopt::sequence::{build_sequence, IncrementPolicy, SeedPolicy, SequenceConfig};
use distopt::transform::Identity;
use distopt::valuation::{v_value, BaseStats};
use distopt::{Distribution, Point};
use proptest::prelude::*;

fn instance(lo: usize, hi: usize) -> impl Strategy<Value = Distribution> {
    prop::collection::vec((0.01..10.0f64, 0.0..5.0f64, 0.05..3.0f64), lo..hi).prop_map(|v| {
        Distribution::from_points(v.into_iter().enumerate().map(|(i, (c, p, w))| (Point::new(format!("r{i:02}"), c, p), w)))
            .unwrap()
    })
}

fn power() -> impl Strategy<Value = Power> {
    (0.1..5.0f64, 0.05..=1.0f64).prop_map(|(z, a)| Power::new(z, a).unwrap())
}

proptest! {
    #[test]
    fn every_step_is_the_best_available(m in power(), d_all in instance(2, 14), chunked in any::<bool>()) {
        let mut cfg = SequenceConfig::default();
        if chunked {
            cfg.increment_policy = IncrementPolicy::UnitChunks(0.5);
        }
        let trace = build_sequence(&d_all, &cfg, &m, &Identity).unwrap();
        let ds = trace.distributions().unwrap();
        for i in 1..ds.len() {
            let before = &ds[i - 1];
            let base = BaseStats::of(before, &m, &Identity).unwrap();
            let chosen = trace.steps()[i].delta_v_of_step;
            for e in d_all.entries() {
                let left = e.weight - before.weight_of(&e.point.id);
                if left <= 1e-9 {
                    continue;
                }
                let w = if chunked { left.min(0.5) } else { left };
                let other = base.delta_v(e.point.c, e.point.p, w, &m);
                prop_assert!(other <= chosen + 1e-9 * chosen.abs().max(base.v().abs()).max(1.0));
            }
            prop_assert!(ds[i].volume() > before.volume());
        }
    }

    #[test]
    fn greedy_matches_exhaustive_rescoring(m in power(), d_all in instance(1, 9)) {
        let trace = build_sequence(&d_all, &SequenceConfig::default(), &m, &Identity).unwrap();
        let ours = trace.distributions().unwrap();
        let theirs = greedy_prefixes(&d_all, &m, &Identity).unwrap();
        prop_assert_eq!(ours.len(), theirs.len());
        for (a, b) in ours.iter().zip(&theirs) {
            prop_assert!(a.max_weight_diff(b) <= 1e-12);
            prop_assert!((v_value(a, &m, &Identity).unwrap() - v_value(b, &m, &Identity).unwrap()).abs() <= 1e-9);
        }
    }

    #[test]
    fn seeding_with_the_richest_point_gives_a_decreasing_trace(m in power(), d_all in instance(1, 14)) {
        let top = d_all
            .entries()
            .max_by(|a, b| a.point.c.total_cmp(&b.point.c).then_with(|| b.point.id.cmp(&a.point.id)))
            .unwrap()
            .point
            .id
            .clone();
        let cfg = SequenceConfig { seed_policy: SeedPolicy::Explicit(vec![top]), ..SequenceConfig::default() };
        let trace = build_sequence(&d_all, &cfg, &m, &Identity).unwrap();
        prop_assert!(trace.flags().generally_decreasing);
    }
}
