use proptest::prelude::*;

use lgk_core::lane_graph::{BezierCenterline, LaneGraph, Point, DEFAULT_CONNECT_TOL};
use lgk_core::metrics::{centerline_f, evaluate, DEFAULT_MATCH_DIST};

fn arb_graph() -> impl Strategy<Value = LaneGraph> {
    proptest::collection::vec((-20.0f64..20.0, 0.0f64..40.0, -3.0f64..3.0, 3.0f64..12.0, any::<bool>()), 1..7).prop_map(
        |specs| {
            let mut lines = Vec::new();
            let mut prev: Option<Point> = None;
            for (x, z, dx, len, chain) in specs {
                let start = match (chain, prev) {
                    (true, Some(p)) => p,
                    _ => Point::new(x, z),
                };
                let end = Point::new(start.x + dx, start.y + len);
                let mid = Point::new(0.5 * (start.x + end.x) + 0.3 * dx, 0.5 * (start.y + end.y));
                lines.push(BezierCenterline::new(start, mid, end));
                prev = Some(end);
            }
            LaneGraph::from_centerlines(lines, DEFAULT_CONNECT_TOL)
        },
    )
}

fn permuted(g: &LaneGraph, order: &[usize]) -> LaneGraph {
    LaneGraph {
        centerlines: order.iter().map(|&i| g.centerlines[i]).collect(),
        incidence: order.iter().map(|&i| order.iter().map(|&j| g.incidence[i][j]).collect()).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scores_lie_in_unit_interval(a in arb_graph(), b in arb_graph()) {
        let r = evaluate(&a, &b, DEFAULT_MATCH_DIST);
        for v in [r.mean_f, r.detect_f, r.connect_f] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn centerline_f_is_symmetric(a in arb_graph(), b in arb_graph(), d in 0.1f64..3.0) {
        prop_assert_eq!(centerline_f(&a, &b, d), centerline_f(&b, &a, d));
    }

    #[test]
    fn scores_ignore_centerline_order(a in arb_graph(), b in arb_graph(), seed in any::<u64>()) {
        let mut order: Vec<usize> = (0..a.len()).collect();
        // Deterministic shuffle from the seed.
        let mut s = seed | 1;
        for i in (1..order.len()).rev() {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            order.swap(i, (s % (i as u64 + 1)) as usize);
        }
        let r1 = evaluate(&a, &b, DEFAULT_MATCH_DIST);
        let r2 = evaluate(&permuted(&a, &order), &b, DEFAULT_MATCH_DIST);
        prop_assert_eq!(r1.mean_f, r2.mean_f);
        prop_assert_eq!(r1.detect_f, r2.detect_f);
        prop_assert_eq!(r1.connect_f, r2.connect_f);
    }

    #[test]
    fn self_evaluation_is_perfect(a in arb_graph()) {
        let r = evaluate(&a, &a, DEFAULT_MATCH_DIST);
        prop_assert_eq!((r.mean_f, r.detect_f, r.connect_f), (1.0, 1.0, 1.0));
    }
}
