use a2a_sched::balance::{balance_senders, redistribution_schedule};
use a2a_sched::birkhoff::{delivered_per_pair, embed_doubly_stochastic, stage_bound, strip_auxiliary};
use a2a_sched::bounds::optimal_time;
use a2a_sched::spreadout::spreadout_completion_units;
use a2a_sched::stage::is_sorted_ascending;
use a2a_sched::workload::{gen_adversarial, gen_uniform, gen_zipf};
use a2a_sched::*;
use proptest::prelude::*;

fn server_matrix(max_n: usize, max_entry: u64) -> impl Strategy<Value = ServerMatrix> {
    (2..=max_n).prop_flat_map(move |n| {
        prop::collection::vec(prop::collection::vec(0..=max_entry, n), n)
            .prop_map(|rows| ServerMatrix::from_rows(&rows).unwrap())
    })
}

fn sparse_server_matrix(max_n: usize) -> impl Strategy<Value = ServerMatrix> {
    (2..=max_n).prop_flat_map(|n| {
        prop::collection::vec(
            prop::collection::vec(prop_oneof![3 => Just(0u64), 1 => 1..1_000_000u64], n),
            n,
        )
        .prop_map(|rows| ServerMatrix::from_rows(&rows).unwrap())
    })
}

fn demand_matrix() -> impl Strategy<Value = (DemandMatrix, Topology)> {
    (2..=4usize, 1..=4usize).prop_flat_map(|(n, m)| {
        let g = n * m;
        prop::collection::vec(0..50_000u64, g * g).prop_map(move |cells| {
            let mut d = DemandMatrix::zeros(n, m);
            for a in 0..g {
                for b in (0..g).filter(|&b| b != a) {
                    d.set(a, b, cells[a * g + b]).unwrap();
                }
            }
            (d, Topology::new(n, m, 9.0, 1.0, 0.0).unwrap())
        })
    })
}

fn cross_sums_equal_within_one(tile: &Tile) -> bool {
    let sums = tile.row_sums();
    sums.iter().max().unwrap() - sums.iter().min().unwrap() <= 1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn embedding_is_doubly_stochastic(s in server_matrix(9, 1_000_000)) {
        let e = embed_doubly_stochastic(&s).unwrap();
        let rows = e.embedded.row_sums();
        let cols = e.embedded.col_sums();
        prop_assert!(rows.iter().chain(&cols).all(|&x| x == e.common_sum));
        prop_assert_eq!(e.common_sum, s.max_rc());
        for i in 0..s.dim() {
            for j in (0..s.dim()).filter(|&j| j != i) {
                prop_assert_eq!(e.embedded.get(i, j) - e.aux.get(i, j), s.get(i, j));
            }
        }
    }

    #[test]
    fn decomposition_exact_and_bounded(s in prop_oneof![server_matrix(10, 1_000_000), sparse_server_matrix(10)]) {
        let dec = decompose_server_matrix(&s).unwrap();
        prop_assert!(dec.stages.len() <= stage_bound(s.dim()));
        prop_assert_eq!(dec.weight_sum(), s.max_rc());
        for st in &dec.stages {
            st.check_one_to_one().unwrap();
            prop_assert!(st.weight > 0);
        }
    }

    #[test]
    fn stripping_delivers_real_traffic(s in prop_oneof![server_matrix(8, 10_000), sparse_server_matrix(8)]) {
        let dec = decompose_server_matrix(&s).unwrap();
        let real = strip_auxiliary(&dec.stages, &dec.aux).unwrap();
        prop_assert_eq!(delivered_per_pair(s.dim(), &real), s.off_diagonal());
        let weights: u64 = real.iter().map(|st| st.weight).sum();
        prop_assert_eq!(weights, s.max_rc());
        prop_assert!(real.iter().all(|st| st.edges.iter().all(|e| e.src != e.dst)));
    }

    #[test]
    fn spreadout_never_beats_bottleneck(s in server_matrix(10, 1_000)) {
        prop_assert!(spreadout_completion_units(&s) >= s.max_rc());
    }

    #[test]
    fn balancing_conserves_and_equalizes((d, t) in demand_matrix()) {
        let plan = build_balance_plan(&d, &t).unwrap();
        plan.check_consistency().unwrap();
        prop_assert_eq!(
            reduce_to_server_level(&plan.reshaped, &t).unwrap(),
            reduce_to_server_level(&d, &t).unwrap()
        );
        for i in 0..t.n_servers {
            for j in 0..t.n_servers {
                let before = d.tile(i, j).unwrap();
                let after = plan.reshaped.tile(i, j).unwrap();
                prop_assert_eq!(before.total(), after.total());
                if i != j {
                    prop_assert!(cross_sums_equal_within_one(&after));
                    // every byte still has its destination GPU recorded
                    prop_assert_eq!(plan.redist(i, j).col_sums(), before.entries.col_sums());
                } else {
                    prop_assert_eq!(&before, &after);
                }
            }
        }
    }

    #[test]
    fn balancing_moves_keep_columns(cells in prop::collection::vec(0..1000u64, 1..=36)) {
        let m = (cells.len() as f64).sqrt() as usize;
        let rows: Vec<Vec<u64>> = cells.chunks(m).take(m).map(|c| c.to_vec()).collect();
        let tile = Tile {
            src_server: 0,
            dst_server: 1,
            entries: SquareMatrix::from_rows(&rows).unwrap(),
        };
        let (out, moves) = balance_senders(&tile).unwrap();
        prop_assert_eq!(out.entries.col_sums(), tile.entries.col_sums());
        prop_assert!(cross_sums_equal_within_one(&out));
        let moved: u64 = moves.iter().map(|mv| mv.bytes).sum();
        let before = tile.row_sums();
        let after = out.row_sums();
        let shed: u64 = before.iter().zip(&after).map(|(b, a)| b.saturating_sub(*a)).sum();
        prop_assert_eq!(moved, shed);
    }

    #[test]
    fn redistribution_releases_every_misplaced_byte((d, t) in demand_matrix()) {
        let f = synthesize_fast(&d, &t).unwrap();
        let released: u64 = f.redistribution.iter().flatten().map(|mv| mv.bytes).sum();
        prop_assert_eq!(released, f.plan.misplaced_bytes());
        prop_assert_eq!(f.redistribution.len(), f.stages.len());
        prop_assert!(is_sorted_ascending(&f.stages));
        // moves belong to the receiving server
        for (k, moves) in f.redistribution.iter().enumerate() {
            for mv in moves {
                prop_assert!(f.stages[k].edges.iter().any(|e| e.dst == mv.server));
            }
        }
    }

    #[test]
    fn simulated_total_respects_lower_bound((d, t) in demand_matrix(), ratio in 1.0f64..50.0, alpha in 0.0f64..1e-3) {
        let t = Topology { scaleup_bw: ratio, scaleout_bw: 1.0, wakeup_delay: alpha, ..t };
        let f = synthesize_fast(&d, &t).unwrap();
        let tl = f.simulate(&t).unwrap();
        let opt = optimal_time(&f.server_matrix, &t);
        prop_assert!(tl.total >= opt * (1.0 - 1e-12));
        prop_assert!(tl.total >= tl.t_balance + tl.final_redistribution());
        prop_assert!(tl.total >= tl.scaleout_total());
        // FAST may use more stages than SpreadOut, so compare without wake-up cost
        let t0 = Topology { wakeup_delay: 0.0, ..t };
        let so = simulate_spreadout(&f.server_matrix, &t0).unwrap();
        let fast_so = f.simulate(&t0).unwrap().scaleout_total();
        prop_assert!(so.total >= fast_so * (1.0 - 1e-12));
    }

    #[test]
    fn faster_scaleup_never_hurts((d, t) in demand_matrix(), lo in 1.0f64..20.0, factor in 1.0f64..10.0) {
        let slow = Topology { scaleup_bw: lo, ..t };
        let fast = Topology { scaleup_bw: lo * factor, ..t };
        let f = synthesize_fast(&d, &slow).unwrap();
        let a = f.simulate(&slow).unwrap().total;
        let b = f.simulate(&fast).unwrap().total;
        prop_assert!(b <= a * (1.0 + 1e-12), "{b} > {a}");
    }

    #[test]
    fn infinite_scaleup_reaches_optimum((d, t) in demand_matrix()) {
        let t = Topology { scaleup_bw: f64::INFINITY, ..t };
        let f = synthesize_fast(&d, &t).unwrap();
        let tl = f.simulate(&t).unwrap();
        let opt = optimal_time(&f.server_matrix, &t);
        prop_assert!((tl.total - opt).abs() <= opt * 1e-12, "{} vs {opt}", tl.total);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn redistribution_hidden_when_scaleup_is_fast(seed in 0u64..10_000, n in 2usize..=6, m in 1usize..=8, skew in 0.0f64..0.95) {
        let t = Topology::new(n, m, m.max(2) as f64 * 50e9, 50e9, 0.0).unwrap();
        let d = gen_zipf(seed, &t, skew, 1 << 40).unwrap();
        let f = synthesize_fast(&d, &t).unwrap();
        let tl = f.simulate(&t).unwrap();
        for k in 1..tl.scaleout.len() {
            prop_assert!(
                tl.redistribution[k - 1] <= tl.scaleout[k],
                "stage {k}: redistribution {} > scale-out {}", tl.redistribution[k - 1], tl.scaleout[k]
            );
        }
    }

    #[test]
    fn generators_are_deterministic(seed in any::<u64>(), n in 2usize..=4, m in 1usize..=4) {
        let t = Topology::new(n, m, 9.0, 1.0, 0.0).unwrap();
        prop_assert_eq!(gen_uniform(seed, &t, 1000).unwrap(), gen_uniform(seed, &t, 1000).unwrap());
        prop_assert_eq!(gen_zipf(seed, &t, 0.5, 1 << 20).unwrap(), gen_zipf(seed, &t, 0.5, 1 << 20).unwrap());
    }
}

#[test]
fn adversarial_balancing_volume() {
    for m in [1usize, 2, 4, 8] {
        let t = Topology::new(4, m, 9.0, 1.0, 0.0).unwrap();
        let tile_bytes = 8 * 1_000;
        let d = gen_adversarial(&t, tile_bytes).unwrap();
        let plan = build_balance_plan(&d, &t).unwrap();
        let per_tile = (m as u64 - 1) * tile_bytes / m as u64;
        assert_eq!(plan.balanced_bytes(), 12 * per_tile);
        if m == 1 {
            assert!(plan.moves.is_empty());
        }
        let s = reduce_to_server_level(&d, &t).unwrap();
        assert!(a2a_sched::bounds::intra_assumption_holds(&s));
    }
}

#[test]
fn redistribution_schedule_rejects_foreign_stages() {
    let t = Topology::new(2, 2, 9.0, 1.0, 0.0).unwrap();
    let d = gen_uniform(1, &t, 100).unwrap();
    let f = synthesize_fast(&d, &t).unwrap();
    let mut doubled = f.stages.clone();
    doubled.extend(f.stages.iter().cloned());
    assert!(redistribution_schedule(&f.plan, &doubled).is_err());
}
