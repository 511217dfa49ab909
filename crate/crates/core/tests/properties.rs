use kstore::conformance::{stress, StressParams};
use kstore::workloads::{gp, sssp, BenchGraph};
use kstore::{GlobalTaskStorage, Mode, SchedulerConfig, StorageConfig, Strategy as TaskStrategy};
use proptest::prelude::*;

#[test]
fn two_places_thousand_pushes_fill_every_index() {
    let config = StorageConfig::default().with_block_size(16).with_audit(true);
    let mut places = GlobalTaskStorage::<u32>::create(2, config).unwrap();
    for i in 0..1000 {
        places[i % 2].push(TaskStrategy::new(0, 4), i as u32);
    }
    let tail = places[0].storage().observe_tail();
    for p in places.iter_mut() {
        p.update_heap();
        assert_eq!(p.head(), tail);
        assert_eq!(p.scan_stats().slots_scanned, tail as u64);
    }
    let mut seen: Vec<u32> = places
        .iter_mut()
        .flat_map(|p| std::iter::from_fn(|| p.pop()).collect::<Vec<_>>())
        .collect();
    seen.sort_unstable();
    assert_eq!(seen, (0..1000).collect::<Vec<_>>());
}

#[test]
fn single_place_pops_in_priority_order_for_any_k() {
    for k in [0, 3, 100] {
        let mut places = GlobalTaskStorage::<i64>::create(1, StorageConfig::default().with_block_size(8)).unwrap();
        let prios = [5, -2, 9, 0, 9, 3, 7, 1, -8, 4, 6, 2];
        for &p in &prios {
            places[0].push(TaskStrategy::new(p, k), p);
        }
        let popped: Vec<i64> = std::iter::from_fn(|| places[0].pop()).collect();
        let mut expected = prios.to_vec();
        expected.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(popped, expected, "k={k}");
    }
}

#[derive(Clone, Debug)]
enum Op {
    Push { place: usize, priority: i64, k: usize },
    Pop { place: usize },
}

fn op(places: usize) -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (0..places, -50i64..50, 0usize..6).prop_map(|(place, priority, k)| Op::Push { place, priority, k }),
        2 => (0..places).prop_map(|place| Op::Pop { place }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Any sequential interleaving across places: every pushed payload is
    /// popped exactly once, heads never pass the tail, the tail never
    /// shrinks, and block epochs stay balanced.
    #[test]
    fn interleaved_ops_are_exactly_once(
        places_n in 1usize..4,
        block_size in 2usize..6,
        mode in 0usize..4,
        ops in prop::collection::vec(op(3), 0..200),
    ) {
        let config = Mode::ALL[mode].apply(StorageConfig::default().with_block_size(block_size).with_audit(true));
        let mut places = GlobalTaskStorage::<u32>::create(places_n, config).unwrap();
        let storage = places[0].storage_handle();
        let mut pushed = 0u32;
        let mut popped = Vec::new();
        let mut last_tail = 0;
        for op in ops {
            match op {
                Op::Push { place, priority, k } => {
                    places[place % places_n].push(TaskStrategy::new(priority, k), pushed);
                    pushed += 1;
                }
                Op::Pop { place } => popped.extend(places[place % places_n].pop()),
            }
            let tail = storage.observe_tail();
            prop_assert!(tail >= last_tail);
            last_tail = tail;
            for p in &places {
                prop_assert!(p.head() <= tail);
            }
        }
        for p in places.iter_mut() {
            while let Some(v) = p.pop() {
                popped.push(v);
            }
        }
        popped.sort_unstable();
        prop_assert_eq!(popped, (0..pushed).collect::<Vec<_>>());
        for h in storage.block_histories() {
            prop_assert_eq!(h.violations, 0);
            prop_assert!(h.links == h.cleanups || h.links == h.cleanups + 1, "{:?}", h);
        }
    }

    #[test]
    fn sssp_parallel_matches_dijkstra(
        n in 1usize..80, p in 0.0f64..0.3, seed in any::<u64>(), k in 0usize..64, threads in 1usize..4,
    ) {
        let graph = BenchGraph::generate(n, p, 1000, seed).unwrap();
        let cfg = SchedulerConfig::from(StorageConfig::default().with_block_size(16));
        let run = sssp::parallel(&graph, 0, k, threads, &cfg).unwrap();
        prop_assert_eq!(run.dist, sssp::sequential(&graph, 0).unwrap());
    }

    #[test]
    fn gp_parallel_matches_enumeration(
        n in 1usize..11, p in 0.0f64..=1.0, seed in any::<u64>(), k in 0usize..16, threads in 1usize..4,
    ) {
        let graph = BenchGraph::generate(n, p, 100, seed).unwrap();
        let cfg = SchedulerConfig::from(StorageConfig::default().with_block_size(16));
        let run = gp::parallel(&graph, threads, k, &cfg).unwrap();
        prop_assert_eq!(run.best, gp::sequential(&graph).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn threaded_stress_passes_audit(
        threads in 1usize..5, items in 1usize..400, k in 0usize..8, block_size in 2usize..10, seed in any::<u64>(),
    ) {
        let report = stress(&StressParams::new(threads, items, k, block_size).with_seed(seed)).unwrap();
        prop_assert!(report.passed(), "{:?}", report);
    }
}
