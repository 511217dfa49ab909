use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion, Throughput};
use kstore::{GlobalTaskStorage, Mode, StorageConfig, Strategy};

const BATCH: usize = 4096;

fn config(mode: Mode) -> StorageConfig {
    mode.apply(StorageConfig::default())
}

fn push_then_pop(c: &mut Criterion) {
    let mut group = c.benchmark_group("push_then_pop");
    group.throughput(Throughput::Elements(BATCH as u64));
    for mode in [Mode::RELAXED, Mode::STRICT] {
        for k in [0usize, 16, 1024] {
            group.bench_with_input(BenchmarkId::new(mode.label(), k), &k, |b, &k| {
                b.iter_batched(
                    || GlobalTaskStorage::<u64>::create(1, config(mode)).unwrap(),
                    |mut places| {
                        let place = &mut places[0];
                        for i in 0..BATCH as u64 {
                            place.push(Strategy::new((i * 7919 % 1000) as i64, k), i);
                        }
                        while place.pop().is_some() {}
                        places
                    },
                    BatchSize::SmallInput,
                );
            });
        }
    }
    group.finish();
}

// One place publishes, a second one scans and takes everything.
fn cross_place_scan(c: &mut Criterion) {
    let mut group = c.benchmark_group("cross_place_scan");
    group.throughput(Throughput::Elements(BATCH as u64));
    for mode in [Mode::RELAXED, Mode::STRICT] {
        group.bench_function(mode.label(), |b| {
            b.iter_batched(
                || {
                    let mut places = GlobalTaskStorage::<u64>::create(2, config(mode)).unwrap();
                    for i in 0..BATCH as u64 {
                        places[0].push(Strategy::new(0, 8), i);
                    }
                    places
                },
                |mut places| {
                    while places[1].pop().is_some() {}
                    places
                },
                BatchSize::SmallInput,
            );
        });
    }
    group.finish();
}

criterion_group!(storage, push_then_pop, cross_place_scan);
criterion_main!(storage);
