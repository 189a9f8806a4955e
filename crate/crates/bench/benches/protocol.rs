use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qpc_bench::{unequal_pair, VARIANTS};
use qpc_core::quantum::{bell_measure_pair, z_measure_pair};
use qpc_core::rng::stream;
use qpc_core::{
    active_attack, build_upsilon, exact_false_equal, run_protocol, BitPair, EveModel,
    ProtocolConfig,
};

fn carrier(c: &mut Criterion) {
    c.bench_function("build_upsilon", |b| b.iter(build_upsilon));
    c.bench_function("measure_one_carrier", |b| {
        let mut rng = stream(1, 0);
        b.iter(|| {
            let (m_a, s) = z_measure_pair(build_upsilon(), 0, 1, &mut rng).unwrap();
            let (m_b, s) = z_measure_pair(s, 2, 3, &mut rng).unwrap();
            let (m_c, _) = bell_measure_pair(s, 4, 5, &mut rng).unwrap();
            black_box((m_a, m_b, m_c))
        })
    });
}

fn protocol(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_protocol");
    for variant in VARIANTS {
        for bits in [8u32, 64] {
            let (x, y) = unequal_pair(bits);
            let mut seed = 0u64;
            group.bench_with_input(
                BenchmarkId::new(variant.to_string(), bits),
                &bits,
                |b, &bits| {
                    b.iter(|| {
                        seed += 1;
                        let cfg = ProtocolConfig::new(variant, bits, seed);
                        run_protocol(x, y, cfg, EveModel::None).unwrap()
                    })
                },
            );
        }
    }
    group.finish();

    c.bench_function("active_attack/original/8", |b| {
        let (x, y) = unequal_pair(8);
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            active_attack(
                x,
                y,
                ProtocolConfig::new(qpc_core::Variant::Original, 8, seed),
            )
            .unwrap()
        })
    });
}

fn oracle(c: &mut Criterion) {
    let mut group = c.benchmark_group("exact_false_equal");
    for g in [4usize, 8, 10] {
        let d = vec![BitPair::ALL[3]; g];
        group.bench_with_input(BenchmarkId::from_parameter(g), &d, |b, d| {
            b.iter(|| exact_false_equal(black_box(d)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, carrier, protocol, oracle);
criterion_main!(benches);
