use std::hint::black_box;

use copula_eda::copula::{tau_to_parameter, CopulaFamily};
use copula_eda::dependence::{gof_select_copula, indep_test_cvm, kendall_tau, pseudo_observations};
use copula_eda_bench::{dependent_population, rng};
use criterion::{criterion_group, criterion_main, Criterion};

const FAMILIES: [CopulaFamily; 5] = [
    CopulaFamily::Normal,
    CopulaFamily::Student,
    CopulaFamily::Clayton,
    CopulaFamily::Frank,
    CopulaFamily::Gumbel,
];

fn h_functions(c: &mut Criterion) {
    let mut group = c.benchmark_group("h_inverse");
    for family in FAMILIES {
        let copula = tau_to_parameter(family, 0.5).unwrap();
        let copula = if family == CopulaFamily::Student {
            copula_eda::BivariateCopula::student(0.7071, 5.0).unwrap()
        } else {
            copula
        };
        group.bench_function(family.name(), |b| {
            b.iter(|| {
                let mut acc = 0.0;
                for i in 1..20 {
                    let p = i as f64 / 20.0;
                    acc += copula.hinv(black_box(p), 0.3).unwrap();
                }
                acc
            })
        });
    }
    group.finish();
}

fn pair_estimation(c: &mut Criterion) {
    let pop = dependent_population(300, 2, 7);
    let u = pseudo_observations(&[pop.column(0), pop.column(1)]).unwrap();
    let (a, b) = (u.column(0).to_vec(), u.column(1).to_vec());
    c.bench_function("kendall_tau_300", |bch| bch.iter(|| kendall_tau(black_box(&a), black_box(&b)).unwrap()));
    c.bench_function("gof_select_300", |bch| {
        bch.iter(|| gof_select_copula(black_box(&a), black_box(&b), &FAMILIES).unwrap())
    });
    c.bench_function("indep_test_300", |bch| {
        let mut r = rng(3);
        bch.iter(|| indep_test_cvm(black_box(&a), black_box(&b), 100, 0.01, &mut r).unwrap())
    });
}

criterion_group!(benches, h_functions, pair_estimation);
criterion_main!(benches);
