use criterion::{criterion_group, criterion_main, Criterion};
use ecl_bench::{background, cube_rules, inclusion};
use ecl_core::linearization::{cosine_density, Linearization};
use ecl_core::operators::{newton_spectrum, ShiftedNeumann};

fn pipelines(c: &mut Criterion) {
    let bg = background();
    let rule = inclusion(3);
    let mut g = c.benchmark_group("pipelines");
    g.sample_size(10);
    g.bench_function("newton_spectrum_res3", |b| b.iter(|| newton_spectrum(&rule, &bg, 8)));
    let (vol, bdry) = cube_rules(4, 4);
    g.bench_function("shifted_neumann_cube_4_4", |b| {
        b.iter(|| ShiftedNeumann::new(&vol, &bdry, &bg, 10.0))
    });
    let sn = ShiftedNeumann::new(&vol, &bdry, &bg, 10.0).expect("shifted Neumann operators");
    g.bench_function("linearization_setup_cube_4_4", |b| {
        b.iter(|| Linearization::new(sn.clone(), cosine_density, 1.0))
    });
    g.finish();
}

criterion_group!(benches, pipelines);
criterion_main!(benches);
