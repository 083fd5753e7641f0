use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gda_hin::autograd::Tape;
use gda_hin::exec::Exec;
use gda_hin::extractor::{Extractor, GraphView, HgtConfig};
use gda_hin::hin::{generate_synthetic_pair, restrict_to_shared, SyntheticConfig};
use gda_hin::params::{gaussian, ParamStore};
use gda_hin::trainer::{Model, Phase, PseudoLabelSet, TrainConfig, Trainer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn attention(c: &mut Criterion) {
    let syn = SyntheticConfig {
        papers: 2000,
        authors: 2000,
        venues: 200,
        ..SyntheticConfig::default()
    };
    let pair = generate_synthetic_pair(&syn, 0).unwrap();
    let g = &pair.source;
    let view = GraphView::identity(g);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    let cfg = HgtConfig {
        dropout: 0.0,
        ..HgtConfig::default()
    };
    let mut ex = Extractor::new(cfg).unwrap();
    ex.register(&mut store, &mut rng, &view);
    let inputs: Vec<_> = view
        .type_names()
        .map(|t| gaussian(&mut rng, (g.count(t), cfg.hidden_dim), 1.0))
        .collect();

    let mut group = c.benchmark_group("attention_forward_backward");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let mut tape = Tape::with_exec(exec);
                let vars: Vec<_> = inputs.iter().map(|m| tape.constant(m.clone())).collect();
                let out = ex
                    .forward_on_tape::<ChaCha8Rng>(&mut tape, &store, &view, &vars, None)
                    .unwrap();
                let parts: Vec<_> = out
                    .iter()
                    .map(|&o| {
                        let z = std::sync::Arc::new(gda_hin::Matrix::zeros(tape.value(o).dim()));
                        tape.sum_squared_diff(o, z)
                    })
                    .collect();
                let loss = tape.sum(&parts);
                tape.backward(loss)
            })
        });
    }
    group.finish();
}

fn training_step(c: &mut Criterion) {
    let pair = restrict_to_shared(
        &generate_synthetic_pair(&SyntheticConfig::default(), 0)
            .unwrap()
            .without_target_labels(),
    );
    let cfg = TrainConfig::default();
    let mut group = c.benchmark_group("phase_one_step");
    group.sample_size(10);
    for (name, exec) in MODES {
        let mut model = Model::build(&pair, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        model.exec = exec;
        let mut trainer = Trainer::new(
            model,
            Phase::One,
            PseudoLabelSet::default(),
            1000,
            ChaCha8Rng::seed_from_u64(3),
        );
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| trainer.step().unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, attention, training_step);
criterion_main!(benches);
