use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use lika_core::data::generate_synthetic;
use lika_core::models::{batch_loss_and_grad, init_model, predict_batch, Trainer};
use lika_core::{ModelSpec, Objective, Prior, Split, TemperaturePair, TrainConfig};
use ndarray::s;

fn model(c: &mut Criterion) {
    let ds = generate_synthetic(2000, 0).unwrap();
    let cfg = TrainConfig::default();
    let spec = ModelSpec::for_dataset(&ds, &cfg).unwrap();
    let params = init_model(&spec, 0);
    let x = ds.inputs.slice(s![..64, ..]);
    let y = ds.targets.slice(s![..64, ..]);
    let temps = TemperaturePair::splat(1.0);

    c.bench_function("loss_and_grad_batch64", |b| {
        b.iter(|| batch_loss_and_grad(&params, &spec, black_box(x), black_box(y), Objective::Lika, temps, Prior::Uniform, 0.0))
    });
    c.bench_function("predict_2000", |b| b.iter(|| predict_batch(&params, &spec, black_box(ds.inputs.view()))));

    let train = ds.subset(Split::Train);
    let scaler = lika_core::models::Standardizer::fit(&train.inputs, &train.targets);
    c.bench_function("epoch_n1400", |b| {
        b.iter_batched(
            || Trainer::new(&spec, &train, &cfg, scaler.clone(), 0).unwrap(),
            |mut t| t.run_epoch(2e-4, temps).unwrap(),
            BatchSize::LargeInput,
        )
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = model
}
criterion_main!(benches);
