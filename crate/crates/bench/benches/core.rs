use aqua_core::data::{generate_synthetic_scene, standardize, NormStats, SyntheticConfig};
use aqua_core::losses::{dwt2, idwt2, WaveletFamily};
use aqua_core::losses::{total_regression_loss, RegressionLossConfig};
use aqua_core::metrics::{persistence_predict, PersistenceConvention, TaskEvaluator};
use aqua_core::model::{Actu, ModelBatch, ModelConfig};
use aqua_core::Task;
use candle_core::{DType, Device, Tensor};
use criterion::{black_box, criterion_group, criterion_main, Criterion};
use ndarray::Array2;

fn wave(h: usize, w: usize) -> Array2<f64> {
    Array2::from_shape_fn((h, w), |(y, x)| ((y * 7 + x * 3) as f64 * 0.37).sin())
}

fn bench_dwt(c: &mut Criterion) {
    let g = wave(64, 64);
    c.bench_function("dwt2 haar 64x64 x2", |b| b.iter(|| dwt2(black_box(&g), 2, WaveletFamily::Haar).unwrap()));
    let dec = dwt2(&g, 2, WaveletFamily::Haar).unwrap();
    c.bench_function("idwt2 haar 64x64 x2", |b| b.iter(|| idwt2(black_box(&dec))));

    let dev = Device::Cpu;
    let p = Tensor::from_vec(wave(64, 64).into_raw_vec_and_offset().0, (8, 1, 32, 16), &dev).unwrap();
    let t = (&p * 0.5).unwrap();
    let cfg = RegressionLossConfig::default();
    c.bench_function("total regression loss 8x32x16", |b| b.iter(|| total_regression_loss(black_box(&p), &t, None, &cfg).unwrap()));
}

fn bench_metrics(c: &mut Criterion) {
    let cfg = SyntheticConfig::default();
    let rec = generate_synthetic_scene(&cfg, 1).unwrap();
    let pred = persistence_predict(&rec.scene, Task::Magnitude, 0.1, PersistenceConvention::TargetAligned).unwrap();
    c.bench_function("magnitude evaluator 64x64", |b| {
        b.iter(|| {
            let mut ev = TaskEvaluator::new(Task::Magnitude);
            ev.add("s", black_box(&pred), &rec.targets).unwrap();
            ev.report("m")
        })
    });
    let cls = persistence_predict(&rec.scene, Task::Direction, 0.1, PersistenceConvention::TargetAligned).unwrap();
    c.bench_function("direction evaluator 64x64", |b| {
        b.iter(|| {
            let mut ev = TaskEvaluator::new(Task::Direction);
            ev.add("s", black_box(&cls), &rec.targets).unwrap();
            ev.report("m")
        })
    });
}

fn bench_forward(c: &mut Criterion) {
    let scfg = SyntheticConfig::default();
    let recs: Vec<_> = (0..4).map(|s| generate_synthetic_scene(&scfg, s).unwrap()).collect();
    let stats = NormStats::fit(&recs).unwrap();
    let inputs: Vec<_> = recs.iter().map(|r| standardize(r, &stats).unwrap()).collect();
    let refs: Vec<_> = inputs.iter().collect();
    let dev = Device::Cpu;
    let batch = ModelBatch::from_inputs(&refs, &dev, DType::F32).unwrap();
    let model = Actu::new(ModelConfig::default(), 0, DType::F32, &dev).unwrap();
    let mut g = c.benchmark_group("actu");
    g.sample_size(10);
    g.bench_function("forward 4x5x64x64", |b| b.iter(|| model.forward(black_box(&batch)).unwrap()));
    g.bench_function("forward+backward 4x5x64x64", |b| {
        b.iter(|| model.forward(&batch).unwrap().sqr().unwrap().mean_all().unwrap().backward().unwrap())
    });
    g.finish();
}

criterion_group!(benches, bench_dwt, bench_metrics, bench_forward);
criterion_main!(benches);
