use criterion::{black_box, criterion_group, criterion_main, Criterion};
use usadapt::autograd::Tape;
use usadapt::imaging::{masked_histogram, BackgroundMask};
use usadapt::metrics::{bhattacharyya, ssim};
use usadapt::netarch::{Generator, GeneratorConfig};
use usadapt::synthdata::{generate_phantom, PhantomSpec};
use usadapt::tensor::Tensor;
use usadapt::trainer::{TrainState, TrainingConfig};
use usadapt_bench::pattern;

fn conv(c: &mut Criterion) {
    let x = Tensor::<f32>::full(&[32, 64, 64], 0.1);
    let w = Tensor::<f32>::full(&[32, 32, 3, 3], 0.01);
    c.bench_function("conv2d 32x64x64 k3", |b| {
        b.iter(|| {
            let mut t = Tape::new();
            let xv = t.constant(x.clone());
            let wv = t.constant(w.clone());
            let y = t.conv2d(xv, wv, None, 1, 1).unwrap();
            black_box(t.value(y).data()[0])
        })
    });
}

fn generator(c: &mut Criterion) {
    let g = Generator::<f32>::new(GeneratorConfig { base_filters: 8, residual_blocks: 9 }, 1).unwrap();
    let img = pattern(64, 64, 0.3);
    c.bench_function("generator forward 64x64 f8", |b| b.iter(|| black_box(g.translate_image(&img).unwrap())));
}

fn train_step(c: &mut Criterion) {
    let cfg = TrainingConfig { image_size: 64, base_filters: 8, ..Default::default() };
    let mut state = TrainState::<f32>::new(&cfg).unwrap();
    let (x, y) = (pattern(64, 64, 0.1), pattern(64, 64, 1.7));
    c.bench_function("train_step 64x64 f8", |b| b.iter(|| black_box(state.train_step_images(&x, &y, 0, &cfg).unwrap())));
}

fn metrics(c: &mut Criterion) {
    let (a, b) = (pattern(400, 400, 0.0), pattern(400, 400, 0.5));
    c.bench_function("ssim 400x400", |bench| bench.iter(|| black_box(ssim(&a, &b, None).unwrap().0)));
    let mask = BackgroundMask::full(400, 400);
    let (ha, hb) = (masked_histogram(&a, &mask, 256).unwrap(), masked_histogram(&b, &mask, 256).unwrap());
    c.bench_function("bhattacharyya 256 bins", |bench| bench.iter(|| black_box(bhattacharyya(&ha, &hb).unwrap())));
}

fn phantom(c: &mut Criterion) {
    let spec = PhantomSpec::default();
    c.bench_function("generate_phantom 64x64", |b| b.iter(|| black_box(generate_phantom(&spec).unwrap())));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = conv, generator, train_step, metrics, phantom
}
criterion_main!(benches);
