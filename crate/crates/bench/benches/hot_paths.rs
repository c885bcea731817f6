//! Throughput of the per-pixel and per-token hot paths at toy and paper sizes.

use candle_core::{Device, Tensor};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use fulldit::diffusion::FlowConfig;
use fulldit::geometry::{plucker_embedding, rot_y, rot_z, CameraIntrinsics, CameraPose};
use fulldit::model::{
    attention, model_forward, AttnMode, BatchContext, ModelConfig, ModelInput, ModelParams,
    Precision, RopeAxes, RopeSpec,
};
use fulldit::synthbench::{encode_sample, generate_videos, sample_seeded, ToyWorldSpec};
use fulldit::tokenizer::{CodecConfig, ConditionSet, Tokenizer};
use nalgebra::Vector3;
use ndarray::Array4;

fn pose() -> CameraPose {
    CameraPose::new(rot_z(0.2) * rot_y(-0.4), Vector3::new(0.3, -0.1, 1.5)).unwrap()
}

fn plucker(c: &mut Criterion) {
    let mut group = c.benchmark_group("plucker_embedding");
    for (h, w) in [(16, 16), (64, 64), (384, 672)] {
        let k = CameraIntrinsics::new(w as f64, w as f64, w as f64 / 2.0, h as f64 / 2.0, w, h)
            .unwrap();
        let p = pose();
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{h}x{w}")),
            &k,
            |b, k| {
                b.iter(|| black_box(plucker_embedding(&p, k).unwrap()));
            },
        );
    }
    group.finish();
}

fn tokenizer(c: &mut Criterion) {
    let mut group = c.benchmark_group("tokenize_pixels");
    let paper = Tokenizer::new(CodecConfig::paper()).unwrap();
    for (n, h, w) in [(5, 64, 64), (9, 128, 128)] {
        let video = Array4::<f32>::from_shape_fn((n, h, w, 3), |(t, y, x, ch)| {
            ((t + y * 3 + x * 7 + ch) % 11) as f32 / 10.0
        });
        group.bench_with_input(
            BenchmarkId::new("paper", format!("{n}x{h}x{w}")),
            &video,
            |b, v| {
                b.iter(|| black_box(paper.tokenize_depth(v).unwrap()));
            },
        );
    }
    group.finish();
}

fn toy_model() -> (ToyWorldSpec, Tokenizer, ModelParams) {
    let spec = ToyWorldSpec::default();
    let tok = Tokenizer::with_patches(CodecConfig::unit(), 4, 16).unwrap();
    let cfg = ModelConfig {
        d_model: 64,
        n_heads: 4,
        n_layers: 2,
        d_ff: 256,
        text_vocab: spec.text_vocab(),
        text_dim: 32,
        rope_base: 100.0,
        time_freq_dim: 64,
        video_token_dim: tok.latent_token_dim(),
        camera_token_dim: tok.camera_token_dim(),
    };
    let params = ModelParams::init(&cfg, Precision::F32, 0).unwrap();
    params.randomize(0.1, 1).unwrap();
    (spec, tok, params)
}

fn forward(c: &mut Criterion) {
    let (spec, tok, params) = toy_model();
    let mut group = c.benchmark_group("model_forward");
    for batch in [1, 8, 32] {
        let items: Vec<_> = (0..batch as u64)
            .map(|i| {
                encode_sample(&tok, &sample_seeded(&spec, i).unwrap(), ConditionSet::FULL).unwrap()
            })
            .collect();
        let seqs: Vec<_> = items.iter().map(|it| it.assemble(None).unwrap()).collect();
        let ctx = BatchContext::new(&seqs, &params).unwrap();
        let x: Vec<f32> = items
            .iter()
            .flat_map(|it| it.video.features.iter().copied())
            .collect();
        let x = Tensor::from_vec(
            x,
            (batch, ctx.video_len(), tok.latent_token_dim()),
            &Device::Cpu,
        )
        .unwrap();
        let t = vec![0.5; batch];
        let text: Vec<Vec<u32>> = items.iter().map(|it| it.text.clone()).collect();
        group.bench_with_input(BenchmarkId::from_parameter(batch), &batch, |b, _| {
            b.iter(|| {
                let input = ModelInput {
                    x_t: &x,
                    t: &t,
                    text_ids: &text,
                };
                black_box(model_forward(&params, input, &ctx).unwrap())
            });
        });
    }
    group.finish();
}

fn attention_modes(c: &mut Criterion) {
    let (_, _, params) = toy_model();
    let w = params.attn("blocks.0.attn3d").unwrap();
    let mut group = c.benchmark_group("attention");
    for len in [64, 256] {
        let x = Tensor::randn(0f32, 1.0, (len, 64), &Device::Cpu).unwrap();
        let coords: Vec<[i32; 3]> = (0..len as i32)
            .map(|i| [i / 16, (i / 4) % 4, i % 4])
            .collect();
        let mask = vec![true; len];
        for (name, mode, axes) in [
            ("full-3d", AttnMode::Full, RopeAxes::ThreeD),
            ("per-frame-2d", AttnMode::PerFrame, RopeAxes::TwoD),
        ] {
            let rope = RopeSpec {
                q_coords: &coords,
                k_coords: &coords,
                axes,
                base: 100.0,
            };
            group.bench_with_input(BenchmarkId::new(name, len), &x, |b, x| {
                b.iter(|| black_box(attention(x, x, &mask, &w, 4, mode, Some(rope)).unwrap()));
            });
        }
    }
    group.finish();
}

fn sampling(c: &mut Criterion) {
    let (spec, tok, params) = toy_model();
    let items: Vec<_> = (0..8u64)
        .map(|i| {
            encode_sample(&tok, &sample_seeded(&spec, i).unwrap(), ConditionSet::FULL).unwrap()
        })
        .collect();
    let flow = FlowConfig {
        n_steps: 10,
        cfg_scale: 2.0,
        ..FlowConfig::default()
    };
    let mut group = c.benchmark_group("generate_videos");
    group.sample_size(10);
    group.bench_function("batch8_steps10_cfg", |b| {
        b.iter(|| black_box(generate_videos(&params, &tok, &spec, &items, &flow, 7).unwrap()));
    });
    group.finish();
}

fn rendering(c: &mut Criterion) {
    let spec = ToyWorldSpec::default();
    c.bench_function("render_toy_sample", |b| {
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            black_box(sample_seeded(&spec, seed).unwrap())
        });
    });
}

criterion_group!(
    benches,
    plucker,
    tokenizer,
    forward,
    attention_modes,
    sampling,
    rendering
);
criterion_main!(benches);
