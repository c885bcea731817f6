//! Whole-stack properties: init identity, mask isolation, 2D locality,
//! condition sensitivity and the finite-difference gradient oracle.

use candle_core::{DType, Tensor};

use super::attention::multihead;
use super::forward::{embed_tokens, forward_embedded, to_f64_vec};
use super::gradcheck::{gradient_check, GradCheckFixture};
use super::timestep::timestep_embedding;
use super::*;
use crate::tokenizer::TokenKind;

fn fixture() -> GradCheckFixture {
    GradCheckFixture::new(11).unwrap()
}

fn inputs(f: &GradCheckFixture, p: &ModelParams, ctx: &BatchContext) -> Tensor {
    Tensor::from_slice(
        &f.x_t,
        (2, ctx.video_len(), f.config.video_token_dim),
        p.device(),
    )
    .unwrap()
    .to_dtype(p.dtype())
    .unwrap()
}

fn bits(t: &Tensor) -> Vec<u64> {
    to_f64_vec(t)
        .unwrap()
        .into_iter()
        .map(f64::to_bits)
        .collect()
}

#[test]
fn fresh_init_blocks_are_identity_and_output_is_zero() {
    let f = fixture();
    for precision in [Precision::F32, Precision::F64] {
        let p = ModelParams::init(&f.config, precision, 5).unwrap();
        let ctx = BatchContext::new(&f.sequences, &p).unwrap();
        let h = embed_tokens(&p, &inputs(&f, &p, &ctx), &ctx).unwrap();
        let t_emb = timestep_embedding(&p, &f.t).unwrap();
        let text = p
            .tensor("text.embedding")
            .unwrap()
            .index_select(&Tensor::new(&[3u32, 8, 0, 0], p.device()).unwrap(), 0)
            .unwrap()
            .reshape((2, 2, f.config.text_dim))
            .unwrap();
        for layer in 0..f.config.n_layers {
            for triple in adaln_params(&t_emb, &p, layer).unwrap() {
                for t in [triple.scale, triple.shift, triple.gate] {
                    assert!(to_f64_vec(&t).unwrap().iter().all(|&v| v == 0.0));
                }
            }
            let out = fulldit_block(&h, &text, &t_emb, &p, layer, &ctx).unwrap();
            assert_eq!(bits(&out), bits(&h), "block {layer} is not the identity");
        }
        let y = model_forward(
            &p,
            ModelInput {
                x_t: &inputs(&f, &p, &ctx),
                t: &f.t,
                text_ids: &f.text_ids,
            },
            &ctx,
        )
        .unwrap();
        assert!(to_f64_vec(&y).unwrap().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn adaln_shapes() {
    let cfg = ModelConfig {
        d_model: 8,
        n_heads: 1,
        time_freq_dim: 8,
        ..ModelConfig::default()
    };
    let p = ModelParams::init(&cfg, Precision::F64, 0).unwrap();
    p.randomize(0.5, 1).unwrap();
    let t_emb = timestep_embedding(&p, &[0.2, 0.7]).unwrap();
    let triples = adaln_params(&t_emb, &p, 0).unwrap();
    assert_eq!(triples.len(), 4);
    for tr in &triples {
        assert_eq!(tr.scale.dims(), &[2, 1, 8]);
        assert_eq!(tr.gate.dims(), &[2, 1, 8]);
    }
    let g = to_f64_vec(&triples[0].gate).unwrap();
    assert_ne!(g[..8], g[8..]);
}

#[test]
fn padding_is_isolated() {
    let f = fixture();
    let p = f.params(3).unwrap();
    let ctx = BatchContext::new(&f.sequences, &p).unwrap();
    let h = embed_tokens(&p, &inputs(&f, &p, &ctx), &ctx).unwrap();
    let base = forward_embedded(&p, &h, &f.t, &f.text_ids, &ctx).unwrap();

    // Sample 1 is padded: overwrite its padding rows with ±1e3 values.
    let mut rows = to_f64_vec(&h).unwrap();
    let (l, d) = (ctx.seq_len(), f.config.d_model);
    let pad: Vec<usize> = (0..l).filter(|&i| !ctx.valid(1)[i]).collect();
    assert!(!pad.is_empty());
    for (k, &i) in pad.iter().enumerate() {
        for j in 0..d {
            rows[l * d + i * d + j] = if (k + j) % 2 == 0 { 1e3 } else { -1e3 };
        }
    }
    let h2 = Tensor::from_vec(rows, (2, l, d), p.device()).unwrap();
    let out = forward_embedded(&p, &h2, &f.t, &f.text_ids, &ctx).unwrap();
    let (a, b) = (to_f64_vec(&base).unwrap(), to_f64_vec(&out).unwrap());
    let max = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(max <= 1e-6, "padding leaked: {max}");
}

#[test]
fn two_d_sublayer_is_frame_local() {
    let f = fixture();
    let p = f.params(4).unwrap();
    let ctx = BatchContext::new(&f.sequences[..1], &p).unwrap();
    let seq = &f.sequences[0];
    let h = embed_tokens(&p, &inputs(&f, &p, &ctx).narrow(0, 0, 1).unwrap(), &ctx).unwrap();
    let w = p.attn("blocks.0.attn2d").unwrap();
    let run = |x: &Tensor| {
        multihead(
            x,
            x,
            &w,
            f.config.n_heads,
            Some(&ctx.bias_2d),
            Some((&ctx.rope_2d, &ctx.rope_2d)),
        )
        .unwrap()
        .squeeze(0)
        .unwrap()
        .to_vec2::<f64>()
        .unwrap()
    };
    let base = run(&h);
    // Perturb every token with t = 1 (video frame 1, its camera token, depth frame 1).
    let mut rows = h.squeeze(0).unwrap().to_vec2::<f64>().unwrap();
    for (i, c) in seq.coords.iter().enumerate() {
        if c[0] == 1 {
            rows[i].iter_mut().for_each(|v| *v += 7.5);
        }
    }
    let out = run(&Tensor::new(rows, p.device()).unwrap().unsqueeze(0).unwrap());
    for (i, c) in seq.coords.iter().enumerate() {
        if c[0] != 1 {
            assert_eq!(base[i], out[i], "token {i} at t={} changed", c[0]);
        } else {
            assert_ne!(base[i], out[i]);
        }
    }
}

#[test]
fn conditions_reach_video_tokens() {
    let f = fixture();
    let p = f.params(5).unwrap();
    let full = BatchContext::new(&f.sequences[..1], &p).unwrap();
    let x = inputs(&f, &p, &full).narrow(0, 0, 1).unwrap();
    let run = |ctx: &BatchContext| {
        to_f64_vec(
            &model_forward(
                &p,
                ModelInput {
                    x_t: &x,
                    t: &f.t[..1],
                    text_ids: &f.text_ids[..1],
                },
                ctx,
            )
            .unwrap(),
        )
        .unwrap()
    };
    let base = run(&full);
    let seq = &f.sequences[0];
    for drop in [TokenKind::Camera, TokenKind::Identity, TokenKind::Depth] {
        let keep = |k| (k != drop).then(|| seq.segment(k).cloned()).flatten();
        let reduced = crate::tokenizer::assemble_sequence(
            seq.segment(TokenKind::Video).unwrap().clone(),
            keep(TokenKind::Camera),
            keep(TokenKind::Identity),
            keep(TokenKind::Depth),
            None,
        )
        .unwrap();
        let ctx = BatchContext::new(&[reduced], &p).unwrap();
        let out = run(&ctx);
        let diff = base
            .iter()
            .zip(&out)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff > 1e-6, "dropping {drop:?} had no effect");
    }
}

#[test]
fn forward_is_deterministic_and_shape_preserving() {
    let f = fixture();
    let p = f.params(6).unwrap();
    let ctx = BatchContext::new(&f.sequences, &p).unwrap();
    let x = inputs(&f, &p, &ctx);
    let input = ModelInput {
        x_t: &x,
        t: &f.t,
        text_ids: &f.text_ids,
    };
    let a = model_forward(&p, input, &ctx).unwrap();
    let b = model_forward(&p, input, &ctx).unwrap();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a.dims(), &[2, ctx.video_len(), f.config.video_token_dim]);
    let h = embed_tokens(&p, &x, &ctx).unwrap();
    let text = Tensor::zeros((2, 3, f.config.text_dim), DType::F64, p.device()).unwrap();
    let t_emb = timestep_embedding(&p, &f.t).unwrap();
    assert_eq!(
        fulldit_block(&h, &text, &t_emb, &p, 1, &ctx)
            .unwrap()
            .dims(),
        h.dims()
    );
}

#[test]
fn rejects_bad_text_and_mismatched_inputs() {
    let f = fixture();
    let p = f.params(7).unwrap();
    let ctx = BatchContext::new(&f.sequences, &p).unwrap();
    let x = inputs(&f, &p, &ctx);
    let bad_vocab = vec![vec![99, 1], vec![1, 1]];
    let r = model_forward(
        &p,
        ModelInput {
            x_t: &x,
            t: &f.t,
            text_ids: &bad_vocab,
        },
        &ctx,
    );
    assert!(matches!(r, Err(ModelError::Shape(_))));
    let r = model_forward(
        &p,
        ModelInput {
            x_t: &x.narrow(1, 0, 2).unwrap(),
            t: &f.t,
            text_ids: &f.text_ids,
        },
        &ctx,
    );
    assert!(r.is_err());
}

#[test]
fn gradients_match_finite_differences() {
    let f = fixture();
    let p = f.params(8).unwrap();
    assert!(p.num_params() <= 5000, "{} params", p.num_params());
    let ctx = BatchContext::new(&f.sequences, &p).unwrap();
    let report = gradient_check(&p, |p| f.loss(p, &ctx), 1e-5, 1e-6).unwrap();
    assert_eq!(report.checked, p.num_params());
    assert!(report.max_rel_err <= 1e-4, "{report:?}");
}
