use super::*;
use crate::rng::Rng;
use crate::tensor::{finite_difference, max_rel_err, Tape};

fn toy_cfg(use_dynamic: bool) -> ModelConfig {
    ModelConfig {
        src_vocab: 7,
        tgt_vocab: 8,
        embed_dim: 4,
        hidden_dim: 3,
        mem_dim: 2,
        window: 1,
        use_dynamic,
    }
}

fn zero_params(cfg: ModelConfig) -> ModelParams<f32> {
    let mut p = ModelParams::init(cfg, 0).unwrap();
    for (_, t) in p.visit_mut() {
        t.data_mut().fill(0.0);
    }
    p
}

// ── scalar oracle: the attention equations evaluated with plain loops ──

/// Direct 64-bit evaluation of the addressing equations: score position i
/// by v·tanh(W[h_i, d_i] + U s), normalize by softmax, read the context as
/// the weighted sum of annotations.
struct AttentionOracle {
    weights: Vec<f64>,
    context: Vec<f64>,
}

fn attention_oracle(
    params: &ModelParams<f64>,
    annotations: &[Vec<f64>],
    dmem: Option<&[Vec<f64>]>,
    decoder_hidden: &[f64],
) -> AttentionOracle {
    let a = params.cfg.attn_dim();
    let key_dim = params.cfg.attn_key_dim();
    let w_a = params.w_attn.data();
    let u_a = params.u_attn.data();
    let v_a = params.v_attn.data();
    let n = params.cfg.hidden_dim;

    let mut scores = Vec::with_capacity(annotations.len());
    for (i, ann) in annotations.iter().enumerate() {
        let mut key: Vec<f64> = ann.clone();
        if let Some(dm) = dmem {
            key.extend_from_slice(&dm[i]);
        }
        assert_eq!(key.len(), key_dim);
        let mut e = 0.0;
        for row in 0..a {
            let mut act = 0.0;
            for (j, &kj) in key.iter().enumerate() {
                act += w_a[row * key_dim + j] * kj;
            }
            for (j, &sj) in decoder_hidden.iter().enumerate().take(n) {
                act += u_a[row * n + j] * sj;
            }
            e += v_a[row] * act.tanh();
        }
        scores.push(e);
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let denom: f64 = exps.iter().sum();
    let weights: Vec<f64> = exps.iter().map(|&e| e / denom).collect();

    let dim = annotations[0].len();
    let mut context = vec![0.0; dim];
    for (ann, &w) in annotations.iter().zip(&weights) {
        for (c, &h) in context.iter_mut().zip(ann.iter()) {
            *c += w * h;
        }
    }
    AttentionOracle { weights, context }
}

fn read_vec(tape: &Tape<f32>, v: Var) -> Vec<f64> {
    tape.value(v).iter().map(|&x| x as f64).collect()
}

// ── encode ──────────────────────────────────────────────────────────────

#[test]
fn encode_single_position_concatenates_both_directions() {
    let params = ModelParams::<f32>::init(toy_cfg(false), 11).unwrap();
    let mut tape = Tape::new();
    let mut fwd = Forward::new(&mut tape, &params);
    let ctx = fwd.encode(&[5]).unwrap();
    assert_eq!(ctx.len(), 1);
    let got = tape.value(ctx.annotations[0]).to_vec();

    // reference: one forward and one backward LSTM step from zero states
    let mut tape2 = Tape::<f32>::new();
    let vars = params.register(&mut tape2);
    let x = tape2.row(vars.src_embed, 5).unwrap();
    let h0 = tape2.zero_vector(3);
    let c0 = tape2.zero_vector(3);
    let (hf, _) = tape2.lstm_cell(&vars.enc_fwd, x, h0, c0).unwrap();
    let h0b = tape2.zero_vector(3);
    let c0b = tape2.zero_vector(3);
    let (hb, _) = tape2.lstm_cell(&vars.enc_bwd, x, h0b, c0b).unwrap();
    let expected: Vec<f32> = tape2
        .value(hf)
        .iter()
        .chain(tape2.value(hb).iter())
        .copied()
        .collect();
    assert_eq!(got, expected);
}

#[test]
fn encode_zero_weights_gives_zero_annotations() {
    let params = zero_params(toy_cfg(false));
    let mut tape = Tape::new();
    let mut fwd = Forward::new(&mut tape, &params);
    let ctx = fwd.encode(&[1, 2, 3]).unwrap();
    for &ann in &ctx.annotations {
        assert!(tape.value(ann).iter().all(|&v| v == 0.0));
    }
}

#[test]
fn encode_rejects_out_of_vocabulary_ids() {
    let params = ModelParams::<f32>::init(toy_cfg(false), 1).unwrap();
    let mut tape = Tape::new();
    let mut fwd = Forward::new(&mut tape, &params);
    assert!(matches!(fwd.encode(&[7]), Err(Error::Contract(_))));
    assert!(matches!(fwd.encode(&[]), Err(Error::Contract(_))));
}

#[test]
fn encode_direction_symmetry_under_reversal() {
    // Forward annotations of x equal backward annotations of reverse(x)
    // once the weight roles are swapped.
    let params = ModelParams::<f32>::init(toy_cfg(false), 23).unwrap();
    let mut swapped = params.clone();
    std::mem::swap(&mut swapped.enc_fwd, &mut swapped.enc_bwd);

    let ids = [1usize, 4, 2, 6, 3];
    let reversed: Vec<usize> = ids.iter().rev().copied().collect();
    let n = params.cfg.hidden_dim;

    let mut tape_a = Tape::new();
    let mut fwd_a = Forward::new(&mut tape_a, &params);
    let ctx_a = fwd_a.encode(&ids).unwrap();

    let mut tape_b = Tape::new();
    let mut fwd_b = Forward::new(&mut tape_b, &swapped);
    let ctx_b = fwd_b.encode(&reversed).unwrap();

    let s = ids.len();
    for i in 0..s {
        let fwd_half = &tape_a.value(ctx_a.annotations[i])[..n];
        let bwd_half = &tape_b.value(ctx_b.annotations[s - 1 - i])[n..];
        for (a, b) in fwd_half.iter().zip(bwd_half.iter()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}

// ── baseline attention ──────────────────────────────────────────────────

#[test]
fn attend_baseline_uniform_when_scorer_is_zero() {
    let mut params = ModelParams::<f32>::init(toy_cfg(false), 3).unwrap();
    params.v_attn.data_mut().fill(0.0);
    let mut tape = Tape::new();
    let mut fwd = Forward::new(&mut tape, &params);
    let ctx = fwd.encode(&[1, 2, 3, 4]).unwrap();
    let state = fwd.start_decoder(&ctx).unwrap();
    let attn = fwd.attend_baseline(&ctx, state.hidden).unwrap();
    for &w in tape.value(attn.weights) {
        assert!((w - 0.25).abs() < 1e-7);
    }
    // context is then the plain mean of annotations
    let mean: Vec<f32> = (0..ctx.len())
        .map(|i| tape.value(ctx.annotations[i]).to_vec())
        .fold(vec![0.0; 6], |mut acc, ann| {
            for (a, v) in acc.iter_mut().zip(ann) {
                *a += v / 4.0;
            }
            acc
        });
    for (c, m) in tape.value(attn.context).iter().zip(mean) {
        assert!((c - m).abs() < 1e-6);
    }
}

#[test]
fn attend_singleton_reads_the_annotation() {
    let params = ModelParams::<f32>::init(toy_cfg(false), 5).unwrap();
    let mut tape = Tape::new();
    let mut fwd = Forward::new(&mut tape, &params);
    let ctx = fwd.encode(&[2]).unwrap();
    let state = fwd.start_decoder(&ctx).unwrap();
    let attn = fwd.attend_baseline(&ctx, state.hidden).unwrap();
    assert_eq!(tape.value(attn.weights), &[1.0]);
    assert_eq!(tape.value(attn.context), tape.value(ctx.annotations[0]));
}

#[test]
fn attend_baseline_matches_scalar_oracle() {
    let params = ModelParams::<f32>::init(toy_cfg(false), 17).unwrap();
    let mut tape = Tape::new();
    let mut fwd = Forward::new(&mut tape, &params);
    let ctx = fwd.encode(&[1, 5, 3]).unwrap();
    let state = fwd.start_decoder(&ctx).unwrap();
    let attn = fwd.attend_baseline(&ctx, state.hidden).unwrap();

    let annotations: Vec<Vec<f64>> = ctx
        .annotations
        .iter()
        .map(|&a| read_vec(&tape, a))
        .collect();
    let hidden = read_vec(&tape, state.hidden);
    let oracle = attention_oracle(&params.cast::<f64>(), &annotations, None, &hidden);

    for (got, want) in tape.value(attn.weights).iter().zip(&oracle.weights) {
        assert!((*got as f64 - want).abs() < 1e-5, "{got} vs {want}");
    }
    for (got, want) in tape.value(attn.context).iter().zip(&oracle.context) {
        assert!((*got as f64 - want).abs() < 1e-5, "{got} vs {want}");
    }
}

#[test]
fn attend_baseline_on_dynamic_model_is_a_contract_error() {
    let params = ModelParams::<f32>::init(toy_cfg(true), 1).unwrap();
    let mut tape = Tape::new();
    let mut fwd = Forward::new(&mut tape, &params);
    let ctx = fwd.encode(&[1]).unwrap();
    let state = fwd.start_decoder(&ctx).unwrap();
    assert!(matches!(
        fwd.attend_baseline(&ctx, state.hidden),
        Err(Error::Contract(_))
    ));
}

// ── dynamic memory ──────────────────────────────────────────────────────

#[test]
fn attention_windows_radius_zero_is_the_weight_itself() {
    let mut cfg = toy_cfg(true);
    cfg.window = 0;
    let params = ModelParams::<f32>::init(cfg, 2).unwrap();
    let mut tape = Tape::new();
    let mut fwd = Forward::new(&mut tape, &params);
    let w = fwd.tape().leaf_vector(vec![0.2, 0.8]);
    let wins = fwd.attention_windows(w, 2, 2).unwrap();
    assert_eq!(tape.value(wins[0]), &[0.2]);
    assert_eq!(tape.value(wins[1]), &[0.8]);
}

#[test]
fn attention_windows_zero_pad_at_boundaries() {
    let params = ModelParams::<f32>::init(toy_cfg(true), 2).unwrap(); // k = 1
    let mut tape = Tape::new();
    let mut fwd = Forward::new(&mut tape, &params);
    let (a, b, c) = (0.5f32, 0.3, 0.2);
    let w = fwd.tape().leaf_vector(vec![a, b, c]);
    let wins = fwd.attention_windows(w, 3, 3).unwrap();
    assert_eq!(tape.value(wins[0]), &[0.0, a, b]);
    assert_eq!(tape.value(wins[1]), &[a, b, c]);
    assert_eq!(tape.value(wins[2]), &[b, c, 0.0]);
}

#[test]
fn dynamic_memory_state_evolves_across_updates() {
    let params = ModelParams::<f32>::init(toy_cfg(true), 31).unwrap();
    let mut tape = Tape::new();
    let mut fwd = Forward::new(&mut tape, &params);
    let ctx = fwd.encode(&[1, 2, 3]).unwrap();
    let d0 = fwd.start_dynamic_memory(&ctx).unwrap();
    let w = fwd.tape().leaf_vector(vec![0.5f32, 0.25, 0.25]);
    let d1 = fwd.update_dynamic_memory(&d0, Some(w), &ctx).unwrap();
    let d2 = fwd.update_dynamic_memory(&d1, Some(w), &ctx).unwrap();
    let moved = (0..3).any(|i| tape.value(d1.hidden[i]) != tape.value(d2.hidden[i]));
    assert!(moved, "memory did not evolve under identical inputs");
}

#[test]
fn update_rejects_weights_that_are_not_a_distribution() {
    let params = ModelParams::<f32>::init(toy_cfg(true), 31).unwrap();
    let mut tape = Tape::new();
    let mut fwd = Forward::new(&mut tape, &params);
    let ctx = fwd.encode(&[1, 2, 3]).unwrap();
    let d0 = fwd.start_dynamic_memory(&ctx).unwrap();
    let bad_sum = fwd.tape().leaf_vector(vec![0.5f32, 0.25, 0.5]);
    assert!(fwd.update_dynamic_memory(&d0, Some(bad_sum), &ctx).is_err());
    let bad_len = fwd.tape().leaf_vector(vec![0.5f32, 0.5]);
    assert!(fwd.update_dynamic_memory(&d0, Some(bad_len), &ctx).is_err());
}

#[test]
fn attend_dynamic_with_zeroed_memory_columns_equals_baseline_bitwise() {
    let base_cfg = toy_cfg(false);
    let dyn_cfg = toy_cfg(true);
    for seed in 0..20 {
        let baseline = ModelParams::<f32>::init(base_cfg, seed).unwrap();
        let mut dynamic = ModelParams::init(dyn_cfg, seed + 1000).unwrap();

        // Share every weight with the baseline; the memory columns of the
        // attention projection are zero so [h, d] scores like [h].
        dynamic.src_embed = baseline.src_embed.clone();
        dynamic.tgt_embed = baseline.tgt_embed.clone();
        dynamic.enc_fwd = baseline.enc_fwd.clone();
        dynamic.enc_bwd = baseline.enc_bwd.clone();
        dynamic.dec = baseline.dec.clone();
        dynamic.w_init = baseline.w_init.clone();
        dynamic.v_attn = baseline.v_attn.clone();
        dynamic.u_attn = baseline.u_attn.clone();
        dynamic.w_out1 = baseline.w_out1.clone();
        dynamic.b_out1 = baseline.b_out1.clone();
        dynamic.w_out2 = baseline.w_out2.clone();
        let key = dyn_cfg.attn_key_dim();
        let ann = dyn_cfg.annotation_dim();
        for row in 0..dyn_cfg.attn_dim() {
            for col in 0..key {
                dynamic.w_attn.data_mut()[row * key + col] = if col < ann {
                    baseline.w_attn.data()[row * ann + col]
                } else {
                    0.0
                };
            }
        }

        let ids = [1usize, 4, 2, 5];
        let mut tape_b = Tape::new();
        let mut fwd_b = Forward::new(&mut tape_b, &baseline);
        let ctx_b = fwd_b.encode(&ids).unwrap();
        let st_b = fwd_b.start_decoder(&ctx_b).unwrap();
        let attn_b = fwd_b.attend_baseline(&ctx_b, st_b.hidden).unwrap();

        let mut tape_d = Tape::new();
        let mut fwd_d = Forward::new(&mut tape_d, &dynamic);
        let ctx_d = fwd_d.encode(&ids).unwrap();
        let st_d = fwd_d.start_decoder(&ctx_d).unwrap();
        let d0 = fwd_d.start_dynamic_memory(&ctx_d).unwrap();
        let w = fwd_d.tape().leaf_vector(vec![0.1f32, 0.2, 0.3, 0.4]);
        let d1 = fwd_d.update_dynamic_memory(&d0, Some(w), &ctx_d).unwrap();
        let attn_d = fwd_d.attend_dynamic(&ctx_d, &d1, st_d.hidden).unwrap();

        let bits = |x: &[f32]| x.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(
            bits(tape_b.value(attn_b.scores)),
            bits(tape_d.value(attn_d.scores)),
            "seed {seed}"
        );
        assert_eq!(
            bits(tape_b.value(attn_b.weights)),
            bits(tape_d.value(attn_d.weights))
        );
        assert_eq!(
            bits(tape_b.value(attn_b.context)),
            bits(tape_d.value(attn_d.context))
        );
    }
}

#[test]
fn attend_dynamic_uniform_when_scorer_is_zero() {
    let mut params = ModelParams::<f32>::init(toy_cfg(true), 9).unwrap();
    params.v_attn.data_mut().fill(0.0);
    let mut tape = Tape::new();
    let mut fwd = Forward::new(&mut tape, &params);
    let ctx = fwd.encode(&[1, 2, 3]).unwrap();
    let state = fwd.start_decoder(&ctx).unwrap();
    let d0 = fwd.start_dynamic_memory(&ctx).unwrap();
    let d1 = fwd.update_dynamic_memory(&d0, None, &ctx).unwrap();
    let attn = fwd.attend_dynamic(&ctx, &d1, state.hidden).unwrap();
    for &w in tape.value(attn.weights) {
        assert!((w - 1.0 / 3.0).abs() < 1e-7);
    }
}

#[test]
fn attend_dynamic_matches_scalar_oracle() {
    let params = ModelParams::<f32>::init(toy_cfg(true), 41).unwrap();
    let mut tape = Tape::new();
    let mut fwd = Forward::new(&mut tape, &params);
    let ctx = fwd.encode(&[6, 1, 4]).unwrap();
    let state = fwd.start_decoder(&ctx).unwrap();
    let d0 = fwd.start_dynamic_memory(&ctx).unwrap();
    let w = fwd.tape().leaf_vector(vec![0.6f32, 0.3, 0.1]);
    let d1 = fwd.update_dynamic_memory(&d0, Some(w), &ctx).unwrap();
    let attn = fwd.attend_dynamic(&ctx, &d1, state.hidden).unwrap();

    let annotations: Vec<Vec<f64>> = ctx
        .annotations
        .iter()
        .map(|&a| read_vec(&tape, a))
        .collect();
    let memory: Vec<Vec<f64>> = d1.hidden.iter().map(|&d| read_vec(&tape, d)).collect();
    let hidden = read_vec(&tape, state.hidden);
    let oracle = attention_oracle(&params.cast::<f64>(), &annotations, Some(&memory), &hidden);

    for (got, want) in tape.value(attn.weights).iter().zip(&oracle.weights) {
        assert!((*got as f64 - want).abs() < 1e-5, "{got} vs {want}");
    }
    for (got, want) in tape.value(attn.context).iter().zip(&oracle.context) {
        assert!((*got as f64 - want).abs() < 1e-5, "{got} vs {want}");
    }
}

// ── decoder step ────────────────────────────────────────────────────────

#[test]
fn decoder_step_emits_a_distribution() {
    for dynamic in [false, true] {
        let params = ModelParams::<f32>::init(toy_cfg(dynamic), 13).unwrap();
        let mut tape = Tape::new();
        let mut fwd = Forward::new(&mut tape, &params);
        let ctx = fwd.encode(&[1, 2, 5]).unwrap();
        let state = fwd.start_decoder(&ctx).unwrap();
        let dmem = fwd.start_dynamic_memory(&ctx);
        let step = fwd.decoder_step(&ctx, &state, dmem.as_ref()).unwrap();
        let p = tape.value(step.probs);
        assert_eq!(p.len(), 8);
        let total: f64 = p.iter().map(|&v| v as f64).sum();
        assert!((total - 1.0).abs() < 1e-6);
        assert!(p.iter().all(|&v| v > 0.0));
    }
}

#[test]
fn decoder_step_uniform_when_output_projection_is_zero() {
    let mut params = ModelParams::<f32>::init(toy_cfg(false), 19).unwrap();
    params.w_out2.data_mut().fill(0.0);
    let mut tape = Tape::new();
    let mut fwd = Forward::new(&mut tape, &params);
    let ctx = fwd.encode(&[3]).unwrap();
    let state = fwd.start_decoder(&ctx).unwrap();
    let step = fwd.decoder_step(&ctx, &state, None).unwrap();
    for &p in tape.value(step.probs) {
        assert!((p - 1.0 / 8.0).abs() < 1e-7);
    }
}

#[test]
fn decoder_step_rejects_bad_previous_token() {
    let params = ModelParams::<f32>::init(toy_cfg(false), 19).unwrap();
    let mut tape = Tape::new();
    let mut fwd = Forward::new(&mut tape, &params);
    let ctx = fwd.encode(&[3]).unwrap();
    let state = fwd.start_decoder(&ctx).unwrap().with_token(99);
    assert!(matches!(
        fwd.decoder_step(&ctx, &state, None),
        Err(Error::Contract(_))
    ));
}

#[test]
fn padded_context_changes_nothing() {
    let params = ModelParams::<f32>::init(toy_cfg(true), 83).unwrap();
    let tgt = [4usize, 6];

    let mut tape_a = Tape::new();
    let mut fwd_a = Forward::new(&mut tape_a, &params);
    let ctx_a = fwd_a.encode(&[1, 2, 3]).unwrap();
    let loss_a = fwd_a.sequence_nll_in_context(&ctx_a, &tgt).unwrap();

    let mut tape_b = Tape::new();
    let mut fwd_b = Forward::new(&mut tape_b, &params);
    let enc = fwd_b.encode(&[1, 2, 3]).unwrap();
    let ctx_b = fwd_b.pad_context(&enc, 6).unwrap();
    assert_eq!(ctx_b.valid, 3);
    let loss_b = fwd_b.sequence_nll_in_context(&ctx_b, &tgt).unwrap();

    assert_eq!(
        tape_a.value(loss_a)[0].to_bits(),
        tape_b.value(loss_b)[0].to_bits()
    );
}

// ── gradients through the full unroll ───────────────────────────────────

fn model_loss_f64(
    cfg: ModelConfig,
    flat: &[f64],
    src: &[usize],
    tgt: &[usize],
) -> crate::Result<f64> {
    let params = ModelParams::<f64>::from_flat(cfg, flat)?;
    let mut tape = Tape::new();
    let mut fwd = Forward::new(&mut tape, &params);
    let loss = fwd.sequence_nll(src, tgt)?;
    Ok(tape.value(loss)[0])
}

fn reverse_mode_grads(params: &ModelParams<f32>, src: &[usize], tgt: &[usize]) -> Vec<f64> {
    let mut tape = Tape::new();
    let mut fwd = Forward::new(&mut tape, params);
    let loss = fwd.sequence_nll(src, tgt).unwrap();
    let ordered = fwd.vars.ordered();
    tape.backward(loss).unwrap();
    ordered
        .iter()
        .flat_map(|&v| tape.grad(v).iter().map(|&g| g as f64))
        .collect()
}

#[test]
fn two_step_decode_gradient_matches_finite_differences() {
    // V=5, e=n=4, m=3, k=1, dynamic memory on: the gradient of
    // -log p(y) for a one-token target (token + EOS = two decoder steps)
    // must match 64-bit central differences for every parameter,
    // including the memory weights reached through step-1 attention.
    let cfg = ModelConfig {
        src_vocab: 5,
        tgt_vocab: 5,
        embed_dim: 4,
        hidden_dim: 4,
        mem_dim: 3,
        window: 1,
        use_dynamic: true,
    };
    let params = ModelParams::<f32>::init(cfg, 2024).unwrap();
    let src = [4usize, 3, 4];
    let tgt = [3usize];

    let flat = params.flatten_f64();
    let fd = finite_difference(|xs| model_loss_f64(cfg, xs, &src, &tgt), &flat, 1e-4).unwrap();
    let ad = reverse_mode_grads(&params, &src, &tgt);
    let worst = max_rel_err(&ad, &fd, 1e-3);
    assert!(worst < 1e-3, "worst relative disagreement {worst}");

    // the memory weights must actually receive gradient
    let mut cursor = 0;
    for (name, tensor) in params.visit() {
        let slice = &ad[cursor..cursor + tensor.len()];
        if name.starts_with("dmem") {
            assert!(
                slice.iter().any(|&g| g.abs() > 1e-12),
                "{name} received no gradient"
            );
        }
        cursor += tensor.len();
    }
}

#[test]
fn baseline_two_step_gradient_matches_finite_differences() {
    let cfg = ModelConfig {
        src_vocab: 5,
        tgt_vocab: 5,
        embed_dim: 4,
        hidden_dim: 4,
        mem_dim: 0,
        window: 0,
        use_dynamic: false,
    };
    let params = ModelParams::<f32>::init(cfg, 7).unwrap();
    let src = [2usize, 4];
    let tgt = [4usize];

    let flat = params.flatten_f64();
    let fd = finite_difference(|xs| model_loss_f64(cfg, xs, &src, &tgt), &flat, 1e-4).unwrap();
    let ad = reverse_mode_grads(&params, &src, &tgt);
    let worst = max_rel_err(&ad, &fd, 1e-3);
    assert!(worst < 1e-3, "worst relative disagreement {worst}");
}

// ── distribution invariants ─────────────────────────────────────────────

#[test]
fn attention_weights_are_a_distribution_and_context_in_hull() {
    let mut rng = Rng::new(4242);
    for trial in 0..50 {
        let dynamic = trial % 2 == 0;
        let params = ModelParams::<f32>::init(toy_cfg(dynamic), rng.next_u64()).unwrap();
        let s_len = 1 + rng.below(8);
        let ids: Vec<usize> = (0..s_len).map(|_| rng.below(7)).collect();
        let mut tape = Tape::new();
        let mut fwd = Forward::new(&mut tape, &params);
        let ctx = fwd.encode(&ids).unwrap();
        let state = fwd.start_decoder(&ctx).unwrap();
        let dmem = fwd.start_dynamic_memory(&ctx);
        let step = fwd.decoder_step(&ctx, &state, dmem.as_ref()).unwrap();

        let w = tape.value(step.attention.weights);
        assert!(w.iter().all(|&x| x >= 0.0));
        let total: f64 = w.iter().map(|&x| x as f64).sum();
        assert!((total - 1.0).abs() < 1e-6);

        let context = tape.value(step.attention.context).to_vec();
        for (d, &c) in context.iter().enumerate() {
            let column: Vec<f32> = (0..s_len)
                .map(|i| tape.value(ctx.annotations[i])[d])
                .collect();
            let lo = column.iter().cloned().fold(f32::INFINITY, f32::min);
            let hi = column.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            assert!(
                c >= lo - 1e-6 && c <= hi + 1e-6,
                "context[{d}] = {c} outside [{lo}, {hi}]"
            );
        }
    }
}

#[test]
fn sequence_nll_rejects_empty_target() {
    let params = ModelParams::<f32>::init(toy_cfg(false), 3).unwrap();
    let mut tape = Tape::new();
    let mut fwd = Forward::new(&mut tape, &params);
    assert!(matches!(
        fwd.sequence_nll(&[1, 2], &[]),
        Err(Error::Contract(_))
    ));
}

#[test]
fn sequence_nll_counts_target_plus_eos() {
    // With a zero output projection every step costs ln(V).
    let mut params = ModelParams::<f32>::init(toy_cfg(false), 3).unwrap();
    params.w_out2.data_mut().fill(0.0);
    let mut tape = Tape::new();
    let mut fwd = Forward::new(&mut tape, &params);
    let loss = fwd.sequence_nll(&[1, 2, 3], &[4, 5]).unwrap();
    let expected = 3.0 * (8f32).ln();
    assert!((tape.value(loss)[0] - expected).abs() < 1e-5);
}
