//! Beam and greedy decoding with attention tracing, plus copy-through UNK
//! replacement and attention-matrix dumps.
//!
//! Decoding is deterministic: candidate ties break on token id, then on
//! hypothesis index. A hypothesis ends at EOS; at the length cap
//! (`max_len_factor·S + 10` emissions) EOS is forced so every decode
//! returns a well-formed sequence. The final ranking normalizes scores by
//! length; the raw summed log-probability is kept alongside.

use crate::data::{Vocab, EOS_ID, UNK_ID};
use crate::model::{DecoderState, DynamicMemoryState, Forward, ModelParams};
use crate::tensor::Tape;
use crate::{Error, Result};
use std::path::Path;

/// One partial or finished decode path.
struct Hypothesis {
    /// Emitted ids, EOS included once finished.
    tokens: Vec<usize>,
    /// Sum of per-step `ln p`; non-positive.
    log_prob: f64,
    state: DecoderState,
    dmem: Option<DynamicMemoryState>,
    /// One attention row per emitted token.
    attention: Vec<Vec<f32>>,
}

/// A completed hypothesis as returned by [`beam_search`].
#[derive(Debug, Clone)]
pub struct Finished {
    /// Emitted ids ending in EOS.
    pub tokens: Vec<usize>,
    /// Un-normalized summed log-probability.
    pub log_prob: f64,
    /// `log_prob / tokens.len()`.
    pub normalized: f64,
    /// One attention row per emitted token (EOS row included).
    pub attention: Vec<Vec<f32>>,
    /// True when EOS was imposed by the length cap rather than chosen.
    pub forced_eos: bool,
}

/// Search instrumentation: the resource bound on live hypotheses.
#[derive(Debug, Clone, Copy, Default)]
pub struct DecodeStats {
    pub max_live: usize,
    pub steps: usize,
}

/// Attention trace of one decoded sentence: row j is the source
/// distribution used when emitting output token j (the final EOS row is
/// dropped along with the EOS itself).
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeTrace {
    pub attention: Vec<Vec<f32>>,
    pub source_ids: Vec<usize>,
    pub output_ids: Vec<usize>,
}

impl DecodeTrace {
    /// Per-row argmax source position; ties pick the lowest index.
    pub fn argmax_sources(&self) -> Vec<usize> {
        self.attention
            .iter()
            .map(|row| {
                let mut best = 0;
                for (i, &w) in row.iter().enumerate() {
                    if w > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }
}

/// Result of [`decode`]: the best finished hypothesis.
#[derive(Debug, Clone)]
pub struct DecodeOutput {
    pub output_ids: Vec<usize>,
    pub trace: DecodeTrace,
    /// Length-normalized log-probability of the returned hypothesis.
    pub score: f64,
}

/// Beam search over the decoder. Returns every finished hypothesis sorted
/// by normalized score (best first) plus instrumentation.
pub fn beam_search(
    params: &ModelParams<f32>,
    source_ids: &[usize],
    beam_width: usize,
    max_len_factor: usize,
) -> Result<(Vec<Finished>, DecodeStats)> {
    if beam_width == 0 {
        return Err(Error::Contract("beam width must be at least 1".into()));
    }
    if source_ids.is_empty() {
        return Err(Error::Contract("cannot decode an empty source".into()));
    }
    let cap = max_len_factor * source_ids.len() + 10;
    let mut tape = Tape::new();
    let mut fwd = Forward::new(&mut tape, params);
    let ctx = fwd.encode(source_ids)?;
    let state = fwd.start_decoder(&ctx)?;
    let dmem = fwd.start_dynamic_memory(&ctx);

    let mut live = vec![Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        state,
        dmem,
        attention: Vec::new(),
    }];
    let mut finished: Vec<Finished> = Vec::new();
    let mut stats = DecodeStats::default();

    for step in 1..=cap {
        stats.steps = step;
        stats.max_live = stats.max_live.max(live.len());
        // (hyp index, token, new log prob)
        let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
        let mut step_outputs = Vec::with_capacity(live.len());
        for (idx, hyp) in live.iter().enumerate() {
            let out = fwd.decoder_step(&ctx, &hyp.state, hyp.dmem.as_ref())?;
            let probs = fwd.tape().value(out.probs).to_vec();
            if step == cap {
                candidates.push((idx, EOS_ID, hyp.log_prob + (probs[EOS_ID] as f64).ln()));
            } else {
                let mut ranked: Vec<(usize, f32)> = probs.iter().copied().enumerate().collect();
                ranked.sort_by(|a, b| {
                    b.1.partial_cmp(&a.1)
                        .expect("probabilities are finite")
                        .then(a.0.cmp(&b.0))
                });
                for &(token, p) in ranked.iter().take(beam_width) {
                    candidates.push((idx, token, hyp.log_prob + (p as f64).ln()));
                }
            }
            step_outputs.push(out);
        }
        candidates.sort_by(|a, b| {
            b.2.partial_cmp(&a.2)
                .expect("log probabilities are finite")
                .then(a.1.cmp(&b.1))
                .then(a.0.cmp(&b.0))
        });

        let mut next_live = Vec::with_capacity(beam_width);
        for &(idx, token, log_prob) in candidates.iter().take(beam_width) {
            let src = &live[idx];
            let out = &step_outputs[idx];
            let mut tokens = src.tokens.clone();
            tokens.push(token);
            let mut attention = src.attention.clone();
            attention.push(fwd.tape().value(out.attention.weights).to_vec());
            if token == EOS_ID {
                finished.push(Finished {
                    normalized: log_prob / tokens.len() as f64,
                    tokens,
                    log_prob,
                    attention,
                    forced_eos: step == cap,
                });
            } else {
                next_live.push(Hypothesis {
                    tokens,
                    log_prob,
                    state: out.state.with_token(token),
                    dmem: out.dmem.clone(),
                    attention,
                });
            }
        }
        live = next_live;
        if live.is_empty() {
            break;
        }
    }

    debug_assert!(!finished.is_empty(), "the cap step forces EOS");
    finished.sort_by(|a, b| {
        b.normalized
            .partial_cmp(&a.normalized)
            .expect("scores are finite")
            .then(a.tokens.cmp(&b.tokens))
    });
    Ok((finished, stats))
}

/// Decode one sentence, returning the highest length-normalized finished
/// hypothesis. `beam_width = 1` is exact greedy search.
pub fn decode(
    params: &ModelParams<f32>,
    source_ids: &[usize],
    beam_width: usize,
    max_len_factor: usize,
) -> Result<DecodeOutput> {
    let (finished, _) = beam_search(params, source_ids, beam_width, max_len_factor)?;
    let best = finished.into_iter().next().expect("search always finishes");
    let emitted = best.tokens.len() - 1; // drop the final EOS
    Ok(DecodeOutput {
        output_ids: best.tokens[..emitted].to_vec(),
        trace: DecodeTrace {
            attention: best.attention[..emitted].to_vec(),
            source_ids: source_ids.to_vec(),
            output_ids: best.tokens[..emitted].to_vec(),
        },
        score: best.normalized,
    })
}

/// Replace each UNK output token by the source surface token at the argmax
/// of its attention row; everything else passes through.
pub fn unk_replace(
    trace: &DecodeTrace,
    source_surface: &[String],
    tgt_vocab: &Vocab,
) -> Result<Vec<String>> {
    if source_surface.len() != trace.source_ids.len() {
        return Err(Error::Contract(format!(
            "{} source surface tokens for {} source positions",
            source_surface.len(),
            trace.source_ids.len()
        )));
    }
    let aligned = trace.argmax_sources();
    Ok(trace
        .output_ids
        .iter()
        .enumerate()
        .map(|(j, &id)| {
            if id == UNK_ID {
                source_surface[aligned[j]].clone()
            } else {
                tgt_vocab.token(id).to_string()
            }
        })
        .collect())
}

/// Write `<base>.attn.tsv` (source tokens as the header row, output tokens
/// as the first column, six-decimal weights) and `<base>.pgm` (binary
/// graymap, T rows × S columns, cell = round(255·α)).
pub fn dump_attention(
    trace: &DecodeTrace,
    source_tokens: &[String],
    output_tokens: &[String],
    base: &Path,
) -> Result<()> {
    if trace.attention.is_empty() {
        return Err(Error::Contract(
            "cannot dump an empty attention trace".into(),
        ));
    }
    let rows = trace.attention.len();
    let cols = trace.attention[0].len();

    let mut tsv = String::new();
    for token in source_tokens {
        tsv.push('\t');
        tsv.push_str(token);
    }
    tsv.push('\n');
    for (row, token) in trace.attention.iter().zip(output_tokens) {
        tsv.push_str(token);
        for w in row {
            tsv.push_str(&format!("\t{w:.6}"));
        }
        tsv.push('\n');
    }
    let tsv_path = base.with_extension("attn.tsv");
    std::fs::write(&tsv_path, tsv).map_err(|e| Error::io(tsv_path.display().to_string(), e))?;

    let mut pgm = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    for row in &trace.attention {
        for &w in row {
            pgm.push((w * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    let pgm_path = base.with_extension("pgm");
    std::fs::write(&pgm_path, pgm).map_err(|e| Error::io(pgm_path.display().to_string(), e))
}
