//! Plain SGD training: teacher-forced
//! cross-entropy, global gradient-norm rescaling, a halving learning-rate
//! schedule, length filtering, and seeded shuffling.
//!
//! The loop is bit-deterministic given (seed, corpus, config): sentences
//! are processed in fixed chunks whose partial gradients reduce in chunk
//! order, so enabling threads changes wall time but never results.

use crate::data::Vocab;
use crate::model::{save_checkpoint, Forward, ModelParams};
use crate::rng::Rng;
use crate::tensor::Tape;
use crate::{Error, Result};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

/// Sentences per reduction chunk. Fixed so that the gradient reduction
/// tree does not depend on the thread count.
const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr_initial: f32,
    /// Epochs trained at the initial rate before halving begins.
    pub halve_start_epoch: usize,
    /// Halve once per this many epochs after the start.
    pub halve_every: usize,
    pub total_epochs: usize,
    pub clip_norm: f32,
    /// Pairs where either side exceeds this are dropped.
    pub max_len: usize,
    /// Attention window radius `k`.
    pub window: usize,
    pub seed: u64,
    /// Worker threads for within-batch evaluation; 1 = inline.
    pub threads: usize,
    /// When set, `<prefix>.epochN.ckpt` is written after each epoch.
    pub checkpoint_prefix: Option<PathBuf>,
}

impl Default for TrainConfig {
    /// The English-German recipe: batch 128, SGD at 0.7, clip 3, length
    /// cap 50, halve every epoch after 8 of 12.
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            lr_initial: 0.7,
            halve_start_epoch: 8,
            halve_every: 1,
            total_epochs: 12,
            clip_norm: 3.0,
            max_len: 50,
            window: 5,
            seed: 1,
            threads: 1,
            checkpoint_prefix: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clip_norm <= 0.0 || self.lr_initial <= 0.0 {
            return Err(Error::Contract(
                "clip_norm and lr_initial must be positive".into(),
            ));
        }
        if self.max_len == 0 || self.batch_size == 0 || self.halve_every == 0 {
            return Err(Error::Contract(
                "max_len, batch_size and halve_every must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Parse the line-oriented `key=value` config format. Blank lines and
    /// `#` comments are skipped; unknown keys are rejected.
    pub fn parse(text: &str) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!(
                    "config line {}: expected key=value, got {raw:?}",
                    lineno + 1
                ))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: &dyn std::fmt::Display| {
                Error::Format(format!(
                    "config line {}: bad value for {key}: {e}",
                    lineno + 1
                ))
            };
            match key {
                "batch_size" => cfg.batch_size = value.parse().map_err(|e| bad(&e))?,
                "lr_initial" => cfg.lr_initial = value.parse().map_err(|e| bad(&e))?,
                "halve_start_epoch" => {
                    cfg.halve_start_epoch = value.parse().map_err(|e| bad(&e))?
                }
                "halve_every" => cfg.halve_every = value.parse().map_err(|e| bad(&e))?,
                "total_epochs" => cfg.total_epochs = value.parse().map_err(|e| bad(&e))?,
                "clip_norm" => cfg.clip_norm = value.parse().map_err(|e| bad(&e))?,
                "max_len" => cfg.max_len = value.parse().map_err(|e| bad(&e))?,
                "window" => cfg.window = value.parse().map_err(|e| bad(&e))?,
                "seed" => cfg.seed = value.parse().map_err(|e| bad(&e))?,
                "threads" => cfg.threads = value.parse().map_err(|e| bad(&e))?,
                other => {
                    return Err(Error::Format(format!(
                        "config line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `lr_initial` until `halve_start_epoch`, then halved once per
/// `halve_every` epochs: epoch `start+1` is the first halved epoch.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f32 {
    assert!(epoch >= 1, "epochs are 1-based");
    if epoch <= cfg.halve_start_epoch {
        return cfg.lr_initial;
    }
    let halvings = (epoch - cfg.halve_start_epoch - 1) / cfg.halve_every + 1;
    cfg.lr_initial * 0.5f32.powi(halvings as i32)
}

/// Flat per-parameter gradient buffers in [`ModelParams::visit`] order.
#[derive(Debug, Clone)]
pub struct GradSet {
    names: Vec<&'static str>,
    slots: Vec<Vec<f32>>,
}

impl GradSet {
    pub fn zeros_like(params: &ModelParams<f32>) -> GradSet {
        let named = params.visit();
        GradSet {
            names: named.iter().map(|(n, _)| *n).collect(),
            slots: named.iter().map(|(_, t)| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn slots(&self) -> &[Vec<f32>] {
        &self.slots
    }

    /// Add the gradients a finished backward pass left on `tape`.
    fn accumulate_from_tape(&mut self, tape: &Tape<f32>, ordered: &[crate::tensor::Var]) {
        debug_assert_eq!(ordered.len(), self.slots.len());
        for (slot, &var) in self.slots.iter_mut().zip(ordered) {
            for (acc, &g) in slot.iter_mut().zip(tape.grad(var)) {
                *acc += g;
            }
        }
    }

    pub fn add(&mut self, other: &GradSet) {
        for (mine, theirs) in self.slots.iter_mut().zip(&other.slots) {
            for (a, &b) in mine.iter_mut().zip(theirs) {
                *a += b;
            }
        }
    }

    pub fn scale(&mut self, factor: f32) {
        for slot in &mut self.slots {
            for g in slot.iter_mut() {
                *g *= factor;
            }
        }
    }

    /// Global L2 norm, accumulated in f64.
    pub fn l2_norm(&self) -> f64 {
        self.slots
            .iter()
            .flat_map(|s| s.iter())
            .map(|&g| (g as f64) * (g as f64))
            .sum::<f64>()
            .sqrt()
    }

    fn check_finite(&self) -> Result<()> {
        for (name, slot) in self.names.iter().zip(&self.slots) {
            if slot.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient in parameter {name}"
                )));
            }
        }
        Ok(())
    }
}

/// Rescale so the global L2 norm never exceeds `threshold`; gradients
/// already inside the ball are untouched. Returns the post-clip norm.
pub fn clip_gradients(grads: &mut GradSet, threshold: f32) -> Result<f64> {
    if threshold <= 0.0 {
        return Err(Error::Contract("clip threshold must be positive".into()));
    }
    grads.check_finite()?;
    let norm = grads.l2_norm();
    if norm > threshold as f64 {
        grads.scale((threshold as f64 / norm) as f32);
        Ok(grads.l2_norm())
    } else {
        Ok(norm)
    }
}

/// Teacher-forced loss and gradients for one sentence pair.
pub fn sentence_loss(
    params: &ModelParams<f32>,
    source_ids: &[usize],
    target_ids: &[usize],
) -> Result<(f32, GradSet)> {
    if source_ids.is_empty() || target_ids.is_empty() {
        return Err(Error::Contract(
            "sentence_loss needs non-empty source and target".into(),
        ));
    }
    let mut tape = Tape::new();
    let mut fwd = Forward::new(&mut tape, params);
    let loss = fwd.sequence_nll(source_ids, target_ids)?;
    let ordered = fwd.vars.ordered();
    tape.backward(loss)?;
    let mut grads = GradSet::zeros_like(params);
    grads.accumulate_from_tape(&tape, &ordered);
    Ok((tape.value(loss)[0], grads))
}

/// A batch padded to rectangular id matrices plus validity masks. PAD only
/// ever trails; masks are all-ones prefixes.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedBatch {
    pub src: Vec<Vec<usize>>,
    pub tgt: Vec<Vec<usize>>,
    pub src_mask: Vec<Vec<bool>>,
    pub tgt_mask: Vec<Vec<bool>>,
    pub src_lens: Vec<usize>,
    pub tgt_lens: Vec<usize>,
}

pub fn batch_padding(batch: &[(Vec<usize>, Vec<usize>)]) -> Result<PaddedBatch> {
    if batch.is_empty() {
        return Err(Error::Contract("cannot pad an empty batch".into()));
    }
    let src_max = batch.iter().map(|(s, _)| s.len()).max().unwrap();
    let tgt_max = batch.iter().map(|(_, t)| t.len()).max().unwrap();
    let pad_to = |ids: &[usize], width: usize| {
        let mut row = ids.to_vec();
        row.resize(width, crate::data::PAD_ID);
        let mut mask = vec![true; ids.len()];
        mask.resize(width, false);
        (row, mask)
    };
    let mut out = PaddedBatch {
        src: Vec::new(),
        tgt: Vec::new(),
        src_mask: Vec::new(),
        tgt_mask: Vec::new(),
        src_lens: Vec::new(),
        tgt_lens: Vec::new(),
    };
    for (s, t) in batch {
        let (row, mask) = pad_to(s, src_max);
        out.src.push(row);
        out.src_mask.push(mask);
        out.src_lens.push(s.len());
        let (row, mask) = pad_to(t, tgt_max);
        out.tgt.push(row);
        out.tgt_mask.push(mask);
        out.tgt_lens.push(t.len());
    }
    Ok(out)
}

/// Loss (sum over rows, in nats) of a padded batch plus the number of
/// scored tokens. Each row encodes its valid prefix, pads the context to
/// the batch width (masked out of the attention softmax), and scores only
/// its real target tokens plus EOS.
pub fn padded_batch_loss(params: &ModelParams<f32>, batch: &PaddedBatch) -> Result<(f64, usize)> {
    let mut total = 0.0;
    let mut tokens = 0;
    for row in 0..batch.src.len() {
        let (nll, t) = padded_row_nll(params, batch, row)?;
        total += nll as f64;
        tokens += t;
    }
    Ok((total, tokens))
}

fn padded_row_nll(
    params: &ModelParams<f32>,
    batch: &PaddedBatch,
    row: usize,
) -> Result<(f32, usize)> {
    let src = &batch.src[row][..batch.src_lens[row]];
    let tgt = &batch.tgt[row][..batch.tgt_lens[row]];
    let mut tape = Tape::new();
    let mut fwd = Forward::new(&mut tape, params);
    let enc = fwd.encode(src)?;
    let ctx = fwd.pad_context(&enc, batch.src[row].len())?;
    let loss = fwd.sequence_nll_in_context(&ctx, tgt)?;
    Ok((tape.value(loss)[0], tgt.len() + 1))
}

fn padded_row_grads(
    params: &ModelParams<f32>,
    batch: &PaddedBatch,
    row: usize,
    grads: &mut GradSet,
) -> Result<(f32, usize)> {
    let src = &batch.src[row][..batch.src_lens[row]];
    let tgt = &batch.tgt[row][..batch.tgt_lens[row]];
    let mut tape = Tape::new();
    let mut fwd = Forward::new(&mut tape, params);
    let enc = fwd.encode(src)?;
    let ctx = fwd.pad_context(&enc, batch.src[row].len())?;
    let loss = fwd.sequence_nll_in_context(&ctx, tgt)?;
    let ordered = fwd.vars.ordered();
    tape.backward(loss)?;
    grads.accumulate_from_tape(&tape, &ordered);
    Ok((tape.value(loss)[0], tgt.len() + 1))
}

/// Sum of gradients over a batch, evaluated in fixed chunks. With
/// `threads > 1` the chunks run concurrently but reduce in index order, so
/// the result is identical for every thread count.
fn batch_grads(
    params: &ModelParams<f32>,
    batch: &PaddedBatch,
    threads: usize,
) -> Result<(GradSet, f64, usize)> {
    let rows = batch.src.len();
    let n_chunks = rows.div_ceil(CHUNK);
    let chunk_result = |chunk: usize| -> Result<(GradSet, f64, usize)> {
        let mut grads = GradSet::zeros_like(params);
        let mut loss = 0.0f64;
        let mut tokens = 0usize;
        for row in chunk * CHUNK..((chunk + 1) * CHUNK).min(rows) {
            let (nll, t) = padded_row_grads(params, batch, row, &mut grads)?;
            loss += nll as f64;
            tokens += t;
        }
        Ok((grads, loss, tokens))
    };

    type ChunkResult = Result<(GradSet, f64, usize)>;
    let mut partials: Vec<Option<ChunkResult>> = Vec::new();
    if threads <= 1 || n_chunks <= 1 {
        for chunk in 0..n_chunks {
            partials.push(Some(chunk_result(chunk)));
        }
    } else {
        partials.resize_with(n_chunks, || None);
        let next = AtomicUsize::new(0);
        let slots: Vec<std::sync::Mutex<Option<ChunkResult>>> =
            (0..n_chunks).map(|_| std::sync::Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..threads.min(n_chunks) {
                scope.spawn(|| loop {
                    let chunk = next.fetch_add(1, Ordering::Relaxed);
                    if chunk >= n_chunks {
                        break;
                    }
                    *slots[chunk].lock().unwrap() = Some(chunk_result(chunk));
                });
            }
        });
        for (slot, partial) in slots.into_iter().zip(partials.iter_mut()) {
            *partial = slot.into_inner().unwrap();
        }
    }

    let mut grads = GradSet::zeros_like(params);
    let mut loss = 0.0f64;
    let mut tokens = 0usize;
    for partial in partials {
        let (g, l, t) = partial.expect("all chunks evaluated")?;
        grads.add(&g);
        loss += l;
        tokens += t;
    }
    Ok((grads, loss, tokens))
}

/// One epoch row of the training report.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub lr: f32,
    /// Mean token-level negative log-likelihood.
    pub train_nll: f64,
    pub valid_ppl: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochReport>,
}

impl TrainReport {
    /// Tab-separated rows: epoch, lr, train_nll, valid_ppl, seconds.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\tlr\ttrain_nll\tvalid_ppl\tseconds\n");
        for row in &self.epochs {
            let ppl = row
                .valid_ppl
                .map(|p| format!("{p:.4}"))
                .unwrap_or_else(|| "-".to_string());
            out.push_str(&format!(
                "{}\t{}\t{:.6}\t{}\t{:.3}\n",
                row.epoch, row.lr, row.train_nll, ppl, row.seconds
            ));
        }
        out
    }
}

/// Mean token NLL over a held-out set (forward only).
pub fn mean_token_nll(
    params: &ModelParams<f32>,
    pairs: &[(Vec<usize>, Vec<usize>)],
) -> Result<f64> {
    let mut total = 0.0f64;
    let mut tokens = 0usize;
    for (src, tgt) in pairs {
        let mut tape = Tape::new();
        let mut fwd = Forward::new(&mut tape, params);
        let loss = fwd.sequence_nll(src, tgt)?;
        total += tape.value(loss)[0] as f64;
        tokens += tgt.len() + 1;
    }
    Ok(total / tokens as f64)
}

#[cfg(not(target_arch = "wasm32"))]
fn elapsed_seconds(start: std::time::Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

#[cfg(not(target_arch = "wasm32"))]
fn now() -> std::time::Instant {
    std::time::Instant::now()
}

#[cfg(target_arch = "wasm32")]
fn elapsed_seconds(_start: ()) -> f64 {
    0.0
}

#[cfg(target_arch = "wasm32")]
fn now() {}

/// Run one epoch of shuffled mini-batch SGD in place. The epoch's shuffle
/// stream derives from (seed, epoch), so epochs are independently
/// reproducible.
pub fn train_epoch(
    params: &mut ModelParams<f32>,
    pairs: &[(Vec<usize>, Vec<usize>)],
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<f64> {
    let lr = lr_schedule(epoch, cfg);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    Rng::new(cfg.seed)
        .derive(0xE90C + epoch as u64)
        .shuffle(&mut order);

    let mut epoch_loss = 0.0f64;
    let mut epoch_tokens = 0usize;
    for (batch_index, chunk) in order.chunks(cfg.batch_size).enumerate() {
        let batch_pairs: Vec<(Vec<usize>, Vec<usize>)> =
            chunk.iter().map(|&i| pairs[i].clone()).collect();
        let batch = batch_padding(&batch_pairs)?;
        let (mut grads, loss, tokens) =
            batch_grads(params, &batch, cfg.threads).map_err(|e| match e {
                Error::Numeric(msg) => {
                    Error::Numeric(format!("batch {batch_index} of epoch {epoch}: {msg}"))
                }
                other => other,
            })?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss in batch {batch_index} of epoch {epoch}"
            )));
        }
        grads.scale(1.0 / tokens as f32);
        clip_gradients(&mut grads, cfg.clip_norm)?;
        for ((_, tensor), slot) in params.visit_mut().iter_mut().zip(grads.slots.iter()) {
            for (w, &g) in tensor.data_mut().iter_mut().zip(slot) {
                *w -= lr * g;
            }
        }
        epoch_loss += loss;
        epoch_tokens += tokens;
    }
    Ok(epoch_loss / epoch_tokens as f64)
}

/// Full training run: length filtering, `total_epochs` epochs of shuffled
/// batches, per-epoch checkpoints when a prefix is configured, and a
/// report row per epoch.
pub fn train(
    corpus: &[(Vec<usize>, Vec<usize>)],
    cfg: &TrainConfig,
    mut params: ModelParams<f32>,
    valid: Option<&[(Vec<usize>, Vec<usize>)]>,
) -> Result<(ModelParams<f32>, TrainReport)> {
    cfg.validate()?;
    let pairs: Vec<(Vec<usize>, Vec<usize>)> = corpus
        .iter()
        .filter(|(s, t)| {
            !s.is_empty() && !t.is_empty() && s.len() <= cfg.max_len && t.len() <= cfg.max_len
        })
        .cloned()
        .collect();
    if pairs.is_empty() {
        return Err(Error::Contract(format!(
            "no training pairs remain after filtering to max_len {}",
            cfg.max_len
        )));
    }

    let mut report = TrainReport::default();
    for epoch in 1..=cfg.total_epochs {
        let start = now();
        let train_nll = train_epoch(&mut params, &pairs, cfg, epoch)?;
        let valid_ppl = match valid {
            Some(held_out) if !held_out.is_empty() => {
                Some(mean_token_nll(&params, held_out)?.exp())
            }
            _ => None,
        };
        if let Some(prefix) = &cfg.checkpoint_prefix {
            let path = prefix.with_extension(format!("epoch{epoch}.ckpt"));
            let tmp = prefix.with_extension(format!("epoch{epoch}.ckpt.tmp"));
            save_checkpoint(&params, &tmp)?;
            std::fs::rename(&tmp, &path).map_err(|e| {
                let _ = std::fs::remove_file(&tmp);
                Error::io(path.display().to_string(), e)
            })?;
        }
        report.epochs.push(EpochReport {
            epoch,
            lr: lr_schedule(epoch, cfg),
            train_nll,
            valid_ppl,
            seconds: elapsed_seconds(start),
        });
    }
    Ok((params, report))
}

/// Encode a token corpus with the given vocabularies.
pub fn encode_corpus(
    corpus: &crate::data::ParallelCorpus,
    src_vocab: &Vocab,
    tgt_vocab: &Vocab,
) -> Vec<(Vec<usize>, Vec<usize>)> {
    corpus
        .pairs
        .iter()
        .map(|(s, t)| (src_vocab.encode(s), tgt_vocab.encode(t)))
        .collect()
}
