//! The encoder–attention–decoder network.
//!
//! A forward pass is built op by op on a [`Tape`], so the same code serves
//! training (backward through the whole unroll, including the path from
//! step-j attention back through the memory windows into step-(j−1)
//! attention) and inference (values only).
//!
//! Two addressing variants share one code path:
//!
//! * baseline: score source position i by `v_aᵀ tanh(W_a h_i + U_a s_j)`;
//! * dynamic:  score by `v_aᵀ tanh(W_a [h_i, d_ij] + U_a s_j)`, where
//!   `d_ij` is a per-source-word LSTM state fed with the window of the
//!   previous step's attention weights around i.
//!
//! The memory only participates in addressing: the context read out is
//! always `c_j = Σ_i α_ij h_i` over the static annotations.

mod checkpoint;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use params::{LstmWeights, ModelConfig, ModelParams, ParamVars};

use crate::data::{BOS_ID, PAD_ID};
use crate::tensor::{Real, Tape, Var};
use crate::{Error, Result};

/// Encoder output: one annotation per source position plus the stacked
/// matrix view used for the weighted read-out. Positions at and beyond
/// `valid` are padding and never receive attention weight.
pub struct ContextSet {
    pub annotations: Vec<Var>,
    /// `[S × 2n]`, row i = annotation of position i.
    pub matrix: Var,
    pub source_ids: Vec<usize>,
    pub valid: usize,
}

impl ContextSet {
    pub fn len(&self) -> usize {
        self.annotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.annotations.is_empty()
    }
}

/// Decoder recurrence state between steps.
///
/// `prev_weights` holds the attention row produced at the previous step;
/// the dynamic memory consumes it before the current step scores anything,
/// so the memory always summarizes strictly past attention.
#[derive(Debug, Clone, Copy)]
pub struct DecoderState {
    pub hidden: Var,
    pub cell: Var,
    /// Context fed to the next LSTM update; zero before the first step.
    pub c_prev: Var,
    /// Token consumed by the next LSTM update; BOS before the first step.
    pub y_prev: usize,
    pub prev_weights: Option<Var>,
}

impl DecoderState {
    /// The state that results from choosing token `y` at this step.
    pub fn with_token(mut self, y: usize) -> Self {
        self.y_prev = y;
        self
    }
}

/// Per-source-word memory LSTM states, all zero before the first step.
#[derive(Debug, Clone)]
pub struct DynamicMemoryState {
    pub hidden: Vec<Var>,
    pub cell: Vec<Var>,
}

impl DynamicMemoryState {
    pub fn len(&self) -> usize {
        self.hidden.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.is_empty()
    }
}

/// One attention evaluation: raw scores, normalized weights, and the
/// context read from the annotations.
#[derive(Debug, Clone, Copy)]
pub struct AttentionResult {
    /// `e_·j`, length S.
    pub scores: Var,
    /// `α_·j`, length S, nonnegative, sums to 1 over the valid prefix.
    pub weights: Var,
    /// `c_j = Σ_i α_ij h_i`, length 2n.
    pub context: Var,
}

/// Everything one decoder step produces.
pub struct StepOutput {
    pub state: DecoderState,
    pub dmem: Option<DynamicMemoryState>,
    pub attention: AttentionResult,
    /// Distribution over the target vocabulary.
    pub probs: Var,
}

/// A forward-pass builder over one tape.
pub struct Forward<'t, F: Real> {
    tape: &'t mut Tape<F>,
    pub vars: ParamVars,
    cfg: ModelConfig,
}

impl<'t, F: Real> Forward<'t, F> {
    pub fn new(tape: &'t mut Tape<F>, params: &ModelParams<F>) -> Self {
        let vars = params.register(tape);
        Forward {
            tape,
            vars,
            cfg: params.cfg,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn tape(&mut self) -> &mut Tape<F> {
        self.tape
    }

    /// Bidirectional encoding: forward LSTM left to right, backward LSTM
    /// right to left, both from zero states; annotation i concatenates the
    /// two hidden states at position i.
    pub fn encode(&mut self, source_ids: &[usize]) -> Result<ContextSet> {
        let s_len = source_ids.len();
        if s_len == 0 {
            return Err(Error::Contract("cannot encode an empty source".into()));
        }
        if let Some(&bad) = source_ids.iter().find(|&&id| id >= self.cfg.src_vocab) {
            return Err(Error::Contract(format!(
                "source id {bad} outside vocabulary of {} (unmapped UNK?)",
                self.cfg.src_vocab
            )));
        }
        let n = self.cfg.hidden_dim;
        let embeds: Vec<Var> = source_ids
            .iter()
            .map(|&id| self.tape.row(self.vars.src_embed, id))
            .collect::<Result<_>>()?;

        let mut fwd_states = Vec::with_capacity(s_len);
        let mut hidden = self.tape.zero_vector(n);
        let mut cell = self.tape.zero_vector(n);
        for &x in &embeds {
            let (h, c) = self.tape.lstm_cell(&self.vars.enc_fwd, x, hidden, cell)?;
            fwd_states.push(h);
            hidden = h;
            cell = c;
        }

        let mut bwd_states = vec![None; s_len];
        let mut hidden = self.tape.zero_vector(n);
        let mut cell = self.tape.zero_vector(n);
        for i in (0..s_len).rev() {
            let (h, c) = self
                .tape
                .lstm_cell(&self.vars.enc_bwd, embeds[i], hidden, cell)?;
            bwd_states[i] = Some(h);
            hidden = h;
            cell = c;
        }

        let annotations: Vec<Var> = fwd_states
            .iter()
            .zip(bwd_states.iter())
            .map(|(&f, b)| self.tape.concat(&[f, b.expect("filled above")]))
            .collect::<Result<_>>()?;
        let matrix = self.tape.stack_rows(&annotations)?;
        Ok(ContextSet {
            annotations,
            matrix,
            source_ids: source_ids.to_vec(),
            valid: s_len,
        })
    }

    /// Append zero-annotation PAD positions so a batch row reaches `total`
    /// columns. Padded positions keep `valid` unchanged and can never be
    /// attended to.
    pub fn pad_context(&mut self, ctx: &ContextSet, total: usize) -> Result<ContextSet> {
        if total < ctx.len() {
            return Err(Error::Contract(format!(
                "cannot pad a context of {} positions down to {total}",
                ctx.len()
            )));
        }
        let mut annotations = ctx.annotations.clone();
        let mut source_ids = ctx.source_ids.clone();
        while annotations.len() < total {
            annotations.push(self.tape.zero_vector(self.cfg.annotation_dim()));
            source_ids.push(PAD_ID);
        }
        let matrix = self.tape.stack_rows(&annotations)?;
        Ok(ContextSet {
            annotations,
            matrix,
            source_ids,
            valid: ctx.valid,
        })
    }

    /// Initial decoder state: `s_0 = tanh(W_init · mean_i h_i)` over the
    /// valid annotations, zero cell, zero previous context, BOS as the
    /// previous token.
    pub fn start_decoder(&mut self, ctx: &ContextSet) -> Result<DecoderState> {
        let inv = F::from_f64(1.0 / ctx.valid as f64);
        let mut mean_weights = vec![F::ZERO; ctx.len()];
        for w in mean_weights.iter_mut().take(ctx.valid) {
            *w = inv;
        }
        let mean_w = self.tape.leaf_vector(mean_weights);
        let mean = self.tape.matvec_t(ctx.matrix, mean_w)?;
        let projected = self.tape.matvec(self.vars.w_init, mean)?;
        let hidden = self.tape.tanh(projected);
        let cell = self.tape.zero_vector(self.cfg.hidden_dim);
        let c_prev = self.tape.zero_vector(self.cfg.annotation_dim());
        Ok(DecoderState {
            hidden,
            cell,
            c_prev,
            y_prev: BOS_ID,
            prev_weights: None,
        })
    }

    /// Fresh all-zero memory states, one per source position (padding
    /// included so indexes line up).
    pub fn start_dynamic_memory(&mut self, ctx: &ContextSet) -> Option<DynamicMemoryState> {
        if !self.cfg.use_dynamic {
            return None;
        }
        let m = self.cfg.mem_dim;
        let hidden = (0..ctx.len()).map(|_| self.tape.zero_vector(m)).collect();
        let cell = (0..ctx.len()).map(|_| self.tape.zero_vector(m)).collect();
        Some(DynamicMemoryState { hidden, cell })
    }

    /// The `2k+1`-long zero-padded windows of `weights` centered at each
    /// source position. Out-of-sentence positions (beyond `valid`) read as
    /// zero.
    pub fn attention_windows(
        &mut self,
        weights: Var,
        positions: usize,
        valid: usize,
    ) -> Result<Vec<Var>> {
        let k = self.cfg.window as isize;
        let len = self.cfg.window_len();
        (0..positions)
            .map(|i| self.tape.window(weights, i as isize - k, len, valid))
            .collect()
    }

    /// Advance every position's memory LSTM one step on the window of the
    /// previous step's attention weights. `prev_weights = None` (the first
    /// decoder step) feeds all-zero windows.
    pub fn update_dynamic_memory(
        &mut self,
        dmem: &DynamicMemoryState,
        prev_weights: Option<Var>,
        ctx: &ContextSet,
    ) -> Result<DynamicMemoryState> {
        let gates = self
            .vars
            .dmem
            .ok_or_else(|| Error::Contract("model has no dynamic memory weights".into()))?;
        let s_len = dmem.len();
        if s_len != ctx.len() {
            return Err(Error::Contract(format!(
                "memory has {s_len} positions but context has {}",
                ctx.len()
            )));
        }
        let weights = match prev_weights {
            Some(w) => {
                let w_len = self.tape.value(w).len();
                if w_len != s_len {
                    return Err(Error::Dimension(format!(
                        "attention weights have length {w_len}, expected {s_len}"
                    )));
                }
                let total: f64 = self.tape.value(w).iter().map(|v| v.to_f64()).sum();
                if (total - 1.0).abs() > 1e-6 {
                    return Err(Error::Contract(format!(
                        "attention weights sum to {total}, not 1"
                    )));
                }
                w
            }
            None => self.tape.zero_vector(s_len),
        };
        let windows = self.attention_windows(weights, s_len, ctx.valid)?;
        let mut hidden = Vec::with_capacity(s_len);
        let mut cell = Vec::with_capacity(s_len);
        for (i, win) in windows.into_iter().enumerate() {
            let (h, c) = self
                .tape
                .lstm_cell(&gates, win, dmem.hidden[i], dmem.cell[i])?;
            hidden.push(h);
            cell.push(c);
        }
        Ok(DynamicMemoryState { hidden, cell })
    }

    fn attend(
        &mut self,
        ctx: &ContextSet,
        dmem: Option<&DynamicMemoryState>,
        decoder_hidden: Var,
    ) -> Result<AttentionResult> {
        let query = self.tape.matvec(self.vars.u_attn, decoder_hidden)?;
        let mut score_parts = Vec::with_capacity(ctx.len());
        for i in 0..ctx.len() {
            let key = match dmem {
                Some(dm) => self.tape.concat(&[ctx.annotations[i], dm.hidden[i]])?,
                None => ctx.annotations[i],
            };
            let projected = self.tape.matvec(self.vars.w_attn, key)?;
            let pre = self.tape.add(projected, query)?;
            let act = self.tape.tanh(pre);
            score_parts.push(self.tape.dot(self.vars.v_attn, act)?);
        }
        let scores = self.tape.concat(&score_parts)?;
        let weights = self.tape.softmax_masked(scores, ctx.valid)?;
        let context = self.tape.matvec_t(ctx.matrix, weights)?;
        Ok(AttentionResult {
            scores,
            weights,
            context,
        })
    }

    /// Content-based addressing over the static annotations only.
    pub fn attend_baseline(
        &mut self,
        ctx: &ContextSet,
        decoder_hidden: Var,
    ) -> Result<AttentionResult> {
        if self.cfg.use_dynamic {
            return Err(Error::Contract(
                "attend_baseline called on a dynamic-memory model".into(),
            ));
        }
        self.attend(ctx, None, decoder_hidden)
    }

    /// Addressing over `[h_i, d_ij]`. The read-out context still mixes
    /// only the annotations; the memory never enters `c_j`.
    pub fn attend_dynamic(
        &mut self,
        ctx: &ContextSet,
        dmem: &DynamicMemoryState,
        decoder_hidden: Var,
    ) -> Result<AttentionResult> {
        if !self.cfg.use_dynamic {
            return Err(Error::Contract(
                "attend_dynamic called on a baseline model".into(),
            ));
        }
        if dmem.len() != ctx.len() {
            return Err(Error::Contract(format!(
                "memory has {} positions but context has {}",
                dmem.len(),
                ctx.len()
            )));
        }
        self.attend(ctx, Some(dmem), decoder_hidden)
    }

    /// One decoder step: advance the LSTM on `[embed(y_prev), c_prev]`,
    /// update the memory from the previous step's weights and attend, then
    /// predict through the output MLP. The returned state carries the new
    /// context and attention row; the caller picks the emitted token via
    /// [`DecoderState::with_token`].
    pub fn decoder_step(
        &mut self,
        ctx: &ContextSet,
        state: &DecoderState,
        dmem: Option<&DynamicMemoryState>,
    ) -> Result<StepOutput> {
        if state.y_prev >= self.cfg.tgt_vocab {
            return Err(Error::Contract(format!(
                "previous target id {} outside vocabulary of {}",
                state.y_prev, self.cfg.tgt_vocab
            )));
        }
        let y_embed = self.tape.row(self.vars.tgt_embed, state.y_prev)?;
        let dec_in = self.tape.concat(&[y_embed, state.c_prev])?;
        let (hidden, cell) =
            self.tape
                .lstm_cell(&self.vars.dec, dec_in, state.hidden, state.cell)?;

        let (dmem_new, attention) = match dmem {
            Some(dm) => {
                let updated = self.update_dynamic_memory(dm, state.prev_weights, ctx)?;
                let attn = self.attend_dynamic(ctx, &updated, hidden)?;
                (Some(updated), attn)
            }
            None => (None, self.attend_baseline(ctx, hidden)?),
        };

        let combined = self.tape.concat(&[hidden, attention.context])?;
        let projected = self.tape.matvec(self.vars.w_out1, combined)?;
        let pre = self.tape.add(projected, self.vars.b_out1)?;
        let s_tilde = self.tape.tanh(pre);
        let logits = self.tape.matvec(self.vars.w_out2, s_tilde)?;
        let probs = self.tape.softmax(logits)?;

        Ok(StepOutput {
            state: DecoderState {
                hidden,
                cell,
                c_prev: attention.context,
                y_prev: state.y_prev,
                prev_weights: Some(attention.weights),
            },
            dmem: dmem_new,
            attention,
            probs,
        })
    }

    /// Teacher-forced negative log-likelihood of `target_ids ++ EOS` given
    /// the source: the training loss for one sentence pair.
    pub fn sequence_nll(&mut self, source_ids: &[usize], target_ids: &[usize]) -> Result<Var> {
        if target_ids.is_empty() {
            return Err(Error::Contract("cannot score an empty target".into()));
        }
        let ctx = self.encode(source_ids)?;
        self.sequence_nll_in_context(&ctx, target_ids)
    }

    /// Same loss over an already-encoded (possibly padded) context.
    pub fn sequence_nll_in_context(
        &mut self,
        ctx: &ContextSet,
        target_ids: &[usize],
    ) -> Result<Var> {
        if target_ids.is_empty() {
            return Err(Error::Contract("cannot score an empty target".into()));
        }
        let mut state = self.start_decoder(ctx)?;
        let mut dmem = self.start_dynamic_memory(ctx);
        let mut total: Option<Var> = None;
        let eos = crate::data::EOS_ID;
        for &gold in target_ids.iter().chain(std::iter::once(&eos)) {
            let step = self.decoder_step(ctx, &state, dmem.as_ref())?;
            let step_loss = self.tape.nll(step.probs, gold)?;
            total = Some(match total {
                Some(t) => self.tape.add(t, step_loss)?,
                None => step_loss,
            });
            state = step.state.with_token(gold);
            dmem = step.dmem;
        }
        Ok(total.expect("target is non-empty"))
    }
}

#[cfg(test)]
mod tests;
