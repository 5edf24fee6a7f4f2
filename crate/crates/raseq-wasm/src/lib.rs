//! Browser playground: train a small sequence-to-sequence model on a
//! synthetic task right in the page, translate sentences, and inspect the
//! attention matrix as a heatmap.
//!
//! Exposed operations: construct a demo (task + attention variant), step
//! training epoch by epoch, and translate with a full attention trace.
//! [`DemoCore`] carries the logic with plain `String` errors so it can be
//! exercised natively; [`Demo`] is the thin wasm-bindgen wrapper.

use raseq::data::{generate_synthetic, SyntheticSpec, TaskKind, Vocab};
use raseq::eval::exact_match_rate;
use raseq::inference::decode;
use raseq::model::{ModelConfig, ModelParams};
use raseq::training::{encode_corpus, train_epoch, TrainConfig};
use std::str::FromStr;
use wasm_bindgen::prelude::*;

fn json_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn json_str_array(items: &[String]) -> String {
    let quoted: Vec<String> = items
        .iter()
        .map(|t| format!("\"{}\"", json_escape(t)))
        .collect();
    format!("[{}]", quoted.join(","))
}

/// One self-contained training/translation session.
pub struct DemoCore {
    params: ModelParams<f32>,
    vocab: Vocab,
    train_set: Vec<(Vec<usize>, Vec<usize>)>,
    test_set: Vec<(Vec<usize>, Vec<usize>)>,
    test_surface: Vec<(Vec<String>, Vec<String>)>,
    cfg: TrainConfig,
    epoch: usize,
}

impl DemoCore {
    pub fn new(task: &str, variant: &str, seed: u32) -> Result<DemoCore, String> {
        let task = TaskKind::from_str(task).map_err(|e| e.to_string())?;
        let (use_dynamic, window) = match variant {
            "baseline" => (false, 0),
            "win1" => (true, 0),
            "win11" => (true, 5),
            other => {
                return Err(format!(
                    "unknown variant {other:?}; expected baseline, win1 or win11"
                ))
            }
        };
        let spec = SyntheticSpec {
            task,
            vocab_size: 10,
            min_len: 3,
            max_len: 7,
            pairs: 820,
            seed: 1000 + seed as u64,
        };
        let corpus = generate_synthetic(&spec).map_err(|e| e.to_string())?;
        let vocab = Vocab::build(corpus.sources(), 16).map_err(|e| e.to_string())?;
        let encoded = encode_corpus(&corpus, &vocab, &vocab);
        let (test_set, train_set) = encoded.split_at(20);
        let test_surface = corpus.pairs[..20].to_vec();

        let model_cfg = ModelConfig {
            src_vocab: vocab.len(),
            tgt_vocab: vocab.len(),
            embed_dim: 32,
            hidden_dim: 32,
            mem_dim: 16,
            window,
            use_dynamic,
        };
        let params = ModelParams::init(model_cfg, seed as u64).map_err(|e| e.to_string())?;
        let cfg = TrainConfig {
            total_epochs: usize::MAX,
            batch_size: 1,
            lr_initial: 2.0,
            clip_norm: 0.5,
            halve_start_epoch: 14,
            halve_every: 2,
            seed: seed as u64,
            ..TrainConfig::default()
        };
        Ok(DemoCore {
            params,
            vocab,
            train_set: train_set.to_vec(),
            test_set: test_set.to_vec(),
            test_surface,
            cfg,
            epoch: 0,
        })
    }

    pub fn step_epoch(&mut self) -> Result<f64, String> {
        self.epoch += 1;
        train_epoch(&mut self.params, &self.train_set, &self.cfg, self.epoch)
            .map_err(|e| e.to_string())
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn test_exact_match(&self) -> Result<f64, String> {
        let mut hyps = Vec::new();
        let mut refs = Vec::new();
        for ((src_ids, _), (_, tgt_tokens)) in self.test_set.iter().zip(&self.test_surface) {
            let out = decode(&self.params, src_ids, 1, 2).map_err(|e| e.to_string())?;
            hyps.push(self.vocab.decode(&out.output_ids).join(" "));
            refs.push(tgt_tokens.join(" "));
        }
        exact_match_rate(&hyps, &refs).map_err(|e| e.to_string())
    }

    pub fn sample_source(&self, index: usize) -> String {
        let (src, _) = &self.test_surface[index % self.test_surface.len()];
        src.join(" ")
    }

    pub fn sample_reference(&self, index: usize) -> String {
        let (_, tgt) = &self.test_surface[index % self.test_surface.len()];
        tgt.join(" ")
    }

    /// Translate one whitespace-tokenized sentence into JSON:
    /// `{"source":[...],"output":[...],"attention":[[...]],"score":s}`.
    pub fn translate(&self, line: &str, beam: usize) -> Result<String, String> {
        let tokens: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        if tokens.is_empty() {
            return Err("type a sentence first".to_string());
        }
        let ids = self.vocab.encode(&tokens);
        let out = decode(&self.params, &ids, beam.max(1), 2).map_err(|e| e.to_string())?;
        let output = self.vocab.decode(&out.output_ids);

        let mut rows = Vec::new();
        for row in &out.trace.attention {
            let cells: Vec<String> = row.iter().map(|w| format!("{w:.6}")).collect();
            rows.push(format!("[{}]", cells.join(",")));
        }
        Ok(format!(
            "{{\"source\":{},\"output\":{},\"attention\":[{}],\"score\":{:.4}}}",
            json_str_array(&tokens),
            json_str_array(&output),
            rows.join(","),
            out.score
        ))
    }

    pub fn vocabulary(&self) -> String {
        (4..self.vocab.len())
            .map(|id| self.vocab.token(id))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// wasm-bindgen surface over [`DemoCore`].
#[wasm_bindgen]
pub struct Demo(DemoCore);

#[wasm_bindgen]
impl Demo {
    /// `task`: copy | reorder | fertility | rare-word.
    /// `variant`: baseline | win1 | win11.
    #[wasm_bindgen(constructor)]
    pub fn new(task: &str, variant: &str, seed: u32) -> Result<Demo, JsValue> {
        DemoCore::new(task, variant, seed)
            .map(Demo)
            .map_err(|e| JsValue::from_str(&e))
    }

    /// Run one training epoch; returns the mean token NLL.
    pub fn step_epoch(&mut self) -> Result<f64, JsValue> {
        self.0.step_epoch().map_err(|e| JsValue::from_str(&e))
    }

    pub fn epoch(&self) -> u32 {
        self.0.epoch() as u32
    }

    /// Greedy exact-match rate (percent) on the 20 held-out sentences.
    pub fn test_exact_match(&self) -> Result<f64, JsValue> {
        self.0.test_exact_match().map_err(|e| JsValue::from_str(&e))
    }

    /// A held-out source sentence to try (index wraps around).
    pub fn sample_source(&self, index: u32) -> String {
        self.0.sample_source(index as usize)
    }

    /// The reference target for the same sample index.
    pub fn sample_reference(&self, index: u32) -> String {
        self.0.sample_reference(index as usize)
    }

    /// Translate one sentence; returns the trace as a JSON string.
    pub fn translate(&self, line: &str, beam: u32) -> Result<String, JsValue> {
        self.0
            .translate(line, beam as usize)
            .map_err(|e| JsValue::from_str(&e))
    }

    /// Tokens the model knows, space-separated.
    pub fn vocabulary(&self) -> String {
        self.0.vocabulary()
    }
}
