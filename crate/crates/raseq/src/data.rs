//! Vocabulary, corpus ingestion, and synthetic task generation.
//!
//! Corpus files are UTF-8, one sentence per line, whitespace-tokenized
//! upstream. The four reserved ids are fixed: PAD=0, BOS=1, EOS=2, UNK=3.

use crate::rng::Rng;
use crate::{Error, Result};
use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

pub const PAD_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const UNK_ID: usize = 3;
pub const RESERVED_TOKENS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Bidirectional token↔id map with the reserved ids at 0..4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Keep the `cap − 4` most frequent tokens; ties break lexicographically
    /// so construction is deterministic.
    pub fn build<'a>(
        sentences: impl IntoIterator<Item = &'a [String]>,
        cap: usize,
    ) -> Result<Vocab> {
        if cap < 5 {
            return Err(Error::Contract(format!(
                "vocabulary cap {cap} leaves no room beyond the 4 reserved tokens"
            )));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut any = false;
        for sentence in sentences {
            any = true;
            for token in sentence {
                *counts.entry(token.as_str()).or_insert(0) += 1;
            }
        }
        if !any {
            return Err(Error::Contract(
                "cannot build a vocabulary from an empty corpus".into(),
            ));
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(cap - 4);

        let mut tokens: Vec<String> = RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend(ranked.into_iter().map(|(t, _)| t.to_string()));
        Ok(Vocab::from_tokens(tokens))
    }

    fn from_tokens(tokens: Vec<String>) -> Vocab {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Id for a token; unknown tokens map to UNK.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&id| self.tokens[id].clone()).collect()
    }

    /// One token per line after a header comment documenting the id offset.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file =
            std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut body = String::from(
            "# line N (1-based, header excluded) holds the token with id N+3; ids 0-3 are <pad> <bos> <eos> <unk>\n",
        );
        for token in &self.tokens[4..] {
            body.push_str(token);
            body.push('\n');
        }
        file.write_all(body.as_bytes())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Vocab> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut tokens: Vec<String> = RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
        for (lineno, line) in text.lines().enumerate() {
            if lineno == 0 && line.starts_with('#') {
                continue;
            }
            if line.is_empty() {
                continue;
            }
            tokens.push(line.to_string());
        }
        Ok(Vocab::from_tokens(tokens))
    }
}

/// Aligned sentence pairs; neither side is ever empty.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParallelCorpus {
    pub pairs: Vec<(Vec<String>, Vec<String>)>,
}

impl ParallelCorpus {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn sources(&self) -> impl Iterator<Item = &[String]> {
        self.pairs.iter().map(|(s, _)| s.as_slice())
    }

    pub fn targets(&self) -> impl Iterator<Item = &[String]> {
        self.pairs.iter().map(|(_, t)| t.as_slice())
    }

    /// Drop pairs where either side exceeds `max_len` tokens.
    pub fn filter_by_length(&self, max_len: usize) -> ParallelCorpus {
        ParallelCorpus {
            pairs: self
                .pairs
                .iter()
                .filter(|(s, t)| s.len() <= max_len && t.len() <= max_len)
                .cloned()
                .collect(),
        }
    }
}

/// Read a parallel corpus from two line-aligned files. Returns the corpus
/// and the number of pairs dropped for having an empty side.
pub fn load_corpus(source_path: &Path, target_path: &Path) -> Result<(ParallelCorpus, usize)> {
    let read_lines = |path: &Path| -> Result<Vec<String>> {
        let file =
            std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        BufReader::new(file)
            .lines()
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::io(path.display().to_string(), e))
    };
    let src_lines = read_lines(source_path)?;
    let tgt_lines = read_lines(target_path)?;
    if src_lines.len() != tgt_lines.len() {
        return Err(Error::Format(format!(
            "line counts disagree: {} has {} lines, {} has {}",
            source_path.display(),
            src_lines.len(),
            target_path.display(),
            tgt_lines.len()
        )));
    }
    let mut pairs = Vec::with_capacity(src_lines.len());
    let mut dropped = 0;
    for (src, tgt) in src_lines.into_iter().zip(tgt_lines) {
        let s: Vec<String> = src.split_whitespace().map(str::to_string).collect();
        let t: Vec<String> = tgt.split_whitespace().map(str::to_string).collect();
        if s.is_empty() || t.is_empty() {
            dropped += 1;
            continue;
        }
        pairs.push((s, t));
    }
    Ok((ParallelCorpus { pairs }, dropped))
}

/// Write a corpus back out as `<prefix>.src` / `<prefix>.tgt`.
pub fn save_corpus(corpus: &ParallelCorpus, prefix: &Path) -> Result<()> {
    let write_side = |suffix: &str, side: Box<dyn Iterator<Item = &[String]> + '_>| -> Result<()> {
        let path = prefix.with_extension(suffix);
        let mut body = String::new();
        for sentence in side {
            body.push_str(&sentence.join(" "));
            body.push('\n');
        }
        std::fs::write(&path, body).map_err(|e| Error::io(path.display().to_string(), e))
    };
    write_side("src", Box::new(corpus.sources()))?;
    write_side("tgt", Box::new(corpus.targets()))
}

/// The synthetic task families used for desk-scale verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    /// target = source; the basic sanity benchmark.
    Copy,
    /// Each source token expands to a fixed 1–3 copies, so getting the
    /// output length right requires tracking per-word attention history.
    Fertility,
    /// Adjacent pairs swapped: local distortion that rewards seeing the
    /// neighborhood of past attention.
    Reorder,
    /// Copy where a fifth of the tokens come from a long tail that falls
    /// out of the vocabulary, exercising UNK replacement.
    RareWord,
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<TaskKind> {
        match s {
            "copy" => Ok(TaskKind::Copy),
            "fertility" => Ok(TaskKind::Fertility),
            "reorder" => Ok(TaskKind::Reorder),
            "rare-word" => Ok(TaskKind::RareWord),
            other => Err(Error::Contract(format!(
                "unknown task {other:?}; expected copy, fertility, reorder or rare-word"
            ))),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            TaskKind::Copy => "copy",
            TaskKind::Fertility => "fertility",
            TaskKind::Reorder => "reorder",
            TaskKind::RareWord => "rare-word",
        };
        f.write_str(name)
    }
}

/// Generation recipe; the corpus is a pure function of this value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub task: TaskKind,
    /// Number of distinct common content tokens.
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub pairs: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(task: TaskKind, pairs: usize, seed: u64) -> Self {
        SyntheticSpec {
            task,
            vocab_size: 16,
            min_len: 3,
            max_len: 10,
            pairs,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.pairs == 0 {
            return Err(Error::Contract(
                "synthetic spec needs a positive vocabulary and pair count".into(),
            ));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::Contract(format!(
                "bad length range {}..={}",
                self.min_len, self.max_len
            )));
        }
        Ok(())
    }
}

fn common_token(index: usize) -> String {
    format!("w{index:02}")
}

fn rare_token(index: usize) -> String {
    format!("r{index:04}")
}

/// The fixed per-token repetition count of the fertility task: 1, 2 or 3,
/// derived from the seed alone.
pub fn fertility_of(spec: &SyntheticSpec, token_index: usize) -> usize {
    1 + Rng::new(spec.seed)
        .derive(0xFE27 + token_index as u64)
        .below(3)
}

/// Deterministically generate a task corpus.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<ParallelCorpus> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed).derive(match spec.task {
        TaskKind::Copy => 1,
        TaskKind::Fertility => 2,
        TaskKind::Reorder => 3,
        TaskKind::RareWord => 4,
    });
    // Long tail: twenty times the common inventory, each item rare enough
    // to fall out of any frequency-capped vocabulary.
    let tail_size = spec.vocab_size * 20;
    let mut pairs = Vec::with_capacity(spec.pairs);
    for _ in 0..spec.pairs {
        let len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
        let source: Vec<String> = (0..len)
            .map(|_| {
                if spec.task == TaskKind::RareWord && rng.next_f64() < 0.2 {
                    rare_token(rng.below(tail_size))
                } else {
                    common_token(rng.below(spec.vocab_size))
                }
            })
            .collect();
        let target: Vec<String> = match spec.task {
            TaskKind::Copy | TaskKind::RareWord => source.clone(),
            TaskKind::Fertility => source
                .iter()
                .flat_map(|t| {
                    let idx: usize = t[1..].parse().expect("generated token");
                    std::iter::repeat_n(t.clone(), fertility_of(spec, idx))
                })
                .collect(),
            TaskKind::Reorder => {
                let mut out = source.clone();
                for pair in out.chunks_exact_mut(2) {
                    pair.swap(0, 1);
                }
                out
            }
        };
        pairs.push((source, target));
    }
    Ok(ParallelCorpus { pairs })
}
