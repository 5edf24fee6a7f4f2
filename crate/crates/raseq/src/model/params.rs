use crate::rng::Rng;
use crate::tensor::{LstmGates, Real, Tape, Tensor, Var};
use crate::{Error, Result};

/// Hyper-parameters that fix every weight shape.
///
/// `attn_dim` (rows of the attention projections) and `mlp_dim` (output MLP
/// width) both default to `hidden_dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    /// Word embedding size `e`.
    pub embed_dim: usize,
    /// Encoder/decoder LSTM size `n`; annotations have length `2n`.
    pub hidden_dim: usize,
    /// Per-source-word attention memory size `m`.
    pub mem_dim: usize,
    /// Window radius `k`; the memory consumes `2k+1` weights per step.
    pub window: usize,
    /// When false the model is the plain content-addressed baseline and no
    /// memory weights exist.
    pub use_dynamic: bool,
}

impl ModelConfig {
    /// Desk-scale defaults: big enough to learn the synthetic tasks, small
    /// enough for CPU training in minutes.
    pub fn desk(src_vocab: usize, tgt_vocab: usize, use_dynamic: bool, window: usize) -> Self {
        ModelConfig {
            src_vocab,
            tgt_vocab,
            embed_dim: 64,
            hidden_dim: 64,
            mem_dim: 32,
            window,
            use_dynamic,
        }
    }

    pub fn attn_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn mlp_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn annotation_dim(&self) -> usize {
        2 * self.hidden_dim
    }

    pub fn window_len(&self) -> usize {
        2 * self.window + 1
    }

    /// Width of the attention key: `[h_i]` alone, or `[h_i, d_ij]`.
    pub fn attn_key_dim(&self) -> usize {
        self.annotation_dim() + if self.use_dynamic { self.mem_dim } else { 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.src_vocab < 5 || self.tgt_vocab < 5 {
            return Err(Error::Contract(format!(
                "vocabulary must hold the 4 reserved tokens plus content, got src {} tgt {}",
                self.src_vocab, self.tgt_vocab
            )));
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Contract(
                "embedding and hidden sizes must be positive".into(),
            ));
        }
        if self.use_dynamic && self.mem_dim == 0 {
            return Err(Error::Contract(
                "dynamic attention memory requires a positive memory size".into(),
            ));
        }
        Ok(())
    }
}

/// One LSTM's weights: `w` input projection, `u` recurrent projection, `b`
/// bias, all over the stacked i/f/o/g gates.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights<F = f32> {
    pub w: Tensor<F>,
    pub u: Tensor<F>,
    pub b: Tensor<F>,
}

impl<F: Real> LstmWeights<F> {
    fn init(rng: &mut Rng, input_dim: usize, hidden_dim: usize) -> Self {
        LstmWeights {
            w: uniform(rng, vec![4 * hidden_dim, input_dim]),
            u: uniform(rng, vec![4 * hidden_dim, hidden_dim]),
            b: uniform(rng, vec![4 * hidden_dim]),
        }
    }

    fn cast<G: Real>(&self) -> LstmWeights<G> {
        LstmWeights {
            w: self.w.cast(),
            u: self.u.cast(),
            b: self.b.cast(),
        }
    }
}

/// Every learned weight in the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F = f32> {
    pub cfg: ModelConfig,
    /// Source embedding `[src_vocab × e]`.
    pub src_embed: Tensor<F>,
    /// Target embedding `[tgt_vocab × e]`.
    pub tgt_embed: Tensor<F>,
    pub enc_fwd: LstmWeights<F>,
    pub enc_bwd: LstmWeights<F>,
    /// Decoder LSTM; input is `[embedded token, previous context]`.
    pub dec: LstmWeights<F>,
    /// Attention-memory LSTM; input is a window of `2k+1` weights.
    pub dmem: Option<LstmWeights<F>>,
    /// Maps the mean annotation to the initial decoder state `[n × 2n]`.
    pub w_init: Tensor<F>,
    /// Attention scoring vector `[a]`.
    pub v_attn: Tensor<F>,
    /// Attention key projection `[a × attn_key_dim]`.
    pub w_attn: Tensor<F>,
    /// Attention query projection `[a × n]`.
    pub u_attn: Tensor<F>,
    /// Output MLP `[n' × 3n]` over `[s_j, c_j]`.
    pub w_out1: Tensor<F>,
    pub b_out1: Tensor<F>,
    /// Output vocabulary projection `[tgt_vocab × n']`.
    pub w_out2: Tensor<F>,
}

fn uniform<F: Real>(rng: &mut Rng, shape: Vec<usize>) -> Tensor<F> {
    let numel: usize = shape.iter().product();
    let data = (0..numel)
        .map(|_| F::from_f64(rng.uniform(-0.1, 0.1)))
        .collect();
    Tensor::new(shape, data).expect("shape/data agree by construction")
}

impl<F: Real> ModelParams<F> {
    /// Fresh parameters, every entry uniform in `[-0.1, 0.1)`. The draw
    /// order is fixed, so a seed pins the full initialization.
    pub fn init(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng::new(seed);
        let (e, n) = (cfg.embed_dim, cfg.hidden_dim);
        Ok(ModelParams {
            cfg,
            src_embed: uniform(&mut rng, vec![cfg.src_vocab, e]),
            tgt_embed: uniform(&mut rng, vec![cfg.tgt_vocab, e]),
            enc_fwd: LstmWeights::init(&mut rng, e, n),
            enc_bwd: LstmWeights::init(&mut rng, e, n),
            dec: LstmWeights::init(&mut rng, e + 2 * n, n),
            dmem: cfg
                .use_dynamic
                .then(|| LstmWeights::init(&mut rng, cfg.window_len(), cfg.mem_dim)),
            w_init: uniform(&mut rng, vec![n, 2 * n]),
            v_attn: uniform(&mut rng, vec![cfg.attn_dim()]),
            w_attn: uniform(&mut rng, vec![cfg.attn_dim(), cfg.attn_key_dim()]),
            u_attn: uniform(&mut rng, vec![cfg.attn_dim(), n]),
            w_out1: uniform(&mut rng, vec![cfg.mlp_dim(), 3 * n]),
            b_out1: uniform(&mut rng, vec![cfg.mlp_dim()]),
            w_out2: uniform(&mut rng, vec![cfg.tgt_vocab, cfg.mlp_dim()]),
        })
    }

    /// Parameters in a fixed order; this order is the checkpoint manifest
    /// order and the gradient-slot order.
    pub fn visit(&self) -> Vec<(&'static str, &Tensor<F>)> {
        let mut out = vec![
            ("src_embed", &self.src_embed),
            ("tgt_embed", &self.tgt_embed),
            ("enc_fwd.w", &self.enc_fwd.w),
            ("enc_fwd.u", &self.enc_fwd.u),
            ("enc_fwd.b", &self.enc_fwd.b),
            ("enc_bwd.w", &self.enc_bwd.w),
            ("enc_bwd.u", &self.enc_bwd.u),
            ("enc_bwd.b", &self.enc_bwd.b),
            ("dec.w", &self.dec.w),
            ("dec.u", &self.dec.u),
            ("dec.b", &self.dec.b),
        ];
        if let Some(dmem) = &self.dmem {
            out.push(("dmem.w", &dmem.w));
            out.push(("dmem.u", &dmem.u));
            out.push(("dmem.b", &dmem.b));
        }
        out.extend([
            ("w_init", &self.w_init),
            ("v_attn", &self.v_attn),
            ("w_attn", &self.w_attn),
            ("u_attn", &self.u_attn),
            ("w_out1", &self.w_out1),
            ("b_out1", &self.b_out1),
            ("w_out2", &self.w_out2),
        ]);
        out
    }

    pub fn visit_mut(&mut self) -> Vec<(&'static str, &mut Tensor<F>)> {
        let mut out = vec![
            ("src_embed", &mut self.src_embed),
            ("tgt_embed", &mut self.tgt_embed),
            ("enc_fwd.w", &mut self.enc_fwd.w),
            ("enc_fwd.u", &mut self.enc_fwd.u),
            ("enc_fwd.b", &mut self.enc_fwd.b),
            ("enc_bwd.w", &mut self.enc_bwd.w),
            ("enc_bwd.u", &mut self.enc_bwd.u),
            ("enc_bwd.b", &mut self.enc_bwd.b),
            ("dec.w", &mut self.dec.w),
            ("dec.u", &mut self.dec.u),
            ("dec.b", &mut self.dec.b),
        ];
        if let Some(dmem) = &mut self.dmem {
            out.push(("dmem.w", &mut dmem.w));
            out.push(("dmem.u", &mut dmem.u));
            out.push(("dmem.b", &mut dmem.b));
        }
        out.extend([
            ("w_init", &mut self.w_init),
            ("v_attn", &mut self.v_attn),
            ("w_attn", &mut self.w_attn),
            ("u_attn", &mut self.u_attn),
            ("w_out1", &mut self.w_out1),
            ("b_out1", &mut self.b_out1),
            ("w_out2", &mut self.w_out2),
        ]);
        out
    }

    pub fn param_count(&self) -> usize {
        self.visit().iter().map(|(_, t)| t.len()).sum()
    }

    /// Rebuild parameters from tensors listed in [`shape_manifest`] order.
    pub fn from_ordered(cfg: ModelConfig, tensors: Vec<Tensor<F>>) -> Result<Self> {
        cfg.validate()?;
        let manifest = shape_manifest(&cfg);
        if tensors.len() != manifest.len() {
            return Err(Error::Format(format!(
                "expected {} parameter tensors, got {}",
                manifest.len(),
                tensors.len()
            )));
        }
        for ((name, shape), tensor) in manifest.iter().zip(&tensors) {
            if tensor.shape() != shape.as_slice() {
                return Err(Error::Format(format!(
                    "parameter {name} has shape {:?}, expected {shape:?}",
                    tensor.shape()
                )));
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("count checked above");
        let src_embed = next();
        let tgt_embed = next();
        let enc_fwd = LstmWeights {
            w: next(),
            u: next(),
            b: next(),
        };
        let enc_bwd = LstmWeights {
            w: next(),
            u: next(),
            b: next(),
        };
        let dec = LstmWeights {
            w: next(),
            u: next(),
            b: next(),
        };
        let dmem = cfg.use_dynamic.then(|| LstmWeights {
            w: next(),
            u: next(),
            b: next(),
        });
        Ok(ModelParams {
            cfg,
            src_embed,
            tgt_embed,
            enc_fwd,
            enc_bwd,
            dec,
            dmem,
            w_init: next(),
            v_attn: next(),
            w_attn: next(),
            u_attn: next(),
            w_out1: next(),
            b_out1: next(),
            w_out2: next(),
        })
    }

    /// All parameters as one flat `f64` vector in [`visit`] order; the
    /// finite-difference oracle perturbs this.
    pub fn flatten_f64(&self) -> Vec<f64> {
        self.visit()
            .iter()
            .flat_map(|(_, t)| t.data().iter().map(|v| v.to_f64()))
            .collect()
    }

    /// Inverse of [`flatten_f64`].
    pub fn from_flat(cfg: ModelConfig, flat: &[f64]) -> Result<Self> {
        let manifest = shape_manifest(&cfg);
        let expected: usize = manifest
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum();
        if flat.len() != expected {
            return Err(Error::Dimension(format!(
                "flat parameter vector has {} entries, expected {expected}",
                flat.len()
            )));
        }
        let mut tensors = Vec::with_capacity(manifest.len());
        let mut cursor = 0;
        for (_, shape) in &manifest {
            let numel: usize = shape.iter().product();
            let data = flat[cursor..cursor + numel]
                .iter()
                .map(|&v| F::from_f64(v))
                .collect();
            tensors.push(Tensor::new(shape.clone(), data)?);
            cursor += numel;
        }
        ModelParams::from_ordered(cfg, tensors)
    }

    pub fn cast<G: Real>(&self) -> ModelParams<G> {
        ModelParams {
            cfg: self.cfg,
            src_embed: self.src_embed.cast(),
            tgt_embed: self.tgt_embed.cast(),
            enc_fwd: self.enc_fwd.cast(),
            enc_bwd: self.enc_bwd.cast(),
            dec: self.dec.cast(),
            dmem: self.dmem.as_ref().map(|d| d.cast()),
            w_init: self.w_init.cast(),
            v_attn: self.v_attn.cast(),
            w_attn: self.w_attn.cast(),
            u_attn: self.u_attn.cast(),
            w_out1: self.w_out1.cast(),
            b_out1: self.b_out1.cast(),
            w_out2: self.w_out2.cast(),
        }
    }

    /// Register every parameter as a tape leaf.
    pub fn register(&self, tape: &mut Tape<F>) -> ParamVars {
        let mut reg = |t: &Tensor<F>| tape.leaf(t.clone());
        ParamVars {
            src_embed: reg(&self.src_embed),
            tgt_embed: reg(&self.tgt_embed),
            enc_fwd: LstmGates {
                w: reg(&self.enc_fwd.w),
                u: reg(&self.enc_fwd.u),
                b: reg(&self.enc_fwd.b),
            },
            enc_bwd: LstmGates {
                w: reg(&self.enc_bwd.w),
                u: reg(&self.enc_bwd.u),
                b: reg(&self.enc_bwd.b),
            },
            dec: LstmGates {
                w: reg(&self.dec.w),
                u: reg(&self.dec.u),
                b: reg(&self.dec.b),
            },
            dmem: self.dmem.as_ref().map(|d| LstmGates {
                w: reg(&d.w),
                u: reg(&d.u),
                b: reg(&d.b),
            }),
            w_init: reg(&self.w_init),
            v_attn: reg(&self.v_attn),
            w_attn: reg(&self.w_attn),
            u_attn: reg(&self.u_attn),
            w_out1: reg(&self.w_out1),
            b_out1: reg(&self.b_out1),
            w_out2: reg(&self.w_out2),
        }
    }
}

/// Canonical parameter order and shapes implied by a configuration; the
/// checkpoint manifest must match this exactly.
pub fn shape_manifest(cfg: &ModelConfig) -> Vec<(&'static str, Vec<usize>)> {
    let (e, n, m) = (cfg.embed_dim, cfg.hidden_dim, cfg.mem_dim);
    let mut out: Vec<(&'static str, Vec<usize>)> = vec![
        ("src_embed", vec![cfg.src_vocab, e]),
        ("tgt_embed", vec![cfg.tgt_vocab, e]),
        ("enc_fwd.w", vec![4 * n, e]),
        ("enc_fwd.u", vec![4 * n, n]),
        ("enc_fwd.b", vec![4 * n]),
        ("enc_bwd.w", vec![4 * n, e]),
        ("enc_bwd.u", vec![4 * n, n]),
        ("enc_bwd.b", vec![4 * n]),
        ("dec.w", vec![4 * n, e + 2 * n]),
        ("dec.u", vec![4 * n, n]),
        ("dec.b", vec![4 * n]),
    ];
    if cfg.use_dynamic {
        out.push(("dmem.w", vec![4 * m, cfg.window_len()]));
        out.push(("dmem.u", vec![4 * m, m]));
        out.push(("dmem.b", vec![4 * m]));
    }
    out.extend([
        ("w_init", vec![n, 2 * n]),
        ("v_attn", vec![cfg.attn_dim()]),
        ("w_attn", vec![cfg.attn_dim(), cfg.attn_key_dim()]),
        ("u_attn", vec![cfg.attn_dim(), n]),
        ("w_out1", vec![cfg.mlp_dim(), 3 * n]),
        ("b_out1", vec![cfg.mlp_dim()]),
        ("w_out2", vec![cfg.tgt_vocab, cfg.mlp_dim()]),
    ]);
    out
}

/// Tape handles for registered parameters, mirroring [`ModelParams`].
#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    pub src_embed: Var,
    pub tgt_embed: Var,
    pub enc_fwd: LstmGates,
    pub enc_bwd: LstmGates,
    pub dec: LstmGates,
    pub dmem: Option<LstmGates>,
    pub w_init: Var,
    pub v_attn: Var,
    pub w_attn: Var,
    pub u_attn: Var,
    pub w_out1: Var,
    pub b_out1: Var,
    pub w_out2: Var,
}

impl ParamVars {
    /// Vars in [`ModelParams::visit`] order, for gradient harvesting.
    pub fn ordered(&self) -> Vec<Var> {
        let mut out = vec![
            self.src_embed,
            self.tgt_embed,
            self.enc_fwd.w,
            self.enc_fwd.u,
            self.enc_fwd.b,
            self.enc_bwd.w,
            self.enc_bwd.u,
            self.enc_bwd.b,
            self.dec.w,
            self.dec.u,
            self.dec.b,
        ];
        if let Some(dmem) = &self.dmem {
            out.push(dmem.w);
            out.push(dmem.u);
            out.push(dmem.b);
        }
        out.extend([
            self.w_init,
            self.v_attn,
            self.w_attn,
            self.u_attn,
            self.w_out1,
            self.b_out1,
            self.w_out2,
        ]);
        out
    }
}
