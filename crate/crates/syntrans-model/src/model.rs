//! The encoder-decoder Transformer: pre-norm residual blocks, bucketed
//! relative position biases in self-attention (one shared table per stack),
//! bidirectional encoder attention, causal decoder attention, and
//! cross-attention over the encoder output. No biases in the projections;
//! tied input/output embeddings by default.

use indexmap::IndexMap;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{fnv1a64, ArchConfig};
use crate::graph::{Graph, NodeId};
use crate::relpos::bucket_matrix;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::ModelError;

pub const PAD: u32 = 0;
pub const EOS: u32 = 1;

/// One training batch: encoder inputs, shifted decoder inputs, and labels.
/// Rows are padded to the longest sequence at build time.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub src: Vec<Vec<u32>>,
    pub tgt_in: Vec<Vec<u32>>,
    pub tgt_out: Vec<Vec<u32>>,
}

impl Batch {
    /// Builds a teacher-forcing batch from (source, target) id pairs; the
    /// decoder input is the target shifted right behind the PAD start token.
    pub fn from_pairs(pairs: &[(Vec<u32>, Vec<u32>)]) -> Batch {
        let mut b = Batch::default();
        for (src, tgt) in pairs {
            let mut tgt_in = Vec::with_capacity(tgt.len());
            tgt_in.push(PAD);
            tgt_in.extend(tgt.iter().take(tgt.len().saturating_sub(1)));
            b.src.push(src.clone());
            b.tgt_in.push(tgt_in);
            b.tgt_out.push(tgt.clone());
        }
        b
    }
}

#[derive(Debug, Clone)]
pub struct Model<F: Scalar> {
    pub config: ArchConfig,
    pub params: IndexMap<String, Tensor<F>>,
    pub step: u64,
    /// Seed recorded at initialization; checkpoints carry it forward.
    pub rng_fingerprint: u64,
    /// Dropout rate on attention and feed-forward activations (0 disables).
    pub dropout: f64,
}

pub(crate) struct BuiltForward {
    pub logits: NodeId,
    pub encoder_out: NodeId,
    pub param_nodes: IndexMap<String, NodeId>,
    pub attention_probs: Vec<(String, NodeId)>,
}

impl<F: Scalar> Model<F> {
    /// Deterministic initialization: weights are N(0, 1/DM) (Box-Muller over
    /// a per-tensor seeded stream), norm gains are 1, relative-position bias
    /// tables are 0. Same (config, seed) gives identical parameters.
    pub fn init(config: &ArchConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let std = (1.0 / config.d_model as f64).sqrt();
        let mut params = IndexMap::new();
        for (name, shape) in config.param_shapes() {
            let numel: usize = shape.iter().product();
            let tensor = if name.ends_with("norm") {
                Tensor::from_vec(&shape, vec![F::ONE; numel])
            } else if name.ends_with("relbias") {
                Tensor::zeros(&shape)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(name.as_bytes()));
                let mut data = Vec::with_capacity(numel);
                while data.len() < numel {
                    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                    let u2: f64 = rng.gen_range(0.0..1.0);
                    let r = (-2.0 * u1.ln()).sqrt();
                    let theta = 2.0 * std::f64::consts::PI * u2;
                    data.push(F::from_f64(r * theta.cos() * std));
                    if data.len() < numel {
                        data.push(F::from_f64(r * theta.sin() * std));
                    }
                }
                let mut t = Tensor::from_vec(&shape, data);
                t.requires_grad = true;
                t
            };
            params.insert(name, tensor);
        }
        Ok(Model {
            config: config.clone(),
            params,
            step: 0,
            rng_fingerprint: seed,
            dropout: 0.0,
        })
    }

    fn validate_ids(&self, seqs: &[Vec<u32>], what: &str) -> Result<(), ModelError> {
        for seq in seqs {
            if seq.len() > self.config.max_len {
                return Err(ModelError::SequenceTooLong {
                    len: seq.len(),
                    max: self.config.max_len,
                });
            }
            for &id in seq {
                if id as usize >= self.config.vocab {
                    return Err(ModelError::IdOutOfRange {
                        id,
                        vocab: self.config.vocab,
                        what: what.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    fn pad_flat(seqs: &[Vec<u32>], width: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(seqs.len() * width);
        for seq in seqs {
            out.extend(seq.iter().map(|&t| t as usize));
            out.extend(std::iter::repeat(PAD as usize).take(width - seq.len()));
        }
        out
    }

    /// Additive key mask [B, 1, T]: 0 on real keys, large negative on pads.
    fn key_mask(seqs: &[Vec<u32>], width: usize) -> Tensor<F> {
        let mut mask = Tensor::zeros(&[seqs.len(), 1, width]);
        for (i, seq) in seqs.iter().enumerate() {
            for k in seq.len()..width {
                mask.data_mut()[i * width + k] = F::MASK_NEG;
            }
        }
        mask
    }

    fn causal_mask(b: usize, t: usize) -> Tensor<F> {
        let mut mask = Tensor::zeros(&[b, t, t]);
        for bi in 0..b {
            for q in 0..t {
                for k in (q + 1)..t {
                    mask.data_mut()[(bi * t + q) * t + k] = F::MASK_NEG;
                }
            }
        }
        mask
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_block(
        &self,
        g: &mut Graph<F>,
        x: NodeId,
        kv_input: Option<NodeId>,
        prefix: &str,
        nodes: &IndexMap<String, NodeId>,
        mask: &Tensor<F>,
        pos_bias: Option<NodeId>,
        b: usize,
        tq: usize,
        tk: usize,
        probs_out: &mut Vec<(String, NodeId)>,
        rng: &mut ChaCha8Rng,
    ) -> NodeId {
        let nh = self.config.n_heads;
        let kv = self.config.d_kv;
        let inner = self.config.inner_dim();
        let heads =
            |g: &mut Graph<F>, y: NodeId, w: NodeId, t: usize| {
                let proj = g.matmul(y, w, false);
                let reshaped = g.reshape(proj, &[b, t, nh, kv]);
                g.transpose12(reshaped)
            };

        let xn = g.rms_norm(x, nodes[&format!("{prefix}.norm")]);
        let kv_src = match kv_input {
            Some(enc) => enc,
            None => xn,
        };
        let q = heads(g, xn, nodes[&format!("{prefix}.q")], tq);
        let k = heads(g, kv_src, nodes[&format!("{prefix}.k")], tk);
        let v = heads(g, kv_src, nodes[&format!("{prefix}.v")], tk);

        let raw = g.bmm(q, k, true);
        let scaled = g.scale(raw, F::from_f64(1.0 / (kv as f64).sqrt()));
        let biased = match pos_bias {
            Some(bias) => g.add_pos_bias(scaled, bias),
            None => scaled,
        };
        let masked = g.add_mask(biased, mask.clone());
        let probs = g.softmax_rows(masked);
        g.set_label(probs, format!("{prefix}.probs"));
        probs_out.push((format!("{prefix}.probs"), probs));
        let probs = g.dropout(probs, self.dropout, rng);

        let ctx = g.bmm(probs, v, false);
        let merged = g.transpose12(ctx);
        let flat = g.reshape(merged, &[b, tq, inner]);
        let out = g.matmul(flat, nodes[&format!("{prefix}.o")], false);
        g.add(x, out)
    }

    fn ff_block(
        &self,
        g: &mut Graph<F>,
        x: NodeId,
        prefix: &str,
        nodes: &IndexMap<String, NodeId>,
        rng: &mut ChaCha8Rng,
    ) -> NodeId {
        let xn = g.rms_norm(x, nodes[&format!("{prefix}.norm")]);
        let h = g.matmul(xn, nodes[&format!("{prefix}.wi")], false);
        let h = g.relu(h);
        let h = g.dropout(h, self.dropout, rng);
        let out = g.matmul(h, nodes[&format!("{prefix}.wo")], false);
        g.add(x, out)
    }

    pub(crate) fn build(
        &self,
        g: &mut Graph<F>,
        src: &[Vec<u32>],
        tgt_in: &[Vec<u32>],
        rng: &mut ChaCha8Rng,
    ) -> Result<BuiltForward, ModelError> {
        if src.is_empty() || src.len() != tgt_in.len() {
            return Err(ModelError::BadBatch(format!(
                "{} source rows vs {} target rows",
                src.len(),
                tgt_in.len()
            )));
        }
        self.validate_ids(src, "source")?;
        self.validate_ids(tgt_in, "target")?;
        let b = src.len();
        let ts = src.iter().map(Vec::len).max().unwrap_or(0).max(1);
        let td = tgt_in.iter().map(Vec::len).max().unwrap_or(0).max(1);
        let cfg = &self.config;

        let mut nodes: IndexMap<String, NodeId> = IndexMap::new();
        for (name, tensor) in &self.params {
            let id = g.leaf(tensor.clone());
            g.set_label(id, name.clone());
            nodes.insert(name.clone(), id);
        }
        let mut probs_out = Vec::new();

        // Encoder.
        let src_flat = Self::pad_flat(src, ts);
        let src_mask = Self::key_mask(src, ts);
        let embedded = g.gather(nodes["shared.embed"], src_flat);
        let mut x = g.reshape(embedded, &[b, ts, cfg.d_model]);
        let enc_buckets = bucket_matrix(ts, ts, 0, true, cfg.rel_buckets, cfg.rel_max_distance);
        let enc_bias = g.bucket_bias(nodes["encoder.relbias"], enc_buckets, ts, ts);
        for l in 0..cfg.encoder_layers {
            let p = format!("encoder.{l}.attn");
            x = self.attention_block(
                g, x, None, &p, &nodes, &src_mask, Some(enc_bias), b, ts, ts, &mut probs_out, rng,
            );
            x = self.ff_block(g, x, &format!("encoder.{l}.ff"), &nodes, rng);
            g.set_label(x, format!("encoder.{l}.out"));
        }
        let enc_out = g.rms_norm(x, nodes["encoder.final_norm"]);

        // Decoder.
        let tgt_flat = Self::pad_flat(tgt_in, td);
        let causal = Self::causal_mask(b, td);
        let embedded = g.gather(nodes["shared.embed"], tgt_flat);
        let mut y = g.reshape(embedded, &[b, td, cfg.d_model]);
        let dec_buckets = bucket_matrix(td, td, 0, false, cfg.rel_buckets, cfg.rel_max_distance);
        let dec_bias = g.bucket_bias(nodes["decoder.relbias"], dec_buckets, td, td);
        for l in 0..cfg.decoder_layers {
            y = self.attention_block(
                g,
                y,
                None,
                &format!("decoder.{l}.self"),
                &nodes,
                &causal,
                Some(dec_bias),
                b,
                td,
                td,
                &mut probs_out,
                rng,
            );
            y = self.attention_block(
                g,
                y,
                Some(enc_out),
                &format!("decoder.{l}.cross"),
                &nodes,
                &src_mask,
                None,
                b,
                td,
                ts,
                &mut probs_out,
                rng,
            );
            y = self.ff_block(g, y, &format!("decoder.{l}.ff"), &nodes, rng);
            g.set_label(y, format!("decoder.{l}.out"));
        }
        let dec_out = g.rms_norm(y, nodes["decoder.final_norm"]);

        let logits = if cfg.tie_embeddings {
            g.matmul(dec_out, nodes["shared.embed"], true)
        } else {
            g.matmul(dec_out, nodes["decoder.lm_head"], false)
        };
        g.set_label(logits, "logits");
        Ok(BuiltForward {
            logits,
            encoder_out: enc_out,
            param_nodes: nodes,
            attention_probs: probs_out,
        })
    }

    fn inference_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.rng_fingerprint)
    }

    /// Teacher-forced logits [B, Td, vocab]. `tgt_in` is the shifted decoder
    /// input.
    pub fn forward(&self, src: &[Vec<u32>], tgt_in: &[Vec<u32>]) -> Result<Tensor<F>, ModelError> {
        let mut g = Graph::new();
        let mut rng = self.inference_rng();
        let built = self.build(&mut g, src, tgt_in, &mut rng)?;
        Ok(g.value(built.logits).clone())
    }

    /// Logits plus every attention probability tensor, labeled by block.
    pub fn forward_debug(
        &self,
        src: &[Vec<u32>],
        tgt_in: &[Vec<u32>],
    ) -> Result<(Tensor<F>, Vec<(String, Tensor<F>)>), ModelError> {
        let mut g = Graph::new();
        let mut rng = self.inference_rng();
        let built = self.build(&mut g, src, tgt_in, &mut rng)?;
        let probs = built
            .attention_probs
            .into_iter()
            .map(|(name, id)| (name, g.value(id).clone()))
            .collect();
        Ok((g.value(built.logits).clone(), probs))
    }

    fn loss_node(
        &self,
        g: &mut Graph<F>,
        batch: &Batch,
        rng: &mut ChaCha8Rng,
    ) -> Result<(NodeId, BuiltForward), ModelError> {
        if batch.tgt_out.iter().any(Vec::is_empty) {
            return Err(ModelError::EmptyTarget);
        }
        if batch.tgt_out.len() != batch.tgt_in.len() {
            return Err(ModelError::BadBatch("label rows vs decoder input rows".into()));
        }
        for (i, (ti, to)) in batch.tgt_in.iter().zip(&batch.tgt_out).enumerate() {
            if ti.len() != to.len() {
                return Err(ModelError::BadBatch(format!(
                    "row {i}: decoder input length {} vs label length {}",
                    ti.len(),
                    to.len()
                )));
            }
        }
        self.validate_ids(&batch.tgt_out, "label")?;
        let built = self.build(g, &batch.src, &batch.tgt_in, rng)?;
        let td = batch.tgt_in.iter().map(Vec::len).max().unwrap_or(0).max(1);
        let mut targets = Vec::with_capacity(batch.tgt_out.len() * td);
        let mut weights = Vec::with_capacity(targets.capacity());
        for row in &batch.tgt_out {
            for &t in row {
                targets.push(t as usize);
                weights.push(F::ONE);
            }
            for _ in row.len()..td {
                targets.push(PAD as usize);
                weights.push(F::ZERO);
            }
        }
        let loss = g.cross_entropy(built.logits, targets, weights);
        g.set_label(loss, "loss");
        Ok((loss, built))
    }

    /// Mean token cross-entropy over the batch (no gradients).
    pub fn loss(&self, batch: &Batch) -> Result<f64, ModelError> {
        let mut g = Graph::new();
        let mut rng = self.inference_rng();
        let (loss, _) = self.loss_node(&mut g, batch, &mut rng)?;
        let v = g.value(loss).item();
        if !v.is_finite() {
            return Err(self.nonfinite_error(&g));
        }
        Ok(v.to_f64())
    }

    fn nonfinite_error(&self, g: &Graph<F>) -> ModelError {
        let tensor = match g.first_nonfinite() {
            Some((id, label)) => label.unwrap_or_else(|| format!("node#{}", id.0)),
            None => "loss".to_string(),
        };
        ModelError::NonFinite { tensor }
    }

    /// Scalar loss and reverse-mode gradients for every parameter. `rng`
    /// drives dropout; pass a per-step stream during training.
    pub fn loss_and_grads(
        &self,
        batch: &Batch,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, IndexMap<String, Tensor<F>>), ModelError> {
        let mut g = Graph::new();
        let (loss, built) = self.loss_node(&mut g, batch, rng)?;
        let v = g.value(loss).item();
        if !v.is_finite() {
            return Err(self.nonfinite_error(&g));
        }
        g.backward(loss);
        let mut grads = IndexMap::new();
        for (name, node) in &built.param_nodes {
            let grad = g
                .take_grad(*node)
                .unwrap_or_else(|| Tensor::zeros(self.params[name].shape()));
            grads.insert(name.clone(), grad);
        }
        Ok((v.to_f64(), grads))
    }

    /// Maximum relative error between reverse-mode gradients and central
    /// finite differences over `samples` randomly chosen parameter elements.
    pub fn grad_check(&self, batch: &Batch, eps: f64, samples: usize, seed: u64) -> Result<f64, ModelError> {
        let mut rng = self.inference_rng();
        let (_, grads) = self.loss_and_grads(batch, &mut rng)?;
        let mut pick = ChaCha8Rng::seed_from_u64(seed);
        let names: Vec<&String> = self.params.keys().collect();
        let mut worst = 0.0f64;
        let mut probe = self.clone();
        for _ in 0..samples {
            let name = names[pick.gen_range(0..names.len())].clone();
            let numel = self.params[&name].numel();
            let idx = pick.gen_range(0..numel);
            let original = self.params[&name].data()[idx];

            let mut eval = |delta: f64| -> Result<f64, ModelError> {
                probe.params[&name].data_mut()[idx] = original + F::from_f64(delta);
                probe.loss(batch)
            };
            let plus = eval(eps)?;
            let minus = eval(-eps)?;
            probe.params[&name].data_mut()[idx] = original;

            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = grads[&name].data()[idx].to_f64();
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
        Ok(worst)
    }
}
