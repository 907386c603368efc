//! Architecture configuration: every knob the experiments vary, the
//! closed-form parameter count, and the named size presets.

use serde::{Deserialize, Serialize};

use crate::ModelError;

/// Encoder-decoder Transformer hyperparameters. `n_heads * d_kv` is the
/// attention inner width and is independent of `d_model`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub n_heads: usize,
    pub d_kv: usize,
    pub vocab: usize,
    pub max_len: usize,
    pub tie_embeddings: bool,
    pub rel_buckets: usize,
    pub rel_max_distance: usize,
}

impl ArchConfig {
    pub fn new(nl: usize, d_model: usize, d_ff: usize, n_heads: usize, d_kv: usize, vocab: usize) -> Self {
        ArchConfig {
            encoder_layers: nl,
            decoder_layers: nl,
            d_model,
            d_ff,
            n_heads,
            d_kv,
            vocab,
            max_len: 128,
            tie_embeddings: true,
            rel_buckets: 32,
            rel_max_distance: 128,
        }
    }

    /// Sets encoder and decoder depth through the single NL knob.
    pub fn with_nl(mut self, nl: usize) -> Self {
        self.encoder_layers = nl;
        self.decoder_layers = nl;
        self
    }

    pub fn with_max_len(mut self, max_len: usize) -> Self {
        self.max_len = max_len;
        self
    }

    pub fn with_vocab(mut self, vocab: usize) -> Self {
        self.vocab = vocab;
        self
    }

    /// T5 size presets. The published checkpoints use 64-wide key/value
    /// heads across all four sizes, which is what reproduces their reported
    /// parameter totals.
    pub fn t5_tiny(vocab: usize) -> Self {
        Self::new(4, 256, 1024, 4, 64, vocab)
    }

    pub fn t5_mini(vocab: usize) -> Self {
        Self::new(4, 384, 1536, 8, 64, vocab)
    }

    pub fn t5_small(vocab: usize) -> Self {
        Self::new(6, 512, 2048, 8, 64, vocab)
    }

    pub fn t5_base(vocab: usize) -> Self {
        Self::new(12, 768, 3072, 12, 64, vocab)
    }

    /// Desk-scale model used by the CPU experiments.
    pub fn desk(vocab: usize) -> Self {
        Self::new(2, 64, 256, 4, 16, vocab)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("encoder_layers", self.encoder_layers),
            ("decoder_layers", self.decoder_layers),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("n_heads", self.n_heads),
            ("d_kv", self.d_kv),
            ("vocab", self.vocab),
            ("max_len", self.max_len),
            ("rel_buckets", self.rel_buckets),
            ("rel_max_distance", self.rel_max_distance),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(ModelError::BadConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn inner_dim(&self) -> usize {
        self.n_heads * self.d_kv
    }

    /// Closed-form parameter count:
    ///
    /// ```text
    /// inner     = NH * KV
    /// attn      = 4 * DM * inner              (q, k, v, o)
    /// ff        = 2 * DM * FF                 (wi, wo)
    /// enc_layer = attn + ff + 2*DM            (two norm gains)
    /// dec_layer = 2*attn + ff + 3*DM          (self, cross, three norms)
    /// encoder   = EL*enc_layer + DM + NB*NH   (final norm, shared rel bias)
    /// decoder   = DL*dec_layer + DM + NB*NH
    /// embedding = V*DM   (+ DM*V if untied)
    /// ```
    pub fn count_params(&self) -> u64 {
        let dm = self.d_model as u64;
        let inner = self.inner_dim() as u64;
        let ff = self.d_ff as u64;
        let v = self.vocab as u64;
        let attn = 4 * dm * inner;
        let ff_block = 2 * dm * ff;
        let enc_layer = attn + ff_block + 2 * dm;
        let dec_layer = 2 * attn + ff_block + 3 * dm;
        let rel = (self.rel_buckets * self.n_heads) as u64;
        let encoder = self.encoder_layers as u64 * enc_layer + dm + rel;
        let decoder = self.decoder_layers as u64 * dec_layer + dm + rel;
        let mut embedding = v * dm;
        if !self.tie_embeddings {
            embedding += dm * v;
        }
        embedding + encoder + decoder
    }

    /// Canonical parameter name/shape listing; `init` builds from this and
    /// the checkpoint format follows its order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let dm = self.d_model;
        let inner = self.inner_dim();
        let mut out: Vec<(String, Vec<usize>)> = Vec::new();
        out.push(("shared.embed".into(), vec![self.vocab, dm]));
        if !self.tie_embeddings {
            out.push(("decoder.lm_head".into(), vec![dm, self.vocab]));
        }
        out.push(("encoder.relbias".into(), vec![self.rel_buckets, self.n_heads]));
        out.push(("decoder.relbias".into(), vec![self.rel_buckets, self.n_heads]));
        for l in 0..self.encoder_layers {
            let p = format!("encoder.{l}");
            out.push((format!("{p}.attn.norm"), vec![dm]));
            out.push((format!("{p}.attn.q"), vec![dm, inner]));
            out.push((format!("{p}.attn.k"), vec![dm, inner]));
            out.push((format!("{p}.attn.v"), vec![dm, inner]));
            out.push((format!("{p}.attn.o"), vec![inner, dm]));
            out.push((format!("{p}.ff.norm"), vec![dm]));
            out.push((format!("{p}.ff.wi"), vec![dm, self.d_ff]));
            out.push((format!("{p}.ff.wo"), vec![self.d_ff, dm]));
        }
        out.push(("encoder.final_norm".into(), vec![dm]));
        for l in 0..self.decoder_layers {
            let p = format!("decoder.{l}");
            out.push((format!("{p}.self.norm"), vec![dm]));
            out.push((format!("{p}.self.q"), vec![dm, inner]));
            out.push((format!("{p}.self.k"), vec![dm, inner]));
            out.push((format!("{p}.self.v"), vec![dm, inner]));
            out.push((format!("{p}.self.o"), vec![inner, dm]));
            out.push((format!("{p}.cross.norm"), vec![dm]));
            out.push((format!("{p}.cross.q"), vec![dm, inner]));
            out.push((format!("{p}.cross.k"), vec![dm, inner]));
            out.push((format!("{p}.cross.v"), vec![dm, inner]));
            out.push((format!("{p}.cross.o"), vec![inner, dm]));
            out.push((format!("{p}.ff.norm"), vec![dm]));
            out.push((format!("{p}.ff.wi"), vec![dm, self.d_ff]));
            out.push((format!("{p}.ff.wo"), vec![self.d_ff, dm]));
        }
        out.push(("decoder.final_norm".into(), vec![dm]));
        out
    }

    pub fn canonical_string(&self) -> String {
        format!(
            "EL{},DL{},DM{},FF{},NH{},KV{},V{},L{},tie{},NB{},MD{}",
            self.encoder_layers,
            self.decoder_layers,
            self.d_model,
            self.d_ff,
            self.n_heads,
            self.d_kv,
            self.vocab,
            self.max_len,
            self.tie_embeddings as u8,
            self.rel_buckets,
            self.rel_max_distance
        )
    }

    pub fn fingerprint(&self) -> String {
        format!("{:016x}", fnv1a64(self.canonical_string().as_bytes()))
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}
