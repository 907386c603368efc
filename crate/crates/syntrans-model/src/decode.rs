//! Greedy decoding. The model side runs the decoder incrementally with
//! cached self-attention keys/values and precomputed cross-attention
//! projections; a parity test pins it to the teacher-forced graph path.

use crate::model::{Model, EOS, PAD};
use crate::relpos::relative_bucket;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::ModelError;

/// Anything that can score the next token given the source and the tokens
/// emitted so far. Tests use rigged scorers; the model implements it with a
/// KV cache.
pub trait TokenScorer {
    type State;
    fn start(&self, src: &[u32]) -> Result<Self::State, ModelError>;
    /// Feeds the previously emitted token (PAD at the first step) and
    /// returns logits for the next position.
    fn step(&self, state: &mut Self::State, prev: u32) -> Result<Vec<f64>, ModelError>;
}

/// Argmax decoding until EOS or `max_len` tokens; ties resolve to the
/// lowest id. Deterministic by construction.
pub fn greedy_decode<S: TokenScorer>(
    scorer: &S,
    src: &[u32],
    max_len: usize,
) -> Result<Vec<u32>, ModelError> {
    let mut state = scorer.start(src)?;
    let mut out = Vec::new();
    let mut prev = PAD;
    while out.len() < max_len {
        let logits = scorer.step(&mut state, prev)?;
        let mut best = 0usize;
        for (i, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = i;
            }
        }
        let next = best as u32;
        if next == EOS {
            break;
        }
        out.push(next);
        prev = next;
    }
    Ok(out)
}

/// x[d] * w[d, n] accumulated row-wise (cache-friendly for row-major w).
fn vec_mat<F: Scalar>(x: &[F], w: &Tensor<F>) -> Vec<F> {
    let (d, n) = (w.shape()[0], w.shape()[1]);
    debug_assert_eq!(x.len(), d);
    let mut out = vec![F::ZERO; n];
    for (xd, wrow) in x.iter().zip(w.data().chunks(n)) {
        for (o, &wv) in out.iter_mut().zip(wrow) {
            *o += *xd * wv;
        }
    }
    out
}

fn rms_norm_vec<F: Scalar>(x: &[F], gain: &Tensor<F>) -> Vec<F> {
    let d = x.len();
    let mut ss = F::ZERO;
    for &v in x {
        ss += v * v;
    }
    let inv = F::ONE / (ss / F::from_f64(d as f64) + F::from_f64(1e-6)).sqrt();
    x.iter().zip(gain.data()).map(|(&v, &g)| v * inv * g).collect()
}

fn softmax_in_place<F: Scalar>(v: &mut [F]) {
    let mut max = F::MASK_NEG;
    for &x in v.iter() {
        max = max.maximum(x);
    }
    let mut sum = F::ZERO;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

pub struct DecodeState<F> {
    /// Per decoder layer, [Ts, inner], projected from the encoder output.
    cross_k: Vec<Vec<F>>,
    cross_v: Vec<Vec<F>>,
    /// Per decoder layer, growing [t, inner].
    self_k: Vec<Vec<F>>,
    self_v: Vec<Vec<F>>,
    pos: usize,
}

impl<F: Scalar> Model<F> {
    fn attention_over<const BIASED: bool>(
        &self,
        q: &[F],
        keys: &[F],
        values: &[F],
        bias_table: Option<&Tensor<F>>,
        qpos: usize,
    ) -> Vec<F> {
        let nh = self.config.n_heads;
        let kv = self.config.d_kv;
        let inner = self.config.inner_dim();
        let t = keys.len() / inner;
        let scale = F::from_f64(1.0 / (kv as f64).sqrt());
        let mut ctx = vec![F::ZERO; inner];
        let mut scores = vec![F::ZERO; t];
        for h in 0..nh {
            let qh = &q[h * kv..(h + 1) * kv];
            for (j, s) in scores.iter_mut().enumerate() {
                let krow = &keys[j * inner + h * kv..j * inner + (h + 1) * kv];
                let mut acc = F::ZERO;
                for (&qv, &kvv) in qh.iter().zip(krow) {
                    acc += qv * kvv;
                }
                *s = acc * scale;
                if BIASED {
                    let table = bias_table.expect("bias table");
                    let b = relative_bucket(
                        j as i64 - qpos as i64,
                        false,
                        self.config.rel_buckets,
                        self.config.rel_max_distance,
                    );
                    *s += table.data()[b * nh + h];
                }
            }
            softmax_in_place(&mut scores);
            let ch = &mut ctx[h * kv..(h + 1) * kv];
            for (j, &p) in scores.iter().enumerate() {
                let vrow = &values[j * inner + h * kv..j * inner + (h + 1) * kv];
                for (c, &vv) in ch.iter_mut().zip(vrow) {
                    *c += p * vv;
                }
            }
        }
        ctx
    }
}

impl<F: Scalar> TokenScorer for Model<F> {
    type State = DecodeState<F>;

    fn start(&self, src: &[u32]) -> Result<Self::State, ModelError> {
        // Encoder pass through the graph builder (dummy one-token decoder
        // input; only the encoder output is kept).
        use rand_chacha::rand_core::SeedableRng;
        let mut g = crate::graph::Graph::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.rng_fingerprint);
        let built = self.build(&mut g, &[src.to_vec()], &[vec![PAD]], &mut rng)?;
        let enc = g.value(built.encoder_out);
        let ts = enc.shape()[1];
        let enc_out = enc.data().to_vec();

        let mut cross_k = Vec::with_capacity(self.config.decoder_layers);
        let mut cross_v = Vec::with_capacity(self.config.decoder_layers);
        for l in 0..self.config.decoder_layers {
            let wk = &self.params[&format!("decoder.{l}.cross.k")];
            let wv = &self.params[&format!("decoder.{l}.cross.v")];
            let inner = self.config.inner_dim();
            let d = self.config.d_model;
            let mut k = vec![F::ZERO; ts * inner];
            let mut v = vec![F::ZERO; ts * inner];
            crate::tensor::matmul_acc(&mut k, &enc_out, wk.data(), ts, d, inner);
            crate::tensor::matmul_acc(&mut v, &enc_out, wv.data(), ts, d, inner);
            cross_k.push(k);
            cross_v.push(v);
        }
        Ok(DecodeState {
            cross_k,
            cross_v,
            self_k: vec![Vec::new(); self.config.decoder_layers],
            self_v: vec![Vec::new(); self.config.decoder_layers],
            pos: 0,
        })
    }

    fn step(&self, state: &mut Self::State, prev: u32) -> Result<Vec<f64>, ModelError> {
        if prev as usize >= self.config.vocab {
            return Err(ModelError::IdOutOfRange {
                id: prev,
                vocab: self.config.vocab,
                what: "decoder input".into(),
            });
        }
        let cfg = &self.config;
        let d = cfg.d_model;
        let emb = &self.params["shared.embed"];
        let mut x: Vec<F> = emb.data()[prev as usize * d..(prev as usize + 1) * d].to_vec();

        for l in 0..cfg.decoder_layers {
            // Self-attention over the cached prefix plus this position.
            let xn = rms_norm_vec(&x, &self.params[&format!("decoder.{l}.self.norm")]);
            let q = vec_mat(&xn, &self.params[&format!("decoder.{l}.self.q")]);
            let k_new = vec_mat(&xn, &self.params[&format!("decoder.{l}.self.k")]);
            let v_new = vec_mat(&xn, &self.params[&format!("decoder.{l}.self.v")]);
            state.self_k[l].extend_from_slice(&k_new);
            state.self_v[l].extend_from_slice(&v_new);
            let bias = &self.params["decoder.relbias"];
            let ctx = self.attention_over::<true>(
                &q,
                &state.self_k[l],
                &state.self_v[l],
                Some(bias),
                state.pos,
            );
            let out = vec_mat(&ctx, &self.params[&format!("decoder.{l}.self.o")]);
            for (xv, ov) in x.iter_mut().zip(&out) {
                *xv += *ov;
            }

            // Cross-attention over the precomputed encoder projections.
            let xn = rms_norm_vec(&x, &self.params[&format!("decoder.{l}.cross.norm")]);
            let q = vec_mat(&xn, &self.params[&format!("decoder.{l}.cross.q")]);
            let ctx = self.attention_over::<false>(
                &q,
                &state.cross_k[l],
                &state.cross_v[l],
                None,
                state.pos,
            );
            let out = vec_mat(&ctx, &self.params[&format!("decoder.{l}.cross.o")]);
            for (xv, ov) in x.iter_mut().zip(&out) {
                *xv += *ov;
            }

            // Feed-forward.
            let xn = rms_norm_vec(&x, &self.params[&format!("decoder.{l}.ff.norm")]);
            let mut h = vec_mat(&xn, &self.params[&format!("decoder.{l}.ff.wi")]);
            for v in h.iter_mut() {
                *v = v.maximum(F::ZERO);
            }
            let out = vec_mat(&h, &self.params[&format!("decoder.{l}.ff.wo")]);
            for (xv, ov) in x.iter_mut().zip(&out) {
                *xv += *ov;
            }
        }

        let h = rms_norm_vec(&x, &self.params["decoder.final_norm"]);
        let logits: Vec<f64> = if cfg.tie_embeddings {
            emb.data()
                .chunks(d)
                .map(|row| {
                    let mut acc = F::ZERO;
                    for (&hv, &ev) in h.iter().zip(row) {
                        acc += hv * ev;
                    }
                    acc.to_f64()
                })
                .collect()
        } else {
            vec_mat(&h, &self.params["decoder.lm_head"])
                .into_iter()
                .map(|v| v.to_f64())
                .collect()
        };
        state.pos += 1;
        Ok(logits)
    }
}
