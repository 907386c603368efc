//! Reverse-mode tape over whole-tensor operations. Nodes are created in
//! topological order by construction; `backward` walks them in reverse,
//! accumulating gradients with fixed reduction order. Gradients of interior
//! nodes are released as soon as they have been propagated; leaf gradients
//! (the parameters) remain readable afterwards.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::scalar::Scalar;
use crate::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc, softmax_rows, Tensor};

const RMS_EPS: f64 = 1e-6;
const PAR_GROUP_FLOPS: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub usize);

enum Op<F: Scalar> {
    Leaf,
    /// a [.., K] x b [K, N] (or [N, K] transposed) -> [.., N]
    Matmul { a: NodeId, b: NodeId, transpose_b: bool },
    /// a [G.., M, K] x b [G.., K, N] (or [G.., N, K]) -> [G.., M, N]
    Bmm { a: NodeId, b: NodeId, transpose_b: bool },
    Add { a: NodeId, b: NodeId },
    Scale { a: NodeId, c: F },
    Relu { a: NodeId },
    /// Row-wise x * gain / rms(x); caches 1/rms per row.
    RmsNorm { a: NodeId, gain: NodeId, inv_rms: Vec<F> },
    SoftmaxRows { a: NodeId },
    /// Adds a constant additive mask [B, 1|Tq, Tk], broadcast over heads.
    AddMask { a: NodeId },
    /// a [B,H,Tq,Tk] + bias [H,Tq,Tk]
    AddPosBias { a: NodeId, bias: NodeId },
    /// table [V, D] gathered by row ids -> [N, D]
    Gather { table: NodeId, ids: Vec<usize> },
    /// table [NB, H] -> [H, Tq*Tk] by bucket index per (q, k) pair
    BucketBias { table: NodeId, buckets: Vec<usize> },
    /// [d0,d1,d2,d3] -> [d0,d2,d1,d3]
    Transpose12 { a: NodeId },
    Reshape { a: NodeId },
    Dropout { a: NodeId, mask: Vec<F> },
    /// logits [N, V] + targets/weights -> scalar mean NLL; caches softmax.
    CrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        weights: Vec<F>,
        probs: Vec<F>,
        weight_sum: F,
    },
}

pub struct Graph<F: Scalar> {
    ops: Vec<Op<F>>,
    values: Vec<Tensor<F>>,
    grads: Vec<Option<Tensor<F>>>,
    labels: Vec<Option<String>>,
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Graph {
            ops: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            labels: Vec::new(),
        }
    }

    fn push(&mut self, op: Op<F>, value: Tensor<F>) -> NodeId {
        self.ops.push(op);
        self.values.push(value);
        self.grads.push(None);
        self.labels.push(None);
        NodeId(self.ops.len() - 1)
    }

    pub fn set_label(&mut self, id: NodeId, label: impl Into<String>) {
        self.labels[id.0] = Some(label.into());
    }

    pub fn value(&self, id: NodeId) -> &Tensor<F> {
        &self.values[id.0]
    }

    /// Gradient of a node, if it was retained (leaves, after `backward`).
    pub fn grad(&self, id: NodeId) -> Option<&Tensor<F>> {
        self.grads[id.0].as_ref()
    }

    pub fn take_grad(&mut self, id: NodeId) -> Option<Tensor<F>> {
        self.grads[id.0].take()
    }

    /// First node holding a non-finite value, with its label if any.
    pub fn first_nonfinite(&self) -> Option<(NodeId, Option<String>)> {
        self.values
            .iter()
            .position(|v| v.first_nonfinite().is_some())
            .map(|i| (NodeId(i), self.labels[i].clone()))
    }

    pub fn leaf(&mut self, t: Tensor<F>) -> NodeId {
        self.push(Op::Leaf, t)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId, transpose_b: bool) -> NodeId {
        let (av, bv) = (&self.values[a.0], &self.values[b.0]);
        let k = *av.shape().last().expect("matmul lhs");
        let m = av.numel() / k;
        let (bk, n) = if transpose_b {
            (bv.shape()[1], bv.shape()[0])
        } else {
            (bv.shape()[0], bv.shape()[1])
        };
        assert_eq!(k, bk, "matmul inner dims {k} vs {bk}");
        let mut out_shape: Vec<usize> = av.shape()[..av.shape().len() - 1].to_vec();
        out_shape.push(n);
        let mut out = Tensor::zeros(&out_shape);
        if transpose_b {
            matmul_bt_acc(out.data_mut(), av.data(), bv.data(), m, k, n);
        } else {
            matmul_acc(out.data_mut(), av.data(), bv.data(), m, k, n);
        }
        self.push(Op::Matmul { a, b, transpose_b }, out)
    }

    pub fn bmm(&mut self, a: NodeId, b: NodeId, transpose_b: bool) -> NodeId {
        let (av, bv) = (&self.values[a.0], &self.values[b.0]);
        let ra = av.shape().len();
        let (m, k) = (av.shape()[ra - 2], av.shape()[ra - 1]);
        let g = av.numel() / (m * k);
        let rb = bv.shape().len();
        let (bk, n) = if transpose_b {
            (bv.shape()[rb - 1], bv.shape()[rb - 2])
        } else {
            (bv.shape()[rb - 2], bv.shape()[rb - 1])
        };
        assert_eq!(k, bk, "bmm inner dims {k} vs {bk}");
        assert_eq!(g, bv.numel() / (bk * n), "bmm group count");
        let mut out_shape: Vec<usize> = av.shape()[..ra - 2].to_vec();
        out_shape.extend([m, n]);
        let mut out = Tensor::zeros(&out_shape);
        let body = |(og, (ag, bg)): (&mut [F], (&[F], &[F]))| {
            if transpose_b {
                matmul_bt_acc(og, ag, bg, m, k, n);
            } else {
                matmul_acc(og, ag, bg, m, k, n);
            }
        };
        let a_chunks = av.data().chunks(m * k);
        let b_chunks = bv.data().chunks(k * n);
        if g * m * k * n >= PAR_GROUP_FLOPS && g > 1 {
            out.data_mut()
                .par_chunks_mut(m * n)
                .zip(av.data().par_chunks(m * k).zip(bv.data().par_chunks(k * n)))
                .for_each(body);
        } else {
            out.data_mut()
                .chunks_mut(m * n)
                .zip(a_chunks.zip(b_chunks))
                .for_each(body);
        }
        self.push(Op::Bmm { a, b, transpose_b }, out)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (&self.values[a.0], &self.values[b.0]);
        assert_eq!(av.shape(), bv.shape(), "add shapes");
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| x + y).collect();
        let out = Tensor::from_vec(av.shape(), data);
        self.push(Op::Add { a, b }, out)
    }

    pub fn scale(&mut self, a: NodeId, c: F) -> NodeId {
        let out = self.values[a.0].map(|v| v * c);
        self.push(Op::Scale { a, c }, out)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let out = self.values[a.0].map(|v| v.maximum(F::ZERO));
        self.push(Op::Relu { a }, out)
    }

    pub fn rms_norm(&mut self, a: NodeId, gain: NodeId) -> NodeId {
        let av = &self.values[a.0];
        let gv = &self.values[gain.0];
        let d = *av.shape().last().expect("rms_norm input");
        assert_eq!(gv.numel(), d, "gain length");
        let eps = F::from_f64(RMS_EPS);
        let dn = F::from_f64(d as f64);
        let mut out = Tensor::zeros(av.shape());
        let mut inv_rms = Vec::with_capacity(av.numel() / d);
        for (orow, xrow) in out.data_mut().chunks_mut(d).zip(av.data().chunks(d)) {
            let mut ss = F::ZERO;
            for &x in xrow {
                ss += x * x;
            }
            let inv = F::ONE / (ss / dn + eps).sqrt();
            inv_rms.push(inv);
            for ((o, &x), &g) in orow.iter_mut().zip(xrow).zip(gv.data()) {
                *o = x * inv * g;
            }
        }
        self.push(Op::RmsNorm { a, gain, inv_rms }, out)
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let av = &self.values[a.0];
        let n = *av.shape().last().expect("softmax input");
        let mut out = av.clone();
        softmax_rows(out.data_mut(), n);
        self.push(Op::SoftmaxRows { a }, out)
    }

    /// `mask` has shape [B, 1|Tq, Tk] and broadcasts over the head axis of
    /// `a` [B, H, Tq, Tk]. The mask itself receives no gradient.
    pub fn add_mask(&mut self, a: NodeId, mask: Tensor<F>) -> NodeId {
        let av = &self.values[a.0];
        let (b, h, tq, tk) = shape4(av.shape());
        assert_eq!(mask.shape()[0], b, "mask batch");
        assert_eq!(mask.shape()[2], tk, "mask keys");
        let mq = mask.shape()[1];
        assert!(mq == 1 || mq == tq, "mask rows");
        let mut out = av.clone();
        let od = out.data_mut();
        for bi in 0..b {
            for hi in 0..h {
                for qi in 0..tq {
                    let mrow = &mask.data()[(bi * mq + if mq == 1 { 0 } else { qi }) * tk..][..tk];
                    let orow = &mut od[((bi * h + hi) * tq + qi) * tk..][..tk];
                    for (o, &mv) in orow.iter_mut().zip(mrow) {
                        *o += mv;
                    }
                }
            }
        }
        self.push(Op::AddMask { a }, out)
    }

    pub fn add_pos_bias(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let av = &self.values[a.0];
        let bv = &self.values[bias.0];
        let (b, h, tq, tk) = shape4(av.shape());
        assert_eq!(bv.shape(), &[h, tq, tk], "pos bias shape");
        let mut out = av.clone();
        let per_batch = h * tq * tk;
        for bi in 0..b {
            let orow = &mut out.data_mut()[bi * per_batch..][..per_batch];
            for (o, &x) in orow.iter_mut().zip(bv.data()) {
                *o += x;
            }
        }
        self.push(Op::AddPosBias { a, bias }, out)
    }

    pub fn gather(&mut self, table: NodeId, ids: Vec<usize>) -> NodeId {
        let tv = &self.values[table.0];
        let (v, d) = (tv.shape()[0], tv.shape()[1]);
        let mut out = Tensor::zeros(&[ids.len(), d]);
        for (row, &id) in out.data_mut().chunks_mut(d).zip(&ids) {
            assert!(id < v, "gather id {id} out of range {v}");
            row.copy_from_slice(&tv.data()[id * d..][..d]);
        }
        self.push(Op::Gather { table, ids }, out)
    }

    /// Relative-position bias lookup: `buckets` holds one bucket index per
    /// (query, key) pair; produces [H, Tq, Tk].
    pub fn bucket_bias(&mut self, table: NodeId, buckets: Vec<usize>, tq: usize, tk: usize) -> NodeId {
        let tv = &self.values[table.0];
        let (nb, h) = (tv.shape()[0], tv.shape()[1]);
        assert_eq!(buckets.len(), tq * tk);
        let mut out = Tensor::zeros(&[h, tq, tk]);
        let od = out.data_mut();
        for (p, &bk) in buckets.iter().enumerate() {
            assert!(bk < nb, "bucket {bk} out of range {nb}");
            for hi in 0..h {
                od[hi * tq * tk + p] = tv.data()[bk * h + hi];
            }
        }
        self.push(Op::BucketBias { table, buckets }, out)
    }

    pub fn transpose12(&mut self, a: NodeId) -> NodeId {
        let av = &self.values[a.0];
        let s = av.shape();
        assert_eq!(s.len(), 4, "transpose12 wants rank 4");
        let (d0, d1, d2, d3) = (s[0], s[1], s[2], s[3]);
        let mut out = Tensor::zeros(&[d0, d2, d1, d3]);
        transpose12_into(out.data_mut(), av.data(), d0, d1, d2, d3);
        self.push(Op::Transpose12 { a }, out)
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> NodeId {
        let out = self.values[a.0].clone().reshaped(shape);
        self.push(Op::Reshape { a }, out)
    }

    /// Inverted dropout with a per-call mask drawn from `rng`; `rate` must be
    /// in [0, 1).
    pub fn dropout(&mut self, a: NodeId, rate: f64, rng: &mut ChaCha8Rng) -> NodeId {
        if rate <= 0.0 {
            return a;
        }
        let keep = F::from_f64(1.0 / (1.0 - rate));
        let av = &self.values[a.0];
        let mask: Vec<F> = (0..av.numel())
            .map(|_| if rng.gen_bool(rate) { F::ZERO } else { keep })
            .collect();
        let data = av.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        let out = Tensor::from_vec(av.shape(), data);
        self.push(Op::Dropout { a, mask }, out)
    }

    /// Weighted mean token-level cross entropy; the weight sum must be
    /// positive.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: Vec<usize>, weights: Vec<F>) -> NodeId {
        let lv = &self.values[logits.0];
        let (n, v) = lv.rows_cols();
        assert_eq!(targets.len(), n);
        assert_eq!(weights.len(), n);
        let mut probs = lv.data().to_vec();
        softmax_rows(&mut probs, v);
        let mut weight_sum = F::ZERO;
        for &w in &weights {
            weight_sum += w;
        }
        assert!(weight_sum.to_f64() > 0.0, "cross entropy needs positive weight");
        let mut loss = F::ZERO;
        for ((row, &t), &w) in probs.chunks(v).zip(&targets).zip(&weights) {
            assert!(t < v, "target {t} out of range {v}");
            if w != F::ZERO {
                loss += -(row[t].ln()) * w;
            }
        }
        loss /= weight_sum;
        let out = Tensor::scalar(loss);
        self.push(
            Op::CrossEntropy {
                logits,
                targets,
                weights,
                probs,
                weight_sum,
            },
            out,
        )
    }

    fn ensure_grad(&mut self, id: NodeId) -> &mut Tensor<F> {
        let shape = self.values[id.0].shape().to_vec();
        self.grads[id.0].get_or_insert_with(|| Tensor::zeros(&shape))
    }

    /// Reverse pass from `root` (typically the scalar loss).
    pub fn backward(&mut self, root: NodeId) {
        let ones = Tensor::from_vec(
            self.values[root.0].shape(),
            vec![F::ONE; self.values[root.0].numel()],
        );
        self.grads[root.0] = Some(ones);

        for id in (0..=root.0).rev() {
            if matches!(self.ops[id], Op::Leaf) {
                continue;
            }
            let Some(g) = self.grads[id].take() else { continue };
            // Ops are moved out temporarily so parent grads can be borrowed.
            let op = std::mem::replace(&mut self.ops[id], Op::Leaf);
            self.accumulate(&op, id, &g);
            self.ops[id] = op;
        }
    }

    fn accumulate(&mut self, op: &Op<F>, id: usize, g: &Tensor<F>) {
        match op {
            Op::Leaf => {}
            Op::Matmul { a, b, transpose_b } => {
                let k = *self.values[a.0].shape().last().unwrap();
                let m = self.values[a.0].numel() / k;
                let n = *g.shape().last().unwrap();
                let mut da = vec![F::ZERO; m * k];
                let mut db = vec![F::ZERO; self.values[b.0].numel()];
                if *transpose_b {
                    // out = A · Bᵀ, B stored [N, K]
                    matmul_acc(&mut da, g.data(), self.values[b.0].data(), m, n, k);
                    matmul_at_acc(&mut db, g.data(), self.values[a.0].data(), m, n, k);
                } else {
                    matmul_bt_acc(&mut da, g.data(), self.values[b.0].data(), m, n, k);
                    matmul_at_acc(&mut db, self.values[a.0].data(), g.data(), m, k, n);
                }
                axpy(self.ensure_grad(*a).data_mut(), &da);
                axpy(self.ensure_grad(*b).data_mut(), &db);
            }
            Op::Bmm { a, b, transpose_b } => {
                let ash = self.values[a.0].shape();
                let (m, k) = (ash[ash.len() - 2], ash[ash.len() - 1]);
                let groups = self.values[a.0].numel() / (m * k);
                let n = *g.shape().last().unwrap();
                let mut da = vec![F::ZERO; self.values[a.0].numel()];
                let mut db = vec![F::ZERO; self.values[b.0].numel()];
                let av = self.values[a.0].data();
                let bv = self.values[b.0].data();
                for gi in 0..groups {
                    let gg = &g.data()[gi * m * n..][..m * n];
                    let ag = &av[gi * m * k..][..m * k];
                    let dag = &mut da[gi * m * k..][..m * k];
                    if *transpose_b {
                        let bg = &bv[gi * n * k..][..n * k];
                        let dbg = &mut db[gi * n * k..][..n * k];
                        matmul_acc(dag, gg, bg, m, n, k);
                        matmul_at_acc(dbg, gg, ag, m, n, k);
                    } else {
                        let bg = &bv[gi * k * n..][..k * n];
                        let dbg = &mut db[gi * k * n..][..k * n];
                        matmul_bt_acc(dag, gg, bg, m, n, k);
                        matmul_at_acc(dbg, ag, gg, m, k, n);
                    }
                }
                axpy(self.ensure_grad(*a).data_mut(), &da);
                axpy(self.ensure_grad(*b).data_mut(), &db);
            }
            Op::Add { a, b } => {
                axpy(self.ensure_grad(*a).data_mut(), g.data());
                axpy(self.ensure_grad(*b).data_mut(), g.data());
            }
            Op::Scale { a, c } => {
                let da = self.ensure_grad(*a);
                for (dv, &gv) in da.data_mut().iter_mut().zip(g.data()) {
                    *dv += gv * *c;
                }
            }
            Op::Relu { a } => {
                let out = self.values[id].data().to_vec();
                let da = self.ensure_grad(*a);
                for ((dv, &gv), &ov) in da.data_mut().iter_mut().zip(g.data()).zip(&out) {
                    if ov > F::ZERO {
                        *dv += gv;
                    }
                }
            }
            Op::RmsNorm { a, gain, inv_rms } => {
                let d = *self.values[a.0].shape().last().unwrap();
                let dn = F::from_f64(d as f64);
                let x = self.values[a.0].data().to_vec();
                let gains = self.values[gain.0].data().to_vec();
                let mut da = vec![F::ZERO; x.len()];
                let mut dgain = vec![F::ZERO; d];
                for (r, inv) in inv_rms.iter().enumerate() {
                    let xrow = &x[r * d..][..d];
                    let grow = &g.data()[r * d..][..d];
                    let mut dot = F::ZERO;
                    for i in 0..d {
                        dot += grow[i] * gains[i] * xrow[i];
                        dgain[i] += grow[i] * xrow[i] * *inv;
                    }
                    let scale = dot * *inv * *inv * *inv / dn;
                    let darow = &mut da[r * d..][..d];
                    for i in 0..d {
                        darow[i] += grow[i] * gains[i] * *inv - xrow[i] * scale;
                    }
                }
                axpy(self.ensure_grad(*a).data_mut(), &da);
                axpy(self.ensure_grad(*gain).data_mut(), &dgain);
            }
            Op::SoftmaxRows { a } => {
                let n = *self.values[id].shape().last().unwrap();
                let y = self.values[id].data().to_vec();
                let da = self.ensure_grad(*a);
                for ((yrow, grow), darow) in y
                    .chunks(n)
                    .zip(g.data().chunks(n))
                    .zip(da.data_mut().chunks_mut(n))
                {
                    let mut dot = F::ZERO;
                    for (&yv, &gv) in yrow.iter().zip(grow) {
                        dot += yv * gv;
                    }
                    for ((dv, &yv), &gv) in darow.iter_mut().zip(yrow).zip(grow) {
                        *dv += yv * (gv - dot);
                    }
                }
            }
            Op::AddMask { a } => {
                axpy(self.ensure_grad(*a).data_mut(), g.data());
            }
            Op::AddPosBias { a, bias } => {
                axpy(self.ensure_grad(*a).data_mut(), g.data());
                let per_batch = self.values[bias.0].numel();
                let b = g.numel() / per_batch;
                let dbias = self.ensure_grad(*bias);
                for bi in 0..b {
                    axpy(dbias.data_mut(), &g.data()[bi * per_batch..][..per_batch]);
                }
            }
            Op::Gather { table, ids } => {
                let d = self.values[id].shape()[1];
                let dt = self.ensure_grad(*table);
                for (row, &rid) in g.data().chunks(d).zip(ids) {
                    axpy(&mut dt.data_mut()[rid * d..rid * d + d], row);
                }
            }
            Op::BucketBias { table, buckets } => {
                let h = self.values[table.0].shape()[1];
                let p = buckets.len();
                let dt = self.ensure_grad(*table);
                for (pi, &bk) in buckets.iter().enumerate() {
                    for hi in 0..h {
                        dt.data_mut()[bk * h + hi] += g.data()[hi * p + pi];
                    }
                }
            }
            Op::Transpose12 { a } => {
                let s = self.values[id].shape().to_vec(); // [d0,d2,d1,d3]
                let mut da = vec![F::ZERO; g.numel()];
                transpose12_into(&mut da, g.data(), s[0], s[1], s[2], s[3]);
                axpy(self.ensure_grad(*a).data_mut(), &da);
            }
            Op::Reshape { a } => {
                axpy(self.ensure_grad(*a).data_mut(), g.data());
            }
            Op::Dropout { a, mask } => {
                let da = self.ensure_grad(*a);
                for ((dv, &gv), &mv) in da.data_mut().iter_mut().zip(g.data()).zip(mask) {
                    *dv += gv * mv;
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                weights,
                probs,
                weight_sum,
            } => {
                let gval = g.item();
                let v = self.values[logits.0].rows_cols().1;
                let dl = self.ensure_grad(*logits);
                for (i, ((prow, &t), &w)) in probs.chunks(v).zip(targets).zip(weights).enumerate() {
                    if w == F::ZERO {
                        continue;
                    }
                    let scale = gval * w / *weight_sum;
                    let drow = &mut dl.data_mut()[i * v..][..v];
                    for (j, (dv, &pv)) in drow.iter_mut().zip(prow).enumerate() {
                        let indicator = if j == t { F::ONE } else { F::ZERO };
                        *dv += scale * (pv - indicator);
                    }
                }
            }
        }
    }
}

fn shape4(s: &[usize]) -> (usize, usize, usize, usize) {
    assert_eq!(s.len(), 4, "expected rank-4 tensor, got {s:?}");
    (s[0], s[1], s[2], s[3])
}

fn axpy<F: Scalar>(dst: &mut [F], src: &[F]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// out[d0,d2,d1,d3] = a[d0,d1,d2,d3] with axes 1 and 2 swapped.
fn transpose12_into<F: Scalar>(out: &mut [F], a: &[F], d0: usize, d1: usize, d2: usize, d3: usize) {
    for i0 in 0..d0 {
        for i1 in 0..d1 {
            for i2 in 0..d2 {
                let src = ((i0 * d1 + i1) * d2 + i2) * d3;
                let dst = ((i0 * d2 + i2) * d1 + i1) * d3;
                out[dst..dst + d3].copy_from_slice(&a[src..src + d3]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central finite differences against the tape for a scalar-valued
    /// builder over one leaf tensor.
    fn check_grad(
        shape: &[usize],
        values: Vec<f64>,
        build: impl Fn(&mut Graph<f64>, NodeId) -> NodeId,
    ) {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(shape, values.clone()));
        let loss = build(&mut g, x);
        assert_eq!(g.value(loss).numel(), 1, "builder must end in a scalar");
        g.backward(loss);
        let analytic = g.grad(x).unwrap().data().to_vec();

        let eps = 1e-6;
        for i in 0..values.len() {
            let mut run = |delta: f64| {
                let mut vals = values.clone();
                vals[i] += delta;
                let mut g = Graph::new();
                let x = g.leaf(Tensor::from_vec(shape, vals));
                let loss = build(&mut g, x);
                g.value(loss).item()
            };
            let numeric = (run(eps) - run(-eps)) / (2.0 * eps);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
            assert!(
                (analytic[i] - numeric).abs() / denom < 1e-6,
                "element {i}: analytic {} vs numeric {numeric}",
                analytic[i]
            );
        }
    }

    fn fixed(len: usize) -> Vec<f64> {
        (0..len).map(|i| ((i * 31 + 7) % 13) as f64 * 0.17 - 0.9).collect()
    }

    fn sum_all(g: &mut Graph<f64>, x: NodeId) -> NodeId {
        // Reduce to a scalar through a matmul with a fixed vector.
        let n = g.value(x).numel();
        let w = g.leaf(Tensor::from_vec(&[n, 1], (0..n).map(|i| 0.3 + 0.01 * i as f64).collect()));
        let flat = g.reshape(x, &[1, n]);
        g.matmul(flat, w, false)
    }

    #[test]
    fn matmul_grads() {
        check_grad(&[2, 3], fixed(6), |g, x| {
            let w = g.leaf(Tensor::from_vec(&[3, 4], fixed(12)));
            let y = g.matmul(x, w, false);
            sum_all(g, y)
        });
        check_grad(&[4, 3], fixed(12), |g, w| {
            let x = g.leaf(Tensor::from_vec(&[2, 3], fixed(6)));
            let y = g.matmul(x, w, true);
            sum_all(g, y)
        });
    }

    #[test]
    fn bmm_grads() {
        // a [2,3,2] x b [2,4,2]^T -> [2,3,4]
        check_grad(&[2, 3, 2], fixed(12), |g, x| {
            let w = g.leaf(Tensor::from_vec(&[2, 4, 2], fixed(16)));
            let y = g.bmm(x, w, true);
            sum_all(g, y)
        });
        check_grad(&[2, 4, 2], fixed(16), |g, w| {
            let x = g.leaf(Tensor::from_vec(&[2, 3, 2], fixed(12)));
            let y = g.bmm(x, w, true);
            sum_all(g, y)
        });
        // a [2,3,2] x b [2,2,4] -> [2,3,4]
        check_grad(&[2, 2, 4], fixed(16), |g, w| {
            let x = g.leaf(Tensor::from_vec(&[2, 3, 2], fixed(12)));
            let y = g.bmm(x, w, false);
            sum_all(g, y)
        });
    }

    #[test]
    fn pointwise_grads() {
        check_grad(&[2, 4], fixed(8), |g, x| {
            let y = g.relu(x);
            let z = g.scale(y, 1.7);
            sum_all(g, z)
        });
        check_grad(&[3, 4], fixed(12), |g, x| {
            let y = g.softmax_rows(x);
            sum_all(g, y)
        });
    }

    #[test]
    fn rms_norm_grads() {
        check_grad(&[3, 4], fixed(12), |g, x| {
            let gain = g.leaf(Tensor::from_vec(&[4], vec![0.9, 1.1, 1.0, 0.8]));
            let y = g.rms_norm(x, gain);
            sum_all(g, y)
        });
        // Gradient with respect to the gain.
        check_grad(&[4], vec![0.9, 1.1, 1.0, 0.8], |g, gain| {
            let x = g.leaf(Tensor::from_vec(&[3, 4], fixed(12)));
            let y = g.rms_norm(x, gain);
            sum_all(g, y)
        });
    }

    #[test]
    fn gather_and_bucket_grads() {
        check_grad(&[5, 3], fixed(15), |g, table| {
            let y = g.gather(table, vec![1, 3, 1, 0]);
            sum_all(g, y)
        });
        check_grad(&[4, 2], fixed(8), |g, table| {
            let y = g.bucket_bias(table, vec![0, 1, 2, 3, 3, 1], 2, 3);
            sum_all(g, y)
        });
    }

    #[test]
    fn bias_mask_transpose_grads() {
        check_grad(&[2, 2, 2, 3], fixed(24), |g, x| {
            let bias = g.leaf(Tensor::from_vec(&[2, 2, 3], fixed(12)));
            let masked = g.add_mask(x, Tensor::from_vec(&[2, 1, 3], fixed(6)));
            let y = g.add_pos_bias(masked, bias);
            let t = g.transpose12(y);
            sum_all(g, t)
        });
        check_grad(&[2, 2, 3], fixed(12), |g, bias| {
            let x = g.leaf(Tensor::from_vec(&[2, 2, 2, 3], fixed(24)));
            let y = g.add_pos_bias(x, bias);
            sum_all(g, y)
        });
    }

    #[test]
    fn cross_entropy_grad_and_value() {
        check_grad(&[3, 4], fixed(12), |g, logits| {
            g.cross_entropy(logits, vec![1, 3, 0], vec![1.0, 1.0, 0.0])
        });
        // Uniform logits: loss is ln(V) per weighted token.
        let mut g = Graph::new();
        let logits = g.leaf(Tensor::from_vec(&[2, 8], vec![0.5; 16]));
        let loss = g.cross_entropy(logits, vec![3, 5], vec![1.0, 1.0]);
        assert!((g.value(loss).item() - (8.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn dropout_zero_rate_is_identity() {
        use rand_chacha::rand_core::SeedableRng;
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(&[2, 2], fixed(4)));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = g.dropout(x, 0.0, &mut rng);
        assert_eq!(y, x);
    }

    #[test]
    fn nonfinite_detection_reports_the_label() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(&[2], vec![1.0f64, f64::NAN]));
        g.set_label(x, "poisoned");
        let (id, label) = g.first_nonfinite().unwrap();
        assert_eq!(id, x);
        assert_eq!(label.as_deref(), Some("poisoned"));
    }
}
