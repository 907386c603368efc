//! Span corruption for denoising pre-training: contiguous spans of the
//! input are replaced by sentinels, and the target spells out each sentinel
//! followed by the tokens it hid, ending in EOS. Splicing the target's spans
//! back over the input's sentinels reconstructs the original sequence
//! exactly.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::EOS;
use crate::ModelError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptedExample {
    pub input: Vec<u32>,
    pub target: Vec<u32>,
}

/// Splits `total` into `parts` pieces, each at least 1, by sampling cut
/// points. Deterministic given the RNG state.
fn composition(rng: &mut ChaCha8Rng, total: usize, parts: usize) -> Vec<usize> {
    debug_assert!(parts >= 1 && total >= parts);
    let mut cuts: Vec<usize> = (0..parts - 1).map(|_| rng.gen_range(1..total)).collect();
    cuts.sort_unstable();
    cuts.dedup();
    // Duplicate cuts collapse; pad by splitting the largest piece.
    let mut pieces = Vec::with_capacity(parts);
    let mut prev = 0;
    for &c in &cuts {
        pieces.push(c - prev);
        prev = c;
    }
    pieces.push(total - prev);
    while pieces.len() < parts {
        let (i, _) = pieces
            .iter()
            .enumerate()
            .max_by_key(|(i, &v)| (v, std::cmp::Reverse(*i)))
            .expect("non-empty");
        let v = pieces[i];
        pieces[i] = v / 2;
        pieces.insert(i + 1, v - v / 2);
    }
    pieces
}

/// Masks about `rate * len` tokens with `mean_span`-sized non-adjacent
/// spans. Span `i` is replaced by sentinel id `sentinel_base + i` in the
/// input and introduces the hidden tokens in the target. `n_sentinels`
/// bounds the span count.
pub fn span_corrupt(
    ids: &[u32],
    rate: f64,
    mean_span: usize,
    seed: u64,
    sentinel_base: u32,
    n_sentinels: usize,
) -> Result<CorruptedExample, ModelError> {
    if ids.is_empty() {
        return Err(ModelError::BadBatch("span corruption over an empty sequence".into()));
    }
    if !(0.0..1.0).contains(&rate) {
        return Err(ModelError::BadBatch(format!("corruption rate {rate} outside [0, 1)")));
    }
    if mean_span == 0 {
        return Err(ModelError::BadBatch("mean_span must be at least 1".into()));
    }
    if rate == 0.0 {
        return Ok(CorruptedExample {
            input: ids.to_vec(),
            target: vec![EOS],
        });
    }
    let n = ids.len();
    // At least one token, per the degradation rule for rate*len < 1.
    let n_corrupt = ((rate * n as f64).ceil() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let wanted = ((n_corrupt as f64 / mean_span as f64).round() as usize).max(1);
    // Non-adjacency needs a free token between consecutive spans.
    let feasible = (n - n_corrupt) + 1;
    let num_spans = wanted.min(feasible).min(n_sentinels.max(1)).min(n_corrupt);

    let span_lens = composition(&mut rng, n_corrupt, num_spans);

    // Distribute the free tokens into the gaps: interior gaps get 1 plus a
    // share of the surplus, the two ends may be empty.
    let free = n - n_corrupt;
    let surplus = free - (num_spans - 1);
    let mut gaps = vec![0usize; num_spans + 1];
    for g in gaps.iter_mut().take(num_spans).skip(1) {
        *g = 1;
    }
    for _ in 0..surplus {
        let slot = rng.gen_range(0..gaps.len());
        gaps[slot] += 1;
    }

    let mut input = Vec::with_capacity(n - n_corrupt + num_spans);
    let mut target = Vec::with_capacity(n_corrupt + num_spans + 1);
    let mut cursor = 0usize;
    for (i, (&len, &gap)) in span_lens.iter().zip(&gaps).enumerate() {
        input.extend_from_slice(&ids[cursor..cursor + gap]);
        cursor += gap;
        let sentinel = sentinel_base + i as u32;
        input.push(sentinel);
        target.push(sentinel);
        target.extend_from_slice(&ids[cursor..cursor + len]);
        cursor += len;
    }
    input.extend_from_slice(&ids[cursor..]);
    target.push(EOS);
    Ok(CorruptedExample { input, target })
}

/// Test oracle and audit tool: reconstructs the original sequence from a
/// corrupted pair by splicing target spans over input sentinels.
pub fn splice_back(
    input: &[u32],
    target: &[u32],
    sentinel_base: u32,
    n_sentinels: usize,
) -> Result<Vec<u32>, ModelError> {
    let is_sentinel =
        |t: u32| t >= sentinel_base && t < sentinel_base + n_sentinels as u32;
    let mut spans: Vec<(u32, Vec<u32>)> = Vec::new();
    for &t in target {
        if t == EOS {
            break;
        }
        if is_sentinel(t) {
            spans.push((t, Vec::new()));
        } else if let Some(last) = spans.last_mut() {
            last.1.push(t);
        } else {
            return Err(ModelError::BadBatch("target does not start with a sentinel".into()));
        }
    }
    let mut out = Vec::new();
    let mut span_iter = spans.into_iter();
    for &t in input {
        if is_sentinel(t) {
            let (sentinel, tokens) = span_iter
                .next()
                .ok_or_else(|| ModelError::BadBatch("more sentinels in input than target".into()))?;
            if sentinel != t {
                return Err(ModelError::BadBatch("sentinel order mismatch".into()));
            }
            out.extend(tokens);
        } else {
            out.push(t);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: u32 = 3;
    const K: usize = 32;

    fn ids(n: usize) -> Vec<u32> {
        (0..n).map(|i| 40 + i as u32).collect()
    }

    #[test]
    fn zero_rate_passes_through() {
        let seq = ids(10);
        let out = span_corrupt(&seq, 0.0, 3, 1, BASE, K).unwrap();
        assert_eq!(out.input, seq);
        assert_eq!(out.target, vec![EOS]);
    }

    #[test]
    fn full_coverage_is_a_single_span() {
        let seq = ids(8);
        let out = span_corrupt(&seq, 0.999, 3, 1, BASE, K).unwrap();
        assert_eq!(out.input, vec![BASE]);
        let mut expect = vec![BASE];
        expect.extend(&seq);
        expect.push(EOS);
        assert_eq!(out.target, expect);
    }

    #[test]
    fn tiny_rate_degrades_to_one_token_span() {
        let seq = ids(20);
        let out = span_corrupt(&seq, 0.01, 3, 5, BASE, K).unwrap();
        // ceil(0.2) = 1 corrupted token in exactly one span.
        assert_eq!(out.input.len(), 20);
        assert_eq!(out.target.len(), 3); // sentinel + token + eos
        assert_eq!(splice_back(&out.input, &out.target, BASE, K).unwrap(), seq);
    }

    #[test]
    fn reconstruction_holds_on_many_random_sequences() {
        for trial in 0..1000 {
            let n = 2 + (trial % 120);
            let seq = ids(n);
            let rate = [0.1, 0.15, 0.3, 0.5][trial % 4];
            let mean_span = 1 + (trial % 4);
            let out = span_corrupt(&seq, rate, mean_span, trial as u64, BASE, K).unwrap();
            assert_eq!(
                splice_back(&out.input, &out.target, BASE, K).unwrap(),
                seq,
                "trial {trial}"
            );
        }
    }

    #[test]
    fn sentinels_are_ordered_nonadjacent_and_counted() {
        for trial in 0..300 {
            let seq = ids(40 + trial % 60);
            let out = span_corrupt(&seq, 0.25, 3, trial as u64, BASE, K).unwrap();
            let in_sentinels: Vec<u32> = out
                .input
                .iter()
                .copied()
                .filter(|&t| t >= BASE && t < BASE + K as u32)
                .collect();
            let tgt_sentinels: Vec<u32> = out
                .target
                .iter()
                .copied()
                .filter(|&t| t >= BASE && t < BASE + K as u32)
                .collect();
            assert_eq!(in_sentinels, tgt_sentinels, "same sentinels in the same order");
            for (i, &s) in in_sentinels.iter().enumerate() {
                assert_eq!(s, BASE + i as u32, "ascending sentinel ids");
            }
            // Non-adjacent: no two sentinels touch in the input.
            for w in out.input.windows(2) {
                assert!(
                    !(w[0] >= BASE && w[0] < BASE + K as u32 && w[1] >= BASE && w[1] < BASE + K as u32),
                    "adjacent sentinels in input"
                );
            }
        }
    }

    #[test]
    fn determinism_and_seed_sensitivity() {
        let seq = ids(50);
        let a = span_corrupt(&seq, 0.15, 3, 7, BASE, K).unwrap();
        let b = span_corrupt(&seq, 0.15, 3, 7, BASE, K).unwrap();
        assert_eq!(a, b);
        let c = span_corrupt(&seq, 0.15, 3, 8, BASE, K).unwrap();
        assert!(a != c || seq.len() < 4);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(span_corrupt(&[], 0.1, 3, 1, BASE, K).is_err());
        assert!(span_corrupt(&ids(5), 1.0, 3, 1, BASE, K).is_err());
        assert!(span_corrupt(&ids(5), 0.1, 0, 1, BASE, K).is_err());
    }

    #[test]
    fn span_count_respects_the_sentinel_budget() {
        let seq = ids(200);
        let out = span_corrupt(&seq, 0.5, 1, 3, BASE, 4).unwrap();
        let sentinels = out
            .input
            .iter()
            .filter(|&&t| t >= BASE && t < BASE + 4)
            .count();
        assert!(sentinels <= 4);
        assert_eq!(splice_back(&out.input, &out.target, BASE, 4).unwrap(), seq);
    }
}
