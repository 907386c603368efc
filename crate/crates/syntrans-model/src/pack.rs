//! Sequence packing: greedy first-fit concatenation of sentences into
//! examples of at most `max_len` tokens, one EOS separator after each
//! sentence, never splitting a sentence across examples. Sentences that
//! cannot fit even alone are truncated.

use crate::model::EOS;

pub fn pack_sequences(seqs: &[Vec<u32>], max_len: usize) -> Vec<Vec<u32>> {
    assert!(max_len >= 2, "max_len must leave room for a token plus EOS");
    let mut bins: Vec<Vec<u32>> = Vec::new();
    for seq in seqs {
        if seq.is_empty() {
            continue;
        }
        let take = seq.len().min(max_len - 1);
        let needed = take + 1;
        let slot = bins.iter_mut().find(|b| b.len() + needed <= max_len);
        let bin = match slot {
            Some(b) => b,
            None => {
                bins.push(Vec::with_capacity(max_len));
                bins.last_mut().expect("just pushed")
            }
        };
        bin.extend_from_slice(&seq[..take]);
        bin.push(EOS);
    }
    bins
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(len: usize, tag: u32) -> Vec<u32> {
        (0..len as u32).map(|i| 100 + tag * 64 + i).collect()
    }

    #[test]
    fn long_sentences_go_one_per_pack() {
        let seqs: Vec<Vec<u32>> = (0..5).map(|i| seq(40, i)).collect();
        let packs = pack_sequences(&seqs, 64);
        assert_eq!(packs.len(), 5);
        for (p, s) in packs.iter().zip(&seqs) {
            assert_eq!(p.len(), s.len() + 1);
            assert_eq!(p.last(), Some(&EOS));
        }
    }

    #[test]
    fn short_sentences_share_packs_without_splitting() {
        let seqs: Vec<Vec<u32>> = (0..10).map(|i| seq(7, i)).collect();
        let packs = pack_sequences(&seqs, 32);
        assert!(packs.len() < 10);
        for p in &packs {
            assert!(p.len() <= 32);
        }
        // Token conservation: all non-separator tokens survive, in order
        // within each sentence.
        let total: usize = packs.iter().map(|p| p.iter().filter(|&&t| t != EOS).count()).sum();
        assert_eq!(total, 70);
        let separators: usize = packs.iter().map(|p| p.iter().filter(|&&t| t == EOS).count()).sum();
        assert_eq!(separators, 10);
    }

    #[test]
    fn max_len_is_respected_on_mixed_input() {
        let mut seqs = Vec::new();
        for i in 0..200 {
            seqs.push(seq(1 + (i * 13) % 29, i as u32 % 4));
        }
        for max_len in [8, 16, 31, 64] {
            let packs = pack_sequences(&seqs, max_len);
            for p in &packs {
                assert!(p.len() <= max_len, "pack of {} exceeds {max_len}", p.len());
            }
            let kept: usize = packs.iter().map(|p| p.iter().filter(|&&t| t != EOS).count()).sum();
            let expected: usize = seqs.iter().map(|s| s.len().min(max_len - 1)).sum();
            assert_eq!(kept, expected);
        }
    }

    #[test]
    fn oversized_sentences_are_truncated() {
        let packs = pack_sequences(&[seq(100, 0)], 16);
        assert_eq!(packs.len(), 1);
        assert_eq!(packs[0].len(), 16);
        assert_eq!(packs[0][15], EOS);
    }

    #[test]
    fn packing_is_order_deterministic() {
        let seqs: Vec<Vec<u32>> = (0..50).map(|i| seq(3 + (i % 11), i as u32 % 3)).collect();
        assert_eq!(pack_sequences(&seqs, 24), pack_sequences(&seqs, 24));
    }
}
