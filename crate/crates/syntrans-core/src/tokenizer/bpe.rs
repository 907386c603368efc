//! Byte-pair subword tokenizer. Base symbols are the 256 bytes, so every
//! string is encodable with zero unknown tokens; merges are learned from
//! pair frequencies with lowest-pair-id tie-breaking, which makes the merge
//! order total and training deterministic.
//!
//! Words keep their leading space ("raven" sentence-initially, " raven"
//! elsewhere), so decoding is plain byte concatenation.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::{first_content_id, TokenizerConfig, TokenizerError, EOS_ID, PAD_ID, UNK_ID};

const N_BYTES: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct BpeTokenizer {
    n_sentinels: usize,
    vocab_budget: usize,
    merges: Vec<(u32, u32)>,
    /// Content token id minus `first_content_id` -> byte string.
    token_bytes: Vec<Vec<u8>>,
    merge_rank: HashMap<(u32, u32), u32>,
}

impl BpeTokenizer {
    pub fn n_sentinels(&self) -> usize {
        self.n_sentinels
    }

    pub fn vocab_budget(&self) -> usize {
        self.vocab_budget
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    /// Specials + bytes + learned merges.
    pub fn vocab_size(&self) -> usize {
        first_content_id(self.n_sentinels) as usize + self.token_bytes.len()
    }

    fn first_content(&self) -> u32 {
        first_content_id(self.n_sentinels)
    }

    /// Reconstructs the token table from an ordered merge list.
    pub fn from_merges(
        merges: Vec<(u32, u32)>,
        vocab_budget: usize,
        n_sentinels: usize,
    ) -> Result<Self, TokenizerError> {
        let base = first_content_id(n_sentinels);
        let mut token_bytes: Vec<Vec<u8>> = (0..N_BYTES).map(|b| vec![b as u8]).collect();
        let mut merge_rank = HashMap::new();
        for (rank, &(l, r)) in merges.iter().enumerate() {
            let fetch = |id: u32| -> Result<Vec<u8>, TokenizerError> {
                let idx = id
                    .checked_sub(base)
                    .ok_or(TokenizerError::UnknownId(id))? as usize;
                token_bytes
                    .get(idx)
                    .cloned()
                    .ok_or(TokenizerError::UnknownId(id))
            };
            let mut bytes = fetch(l)?;
            bytes.extend(fetch(r)?);
            token_bytes.push(bytes);
            merge_rank.insert((l, r), rank as u32);
        }
        Ok(BpeTokenizer {
            n_sentinels,
            vocab_budget,
            merges,
            token_bytes,
            merge_rank,
        })
    }

    /// Learns merges from a corpus until the vocab budget is exhausted or no
    /// pair occurs at least twice.
    pub fn train(lines: &[String], config: &TokenizerConfig) -> Result<Self, TokenizerError> {
        let base = first_content_id(config.n_sentinels) as usize;
        if config.vocab_size <= base + N_BYTES {
            return Err(TokenizerError::VocabTooSmall {
                budget: config.vocab_size,
                base: base + N_BYTES,
            });
        }
        if lines.iter().all(|l| l.split_whitespace().next().is_none()) {
            return Err(TokenizerError::EmptyCorpus);
        }

        // Word-type frequencies; BTreeMap iteration keeps setup deterministic.
        let mut word_freq: BTreeMap<String, u64> = BTreeMap::new();
        for line in lines {
            for (i, w) in line.split_whitespace().enumerate() {
                let piece = if i == 0 { w.to_string() } else { format!(" {w}") };
                *word_freq.entry(piece).or_insert(0) += 1;
            }
        }

        let first = first_content_id(config.n_sentinels);
        let mut seqs: Vec<(Vec<u32>, u64)> = word_freq
            .iter()
            .map(|(w, &f)| (w.bytes().map(|b| first + b as u32).collect(), f))
            .collect();

        // Pair counts plus an occurrence index so merges only touch the
        // sequences that contain the merged pair.
        let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
        let mut pair_words: HashMap<(u32, u32), HashSet<usize>> = HashMap::new();
        for (wi, (seq, f)) in seqs.iter().enumerate() {
            for pair in seq.windows(2) {
                let p = (pair[0], pair[1]);
                *pair_counts.entry(p).or_insert(0) += f;
                pair_words.entry(p).or_default().insert(wi);
            }
        }

        let mut merges: Vec<(u32, u32)> = Vec::new();
        let mut token_bytes: Vec<Vec<u8>> = (0..N_BYTES).map(|b| vec![b as u8]).collect();
        let mut merge_rank: HashMap<(u32, u32), u32> = HashMap::new();

        while base + token_bytes.len() < config.vocab_size {
            // Highest frequency, ties broken by the smallest (left, right).
            let best = pair_counts
                .iter()
                .filter(|(_, &c)| c >= 2)
                .map(|(&p, &c)| (c, std::cmp::Reverse(p)))
                .max()
                .map(|(c, std::cmp::Reverse(p))| (p, c));
            let Some((pair, _)) = best else { break };

            let new_id = first + token_bytes.len() as u32;
            let mut bytes = token_bytes[(pair.0 - first) as usize].clone();
            bytes.extend(token_bytes[(pair.1 - first) as usize].clone());
            token_bytes.push(bytes);
            merge_rank.insert(pair, merges.len() as u32);
            merges.push(pair);

            let touched: Vec<usize> = pair_words
                .remove(&pair)
                .map(|s| {
                    let mut v: Vec<usize> = s.into_iter().collect();
                    v.sort_unstable();
                    v
                })
                .unwrap_or_default();
            pair_counts.remove(&pair);

            for wi in touched {
                let (seq, f) = &mut seqs[wi];
                let f = *f;
                // Retract this word's pair statistics, rewrite, re-add.
                for w in seq.windows(2) {
                    let p = (w[0], w[1]);
                    if let Some(c) = pair_counts.get_mut(&p) {
                        *c = c.saturating_sub(f);
                        if *c == 0 {
                            pair_counts.remove(&p);
                        }
                    }
                    if let Some(set) = pair_words.get_mut(&p) {
                        set.remove(&wi);
                    }
                }
                let mut rewritten = Vec::with_capacity(seq.len());
                let mut i = 0;
                while i < seq.len() {
                    if i + 1 < seq.len() && (seq[i], seq[i + 1]) == pair {
                        rewritten.push(new_id);
                        i += 2;
                    } else {
                        rewritten.push(seq[i]);
                        i += 1;
                    }
                }
                *seq = rewritten;
                for w in seq.windows(2) {
                    let p = (w[0], w[1]);
                    *pair_counts.entry(p).or_insert(0) += f;
                    pair_words.entry(p).or_default().insert(wi);
                }
            }
        }

        Ok(BpeTokenizer {
            n_sentinels: config.n_sentinels,
            vocab_budget: config.vocab_size,
            merges,
            token_bytes,
            merge_rank,
        })
    }

    fn encode_word(&self, piece: &str) -> Vec<u32> {
        let first = self.first_content();
        let mut seq: Vec<u32> = piece.bytes().map(|b| first + b as u32).collect();
        loop {
            let mut best: Option<(u32, usize)> = None;
            for (i, w) in seq.windows(2).enumerate() {
                if let Some(&rank) = self.merge_rank.get(&(w[0], w[1])) {
                    if best.is_none_or(|(r, _)| rank < r) {
                        best = Some((rank, i));
                    }
                }
            }
            let Some((rank, _)) = best else { break };
            let pair = self.merges[rank as usize];
            let new_id = first + N_BYTES as u32 + rank;
            let mut rewritten = Vec::with_capacity(seq.len());
            let mut i = 0;
            while i < seq.len() {
                if i + 1 < seq.len() && (seq[i], seq[i + 1]) == pair {
                    rewritten.push(new_id);
                    i += 2;
                } else {
                    rewritten.push(seq[i]);
                    i += 1;
                }
            }
            seq = rewritten;
        }
        seq
    }

    pub fn encode(&self, text: &str) -> Result<Vec<u32>, TokenizerError> {
        let mut out = Vec::new();
        for (i, w) in text.split_whitespace().enumerate() {
            let piece = if i == 0 { w.to_string() } else { format!(" {w}") };
            out.extend(self.encode_word(&piece));
        }
        Ok(out)
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        let first = self.first_content();
        let mut bytes: Vec<u8> = Vec::new();
        for &id in ids {
            if id == PAD_ID || id == EOS_ID {
                continue;
            }
            if id == UNK_ID {
                bytes.extend(b"<unk>");
            } else if id < first {
                bytes.extend(format!("<sent_{}>", id - 3).into_bytes());
            } else {
                let tok = self
                    .token_bytes
                    .get((id - first) as usize)
                    .ok_or(TokenizerError::UnknownId(id))?;
                bytes.extend(tok);
            }
        }
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }

    /// Mean content tokens per whitespace word over a corpus; the
    /// vocabulary-budget comparison uses this.
    pub fn tokens_per_word(&self, lines: &[String]) -> f64 {
        let mut tokens = 0usize;
        let mut words = 0usize;
        for line in lines {
            words += line.split_whitespace().count();
            tokens += self.encode(line).map(|v| v.len()).unwrap_or(0);
        }
        if words == 0 {
            0.0
        } else {
            tokens as f64 / words as f64
        }
    }
}
