//! Bucketed relative positions for attention bias, shared by the training
//! graph and the incremental decoder so the two paths agree exactly.

/// Maps a relative position (key index minus query index) to a bucket.
/// Bidirectional attention splits the buckets between the two directions;
/// causal attention only buckets non-positive offsets. Near offsets get
/// exact buckets, far ones log-spaced buckets up to `max_distance`.
pub fn relative_bucket(
    relative_position: i64,
    bidirectional: bool,
    num_buckets: usize,
    max_distance: usize,
) -> usize {
    let mut bucket = 0usize;
    let mut buckets = num_buckets;
    let mut rel = relative_position;
    if bidirectional {
        buckets /= 2;
        if rel > 0 {
            bucket += buckets;
        }
        rel = rel.abs();
    } else {
        rel = -(rel.min(0));
    }
    let rel = rel as usize;
    let max_exact = buckets / 2;
    if rel < max_exact {
        bucket + rel
    } else {
        let log_ratio = ((rel as f64 / max_exact as f64).ln()
            / (max_distance as f64 / max_exact as f64).ln())
            * (buckets - max_exact) as f64;
        bucket + (max_exact + log_ratio as usize).min(buckets - 1)
    }
}

/// Bucket index per (query, key) pair, row-major [tq, tk]. `query_offset`
/// shifts the query positions, which is how the incremental decoder asks for
/// a single row at absolute position `offset`.
pub fn bucket_matrix(
    tq: usize,
    tk: usize,
    query_offset: usize,
    bidirectional: bool,
    num_buckets: usize,
    max_distance: usize,
) -> Vec<usize> {
    let mut out = Vec::with_capacity(tq * tk);
    for q in 0..tq {
        let qpos = (q + query_offset) as i64;
        for k in 0..tk {
            out.push(relative_bucket(k as i64 - qpos, bidirectional, num_buckets, max_distance));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_offset_is_bucket_zero() {
        assert_eq!(relative_bucket(0, true, 32, 128), 0);
        assert_eq!(relative_bucket(0, false, 32, 128), 0);
    }

    #[test]
    fn direction_splits_bidirectional_buckets() {
        let back = relative_bucket(-3, true, 32, 128);
        let fwd = relative_bucket(3, true, 32, 128);
        assert_eq!(back, 3);
        assert_eq!(fwd, 16 + 3);
    }

    #[test]
    fn causal_clamps_future_positions() {
        assert_eq!(relative_bucket(5, false, 32, 128), 0);
        assert_eq!(relative_bucket(-5, false, 32, 128), 5);
    }

    #[test]
    fn far_offsets_saturate_below_the_bucket_count() {
        for rel in [-1000i64, -128, 1000] {
            let b = relative_bucket(rel, true, 32, 128);
            assert!(b < 32);
        }
        // Causal attention uses the full bucket range for the past side.
        assert_eq!(relative_bucket(-100_000, false, 32, 128), 31);
    }

    #[test]
    fn buckets_are_monotone_in_distance_causal() {
        let mut last = 0;
        for d in 0..256 {
            let b = relative_bucket(-d, false, 32, 128);
            assert!(b >= last, "bucket not monotone at {d}");
            last = b;
        }
    }

    #[test]
    fn offset_rows_match_the_full_matrix() {
        let full = bucket_matrix(6, 6, 0, false, 32, 128);
        for q in 0..6 {
            let row = bucket_matrix(1, 6, q, false, 32, 128);
            assert_eq!(&full[q * 6..(q + 1) * 6], &row[..]);
        }
    }
}
