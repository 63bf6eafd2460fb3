use super::post::min_max;

/// Length of the prefix kept by the elbow rule: the first `i` (1-based) with
/// `s_i − s_{i+1} > threshold`, or the whole list when no drop qualifies.
pub fn elbow_filter(scores: &[f64], threshold: f64) -> usize {
    scores
        .windows(2)
        .position(|w| w[0] - w[1] > threshold)
        .map_or(scores.len(), |i| i + 1)
}

/// Min-max normalizes `scores` and drops entries below `floor`. With no floor
/// the input comes back untouched. Returns `(input index, score)` pairs.
pub fn normalize_and_floor(scores: &[f64], floor: Option<f64>) -> Vec<(usize, f64)> {
    match floor {
        None => scores.iter().copied().enumerate().collect(),
        Some(floor) => min_max(scores)
            .into_iter()
            .enumerate()
            .filter(|(_, s)| *s >= floor)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn elbow_examples() {
        assert_eq!(elbow_filter(&[0.95, 0.90, 0.05], 0.8), 2);
        assert_eq!(elbow_filter(&[0.5, 0.5, 0.5], 0.8), 3);
        assert_eq!(elbow_filter(&[0.7], 0.8), 1);
        assert_eq!(elbow_filter(&[], 0.8), 0);
        // strict comparison
        assert_eq!(elbow_filter(&[1.0, 0.5], 0.5), 2);
    }

    #[test]
    fn floor_examples() {
        assert_eq!(
            normalize_and_floor(&[2.0, 1.0, 0.0], Some(0.25)),
            vec![(0, 1.0), (1, 0.5)]
        );
        assert_eq!(
            normalize_and_floor(&[2.0, 1.0, 0.0], None),
            vec![(0, 2.0), (1, 1.0), (2, 0.0)]
        );
        assert_eq!(
            normalize_and_floor(&[0.3, 0.3], Some(0.9)),
            vec![(0, 1.0), (1, 1.0)]
        );
    }

    proptest! {
        #[test]
        fn kept_length_non_decreasing_in_threshold(
            mut scores in proptest::collection::vec(0f64..5.0, 0..20),
            t1 in 0f64..3.0,
            dt in 0f64..3.0,
        ) {
            scores.sort_by(|a, b| b.total_cmp(a));
            let a = elbow_filter(&scores, t1);
            let b = elbow_filter(&scores, t1 + dt);
            prop_assert!(a <= scores.len());
            prop_assert!(b >= a);
        }
    }
}
