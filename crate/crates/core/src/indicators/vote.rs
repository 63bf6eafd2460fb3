use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum VoteOutcome {
    Decided { value: String, count: usize },
    /// No unique value reached a majority; the leading values are reported.
    Inconclusive { leading: Vec<String>, count: usize },
    NoVotes,
}

/// Tallies values in first-seen order.
pub fn tally(values: &[String]) -> Vec<(String, usize)> {
    let mut counts: Vec<(String, usize)> = Vec::new();
    for v in values {
        match counts.iter_mut().find(|(k, _)| k == v) {
            Some((_, c)) => *c += 1,
            None => counts.push((v.clone(), 1)),
        }
    }
    counts
}

/// A value is declared only when it is the unique most frequent one and its
/// count is at least `ceil(n / 2)`. Exact ties are never broken.
pub fn majority_vote(values: &[String]) -> VoteOutcome {
    let counts = tally(values);
    let Some(top) = counts.iter().map(|(_, c)| *c).max() else {
        return VoteOutcome::NoVotes;
    };
    let leading: Vec<String> = counts
        .iter()
        .filter(|(_, c)| *c == top)
        .map(|(v, _)| v.clone())
        .collect();
    if leading.len() == 1 && top >= values.len().div_ceil(2) {
        VoteOutcome::Decided {
            value: leading.into_iter().next().expect("one leader"),
            count: top,
        }
    } else {
        VoteOutcome::Inconclusive { leading, count: top }
    }
}

/// `100 × modal count / valid runs`; `None` without valid runs.
pub fn value_consistency(values: &[String]) -> Option<f64> {
    let top = tally(values).into_iter().map(|(_, c)| c).max()?;
    Some(100.0 * top as f64 / values.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vals(spec: &[(&str, usize)]) -> Vec<String> {
        spec.iter()
            .flat_map(|(v, n)| std::iter::repeat_n(v.to_string(), *n))
            .collect()
    }

    #[test]
    fn nine_to_one() {
        let v = vals(&[("low", 9), ("medium", 1)]);
        assert_eq!(majority_vote(&v), VoteOutcome::Decided { value: "low".into(), count: 9 });
        assert_eq!(value_consistency(&v), Some(90.0));
    }

    #[test]
    fn even_split_is_inconclusive() {
        let v = vals(&[("low", 5), ("medium", 5)]);
        assert_eq!(
            majority_vote(&v),
            VoteOutcome::Inconclusive { leading: vec!["low".into(), "medium".into()], count: 5 }
        );
        assert_eq!(value_consistency(&v), Some(50.0));
    }

    #[test]
    fn plurality_below_half_is_inconclusive() {
        let v = vals(&[("a", 4), ("b", 3), ("c", 3), ("d", 1)]);
        assert!(matches!(majority_vote(&v), VoteOutcome::Inconclusive { count: 4, .. }));
        assert_eq!(majority_vote(&[]), VoteOutcome::NoVotes);
        assert_eq!(value_consistency(&[]), None);
    }

    proptest! {
        #[test]
        fn declared_values_have_majority(v in proptest::collection::vec(0u8..4, 1..30)) {
            let v: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            if let VoteOutcome::Decided { value, count } = majority_vote(&v) {
                prop_assert!(count >= v.len().div_ceil(2));
                prop_assert_eq!(v.iter().filter(|x| **x == value).count(), count);
                prop_assert!(count <= v.len());
            }
        }
    }
}
