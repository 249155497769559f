//! Character error rate over Levenshtein distance.

use crate::error::{Error, Result};

/// Unit-cost edit distance between the character sequences of `a` and `b`.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `levenshtein(hyp, reference) / |reference|`; can exceed 1.
pub fn cer(hyp: &str, reference: &str) -> Result<f64> {
    let n = reference.chars().count();
    if n == 0 {
        return Err(Error::Domain("CER reference is empty".into()));
    }
    Ok(levenshtein(hyp, reference) as f64 / n as f64)
}

/// Total edits over total reference characters.
pub fn corpus_cer<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<f64> {
    let (mut edits, mut chars) = (0, 0);
    for (hyp, reference) in pairs {
        if reference.is_empty() {
            return Err(Error::Domain("CER reference is empty".into()));
        }
        edits += levenshtein(hyp, reference);
        chars += reference.chars().count();
    }
    if chars == 0 {
        return Err(Error::Domain("no references to score".into()));
    }
    Ok(edits as f64 / chars as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exponential recursion straight from the definition.
    fn naive(a: &[char], b: &[char]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((x, ra)), Some((y, rb))) => {
                let sub = naive(ra, rb) + usize::from(x != y);
                sub.min(naive(ra, b) + 1).min(naive(a, rb) + 1)
            }
        }
    }

    #[test]
    fn examples() {
        assert_eq!(cer("abc", "abc").unwrap(), 0.0);
        assert_eq!(cer("", "abc").unwrap(), 1.0);
        assert!((cer("kitten", "sitting").unwrap() - 3.0 / 7.0).abs() < 1e-15);
        assert_eq!(cer("aaaa", "a").unwrap(), 3.0);
        assert!(cer("a", "").is_err());
    }

    #[test]
    fn corpus_cer_weights_by_reference_length() {
        let c = corpus_cer([("ab", "abcd"), ("x", "x")]).unwrap();
        assert!((c - 2.0 / 5.0).abs() < 1e-15);
        assert!(corpus_cer(std::iter::empty()).is_err());
    }

    proptest! {
        #[test]
        fn matches_naive_recursion(a in "[abc]{0,6}", b in "[abc]{0,6}") {
            let (x, y): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
            prop_assert_eq!(levenshtein(&a, &b), naive(&x, &y));
        }

        #[test]
        fn symmetric_distance_asymmetric_normalisation(a in "[abc]{1,8}", b in "[abc]{1,8}") {
            prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
            let lhs = cer(&a, &b).unwrap() * b.len() as f64;
            let rhs = cer(&b, &a).unwrap() * a.len() as f64;
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
