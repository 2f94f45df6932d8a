//! String similarity measures.
//!
//! Two scorers with different jobs: the normalized indel ratio drives
//! candidate retrieval, Jaro-Winkler drives node weights.

use std::collections::HashMap;

use crate::kg::normalize_surface;

/// Prefix boost applied per shared leading character.
pub const WINKLER_SCALE: f64 = 0.1;
/// At most this many shared leading characters are boosted.
pub const WINKLER_PREFIX_CAP: usize = 4;
/// Jaro scores at or below this value get no prefix boost.
pub const WINKLER_BOOST_THRESHOLD: f64 = 0.7;

/// Bit-parallel LCS over a fixed pattern.
///
/// Keeps one bit-vector per distinct pattern character so that scoring the
/// same pattern against many texts does no per-call setup.
#[derive(Debug, Clone)]
pub struct IndelScorer {
    len: usize,
    blocks: usize,
    masks: HashMap<char, Vec<u64>>,
}

impl IndelScorer {
    /// Builds a scorer for an already normalized pattern.
    pub fn new(pattern: &str) -> Self {
        let chars: Vec<char> = pattern.chars().collect();
        let blocks = chars.len().div_ceil(64).max(1);
        let mut masks: HashMap<char, Vec<u64>> = HashMap::new();
        for (i, &c) in chars.iter().enumerate() {
            masks.entry(c).or_insert_with(|| vec![0; blocks])[i / 64] |= 1 << (i % 64);
        }
        IndelScorer {
            len: chars.len(),
            blocks,
            masks,
        }
    }

    pub fn pattern_len(&self) -> usize {
        self.len
    }

    /// Length of the longest common subsequence of the pattern and `text`.
    pub fn lcs(&self, text: &str) -> usize {
        if self.len == 0 {
            return 0;
        }
        let mut v = vec![u64::MAX; self.blocks];
        for c in text.chars() {
            let Some(m) = self.masks.get(&c) else {
                continue;
            };
            let mut carry = 0u64;
            for (vb, &mb) in v.iter_mut().zip(m) {
                let u = *vb & mb;
                let (s1, c1) = vb.overflowing_add(u);
                let (s2, c2) = s1.overflowing_add(carry);
                carry = (c1 || c2) as u64;
                *vb = s2 | (*vb & !mb);
            }
        }
        let zeros: usize = v.iter().map(|b| b.count_zeros() as usize).sum();
        // bits past the pattern end stay set, so they never count as zeros
        zeros
    }

    /// Indel distance between the pattern and `text`.
    pub fn distance(&self, text: &str) -> usize {
        let text_len = text.chars().count();
        self.len + text_len - 2 * self.lcs(text)
    }

    /// `1 - indel / (|pattern| + |text|)`; two empty strings score 1.
    pub fn ratio(&self, text: &str) -> f64 {
        let text_len = text.chars().count();
        let total = self.len + text_len;
        if total == 0 {
            return 1.0;
        }
        2.0 * self.lcs(text) as f64 / total as f64
    }
}

/// Normalized indel similarity of two surface strings, after
/// [`normalize_surface`].
pub fn fuzzy_score(a: &str, b: &str) -> f64 {
    let a = normalize_surface(a);
    let b = normalize_surface(b);
    IndelScorer::new(&a).ratio(&b)
}

/// Upper bound on [`IndelScorer::ratio`] from lengths alone.
pub fn ratio_upper_bound(len_a: usize, len_b: usize) -> f64 {
    let total = len_a + len_b;
    if total == 0 {
        1.0
    } else {
        2.0 * len_a.min(len_b) as f64 / total as f64
    }
}

/// Jaro similarity on Unicode scalar values.
pub fn jaro(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    jaro_chars(&a, &b)
}

fn jaro_chars(a: &[char], b: &[char]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let window = (a.len().max(b.len()) / 2).saturating_sub(1);
    let mut b_used = vec![false; b.len()];
    let mut a_matched = Vec::with_capacity(a.len());
    for (i, &ca) in a.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(b.len());
        for j in lo..hi {
            if !b_used[j] && b[j] == ca {
                b_used[j] = true;
                a_matched.push(ca);
                break;
            }
        }
    }
    let m = a_matched.len();
    if m == 0 {
        return 0.0;
    }
    let b_matched = b.iter().zip(&b_used).filter(|(_, &u)| u).map(|(&c, _)| c);
    let half_transpositions = a_matched
        .iter()
        .zip(b_matched)
        .filter(|(x, y)| *x != y)
        .count();
    let t = (half_transpositions / 2) as f64;
    let m = m as f64;
    (m / a.len() as f64 + m / b.len() as f64 + (m - t) / m) / 3.0
}

/// Jaro-Winkler similarity (1 = identical).
pub fn jaro_winkler(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let sim = jaro_chars(&a, &b);
    if sim <= WINKLER_BOOST_THRESHOLD {
        return sim;
    }
    let prefix = a
        .iter()
        .zip(&b)
        .take(WINKLER_PREFIX_CAP)
        .take_while(|(x, y)| x == y)
        .count();
    sim + prefix as f64 * WINKLER_SCALE * (1.0 - sim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lcs_table(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut prev = vec![0usize; b.len() + 1];
        for &ca in &a {
            let mut cur = vec![0usize; b.len() + 1];
            for (j, &cb) in b.iter().enumerate() {
                cur[j + 1] = if ca == cb {
                    prev[j] + 1
                } else {
                    prev[j + 1].max(cur[j])
                };
            }
            prev = cur;
        }
        prev[b.len()]
    }

    #[test]
    fn fuzzy_examples() {
        assert_eq!(fuzzy_score("adenoma", "adenoma"), 1.0);
        assert_eq!(fuzzy_score("abc", "xyz"), 0.0);
        assert_eq!(fuzzy_score("", ""), 1.0);
        assert_eq!(fuzzy_score("abc", ""), 0.0);
        // 15 vs 16 chars, one insertion: 1 - 1/31
        let s = fuzzy_score("hepatic adenoma", "hepatic adenomas");
        assert!((s - 30.0 / 31.0).abs() < 1e-12);
        assert!(s > 0.75);
    }

    #[test]
    fn long_patterns_cross_block_boundaries() {
        let a: String = "abcdefghij".repeat(15);
        let b: String = "acegikmoqs".repeat(14);
        assert_eq!(IndelScorer::new(&a).lcs(&b), lcs_table(&a, &b));
    }

    #[test]
    fn jaro_winkler_examples() {
        assert_eq!(jaro_winkler("martha", "martha"), 1.0);
        assert_eq!(jaro_winkler("abc", "xyz"), 0.0);
        assert!((jaro_winkler("martha", "marhta") - 0.9611).abs() < 1e-4);
        assert!((jaro("martha", "marhta") - 0.9444).abs() < 1e-4);
        assert!((jaro_winkler("dwayne", "duane") - 0.84).abs() < 1e-4);
        assert!((jaro_winkler("dixon", "dicksonx") - 0.8133).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn lcs_matches_table(a in "[a-d ]{0,90}", b in "[a-d ]{0,90}") {
            prop_assert_eq!(IndelScorer::new(&a).lcs(&b), lcs_table(&a, &b));
        }

        #[test]
        fn similarities_are_symmetric_and_bounded(a in "[a-f]{0,12}", b in "[a-f]{0,12}") {
            let f = fuzzy_score(&a, &b);
            prop_assert_eq!(f, fuzzy_score(&b, &a));
            prop_assert!((0.0..=1.0).contains(&f));
            prop_assert_eq!(f == 1.0, a == b);
            let j = jaro_winkler(&a, &b);
            prop_assert!((j - jaro_winkler(&b, &a)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&j));
            prop_assert_eq!(j == 1.0, a == b);
            prop_assert!(f <= ratio_upper_bound(a.len(), b.len()) + 1e-12);
        }
    }
}
