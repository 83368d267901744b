use std::collections::{BTreeMap, HashMap, HashSet};

use nalgebra::DMatrix;

use super::MetricsError;
use crate::text::{ngrams, words};

/// Distinct `n`-grams over the whole set divided by its total word count.
pub fn distinct_ngram_diversity<S: AsRef<str>>(captions: &[S], n: usize) -> f64 {
    let toks: Vec<Vec<String>> = captions.iter().map(|c| words(c.as_ref())).collect();
    let total: usize = toks.iter().map(Vec::len).sum();
    if total == 0 {
        return 0.0;
    }
    let distinct: HashSet<&[String]> = toks.iter().flat_map(|t| ngrams(t, n)).collect();
    distinct.len() as f64 / total as f64
}

const CIDER_MAX_N: usize = 4;

/// TF-IDF vectors per n-gram order, document frequencies taken over the set.
/// Ordered maps keep the floating-point summation order fixed.
fn tfidf(captions: &[Vec<String>]) -> Vec<Vec<BTreeMap<&[String], f64>>> {
    let k = captions.len() as f64;
    (1..=CIDER_MAX_N)
        .map(|n| {
            let counts: Vec<BTreeMap<&[String], f64>> = captions
                .iter()
                .map(|c| {
                    let mut m = BTreeMap::new();
                    for g in ngrams(c, n) {
                        *m.entry(g).or_insert(0.0) += 1.0;
                    }
                    m
                })
                .collect();
            let mut df: BTreeMap<&[String], f64> = BTreeMap::new();
            for m in &counts {
                for g in m.keys() {
                    *df.entry(*g).or_insert(0.0) += 1.0;
                }
            }
            counts
                .into_iter()
                .map(|m| {
                    let total: f64 = m.values().sum();
                    m.into_iter()
                        .map(|(g, c)| (g, c / total * (((1.0 + k) / (1.0 + df[g])).ln() + 1.0)))
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn cosine(a: &BTreeMap<&[String], f64>, b: &BTreeMap<&[String], f64>) -> f64 {
    let dot: f64 = a.iter().filter_map(|(g, x)| b.get(g).map(|y| x * y)).sum();
    let na: f64 = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Pairwise CIDEr-style similarity kernel, normalized to a unit diagonal.
pub fn cider_kernel<S: AsRef<str>>(captions: &[S]) -> DMatrix<f64> {
    let toks: Vec<Vec<String>> = captions.iter().map(|c| words(c.as_ref())).collect();
    let vecs = tfidf(&toks);
    let k = toks.len();
    let mut m = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let s = vecs.iter().map(|per_n| cosine(&per_n[i], &per_n[j])).sum::<f64>() / CIDER_MAX_N as f64;
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
    let diag: Vec<f64> = (0..k).map(|i| m[(i, i)]).collect();
    for i in 0..k {
        for j in 0..k {
            m[(i, j)] = if diag[i] > 0.0 && diag[j] > 0.0 {
                m[(i, j)] / (diag[i] * diag[j]).sqrt()
            } else if i == j {
                1.0
            } else {
                0.0
            };
        }
    }
    m
}

/// Self-CIDEr diversity: `-ln(r) / ln(K)` where `r` is the share of the
/// largest singular value's square root in the kernel's spectrum.
pub fn self_cider<S: AsRef<str>>(captions: &[S]) -> Result<f64, MetricsError> {
    let k = captions.len();
    if k < 2 {
        return Err(MetricsError::TooFewCaptions { needed: 2, found: k });
    }
    if captions.iter().all(|c| words(c.as_ref()).is_empty()) {
        return Err(MetricsError::DegenerateKernel);
    }
    let eig = cider_kernel(captions).symmetric_eigen();
    let roots: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
    let sum: f64 = roots.iter().sum();
    let max = roots.iter().copied().fold(0.0, f64::max);
    if sum <= 0.0 {
        return Err(MetricsError::DegenerateKernel);
    }
    let r = max / sum;
    Ok((-r.ln() / (k as f64).ln()).clamp(0.0, 1.0))
}

/// Best `n`-gram diversity over all `k`-subsets of one image's captions.
///
/// Depth-first over subsets in index order with incremental n-gram counts,
/// pruned by an optimistic bound: the remaining slots add at most the
/// largest per-caption distinct counts and at least the smallest lengths.
pub fn best_k_diversity<S: AsRef<str>>(captions: &[S], k: usize, n: usize) -> f64 {
    let prepared = Prepared::new(captions, n);
    let k = k.min(captions.len());
    if k == 0 {
        return 0.0;
    }
    let mut search = Search { p: &prepared, k, counts: HashMap::new(), distinct: 0, words: 0, best: (0, 1), chosen: 0 };
    search.dfs(0);
    search.best.0 as f64 / search.best.1 as f64
}

/// Exhaustive reference for [`best_k_diversity`].
pub fn best_k_diversity_brute<S: AsRef<str>>(captions: &[S], k: usize, n: usize) -> f64 {
    let m = captions.len();
    let k = k.min(m);
    let mut best: f64 = 0.0;
    for mask in 0u32..(1 << m) {
        if mask.count_ones() as usize == k {
            let subset: Vec<&str> = (0..m).filter(|i| mask >> i & 1 == 1).map(|i| captions[i].as_ref()).collect();
            best = best.max(distinct_ngram_diversity(&subset, n));
        }
    }
    best
}

/// Mean over images of the best 5-of-10 diversity.
pub fn best5_diversity<S: AsRef<str>>(caption_sets: &[Vec<S>], n: usize) -> Result<f64, MetricsError> {
    if caption_sets.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for set in caption_sets {
        if set.len() != 10 {
            return Err(MetricsError::WrongSetSize { expected: 10, found: set.len() });
        }
        sum += best_k_diversity(set, 5, n);
    }
    Ok(sum / caption_sets.len() as f64)
}

struct Prepared {
    grams: Vec<Vec<u32>>,
    lens: Vec<u64>,
    /// Distinct n-grams within each caption.
    own: Vec<u64>,
}

impl Prepared {
    fn new<S: AsRef<str>>(captions: &[S], n: usize) -> Self {
        let mut ids: HashMap<Vec<String>, u32> = HashMap::new();
        let mut grams = Vec::new();
        let mut lens = Vec::new();
        let mut own = Vec::new();
        for c in captions {
            let w = words(c.as_ref());
            let g: Vec<u32> = ngrams(&w, n)
                .map(|g| {
                    let next = ids.len() as u32;
                    *ids.entry(g.to_vec()).or_insert(next)
                })
                .collect();
            own.push(g.iter().collect::<HashSet<_>>().len() as u64);
            lens.push(w.len() as u64);
            grams.push(g);
        }
        Prepared { grams, lens, own }
    }
}

struct Search<'a> {
    p: &'a Prepared,
    k: usize,
    counts: HashMap<u32, u32>,
    distinct: u64,
    words: u64,
    /// Best ratio as (distinct, words).
    best: (u64, u64),
    chosen: usize,
}

impl Search<'_> {
    fn better(&self, num: u64, den: u64) -> bool {
        // num/den > best.0/best.1, with 0/0 treated as 0
        den > 0 && (num as u128) * (self.best.1 as u128) > (self.best.0 as u128) * (den as u128)
    }

    fn dfs(&mut self, start: usize) {
        let m = self.p.grams.len();
        if self.chosen == self.k {
            if self.better(self.distinct, self.words) {
                self.best = (self.distinct, self.words);
            }
            return;
        }
        let need = self.k - self.chosen;
        if m - start < need {
            return;
        }
        let mut own: Vec<u64> = self.p.own[start..].to_vec();
        let mut lens: Vec<u64> = self.p.lens[start..].to_vec();
        own.sort_unstable_by(|a, b| b.cmp(a));
        lens.sort_unstable();
        let num = self.distinct + own[..need].iter().sum::<u64>();
        let den = self.words + lens[..need].iter().sum::<u64>();
        if den > 0 && self.best.0 > 0 && !self.better(num, den) {
            return;
        }
        for i in start..m {
            if m - i < need {
                break;
            }
            self.add(i);
            self.dfs(i + 1);
            self.remove(i);
        }
    }

    fn add(&mut self, i: usize) {
        for &g in &self.p.grams[i] {
            let c = self.counts.entry(g).or_insert(0);
            if *c == 0 {
                self.distinct += 1;
            }
            *c += 1;
        }
        self.words += self.p.lens[i];
        self.chosen += 1;
    }

    fn remove(&mut self, i: usize) {
        for &g in &self.p.grams[i] {
            let c = self.counts.get_mut(&g).expect("added before");
            *c -= 1;
            if *c == 0 {
                self.distinct -= 1;
            }
        }
        self.words -= self.p.lens[i];
        self.chosen -= 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_hand_counts() {
        assert!((distinct_ngram_diversity(&["a dog runs", "a cat sits"], 1) - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(distinct_ngram_diversity(&["one two three"], 1), 1.0);
        let three = ["a dog runs"; 3];
        assert!((distinct_ngram_diversity(&three, 1) - 1.0 / 3.0).abs() < 1e-12);
        assert!((distinct_ngram_diversity(&["a dog runs", "a dog sits"], 2) - 3.0 / 6.0).abs() < 1e-12);
        assert_eq!(distinct_ngram_diversity::<&str>(&[], 1), 0.0);
    }

    #[test]
    fn self_cider_extremes() {
        let same = ["a boat at the dock"; 4];
        assert!(self_cider(&same).unwrap().abs() < 1e-6);
        let disjoint = ["red boat", "green house", "tall tree", "small dog"];
        assert!((self_cider(&disjoint).unwrap() - 1.0).abs() < 1e-6);
        let mixed = ["a boat at the dock", "a boat near a house", "two dogs play"];
        let s = self_cider(&mixed).unwrap();
        assert!(s > 0.0 && s < 1.0);
        assert!(self_cider(&["only one"]).is_err());
        assert!(matches!(self_cider(&["", "!"]), Err(MetricsError::DegenerateKernel)));
    }

    #[test]
    fn self_cider_order_invariant() {
        let a = ["a boat at the dock", "a boat near a house", "two dogs play", "dogs play in a park"];
        let mut b = a;
        b.reverse();
        assert!((self_cider(&a).unwrap() - self_cider(&b).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn best_k_matches_brute_force_by_hand() {
        let caps = ["a dog", "a dog", "a cat sits", "the cat", "birds fly high", "a a a a"];
        for k in 1..=6 {
            for n in 1..=2 {
                assert!((best_k_diversity(&caps, k, n) - best_k_diversity_brute(&caps, k, n)).abs() < 1e-12);
            }
        }
        let ten = vec!["same words here"; 10];
        assert!((best5_diversity(&[ten], 1).unwrap() - 3.0 / 15.0).abs() < 1e-12);
        assert!(best5_diversity(&[vec!["x"; 9]], 1).is_err());
    }
}
