use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AugmentError, ControlCaptionPair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum MixStrategy {
    /// Adds `percent`% of the SSA pairs, drawn uniformly.
    Random { percent: f64 },
    /// Adds SSA pairs to the least populated coverage bins. `edges` are the
    /// bin boundaries, from 0 to 1.
    UniformCoverage { edges: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    #[serde(flatten)]
    pub strategy: MixStrategy,
    pub seed: u64,
}

impl MixSpec {
    pub fn validate(&self) -> Result<(), AugmentError> {
        match &self.strategy {
            MixStrategy::Random { percent } if !(0.0..=100.0).contains(percent) => {
                Err(AugmentError::BadMixSpec(format!("percentage {percent} is outside [0, 100]")))
            }
            MixStrategy::UniformCoverage { edges } => {
                let ok = edges.len() >= 2
                    && edges[0] == 0.0
                    && edges[edges.len() - 1] == 1.0
                    && edges.windows(2).all(|w| w[0] < w[1]);
                if ok {
                    Ok(())
                } else {
                    Err(AugmentError::BadMixSpec("coverage bins must partition [0, 1]".into()))
                }
            }
            _ => Ok(()),
        }
    }
}

/// `b` equal-width bin boundaries over `[0, 1]`.
pub fn uniform_bins(b: usize) -> Vec<f64> {
    let b = b.max(1);
    (0..=b).map(|i| i as f64 / b as f64).collect()
}

/// Bin of `coverage`: bins are half-open except the last, which holds 1.
pub fn bin_index(edges: &[f64], coverage: f64) -> usize {
    let bins = edges.len() - 1;
    edges[1..].iter().position(|&e| coverage < e).unwrap_or(bins - 1).min(bins - 1)
}

/// Population variance of per-bin counts.
fn variance(counts: &[usize]) -> f64 {
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<usize>() as f64 / n;
    counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / n
}

/// All original pairs followed by the selected SSA pairs.
///
/// Uniform coverage mixing repeatedly adds a random SSA pair from the
/// lowest-count bin that still has SSA pairs, ties going to the lower bin,
/// and stops once no addition strictly lowers the variance of bin counts.
pub fn mix_datasets(
    original: &[ControlCaptionPair],
    ssa: &[ControlCaptionPair],
    spec: &MixSpec,
) -> Result<Vec<ControlCaptionPair>, AugmentError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = original.to_vec();
    match &spec.strategy {
        MixStrategy::Random { percent } => {
            let k = ((percent * ssa.len() as f64) / 100.0 + 1e-9).floor() as usize;
            let mut picked = index::sample(&mut rng, ssa.len(), k.min(ssa.len())).into_vec();
            picked.sort_unstable();
            out.extend(picked.into_iter().map(|i| ssa[i].clone()));
        }
        MixStrategy::UniformCoverage { edges } => {
            let bins = edges.len() - 1;
            let mut counts = vec![0usize; bins];
            for p in original {
                counts[bin_index(edges, p.control.coverage)] += 1;
            }
            let mut pools: Vec<Vec<usize>> = vec![Vec::new(); bins];
            for (i, p) in ssa.iter().enumerate() {
                pools[bin_index(edges, p.control.coverage)].push(i);
            }
            for pool in &mut pools {
                pool.shuffle(&mut rng);
            }
            let mut picked = Vec::new();
            loop {
                let Some(b) = (0..bins).filter(|&b| !pools[b].is_empty()).min_by_key(|&b| (counts[b], b)) else {
                    break;
                };
                let before = variance(&counts);
                counts[b] += 1;
                if variance(&counts) >= before {
                    break;
                }
                picked.push(pools[b].pop().expect("pool is non-empty"));
            }
            picked.sort_unstable();
            out.extend(picked.into_iter().map(|i| ssa[i].clone()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{ControlSignal, PairSource};

    fn pair(cov: f64, source: PairSource, tag: usize) -> ControlCaptionPair {
        ControlCaptionPair {
            image_id: format!("img{tag}"),
            caption: format!("caption {tag}"),
            control: ControlSignal {
                boxes: Default::default(),
                entity_labels: Default::default(),
                coverage: cov,
                length_level: None,
                word_count_target: 2,
                verbs: None,
            },
            source,
            quality: None,
            amr: None,
        }
    }

    #[test]
    fn bins() {
        let e = uniform_bins(10);
        assert_eq!(e.len(), 11);
        assert_eq!(bin_index(&e, 0.0), 0);
        assert_eq!(bin_index(&e, 0.05), 0);
        assert_eq!(bin_index(&e, 0.1), 1);
        assert_eq!(bin_index(&e, 0.95), 9);
        assert_eq!(bin_index(&e, 1.0), 9);
    }

    #[test]
    fn random_boundaries() {
        let orig: Vec<_> = (0..5).map(|i| pair(0.5, PairSource::Original, i)).collect();
        let ssa: Vec<_> = (0..7).map(|i| pair(0.2, PairSource::Ssa, i)).collect();
        let spec = |p| MixSpec { strategy: MixStrategy::Random { percent: p }, seed: 9 };
        assert_eq!(mix_datasets(&orig, &ssa, &spec(0.0)).unwrap(), orig);
        assert_eq!(mix_datasets(&orig, &ssa, &spec(100.0)).unwrap().len(), 12);
        assert_eq!(mix_datasets(&orig, &ssa, &spec(50.0)).unwrap().len(), 5 + 3);
        assert_eq!(mix_datasets(&orig, &ssa, &spec(50.0)).unwrap(), mix_datasets(&orig, &ssa, &spec(50.0)).unwrap());
        assert!(mix_datasets(&orig, &ssa, &spec(101.0)).is_err());
    }

    #[test]
    fn uniform_fills_sparse_bins() {
        let orig: Vec<_> = (0..6).map(|i| pair(0.55, PairSource::Original, i)).collect();
        let ssa: Vec<_> = (0..10).map(|i| pair(0.05 + 0.1 * (i % 3) as f64, PairSource::Ssa, i)).collect();
        let spec = MixSpec { strategy: MixStrategy::UniformCoverage { edges: uniform_bins(10) }, seed: 1 };
        let out = mix_datasets(&orig, &ssa, &spec).unwrap();
        assert_eq!(&out[..6], &orig[..]);
        let count = |ps: &[ControlCaptionPair]| {
            let mut c = vec![0; 10];
            for p in ps {
                c[bin_index(&uniform_bins(10), p.control.coverage)] += 1;
            }
            c
        };
        assert!(variance(&count(&out)) < variance(&count(&orig)));
        assert_eq!(&count(&out)[..3], &[1, 1, 1]);
    }

    #[test]
    fn bad_bins_rejected() {
        let spec = MixSpec { strategy: MixStrategy::UniformCoverage { edges: vec![0.0, 0.6, 0.5, 1.0] }, seed: 0 };
        assert!(mix_datasets(&[], &[], &spec).is_err());
    }
}
