mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{brute_force_assignment, pixel_coverage, random_boxes};
use ssa_core::amr::parse_penman;
use ssa_core::augment::{
    compute_coverage, filter_by_quality, length_level, mix_datasets, uniform_bins, FnScorer,
};
use ssa_core::config::Endpoint;
use ssa_core::grounding::{BBox, BoxSet};
use ssa_core::metrics::{distinct_ngram_diversity, harmonic_mean, hungarian_match};
use ssa_core::smatch::random_graph;
use ssa_core::{ControlCaptionPair, ControlSignal, LengthLevel, MixSpec, MixStrategy, PairSource, PipelineConfig};

fn graph_seed() -> impl Strategy<Value = (u64, usize)> {
    (any::<u64>(), 1usize..8)
}

fn boxes(w: u32, h: u32) -> impl Strategy<Value = Vec<BBox>> {
    prop::collection::vec((0..w - 1, 0..h - 1, 1..w, 1..h), 0..6).prop_map(move |raw| {
        raw.into_iter()
            .map(|(x1, y1, dx, dy)| {
                let x2 = (x1 + dx).min(w).max(x1 + 1);
                let y2 = (y1 + dy).min(h).max(y1 + 1);
                BBox::new(x1 as f64, y1 as f64, x2 as f64, y2 as f64)
            })
            .collect()
    })
}

fn pair(i: usize, coverage: f64) -> ControlCaptionPair {
    ControlCaptionPair {
        image_id: format!("img{}", i % 3),
        caption: format!("caption {i}"),
        control: ControlSignal {
            boxes: Default::default(),
            entity_labels: Default::default(),
            coverage,
            length_level: LengthLevel::of(2),
            word_count_target: 2,
            verbs: None,
        },
        source: PairSource::Ssa,
        quality: None,
        amr: None,
    }
}

fn pairs(max: usize) -> impl Strategy<Value = Vec<ControlCaptionPair>> {
    prop::collection::vec(0.0f64..=1.0, 0..max)
        .prop_map(|cs| cs.into_iter().enumerate().map(|(i, c)| pair(i, c)).collect())
}

proptest! {
    #[test]
    fn penman_round_trip((seed, vars) in graph_seed()) {
        let g = random_graph(&mut ChaCha8Rng::seed_from_u64(seed), vars);
        let back = parse_penman(&g.to_penman()).unwrap();
        prop_assert_eq!(back.to_triples(), g.to_triples());
        let text = back.to_penman();
        prop_assert_eq!(parse_penman(&text).unwrap().to_penman(), text);
    }

    #[test]
    fn triple_count_matches_graph((seed, vars) in graph_seed()) {
        let g = random_graph(&mut ChaCha8Rng::seed_from_u64(seed), vars);
        let expected = g.node_count() + g.edges().len() + g.attributes().len() + 1;
        prop_assert_eq!(g.to_triples().len(), expected);
    }

    #[test]
    fn coverage_matches_pixel_grid(w in 2u32..40, h in 2u32..40, seed in any::<u64>()) {
        let set = random_boxes(&mut ChaCha8Rng::seed_from_u64(seed), w, h, 6);
        let c = compute_coverage(&set, w as f64, h as f64);
        prop_assert!((0.0..=1.0).contains(&c));
        prop_assert!((c - pixel_coverage(&set, w, h)).abs() <= 1.0 / (w as f64 * h as f64));
    }

    #[test]
    fn coverage_is_monotone(a in boxes(50, 50), b in boxes(50, 50)) {
        let small: BoxSet = a.iter().copied().collect();
        let large: BoxSet = a.iter().chain(&b).copied().collect();
        prop_assert!(compute_coverage(&small, 50.0, 50.0) <= compute_coverage(&large, 50.0, 50.0) + 1e-12);
    }

    #[test]
    fn hungarian_is_optimal(m in (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
        prop::collection::vec(prop::collection::vec(0.0f64..1.0, c), r)
    })) {
        let (pairs, total) = hungarian_match(&m);
        prop_assert!((total - brute_force_assignment(&m)).abs() < 1e-9);
        let rows: BTreeSet<usize> = pairs.iter().map(|p| p.0).collect();
        let cols: BTreeSet<usize> = pairs.iter().map(|p| p.1).collect();
        prop_assert_eq!(rows.len(), pairs.len());
        prop_assert_eq!(cols.len(), pairs.len());
    }

    #[test]
    fn harmonic_mean_bounds(v in prop::collection::vec(0.01f64..100.0, 1..6)) {
        let h = harmonic_mean(&v).unwrap();
        let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = v.iter().cloned().fold(0.0, f64::max);
        let arith = v.iter().sum::<f64>() / v.len() as f64;
        let geo = (v.iter().map(|x| x.ln()).sum::<f64>() / v.len() as f64).exp();
        prop_assert!(min - 1e-9 <= h && h <= max + 1e-9);
        prop_assert!(h <= geo * (1.0 + 1e-9) && geo <= arith * (1.0 + 1e-9));
    }

    #[test]
    fn distinct_ngrams_ignore_order(
        words in prop::collection::vec(prop::collection::vec("[a-d]", 1..6), 1..6),
        n in 1usize..4,
    ) {
        let caps: Vec<String> = words.iter().map(|w| w.join(" ")).collect();
        let mut rev = caps.clone();
        rev.reverse();
        let d = distinct_ngram_diversity(&caps, n);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, distinct_ngram_diversity(&rev, n));
    }

    #[test]
    fn mixing_keeps_originals(original in pairs(12), ssa in pairs(20), p in 0.0f64..=100.0, uniform in any::<bool>(), seed in any::<u64>()) {
        let strategy = if uniform {
            MixStrategy::UniformCoverage { edges: uniform_bins(5) }
        } else {
            MixStrategy::Random { percent: p }
        };
        let spec = MixSpec { strategy, seed };
        let mixed = mix_datasets(&original, &ssa, &spec).unwrap();
        prop_assert_eq!(&mixed[..original.len()], &original[..]);
        prop_assert!(mixed[original.len()..].iter().all(|x| ssa.contains(x)));
        let added: BTreeSet<&str> = mixed[original.len()..].iter().map(|x| x.caption.as_str()).collect();
        prop_assert_eq!(added.len(), mixed.len() - original.len());
        prop_assert_eq!(mixed, mix_datasets(&original, &ssa, &spec).unwrap());
    }

    #[test]
    fn filter_partitions(scores in prop::collection::vec(0.0f64..=1.0, 0..20), th in 0.0f64..=1.0) {
        let ps: Vec<ControlCaptionPair> = (0..scores.len()).map(|i| pair(i, 0.5)).collect();
        let scorer = FnScorer(|c: &str| scores[c[8..].parse::<usize>().unwrap()]);
        let (kept, dropped) = filter_by_quality(ps, &scorer, th).unwrap();
        prop_assert_eq!(kept.len() + dropped.len(), scores.len());
        prop_assert!(kept.iter().all(|p| p.quality.unwrap() >= th));
        prop_assert!(dropped.iter().all(|p| p.quality.unwrap() < th));
    }

    #[test]
    fn length_level_is_total(n in 1usize..10_000) {
        let level = length_level(n).unwrap();
        let (lo, hi) = level.range();
        prop_assert!(lo <= n && hi.map_or(true, |h| n <= h));
    }

    #[test]
    fn endpoint_round_trip(x in 0.0f64..=1.0, port in 1u16..u16::MAX) {
        for e in [
            Endpoint::Stub,
            Endpoint::Const(x),
            Endpoint::MockGruen,
            Endpoint::BridgeMock,
            Endpoint::Bridge(format!("127.0.0.1:{port}")),
        ] {
            prop_assert_eq!(e.to_string().parse::<Endpoint>().unwrap(), e);
        }
    }

    #[test]
    fn config_round_trip(seed in any::<u32>(), restarts in 1usize..10, th in 0.0f64..=1.0, bins in 1usize..20) {
        let text = format!(
            "seed = {seed}\nrestarts = {restarts}\ngruen_threshold = {th}\n[mix]\nstrategy = \"uniform\"\nbins = {bins}\n[paths]\nrecords = \"r.jsonl\"\nembeddings = \"e.txt\"\nnouns = \"n.txt\"\n"
        );
        let cfg = PipelineConfig::parse(&text).unwrap();
        prop_assert_eq!(cfg.seed, seed as u64);
        let again = PipelineConfig::parse(&toml::to_string(&cfg).unwrap()).unwrap();
        prop_assert_eq!(again, cfg);
    }
}

#[test]
fn length_level_rejects_empty() {
    assert_eq!(length_level(0), None);
}
