//! End-to-end augmentation run: ground, merge, sample, realize, filter, mix
//! and evaluate. Each stage is also exposed on its own.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{
    extract_control, filter_by_quality, mix_datasets, original_control, CaptionGenerator, ConstScorer,
    ControlCaptionPair, MockGruenScorer, PairSource, QualityScorer, StubGenerator,
};
use crate::bridge::{BridgeClient, MockBridge, TcpBridge};
use crate::config::{Endpoint, PipelineConfig};
use crate::dataset::{read_jsonl, write_jsonl, GraphRecord, MetaRecord, Provenance, SampleRecord};
use crate::embedding::EmbeddingStore;
use crate::grounding::{build_vgamr, GroundedCaptionRecord, VgAmr};
use crate::merge::{build_meta_vgamr, MergeParams};
use crate::metrics::{evaluate, LexiconNouns, MetricReport};
use crate::sampler::{sample_event_subgraphs, SampleKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Ground,
    Merge,
    Sample,
    Augment,
    Mix,
    Eval,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format!("{self:?}").to_lowercase())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Config,
    Data,
    External,
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("{stage} stage failed: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub kind: FailureKind,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, kind: FailureKind, message: impl fmt::Display) -> Self {
        PipelineError { stage, kind, message: message.to_string() }
    }

    /// 2 for configuration, 3 for data and 4 for external service failures.
    pub fn exit_code(&self) -> i32 {
        match self.kind {
            FailureKind::Config => 2,
            FailureKind::Data => 3,
            FailureKind::External => 4,
        }
    }
}

/// Per-image seed, stable under reordering of the input.
pub fn image_seed(seed: u64, image_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(image_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

#[derive(Debug, Clone)]
pub struct GroundedImage {
    pub image_id: String,
    pub width: f64,
    pub height: f64,
    pub captions: Vec<String>,
    pub graphs: Vec<VgAmr>,
}

/// Groups records by image, in image-id order, and grounds every caption.
pub fn ground_records(records: &[GroundedCaptionRecord]) -> Result<Vec<GroundedImage>, PipelineError> {
    let mut by_image: BTreeMap<&str, Vec<&GroundedCaptionRecord>> = BTreeMap::new();
    for r in records {
        by_image.entry(&r.image_id).or_default().push(r);
    }
    let groups: Vec<(&str, Vec<&GroundedCaptionRecord>)> = by_image.into_iter().collect();
    groups
        .par_iter()
        .map(|(id, recs)| {
            let (width, height) = (recs[0].image_width, recs[0].image_height);
            if recs.iter().any(|r| r.image_width != width || r.image_height != height) {
                return Err(PipelineError::new(
                    Stage::Ground,
                    FailureKind::Data,
                    format!("image {id} has captions with different image sizes"),
                ));
            }
            if !(width > 0.0 && height > 0.0) {
                return Err(PipelineError::new(Stage::Ground, FailureKind::Data, format!("image {id} has no area")));
            }
            let graphs = recs
                .iter()
                .map(|r| build_vgamr(r))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| PipelineError::new(Stage::Ground, FailureKind::Data, e))?;
            Ok(GroundedImage {
                image_id: id.to_string(),
                width,
                height,
                captions: recs.iter().map(|r| r.caption()).collect(),
                graphs,
            })
        })
        .collect()
}

/// Control/caption pairs of the annotated captions themselves.
pub fn original_pairs(images: &[GroundedImage]) -> Vec<ControlCaptionPair> {
    images
        .iter()
        .flat_map(|img| {
            img.graphs.iter().zip(&img.captions).map(|(g, c)| ControlCaptionPair {
                image_id: img.image_id.clone(),
                caption: c.clone(),
                control: original_control(g, img.width, img.height, c),
                source: PairSource::Original,
                quality: None,
                amr: Some(g.graph.to_penman()),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct MetaImage {
    pub image_id: String,
    pub width: f64,
    pub height: f64,
    pub captions: usize,
    pub meta: VgAmr,
    pub missing_labels: BTreeSet<String>,
}

impl MetaImage {
    pub fn record(&self) -> MetaRecord {
        MetaRecord {
            image_id: self.image_id.clone(),
            image_width: self.width,
            image_height: self.height,
            graph: GraphRecord::from_vgamr(&self.meta),
            captions: self.captions,
        }
    }

    pub fn from_record(r: &MetaRecord) -> Result<Self, PipelineError> {
        Ok(MetaImage {
            image_id: r.image_id.clone(),
            width: r.image_width,
            height: r.image_height,
            captions: r.captions,
            meta: r.graph.to_vgamr().map_err(|e| PipelineError::new(Stage::Ingest, FailureKind::Data, e))?,
            missing_labels: BTreeSet::new(),
        })
    }
}

/// One meta graph per image, merged in parallel across images.
pub fn merge_images(
    images: &[GroundedImage],
    params: &MergeParams,
    store: &EmbeddingStore,
    restarts: usize,
    seed: u64,
) -> Result<Vec<MetaImage>, PipelineError> {
    images
        .par_iter()
        .map(|img| {
            let m = build_meta_vgamr(&img.graphs, params, store, restarts, image_seed(seed, &img.image_id))
                .map_err(|e| PipelineError::new(Stage::Merge, FailureKind::Data, format!("{}: {e}", img.image_id)))?;
            Ok(MetaImage {
                image_id: img.image_id.clone(),
                width: img.width,
                height: img.height,
                captions: img.graphs.len(),
                meta: m.meta,
                missing_labels: m.missing_labels,
            })
        })
        .collect()
}

/// Event subgraphs of every meta graph.
pub fn sample_images(metas: &[MetaImage], seed: u64) -> Vec<SampleRecord> {
    let per_image: Vec<Vec<SampleRecord>> = metas
        .par_iter()
        .map(|m| {
            sample_event_subgraphs(&m.meta, image_seed(seed, &m.image_id))
                .iter()
                .map(|s| SampleRecord::new(&m.image_id, m.width, m.height, s))
                .collect()
        })
        .collect();
    per_image.into_iter().flatten().collect()
}

/// Realizes the grounded samples as SSA pairs. Samples without a grounded
/// node are skipped; their count is returned alongside the pairs.
pub fn realize_samples(
    samples: &[SampleRecord],
    generator: &dyn CaptionGenerator,
) -> Result<(Vec<ControlCaptionPair>, usize), PipelineError> {
    let graphs = samples
        .iter()
        .map(|s| s.graph.to_vgamr())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| PipelineError::new(Stage::Augment, FailureKind::Data, e))?;
    let usable: Vec<usize> = (0..samples.len()).filter(|&i| !graphs[i].grounding.is_empty()).collect();
    let amrs: Vec<_> = usable.iter().map(|&i| graphs[i].graph.clone()).collect();
    let captions = generator
        .realize_batch(&amrs)
        .map_err(|e| PipelineError::new(Stage::Augment, FailureKind::External, e))?;
    let mut pairs = Vec::with_capacity(usable.len());
    for (&i, caption) in usable.iter().zip(captions) {
        let s = &samples[i];
        let control = extract_control(&graphs[i], s.image_width, s.image_height, &caption)
            .map_err(|e| PipelineError::new(Stage::Augment, FailureKind::Data, e))?;
        pairs.push(ControlCaptionPair {
            image_id: s.image_id.clone(),
            caption,
            control,
            source: PairSource::Ssa,
            quality: None,
            amr: Some(s.graph.penman.clone()),
        });
    }
    Ok((pairs, samples.len() - usable.len()))
}

pub fn make_generator(endpoint: &Endpoint, max_in_flight: usize) -> Box<dyn CaptionGenerator> {
    match endpoint {
        Endpoint::BridgeMock => Box::new(BridgeClient::new(MockBridge::default())),
        Endpoint::Bridge(addr) => Box::new(BridgeClient::new(TcpBridge::new(addr.clone()).with_window(max_in_flight))),
        _ => Box::new(StubGenerator),
    }
}

pub fn make_scorer(endpoint: &Endpoint, max_in_flight: usize) -> Box<dyn QualityScorer> {
    match endpoint {
        Endpoint::Const(x) => Box::new(ConstScorer(*x)),
        Endpoint::BridgeMock => Box::new(BridgeClient::new(MockBridge::default())),
        Endpoint::Bridge(addr) => Box::new(BridgeClient::new(TcpBridge::new(addr.clone()).with_window(max_in_flight))),
        _ => Box::new(MockGruenScorer),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub images: usize,
    pub captions: usize,
    pub meta_nodes: usize,
    pub samples: usize,
    pub argument_closure_samples: usize,
    pub samples_without_grounding: usize,
    pub ssa_generated: usize,
    pub ssa_kept: usize,
    pub ssa_dropped: usize,
    pub original_pairs: usize,
    pub mixed_pairs: usize,
    /// Concept labels that had no embedding during merging.
    pub missing_embeddings: Vec<String>,
}

/// Contents of `report.json`: the metric report plus run statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    #[serde(rename = "_provenance")]
    pub provenance: Provenance,
    #[serde(flatten)]
    pub metrics: MetricReport,
    pub dataset: DatasetStats,
}

pub const OUTPUT_FILES: [&str; 6] =
    ["original.jsonl", "meta.jsonl", "samples.jsonl", "pairs.jsonl", "mixed.jsonl", "report.json"];

fn write_out<T: Serialize>(dir: &Path, name: &str, prov: &Provenance, items: &[T]) -> Result<(), PipelineError> {
    let mut p = prov.clone();
    p.stage = name.trim_end_matches(".jsonl").to_string();
    write_jsonl(dir.join(name), Some(&p), items).map_err(|e| PipelineError::new(Stage::Write, FailureKind::Data, e))
}

/// Runs every stage and writes [`OUTPUT_FILES`] into the output directory.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport, PipelineError> {
    let config_err = |e: crate::config::ConfigError| PipelineError::new(Stage::Config, FailureKind::Config, e);
    cfg.validate().map_err(config_err)?;
    let hash = cfg.hash().map_err(config_err)?;
    let prov = Provenance::new("run", &hash, cfg.seed);
    let out = &cfg.paths.out_dir;

    let data_err = |stage| move |e: String| PipelineError::new(stage, FailureKind::Data, e);
    let (_, records): (_, Vec<GroundedCaptionRecord>) =
        read_jsonl(&cfg.paths.records).map_err(|e| data_err(Stage::Ingest)(e.to_string()))?;
    let store = EmbeddingStore::load(&cfg.paths.embeddings).map_err(|e| data_err(Stage::Ingest)(e.to_string()))?;
    let nouns = LexiconNouns::load(&cfg.paths.nouns).map_err(|e| data_err(Stage::Ingest)(e.to_string()))?;
    info!("{} caption records", records.len());

    let images = ground_records(&records)?;
    let originals = original_pairs(&images);
    write_out(out, "original.jsonl", &prov, &originals)?;

    let metas = merge_images(&images, &cfg.merge, &store, cfg.restarts, cfg.seed)?;
    let meta_records: Vec<MetaRecord> = metas.iter().map(MetaImage::record).collect();
    write_out(out, "meta.jsonl", &prov, &meta_records)?;
    info!("merged {} images", metas.len());

    let samples = sample_images(&metas, cfg.seed);
    write_out(out, "samples.jsonl", &prov, &samples)?;
    info!("{} samples", samples.len());

    let generator = make_generator(&cfg.endpoints.generator().map_err(config_err)?, cfg.max_in_flight);
    let scorer = make_scorer(&cfg.endpoints.scorer().map_err(config_err)?, cfg.max_in_flight);
    let (generated, ungrounded) = realize_samples(&samples, generator.as_ref())?;
    let ssa_generated = generated.len();
    let (kept, dropped) = filter_by_quality(generated, scorer.as_ref(), cfg.gruen_threshold).map_err(|e| {
        let kind = match e {
            crate::augment::AugmentError::BadThreshold(_) => FailureKind::Config,
            _ => FailureKind::External,
        };
        PipelineError::new(Stage::Augment, kind, e)
    })?;
    write_out(out, "pairs.jsonl", &prov, &kept)?;
    info!("kept {} of {} SSA pairs", kept.len(), ssa_generated);

    let mixed = mix_datasets(&originals, &kept, &cfg.mix.spec(cfg.seed))
        .map_err(|e| PipelineError::new(Stage::Mix, FailureKind::Config, e))?;
    write_out(out, "mixed.jsonl", &prov, &mixed)?;

    let metrics = evaluate(&mixed, &store, &nouns, cfg.bands)
        .map_err(|e| PipelineError::new(Stage::Eval, FailureKind::Data, e))?;
    let missing: BTreeSet<String> = metas.iter().flat_map(|m| m.missing_labels.iter().cloned()).collect();
    let dataset = DatasetStats {
        images: images.len(),
        captions: records.len(),
        meta_nodes: metas.iter().map(|m| m.meta.graph.node_count()).sum(),
        samples: samples.len(),
        argument_closure_samples: samples.iter().filter(|s| s.kind == SampleKind::ArgumentClosure).count(),
        samples_without_grounding: ungrounded,
        ssa_generated,
        ssa_kept: kept.len(),
        ssa_dropped: dropped.len(),
        original_pairs: originals.len(),
        mixed_pairs: mixed.len(),
        missing_embeddings: missing.into_iter().collect(),
    };
    let mut report_prov = prov;
    report_prov.stage = "report".into();
    let report = PipelineReport { provenance: report_prov, metrics, dataset };
    write_report(&out.join("report.json"), &report)?;
    Ok(report)
}

pub fn write_report<T: Serialize>(path: &Path, report: &T) -> Result<(), PipelineError> {
    let write_err = |e: String| PipelineError::new(Stage::Write, FailureKind::Data, e);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| write_err(format!("{}: {e}", dir.display())))?;
    }
    let mut text = serde_json::to_string_pretty(report).map_err(|e| write_err(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| write_err(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_seeds_depend_on_both_inputs() {
        assert_eq!(image_seed(1, "a"), image_seed(1, "a"));
        assert_ne!(image_seed(1, "a"), image_seed(2, "a"));
        assert_ne!(image_seed(1, "a"), image_seed(1, "b"));
    }

    #[test]
    fn exit_codes() {
        let e = |k| PipelineError::new(Stage::Merge, k, "x").exit_code();
        assert_eq!((e(FailureKind::Config), e(FailureKind::Data), e(FailureKind::External)), (2, 3, 4));
        assert_eq!(PipelineError::new(Stage::Merge, FailureKind::Data, "boom").to_string(), "merge stage failed: boom");
    }
}
