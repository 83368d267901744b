use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use ssa_core::amr::{parse_penman_document, serialize_penman_pretty};
use ssa_core::augment::{filter_by_quality, mix_datasets, uniform_bins, MixStrategy};
use ssa_core::config::{Endpoint, MixKind, PipelineConfig};
use ssa_core::dataset::{read_jsonl, write_jsonl, GraphRecord, MetaRecord, Provenance, SampleRecord};
use ssa_core::metrics::{
    bands_csv, evaluate, render_table, AnnotatedNouns, LexiconNouns, MetricReport, NounExtractor,
};
use ssa_core::pipeline::{
    ground_records, make_generator, make_scorer, merge_images, realize_samples, sample_images, write_report,
    FailureKind, MetaImage, PipelineError,
};
use ssa_core::grounding::build_vgamr;
use ssa_core::smatch::{prf, smatch_brute_force, smatch_score};
use ssa_core::{ControlCaptionPair, EmbeddingStore, GroundedCaptionRecord, MergeParams, MixSpec};

#[derive(Parser)]
#[command(name = "ssa", version, about = "Structured semantic augmentation for controllable captioning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a PENMAN file and print it back in canonical form or as triples.
    Parse {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = ParseFormat::Penman)]
        format: ParseFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Smatch precision, recall and F1 between two PENMAN files, graph by graph.
    Smatch {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 4)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Exhaustive search instead of hill climbing (small graphs only).
        #[arg(long)]
        brute_force: bool,
    },
    /// Ground every caption's AMR on its boxes and write one graph per caption for inspection.
    Ground {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge the grounded captions of each image into one meta graph.
    Merge {
        /// Caption records, grounded here as `ground` would
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.7)]
        syn_th: f64,
        #[arg(long, default_value_t = 0.5)]
        pred_th: f64,
        #[arg(long, default_value_t = 4)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sample event subgraphs from meta graphs.
    Sample {
        #[arg(long)]
        meta: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Realize samples as captions and keep those passing the quality threshold.
    Augment {
        /// Meta graphs to sample from.
        #[arg(long, conflicts_with = "samples", required_unless_present = "samples")]
        meta: Option<PathBuf>,
        /// Previously sampled subgraphs.
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `stub`, `bridge:mock` or `bridge:HOST:PORT`.
        #[arg(long, env = "SSA_GENERATOR", default_value = "stub")]
        generator: String,
        /// `const:X`, `mock-gruen`, `bridge:mock` or `bridge:HOST:PORT`.
        #[arg(long, env = "SSA_SCORER", default_value = "const:1.0")]
        scorer: String,
        #[arg(long, default_value_t = 0.7)]
        gruen_th: f64,
        #[arg(long, default_value_t = 16)]
        max_in_flight: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write the pairs that fell below the threshold.
        #[arg(long)]
        dropped: Option<PathBuf>,
    },
    /// Add SSA pairs to the original pairs.
    Mix {
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        ssa: PathBuf,
        #[arg(long, value_enum)]
        strategy: MixKindArg,
        /// Percentage of SSA pairs to add (random strategy).
        #[arg(long, default_value_t = 100.0)]
        p: f64,
        /// Number of coverage bins (uniform strategy).
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score generated captions against their control signals.
    Eval {
        /// Generated captions; full pairs when `--controls` is absent.
        #[arg(long)]
        pairs: PathBuf,
        /// Control signals, matched to `--pairs` line by line.
        #[arg(long)]
        controls: Option<PathBuf>,
        #[arg(long)]
        embeddings: PathBuf,
        /// `lexicon:FILE` or `annotated` (nouns listed on each generated line).
        #[arg(long)]
        nouns: String,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 10)]
        bands: usize,
    },
    /// Run every stage from a config file.
    Run(RunArgs),
    /// Render a report as a table and a coverage-band CSV.
    Report {
        #[arg(long)]
        report: PathBuf,
        /// Write the band CSV here instead of after the table.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ParseFormat {
    Penman,
    Triples,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum MixKindArg {
    Random,
    Uniform,
}

impl From<MixKindArg> for MixKind {
    fn from(k: MixKindArg) -> Self {
        match k {
            MixKindArg::Random => MixKind::Random,
            MixKindArg::Uniform => MixKind::Uniform,
        }
    }
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    gruen_th: Option<f64>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    #[arg(long)]
    bands: Option<usize>,
    #[arg(long)]
    records: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    nouns: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    syn_th: Option<f64>,
    #[arg(long)]
    pred_th: Option<f64>,
    #[arg(long, value_enum)]
    mix_strategy: Option<MixKindArg>,
    #[arg(long)]
    mix_p: Option<f64>,
    #[arg(long)]
    mix_bins: Option<usize>,
    #[arg(long, env = "SSA_GENERATOR")]
    generator: Option<String>,
    #[arg(long, env = "SSA_SCORER")]
    scorer: Option<String>,
}

impl RunArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value.clone() {
                    $field = v.into();
                }
            };
        }
        set!(cfg.seed, self.seed);
        set!(cfg.restarts, self.restarts);
        set!(cfg.gruen_threshold, self.gruen_th);
        set!(cfg.max_in_flight, self.max_in_flight);
        set!(cfg.bands, self.bands);
        set!(cfg.paths.records, self.records);
        set!(cfg.paths.embeddings, self.embeddings);
        set!(cfg.paths.nouns, self.nouns);
        set!(cfg.paths.out_dir, self.out_dir);
        set!(cfg.merge.synonym_threshold, self.syn_th);
        set!(cfg.merge.predicate_threshold, self.pred_th);
        set!(cfg.mix.strategy, self.mix_strategy.map(MixKind::from));
        set!(cfg.mix.percent, self.mix_p);
        set!(cfg.mix.bins, self.mix_bins);
        set!(cfg.endpoints.generator, self.generator);
        set!(cfg.endpoints.scorer, self.scorer);
    }
}

/// An error together with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

trait OrExit<T> {
    fn or_exit(self, kind: FailureKind) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn or_exit(self, kind: FailureKind) -> Result<T, Failure> {
        self.map_err(|e| Failure { code: code_of(kind), error: e.into() })
    }
}

fn code_of(kind: FailureKind) -> u8 {
    match kind {
        FailureKind::Config => 2,
        FailureKind::Data => 3,
        FailureKind::External => 4,
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure { code: code_of(e.kind), error: e.into() }
    }
}

use FailureKind::{Config, Data, External};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    let hash = args_hash();
    match command {
        Command::Parse { input, format, out } => {
            let text = fs::read_to_string(&input).with_context(|| input.display().to_string()).or_exit(Config)?;
            let blocks = parse_penman_document(&text).or_exit(Data)?;
            let mut buf = String::new();
            for b in &blocks {
                match format {
                    ParseFormat::Penman => {
                        for m in &b.metadata {
                            buf.push_str(m);
                            buf.push('\n');
                        }
                        buf.push_str(&serialize_penman_pretty(&b.graph, 80));
                        buf.push_str("\n\n");
                    }
                    ParseFormat::Triples => {
                        for t in b.graph.to_triples() {
                            buf.push_str(&format!("{}\t{}\t{}\n", t.head, t.label, t.tail));
                        }
                        buf.push('\n');
                    }
                    ParseFormat::Json => {
                        buf.push_str(&serde_json::to_string(&b.graph.to_triples()).or_exit(Data)?);
                        buf.push('\n');
                    }
                }
            }
            emit(out.as_deref(), buf.trim_end_matches('\n').to_string() + "\n")
        }
        Command::Smatch { a, b, restarts, seed, brute_force } => {
            let read = |p: &Path| -> Result<_, Failure> {
                let text = fs::read_to_string(p).with_context(|| p.display().to_string()).or_exit(Config)?;
                parse_penman_document(&text).with_context(|| p.display().to_string()).or_exit(Data)
            };
            let (ga, gb) = (read(&a)?, read(&b)?);
            if ga.len() != gb.len() {
                return Err(anyhow!("{} has {} graphs but {} has {}", a.display(), ga.len(), b.display(), gb.len()))
                    .or_exit(Data);
            }
            let (mut matched, mut left, mut right) = (0, 0, 0);
            for (x, y) in ga.iter().zip(&gb) {
                let r = if brute_force {
                    smatch_brute_force(&x.graph, &y.graph).or_exit(Data)?
                } else {
                    smatch_score(&x.graph, &y.graph, restarts.max(1), seed)
                };
                matched += r.matched_triples;
                left += r.left_triples;
                right += r.right_triples;
            }
            let (p, r, f) = prf(matched, left, right);
            println!("Precision: {p:.4}\nRecall: {r:.4}\nF1: {f:.4}");
            Ok(())
        }
        Command::Ground { input, out } => {
            #[derive(Serialize)]
            struct Grounded<'a> {
                image_id: &'a str,
                caption_id: &'a str,
                caption: String,
                #[serde(flatten)]
                graph: GraphRecord,
            }
            let records = read_records(&input)?;
            let lines = records
                .iter()
                .map(|r| {
                    let g = build_vgamr(r)?;
                    Ok(Grounded {
                        image_id: &r.image_id,
                        caption_id: &r.caption_id,
                        caption: r.caption(),
                        graph: GraphRecord::from_vgamr(&g),
                    })
                })
                .collect::<Result<Vec<_>, ssa_core::grounding::GroundingError>>()
                .or_exit(Data)?;
            write_jsonl(&out, Some(&Provenance::new("ground", &hash, 0)), &lines).or_exit(Data)
        }
        Command::Merge { input, embeddings, out, syn_th, pred_th, restarts, seed } => {
            let params = MergeParams::new(syn_th, pred_th).or_exit(Config)?;
            let store = load_embeddings(&embeddings)?;
            let images = ground_records(&read_records(&input)?)?;
            let metas = merge_images(&images, &params, &store, restarts.max(1), seed)?;
            for m in &metas {
                if !m.missing_labels.is_empty() {
                    info!("{}: no embedding for {:?}", m.image_id, m.missing_labels);
                }
            }
            let recs: Vec<MetaRecord> = metas.iter().map(MetaImage::record).collect();
            write_jsonl(&out, Some(&Provenance::new("meta", &hash, seed)), &recs).or_exit(Data)
        }
        Command::Sample { meta, seed, out } => {
            let metas = read_metas(&meta)?;
            let samples = sample_images(&metas, seed);
            write_jsonl(&out, Some(&Provenance::new("samples", &hash, seed)), &samples).or_exit(Data)
        }
        Command::Augment { meta, samples, seed, generator, scorer, gruen_th, max_in_flight, out, dropped } => {
            let gen = ssa_core::config::Endpoints { generator, scorer };
            let gen_ep: Endpoint = gen.generator().or_exit(Config)?;
            let score_ep: Endpoint = gen.scorer().or_exit(Config)?;
            if !(0.0..=1.0).contains(&gruen_th) {
                return Err(anyhow!("--gruen-th {gruen_th} is outside [0, 1]")).or_exit(Config);
            }
            let samples: Vec<SampleRecord> = match (meta, samples) {
                (Some(m), _) => sample_images(&read_metas(&m)?, seed),
                (None, Some(s)) => read_jsonl(&s).or_exit(Data)?.1,
                (None, None) => unreachable!("clap requires one input"),
            };
            let (pairs, skipped) = realize_samples(&samples, make_generator(&gen_ep, max_in_flight).as_ref())?;
            if skipped > 0 {
                info!("skipped {skipped} samples without grounded nodes");
            }
            let (kept, low) =
                filter_by_quality(pairs, make_scorer(&score_ep, max_in_flight).as_ref(), gruen_th).or_exit(External)?;
            let prov = Provenance::new("pairs", &hash, seed);
            write_jsonl(&out, Some(&prov), &kept).or_exit(Data)?;
            if let Some(d) = dropped {
                write_jsonl(&d, Some(&prov), &low).or_exit(Data)?;
            }
            Ok(())
        }
        Command::Mix { original, ssa, strategy, p, bins, seed, out } => {
            let strategy = match strategy {
                MixKindArg::Random => MixStrategy::Random { percent: p },
                MixKindArg::Uniform => MixStrategy::UniformCoverage { edges: uniform_bins(bins) },
            };
            let spec = MixSpec { strategy, seed };
            spec.validate().or_exit(Config)?;
            let (_, o): (_, Vec<ControlCaptionPair>) = read_jsonl(&original).or_exit(Data)?;
            let (_, s): (_, Vec<ControlCaptionPair>) = read_jsonl(&ssa).or_exit(Data)?;
            let mixed = mix_datasets(&o, &s, &spec).or_exit(Config)?;
            write_jsonl(&out, Some(&Provenance::new("mixed", &hash, seed)), &mixed).or_exit(Data)
        }
        Command::Eval { pairs, controls, embeddings, nouns, report, bands } => {
            let store = load_embeddings(&embeddings)?;
            let (pairs, annotated) = load_eval_pairs(&pairs, controls.as_deref())?;
            let extractor: Box<dyn NounExtractor> = match nouns.as_str() {
                "annotated" => Box::new(annotated),
                s => match s.strip_prefix("lexicon:") {
                    Some(path) => Box::new(LexiconNouns::load(path).or_exit(Config)?),
                    None => return Err(anyhow!("--nouns must be `lexicon:FILE` or `annotated`")).or_exit(Config),
                },
            };
            let r = evaluate(&pairs, &store, extractor.as_ref(), bands.max(1)).or_exit(Data)?;
            write_report(&report, &r)?;
            print!("{}", render_table(&r));
            Ok(())
        }
        Command::Run(args) => {
            let mut cfg = PipelineConfig::load(&args.config).or_exit(Config)?;
            args.apply(&mut cfg);
            let report = ssa_core::run_pipeline(&cfg)?;
            print!("{}", render_table(&report.metrics));
            eprintln!("outputs written to {}", cfg.paths.out_dir.display());
            Ok(())
        }
        Command::Report { report, csv } => {
            let text = fs::read_to_string(&report).with_context(|| report.display().to_string()).or_exit(Config)?;
            let r: MetricReport = serde_json::from_str(&text)
                .with_context(|| format!("{} is not a metric report", report.display()))
                .or_exit(Data)?;
            print!("{}", render_table(&r));
            let bands = bands_csv(&r.coverage_bands);
            match csv {
                Some(p) => fs::write(&p, bands).with_context(|| p.display().to_string()).or_exit(Data),
                None => {
                    print!("\n{bands}");
                    Ok(())
                }
            }
        }
    }
}

fn emit(out: Option<&Path>, text: String) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| p.display().to_string()).or_exit(Data),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Hash of the command line, recorded as the provenance of standalone stages.
fn args_hash() -> String {
    use sha2::{Digest, Sha256};
    let joined: Vec<String> = std::env::args().skip(1).collect();
    format!("{:x}", Sha256::digest(joined.join("\u{1f}").as_bytes()))
}

fn read_records(path: &Path) -> Result<Vec<GroundedCaptionRecord>, Failure> {
    if !path.is_file() {
        return Err(anyhow!("{} does not exist", path.display())).or_exit(Config);
    }
    Ok(read_jsonl(path).or_exit(Data)?.1)
}

fn read_metas(path: &Path) -> Result<Vec<MetaImage>, Failure> {
    let (_, recs): (_, Vec<MetaRecord>) = read_jsonl(path).or_exit(Data)?;
    Ok(recs.iter().map(MetaImage::from_record).collect::<Result<Vec<_>, _>>()?)
}

fn load_embeddings(path: &Path) -> Result<EmbeddingStore, Failure> {
    if !path.is_file() {
        return Err(anyhow!("embedding file {} does not exist", path.display())).or_exit(Config);
    }
    EmbeddingStore::load(path).with_context(|| path.display().to_string()).or_exit(Data)
}

/// A generated caption, optionally with its nouns listed.
#[derive(Deserialize)]
struct Generated {
    image_id: String,
    caption: String,
    #[serde(default)]
    quality: Option<f64>,
    #[serde(default)]
    nouns: Option<Vec<String>>,
}

fn load_eval_pairs(
    pairs: &Path,
    controls: Option<&Path>,
) -> Result<(Vec<ControlCaptionPair>, AnnotatedNouns), Failure> {
    let mut annotated = AnnotatedNouns::default();
    let Some(controls) = controls else {
        let (_, pairs): (_, Vec<ControlCaptionPair>) = read_jsonl(pairs).or_exit(Data)?;
        return Ok((pairs, annotated));
    };
    let (_, generated): (_, Vec<Generated>) = read_jsonl(pairs).or_exit(Data)?;
    let (_, mut ctrl): (_, Vec<ControlCaptionPair>) = read_jsonl(controls).or_exit(Data)?;
    if generated.len() != ctrl.len() {
        return Err(anyhow!("{} generated captions but {} controls", generated.len(), ctrl.len())).or_exit(Data);
    }
    for (i, (g, c)) in generated.into_iter().zip(ctrl.iter_mut()).enumerate() {
        if g.image_id != c.image_id {
            return Err(anyhow!("line {}: caption for {} but control for {}", i + 1, g.image_id, c.image_id))
                .or_exit(Data);
        }
        if let Some(n) = g.nouns {
            annotated.insert(&g.caption, n);
        }
        c.caption = g.caption;
        c.quality = g.quality;
    }
    Ok((ctrl, annotated))
}
