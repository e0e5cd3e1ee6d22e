use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mus_core::calibration::{calibrate, split_by_topic, GroundTruth, Split, SplitSpec};
use mus_core::catalog::{load_catalog, load_catalog_with, read_manifest, write_catalog, Catalog};
use mus_core::embedding::{compose_all, write_vectors, Scenario};
use mus_core::enrichment::EnrichmentMode;
use mus_core::evaluation::{evaluate, render_csv, render_table};
use mus_core::pipeline::{
    build_provider, enrich, read_json, run_pipeline, write_artifacts, write_json, write_rankings, ProviderKind, RunConfig,
    CALIBRATION_FILE, RANKINGS_FILE, REPORT_FILE, SPLIT_FILE,
};
use mus_core::search::rank_all;
use mus_core::{Calibration, Error, Report, Result};

const VECTORS_FILE: &str = "vectors.jsonl";

#[derive(Parser)]
#[command(name = "mus", version, about = "Table union search over column metadata")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// td or tg.
    #[arg(long, global = true)]
    scenario: Option<Scenario>,
    /// base, dtypes, dbpedia or dtypes+dbpedia.
    #[arg(long, global = true)]
    enrichment: Option<EnrichmentMode>,
    /// local or http.
    #[arg(long, global = true)]
    provider: Option<ProviderKind>,
    /// Base URL of the embedding service.
    #[arg(long, global = true)]
    endpoint: Option<String>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    topic_weight: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Catalog directory (CSV with manifest, or Turtle).
    #[arg(long, global = true)]
    catalog: Option<PathBuf>,
    #[arg(long, global = true)]
    ground_truth: Option<PathBuf>,
    /// Vocabulary TSV for property enrichment.
    #[arg(long, global = true)]
    vocab: Option<PathBuf>,
    #[arg(long, global = true)]
    split_ratio: Option<f64>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Read CSV headers per manifest and write one Turtle file per dataset.
    Ingest {
        input: PathBuf,
        /// Manifest file; defaults to manifest.json in the input directory.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        base_iri: Option<String>,
    },
    /// Annotate columns with semantic types and vocabulary properties.
    Enrich {
        /// Catalog directory; overrides --catalog.
        input: Option<PathBuf>,
    },
    /// Compose one vector per dataset and write them as JSON Lines.
    Embed,
    /// Split topics and fit the threshold on the test split.
    Calibrate,
    /// Rank candidates for every query, labeled with a calibrated threshold when given.
    Rank {
        /// calibration.json to label scores with.
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// Only queries and candidates of this split (needs split.json in the output directory).
        #[arg(long)]
        split: Option<String>,
    },
    /// Score the evaluation split with a stored split and calibration.
    Evaluate {
        /// Print CSV rows instead of the table.
        #[arg(long)]
        csv: bool,
    },
    /// Run every stage and write split.json, calibration.json, rankings.csv and report.json.
    Pipeline {
        #[arg(long)]
        csv: bool,
    },
}

impl Global {
    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                }
            )*};
        }
        set!(
            seed,
            scenario,
            enrichment,
            provider,
            k,
            topic_weight,
            out,
            catalog,
            ground_truth,
            split_ratio
        );
        if self.endpoint.is_some() {
            cfg.endpoint = self.endpoint.clone();
        }
        if self.vocab.is_some() {
            cfg.vocab = self.vocab.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

fn load_nonempty(dir: &Path) -> Result<Catalog> {
    let cat = load_catalog(dir)?;
    if cat.is_empty() {
        return Err(Error::Config(format!("{}: no datasets", dir.display())));
    }
    Ok(cat)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = cli.global.run_config()?;
    let provider = build_provider::<f64>(&cfg)?;
    let comp = cfg.composition();
    match cli.command {
        Command::Ingest { input, manifest, base_iri } => {
            let cat = match manifest {
                Some(m) => load_catalog_with(&input, &read_manifest(&m)?)?,
                None => load_catalog(&input)?,
            };
            if cat.is_empty() {
                return Err(Error::Config(format!("{}: no datasets", input.display())));
            }
            write_catalog(&cat, &cfg.out, base_iri.as_deref().unwrap_or(&cfg.base_iri))?;
            log::info!("wrote {} datasets to {}", cat.len(), cfg.out.display());
        }
        Command::Enrich { input } => {
            let cat = load_nonempty(input.as_ref().unwrap_or(&cfg.catalog))?;
            let outcome = enrich(&cat, &cfg, provider.as_ref())?;
            if !outcome.issues.is_empty() {
                log::warn!("{} column(s) not fully enriched", outcome.issues.len());
            }
            write_catalog(&outcome.catalog, &cfg.out, &cfg.base_iri)?;
        }
        Command::Embed => {
            let cat = cfg.enrichment.project_catalog(&load_nonempty(&cfg.catalog)?);
            let vectors = compose_all(cat.iter(), &comp, provider.as_ref())?;
            create_dir(&cfg.out)?;
            let path = cfg.out.join(VECTORS_FILE);
            write_vectors(&path, vectors.values().filter(|v| !v.degenerate))?;
        }
        Command::Calibrate => {
            let cat = load_nonempty(&cfg.catalog)?;
            let gt = GroundTruth::read_csv(&cfg.ground_truth, &cat)?;
            let split = split_by_topic(&cat, cfg.split_ratio, cfg.seed)?;
            let calib = calibrate(
                &cat,
                &split,
                &gt,
                &comp,
                cfg.enrichment,
                provider.as_ref(),
                cfg.cross_topic_negatives,
            )?;
            create_dir(&cfg.out)?;
            write_json(&cfg.out.join(SPLIT_FILE), &split)?;
            write_json(&cfg.out.join(CALIBRATION_FILE), &calib)?;
            println!("threshold {:.6}  J {:.6}", calib.threshold, calib.j_statistic);
        }
        Command::Rank { calibration, split } => {
            let cat = cfg.enrichment.project_catalog(&load_nonempty(&cfg.catalog)?);
            let topics: Option<BTreeSet<String>> = match split.as_deref() {
                None => None,
                Some(which) => {
                    let which = match which {
                        "test" => Split::Test,
                        "eval" => Split::Eval,
                        other => return Err(Error::Config(format!("unknown split {other:?} (expected test or eval)"))),
                    };
                    let spec: SplitSpec = read_json(&cfg.out.join(SPLIT_FILE))?;
                    Some(spec.topics(which).clone())
                }
            };
            let scope = cat.iter().filter(|d| topics.as_ref().is_none_or(|t| t.contains(&d.topic)));
            let vectors = compose_all(scope, &comp, provider.as_ref())?;
            let mut rankings = rank_all(&cat, &vectors, cfg.scenario, topics.as_ref(), Some(cfg.k))?;
            rankings.sort_by(|a, b| a.query_id.cmp(&b.query_id));
            let threshold = match calibration {
                Some(path) => Some(read_json::<Calibration>(&path)?.threshold),
                None => None,
            };
            create_dir(&cfg.out)?;
            write_rankings(&cfg.out.join(RANKINGS_FILE), &rankings, threshold)?;
        }
        Command::Evaluate { csv } => {
            let cat = load_nonempty(&cfg.catalog)?;
            let gt = GroundTruth::read_csv(&cfg.ground_truth, &cat)?;
            let split: SplitSpec = read_json(&cfg.out.join(SPLIT_FILE))?;
            let calib: Calibration = read_json(&cfg.out.join(CALIBRATION_FILE))?;
            let eval = evaluate(
                &cat,
                &split,
                &gt,
                &calib,
                &comp,
                cfg.enrichment,
                provider.as_ref(),
                cfg.k,
                cfg.cross_topic_negatives,
            )?;
            write_json(&cfg.out.join(REPORT_FILE), &eval.report)?;
            print_report(&eval.report, csv);
        }
        Command::Pipeline { csv } => {
            let run = run_pipeline::<f64>(&cfg)?;
            write_artifacts(&run, &cfg.out)?;
            print_report(&run.evaluation.report, csv);
        }
    }
    Ok(())
}

fn print_report(report: &Report, csv: bool) {
    let reports = std::slice::from_ref(report);
    if csv {
        print!("{}", render_csv(reports));
    } else {
        print!("{}", render_table(reports));
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut shown = e.to_string();
            eprintln!("error: {shown}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                let text = s.to_string();
                if !shown.contains(&text) {
                    eprintln!("  caused by: {text}");
                    shown = text;
                }
                source = s.source();
            }
            ExitCode::from(e.class().exit_code() as u8)
        }
    }
}
