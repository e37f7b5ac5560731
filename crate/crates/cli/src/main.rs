use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use scenecut::checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};
use scenecut::data::{generate_corpus, load_corpus_dir, save_manifest, MovieManifest};
use scenecut::grouping::{dump_correlation, grouping_features, run_grouping};
use scenecut::metrics::evaluate_corpus;
use scenecut::pipeline::{ground_truth, read_predictions, score_movie, segment_movie, trace_file, write_segmentation};
use scenecut::Execution;

mod config;

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "scenecut", version, about = "Shot-sequence scene segmentation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = all cores, 1 = sequential).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Base seed; generation, initialization and shuffling derive from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override any configuration key, e.g. `--set model.hidden=16`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic corpus of movie manifests.
    Synth {
        /// Output directory for the manifests.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of movies.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train the boundary and sequence models.
    Train {
        /// Directory of labelled manifests.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Directory for `model.ckpt`, `loss.csv` and `config.toml`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict scene boundaries for every movie of a corpus.
    Segment {
        #[command(flatten)]
        io: ModelIo,
        #[command(flatten)]
        grouping: GroupingFlags,
    },
    /// Score predictions against ground truth.
    Evaluate {
        /// Corpus with ground-truth boundaries.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Directory of `*.scores.csv` files.
        #[arg(long)]
        pred: PathBuf,
        /// Directory for `metrics.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write super-shot correlation matrices for every grouping round.
    DumpCorr {
        #[command(flatten)]
        io: ModelIo,
        #[command(flatten)]
        grouping: GroupingFlags,
        /// Restrict to one movie id.
        #[arg(long)]
        movie: Option<String>,
    },
}

#[derive(Args, Debug)]
struct ModelIo {
    /// Directory of manifests.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Trained model file.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GroupingFlags {
    /// Threshold the coarse scores and skip grouping.
    #[arg(long)]
    coarse_only: bool,
    /// Coarse decision threshold.
    #[arg(long)]
    tau: Option<f64>,
    /// Initial super shots (0 = a fraction of the shot count).
    #[arg(long)]
    init_count: Option<usize>,
    /// Smallest scene count (with --j-max; both 0 = estimate from scores).
    #[arg(long)]
    j_min: Option<usize>,
    /// Largest scene count.
    #[arg(long)]
    j_max: Option<usize>,
    /// Scene-size decay scale (inf disables decay).
    #[arg(long)]
    beta: Option<f64>,
    /// Merge rounds.
    #[arg(long)]
    k_set: Option<usize>,
    /// DP and refinement steps per merge round.
    #[arg(long)]
    k_para: Option<usize>,
}

impl GroupingFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        if self.coarse_only {
            cfg.segment.coarse_only = true;
        }
        let g = &mut cfg.grouping;
        if let Some(v) = self.tau {
            cfg.segment.tau = v;
        }
        if let Some(v) = self.init_count {
            g.init_count = v;
        }
        if let Some(v) = self.j_min {
            g.j_min = v;
        }
        if let Some(v) = self.j_max {
            g.j_max = v;
        }
        if let Some(v) = self.beta {
            g.beta = v;
        }
        if let Some(v) = self.k_set {
            g.k_set = v;
        }
        if let Some(v) = self.k_para {
            g.k_para = v;
        }
    }
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    for o in &common.overrides {
        cfg.set(o)?;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(j) = common.jobs {
        cfg.jobs = j;
    }
    Ok(cfg)
}

fn required(flag: Option<PathBuf>, from_config: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    match flag.or_else(|| from_config.clone()) {
        Some(p) => Ok(p),
        None => bail!("missing --{name} (or paths.{name} in the config)"),
    }
}

fn execution(cfg: &RunConfig) -> Result<Execution> {
    scenecut::par::configure_threads(cfg.jobs)?;
    Ok(if cfg.jobs == 1 {
        Execution::Sequential
    } else {
        Execution::Parallel
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_corpus(dir: &Path) -> Result<Vec<MovieManifest>> {
    let corpus = load_corpus_dir(dir).with_context(|| format!("loading corpus {}", dir.display()))?;
    if corpus.is_empty() {
        bail!("no manifests in {}", dir.display());
    }
    Ok(corpus)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = resolve(&cli.common)?;
    match cli.command {
        Command::Synth { out, count } => {
            if let Some(c) = count {
                cfg.synth.count = c;
            }
            let out = required(out, &cfg.paths.out, "out")?;
            cfg.paths.out = Some(out.clone());
            create_dir(&out)?;
            let movies = generate_corpus(&cfg.synthetic(), cfg.synth.count, &cfg.synth.id_prefix)?;
            for m in &movies {
                save_manifest(m, out.join(format!("{}.json", m.movie_id)))?;
            }
            cfg.write_into(&out)?;
            log::info!("wrote {} manifests to {}", movies.len(), out.display());
        }
        Command::Train { corpus, out } => {
            let corpus_dir = required(corpus, &cfg.paths.corpus, "corpus")?;
            let out = required(out, &cfg.paths.out, "out")?;
            cfg.paths.corpus = Some(corpus_dir.clone());
            cfg.paths.out = Some(out.clone());
            create_dir(&out)?;
            let corpus = load_corpus(&corpus_dir)?;
            let dims = corpus[0].modality_dims.clone();
            let bnet = scenecut::boundary::init_bnet_params(&dims, cfg.bnet(), cfg.seed.wrapping_add(1))?;
            let seq = scenecut::sequence::init_seq_params(
                bnet.output_dim(),
                cfg.model.hidden,
                cfg.model.w_t,
                cfg.seed.wrapping_add(2),
            )?;
            let outcome = scenecut::train::train_pipeline(&corpus, bnet, seq, &cfg.training())?;
            let mut header = CheckpointHeader::of(&outcome.model);
            header.meta.insert("seed".into(), cfg.seed.to_string());
            header.meta.insert("movies".into(), corpus.len().to_string());
            let ckpt = out.join("model.ckpt");
            save_checkpoint(&outcome.model, &header, &ckpt)?;
            scenecut::io::write_csv(&out.join("loss.csv"), &outcome.history)?;
            cfg.paths.checkpoint = Some(ckpt);
            cfg.write_into(&out)?;
        }
        Command::Segment { io, grouping } => {
            grouping.apply(&mut cfg);
            let (corpus, model, out) = model_io(io, &mut cfg)?;
            let seg_cfg = cfg.segmentation()?;
            let exec = execution(&cfg)?;
            let results = scenecut::par::map(exec, &corpus, |m| -> Result<usize> {
                let seg = segment_movie(m, &model, &seg_cfg).with_context(|| format!("movie {}", m.movie_id))?;
                write_segmentation(&out, &seg).with_context(|| format!("movie {}", m.movie_id))?;
                Ok(seg.bits.iter().filter(|&&b| b == 1).count())
            });
            let mut total = 0;
            for r in results {
                total += r?;
            }
            cfg.write_into(&out)?;
            log::info!("{} boundaries over {} movies", total, corpus.len());
        }
        Command::Evaluate { corpus, pred, out } => {
            let corpus_dir = required(corpus, &cfg.paths.corpus, "corpus")?;
            let out = required(out, &cfg.paths.out, "out")?;
            cfg.paths.corpus = Some(corpus_dir.clone());
            cfg.paths.out = Some(out.clone());
            create_dir(&out)?;
            let gts = ground_truth(&load_corpus(&corpus_dir)?)?;
            let preds = read_predictions(&pred).with_context(|| format!("reading predictions {}", pred.display()))?;
            let report = evaluate_corpus(&preds, &gts)?;
            report.write_csv(&out.join("metrics.csv"))?;
            cfg.write_into(&out)?;
            let show = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
            println!(
                "AP {}  Miou {}  Recall {}  Recall@3s {}",
                show(report.mean_ap),
                show(report.mean_miou),
                show(report.mean_recall),
                show(report.mean_recall_at_3s)
            );
        }
        Command::DumpCorr { io, grouping, movie } => {
            grouping.apply(&mut cfg);
            let (mut corpus, model, out) = model_io(io, &mut cfg)?;
            if let Some(id) = &movie {
                corpus.retain(|m| &m.movie_id == id);
                if corpus.is_empty() {
                    bail!("movie {id} not found in corpus");
                }
            }
            let gcfg = cfg.grouping()?;
            let exec = execution(&cfg)?;
            let results = scenecut::par::map(exec, &corpus, |m| -> Result<()> {
                let ctx = || format!("movie {}", m.movie_id);
                let scores = score_movie(m, &model).with_context(ctx)?;
                let mut err = None;
                let outcome = run_grouping(Arc::new(grouping_features(m)), &scores, &gcfg, |round, set| {
                    let path = out.join(format!("{}.corr.{round}.csv", m.movie_id));
                    if let Err(e) = dump_correlation(set, &path) {
                        err.get_or_insert(e);
                    }
                })
                .with_context(ctx)?;
                if let Some(e) = err {
                    return Err(e).with_context(ctx);
                }
                scenecut::io::write_csv(&trace_file(&out, &m.movie_id), &outcome.trace).with_context(ctx)?;
                Ok(())
            });
            results.into_iter().collect::<Result<Vec<_>>>()?;
            cfg.write_into(&out)?;
        }
    }
    Ok(())
}

fn model_io(io: ModelIo, cfg: &mut RunConfig) -> Result<(Vec<MovieManifest>, scenecut::train::Model, PathBuf)> {
    let corpus_dir = required(io.corpus, &cfg.paths.corpus, "corpus")?;
    let ckpt = required(io.checkpoint, &cfg.paths.checkpoint, "checkpoint")?;
    let out = required(io.out, &cfg.paths.out, "out")?;
    cfg.paths = config::Paths {
        corpus: Some(corpus_dir.clone()),
        checkpoint: Some(ckpt.clone()),
        out: Some(out.clone()),
    };
    create_dir(&out)?;
    let corpus = load_corpus(&corpus_dir)?;
    let (model, _) = load_checkpoint(&ckpt).with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
    Ok((corpus, model, out))
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
