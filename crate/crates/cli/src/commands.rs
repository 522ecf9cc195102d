use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use semilabel_core::agreement::{compute_irr, render_report as render_irr, suggest_label};
use semilabel_core::clean::Cleaner;
use semilabel_core::cluster::{kmeans, silhouette_sweep, write_sweep_csv, Assignment, KMeansConfig};
use semilabel_core::pipeline::{build_report, doc_vectors, render_report, run_cycle_round, CycleConfig, DocVector, RunOptions, Stage, StateDir};
use semilabel_core::projection::{export_projection, pca, tsne, Method, Projection2D, TsneConfig};
use semilabel_core::propagate::{cross_validate, propagate};
use semilabel_core::store::{ingest_corpus, jsonl_bytes, now_rfc3339, read_jsonl, Basis, CohortMapping, LabelFilter, LabelRecord, LabelValue};
use semilabel_core::vectorize::{train, EmbeddingModel, ModelKind};

use crate::error::{core, CliError};

#[derive(Debug, Parser)]
#[command(name = "semilabel", version, about = "Semi-supervised labeling of short social-media posts")]
pub struct Cli {
    /// Project directory holding the corpus, label log and rounds.
    #[arg(long, global = true, default_value = "semilabel-state")]
    pub state_dir: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Single-threaded training with fixed random streams.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a JSONL corpus (and optionally labels) into the state directory.
    Ingest(IngestArgs),
    /// Clean every post and write the token lists.
    Clean(CleanArgs),
    /// Train an embedding model on the cleaned corpus.
    Train(TrainArgs),
    /// Nearest vocabulary tokens to a token.
    Neighbors(NeighborsArgs),
    /// k-means over document vectors.
    Cluster(ClusterArgs),
    /// Mean silhouette over a range of k.
    Silhouette(SilhouetteArgs),
    /// Apply the unanimous-cluster rule to the manual labels.
    Propagate(PropagateArgs),
    /// k-fold cross-validation of the propagation rule.
    Cv(CvArgs),
    /// Percent agreement between two raters.
    Irr(IrrArgs),
    /// Rubric suggestions from the hashtag lexicon.
    Suggest(SuggestArgs),
    /// 2-D projection of document vectors.
    Project(ProjectArgs),
    /// Run one full labeling round.
    Cycle(CycleArgs),
    /// Per-round model/k table and labeled fraction.
    Report(ReportArgs),
    /// Serve the JSON API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Extra cohort spellings, e.g. `sih=topic_flagged`.
    #[arg(long = "alias")]
    pub aliases: Vec<String>,
    /// Label records to append to the log.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CleanArgs {
    /// Cleaning config (`key = value`); defaults to the cycle config's `clean.*` keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value = "cbow")]
    pub model: ModelKind,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub min_count: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write one document vector per post.
    #[arg(long)]
    pub vectors_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NeighborsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub token: String,
    #[arg(short, long, default_value_t = 10)]
    pub n: usize,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub vectors: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SilhouetteArgs {
    #[arg(long)]
    pub vectors: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub k_min: usize,
    #[arg(long, default_value_t = 10)]
    pub k_max: usize,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    #[arg(long)]
    pub min_labeled: Option<usize>,
    #[arg(long)]
    pub unanimity: Option<f64>,
    #[arg(long)]
    pub basis: Option<Basis>,
}

#[derive(Debug, Args)]
pub struct PropagateArgs {
    #[arg(long)]
    pub assignment: PathBuf,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Write the propagated label records here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub assignment: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[command(flatten)]
    pub policy: PolicyArgs,
}

#[derive(Debug, Args)]
pub struct IrrArgs {
    #[arg(long)]
    pub rater_a: String,
    #[arg(long)]
    pub rater_b: String,
    #[arg(long, default_value = "post_only")]
    pub basis: Basis,
    /// JSON object of stratum name -> post ids; cohorts by default.
    #[arg(long)]
    pub strata: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SuggestArgs {
    /// Hashtag lexicon CSV; defaults to the state directory's lexicon.csv.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Pca,
    Tsne,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[arg(long)]
    pub vectors: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Adds cluster ids to the CSV.
    #[arg(long)]
    pub assignment: Option<PathBuf>,
    #[arg(long, default_value_t = 30.0)]
    pub perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
}

#[derive(Debug, Args)]
pub struct CycleArgs {
    /// Cycle config file; defaults to the state directory's cycle.conf.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Skip training and reuse the previous round's models.
    #[arg(long)]
    pub reuse_model: bool,
    /// Stop and wait forever once this stage is staged (crash testing).
    #[arg(long, hide = true)]
    pub stall_after: Option<Stage>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_out(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| CliError::io(p, e)),
        None => std::io::stdout().write_all(bytes).map_err(|e| CliError::io("<stdout>", e)),
    }
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializes")
}

struct Ctx {
    dir: StateDir,
    seed: Option<u64>,
    deterministic: bool,
}

impl Ctx {
    fn config(&self, path: Option<&Path>) -> Result<CycleConfig, CliError> {
        let mut c = match path {
            Some(p) => CycleConfig::parse(&read_text(p)?).map_err(core)?,
            None => self.dir.load_config().map_err(core)?,
        };
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if self.deterministic {
            c.deterministic = true;
        }
        Ok(c)
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }
}

fn load_vectors(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let rows: Vec<DocVector> = read_jsonl(path).map_err(core)?;
    let ids = rows.iter().map(|r| r.post_id.clone()).collect();
    let pts = rows.iter().map(|r| r.vector.iter().map(|&x| x as f64).collect()).collect();
    Ok((ids, pts))
}

fn load_assignment(path: &Path) -> Result<Assignment, CliError> {
    Assignment::from_jsonl(&read_text(path)?).map_err(core)
}

fn manual_labels(ctx: &Ctx, basis: Basis) -> Result<BTreeMap<String, LabelValue>, CliError> {
    let log = ctx.dir.open_labels().map_err(core)?;
    Ok(log.effective_labels(basis, &LabelFilter::manual_only()))
}

fn policy_from(ctx: &Ctx, args: &PolicyArgs) -> Result<(semilabel_core::propagate::PropagationPolicy, Basis), CliError> {
    let cfg = ctx.config(None)?;
    let mut p = cfg.policy.clone();
    if let Some(m) = args.min_labeled {
        p.min_labeled = m;
    }
    if let Some(u) = args.unanimity {
        p.unanimity = u;
    }
    Ok((p, args.basis.unwrap_or(cfg.basis)))
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = Ctx {
        dir: StateDir::new(&cli.state_dir),
        seed: cli.seed,
        deterministic: cli.deterministic,
    };
    match cli.command {
        Command::Ingest(a) => {
            let mut mapping = CohortMapping::default();
            for spec in &a.aliases {
                mapping = mapping.parse_alias(spec).map_err(CliError::Usage)?;
            }
            let corpus = ingest_corpus(&a.corpus, &mapping).map_err(core)?;
            let mut labels = Vec::new();
            if let Some(p) = &a.labels {
                labels = read_jsonl::<LabelRecord>(p).map_err(core)?;
                for r in &labels {
                    if !corpus.contains(&r.post_id) {
                        return Err(core(semilabel_core::store::StoreError::UnknownPost(r.post_id.clone())));
                    }
                }
            }
            ctx.dir.save_corpus(&corpus).map_err(core)?;
            let mut log = ctx.dir.open_labels().map_err(core)?;
            for r in labels.iter().cloned() {
                log.record(&corpus, r).map_err(core)?;
            }
            println!("ingested {} posts and {} labels into {}", corpus.len(), labels.len(), ctx.dir.root().display());
        }
        Command::Clean(a) => {
            let cfg = match &a.config {
                Some(p) => semilabel_core::clean::CleaningConfig::parse(&read_text(p)?).map_err(core)?,
                None => ctx.config(None)?.cleaning,
            };
            let corpus = ctx.dir.load_corpus().map_err(core)?;
            let docs = Cleaner::new(cfg).map_err(core)?.clean_all(corpus.posts());
            write_out(a.out.as_deref(), &jsonl_bytes(&docs))?;
            eprintln!("cleaned {} posts", docs.len());
        }
        Command::Train(a) => {
            let mut cfg = ctx.config(None)?;
            cfg.dim = a.dim.unwrap_or(cfg.dim);
            cfg.window = a.window.unwrap_or(cfg.window);
            cfg.min_count = a.min_count.unwrap_or(cfg.min_count);
            cfg.epochs = a.epochs.or(cfg.epochs);
            let corpus = ctx.dir.load_corpus().map_err(core)?;
            let docs = Cleaner::new(cfg.cleaning.clone()).map_err(core)?.clean_all(corpus.posts());
            let model = train(&docs, &cfg.training(a.model), a.model).map_err(core)?;
            model.save(&a.out).map_err(core)?;
            if let Some(v) = &a.vectors_out {
                let vectors = doc_vectors(&model, &docs).map_err(core)?;
                fs::write(v, jsonl_bytes(&vectors)).map_err(|e| CliError::io(v, e))?;
            }
            let loss = model.epoch_losses().last().copied().unwrap_or(f64::NAN);
            println!("trained {} model: {} tokens, dim {}, final epoch loss {loss:.4}", a.model, model.vocab().len(), model.dim());
        }
        Command::Neighbors(a) => {
            let model = EmbeddingModel::load(&a.model).map_err(core)?;
            for n in model.nearest_neighbors(&a.token, a.n).map_err(core)? {
                println!("{:.4}\t{}", n.cosine, n.token);
            }
        }
        Command::Cluster(a) => {
            let (ids, pts) = load_vectors(&a.vectors)?;
            let cfg = KMeansConfig {
                restarts: a.restarts,
                seed: ctx.seed(),
                ..KMeansConfig::new(a.k)
            };
            let r = kmeans(&pts, &cfg).map_err(core)?;
            let asg = Assignment::new(&ids, &r.labels, a.k).map_err(core)?;
            fs::write(&a.out, asg.to_jsonl()).map_err(|e| CliError::io(&a.out, e))?;
            println!("k = {}: wgss {:.6}, sizes {:?}", a.k, r.model.wgss, asg.sizes());
        }
        Command::Silhouette(a) => {
            if a.k_min < 2 || a.k_max < a.k_min {
                return Err(CliError::Usage("need 2 <= k-min <= k-max".into()));
            }
            let (_, pts) = load_vectors(&a.vectors)?;
            let ks: Vec<usize> = (a.k_min..=a.k_max).collect();
            let rows = silhouette_sweep(&pts, &ks, a.restarts, ctx.seed()).map_err(core)?;
            let mut buf = Vec::new();
            write_sweep_csv(&rows, &mut buf).map_err(core)?;
            write_out(a.out.as_deref(), &buf)?;
            if let Some(best) = rows.iter().max_by(|x, y| x.silhouette.total_cmp(&y.silhouette)) {
                eprintln!("best k = {} (silhouette {:.4})", best.k, best.silhouette);
            }
        }
        Command::Propagate(a) => {
            let (policy, basis) = policy_from(&ctx, &a.policy)?;
            let asg = load_assignment(&a.assignment)?;
            let manual: BTreeMap<_, _> = manual_labels(&ctx, basis)?.into_iter().filter(|(id, _)| asg.cluster_of(id).is_some()).collect();
            let p = propagate(&asg, &manual, &policy).map_err(core)?;
            if let Some(out) = &a.out {
                let recs = p.to_records(semilabel_core::pipeline::PROPAGATION_RATER, basis, ctx.dir.next_round().map_err(core)?, &now_rfc3339());
                fs::write(out, jsonl_bytes(&recs)).map_err(|e| CliError::io(out, e))?;
            }
            println!("{}", pretty(&p.report));
        }
        Command::Cv(a) => {
            let (policy, basis) = policy_from(&ctx, &a.policy)?;
            let asg = load_assignment(&a.assignment)?;
            let manual: BTreeMap<_, _> = manual_labels(&ctx, basis)?.into_iter().filter(|(id, _)| asg.cluster_of(id).is_some()).collect();
            let r = cross_validate(&asg, &manual, &policy, a.folds, ctx.seed()).map_err(core)?;
            println!("{}", pretty(&r));
        }
        Command::Irr(a) => {
            let corpus = ctx.dir.load_corpus().map_err(core)?;
            let strata = match &a.strata {
                Some(p) => semilabel_core::agreement::parse_strata(&read_text(p)?).map_err(core)?,
                None => ctx.dir.load_strata(&corpus).map_err(core)?,
            };
            let log = ctx.dir.open_labels().map_err(core)?;
            let la = log.effective_labels(a.basis, &LabelFilter::manual_only().with_rater(&a.rater_a));
            let lb = log.effective_labels(a.basis, &LabelFilter::manual_only().with_rater(&a.rater_b));
            let r = compute_irr(&la, &lb, &strata).map_err(core)?;
            if a.json {
                println!("{}", pretty(&r));
            } else {
                print!("{}", render_irr(&r));
            }
        }
        Command::Suggest(a) => {
            let lexicon = match &a.lexicon {
                Some(p) => semilabel_core::agreement::load_lexicon(p).map_err(core)?,
                None => ctx.dir.load_lexicon().map_err(core)?,
            };
            let corpus = ctx.dir.load_corpus().map_err(core)?;
            #[derive(serde::Serialize)]
            struct Row<'a> {
                post_id: &'a str,
                #[serde(flatten)]
                suggestion: semilabel_core::agreement::Suggestion,
            }
            let rows: Vec<Row> = corpus
                .posts()
                .iter()
                .filter_map(|p| suggest_label(p, &lexicon).map(|s| Row { post_id: &p.post_id, suggestion: s }))
                .collect();
            write_out(a.out.as_deref(), &jsonl_bytes(&rows))?;
            eprintln!("{} of {} posts have a suggestion", rows.len(), corpus.len());
        }
        Command::Project(a) => {
            let (ids, pts) = load_vectors(&a.vectors)?;
            let seed = ctx.seed();
            let mut params = BTreeMap::new();
            params.insert("seed".to_string(), seed.to_string());
            let proj = match a.method {
                MethodArg::Pca => {
                    let p = pca(&pts, 2).map_err(core)?;
                    params.insert("components".into(), "2".into());
                    Projection2D::new(Method::Pca, &ids, &p.coords, params, Some(p.explained_ratio)).map_err(core)?
                }
                MethodArg::Tsne => {
                    let cfg = TsneConfig {
                        perplexity: a.perplexity,
                        iters: a.iters,
                        seed,
                        ..TsneConfig::default()
                    };
                    params.insert("perplexity".into(), a.perplexity.to_string());
                    params.insert("iters".into(), a.iters.to_string());
                    let r = tsne(&pts, &cfg).map_err(core)?;
                    Projection2D::new(Method::Tsne, &ids, &r.coords, params, None).map_err(core)?
                }
            };
            let asg = a.assignment.as_deref().map(load_assignment).transpose()?;
            let labels = if ctx.dir.path("corpus.jsonl").exists() {
                let basis = ctx.config(None)?.basis;
                ctx.dir.label_view().map_err(core)?.effective_labels(basis, &LabelFilter::all())
            } else {
                BTreeMap::new()
            };
            let csv = export_projection(&proj, asg.as_ref(), &labels).map_err(core)?;
            fs::write(&a.out, csv).map_err(|e| CliError::io(&a.out, e))?;
            println!("wrote {} points to {}", proj.points.len(), a.out.display());
        }
        Command::Cycle(a) => {
            let mut cfg = ctx.config(a.config.as_deref())?;
            cfg.reuse_model |= a.reuse_model;
            let stall = a.stall_after;
            let hook = move |stage: Stage, dir: &Path| {
                eprintln!("stage {stage} staged in {}", dir.display());
                if Some(stage) == stall {
                    eprintln!("stalling after {stage}");
                    loop {
                        std::thread::sleep(std::time::Duration::from_secs(3600));
                    }
                }
            };
            let state = run_cycle_round(&ctx.dir, &cfg, &RunOptions { on_stage: Some(&hook) }).map_err(core)?;
            println!(
                "round {} finished at {}: {} queued, {} posts still unlabeled",
                state.round,
                state.stage,
                state.queue.len(),
                state.residual_unlabeled
            );
        }
        Command::Report(a) => {
            let r = build_report(&ctx.dir).map_err(core)?;
            if a.json {
                println!("{}", pretty(&r));
            } else {
                print!("{}", render_report(&r));
            }
        }
        Command::Serve(a) => {
            let cfg = ctx.config(None)?;
            let state = crate::api::AppState::load(ctx.dir.clone(), cfg).map_err(core)?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
            rt.block_on(crate::api::serve(state, &a.bind))?;
        }
    }
    Ok(())
}
