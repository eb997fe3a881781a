//! Subcommand implementations.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use codex_core::embedding::{embed_builtin, EmbeddingMatrix};
use codex_core::episodes::{
    attach_frames, generate_grid_episode, generate_multientity_episode, load_episode, to_json, GridLayout,
    MultiEntityConfig,
};
use codex_core::hdbscan::Selection;
use codex_core::latent::{cluster_latents, load_latents, synth_latents};
use codex_core::metrics::{sweep, EvalReport, GRID_MIN_CLUSTER, GRID_NEIGHBORS};
use codex_core::tagging::{episode_ref, tag_episode, TagCorpus};
use codex_core::umap::Metric;
use rayon::prelude::*;

use crate::artifact::RunArtifact;
use crate::error::{CliError, CliResult};
use crate::fsutil::write_atomic;
use crate::settings::Settings;
use crate::svg::render_scatter;

#[derive(Debug, Parser)]
#[command(name = "codex", version, about = "Tag, cluster and summarize agent episodes")]
pub struct Cli {
    /// Seed for every stochastic stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// File of key=value settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate episode files.
    Gen(GenArgs),
    /// Tag one episode into a TSV corpus.
    Tag(TagArgs),
    /// Run tag → embed → reduce → cluster → summarize → evaluate.
    Pipeline(PipelineArgs),
    /// Evaluate a grid of n_neighbors × min_cluster_size over many episodes.
    Sweep(SweepArgs),
    /// Cluster per-step latent vectors and report transition points.
    Latents(LatentArgs),
    /// Re-run a saved run artifact and check it reproduces exactly.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Env {
    #[value(name = "four_rooms")]
    FourRooms,
    #[value(name = "door_key")]
    DoorKey,
    #[value(name = "multi_entity")]
    MultiEntity,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub env: Env,
    /// Number of episodes; episode i uses seed + i.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, default_value = "episodes")]
    pub out: PathBuf,
    /// Grid side length (default 9 for four_rooms, 8 for door_key).
    #[arg(long)]
    pub size: Option<i32>,
    /// Attach rendered frames with this many pixels per cell (grid only).
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub marines: usize,
    #[arg(long, default_value_t = 3)]
    pub shards: usize,
    #[arg(long, default_value_t = 64)]
    pub arena: i32,
    #[arg(long, default_value_t = 60)]
    pub length: usize,
}

#[derive(Debug, Args)]
pub struct TagArgs {
    #[arg(long)]
    pub episode: PathBuf,
    /// Output TSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Leave the "t1 -- t2" prefix off multi-entity tags.
    #[arg(long)]
    pub no_timestamps: bool,
    /// Skip visual-anomaly tags.
    #[arg(long)]
    pub no_anomalies: bool,
}

#[derive(Debug, Default, Args)]
pub struct ClusterFlags {
    #[arg(long)]
    pub n_neighbors: Option<usize>,
    #[arg(long, visible_alias = "mcs")]
    pub min_cluster_size: Option<usize>,
    #[arg(long)]
    pub min_samples: Option<usize>,
    /// leaf or eom.
    #[arg(long)]
    pub selection: Option<Selection>,
    #[arg(long)]
    pub n_epochs: Option<usize>,
    #[arg(long)]
    pub min_dist: Option<f64>,
    /// cosine or euclidean.
    #[arg(long)]
    pub metric: Option<Metric>,
    #[arg(long)]
    pub sum_thresh: Option<f64>,
}

impl ClusterFlags {
    fn settings(&self, seed: Option<u64>) -> Settings {
        Settings {
            seed,
            n_neighbors: self.n_neighbors,
            min_cluster_size: self.min_cluster_size,
            min_samples: self.min_samples,
            selection: self.selection,
            n_epochs: self.n_epochs,
            min_dist: self.min_dist,
            metric: self.metric,
            sum_thresh: self.sum_thresh,
            ..Settings::default()
        }
    }
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["episode", "tags"])))]
pub struct PipelineArgs {
    /// Episode JSON file to tag.
    #[arg(long)]
    pub episode: Option<PathBuf>,
    /// Already tagged TSV corpus.
    #[arg(long)]
    pub tags: Option<PathBuf>,
    /// External vectors, one row per tag, instead of the built-in embedder.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Directory for run.json, summary.txt and clusters.svg.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub cluster: ClusterFlags,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Directory of episode JSON files.
    #[arg(long)]
    pub episodes: PathBuf,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub neighbors: Vec<usize>,
    #[arg(long = "min-cluster", value_delimiter = ',')]
    pub min_cluster: Vec<usize>,
    #[command(flatten)]
    pub cluster: ClusterFlags,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["input", "synthetic"])))]
pub struct LatentArgs {
    /// Latent vectors in either embedding file format, one row per step.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Use a synthetic piecewise series instead of a file.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long, default_value_t = 3)]
    pub segments: usize,
    #[arg(long, default_value_t = 8)]
    pub steps: usize,
    #[arg(long, default_value_t = 2048)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.01)]
    pub drift: f64,
    /// Directory for transitions.txt and latents.svg.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub cluster: ClusterFlags,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub artifact: PathBuf,
    /// Write the replayed artifact here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn settings(cli: &Cli, flags: Settings) -> CliResult<Settings> {
    let file = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    Ok(flags.over(file))
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        // Ignore the error when a pool already exists (e.g. in tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Gen(a) => gen(&cli, a),
        Command::Tag(a) => tag(&cli, a),
        Command::Pipeline(a) => pipeline(&cli, a),
        Command::Sweep(a) => sweep_cmd(&cli, a),
        Command::Latents(a) => latents(&cli, a),
        Command::Replay(a) => replay(a),
    }
}

fn gen(cli: &Cli, a: &GenArgs) -> CliResult<()> {
    let seed = settings(cli, Settings { seed: cli.seed, ..Default::default() })?.seed();
    if a.n == 0 {
        return Err(CliError::Usage("--n must be positive".into()));
    }
    let episodes = (0..a.n as u64)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_add(i);
            let mut e = match a.env {
                Env::FourRooms => generate_grid_episode(GridLayout::FourRooms, a.size.unwrap_or(9), s)?,
                Env::DoorKey => generate_grid_episode(GridLayout::DoorKey, a.size.unwrap_or(8), s)?,
                Env::MultiEntity => {
                    let mut c = MultiEntityConfig::new(a.marines, a.shards, a.arena);
                    c.length = a.length;
                    generate_multientity_episode(&c, s)?
                }
            };
            if let (Some(px), false) = (a.frames, a.env == Env::MultiEntity) {
                attach_frames(&mut e, px)?;
            }
            Ok(e)
        })
        .collect::<codex_core::Result<Vec<_>>>()?;
    for e in &episodes {
        write_atomic(&a.out.join(format!("{}.json", episode_ref(e))), to_json(e))?;
    }
    println!("wrote {} episodes to {}", episodes.len(), a.out.display());
    Ok(())
}

fn tag(cli: &Cli, a: &TagArgs) -> CliResult<()> {
    let s = settings(
        cli,
        Settings {
            seed: cli.seed,
            timestamps: a.no_timestamps.then_some(false),
            ..Default::default()
        },
    )?;
    let mut cfg = s.pipeline_config()?;
    if a.no_anomalies {
        cfg.tagging.anomalies = false;
    }
    let corpus = tag_episode(&load_episode(&a.episode)?, cfg.tagging)?;
    match &a.out {
        Some(p) => write_atomic(p, corpus.to_tsv()),
        None => {
            print!("{}", corpus.to_tsv());
            Ok(())
        }
    }
}

fn load_corpus(a: &PipelineArgs, cfg: &codex_core::pipeline::PipelineConfig) -> CliResult<TagCorpus> {
    match (&a.episode, &a.tags) {
        (Some(p), _) => Ok(tag_episode(&load_episode(p)?, cfg.tagging)?),
        (None, Some(p)) => Ok(TagCorpus::load(p)?),
        (None, None) => Err(CliError::Usage("one of --episode or --tags is required".into())),
    }
}

pub fn report_line(r: &EvalReport) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"));
    format!(
        "clusters={} clustered_pct={:.2} sil_score={} global_cos_sim={} mean={}",
        r.n_clusters,
        r.clustered_pct,
        opt(r.sil_score),
        opt(r.global_cos_sim),
        opt(r.mean)
    )
}

fn write_run(dir: &Path, artifact: &RunArtifact) -> CliResult<()> {
    write_atomic(&dir.join("run.json"), artifact.to_json())?;
    write_atomic(&dir.join("summary.txt"), artifact.summary.render())?;
    let svg = render_scatter(&artifact.coords, &artifact.labels, Some(&artifact.summary), &[])?;
    write_atomic(&dir.join("clusters.svg"), svg)
}

fn pipeline(cli: &Cli, a: &PipelineArgs) -> CliResult<()> {
    let s = settings(cli, a.cluster.settings(cli.seed))?;
    let cfg = s.pipeline_config()?;
    let corpus = load_corpus(a, &cfg)?;
    let artifact = RunArtifact::run(corpus, &cfg, s.seed(), a.embeddings.as_deref())?;
    write_run(&a.out, &artifact)?;
    print!("{}", artifact.summary.render());
    println!("{}", report_line(&artifact.report));
    Ok(())
}

fn episode_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn sweep_cmd(cli: &Cli, a: &SweepArgs) -> CliResult<()> {
    let s = settings(cli, a.cluster.settings(cli.seed))?;
    let cfg = s.pipeline_config()?;
    let files = episode_files(&a.episodes)?;
    let matrices: Vec<EmbeddingMatrix> = files
        .par_iter()
        .map(|p| -> codex_core::Result<EmbeddingMatrix> {
            let corpus = tag_episode(&load_episode(p)?, cfg.tagging)?;
            embed_builtin(&corpus, &cfg.embed)
        })
        .collect::<codex_core::Result<_>>()?;
    let neighbors = if a.neighbors.is_empty() { GRID_NEIGHBORS.to_vec() } else { a.neighbors.clone() };
    let mcs = if a.min_cluster.is_empty() { GRID_MIN_CLUSTER.to_vec() } else { a.min_cluster.clone() };
    let table = sweep(&matrices, &neighbors, &mcs, &cfg.umap, &cfg.hdbscan)?;
    match &a.out {
        Some(p) => write_atomic(p, table.to_csv())?,
        None => print!("{}", table.to_csv()),
    }
    if let Some(best) = table.best() {
        eprintln!(
            "best over {} episodes: n_neighbors={} min_cluster={} mean={:.4}",
            table.n_episodes,
            best.n_neighbors,
            best.min_cluster_size,
            best.mean.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

fn latents(cli: &Cli, a: &LatentArgs) -> CliResult<()> {
    let s = settings(cli, a.cluster.settings(cli.seed))?;
    let cfg = s.pipeline_config()?;
    let series = match &a.input {
        Some(p) => load_latents(p)?,
        None => synth_latents(a.segments, a.steps, a.dim, a.drift, s.seed()),
    };
    let result = cluster_latents(&series, &cfg.umap, &cfg.hdbscan)?;
    let report = result.to_string();
    if let Some(dir) = &a.out {
        write_atomic(&dir.join("transitions.txt"), &report)?;
        let steps: Vec<(usize, String)> = (0..series.len()).map(|t| (t, t.to_string())).collect();
        let svg = render_scatter(&result.coords, &result.labels, None, &steps)?;
        write_atomic(&dir.join("latents.svg"), svg)?;
    }
    print!("{report}");
    Ok(())
}

fn first_difference(a: &str, b: &str) -> String {
    match a.lines().zip(b.lines()).enumerate().find(|(_, (x, y))| x != y) {
        Some((i, (x, y))) => format!("line {}: `{}` vs `{}`", i + 1, x.trim(), y.trim()),
        None => format!("lengths differ ({} vs {} bytes)", a.len(), b.len()),
    }
}

fn replay(a: &ReplayArgs) -> CliResult<()> {
    let original = RunArtifact::load(&a.artifact)?;
    let again = original.replay(&a.artifact)?;
    let (old, new) = (original.to_json(), again.to_json());
    if let Some(dir) = &a.out {
        write_run(dir, &again)?;
    }
    if old != new {
        return Err(CliError::Replay(first_difference(&old, &new)));
    }
    println!("replay identical: {}", a.artifact.display());
    Ok(())
}
