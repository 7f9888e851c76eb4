use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use cogtree::pipeline::{self, Baselines, Config, Dataset, SynthSpec};
use cogtree::tree::{self, AdaptiveTree, Strategy};

#[derive(Parser)]
#[command(name = "cogtree", version, about = "Adaptive user-subspace trees for multimodal sentiment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Theoretical,
    Cluster,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Theoretical => Strategy::Theoretical,
            StrategyArg::Cluster => Strategy::Cluster,
        }
    }
}

#[derive(Args)]
struct Common {
    /// TOML file with [space], [partition], [tree] and [neural] tables and a seed.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the fragmentation strategy from the config file.
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
}

impl Common {
    fn load(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(s) = self.strategy {
            cfg.tree.strategy = s.into();
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TreeFormat {
    Dot,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (manifest plus CSV files).
    SynthData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 93)]
        users: usize,
        #[arg(long, default_value_t = 24)]
        utterances: usize,
        #[arg(long, default_value_t = 3)]
        components: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
    },
    /// Build the tree over a dataset's users without training.
    BuildTree {
        #[command(flatten)]
        common: Common,
        /// Dataset manifest.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the tree and train every node's submodel.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-node loss curves as CSV.
        #[arg(long)]
        losses: Option<PathBuf>,
    },
    /// Predict every video of a dataset with a trained tree.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Score a trained tree on a labelled dataset.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// User-level k-fold comparison against the root-only and SEP baselines.
    Benchmark {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        /// Skip the baselines and run the tree only.
        #[arg(long)]
        tree_only: bool,
        /// Directory for folds.csv, means.csv and levels.csv; stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a tree's structure.
    InspectTree {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tree: PathBuf,
        #[arg(long, value_enum, default_value = "dot")]
        format: TreeFormat,
    },
    /// Silhouette and Davies-Bouldin of every tree level.
    PartitionMetrics {
        #[command(flatten)]
        common: Common,
        /// A saved tree; otherwise one is built from --data.
        #[arg(long)]
        tree: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn load_data(path: &Path) -> Result<Dataset> {
    pipeline::ingest(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn load_tree(path: &Path) -> Result<AdaptiveTree> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    tree::deserialize(&bytes).with_context(|| format!("decoding {}", path.display()))
}

fn save_tree(tree: &AdaptiveTree, path: &Path) -> Result<()> {
    fs::write(path, tree::serialize(tree)).with_context(|| format!("writing {}", path.display()))
}

fn build(cfg: &Config, data: &Dataset) -> Result<AdaptiveTree> {
    Ok(tree::build(&data.labeled_users(), &data.cues, &cfg.build(), cfg.seed)?)
}

fn csv_out<W: Write>(w: W) -> csv::Writer<W> {
    csv::Writer::from_writer(w)
}

fn run(cli: Cli) -> Result<()> {
    let stdout = io::stdout();
    match cli.command {
        Command::SynthData {
            common,
            out,
            users,
            utterances,
            components,
            noise,
        } => {
            let cfg = common.load()?;
            let spec = SynthSpec {
                users,
                utterances,
                length_jitter: SynthSpec::default().length_jitter.min(utterances.saturating_sub(1)),
                components,
                label_noise: noise,
                seed: cfg.seed,
                ..Default::default()
            };
            let generated = pipeline::synth(&spec).map_err(anyhow::Error::msg)?;
            let manifest = pipeline::emit(&generated.dataset, &out)?;
            println!("{}", manifest.display());
        }
        Command::BuildTree { common, data, out } => {
            let cfg = common.load()?;
            let t = build(&cfg, &load_data(&data)?)?;
            save_tree(&t, &out)?;
            eprintln!("{} nodes, {} leaves, depth {}", t.len(), t.leaves.len(), t.depth());
        }
        Command::Train {
            common,
            data,
            out,
            losses,
        } => {
            let cfg = common.load()?;
            let data = load_data(&data)?;
            let mut t = build(&cfg, &data)?;
            let report = pipeline::train_tree(&mut t, &data, &cfg.neural, cfg.seed)?;
            save_tree(&t, &out)?;
            for (id, why) in &report.failures {
                eprintln!("node {id} left untrained: {why}");
            }
            if let Some(path) = losses {
                let mut w = csv_out(fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?);
                w.write_record(["node", "epoch", "loss"])?;
                for (id, curve) in &report.losses {
                    for (e, l) in curve.iter().enumerate() {
                        w.write_record([id.to_string(), (e + 1).to_string(), l.to_string()])?;
                    }
                }
                w.flush()?;
            }
            eprintln!("trained {} of {} nodes", report.losses.len(), t.len());
        }
        Command::Predict { common, tree, data } => {
            common.load()?;
            let t = load_tree(&tree)?;
            let data = load_data(&data)?;
            let mut w = csv_out(stdout.lock());
            w.write_record(["video_id", "user_id", "sentiment", "utterance_labels", "route"])?;
            for v in &data.videos {
                let user = data.user(&v.user_id).context("video without user")?;
                let p = pipeline::predict(&t, &v.sequence, user)?;
                let labels: String = p
                    .utterances
                    .labels
                    .iter()
                    .flatten()
                    .map(|l| char::from(b'0' + l.index() as u8))
                    .collect();
                let route = p.trace.route.iter().map(ToString::to_string).collect::<Vec<_>>().join(">");
                w.write_record([v.id.as_str(), v.user_id.as_str(), &p.sentiment.index().to_string(), &labels, &route])?;
            }
            w.flush()?;
        }
        Command::Evaluate { common, tree, data } => {
            common.load()?;
            let t = load_tree(&tree)?;
            let eval = pipeline::evaluate(&t, &load_data(&data)?)?;
            let m = &eval.metrics;
            let c = m.confusion;
            println!("tp,fp,tn,fn,pc,rc_plus,rc_minus,f1,accuracy,video_accuracy");
            println!(
                "{},{},{},{},{},{},{},{},{},{}",
                c.tp, c.fp, c.tn, c.fn_, m.pc, m.rc_plus, m.rc_minus, m.f1, m.accuracy, m.video_accuracy
            );
            println!();
            let mut w = csv_out(stdout.lock());
            w.write_record(["depth", "nodes", "f1", "mean_f1", "accuracy"])?;
            for l in &eval.levels {
                w.write_record([
                    l.depth.to_string(),
                    l.nodes.to_string(),
                    l.f1.to_string(),
                    l.mean_f1.to_string(),
                    l.accuracy.to_string(),
                ])?;
            }
            w.flush()?;
        }
        Command::Benchmark {
            common,
            data,
            folds,
            tree_only,
            out,
        } => {
            let cfg = common.load()?;
            let data = load_data(&data)?;
            let baselines = if tree_only {
                Baselines {
                    root_only: false,
                    sep: false,
                }
            } else {
                Baselines::default()
            };
            let report = pipeline::kfold_benchmark(&data, folds, &cfg, baselines)?;
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir)?;
                    report.write_folds(fs::File::create(dir.join("folds.csv"))?)?;
                    report.write_means(fs::File::create(dir.join("means.csv"))?)?;
                    report.write_levels(fs::File::create(dir.join("levels.csv"))?)?;
                    report.write_means(stdout.lock())?;
                }
                None => {
                    report.write_folds(stdout.lock())?;
                    println!();
                    report.write_means(stdout.lock())?;
                }
            }
        }
        Command::InspectTree { common, tree, format } => {
            common.load()?;
            let t = load_tree(&tree)?;
            match format {
                TreeFormat::Dot => print!("{}", t.to_dot()),
                TreeFormat::Csv => {
                    let mut w = csv_out(stdout.lock());
                    for s in t.summaries() {
                        w.serialize(s)?;
                    }
                    w.flush()?;
                }
            }
        }
        Command::PartitionMetrics { common, tree, data } => {
            let cfg = common.load()?;
            let t = match (tree, data) {
                (Some(p), _) => load_tree(&p)?,
                (None, Some(d)) => build(&cfg, &load_data(&d)?)?,
                (None, None) => bail!("give --tree or --data"),
            };
            let mut w = csv_out(stdout.lock());
            w.write_record(["depth", "clusters", "silhouette", "davies_bouldin", "note"])?;
            let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
            for q in pipeline::partition_quality(&t)? {
                w.write_record([
                    q.depth.to_string(),
                    q.clusters.to_string(),
                    opt(q.silhouette),
                    opt(q.davies_bouldin),
                    q.note,
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
