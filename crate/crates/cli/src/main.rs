use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use echoscope::pipeline::{run_pipeline, run_stage, write_synthetic, Manifest, PipelineConfig, Stage};
use echoscope::synth::SocialDatasetSpec;

/// Echo-chamber analysis of a follow network and its users' posts.
#[derive(Parser, Debug)]
#[command(name = "echoscope", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    opts: Overrides,

    /// More log output; repeat for debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load directed follows and build the reciprocal network.
    Ingest,
    /// Louvain communities, then size and exclusion filtering.
    Detect,
    /// Seed-account follow ratios per community.
    Profile,
    /// Pool posts per user and build the bag-of-words corpus.
    Corpus,
    /// Fit the topic model.
    Lda,
    /// Topic shares per community and echo-chamber scores.
    Crosstab,
    /// Plain-text summary tables.
    Report,
    /// GEXF export of the reciprocal network with communities.
    ExportGexf,
    /// Every stage in order.
    All,
    /// Write the bundled synthetic dataset and a config for it into `--out`.
    Synth,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// TOML config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    edges: Option<PathBuf>,
    #[arg(long, global = true)]
    docs: Option<PathBuf>,
    #[arg(long, global = true)]
    seeds: Option<PathBuf>,
    #[arg(long, global = true)]
    stopwords: Option<PathBuf>,
    #[arg(long, global = true)]
    exclude: Option<PathBuf>,
    /// Screen names (JSON lines) used as GEXF labels.
    #[arg(long, global = true)]
    users: Option<PathBuf>,
    #[arg(long = "topics", value_name = "K", global = true)]
    topics: Option<usize>,
    #[arg(long, global = true)]
    iterations: Option<usize>,
    #[arg(long, global = true)]
    resolution: Option<f64>,
    /// Communities smaller than this are dropped [default: 10].
    #[arg(long, global = true)]
    min_community_size: Option<usize>,
    /// GEXF export leaves out nodes with fewer reciprocal ties.
    #[arg(long, global = true)]
    min_degree: Option<usize>,
}

impl Overrides {
    fn apply(self, cfg: &mut PipelineConfig) {
        let set = |slot: &mut Option<PathBuf>, v: Option<PathBuf>| {
            if v.is_some() {
                *slot = v;
            }
        };
        set(&mut cfg.input.edges, self.edges);
        set(&mut cfg.input.docs, self.docs);
        set(&mut cfg.input.seeds, self.seeds);
        set(&mut cfg.input.stopwords, self.stopwords);
        set(&mut cfg.input.exclude, self.exclude);
        set(&mut cfg.input.users, self.users);
        if let Some(v) = self.out {
            cfg.out = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.topics {
            cfg.lda.topics = v;
        }
        if let Some(v) = self.iterations {
            cfg.lda.iterations = v;
            cfg.lda.burn_in = cfg.lda.burn_in.min(v.saturating_sub(1));
        }
        if let Some(v) = self.resolution {
            cfg.detect.resolution = v;
        }
        if let Some(v) = self.min_community_size {
            cfg.detect.min_community_size = v;
        }
        if let Some(v) = self.min_degree {
            cfg.export.min_degree = v;
        }
    }
}

fn print_manifest(m: &Manifest, stages: &[Stage]) {
    for stage in stages {
        if let Some(rec) = m.stage(*stage) {
            let counts: Vec<String> = rec.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
            println!("{:<12} {}", rec.stage, counts.join(" "));
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.opts.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Command::Synth = cli.command {
        let dir = cli.opts.out.clone().unwrap_or_else(|| PathBuf::from("synthetic"));
        let spec = SocialDatasetSpec {
            seed: cli.opts.seed.unwrap_or(SocialDatasetSpec::default().seed),
            ..SocialDatasetSpec::default()
        };
        write_synthetic(&spec, &dir)?;
        println!(
            "wrote synthetic dataset to {}; run with --config {}",
            dir.display(),
            dir.join(echoscope::pipeline::SYNTH_CONFIG).display()
        );
        return Ok(());
    }
    cli.opts.apply(&mut cfg);
    let stage = match cli.command {
        Command::Ingest => Stage::Ingest,
        Command::Detect => Stage::Detect,
        Command::Profile => Stage::Profile,
        Command::Corpus => Stage::Corpus,
        Command::Lda => Stage::Lda,
        Command::Crosstab => Stage::Crosstab,
        Command::Report => Stage::Report,
        Command::ExportGexf => Stage::ExportGexf,
        Command::All => {
            let m = run_pipeline(&cfg)?;
            print_manifest(&m, &Stage::ALL);
            println!("artifacts in {}", cfg.out.display());
            return Ok(());
        }
        Command::Synth => unreachable!(),
    };
    let m = run_stage(&cfg, stage)?;
    print_manifest(&m, &[stage]);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Library errors already embed their sources in the message.
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
