use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use frugal_cd::alloop::SessionConfig;
use frugal_cd::augment::{AugmentKind, AugmentSpace};
use frugal_cd::dataio::{self, PatchGeometry, SynthConfig};
use frugal_cd::experiment::{self, Arm, DataSource, RunResult};
use frugal_cd::invnet::TrainConfig;
use frugal_cd::selection::StrategyKind;
use frugal_cd::service::{self, AppState, SessionStore};

#[derive(Parser)]
#[command(name = "frugal-cd", version, about = "Interactive frugal change detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (FCD1, or CSV when the path ends in .csv).
    Synth(SynthArgs),
    /// Run simulated sessions for one arm (or a named grid) and write CSV.
    Run(RunArgs),
    /// Run the augmentation and display/space grids and print their tables.
    Ablate(AblateArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args, Clone)]
struct GeneratorArgs {
    /// JSON file with a full generator config; flags below override it.
    #[arg(long)]
    synth_config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    n_pos: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    /// Attach rendered patches, e.g. 30x30x3.
    #[arg(long, value_parser = parse_geometry)]
    patches: Option<PatchGeometry>,
}

impl GeneratorArgs {
    fn config(&self) -> anyhow::Result<SynthConfig> {
        let mut cfg = match &self.synth_config {
            Some(p) => serde_json::from_reader(File::open(p)?)?,
            None => SynthConfig::default(),
        };
        if let Some(v) = self.n {
            cfg.n = v;
        }
        if let Some(v) = self.n_pos {
            cfg.n_pos = v;
        }
        if let Some(v) = self.dim {
            cfg.d = v;
        }
        if let Some(v) = self.noise {
            cfg.noise = v;
        }
        if self.patches.is_some() {
            cfg.patches = self.patches;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    gen: GeneratorArgs,
}

#[derive(Args, Clone)]
struct SessionArgs {
    /// Dataset file; without it each seed gets its own synthetic dataset.
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    gen: GeneratorArgs,
    /// Number of seeds, starting at --first-seed.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    #[arg(long, default_value_t = 10)]
    iterations: usize,
    #[arg(long, default_value_t = 16)]
    display_size: usize,
    #[arg(long, default_value_t = frugal_cd::invnet::DEFAULT_DEPTH)]
    depth: usize,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    learning_rate: f64,
}

impl SessionArgs {
    fn source(&self) -> anyhow::Result<DataSource> {
        Ok(match &self.data {
            Some(p) => DataSource::Fixed(Arc::new(dataio::load_dataset(p)?)),
            None => DataSource::Synthetic(self.gen.config()?),
        })
    }

    fn base(&self) -> SessionConfig {
        SessionConfig {
            display_size: self.display_size,
            iterations: self.iterations,
            depth: self.depth,
            train: TrainConfig {
                learning_rate: self.learning_rate,
                epochs: self.epochs,
            },
            ..SessionConfig::default()
        }
    }

    fn seed_list(&self) -> Vec<u64> {
        (self.first_seed..self.first_seed + self.seeds).collect()
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Grid {
    /// Selection strategies without augmentation plus the augmented method.
    Comparison,
    Augmentation,
    Ablation,
}

#[derive(Args)]
struct RunArgs {
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    session: SessionArgs,
    /// random, maxmin, uncertainty or optimized.
    #[arg(long, default_value = "optimized")]
    strategy: StrategyKind,
    #[arg(long, value_enum, default_value_t = AugArg::Unary)]
    aug: AugArg,
    #[arg(long, value_enum, default_value_t = SpaceArg::Latent)]
    space: SpaceArg,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    /// Run a predefined grid instead of the single arm above.
    #[arg(long, value_enum)]
    grid: Option<Grid>,
    /// Also report the fully supervised EER per seed.
    #[arg(long)]
    supervised: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum AugArg {
    None,
    Unary,
    BinarySoft,
    BinaryCrisp,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpaceArg {
    Latent,
    Ambient,
}

#[derive(Args)]
struct AblateArgs {
    /// CSV with every run of both grids.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    session: SessionArgs,
}

#[derive(Args)]
struct ServeArgs {
    /// Dataset files, served under their file stem.
    #[arg(long)]
    data: Vec<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, env = "FRUGAL_CD_STATE_DIR", default_value = "sessions")]
    state_dir: PathBuf,
}

fn parse_geometry(s: &str) -> Result<PatchGeometry, String> {
    let parts: Vec<&str> = s.split('x').collect();
    let [w, h, c] = parts.as_slice() else {
        return Err(format!("expected WxHxC, got {s:?}"));
    };
    let num = |v: &str| v.parse::<u16>().map_err(|e| format!("{v:?}: {e}"));
    Ok(PatchGeometry {
        width: num(w)?,
        height: num(h)?,
        channels: num(c)?,
    })
}

fn output(path: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn print_tables(results: &[RunResult], to: &mut dyn Write) -> io::Result<()> {
    for s in experiment::summarize(results) {
        write!(to, "{:<40}", s.arm.label())?;
        for (iter, _, eer) in s.curve.iter().filter(|c| c.0 >= 2) {
            write!(to, " {iter}:{eer:6.2}")?;
        }
        match s.auc {
            Some(a) => writeln!(to, "  AUC {a:.2} ({} seeds)", s.seeds)?,
            None => writeln!(to, "  AUC n/a")?,
        }
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> anyhow::Result<()> {
    let cfg = SynthConfig {
        seed: args.seed,
        ..args.gen.config()?
    };
    let ds = dataio::synth_generate(&cfg)?;
    dataio::save_dataset(&args.out, &ds)?;
    eprintln!(
        "wrote {} samples ({} change) of dimension {} to {}",
        ds.len(),
        ds.count_label(dataio::Label::Change),
        ds.dim(),
        args.out.display()
    );
    Ok(())
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let source = args.session.source()?;
    let arms = match args.grid {
        Some(Grid::Comparison) => experiment::comparison_grid(),
        Some(Grid::Augmentation) => experiment::augmentation_grid(),
        Some(Grid::Ablation) => experiment::ablation_grid(),
        None => {
            let kind = match args.aug {
                AugArg::None => AugmentKind::None,
                AugArg::Unary => AugmentKind::Unary,
                AugArg::BinarySoft => AugmentKind::BinarySoft,
                AugArg::BinaryCrisp => AugmentKind::BinaryCrisp,
            };
            let space = match args.space {
                SpaceArg::Latent => AugmentSpace::Latent,
                SpaceArg::Ambient => AugmentSpace::Ambient,
            };
            vec![Arm::new(args.strategy, kind, space, args.delta)]
        }
    };
    let base = args.session.base();
    let seeds = args.session.seed_list();
    let results = experiment::run_grid(&source, &base, &seeds, &arms)?;
    experiment::write_csv(output(&args.out)?, &results)?;
    let mut err = io::stderr().lock();
    print_tables(&results, &mut err)?;
    if args.supervised {
        for &seed in &seeds {
            let eer = experiment::supervised_eer(source.dataset(seed)?, base.depth, &base.train, seed)?;
            match eer {
                Some(e) => writeln!(err, "supervised seed {seed}: EER {e:.2}")?,
                None => writeln!(err, "supervised seed {seed}: EER undefined")?,
            }
        }
    }
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> anyhow::Result<()> {
    let source = args.session.source()?;
    let base = args.session.base();
    let seeds = args.session.seed_list();
    let aug = experiment::run_grid(&source, &base, &seeds, &experiment::augmentation_grid())?;
    let abl = experiment::run_grid(&source, &base, &seeds, &experiment::ablation_grid())?;
    let mut out = io::stdout().lock();
    writeln!(out, "augmentation settings (optimized display, latent space)")?;
    print_tables(&aug, &mut out)?;
    writeln!(out, "\ndisplay x space (unary, delta = 1)")?;
    print_tables(&abl, &mut out)?;
    if let Some(path) = &args.out {
        let all: Vec<RunResult> = aug.into_iter().chain(abl).collect();
        experiment::write_csv(BufWriter::new(File::create(path)?), &all)?;
    }
    Ok(())
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn cmd_serve(args: ServeArgs) -> anyhow::Result<()> {
    let store = SessionStore::open(&args.state_dir)?;
    let mut state = AppState::new(store);
    for path in &args.data {
        let ds = dataio::load_dataset(path)?;
        let name = dataset_name(path);
        log::info!("loaded dataset {name:?}: {} samples, d = {}", ds.len(), ds.dim());
        state = state.with_dataset(name, Arc::new(ds));
    }
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port)).await?;
        let addr = listener.local_addr()?;
        // Scripts read this line to find an ephemeral port.
        println!("listening on http://{addr}");
        io::stdout().flush()?;
        service::serve(listener, Arc::new(state)).await
    })?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Run(a) => cmd_run(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Serve(a) => cmd_serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
