use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use tbg::config::RunConfig;
use tbg::{commands, CliError};

#[derive(Parser)]
#[command(name = "tbg", version, about = "Magic angles, bands, zeros and Chern numbers of the chiral TBG model")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// flat `key = value` config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// plane-wave truncation N
    #[arg(long, global = true)]
    trunc: Option<usize>,
    /// k-grid size n
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// worker threads (0 = all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// bm, theta_family:θ or file:path
    #[arg(long, global = true)]
    potential: Option<String>,
    /// comma-separated α list, or magic:n
    #[arg(long, global = true, allow_hyphen_values = true)]
    alpha: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    probe: Option<String>,
    #[arg(long, global = true)]
    count: Option<usize>,
    /// add rescaled-band comparator columns
    #[arg(long, global = true)]
    rescaled: bool,
    /// any config key, as key=value (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// magic angles and the Wronskian scan
    Magic,
    /// band grid CSV and E₁ heatmap
    Bands,
    /// Berry curvature and Chern numbers
    Curvature,
    /// zeros of the states at K, −K and Γ
    Zeros,
    /// invariant suite
    Check,
    /// convert between the z and ζ conventions
    Translate {
        /// values are in the ζ convention
        #[arg(long)]
        from_zeta: bool,
        /// values are momenta rather than positions
        #[arg(long)]
        momentum: bool,
        #[arg(required = true, allow_hyphen_values = true)]
        values: Vec<String>,
    },
}

fn build_config(g: &Global) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &g.config {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.merge_text(&text)?;
    }
    let mut set = |k: &str, v: String| cfg.set(k, &v);
    if let Some(v) = &g.out {
        set("out", v.display().to_string())?;
    }
    if let Some(v) = g.trunc {
        set("trunc", v.to_string())?;
    }
    if let Some(v) = g.grid {
        set("grid", v.to_string())?;
    }
    if let Some(v) = g.threads {
        set("threads", v.to_string())?;
    }
    if let Some(v) = g.seed {
        set("seed", v.to_string())?;
    }
    if let Some(v) = &g.potential {
        set("potential", v.clone())?;
    }
    if let Some(v) = &g.alpha {
        set("alpha", v.clone())?;
    }
    if let Some(v) = &g.probe {
        set("probe", v.clone())?;
    }
    if let Some(v) = g.count {
        set("count", v.to_string())?;
    }
    if g.rescaled {
        set("rescaled", "true".into())?;
    }
    for kv in &g.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Config(format!("--set expects key=value, got `{kv}`")))?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::Translate { from_zeta, momentum, values } = &cli.command {
        for line in commands::translate(values, *from_zeta, *momentum)? {
            println!("{line}");
        }
        return Ok(());
    }
    let cfg = build_config(&cli.global)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global().map_err(|e| CliError::Config(e.to_string()))?;
    }
    let result = match cli.command {
        Command::Magic => commands::magic(&cfg),
        Command::Bands => commands::bands(&cfg),
        Command::Curvature => commands::curvature(&cfg),
        Command::Zeros => commands::zeros(&cfg),
        Command::Check => commands::check(&cfg),
        Command::Translate { .. } => unreachable!(),
    };
    if let Err(e @ CliError::Numeric(_)) = &result {
        // best effort: the error JSON also goes to stderr below
        let _ = std::fs::create_dir_all(&cfg.out).and_then(|_| std::fs::write(cfg.out.join("error.json"), e.to_json() + "\n"));
    }
    result
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if matches!(e, CliError::CheckFailed(_)) {
                eprintln!("{e}");
            } else {
                eprintln!("{}", e.to_json());
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
