use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use keygraph_lab::harness::{
    execute, workers_from_env, ExperimentConfig, Fault, GammaKind, HarnessError, Mode, OutputFormat,
};

/// Isolated-node analytics and simulation for random key graphs over on/off channels.
#[derive(Debug, Parser)]
#[command(name = "keygraph-lab", version)]
struct Cli {
    /// JSON experiment configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Node count; a comma-separated ascending list for sweeps.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<u64>>,
    /// Key-ring size.
    #[arg(long = "K")]
    k: Option<u64>,
    /// Key-pool size.
    #[arg(long = "P")]
    p: Option<u64>,
    /// Channel availability probability.
    #[arg(long)]
    alpha: Option<f64>,
    /// Strong-scaling constant c, giving gamma_n = (c - 1) log n.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long, value_enum)]
    gamma_kind: Option<GammaKind>,
    /// Deviation value for --gamma-kind constant.
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Per-trial `trial,isolated_count` dump for simulate.
    #[arg(long)]
    trials_csv: Option<PathBuf>,
    /// Randomized grid size for identities (0 runs nothing).
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long, value_enum, hide = true)]
    inject_fault: Option<Fault>,
}

fn load_config(cli: Cli) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
                path: path.clone(),
                source,
            })?;
            serde_json::from_str(&text)
                .map_err(|e| HarnessError::InvalidConfig(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(v) = cli.mode {
        cfg.mode = v;
    }
    if let Some(v) = cli.n {
        cfg.n = v;
    }
    cfg.k = cli.k.or(cfg.k);
    cfg.p = cli.p.or(cfg.p);
    cfg.alpha = cli.alpha.or(cfg.alpha);
    cfg.c = cli.c.or(cfg.c);
    cfg.gamma_kind = cli.gamma_kind.or(cfg.gamma_kind);
    cfg.gamma = cli.gamma.or(cfg.gamma);
    cfg.trials = cli.trials.or(cfg.trials);
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    cfg.out = cli.out.or(cfg.out);
    if let Some(v) = cli.format {
        cfg.format = v;
    }
    cfg.trials_csv = cli.trials_csv.or(cfg.trials_csv);
    cfg.grid_size = cli.grid_size.or(cfg.grid_size);
    cfg.inject_fault = cli.inject_fault;
    Ok(cfg)
}

fn write_file(path: &PathBuf, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|source| HarnessError::Io {
        path: path.clone(),
        source,
    })
}

fn run(cli: Cli) -> Result<i32, HarnessError> {
    let cfg = load_config(cli)?;
    let output = execute(&cfg, workers_from_env())?;
    for w in &output.warnings {
        eprintln!("{w}");
    }
    for (path, contents) in &output.files {
        write_file(path, contents)?;
    }
    match &cfg.out {
        Some(path) => write_file(path, &output.text)?,
        None => print!("{}", output.text),
    }
    Ok(output.exit_code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
