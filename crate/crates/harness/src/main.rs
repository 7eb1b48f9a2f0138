use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use subspace_core::projections::{check_distortion, fit_pca, sample_jl_seeded};
use subspace_core::rng::{gaussian_matrix, SeededRng};
use subspace_core::synth::generate_collapse_dataset;
use subspace_core::{ProjectionMatrix, ProjectionMethod, Split};
use subspace_harness::coords::{export_coords, write_coords};
use subspace_harness::distill_demo::{run_distill_demo, DistillDemoConfig};
use subspace_harness::emb1::{load_embeddings, save_embeddings};
use subspace_harness::experiment::derive_jl_seed;
use subspace_harness::{run_ablation, run_sweep, HarnessError, ReportFormat, SweepConfig};

#[derive(Parser)]
#[command(
    name = "subspace",
    version,
    about = "Random-projection subspace experiments"
)]
struct Cli {
    /// Experiment config (TOML). Synthetic defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config's `master_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path (a directory for `synth`). Reports go to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Markdown,
    Jsonl,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Markdown => ReportFormat::Markdown,
            Format::Jsonl => ReportFormat::JsonLines,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CoordsMethod {
    Jl,
    Pca,
    Identity,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a collapse dataset and write train.emb1 / test.emb1.
    Synth,
    /// Baseline probe plus one probe per (method, k).
    Sweep,
    /// JL vs PCA vs Learned at every k.
    Ablate,
    /// Train a student on projected teacher targets and compare probes.
    DistillDemo,
    /// Pairwise distance distortion of one JL map.
    CheckJl {
        /// EMB1 file whose rows are the points; Gaussian points otherwise.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long, default_value_t = 768)]
        dim: usize,
        #[arg(long, default_value_t = 147)]
        k: usize,
        #[arg(long, default_value_t = 0.5)]
        epsilon: f64,
    },
    /// Write projected coordinates and labels as CSV.
    ExportCoords {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = CoordsMethod::Jl)]
        method: CoordsMethod,
        #[arg(long, default_value_t = 2)]
        k: usize,
    },
}

fn load_config(cli: &Cli, ablation: bool) -> Result<SweepConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(path) => SweepConfig::from_file(path)?,
        None => {
            let mut cfg = SweepConfig::synthetic_default();
            if ablation {
                cfg.name = "synthetic-collapse-ablation".into();
                cfg.methods = vec![
                    ProjectionMethod::Jl,
                    ProjectionMethod::Pca,
                    ProjectionMethod::Learned,
                ];
            }
            cfg
        }
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    Ok(cfg)
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), HarnessError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| io_err(path, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| io_err(Path::new("<stdout>"), e)),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, HarnessError> {
    let mut s =
        serde_json::to_string_pretty(value).map_err(|e| HarnessError::Report(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    match &cli.command {
        Command::Synth => {
            let cfg = load_config(cli, false)?;
            let spec = cfg.collapse_spec().ok_or_else(|| {
                HarnessError::Config("synth needs a synthetic data source".into())
            })?;
            let ds = generate_collapse_dataset(&spec)?;
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
            fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
            save_embeddings(dir.join("train.emb1"), &ds.train)?;
            save_embeddings(dir.join("test.emb1"), &ds.test)?;
        }
        Command::Sweep | Command::Ablate => {
            let ablation = matches!(cli.command, Command::Ablate);
            let cfg = load_config(cli, ablation)?;
            let report = if ablation {
                run_ablation(&cfg)?
            } else {
                run_sweep(&cfg)?
            };
            write_output(cli.out.as_deref(), &report.render(cli.format.into())?)?;
        }
        Command::DistillDemo => {
            let cfg = DistillDemoConfig::synthetic_default(
                cli.seed
                    .unwrap_or(subspace_harness::config::DEFAULT_MASTER_SEED),
            );
            let (_, report) = run_distill_demo(&cfg)?;
            write_output(cli.out.as_deref(), &to_json(&report)?)?;
        }
        Command::CheckJl {
            input,
            points,
            dim,
            k,
            epsilon,
        } => {
            let seed = cli
                .seed
                .unwrap_or(subspace_harness::config::DEFAULT_MASTER_SEED);
            let x = match input {
                Some(path) => load_embeddings(path, Split::Train)?.features().clone(),
                None => gaussian_matrix(&mut SeededRng::new(seed), *points, *dim)?,
            };
            let p = sample_jl_seeded(derive_jl_seed(seed, *k), x.cols(), *k)?;
            let report = check_distortion(&p, &x, *epsilon)?;
            write_output(cli.out.as_deref(), &to_json(&report)?)?;
        }
        Command::ExportCoords { input, method, k } => {
            let out = cli
                .out
                .as_deref()
                .ok_or_else(|| HarnessError::Config("export-coords needs --out".into()))?;
            let data = load_embeddings(input, Split::Train)?;
            let seed = cli
                .seed
                .unwrap_or(subspace_harness::config::DEFAULT_MASTER_SEED);
            match method {
                CoordsMethod::Jl => {
                    let p = sample_jl_seeded(derive_jl_seed(seed, *k), data.dim(), *k)?;
                    export_coords(&data, &p, out)?;
                }
                CoordsMethod::Pca => {
                    let fit = fit_pca(data.features(), *k)?;
                    write_coords(&fit.transform(data.features())?, data.labels(), out)?;
                }
                CoordsMethod::Identity => {
                    export_coords(&data, &ProjectionMatrix::identity(data.dim())?, out)?;
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
