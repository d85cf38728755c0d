use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use sfw3d::harness::bench::{self, trial_input, CONFIG_FILE};
use sfw3d::harness::{emit_plots, ExperimentConfig};
use sfw3d::solvers::{solve, Algorithm, SolverOptions};
use sfw3d::{DomainBounds, ForwardModel, Result, Volume};

#[derive(Parser, Debug)]
#[command(
    name = "sfw3d",
    version,
    about = "Gridless 3D sparse deconvolution by sliding Frank-Wolfe"
)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum AlgorithmArg {
    Sfw,
    Bsfw,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Sfw => Algorithm::Sfw,
            AlgorithmArg::Bsfw => Algorithm::Bsfw,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Deconvolve a volume and write the recovered measure and its trace.
    Solve {
        /// Observed volume.
        #[arg(long)]
        input: PathBuf,
        /// PSF kernel volume, same dimensions, centred on voxel (0, 0, 0).
        #[arg(long)]
        psf: PathBuf,
        #[arg(long)]
        lambda: f64,
        #[arg(long, value_enum, default_value = "bsfw")]
        algorithm: AlgorithmArg,
        /// Measure output (one `x y z sigma d weight` line per atom).
        #[arg(long)]
        output: PathBuf,
        /// Per-iteration trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], default_values_t = [1.0, 6.0])]
        sigma_range: Vec<f64>,
        #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], default_values_t = [1.2, 3.0])]
        shape_range: Vec<f64>,
        /// Sets the outer-iteration cap to four times this count.
        #[arg(long)]
        expected_atoms: Option<usize>,
        #[arg(long)]
        max_iterations: Option<usize>,
        #[arg(long, default_value_t = 8)]
        grid_sigma: usize,
        #[arg(long, default_value_t = 6)]
        grid_shape: usize,
    },
    /// Draw one benchmark trial: ground-truth measure, observation and PSF.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Volume edge; defaults to the first configured size.
        #[arg(long)]
        size: Option<usize>,
        /// Atom count; defaults to the first configured count.
        #[arg(long)]
        atoms: Option<usize>,
        #[arg(long, default_value_t = 0)]
        repetition: usize,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        observation: PathBuf,
        #[arg(long)]
        psf: Option<PathBuf>,
    },
    /// Run the SFW-vs-BSFW sweep and write records, summary and match CSVs.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `output_dir` from the configuration.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also render figures into `<output>/plots`.
        #[arg(long)]
        plots: bool,
    },
    /// Render figures from a records CSV.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Print the default experiment configuration.
    DefaultConfig,
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve {
            input,
            psf,
            lambda,
            algorithm,
            output,
            trace,
            sigma_range,
            shape_range,
            expected_atoms,
            max_iterations,
            grid_sigma,
            grid_shape,
        } => {
            let y = Volume::read(&input)?;
            let model = ForwardModel::new(Volume::read(&psf)?)?;
            y.check_same_dims(model.psf().kernel())?;
            let bounds = DomainBounds::for_volume(
                y.dims(),
                0.0,
                (sigma_range[0], sigma_range[1]),
                (shape_range[0], shape_range[1]),
            )?;
            let mut options = SolverOptions::new(lambda);
            if let Some(k) = expected_atoms {
                options = options.with_expected_atoms(k);
            }
            if let Some(m) = max_iterations {
                options.max_outer_iterations = m;
            }
            options.grid_sigma_samples = grid_sigma;
            options.grid_shape_samples = grid_shape;
            let result = solve(algorithm.into(), &model, &y, &options, &bounds)?;
            result.measure.write(&output)?;
            if let Some(path) = trace {
                result.trace.write_csv(BufWriter::new(File::create(path)?))?;
            }
            println!(
                "{} atoms, criterion {:.10e}, {} ({} outer iterations, {:.3}s)",
                result.measure.len(),
                result.criterion,
                result.termination.tag(),
                result.trace.augmentations(),
                result.trace.total_time().as_secs_f64()
            );
        }
        Command::Simulate {
            config,
            size,
            atoms,
            repetition,
            truth,
            observation,
            psf,
        } => {
            let cfg = load_config(&config)?;
            let size = size.unwrap_or(cfg.sizes[0]);
            let atoms = atoms.unwrap_or(cfg.atom_counts[0]);
            let model = bench::make_model(&cfg, size)?;
            let trial = trial_input(&cfg, &model, size, atoms, repetition)?;
            trial.truth.write(&truth)?;
            trial.y.write(&observation)?;
            if let Some(p) = psf {
                model.psf().kernel().write(p)?;
            }
            println!("seed {}, noise sigma {:.6e}", trial.seed, trial.noise_sigma);
        }
        Command::Bench { config, output, plots } => {
            let mut cfg = load_config(&config)?;
            if let Some(o) = output {
                cfg.output_dir = o;
            }
            let (report, files) = bench::run_and_write(&cfg)?;
            for row in &report.summary {
                println!(
                    "{:>4}^3 {:>2} atoms {:<4}  trials {:>3}  failed {:>2}  median C {:.6e}  median time {:.3}s",
                    row.size,
                    row.atoms,
                    row.algorithm.tag(),
                    row.trials,
                    row.failures,
                    row.median_criterion,
                    row.median_total_time_s
                );
            }
            println!(
                "wrote {} ({})",
                files.records.display(),
                cfg.output_dir.join(CONFIG_FILE).display()
            );
            if plots {
                for f in emit_plots(&files.records, cfg.output_dir.join("plots"))? {
                    println!("wrote {}", f.display());
                }
            }
        }
        Command::Plot { csv, output } => {
            for f in emit_plots(&csv, &output)? {
                println!("wrote {}", f.display());
            }
        }
        Command::DefaultConfig => print!("{}", ExperimentConfig::default().to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
