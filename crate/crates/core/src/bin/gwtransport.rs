use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gwtransport::driver::bench::{BenchPlan, BenchReport};
use gwtransport::driver::config::RunConfig;
use gwtransport::driver::device_file::{device_to_string, import_hr, parse_toml, DeviceSummary, HrImport};
use gwtransport::driver::oracle::check_all;
use gwtransport::driver::output::{format_summary, write_outputs};
use gwtransport::driver::run::{dist_worker, execute};
use gwtransport::driver::toy::{toy_device, Preset};
use gwtransport::error::{read_text, Error, Result};

#[derive(Parser)]
#[command(name = "gwtransport", version, about = "NEGF transport with self-consistent GW self-energies")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML). Without one the built-in toy device is used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Energy workers.
    #[arg(long)]
    workers: Option<usize>,
    /// Spatial partitions per energy worker.
    #[arg(long)]
    partitions: Option<usize>,
    /// Cross-check every convolution against the direct sum.
    #[arg(long)]
    oracle: bool,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &self.output_dir {
            c.output_dir = d.clone();
        }
        if let Some(w) = self.workers {
            c.workers = w;
        }
        if let Some(p) = self.partitions {
            c.dist.p_s = p;
        }
        c.oracle_mode |= self.oracle;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Self-consistent run; writes result tables and report.json.
    Run(Common),
    /// Kernel timings, complexity slopes and weak scaling.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Block counts of the RGF sweep (comma separated; no value skips the sweep).
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        n_b: Option<Vec<usize>>,
        /// Block sizes of the RGF sweep.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        n_bs: Option<Vec<usize>>,
        /// Energy counts of the convolution sweep.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        n_e: Option<Vec<usize>>,
        /// Partition counts of the distributed solve.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        p_s: Option<Vec<usize>>,
        /// Minimum seconds per timing batch.
        #[arg(long, default_value_t = 0.03)]
        min_batch: f64,
    },
    /// Dense and direct-sum cross-checks of every kernel.
    CheckOracle {
        #[command(flatten)]
        common: Common,
        /// Fewer random samples.
        #[arg(long)]
        quick: bool,
    },
    /// Writes a device file from a preset or an `_hr.dat` Hamiltonian.
    GenDevice {
        /// chain, toy or nw1
        #[arg(long, default_value = "toy", conflicts_with = "from_hr")]
        preset: Preset,
        #[arg(long)]
        from_hr: Option<PathBuf>,
        /// Import parameters (TOML) for --from-hr.
        #[arg(long, requires = "from_hr")]
        config: Option<PathBuf>,
        /// Transport cells of a preset device.
        #[arg(long)]
        n_b: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Destination; standard output if omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    #[command(hide = true)]
    DistWorker {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        root: SocketAddr,
        #[arg(long)]
        rank: usize,
        #[arg(long)]
        size: usize,
    },
}

fn run(common: &Common) -> Result<ExitCode> {
    let config = common.config()?;
    let exe = std::env::current_exe()?;
    let device = DeviceSummary::of(&config.device_spec()?)?;
    let result = execute(&config, Some(&exe))?;
    write_outputs(&config.output_dir, &result, &device)?;
    print!("{device}\n{}", format_summary(&result));
    println!("results in {}", config.output_dir.display());
    Ok(if result.summary.converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn gen_device(preset: Preset, from_hr: Option<&Path>, config: Option<&Path>, n_b: Option<usize>, seed: Option<u64>, output: Option<&Path>) -> Result<()> {
    let device = match from_hr {
        Some(hr) => {
            let opts: HrImport = match config {
                Some(p) => parse_toml(&read_text(p)?, &p.display().to_string())?,
                None => HrImport::default(),
            };
            import_hr(&read_text(hr)?, &hr.display().to_string(), &opts)?
        }
        None => {
            let mut p = preset.params();
            if let Some(n) = n_b {
                p.n_b = n;
            }
            if let Some(s) = seed {
                p.seed = s;
            }
            toy_device(&p)?
        }
    };
    let text = device_to_string(&device);
    match output {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    eprintln!("{}", DeviceSummary::of(&device)?);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(common) => run(&common),
        Command::Bench { common, n_b, n_bs, n_e, p_s, min_batch } => {
            let config = common.config()?;
            let d = BenchPlan::default();
            let plan = BenchPlan {
                n_b: n_b.unwrap_or(d.n_b),
                n_bs: n_bs.unwrap_or(d.n_bs),
                n_e: n_e.unwrap_or(d.n_e),
                p_s: p_s.unwrap_or(d.p_s),
                workers: config.worker_count(),
                min_batch,
            };
            let report = BenchReport::run(&plan)?;
            print!("{report}");
            if common.output_dir.is_some() || common.config.is_some() {
                std::fs::create_dir_all(&config.output_dir)?;
                let json = serde_json::to_string_pretty(&report).map_err(|e| Error::InvalidInput(e.to_string()))?;
                std::fs::write(config.output_dir.join("bench.json"), json + "\n")?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::CheckOracle { common, quick } => {
            common.config()?;
            let checks = check_all(quick)?;
            for c in &checks {
                println!("{c}");
            }
            Ok(if checks.iter().all(|c| c.passed()) { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::GenDevice { preset, from_hr, config, n_b, seed, output } => {
            gen_device(preset, from_hr.as_deref(), config.as_deref(), n_b, seed, output.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::DistWorker { config, root, rank, size } => {
            dist_worker(&RunConfig::load(&config)?, root, rank, size)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
