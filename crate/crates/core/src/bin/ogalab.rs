use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ogalab::analysis::CheckSummary;
use ogalab::experiment::{
    exit_code, read_config_file, run_experiment, write_outputs, DictSource, DictSpec, ExperimentConfig, InstanceReport,
};
use ogalab::selftest::run_selftest;
use ogalab::Result;

#[derive(Parser)]
#[command(name = "ogalab", version, about = "Orthogonal greedy algorithm experiments on coherent dictionaries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dictionary file and print its coherence.
    GenDict(GenDictArgs),
    /// Verify one value of m over a list of seeds.
    Run(RunArgs),
    /// Like `run`, for a list of m values.
    Sweep(RunArgs),
    /// Run the built-in consistency checks.
    Selftest,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    HadamardUnion,
    Hadamard,
    Orthonormal,
    Random,
}

#[derive(Args)]
struct GenDictArgs {
    #[arg(long, value_enum)]
    family: Family,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Redraw random dictionaries until their coherence is at most this.
    #[arg(long)]
    max_coherence: Option<f64>,
    /// Keep a seeded random subset of this many atoms.
    #[arg(long)]
    subdict: Option<usize>,
    #[arg(long, default_value_t = 0)]
    subdict_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// key = value file; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dictionary file, or `family:key=value,...` such as `hadamard-union:k=10`.
    #[arg(long)]
    dict: Option<String>,
    /// Sparsity level (a list such as `1,2,3` for sweep).
    #[arg(long)]
    m: Option<String>,
    /// OGA steps; 2m when omitted.
    #[arg(long)]
    steps: Option<usize>,
    /// Seeds as a list or range: `0..500`, `1,5,9`.
    #[arg(long)]
    seeds: Option<String>,
    /// planted, random, or mixed.
    #[arg(long)]
    kind: Option<String>,
    /// exact or relaxed.
    #[arg(long)]
    oracle: Option<String>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    coeff_low: Option<f64>,
    #[arg(long)]
    coeff_high: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    report_out: Option<PathBuf>,
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self, single_m: bool) -> Result<ExperimentConfig> {
        let mut map = match &self.config {
            Some(path) => read_config_file(path)?,
            None => BTreeMap::new(),
        };
        let mut set = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                map.insert(key.to_string(), v);
            }
        };
        set("dict", self.dict.clone());
        set("m", self.m.clone());
        set("steps", self.steps.map(|v| v.to_string()));
        set("seeds", self.seeds.clone());
        set("kind", self.kind.clone());
        set("oracle", self.oracle.clone());
        set("budget", self.budget.map(|v| v.to_string()));
        set("noise", self.noise.map(|v| v.to_string()));
        set("coeff_low", self.coeff_low.map(|v| v.to_string()));
        set("coeff_high", self.coeff_high.map(|v| v.to_string()));
        set("workers", self.workers.map(|v| v.to_string()));
        set("report_out", self.report_out.as_ref().map(|p| p.display().to_string()));
        set("trace_out", self.trace_out.as_ref().map(|p| p.display().to_string()));
        let cfg = ExperimentConfig::from_map(&map)?;
        if single_m && cfg.m_values.len() != 1 {
            return Err(ogalab::Error::InvalidArgument("run takes a single m; use sweep for several".into()));
        }
        Ok(cfg)
    }
}

fn gen_dict(args: &GenDictArgs) -> Result<()> {
    let need = |v: Option<usize>, name: &str| {
        v.ok_or_else(|| ogalab::Error::InvalidArgument(format!("--{name} is required for this family")))
    };
    let source = match args.family {
        Family::HadamardUnion | Family::Hadamard => {
            let k = args
                .k
                .ok_or_else(|| ogalab::Error::InvalidArgument("--k is required for this family".into()))?;
            if matches!(args.family, Family::Hadamard) {
                DictSource::Hadamard { k }
            } else {
                DictSource::HadamardUnion { k }
            }
        }
        Family::Orthonormal => DictSource::Orthonormal {
            dim: need(args.dim, "dim")?,
        },
        Family::Random => DictSource::Random {
            dim: need(args.dim, "dim")?,
            count: need(args.count, "count")?,
            seed: args.seed,
            max_coherence: args.max_coherence,
        },
    };
    let spec = DictSpec {
        source,
        subdict: args.subdict.map(|n| (n, args.subdict_seed)),
    };
    let dict = spec.build()?;
    dict.save(&args.out)?;
    let c = dict.coherence();
    let ceiling = c.regime_ceiling().map_or("unbounded".to_string(), |v| v.to_string());
    println!("wrote {} ({} atoms, dim {})", args.out.display(), dict.len(), dict.dim());
    println!("coherence {}", c.m_coherence);
    println!("regime ceiling {ceiling}");
    Ok(())
}

fn print_summary(reports: &[InstanceReport]) {
    let mut summary = CheckSummary::default();
    for r in reports {
        summary.add(&r.checks);
    }
    let in_regime = reports.iter().filter(|r| r.instance.regime_ok).count();
    let passed = reports.iter().filter(|r| r.lebesgue.passed).count();
    let max_ratio = reports.iter().filter_map(|r| r.lebesgue.ratio).fold(0.0, f64::max);
    println!(
        "instances {}  in regime {}  lebesgue passed {}  max ratio {:.6}",
        reports.len(),
        in_regime,
        passed,
        max_ratio
    );
    println!(
        "checks {}  vacuous {}  violations {}  reported failures {}  worst utilization {:.6}",
        summary.checked, summary.vacuous, summary.violations, summary.reported_failures, summary.worst_utilization
    );
    for (family, counts) in &summary.families {
        println!(
            "  {family:<8} checked {:>7}  vacuous {:>6}  failed {}",
            counts.checked, counts.vacuous, counts.failed
        );
    }
}

fn run(args: &RunArgs, single_m: bool) -> Result<i32> {
    let cfg = args.config(single_m)?;
    let dict = cfg.dict.build()?;
    let outcomes = run_experiment(&dict, &cfg)?;
    write_outputs(&cfg, &outcomes)?;
    let reports: Vec<InstanceReport> = outcomes.into_iter().map(|o| o.report).collect();
    print_summary(&reports);
    Ok(exit_code(&reports))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenDict(args) => gen_dict(args).map(|()| 0),
        Command::Run(args) => run(args, true),
        Command::Sweep(args) => run(args, false),
        Command::Selftest => run_selftest().map(|r| {
            print!("{}", r.table());
            i32::from(!r.passed())
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
