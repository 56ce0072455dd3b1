use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crossover_design::config::{
    parse_theta, CorrelationRef, OutputFormat, OutputSpec, SpaceRef, StudyConfig,
};
use crossover_design::gee::{evaluate_design, support_label};
use crossover_design::optimize::{optimize_allocation, OptimizationProblem};
use crossover_design::report::{self, NOT_ESTIMABLE};
use crossover_design::study::{resolve_design, run_study, Allocation, OptimumObjective};
use crossover_design::{
    AllocationDesign, ContrastTarget, DesignError, ModelForm, TreatmentSequence, WorkingCorrelation,
};

#[derive(Parser)]
#[command(
    name = "crossover",
    version,
    about = "Locally optimal crossover designs for binary responses"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo efficiency study over a parameter box.
    Study(StudyArgs),
    /// Optimal allocation at a single parameter value.
    Optimize(OptimizeArgs),
    /// Contrast variance of a weighted design at a single parameter value.
    Variance(VarianceArgs),
}

#[derive(Args)]
struct StudyArgs {
    /// JSON config file; flags given here override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    periods: Option<usize>,
    /// Fit the model without carryover effects.
    #[arg(long)]
    no_carryover: bool,
    /// Built-in space: B1..B6 or senn.
    #[arg(long)]
    space: Option<String>,
    /// Working correlation: ind, cs[:alpha], ar1[:alpha]; alpha defaults to the space's.
    #[arg(long)]
    corr: Option<CorrelationRef>,
    /// True correlation when it differs from the working one.
    #[arg(long)]
    truth: Option<CorrelationRef>,
    #[arg(long)]
    target: Option<ContrastTarget>,
    /// Comma-separated catalog names or inline supports such as ABB+BAA or ABB+BAA@opt.
    #[arg(long, value_delimiter = ',')]
    designs: Option<Vec<String>>,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report file; without it the report goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json; defaults to the extension of --out.
    #[arg(long)]
    format: Option<OutputFormat>,
    #[arg(long)]
    eff_exponent: Option<usize>,
    /// Objective minimized by the reference optimum: sandwich or model_based.
    #[arg(long, value_parser = parse_optimum)]
    optimum: Option<OptimumObjective>,
    /// Worker threads for the draw loop.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct PointArgs {
    #[arg(long)]
    periods: usize,
    #[arg(long)]
    no_carryover: bool,
    /// mu,beta_1..beta_p,tau[,rho], `zero`, or a JSON object.
    #[arg(long, allow_hyphen_values = true)]
    theta: String,
    #[arg(long, default_value = "ind")]
    corr: WorkingCorrelation,
    #[arg(long)]
    truth: Option<WorkingCorrelation>,
    #[arg(long, default_value = "direct")]
    target: ContrastTarget,
}

impl PointArgs {
    fn form(&self) -> ModelForm {
        if self.no_carryover {
            ModelForm::NO_CARRYOVER
        } else {
            ModelForm::CARRYOVER
        }
    }

    /// A truth equal to the working correlation is the model-based case.
    fn truth(&self) -> Option<WorkingCorrelation> {
        self.truth.filter(|t| *t != self.corr)
    }
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    point: PointArgs,
    /// Restrict to these sequences (comma separated); default is all 2^p.
    #[arg(long, value_delimiter = ',')]
    support: Option<Vec<TreatmentSequence>>,
    /// Print the result as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct VarianceArgs {
    #[command(flatten)]
    point: PointArgs,
    /// AB:0.5,BA:0.5, a catalog name, or an inline support with equal weights.
    #[arg(long)]
    design: String,
}

fn parse_optimum(s: &str) -> Result<OptimumObjective, String> {
    match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
        "sandwich" => Ok(OptimumObjective::Sandwich),
        "model_based" => Ok(OptimumObjective::ModelBased),
        other => Err(format!("unknown optimum objective {other:?}")),
    }
}

enum Failure {
    Config(String),
    Numerical(String),
}

impl From<DesignError> for Failure {
    fn from(e: DesignError) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

fn study(args: StudyArgs) -> Result<(), Failure> {
    let file = match &args.config {
        Some(p) => StudyConfig::load(p)?,
        None => StudyConfig::default(),
    };
    let flags = StudyConfig {
        periods: args.periods,
        carryover: args.no_carryover.then_some(false),
        space: args.space.map(SpaceRef::Name),
        correlation: args.corr,
        truth: args.truth,
        target: args.target,
        designs: args.designs,
        draws: args.draws,
        seed: args.seed,
        output: (args.out.is_some() || args.format.is_some()).then_some(OutputSpec {
            path: args.out,
            format: args.format,
        }),
        eff_exponent: args.eff_exponent,
        optimum: args.optimum,
        threads: args.threads,
    };
    let config = file.overridden_by(flags);
    let spec = config.to_spec()?;

    let outcome = match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Failure::Config(format!("thread pool: {e}")))?
            .install(|| run_study(&spec))?,
        None => run_study(&spec)?,
    };
    let rendered = match config.output_format() {
        OutputFormat::Csv => report::to_csv_string(&outcome.report),
        OutputFormat::Json => report::to_json_string(&outcome.report) + "\n",
    };
    match config.output_path() {
        Some(path) => {
            fs::write(path, rendered)
                .map_err(|e| Failure::Config(format!("writing {}: {e}", path.display())))?;
            print!("{}", report::to_table(&outcome.report));
        }
        None => print!("{rendered}"),
    }
    Ok(())
}

fn optimize(args: OptimizeArgs) -> Result<(), Failure> {
    let p = &args.point;
    let form = p.form();
    let theta = parse_theta(&p.theta, p.periods, form)?;
    let support = match args.support {
        Some(s) => s,
        None => TreatmentSequence::universe(p.periods)?,
    };
    let problem = OptimizationProblem {
        support: support.clone(),
        theta,
        work: p.corr,
        truth: p.truth(),
        target: p.target,
        form,
    };
    let result = optimize_allocation(&problem).map_err(|e| match e {
        DesignError::NotEstimable { .. } => Failure::Numerical(format!(
            "{} contrast is not estimable on support {}",
            p.target,
            support_label(&support)
        )),
        other => other.into(),
    })?;
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&result).expect("result serializes")
        );
        return Ok(());
    }
    for (s, w) in result.support.iter().zip(&result.weights) {
        if *w >= 5e-5 {
            println!("{s:<8} {w:.4}");
        }
    }
    println!("variance   {}", result.objective);
    println!("kkt_gap    {:e}", result.kkt_gap);
    println!("iterations {}", result.iterations);
    Ok(())
}

fn parse_weighted(text: &str) -> Result<AllocationDesign, DesignError> {
    let mut support = Vec::new();
    let mut weights = Vec::new();
    for item in text.split(',') {
        let (s, w) = item
            .split_once(':')
            .ok_or_else(|| DesignError::Config(format!("expected SEQ:WEIGHT, got {item:?}")))?;
        support.push(s.parse::<TreatmentSequence>()?);
        weights.push(
            w.trim()
                .parse::<f64>()
                .map_err(|e| DesignError::Config(format!("weight {w:?}: {e}")))?,
        );
    }
    AllocationDesign::new(support, weights)
}

fn variance(args: VarianceArgs) -> Result<(), Failure> {
    let p = &args.point;
    let form = p.form();
    let theta = parse_theta(&p.theta, p.periods, form)?;
    let design = if args.design.contains(':') {
        parse_weighted(&args.design)?
    } else {
        let entry = resolve_design(&args.design, p.periods)?;
        if entry.allocation == Allocation::Optimized {
            let problem = OptimizationProblem {
                support: entry.support,
                theta,
                work: p.corr,
                truth: p.truth(),
                target: p.target,
                form,
            };
            match optimize_allocation(&problem) {
                Ok(r) => println!("{}", r.objective),
                Err(DesignError::NotEstimable { .. }) => println!("{NOT_ESTIMABLE}"),
                Err(e) => return Err(e.into()),
            }
            return Ok(());
        }
        AllocationDesign::uniform(entry.support)?
    };
    if design.periods() != p.periods {
        return Err(Failure::Config(format!(
            "design has {} periods, expected {}",
            design.periods(),
            p.periods
        )));
    }
    let truth = p.truth();
    let result = evaluate_design(&design, &theta, &p.corr, truth.as_ref(), p.target, form)?;
    match result.contrast_variance {
        Some(v) => println!("{v}"),
        None => println!("{NOT_ESTIMABLE}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Study(a) => study(a),
        Command::Optimize(a) => optimize(a),
        Command::Variance(a) => variance(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
