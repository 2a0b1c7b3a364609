//! `sfl` -- generate, solve, embed, and benchmark submodular facility
//! location instances.
//!
//! Exit codes: 0 on success, 2 when an input exceeds a solver size cap,
//! 3 when an internal consistency check fails (a JSON diagnostic dump is
//! written and its path printed to stderr), 1 for any other error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sfl_core::audit::CheckRecord;
use sfl_core::baselines::{exact_dp, greedy_exact, greedy_structured, GreedyStep};
use sfl_core::embed::{frt_embed, Hst};
use sfl_core::instance::{gen_hypercube, gen_random, CostBreakdown, Instance, RandomOracleFamily};
use sfl_core::lp::{frac_cost, solve_conf_lp, LpMode};
use sfl_core::pipeline::{pipeline_solve, ComponentReport, PipelineConfig};
use sfl_core::{Error, Result};

#[derive(Parser)]
#[command(name = "sfl", version, about = "Submodular facility location toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated instance to a JSON file.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Solve an instance file and print a JSON report to stdout.
    Solve(SolveArgs),
    /// Embed an instance's points into a random tree and write it as JSON.
    Embed(EmbedArgs),
    /// Run every solver over an instance directory and write a CSV.
    Bench(BenchArgs),
}

#[derive(Subcommand)]
enum GenCommand {
    /// Adversarial hypercube family: one client per (vertex, dimension),
    /// facilities on vertices and edge midpoints.
    Hypercube {
        #[arg(long)]
        dim: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded random points in the unit square with a random oracle.
    Random {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        seed: u64,
        /// uniform | coverage | independent_activation
        #[arg(long, default_value = "coverage")]
        oracle: RandomOracleFamily,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Algo {
    Pipeline,
    Greedy,
    GreedyStructured,
    Exact,
    Lp,
}

impl Algo {
    fn name(self) -> &'static str {
        match self {
            Algo::Pipeline => "pipeline",
            Algo::Greedy => "greedy",
            Algo::GreedyStructured => "greedy-structured",
            Algo::Exact => "exact",
            Algo::Lp => "lp",
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    algo: Algo,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Spread-control parameter of the distance-range reduction
    /// (pipeline only).
    #[arg(long)]
    eps: Option<f64>,
    /// Run the pipeline at exactly this distance threshold instead of
    /// sweeping all candidate thresholds.
    #[arg(long = "fix-L")]
    fix_l: Option<f64>,
    /// Include the per-step log in greedy reports.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory of instance JSON files.
    #[arg(long)]
    dir: PathBuf,
    /// Seed range: `a..b` (half-open), `a..=b` (inclusive), or one integer.
    #[arg(long)]
    seeds: String,
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => {}
        Err(err) => {
            let code = match &err {
                Error::CapExceeded(_) => 2,
                Error::Invariant(_) => {
                    write_invariant_dump(&err);
                    3
                }
                _ => 1,
            };
            eprintln!("error: {err}");
            std::process::exit(code);
        }
    }
}

/// Serializes the failure context next to the working directory so a
/// violated internal check can be reported with evidence.
fn write_invariant_dump(err: &Error) {
    #[derive(Serialize)]
    struct Dump {
        error: String,
        argv: Vec<String>,
    }
    let dump = Dump {
        error: err.to_string(),
        argv: std::env::args().collect(),
    };
    let path = Path::new("sfl-invariant-dump.json");
    match serde_json::to_string_pretty(&dump) {
        Ok(body) => match std::fs::write(path, body + "\n") {
            Ok(()) => eprintln!("diagnostic dump written to {}", path.display()),
            Err(io) => eprintln!("failed to write diagnostic dump: {io}"),
        },
        Err(ser) => eprintln!("failed to serialize diagnostic dump: {ser}"),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen(gen) => run_gen(gen),
        Command::Solve(args) => run_solve(args),
        Command::Embed(args) => run_embed(args),
        Command::Bench(args) => run_bench(args),
    }
}

fn load_instance(path: &Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path)?;
    Instance::from_json(&text)
}

fn run_gen(gen: GenCommand) -> Result<()> {
    let (inst, out) = match gen {
        GenCommand::Hypercube { dim, out } => (gen_hypercube(dim)?, out),
        GenCommand::Random {
            n,
            m,
            seed,
            oracle,
            out,
        } => (gen_random(n, m, seed, oracle)?, out),
    };
    std::fs::write(&out, inst.to_json())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SolveReport {
    instance: String,
    algo: &'static str,
    seed: u64,
    n: usize,
    m: usize,
    conn: f64,
    open: f64,
    total: f64,
    /// Configuration-LP objective; absent when the LP exceeds its caps.
    #[serde(skip_serializing_if = "Option::is_none")]
    lp_objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    assignment: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pipeline: Option<PipelineSection>,
    /// Greedy step log (with `--trace`).
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<Vec<GreedyStep>>,
    /// Simplex pivot count (`--algo lp`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pivots: Option<usize>,
}

#[derive(Serialize)]
struct PipelineSection {
    /// Winning distance threshold; null when the nearest-facility
    /// candidate won.
    level: Option<f64>,
    levels_tried: usize,
    levels_skipped: usize,
    components: Vec<ComponentReport>,
    /// Every inequality asserted on the winning run, with its slack.
    checks: Vec<CheckRecord>,
}

fn run_solve(args: SolveArgs) -> Result<()> {
    let inst = load_instance(&args.input)?;
    let mut report = SolveReport {
        instance: args.input.to_string_lossy().into_owned(),
        algo: args.algo.name(),
        seed: args.seed,
        n: inst.n(),
        m: inst.m(),
        conn: 0.0,
        open: 0.0,
        total: 0.0,
        lp_objective: None,
        assignment: None,
        pipeline: None,
        steps: None,
        pivots: None,
    };
    match args.algo {
        Algo::Pipeline => {
            let config = PipelineConfig {
                eps: args.eps.unwrap_or_else(|| PipelineConfig::default().eps),
                fix_level: args.fix_l,
            };
            let out = pipeline_solve(&inst, args.seed, &config)?;
            set_cost(&mut report, out.cost);
            report.lp_objective = out.lp_objective;
            report.assignment = Some(out.assignment);
            report.pipeline = Some(PipelineSection {
                level: out.level,
                levels_tried: out.levels_tried,
                levels_skipped: out.levels_skipped,
                components: out.components,
                checks: out.checks,
            });
        }
        Algo::Greedy | Algo::GreedyStructured => {
            let out = if args.algo == Algo::Greedy {
                greedy_exact(&inst)?
            } else {
                greedy_structured(&inst)?
            };
            set_cost(&mut report, out.cost);
            report.assignment = Some(out.assignment);
            if args.trace {
                report.steps = Some(out.steps);
            }
        }
        Algo::Exact => {
            let out = exact_dp(&inst)?;
            set_cost(&mut report, out.cost);
            report.assignment = Some(out.assignment);
        }
        Algo::Lp => {
            let out = solve_conf_lp(&inst, LpMode::Colgen)?;
            set_cost(&mut report, frac_cost(&inst, &out.solution));
            report.lp_objective = Some(out.objective);
            report.pivots = Some(out.pivots);
        }
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    Ok(())
}

fn set_cost(report: &mut SolveReport, cost: CostBreakdown) {
    report.conn = cost.conn;
    report.open = cost.open;
    report.total = cost.total;
}

// ---------------------------------------------------------------------------
// embed
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct EmbedReport {
    points: usize,
    seed: u64,
    /// Distance multiplier applied before embedding so every positive
    /// distance exceeds 1 (tree distances are in the scaled space).
    scale: f64,
    hst: Hst,
}

fn run_embed(args: EmbedArgs) -> Result<()> {
    let inst = load_instance(&args.input)?;
    let metric = inst.metric();
    let scale = match metric.min_positive_distance() {
        Some(dmin) if dmin <= 1.0 => 2.0 / dmin,
        _ => 1.0,
    };
    let scaled = metric.scaled(scale);
    let hst = frt_embed(&scaled, args.seed)?;
    let report = EmbedReport {
        points: metric.len(),
        seed: args.seed,
        scale,
        hst,
    };
    let body = serde_json::to_string_pretty(&report).expect("embedding serializes");
    std::fs::write(&args.out, body + "\n")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchRow {
    instance: String,
    algo: &'static str,
    seed: u64,
    n: usize,
    m: usize,
    conn: f64,
    open: f64,
    total: f64,
    lp_obj: Option<f64>,
    ratio_vs_lp: Option<f64>,
    runtime_ms: u64,
}

impl BenchRow {
    fn csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.instance,
            self.algo,
            self.seed,
            self.n,
            self.m,
            self.conn,
            self.open,
            self.total,
            opt(self.lp_obj),
            opt(self.ratio_vs_lp),
            self.runtime_ms
        )
    }
}

/// Parses `a..b`, `a..=b`, or a single integer into a seed list.
fn parse_seeds(range: &str) -> Result<Vec<u64>> {
    let parse = |s: &str| -> Result<u64> {
        s.trim()
            .parse::<u64>()
            .map_err(|_| Error::domain(format!("invalid seed '{s}' in range '{range}'")))
    };
    if let Some((a, b)) = range.split_once("..=") {
        let (a, b) = (parse(a)?, parse(b)?);
        Ok((a..=b).collect())
    } else if let Some((a, b)) = range.split_once("..") {
        let (a, b) = (parse(a)?, parse(b)?);
        Ok((a..b).collect())
    } else {
        Ok(vec![parse(range)?])
    }
}

fn run_bench(args: BenchArgs) -> Result<()> {
    let seeds = parse_seeds(&args.seeds)?;
    let mut files: Vec<(String, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(&args.dir)? {
        let entry = entry?;
        let path = entry.path();
        if path.extension().is_some_and(|e| e == "json") {
            files.push((entry.file_name().to_string_lossy().into_owned(), path));
        }
    }
    files.sort();

    let mut rows: Vec<BenchRow> = Vec::new();
    for (name, path) in &files {
        let inst = load_instance(path)?;
        let (n, m) = (inst.n(), inst.m());
        let row = |algo: &'static str, seed: u64, cost: CostBreakdown, lp: Option<f64>| BenchRow {
            instance: name.clone(),
            algo,
            seed,
            n,
            m,
            conn: cost.conn,
            open: cost.open,
            total: cost.total,
            lp_obj: lp,
            ratio_vs_lp: lp.filter(|&l| l > 0.0).map(|l| cost.total / l),
            runtime_ms: 0,
        };

        // Seed-independent solvers run once; caps skip the row.
        let lp = match solve_conf_lp(&inst, LpMode::Colgen) {
            Ok(out) => Some((out.objective, frac_cost(&inst, &out.solution))),
            Err(Error::CapExceeded(_)) => None,
            Err(e) => return Err(e),
        };
        let lp_obj = lp.as_ref().map(|(obj, _)| *obj);
        let greedy = match greedy_exact(&inst) {
            Ok(out) => Some(out.cost),
            Err(Error::CapExceeded(_)) => None,
            Err(e) => return Err(e),
        };
        let exact = match exact_dp(&inst) {
            Ok(out) => Some(out.cost),
            Err(Error::CapExceeded(_)) => None,
            Err(e) => return Err(e),
        };

        for &seed in &seeds {
            match pipeline_solve(&inst, seed, &PipelineConfig::default()) {
                Ok(out) => rows.push(row("pipeline", seed, out.cost, out.lp_objective)),
                Err(Error::CapExceeded(_)) => {}
                Err(e) => return Err(e),
            }
            if let Some(cost) = greedy {
                rows.push(row("greedy", seed, cost, lp_obj));
            }
            if let Some(cost) = exact {
                rows.push(row("exact", seed, cost, lp_obj));
            }
            if let Some((obj, cost)) = lp {
                rows.push(row("lp", seed, cost, Some(obj)));
            }
        }
    }

    rows.sort_by(|a, b| {
        (&a.instance, a.algo, a.seed).cmp(&(&b.instance, b.algo, b.seed))
    });
    let mut csv = String::from("instance,algo,seed,n,m,conn,open,total,lp_obj,ratio_vs_lp,runtime_ms\n");
    for r in &rows {
        csv.push_str(&r.csv_line());
        csv.push('\n');
    }
    std::fs::write(&args.out, csv)?;
    Ok(())
}
