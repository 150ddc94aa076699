use clap::{Parser, ValueEnum};
use revalloc::cli::{run, CliError, ModeChoice, OutputFormat, RunConfig};
use revalloc::game::SingletonUniverse;
use revalloc::solvers::Concept;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Direct,
    Secondary,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum UniverseArg {
    /// Singleton minima taken over the players of the game's own matrix.
    PerStage,
    /// Singleton minima taken over all 2n sub-DMUs; they are then zero.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConceptArg {
    Shapley,
    Leastcore,
    Nucleolus,
    All,
}

/// Fixed-revenue allocation across two-stage DMUs via aggressive DEA
/// cross-efficiency and cooperative game solutions.
#[derive(Debug, Parser)]
#[command(name = "revalloc", version)]
struct Args {
    /// Input CSV: id column, then s input, q intermediate, t output columns.
    #[arg(long)]
    input: PathBuf,

    /// Dimensions s,q,t of the input, intermediate, and output blocks.
    #[arg(long, value_parser = parse_dims)]
    dims: (usize, usize, usize),

    /// Total revenue R to allocate.
    #[arg(long)]
    revenue: f64,

    /// Allocation mode.
    #[arg(long, value_enum, default_value = "both")]
    mode: ModeArg,

    /// Comma-separated solution concepts, or "all".
    #[arg(long, value_delimiter = ',', default_value = "all")]
    concepts: Vec<ConceptArg>,

    /// Directory for reports, the cross-efficiency matrix, and plot data.
    #[arg(long, default_value = "out")]
    output: PathBuf,

    /// Report file format.
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,

    /// Evaluator universe for singleton coalition values.
    #[arg(long, value_enum, default_value = "per-stage")]
    singleton_universe: UniverseArg,

    /// Seed for sampled structural checks.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Run super-additivity and core checks before allocating.
    #[arg(long)]
    verify: bool,
}

fn parse_dims(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected s,q,t, got {s:?}"));
    }
    let parse = |p: &str| -> Result<usize, String> {
        p.trim()
            .parse::<usize>()
            .map_err(|_| format!("bad dimension {p:?}"))
            .and_then(|v| {
                if v == 0 {
                    Err("dimensions must be at least 1".into())
                } else {
                    Ok(v)
                }
            })
    };
    Ok((parse(parts[0])?, parse(parts[1])?, parse(parts[2])?))
}

fn concepts_from(args: &[ConceptArg]) -> Vec<Concept> {
    if args.contains(&ConceptArg::All) {
        return vec![Concept::Shapley, Concept::LeastCore, Concept::Nucleolus];
    }
    let mut out = Vec::new();
    for a in args {
        let c = match a {
            ConceptArg::Shapley => Concept::Shapley,
            ConceptArg::Leastcore => Concept::LeastCore,
            ConceptArg::Nucleolus => Concept::Nucleolus,
            ConceptArg::All => unreachable!(),
        };
        if !out.contains(&c) {
            out.push(c);
        }
    }
    out
}

fn main() {
    let args = Args::parse();
    let config = RunConfig {
        input: args.input,
        dims: args.dims,
        revenue: args.revenue,
        mode: match args.mode {
            ModeArg::Direct => ModeChoice::Direct,
            ModeArg::Secondary => ModeChoice::Secondary,
            ModeArg::Both => ModeChoice::Both,
        },
        concepts: concepts_from(&args.concepts),
        output: args.output,
        format: match args.format {
            FormatArg::Json => OutputFormat::Json,
            FormatArg::Csv => OutputFormat::Csv,
        },
        singleton_universe: match args.singleton_universe {
            UniverseArg::PerStage => SingletonUniverse::MatrixPlayers,
            UniverseArg::Full => SingletonUniverse::FullSet,
        },
        seed: args.seed,
        verify: args.verify,
    };
    if let Err(e) = run(&config) {
        eprintln!("error: {e}");
        std::process::exit(CliError::exit_code(&e));
    }
}
