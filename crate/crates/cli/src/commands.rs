use std::fmt::Write as _;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use compid_core::criteria::{classify, cycle_path_monomials, MONOMIAL_CAP};
use compid_core::expr::Expr;
use compid_core::family::{enumerate_family, write_database, DatabaseFormat, Family, FamilySpec, Placement};
use compid_core::io::{coefficient_map_of, io_equations, EquationDisplay};
use compid_core::model::{CompModel, LeakConvention};
use compid_core::rank::{
    degree_bound, report_from_engine, scaling_symmetries, Confidence, RankEngine, RankError, RankOptions,
};
use compid_core::reparam::{scaling_reparam, siso_canonical_reparam, Reparametrization, ScalingOutcome, Transform};
use compid_core::search::{minimal_output_additions, minimal_parameter_fixings, AdjustmentResult, SearchOptions};
use thiserror::Error;

use crate::modelfile::parse_model_file;
use crate::report::*;

#[derive(Debug, Parser)]
#[command(name = "compid", version, about = "Structural identifiability of linear compartmental models")]
pub struct Cli {
    /// Seed for the random evaluation points.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Number of independent random points.
    #[arg(long, global = true, default_value_t = 3)]
    pub trials: usize,
    /// Print JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Jacobian rank, per-parameter verdicts and scaling symmetries.
    Analyze { model: PathBuf },
    /// Combinatorial rules that apply to the model graph.
    Classify { model: PathBuf },
    /// Input-output equations, one per output.
    IoEq { model: PathBuf },
    /// Identifiability of functions of the parameters.
    Functions(FunctionsArgs),
    /// Identifiable reparametrization.
    Reparam {
        model: PathBuf,
        #[arg(long, value_enum)]
        mode: ReparamMode,
    },
    /// Minimal added outputs or fixed parameters.
    Suggest {
        model: PathBuf,
        #[arg(long, value_enum)]
        what: SuggestWhat,
        #[arg(long, default_value_t = compid_core::search::DEFAULT_BUDGET)]
        max_size: usize,
        /// Also try new input placements.
        #[arg(long)]
        with_inputs: bool,
    },
    /// Classify every model of a family into a database file.
    Enumerate(EnumerateArgs),
}

#[derive(Debug, Args)]
pub struct FunctionsArgs {
    pub model: PathBuf,
    /// Expression such as "a02+a03" or "a12*a21".
    #[arg(long)]
    pub expr: Vec<String>,
    /// File with one expression per line; '#' starts a comment.
    #[arg(long)]
    pub file: Option<PathBuf>,
    /// Also test every cycle and input-output path monomial.
    #[arg(long)]
    pub auto: bool,
    #[arg(long, default_value_t = MONOMIAL_CAP)]
    pub cap: usize,
}

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    #[arg(long)]
    pub family: Family,
    /// Compartment range, "a..b" or a single number.
    #[arg(long, value_parser = parse_range)]
    pub n: (usize, usize),
    /// Output path; ".csv" writes CSV, anything else JSON lines.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = PlacementArg::All)]
    pub placement: PlacementArg,
    /// Keep models that differ only by a symmetry of the family.
    #[arg(long)]
    pub no_dedup: bool,
    #[arg(long, value_enum, default_value_t = ConventionArg::Separate)]
    pub convention: ConventionArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReparamMode {
    Siso,
    Scaling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuggestWhat {
    Outputs,
    Fix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlacementArg {
    All,
    Siso,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    Separate,
    Total,
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("bad bound '{t}': {e}"));
    match s.split_once("..") {
        Some((a, b)) => Ok((num(a)?, num(b.trim_start_matches('='))?)),
        None => num(s).map(|n| (n, n)),
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or invalid input; exit code 1.
    #[error("{0}")]
    Input(String),
    /// An analysis precondition failed; exit code 2.
    #[error("{0}")]
    Precondition(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Precondition(_) => 2,
        }
    }
}

fn input<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Input(e.to_string())
}

fn rank_error(e: RankError) -> CliError {
    match e {
        RankError::DenominatorVanishes => CliError::Precondition(e.to_string()),
        _ => CliError::Input(e.to_string()),
    }
}

/// Runs one command and returns what it prints on standard output.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let opts = RankOptions {
        trials: cli.trials.max(1),
        seed: cli.seed,
    };
    let json = cli.json;
    match &cli.command {
        Command::Analyze { model } => analyze(&load(model)?, opts, json),
        Command::Classify { model } => classify_cmd(&load(model)?, opts, json),
        Command::IoEq { model } => io_eq(&load(model)?, opts, json),
        Command::Functions(args) => functions(args, opts, json),
        Command::Reparam { model, mode } => reparam(&load(model)?, *mode, opts, json),
        Command::Suggest {
            model,
            what,
            max_size,
            with_inputs,
        } => {
            let m = load(model)?;
            let s = SearchOptions {
                budget: *max_size,
                include_inputs: *with_inputs,
                rank: opts,
            };
            let r = match what {
                SuggestWhat::Outputs => minimal_output_additions(&m, s),
                SuggestWhat::Fix => minimal_parameter_fixings(&m, s),
            };
            Ok(suggest(&m, &r, opts, json))
        }
        Command::Enumerate(args) => enumerate(args, opts, json),
    }
}

fn load(path: &Path) -> Result<CompModel, CliError> {
    parse_model_file(path).map_err(input)
}

fn static_confidence(m: &CompModel, opts: RankOptions) -> Confidence {
    let map = coefficient_map_of(&io_equations(m), m.num_params());
    Confidence::new(degree_bound(&map), opts.trials)
}

fn footer(out: &mut String, h: &Header) {
    let _ = writeln!(out, "{}", h.confidence);
    let _ = writeln!(out, "seed {}, trials {}, {} {}", h.seed, h.trials, h.tool, h.version);
}

fn analyze(m: &CompModel, opts: RankOptions, json: bool) -> Result<String, CliError> {
    let engine = RankEngine::for_model(m, opts);
    let report = AnalyzeReport {
        header: Header::new(opts, &engine.confidence()),
        identifiability: report_from_engine(m, &engine),
        scaling: scaling_symmetries(m, &engine),
    };
    if json {
        return Ok(to_json(&report));
    }
    let r = &report.identifiability;
    let mut out = String::new();
    let _ = writeln!(out, "model: {} compartments, {} parameters", m.n(), m.num_params());
    let _ = writeln!(out, "{}; rank {}/{}", r.model_verdict, r.rank, r.num_params);
    let _ = writeln!(out, "kernel dimension: {}", r.kernel_dim);
    let width = r.per_param.iter().map(|p| p.param.len()).max().unwrap_or(0);
    for p in &r.per_param {
        let _ = writeln!(out, "  {:width$}  {}", p.param, p.verdict);
    }
    let s = &report.scaling;
    let _ = writeln!(
        out,
        "scaling symmetries: dimension {} ({})",
        s.dim,
        if s.complete {
            "accounts for the whole kernel"
        } else {
            "does not account for the whole kernel"
        }
    );
    if s.dim > 0 {
        let _ = writeln!(out, "scaling invariants: {}", s.invariants.join(", "));
    }
    for w in &r.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    footer(&mut out, &report.header);
    Ok(out)
}

fn classify_cmd(m: &CompModel, opts: RankOptions, json: bool) -> Result<String, CliError> {
    let hits = classify(m).map_err(|e| CliError::Precondition(e.to_string()))?;
    let report = ClassifyReport {
        header: Header::new(opts, &static_confidence(m, opts)),
        hits,
    };
    if json {
        return Ok(to_json(&report));
    }
    let mut out = String::new();
    if report.hits.is_empty() {
        let _ = writeln!(out, "no rule applies");
    }
    for h in &report.hits {
        let _ = write!(out, "{}: {}", h.rule_id, h.verdict);
        if !h.affected_params.is_empty() {
            let _ = write!(out, " [{}]", h.affected_params.join(", "));
        }
        let _ = writeln!(out, " ({})", h.citation);
    }
    footer(&mut out, &report.header);
    Ok(out)
}

fn io_eq(m: &CompModel, opts: RankOptions, json: bool) -> Result<String, CliError> {
    let eqs = io_equations(m);
    let map = coefficient_map_of(&eqs, m.num_params());
    let report = IoReport {
        header: Header::new(opts, &Confidence::new(degree_bound(&map), opts.trials)),
        equations: eqs
            .iter()
            .map(|eq| IoEquationEntry {
                output: eq.output + 1,
                support: eq.support.iter().map(|c| c + 1).collect(),
                equation: EquationDisplay {
                    eq,
                    names: m.param_names(),
                }
                .to_string(),
            })
            .collect(),
    };
    if json {
        return Ok(to_json(&report));
    }
    let mut out = String::new();
    for e in &report.equations {
        let _ = writeln!(out, "{}", e.equation);
    }
    Ok(out)
}

fn functions(args: &FunctionsArgs, opts: RankOptions, json: bool) -> Result<String, CliError> {
    let m = load(&args.model)?;
    let mut sources = args.expr.clone();
    if let Some(path) = &args.file {
        let text = fs::read_to_string(path).map_err(|e| input(format!("ReadError: {}: {e}", path.display())))?;
        sources.extend(
            text.lines()
                .map(|l| l.split('#').next().unwrap_or("").trim())
                .filter(|l| !l.is_empty())
                .map(str::to_string),
        );
    }
    if sources.is_empty() && !args.auto {
        return Err(input("NoExpressions: give --expr, --file or --auto"));
    }
    let engine = RankEngine::for_model(&m, opts);
    let mut functions = Vec::with_capacity(sources.len());
    for src in sources {
        let f = Expr::parse(&src, m.param_names()).map_err(input)?;
        let verdict = engine.function_verdict(&f).map_err(rank_error)?;
        functions.push(FunctionVerdict { expr: src, verdict });
    }
    let (monomials, partial) = if args.auto {
        let r = cycle_path_monomials(&m, &engine, args.cap).map_err(rank_error)?;
        let list = r
            .candidates
            .iter()
            .map(|c| MonomialVerdict {
                kind: c.kind,
                support: c.support.iter().map(|x| x + 1).collect(),
                monomial: c.monomial.display_with(m.param_names()).to_string(),
                verdict: c.verdict,
            })
            .collect();
        (list, r.partial)
    } else {
        (Vec::new(), false)
    };
    let report = FunctionsReport {
        header: Header::new(opts, &engine.confidence()),
        functions,
        monomials,
        partial,
    };
    if json {
        return Ok(to_json(&report));
    }
    let mut out = String::new();
    for f in &report.functions {
        let _ = writeln!(out, "{}: {}", f.expr, f.verdict);
    }
    for c in &report.monomials {
        let kind = match c.kind {
            compid_core::criteria::MonomialKind::Cycle => "cycle",
            compid_core::criteria::MonomialKind::IoPath => "path",
        };
        let _ = writeln!(out, "{kind} {}: {}", c.monomial, c.verdict);
    }
    if report.partial {
        let _ = writeln!(out, "warning: monomial list truncated at {}", args.cap);
    }
    for w in engine.warnings() {
        let _ = writeln!(out, "warning: {w}");
    }
    footer(&mut out, &report.header);
    Ok(out)
}

/// `c1*v1 + c2*v2 + ...` from rendered coefficients, skipping zeros.
fn linear_combination(terms: impl IntoIterator<Item = (String, String)>) -> String {
    let mut out = String::new();
    for (c, v) in terms {
        if c == "0" {
            continue;
        }
        let (neg, mag) = match c.strip_prefix('-') {
            Some(rest) if !rest.contains(' ') => (true, rest.to_string()),
            _ => (false, c.clone()),
        };
        let body = match mag.as_str() {
            "1" => v,
            _ if mag.contains(' ') => format!("({mag})*{v}"),
            _ => format!("{mag}*{v}"),
        };
        match (out.is_empty(), neg) {
            (true, true) => out.push_str(&format!("-{body}")),
            (true, false) => out.push_str(&body),
            (false, true) => out.push_str(&format!(" - {body}")),
            (false, false) => out.push_str(&format!(" + {body}")),
        }
    }
    if out.is_empty() {
        out.push('0');
    }
    out
}

fn describe(m: &CompModel, r: &Reparametrization) -> ReparamStatus {
    let sys = &r.new_system;
    let names = m.param_names();
    let transform = match &r.transform {
        Transform::Linear(t) => (0..t.rows())
            .map(|i| {
                let row = (0..t.cols())
                    .map(|j| (t[(i, j)].display_with(names).to_string(), format!("x{}", j + 1)));
                format!("{} = {}", sys.state_names[i], linear_combination(row))
            })
            .collect(),
        Transform::Scaling(s) => s
            .iter()
            .zip(&sys.state_names)
            .map(|((c, f), name)| {
                let term = (f.display_with(names).to_string(), format!("x{}", c + 1));
                format!("{name} = {}", linear_combination([term]))
            })
            .collect(),
    };
    let new_parameters = sys
        .param_names
        .iter()
        .zip(&sys.definitions)
        .map(|(n, d)| NewParameter {
            name: n.clone(),
            definition: d.display_with(names).to_string(),
        })
        .collect();
    let equations = sys
        .state_matrix
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let states = row.iter().zip(&sys.state_names).map(|(e, v)| {
                (e.display_with(&sys.param_names).to_string(), v.clone())
            });
            let inputs = sys.input_columns.iter().map(|(j, col)| {
                (col[i].display_with(&sys.param_names).to_string(), format!("u{}", j + 1))
            });
            format!("{}' = {}", sys.state_names[i], linear_combination(states.chain(inputs)))
        })
        .collect();
    let outputs = sys
        .outputs
        .iter()
        .map(|(o, k)| format!("y{} = {}", o + 1, sys.state_names[*k]))
        .collect();
    ReparamStatus::Applied {
        kind: r.kind,
        transform,
        new_parameters,
        equations,
        outputs,
        verification: r.verification.clone(),
    }
}

fn reparam(m: &CompModel, mode: ReparamMode, opts: RankOptions, json: bool) -> Result<String, CliError> {
    let (result, confidence) = match mode {
        ReparamMode::Siso => {
            let r = siso_canonical_reparam(m, opts.seed).map_err(|e| CliError::Precondition(e.to_string()))?;
            (describe(m, &r), static_confidence(m, opts))
        }
        ReparamMode::Scaling => {
            let engine = RankEngine::for_model(m, opts);
            let status = match scaling_reparam(m, &engine) {
                ScalingOutcome::NotNeeded => ReparamStatus::NotNeeded,
                ScalingOutcome::NotApplicable { dim, kernel_dim, gap } => {
                    ReparamStatus::NotApplicable { dim, kernel_dim, gap }
                }
                ScalingOutcome::Applied(r, _) => describe(m, &r),
            };
            (status, engine.confidence())
        }
    };
    let report = ReparamReport {
        header: Header::new(opts, &confidence),
        result,
    };
    if json {
        return Ok(to_json(&report));
    }
    let mut out = String::new();
    match &report.result {
        ReparamStatus::NotNeeded => {
            let _ = writeln!(out, "no reparametrization needed: the model is locally identifiable");
        }
        ReparamStatus::NotApplicable { dim, kernel_dim, gap } => {
            let _ = writeln!(
                out,
                "scaling reparametrization not applicable: symmetry dimension {dim} < kernel dimension {kernel_dim} (gap {gap})"
            );
        }
        ReparamStatus::Applied {
            transform,
            new_parameters,
            equations,
            outputs,
            verification,
            ..
        } => {
            for l in transform {
                let _ = writeln!(out, "{l}");
            }
            let _ = writeln!(out, "new parameters:");
            for p in new_parameters {
                let _ = writeln!(out, "  {} = {}", p.name, p.definition);
            }
            let _ = writeln!(out, "new system:");
            for l in equations.iter().chain(outputs) {
                let _ = writeln!(out, "  {l}");
            }
            match verification {
                compid_core::reparam::Verification::Passed => {
                    let _ = writeln!(out, "verification: passed");
                }
                compid_core::reparam::Verification::Failed { residual } => {
                    let _ = writeln!(out, "verification: failed ({residual})");
                }
            }
        }
    }
    footer(&mut out, &report.header);
    Ok(out)
}

fn suggest(m: &CompModel, r: &AdjustmentResult, opts: RankOptions, json: bool) -> String {
    let report = SuggestReport {
        header: Header::new(opts, &static_confidence(m, opts)),
        kind: r.kind,
        minimal_sets: r
            .minimal_sets
            .iter()
            .map(|s| s.iter().map(|a| a.label(m)).collect())
            .collect(),
        budget: r.budget,
        evaluations: r.evaluations,
    };
    if json {
        return to_json(&report);
    }
    let mut out = String::new();
    match r.min_size() {
        None => {
            let _ = writeln!(out, "no adjustment of size <= {} makes the model identifiable", r.budget);
        }
        Some(0) => {
            let _ = writeln!(out, "already locally identifiable; nothing to add");
        }
        Some(k) => {
            let _ = writeln!(out, "minimum size {k}; {} minimal set(s):", r.minimal_sets.len());
            for s in &report.minimal_sets {
                let _ = writeln!(out, "  {{{}}}", s.join(", "));
            }
        }
    }
    let _ = writeln!(out, "rank queries: {}", r.evaluations);
    footer(&mut out, &report.header);
    out
}

fn enumerate(args: &EnumerateArgs, opts: RankOptions, json: bool) -> Result<String, CliError> {
    let spec = FamilySpec {
        family: args.family,
        n_min: args.n.0,
        n_max: args.n.1,
        placement: match args.placement {
            PlacementArg::All => Placement::AllSubsets,
            PlacementArg::Siso => Placement::SingleInputOutput,
        },
        dedup: !args.no_dedup,
        convention: match args.convention {
            ConventionArg::Separate => LeakConvention::Separate,
            ConventionArg::Total => LeakConvention::Total,
        },
    };
    let db = enumerate_family(&spec, opts).map_err(|e| match e {
        compid_core::family::FamilyError::SpecTooLarge { .. } => CliError::Precondition(e.to_string()),
        _ => CliError::Input(e.to_string()),
    })?;
    let file = File::create(&args.out).map_err(|e| input(format!("WriteError: {}: {e}", args.out.display())))?;
    write_database(&db, DatabaseFormat::from_path(&args.out), file)
        .map_err(|e| input(format!("WriteError: {}: {e}", args.out.display())))?;
    let report = EnumerateReport {
        header: Header::with_confidence_line(
            opts,
            format!(
                "per model: confidence >= 1 - (D/p)^{} with D = max coefficient degree * number of parameters",
                opts.trials
            ),
        ),
        spec,
        database: args.out.display().to_string(),
        summary: db.summary,
    };
    if json {
        return Ok(to_json(&report));
    }
    let s = &report.summary;
    let mut out = String::new();
    let _ = writeln!(out, "wrote {} rows to {}", s.rows, report.database);
    let _ = writeln!(
        out,
        "identifiable {}, unidentifiable {}, with rule hits {}, agreements {}, disagreements {}",
        s.identifiable, s.unidentifiable, s.with_rule_hits, s.agreements, s.disagreements
    );
    footer(&mut out, &report.header);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("3..6"), Ok((3, 6)));
        assert_eq!(parse_range("4"), Ok((4, 4)));
        assert_eq!(parse_range("2..=5"), Ok((2, 5)));
        assert!(parse_range("a..b").is_err());
    }

    #[test]
    fn combinations_render() {
        let t = |c: &str, v: &str| (c.to_string(), v.to_string());
        assert_eq!(linear_combination([t("1", "x1"), t("0", "x2")]), "x1");
        assert_eq!(linear_combination([t("-a01", "x1"), t("a13", "x3")]), "-a01*x1 + a13*x3");
        assert_eq!(
            linear_combination([t("-a01*a13 - a03*a13", "x3")]),
            "(-a01*a13 - a03*a13)*x3"
        );
        assert_eq!(linear_combination([t("0", "x1")]), "0");
    }
}
