//! Command-line front end for the counterfactual temporal logic engines:
//! verdicts over explicit finite universes and bounded trace universes,
//! actual-cause extraction with the counterfactual encoding check, HyperQPTL
//! emission, and the randomized property suites.
//!
//! Exit status: 0 when the formula holds (or the encodings agree, or every
//! suite passes), 1 when it fails, 2 on usage, input, or cap errors.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use cftl::causality::{check_cause_encoding, counterfactual_universe, halpern_causes, Cause, Sem};
use cftl::cf::{eval_top, CfVerdict};
use cftl::context::{parse_cfu, EvaluationContext};
use cftl::formula::{parse_formula, parse_plain, CfFormula, CfOp, Formula};
use cftl::gen::{
    run_cause_encoding_suite, run_collapse_suite, run_duality_suite, run_fo_so_suite, SuiteOutcome,
};
use cftl::hyper::{emit_sat_with, emit_trace_check_with, EmitOptions, HyperFormula, SimilaritySpec};
use cftl::trace::LassoTrace;
use cftl::universe::{build_context, UniverseSpec};
use cftl::{CftlError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "cftl",
    version,
    about = "Counterfactual temporal conditionals over finite and bounded trace universes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate a formula over an explicit-universe file.
    Finite(FiniteArgs),
    /// Build a bounded trace universe around a reference lasso and evaluate.
    Eval(EvalArgs),
    /// Compute actual causes in a structural model and check the
    /// counterfactual encoding against them.
    Cause(CauseArgs),
    /// Emit a satisfiability or trace-check HyperQPTL formula.
    Emit(EmitArgs),
    /// Run the randomized property suites.
    Oracle(OracleArgs),
}

/// Report format for verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// Human-oriented lines: RESULT, witnesses, bounds.
    Plain,
    /// One JSON object per line.
    JsonLines,
}

#[derive(Debug, Args)]
struct FiniteArgs {
    /// Explicit-universe file (sections `worlds:`, `universe:`, `ref:`,
    /// `prop NAME:`, `order:`).
    #[arg(long, value_name = "FILE")]
    file: PathBuf,
    /// Top-level formula: Boolean combination of plain QPTL parts and
    /// counterfactual conditionals.
    #[arg(long, value_name = "FORMULA")]
    formula: String,
    /// Reference world (defaults to the file's `ref:` section).
    #[arg(long = "ref", value_name = "WORLD")]
    reference: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Plain)]
    format: Format,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Universe formula: a file path or inline quantifier-free formula text.
    #[arg(long, value_name = "FILE|FORMULA")]
    universe_formula: String,
    /// Reference lasso trace, e.g. "{b,u}{m,d}|{b,u}{m,d}" (prefix `|` loop;
    /// a letter lists the propositions true at that position).
    #[arg(long, value_name = "TRACE")]
    ref_trace: String,
    /// Comma-separated mutable propositions: edits range over these, and the
    /// similarity order compares traces by inclusion of their differences
    /// from the reference on exactly these propositions.
    #[arg(long, value_name = "PROPS", value_delimiter = ',', required = true)]
    mutable: Vec<String>,
    /// Edit window: only positions before this bound may differ from the
    /// reference on the mutable propositions.
    #[arg(long, value_name = "N")]
    window: usize,
    /// Largest lasso prefix length enumerated.
    #[arg(long, value_name = "N")]
    max_prefix: usize,
    /// Comma-separated loop lengths enumerated.
    #[arg(long, value_name = "N,..", value_delimiter = ',', required = true)]
    loops: Vec<usize>,
    /// Top-level formula to evaluate at the reference trace.
    #[arg(long, value_name = "FORMULA")]
    formula: String,
    #[arg(long, value_enum, default_value_t = Format::Plain)]
    format: Format,
}

#[derive(Debug, Args)]
struct CauseArgs {
    /// Structural-model file (`var X := EQ` lines and a `context` line).
    #[arg(long, value_name = "FILE")]
    sem: PathBuf,
    /// Propositional effect over the model's endogenous variables.
    #[arg(long, value_name = "FORMULA")]
    effect: String,
    #[arg(long, value_enum, default_value_t = Format::Plain)]
    format: Format,
}

#[derive(Debug, Args)]
struct EmitArgs {
    /// Structural-model file: emit the cause encoding of --effect over the
    /// model's intervention universe.
    #[arg(
        long,
        value_name = "FILE",
        conflicts_with_all = ["universe_formula", "formula", "similarity", "similarity_formula", "ref_trace"]
    )]
    sem: Option<PathBuf>,
    /// Effect formula for --sem mode.
    #[arg(long, value_name = "FORMULA", requires = "sem")]
    effect: Option<String>,
    /// Universe formula: a file path or inline quantifier-free formula text.
    #[arg(long, value_name = "FILE|FORMULA", requires = "formula")]
    universe_formula: Option<String>,
    /// Top-level counterfactual formula to encode.
    #[arg(long, value_name = "FORMULA", requires = "universe_formula")]
    formula: Option<String>,
    /// Comma-separated propositions for the subset similarity relation.
    #[arg(long, value_name = "PROPS", value_delimiter = ',', conflicts_with = "similarity_formula")]
    similarity: Vec<String>,
    /// Explicit quantifier-free similarity formula over the trace suffixes
    /// `_p1` (reference), `_p2` (closer), `_p3` (farther); file path or
    /// inline text.
    #[arg(long, value_name = "FILE|FORMULA")]
    similarity_formula: Option<String>,
    /// Pin the reference to this lasso and emit the trace check instead of
    /// the satisfiability query.
    #[arg(long, value_name = "TRACE")]
    ref_trace: Option<String>,
    /// In --sem mode: pin the model's actual world and emit the trace check.
    #[arg(long, requires = "sem")]
    trace_check: bool,
    /// Name of the reference trace variable.
    #[arg(long, value_name = "NAME", default_value = "p")]
    reference: String,
    /// Interleave quantifier blocks across conditionals to reduce
    /// alternations.
    #[arg(long)]
    flatten: bool,
    /// Write the emission to this file instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    All,
    /// would/might and uwould/emight duality on random finite contexts.
    Duality,
    /// would = uwould and might = emight on total chains.
    Collapse,
    /// Closed-form minimality formulas against subset enumeration.
    FoSo,
    /// Brute-force actual causes against the counterfactual encoding.
    Cause,
}

#[derive(Debug, Args)]
struct OracleArgs {
    /// Seed shared by all suites.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Randomized contexts for the duality and collapse suites.
    #[arg(long, default_value_t = 1000)]
    contexts: usize,
    /// Random preorders for the minimality-formula comparison.
    #[arg(long, default_value_t = 200)]
    preorders: usize,
    /// Random structural models for the cause-encoding suite.
    #[arg(long, default_value_t = 200)]
    models: usize,
    #[arg(long, value_enum, default_value_t = Suite::All)]
    suite: Suite,
    #[arg(long, value_enum, default_value_t = Format::Plain)]
    format: Format,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Finite(args) => cmd_finite(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Cause(args) => cmd_cause(args),
        Command::Emit(args) => cmd_emit(args),
        Command::Oracle(args) => cmd_oracle(args),
    }
}

// ---------------------------------------------------------------------------
// Verdict reporting
// ---------------------------------------------------------------------------

/// Shape bounds echoed back by `eval` so a report pins down what was
/// enumerated.
struct BoundInfo {
    window: usize,
    max_prefix: usize,
    loops: Vec<usize>,
    worlds: usize,
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// Witness names sorted by world id; duplicates from conjunction collapse.
fn ordered_witnesses(ctx: &EvaluationContext, verdict: &CfVerdict) -> Vec<String> {
    let mut ids: Vec<usize> = verdict
        .witnesses
        .iter()
        .filter_map(|name| ctx.world_index(name).ok())
        .collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter().map(|i| ctx.world(i).name.clone()).collect()
}

fn report_verdict(
    format: Format,
    formula: &str,
    verdict: &CfVerdict,
    witnesses: &[String],
    bounds: Option<&BoundInfo>,
) {
    match format {
        Format::Plain => {
            println!(
                "RESULT {} (bounded={})",
                if verdict.value { "holds" } else { "fails" },
                yes_no(verdict.bounded)
            );
            if !witnesses.is_empty() {
                println!("witnesses: {}", witnesses.join(" "));
            }
            if let Some(b) = bounds {
                let loops: Vec<String> = b.loops.iter().map(ToString::to_string).collect();
                println!(
                    "bounds: window={} max_prefix={} loops={} worlds={}",
                    b.window,
                    b.max_prefix,
                    loops.join(","),
                    b.worlds
                );
            }
        }
        Format::JsonLines => {
            let bounds = match bounds {
                Some(b) => json!({
                    "window": b.window,
                    "max_prefix": b.max_prefix,
                    "loops": b.loops,
                    "worlds": b.worlds,
                }),
                None => serde_json::Value::Null,
            };
            println!(
                "{}",
                json!({
                    "formula": formula,
                    "result": if verdict.value { "holds" } else { "fails" },
                    "bounded": verdict.bounded,
                    "bounds": bounds,
                    "witnesses": witnesses,
                })
            );
        }
    }
}

fn exit_for(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

/// Reads an argument that names either a file containing a formula or the
/// formula text itself.
fn formula_or_file(value: &str) -> Result<Formula> {
    if Path::new(value).is_file() {
        parse_plain(&fs::read_to_string(value)?)
    } else {
        parse_plain(value)
    }
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_finite(args: FiniteArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.file)?;
    let ctx = parse_cfu(&text, args.reference.as_deref())?;
    let xi = parse_formula(&args.formula)?;
    let reference = ctx.world(ctx.reference()).name.clone();
    let verdict = eval_top(&ctx, &xi, &reference)?;
    let witnesses = ordered_witnesses(&ctx, &verdict);
    report_verdict(args.format, &args.formula, &verdict, &witnesses, None);
    Ok(exit_for(verdict.value))
}

fn cmd_eval(args: EvalArgs) -> Result<ExitCode> {
    let universe = formula_or_file(&args.universe_formula)?;
    let reference = LassoTrace::parse(&args.ref_trace)?;
    let mutable: BTreeSet<String> = args.mutable.iter().cloned().collect();
    let spec = UniverseSpec::new(
        universe,
        reference,
        mutable,
        args.window,
        args.max_prefix,
        args.loops.iter().copied(),
    )?;
    let ctx = build_context(&spec)?;
    let xi = parse_formula(&args.formula)?;
    let verdict = eval_top(&ctx, &xi, &spec.reference().to_string())?;
    let witnesses = ordered_witnesses(&ctx, &verdict);
    let bounds = BoundInfo {
        window: args.window,
        max_prefix: args.max_prefix,
        loops: args.loops.clone(),
        worlds: ctx.len(),
    };
    report_verdict(args.format, &args.formula, &verdict, &witnesses, Some(&bounds));
    Ok(exit_for(verdict.value))
}

fn cmd_cause(args: CauseArgs) -> Result<ExitCode> {
    let model = Sem::parse(&fs::read_to_string(&args.sem)?)?;
    let effect = parse_plain(&args.effect)?;
    let report = check_cause_encoding(&model, &effect)?;
    let causes: Vec<String> = report.causes.iter().map(ToString::to_string).collect();
    match args.format {
        Format::Plain => {
            if causes.is_empty() {
                println!("causes: (none)");
            } else {
                println!("causes: {}", causes.join("; "));
            }
            println!("phi_X: {}", report.negated_causes);
            println!("effect_holds: {}", report.effect_holds);
            println!("blake_form_ok: {}", report.blake_form_ok);
            println!("reference_conjuncts_hold: {}", report.reference_conjuncts_hold);
            println!("closest_worlds_match: {}", report.closest_worlds_match);
            println!("might_minimal_verdict: {}", report.might_minimal_verdict);
            println!("encoding_holds: {}", report.encoding_holds);
            println!("vacuous_effect: {}", report.vacuous_effect);
            println!("RESULT {}", if report.agree { "agree" } else { "disagree" });
        }
        Format::JsonLines => {
            println!(
                "{}",
                json!({
                    "effect": args.effect,
                    "causes": causes,
                    "phi_x": report.negated_causes.to_string(),
                    "effect_holds": report.effect_holds,
                    "blake_form_ok": report.blake_form_ok,
                    "reference_conjuncts_hold": report.reference_conjuncts_hold,
                    "closest_worlds_match": report.closest_worlds_match,
                    "might_minimal_verdict": report.might_minimal_verdict,
                    "encoding_holds": report.encoding_holds,
                    "vacuous_effect": report.vacuous_effect,
                    "agree": report.agree,
                })
            );
        }
    }
    Ok(exit_for(report.agree))
}

fn cmd_emit(args: EmitArgs) -> Result<ExitCode> {
    let opts = EmitOptions { reference: args.reference.clone(), flatten: args.flatten };
    let emission = match (&args.sem, &args.universe_formula) {
        (Some(sem_path), None) => emit_for_model(&args, sem_path, &opts)?,
        (None, Some(universe)) => emit_direct(&args, universe, &opts)?,
        _ => {
            return Err(CftlError::Input(
                "exactly one of --sem and --universe-formula is required".into(),
            ))
        }
    };
    let mut text = emission.to_text();
    text.push('\n');
    match &args.out {
        Some(path) => fs::write(path, &text)?,
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

/// `--sem` mode: the cause encoding `¬φ_X ∧ φ ∧ (φ_X mightmin ¬φ)` over the
/// model's intervention universe, with subset similarity on the
/// intervention flags.
fn emit_for_model(args: &EmitArgs, sem_path: &Path, opts: &EmitOptions) -> Result<HyperFormula> {
    let effect_text = args
        .effect
        .as_deref()
        .ok_or_else(|| CftlError::Input("--sem mode requires --effect".into()))?;
    let model = Sem::parse(&fs::read_to_string(sem_path)?)?;
    let effect = parse_plain(effect_text)?;
    let causes = halpern_causes(&model, &effect)?;
    let phi_x = Formula::big_or(causes.iter().map(Cause::negation));
    let universe = counterfactual_universe(&model)?;
    let sim = SimilaritySpec::subset(universe.interventions.iter().cloned());
    let xi = CfFormula::cf_and(
        CfFormula::Plain(Formula::and(Formula::not(phi_x.clone()), effect.clone())),
        CfFormula::cf(CfOp::MightMin, phi_x, Formula::not(effect)),
    );
    if args.trace_check {
        emit_trace_check_with(&universe.reference, &xi, &sim, &universe.formula, opts)
    } else {
        emit_sat_with(&xi, &sim, &universe.formula, opts)
    }
}

/// `--universe-formula` mode: encode the given formula directly; with
/// `--ref-trace` the reference is pinned to that lasso (propositions not
/// listed in the trace literal are false everywhere).
fn emit_direct(args: &EmitArgs, universe_arg: &str, opts: &EmitOptions) -> Result<HyperFormula> {
    let formula_text = args
        .formula
        .as_deref()
        .ok_or_else(|| CftlError::Input("--universe-formula mode requires --formula".into()))?;
    let universe = formula_or_file(universe_arg)?;
    let xi = parse_formula(formula_text)?;
    let sim = match &args.similarity_formula {
        Some(sf) => SimilaritySpec::explicit(formula_or_file(sf)?)?,
        None if !args.similarity.is_empty() => {
            SimilaritySpec::subset(args.similarity.iter().cloned())
        }
        None => {
            return Err(CftlError::Input(
                "one of --similarity and --similarity-formula is required".into(),
            ))
        }
    };
    match &args.ref_trace {
        Some(rt) => {
            let t = LassoTrace::parse(rt)?;
            let mut alphabet = t.alphabet().clone();
            alphabet.extend(universe.free_atoms());
            alphabet.extend(sim.mentioned_atoms());
            alphabet.extend(xi.free_atoms());
            let t = t.extend_alphabet(&alphabet)?;
            emit_trace_check_with(&t, &xi, &sim, &universe, opts)
        }
        None => emit_sat_with(&xi, &sim, &universe, opts),
    }
}

fn cmd_oracle(args: OracleArgs) -> Result<ExitCode> {
    let wants = |s: Suite| args.suite == Suite::All || args.suite == s;
    let mut outcomes: Vec<SuiteOutcome> = Vec::new();
    if wants(Suite::Duality) {
        outcomes.push(run_duality_suite(args.seed, args.contexts));
    }
    if wants(Suite::Collapse) {
        outcomes.push(run_collapse_suite(args.seed, args.contexts));
    }
    if wants(Suite::FoSo) {
        outcomes.push(run_fo_so_suite(args.seed, args.preorders));
    }
    if wants(Suite::Cause) {
        outcomes.push(run_cause_encoding_suite(args.seed, args.models));
    }
    let all_passed = outcomes.iter().all(SuiteOutcome::passed);
    for outcome in &outcomes {
        match args.format {
            Format::Plain => {
                println!(
                    "{}: {} cases, {} failures",
                    outcome.label, outcome.cases, outcome.failures
                );
                if let Some(first) = &outcome.first_failure {
                    println!("first failure: {first}");
                }
            }
            Format::JsonLines => {
                println!(
                    "{}",
                    json!({
                        "suite": outcome.label,
                        "cases": outcome.cases,
                        "failures": outcome.failures,
                        "first_failure": outcome.first_failure,
                    })
                );
            }
        }
    }
    if args.format == Format::Plain {
        println!("RESULT {}", if all_passed { "pass" } else { "fail" });
    }
    Ok(exit_for(all_passed))
}
